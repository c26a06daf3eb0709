//! α-divergence NMF: cost, multiplicative updates, the stopping rule, the
//! scale-and-offset input transform, and the layer-by-layer cascade.
//!
//! The updates are
//!
//! ```text
//! x_jt ← x_jt · ( Σ_i â_ij (y_it / [AX]_it)^α )^(1/α),   â = A with unit ℓ₁ columns
//! a_ij ← a_ij · ( Σ_t x̂_jt (y_it / [AX]_it)^α )^(1/α),   x̂ = X with unit ℓ₁ rows
//! ```
//!
//! After each `A` update the columns of `A` are rescaled to unit ℓ₁ sum and
//! the inverse scale is moved into the rows of `X`, which leaves `AX`
//! unchanged.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{NmfConfig, NmfState, NonNegMatrix};

/// Relative floor applied to `[AX]` before forming `y / [AX]`.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Bounds of the uniform initialization of `A` and `X`.
pub const INIT_RANGE: (f64, f64) = (0.1, 1.1);

/// One iteration's cost, as recorded in [`NmfState::history`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRecord {
    /// 1-based layer index.
    pub layer: usize,
    /// 1-based iteration index within the layer.
    pub iteration: usize,
    pub divergence: f64,
    /// `|D(k) - D(k-1)| / D(k)`; infinite for the first iteration of a layer.
    pub relative_change: f64,
}

/// `max(0, -λ₁ · min(y))`: the smallest offset that makes `λ₁ y + λ₂`
/// nonnegative.
pub fn auto_offset(y: ArrayView2<'_, f64>, lambda1: f64) -> f64 {
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    (-lambda1 * min).max(0.0)
}

/// Entrywise `λ₁ y + λ₂`, rejected unless `λ₁ · min(y) + λ₂ ≥ 0`.
pub fn affine_transform(
    y: ArrayView2<'_, f64>,
    lambda1: f64,
    lambda2: f64,
) -> Result<NonNegMatrix> {
    if !(lambda1 > 0.0 && lambda1.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda1 must be positive, got {lambda1}")));
    }
    if !(lambda2 >= 0.0 && lambda2.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "lambda2 must be nonnegative, got {lambda2}"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("input contains non-finite values".into()));
    }
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if lambda1 * min + lambda2 < 0.0 {
        return Err(Error::InfeasibleOffset {
            lambda1,
            lambda2,
            min,
        });
    }
    NonNegMatrix::new(y.mapv(|v| lambda1 * v + lambda2))
}

fn check_same_shape(y: &NonNegMatrix, yhat: &NonNegMatrix) -> Result<()> {
    if y.dim() != yhat.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", y.dim()),
            actual: format!("{:?}", yhat.dim()),
        });
    }
    Ok(())
}

/// One entry of the α-divergence, with the limits at `α ∈ {0, 1}` and the
/// `0 · ln 0 = 0` convention.
fn divergence_term(y: f64, z: f64, alpha: f64) -> f64 {
    if y == z {
        0.0
    } else if alpha == 1.0 {
        if y == 0.0 {
            z
        } else if z == 0.0 {
            f64::INFINITY
        } else {
            (y * (y / z).ln() - y + z).max(0.0)
        }
    } else if alpha == 0.0 {
        if z == 0.0 {
            y
        } else if y == 0.0 {
            f64::INFINITY
        } else {
            (z * (z / y).ln() - z + y).max(0.0)
        }
    } else if alpha == 0.5 {
        let d = y.sqrt() - z.sqrt();
        2.0 * d * d
    } else if alpha == 2.0 {
        if z == 0.0 {
            if y == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            let d = y - z;
            d * d / (2.0 * z)
        }
    } else {
        let cross = match (y == 0.0, z == 0.0) {
            (true, true) => 0.0,
            (true, false) if alpha > 0.0 => 0.0,
            (true, false) => f64::INFINITY,
            (false, true) if alpha < 1.0 => 0.0,
            (false, true) => f64::INFINITY,
            (false, false) => y.powf(alpha) * z.powf(1.0 - alpha),
        };
        if cross.is_infinite() {
            return f64::INFINITY;
        }
        ((cross - alpha * y + (alpha - 1.0) * z) / (alpha * (alpha - 1.0))).max(0.0)
    }
}

fn divergence_slices(y: &[f64], z: &[f64], alpha: f64) -> f64 {
    y.iter()
        .zip(z)
        .map(|(&y, &z)| divergence_term(y, z, alpha))
        .sum()
}

/// α-divergence `D(Y‖Ŷ)`. Infinite when `Ŷ` has a zero where `Y` does not
/// and the exponent makes that term unbounded.
pub fn alpha_divergence(y: &NonNegMatrix, yhat: &NonNegMatrix, alpha: f64) -> Result<f64> {
    check_same_shape(y, yhat)?;
    if !alpha.is_finite() {
        return Err(Error::InvalidConfig("alpha must be finite".into()));
    }
    let y = y.as_array().as_standard_layout();
    let z = yhat.as_array().as_standard_layout();
    Ok(divergence_slices(
        y.as_slice().expect("standard layout"),
        z.as_slice().expect("standard layout"),
        alpha,
    ))
}

/// `|D(k) - D(k-1)| / D(k) ≤ ε` on the two most recent records. A zero
/// current divergence counts as converged.
pub fn check_convergence(history: &[ConvergenceRecord], epsilon: f64) -> bool {
    let [.., prev, last] = history else {
        return false;
    };
    relative_change(prev.divergence, last.divergence) <= epsilon
}

fn relative_change(prev: f64, current: f64) -> f64 {
    if current == 0.0 {
        0.0
    } else {
        (current - prev).abs() / current
    }
}

/// `v^p` with exact fast paths for the exponents the defaults use.
#[derive(Debug, Clone, Copy)]
enum Power {
    Identity,
    Sqrt,
    Square,
    Recip,
    General(f64),
}

impl Power {
    fn new(p: f64) -> Self {
        if p == 1.0 {
            Power::Identity
        } else if p == 0.5 {
            Power::Sqrt
        } else if p == 2.0 {
            Power::Square
        } else if p == -1.0 {
            Power::Recip
        } else {
            Power::General(p)
        }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Power::Identity => v,
            Power::Sqrt => v.sqrt(),
            Power::Square => v * v,
            Power::Recip => 1.0 / v,
            Power::General(p) => v.powf(p),
        }
    }
}

/// Sum with eight independent accumulators in a fixed order.
fn lane_sum(v: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let chunks = v.chunks_exact(8);
    let tail: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Columns processed per block, sized to keep the scratch rows in L1.
const BLOCK: usize = 512;

/// Scratch state for repeated updates against one fixed `Y`.
struct Kernel<'a> {
    y: &'a [f64],
    /// `y^α`, so that each ratio costs one power of `[AX]` only.
    y_pow: Vec<f64>,
    rows: usize,
    cols: usize,
    rank: usize,
    alpha: f64,
    floor: f64,
    ratio_pow: Power,
    bracket_pow: Power,
    /// `(y / max([AX], floor))^α`, row-major I×T.
    ratio: Vec<f64>,
}

impl<'a> Kernel<'a> {
    fn new(y: &'a [f64], rows: usize, cols: usize, rank: usize, alpha: f64) -> Self {
        let ymax = y.iter().copied().fold(0.0_f64, f64::max);
        let ratio_pow = Power::new(alpha);
        Self {
            y,
            y_pow: y.iter().map(|&v| ratio_pow.apply(v)).collect(),
            rows,
            cols,
            rank,
            alpha,
            floor: (RATIO_FLOOR * ymax).max(f64::MIN_POSITIVE),
            ratio_pow,
            bracket_pow: Power::new(1.0 / alpha),
            ratio: vec![0.0; rows * cols],
        }
    }

    /// Fills `self.ratio` from the current factors and returns `D(Y‖AX)`.
    /// `a` is I×J row-major, `x` is J×T row-major.
    fn fill_ratio(&mut self, a: &[f64], x: &[f64]) -> f64 {
        let (t_len, j_len, floor) = (self.cols, self.rank, self.floor);
        let sqrt_floor = floor.sqrt();
        let mut total = 0.0;
        let mut z = [0.0; BLOCK];
        let mut terms = [0.0; BLOCK];
        for i in 0..self.rows {
            let arow = &a[i * j_len..(i + 1) * j_len];
            for start in (0..t_len).step_by(BLOCK) {
                let n = BLOCK.min(t_len - start);
                let (z, terms) = (&mut z[..n], &mut terms[..n]);
                z.fill(0.0);
                for (j, &aij) in arow.iter().enumerate() {
                    let xs = &x[j * t_len + start..j * t_len + start + n];
                    for (zv, xv) in z.iter_mut().zip(xs) {
                        *zv += aij * xv;
                    }
                }
                let at = i * t_len + start;
                let yrow = &self.y[at..at + n];
                let ypow = &self.y_pow[at..at + n];
                let rrow = &mut self.ratio[at..at + n];
                match self.ratio_pow {
                    Power::Sqrt => {
                        for (((r, d), &z), &yp) in rrow.iter_mut().zip(terms.iter_mut()).zip(z.iter()).zip(ypow) {
                            let sz = z.sqrt();
                            let diff = yp - sz;
                            *d = 2.0 * diff * diff;
                            *r = yp / sz.max(sqrt_floor);
                        }
                    }
                    p => {
                        for (((r, d), &z), &y) in rrow.iter_mut().zip(terms.iter_mut()).zip(z.iter()).zip(yrow) {
                            *d = divergence_term(y, z, self.alpha);
                            *r = p.apply(y / z.max(floor));
                        }
                    }
                }
                total += lane_sum(terms);
            }
        }
        total
    }

    /// Multiplicative `X` step from the ratio of the current factors.
    fn step_x(&mut self, a: &[f64], x: &mut [f64]) -> Result<()> {
        let (t_len, j_len) = (self.cols, self.rank);
        let mut ahat = a.to_vec();
        for j in 0..j_len {
            let s: f64 = (0..self.rows).map(|i| a[i * j_len + j]).sum();
            if !(s > 0.0) {
                return Err(Error::ZeroColumn(j));
            }
            for i in 0..self.rows {
                ahat[i * j_len + j] /= s;
            }
        }
        let bracket = self.bracket_pow;
        let mut acc = [0.0; BLOCK];
        for j in 0..j_len {
            for start in (0..t_len).step_by(BLOCK) {
                let n = BLOCK.min(t_len - start);
                let acc = &mut acc[..n];
                acc.fill(0.0);
                for i in 0..self.rows {
                    let w = ahat[i * j_len + j];
                    let rs = &self.ratio[i * t_len + start..i * t_len + start + n];
                    for (c, r) in acc.iter_mut().zip(rs) {
                        *c += w * r;
                    }
                }
                let xrow = &mut x[j * t_len + start..j * t_len + start + n];
                match bracket {
                    Power::Square => {
                        for (xv, &c) in xrow.iter_mut().zip(acc.iter()) {
                            *xv = if *xv == 0.0 { 0.0 } else { *xv * (c * c) };
                        }
                    }
                    p => {
                        for (xv, &c) in xrow.iter_mut().zip(acc.iter()) {
                            *xv = if *xv == 0.0 { 0.0 } else { *xv * p.apply(c) };
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Multiplicative `A` step from the ratio of the current factors,
    /// without the column rescaling.
    fn step_a_unscaled(&mut self, a: &mut [f64], x: &[f64]) -> Result<()> {
        let (t_len, j_len) = (self.cols, self.rank);
        let mut row_sums = vec![0.0; j_len];
        for (j, s) in row_sums.iter_mut().enumerate() {
            *s = lane_sum(&x[j * t_len..(j + 1) * t_len]);
            if !(*s > 0.0) {
                return Err(Error::InvalidMatrix(format!("row {j} of X is all zeros")));
            }
        }
        for i in 0..self.rows {
            let rrow = &self.ratio[i * t_len..(i + 1) * t_len];
            for j in 0..j_len {
                let aij = &mut a[i * j_len + j];
                if *aij == 0.0 {
                    continue;
                }
                let acc = lane_dot(&x[j * t_len..(j + 1) * t_len], rrow);
                *aij *= self.bracket_pow.apply(acc / row_sums[j]);
            }
        }
        Ok(())
    }

    fn step_a(&mut self, a: &mut [f64], x: &mut [f64]) -> Result<()> {
        self.step_a_unscaled(a, x)?;
        rescale_columns(a, x, self.rows, self.rank, self.cols)
    }
}

/// Scales each column of `A` to unit ℓ₁ sum and the matching row of `X` by
/// the inverse, so that `AX` is unchanged.
fn rescale_columns(a: &mut [f64], x: &mut [f64], rows: usize, rank: usize, cols: usize) -> Result<()> {
    for j in 0..rank {
        let s: f64 = (0..rows).map(|i| a[i * rank + j]).sum();
        if !(s > 0.0) {
            return Err(Error::ZeroColumn(j));
        }
        for i in 0..rows {
            a[i * rank + j] /= s;
        }
        for v in &mut x[j * cols..(j + 1) * cols] {
            *v *= s;
        }
    }
    Ok(())
}

fn check_chain(y: &NonNegMatrix, a: &NonNegMatrix, x: &NonNegMatrix) -> Result<()> {
    if a.rows() != y.rows() || x.cols() != y.cols() || a.cols() != x.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!(
                "A {}x?, X ?x{} with matching inner rank",
                y.rows(),
                y.cols()
            ),
            actual: format!("A {:?}, X {:?}", a.dim(), x.dim()),
        });
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !alpha.is_finite() || alpha == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "multiplicative updates need a finite nonzero alpha, got {alpha}"
        )));
    }
    Ok(())
}

fn owned_slice(m: &NonNegMatrix) -> Vec<f64> {
    m.as_array().iter().copied().collect()
}

fn to_matrix(rows: usize, cols: usize, data: Vec<f64>) -> NonNegMatrix {
    NonNegMatrix::from_trusted(Array2::from_shape_vec((rows, cols), data).expect("shape"))
}

/// One multiplicative `X` update.
pub fn update_x(
    y: &NonNegMatrix,
    a: &NonNegMatrix,
    x: &NonNegMatrix,
    alpha: f64,
) -> Result<NonNegMatrix> {
    check_chain(y, a, x)?;
    check_alpha(alpha)?;
    let ys = owned_slice(y);
    let av = owned_slice(a);
    let mut xv = owned_slice(x);
    let mut k = Kernel::new(&ys, y.rows(), y.cols(), a.cols(), alpha);
    k.fill_ratio(&av, &xv);
    k.step_x(&av, &mut xv)?;
    Ok(to_matrix(x.rows(), x.cols(), xv))
}

/// One multiplicative `A` update before column rescaling.
pub fn update_a_unscaled(
    y: &NonNegMatrix,
    a: &NonNegMatrix,
    x: &NonNegMatrix,
    alpha: f64,
) -> Result<NonNegMatrix> {
    check_chain(y, a, x)?;
    check_alpha(alpha)?;
    let ys = owned_slice(y);
    let mut av = owned_slice(a);
    let xv = owned_slice(x);
    let mut k = Kernel::new(&ys, y.rows(), y.cols(), a.cols(), alpha);
    k.fill_ratio(&av, &xv);
    k.step_a_unscaled(&mut av, &xv)?;
    Ok(to_matrix(a.rows(), a.cols(), av))
}

/// One multiplicative `A` update followed by rescaling `A` to unit ℓ₁
/// columns; returns the new `(A, X)` with the scale absorbed into `X`.
pub fn update_a(
    y: &NonNegMatrix,
    a: &NonNegMatrix,
    x: &NonNegMatrix,
    alpha: f64,
) -> Result<(NonNegMatrix, NonNegMatrix)> {
    check_chain(y, a, x)?;
    check_alpha(alpha)?;
    let ys = owned_slice(y);
    let mut av = owned_slice(a);
    let mut xv = owned_slice(x);
    let mut k = Kernel::new(&ys, y.rows(), y.cols(), a.cols(), alpha);
    k.fill_ratio(&av, &xv);
    k.step_a(&mut av, &mut xv)?;
    Ok((
        to_matrix(a.rows(), a.cols(), av),
        to_matrix(x.rows(), x.cols(), xv),
    ))
}

fn random_positive(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| rng.random_range(INIT_RANGE.0..INIT_RANGE.1))
        .collect()
}

struct LayerOutcome {
    a: NonNegMatrix,
    x: NonNegMatrix,
    history: Vec<ConvergenceRecord>,
    converged: bool,
}

fn factorize_layer(
    y: &NonNegMatrix,
    config: &NmfConfig,
    layer: usize,
    seed: u64,
    done: &[(NonNegMatrix, Vec<ConvergenceRecord>)],
) -> Result<LayerOutcome> {
    let (rows, cols) = y.dim();
    let rank = config.inner_rank;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = random_positive(&mut rng, rows * rank);
    let mut x = random_positive(&mut rng, rank * cols);

    let ys = owned_slice(y);
    let mut kernel = Kernel::new(&ys, rows, cols, rank, config.alpha);
    let mut history: Vec<ConvergenceRecord> = Vec::new();
    let mut converged = false;

    kernel.fill_ratio(&a, &x);
    for iteration in 1..=config.max_iterations {
        kernel.step_a(&mut a, &mut x)?;
        kernel.fill_ratio(&a, &x);
        kernel.step_x(&a, &mut x)?;
        // Also leaves the ratio ready for the next A step.
        let divergence = kernel.fill_ratio(&a, &x);
        if !divergence.is_finite() {
            let mut a_layers: Vec<NonNegMatrix> = done.iter().map(|(a, _)| a.clone()).collect();
            a_layers.push(to_matrix(rows, rank, a));
            let mut all: Vec<ConvergenceRecord> =
                done.iter().flat_map(|(_, h)| h.iter().copied()).collect();
            all.extend(history);
            let iterations_run = all.len();
            return Err(Error::NonFiniteDivergence {
                layer,
                iteration,
                state: Box::new(NmfState {
                    a_layers,
                    x: to_matrix(rank, cols, x),
                    history: all,
                    iterations_run,
                    converged: false,
                }),
            });
        }
        let relative = history
            .last()
            .map_or(f64::INFINITY, |prev| relative_change(prev.divergence, divergence));
        history.push(ConvergenceRecord {
            layer,
            iteration,
            divergence,
            relative_change: relative,
        });
        if check_convergence(&history, config.epsilon) {
            converged = true;
            break;
        }
    }

    Ok(LayerOutcome {
        a: to_matrix(rows, rank, a),
        x: to_matrix(rank, cols, x),
        history,
        converged,
    })
}

/// Single-layer factorization `Y ≈ A X` from a seeded random start.
pub fn factorize(y: &NonNegMatrix, config: &NmfConfig) -> Result<NmfState> {
    let single = NmfConfig {
        num_layers: 1,
        ..config.clone()
    };
    multilayer_factorize(y, &single)
}

/// Seed used for layer `layer` (1-based) of a cascade.
pub fn layer_seed(base: u64, layer: usize) -> u64 {
    base.wrapping_add(layer as u64 - 1)
}

/// Layer-by-layer cascade `Y ≈ A⁽¹⁾ ⋯ A⁽ᴸ⁾ X`: layer 1 factorizes `Y`,
/// each later layer factorizes the previous layer's `X`.
pub fn multilayer_factorize(y: &NonNegMatrix, config: &NmfConfig) -> Result<NmfState> {
    config.validate()?;
    let mut done: Vec<(NonNegMatrix, Vec<ConvergenceRecord>)> = Vec::new();
    let mut converged = true;
    let mut input = y.clone();
    for layer in 1..=config.num_layers {
        let outcome = factorize_layer(&input, config, layer, layer_seed(config.seed, layer), &done)?;
        converged &= outcome.converged;
        done.push((outcome.a, outcome.history));
        input = outcome.x;
    }
    let history: Vec<ConvergenceRecord> =
        done.iter().flat_map(|(_, h)| h.iter().copied()).collect();
    Ok(NmfState {
        a_layers: done.into_iter().map(|(a, _)| a).collect(),
        x: input,
        iterations_run: history.len(),
        history,
        converged,
    })
}

/// Writes the iteration trace as CSV with header
/// `layer,iteration,divergence,relative_change`.
pub fn write_trace_csv<W: Write>(history: &[ConvergenceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "layer,iteration,divergence,relative_change")?;
    for r in history {
        writeln!(
            out,
            "{},{},{:e},{:e}",
            r.layer, r.iteration, r.divergence, r.relative_change
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn m(rows: &[Vec<f64>]) -> NonNegMatrix {
        NonNegMatrix::from_rows(rows).unwrap()
    }

    fn rec(d: &[f64]) -> Vec<ConvergenceRecord> {
        d.iter()
            .enumerate()
            .map(|(k, &divergence)| ConvergenceRecord {
                layer: 1,
                iteration: k + 1,
                divergence,
                relative_change: 0.0,
            })
            .collect()
    }

    #[test]
    fn affine_equality_case() {
        let y = array![[-3.0, 1.0], [0.5, 2.0]];
        let out = affine_transform(y.view(), 2.0, 6.0).unwrap();
        assert_eq!(out.as_array().iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn affine_identity() {
        let y = array![[0.0, 1.5], [2.0, 3.0]];
        let out = affine_transform(y.view(), 1.0, 0.0).unwrap();
        assert_eq!(out.as_array(), &y);
    }

    #[test]
    fn affine_infeasible_reports_minimum() {
        let y = array![[-1.0, 0.0]];
        match affine_transform(y.view(), 5.0, 3.0) {
            Err(Error::InfeasibleOffset { min, .. }) => assert_eq!(min, -1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn auto_offset_cases() {
        assert!((auto_offset(array![[-0.5, 1.0]].view(), 0.2) - 0.1).abs() < 1e-15);
        assert_eq!(auto_offset(array![[0.3, 1.0]].view(), 5.0), 0.0);
        assert_eq!(auto_offset(array![[-1.0, 1.0]].view(), 5.0), 5.0);
    }

    #[test]
    fn auto_offset_is_feasible() {
        let y = array![[-0.37, 0.2], [0.1, -0.91]];
        let off = auto_offset(y.view(), 0.2);
        affine_transform(y.view(), 0.2, off).unwrap();
    }

    #[test]
    fn divergence_shape_mismatch() {
        let a = m(&[vec![1.0, 2.0]]);
        let b = m(&[vec![1.0], vec![2.0]]);
        assert!(matches!(
            alpha_divergence(&a, &b, 0.5),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn divergence_zero_estimate_is_infinite_for_large_alpha() {
        let y = m(&[vec![1.0]]);
        let z = m(&[vec![0.0]]);
        assert_eq!(alpha_divergence(&y, &z, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(alpha_divergence(&y, &z, 2.0).unwrap(), f64::INFINITY);
        assert_eq!(alpha_divergence(&y, &z, 3.0).unwrap(), f64::INFINITY);
        // α < 1: the cross term vanishes, leaving -α·y / (α(α-1)) = y / (1-α).
        assert!((alpha_divergence(&y, &z, 0.5).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn divergence_zero_data_uses_limit() {
        let y = m(&[vec![0.0]]);
        let z = m(&[vec![3.0]]);
        // KL: 0·ln 0 = 0, leaving ŷ.
        assert_eq!(alpha_divergence(&y, &z, 1.0).unwrap(), 3.0);
        // General α > 0: ((α-1)ŷ) / (α(α-1)) = ŷ/α.
        assert!((alpha_divergence(&y, &z, 3.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn convergence_rule() {
        assert!(check_convergence(&rec(&[10.0, 10.0]), 1e-6));
        assert!(!check_convergence(&rec(&[10.0, 9.0]), 1e-6));
        assert!(check_convergence(&rec(&[10.0, 9.0]), 1.0 / 9.0 + 1e-15));
        assert!(check_convergence(&rec(&[10.0, 0.0]), 1e-6));
        assert!(!check_convergence(&rec(&[10.0]), 1e-6));
    }

    #[test]
    fn update_x_scalar() {
        let y = m(&[vec![4.0]]);
        let a = m(&[vec![1.0]]);
        let x = m(&[vec![2.0]]);
        let x1 = update_x(&y, &a, &x, 0.5).unwrap();
        assert!((x1.as_array()[[0, 0]] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn update_a_scalar() {
        // Roles swapped relative to the X example: a = 2, x = 1.
        let y = m(&[vec![4.0]]);
        let a1 = update_a_unscaled(&y, &m(&[vec![2.0]]), &m(&[vec![1.0]]), 0.5).unwrap();
        assert!((a1.as_array()[[0, 0]] - 4.0).abs() < 1e-15);
        // With a = 1, x = 2 the normalized x̂ is 1: a' = 1 · (√2)² = 2.
        let a2 = update_a_unscaled(&y, &m(&[vec![1.0]]), &m(&[vec![2.0]]), 0.5).unwrap();
        assert!((a2.as_array()[[0, 0]] - 2.0).abs() < 1e-15);
        // Rescaling makes the single column sum to one and moves the scale to X.
        let (a3, x3) = update_a(&y, &m(&[vec![1.0]]), &m(&[vec![2.0]]), 0.5).unwrap();
        assert_eq!(a3.as_array()[[0, 0]], 1.0);
        assert!((x3.as_array()[[0, 0]] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn zeros_are_preserved() {
        let y = m(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.5]]);
        let a = m(&[vec![0.5, 0.2], vec![0.5, 0.8]]);
        let x = m(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.3]]);
        let x1 = update_x(&y, &a, &x, 0.5).unwrap();
        assert_eq!(x1.as_array()[[0, 0]], 0.0);

        let a0 = m(&[vec![0.0, 0.0], vec![0.5, 0.8]]);
        let a1 = update_a_unscaled(&y, &a0, &m(&[vec![1.0, 1.0, 2.0], vec![1.0, 0.5, 0.3]]), 0.5)
            .unwrap();
        assert_eq!(a1.as_array().row(0).sum(), 0.0);
    }

    #[test]
    fn zero_column_rejected() {
        let y = m(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let a = m(&[vec![0.0, 0.2], vec![0.0, 0.8]]);
        let x = m(&[vec![1.0, 1.0], vec![1.0, 0.5]]);
        assert!(matches!(update_x(&y, &a, &x, 0.5), Err(Error::ZeroColumn(0))));
    }

    #[test]
    fn alpha_zero_rejected_by_updates() {
        let y = m(&[vec![1.0]]);
        assert!(update_x(&y, &y, &y, 0.0).is_err());
    }

    #[test]
    fn iteration_cap_of_one() {
        let y = m(&[vec![1.0, 2.0, 3.0, 1.0], vec![2.0, 1.0, 0.5, 4.0]]);
        let cfg = NmfConfig {
            max_iterations: 1,
            ..NmfConfig::lung_defaults()
        };
        let st = factorize(&y, &cfg).unwrap();
        assert_eq!(st.iterations_run, 1);
        assert_eq!(st.history.len(), 1);
        assert!(!st.converged);
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&rec(&[2.0]), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("layer,iteration,divergence,relative_change\n1,1,"));
    }
}
