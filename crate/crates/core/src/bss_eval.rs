//! SDR / SIR / SAR by nested orthogonal projections of an estimate onto the
//! target reference, the span of all references, and the span of references
//! plus noise references.

use crate::error::{Error, Result};
use crate::signal::{BssScores, Decibels, Signal};

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_GRAM_CONDITION: f64 = 1e10;

/// Error energy at or below this fraction of the numerator reports
/// [`Decibels::Infinite`].
pub const INFINITE_RATIO_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub s_target: Vec<f64>,
    pub e_interference: Vec<f64>,
    pub e_noise: Vec<f64>,
    pub e_artifact: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
fn symmetric_eigenvalues(mut m: Vec<Vec<f64>>) -> Vec<f64> {
    let n = m.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Condition number of the Gram matrix of `vectors`.
pub fn gram_condition(vectors: &[&[f64]]) -> f64 {
    let gram: Vec<Vec<f64>> = vectors
        .iter()
        .map(|a| vectors.iter().map(|b| dot(a, b)).collect())
        .collect();
    let eig = symmetric_eigenvalues(gram);
    let max = eig.iter().copied().fold(f64::MIN, f64::max);
    let min = eig.iter().copied().fold(f64::MAX, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis of `vectors` by modified Gram–Schmidt with one
/// reorthogonalization pass.
fn orthonormal_basis(vectors: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.to_vec();
        for _pass in 0..2 {
            for q in &basis {
                let c = dot(&w, q);
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let norm = energy(&w).sqrt();
        for wi in &mut w {
            *wi /= norm;
        }
        basis.push(w);
    }
    basis
}

fn project(e: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; e.len()];
    for q in basis {
        let c = dot(e, q);
        for (o, qi) in out.iter_mut().zip(q) {
            *o += c * qi;
        }
    }
    out
}

/// Splits `estimate` into target, interference, noise and artifact parts.
pub fn decompose_slices(
    estimate: &[f64],
    references: &[&[f64]],
    target_index: usize,
    noise_refs: &[&[f64]],
) -> Result<Decomposition> {
    if references.is_empty() {
        return Err(Error::InvalidSignal("at least one reference is required".into()));
    }
    if target_index >= references.len() {
        return Err(Error::InvalidConfig(format!(
            "target index {target_index} out of range for {} references",
            references.len()
        )));
    }
    let n = estimate.len();
    if let Some(bad) = references.iter().chain(noise_refs).find(|r| r.len() != n) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} samples"),
            actual: format!("{} samples", bad.len()),
        });
    }
    let all: Vec<&[f64]> = references.iter().chain(noise_refs).copied().collect();
    let cond = gram_condition(&all);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::Singular(cond));
    }

    let target = references[target_index];
    let coef = dot(estimate, target) / energy(target);
    let s_target: Vec<f64> = target.iter().map(|v| coef * v).collect();

    // Each stage projects what the previous stages left over, so an
    // estimate that is exactly a scaled reference leaves exact zeros.
    let basis = orthonormal_basis(&all);
    let rest: Vec<f64> = estimate.iter().zip(&s_target).map(|(e, s)| e - s).collect();
    let e_interference = project(&rest, &basis[..references.len()]);
    let rest: Vec<f64> = rest.iter().zip(&e_interference).map(|(r, p)| r - p).collect();
    let e_noise = project(&rest, &basis[references.len()..]);
    let e_artifact: Vec<f64> = rest.iter().zip(&e_noise).map(|(r, p)| r - p).collect();

    Ok(Decomposition {
        s_target,
        e_interference,
        e_noise,
        e_artifact,
    })
}

pub fn decompose(
    estimate: &Signal,
    references: &[Signal],
    target_index: usize,
    noise_refs: &[Signal],
) -> Result<Decomposition> {
    for r in references.iter().chain(noise_refs) {
        estimate.check_compatible(r)?;
    }
    let refs: Vec<&[f64]> = references.iter().map(Signal::samples).collect();
    let noise: Vec<&[f64]> = noise_refs.iter().map(Signal::samples).collect();
    decompose_slices(estimate.samples(), &refs, target_index, &noise)
}

fn ratio_db(numerator: f64, denominator: f64) -> Decibels {
    if numerator == 0.0 && denominator == 0.0 {
        Decibels::Invalid
    } else if numerator == 0.0 {
        Decibels::NegInfinite
    } else if denominator <= INFINITE_RATIO_FLOOR * numerator {
        Decibels::Infinite
    } else {
        Decibels::Finite(10.0 * (numerator / denominator).log10())
    }
}

fn sum3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x + y + z).collect()
}

/// Source-to-distortion ratio.
pub fn sdr(d: &Decomposition) -> Decibels {
    ratio_db(
        energy(&d.s_target),
        energy(&sum3(&d.e_interference, &d.e_noise, &d.e_artifact)),
    )
}

/// Source-to-interference ratio.
pub fn sir(d: &Decomposition) -> Decibels {
    ratio_db(energy(&d.s_target), energy(&d.e_interference))
}

/// Source-to-artifacts ratio.
pub fn sar(d: &Decomposition) -> Decibels {
    ratio_db(
        energy(&sum3(&d.s_target, &d.e_interference, &d.e_noise)),
        energy(&d.e_artifact),
    )
}

pub fn scores(d: &Decomposition) -> BssScores {
    BssScores {
        sdr_db: sdr(d),
        sir_db: sir(d),
        sar_db: sar(d),
    }
}

/// Decomposes and scores in one call, with no noise references.
pub fn evaluate(estimate: &Signal, references: &[Signal], target_index: usize) -> Result<BssScores> {
    decompose(estimate, references, target_index, &[]).map(|d| scores(&d))
}
