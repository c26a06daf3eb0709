//! Value types shared across the crate: waveforms, nonnegative matrices,
//! factorization configuration and state, and separation results.
//!
//! Matrices follow the factorization orientation `Y = A X`: rows are
//! channels (or sources), columns are time samples.

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nmf::ConvergenceRecord;

/// A sampled single-channel waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidSignal("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "sample {i} is not finite ({})",
                samples[i]
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Returns a new signal with every sample mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Signal::new(
            self.samples.iter().map(|&v| f(v)).collect(),
            self.sample_rate_hz,
        )
    }

    pub(crate) fn check_compatible(&self, other: &Signal) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} samples", self.len()),
                actual: format!("{} samples", other.len()),
            });
        }
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::ShapeMismatch {
                expected: format!("{} Hz", self.sample_rate_hz),
                actual: format!("{} Hz", other.sample_rate_hz),
            });
        }
        Ok(())
    }
}

/// True iff every entry is finite and `>= 0`.
pub fn validate_nonneg(m: ArrayView2<'_, f64>) -> bool {
    m.iter().all(|v| v.is_finite() && *v >= 0.0)
}

/// A dense matrix whose entries are all finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegMatrix(Array2<f64>);

impl NonNegMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if !validate_nonneg(data.view()) {
            return Err(Error::InvalidMatrix(
                "entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), ncols), flat)
            .map_err(|e| Error::InvalidMatrix(e.to_string()))?;
        Self::new(data)
    }

    /// Wraps an array the caller has already established to be nonnegative.
    pub(crate) fn from_trusted(data: Array2<f64>) -> Self {
        debug_assert!(validate_nonneg(data.view()));
        Self(data)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// Entrywise ℓ₁ norm.
    pub fn l1_norm(&self) -> f64 {
        self.0.sum()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, &v| m.max(v))
    }

    pub fn dot(&self, rhs: &NonNegMatrix) -> Result<NonNegMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} rows", self.cols()),
                actual: format!("{} rows", rhs.rows()),
            });
        }
        Ok(Self(self.0.dot(&rhs.0)))
    }
}

/// Hyperparameters for one factorization module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfConfig {
    pub alpha: f64,
    pub num_layers: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub inner_rank: usize,
    pub seed: u64,
}

impl NmfConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-6;
    pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

    /// Heart-detection module: alpha 0.5, two layers, scale 0.2, offset 1.
    pub fn heart_defaults() -> Self {
        Self {
            alpha: 0.5,
            num_layers: 2,
            lambda1: 0.2,
            lambda2: 1.0,
            epsilon: Self::DEFAULT_EPSILON,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            inner_rank: 2,
            seed: 1,
        }
    }

    /// Lung-detection module: alpha 0.5, one layer, scale 5, offset 6.
    pub fn lung_defaults() -> Self {
        Self {
            alpha: 0.5,
            num_layers: 1,
            lambda1: 5.0,
            lambda2: 6.0,
            epsilon: Self::DEFAULT_EPSILON,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            inner_rank: 2,
            seed: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !self.alpha.is_finite() {
            return bad("alpha must be finite");
        }
        if self.alpha == 0.0 {
            return bad("alpha = 0 has no multiplicative update (exponent 1/alpha)");
        }
        if !(self.lambda1 > 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be positive");
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be nonnegative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.inner_rank == 0 {
            return bad("inner_rank must be at least 1");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        Ok(())
    }
}

/// The evolving (or final) factorization `Y ≈ A⁽¹⁾ ⋯ A⁽ᴸ⁾ X`.
#[derive(Debug, Clone)]
pub struct NmfState {
    /// `A⁽¹⁾` is I×J; every later layer is J×J.
    pub a_layers: Vec<NonNegMatrix>,
    /// J×T.
    pub x: NonNegMatrix,
    /// One record per iteration, tagged with the layer that produced it.
    pub history: Vec<ConvergenceRecord>,
    pub iterations_run: usize,
    /// True iff every layer met the stopping rule before its iteration cap.
    pub converged: bool,
}

impl NmfState {
    /// Divergence values of one layer, in iteration order.
    pub fn divergence_history(&self, layer: usize) -> Vec<f64> {
        self.history
            .iter()
            .filter(|r| r.layer == layer)
            .map(|r| r.divergence)
            .collect()
    }

    /// The product `A⁽¹⁾ ⋯ A⁽ᴸ⁾`.
    pub fn mixing_product(&self) -> NonNegMatrix {
        let mut acc = self.a_layers[0].as_array().clone();
        for a in &self.a_layers[1..] {
            acc = acc.dot(a.as_array());
        }
        NonNegMatrix::from_trusted(acc)
    }

    /// The full reconstruction `A⁽¹⁾ ⋯ A⁽ᴸ⁾ X`.
    pub fn reconstruction(&self) -> NonNegMatrix {
        NonNegMatrix::from_trusted(self.mixing_product().as_array().dot(self.x.as_array()))
    }

    pub fn final_divergence(&self) -> Option<f64> {
        self.history.last().map(|r| r.divergence)
    }

    /// Checks that the layer shapes chain as I×J, J×J, …, J×T.
    pub fn dimensions_chain(&self) -> bool {
        let j = self.x.rows();
        let Some(first) = self.a_layers.first() else {
            return false;
        };
        first.cols() == j && self.a_layers[1..].iter().all(|a| a.dim() == (j, j))
    }
}

/// A score in decibels; ratios with zero error energy are reported as
/// [`Decibels::Infinite`] instead of a large finite number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decibels {
    Finite(f64),
    /// Zero error energy.
    Infinite,
    /// Zero target energy with nonzero error energy.
    NegInfinite,
    /// Both energies zero; the ratio is undefined.
    Invalid,
}

impl Decibels {
    /// Finite value, or `None` for the sentinels.
    pub fn finite(self) -> Option<f64> {
        match self {
            Decibels::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Maps the sentinels to IEEE infinities (and NaN for `Invalid`) for
    /// aggregation.
    pub fn to_f64(self) -> f64 {
        match self {
            Decibels::Finite(v) => v,
            Decibels::Infinite => f64::INFINITY,
            Decibels::NegInfinite => f64::NEG_INFINITY,
            Decibels::Invalid => f64::NAN,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Decibels::Infinite)
    }
}

impl fmt::Display for Decibels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decibels::Finite(v) => write!(f, "{v:.4}"),
            Decibels::Infinite => f.write_str("inf"),
            Decibels::NegInfinite => f.write_str("-inf"),
            Decibels::Invalid => f.write_str("invalid"),
        }
    }
}

/// SDR / SIR / SAR for one estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BssScores {
    pub sdr_db: Decibels,
    pub sir_db: Decibels,
    pub sar_db: Decibels,
}

/// Per-module summary carried in a [`SeparationResult`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModuleDiagnostics {
    pub alpha: f64,
    pub num_layers: usize,
    pub lambda1: f64,
    /// Offset actually applied; differs from the configured value when the
    /// configured one violated nonnegativity.
    pub lambda2: f64,
    pub lambda2_substituted: bool,
    pub iterations: usize,
    pub final_divergence: f64,
    pub converged: bool,
    /// Estimated period of each factor row, in seconds.
    pub row_periods_s: Vec<f64>,
    /// Index of the factor row kept by this module.
    pub selected_row: usize,
}

/// Labeled estimates produced by the separation pipeline.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub heart_estimate: Signal,
    pub lung_estimate: Signal,
    pub heart_period_s: f64,
    pub lung_period_s: f64,
    pub heart_diag: ModuleDiagnostics,
    pub lung_diag: ModuleDiagnostics,
    /// Set when the heart module's pick had a longer period than the lung
    /// module's and the two labels were exchanged.
    pub roles_swapped: bool,
    /// Set when both kept rows have the same period, so the ordering
    /// contract cannot be strict, or when the two mixtures are collinear.
    pub degenerate: bool,
}
