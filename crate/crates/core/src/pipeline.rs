//! The full separation: preprocessing, two independent scale-and-offset +
//! multilayer NMF modules, and period-based selection of one output per
//! module.
//!
//! Each module factorizes the same two mixtures with its own parameters and
//! keeps one row of its `X`: the heart module keeps the row with the shorter
//! period, the lung module the row with the longer one. The other row of
//! each module is discarded.

use std::cmp::Ordering;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bss_eval;
use crate::error::{Error, Result};
use crate::nmf::{affine_transform, auto_offset, multilayer_factorize};
use crate::periodicity::{estimate_with_method, period_order, PeriodEstimate, PeriodMethod, PeriodSearch};
use crate::preprocess::{apply_filter, design_bandpass, normalize, BandpassSpec, FilterCoefficients};
use crate::signal::{BssScores, ModuleDiagnostics, NmfConfig, SeparationResult, Signal};
use crate::synth::{mix, Case};

/// Mixtures whose correlation magnitude reaches this carry a single
/// source direction and cannot be separated.
pub const RANK_DEFICIENT_CORRELATION: f64 = 1.0 - 1e-9;

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Where the bandpass filters are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Sources were filtered before mixing; mixtures are used as given.
    #[default]
    SourcesAvailable,
    /// Only recorded mixtures exist; each module filters its own copy with
    /// its band.
    MixturesOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SourcesAvailable => "sources-available",
            Mode::MixturesOnly => "mixtures-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sources-available" => Some(Mode::SourcesAvailable),
            "mixtures-only" => Some(Mode::MixturesOnly),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Heart,
    Lung,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Heart => "heart",
            Role::Lung => "lung",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub heart_nmf: NmfConfig,
    pub lung_nmf: NmfConfig,
    pub heart_band: BandpassSpec,
    pub lung_band: BandpassSpec,
    pub period_search: PeriodSearch,
    pub period_method: PeriodMethod,
    pub mode: Mode,
    /// Run the two modules on separate threads.
    pub parallel: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            heart_nmf: NmfConfig::heart_defaults(),
            lung_nmf: NmfConfig::lung_defaults(),
            heart_band: BandpassSpec::heart(),
            lung_band: BandpassSpec::lung(),
            period_search: PeriodSearch::default(),
            period_method: PeriodMethod::Envelope,
            mode: Mode::SourcesAvailable,
            parallel: true,
        }
    }
}

impl PipelineConfig {
    pub fn module(&self, role: Role) -> &NmfConfig {
        match role {
            Role::Heart => &self.heart_nmf,
            Role::Lung => &self.lung_nmf,
        }
    }

    pub fn band(&self, role: Role) -> &BandpassSpec {
        match role {
            Role::Heart => &self.heart_band,
            Role::Lung => &self.lung_band,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.heart_nmf.validate()?;
        self.lung_nmf.validate()?;
        if self.heart_nmf.inner_rank < 2 || self.lung_nmf.inner_rank < 2 {
            return Err(Error::InvalidConfig(
                "separation needs an inner rank of at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// What one module produced: the kept row and its diagnostics.
#[derive(Debug, Clone)]
pub struct ModuleOutput {
    pub estimate: Signal,
    pub period: PeriodEstimate,
    pub diagnostics: ModuleDiagnostics,
}

/// Stacks two signals into a 2×T matrix.
fn stack(a: &Signal, b: &Signal) -> Array2<f64> {
    let t = a.len();
    let mut y = Array2::zeros((2, t));
    y.row_mut(0)
        .iter_mut()
        .zip(a.samples())
        .for_each(|(d, s)| *d = *s);
    y.row_mut(1)
        .iter_mut()
        .zip(b.samples())
        .for_each(|(d, s)| *d = *s);
    y
}

/// Runs one module on an already preprocessed 2×T mixture matrix.
pub fn run_module(
    y: &Array2<f64>,
    sample_rate_hz: u32,
    config: &NmfConfig,
    role: Role,
    search: &PeriodSearch,
    method: PeriodMethod,
) -> Result<ModuleOutput> {
    let mut lambda2 = config.lambda2;
    let mut substituted = false;
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    if config.lambda1 * min + lambda2 < 0.0 {
        lambda2 = auto_offset(y.view(), config.lambda1);
        substituted = true;
    }
    let transformed = affine_transform(y.view(), config.lambda1, lambda2)?;
    let state = multilayer_factorize(&transformed, config)?;

    let fs = f64::from(sample_rate_hz);
    let search = search.clamped_to(y.ncols(), fs)?;
    let mut rows: Vec<(usize, Signal, Option<PeriodEstimate>)> = Vec::new();
    for (j, row) in state.x.as_array().rows().into_iter().enumerate() {
        let sig = Signal::new(row.to_vec(), sample_rate_hz)?;
        let period = match estimate_with_method(&sig, &search, method) {
            Ok(p) => Some(p),
            Err(Error::ConstantSignal(_)) => None,
            Err(e) => return Err(e),
        };
        rows.push((j, sig, period));
    }

    // Rows without a period estimate (constant rows) are never selected.
    let ordering = |a: &(usize, Signal, Option<PeriodEstimate>), b: &(usize, Signal, Option<PeriodEstimate>)| {
        match (&a.2, &b.2) {
            (Some(pa), Some(pb)) => period_order((pa, a.1.samples()), (pb, b.1.samples())),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        }
    };
    let usable: Vec<_> = rows.iter().filter(|r| r.2.is_some()).collect();
    let chosen = match role {
        Role::Heart => usable.iter().min_by(|a, b| ordering(a, b)),
        Role::Lung => usable.iter().max_by(|a, b| ordering(a, b)),
    }
    .ok_or(Error::ConstantSignal("period estimation of every factor row"))?;
    let (selected_row, row_signal, period) = (chosen.0, &chosen.1, chosen.2.expect("usable"));

    let estimate = normalize(row_signal)?;
    let diagnostics = ModuleDiagnostics {
        alpha: config.alpha,
        num_layers: config.num_layers,
        lambda1: config.lambda1,
        lambda2,
        lambda2_substituted: substituted,
        iterations: state.iterations_run,
        final_divergence: state.final_divergence().unwrap_or(f64::NAN),
        converged: state.converged,
        row_periods_s: rows
            .iter()
            .map(|r| r.2.map_or(f64::NAN, |p| p.period_seconds))
            .collect(),
        selected_row,
    };
    Ok(ModuleOutput {
        estimate,
        period,
        diagnostics,
    })
}

/// Normalized (and in mixtures-only mode, band-filtered) 2×T input of one
/// module.
pub fn module_input(
    mix1: &Signal,
    mix2: &Signal,
    mode: Mode,
    filter: Option<&FilterCoefficients>,
) -> Result<Array2<f64>> {
    let prep = |s: &Signal| -> Result<Signal> {
        match (mode, filter) {
            (Mode::MixturesOnly, Some(f)) => normalize(&apply_filter(s, f)?),
            _ => normalize(s),
        }
    };
    Ok(stack(&prep(mix1)?, &prep(mix2)?))
}

pub fn separate(mix1: &Signal, mix2: &Signal, config: &PipelineConfig) -> Result<SeparationResult> {
    mix1.check_compatible(mix2)?;
    config.validate()?;
    let fs = mix1.sample_rate_hz();
    // Channel order carries no information; a fixed order makes the result
    // independent of it.
    let (mix1, mix2) = if lexicographic(mix1.samples(), mix2.samples()) == Ordering::Greater {
        (mix2, mix1)
    } else {
        (mix1, mix2)
    };
    let rank_deficient = abs_correlation(mix1.samples(), mix2.samples()) >= RANK_DEFICIENT_CORRELATION;

    let run = |role: Role| -> Result<ModuleOutput> {
        let filter = match config.mode {
            Mode::MixturesOnly => Some(design_bandpass(config.band(role), fs)?),
            Mode::SourcesAvailable => None,
        };
        let y = module_input(mix1, mix2, config.mode, filter.as_ref())?;
        run_module(
            &y,
            fs,
            config.module(role),
            role,
            &config.period_search,
            config.period_method,
        )
    };
    let (heart, lung) = if config.parallel {
        rayon::join(|| run(Role::Heart), || run(Role::Lung))
    } else {
        (run(Role::Heart), run(Role::Lung))
    };
    let (mut heart, mut lung) = (heart?, lung?);

    let order = period_order(
        (&heart.period, heart.estimate.samples()),
        (&lung.period, lung.estimate.samples()),
    );
    let roles_swapped = order == Ordering::Greater;
    if roles_swapped {
        std::mem::swap(&mut heart.estimate, &mut lung.estimate);
        std::mem::swap(&mut heart.period, &mut lung.period);
    }
    let degenerate = rank_deficient || heart.period.period_samples == lung.period.period_samples;

    Ok(SeparationResult {
        heart_estimate: heart.estimate,
        lung_estimate: lung.estimate,
        heart_period_s: heart.period.period_seconds,
        lung_period_s: lung.period.period_seconds,
        heart_diag: heart.diagnostics,
        lung_diag: lung.diagnostics,
        roles_swapped,
        degenerate,
    })
}

/// Band-filtered sources and the mixtures built from them.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub heart_ref: Signal,
    pub lung_ref: Signal,
    pub mix1: Signal,
    pub mix2: Signal,
}

/// Filters each source with its band and mixes the filtered sources.
pub fn prepare_case(case: &Case, config: &PipelineConfig) -> Result<PreparedCase> {
    let fs = case.heart.sample_rate_hz();
    let heart_ref = apply_filter(&case.heart, &design_bandpass(&config.heart_band, fs)?)?;
    let lung_ref = apply_filter(&case.lung, &design_bandpass(&config.lung_band, fs)?)?;
    let (mix1, mix2) = mix(&heart_ref, &lung_ref, &case.spec.mixing, case.spec.gain_lung)?;
    Ok(PreparedCase {
        heart_ref,
        lung_ref,
        mix1,
        mix2,
    })
}

/// Outcome of one evaluated synthetic case.
#[derive(Debug, Clone)]
pub struct CaseOutcome {
    pub case_id: usize,
    pub result: SeparationResult,
    pub heart_scores: BssScores,
    pub lung_scores: BssScores,
    /// Scores of the better raw mixture used as the heart estimate.
    pub heart_baseline: BssScores,
    /// Scores of the better raw mixture used as the lung estimate.
    pub lung_baseline: BssScores,
    /// |corr| of the heart estimate with (heart ref, lung ref).
    pub heart_correlations: [f64; 2],
    /// |corr| of the lung estimate with (heart ref, lung ref).
    pub lung_correlations: [f64; 2],
}

impl CaseOutcome {
    /// True when each estimate correlates more with its own reference than
    /// with the other one.
    pub fn assignment_correct(&self) -> bool {
        self.heart_correlations[0] > self.heart_correlations[1]
            && self.lung_correlations[1] > self.lung_correlations[0]
    }
}

/// Absolute Pearson correlation.
pub fn abs_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).abs()
    }
}

fn best_baseline(mixtures: [&Signal; 2], refs: &[Signal], target: usize) -> Result<BssScores> {
    let a = bss_eval::evaluate(mixtures[0], refs, target)?;
    let b = bss_eval::evaluate(mixtures[1], refs, target)?;
    Ok(if b.sir_db.to_f64() > a.sir_db.to_f64() { b } else { a })
}

/// Filters and mixes the case's sources, separates, and scores both
/// estimates against the filtered sources.
pub fn run_case(case: &Case, config: &PipelineConfig) -> Result<CaseOutcome> {
    case.spec.mixing.check_nonsingular()?;
    let prepared = prepare_case(case, config)?;
    let config = PipelineConfig {
        mode: Mode::SourcesAvailable,
        ..config.clone()
    };
    let result = separate(&prepared.mix1, &prepared.mix2, &config)?;
    let refs = [prepared.heart_ref.clone(), prepared.lung_ref.clone()];
    let heart_scores = bss_eval::evaluate(&result.heart_estimate, &refs, 0)?;
    let lung_scores = bss_eval::evaluate(&result.lung_estimate, &refs, 1)?;
    let mixtures = [&prepared.mix1, &prepared.mix2];
    let corr = |est: &Signal| {
        [
            abs_correlation(est.samples(), refs[0].samples()),
            abs_correlation(est.samples(), refs[1].samples()),
        ]
    };
    Ok(CaseOutcome {
        case_id: case.spec.id,
        heart_correlations: corr(&result.heart_estimate),
        lung_correlations: corr(&result.lung_estimate),
        heart_baseline: best_baseline(mixtures, &refs, 0)?,
        lung_baseline: best_baseline(mixtures, &refs, 1)?,
        result,
        heart_scores,
        lung_scores,
    })
}
