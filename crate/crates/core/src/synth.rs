//! Seeded synthetic heart-like and lung-like sources and their two-channel
//! mixtures.
//!
//! These are stand-ins with the properties the separation relies on: a
//! known period, energy inside the physiological bands, and a lung source
//! that dominates the heart source. They are not physiological models.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{apply_filter, design_bandpass, BandpassSpec};
use crate::signal::Signal;

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 8000;
pub const DEFAULT_DURATION_S: f64 = 10.0;
/// Lung-to-heart amplitude ratio applied before mixing.
pub const DEFAULT_GAIN_LUNG: f64 = 1.5;
/// Mixing matrices with a larger 2-norm condition number are rejected.
pub const MAX_MIXING_CONDITION: f64 = 1e6;

pub const HEART_PERIOD_RANGE_S: (f64, f64) = (0.6, 1.2);
pub const LUNG_PERIOD_RANGE_S: (f64, f64) = (3.0, 5.0);
pub const CASE_MAX_CONDITION: f64 = 10.0;
pub const CASE_HEART_JITTER_PCT: f64 = 2.0;
pub const CASE_LUNG_JITTER_PCT: f64 = 3.0;
/// Length of every case: three cycles of the slowest breathing period.
pub const CASE_DURATION_S: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    HeartLike,
    LungLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub period_s: f64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub seed: u64,
    /// Maximum relative deviation of each cycle length, in percent.
    pub jitter_pct: f64,
}

impl SourceSpec {
    pub fn heart(period_s: f64, seed: u64) -> Self {
        Self {
            kind: SourceKind::HeartLike,
            period_s,
            duration_s: DEFAULT_DURATION_S,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed,
            jitter_pct: 0.0,
        }
    }

    /// Lengthened beyond the default duration when needed to hold three
    /// cycles.
    pub fn lung(period_s: f64, seed: u64) -> Self {
        Self {
            kind: SourceKind::LungLike,
            duration_s: DEFAULT_DURATION_S.max(3.0 * period_s),
            ..Self::heart(period_s, seed)
        }
    }

    fn validate(&self, kind: SourceKind, period_range: (f64, f64)) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.kind != kind {
            return bad(format!("expected a {kind:?} spec, got {:?}", self.kind));
        }
        if !(self.period_s >= period_range.0 && self.period_s <= period_range.1) {
            return bad(format!(
                "period {} s outside [{}, {}] s",
                self.period_s, period_range.0, period_range.1
            ));
        }
        if !(self.duration_s >= 3.0 * self.period_s) {
            return bad(format!(
                "duration {} s holds fewer than three {} s cycles",
                self.duration_s, self.period_s
            ));
        }
        if self.sample_rate_hz == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.jitter_pct >= 0.0 && self.jitter_pct < 50.0) {
            return bad(format!("jitter {}% out of range", self.jitter_pct));
        }
        Ok(())
    }

    fn num_samples(&self) -> usize {
        (self.duration_s * f64::from(self.sample_rate_hz)).round() as usize
    }
}

/// Start times of successive cycles covering `[−period, duration)`.
fn cycle_starts(rng: &mut ChaCha8Rng, period: f64, duration: f64, jitter_pct: f64) -> Vec<f64> {
    let jitter = jitter_pct / 100.0;
    let mut t = -rng.random_range(0.0..period);
    let mut starts = Vec::new();
    while t < duration {
        starts.push(t);
        let dev = if jitter > 0.0 {
            rng.random_range(-jitter..jitter)
        } else {
            0.0
        };
        t += period * (1.0 + dev);
    }
    starts
}

fn peak_normalized(mut v: Vec<f64>, rate: u32) -> Result<Signal> {
    let peak = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if peak == 0.0 {
        return Err(Error::ConstantSignal("peak normalization"));
    }
    for x in &mut v {
        *x /= peak;
    }
    Signal::new(v, rate)
}

/// Damped tone burst with a half-sine onset/offset.
fn add_burst(out: &mut [f64], rate: f64, start_s: f64, len_s: f64, freq: f64, amp: f64, decay_s: f64) {
    let first = (start_s * rate).ceil().max(0.0) as usize;
    let last = (((start_s + len_s) * rate).floor() as usize).min(out.len().saturating_sub(1));
    if start_s + len_s < 0.0 || first > last {
        return;
    }
    for (i, o) in out.iter_mut().enumerate().take(last + 1).skip(first) {
        let t = i as f64 / rate - start_s;
        let window = (std::f64::consts::PI * t / len_s).sin();
        *o += amp * window * (-t / decay_s).exp() * (2.0 * std::f64::consts::PI * freq * t).sin();
    }
}

/// Two damped tone bursts per cycle (a low S1-like and a higher S2-like
/// burst), peak-normalized.
pub fn gen_heart_like(spec: &SourceSpec) -> Result<Signal> {
    spec.validate(SourceKind::HeartLike, (0.4, 1.5))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rate = f64::from(spec.sample_rate_hz);
    let s1_freq = rng.random_range(55.0..90.0);
    let s2_freq = rng.random_range(90.0..140.0);
    let s2_offset = rng.random_range(0.28..0.36);
    let mut out = vec![0.0; spec.num_samples()];
    for start in cycle_starts(&mut rng, spec.period_s, spec.duration_s, spec.jitter_pct) {
        add_burst(&mut out, rate, start, 0.08, s1_freq, 1.0, 0.04);
        add_burst(&mut out, rate, start + s2_offset * spec.period_s, 0.06, s2_freq, 0.7, 0.03);
    }
    peak_normalized(out, spec.sample_rate_hz)
}

/// Inhale/exhale amplitude profile at phase `u ∈ [0, 1)` of a cycle.
fn breath_envelope(u: f64) -> f64 {
    const INHALE: f64 = 0.4;
    if u < INHALE {
        (std::f64::consts::PI * u / INHALE).sin()
    } else {
        0.6 * (std::f64::consts::PI * (u - INHALE) / (1.0 - INHALE)).sin()
    }
}

/// Band-limited (60–300 Hz) noise modulated by a periodic inhale/exhale
/// envelope, peak-normalized.
pub fn gen_lung_like(spec: &SourceSpec) -> Result<Signal> {
    spec.validate(SourceKind::LungLike, (2.5, 6.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_samples();
    let rate = f64::from(spec.sample_rate_hz);
    let filter = design_bandpass(&BandpassSpec::lung(), spec.sample_rate_hz)?;
    let warmup = filter.taps().len();
    let white: Vec<f64> = (0..n + warmup)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let band = apply_filter(&Signal::new(white, spec.sample_rate_hz)?, &filter)?;
    let band = &band.samples()[warmup..];

    let starts = cycle_starts(&mut rng, spec.period_s, spec.duration_s, spec.jitter_pct);
    let mut out = vec![0.0; n];
    let mut cycle = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / rate;
        while cycle + 1 < starts.len() && starts[cycle + 1] <= t {
            cycle += 1;
        }
        let end = starts
            .get(cycle + 1)
            .copied()
            .unwrap_or(starts[cycle] + spec.period_s);
        let u = ((t - starts[cycle]) / (end - starts[cycle])).clamp(0.0, 1.0);
        *o = band[i] * breath_envelope(u);
    }
    peak_normalized(out, spec.sample_rate_hz)
}

pub fn generate(spec: &SourceSpec) -> Result<Signal> {
    match spec.kind {
        SourceKind::HeartLike => gen_heart_like(spec),
        SourceKind::LungLike => gen_lung_like(spec),
    }
}

/// A 2×2 mixing matrix; row `i` gives the weights of mixture `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix(pub [[f64; 2]; 2]);

impl MixingMatrix {
    pub const IDENTITY: MixingMatrix = MixingMatrix([[1.0, 0.0], [0.0, 1.0]]);

    pub fn determinant(&self) -> f64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    /// Ratio of the largest to the smallest singular value.
    pub fn condition_number(&self) -> f64 {
        let m = self.0;
        let frob2: f64 = m.iter().flatten().map(|v| v * v).sum();
        let det = self.determinant();
        let disc = (frob2 * frob2 - 4.0 * det * det).max(0.0).sqrt();
        let s_max2 = (frob2 + disc) / 2.0;
        let s_min2 = (frob2 - disc) / 2.0;
        if det == 0.0 || s_min2 <= 0.0 {
            f64::INFINITY
        } else {
            (s_max2 / s_min2).sqrt()
        }
    }

    pub fn check_nonsingular(&self) -> Result<()> {
        let cond = self.condition_number();
        if !self.0.iter().flatten().all(|v| v.is_finite()) || !(cond < MAX_MIXING_CONDITION) {
            return Err(Error::Singular(cond));
        }
        Ok(())
    }

    /// Exchanges the two mixture rows.
    pub fn swap_rows(&self) -> Self {
        MixingMatrix([self.0[1], self.0[0]])
    }

    /// Exchanges the two source columns.
    pub fn swap_columns(&self) -> Self {
        let m = self.0;
        MixingMatrix([[m[0][1], m[0][0]], [m[1][1], m[1][0]]])
    }
}

/// `[mix1; mix2] = M · [heart; gain_lung · lung]`.
pub fn mix(
    heart: &Signal,
    lung: &Signal,
    mixing: &MixingMatrix,
    gain_lung: f64,
) -> Result<(Signal, Signal)> {
    heart.check_compatible(lung)?;
    mixing.check_nonsingular()?;
    if !(gain_lung > 0.0 && gain_lung.is_finite()) {
        return Err(Error::InvalidConfig(format!("gain_lung must be positive, got {gain_lung}")));
    }
    let m = mixing.0;
    let row = |w: [f64; 2]| -> Result<Signal> {
        let s = heart
            .samples()
            .iter()
            .zip(lung.samples())
            .map(|(h, l)| w[0] * h + w[1] * gain_lung * l)
            .collect();
        Signal::new(s, heart.sample_rate_hz())
    };
    Ok((row(m[0])?, row(m[1])?))
}

/// Parameters of one synthetic case; sources are generated on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: usize,
    pub heart: SourceSpec,
    pub lung: SourceSpec,
    pub mixing: MixingMatrix,
    pub gain_lung: f64,
}

/// A case with its generated (unfiltered) sources.
#[derive(Debug, Clone)]
pub struct Case {
    pub spec: CaseSpec,
    pub heart: Signal,
    pub lung: Signal,
}

impl CaseSpec {
    pub fn generate(&self) -> Result<Case> {
        Ok(Case {
            spec: self.clone(),
            heart: gen_heart_like(&self.heart)?,
            lung: gen_lung_like(&self.lung)?,
        })
    }
}

fn random_mixing(rng: &mut ChaCha8Rng) -> MixingMatrix {
    loop {
        let m = MixingMatrix([
            [1.0, rng.random_range(0.1..0.9)],
            [rng.random_range(0.1..0.9), 1.0],
        ]);
        if m.condition_number() <= CASE_MAX_CONDITION {
            return m;
        }
    }
}

/// `n` reproducible cases: heart periods in 0.6–1.2 s, lung periods in
/// 3–5 s, positive mixing matrices with condition number at most 10.
pub fn gen_case_set(n: usize, base_seed: u64) -> Result<Vec<CaseSpec>> {
    if n == 0 {
        return Err(Error::InvalidConfig("case count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    Ok((0..n)
        .map(|id| {
            let heart_period = rng.random_range(HEART_PERIOD_RANGE_S.0..HEART_PERIOD_RANGE_S.1);
            let lung_period = rng.random_range(LUNG_PERIOD_RANGE_S.0..LUNG_PERIOD_RANGE_S.1);
            let heart_seed = rng.next_u64();
            let lung_seed = rng.next_u64();
            let mixing = random_mixing(&mut rng);
            CaseSpec {
                id,
                heart: SourceSpec {
                    jitter_pct: CASE_HEART_JITTER_PCT,
                    duration_s: CASE_DURATION_S,
                    ..SourceSpec::heart(heart_period, heart_seed)
                },
                lung: SourceSpec {
                    jitter_pct: CASE_LUNG_JITTER_PCT,
                    duration_s: CASE_DURATION_S,
                    ..SourceSpec::lung(lung_period, lung_seed)
                },
                mixing,
                gain_lung: DEFAULT_GAIN_LUNG,
            }
        })
        .collect())
}
