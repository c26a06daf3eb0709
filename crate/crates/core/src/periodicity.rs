//! Autocorrelation period estimation and period-based ordering of outputs.

use std::cmp::Ordering;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Minimum normalized autocorrelation at the chosen lag for a signal to be
/// called periodic.
pub const PERIODICITY_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodEstimate {
    /// Period in samples of the analysed signal's own sample rate.
    pub period_samples: usize,
    pub period_seconds: f64,
    /// Normalized autocorrelation at the chosen lag, clamped to `[0, 1]`.
    pub peak_strength: f64,
    pub is_periodic: bool,
}

/// Lag window and periodicity threshold for [`estimate_period_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodSearch {
    pub min_s: f64,
    pub max_s: f64,
    pub threshold: f64,
}

impl Default for PeriodSearch {
    /// 0.4 s to 8 s: heart rates of 60–150 bpm through slow breathing.
    fn default() -> Self {
        Self {
            min_s: 0.4,
            max_s: 8.0,
            threshold: PERIODICITY_THRESHOLD,
        }
    }
}

impl PeriodSearch {
    pub fn new(min_s: f64, max_s: f64) -> Self {
        Self {
            min_s,
            max_s,
            threshold: PERIODICITY_THRESHOLD,
        }
    }

    /// Shrinks `max_s` so the longest lag stays below half of a signal of
    /// `len` samples at `rate_hz`.
    pub fn clamped_to(&self, len: usize, rate_hz: f64) -> Result<Self> {
        let limit = (len as f64 / 2.0 - 2.0) / rate_hz;
        let max_s = self.max_s.min(limit);
        if !(self.min_s < max_s) {
            return Err(Error::PeriodRange(format!(
                "signal of {:.3} s is too short for a minimum period of {} s",
                len as f64 / rate_hz,
                self.min_s
            )));
        }
        Ok(Self { max_s, ..*self })
    }
}

/// Which representation of a signal the period is estimated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum PeriodMethod {
    /// Autocorrelation of the waveform itself.
    Waveform,
    /// Autocorrelation of the rectified, smoothed amplitude envelope. Needed
    /// for noise-like sources whose periodicity lives only in their
    /// amplitude modulation.
    #[default]
    Envelope,
}

/// Smoothing window of the amplitude envelope.
pub const ENVELOPE_WINDOW_S: f64 = 0.05;
/// Nominal sample rate of the decimated envelope.
pub const ENVELOPE_RATE_HZ: f64 = 200.0;

fn acf_raw(samples: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = samples.len();
    if max_lag >= n {
        return Err(Error::PeriodRange(format!(
            "max_lag {max_lag} must be below the signal length {n}"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in &mut buf {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let r0 = buf[0].re;
    let energy: f64 = samples.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(energy > 0.0) || !(r0 > 0.0) {
        return Err(Error::ConstantSignal("autocorrelation"));
    }
    Ok(buf[..=max_lag].iter().map(|c| c.re / r0).collect())
}

/// Biased sample autocorrelation of the de-meaned signal for lags
/// `0..=max_lag`, normalized so that `r(0) = 1`.
pub fn autocorrelation(sig: &Signal, max_lag: usize) -> Result<Vec<f64>> {
    acf_raw(sig.samples(), max_lag)
}

fn lag_bounds(len: usize, rate_hz: f64, search: &PeriodSearch) -> Result<(usize, usize)> {
    if !(search.min_s > 0.0 && search.min_s < search.max_s) {
        return Err(Error::PeriodRange(format!(
            "need 0 < min_s < max_s, got [{}, {}]",
            search.min_s, search.max_s
        )));
    }
    if !(search.max_s * rate_hz < len as f64 / 2.0) {
        return Err(Error::PeriodRange(format!(
            "max period {} s spans more than half of the {:.3} s signal",
            search.max_s,
            len as f64 / rate_hz
        )));
    }
    let lo = ((search.min_s * rate_hz).ceil() as usize).max(1);
    let hi = (search.max_s * rate_hz).floor() as usize;
    if lo > hi {
        return Err(Error::PeriodRange(format!(
            "no integer lag in [{}, {}] s at {rate_hz} Hz",
            search.min_s, search.max_s
        )));
    }
    Ok((lo, hi))
}

/// Core estimator over raw samples; `scale` converts the found lag into
/// samples of the caller's rate.
fn estimate_raw(
    samples: &[f64],
    rate_hz: f64,
    search: &PeriodSearch,
    scale: usize,
    original_rate_hz: f64,
) -> Result<PeriodEstimate> {
    let (lo, hi) = lag_bounds(samples.len(), rate_hz, search)?;
    let r = acf_raw(samples, hi + 1)?;

    let mut best: Option<usize> = None;
    for lag in lo..=hi {
        if r[lag] > r[lag - 1] && r[lag] > r[lag + 1] && best.is_none_or(|b| r[lag] > r[b]) {
            best = Some(lag);
        }
    }
    let (lag, found_peak) = match best {
        Some(lag) => (lag, true),
        None => {
            let lag = (lo..=hi)
                .max_by(|&a, &b| r[a].total_cmp(&r[b]).then(b.cmp(&a)))
                .expect("non-empty lag range");
            (lag, false)
        }
    };
    let peak_strength = r[lag].clamp(0.0, 1.0);
    let period_samples = lag * scale;
    Ok(PeriodEstimate {
        period_samples,
        period_seconds: period_samples as f64 / original_rate_hz,
        peak_strength,
        is_periodic: found_peak && peak_strength >= search.threshold,
    })
}

/// Highest strict local maximum of the autocorrelation within
/// `[min_s, max_s]`, using the default periodicity threshold.
pub fn estimate_period(sig: &Signal, min_s: f64, max_s: f64) -> Result<PeriodEstimate> {
    estimate_period_with(sig, &PeriodSearch::new(min_s, max_s))
}

pub fn estimate_period_with(sig: &Signal, search: &PeriodSearch) -> Result<PeriodEstimate> {
    let fs = f64::from(sig.sample_rate_hz());
    estimate_raw(sig.samples(), fs, search, 1, fs)
}

/// Rectified amplitude envelope smoothed over `window_s` and decimated by
/// `decimation`.
pub fn envelope(sig: &Signal, window_s: f64, decimation: usize) -> Vec<f64> {
    let x = sig.samples();
    let fs = f64::from(sig.sample_rate_hz());
    let half = (window_s * fs / 2.0).round() as usize;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for v in x {
        acc += v.abs();
        prefix.push(acc);
    }
    let step = decimation.max(1);
    (0..x.len())
        .step_by(step)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(x.len());
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Period of the amplitude envelope, reported in samples and seconds of the
/// input signal's rate.
pub fn estimate_envelope_period(sig: &Signal, search: &PeriodSearch) -> Result<PeriodEstimate> {
    let fs = f64::from(sig.sample_rate_hz());
    let decimation = ((fs / ENVELOPE_RATE_HZ).round() as usize).max(1);
    let env = envelope(sig, ENVELOPE_WINDOW_S, decimation);
    estimate_raw(&env, fs / decimation as f64, search, decimation, fs)
}

pub fn estimate_with_method(
    sig: &Signal,
    search: &PeriodSearch,
    method: PeriodMethod,
) -> Result<PeriodEstimate> {
    match method {
        PeriodMethod::Waveform => estimate_period_with(sig, search),
        PeriodMethod::Envelope => estimate_envelope_period(sig, search),
    }
}

/// Two signals ordered by estimated period, shortest first.
#[derive(Debug, Clone)]
pub struct PeriodOrdering {
    pub shorter: Signal,
    pub longer: Signal,
    pub shorter_period: PeriodEstimate,
    pub longer_period: PeriodEstimate,
    /// True when the second argument turned out to be the shorter one.
    pub swapped: bool,
}

/// Orders by period ascending; ties go to the higher peak strength, then to
/// a fixed comparison of the samples so that argument order never matters.
pub(crate) fn period_order(
    a: (&PeriodEstimate, &[f64]),
    b: (&PeriodEstimate, &[f64]),
) -> Ordering {
    a.0.period_samples
        .cmp(&b.0.period_samples)
        .then_with(|| b.0.peak_strength.total_cmp(&a.0.peak_strength))
        .then_with(|| {
            a.1.iter()
                .zip(b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

pub fn assign_by_period(
    out1: &Signal,
    out2: &Signal,
    search: &PeriodSearch,
    method: PeriodMethod,
) -> Result<PeriodOrdering> {
    out1.check_compatible(out2)?;
    let p1 = estimate_with_method(out1, search, method)?;
    let p2 = estimate_with_method(out2, search, method)?;
    let swapped = period_order((&p1, out1.samples()), (&p2, out2.samples())) == Ordering::Greater;
    Ok(if swapped {
        PeriodOrdering {
            shorter: out2.clone(),
            longer: out1.clone(),
            shorter_period: p2,
            longer_period: p1,
            swapped,
        }
    } else {
        PeriodOrdering {
            shorter: out1.clone(),
            longer: out2.clone(),
            shorter_period: p1,
            longer_period: p2,
            swapped,
        }
    })
}
