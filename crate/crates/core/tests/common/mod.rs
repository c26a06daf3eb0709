//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Generic α-divergence term with no special cases, valid for α ∉ {0, 1}
/// and strictly positive inputs.
pub fn alpha_div_generic(y: &[f64], z: &[f64], alpha: f64) -> f64 {
    y.iter()
        .zip(z)
        .map(|(&y, &z)| {
            (y.powf(alpha) * z.powf(1.0 - alpha) - alpha * y + (alpha - 1.0) * z)
                / (alpha * (alpha - 1.0))
        })
        .sum()
}

/// Biased, de-meaned autocorrelation by direct summation.
pub fn brute_acf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = d.iter().map(|v| v * v).sum();
    (0..=max_lag)
        .map(|k| (0..n - k).map(|i| d[i] * d[i + k]).sum::<f64>() / r0)
        .collect()
}

/// Solves `M c = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut c = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * c[k]).sum();
        c[row] = (b[row] - s) / m[row][row];
    }
    c
}

/// Least-squares projection of `e` onto the span of `basis` via the normal
/// equations.
pub fn lstsq_project(e: &[f64], basis: &[&[f64]]) -> Vec<f64> {
    if basis.is_empty() {
        return vec![0.0; e.len()];
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram: Vec<Vec<f64>> = basis
        .iter()
        .map(|a| basis.iter().map(|b| dot(a, b)).collect())
        .collect();
    let rhs: Vec<f64> = basis.iter().map(|a| dot(a, e)).collect();
    let c = solve(gram, rhs);
    let mut out = vec![0.0; e.len()];
    for (ci, b) in c.iter().zip(basis) {
        for (o, v) in out.iter_mut().zip(b.iter()) {
            *o += ci * v;
        }
    }
    out
}

pub struct OracleParts {
    pub s_target: Vec<f64>,
    pub e_interference: Vec<f64>,
    pub e_noise: Vec<f64>,
    pub e_artifact: Vec<f64>,
}

pub fn oracle_decompose(est: &[f64], refs: &[&[f64]], target: usize, noise: &[&[f64]]) -> OracleParts {
    let s_target = lstsq_project(est, &[refs[target]]);
    let p_refs = lstsq_project(est, refs);
    let all: Vec<&[f64]> = refs.iter().chain(noise).copied().collect();
    let p_all = lstsq_project(est, &all);
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    OracleParts {
        e_interference: sub(&p_refs, &s_target),
        e_noise: sub(&p_all, &p_refs),
        e_artifact: sub(est, &p_all),
        s_target,
    }
}

pub fn energy(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn db(num: f64, den: f64) -> f64 {
    10.0 * (num / den).log10()
}

/// Oracle (SDR, SIR, SAR).
pub fn oracle_scores(p: &OracleParts) -> (f64, f64, f64) {
    let st = energy(&p.s_target);
    let errs = add(&add(&p.e_interference, &p.e_noise), &p.e_artifact);
    let sdr = db(st, energy(&errs));
    let sir = db(st, energy(&p.e_interference));
    let num = add(&add(&p.s_target, &p.e_interference), &p.e_noise);
    let sar = db(energy(&num), energy(&p.e_artifact));
    (sdr, sir, sar)
}

/// Fraction of signal energy in `[lo, hi]` Hz from the magnitude spectrum.
pub fn band_energy_fraction(x: &[f64], rate: f64, lo: f64, hi: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    let mut band = 0.0;
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * rate / n as f64;
        let e = c.norm_sqr();
        total += e;
        if f >= lo && f <= hi {
            band += e;
        }
    }
    band / total
}

pub fn rms(x: &[f64]) -> f64 {
    (energy(x) / x.len() as f64).sqrt()
}

pub fn sine(freq: f64, rate: f64, n: usize, amp: f64) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate).sin())
        .collect()
}

pub fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn gaussian_like(seed: u64, n: usize) -> Vec<f64> {
    // Sum of four uniforms: zero mean, unit-ish variance, enough for tests.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>())
        .collect()
}

/// Impulse train with cycle lengths `period·(1 + u)`, `u` uniform in
/// `±jitter`; the first impulse is at sample `offset`.
pub fn impulse_train(period: f64, n: usize, jitter: f64, offset: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; n];
    let mut t = offset as f64;
    while (t.round() as usize) < n {
        x[t.round() as usize] = 1.0;
        let dev = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
        t += period * (1.0 + dev);
    }
    x
}

/// Sinusoid whose instantaneous cycle lengths are jittered by `±jitter`.
pub fn jittered_sine(period: f64, n: usize, jitter: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let phase0 = rng.random_range(0.0..1.0);
    let mut cycle = period;
    let mut phase = phase0;
    for _ in 0..n {
        out.push((2.0 * std::f64::consts::PI * phase).sin());
        phase += 1.0 / cycle;
        if phase >= 1.0 {
            phase -= 1.0;
            let dev = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
            cycle = period * (1.0 + dev);
        }
    }
    out
}
