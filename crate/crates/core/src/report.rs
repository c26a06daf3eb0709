//! Machine-readable outputs: the scores CSV, the synthetic-case manifest and
//! the parameter sweep.
//!
//! Scores CSV columns: `case_id,source_role,sdr_db,sir_db,sar_db`.
//! Infinite scores are written as `inf`, undefined ones as `invalid`.
//!
//! Sweep CSV: one row per alpha, one column per (layers, role) pair named
//! `L{layers}_{role}`. Cells hold the mean SIR in dB over the cases that
//! produced a finite score; empty cells mean no case did. The best cell of
//! each role carries a trailing `*`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{prepare_case, separate, PipelineConfig};
use crate::bss_eval;
use crate::signal::BssScores;
use crate::synth::{gen_case_set, CaseSpec, MixingMatrix};

pub const SCORES_HEADER: &str = "case_id,source_role,sdr_db,sir_db,sar_db";
pub const MANIFEST_VERSION: u32 = 1;

pub fn scores_row(case_id: &str, role: &str, s: &BssScores) -> String {
    format!("{case_id},{role},{},{},{}", s.sdr_db, s.sir_db, s.sar_db)
}

/// Appends one row, writing the header first when the file is new or empty.
pub fn append_scores_csv(path: &Path, case_id: &str, role: &str, s: &BssScores) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = f.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut text = String::new();
    if empty {
        text.push_str(SCORES_HEADER);
        text.push('\n');
    }
    text.push_str(&scores_row(case_id, role, s));
    text.push('\n');
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFiles {
    pub heart: PathBuf,
    pub lung: PathBuf,
    pub mix1: PathBuf,
    pub mix2: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: usize,
    pub heart_seed: u64,
    pub lung_seed: u64,
    pub heart_period_s: f64,
    pub lung_period_s: f64,
    pub heart_jitter_pct: f64,
    pub lung_jitter_pct: f64,
    pub mixing: MixingMatrix,
    pub gain_lung: f64,
    /// Common factor applied to all four files of the case so that none
    /// clips.
    pub scale: f64,
    /// Paths relative to the manifest's directory.
    pub files: CaseFiles,
}

impl ManifestRecord {
    pub fn new(spec: &CaseSpec, scale: f64, files: CaseFiles) -> Self {
        Self {
            id: spec.id,
            heart_seed: spec.heart.seed,
            lung_seed: spec.lung.seed,
            heart_period_s: spec.heart.period_s,
            lung_period_s: spec.lung.period_s,
            heart_jitter_pct: spec.heart.jitter_pct,
            lung_jitter_pct: spec.lung.jitter_pct,
            mixing: spec.mixing,
            gain_lung: spec.gain_lung,
            scale,
            files,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub base_seed: u64,
    pub sample_rate_hz: u32,
    pub duration_s: f64,
    pub cases: Vec<ManifestRecord>,
}

/// Parameter grid of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub layer_counts: Vec<usize>,
    pub n_cases: usize,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            alphas: vec![-1.0, 0.5, 1.0, 2.0, 10.0],
            layer_counts: vec![1, 2, 3, 4],
            n_cases: 100,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.layer_counts.is_empty() || self.n_cases == 0 {
            return Err(Error::InvalidConfig(
                "sweep needs at least one alpha, one layer count and one case".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepCell {
    pub alpha: f64,
    pub layers: usize,
    /// Mean SIR over `n_ok` cases; `None` when no case gave a finite score.
    pub mean_sir_db: Option<f64>,
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub grid: SweepGrid,
    /// Row-major over (alpha, layers).
    pub heart: Vec<SweepCell>,
    pub lung: Vec<SweepCell>,
}

fn argmax(cells: &[SweepCell]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        if let Some(v) = c.mean_sir_db {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

impl SweepReport {
    pub fn best_heart(&self) -> Option<&SweepCell> {
        argmax(&self.heart).map(|i| &self.heart[i])
    }

    pub fn best_lung(&self) -> Option<&SweepCell> {
        argmax(&self.lung).map(|i| &self.lung[i])
    }

    pub fn to_csv(&self) -> String {
        let nl = self.grid.layer_counts.len();
        let (bh, bl) = (argmax(&self.heart), argmax(&self.lung));
        let mut out = String::from("alpha");
        for l in &self.grid.layer_counts {
            out.push_str(&format!(",L{l}_heart,L{l}_lung"));
        }
        out.push('\n');
        for (ai, a) in self.grid.alphas.iter().enumerate() {
            out.push_str(&a.to_string());
            for li in 0..nl {
                let k = ai * nl + li;
                for (cells, best) in [(&self.heart, bh), (&self.lung, bl)] {
                    out.push(',');
                    if let Some(v) = cells[k].mean_sir_db {
                        out.push_str(&format!("{v:.4}"));
                        if best == Some(k) {
                            out.push('*');
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-case SIR pairs (heart, lung) for every grid cell; `None` marks a
/// failed or non-finite run.
fn sweep_case(
    spec: &CaseSpec,
    grid: &SweepGrid,
    base: &PipelineConfig,
) -> Vec<(Option<f64>, Option<f64>)> {
    let cells = grid.alphas.len() * grid.layer_counts.len();
    let prepared = match spec.generate().and_then(|c| prepare_case(&c, base)) {
        Ok(p) => p,
        Err(_) => return vec![(None, None); cells],
    };
    let refs = [prepared.heart_ref.clone(), prepared.lung_ref.clone()];
    let finite = |s: Result<BssScores>| s.ok().and_then(|s| s.sir_db.finite());
    let mut out = Vec::with_capacity(cells);
    for &alpha in &grid.alphas {
        for &layers in &grid.layer_counts {
            let mut cfg = base.clone();
            for nmf in [&mut cfg.heart_nmf, &mut cfg.lung_nmf] {
                nmf.alpha = alpha;
                nmf.num_layers = layers;
            }
            cfg.parallel = false;
            match separate(&prepared.mix1, &prepared.mix2, &cfg) {
                Ok(r) => out.push((
                    finite(bss_eval::evaluate(&r.heart_estimate, &refs, 0)),
                    finite(bss_eval::evaluate(&r.lung_estimate, &refs, 1)),
                )),
                Err(_) => out.push((None, None)),
            }
        }
    }
    out
}

/// Runs every grid cell on the same `n_cases` synthetic cases. Cases run in
/// parallel when `parallel` is set; the report is identical either way.
pub fn run_sweep(grid: &SweepGrid, seed: u64, base: &PipelineConfig, parallel: bool) -> Result<SweepReport> {
    grid.validate()?;
    let specs = gen_case_set(grid.n_cases, seed)?;
    let per_case: Vec<Vec<(Option<f64>, Option<f64>)>> = if parallel {
        specs.par_iter().map(|s| sweep_case(s, grid, base)).collect()
    } else {
        specs.iter().map(|s| sweep_case(s, grid, base)).collect()
    };
    let mut heart = Vec::new();
    let mut lung = Vec::new();
    let mut k = 0;
    for &alpha in &grid.alphas {
        for &layers in &grid.layer_counts {
            let cell = |pick: fn(&(Option<f64>, Option<f64>)) -> Option<f64>| {
                let vals: Vec<f64> = per_case.iter().filter_map(|c| pick(&c[k])).collect();
                SweepCell {
                    alpha,
                    layers,
                    mean_sir_db: (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64),
                    n_ok: vals.len(),
                }
            };
            heart.push(cell(|c| c.0));
            lung.push(cell(|c| c.1));
            k += 1;
        }
    }
    Ok(SweepReport {
        grid: grid.clone(),
        heart,
        lung,
    })
}
