use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cardiosep::pipeline::{prepare_case, PipelineConfig};
use cardiosep::report::{
    append_scores_csv, run_sweep, CaseFiles, Manifest, ManifestRecord, SweepGrid, MANIFEST_VERSION,
};
use cardiosep::synth::{gen_case_set, CASE_DURATION_S, DEFAULT_SAMPLE_RATE_HZ};
use cardiosep::wav::{read_wav, write_wav};
use cardiosep::{bss_eval, config, separate, SeparationResult, Signal};
use clap::{Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cardiosep", version, about = "Heart and lung sound separation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic cases: filtered sources, mixtures and a manifest.
    Synth {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Separate two mixtures into heart.wav, lung.wav and diagnostics.json.
    Separate {
        mix1: PathBuf,
        mix2: PathBuf,
        /// Flat key = value file; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate against reference sources.
    Evaluate {
        estimate: PathBuf,
        #[arg(long = "reference", required = true)]
        references: Vec<PathBuf>,
        /// Index of the target among the references.
        #[arg(long, default_value_t = 0)]
        target: usize,
        /// Scores CSV to append to.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        case_id: Option<String>,
        #[arg(long)]
        role: Option<String>,
    },
    /// Mean SIR over a grid of alpha and layer counts.
    Sweep {
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 0.5, 1.0, 2.0, 10.0])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4])]
        layers: Vec<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run cases one at a time.
        #[arg(long)]
        serial: bool,
        /// Output CSV.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => config::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes all files into a scratch directory next to their destination and
/// moves them into place only once every write has succeeded.
fn write_all_or_nothing(out: &Path, files: Vec<(&str, Box<dyn FnOnce(&Path) -> Result<()>>)>) -> Result<()> {
    create_dir(out)?;
    let scratch = tempfile::Builder::new()
        .prefix(".cardiosep-")
        .tempdir_in(out)
        .with_context(|| format!("creating scratch directory in {}", out.display()))?;
    let mut names = Vec::new();
    for (name, write) in files {
        write(&scratch.path().join(name))?;
        names.push(name);
    }
    for name in names {
        let dest = out.join(name);
        fs::rename(scratch.path().join(name), &dest)
            .with_context(|| format!("moving output to {}", dest.display()))?;
    }
    Ok(())
}

fn cmd_synth(cases: usize, seed: u64, out: &Path) -> Result<()> {
    let specs = gen_case_set(cases, seed)?;
    let config = PipelineConfig::default();
    create_dir(out)?;
    let mut records = Vec::with_capacity(specs.len());
    for spec in &specs {
        let case = spec.generate()?;
        let p = prepare_case(&case, &config)?;
        let peak = [&p.heart_ref, &p.lung_ref, &p.mix1, &p.mix2]
            .iter()
            .map(|s| s.peak())
            .fold(0.0, f64::max);
        let scale = 0.99 / peak;
        let dir = format!("case_{:03}", spec.id);
        create_dir(&out.join(&dir))?;
        let files = CaseFiles {
            heart: Path::new(&dir).join("heart.wav"),
            lung: Path::new(&dir).join("lung.wav"),
            mix1: Path::new(&dir).join("mix1.wav"),
            mix2: Path::new(&dir).join("mix2.wav"),
        };
        for (sig, rel) in [
            (&p.heart_ref, &files.heart),
            (&p.lung_ref, &files.lung),
            (&p.mix1, &files.mix1),
            (&p.mix2, &files.mix2),
        ] {
            write_wav(&out.join(rel), &sig.map(|v| v * scale)?)?;
        }
        records.push(ManifestRecord::new(spec, scale, files));
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        base_seed: seed,
        sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
        duration_s: CASE_DURATION_S,
        cases: records,
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {} cases to {}", cases, out.display());
    Ok(())
}

fn diagnostics(result: &SeparationResult, config: &PipelineConfig) -> serde_json::Value {
    json!({
        "heart_period_s": result.heart_period_s,
        "lung_period_s": result.lung_period_s,
        "roles_swapped": result.roles_swapped,
        "degenerate": result.degenerate,
        "heart": result.heart_diag,
        "lung": result.lung_diag,
        "config": config,
    })
}

fn cmd_separate(mix1: &Path, mix2: &Path, config_path: Option<&Path>, out: &Path) -> Result<()> {
    let config = load_config(config_path)?;
    let m1 = read_wav(mix1)?;
    let m2 = read_wav(mix2)?;
    let result = separate(&m1, &m2, &config)?;
    let diag = serde_json::to_string_pretty(&diagnostics(&result, &config))? + "\n";
    let (heart, lung) = (result.heart_estimate.clone(), result.lung_estimate.clone());
    write_all_or_nothing(
        out,
        vec![
            ("heart.wav", Box::new(move |p: &Path| Ok(write_wav(p, &heart)?))),
            ("lung.wav", Box::new(move |p: &Path| Ok(write_wav(p, &lung)?))),
            (
                "diagnostics.json",
                Box::new(move |p: &Path| {
                    fs::write(p, diag).with_context(|| format!("writing {}", p.display()))
                }),
            ),
        ],
    )?;
    println!(
        "heart period {:.3} s, lung period {:.3} s",
        result.heart_period_s, result.lung_period_s
    );
    if result.degenerate {
        eprintln!("warning: both estimates have the same period; the separation is degenerate");
    }
    Ok(())
}

fn cmd_evaluate(
    estimate: &Path,
    references: &[PathBuf],
    target: usize,
    csv: Option<&Path>,
    case_id: Option<String>,
    role: Option<String>,
) -> Result<()> {
    let est = read_wav(estimate)?;
    let refs = references
        .iter()
        .map(|p| read_wav(p))
        .collect::<cardiosep::Result<Vec<Signal>>>()?;
    let scores = bss_eval::evaluate(&est, &refs, target)?;
    println!("SDR: {}", scores.sdr_db);
    println!("SIR: {}", scores.sir_db);
    println!("SAR: {}", scores.sar_db);
    if let Some(csv) = csv {
        let case_id = case_id.unwrap_or_else(|| {
            estimate
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned())
        });
        let role = role.unwrap_or_else(|| match target {
            0 => "heart".into(),
            1 => "lung".into(),
            k => format!("source{k}"),
        });
        append_scores_csv(csv, &case_id, &role, &scores)?;
    }
    Ok(())
}

fn cmd_sweep(grid: SweepGrid, seed: u64, config_path: Option<&Path>, serial: bool, out: &Path) -> Result<()> {
    if grid.alphas.iter().any(|a| !a.is_finite() || *a == 0.0) {
        bail!("sweep alphas must be finite and nonzero");
    }
    let config = load_config(config_path)?;
    let report = run_sweep(&grid, seed, &config, !serial)?;
    fs::write(out, report.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    for (role, best) in [("heart", report.best_heart()), ("lung", report.best_lung())] {
        match best {
            Some(c) => println!(
                "best {role}: alpha {} layers {} mean SIR {:.4} dB over {} cases",
                c.alpha,
                c.layers,
                c.mean_sir_db.unwrap_or(f64::NAN),
                c.n_ok
            ),
            None => println!("best {role}: no cell produced a finite score"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { cases, seed, out } => cmd_synth(cases, seed, &out),
        Command::Separate {
            mix1,
            mix2,
            config,
            out,
        } => cmd_separate(&mix1, &mix2, config.as_deref(), &out),
        Command::Evaluate {
            estimate,
            references,
            target,
            csv,
            case_id,
            role,
        } => cmd_evaluate(&estimate, &references, target, csv.as_deref(), case_id, role),
        Command::Sweep {
            cases,
            seed,
            alphas,
            layers,
            config,
            serial,
            out,
        } => cmd_sweep(
            SweepGrid {
                alphas,
                layer_counts: layers,
                n_cases: cases,
            },
            seed,
            config.as_deref(),
            serial,
            &out,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
