//! Flat `key = value` configuration files for [`PipelineConfig`].
//!
//! Blank lines and lines starting with `#` are ignored. Keys not present
//! keep their default values; unknown keys are an error.

use std::path::Path;

use crate::error::{Error, Result};
use crate::periodicity::PeriodMethod;
use crate::pipeline::{Mode, PipelineConfig};
use crate::preprocess::BandpassSpec;
use crate::signal::NmfConfig;

fn nmf_lines(prefix: &str, c: &NmfConfig, out: &mut String) {
    let mut kv = |k: &str, v: String| out.push_str(&format!("{prefix}.{k} = {v}\n"));
    kv("alpha", c.alpha.to_string());
    kv("num_layers", c.num_layers.to_string());
    kv("lambda1", c.lambda1.to_string());
    kv("lambda2", c.lambda2.to_string());
    kv("epsilon", format!("{:e}", c.epsilon));
    kv("max_iterations", c.max_iterations.to_string());
    kv("inner_rank", c.inner_rank.to_string());
    kv("seed", c.seed.to_string());
}

fn band_lines(prefix: &str, b: &BandpassSpec, out: &mut String) {
    let mut kv = |k: &str, v: f64| out.push_str(&format!("{prefix}.{k} = {v}\n"));
    kv("low_cut_hz", b.low_cut_hz);
    kv("high_cut_hz", b.high_cut_hz);
    kv("stopband_atten_db", b.stopband_atten_db);
    kv("transition_width_hz", b.transition_width_hz);
}

pub fn method_str(m: PeriodMethod) -> &'static str {
    match m {
        PeriodMethod::Waveform => "waveform",
        PeriodMethod::Envelope => "envelope",
    }
}

/// Renders every field; parsing the result gives back the same config.
pub fn to_text(c: &PipelineConfig) -> String {
    let mut out = String::from("# cardiosep pipeline configuration\n");
    nmf_lines("heart", &c.heart_nmf, &mut out);
    nmf_lines("lung", &c.lung_nmf, &mut out);
    band_lines("heart_band", &c.heart_band, &mut out);
    band_lines("lung_band", &c.lung_band, &mut out);
    out.push_str(&format!("period_search.min_s = {}\n", c.period_search.min_s));
    out.push_str(&format!("period_search.max_s = {}\n", c.period_search.max_s));
    out.push_str(&format!("period_search.threshold = {}\n", c.period_search.threshold));
    out.push_str(&format!("period_method = {}\n", method_str(c.period_method)));
    out.push_str(&format!("mode = {}\n", c.mode.as_str()));
    out.push_str(&format!("parallel = {}\n", c.parallel));
    out
}

fn set_nmf(c: &mut NmfConfig, field: &str, v: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
        v.parse().map_err(|_| format!("cannot parse {v:?}"))
    }
    match field {
        "alpha" => c.alpha = num(v)?,
        "num_layers" => c.num_layers = num(v)?,
        "lambda1" => c.lambda1 = num(v)?,
        "lambda2" => c.lambda2 = num(v)?,
        "epsilon" => c.epsilon = num(v)?,
        "max_iterations" => c.max_iterations = num(v)?,
        "inner_rank" => c.inner_rank = num(v)?,
        "seed" => c.seed = num(v)?,
        _ => return Err(format!("unknown field {field:?}")),
    }
    Ok(())
}

fn set_band(b: &mut BandpassSpec, field: &str, v: &str) -> std::result::Result<(), String> {
    let x: f64 = v.parse().map_err(|_| format!("cannot parse {v:?}"))?;
    match field {
        "low_cut_hz" => b.low_cut_hz = x,
        "high_cut_hz" => b.high_cut_hz = x,
        "stopband_atten_db" => b.stopband_atten_db = x,
        "transition_width_hz" => b.transition_width_hz = x,
        _ => return Err(format!("unknown field {field:?}")),
    }
    Ok(())
}

fn set(c: &mut PipelineConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    let float = |v: &str| v.parse::<f64>().map_err(|_| format!("cannot parse {v:?}"));
    if let Some((section, field)) = key.split_once('.') {
        return match section {
            "heart" => set_nmf(&mut c.heart_nmf, field, v),
            "lung" => set_nmf(&mut c.lung_nmf, field, v),
            "heart_band" => set_band(&mut c.heart_band, field, v),
            "lung_band" => set_band(&mut c.lung_band, field, v),
            "period_search" => {
                match field {
                    "min_s" => c.period_search.min_s = float(v)?,
                    "max_s" => c.period_search.max_s = float(v)?,
                    "threshold" => c.period_search.threshold = float(v)?,
                    _ => return Err(format!("unknown field {field:?}")),
                }
                Ok(())
            }
            _ => Err(format!("unknown section {section:?}")),
        };
    }
    match key {
        "mode" => c.mode = Mode::parse(v).ok_or_else(|| format!("unknown mode {v:?}"))?,
        "period_method" => {
            c.period_method = match v {
                "waveform" => PeriodMethod::Waveform,
                "envelope" => PeriodMethod::Envelope,
                _ => return Err(format!("unknown period method {v:?}")),
            }
        }
        "parallel" => c.parallel = v.parse().map_err(|_| format!("cannot parse {v:?}"))?,
        _ => return Err(format!("unknown key {key:?}")),
    }
    Ok(())
}

pub fn parse(text: &str) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
            line: i + 1,
            reason: "expected key = value".into(),
        })?;
        set(&mut c, k.trim(), v.trim()).map_err(|reason| Error::ConfigParse { line: i + 1, reason })?;
    }
    c.validate()?;
    Ok(c)
}

pub fn load(path: &Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}
