//! Flat `key = value` configuration files with `[section]` headers, plus the
//! embedded defaults.

use std::path::Path;
use std::str::FromStr;

use crate::beamformer::Variant;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, RunDefaults, SweepKind};

/// The default configuration, printable via `--print-config`.
pub fn default_config() -> ExperimentConfig {
    ExperimentConfig {
        kind: SweepKind::Isnr,
        values: vec![-20.0, -10.0, 0.0],
        runs: 20,
        variants: vec![Variant::MWF, Variant::CMWF],
        seed: 1,
        defaults: RunDefaults::default(),
        parallel_runs: true,
    }
}

/// Render a configuration in the accepted file format.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let d = &cfg.defaults;
    let values = cfg
        .values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let variants = cfg
        .variants
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "# cyclobeam sweep configuration\n\
         [sweep]\n\
         kind = {}\n\
         values = {}\n\
         runs = {}\n\
         variants = {}\n\
         seed = {}\n\
         parallel = {}\n\
         \n\
         [stft]\n\
         fs = {}\n\
         k = {}\n\
         r = {}\n\
         \n\
         [beamformer]\n\
         shifts = {}\n\
         eps_bin = {}\n\
         lambda_min = {:e}\n\
         lambda_max = {:e}\n\
         beta = {}\n\
         d0 = {}\n\
         d1 = {}\n\
         burn_in = {}\n\
         reset_on_retune = {}\n\
         \n\
         [scene]\n\
         mics = {}\n\
         duration_s = {}\n\
         isnr_db = {}\n\
         sensor_snr_db = {}\n\
         rt60_s = {}\n\
         mic_spacing_m = {}\n\
         source_distance_m = {}\n\
         noise_only_s = {}\n\
         track_f0 = {}\n\
         note_s = {}\n\
         note_gap_s = {}\n",
        cfg.kind,
        values,
        cfg.runs,
        variants,
        cfg.seed,
        cfg.parallel_runs,
        d.fs,
        d.k,
        d.r,
        d.shifts,
        d.eps_bin,
        d.loading.lambda_min,
        d.loading.lambda_max,
        d.beta,
        d.d0,
        d.d1,
        d.burn_in,
        d.reset_on_retune,
        d.mics,
        d.duration_s,
        d.isnr_db,
        d.sensor_snr_db,
        d.rt60_s,
        d.mic_spacing_m,
        d.source_distance_m,
        d.noise_only_s,
        d.track_f0,
        d.note_s,
        d.note_gap_s,
    )
}

/// Parse configuration text; unknown keys are rejected with their line
/// number. Missing keys keep their defaults.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let mut cfg = default_config();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::ConfigParse {
                path: origin.into(),
                line: idx + 1,
                msg: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
            path: origin.into(),
            line: idx + 1,
            msg: "expected 'key = value'".into(),
        })?;
        let key = key.trim();
        let value = value.trim();
        apply_key(&mut cfg, &section, key, value).map_err(|msg| Error::ConfigParse {
            path: origin.into(),
            line: idx + 1,
            msg,
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

fn apply_key(
    cfg: &mut ExperimentConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    let parse_f64 = |v: &str| v.parse::<f64>().map_err(|e| format!("bad number: {e}"));
    let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| format!("bad integer: {e}"));
    let parse_bool = |v: &str| match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("bad bool '{other}'")),
    };
    let d = &mut cfg.defaults;
    match (section, key) {
        ("sweep", "kind") => cfg.kind = SweepKind::from_str(value).map_err(|e| e.to_string())?,
        ("sweep", "values") => {
            cfg.values = value
                .split(',')
                .map(|v| parse_f64(v.trim()))
                .collect::<std::result::Result<_, _>>()?;
        }
        ("sweep", "runs") => cfg.runs = parse_usize(value)?,
        ("sweep", "variants") => {
            cfg.variants = value
                .split(',')
                .map(|v| Variant::from_str(v.trim()).map_err(|e| e.to_string()))
                .collect::<std::result::Result<_, _>>()?;
        }
        ("sweep", "seed") => cfg.seed = value.parse().map_err(|e| format!("bad seed: {e}"))?,
        ("sweep", "parallel") => cfg.parallel_runs = parse_bool(value)?,
        ("stft", "fs") => d.fs = parse_f64(value)?,
        ("stft", "k") => d.k = parse_usize(value)?,
        ("stft", "r") => d.r = parse_usize(value)?,
        ("beamformer", "shifts") => d.shifts = parse_usize(value)?,
        ("beamformer", "eps_bin") => d.eps_bin = parse_f64(value)?,
        ("beamformer", "lambda_min") => d.loading.lambda_min = parse_f64(value)?,
        ("beamformer", "lambda_max") => d.loading.lambda_max = parse_f64(value)?,
        ("beamformer", "beta") => d.beta = parse_f64(value)?,
        ("beamformer", "d0") => d.d0 = parse_f64(value)?,
        ("beamformer", "d1") => d.d1 = parse_f64(value)?,
        ("beamformer", "burn_in") => d.burn_in = parse_usize(value)?,
        ("beamformer", "reset_on_retune") => d.reset_on_retune = parse_bool(value)?,
        ("scene", "mics") => d.mics = parse_usize(value)?,
        ("scene", "duration_s") => d.duration_s = parse_f64(value)?,
        ("scene", "isnr_db") => d.isnr_db = parse_f64(value)?,
        ("scene", "sensor_snr_db") => d.sensor_snr_db = parse_f64(value)?,
        ("scene", "rt60_s") => d.rt60_s = parse_f64(value)?,
        ("scene", "mic_spacing_m") => d.mic_spacing_m = parse_f64(value)?,
        ("scene", "source_distance_m") => d.source_distance_m = parse_f64(value)?,
        ("scene", "noise_only_s") => d.noise_only_s = parse_f64(value)?,
        ("scene", "track_f0") => d.track_f0 = parse_bool(value)?,
        ("scene", "note_s") => d.note_s = parse_f64(value)?,
        ("scene", "note_gap_s") => d.note_gap_s = parse_f64(value)?,
        _ => return Err(format!("unknown key '{key}' in section '[{section}]'")),
    }
    Ok(())
}
