//! Monte Carlo experiment driver: scene synthesis, per-variant enhancement,
//! SI-SDR scoring, CSV persistence, and summary statistics.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::AudioBuffer;
use crate::beamformer::{
    recursive_enhance, BatchPipeline, EnhanceConfig, EnhanceOutput, Variant,
};
use crate::error::{Error, Result};
use crate::linalg::LoadingBounds;
use crate::metrics::si_sdr;
use crate::pitch::{track_pitch, PitchTrack, SmoothingParams};
use crate::rng::{mix_seed, uniform};
use crate::scene::{
    gen_harmonic_target, gen_rir, gen_two_note_target, mic_delays, mix_scene,
    HarmonicSourceParams, RirSpec, SceneConfig, SceneMix,
};
use crate::stft::{frame_count, WindowSpec};

/// Which parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Interferer SNR at the reference microphone, dB.
    Isnr,
    /// Number of frequency shifts `C`.
    ShiftsC,
    /// Number of microphones `M`.
    MicsM,
    /// Relative bias applied to the known fundamental, percent.
    F0Bias,
    /// Recursive two-note smoke runs over interferer SNR.
    RecursiveSmoke,
}

impl SweepKind {
    pub fn name(&self) -> &'static str {
        match self {
            SweepKind::Isnr => "isnr",
            SweepKind::ShiftsC => "shifts_c",
            SweepKind::MicsM => "mics_m",
            SweepKind::F0Bias => "f0_bias",
            SweepKind::RecursiveSmoke => "recursive_smoke",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "isnr" => Ok(SweepKind::Isnr),
            "shifts_c" => Ok(SweepKind::ShiftsC),
            "mics_m" => Ok(SweepKind::MicsM),
            "f0_bias" => Ok(SweepKind::F0Bias),
            "recursive_smoke" => Ok(SweepKind::RecursiveSmoke),
            _ => Err(Error::InvalidConfig(format!("unknown sweep kind '{s}'"))),
        }
    }
}

/// Fixed parameters shared by every run of a sweep.
#[derive(Debug, Clone)]
pub struct RunDefaults {
    pub fs: f64,
    pub k: usize,
    pub r: usize,
    pub mics: usize,
    pub shifts: usize,
    pub eps_bin: f64,
    pub loading: LoadingBounds,
    pub beta: f64,
    pub d0: f64,
    pub d1: f64,
    pub burn_in: usize,
    pub duration_s: f64,
    pub isnr_db: f64,
    pub sensor_snr_db: f64,
    pub rt60_s: f64,
    pub mic_spacing_m: f64,
    pub source_distance_m: f64,
    pub noise_only_s: f64,
    /// Estimate the fundamental from the clean target instead of using the
    /// generator's ground truth.
    pub track_f0: bool,
    /// Reset running covariances when the smoothed fundamental changes
    /// (recursive mode).
    pub reset_on_retune: bool,
    /// Note length for the recursive smoke sweep, seconds.
    pub note_s: f64,
    /// Silence between the two notes, seconds.
    pub note_gap_s: f64,
}

impl Default for RunDefaults {
    fn default() -> Self {
        Self {
            fs: 16_000.0,
            k: 512,
            r: 128,
            mics: 2,
            shifts: 5,
            eps_bin: 1.5,
            loading: LoadingBounds::default(),
            beta: 0.05,
            d0: 0.005,
            d1: 0.2,
            burn_in: 10,
            duration_s: 5.0,
            isnr_db: -10.0,
            sensor_snr_db: 30.0,
            rt60_s: 0.61,
            mic_spacing_m: 0.08,
            source_distance_m: 2.0,
            noise_only_s: 2.0,
            track_f0: false,
            reset_on_retune: false,
            note_s: 1.0,
            note_gap_s: 0.032,
        }
    }
}

impl RunDefaults {
    pub fn enhance_config(&self) -> Result<EnhanceConfig> {
        Ok(EnhanceConfig {
            win: WindowSpec::sqrt_hann(self.k, self.r)?,
            shifts: self.shifts,
            eps_bin: self.eps_bin,
            loading: self.loading,
            beta: self.beta,
            smoothing: SmoothingParams {
                d0: self.d0,
                d1: self.d1,
                ..SmoothingParams::default()
            },
            burn_in: self.burn_in,
            reset_on_retune: self.reset_on_retune,
            min_noise_s: self.noise_only_s.min(2.0),
            ..EnhanceConfig::default()
        })
    }
}

/// A full sweep specification.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: SweepKind,
    pub values: Vec<f64>,
    pub runs: usize,
    pub variants: Vec<Variant>,
    pub seed: u64,
    pub defaults: RunDefaults,
    /// Run Monte Carlo iterations on the thread pool. Results are identical
    /// either way; disable to bound peak memory on large stacks.
    pub parallel_runs: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be >= 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::InvalidConfig("sweep values must be non-empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::InvalidConfig("variant list must be non-empty".into()));
        }
        Ok(())
    }
}

/// One scored enhancement run.
#[derive(Debug, Clone)]
pub struct ResultRecord {
    pub sweep: String,
    pub value: f64,
    pub run: usize,
    pub variant: String,
    pub si_sdr_in_db: f64,
    pub si_sdr_out_db: f64,
    pub improvement_db: f64,
    pub wall_ms: f64,
    pub status: String,
}

impl ResultRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(sweep: &str, value: f64, run: usize, variant: &str, err: &Error) -> Self {
        Self {
            sweep: sweep.into(),
            value,
            run,
            variant: variant.into(),
            si_sdr_in_db: f64::NAN,
            si_sdr_out_db: f64::NAN,
            improvement_db: f64::NAN,
            wall_ms: 0.0,
            status: format!("error: {err}"),
        }
    }
}

pub const CSV_HEADER: &str =
    "sweep,value,run,variant,si_sdr_in_db,si_sdr_out_db,improvement_db,wall_ms,status";

pub fn write_csv<P: AsRef<Path>>(records: &[ResultRecord], path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{:.9},{:.9},{:.9},{:.3},{}",
            r.sweep,
            r.value,
            r.run,
            r.variant,
            r.si_sdr_in_db,
            r.si_sdr_out_db,
            r.improvement_db,
            r.wall_ms,
            r.status.replace(',', ";")
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedCsv("empty file".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::MalformedCsv(format!("unexpected header '{header}'")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.splitn(9, ',').collect();
        if fields.len() != 9 {
            return Err(Error::MalformedCsv(format!(
                "line {}: expected 9 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::MalformedCsv(format!("line {}: {e}", i + 2)))
        };
        out.push(ResultRecord {
            sweep: fields[0].into(),
            value: parse(fields[1])?,
            run: fields[2]
                .parse()
                .map_err(|e| Error::MalformedCsv(format!("line {}: {e}", i + 2)))?,
            variant: fields[3].into(),
            si_sdr_in_db: parse(fields[4])?,
            si_sdr_out_db: parse(fields[5])?,
            improvement_db: parse(fields[6])?,
            wall_ms: parse(fields[7])?,
            status: fields[8].into(),
        });
    }
    Ok(out)
}

/// Mean and 95% confidence half-width of one sweep cell.
#[derive(Debug, Clone)]
pub struct SummaryCell {
    pub value: f64,
    pub variant: String,
    pub n: usize,
    pub mean: f64,
    pub ci95: f64,
}

/// Two-sided 95% Student-t critical value.
pub fn student_t_95(df: usize) -> f64 {
    const TABLE: [(usize, f64); 22] = [
        (1, 12.706),
        (2, 4.303),
        (3, 3.182),
        (4, 2.776),
        (5, 2.571),
        (6, 2.447),
        (7, 2.365),
        (8, 2.306),
        (9, 2.262),
        (10, 2.228),
        (12, 2.179),
        (14, 2.145),
        (16, 2.120),
        (18, 2.101),
        (20, 2.086),
        (25, 2.060),
        (30, 2.042),
        (40, 2.021),
        (50, 2.009),
        (60, 2.000),
        (100, 1.984),
        (120, 1.980),
    ];
    if df == 0 {
        return f64::INFINITY;
    }
    for w in TABLE.windows(2) {
        let (d0, t0) = w[0];
        let (d1, t1) = w[1];
        if df == d0 {
            return t0;
        }
        if df < d1 {
            // linear interpolation is plenty for CI shading
            let frac = (df - d0) as f64 / (d1 - d0) as f64;
            return t0 + frac * (t1 - t0);
        }
    }
    1.96
}

/// Mean and t-based 95% CI per `(value, variant)` cell, skipping failed rows.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryCell> {
    let mut cells: Vec<SummaryCell> = Vec::new();
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in records {
        let key = (r.value, r.variant.clone());
        if !keys.iter().any(|k| k.0 == key.0 && k.1 == key.1) {
            keys.push(key);
        }
    }
    for (value, variant) in keys {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.value == value && r.variant == variant && r.is_ok())
            .map(|r| r.improvement_db)
            .collect();
        let n = vals.len();
        if n == 0 {
            continue;
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let ci95 = if n > 1 {
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            student_t_95(n - 1) * (var / n as f64).sqrt()
        } else {
            f64::INFINITY
        };
        cells.push(SummaryCell {
            value,
            variant,
            n,
            mean,
            ci95,
        });
    }
    cells
}

/// Geometry plus audio of one synthesized run.
pub struct RunScene {
    pub mix: SceneMix,
    pub f0_hz: f64,
    /// Ground truth fundamentals per note (one entry for single-note scenes).
    pub note_f0s: Vec<f64>,
    pub dry: AudioBuffer,
}

/// Synthesize the scene for one Monte Carlo run. Angles of the target and
/// interferer are drawn per run; the interferer keeps at least 15 degrees of
/// separation.
pub fn build_scene(
    two_note: bool,
    mics: usize,
    isnr_db: f64,
    defaults: &RunDefaults,
    seed: u64,
) -> Result<RunScene> {
    let fs = defaults.fs;
    let params = HarmonicSourceParams::default();
    let (dry, note_f0s) = if two_note {
        let note_len = (defaults.note_s * fs).round() as usize;
        let gap = (defaults.note_gap_s * fs).round() as usize;
        let (audio, truths) =
            gen_two_note_target(&params, fs, note_len, gap, mix_seed(seed, &[1]))?;
        (audio, vec![truths[0].f0_hz, truths[1].f0_hz])
    } else {
        let n = (defaults.duration_s * fs).round() as usize;
        let (audio, truth) = gen_harmonic_target(&params, fs, n, mix_seed(seed, &[1]))?;
        (audio, vec![truth.f0_hz])
    };

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[2]));
    let target_angle = uniform(&mut rng, -1.3, 1.3);
    let interferer_angle = loop {
        let a = uniform(&mut rng, -1.3, 1.3);
        if (a - target_angle).abs() > 0.26 {
            break a;
        }
    };
    let delays_t = mic_delays(
        target_angle,
        defaults.source_distance_m,
        mics,
        defaults.mic_spacing_m,
        fs,
    );
    let delays_i = mic_delays(
        interferer_angle,
        defaults.source_distance_m,
        mics,
        defaults.mic_spacing_m,
        fs,
    );
    let rir_t = gen_rir(
        &RirSpec::synthetic(defaults.rt60_s, delays_t),
        mics,
        fs,
        mix_seed(seed, &[3]),
    )?;
    let rir_i = gen_rir(
        &RirSpec::synthetic(defaults.rt60_s, delays_i),
        mics,
        fs,
        mix_seed(seed, &[4]),
    )?;
    let scene_cfg = SceneConfig {
        mics,
        isnr_db,
        sensor_snr_db: defaults.sensor_snr_db,
        fs,
        noise_only_len: (defaults.noise_only_s * fs).round() as usize,
    };
    let mix = mix_scene(&dry, &scene_cfg, &rir_t, &rir_i, mix_seed(seed, &[5]))?;
    let f0_hz = note_f0s[0];
    Ok(RunScene {
        mix,
        f0_hz,
        note_f0s,
        dry,
    })
}

/// Interior interval used for scoring: one window length trimmed from each
/// edge.
pub fn score_interval(n: usize, k: usize) -> (usize, usize) {
    (k.min(n / 4), n - k.min(n / 4))
}

fn score(
    enhanced: &AudioBuffer,
    reference: &AudioBuffer,
    k: usize,
) -> Result<(f64, f64)> {
    let n = enhanced.len().min(reference.len());
    let (lo, hi) = score_interval(n, k);
    let out = si_sdr(
        &enhanced.channel(0)[lo..hi],
        &reference.channel(0)[lo..hi],
    )?;
    Ok((out, 0.0))
}

fn effective_f0(scene: &RunScene, defaults: &RunDefaults, cfg: &EnhanceConfig) -> Result<f64> {
    if !defaults.track_f0 {
        return Ok(scene.f0_hz);
    }
    let n_frames = frame_count(scene.dry.len(), defaults.k, defaults.r)?;
    let track = track_pitch(
        scene.dry.channel(0),
        defaults.fs,
        defaults.r,
        n_frames,
        cfg.pitch_window,
        &cfg.grid,
        cfg.max_order,
        &cfg.smoothing,
    )?;
    Ok(track.median_voiced_f0_hz())
}

fn pitch_track_for(scene: &RunScene, defaults: &RunDefaults, cfg: &EnhanceConfig) -> Result<PitchTrack> {
    let n_frames = frame_count(scene.dry.len(), defaults.k, defaults.r)?;
    track_pitch(
        scene.dry.channel(0),
        defaults.fs,
        defaults.r,
        n_frames,
        cfg.pitch_window,
        &cfg.grid,
        cfg.max_order,
        &cfg.smoothing,
    )
}

/// Run every variant on one synthesized scene and score the results.
fn run_cell(config: &ExperimentConfig, value: f64, run: usize) -> Vec<ResultRecord> {
    let kind = config.kind;
    let sweep_name = kind.name();
    let d = &config.defaults;
    let seed = mix_seed(config.seed, &[kind as u64 as u64, value.to_bits(), run as u64]);

    let mut defaults = d.clone();
    let mut isnr_db = d.isnr_db;
    let mut f0_bias_pct = 0.0;
    let mut mics = d.mics;
    match kind {
        SweepKind::Isnr | SweepKind::RecursiveSmoke => isnr_db = value,
        SweepKind::ShiftsC => defaults.shifts = value.round() as usize,
        SweepKind::MicsM => mics = value.round() as usize,
        SweepKind::F0Bias => f0_bias_pct = value,
    }
    defaults.mics = mics;

    let build = || -> Result<(RunScene, EnhanceConfig)> {
        let cfg = defaults.enhance_config()?;
        let scene = build_scene(
            kind == SweepKind::RecursiveSmoke,
            mics,
            isnr_db,
            &defaults,
            seed,
        )?;
        Ok((scene, cfg))
    };
    let (scene, cfg) = match build() {
        Ok(pair) => pair,
        Err(e) => {
            return config
                .variants
                .iter()
                .map(|v| ResultRecord::failed(sweep_name, value, run, &v.to_string(), &e))
                .collect()
        }
    };

    let reference = scene.mix.target.mono(0);
    let (lo, hi) = score_interval(reference.len(), d.k);
    let si_in = si_sdr(
        &scene.mix.noisy.channel(0)[lo..hi],
        &reference.channel(0)[lo..hi],
    )
    .unwrap_or(f64::NAN);

    let need_oracle = config.variants.iter().any(|v| v.is_oracle());
    let oracle = need_oracle.then_some(&scene.mix.target);

    let mut records = Vec::with_capacity(config.variants.len());
    if kind == SweepKind::RecursiveSmoke {
        let track = match pitch_track_for(&scene, &defaults, &cfg) {
            Ok(t) => t,
            Err(e) => {
                return config
                    .variants
                    .iter()
                    .map(|v| ResultRecord::failed(sweep_name, value, run, &v.to_string(), &e))
                    .collect()
            }
        };
        for &variant in &config.variants {
            let started = Instant::now();
            let result: Result<EnhanceOutput> = recursive_enhance(
                &scene.mix.noisy,
                &scene.mix.noise_only,
                oracle,
                &track,
                variant,
                &cfg,
            );
            records.push(finish_record(
                sweep_name, value, run, variant, si_in, result, &reference, d.k, started,
            ));
        }
    } else {
        let f0 = match effective_f0(&scene, &defaults, &cfg) {
            Ok(f0) => f0 * (1.0 + f0_bias_pct / 100.0),
            Err(e) => {
                return config
                    .variants
                    .iter()
                    .map(|v| ResultRecord::failed(sweep_name, value, run, &v.to_string(), &e))
                    .collect()
            }
        };
        let pipeline =
            match BatchPipeline::prepare(&scene.mix.noisy, &scene.mix.noise_only, oracle, f0, &cfg)
            {
                Ok(p) => p,
                Err(e) => {
                    return config
                        .variants
                        .iter()
                        .map(|v| ResultRecord::failed(sweep_name, value, run, &v.to_string(), &e))
                        .collect()
                }
            };
        for &variant in &config.variants {
            let started = Instant::now();
            let result = pipeline.enhance(variant);
            records.push(finish_record(
                sweep_name, value, run, variant, si_in, result, &reference, d.k, started,
            ));
        }
    }
    records
}

#[allow(clippy::too_many_arguments)]
fn finish_record(
    sweep: &str,
    value: f64,
    run: usize,
    variant: Variant,
    si_in: f64,
    result: Result<EnhanceOutput>,
    reference: &AudioBuffer,
    k: usize,
    started: Instant,
) -> ResultRecord {
    match result.and_then(|out| score(&out.enhanced, reference, k)) {
        Ok((si_out, _)) => ResultRecord {
            sweep: sweep.into(),
            value,
            run,
            variant: variant.to_string(),
            si_sdr_in_db: si_in,
            si_sdr_out_db: si_out,
            improvement_db: si_out - si_in,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            status: "ok".into(),
        },
        Err(e) => ResultRecord::failed(sweep, value, run, &variant.to_string(), &e),
    }
}

/// Run the sweep; results are ordered by (value, run, variant) regardless of
/// scheduling. When `out_csv` is given, rows are appended after each sweep
/// value completes.
pub fn run_sweep(config: &ExperimentConfig, out_csv: Option<&Path>) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    let mut writer = match out_csv {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "{CSV_HEADER}")?;
            Some(w)
        }
        None => None,
    };
    let mut all = Vec::new();
    for &value in &config.values {
        let mut rows: Vec<ResultRecord> = if config.parallel_runs {
            (0..config.runs)
                .into_par_iter()
                .flat_map_iter(|run| run_cell(config, value, run))
                .collect()
        } else {
            (0..config.runs)
                .flat_map(|run| run_cell(config, value, run))
                .collect()
        };
        rows.sort_by(|a, b| {
            a.run.cmp(&b.run).then_with(|| {
                let ia = config
                    .variants
                    .iter()
                    .position(|v| v.to_string() == a.variant);
                let ib = config
                    .variants
                    .iter()
                    .position(|v| v.to_string() == b.variant);
                ia.cmp(&ib)
            })
        });
        if let Some(w) = writer.as_mut() {
            for r in &rows {
                writeln!(
                    w,
                    "{},{},{},{},{:.9},{:.9},{:.9},{:.3},{}",
                    r.sweep,
                    r.value,
                    r.run,
                    r.variant,
                    r.si_sdr_in_db,
                    r.si_sdr_out_db,
                    r.improvement_db,
                    r.wall_ms,
                    r.status.replace(',', ";")
                )?;
            }
            w.flush()?;
        }
        all.extend(rows);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_table_monotone() {
        let mut prev = f64::INFINITY;
        for df in 1..=130 {
            let t = student_t_95(df);
            assert!(t <= prev + 1e-12, "df {df}");
            assert!(t >= 1.9);
            prev = t;
        }
        assert_eq!(student_t_95(10), 2.228);
    }

    #[test]
    fn summarize_groups_cells() {
        let mk = |value: f64, run: usize, variant: &str, imp: f64| ResultRecord {
            sweep: "isnr".into(),
            value,
            run,
            variant: variant.into(),
            si_sdr_in_db: 0.0,
            si_sdr_out_db: imp,
            improvement_db: imp,
            wall_ms: 1.0,
            status: "ok".into(),
        };
        let records = vec![
            mk(-10.0, 0, "mwf", 3.0),
            mk(-10.0, 1, "mwf", 5.0),
            mk(-10.0, 0, "cmwf", 8.0),
            mk(-10.0, 1, "cmwf", 10.0),
        ];
        let cells = summarize(&records);
        assert_eq!(cells.len(), 2);
        let mwf = cells.iter().find(|c| c.variant == "mwf").unwrap();
        assert_eq!(mwf.n, 2);
        assert!((mwf.mean - 4.0).abs() < 1e-12);
        // sd = sqrt(2), ci = 12.706 * sqrt(2)/sqrt(2) = 12.706
        assert!((mwf.ci95 - 12.706).abs() < 1e-9);
    }

    #[test]
    fn ci_width_shrinks_with_runs() {
        // t-based 95% CI width falls roughly as 1/sqrt(n) on a fixed family
        let mk = |n: usize| -> f64 {
            let mut state = 0x243F6A88u64;
            let records: Vec<ResultRecord> = (0..n)
                .map(|run| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    let jitter = ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5;
                    ResultRecord {
                        sweep: "isnr".into(),
                        value: -10.0,
                        run,
                        variant: "cmwf".into(),
                        si_sdr_in_db: 0.0,
                        si_sdr_out_db: 5.0 + jitter,
                        improvement_db: 5.0 + jitter,
                        wall_ms: 1.0,
                        status: "ok".into(),
                    }
                })
                .collect();
            summarize(&records)[0].ci95
        };
        let ratio = mk(64) / mk(16);
        assert!(
            (0.35..=0.65).contains(&ratio),
            "CI ratio {ratio} outside 0.5 +/- 30%"
        );
    }

    #[test]
    fn csv_roundtrip() {
        let dir = std::env::temp_dir().join("cyclobeam_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.csv");
        let records = vec![ResultRecord {
            sweep: "isnr".into(),
            value: -10.0,
            run: 3,
            variant: "cmwf+".into(),
            si_sdr_in_db: -9.5,
            si_sdr_out_db: 4.25,
            improvement_db: 13.75,
            wall_ms: 123.4,
            status: "ok".into(),
        }];
        write_csv(&records, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].variant, "cmwf+");
        assert_eq!(back[0].run, 3);
        assert!((back[0].improvement_db - 13.75).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig {
            kind: SweepKind::Isnr,
            values: vec![-10.0],
            runs: 1,
            variants: vec![Variant::MWF],
            seed: 1,
            defaults: RunDefaults::default(),
            parallel_runs: false,
        };
        assert!(cfg.validate().is_ok());
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        cfg.runs = 1;
        cfg.values.clear();
        assert!(cfg.validate().is_err());
    }
}
