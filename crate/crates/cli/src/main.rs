//! `cyclobeam`: cyclostationary beamforming from the command line.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cyclobeam_core::experiment::{run_sweep, summarize, ExperimentConfig};
use cyclobeam_core::plot::emit_plots;
use cyclobeam_core::sweep_config::{default_config, load_config, render_config};
use cyclobeam_core::{
    batch_enhance, build_cyclic_set, frame_count, recursive_enhance, scd_matrix, track_pitch,
    AudioBuffer, EnhanceOutput, Error, Result, Variant, WavFormat,
};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "CYCLOBEAM_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "cyclobeam",
    version,
    about = "Cyclic multichannel Wiener beamforming: synthetic experiments, WAV enhancement, cyclic spectra, and pitch tracks."
)]
struct Cli {
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: $CYCLOBEAM_OUT_DIR or the working directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Configuration file (key = value sections; see --print-config).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo sweep and persist CSV results plus SVG plots.
    SynthSweep {
        /// Skip plot emission.
        #[arg(long)]
        no_plots: bool,
    },
    /// Enhance a noisy WAV given a noise-only WAV.
    Enhance {
        /// Multichannel noisy recording.
        #[arg(long)]
        noisy: PathBuf,
        /// Noise-only segment with matching channel layout (>= 2 s).
        #[arg(long)]
        noise: PathBuf,
        /// Clean reverberant target, required for oracle variants and used
        /// for pitch tracking when given.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Beamformer variant: mwf, mwf+, mwf++, cmwf, cmwf+, cmwf++, or identity (pass-through control).
        #[arg(long, default_value = "cmwf")]
        variant: String,
        /// Known fundamental in Hz; omit to track it instead.
        #[arg(long)]
        f0: Option<f64>,
        /// Recursive (frame-by-frame) processing instead of batch.
        #[arg(long)]
        recursive: bool,
        /// Output sample encoding.
        #[arg(long, value_enum, default_value_t = CliWavFormat::Float32)]
        format: CliWavFormat,
    },
    /// Estimate the ACP cyclic spectrum of a WAV and dump it as CSV.
    Scd {
        #[arg(long)]
        input: PathBuf,
        /// Fundamental in Hz defining the cyclic frequencies.
        #[arg(long)]
        f0: f64,
        /// Channel to analyse.
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Track the fundamental frequency of a WAV and dump the track as CSV.
    Pitch {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
    /// Generate a synthetic scene and export WAVs plus a metadata sidecar.
    GenScene,
    /// Re-render SVG plots from an existing sweep CSV.
    Plots {
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CliWavFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl From<CliWavFormat> for WavFormat {
    fn from(f: CliWavFormat) -> Self {
        match f {
            CliWavFormat::Pcm16 => WavFormat::Pcm16,
            CliWavFormat::Pcm24 => WavFormat::Pcm24,
            CliWavFormat::Float32 => WavFormat::Float32,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(path) => load_config(path)?,
        None => default_config(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.print_config {
        print!("{}", render_config(&config));
        return Ok(());
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;

    match cli.command {
        None => Err(Error::InvalidConfig(
            "no subcommand given; see --help".into(),
        )),
        Some(Command::SynthSweep { no_plots }) => synth_sweep(&config, &out_dir, no_plots),
        Some(Command::Enhance {
            noisy,
            noise,
            target,
            variant,
            f0,
            recursive,
            format,
        }) => enhance(
            &config, &out_dir, &noisy, &noise, target.as_deref(), &variant, f0, recursive,
            format.into(),
        ),
        Some(Command::Scd { input, f0, channel }) => scd(&config, &out_dir, &input, f0, channel),
        Some(Command::Pitch { input, channel }) => pitch(&config, &out_dir, &input, channel),
        Some(Command::GenScene) => gen_scene(&config, &out_dir),
        Some(Command::Plots { csv }) => {
            let written = emit_plots(&csv, &out_dir)?;
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn synth_sweep(config: &ExperimentConfig, out_dir: &Path, no_plots: bool) -> Result<()> {
    let csv_path = out_dir.join(format!("sweep_{}.csv", config.kind.name()));
    println!(
        "running {} sweep over {:?} ({} runs x {} variants)",
        config.kind,
        config.values,
        config.runs,
        config.variants.len()
    );
    let records = run_sweep(config, Some(&csv_path))?;
    println!("wrote {}", csv_path.display());
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        println!("{failed} runs failed; see the status column");
    }
    println!("{:>10} {:>8} {:>12} {:>8} {:>4}", "value", "variant", "mean[dB]", "ci95", "n");
    for cell in summarize(&records) {
        println!(
            "{:>10} {:>8} {:>12.3} {:>8.3} {:>4}",
            cell.value, cell.variant, cell.mean, cell.ci95, cell.n
        );
    }
    if !no_plots {
        for p in emit_plots(&csv_path, out_dir)? {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn enhance(
    config: &ExperimentConfig,
    out_dir: &Path,
    noisy_path: &Path,
    noise_path: &Path,
    target_path: Option<&Path>,
    variant: &str,
    f0: Option<f64>,
    recursive: bool,
    format: WavFormat,
) -> Result<()> {
    let variant: Variant = variant.parse()?;
    let noisy = AudioBuffer::read_wav(noisy_path)?;
    let noise = AudioBuffer::read_wav(noise_path)?;
    let target = target_path.map(AudioBuffer::read_wav).transpose()?;
    let mut defaults = config.defaults.clone();
    defaults.fs = noisy.fs();
    let cfg = defaults.enhance_config()?;

    let track_source = target.as_ref().unwrap_or(&noisy);
    let n_frames = frame_count(noisy.len(), defaults.k, defaults.r)?;
    let out: EnhanceOutput = if recursive {
        let track = track_pitch(
            track_source.channel(0),
            noisy.fs(),
            defaults.r,
            n_frames,
            cfg.pitch_window,
            &cfg.grid,
            cfg.max_order,
            &cfg.smoothing,
        )?;
        let result = recursive_enhance(&noisy, &noise, target.as_ref(), &track, variant, &cfg)?;
        let diag_path = out_dir.join("diagnostics.csv");
        result
            .diagnostics
            .write_frame_csv(noisy.fs(), BufWriter::new(File::create(&diag_path)?))?;
        println!("wrote {}", diag_path.display());
        result
    } else {
        let f0 = match f0 {
            Some(f0) => f0,
            None => {
                let track = track_pitch(
                    track_source.channel(0),
                    noisy.fs(),
                    defaults.r,
                    n_frames,
                    cfg.pitch_window,
                    &cfg.grid,
                    cfg.max_order,
                    &cfg.smoothing,
                )?;
                let f0 = track.median_voiced_f0_hz();
                println!("tracked fundamental: {f0:.2} Hz");
                f0
            }
        };
        batch_enhance(&noisy, &noise, target.as_ref(), f0, variant, &cfg)?
    };

    for note in &out.diagnostics.notes {
        println!("note: {note}");
    }
    let out_path = out_dir.join("enhanced.wav");
    out.enhanced.write_wav(&out_path, format)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn scd(
    config: &ExperimentConfig,
    out_dir: &Path,
    input: &Path,
    f0: f64,
    channel: usize,
) -> Result<()> {
    let audio = AudioBuffer::read_wav(input)?;
    if channel >= audio.num_channels() {
        return Err(Error::DimensionMismatch {
            context: "channel index vs WAV channels",
            expected: audio.num_channels(),
            got: channel,
        });
    }
    let defaults = &config.defaults;
    let win = cyclobeam_core::WindowSpec::sqrt_hann(defaults.k, defaults.r)?;
    let alpha1 = std::f64::consts::TAU * f0 / audio.fs();
    let set = build_cyclic_set(alpha1, defaults.shifts, std::f64::consts::PI)?;
    let scd = scd_matrix(&audio, channel, set.shifts(), &win)?;
    let path = out_dir.join("scd.csv");
    scd.write_csv(audio.fs(), BufWriter::new(File::create(&path)?))?;
    println!(
        "wrote {} ({} cyclic frequencies x {} bins over {} frames)",
        path.display(),
        scd.alphas.len(),
        scd.bin_freqs.len(),
        scd.frame_count
    );
    Ok(())
}

fn pitch(config: &ExperimentConfig, out_dir: &Path, input: &Path, channel: usize) -> Result<()> {
    let audio = AudioBuffer::read_wav(input)?;
    if channel >= audio.num_channels() {
        return Err(Error::DimensionMismatch {
            context: "channel index vs WAV channels",
            expected: audio.num_channels(),
            got: channel,
        });
    }
    let defaults = &config.defaults;
    let cfg = defaults.enhance_config()?;
    let n_frames = frame_count(audio.len(), defaults.k, defaults.r)?;
    let track = track_pitch(
        audio.channel(channel),
        audio.fs(),
        defaults.r,
        n_frames,
        cfg.pitch_window,
        &cfg.grid,
        cfg.max_order,
        &cfg.smoothing,
    )?;
    let path = out_dir.join("pitch.csv");
    track.write_csv(BufWriter::new(File::create(&path)?))?;
    let voiced = track.frames.iter().filter(|f| f.voiced).count();
    println!(
        "wrote {} ({} frames, {} voiced, median f0 {:.2} Hz)",
        path.display(),
        track.len(),
        voiced,
        track.median_voiced_f0_hz()
    );
    Ok(())
}

fn gen_scene(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let d = &config.defaults;
    let scene = cyclobeam_core::experiment::build_scene(
        false,
        d.mics,
        d.isnr_db,
        d,
        config.seed,
    )?;
    let files = [
        ("noisy.wav", &scene.mix.noisy),
        ("target.wav", &scene.mix.target),
        ("noise.wav", &scene.mix.noise),
        ("noise_only.wav", &scene.mix.noise_only),
    ];
    for (name, audio) in files {
        let path = out_dir.join(name);
        audio.write_wav(&path, WavFormat::Float32)?;
        println!("wrote {}", path.display());
    }
    let meta = format!(
        "seed = {}\nf0_hz = {:.6}\nmics = {}\nfs = {}\nisnr_db = {}\nsensor_snr_db = {}\nrt60_s = {}\nduration_s = {}\nnoise_only_s = {}\n",
        config.seed,
        scene.f0_hz,
        d.mics,
        d.fs,
        d.isnr_db,
        d.sensor_snr_db,
        d.rt60_s,
        d.duration_s,
        d.noise_only_s,
    );
    let meta_path = out_dir.join("scene.txt");
    std::fs::write(&meta_path, meta)?;
    println!("wrote {}", meta_path.display());
    Ok(())
}
