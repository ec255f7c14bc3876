//! Synthetic acoustic scenes: harmonic cyclostationary targets, synthetic
//! room impulse responses, and noisy multichannel mixtures with controlled
//! SNRs. Everything is deterministic under its seed.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::rng::{gaussian, mix_seed, uniform};
use crate::C64;

/// Speed of sound used for the array geometry, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Distribution parameters of the synthetic harmonic target.
///
/// The generated signal is `Y(n) = B(n) * sum_h D_h cos(w0 n h + phi_h)`
/// with as many harmonics as fit below Nyquist. `B(n)` is white Gaussian
/// noise lowpass-filtered to a slowly varying amplitude envelope.
#[derive(Debug, Clone)]
pub struct HarmonicSourceParams {
    /// Uniform range of the fundamental, Hz.
    pub f0_range_hz: (f64, f64),
    /// Uniform range of the per-harmonic amplitudes.
    pub amp_range: (f64, f64),
    /// Mean of the envelope process before filtering.
    pub envelope_mean: f64,
    /// Variance of the envelope process before filtering.
    pub envelope_var: f64,
    /// Envelope lowpass cutoff, Hz.
    pub envelope_cutoff_hz: f64,
    /// Envelope filter order.
    pub envelope_order: usize,
}

impl Default for HarmonicSourceParams {
    fn default() -> Self {
        Self {
            f0_range_hz: (60.0, 250.0),
            amp_range: (1.0, 10.0),
            envelope_mean: 0.5,
            envelope_var: 10.0,
            envelope_cutoff_hz: 5.0,
            envelope_order: 4,
        }
    }
}

/// Ground truth accompanying a generated harmonic target.
#[derive(Debug, Clone)]
pub struct HarmonicGroundTruth {
    pub f0_hz: f64,
    /// Number of harmonics, the largest integer with `f0 * order < fs/2`.
    pub order: usize,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

/// Generate one harmonic target of `n` samples.
pub fn gen_harmonic_target(
    params: &HarmonicSourceParams,
    fs: f64,
    n: usize,
    seed: u64,
) -> Result<(AudioBuffer, HarmonicGroundTruth)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = uniform(&mut rng, params.f0_range_hz.0, params.f0_range_hz.1);
    let order = largest_order_below_nyquist(f0, fs);
    let amplitudes: Vec<f64> = (0..order)
        .map(|_| uniform(&mut rng, params.amp_range.0, params.amp_range.1))
        .collect();
    let phases: Vec<f64> = (0..order).map(|_| uniform(&mut rng, -PI, PI)).collect();

    let sd = params.envelope_var.sqrt();
    let white: Vec<f64> = (0..n)
        .map(|_| params.envelope_mean + sd * gaussian(&mut rng))
        .collect();
    let envelope = butterworth_lowpass(
        &AudioBuffer::from_mono(white, fs)?,
        params.envelope_order,
        params.envelope_cutoff_hz,
    )?;

    let omega0 = TAU * f0 / fs;
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64;
            let harm: f64 = (1..=order)
                .map(|h| amplitudes[h - 1] * (omega0 * t * h as f64 + phases[h - 1]).cos())
                .sum();
            envelope.channel(0)[i] * harm
        })
        .collect();
    Ok((
        AudioBuffer::from_mono(samples, fs)?,
        HarmonicGroundTruth {
            f0_hz: f0,
            order,
            amplitudes,
            phases,
        },
    ))
}

/// Largest `H` with `f0 * H < fs/2`.
pub fn largest_order_below_nyquist(f0: f64, fs: f64) -> usize {
    let mut h = (fs / 2.0 / f0).floor() as usize;
    if h as f64 * f0 >= fs / 2.0 {
        h -= 1;
    }
    h.max(1)
}

/// Two consecutive notes with independently drawn fundamentals, separated by
/// `gap` samples of silence so a pitch tracker sees a clean unvoiced
/// boundary. Returns the per-note ground truths.
pub fn gen_two_note_target(
    params: &HarmonicSourceParams,
    fs: f64,
    note_len: usize,
    gap: usize,
    seed: u64,
) -> Result<(AudioBuffer, [HarmonicGroundTruth; 2])> {
    let (a, truth_a) = gen_harmonic_target(params, fs, note_len, mix_seed(seed, &[1]))?;
    // redraw until the notes are clearly distinct
    let mut attempt = 0u64;
    let (b, truth_b) = loop {
        let (b, truth_b) = gen_harmonic_target(params, fs, note_len, mix_seed(seed, &[2, attempt]))?;
        let rel = (truth_b.f0_hz - truth_a.f0_hz).abs() / truth_a.f0_hz;
        if rel > 0.05 {
            break (b, truth_b);
        }
        attempt += 1;
    };
    let mut samples = a.channel(0).to_vec();
    samples.extend(std::iter::repeat_n(0.0, gap));
    samples.extend_from_slice(b.channel(0));
    Ok((AudioBuffer::from_mono(samples, fs)?, [truth_a, truth_b]))
}

/// Butterworth lowpass via a cascade of bilinear-transformed second-order
/// sections (plus one first-order section for odd orders). Unit DC gain,
/// -3 dB at `fc`.
pub fn butterworth_lowpass(x: &AudioBuffer, order: usize, fc: f64) -> Result<AudioBuffer> {
    let fs = x.fs();
    if !(fc > 0.0 && fc < fs / 2.0) {
        return Err(Error::InvalidCutoff {
            fc,
            nyquist: fs / 2.0,
        });
    }
    if order == 0 {
        return Err(Error::InvalidConfig("filter order must be >= 1".into()));
    }
    let sections = butterworth_sections(order, fc, fs);
    let channels = (0..x.num_channels())
        .map(|m| {
            let mut y = x.channel(m).to_vec();
            for s in &sections {
                s.filter_in_place(&mut y);
            }
            y
        })
        .collect();
    AudioBuffer::new(channels, fs)
}

/// One biquad, direct form II transposed. First-order sections set the
/// second-order coefficients to zero.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn filter_in_place(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        for s in x.iter_mut() {
            let input = *s;
            let out = self.b0 * input + z1;
            z1 = self.b1 * input - self.a1 * out + z2;
            z2 = self.b2 * input - self.a2 * out;
            *s = out;
        }
    }

    /// Magnitude response at digital frequency `omega` rad/sample.
    fn magnitude(&self, omega: f64) -> f64 {
        let z1 = C64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = C64::new(self.b0, 0.0) + z1 * self.b1 + z2 * self.b2;
        let den = C64::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2;
        (num / den).norm()
    }
}

fn butterworth_sections(order: usize, fc: f64, fs: f64) -> Vec<Biquad> {
    let omega0 = TAU * fc / fs;
    let (sin0, cos0) = (omega0.sin(), omega0.cos());
    let mut sections = Vec::new();
    let pairs = order / 2;
    for k in 1..=pairs {
        // analog pole angle of the k-th conjugate pair
        let theta = PI * (2.0 * k as f64 + order as f64 - 1.0) / (2.0 * order as f64);
        let q = -1.0 / (2.0 * theta.cos());
        let alpha = sin0 / (2.0 * q);
        let a0 = 1.0 + alpha;
        sections.push(Biquad {
            b0: (1.0 - cos0) / 2.0 / a0,
            b1: (1.0 - cos0) / a0,
            b2: (1.0 - cos0) / 2.0 / a0,
            a1: -2.0 * cos0 / a0,
            a2: (1.0 - alpha) / a0,
        });
    }
    if order % 2 == 1 {
        // real pole: first-order bilinear section with prewarping
        let k = (omega0 / 2.0).tan();
        let a0 = k + 1.0;
        sections.push(Biquad {
            b0: k / a0,
            b1: k / a0,
            b2: 0.0,
            a1: (k - 1.0) / a0,
            a2: 0.0,
        });
    }
    sections
}

/// Magnitude response of the composed Butterworth cascade, for tests and
/// calibration.
pub fn butterworth_magnitude(order: usize, fc: f64, fs: f64, freq_hz: f64) -> f64 {
    let omega = TAU * freq_hz / fs;
    butterworth_sections(order, fc, fs)
        .iter()
        .map(|s| s.magnitude(omega))
        .product()
}

/// How a room impulse response is obtained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RirKind {
    /// Delayed direct-path impulse plus an exponentially decaying noise tail.
    Synthetic,
    /// Load impulse responses from a multichannel WAV file.
    File(PathBuf),
}

/// Room impulse response specification.
#[derive(Debug, Clone)]
pub struct RirSpec {
    pub kind: RirKind,
    /// Reverberation time for a 60 dB decay, seconds.
    pub rt60_s: f64,
    /// Direct-path delay per microphone, samples.
    pub delays: Vec<usize>,
    /// Direct-path to total tail energy ratio, dB.
    pub direct_to_tail_db: f64,
}

impl RirSpec {
    pub fn synthetic(rt60_s: f64, delays: Vec<usize>) -> Self {
        Self {
            kind: RirKind::Synthetic,
            rt60_s,
            delays,
            direct_to_tail_db: 10.0,
        }
    }
}

/// Integer-sample direct-path delays for a uniform linear array centred at
/// the origin, source at `angle_rad` from broadside at `distance_m`.
pub fn mic_delays(
    angle_rad: f64,
    distance_m: f64,
    mics: usize,
    spacing_m: f64,
    fs: f64,
) -> Vec<usize> {
    let src = (distance_m * angle_rad.sin(), distance_m * angle_rad.cos());
    (0..mics)
        .map(|m| {
            let x = (m as f64 - (mics as f64 - 1.0) / 2.0) * spacing_m;
            let d = ((src.0 - x).powi(2) + src.1.powi(2)).sqrt();
            (d / SPEED_OF_SOUND * fs).round() as usize
        })
        .collect()
}

/// Generate impulse responses for `mics` channels.
///
/// Synthetic kind: unit impulse at the per-mic geometric delay plus a white
/// noise tail shaped by `exp(-3 ln(10) t / rt60)`, so the energy envelope
/// decays 60 dB over `rt60`; total tail energy sits `direct_to_tail_db`
/// below the direct path. File kind: loads the WAV verbatim.
pub fn gen_rir(spec: &RirSpec, mics: usize, fs: f64, seed: u64) -> Result<AudioBuffer> {
    match &spec.kind {
        RirKind::File(path) => {
            let audio = AudioBuffer::read_wav(path)
                .map_err(|e| Error::RirFile(format!("{}: {e}", path.display())))?;
            if audio.num_channels() < mics {
                return Err(Error::RirFile(format!(
                    "{} has {} channels, need {mics}",
                    path.display(),
                    audio.num_channels()
                )));
            }
            Ok(AudioBuffer::new(
                (0..mics).map(|m| audio.channel(m).to_vec()).collect(),
                audio.fs(),
            )?)
        }
        RirKind::Synthetic => {
            if spec.delays.len() < mics {
                return Err(Error::DimensionMismatch {
                    context: "RIR delays vs mic count",
                    expected: mics,
                    got: spec.delays.len(),
                });
            }
            let tail_len = (spec.rt60_s * fs).ceil() as usize;
            let max_delay = *spec.delays[..mics].iter().max().unwrap();
            let len = max_delay + 1 + tail_len;
            let tail_energy = 10f64.powf(-spec.direct_to_tail_db / 10.0);
            let channels = (0..mics)
                .map(|m| {
                    let mut h = vec![0.0f64; len];
                    let delay = spec.delays[m];
                    h[delay] = 1.0;
                    if tail_len > 0 {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[m as u64]));
                        let decay = -3.0 * 10f64.ln() / (spec.rt60_s * fs);
                        let mut raw = 0.0f64;
                        for t in 0..tail_len.min(len - delay - 1) {
                            let v = gaussian(&mut rng) * (decay * t as f64).exp();
                            h[delay + 1 + t] = v;
                            raw += v * v;
                        }
                        if raw > 0.0 {
                            let scale = (tail_energy / raw).sqrt();
                            for v in h[delay + 1..].iter_mut() {
                                *v *= scale;
                            }
                        }
                    }
                    h
                })
                .collect();
            Ok(AudioBuffer::new(channels, fs)?)
        }
    }
}

/// Scene mixing parameters.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub mics: usize,
    /// Interferer SNR at the reference microphone, dB.
    pub isnr_db: f64,
    /// Spatially uncorrelated sensor-noise SNR per channel, dB.
    pub sensor_snr_db: f64,
    pub fs: f64,
    /// Length of the separate noise-only realization, samples.
    pub noise_only_len: usize,
}

/// A mixed scene: `noisy = target + noise` exactly, plus a fresh noise-only
/// realization with identical statistics for covariance estimation.
#[derive(Debug, Clone)]
pub struct SceneMix {
    pub noisy: AudioBuffer,
    /// Reverberant target `d` at the microphones.
    pub target: AudioBuffer,
    /// Total noise `v` (directional interferer plus sensor noise).
    pub noise: AudioBuffer,
    /// Separate noise realization for noise-statistics estimation.
    pub noise_only: AudioBuffer,
}

/// Convolve the dry target and a fresh white-Gaussian interferer with their
/// respective impulse responses and mix at the configured SNRs. The
/// interferer is scaled at the reference microphone (channel 0); sensor
/// noise is scaled per channel.
pub fn mix_scene(
    target: &AudioBuffer,
    config: &SceneConfig,
    rir_target: &AudioBuffer,
    rir_interferer: &AudioBuffer,
    seed: u64,
) -> Result<SceneMix> {
    let n = target.len();
    let m = config.mics;
    if rir_target.num_channels() < m || rir_interferer.num_channels() < m {
        return Err(Error::DimensionMismatch {
            context: "RIR channels vs mic count",
            expected: m,
            got: rir_target.num_channels().min(rir_interferer.num_channels()),
        });
    }
    let dry = target.channel(0);
    if dry.iter().map(|s| s * s).sum::<f64>() <= 0.0 {
        return Err(Error::ZeroTarget);
    }

    let mut d: Vec<Vec<f64>> = (0..m)
        .map(|mi| convolve(dry, rir_target.channel(mi), n))
        .collect();
    let d_ref_energy: f64 = d[0].iter().map(|s| s * s).sum();
    if d_ref_energy <= 0.0 {
        return Err(Error::ZeroTarget);
    }

    // directional interferer: fresh WGN through the interferer RIRs
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xA]));
    let wgn: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
    let interf: Vec<Vec<f64>> = (0..m)
        .map(|mi| convolve(&wgn, rir_interferer.channel(mi), n))
        .collect();
    let i_ref_energy: f64 = interf[0].iter().map(|s| s * s).sum();
    let gamma = (d_ref_energy / (i_ref_energy * 10f64.powf(config.isnr_db / 10.0))).sqrt();

    // per-channel sensor noise scales
    let mut sensor_scale = vec![0.0f64; m];
    let mut sensor: Vec<Vec<f64>> = Vec::with_capacity(m);
    for mi in 0..m {
        let mut srng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xB, mi as u64]));
        let noise: Vec<f64> = (0..n).map(|_| gaussian(&mut srng)).collect();
        let d_energy: f64 = d[mi].iter().map(|s| s * s).sum();
        let n_energy: f64 = noise.iter().map(|s| s * s).sum();
        sensor_scale[mi] =
            (d_energy / (n_energy * 10f64.powf(config.sensor_snr_db / 10.0))).sqrt();
        sensor.push(noise);
    }

    let mut noise_ch = Vec::with_capacity(m);
    let mut noisy_ch = Vec::with_capacity(m);
    for mi in 0..m {
        let v: Vec<f64> = (0..n)
            .map(|i| gamma * interf[mi][i] + sensor_scale[mi] * sensor[mi][i])
            .collect();
        let x: Vec<f64> = (0..n).map(|i| d[mi][i] + v[i]).collect();
        // return the noise as x - d so the additivity identity is bit-exact
        let v: Vec<f64> = (0..n).map(|i| x[i] - d[mi][i]).collect();
        noise_ch.push(v);
        noisy_ch.push(x);
    }

    // fresh noise-only realization with the same scaling
    let n2 = config.noise_only_len;
    let mut rng2 = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xC]));
    let wgn2: Vec<f64> = (0..n2).map(|_| gaussian(&mut rng2)).collect();
    let mut noise_only_ch: Vec<Vec<f64>> = (0..m)
        .map(|mi| {
            let conv = convolve(&wgn2, rir_interferer.channel(mi), n2);
            let mut srng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &[0xD, mi as u64]));
            (0..n2)
                .map(|i| gamma * conv[i] + sensor_scale[mi] * gaussian(&mut srng))
                .collect()
        })
        .collect();

    // common normalization to WAV-like amplitudes: one factor across every
    // component keeps all SNRs exact and puts per-bin powers in the range
    // the absolute loading bounds assume; the noise is re-derived as x - d
    // afterwards so the additivity identity stays bit-exact
    let peak = noisy_ch
        .iter()
        .chain(noise_only_ch.iter())
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if peak > 0.0 {
        let scale = 0.9 / peak;
        for ch in noisy_ch.iter_mut().chain(d.iter_mut()).chain(noise_only_ch.iter_mut()) {
            for v in ch.iter_mut() {
                *v *= scale;
            }
        }
        for mi in 0..m {
            for i in 0..n {
                noise_ch[mi][i] = noisy_ch[mi][i] - d[mi][i];
            }
        }
    }

    Ok(SceneMix {
        noisy: AudioBuffer::new(noisy_ch, config.fs)?,
        target: AudioBuffer::new(d, config.fs)?,
        noise: AudioBuffer::new(noise_ch, config.fs)?,
        noise_only: AudioBuffer::new(noise_only_ch, config.fs)?,
    })
}

/// FFT-based linear convolution truncated to `out_len` samples.
pub fn convolve(x: &[f64], h: &[f64], out_len: usize) -> Vec<f64> {
    let full = x.len() + h.len() - 1;
    let nfft = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nfft);
    let ifft = planner.plan_fft_inverse(nfft);
    let mut a: Vec<C64> = x
        .iter()
        .map(|&v| C64::new(v, 0.0))
        .chain(std::iter::repeat_n(C64::new(0.0, 0.0), nfft - x.len()))
        .collect();
    let mut b: Vec<C64> = h
        .iter()
        .map(|&v| C64::new(v, 0.0))
        .chain(std::iter::repeat_n(C64::new(0.0, 0.0), nfft - h.len()))
        .collect();
    fft.process(&mut a);
    fft.process(&mut b);
    for (va, vb) in a.iter_mut().zip(&b) {
        *va *= vb;
    }
    ifft.process(&mut a);
    let scale = 1.0 / nfft as f64;
    a[..out_len.min(full)]
        .iter()
        .map(|v| v.re * scale)
        .chain(std::iter::repeat_n(0.0, out_len.saturating_sub(full)))
        .collect()
}
