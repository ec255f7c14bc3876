//! Windowed overlap-add analysis/synthesis, time-domain modulation, and
//! framing arithmetic.
//!
//! Analysis and synthesis both use the square-root Hann window, so the
//! squared windows overlap-add to the constant `K/(2R)` on the interior
//! and the round trip is exact there.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::audio::{AudioBuffer, ComplexAudioBuffer};
use crate::error::{Error, Result};
use crate::C64;

/// Window kinds supported by the analysis/synthesis pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    SqrtHann,
}

/// Analysis/synthesis window specification: DFT length `K`, hop `R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    k: usize,
    r: usize,
    kind: WindowKind,
}

impl WindowSpec {
    /// Square-root Hann window of length `k` (a power of two) with hop `r`.
    ///
    /// `r` must divide `k` with `k/r >= 2`; these are exactly the pairs for
    /// which the squared window overlap-adds to a constant.
    pub fn sqrt_hann(k: usize, r: usize) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() {
            return Err(Error::InvalidWindow(format!(
                "window length {k} must be a nonzero power of two"
            )));
        }
        if r == 0 || r > k {
            return Err(Error::InvalidWindow(format!("hop {r} outside [1, {k}]")));
        }
        if k % r != 0 || k / r < 2 {
            return Err(Error::NotCola { k, r });
        }
        Ok(Self {
            k,
            r,
            kind: WindowKind::SqrtHann,
        })
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hop(&self) -> usize {
        self.r
    }

    pub fn kind(&self) -> WindowKind {
        self.kind
    }

    /// Number of half-spectrum bins for real input: `K/2 + 1`.
    pub fn half_bins(&self) -> usize {
        self.k / 2 + 1
    }

    /// The analysis window samples; synthesis uses the same window.
    pub fn window(&self) -> Vec<f64> {
        let k = self.k as f64;
        (0..self.k).map(|n| (PI * n as f64 / k).sin()).collect()
    }

    /// Interior overlap-add constant of the squared window: `K/(2R)`.
    pub fn cola_constant(&self) -> f64 {
        self.k as f64 / (2.0 * self.r as f64)
    }
}

/// Whether an STFT stores `K/2+1` bins (real input) or all `K` bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumKind {
    Half,
    Full,
}

/// Complex STFT tensor `[channels x bins x frames]`.
#[derive(Debug, Clone)]
pub struct StftTensor {
    /// Flat layout `[channel][frame][bin]`.
    data: Vec<C64>,
    channels: usize,
    n_bins: usize,
    n_frames: usize,
    k: usize,
    spectrum: SpectrumKind,
    fs: f64,
    /// Length of the time-domain signal the tensor was computed from.
    signal_len: usize,
}

impl StftTensor {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bins(&self) -> usize {
        self.n_bins
    }

    pub fn frames(&self) -> usize {
        self.n_frames
    }

    pub fn dft_len(&self) -> usize {
        self.k
    }

    pub fn spectrum(&self) -> SpectrumKind {
        self.spectrum
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Center frequency of bin `k` in rad/sample: `2*pi*k/K`.
    pub fn bin_freq(&self, bin: usize) -> f64 {
        TAU * bin as f64 / self.k as f64
    }

    /// All bins of one frame of one channel.
    pub fn frame(&self, channel: usize, frame: usize) -> &[C64] {
        let start = (channel * self.n_frames + frame) * self.n_bins;
        &self.data[start..start + self.n_bins]
    }

    pub fn frame_mut(&mut self, channel: usize, frame: usize) -> &mut [C64] {
        let start = (channel * self.n_frames + frame) * self.n_bins;
        &mut self.data[start..start + self.n_bins]
    }

    pub fn value(&self, channel: usize, frame: usize, bin: usize) -> C64 {
        self.data[(channel * self.n_frames + frame) * self.n_bins + bin]
    }

    /// Allocate a zeroed tensor with the given geometry.
    pub fn zeros(
        channels: usize,
        n_bins: usize,
        n_frames: usize,
        k: usize,
        spectrum: SpectrumKind,
        fs: f64,
        signal_len: usize,
    ) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); channels * n_bins * n_frames],
            channels,
            n_bins,
            n_frames,
            k,
            spectrum,
            fs,
            signal_len,
        }
    }
}

/// Number of frames covering `n` samples: `ceil(1 + (n - k)/r)`.
/// The tail frame is zero-padded.
pub fn frame_count(n: usize, k: usize, r: usize) -> Result<usize> {
    if n < k {
        return Err(Error::SignalTooShort { len: n, min: k });
    }
    Ok(1 + (n - k).div_ceil(r))
}

fn plan(k: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(k)
    } else {
        planner.plan_fft_forward(k)
    }
}

fn stft_impl<F>(
    channels: usize,
    n: usize,
    fs: f64,
    win: &WindowSpec,
    n_bins: usize,
    spectrum: SpectrumKind,
    mut load_frame: F,
) -> Result<StftTensor>
where
    F: FnMut(usize, usize, &[f64], &mut [C64]),
{
    let k = win.len();
    let r = win.hop();
    let l = frame_count(n, k, r)?;
    let w = win.window();
    let fft = plan(k, false);
    let mut out = StftTensor::zeros(channels, n_bins, l, k, spectrum, fs, n);
    let mut buf = vec![C64::new(0.0, 0.0); k];
    for ch in 0..channels {
        for frame in 0..l {
            load_frame(ch, frame * r, &w, &mut buf);
            fft.process(&mut buf);
            out.frame_mut(ch, frame).copy_from_slice(&buf[..n_bins]);
        }
    }
    Ok(out)
}

/// STFT of a real signal; stores the `K/2+1` non-negative-frequency bins.
pub fn stft(audio: &AudioBuffer, win: &WindowSpec) -> Result<StftTensor> {
    let k = win.len();
    stft_impl(
        audio.num_channels(),
        audio.len(),
        audio.fs(),
        win,
        win.half_bins(),
        SpectrumKind::Half,
        |ch, offset, w, buf| {
            let samples = audio.channel(ch);
            for n in 0..k {
                let s = samples.get(offset + n).copied().unwrap_or(0.0);
                buf[n] = C64::new(s * w[n], 0.0);
            }
        },
    )
}

/// STFT of a complex (modulated) signal; keeps all `K` bins because the
/// shifted spectrum is not Hermitian-symmetric.
pub fn stft_complex(audio: &ComplexAudioBuffer, win: &WindowSpec) -> Result<StftTensor> {
    let k = win.len();
    stft_impl(
        audio.num_channels(),
        audio.len(),
        audio.fs(),
        win,
        k,
        SpectrumKind::Full,
        |ch, offset, w, buf| {
            let samples = audio.channel(ch);
            for n in 0..k {
                let s = samples
                    .get(offset + n)
                    .copied()
                    .unwrap_or(C64::new(0.0, 0.0));
                buf[n] = s * w[n];
            }
        },
    )
}

/// Expand a half-spectrum frame to all `K` bins using Hermitian symmetry.
/// DC and Nyquist imaginary parts are dropped so the synthesis is real.
pub(crate) fn hermitian_expand(half: &[C64], k: usize, out: &mut [C64]) {
    let kh = k / 2;
    out[0] = C64::new(half[0].re, 0.0);
    out[kh] = C64::new(half[kh].re, 0.0);
    for bin in 1..kh {
        out[bin] = half[bin];
        out[k - bin] = half[bin].conj();
    }
}

fn wola_accumulate(
    frames: usize,
    k: usize,
    r: usize,
    w: &[f64],
    mut frame_time: impl FnMut(usize, &mut [C64]),
) -> (Vec<C64>, Vec<f64>) {
    let out_len = (frames - 1) * r + k;
    let mut acc = vec![C64::new(0.0, 0.0); out_len];
    let mut wsum = vec![0.0f64; out_len];
    let mut buf = vec![C64::new(0.0, 0.0); k];
    for frame in 0..frames {
        frame_time(frame, &mut buf);
        let offset = frame * r;
        for n in 0..k {
            acc[offset + n] += buf[n] * w[n];
            wsum[offset + n] += w[n] * w[n];
        }
    }
    (acc, wsum)
}

/// Weighted overlap-add synthesis of a half-spectrum tensor into real audio.
///
/// Output is trimmed to the tensor's original signal length. Samples where
/// the window sum is negligible (the extreme edges) are zero.
pub fn istft(spec: &StftTensor, win: &WindowSpec) -> Result<AudioBuffer> {
    if spec.spectrum() != SpectrumKind::Half {
        return Err(Error::InvalidWindow(
            "istft expects a half-spectrum tensor; use istft_complex for full spectra".into(),
        ));
    }
    check_win_match(spec, win)?;
    let k = win.len();
    let ifft = plan(k, true);
    let w = win.window();
    let scale = 1.0 / k as f64;
    let guard = 1e-12 * win.cola_constant();
    let mut channels = Vec::with_capacity(spec.channels());
    for ch in 0..spec.channels() {
        let (acc, wsum) = wola_accumulate(spec.frames(), k, win.hop(), &w, |frame, buf| {
            hermitian_expand(spec.frame(ch, frame), k, buf);
            ifft.process(buf);
            for v in buf.iter_mut() {
                *v *= scale;
            }
        });
        let mut samples: Vec<f64> = acc
            .iter()
            .zip(&wsum)
            .map(|(a, &ws)| if ws > guard { a.re / ws } else { 0.0 })
            .collect();
        samples.truncate(spec.signal_len());
        channels.push(samples);
    }
    AudioBuffer::new(channels, spec.fs())
}

/// Weighted overlap-add synthesis of a full-spectrum tensor into a complex
/// signal (the inverse of [`stft_complex`]).
pub fn istft_complex(spec: &StftTensor, win: &WindowSpec) -> Result<ComplexAudioBuffer> {
    if spec.spectrum() != SpectrumKind::Full {
        return Err(Error::InvalidWindow(
            "istft_complex expects a full-spectrum tensor".into(),
        ));
    }
    check_win_match(spec, win)?;
    let k = win.len();
    let ifft = plan(k, true);
    let w = win.window();
    let scale = 1.0 / k as f64;
    let guard = 1e-12 * win.cola_constant();
    let mut channels = Vec::with_capacity(spec.channels());
    for ch in 0..spec.channels() {
        let (acc, wsum) = wola_accumulate(spec.frames(), k, win.hop(), &w, |frame, buf| {
            buf.copy_from_slice(spec.frame(ch, frame));
            ifft.process(buf);
            for v in buf.iter_mut() {
                *v *= scale;
            }
        });
        let mut samples: Vec<C64> = acc
            .iter()
            .zip(&wsum)
            .map(|(a, &ws)| {
                if ws > guard {
                    *a / ws
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        samples.truncate(spec.signal_len());
        channels.push(samples);
    }
    Ok(ComplexAudioBuffer::from_parts(channels, spec.fs(), 0.0))
}

fn check_win_match(spec: &StftTensor, win: &WindowSpec) -> Result<()> {
    if spec.dft_len() != win.len() {
        return Err(Error::DimensionMismatch {
            context: "tensor DFT length vs window length",
            expected: win.len(),
            got: spec.dft_len(),
        });
    }
    Ok(())
}

/// Multiply each channel by `exp(j*alpha*n)`, shifting the spectrum so the
/// output's transform at `omega` equals the input's at `omega - alpha`.
pub fn modulate(audio: &AudioBuffer, alpha: f64) -> Result<ComplexAudioBuffer> {
    if !(0.0..TAU).contains(&alpha) {
        return Err(Error::InvalidModulation { alpha });
    }
    let channels = (0..audio.num_channels())
        .map(|m| {
            audio
                .channel(m)
                .iter()
                .enumerate()
                .map(|(n, &s)| C64::from_polar(1.0, alpha * n as f64) * s)
                .collect()
        })
        .collect();
    Ok(ComplexAudioBuffer::from_parts(
        channels,
        audio.fs(),
        alpha,
    ))
}
