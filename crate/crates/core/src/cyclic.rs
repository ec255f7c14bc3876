//! Cyclic frequency sets, spectral correlation density estimation via the
//! time-averaged cyclic periodogram (ACP), and stacked spectral-spatial
//! covariance assembly.
//!
//! Cyclic frequencies are continuous rad/sample values, never snapped to the
//! STFT bin grid: the frequency translation happens by modulating in the time
//! domain and re-transforming, so shifted components that fall between bins
//! are represented exactly.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::stft::{modulate, stft_complex, StftTensor, WindowSpec};
use crate::C64;

/// Harmonic modulation set `{c * alpha1, c = 0..C-1}` in rad/sample.
///
/// The zero shift is always present; the highest shift stays below Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct CyclicSet {
    alpha1: f64,
    shifts: Vec<f64>,
}

impl CyclicSet {
    /// Single-shift set `{0}`: narrowband processing, no cyclic structure.
    pub fn narrowband() -> Self {
        Self {
            alpha1: 0.0,
            shifts: vec![0.0],
        }
    }

    /// Fundamental in rad/sample; zero for the narrowband set.
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// Number of shifts `C`.
    pub fn count(&self) -> usize {
        self.shifts.len()
    }
}

/// Build the harmonic set, clamping `C` so every shift stays below `nyquist`
/// (rad/sample). Unvoiced input (`alpha1 <= 0`) is an error; callers decide
/// how to gate unvoiced frames before this point.
pub fn build_cyclic_set(alpha1: f64, c_requested: usize, nyquist: f64) -> Result<CyclicSet> {
    if !(alpha1 > 0.0) {
        return Err(Error::NonPositiveFundamental { alpha1 });
    }
    let c_max = ((nyquist / alpha1).ceil() as usize).max(1);
    let c = c_requested.clamp(1, c_max);
    let mut shifts: Vec<f64> = (0..c).map(|i| i as f64 * alpha1).collect();
    while shifts.len() > 1 && *shifts.last().unwrap() >= nyquist {
        shifts.pop();
    }
    Ok(CyclicSet { alpha1, shifts })
}

/// Cyclic spectrum estimate: complex values over a grid of cyclic
/// frequencies (rows) and spectral bins (columns).
#[derive(Debug, Clone)]
pub struct ScdEstimate {
    /// `values[p][k]` is the estimate at cyclic frequency `alphas[p]`,
    /// spectral bin `k`.
    pub values: Vec<Vec<C64>>,
    /// Cyclic frequencies in rad/sample.
    pub alphas: Vec<f64>,
    /// Spectral bin frequencies in rad/sample.
    pub bin_freqs: Vec<f64>,
    /// Number of frames averaged.
    pub frame_count: usize,
}

impl ScdEstimate {
    /// CSV export: one row per cyclic frequency, complex values as
    /// re/im column pairs, with a bin-frequency header (all in Hz).
    pub fn write_csv<W: Write>(&self, fs: f64, mut w: W) -> Result<()> {
        write!(w, "alpha_hz")?;
        for f in &self.bin_freqs {
            let hz = f * fs / std::f64::consts::TAU;
            write!(w, ",re_{hz:.3},im_{hz:.3}")?;
        }
        writeln!(w)?;
        for (p, row) in self.values.iter().enumerate() {
            let hz = self.alphas[p] * fs / std::f64::consts::TAU;
            write!(w, "{hz:.6}")?;
            for v in row {
                write!(w, ",{:e},{:e}", v.re, v.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// One row of the ACP estimator:
/// `S_hat(alpha_p, w_k) = (1/L) * sum_l Y(w_k, l) * conj(Xshift(w_k, l))`
/// where `x_shifted` is the STFT of the `alpha_p`-modulated signal, so its
/// bin `k` holds `X(w_k - alpha_p)`.
pub fn acp_estimate(
    y: &StftTensor,
    y_channel: usize,
    x_shifted: &StftTensor,
    x_channel: usize,
) -> Result<Vec<C64>> {
    if y.frames() != x_shifted.frames() {
        return Err(Error::FrameCountMismatch {
            left: y.frames(),
            right: x_shifted.frames(),
        });
    }
    let n_bins = y.bins().min(x_shifted.bins());
    let l = y.frames();
    let scale = 1.0 / l as f64;
    let mut row = vec![C64::new(0.0, 0.0); n_bins];
    for frame in 0..l {
        let yf = y.frame(y_channel, frame);
        let xf = x_shifted.frame(x_channel, frame);
        for k in 0..n_bins {
            row[k] += yf[k] * xf[k].conj();
        }
    }
    for v in row.iter_mut() {
        *v *= scale;
    }
    Ok(row)
}

/// ACP cyclic spectrum of one channel over a list of cyclic frequencies.
pub fn scd_matrix(
    audio: &AudioBuffer,
    channel: usize,
    alphas: &[f64],
    win: &WindowSpec,
) -> Result<ScdEstimate> {
    let mono = audio.mono(channel);
    let base = stft_complex(&modulate(&mono, 0.0)?, win)?;
    let n_bins = win.half_bins();
    let mut values = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let shifted = stft_complex(&modulate(&mono, alpha)?, win)?;
        let mut row = acp_estimate(&base, 0, &shifted, 0)?;
        row.truncate(n_bins);
        if alpha == 0.0 {
            // self-spectrum: exactly real by construction, keep it that way
            for v in row.iter_mut() {
                v.im = 0.0;
            }
        }
        values.push(row);
    }
    Ok(ScdEstimate {
        values,
        alphas: alphas.to_vec(),
        bin_freqs: (0..n_bins)
            .map(|k| std::f64::consts::TAU * k as f64 / win.len() as f64)
            .collect(),
        frame_count: base.frames(),
    })
}

/// STFTs of the signal modulated by every shift in a [`CyclicSet`], stacked
/// per bin into vectors of length `M*C`.
///
/// Row ordering is mic-major within shift-major: entry `c*M + m` is channel
/// `m` of the signal modulated by `alpha_c`. Block 0 is the unmodulated STFT.
/// Only the `K/2+1` output bins are stored; the modulated blocks still carry
/// the correct wrapped content because each modulated signal is transformed
/// with a full complex DFT.
#[derive(Debug, Clone)]
pub struct ModulatedStftStack {
    /// Flat layout `[bin][frame][row]`.
    data: Vec<C64>,
    m: usize,
    c: usize,
    n_bins: usize,
    n_frames: usize,
    k: usize,
    fs: f64,
    signal_len: usize,
    set: CyclicSet,
}

impl ModulatedStftStack {
    pub fn mics(&self) -> usize {
        self.m
    }

    pub fn shifts(&self) -> usize {
        self.c
    }

    /// Stacked dimension `M*C`.
    pub fn mc(&self) -> usize {
        self.m * self.c
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

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn set(&self) -> &CyclicSet {
        &self.set
    }

    /// The stacked vector `x(A, w_k, l)`.
    pub fn vector(&self, bin: usize, frame: usize) -> &[C64] {
        let mc = self.mc();
        let start = (bin * self.n_frames + frame) * mc;
        &self.data[start..start + mc]
    }

    pub(crate) fn vector_mut(&mut self, bin: usize, frame: usize) -> &mut [C64] {
        let mc = self.mc();
        let start = (bin * self.n_frames + frame) * mc;
        &mut self.data[start..start + mc]
    }

    pub(crate) fn zeros(
        m: usize,
        c: usize,
        n_bins: usize,
        n_frames: usize,
        k: usize,
        fs: f64,
        signal_len: usize,
        set: CyclicSet,
    ) -> Self {
        Self {
            data: vec![C64::new(0.0, 0.0); m * c * n_bins * n_frames],
            m,
            c,
            n_bins,
            n_frames,
            k,
            fs,
            signal_len,
            set,
        }
    }
}

/// Modulate, transform, and stack all channels of `audio` over `set`.
pub fn build_stack(
    audio: &AudioBuffer,
    set: &CyclicSet,
    win: &WindowSpec,
) -> Result<ModulatedStftStack> {
    let m = audio.num_channels();
    let c = set.count();
    let n_bins = win.half_bins();
    let blocks: Vec<StftTensor> = set
        .shifts()
        .iter()
        .map(|&alpha| stft_complex(&modulate(audio, alpha)?, win))
        .collect::<Result<_>>()?;
    let n_frames = blocks[0].frames();
    let mut stack = ModulatedStftStack::zeros(
        m,
        c,
        n_bins,
        n_frames,
        win.len(),
        audio.fs(),
        audio.len(),
        set.clone(),
    );
    for (ci, block) in blocks.iter().enumerate() {
        for mi in 0..m {
            for frame in 0..n_frames {
                let src = block.frame(mi, frame);
                for bin in 0..n_bins {
                    stack.vector_mut(bin, frame)[ci * m + mi] = src[bin];
                }
            }
        }
    }
    Ok(stack)
}

/// Role of a spectral-spatial covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovRole {
    /// Noisy observation covariance `S_x`.
    Noisy,
    /// Noise covariance `S_v`.
    Noise,
    /// Target covariance `S_d`.
    Target,
}

/// Per-bin `MC x MC` Hermitian covariance matrices.
#[derive(Debug, Clone)]
pub struct SpectralSpatialCov {
    mats: Vec<DMatrix<C64>>,
    role: CovRole,
    m: usize,
}

impl SpectralSpatialCov {
    pub fn from_mats(mats: Vec<DMatrix<C64>>, role: CovRole, m: usize) -> Self {
        Self { mats, role, m }
    }

    pub fn role(&self) -> CovRole {
        self.role
    }

    /// Spatial block size `M`.
    pub fn mics(&self) -> usize {
        self.m
    }

    pub fn bins(&self) -> usize {
        self.mats.len()
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn mat(&self, bin: usize) -> &DMatrix<C64> {
        &self.mats[bin]
    }

    pub fn mats(&self) -> &[DMatrix<C64>] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [DMatrix<C64>] {
        &mut self.mats
    }

    /// Top-left `M x M` block: the narrowband spatial covariance of the
    /// unmodulated signal.
    pub fn narrowband_block(&self, bin: usize) -> DMatrix<C64> {
        self.mats[bin].view((0, 0), (self.m, self.m)).into_owned()
    }
}

/// Force exact Hermitian symmetry: `(S + S^H)/2` with real diagonal.
pub(crate) fn hermitianize(mat: &mut DMatrix<C64>) {
    let n = mat.nrows();
    for i in 0..n {
        mat[(i, i)] = C64::new(mat[(i, i)].re, 0.0);
        for j in i + 1..n {
            let avg = (mat[(i, j)] + mat[(j, i)].conj()) * 0.5;
            mat[(i, j)] = avg;
            mat[(j, i)] = avg.conj();
        }
    }
}

/// Sample covariance over a frame range: `(1/|range|) * sum_l x(l) x(l)^H`
/// per bin. Entry `(c1*M+i, c2*M+j)` equals the ACP cross-estimate between
/// mic `i` shifted by `alpha_c1` and mic `j` shifted by `alpha_c2`.
pub fn assemble_cov(
    stack: &ModulatedStftStack,
    frames: Range<usize>,
    role: CovRole,
) -> Result<SpectralSpatialCov> {
    if frames.is_empty() || frames.end > stack.frames() {
        return Err(Error::EmptyFrameRange);
    }
    let mc = stack.mc();
    let scale = 1.0 / frames.len() as f64;
    let mats: Vec<DMatrix<C64>> = (0..stack.bins())
        .into_par_iter()
        .map(|bin| {
            let mut s = DMatrix::<C64>::zeros(mc, mc);
            for frame in frames.clone() {
                let x = stack.vector(bin, frame);
                // accumulate lower triangle of x x^H
                for i in 0..mc {
                    for j in 0..=i {
                        s[(i, j)] += x[i] * x[j].conj();
                    }
                }
            }
            for i in 0..mc {
                for j in 0..=i {
                    let v = s[(i, j)] * scale;
                    s[(i, j)] = v;
                    s[(j, i)] = v.conj();
                }
                s[(i, i)] = C64::new(s[(i, i)].re, 0.0);
            }
            s
        })
        .collect();
    Ok(SpectralSpatialCov::from_mats(mats, role, stack.mics()))
}

/// Per-bin ACP cross-vector `(1/L) * sum_l x(A, w_k, l) * conj(ref(w_k, l))`
/// between the stacked signal and a reference single-channel STFT.
pub fn assemble_cross(
    stack: &ModulatedStftStack,
    reference: &StftTensor,
    ref_channel: usize,
    frames: Range<usize>,
) -> Result<Vec<DVector<C64>>> {
    if frames.is_empty() || frames.end > stack.frames() {
        return Err(Error::EmptyFrameRange);
    }
    if reference.frames() != stack.frames() {
        return Err(Error::FrameCountMismatch {
            left: stack.frames(),
            right: reference.frames(),
        });
    }
    let mc = stack.mc();
    let scale = 1.0 / frames.len() as f64;
    let n_bins = stack.bins().min(reference.bins());
    let mut out = vec![DVector::<C64>::zeros(mc); n_bins];
    for frame in frames {
        let rf = reference.frame(ref_channel, frame);
        for (bin, acc) in out.iter_mut().enumerate() {
            let x = stack.vector(bin, frame);
            let r = rf[bin].conj();
            for i in 0..mc {
                acc[i] += x[i] * r;
            }
        }
    }
    for acc in out.iter_mut() {
        *acc *= C64::new(scale, 0.0);
    }
    Ok(out)
}

/// Zero every off-diagonal `M x M` block, keeping only spatial correlation.
/// Idempotent; never increases any entry magnitude.
pub fn blkdiag_project(cov: &SpectralSpatialCov, block_size: usize) -> Result<SpectralSpatialCov> {
    let dim = cov.dim();
    if block_size == 0 || dim % block_size != 0 {
        return Err(Error::DimensionMismatch {
            context: "blkdiag block size must divide matrix dimension",
            expected: dim,
            got: block_size,
        });
    }
    let mats = cov
        .mats()
        .iter()
        .map(|s| {
            let mut out = DMatrix::<C64>::zeros(dim, dim);
            let blocks = dim / block_size;
            for b in 0..blocks {
                let o = b * block_size;
                for i in 0..block_size {
                    for j in 0..block_size {
                        out[(o + i, o + j)] = s[(o + i, o + j)];
                    }
                }
            }
            out
        })
        .collect();
    Ok(SpectralSpatialCov::from_mats(mats, cov.role(), cov.mics()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::stft;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn hz_to_rad(f: f64, fs: f64) -> f64 {
        TAU * f / fs
    }

    #[test]
    fn cyclic_set_formula() {
        let fs = 16000.0;
        let set = build_cyclic_set(hz_to_rad(100.0, fs), 3, std::f64::consts::PI).unwrap();
        assert_eq!(set.count(), 3);
        for (c, &s) in set.shifts().iter().enumerate() {
            assert!((s - hz_to_rad(100.0 * c as f64, fs)).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_set_single() {
        let set = build_cyclic_set(1.0, 1, std::f64::consts::PI).unwrap();
        assert_eq!(set.shifts(), &[0.0]);
    }

    #[test]
    fn cyclic_set_nyquist_clamp() {
        // 3 kHz fundamental at 16 kHz: shifts 0, 3k, 6k fit below 8k; C clamps to 3
        let fs = 16000.0;
        let set = build_cyclic_set(hz_to_rad(3000.0, fs), 5, std::f64::consts::PI).unwrap();
        assert_eq!(set.count(), 3);
        assert!(*set.shifts().last().unwrap() < std::f64::consts::PI);
    }

    #[test]
    fn cyclic_set_rejects_unvoiced() {
        assert!(build_cyclic_set(0.0, 3, std::f64::consts::PI).is_err());
        assert!(build_cyclic_set(-1.0, 3, std::f64::consts::PI).is_err());
    }

    /// Welch PSD oracle: naive per-frame DFT of the windowed signal,
    /// magnitude squared, averaged over frames. Independent of the stft path.
    fn welch_psd_oracle(x: &[f64], k: usize, r: usize) -> Vec<f64> {
        let w: Vec<f64> = (0..k)
            .map(|n| (std::f64::consts::PI * n as f64 / k as f64).sin())
            .collect();
        let l = 1 + (x.len() - k).div_ceil(r);
        let mut psd = vec![0.0; k / 2 + 1];
        for frame in 0..l {
            for (bin, p) in psd.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for n in 0..k {
                    let s = x.get(frame * r + n).copied().unwrap_or(0.0) * w[n];
                    acc += C64::from_polar(s, -TAU * bin as f64 * n as f64 / k as f64);
                }
                *p += acc.norm_sqr();
            }
        }
        psd.iter().map(|p| p / l as f64).collect()
    }

    #[test]
    fn acp_alpha_zero_is_welch() {
        let fs = 16000.0;
        let win = WindowSpec::sqrt_hann(128, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let audio = AudioBuffer::from_mono(x.clone(), fs).unwrap();
        let scd = scd_matrix(&audio, 0, &[0.0], &win).unwrap();
        let oracle = welch_psd_oracle(&x, 128, 32);
        for k in 0..win.half_bins() {
            let got = scd.values[0][k];
            assert!(got.im == 0.0);
            assert!(got.re >= 0.0);
            let rel = (got.re - oracle[k]).abs() / oracle[k].max(1e-30);
            assert!(rel < 1e-9, "bin {k}: {} vs {}", got.re, oracle[k]);
        }
    }

    #[test]
    fn acp_mismatched_frames_rejected() {
        let fs = 16000.0;
        let win = WindowSpec::sqrt_hann(128, 32).unwrap();
        let a = AudioBuffer::from_mono(vec![0.1; 1000], fs).unwrap();
        let b = AudioBuffer::from_mono(vec![0.1; 2000], fs).unwrap();
        let sa = stft(&a, &win).unwrap();
        let sb = stft(&b, &win).unwrap();
        assert!(acp_estimate(&sa, 0, &sb, 0).is_err());
    }

    fn harmonic_signal(f0: f64, fs: f64, n: usize, harmonics: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                (1..=harmonics)
                    .map(|h| (TAU * f0 * h as f64 * i as f64 / fs).cos() / h as f64)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn acp_detects_harmonic_structure() {
        let fs = 16000.0;
        let f0 = 203.0; // off-grid fundamental
        let x = harmonic_signal(f0, fs, 32000, 8);
        let audio = AudioBuffer::from_mono(x, fs).unwrap();
        let win = WindowSpec::sqrt_hann(512, 128).unwrap();
        let alpha1 = hz_to_rad(f0, fs);
        let scd = scd_matrix(&audio, 0, &[alpha1], &win).unwrap();
        let row = &scd.values[0];
        let dw = fs / 512.0;
        let harmonic_bins: Vec<usize> = (1..=8)
            .map(|h| ((f0 * h as f64) / dw).round() as usize)
            .collect();
        let near: Vec<f64> = harmonic_bins.iter().map(|&k| row[k].norm()).collect();
        let mut off: Vec<f64> = (4..row.len() - 1)
            .filter(|k| harmonic_bins.iter().all(|&h| k.abs_diff(h) > 3))
            .map(|k| row[k].norm())
            .collect();
        off.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let off_median = off[off.len() / 2];
        for (h, &v) in near.iter().enumerate() {
            assert!(
                v > 10.0 * off_median,
                "harmonic {}: {v} vs off-median {off_median}",
                h + 1
            );
        }
    }

    #[test]
    fn stack_block_zero_is_plain_stft() {
        let fs = 16000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let audio = AudioBuffer::new(
            vec![
                (0..4000).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..4000).map(|_| rng.random::<f64>() - 0.5).collect(),
            ],
            fs,
        )
        .unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let set = build_cyclic_set(hz_to_rad(150.0, fs), 3, std::f64::consts::PI).unwrap();
        let stack = build_stack(&audio, &set, &win).unwrap();
        let plain = stft(&audio, &win).unwrap();
        assert_eq!(stack.mc(), 6);
        for mi in 0..2 {
            for frame in 0..stack.frames() {
                for bin in 0..stack.bins() {
                    let a = stack.vector(bin, frame)[mi];
                    let b = plain.value(mi, frame, bin);
                    assert_eq!(a, b, "mic {mi} frame {frame} bin {bin}");
                }
            }
        }
    }

    #[test]
    fn stack_c1_equals_plain_stft() {
        let fs = 16000.0;
        let audio = AudioBuffer::from_mono(harmonic_signal(180.0, fs, 3000, 4), fs).unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let stack = build_stack(&audio, &CyclicSet::narrowband(), &win).unwrap();
        let plain = stft(&audio, &win).unwrap();
        assert_eq!(stack.mc(), 1);
        for frame in 0..stack.frames() {
            for bin in 0..stack.bins() {
                assert_eq!(stack.vector(bin, frame)[0], plain.value(0, frame, bin));
            }
        }
    }

    #[test]
    fn stack_harmonic_coherence() {
        // blocks c and 0 strongly coherent at harmonic bins for a pure tone complex
        let fs = 16000.0;
        let f0 = 250.0;
        let audio = AudioBuffer::from_mono(harmonic_signal(f0, fs, 32000, 6), fs).unwrap();
        let win = WindowSpec::sqrt_hann(512, 128).unwrap();
        let set = build_cyclic_set(hz_to_rad(f0, fs), 3, std::f64::consts::PI).unwrap();
        let stack = build_stack(&audio, &set, &win).unwrap();
        let dw = fs / 512.0;
        for h in [2usize, 3] {
            let bin = ((f0 * h as f64) / dw).round() as usize;
            let c = h.min(2); // shift index to test against block 0
            let (mut num, mut d0, mut dc) = (C64::new(0.0, 0.0), 0.0, 0.0);
            for frame in 0..stack.frames() {
                let v = stack.vector(bin, frame);
                num += v[0] * v[c].conj();
                d0 += v[0].norm_sqr();
                dc += v[c].norm_sqr();
            }
            let coh = num.norm() / (d0 * dc).sqrt();
            assert!(coh > 0.9, "harmonic {h}: coherence {coh}");
        }
    }

    #[test]
    fn cov_single_frame_rank_one() {
        let fs = 16000.0;
        let audio = AudioBuffer::from_mono(harmonic_signal(140.0, fs, 1000, 3), fs).unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let set = build_cyclic_set(hz_to_rad(140.0, fs), 2, std::f64::consts::PI).unwrap();
        let stack = build_stack(&audio, &set, &win).unwrap();
        let cov = assemble_cov(&stack, 3..4, CovRole::Noisy).unwrap();
        let bin = 5;
        let x = stack.vector(bin, 3);
        let norm2: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let s = cov.mat(bin);
        let trace: f64 = (0..s.nrows()).map(|i| s[(i, i)].re).sum();
        assert!((trace - norm2).abs() < 1e-12 * norm2);
        // rank 1: second eigenvalue negligible
        let eig = s.clone().symmetric_eigen();
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!(ev[1].abs() < 1e-10 * ev[0].max(1e-30));
    }

    #[test]
    fn cov_blocks_match_acp() {
        // diagonal block (c, c) equals the narrowband SCM of the modulated
        // signal; cross blocks match elementwise ACP estimates
        let fs = 16000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let audio = AudioBuffer::new(
            vec![
                (0..3000).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..3000).map(|_| rng.random::<f64>() - 0.5).collect(),
            ],
            fs,
        )
        .unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let set = build_cyclic_set(hz_to_rad(200.0, fs), 2, std::f64::consts::PI).unwrap();
        let stack = build_stack(&audio, &set, &win).unwrap();
        let l = stack.frames();
        let cov = assemble_cov(&stack, 0..l, CovRole::Noisy).unwrap();
        let m = 2;
        let mods: Vec<_> = set
            .shifts()
            .iter()
            .map(|&a| stft_complex(&modulate(&audio, a).unwrap(), &win).unwrap())
            .collect();
        for c1 in 0..2 {
            for c2 in 0..2 {
                for i in 0..m {
                    for j in 0..m {
                        let row = acp_estimate(&mods[c1], i, &mods[c2], j).unwrap();
                        for bin in [2usize, 17, 60] {
                            let got = cov.mat(bin)[(c1 * m + i, c2 * m + j)];
                            let want = row[bin];
                            assert!(
                                (got - want).norm() < 1e-12 * (1.0 + want.norm()),
                                "block ({c1},{c2}) mic ({i},{j}) bin {bin}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cov_hermitian_psd() {
        let fs = 16000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let audio = AudioBuffer::new(
            vec![
                (0..5000).map(|_| rng.random::<f64>() - 0.5).collect(),
                (0..5000).map(|_| rng.random::<f64>() - 0.5).collect(),
            ],
            fs,
        )
        .unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let set = build_cyclic_set(hz_to_rad(170.0, fs), 3, std::f64::consts::PI).unwrap();
        let stack = build_stack(&audio, &set, &win).unwrap();
        let cov = assemble_cov(&stack, 0..stack.frames(), CovRole::Noisy).unwrap();
        for bin in 0..cov.bins() {
            let s = cov.mat(bin);
            let herm_err = (s - s.adjoint()).map(|v| v.norm()).max();
            let smax = s.map(|v| v.norm()).max();
            assert!(herm_err <= 1e-12 * smax.max(1e-30));
            let trace: f64 = (0..s.nrows()).map(|i| s[(i, i)].re).sum();
            let min_ev = s
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(min_ev >= -1e-10 * trace.max(1e-30), "bin {bin}: {min_ev}");
        }
    }

    #[test]
    fn cov_empty_range_rejected() {
        let fs = 16000.0;
        let audio = AudioBuffer::from_mono(vec![0.5; 1000], fs).unwrap();
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let stack = build_stack(&audio, &CyclicSet::narrowband(), &win).unwrap();
        assert!(assemble_cov(&stack, 3..3, CovRole::Noisy).is_err());
    }

    #[test]
    fn blkdiag_projection_behaviour() {
        let ones = DMatrix::<C64>::from_element(4, 4, C64::new(1.0, 0.0));
        let cov = SpectralSpatialCov::from_mats(vec![ones], CovRole::Noise, 2);
        let p = blkdiag_project(&cov, 2).unwrap();
        let s = p.mat(0);
        for i in 0..4 {
            for j in 0..4 {
                let same_block = (i < 2) == (j < 2);
                let want = if same_block { 1.0 } else { 0.0 };
                assert_eq!(s[(i, j)].re, want);
            }
        }
        // idempotent, bitwise
        let pp = blkdiag_project(&p, 2).unwrap();
        assert_eq!(pp.mat(0), p.mat(0));
        // never increases entry magnitudes
        for i in 0..4 {
            for j in 0..4 {
                assert!(s[(i, j)].norm() <= cov.mat(0)[(i, j)].norm());
            }
        }
        // dimension mismatch
        assert!(blkdiag_project(&cov, 3).is_err());
    }

    #[test]
    fn acp_variance_shrinks_with_frames() {
        // std of the ACP estimate roughly halves when L quadruples
        let fs = 16000.0;
        let f0 = 160.0;
        let alpha1 = hz_to_rad(f0, fs);
        let win = WindowSpec::sqrt_hann(256, 64).unwrap();
        let bin = ((2.0 * f0) / (fs / 256.0)).round() as usize;
        let runs = 24;
        let measure = |n: usize| -> f64 {
            let vals: Vec<f64> = (0..runs)
                .map(|r| {
                    let mut rng = ChaCha8Rng::seed_from_u64(1000 + r);
                    let x: Vec<f64> = harmonic_signal(f0, fs, n, 5)
                        .iter()
                        .map(|s| s + 0.8 * (rng.random::<f64>() - 0.5))
                        .collect();
                    let audio = AudioBuffer::from_mono(x, fs).unwrap();
                    let scd = scd_matrix(&audio, 0, &[alpha1], &win).unwrap();
                    scd.values[0][bin].norm()
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / runs as f64;
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / runs as f64).sqrt()
        };
        let s_short = measure(4000);
        let s_long = measure(16000);
        let ratio = s_long / s_short;
        assert!(
            ratio > 0.5 * 0.7 && ratio < 0.5 * 1.3,
            "std ratio {ratio} outside [0.35, 0.65]"
        );
    }
}
