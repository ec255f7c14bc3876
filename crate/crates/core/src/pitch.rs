//! Per-frame fundamental-frequency estimation with a grid-search NLS
//! harmonic fit, and the threshold-gated smoothing that produces the track
//! driving cyclic processing.
//!
//! The estimator scans a fundamental grid in two stages: a periodogram
//! harmonic summation over the whole grid picks a coarse candidate and a
//! model order, then an exact least-squares projection onto the harmonic
//! sinusoid subspace refines the choice over neighbouring grid points. The
//! returned fundamental always lies on the grid (or is zero when unvoiced).

use std::f64::consts::TAU;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::C64;

/// Fundamental-frequency search grid in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlsGrid {
    pub f_lo: f64,
    pub f_hi: f64,
    pub step: f64,
}

impl Default for NlsGrid {
    /// 60-500 Hz in 0.5 Hz steps: covers C2-C4 instrument notes and speech.
    fn default() -> Self {
        Self {
            f_lo: 60.0,
            f_hi: 500.0,
            step: 0.5,
        }
    }
}

/// Result of a single-frame NLS fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Estimate {
    /// Fundamental in Hz; zero when unvoiced.
    pub f0_hz: f64,
    /// Selected harmonic model order; zero when unvoiced.
    pub order: usize,
    pub voiced: bool,
}

/// Thresholds for the smoothed-fundamental recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    /// Below this relative variation the previous smoothed value is kept,
    /// avoiding unnecessary re-modulations.
    pub d0: f64,
    /// At or above this relative variation the previous value is kept
    /// because the statistics would be poorly estimated.
    pub d1: f64,
    /// Guard against division by zero in the relative variation.
    pub eps_guard: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            d0: 0.005,
            d1: 0.2,
            eps_guard: 1e-6,
        }
    }
}

/// One frame of the pitch track; frequencies in rad/sample.
#[derive(Debug, Clone, Copy)]
pub struct PitchFrame {
    /// Raw NLS estimate, zero when unvoiced.
    pub raw: f64,
    pub voiced: bool,
    /// Smoothed estimate driving the cyclic set.
    pub smoothed: f64,
    /// Relative temporal variation of the raw estimate.
    pub delta_alpha: f64,
}

/// Per-frame fundamental estimates with the smoothed sequence.
#[derive(Debug, Clone)]
pub struct PitchTrack {
    pub frames: Vec<PitchFrame>,
    pub fs: f64,
    pub hop: usize,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Median smoothed fundamental over voiced frames, in Hz; zero if the
    /// track never voices.
    pub fn median_voiced_f0_hz(&self) -> f64 {
        let mut voiced: Vec<f64> = self
            .frames
            .iter()
            .filter(|f| f.voiced && f.smoothed > 0.0)
            .map(|f| f.smoothed * self.fs / TAU)
            .collect();
        if voiced.is_empty() {
            return 0.0;
        }
        voiced.sort_by(|a, b| a.partial_cmp(b).unwrap());
        voiced[voiced.len() / 2]
    }

    /// CSV export: `frame,raw_f0_hz,voiced,smoothed_f0_hz,delta_alpha`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "frame,raw_f0_hz,voiced,smoothed_f0_hz,delta_alpha")?;
        let to_hz = self.fs / TAU;
        for (i, f) in self.frames.iter().enumerate() {
            writeln!(
                w,
                "{},{:.6},{},{:.6},{:.6e}",
                i,
                f.raw * to_hz,
                f.voiced as u8,
                f.smoothed * to_hz,
                f.delta_alpha
            )?;
        }
        Ok(())
    }
}

/// Relative temporal variation `|curr - prev| / (prev + eps)`.
pub fn delta_alpha(prev: f64, curr: f64, eps_guard: f64) -> f64 {
    (curr - prev).abs() / (prev + eps_guard)
}

/// Apply the two-case smoothing recursion to raw per-frame estimates
/// (rad/sample, zero when unvoiced).
///
/// The smoothed value updates to the raw estimate only when the relative
/// variation lies in `[D0, D1)`; otherwise the previous value is retained.
/// Voiced onsets (previous raw estimate zero) seed the smoothed value
/// directly: against a zero baseline the relative variation saturates at
/// `raw/eps` and the case rule alone could never lock on, neither at the
/// start of the track nor after an unvoiced stretch.
pub fn smooth_f0(raw: &[f64], params: &SmoothingParams, fs: f64, hop: usize) -> PitchTrack {
    let mut frames = Vec::with_capacity(raw.len());
    let mut prev_raw = 0.0f64;
    let mut smoothed = 0.0f64;
    for &r in raw {
        let da = delta_alpha(prev_raw, r, params.eps_guard);
        let onset = r > 0.0 && prev_raw == 0.0;
        let moderate_change = r > 0.0 && params.d0 <= da && da < params.d1;
        if onset || moderate_change {
            smoothed = r;
        }
        frames.push(PitchFrame {
            raw: r,
            voiced: r > 0.0,
            smoothed,
            delta_alpha: da,
        });
        prev_raw = r;
    }
    PitchTrack { frames, fs, hop }
}

/// Grid-search NLS estimate of the fundamental of one analysis frame.
///
/// Projects the frame onto harmonic sinusoid subspaces `{cos, sin}(h w n)`,
/// selecting the `(f0, order)` on the grid that maximizes explained energy
/// under an order penalty, and declares the frame voiced when the harmonic
/// subspace explains more than half of the frame energy.
pub fn estimate_f0_nls(
    frame: &[f64],
    fs: f64,
    grid: &NlsGrid,
    max_order: usize,
) -> Result<F0Estimate> {
    if grid.f_lo >= grid.f_hi {
        return Err(Error::DegenerateGrid {
            lo: grid.f_lo,
            hi: grid.f_hi,
        });
    }
    let min_len = (2.0 * fs / grid.f_lo).ceil() as usize;
    if frame.len() < min_len {
        return Err(Error::SignalTooShort {
            len: frame.len(),
            min: min_len,
        });
    }
    let unvoiced = F0Estimate {
        f0_hz: 0.0,
        order: 0,
        voiced: false,
    };

    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let centered: Vec<f64> = frame.iter().map(|s| s - mean).collect();
    let total_energy: f64 = centered.iter().map(|s| s * s).sum();
    if total_energy <= 0.0 {
        return Ok(unvoiced);
    }

    let Some((coarse_f0, order)) = coarse_scan(&centered, fs, grid, max_order) else {
        return Ok(unvoiced);
    };

    // exact-projection refinement over neighbouring grid points
    let mut best = (f64::NEG_INFINITY, coarse_f0);
    let neighbourhood = 5;
    for i in -(neighbourhood as i64)..=neighbourhood as i64 {
        let f0 = coarse_f0 + i as f64 * grid.step;
        if f0 < grid.f_lo - 1e-9 || f0 > grid.f_hi + 1e-9 {
            continue;
        }
        if (order as f64) * f0 >= 0.99 * fs / 2.0 {
            continue;
        }
        let explained = harmonic_projection_energy(&centered, fs, f0, order);
        if explained > best.0 {
            best = (explained, f0);
        }
    }
    // continuous refinement below the grid step: the downstream modulations
    // tolerate only tiny relative error in the fundamental, far less than
    // half a grid step, so maximize the exact projection by golden section
    // inside the winning cell
    best = golden_refine(&centered, fs, grid, order, best);
    // voicing: the fitted harmonics must explain most of the energy in the
    // band the model covers; harmonics above the order cap still count as
    // voiced content, so the reference band stops at (order + 1/2) * f0
    let f_cut = (order as f64 + 0.5) * best.1;
    let band = band_energy_below(&centered, fs, f_cut).max(1e-300 * total_energy.max(1e-300));
    let ratio = best.0 / band;
    if ratio > 0.5 {
        Ok(F0Estimate {
            f0_hz: best.1,
            order,
            voiced: true,
        })
    } else {
        Ok(unvoiced)
    }
}

/// Energy of the frame content below `f_cut`, via Parseval over the frame's
/// DFT bins.
fn band_energy_below(x: &[f64], fs: f64, f_cut: f64) -> f64 {
    let n = x.len();
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = fs / n as f64;
    let cut_bin = ((f_cut / df).floor() as usize).min(n / 2);
    let mut energy = buf[0].norm_sqr();
    for k in 1..=cut_bin {
        energy += buf[k].norm_sqr();
        if k != n - k {
            energy += buf[n - k].norm_sqr();
        }
    }
    energy / n as f64
}

/// Periodogram harmonic summation over the full grid. Returns the best
/// `(f0, order)` or `None` when no candidate beats the order penalty.
fn coarse_scan(centered: &[f64], fs: f64, grid: &NlsGrid, max_order: usize) -> Option<(f64, usize)> {
    let w = centered.len();
    // enough zero-padding that periodogram bins resolve the grid step
    let mut nfft = w.next_power_of_two();
    while fs / nfft as f64 > grid.step {
        nfft *= 2;
    }
    let mut buf: Vec<C64> = (0..nfft)
        .map(|n| {
            if n < w {
                let hann = 0.5 * (1.0 - (TAU * n as f64 / w as f64).cos());
                C64::new(centered[n] * hann, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
    let half = nfft / 2 + 1;
    let psd: Vec<f64> = buf[..half].iter().map(|v| v.norm_sqr()).collect();
    let df = fs / nfft as f64;

    let band_lo = (grid.f_lo / df) as usize;
    let band_hi = (((0.98 * fs / 2.0) / df) as usize).min(half);
    let mut band: Vec<f64> = psd[band_lo..band_hi].to_vec();
    let mid = band.len() / 2;
    let (_, floor, _) = band.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let floor = *floor;
    let band_max = psd[band_lo..band_hi].iter().copied().fold(0.0, f64::max);
    // a harmonic must beat the noise floor with margin (the tolerance-window
    // maximum inflates noise bins) and, on clean signals where the floor is
    // pure leakage, a small fraction of the strongest peak; this is what
    // makes a subharmonic's empty slots actually cost something
    let penalty = 10.0 * floor + 1e-4 * band_max;

    // The summation runs deep enough that a doubled candidate runs out of
    // room below Nyquist for any fundamental in the grid, which is what
    // separates dense-harmonic sources from their octave. The per-harmonic
    // tolerance window grows with the harmonic index to absorb the grid
    // quantization of the candidate fundamental.
    const MAX_SUMMATION_DEPTH: usize = 80;
    let mut best: Option<(f64, f64, usize)> = None; // (score, f0, order)
    let steps = ((grid.f_hi - grid.f_lo) / grid.step).round() as usize;
    for i in 0..=steps {
        let f0 = grid.f_lo + i as f64 * grid.step;
        let h_max = (((0.98 * fs / 2.0) / f0).floor() as usize).min(MAX_SUMMATION_DEPTH);
        if h_max == 0 {
            continue;
        }
        let mut cumulative = 0.0;
        let mut score = f64::NEG_INFINITY;
        let mut order = 0;
        for h in 1..=h_max {
            let bin = (h as f64 * f0 / df).round() as usize;
            if bin >= half {
                break;
            }
            let w = 1 + ((h as f64 * grid.step / 2.0) / df).ceil() as usize;
            let lo = bin.saturating_sub(w);
            let hi = (bin + w + 1).min(half);
            let peak = psd[lo..hi].iter().copied().fold(0.0, f64::max);
            cumulative += peak - penalty;
            if cumulative > score {
                score = cumulative;
                order = h;
            }
        }
        if score > 0.0 && best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((score, f0, order));
        }
    }
    best.map(|(_, f0, order)| (f0, order.min(max_order)))
}

/// Golden-section maximization of the exact projection energy around a grid
/// winner. Returns the refined `(energy, f0)`.
fn golden_refine(
    x: &[f64],
    fs: f64,
    grid: &NlsGrid,
    order: usize,
    seed: (f64, f64),
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut lo = (seed.1 - 0.6 * grid.step).max(grid.f_lo);
    let mut hi = (seed.1 + 0.6 * grid.step).min(grid.f_hi);
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = harmonic_projection_energy(x, fs, a, order);
    let mut fb = harmonic_projection_energy(x, fs, b, order);
    for _ in 0..24 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = harmonic_projection_energy(x, fs, a, order);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = harmonic_projection_energy(x, fs, b, order);
        }
    }
    let (energy, f0) = if fa > fb { (fa, a) } else { (fb, b) };
    if energy > seed.0 {
        (energy, f0)
    } else {
        seed
    }
}

/// Energy of the least-squares projection of `x` onto the span of
/// `{cos(h w n), sin(h w n), h = 1..=order}`.
fn harmonic_projection_energy(x: &[f64], fs: f64, f0: f64, order: usize) -> f64 {
    let n = x.len();
    let dim = 2 * order;
    let omega = TAU * f0 / fs;
    // basis via phasor recurrence, one rotation per harmonic
    let mut basis = vec![0.0f64; dim * n];
    for h in 1..=order {
        let rot = C64::from_polar(1.0, omega * h as f64);
        let mut ph = C64::new(1.0, 0.0);
        let (ccol, scol) = (2 * (h - 1), 2 * (h - 1) + 1);
        for i in 0..n {
            basis[ccol * n + i] = ph.re;
            basis[scol * n + i] = ph.im;
            ph *= rot;
        }
    }
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for a in 0..dim {
        let ca = &basis[a * n..(a + 1) * n];
        rhs[a] = ca.iter().zip(x).map(|(b, s)| b * s).sum();
        for b in 0..=a {
            let cb = &basis[b * n..(b + 1) * n];
            let dot: f64 = ca.iter().zip(cb).map(|(p, q)| p * q).sum();
            gram[(a, b)] = dot;
            gram[(b, a)] = dot;
        }
    }
    let ridge = 1e-9 * gram.trace().max(1e-300) / dim as f64;
    for i in 0..dim {
        gram[(i, i)] += ridge;
    }
    match gram.cholesky() {
        Some(chol) => {
            let coef = chol.solve(&rhs);
            rhs.dot(&coef)
        }
        None => 0.0,
    }
}

/// Estimate the raw fundamental for `n_frames` frames starting at multiples
/// of `hop`, each `window_len` samples long (zero-padded past the end), then
/// smooth. Frame indices align with STFT frames of the same hop.
#[allow(clippy::too_many_arguments)]
pub fn track_pitch(
    samples: &[f64],
    fs: f64,
    hop: usize,
    n_frames: usize,
    window_len: usize,
    grid: &NlsGrid,
    max_order: usize,
    params: &SmoothingParams,
) -> Result<PitchTrack> {
    let raw: Vec<f64> = (0..n_frames)
        .into_par_iter()
        .map(|l| {
            let start = l * hop;
            let mut frame = vec![0.0f64; window_len];
            for (i, slot) in frame.iter_mut().enumerate() {
                if let Some(&s) = samples.get(start + i) {
                    *slot = s;
                }
            }
            estimate_f0_nls(&frame, fs, grid, max_order)
                .map(|est| if est.voiced { TAU * est.f0_hz / fs } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(smooth_f0(&raw, params, fs, hop))
}
