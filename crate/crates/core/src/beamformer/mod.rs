//! MWF and cMWF weight computation, bin routing between narrowband and
//! cyclic processing, weight application, and the batch/recursive
//! enhancement pipelines.
//!
//! Cyclic variants operate on the stacked vector of frequency-shifted
//! multichannel signals; narrowband variants on the plain microphone vector.
//! Oracle variants (`+`, `++`) consume statistics of the clean reverberant
//! target and exist to upper-bound the blind estimators.

mod batch;
mod recursive;

pub use batch::{batch_enhance, BatchPipeline};
pub use recursive::recursive_enhance;

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::cyclic::CyclicSet;
use crate::error::{Error, Result};
use crate::linalg::{diag_loading_lambda, loaded_solve, lowrank_target_mat, LoadingBounds};
use crate::pitch::{NlsGrid, SmoothingParams};
use crate::stft::{SpectrumKind, StftTensor, WindowSpec};
use crate::cyclic::ModulatedStftStack;
use crate::C64;

/// How the target statistics are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// GEVD low-rank estimate from noisy and noise covariances.
    Blind,
    /// ACP estimate of the clean reverberant target ("+").
    OraclePlus,
    /// ACP cross-statistics between noisy input and clean target ("++").
    OraclePlusPlus,
    /// Pass-through control: `w = e_0`, the unprocessed reference mic.
    Identity,
}

/// Narrowband MWF or cyclic multiband cMWF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterBand {
    Narrowband,
    Cyclic,
}

/// A beamformer variant: band plus estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub band: FilterBand,
    pub estimator: EstimatorKind,
}

impl Variant {
    pub const MWF: Variant = Variant {
        band: FilterBand::Narrowband,
        estimator: EstimatorKind::Blind,
    };
    pub const MWF_PLUS: Variant = Variant {
        band: FilterBand::Narrowband,
        estimator: EstimatorKind::OraclePlus,
    };
    pub const MWF_PP: Variant = Variant {
        band: FilterBand::Narrowband,
        estimator: EstimatorKind::OraclePlusPlus,
    };
    pub const CMWF: Variant = Variant {
        band: FilterBand::Cyclic,
        estimator: EstimatorKind::Blind,
    };
    pub const CMWF_PLUS: Variant = Variant {
        band: FilterBand::Cyclic,
        estimator: EstimatorKind::OraclePlus,
    };
    pub const CMWF_PP: Variant = Variant {
        band: FilterBand::Cyclic,
        estimator: EstimatorKind::OraclePlusPlus,
    };

    pub const IDENTITY: Variant = Variant {
        band: FilterBand::Narrowband,
        estimator: EstimatorKind::Identity,
    };

    pub const ALL: [Variant; 6] = [
        Variant::MWF,
        Variant::MWF_PLUS,
        Variant::MWF_PP,
        Variant::CMWF,
        Variant::CMWF_PLUS,
        Variant::CMWF_PP,
    ];

    pub fn is_oracle(&self) -> bool {
        matches!(
            self.estimator,
            EstimatorKind::OraclePlus | EstimatorKind::OraclePlusPlus
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.band {
            FilterBand::Narrowband => "mwf",
            FilterBand::Cyclic => "cmwf",
        };
        if self.estimator == EstimatorKind::Identity {
            return write!(f, "identity");
        }
        let suffix = match self.estimator {
            EstimatorKind::Blind => "",
            EstimatorKind::OraclePlus => "+",
            EstimatorKind::OraclePlusPlus => "++",
            EstimatorKind::Identity => unreachable!(),
        };
        write!(f, "{base}{suffix}")
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(Variant::IDENTITY);
        }
        let (base, estimator) = if let Some(b) = s.strip_suffix("++") {
            (b, EstimatorKind::OraclePlusPlus)
        } else if let Some(b) = s.strip_suffix('+') {
            (b, EstimatorKind::OraclePlus)
        } else {
            (s, EstimatorKind::Blind)
        };
        let band = match base {
            "mwf" => FilterBand::Narrowband,
            "cmwf" => FilterBand::Cyclic,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown variant '{s}' (expected mwf[+|++] or cmwf[+|++])"
                )))
            }
        };
        Ok(Variant { band, estimator })
    }
}

/// Routing decision for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinKind {
    Narrowband,
    /// Cyclic processing; `nearest_shift` is the index of the closest
    /// cyclic frequency (lowest index on ties).
    Cyclic { nearest_shift: usize },
}

/// Partition of the bins between narrowband and cyclic processing.
#[derive(Debug, Clone)]
pub struct BinRouting {
    kinds: Vec<BinKind>,
    pub eps_bin: f64,
}

impl BinRouting {
    pub fn bins(&self) -> usize {
        self.kinds.len()
    }

    pub fn kind(&self, bin: usize) -> BinKind {
        self.kinds[bin]
    }

    pub fn all_narrowband(bins: usize, eps_bin: f64) -> Self {
        Self {
            kinds: vec![BinKind::Narrowband; bins],
            eps_bin,
        }
    }

    pub fn cyclic_bin_count(&self) -> usize {
        self.kinds
            .iter()
            .filter(|k| matches!(k, BinKind::Cyclic { .. }))
            .count()
    }
}

/// Which frequency grid bins are compared against when routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoutingGrid {
    /// Every integer multiple of the fundamental below Nyquist. The stacked
    /// shifts stay aligned with target harmonics at every one of these bins,
    /// so this is where cyclic processing pays off.
    Harmonics,
    /// Only the `C` modulation frequencies themselves.
    SetOnly,
}

/// Mark as cyclic every bin whose centre lies within `eps_bin` spectral
/// resolutions of a grid frequency; the rest stay narrowband. The
/// `nearest_shift` tag resolves overlaps toward the closer frequency, lower
/// index on ties.
pub fn route_bins_on(
    k_dft: usize,
    set: &CyclicSet,
    eps_bin: f64,
    grid: RoutingGrid,
) -> BinRouting {
    let n_bins = k_dft / 2 + 1;
    let d_omega = TAU / k_dft as f64;
    let threshold = eps_bin * d_omega;
    let freqs: Vec<f64> = match grid {
        RoutingGrid::SetOnly => set.shifts().to_vec(),
        RoutingGrid::Harmonics => {
            let alpha1 = set.alpha1();
            if alpha1 <= 0.0 {
                set.shifts().to_vec()
            } else {
                let count = (std::f64::consts::PI / alpha1).ceil() as usize + 1;
                (0..count)
                    .map(|h| h as f64 * alpha1)
                    .take_while(|&a| a < std::f64::consts::PI + threshold)
                    .collect()
            }
        }
    };
    let kinds = (0..n_bins)
        .map(|bin| {
            let omega = TAU * bin as f64 / k_dft as f64;
            let mut best: Option<(f64, usize)> = None;
            for (c, &alpha) in freqs.iter().enumerate() {
                let dist = (omega - alpha).abs();
                if dist < threshold && best.is_none_or(|(d, _)| dist < d) {
                    best = Some((dist, c));
                }
            }
            match best {
                Some((_, c)) => BinKind::Cyclic { nearest_shift: c },
                None => BinKind::Narrowband,
            }
        })
        .collect();
    BinRouting { kinds, eps_bin }
}

/// [`route_bins_on`] over the harmonic grid, the pipeline default.
pub fn route_bins(k_dft: usize, set: &CyclicSet, eps_bin: f64) -> BinRouting {
    route_bins_on(k_dft, set, eps_bin, RoutingGrid::Harmonics)
}

/// Per-bin weight vectors, length `MC` on cyclic bins and `M` on narrowband
/// bins (always `M` for narrowband variants).
#[derive(Debug, Clone)]
pub struct BeamformerWeights {
    pub per_bin: Vec<DVector<C64>>,
    /// Diagonal loading used per bin.
    pub lambdas: Vec<f64>,
    pub variant: Variant,
    pub routing: BinRouting,
}

/// Narrowband robust MWF: `w = (R_x + lambda I)^{-1} R_d e_0`.
pub fn mwf_weights(
    r_x: &DMatrix<C64>,
    r_d: &DMatrix<C64>,
    lambda: f64,
) -> Result<DVector<C64>> {
    let rhs = r_d.column(0).into_owned();
    loaded_solve(r_x, lambda, &rhs)
}

/// Blind cMWF for one bin: GEVD low-rank target from `(S_x, S_v)`, loading
/// from the target trace, then `w = (S_x + lambda I)^{-1} S_d e_0`.
/// Returns the weights and the loading used.
pub fn cmwf_weights_blind(
    s_x: &DMatrix<C64>,
    s_v_blk: &DMatrix<C64>,
    rank_cap: usize,
    bounds: LoadingBounds,
) -> Result<(DVector<C64>, f64)> {
    let s_d = lowrank_target_mat(s_x, s_v_blk, rank_cap)?;
    let lambda = diag_loading_lambda(&s_d, bounds);
    let rhs = s_d.column(0).into_owned();
    Ok((loaded_solve(s_x, lambda, &rhs)?, lambda))
}

/// Oracle "+" cMWF: `w = (S_d + S_v + lambda I)^{-1} S_d e_0` with the ACP
/// estimate of the clean reverberant target.
pub fn cmwf_weights_oracle_plus(
    s_d_acp: &DMatrix<C64>,
    s_v_blk: &DMatrix<C64>,
    bounds: LoadingBounds,
) -> Result<(DVector<C64>, f64)> {
    let lambda = diag_loading_lambda(s_d_acp, bounds);
    let sum = s_d_acp + s_v_blk;
    let rhs = s_d_acp.column(0).into_owned();
    Ok((loaded_solve(&sum, lambda, &rhs)?, lambda))
}

/// Oracle "++" cMWF: `w = (S_x + lambda I)^{-1} s_xs` with the ACP
/// cross-statistics between the stacked noisy signal and the clean target at
/// the reference microphone. The loading comes from the target covariance
/// estimate supplied for that purpose.
pub fn cmwf_weights_oracle_pp(
    s_x: &DMatrix<C64>,
    s_xs: &DVector<C64>,
    s_d_for_loading: &DMatrix<C64>,
    bounds: LoadingBounds,
) -> Result<(DVector<C64>, f64)> {
    let lambda = diag_loading_lambda(s_d_for_loading, bounds);
    Ok((loaded_solve(s_x, lambda, s_xs)?, lambda))
}

/// Apply per-bin weights to the stacked tensor: `y(w_k, l) = w_k^H x(A, w_k, l)`.
/// Narrowband bins use the leading `M` entries (the unmodulated block).
/// The output is a single-channel half-spectrum tensor ready for real
/// synthesis.
pub fn apply_weights(
    weights: &BeamformerWeights,
    stack: &ModulatedStftStack,
) -> Result<StftTensor> {
    if weights.per_bin.len() != stack.bins() {
        return Err(Error::DimensionMismatch {
            context: "weights bins vs stack bins",
            expected: stack.bins(),
            got: weights.per_bin.len(),
        });
    }
    let m = stack.mics();
    let mc = stack.mc();
    let mut out = StftTensor::zeros(
        1,
        stack.bins(),
        stack.frames(),
        stack.dft_len(),
        SpectrumKind::Half,
        stack.fs(),
        stack.signal_len(),
    );
    for bin in 0..stack.bins() {
        let w = &weights.per_bin[bin];
        if w.len() != m && w.len() != mc {
            return Err(Error::DimensionMismatch {
                context: "weight length must be M or M*C",
                expected: mc,
                got: w.len(),
            });
        }
        for frame in 0..stack.frames() {
            let x = stack.vector(bin, frame);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..w.len() {
                acc += w[i].conj() * x[i];
            }
            out.frame_mut(0, frame)[bin] = acc;
        }
    }
    Ok(out)
}

/// Why a frame was processed with the narrowband MWF in recursive mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateReason {
    /// Cyclic processing ran.
    None,
    /// Still accumulating statistics; raw reference passthrough.
    BurnIn,
    Unvoiced,
    /// Relative pitch variation at or above `D1`.
    RapidPitchChange,
    /// No cyclic statistics available yet (track never voiced).
    NoCyclicState,
}

impl fmt::Display for GateReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GateReason::None => "cyclic",
            GateReason::BurnIn => "burn_in",
            GateReason::Unvoiced => "unvoiced",
            GateReason::RapidPitchChange => "rapid_pitch_change",
            GateReason::NoCyclicState => "no_cyclic_state",
        };
        write!(f, "{s}")
    }
}

/// Per-frame diagnostics of a recursive run.
#[derive(Debug, Clone, Copy)]
pub struct FrameDiag {
    pub frame: usize,
    /// Smoothed fundamental, rad/sample.
    pub alpha1: f64,
    pub delta_alpha: f64,
    pub gated_to_mwf: bool,
    pub reason: GateReason,
    pub lambda_min: f64,
    pub lambda_mean: f64,
    pub lambda_max: f64,
}

/// Run diagnostics: routing summary, loading statistics, per-frame gate log
/// (recursive mode), and free-form notes such as per-bin fallbacks.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    pub notes: Vec<String>,
    pub frames: Vec<FrameDiag>,
    pub cyclic_bins: usize,
    pub narrowband_bins: usize,
    /// Bins or frames that fell back to the narrowband MWF after a failure.
    pub fallbacks: usize,
    pub lambda_min: f64,
    pub lambda_mean: f64,
    pub lambda_max: f64,
}

impl Diagnostics {
    pub(crate) fn record_lambdas(&mut self, lambdas: &[f64]) {
        if lambdas.is_empty() {
            return;
        }
        self.lambda_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        self.lambda_max = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.lambda_mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    }

    /// CSV of the per-frame gate log:
    /// `frame,alpha1_hz,delta_alpha,gated,reason,lambda_min,lambda_mean,lambda_max`.
    pub fn write_frame_csv<W: Write>(&self, fs: f64, mut w: W) -> Result<()> {
        writeln!(
            w,
            "frame,alpha1_hz,delta_alpha,gated,reason,lambda_min,lambda_mean,lambda_max"
        )?;
        for f in &self.frames {
            writeln!(
                w,
                "{},{:.6},{:.6e},{},{},{:.3e},{:.3e},{:.3e}",
                f.frame,
                f.alpha1 * fs / TAU,
                f.delta_alpha,
                f.gated_to_mwf as u8,
                f.reason,
                f.lambda_min,
                f.lambda_mean,
                f.lambda_max
            )?;
        }
        Ok(())
    }
}

/// Output of an enhancement run.
#[derive(Debug, Clone)]
pub struct EnhanceOutput {
    pub enhanced: crate::audio::AudioBuffer,
    pub diagnostics: Diagnostics,
}

/// Shared configuration of the enhancement pipelines.
#[derive(Debug, Clone)]
pub struct EnhanceConfig {
    pub win: WindowSpec,
    /// Number of frequency shifts `C`.
    pub shifts: usize,
    /// Routing half-width in units of the spectral resolution.
    pub eps_bin: f64,
    pub loading: LoadingBounds,
    /// Recursive covariance update weight.
    pub beta: f64,
    pub smoothing: SmoothingParams,
    /// Frames accumulated before recursive weights are applied; raw
    /// reference passthrough before that.
    pub burn_in: usize,
    /// Reset running covariances when the smoothed fundamental changes.
    pub reset_on_retune: bool,
    /// Minimum noise-only duration, seconds.
    pub min_noise_s: f64,
    /// Pitch search grid (harness use).
    pub grid: NlsGrid,
    /// Harmonic order cap of the pitch estimator.
    pub max_order: usize,
    /// Pitch analysis window, samples.
    pub pitch_window: usize,
    /// Frames between weight recomputations in recursive mode; weights are
    /// also refreshed whenever the gate state or the modulation set changes.
    pub weight_update_interval: usize,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            win: WindowSpec::sqrt_hann(512, 128).expect("default window"),
            shifts: 5,
            eps_bin: 1.5,
            loading: LoadingBounds::default(),
            beta: 0.05,
            smoothing: SmoothingParams::default(),
            burn_in: 10,
            reset_on_retune: false,
            min_noise_s: 2.0,
            grid: NlsGrid::default(),
            max_order: 12,
            pitch_window: 2048,
            weight_update_interval: 8,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cyclic::build_cyclic_set;

    #[test]
    fn variant_roundtrip_names() {
        for v in Variant::ALL {
            let s = v.to_string();
            assert_eq!(Variant::from_str(&s).unwrap(), v);
        }
        assert!(Variant::from_str("mvdr").is_err());
    }

    #[test]
    fn routing_unvoiced_all_narrowband() {
        let set = CyclicSet::narrowband();
        let routing = route_bins(512, &set, 0.0);
        assert_eq!(routing.cyclic_bin_count(), 0);
    }

    #[test]
    fn routing_example_125hz_set_grid() {
        // fs=16k, K=512 (dw = 31.25 Hz), alpha1 = 125 Hz, C=3: on the
        // set-only grid, bins within 46.875 Hz of {0, 125, 250} Hz are cyclic
        let fs = 16000.0;
        let set = build_cyclic_set(TAU * 125.0 / fs, 3, std::f64::consts::PI).unwrap();
        let routing = route_bins_on(512, &set, 1.5, RoutingGrid::SetOnly);
        let dw = fs / 512.0;
        for bin in 0..routing.bins() {
            let hz = bin as f64 * dw;
            let want_cyclic = [0.0, 125.0, 250.0]
                .iter()
                .any(|&a| (hz - a).abs() < 1.5 * dw);
            let got = matches!(routing.kind(bin), BinKind::Cyclic { .. });
            assert_eq!(got, want_cyclic, "bin {bin} at {hz} Hz");
        }
        // exhaustive and exclusive by construction: every bin has one kind
        assert_eq!(
            routing.cyclic_bin_count()
                + (0..routing.bins())
                    .filter(|&b| routing.kind(b) == BinKind::Narrowband)
                    .count(),
            routing.bins()
        );
    }

    #[test]
    fn routing_harmonic_grid_covers_all_multiples() {
        let fs = 16000.0;
        let set = build_cyclic_set(TAU * 125.0 / fs, 3, std::f64::consts::PI).unwrap();
        let routing = route_bins(512, &set, 1.5);
        let dw = fs / 512.0;
        for bin in 0..routing.bins() {
            let hz = bin as f64 * dw;
            let nearest = (hz / 125.0).round() * 125.0;
            let want_cyclic = (hz - nearest).abs() < 1.5 * dw && nearest <= fs / 2.0;
            let got = matches!(routing.kind(bin), BinKind::Cyclic { .. });
            assert_eq!(got, want_cyclic, "bin {bin} at {hz} Hz");
        }
        // strictly more coverage than the set-only grid
        let set_only = route_bins_on(512, &set, 1.5, RoutingGrid::SetOnly);
        assert!(routing.cyclic_bin_count() > set_only.cyclic_bin_count());
    }

    #[test]
    fn routing_eps_zero_no_cyclic() {
        let set = build_cyclic_set(0.1, 4, std::f64::consts::PI).unwrap();
        let routing = route_bins(256, &set, 0.0);
        assert_eq!(routing.cyclic_bin_count(), 0);
    }

    #[test]
    fn mwf_identity_case() {
        let ident = DMatrix::<C64>::identity(2, 2);
        let mut r_d = DMatrix::<C64>::zeros(2, 2);
        r_d[(0, 0)] = C64::new(1.0, 0.0);
        let w = mwf_weights(&ident, &r_d, 0.0).unwrap();
        assert!((w[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(w[1].norm() < 1e-12);
    }

    #[test]
    fn mwf_zero_target_zero_weights() {
        let ident = DMatrix::<C64>::identity(3, 3);
        let r_d = DMatrix::<C64>::zeros(3, 3);
        let w = mwf_weights(&ident, &r_d, 0.1).unwrap();
        assert!(w.norm() < 1e-14);
    }
}
