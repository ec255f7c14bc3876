//! Batch enhancement: statistics estimated over entire signals with a fixed
//! known fundamental, as in the synthetic-data protocol.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::audio::AudioBuffer;
use crate::cyclic::{
    assemble_cov, assemble_cross, blkdiag_project, build_cyclic_set, build_stack, CovRole,
    CyclicSet, ModulatedStftStack, SpectralSpatialCov,
};
use crate::error::{Error, Result};
use crate::stft::{istft, stft};
use crate::C64;

use super::{
    apply_weights, cmwf_weights_blind, cmwf_weights_oracle_plus, cmwf_weights_oracle_pp,
    route_bins, BeamformerWeights, BinKind, BinRouting, Diagnostics, EnhanceConfig,
    EnhanceOutput, EstimatorKind, FilterBand, Variant,
};

struct OracleStats {
    /// Stacked ACP covariance of the clean reverberant target.
    s_d: SpectralSpatialCov,
    /// Cross-statistics between the stacked noisy signal and the clean
    /// target at the reference microphone.
    s_xs: Vec<DVector<C64>>,
}

/// Shared statistics of one batch scene, reusable across variants.
///
/// Preparing the pipeline builds the modulated stack of the noisy input,
/// assembles the noisy and (block-diagonal) noise covariances, and, when a
/// clean reverberant target is supplied, the oracle statistics.
pub struct BatchPipeline {
    set: CyclicSet,
    routing: BinRouting,
    stack: ModulatedStftStack,
    s_x: SpectralSpatialCov,
    s_v: SpectralSpatialCov,
    oracle: Option<OracleStats>,
    cfg: EnhanceConfig,
    mics: usize,
    unvoiced: bool,
}

impl BatchPipeline {
    /// Estimate all statistics for one scene. `f0_hz <= 0` marks the signal
    /// unvoiced: every bin is processed with the narrowband MWF.
    pub fn prepare(
        noisy: &AudioBuffer,
        noise_only: &AudioBuffer,
        oracle_target: Option<&AudioBuffer>,
        f0_hz: f64,
        cfg: &EnhanceConfig,
    ) -> Result<Self> {
        let fs = noisy.fs();
        let mics = noisy.num_channels();
        let min_noise = (cfg.min_noise_s * fs).round() as usize;
        if noise_only.len() < min_noise {
            return Err(Error::SignalTooShort {
                len: noise_only.len(),
                min: min_noise,
            });
        }
        let unvoiced = f0_hz <= 0.0;
        let set = if unvoiced {
            CyclicSet::narrowband()
        } else {
            build_cyclic_set(
                std::f64::consts::TAU * f0_hz / fs,
                cfg.shifts,
                std::f64::consts::PI,
            )?
        };
        let stack = build_stack(noisy, &set, &cfg.win)?;
        let s_x = assemble_cov(&stack, 0..stack.frames(), CovRole::Noisy)?;
        let noise_stack = build_stack(noise_only, &set, &cfg.win)?;
        let s_v_raw = assemble_cov(&noise_stack, 0..noise_stack.frames(), CovRole::Noise)?;
        let s_v = blkdiag_project(&s_v_raw, mics)?;
        let oracle = match oracle_target {
            Some(d) => {
                if d.num_channels() != mics || d.len() != noisy.len() {
                    return Err(Error::DimensionMismatch {
                        context: "oracle target geometry vs noisy input",
                        expected: noisy.len(),
                        got: d.len(),
                    });
                }
                let d_stack = build_stack(d, &set, &cfg.win)?;
                let s_d = assemble_cov(&d_stack, 0..d_stack.frames(), CovRole::Target)?;
                let ref_stft = stft(&d.mono(0), &cfg.win)?;
                let s_xs = assemble_cross(&stack, &ref_stft, 0, 0..stack.frames())?;
                Some(OracleStats { s_d, s_xs })
            }
            None => None,
        };
        let routing = if unvoiced {
            BinRouting::all_narrowband(stack.bins(), cfg.eps_bin)
        } else {
            route_bins(cfg.win.len(), &set, cfg.eps_bin)
        };
        Ok(Self {
            set,
            routing,
            stack,
            s_x,
            s_v,
            oracle,
            cfg: cfg.clone(),
            mics,
            unvoiced,
        })
    }

    pub fn routing(&self) -> &BinRouting {
        &self.routing
    }

    pub fn set(&self) -> &CyclicSet {
        &self.set
    }

    fn oracle(&self) -> Result<&OracleStats> {
        self.oracle.as_ref().ok_or_else(|| {
            Error::InvalidConfig(
                "oracle variant requested without a clean reverberant target".into(),
            )
        })
    }

    fn narrowband_bin(
        &self,
        bin: usize,
        estimator: EstimatorKind,
    ) -> Result<(DVector<C64>, f64)> {
        if estimator == EstimatorKind::Identity {
            let mut w = DVector::zeros(self.mics);
            w[0] = crate::C64::new(1.0, 0.0);
            return Ok((w, 0.0));
        }
        let r_x = self.s_x.narrowband_block(bin);
        let r_v = self.s_v.narrowband_block(bin);
        match estimator {
            EstimatorKind::Blind => cmwf_weights_blind(&r_x, &r_v, 1, self.cfg.loading),
            EstimatorKind::OraclePlus => {
                let r_d = self.oracle()?.s_d.narrowband_block(bin);
                cmwf_weights_oracle_plus(&r_d, &r_v, self.cfg.loading)
            }
            EstimatorKind::OraclePlusPlus => {
                let o = self.oracle()?;
                let r_d = o.s_d.narrowband_block(bin);
                let r_xs = o.s_xs[bin].rows(0, self.mics).into_owned();
                cmwf_weights_oracle_pp(&r_x, &r_xs, &r_d, self.cfg.loading)
            }
            EstimatorKind::Identity => unreachable!(),
        }
    }

    fn cyclic_bin(&self, bin: usize, estimator: EstimatorKind) -> Result<(DVector<C64>, f64)> {
        if estimator == EstimatorKind::Identity {
            return self.narrowband_bin(bin, estimator);
        }
        let rank_cap = self.set.count();
        match estimator {
            EstimatorKind::Blind => cmwf_weights_blind(
                self.s_x.mat(bin),
                self.s_v.mat(bin),
                rank_cap,
                self.cfg.loading,
            ),
            EstimatorKind::OraclePlus => {
                let o = self.oracle()?;
                cmwf_weights_oracle_plus(o.s_d.mat(bin), self.s_v.mat(bin), self.cfg.loading)
            }
            EstimatorKind::OraclePlusPlus => {
                let o = self.oracle()?;
                cmwf_weights_oracle_pp(
                    self.s_x.mat(bin),
                    &o.s_xs[bin],
                    o.s_d.mat(bin),
                    self.cfg.loading,
                )
            }
            EstimatorKind::Identity => unreachable!(),
        }
    }

    /// Per-bin weights for one variant. Failed cyclic bins degrade to the
    /// narrowband MWF; failed narrowband bins degrade to zero weights.
    pub fn weights(&self, variant: Variant) -> Result<(BeamformerWeights, usize)> {
        if variant.is_oracle() {
            self.oracle()?;
        }
        let bins = self.stack.bins();
        let computed: Vec<(DVector<C64>, f64, usize)> = (0..bins)
            .into_par_iter()
            .map(|bin| {
                let use_cyclic = variant.band == FilterBand::Cyclic
                    && matches!(self.routing.kind(bin), BinKind::Cyclic { .. });
                if use_cyclic {
                    match self.cyclic_bin(bin, variant.estimator) {
                        Ok((w, lambda)) => (w, lambda, 0),
                        Err(_) => match self.narrowband_bin(bin, variant.estimator) {
                            Ok((w, lambda)) => (w, lambda, 1),
                            Err(_) => (DVector::zeros(self.mics), 0.0, 1),
                        },
                    }
                } else {
                    match self.narrowband_bin(bin, variant.estimator) {
                        Ok((w, lambda)) => (w, lambda, 0),
                        Err(_) => (DVector::zeros(self.mics), 0.0, 1),
                    }
                }
            })
            .collect();
        let fallbacks = computed.iter().map(|(_, _, f)| f).sum();
        let mut per_bin = Vec::with_capacity(bins);
        let mut lambdas = Vec::with_capacity(bins);
        for (w, lambda, _) in computed {
            per_bin.push(w);
            lambdas.push(lambda);
        }
        Ok((
            BeamformerWeights {
                per_bin,
                lambdas,
                variant,
                routing: self.routing.clone(),
            },
            fallbacks,
        ))
    }

    /// Compute weights, apply them, and synthesize the enhanced signal.
    pub fn enhance(&self, variant: Variant) -> Result<EnhanceOutput> {
        let (weights, fallbacks) = self.weights(variant)?;
        let out_tensor = apply_weights(&weights, &self.stack)?;
        let enhanced = istft(&out_tensor, &self.cfg.win)?;
        let mut diagnostics = Diagnostics {
            cyclic_bins: self.routing.cyclic_bin_count(),
            narrowband_bins: self.routing.bins() - self.routing.cyclic_bin_count(),
            fallbacks,
            ..Default::default()
        };
        diagnostics.record_lambdas(&weights.lambdas);
        if self.unvoiced {
            diagnostics
                .notes
                .push("input unvoiced: narrowband MWF applied at every bin".into());
        }
        if fallbacks > 0 {
            diagnostics
                .notes
                .push(format!("{fallbacks} bins fell back after a solve failure"));
        }
        Ok(EnhanceOutput {
            enhanced,
            diagnostics,
        })
    }
}

/// One-call batch enhancement of a noisy signal given a noise-only segment,
/// a fixed fundamental (`f0_hz <= 0` for unvoiced), and optionally the clean
/// reverberant target for oracle variants.
pub fn batch_enhance(
    noisy: &AudioBuffer,
    noise_only: &AudioBuffer,
    oracle_target: Option<&AudioBuffer>,
    f0_hz: f64,
    variant: Variant,
    cfg: &EnhanceConfig,
) -> Result<EnhanceOutput> {
    BatchPipeline::prepare(noisy, noise_only, oracle_target, f0_hz, cfg)?.enhance(variant)
}
