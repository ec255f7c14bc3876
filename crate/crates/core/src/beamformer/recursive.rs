//! Recursive enhancement: per-frame covariance updates gated by a pitch
//! track, with re-modulation only when the smoothed fundamental changes.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rustfft::{Fft, FftPlanner};

use crate::audio::AudioBuffer;
use crate::cyclic::{
    assemble_cov, blkdiag_project, build_cyclic_set, build_stack, CovRole, CyclicSet,
};
use crate::error::{Error, Result};
use crate::pitch::PitchTrack;
use crate::stft::{frame_count, istft, SpectrumKind, StftTensor, WindowSpec};
use crate::C64;

use super::{
    cmwf_weights_blind, cmwf_weights_oracle_plus, cmwf_weights_oracle_pp, route_bins,
    BinKind, BinRouting, Diagnostics, EnhanceConfig, EnhanceOutput, EstimatorKind, FilterBand,
    FrameDiag, GateReason, Variant,
};

/// Computes per-frame stacked spectra: one windowed FFT per channel per
/// shift, with the modulation phase referenced to the global sample index.
struct FrameStacker {
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    k: usize,
    hop: usize,
    n_bins: usize,
}

impl FrameStacker {
    fn new(win: &WindowSpec) -> Self {
        Self {
            window: win.window(),
            fft: FftPlanner::new().plan_fft_forward(win.len()),
            k: win.len(),
            hop: win.hop(),
            n_bins: win.half_bins(),
        }
    }

    /// `out[bin]` receives the stacked vector `x(A, w_bin, frame)`; each
    /// entry must already have length `M * C`.
    fn stack_frame(
        &self,
        audio: &AudioBuffer,
        frame: usize,
        set: &CyclicSet,
        out: &mut [DVector<C64>],
    ) {
        let m = audio.num_channels();
        let offset = frame * self.hop;
        let mut buf = vec![C64::new(0.0, 0.0); self.k];
        for (c, &alpha) in set.shifts().iter().enumerate() {
            for mi in 0..m {
                let samples = audio.channel(mi);
                for n in 0..self.k {
                    let s = samples.get(offset + n).copied().unwrap_or(0.0);
                    let phase = alpha * (offset + n) as f64;
                    buf[n] = C64::from_polar(s * self.window[n], phase);
                }
                self.fft.process(&mut buf);
                for bin in 0..self.n_bins {
                    out[bin][c * m + mi] = buf[bin];
                }
            }
        }
    }
}

/// `S <- (1 - beta) S + beta x x^H`, exactly Hermitian by construction.
fn rank_one_update(s: &mut DMatrix<C64>, x: &DVector<C64>, beta: f64) {
    let n = s.nrows();
    let keep = 1.0 - beta;
    for i in 0..n {
        for j in 0..=i {
            let v = s[(i, j)] * keep + x[i] * x[j].conj() * beta;
            s[(i, j)] = v;
            s[(j, i)] = v.conj();
        }
        s[(i, i)] = C64::new(s[(i, i)].re, 0.0);
    }
}

fn vec_update(v: &mut DVector<C64>, x: &DVector<C64>, scalar: C64, beta: f64) {
    let keep = C64::new(1.0 - beta, 0.0);
    for i in 0..v.len() {
        v[i] = v[i] * keep + x[i] * scalar * beta;
    }
}

/// Running cyclic statistics tied to one modulation set.
struct CyclicState {
    set: CyclicSet,
    routing: BinRouting,
    s_x: Vec<DMatrix<C64>>,
    /// Block-diagonal noise covariance from the noise-only segment.
    s_v: Vec<DMatrix<C64>>,
    s_d: Option<Vec<DMatrix<C64>>>,
    s_xs: Option<Vec<DVector<C64>>>,
    frame_x: Vec<DVector<C64>>,
    frame_d: Vec<DVector<C64>>,
    /// Frames absorbed since these statistics were (re)initialized.
    updates: usize,
}

/// Effective update weight: a running mean while fewer than `1/beta` frames
/// have been absorbed, the configured exponential weight afterwards. The
/// warm-up removes the initialization bias after a seed or reset.
fn effective_beta(beta: f64, updates: usize) -> f64 {
    beta.max(1.0 / (updates + 1) as f64)
}

/// Enhance with per-frame recursive averaging.
///
/// The pitch track gates processing: frames that are unvoiced or whose
/// relative pitch variation reaches `D1` fall back to the narrowband MWF.
/// When the smoothed fundamental changes, the modulations and the noise
/// statistics are rebuilt; running noisy statistics are retained unless
/// `reset_on_retune` is set. The first `burn_in` frames pass the reference
/// microphone through unprocessed.
pub fn recursive_enhance(
    noisy: &AudioBuffer,
    noise_only: &AudioBuffer,
    oracle_target: Option<&AudioBuffer>,
    track: &PitchTrack,
    variant: Variant,
    cfg: &EnhanceConfig,
) -> Result<EnhanceOutput> {
    let fs = noisy.fs();
    let m = noisy.num_channels();
    let k = cfg.win.len();
    let n_bins = cfg.win.half_bins();
    let l = frame_count(noisy.len(), k, cfg.win.hop())?;
    if track.len() < l {
        return Err(Error::FrameCountMismatch {
            left: track.len(),
            right: l,
        });
    }
    let min_noise = (cfg.min_noise_s * fs).round() as usize;
    if noise_only.len() < min_noise {
        return Err(Error::SignalTooShort {
            len: noise_only.len(),
            min: min_noise,
        });
    }
    if let Some(d) = oracle_target {
        if d.num_channels() != m || d.len() != noisy.len() {
            return Err(Error::DimensionMismatch {
                context: "oracle target geometry vs noisy input",
                expected: noisy.len(),
                got: d.len(),
            });
        }
    } else if variant.is_oracle() {
        return Err(Error::InvalidConfig(
            "oracle variant requested without a clean reverberant target".into(),
        ));
    }

    let stacker = FrameStacker::new(&cfg.win);
    let narrowband_set = CyclicSet::narrowband();

    // narrowband noise covariance, fixed for the whole run
    let nb_noise_stack = build_stack(noise_only, &narrowband_set, &cfg.win)?;
    let r_v: Vec<DMatrix<C64>> =
        assemble_cov(&nb_noise_stack, 0..nb_noise_stack.frames(), CovRole::Noise)?
            .mats()
            .to_vec();

    // narrowband running statistics, always maintained
    let mut r_x: Vec<DMatrix<C64>> = r_v.clone();
    let mut r_d: Vec<DMatrix<C64>> = vec![DMatrix::zeros(m, m); n_bins];
    let mut r_xs: Vec<DVector<C64>> = vec![DVector::zeros(m); n_bins];

    let mut cyc: Option<CyclicState> = None;
    let mut frames_accumulated = 0usize;
    let mut nb_updates = 0usize;

    let mut frame_x_nb = vec![DVector::<C64>::zeros(m); n_bins];
    let mut frame_d_nb = vec![DVector::<C64>::zeros(m); n_bins];

    let mut out = StftTensor::zeros(
        1,
        n_bins,
        l,
        k,
        SpectrumKind::Half,
        fs,
        noisy.len(),
    );
    let mut diagnostics = Diagnostics::default();
    let mut all_lambdas: Vec<f64> = Vec::new();
    // cached weights, refreshed on schedule or when the processing state flips
    let mut cached: Option<(Vec<DVector<C64>>, Vec<f64>, bool, f64)> = None;
    let mut frames_since_weights = usize::MAX / 2;

    for frame in 0..l {
        let pf = track.frames[frame];

        // rebuild modulations when the smoothed fundamental moved
        if pf.smoothed > 0.0
            && cyc
                .as_ref()
                .is_none_or(|c| c.set.alpha1() != pf.smoothed)
        {
            let set = build_cyclic_set(pf.smoothed, cfg.shifts, std::f64::consts::PI)?;
            let noise_stack = build_stack(noise_only, &set, &cfg.win)?;
            let s_v_new = blkdiag_project(
                &assemble_cov(&noise_stack, 0..noise_stack.frames(), CovRole::Noise)?,
                m,
            )?
            .mats()
            .to_vec();
            let mc = set.count() * m;
            let keep_running = cyc
                .as_ref()
                .is_some_and(|c| c.set.count() == set.count() && !cfg.reset_on_retune);
            let (s_x_new, s_d_new, s_xs_new, updates) = if keep_running {
                let old = cyc.take().unwrap();
                (old.s_x, old.s_d, old.s_xs, old.updates)
            } else {
                (
                    s_v_new.clone(),
                    oracle_target.map(|_| vec![DMatrix::zeros(mc, mc); n_bins]),
                    oracle_target.map(|_| vec![DVector::zeros(mc); n_bins]),
                    0,
                )
            };
            if cfg.reset_on_retune {
                nb_updates = 0;
            }
            let routing = route_bins(k, &set, cfg.eps_bin);
            cyc = Some(CyclicState {
                routing,
                s_x: s_x_new,
                s_v: s_v_new,
                s_d: s_d_new,
                s_xs: s_xs_new,
                frame_x: vec![DVector::zeros(mc); n_bins],
                frame_d: vec![DVector::zeros(mc); n_bins],
                updates,
                set,
            });
        }

        // per-frame stacked spectra and running updates
        stacker.stack_frame(noisy, frame, &narrowband_set, &mut frame_x_nb);
        if let Some(d) = oracle_target {
            stacker.stack_frame(d, frame, &narrowband_set, &mut frame_d_nb);
        }
        let beta_nb = effective_beta(cfg.beta, nb_updates);
        for bin in 0..n_bins {
            rank_one_update(&mut r_x[bin], &frame_x_nb[bin], beta_nb);
            if oracle_target.is_some() {
                rank_one_update(&mut r_d[bin], &frame_d_nb[bin], beta_nb);
                let s_ref = frame_d_nb[bin][0].conj();
                vec_update(&mut r_xs[bin], &frame_x_nb[bin], s_ref, beta_nb);
            }
        }
        nb_updates += 1;
        if let Some(state) = cyc.as_mut() {
            stacker.stack_frame(noisy, frame, &state.set, &mut state.frame_x);
            if let Some(d) = oracle_target {
                stacker.stack_frame(d, frame, &state.set, &mut state.frame_d);
            }
            let beta_cyc = effective_beta(cfg.beta, state.updates);
            for bin in 0..n_bins {
                rank_one_update(&mut state.s_x[bin], &state.frame_x[bin], beta_cyc);
                if let (Some(s_d), Some(s_xs)) = (state.s_d.as_mut(), state.s_xs.as_mut()) {
                    rank_one_update(&mut s_d[bin], &state.frame_d[bin], beta_cyc);
                    let s_ref = state.frame_d[bin][0].conj();
                    vec_update(&mut s_xs[bin], &state.frame_x[bin], s_ref, beta_cyc);
                }
            }
            state.updates += 1;
        }
        frames_accumulated += 1;

        // burn-in: raw reference passthrough
        if frames_accumulated <= cfg.burn_in {
            for bin in 0..n_bins {
                out.frame_mut(0, frame)[bin] = frame_x_nb[bin][0];
            }
            diagnostics.frames.push(FrameDiag {
                frame,
                alpha1: pf.smoothed,
                delta_alpha: pf.delta_alpha,
                gated_to_mwf: true,
                reason: GateReason::BurnIn,
                lambda_min: 0.0,
                lambda_mean: 0.0,
                lambda_max: 0.0,
            });
            continue;
        }

        // gate decision for cyclic variants
        let reason = if variant.band == FilterBand::Narrowband {
            GateReason::None
        } else if cyc.is_none() {
            GateReason::NoCyclicState
        } else if !pf.voiced {
            GateReason::Unvoiced
        } else if pf.delta_alpha >= cfg.smoothing.d1 {
            GateReason::RapidPitchChange
        } else {
            GateReason::None
        };
        let gated = variant.band == FilterBand::Cyclic && reason != GateReason::None;
        let use_cyclic = variant.band == FilterBand::Cyclic && !gated;

        let current_alpha = cyc.as_ref().map_or(0.0, |c| c.set.alpha1());
        let stale = match &cached {
            Some((_, _, was_cyclic, alpha)) => {
                *was_cyclic != use_cyclic
                    || *alpha != current_alpha
                    || frames_since_weights >= cfg.weight_update_interval.max(1)
            }
            None => true,
        };
        if stale {
            let mut per_bin = Vec::with_capacity(n_bins);
            let mut lambdas = Vec::with_capacity(n_bins);
            for bin in 0..n_bins {
                let cyclic_bin = use_cyclic
                    && matches!(
                        cyc.as_ref().unwrap().routing.kind(bin),
                        BinKind::Cyclic { .. }
                    );
                let result = if cyclic_bin {
                    let state = cyc.as_ref().unwrap();
                    compute_bin_weights(
                        variant.estimator,
                        &state.s_x[bin],
                        &state.s_v[bin],
                        state.s_d.as_ref().map(|s| &s[bin]),
                        state.s_xs.as_ref().map(|s| &s[bin]),
                        state.set.count(),
                        cfg,
                    )
                } else {
                    compute_bin_weights(
                        variant.estimator,
                        &r_x[bin],
                        &r_v[bin],
                        if oracle_target.is_some() {
                            Some(&r_d[bin])
                        } else {
                            None
                        },
                        if oracle_target.is_some() {
                            Some(&r_xs[bin])
                        } else {
                            None
                        },
                        1,
                        cfg,
                    )
                };
                let (w, lambda) = match result {
                    Ok(pair) => pair,
                    Err(_) => {
                        diagnostics.fallbacks += 1;
                        (DVector::zeros(m), 0.0)
                    }
                };
                lambdas.push(lambda);
                per_bin.push(w);
            }
            cached = Some((per_bin, lambdas, use_cyclic, current_alpha));
            frames_since_weights = 0;
        }
        frames_since_weights += 1;

        let (per_bin, lambdas, _, _) = cached.as_ref().unwrap();
        for bin in 0..n_bins {
            let w = &per_bin[bin];
            let cyclic_bin = use_cyclic
                && matches!(
                    cyc.as_ref().unwrap().routing.kind(bin),
                    BinKind::Cyclic { .. }
                );
            let x: &DVector<C64> = if cyclic_bin {
                &cyc.as_ref().unwrap().frame_x[bin]
            } else {
                &frame_x_nb[bin]
            };
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..w.len().min(x.len()) {
                acc += w[i].conj() * x[i];
            }
            out.frame_mut(0, frame)[bin] = acc;
        }
        let lmin = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lmean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
        all_lambdas.extend_from_slice(lambdas);
        diagnostics.frames.push(FrameDiag {
            frame,
            alpha1: pf.smoothed,
            delta_alpha: pf.delta_alpha,
            gated_to_mwf: gated,
            reason,
            lambda_min: lmin,
            lambda_mean: lmean,
            lambda_max: lmax,
        });
    }

    if let Some(state) = &cyc {
        diagnostics.cyclic_bins = state.routing.cyclic_bin_count();
        diagnostics.narrowband_bins = n_bins - diagnostics.cyclic_bins;
    } else {
        diagnostics.narrowband_bins = n_bins;
        diagnostics
            .notes
            .push("input unvoiced throughout: narrowband MWF applied".into());
    }
    diagnostics.record_lambdas(&all_lambdas);

    let enhanced = istft(&out, &cfg.win)?;
    Ok(EnhanceOutput {
        enhanced,
        diagnostics,
    })
}

fn compute_bin_weights(
    estimator: EstimatorKind,
    s_x: &DMatrix<C64>,
    s_v: &DMatrix<C64>,
    s_d: Option<&DMatrix<C64>>,
    s_xs: Option<&DVector<C64>>,
    rank_cap: usize,
    cfg: &EnhanceConfig,
) -> Result<(DVector<C64>, f64)> {
    match estimator {
        EstimatorKind::Identity => {
            let mut w = DVector::zeros(s_x.nrows().min(s_v.nrows()));
            w[0] = crate::C64::new(1.0, 0.0);
            Ok((w, 0.0))
        }
        EstimatorKind::Blind => cmwf_weights_blind(s_x, s_v, rank_cap, cfg.loading),
        EstimatorKind::OraclePlus => {
            let s_d = s_d.ok_or_else(|| Error::InvalidConfig("missing oracle stats".into()))?;
            cmwf_weights_oracle_plus(s_d, s_v, cfg.loading)
        }
        EstimatorKind::OraclePlusPlus => {
            let s_d = s_d.ok_or_else(|| Error::InvalidConfig("missing oracle stats".into()))?;
            let s_xs = s_xs.ok_or_else(|| Error::InvalidConfig("missing oracle stats".into()))?;
            cmwf_weights_oracle_pp(s_x, s_xs, s_d, cfg.loading)
        }
    }
}
