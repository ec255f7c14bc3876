//! Cyclostationary beamforming toolkit.
//!
//! Voiced, pitched sources carry statistically correlated spectral components
//! at harmonics of their fundamental frequency. This crate estimates that
//! structure (cyclic spectra via the time-averaged cyclic periodogram),
//! assembles stacked spectral-spatial covariance matrices of frequency-shifted
//! microphone signals, and computes cyclic multichannel Wiener filter (cMWF)
//! weights that exploit spatial and spectral correlation jointly. Narrowband
//! MWF baselines, oracle variants, a GEVD-based blind target estimator, a
//! recursive pitch-tracked mode, a synthetic scene simulator, and a Monte
//! Carlo experiment harness round out the toolkit.

pub mod audio;
pub mod beamformer;
pub mod cyclic;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod pitch;
pub mod plot;
pub mod scene;
pub mod stft;
pub mod sweep_config;

pub(crate) mod rng;

pub use num_complex::Complex;

/// Complex sample type used throughout.
pub type C64 = Complex<f64>;

pub use audio::{AudioBuffer, ComplexAudioBuffer, WavFormat, DEFAULT_FS};
pub use beamformer::{
    apply_weights, batch_enhance, cmwf_weights_blind, cmwf_weights_oracle_plus,
    cmwf_weights_oracle_pp, mwf_weights, recursive_enhance, route_bins, route_bins_on,
    BatchPipeline, BeamformerWeights, BinKind, BinRouting, EnhanceConfig, EnhanceOutput,
    EstimatorKind, FilterBand, RoutingGrid, Variant,
};
pub use cyclic::{
    acp_estimate, assemble_cov, assemble_cross, blkdiag_project, build_cyclic_set, build_stack,
    scd_matrix, CovRole, CyclicSet, ModulatedStftStack, ScdEstimate, SpectralSpatialCov,
};
pub use error::{Error, Result};
pub use linalg::{
    diag_loading_lambda, gevd, loaded_solve, lowrank_target, lowrank_target_mat, GevdResult,
    LoadingBounds,
};
pub use metrics::si_sdr;
pub use pitch::{
    delta_alpha, estimate_f0_nls, smooth_f0, track_pitch, F0Estimate, NlsGrid, PitchFrame,
    PitchTrack, SmoothingParams,
};
pub use scene::{
    butterworth_lowpass, convolve, gen_harmonic_target, gen_rir, gen_two_note_target, mic_delays,
    mix_scene, HarmonicGroundTruth, HarmonicSourceParams, RirKind, RirSpec, SceneConfig, SceneMix,
};
pub use stft::{
    frame_count, istft, istft_complex, modulate, stft, stft_complex, SpectrumKind, StftTensor,
    WindowKind, WindowSpec,
};
