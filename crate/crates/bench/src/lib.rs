//! Shared scene fixtures for the criterion benchmarks.

use cyclobeam_core::experiment::{build_scene, RunDefaults};
use cyclobeam_core::{EnhanceConfig, SceneMix};

/// A small standard scene: 2 s at 16 kHz, two microphones, -10 dB iSNR.
pub fn bench_scene() -> (SceneMix, f64, EnhanceConfig) {
    let mut defaults = RunDefaults::default();
    defaults.duration_s = 2.0;
    defaults.rt60_s = 0.3;
    let cfg = defaults.enhance_config().expect("config");
    let scene = build_scene(false, 2, -10.0, &defaults, 42).expect("scene");
    (scene.mix, scene.f0_hz, cfg)
}
