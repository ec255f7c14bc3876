//! Cross-module pipeline tests: scene synthesis through enhancement and
//! scoring.

use cyclobeam_core::{
    batch_enhance, gen_harmonic_target, gen_rir, mic_delays, mix_scene, recursive_enhance,
    si_sdr, track_pitch, frame_count, AudioBuffer, BatchPipeline, EnhanceConfig,
    HarmonicSourceParams, RirSpec, SceneConfig, SceneMix, Variant,
};

fn mix_seed(base: u64, salt: u64) -> u64 {
    base.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(salt)
}

fn make_scene(seed: u64, isnr_db: f64, mics: usize, n: usize) -> (SceneMix, f64) {
    let fs = 16000.0;
    let params = HarmonicSourceParams::default();
    let (dry, truth) = gen_harmonic_target(&params, fs, n, seed).unwrap();
    let config = SceneConfig {
        mics,
        isnr_db,
        sensor_snr_db: 30.0,
        fs,
        noise_only_len: 32000,
    };
    let delays_t = mic_delays(0.5, 2.0, mics, 0.08, fs);
    let delays_i = mic_delays(-0.6, 2.0, mics, 0.08, fs);
    let rir_t = gen_rir(
        &RirSpec::synthetic(0.25, delays_t),
        mics,
        fs,
        mix_seed(seed, 1),
    )
    .unwrap();
    let rir_i = gen_rir(
        &RirSpec::synthetic(0.25, delays_i),
        mics,
        fs,
        mix_seed(seed, 2),
    )
    .unwrap();
    let mix = mix_scene(&dry, &config, &rir_t, &rir_i, mix_seed(seed, 3)).unwrap();
    (mix, truth.f0_hz)
}

fn interior(x: &AudioBuffer, k: usize) -> Vec<f64> {
    x.channel(0)[k..x.len() - k].to_vec()
}

#[test]
fn blind_cmwf_improves_over_blind_mwf() {
    let cfg = EnhanceConfig::default();
    let (mix, f0) = make_scene(301, -10.0, 2, 48000);
    let reference = interior(&mix.target.mono(0), 512);
    let noisy = interior(&mix.noisy.mono(0), 512);
    let in_sdr = si_sdr(&noisy, &reference).unwrap();
    let pipeline =
        BatchPipeline::prepare(&mix.noisy, &mix.noise_only, None, f0, &cfg).unwrap();
    let mwf = pipeline.enhance(Variant::MWF).unwrap();
    let cmwf = pipeline.enhance(Variant::CMWF).unwrap();
    let mwf_sdr = si_sdr(&interior(&mwf.enhanced, 512), &reference).unwrap();
    let cmwf_sdr = si_sdr(&interior(&cmwf.enhanced, 512), &reference).unwrap();
    println!("in {in_sdr:.2} dB, mwf {mwf_sdr:.2} dB, cmwf {cmwf_sdr:.2} dB");
    assert!(mwf_sdr > in_sdr, "MWF should improve on the input");
    assert!(cmwf_sdr > mwf_sdr, "cyclic should beat narrowband");
}

#[test]
fn oracle_plus_on_noiseless_input_is_transparent() {
    // zero-noise input: oracle+ output must reconstruct the reverberant
    // target nearly perfectly
    let fs = 16000.0;
    let params = HarmonicSourceParams::default();
    let (dry, truth) = gen_harmonic_target(&params, fs, 48000, 77).unwrap();
    let mics = 2;
    let config = SceneConfig {
        mics,
        isnr_db: 200.0, // interferer driven to nothing
        sensor_snr_db: 200.0,
        fs,
        noise_only_len: 32000,
    };
    let delays_t = mic_delays(0.3, 2.0, mics, 0.08, fs);
    let delays_i = mic_delays(-0.4, 2.0, mics, 0.08, fs);
    let rir_t = gen_rir(&RirSpec::synthetic(0.2, delays_t), mics, fs, 5).unwrap();
    let rir_i = gen_rir(&RirSpec::synthetic(0.2, delays_i), mics, fs, 6).unwrap();
    let mix = mix_scene(&dry, &config, &rir_t, &rir_i, 7).unwrap();
    let cfg = EnhanceConfig::default();
    let out = batch_enhance(
        &mix.noisy,
        &mix.noise_only,
        Some(&mix.target),
        truth.f0_hz,
        Variant::CMWF_PLUS,
        &cfg,
    )
    .unwrap();
    let reference = interior(&mix.target.mono(0), 512);
    let got = si_sdr(&interior(&out.enhanced, 512), &reference).unwrap();
    println!("noiseless oracle+ SI-SDR {got:.2} dB");
    assert!(got > 40.0, "expected > 40 dB, got {got:.2}");
}

#[test]
fn c1_collapse_all_variants() {
    let (mix, f0) = make_scene(411, -10.0, 2, 32000);
    let mut cfg = EnhanceConfig::default();
    cfg.shifts = 1;
    let pipeline = BatchPipeline::prepare(
        &mix.noisy,
        &mix.noise_only,
        Some(&mix.target),
        f0,
        &cfg,
    )
    .unwrap();
    for (nb, cyc) in [
        (Variant::MWF, Variant::CMWF),
        (Variant::MWF_PLUS, Variant::CMWF_PLUS),
        (Variant::MWF_PP, Variant::CMWF_PP),
    ] {
        let a = pipeline.enhance(nb).unwrap();
        let b = pipeline.enhance(cyc).unwrap();
        let max_err = a
            .enhanced
            .channel(0)
            .iter()
            .zip(b.enhanced.channel(0))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-8, "{nb} vs {cyc}: max err {max_err}");
    }
}

#[test]
fn unvoiced_input_runs_pure_mwf() {
    let (mix, _) = make_scene(12, -5.0, 2, 32000);
    let cfg = EnhanceConfig::default();
    let out = batch_enhance(&mix.noisy, &mix.noise_only, None, 0.0, Variant::CMWF, &cfg).unwrap();
    assert!(out
        .diagnostics
        .notes
        .iter()
        .any(|n| n.contains("unvoiced")));
    // and matches the MWF output exactly
    let mwf = batch_enhance(&mix.noisy, &mix.noise_only, None, 0.0, Variant::MWF, &cfg).unwrap();
    for (a, b) in out
        .enhanced
        .channel(0)
        .iter()
        .zip(mwf.enhanced.channel(0))
    {
        assert_eq!(a, b);
    }
}

#[test]
fn recursive_runs_and_improves() {
    let (mix, _) = make_scene(55, -10.0, 2, 32000);
    let cfg = EnhanceConfig::default();
    let fs = 16000.0;
    let n_frames = frame_count(mix.noisy.len(), 512, 128).unwrap();
    // track from the clean reverberant reference channel
    let track = track_pitch(
        mix.target.channel(0),
        fs,
        128,
        n_frames,
        2048,
        &cfg.grid,
        cfg.max_order,
        &cfg.smoothing,
    )
    .unwrap();
    let out = recursive_enhance(
        &mix.noisy,
        &mix.noise_only,
        None,
        &track,
        Variant::CMWF,
        &cfg,
    )
    .unwrap();
    assert_eq!(out.enhanced.len(), mix.noisy.len());
    // score past the burn-in region
    let skip = 8000;
    let reference = &mix.target.channel(0)[skip..mix.noisy.len() - 512];
    let noisy = &mix.noisy.channel(0)[skip..mix.noisy.len() - 512];
    let enhanced = &out.enhanced.channel(0)[skip..mix.noisy.len() - 512];
    let in_sdr = si_sdr(noisy, reference).unwrap();
    let out_sdr = si_sdr(enhanced, reference).unwrap();
    println!("recursive: in {in_sdr:.2} dB out {out_sdr:.2} dB");
    assert!(out_sdr > in_sdr, "recursive should improve: {out_sdr} vs {in_sdr}");
    // burn-in frames are flagged
    assert!(out.diagnostics.frames[..10]
        .iter()
        .all(|f| f.reason == cyclobeam_core::beamformer::GateReason::BurnIn));
}
