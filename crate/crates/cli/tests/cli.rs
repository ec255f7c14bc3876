//! End-to-end tests of the `cyclobeam` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_cyclobeam")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("cyclobeam_cli_tests").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Short-scene config so CLI tests stay fast.
fn write_test_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("test.cfg");
    let text = format!(
        "[sweep]\nruns = 1\nvalues = -10\nvariants = mwf,cmwf\nseed = 9\n\n[scene]\nduration_s = 2.0\nnoise_only_s = 2.0\nrt60_s = 0.2\n{extra}"
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn missing_config_fails_naming_path() {
    let out = run(&["synth-sweep", "--config", "definitely_missing.cfg"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("definitely_missing.cfg"),
        "stderr was: {stderr}"
    );
}

#[test]
fn unknown_flag_fails() {
    let out = run(&["--no-such-flag"]);
    assert!(!out.status.success());
}

#[test]
fn print_config_roundtrips() {
    let out = run(&["--print-config"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("[sweep]"));
    assert!(text.contains("eps_bin = 1.5"));
    assert!(text.contains("beta = 0.05"));
}

#[test]
fn gen_scene_then_scd_and_pitch() {
    let dir = tmp_dir("scene");
    let cfg = write_test_config(&dir, "");
    let out = run(&[
        "gen-scene",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "42",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["noisy.wav", "target.wav", "noise.wav", "noise_only.wav", "scene.txt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let meta = std::fs::read_to_string(dir.join("scene.txt")).unwrap();
    let f0: f64 = meta
        .lines()
        .find_map(|l| l.strip_prefix("f0_hz = "))
        .unwrap()
        .parse()
        .unwrap();

    let target = dir.join("target.wav");
    let out = run(&[
        "scd",
        "--input",
        target.to_str().unwrap(),
        "--f0",
        &f0.to_string(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let scd = std::fs::read_to_string(dir.join("scd.csv")).unwrap();
    let lines: Vec<&str> = scd.lines().collect();
    // header plus one row per cyclic frequency (C = 5 by default)
    assert_eq!(lines.len(), 6, "unexpected row count");
    // the alpha = 0 row is a PSD: real and non-negative
    let first_row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first_row[0], "0.000000");
    for pair in first_row[1..].chunks(2) {
        let re: f64 = pair[0].parse().unwrap();
        let im: f64 = pair[1].parse().unwrap();
        assert!(re >= 0.0 && im == 0.0);
    }

    let out = run(&[
        "pitch",
        "--input",
        target.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pitch = std::fs::read_to_string(dir.join("pitch.csv")).unwrap();
    assert!(pitch.starts_with("frame,raw_f0_hz,voiced,smoothed_f0_hz,delta_alpha"));
    // the tracked fundamental should sit near the generator's ground truth
    let stdout = String::from_utf8_lossy(&out.stdout);
    let tracked: f64 = stdout
        .split("median f0 ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(
        (tracked - f0).abs() / f0 < 0.01,
        "tracked {tracked} vs truth {f0}"
    );
}

#[test]
fn enhance_collapse_c1_matches_mwf() {
    let dir = tmp_dir("collapse");
    let cfg1 = write_test_config(&dir, "\n[beamformer]\nshifts = 1\n");
    let out = run(&[
        "gen-scene",
        "--config",
        cfg1.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = std::fs::read_to_string(dir.join("scene.txt")).unwrap();
    let f0: f64 = meta
        .lines()
        .find_map(|l| l.strip_prefix("f0_hz = "))
        .unwrap()
        .parse()
        .unwrap();

    let mut outputs = Vec::new();
    for (variant, sub) in [("cmwf", "cyclic"), ("mwf", "narrowband")] {
        let out_sub = dir.join(sub);
        std::fs::create_dir_all(&out_sub).unwrap();
        let out = run(&[
            "enhance",
            "--noisy",
            dir.join("noisy.wav").to_str().unwrap(),
            "--noise",
            dir.join("noise_only.wav").to_str().unwrap(),
            "--variant",
            variant,
            "--f0",
            &f0.to_string(),
            "--config",
            cfg1.to_str().unwrap(),
            "--out-dir",
            out_sub.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(cyclobeam_core::AudioBuffer::read_wav(out_sub.join("enhanced.wav")).unwrap());
    }
    let max_err = outputs[0]
        .channel(0)
        .iter()
        .zip(outputs[1].channel(0))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-6, "C=1 cyclic vs narrowband differ by {max_err}");
}

#[test]
fn synth_sweep_writes_csv_and_plots() {
    let dir = tmp_dir("sweep");
    let cfg = write_test_config(&dir, "");
    let out = run(&[
        "synth-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.join("sweep_isnr.csv");
    assert!(csv.exists());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(
        "sweep,value,run,variant,si_sdr_in_db,si_sdr_out_db,improvement_db,wall_ms,status"
    ));
    assert_eq!(text.lines().count(), 3, "header plus 2 variant rows");
    let svg = dir.join("isnr.svg");
    assert!(svg.exists());
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches("<polyline").count(), 2);

    // determinism: same config and seed give identical CSV apart from wall time
    let dir2 = tmp_dir("sweep_repeat");
    let out = run(&[
        "synth-sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir2.to_str().unwrap(),
        "--no-plots",
    ]);
    assert!(out.status.success());
    let strip_wall = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| {
                let fields: Vec<&str> = l.split(',').collect();
                if fields.len() == 9 {
                    format!("{}|{}", fields[..7].join(","), fields[8])
                } else {
                    l.to_string()
                }
            })
            .collect()
    };
    let a = strip_wall(&text);
    let b = strip_wall(&std::fs::read_to_string(dir2.join("sweep_isnr.csv")).unwrap());
    assert_eq!(a, b);
}
