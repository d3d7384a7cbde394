//! Binary-level behavior: exit codes, error format, determinism.

use std::path::Path;
use std::process::{Command, Output};

use bmg_core::io::wav::{wav_write, WavAudio};

fn bmg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmg"))
        .args(args)
        .current_dir(dir)
        .env_remove("BMG_SEED")
        .output()
        .expect("spawn bmg")
}

fn write_tone(path: &Path, seconds: f64, freq: f64) {
    let n = (seconds * 22050.0) as usize;
    let samples: Vec<f64> = (0..n)
        .map(|t| 0.4 * (2.0 * std::f64::consts::PI * freq * t as f64 / 22050.0).sin())
        .collect();
    wav_write(path, &WavAudio { samples, sample_rate: 22050 }).unwrap();
}

#[test]
fn failures_exit_nonzero_with_single_error_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = bmg(&["flops", "--preset", "no-such-preset"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error: "), "stderr: {stderr}");

    // missing basis for a basis preset fails before any synthesis work
    assert!(bmg(
        &["init-model", "--preset", "basis-melgan-light", "--out", "m.bmg", "--seed", "1"],
        dir.path()
    )
    .status
    .success());
    write_tone(&dir.path().join("in.wav"), 0.2, 220.0);
    let out = bmg(
        &["synth", "--model", "m.bmg", "--wav-in", "in.wav", "--out", "out.wav"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("basis"), "stderr: {stderr}");
    assert!(!dir.path().join("out.wav").exists(), "no output should be written");
}

#[test]
fn synth_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bmg(&["init-basis", "--out", "b.bmg", "--seed", "7"], d).status.success());
    assert!(bmg(
        &["init-model", "--preset", "basis-melgan-light", "--out", "m.bmg", "--seed", "3"],
        d
    )
    .status
    .success());
    write_tone(&d.join("in.wav"), 1.0, 220.0);
    for out_name in ["a.wav", "b.wav"] {
        let out = bmg(
            &["synth", "--model", "m.bmg", "--basis", "b.bmg", "--wav-in", "in.wav", "--out", out_name],
            d,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        // 22050 samples in -> 87 frames -> 22272 samples out (one frame-trim of slack)
        assert!(stdout.contains("samples=22272"), "{stdout}");
    }
    let a = std::fs::read(d.join("a.wav")).unwrap();
    let b = std::fs::read(d.join("b.wav")).unwrap();
    assert_eq!(a, b, "repeat runs must be byte-identical");
}

#[test]
fn loss_self_comparison_is_zero_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("x.wav"), 0.5, 180.0);
    let run = || {
        let out = bmg(&["loss", "--ref", "x.wav", "--est", "x.wav"], d);
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let first = run();
    assert!(first.contains("mr_stft=0.000000000"), "{first}");
    assert_eq!(first, run(), "loss output must be bit-reproducible");
    // schema: exactly these keys in order
    let keys: Vec<&str> = first.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, vec!["sc", "mg", "mr_stft", "total"]);
}

#[test]
fn loss_adversarial_adds_terms_and_respects_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("x.wav"), 0.3, 180.0);
    write_tone(&d.join("y.wav"), 0.3, 200.0);
    let run = |seed: &str| {
        let out = bmg(
            &["loss", "--ref", "x.wav", "--est", "y.wav", "--adversarial", "--seed", seed],
            d,
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let a = run("5");
    let keys: Vec<&str> = a.lines().map(|l| l.split('=').next().unwrap()).collect();
    assert_eq!(keys, vec!["sc", "mg", "mr_stft", "adv_s", "adv_f", "total"]);
    assert_eq!(a, run("5"), "same seed must reproduce");
    assert_ne!(a, run("6"), "different discriminator seed must change adversarial terms");
}

#[test]
fn loss_trims_small_mismatch_and_rejects_large() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("x.wav"), 0.5, 180.0);
    let n = (0.5 * 22050.0) as usize;
    let samples: Vec<f64> = (0..n + 100)
        .map(|t| 0.4 * (2.0 * std::f64::consts::PI * 180.0 * t as f64 / 22050.0).sin())
        .collect();
    wav_write(&d.join("y.wav"), &WavAudio { samples: samples.clone(), sample_rate: 22050 }).unwrap();
    let out = bmg(&["loss", "--ref", "x.wav", "--est", "y.wav"], d);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("trimming"));

    let mut long = samples;
    long.extend(vec![0.0; 400]);
    wav_write(&d.join("z.wav"), &WavAudio { samples: long, sample_rate: 22050 }).unwrap();
    let out = bmg(&["loss", "--ref", "x.wav", "--est", "z.wav"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("length mismatch"));
}

#[test]
fn decompose_and_learn_basis_flow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // learn-basis on an empty dir fails
    std::fs::create_dir(d.join("empty")).unwrap();
    let out = bmg(&["learn-basis", "--corpus-dir", "empty", "--out", "lb.bmg"], d);
    assert!(!out.status.success());

    // tiny corpus
    std::fs::create_dir(d.join("corpus")).unwrap();
    for i in 0..4 {
        write_tone(&d.join(format!("corpus/c{i}.wav")), 0.12, 150.0 + 40.0 * i as f64);
    }
    let out = bmg(
        &["learn-basis", "--corpus-dir", "corpus", "--out", "lb.bmg", "--iters", "6", "--seed", "2"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("basis_shape=[32, 256]"), "{stdout}");

    write_tone(&d.join("sig.wav"), 0.2, 170.0);
    let out = bmg(
        &["decompose", "--basis", "lb.bmg", "--wav-in", "sig.wav", "--out-weights", "w.bmg", "--threads", "2"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let snr: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("si_snr_db="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(snr > 10.0, "decompose reconstruction SI-SNR {snr}");
}

#[test]
fn flops_json_is_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let out = bmg(&["flops", "--preset", "basis-melgan-light", "--json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["graph"], "basis-melgan-light");
    assert!(v["gflops_per_second"].as_f64().unwrap() > 0.0);
    assert!(v["layers"].as_array().unwrap().len() > 10);
    // discriminators analyze too
    let out = bmg(&["flops", "--preset", "mfd"], dir.path());
    assert!(out.status.success());
}

#[test]
fn bmg_seed_env_var_is_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let run = |env: Option<&str>, flag: Option<&str>, name: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bmg"));
        cmd.args(["init-basis", "--out", name]).current_dir(d).env_remove("BMG_SEED");
        if let Some(e) = env {
            cmd.env("BMG_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        std::fs::read(d.join(name)).unwrap()
    };
    let via_env = run(Some("9"), None, "e.bmg");
    let via_flag = run(None, Some("9"), "f.bmg");
    assert_eq!(via_env, via_flag, "env seed must equal flag seed");
    let flag_wins = run(Some("1"), Some("9"), "g.bmg");
    assert_eq!(via_flag, flag_wins, "--seed takes precedence over BMG_SEED");
}

#[test]
fn dump_preset_lists_layers() {
    let dir = tempfile::tempdir().unwrap();
    let out = bmg(&["dump-preset", "--preset", "melgan-reference"], dir.path());
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("conv_transpose1d"));
    assert!(stdout.contains("upsampling factors [8, 8, 2, 2]"));
}
