//! End-to-end runs of the `floquet-nv` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use floquet_nv::analytic::{bessel_argument, AcField, CpConfig};
use floquet_nv::math::{bessel_j, NV_GYROMAGNETIC_RATIO};

const BIN: &str = env!("CARGO_BIN_EXE_floquet-nv");

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

fn base(b_ac: f64, extra: &str) -> String {
    format!(
        r#"
seed = 42

[sequence]
n_pulses = 16
t_pi = 0.0
{extra}

[field]
b_ac = {b_ac:e}
frequency_hz = 500.1e3

[readout]
n_readouts = 16384
shot_noise = false

[analysis]
orders = [1, 2, 3, 4, 5]
"#
    )
}

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn harmonics(path: &Path) -> Vec<(u32, f64, f64, bool)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["k", "frequency_hz", "amplitude", "phase_rad", "baseline", "residual", "converged"]
    );
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap(), rec[6].parse().unwrap())
        })
        .collect()
}

#[test]
fn zero_field_simulation_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &base(0.0, ""));
    let out = dir.path().join("o");
    let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let s = floquet_nv::readout::read_series(&out.join("series_probability.bin")).unwrap();
    assert_eq!(s.len(), 16384);
    assert!(s.values.iter().all(|&v| v == 0.5));
    let csv = floquet_nv::readout::read_series(&out.join("series_probability.csv")).unwrap();
    assert_eq!(csv.values, s.values);
    let manifest = fs::read_to_string(out.join("simulate_manifest.json")).unwrap();
    assert!(manifest.contains("\"schema_version\": 1"));
    assert!(manifest.contains("series_counts.bin"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = base(2e-6, "").replace("shot_noise = false", "shot_noise = true");
    let cfg = config(dir.path(), &body);
    let mut manifests = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        manifests.push(fs::read_to_string(out.join("simulate_manifest.json")).unwrap());
    }
    for f in ["series_probability.csv", "series_probability.bin", "series_counts.csv", "series_counts.bin"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let strip = |m: &str| m.lines().filter(|l| !l.contains("generated_at_unix_s")).collect::<Vec<_>>().join("\n");
    let strip_out = |m: &str| strip(m).replace("/a\"", "/b\"");
    assert_eq!(strip_out(&manifests[0]), strip(&manifests[1]));

    let other = dir.path().join("c");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "43"]);
    assert_ne!(fs::read(dir.path().join("a/series_counts.bin")).unwrap(), fs::read(other.join("series_counts.bin")).unwrap());
}

#[test]
fn weak_drive_shows_odd_peaks_and_even_only_with_readout_error() {
    // field of a 2 mVpp drive at 0.392 µT/mVpp
    let b = 2.0 * 0.392e-6;
    for (eps, expect_even) in [(0.0, false), (0.05, true)] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), &base(b, &format!("readout_tilt_error = {eps}")));
        let out = dir.path().join("o");
        let c = cfg.to_str().unwrap();
        let o = out.to_str().unwrap();
        assert_eq!(run(&["simulate", "--config", c, "--out", o]).0, 0);
        let series = out.join("series_counts.bin");
        let (code, err) = run(&["analyze", series.to_str().unwrap(), "--config", c, "--out", o]);
        assert_eq!(code, 0, "{err}");
        let h = harmonics(&out.join("harmonics.csv"));
        let get = |k: u32| *h.iter().find(|r| r.0 == k).unwrap();
        assert!((get(1).1 - 100.0).abs() < 1e-3 * 100.0 && (get(3).1 - 300.0).abs() < 1.0);
        let cp = CpConfig::resonant(16, 500.1e3, 0.0).unwrap();
        let a = bessel_argument(&cp, &AcField::from_hz(b, 500.1e3, 0.0).unwrap()).unwrap();
        assert!((get(1).2 - bessel_j(1, a).unwrap()).abs() < 1e-6);
        assert!((get(3).2 - bessel_j(3, a).unwrap().abs()).abs() < 1e-6);
        assert!(get(1).2 > 10.0 * get(3).2);
        let even = get(2).2;
        if expect_even {
            assert!((even / (eps * bessel_j(2, a).unwrap()) - 1.0).abs() < 0.1, "{even}");
        } else {
            assert!(even < 1e-6, "{even}");
        }
        assert!(fs::read_to_string(out.join("spectrum.csv")).unwrap().starts_with("bin,frequency_hz,re,im,magnitude\n"));
    }
}

#[test]
fn noise_only_series_has_no_significant_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &base(0.0, "").replace("shot_noise = false", "shot_noise = true"));
    let out = dir.path().join("o");
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    assert_eq!(run(&["simulate", "--config", c, "--out", o]).0, 0);
    let series = out.join("series_counts.csv");
    assert_eq!(run(&["analyze", series.to_str().unwrap(), "--config", c, "--out", o]).0, 0);
    let readout = floquet_nv::readout::ReadoutConfig::default();
    // per-sample probability noise σ = √µ / contrast; bin amplitude floor 2σ/√n
    let mu = readout.n_seq as f64 * readout.t_read * 0.5 * (readout.i0 + readout.i1);
    let floor = 2.0 * mu.sqrt() / readout.contrast_counts() / (16384f64).sqrt();
    for (k, _, amp, converged) in harmonics(&out.join("harmonics.csv")) {
        assert!(!converged || amp < 5.0 * floor, "k={k} amplitude {amp} floor {floor}");
    }
}

#[test]
fn numeric_and_analytic_modes_agree_for_short_pulses() {
    let dir = tempfile::tempdir().unwrap();
    let body = base(1.5e-6, "").replace("n_readouts = 16384", "n_readouts = 64").replace("t_pi = 0.0", "t_pi = 0.1e-9");
    let cfg = config(dir.path(), &body);
    let c = cfg.to_str().unwrap();
    let mut series = Vec::new();
    for mode in ["analytic", "numeric"] {
        let out = dir.path().join(mode);
        assert_eq!(run(&["simulate", "--config", c, "--out", out.to_str().unwrap(), "--mode", mode]).0, 0);
        series.push(floquet_nv::readout::read_series(&out.join("series_probability.bin")).unwrap());
    }
    for (a, n) in series[0].values.iter().zip(&series[1].values) {
        assert!((a - n).abs() < 1e-3);
    }
}

#[test]
fn analytic_map_command() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{}\n[map]\namplitudes = [0.0, 20e-6, 118e-6]\nmax_order = 251\n", base(0.0, ""));
    let cfg = config(dir.path(), &body);
    let out = dir.path().join("o");
    assert_eq!(run(&["map", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).0, 0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("map.json")).unwrap()).unwrap();
    assert_eq!(doc["kind"], "harmonic_map");
    assert_eq!(doc["data"]["shape"], serde_json::json!([3, 126]));
    let csv = fs::read_to_string(out.join("map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

fn bessel_rows(c: f64, drives: &[f64]) -> String {
    let kappa = 2.0 * 16.0 * NV_GYROMAGNETIC_RATIO / (2.0 * std::f64::consts::PI * 500.1e3);
    let mut s = String::from("drive,k,amplitude\n");
    for &v in drives {
        for k in [1, 11, 51] {
            s += &format!("{v},{k},{}\n", bessel_j(k, kappa * c * v).unwrap().abs());
        }
    }
    s
}

#[test]
fn calibrate_bessel_and_ill_posed_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{}\n[calibration]\nkind = \"bessel\"\n", base(0.0, "")));
    let c = cfg.to_str().unwrap();
    let data = dir.path().join("points.csv");
    let drives: Vec<f64> = (1..=20).map(|i| 15.0 * i as f64).collect();
    fs::write(&data, bessel_rows(0.392e-6, &drives)).unwrap();
    let out = dir.path().join("o");
    let (code, err) = run(&["calibrate", data.to_str().unwrap(), "--config", c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    let coef = doc["data"]["conversion_coefficient"].as_f64().unwrap();
    assert!((coef / 0.392e-6 - 1.0).abs() < 1e-8);

    fs::write(&data, bessel_rows(0.392e-6, &[100.0])).unwrap();
    let (code, err) = run(&["calibrate", data.to_str().unwrap(), "--config", c, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("distinct drive"), "{err}");
}

#[test]
fn calibrate_tau_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        &format!("{}\n[calibration]\nkind = \"tau_sweep\"\nexclusion_windows = [{{ lo_hz = 299e3, hi_hz = 301e3 }}]\n", base(0.0, "")),
    );
    let cp = CpConfig::resonant(16, 500.1e3, 0.0).unwrap();
    let f = AcField::from_hz(2e-6, 500.1e3, 0.0).unwrap();
    let taus: Vec<f64> = (0..150).map(|i| 0.5 / (420e3 + 1.1e3 * i as f64)).collect();
    let pts = floquet_nv::calibration::tau_sweep_dataset(&taus, &cp, &f).unwrap();
    let mut text = String::from("tau,p0\n");
    for p in pts {
        text += &format!("{:e},{:e}\n", p.tau, p.p0);
    }
    let data = dir.path().join("sweep.csv");
    fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let (code, err) = run(&["calibrate", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("calibration.json")).unwrap()).unwrap();
    assert!((doc["data"]["b_ac"].as_f64().unwrap() / 2e-6 - 1.0).abs() < 1e-6);
}

#[test]
fn usage_and_config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["simulate"]).0, 1);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&[]).0, 1);
    assert_eq!(run(&["--help"]).0, 0);
    let cfg = config(dir.path(), &format!("{}\nunknown_key = 3\n", base(0.0, "")));
    let (code, err) = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("unknown"), "{err}");
    let cfg = config(dir.path(), &base(0.0, ""));
    let missing = dir.path().join("missing.bin");
    assert_eq!(run(&["analyze", missing.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 1);
    assert_eq!(run(&["map", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]).0, 1);
}

#[test]
fn shipped_configs_load_and_run() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let mut names: Vec<_> = fs::read_dir(&configs).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    assert!(names.len() >= 4);
    for p in &names {
        floquet_nv::cli::RunConfig::load(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().to_str().unwrap();
    let c = configs.join("simulate.toml");
    let c = c.to_str().unwrap();
    assert_eq!(run(&["simulate", "--config", c, "--out", o]).0, 0);
    let series = dir.path().join("series_counts.bin");
    assert_eq!(run(&["analyze", series.to_str().unwrap(), "--config", c, "--out", o]).0, 0);
    let h = harmonics(&dir.path().join("harmonics.csv"));
    assert!(h.iter().filter(|r| r.0 % 2 == 1).all(|r| r.3), "{h:?}");
    let m = configs.join("map.toml");
    assert_eq!(run(&["map", "--config", m.to_str().unwrap(), "--out", o]).0, 0);
}
