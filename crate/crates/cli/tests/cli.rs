use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const IDEAL: &str = "\
[fiber]
length_km = 0.0

[apd]
dark_prob_per_gate = 0.0
";

fn tbqkd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbqkd"))
        .current_dir(dir)
        .env_remove("TBQKD_OUT_DIR")
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .args(args)
        .output()
        .expect("spawn tbqkd")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let out = tbqkd(tmp.path(), &["sweep", "--gates", "200000", "--out", "run"]);
    ok(&out);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning: only"), "{stderr}");

    let (header, rows) = csv_rows(&tmp.path().join("run/sweep.csv"));
    assert_eq!(
        header,
        ["length_km", "p_analytic", "p_mc", "ci_low", "ci_high", "dark_floor"]
    );
    assert_eq!(rows.len(), 7);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    let last = &rows[6];
    assert_eq!(last[0], 150.0);
    let expect = 3.16e-6 + 2.1e-7;
    assert!((last[1] - expect).abs() / expect < 0.01, "{}", last[1]);

    let manifest = read_json(&tmp.path().join("run/sweep_manifest.json"));
    assert_eq!(manifest["schema"], "tbqkd.manifest/1");
    assert_eq!(manifest["master_seed"], 1);
    assert_eq!(manifest["timestamp_unix"], 1_700_000_000u64);
    assert_eq!(manifest["config"]["n_gates"], 200000);
    let listed: Vec<&str> = manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(listed, ["sweep.csv", "sweep_config.toml"]);
    for f in listed {
        assert!(tmp.path().join("run").join(f).exists());
    }
}

#[test]
fn reruns_are_byte_identical_across_workers() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("w1.toml"), "workers = 1\n").unwrap();
    fs::write(tmp.path().join("w4.toml"), "workers = 4\n").unwrap();
    let args = |cfg: &'static str, out: &'static str| {
        ["--config", cfg, "--seed", "77", "--gates", "150000", "--out", out, "sweep", "--distances", "0,60,120"]
    };
    ok(&tbqkd(tmp.path(), &args("w1.toml", "a")));
    ok(&tbqkd(tmp.path(), &args("w1.toml", "b")));
    ok(&tbqkd(tmp.path(), &args("w4.toml", "c")));
    let read = |d: &str, f: &str| fs::read(tmp.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "sweep.csv"), read("b", "sweep.csv"));
    assert_eq!(read("a", "sweep.csv"), read("c", "sweep.csv"));
    assert_eq!(read("a", "sweep_manifest.json"), read("b", "sweep_manifest.json"));

    for (d, extra) in [("fa", "w1.toml"), ("fb", "w4.toml")] {
        ok(&tbqkd(
            tmp.path(),
            &["--config", extra, "--gates", "20000", "--out", d, "--format", "json", "fringe", "--temp-range", "24.9:25.1:9"],
        ));
        ok(&tbqkd(tmp.path(), &["--config", extra, "--gates", "50000", "--out", d, "bb84"]));
    }
    assert_eq!(read("fa", "fringe.json"), read("fb", "fringe.json"));
    assert_eq!(read("fa", "fringe_fit.json"), read("fb", "fringe_fit.json"));
    assert_eq!(read("fa", "bb84.json"), read("fb", "bb84.json"));
}

#[test]
fn resolved_config_reproduces_run() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.toml"), "n_gates = 100000\n[source]\nmean_photons_mu = 0.3\n").unwrap();
    ok(&tbqkd(tmp.path(), &["--config", "c.toml", "--seed", "5", "--out", "a", "sweep", "--distances", "0,50"]));
    ok(&tbqkd(tmp.path(), &["--config", "a/sweep_config.toml", "--out", "b", "sweep", "--distances", "0,50"]));
    let read = |p: &str| fs::read(tmp.path().join(p)).unwrap();
    assert_eq!(read("a/sweep.csv"), read("b/sweep.csv"));
    assert_eq!(read("a/sweep_config.toml"), read("b/sweep_config.toml"));
    let cfg = fs::read_to_string(tmp.path().join("a/sweep_config.toml")).unwrap();
    assert!(cfg.contains("mean_photons_mu = 0.3"));
    assert!(cfg.contains("master_seed = 5"));
}

#[test]
fn ideal_fringe_fits_unit_visibility() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("ideal.toml"), IDEAL).unwrap();
    let out = tbqkd(
        tmp.path(),
        &["--config", "ideal.toml", "--gates", "400000", "fringe", "--temp-range", "24.8:25.2:41"],
    );
    ok(&out);
    let (header, rows) = csv_rows(&tmp.path().join("fringe.csv"));
    assert_eq!(header, ["temperature_C", "phase_rad", "counts_A", "counts_B", "gates"]);
    assert_eq!(rows.len(), 41);
    let fit = read_json(&tmp.path().join("fringe_fit.json"));
    assert_eq!(fit["schema"], "tbqkd.fringe_fit/1");
    assert_eq!(fit["visibility"]["status"], "ok");
    for apd in ["A", "B"] {
        let v = fit["visibility"][apd]["visibility"].as_f64().unwrap();
        let se = fit["visibility"][apd]["stderr"].as_f64().unwrap();
        assert!((v - 1.0).abs() <= 3.0 * se + 1e-9, "{apd}: {v} +- {se}");
    }
    for k in 0..2 {
        assert_eq!(fit["fits"][k]["status"], "ok");
        let period = fit["fits"][k]["period"].as_f64().unwrap();
        assert!((period - 0.20667).abs() / 0.20667 < 0.01, "{period}");
    }
}

#[test]
fn failed_fit_keeps_exit_zero() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("dark.toml"), "[source]\nmean_photons_mu = 0.0\n[apd]\ndark_prob_per_gate = 0.0\n").unwrap();
    let out = tbqkd(tmp.path(), &["--config", "dark.toml", "--gates", "1000", "fringe", "--temp-range", "24.9:25.1:8"]);
    ok(&out);
    let fit = read_json(&tmp.path().join("fringe_fit.json"));
    assert_eq!(fit["fits"][0]["status"], "failed");
    assert_eq!(fit["visibility"]["status"], "failed");
}

#[test]
fn short_scan_warns() {
    let tmp = TempDir::new().unwrap();
    let out = tbqkd(tmp.path(), &["--gates", "1000", "fringe", "--temp-range", "25:25.1:6"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("shorter than one fringe period"));
}

#[test]
fn bb84_ideal_link_has_zero_qber() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("ideal.toml"), IDEAL).unwrap();
    ok(&tbqkd(tmp.path(), &["--config", "ideal.toml", "--gates", "300000", "bb84"]));
    let s = read_json(&tmp.path().join("bb84.json"));
    assert_eq!(s["qber_status"], "ok");
    assert_eq!(s["qber"], 0.0);
    assert_eq!(s["qber_from_visibility"], 0.0);
    let sift = s["sift_fraction"].as_f64().unwrap();
    let resolved = s["gates_resolved"].as_f64().unwrap();
    assert!((sift - 0.5).abs() <= 3.0 * (0.25 / resolved).sqrt());
    assert_eq!(s["key_sample_alice"], s["key_sample_bob"]);
    assert_eq!(s["key_sample_alice"].as_str().unwrap().len(), 64);
}

#[test]
fn out_dir_from_environment() {
    let tmp = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tbqkd"))
        .current_dir(tmp.path())
        .env("TBQKD_OUT_DIR", "from_env")
        .args(["--gates", "1000", "sweep", "--distances", "0"])
        .output()
        .unwrap();
    ok(&out);
    assert!(tmp.path().join("from_env/sweep.csv").exists());
}

#[test]
fn malformed_config_exits_1_with_location() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "n_gates = 10\n[apd]\nquantum_efficency = 0.2\n").unwrap();
    let out = tbqkd(tmp.path(), &["--config", "bad.toml", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.toml: line 3"), "{stderr}");
    assert!(stderr.contains("quantum_efficency"), "{stderr}");

    fs::write(tmp.path().join("range.toml"), "[apd]\nquantum_efficiency = 1.5\n").unwrap();
    let out = tbqkd(tmp.path(), &["--config", "range.toml", "sweep"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("quantum_efficiency"));
}

#[test]
fn usage_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    for args in [
        &["sweep", "--distances", "5,-1"][..],
        &["fringe", "--temp-range", "3:1:5"],
        &["--format", "xml", "sweep"],
        &["launch"],
        &["--config", "missing.toml", "bb84"],
    ] {
        let out = tbqkd(tmp.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(tbqkd(tmp.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("file"), "").unwrap();
    let out = tbqkd(tmp.path(), &["--gates", "10", "--out", "file", "sweep", "--distances", "0"]);
    assert_eq!(out.status.code(), Some(2));
}
