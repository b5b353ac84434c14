use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn resokit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resokit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn records(o: &Output) -> Vec<serde_json::Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn missing_input_is_an_io_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = resokit(&["--out", out.to_str().unwrap(), "fit", "does-not-exist.csv"]);
    assert_eq!(o.status.code(), Some(10));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    assert!(!out.exists() || std::fs::read_dir(&out).unwrap().count() == 0);
}

#[test]
fn error_kinds_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.s2p");
    std::fs::write(&bad, "# GHz S MA R 50\n6.0 0 0 1\n").unwrap();
    assert_eq!(resokit(&["fit", bad.to_str().unwrap()]).status.code(), Some(11));

    let flat = dir.path().join("flat.csv");
    let rows: String = (0..100).map(|k| format!("{},0.5,0.1\n", 6e9 + 1e3 * k as f64)).collect();
    std::fs::write(&flat, format!("freq_hz,re,im\n{rows}")).unwrap();
    assert_eq!(resokit(&["fit", flat.to_str().unwrap()]).status.code(), Some(14));

    let o =
        resokit(&["photons", "--power-dbm", "-20", "--atten-db", "-60", "--f-ghz", "6", "--qc", "0", "--qi", "1e6"]);
    assert_eq!(o.status.code(), Some(13));
    let o = resokit(&[
        "photons",
        "--power-dbm",
        "-20",
        "--chain",
        fixtures().join("chain.toml").to_str().unwrap(),
        "--f-ghz",
        "9",
        "--qc",
        "1e6",
        "--qi",
        "1e6",
    ]);
    assert_eq!(o.status.code(), Some(18));
}

#[test]
fn photons_match_the_library() {
    let o = resokit(&[
        "--format",
        "records",
        "photons",
        "--power-dbm",
        "-80",
        "--atten-db",
        "-77.9",
        "--f-ghz",
        "6",
        "--qc",
        "1.7e6",
        "--qi",
        "9.6e6",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = records(&o);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0]["kind"], "photons");
    let n = r[0]["payload"]["n_avg"].as_f64().unwrap();
    assert!((n / 0.133_400_080_993_269_97 - 1.0).abs() < 1e-10);
    assert!(r[0]["provenance"]["version"].is_string());
}

#[test]
fn bundled_trace_fits_to_its_generator() {
    let trace = fixtures().join("asr3_synthetic.s2p");
    let o = resokit(&["--format", "records", "fit", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = records(&o);
    let p = &r[0]["payload"];
    assert_eq!(r[0]["kind"], "resonance_fit");
    for (key, want) in [("f0", 6.0e9), ("qi", 9.6e6), ("qc_mag", 1.7e6)] {
        let got = p[key].as_f64().unwrap();
        assert!((got / want - 1.0).abs() < 0.01, "{key}: {got}");
    }
    let sha = r[0]["provenance"]["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);
}

#[test]
fn seeded_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        let o =
            resokit(&["--out", out.to_str().unwrap(), "--seed", seed, "synth", "--snr-db", "55", "--name", "t.csv"]);
        assert!(o.status.success());
        std::fs::read(out.join("t.csv")).unwrap()
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    assert_eq!(a, b);
    assert_ne!(a, c);

    let fit = |sub: &str| {
        let o = resokit(&["--format", "records", "fit", dir.path().join(sub).join("t.csv").to_str().unwrap()]);
        let mut r = records(&o).remove(0);
        r["provenance"]["timestamp_unix"] = 0.into();
        r["provenance"]["inputs"][0]["path"] = "".into();
        r
    };
    assert_eq!(fit("a"), fit("b"));
}

#[test]
fn out_directory_collects_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = fixtures().join("geometries.toml");
    for _ in 0..2 {
        let o = resokit(&["--out", out.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "design"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(out.join("results.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 14);
    assert!(lines.iter().all(|l| l["kind"] == "design"));
}

#[test]
fn report_passes_on_bundled_fixtures() {
    let o = resokit(&["report"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains(", 0 failed"));
    let o = resokit(&["report", "--fixtures", fixtures().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn failed_checks_set_exit_status_one() {
    let o = resokit(&["--tolerance", "asr_z=0.001", "report"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
}
