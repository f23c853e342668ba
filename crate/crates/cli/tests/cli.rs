use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ls-shadows"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("{e}: {text}"))
}

#[test]
fn file_pipeline_recovers_ghz_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["ef", "estimate", "--sites", "3", "--depth", "1", "--seed", "4", "--samples", "4000", "--out", "ef.csv"]);
    ok(d, &["recon", "solve", "--ef", "ef.csv", "--out", "r.csv"]);
    ok(d, &["shadow", "collect", "--sites", "3", "--depth", "1", "--seed", "5", "--samples", "3000", "--out", "shots.ndjson"]);
    let rep = json(&ok(d, &["estimate", "fidelity", "--snapshots", "shots.ndjson", "--recon", "r.csv", "--sites", "3"]));
    let (f, se) = (rep["value"].as_f64().unwrap(), rep["stderr"].as_f64().unwrap());
    assert!((f - 1.0).abs() < 4.0 * se, "F = {f} +- {se}");
    assert_eq!(rep["n_samples"], 3000);
    assert_eq!(rep["snapshot_hash"].as_str().unwrap().len(), 64);

    // solving on the fly gives the same numbers
    let again = json(&ok(d, &["estimate", "fidelity", "--snapshots", "shots.ndjson", "--ef", "ef.csv", "--sites", "3"]));
    assert!((again["value"].as_f64().unwrap() - f).abs() < 1e-9);

    // GHZ has <ZZI> = 1
    let zz = json(&ok(d, &["estimate", "pauli", "--snapshots", "shots.ndjson", "--recon", "r.csv", "--observable", "ZZI", "--sites", "3"]));
    let (v, se) = (zz["value"].as_f64().unwrap(), zz["stderr"].as_f64().unwrap());
    assert!((v - 1.0).abs() < 4.0 * se, "<ZZI> = {v} +- {se}");
}

#[test]
fn onsite_shadow_norm_is_three_per_site() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["ef", "estimate", "--sites", "3", "--depth", "0", "--seed", "1", "--samples", "50", "--out", "ef.csv"]);
    let rep = json(&ok(d, &["shadownorm", "--ef", "ef.csv", "--observable", "ZIZ"]));
    assert!((rep["shadow_norm2"].as_f64().unwrap() - 9.0).abs() < 1e-9, "{rep}");
    // 9 / (0.1^2 * 0.05)
    assert_eq!(rep["samples"], 18000);
}

#[test]
fn framegap_of_brickwall_is_consistent_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let g = json(&ok(dir.path(), &["framegap", "--sites", "3", "--depth", "2", "--seed", "9", "--samples", "200", "--ef-samples", "500"]));
    let (delta, se) = (g["delta"].as_f64().unwrap(), g["stderr"].as_f64().unwrap());
    assert!(delta.abs() < 4.0 * se + 1e-12, "delta = {delta} +- {se}");
}

#[test]
fn experiment_run_writes_table_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"experiment": "ghz-fidelity-vs-depth", "seed": 3, "n_sites": 3, "samples": 300, "ef_samples": 200,
                  "sweep": {"depths": [0, 1]}}"#;
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    ok(d, &["experiment", "run", "--config", "cfg.json", "--out", "res", "--workers", "1"]);
    let table = std::fs::read_to_string(d.join("res/ghz-fidelity-vs-depth.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(table.lines().next().unwrap().contains("config_hash"));
    json(&std::fs::read_to_string(d.join("res/ghz-fidelity-vs-depth.json")).unwrap());
}

#[test]
fn bad_input_fails_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"experiment": "ghz-fidelity-vs-depth", "seed": 1, "n_sites": 40}"#).unwrap();
    let out = cli(d, &["experiment", "run", "--config", "cfg.json"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    std::fs::write(d.join("junk.ndjson"), "{\"format\": \"other\"}\n").unwrap();
    std::fs::write(d.join("ef.csv"), "mask,value\n0,1\n1,1\n").unwrap();
    let out = cli(d, &["estimate", "fidelity", "--snapshots", "junk.ndjson", "--ef", "ef.csv"]);
    assert!(!out.status.success());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ls_shadows::harness::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert_eq!(count, 11);
}
