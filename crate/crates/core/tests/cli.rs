use std::path::Path;
use std::process::{Command, Output};

fn relsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relsynth")).args(args).output().unwrap()
}

fn census() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/census").to_str().unwrap().to_string()
}

#[test]
fn toy_synthesize_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = tmp.path().join("toy");
    let syn = tmp.path().join("syn");
    let (toy_s, syn_s) = (toy.to_str().unwrap(), syn.to_str().unwrap());
    let out = relsynth(&["gen-toy", "--out", toy_s, "--households", "300", "--seed", "4"]);
    assert!(out.status.success());
    let schema = toy.join("schema.json");
    let out = relsynth(&[
        "synthesize", "--schema", schema.to_str().unwrap(), "--data", toy_s, "--epsilon", "3", "--seed", "1", "--out", syn_s,
        "--dump-npms", "--dump-models",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["household.csv", "individual.csv", "ledger.json", "manifest.json", "models.json"] {
        assert!(syn.join(f).exists(), "{f} missing");
    }
    assert!(std::fs::read_dir(syn.join("npms")).unwrap().count() > 0);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(syn.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["seed"], 1);
    let spent = manifest["ledger"]["spent"].as_f64().unwrap();
    let budget = manifest["ledger"]["budget"].as_f64().unwrap();
    assert!(spent > 0.0 && spent <= budget);

    let report = tmp.path().join("eval.json");
    let out = relsynth(&[
        "evaluate", "--schema", schema.to_str().unwrap(), "--real", toy_s, "--synthetic", syn_s, "--queries", "50", "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["individual.hid"]["summary"]["count"], 50);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let o = out_dir.to_str().unwrap();
    let schema = format!("{}/schema.json", census());
    let c = census();

    let missing_eps = relsynth(&["synthesize", "--schema", &schema, "--data", &c, "--out", o]);
    assert_eq!(missing_eps.status.code(), Some(2));

    let bad_delta = relsynth(&["synthesize", "--schema", &schema, "--data", &c, "--out", o, "--epsilon", "1", "--delta", "2"]);
    assert_eq!(bad_delta.status.code(), Some(2));

    let unknown_tau = relsynth(&["synthesize", "--schema", &schema, "--data", &c, "--out", o, "--epsilon", "1", "--tau", "x.y=2"]);
    assert_eq!(unknown_tau.status.code(), Some(2));

    let no_data = relsynth(&["synthesize", "--schema", &schema, "--data", "/nonexistent", "--out", o, "--epsilon", "1"]);
    assert_eq!(no_data.status.code(), Some(3));

    let mismatch = tmp.path().join("other.json");
    std::fs::write(&mismatch, std::fs::read_to_string(&schema).unwrap().replace("\"OWN\"", "\"OWNS\"")).unwrap();
    let eval = relsynth(&[
        "evaluate", "--schema", &schema, "--synthetic-schema", mismatch.to_str().unwrap(), "--real", &c, "--synthetic", &c,
    ]);
    assert_eq!(eval.status.code(), Some(3));
}

#[test]
fn census_runs_with_auto_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tmp.path().join("o");
    let out = relsynth(&[
        "synthesize", "--schema", &format!("{}/schema.json", census()), "--data", &census(), "--out", o.to_str().unwrap(),
        "--epsilon", "1", "--delta", "auto",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert!((manifest["settings"]["delta"].as_f64().unwrap() - 1.0 / 9.0).abs() < 1e-15);
}

#[test]
fn demo_ci_prints_ratio() {
    let out = relsynth(&["demo-ci"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ratio: 100"));
}
