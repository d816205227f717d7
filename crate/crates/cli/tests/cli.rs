use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../core/fixtures/models/{name}.json"))
}

fn ecoforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecoforge")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn validate_exit_codes() {
    let ok = ecoforge(&["validate", fixture("kudzu").to_str().unwrap()]);
    assert_eq!(code(&ok), 0);

    let dir = tempfile::tempdir().unwrap();
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(fixture("kudzu")).unwrap()).unwrap();
    let comps = doc["components"].as_array_mut().unwrap();
    let kudzu = comps.iter_mut().find(|c| c["id"] == "kudzu").unwrap();
    kudzu["properties"]["assimilation_efficiency"] = 1.5.into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = ecoforge(&["--json", "validate", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["errors"][0]["code"], "PROP_RANGE");
    let diag = String::from_utf8(out.stderr).unwrap();
    assert_eq!(diag.lines().count(), 1);
    let diag: serde_json::Value = serde_json::from_str(&diag).unwrap();
    assert_eq!(diag["code"], "VALIDATION_FAILED");

    assert_eq!(code(&ecoforge(&["validate", "/no/such/file.json"])), 3);
    assert_eq!(code(&ecoforge(&["validate"])), 1);
    assert_eq!(code(&ecoforge(&["frobnicate"])), 1);
    assert_eq!(code(&ecoforge(&["--help"])), 0);
}

#[test]
fn simulate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("{i}.csv"))).collect();
    for p in &paths {
        let out = ecoforge(&[
            "simulate",
            fixture("kudzu").to_str().unwrap(),
            "--months",
            "120",
            "--seed",
            "42",
            "--csv",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(&paths[0]).unwrap();
    assert_eq!(a, std::fs::read(&paths[1]).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 122);

    let bad_grid = ecoforge(&[
        "simulate",
        fixture("kudzu").to_str().unwrap(),
        "--months",
        "1",
        "--seed",
        "1",
        "--grid-width",
        "0",
    ]);
    assert_eq!(code(&bad_grid), 1);
}

#[test]
fn compile_targets() {
    let out = ecoforge(&["compile", fixture("kudzu").to_str().unwrap(), "--target", "netlogo"]);
    assert_eq!(code(&out), 0);
    let golden = std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/kudzu.nlogo")).unwrap();
    assert_eq!(out.stdout, golden);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prog.json");
    let out = ecoforge(&["compile", fixture("predator-prey").to_str().unwrap(), "--target", "engine", "-o", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let prog: ecoforge_core::compiler::EngineProgram = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    assert_eq!(prog.populations.len(), 2);

    let out = ecoforge(&["compile", fixture("kudzu").to_str().unwrap(), "--target", "java"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn lookup_derive_and_map() {
    let out = ecoforge(&["map-interaction", "preys on"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v, serde_json::json!({"kind": "Consumes", "direction": "Forward"}));

    let out = ecoforge(&["map-interaction", "interacts with", "--sign", "-"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((v["kind"].as_str(), v["sign"].as_str()), (Some("Affects"), Some("Negative")));
    assert_eq!(code(&ecoforge(&["map-interaction", "interacts with"])), 2);
    assert_eq!(code(&ecoforge(&["map-interaction", "juggles"])), 2);

    let out = ecoforge(&["--json", "lookup", "kudzu"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["taxon_id"], "pueraria-montana");

    let out = ecoforge(&["--json", "derive", "buteo-jamaicensis"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["entries"].as_array().unwrap().len(), 13);
    assert_eq!(code(&ecoforge(&["derive", "no-such-taxon"])), 3);
    assert_eq!(code(&ecoforge(&["--backend", "gopher:x", "lookup", "kudzu"])), 3);
}
