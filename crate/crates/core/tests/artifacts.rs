use std::path::{Path, PathBuf};
use std::process::Command;

use learn2prune::bnb::Label;
use learn2prune::cli::{load, save, Dataset, InstanceSet, IoError};
use learn2prune::imitate::{generate_labeled_dataset, LabeledSample};
use learn2prune::mlp::MlpParams;
use learn2prune::model::gen_toy_milp;
use learn2prune::relax::SolveCache;
use sha2::{Digest, Sha256};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

#[test]
fn model_round_trip_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let p = MlpParams::default_architecture(12);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    save(&a, &p).unwrap();
    let q: MlpParams = load(&a).unwrap();
    assert_eq!(p, q);
    save(&b, &q).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn dataset_round_trip_keeps_label_counts() {
    let dir = tempfile::tempdir().unwrap();
    let insts: Vec<_> = (0..3).map(|s| gen_toy_milp(s, 5, 3).unwrap()).collect();
    let data = Dataset::new(generate_labeled_dataset(&insts, &SolveCache::new(), 10_000).unwrap());
    let path = dir.path().join("d.json");
    save(&path, &data).unwrap();
    let back: Dataset = load(&path).unwrap();
    let (keep, prune) = back.label_counts();
    assert_eq!(
        keep,
        data.samples
            .iter()
            .filter(|s: &&LabeledSample| s.label == Label::Preserve)
            .count()
    );
    assert_eq!(keep + prune, data.samples.len());
    assert_eq!(back, data);

    let set = InstanceSet {
        role: "toy".into(),
        instances: insts,
    };
    let path = dir.path().join("i.json");
    save(&path, &set).unwrap();
    assert_eq!(load::<InstanceSet>(&path).unwrap(), set);
}

#[test]
fn truncated_and_foreign_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save(&path, &MlpParams::default_architecture(1)).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    match load::<MlpParams>(&cut) {
        Err(IoError::ParseError { offset, .. }) => assert!(offset <= text.len() / 2),
        other => panic!("expected a parse error, got {other:?}"),
    }

    let newer = dir.path().join("v2.json");
    std::fs::write(&newer, text.replacen("\"version\": 1", "\"version\": 2", 1)).unwrap();
    assert!(matches!(
        load::<MlpParams>(&newer),
        Err(IoError::VersionError {
            found: 2,
            expected: 1,
            ..
        })
    ));

    assert!(matches!(load::<Dataset>(&path), Err(IoError::SchemaMismatch { .. })));
}

fn l2p(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_l2p"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn sha256_hex(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn cli_trains_and_evaluates_with_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let cfg = cfg.to_str().unwrap();
    let train_dir = dir.path().join("train");
    let out = l2p(&["train", cfg, "--seed", "3", "--run-dir", train_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = train_dir.join("model.json");
    let _: MlpParams = load(&model).unwrap();

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(train_dir.join("manifest.json")).unwrap()).unwrap();
    let payload = &manifest["payload"];
    assert_eq!(payload["verb"], "train");
    assert_eq!(payload["seed"], 3);
    let outputs = payload["outputs"].as_array().unwrap();
    let model_entry = outputs.iter().find(|o| o["path"] == "model.json").unwrap();
    assert_eq!(model_entry["sha256"], sha256_hex(&model));

    let eval_dir = dir.path().join("eval");
    let out = l2p(&[
        "eval",
        cfg,
        "--seed",
        "3",
        "--model",
        model.to_str().unwrap(),
        "--run-dir",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["payload"]["per_instance"].as_array().unwrap().len(), 3);
}

#[test]
fn cli_errors_use_exit_codes_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = l2p(&["gen", "/nonexistent/config.toml", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(record["kind"], "ConfigError");
    assert_eq!(record["exit_code"], 2);

    let bogus = dir.path().join("bogus.json");
    save(&bogus, &MlpParams::default_architecture(1)).unwrap();
    let run_dir = dir.path().join("run");
    let cfg = smoke_config();
    let out = l2p(&[
        "eval",
        cfg.to_str().unwrap(),
        "--seed",
        "1",
        "--model",
        dir.path().join("missing.json").to_str().unwrap(),
        "--instances",
        bogus.to_str().unwrap(),
        "--run-dir",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(run_dir.join("error.json").exists());
}
