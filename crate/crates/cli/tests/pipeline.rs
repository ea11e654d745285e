//! End-to-end runs of the `rbnma` binary on a small simulated project.

mod common;

use std::path::Path;

use common::{ok, rbnma, run_pipeline, snapshot, SMALL};
use rbnma_cli::error::ErrorDocument;

#[test]
fn pipeline_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();

    run_pipeline(dir);
    let first = snapshot(dir);
    let artifacts = dir.join("data/artifacts");
    for file in ["stage1/draws.tsv", "stage1/coefficients.tsv", "stage2/model.json", "stage2_compare/comparison.tsv", "stage3/summary.tsv", "stage3/draws.tsv", "curve/curve.tsv", "strata/strata.tsv", "predict/predictions.tsv", "recovery/recovery.tsv"] {
        assert!(artifacts.join(file).exists(), "{file}");
    }
    let curve = std::fs::read_to_string(artifacts.join("curve/curve.tsv")).unwrap();
    assert!(curve.starts_with("risk\ttreatment\tp_mean\tp_lo\tp_hi\tin_observed_range\n"));
    assert_eq!(curve.lines().count(), 1 + 21 * 3);

    std::fs::remove_dir_all(dir.join("data")).unwrap();
    run_pipeline(dir);
    let second = snapshot(dir);
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (path, bytes) in &first {
        assert!(bytes == &second[path], "{} differs between runs", path.display());
    }

    // a different seed changes the posterior export
    ok(dir, &["stage1", "fit", "--config", "data/config.toml", "--seed", "12"]);
    let third = std::fs::read(artifacts.join("stage1/draws.tsv")).unwrap();
    assert_ne!(&third, &first[Path::new("data/artifacts/stage1/draws.tsv")]);
}

#[test]
fn missing_stage3_artifact_exits_2_with_error_document() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "seed = 1\n").unwrap();
    let (code, _) = rbnma(tmp.path(), &["predict", "--config", "c.toml", "--covariates", "{}"]);
    assert_eq!(code, 2);
    let doc: ErrorDocument = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("artifacts/error.json")).unwrap()).unwrap();
    assert_eq!(doc.kind, "MissingArtifact");
    assert!(doc.missing_dependency.unwrap().contains("model"));
}

#[test]
fn unknown_config_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "seed = 1\n[stage1]\nshrinkage = 2\n").unwrap();
    let (code, stderr) = rbnma(tmp.path(), &["stage1", "fit", "--config", "c.toml"]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("shrinkage"));
}
