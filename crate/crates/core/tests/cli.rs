//! End-to-end checks of the command-line binary: exit codes, artifact
//! layout, and flag handling.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hccstage"))
}

fn synth_cohort(dir: &Path) {
    // tiny cohort so the whole CLI test stays fast
    let spec = serde_json::json!({
        "n_patients": 30,
        "class_priors": [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        "dims": [12, 12, 12],
        "lesion_radius_means": [2.0, 2.8, 3.6],
        "lesion_radius_std": 0.3,
        "ct_count_probs": [0.0, 1.0],
        "mri_count_probs": [0.0, 1.0],
        "seed": 11
    });
    let spec_path = dir.join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    let out = bin()
        .args(["synth", "--config"])
        .arg(&spec_path)
        .arg("--out")
        .arg(dir.join("cohort"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn write_run_config(dir: &Path) -> std::path::PathBuf {
    let cohort = dir.join("cohort");
    let config = serde_json::json!({
        "images_csv": cohort.join("images.csv"),
        "redcap_csv": cohort.join("redcap.csv"),
        "lab_csv": cohort.join("lab.csv"),
        "labels_csv": cohort.join("labels.csv"),
        "out_dir": dir.join("out"),
        "rounds": 2,
        "inner_folds": 2,
        "selection_boost": {"rounds": 2, "max_depth": 2},
        "boost": {"rounds": 8, "max_depth": 3}
    });
    let path = dir.join("run.json");
    std::fs::write(&path, config.to_string()).unwrap();
    path
}

#[test]
fn synth_then_pipeline_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    synth_cohort(dir.path());
    for f in ["images.csv", "redcap.csv", "lab.csv", "labels.csv", "manifest.json"] {
        assert!(dir.path().join("cohort").join(f).is_file(), "missing {f}");
    }
    let config = write_run_config(dir.path());
    let out = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ct+mri/redcap+lab"), "summary missing: {stdout}");
    for f in [
        "metrics.json",
        "run_manifest.json",
        "config.json",
        "ct_features.csv",
        "mri_features.csv",
        "proba_round0.csv",
        "importance_round1.csv",
        "selection_round0.json",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "missing {f}");
    }
}

#[test]
fn modalities_flag_restricts_the_run() {
    let dir = tempfile::tempdir().unwrap();
    synth_cohort(dir.path());
    let config = write_run_config(dir.path());
    let out = bin()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--modalities", "redcap+lab"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("null/redcap+lab"), "got: {stdout}");
}

#[test]
fn missing_config_is_a_config_error() {
    let out = bin().arg("pipeline").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["pipeline", "--config", "/definitely/not/here.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_modality_token_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_cohort(dir.path());
    let config = write_run_config(dir.path());
    let out = bin()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--modalities", "pet"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corrupt_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    synth_cohort(dir.path());
    let config = write_run_config(dir.path());
    // replace one label with garbage
    let labels = dir.path().join("cohort").join("labels.csv");
    let text = std::fs::read_to_string(&labels).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let broken = format!("{},T9", lines[1].split(',').next().unwrap());
    lines[1] = &broken;
    std::fs::write(&labels, lines.join("\n")).unwrap();
    let out = bin()
        .args(["evaluate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_flag_changes_synth_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = serde_json::json!({"n_patients": 5, "dims": [10, 10, 10],
        "lesion_radius_means": [2.0, 2.5, 3.0], "lesion_radius_std": 0.2});
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, spec.to_string()).unwrap();
    for (seed, sub) in [("1", "a"), ("2", "b")] {
        let out = bin()
            .args(["synth", "--seed", seed, "--config"])
            .arg(&spec_path)
            .arg("--out")
            .arg(dir.path().join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a/labels.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/labels.csv")).unwrap();
    assert_ne!(a, b);
}
