use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hint"))
        .args(args)
        .output()
        .expect("spawn hint")
}

fn ok(args: &[&str]) -> String {
    let out = hint(args);
    assert!(
        out.status.success(),
        "hint {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn ok_owned(args: &[String]) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn synth(dir: &Path) {
    ok(&[
        "synth", "--out", s(dir), "--channels", "6", "--k", "2", "--samples", "6",
        "--height", "6", "--width", "6", "--seed", "3",
    ]);
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "run_info.json" {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn synth_pipeline_report_localize() {
    let data = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    synth(data.path());
    let manifest = data.path().join("manifest.json");
    let hierarchy = data.path().join("hierarchy.json");
    let common = [
        "--manifest", s(&manifest), "--hierarchy", s(&hierarchy), "--out", s(out.path()),
        "--mc-iters", "20", "--top-n", "2", "--seed", "3",
    ];

    let stdout = ok(&[&["pipeline"][..], &common].concat());
    assert!(stdout.contains("scored 6 neurons x 3 concepts"), "{stdout}");
    for f in ["score_matrix.json", "sankey.json", "association_report.json", "f1.json", "run_info.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }

    let before = std::fs::read(out.path().join("sankey.json")).unwrap();
    ok(&[&["report"][..], &common].concat());
    assert_eq!(std::fs::read(out.path().join("sankey.json")).unwrap(), before);
    let sankey: serde_json::Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(sankey["meta"]["N"], 2);

    let stdout = ok(&[&["localize"][..], &common, &["--concept", "concept_0", "--count", "2", "--heatmaps"]].concat());
    assert!(stdout.contains("concept_0 via shap (2 neurons)"), "{stdout}");
    assert!(out.path().join("localization.json").is_file());
    assert!(out.path().join("heatmaps/concept_0_0000.heat.tens").is_file());

    ok(&[&["localize"][..], &common, &["--select", "random", "--count", "3"]].concat());
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.path().join("localization.json")).unwrap()).unwrap();
    assert_eq!(report["concept"], "whole");
    assert_eq!(report["neurons"].as_array().unwrap().len(), 3);
}

#[test]
fn stages_run_separately() {
    let data = TempDir::new().unwrap();
    let out = TempDir::new().unwrap();
    synth(data.path());
    let common = [
        "--manifest", &format!("{}/manifest.json", s(data.path())),
        "--hierarchy", &format!("{}/hierarchy.json", s(data.path())),
        "--out", s(out.path()), "--mc-iters", "10", "--concepts", "concept_1,whole",
    ]
    .map(String::from);
    let with = |cmd: &str| [vec![cmd.to_string()], common.to_vec()].concat();

    ok_owned(&with("regions"));
    assert!(out.path().join("regions_summary.json").is_file());
    let stdout = ok_owned(&with("train"));
    assert_eq!(stdout.lines().count(), 2, "{stdout}");
    let stdout = ok_owned(&with("shapley"));
    assert!(stdout.contains("6 x 2 score matrix"), "{stdout}");
}

#[test]
fn missing_manifest_fails_cleanly() {
    let data = TempDir::new().unwrap();
    synth(data.path());
    let out = hint(&[
        "pipeline",
        "--manifest", s(&data.path().join("nope.json")),
        "--hierarchy", s(&data.path().join("hierarchy.json")),
        "--out", s(data.path()),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("manifest error"), "{stderr}");
}

#[test]
fn errors_name_the_sample_or_concept() {
    let data = TempDir::new().unwrap();
    synth(data.path());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.path().join("manifest.json")).unwrap()).unwrap();
    let victim = &manifest["samples"][4];
    let file = data.path().join(victim["saliency_file"].as_str().unwrap());
    std::fs::write(&file, b"garbage").unwrap();
    let base = |cmd: &'static str| {
        vec![
            cmd.to_string(),
            "--manifest".into(), format!("{}/manifest.json", s(data.path())),
            "--hierarchy".into(), format!("{}/hierarchy.json", s(data.path())),
            "--out".into(), s(data.path()).to_string(),
        ]
    };

    let args = base("pipeline");
    let out = hint(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(victim["sample_id"].as_str().unwrap()), "{stderr}");

    let fresh = TempDir::new().unwrap();
    synth(fresh.path());
    let out = hint(&[
        "localize",
        "--manifest", s(&fresh.path().join("manifest.json")),
        "--hierarchy", s(&fresh.path().join("hierarchy.json")),
        "--out", s(fresh.path()),
        "--concept", "zebra",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("zebra"));
}

#[test]
fn config_file_and_worker_count() {
    let data = TempDir::new().unwrap();
    synth(data.path());
    let config = data.path().join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"manifest": "{0}/manifest.json", "hierarchy": "{0}/hierarchy.json", "mc-iters": 15, "seed": 8}}"#,
            s(data.path())
        ),
    )
    .unwrap();

    let mut snaps = Vec::new();
    for workers in ["1", "4"] {
        let out = TempDir::new().unwrap();
        ok(&["pipeline", "--config", s(&config), "--out", s(out.path()), "--workers", workers]);
        snaps.push(files(out.path()));
    }
    assert!(snaps[0].contains_key("score_matrix.json"));
    assert_eq!(snaps[0], snaps[1]);

    std::fs::write(&config, r#"{"manifest": "m.json", "hierarchy": "h.json", "mc_iters": 3}"#).unwrap();
    let out = hint(&["pipeline", "--config", s(&config), "--out", s(data.path())]);
    assert!(!out.status.success());
}
