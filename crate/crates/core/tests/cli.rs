//! End-to-end tests of the `cipher` binary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use cipher_core::annotate::{self, LabelDraft};
use cipher_core::project::{Project, ProjectData, CATALOG_FILE};

fn synthetic_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml")
}

fn cipher(args: &[&str], project: &Path, config: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cipher"));
    cmd.args(args).arg("--project").arg(project);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("cipher runs")
}

fn json_lines(bytes: &[u8]) -> Vec<Value> {
    String::from_utf8_lossy(bytes)
        .lines()
        .map(|l| serde_json::from_str(l).expect("one JSON document per line"))
        .collect()
}

#[test]
fn run_reports_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipher(&["run"], dir.path(), Some(&synthetic_config()));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reports = json_lines(&out.stdout);
    let stages: Vec<&str> = reports
        .iter()
        .map(|r| r["stage"].as_str().unwrap())
        .collect();
    assert_eq!(
        stages,
        [
            "ingest",
            "window",
            "preprocess",
            "index",
            "cluster",
            "summarize"
        ]
    );
    let cluster = &reports[4]["counts"];
    let clusters = cluster["primary_clusters"].as_u64().unwrap()
        + cluster["relaxed_clusters"].as_u64().unwrap();
    assert!(clusters >= 2, "{cluster}");
    assert_eq!(cluster["windows"], 120);
}

#[test]
fn stage_out_of_order_names_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config();
    assert!(cipher(&["ingest"], dir.path(), Some(&config))
        .status
        .success());
    assert!(cipher(&["window"], dir.path(), Some(&config))
        .status
        .success());
    let out = cipher(&["cluster"], dir.path(), Some(&config));
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let errors = json_lines(&out.stderr);
    assert_eq!(errors.len(), 1);
    assert_eq!(errors[0]["error"], "missing_artifact");
    assert_eq!(errors[0]["stage"], "index");
}

#[test]
fn stages_resume_from_the_project_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = synthetic_config();
    assert!(cipher(&["ingest"], dir.path(), Some(&config))
        .status
        .success());
    // later stages fall back to the config recorded in the project
    for stage in ["window", "preprocess", "index", "cluster", "summarize"] {
        let out = cipher(&[stage], dir.path(), None);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(json_lines(&out.stdout)[0]["stage"], stage);
    }
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = cipher(&["run"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_lines(&out.stderr)[0]["error"], "config");

    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(synthetic_config())
        .unwrap()
        .replace("min_samples = 5", "min_samples = 5\nmin_sample = 3");
    std::fs::write(&bad, text).unwrap();
    let out = cipher(&["run"], &dir.path().join("p"), Some(&bad));
    assert_eq!(out.status.code(), Some(2));
    let err = &json_lines(&out.stderr)[0];
    assert_eq!(err["error"], "config");
    assert!(
        err["message"].as_str().unwrap().contains("min_sample"),
        "{err}"
    );
}

#[test]
fn export_writes_the_propagated_catalog() {
    let dir = tempfile::tempdir().unwrap();
    assert!(cipher(&["run"], dir.path(), Some(&synthetic_config()))
        .status
        .success());

    let project = Project::new(dir.path());
    let data = ProjectData::load(&project).unwrap();
    let membership = data.membership();
    let mut journal = project.journal().unwrap();
    for (&cluster, members) in &membership {
        let first = *members.iter().next().unwrap();
        journal
            .assign(
                cluster,
                LabelDraft {
                    label: if cluster == 0 { "CME" } else { "SIR" }.into(),
                    annotator: "tester".into(),
                    reviewed: vec![first],
                    note: String::new(),
                },
                &membership,
                &data.config.annotate.taxonomy,
                None,
                chrono::Utc::now(),
            )
            .unwrap();
    }

    let out = cipher(&["export"], dir.path(), None);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows =
        annotate::parse_catalog(std::fs::File::open(project.path(CATALOG_FILE)).unwrap()).unwrap();
    assert_eq!(json_lines(&out.stdout)[0]["counts"]["rows"], rows.len());

    let propagated = data.propagated(&project.journal().unwrap());
    assert_eq!(rows.len(), propagated.len());
    let by_label = |labels: Vec<String>| {
        labels.into_iter().fold(BTreeMap::new(), |mut m, l| {
            *m.entry(l).or_insert(0usize) += 1;
            m
        })
    };
    assert_eq!(
        by_label(rows.iter().map(|r| r.label.clone()).collect()),
        by_label(propagated.iter().map(|p| p.label.clone()).collect())
    );
    assert!(rows.windows(2).all(|w| w[0].start <= w[1].start));
    assert!(rows
        .iter()
        .all(|r| r.channel == "density+speed" && r.end > r.start));
}

#[test]
fn synth_reproduces_the_bundled_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("synthetic");
    let out = Command::new(env!("CARGO_BIN_EXE_cipher"))
        .args(["synth", "--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic");
    for name in ["synthetic.csv", "truth.csv"] {
        assert_eq!(
            std::fs::read(out_dir.join(name)).unwrap(),
            std::fs::read(fixtures.join(name)).unwrap(),
            "{name}"
        );
    }
}
