use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use realexp::coalition::interaction_weights;
use realexp::pipeline::{explain, stability_study_seeds, AttributionMethod, RunConfig, SimilaritySource};
use realexp::{ImportanceReport, MaskPolicy};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fixture(name: &str) -> PathBuf {
    Path::new(FIXTURES).join(name)
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_realexp")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_config(dir: &Path, name: &str, value: Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path
}

fn server_config(mode: &[&str]) -> Value {
    let mut command = vec!["python3".to_owned(), fixture("sum_server.py").display().to_string()];
    command.extend(mode.iter().map(|s| s.to_string()));
    json!({
        "endpoint": {"kind": "subprocess", "command": command, "timeout_ms": 2000},
        "instance": {"modality": "tabular", "values": [1.0, 2.0, 3.0, 4.0]},
        "samples": 40,
        "alpha": 0.3,
        "trees": 3,
        "seed": 1
    })
}

#[test]
fn explain_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let status = cli(&["explain", "--config", fixture("generic_run.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(status.status.success());
    let report = ImportanceReport::load(&out).unwrap();
    assert_eq!(report.n, 10);
    assert_eq!(report.ranking.len(), 10);
    assert!(report.heldout_r2.unwrap() > 0.5);
    assert!(report.timing.is_some());
    assert_eq!(report.similarity.source, "design");
}

#[test]
fn explain_is_reproducible_across_processes() {
    let config = fixture("generic_run.json");
    let a = ImportanceReport::from_json(&String::from_utf8(cli(&["explain", "--config", config.to_str().unwrap()]).stdout).unwrap()).unwrap();
    let b = ImportanceReport::from_json(&String::from_utf8(cli(&["explain", "--config", config.to_str().unwrap()]).stdout).unwrap()).unwrap();
    assert_eq!(a.canonical_json(), b.canonical_json());
    let in_process = explain(&RunConfig::load(&config).unwrap()).unwrap();
    assert_eq!(in_process.attribution, a.attribution);

    let c = stdout_json(&cli(&["explain", "--config", config.to_str().unwrap(), "--seed", "12"]));
    assert_eq!(c["config"]["seed"], 12);
    assert_ne!(serde_json::to_value(&a.attribution).unwrap(), c["attribution"]);
}

#[test]
fn eval_against_expert_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    assert!(cli(&["explain", "--config", fixture("generic_run.json").to_str().unwrap(), "--out", out.to_str().unwrap()])
        .status
        .success());
    let result = stdout_json(&cli(&["eval", "--report", out.to_str().unwrap(), "--expert", fixture("expert.json").to_str().unwrap()]));
    let report = ImportanceReport::load(&out).unwrap();
    let matched = report.ranking[..3].iter().filter(|i| **i < 3).count();
    assert_eq!(result["match_count"], matched);
    assert_eq!(result["report_sha256"].as_str().unwrap().len(), 64);
    assert!(result["tau"].as_f64().unwrap().abs() <= 1.0);
}

#[test]
fn oracle_on_weighted_majority() {
    let game = fixture("weighted_majority.json");
    let exact = stdout_json(&cli(&["oracle", "--game", game.to_str().unwrap(), "--method", "exact"]));
    let perm = stdout_json(&cli(&["oracle", "--game", game.to_str().unwrap(), "--method", "perm"]));
    let want = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
    for (i, w) in want.iter().enumerate() {
        assert!((exact["phi"][i].as_f64().unwrap() - w).abs() < 1e-12);
        assert!((perm["phi"][i].as_f64().unwrap() - w).abs() < 1e-12);
    }
    let sampled = stdout_json(&cli(&["oracle", "--game", game.to_str().unwrap(), "--method", "perm", "--samples", "600", "--seed", "4"]));
    assert_eq!(sampled["std_error"].as_array().unwrap().len(), 3);
}

#[test]
fn variance_demo_prints_all_policies() {
    let out = stdout_json(&cli(&["variance-demo", "--n", "8", "--samples", "2000"]));
    for key in ["fixed", "random", "mc"] {
        assert!(out[format!("analytic_{key}")].as_f64().unwrap() > 0.0);
        assert!(out[format!("empirical_{key}")].as_f64().unwrap() > 0.0);
    }
    assert_eq!(out["n"], 8);
}

#[test]
fn sweep_writes_csv() {
    let out = cli(&[
        "sweep", "--param", "lambda", "--values", "0.1,0.5", "--config",
        fixture("generic_run.json").to_str().unwrap(), "--repeats", "2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap(), vec!["param", "value", "jaccard", "heldout_r2_mean", "heldout_r2_runs"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][0], "lambda");
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), 0.5);
    assert_eq!(rows[0][4].split(';').count(), 2);
}

#[test]
fn stability_subcommand() {
    let out = stdout_json(&cli(&["stability", "--config", fixture("generic_run.json").to_str().unwrap(), "--repeats", "2"]));
    assert_eq!(out["policies"].as_array().unwrap().len(), 3);
}

#[test]
fn invalid_config_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut config: Value = serde_json::from_str(&std::fs::read_to_string(fixture("generic_run.json")).unwrap()).unwrap();
    config["alpha"] = json!(1.5);
    let path = write_config(dir.path(), "bad.json", config);
    let out = cli(&["explain", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let missing = cli(&["explain", "--config", "/nonexistent/config.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn transport_failures_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = server_config(&[]);
    config["endpoint"]["command"] = json!(["/nonexistent/model"]);
    let path = write_config(dir.path(), "missing.json", config);
    assert_eq!(cli(&["explain", "--config", path.to_str().unwrap()]).status.code(), Some(3));

    let path = write_config(dir.path(), "bad_id.json", server_config(&["bad_id"]));
    assert_eq!(cli(&["explain", "--config", path.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn non_finite_scores_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "nan.json", server_config(&["nan"]));
    let out = cli(&["explain", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("score"));
}

#[test]
fn subprocess_run_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "sum.json", server_config(&[]));
    let remote = stdout_json(&cli(&["explain", "--config", path.to_str().unwrap()]));
    let mut local = RunConfig::load(&path).unwrap();
    local.endpoint = serde_json::from_value(json!({"kind": "builtin", "model": {"linear": {"w": [1.0, 1.0, 1.0, 1.0], "b": 0.0}}})).unwrap();
    let local = explain(&local).unwrap();
    assert_eq!(remote["attribution"], serde_json::to_value(&local.attribution).unwrap());
}

#[test]
fn text_run_from_fixture() {
    let report = stdout_json(&cli(&["explain", "--config", fixture("text_run.json").to_str().unwrap()]));
    assert_eq!(report["n"], 10);
    // the server scores by total token length, so "t10" outweighs every other token
    assert_eq!(report["ranking"][0], 9);
    assert_eq!(report["attribution"]["labels"][9], "t10");
}

#[test]
fn image_run_with_overlay() {
    let dir = tempfile::tempdir().unwrap();
    let overlay = dir.path().join("o.ppm");
    let report = stdout_json(&cli(&[
        "explain", "--config", fixture("image_run.json").to_str().unwrap(), "--overlay", overlay.to_str().unwrap(),
    ]));
    assert_eq!(report["ranking"][0], 0);
    assert!(overlay.exists() && overlay.with_extension("json").exists());

    let text = cli(&["explain", "--config", fixture("text_run.json").to_str().unwrap(), "--overlay", overlay.to_str().unwrap()]);
    assert_eq!(text.status.code(), Some(2));
}

fn duplicated_config(similarity: SimilaritySource) -> RunConfig {
    let mut config: RunConfig = serde_json::from_value(json!({
        "endpoint": {"kind": "builtin", "model": {"linear": {"w": [1.0, 1.0, 1.0, 1.0], "b": 0.0}}},
        "instance": {"modality": "tabular", "csv": fixture("dup_columns.csv"), "row": 5},
        "samples": 2000,
        "alpha": 0.25,
        "policy": "bernoulli",
        "seed": 5
    }))
    .unwrap();
    config.similarity = similarity;
    config
}

#[test]
fn duplicated_columns_share_credit() {
    let report = explain(&duplicated_config(SimilaritySource::Dataset)).unwrap();
    let s = &report.similarity.matrix;
    assert_eq!(report.similarity.source, "dataset");
    assert_eq!(s.get(0, 1), 1.0);
    let w = interaction_weights(s);
    assert_eq!(w.weights[0][1], 0.0);
    assert_eq!(w.weights[1][0], 0.0);
    // both copies move the prediction by 6 - 3.5 when kept; Bernoulli masks reach the singletons
    // that a fixed masked count of 1 in 4 never visits
    let ind = report.attribution.phi_independent.as_ref().unwrap();
    assert!((ind[0] - ind[1]).abs() < 0.15 * ind[0].abs(), "{ind:?}");
    assert_eq!(report.attribution.labels.as_ref().unwrap()[..2], ["a".to_owned(), "b".to_owned()]);

    // masks are drawn without looking at the data, so the design cannot see the duplicate
    let from_design = explain(&duplicated_config(SimilaritySource::Design)).unwrap();
    assert!(from_design.similarity.matrix.get(0, 1) < 0.2);
}

#[test]
fn method_choices_run_end_to_end() {
    let base = RunConfig::load(fixture("generic_run.json")).unwrap();
    for method in [AttributionMethod::ExactShapley, AttributionMethod::TreeGain] {
        let config = RunConfig { method: method.clone(), samples: 200, trees: 10, ..base.clone() };
        let report = explain(&config).unwrap();
        assert_eq!(report.attribution.phi.len(), 10, "{method:?}");
    }
    let study = stability_study_seeds(&RunConfig { samples: 200, trees: 5, ..base }, &[1, 2]).unwrap();
    assert_eq!(study.policies.len(), 3);
    assert!(study.jaccard(MaskPolicy::FixedCount).is_some());
}
