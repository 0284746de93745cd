//! End-to-end command tests: exit codes, output formats, and cross-checks
//! of written artifacts against the library.

use std::path::Path;
use std::process::{Command, Output};

use statefactory_core::blocksworld::{self, apply, goal_satisfied};
use statefactory_core::dataset::load_dataset;
use statefactory_core::metrics::predictions_from_jsonl;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_statefactory"))
        .args(args)
        .env_remove("LLM_ENDPOINT")
        .env_remove("LLM_MODEL")
        .env_remove("EMBED_ENDPOINT")
        .env_remove("EMBED_MODEL")
        .output()
        .expect("binary runs")
}

fn path_of(root: &Path, suffix: &str) -> String {
    root.join(suffix).display().to_string()
}

#[test]
fn generated_dataset_passes_validation_and_empty_is_ok() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_of(dir.path(), "data");
    let result = cli(&[
        "gen-data",
        "--domain",
        "blocksworld",
        "--n-pairs",
        "6",
        "--seed",
        "4",
        "--out",
        &out,
    ]);
    assert!(result.status.success());
    let pairs = load_dataset(Path::new(&out)).unwrap();
    assert_eq!(pairs.len(), 6);

    // n-pairs 0 writes an empty but loadable dataset and exits 0.
    let empty = path_of(dir.path(), "empty");
    let result = cli(&[
        "gen-data",
        "--domain",
        "blocksworld",
        "--n-pairs",
        "0",
        "--seed",
        "4",
        "--out",
        &empty,
    ]);
    assert!(result.status.success());
    assert!(load_dataset(Path::new(&empty)).unwrap().is_empty());
}

#[test]
fn unsupported_generation_domain_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = path_of(dir.path(), "data");
    let result = cli(&[
        "gen-data",
        "--domain",
        "alfworld",
        "--n-pairs",
        "1",
        "--out",
        &out,
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn invalid_flags_exit_2() {
    let result = cli(&[
        "predict", "--method", "nonsense", "--data", "x", "--out", "y",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn predict_lengths_align_and_offline_methods_need_no_backend() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_of(dir.path(), "data");
    cli(&["gen-data", "--n-pairs", "4", "--seed", "5", "--out", &data]);

    for (method, out) in [
        ("monotonic", "mono"),
        ("statefactory", "sf"),
        ("flat", "flat"),
        ("object-centric", "oc"),
    ] {
        let out = path_of(dir.path(), out);
        let result = cli(&[
            "predict", "--data", &data, "--method", method, "--out", &out,
        ]);
        assert!(result.status.success(), "{method} failed: {result:?}");
        let text = std::fs::read_to_string(Path::new(&out).join("predictions.jsonl")).unwrap();
        let predictions = predictions_from_jsonl(&text).unwrap();
        for pair in load_dataset(Path::new(&data)).unwrap() {
            for t in [&pair.positive, &pair.negative] {
                assert_eq!(
                    predictions.get(&t.id).unwrap().len(),
                    t.steps.len(),
                    "{method}"
                );
            }
        }
    }
}

#[test]
fn judge_without_backend_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_of(dir.path(), "data");
    cli(&["gen-data", "--n-pairs", "1", "--seed", "5", "--out", &data]);
    let out = path_of(dir.path(), "judged");
    let result = cli(&[
        "predict", "--data", &data, "--method", "judge", "--out", &out,
    ]);
    assert_eq!(result.status.code(), Some(4));

    // Remote embeddings without configuration are refused the same way.
    let result = cli(&[
        "predict",
        "--data",
        &data,
        "--method",
        "statefactory",
        "--provider",
        "remote",
        "--out",
        &out,
    ]);
    assert_eq!(result.status.code(), Some(4));
}

#[test]
fn eval_misalignment_exits_5_and_oracle_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_of(dir.path(), "data");
    cli(&["gen-data", "--n-pairs", "3", "--seed", "6", "--out", &data]);

    // Oracle predictions: copy ground truth.
    let pairs = load_dataset(Path::new(&data)).unwrap();
    let mut oracle = String::new();
    let mut misaligned = String::new();
    for pair in &pairs {
        for t in [&pair.positive, &pair.negative] {
            oracle.push_str(&format!(
                "{}\n",
                serde_json::json!({"id": t.id, "rewards": t.rewards()})
            ));
            // Drop one step from one trajectory for the misaligned variant.
            let mut rewards = t.rewards();
            if t.id.ends_with("0001-neg") {
                rewards.pop();
            }
            misaligned.push_str(&format!(
                "{}\n",
                serde_json::json!({"id": t.id, "rewards": rewards})
            ));
        }
    }
    std::fs::write(dir.path().join("oracle.jsonl"), oracle).unwrap();
    std::fs::write(dir.path().join("short.jsonl"), misaligned).unwrap();

    let out = path_of(dir.path(), "eval");
    let result = cli(&[
        "eval",
        "--data",
        &data,
        "--pred",
        &path_of(dir.path(), "oracle.jsonl"),
        "--mode",
        "per-pair",
        "--out",
        &out,
        "--method-name",
        "oracle",
    ]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("overall: 0.0000"), "{stdout}");

    let result = cli(&[
        "eval",
        "--data",
        &data,
        "--pred",
        &path_of(dir.path(), "short.jsonl"),
        "--mode",
        "per-pair",
        "--out",
        &out,
    ]);
    assert_eq!(result.status.code(), Some(5));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("0001-neg"),
        "misalignment must name the trajectory: {stderr}"
    );
}

#[test]
fn anti_oracle_scores_one_per_pair() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_of(dir.path(), "data");
    cli(&["gen-data", "--n-pairs", "3", "--seed", "8", "--out", &data]);
    let pairs = load_dataset(Path::new(&data)).unwrap();
    let mut anti = String::new();
    for pair in &pairs {
        for t in [&pair.positive, &pair.negative] {
            let flipped: Vec<f64> = t.rewards().iter().map(|r| 1.0 - r).collect();
            anti.push_str(&format!(
                "{}\n",
                serde_json::json!({"id": t.id, "rewards": flipped})
            ));
        }
    }
    std::fs::write(dir.path().join("anti.jsonl"), anti).unwrap();
    let out = path_of(dir.path(), "eval");
    let result = cli(&[
        "eval",
        "--data",
        &data,
        "--pred",
        &path_of(dir.path(), "anti.jsonl"),
        "--mode",
        "per-pair",
        "--out",
        &out,
    ]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("overall: 1.0000"), "{stdout}");
}

#[test]
fn probe_reports_trivial_accuracies() {
    let dir = tempfile::tempdir().unwrap();
    let triplets = dir.path().join("triplets.jsonl");
    let mut lines = String::new();
    for i in 0..5 {
        lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"anchor": format!("s{i}"), "positive": format!("s{i}"), "negative": "other"})
        ));
    }
    std::fs::write(&triplets, lines).unwrap();
    let result = cli(&[
        "probe",
        "--triplets",
        &triplets.display().to_string(),
        "--provider",
        "exact",
    ]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stdout).contains("1.0000"));
}

#[test]
fn plan_with_zero_budget_reports_zero_and_logs_replay() {
    let dir = tempfile::tempdir().unwrap();
    let inst = path_of(dir.path(), "inst");
    cli(&[
        "gen-instances",
        "--n",
        "6",
        "--blocks",
        "3",
        "--seed",
        "13",
        "--out",
        &inst,
    ]);
    let instances_file = path_of(dir.path(), "inst/instances.jsonl");

    let out = path_of(dir.path(), "zero");
    let result = cli(&[
        "plan",
        "--instances",
        &instances_file,
        "--policy",
        "reward-guided",
        "--seed",
        "13",
        "--max-steps",
        "0",
        "--out",
        &out,
    ]);
    assert!(result.status.success());
    assert!(String::from_utf8_lossy(&result.stdout).contains("0.0000"));

    let out = path_of(dir.path(), "episodes");
    let result = cli(&[
        "plan",
        "--instances",
        &instances_file,
        "--policy",
        "reward-guided",
        "--seed",
        "13",
        "--max-steps",
        "20",
        "--out",
        &out,
    ]);
    assert!(result.status.success());

    // Replay every logged episode through the environment: each action must
    // be admissible in sequence and the success flag must match the final
    // state.
    let text = std::fs::read_to_string(Path::new(&out).join("episodes.jsonl")).unwrap();
    let instances =
        blocksworld::parse_instances(&std::fs::read_to_string(&instances_file).unwrap()).unwrap();
    for (line, instance) in text.lines().zip(&instances) {
        let episode: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(episode["instance_id"].as_str().unwrap(), instance.id);
        let mut env = instance.init.clone();
        for step in episode["steps"].as_array().unwrap() {
            let id = step["action_id"].as_str().unwrap();
            let action = blocksworld::admissible_actions(&env)
                .into_iter()
                .find(|a| a.id() == id)
                .unwrap_or_else(|| panic!("{id} not admissible during replay"));
            env = apply(&env, &action).unwrap();
        }
        assert_eq!(
            episode["success"].as_bool().unwrap(),
            goal_satisfied(&env, &instance.goal),
            "logged success flag disagrees with replay for {}",
            instance.id
        );
    }
}

#[test]
fn stats_prints_pair_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_of(dir.path(), "data");
    cli(&["gen-data", "--n-pairs", "5", "--seed", "3", "--out", &data]);
    let result = cli(&["stats", "--data", &data]);
    assert!(result.status.success());
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("\"pairs\": 5"), "{stdout}");
    assert!(stdout.contains("BlocksWorld"), "{stdout}");
}
