//! CLI behavior: subcommand wiring, artifact schemas, resume semantics, and
//! report rebuilding.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use faithcheck_cli::schema;

fn faithcheck() -> Command {
    Command::new(env!("CARGO_BIN_EXE_faithcheck"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn stage_demo(dir: &Path) {
    for file in ["questions.jsonl", "mock_answers.json"] {
        std::fs::copy(data_dir().join("demo").join(file), dir.join(file)).unwrap();
    }
    std::fs::copy(
        data_dir().join("hedge_lexicon.json"),
        dir.join("hedge_lexicon.json"),
    )
    .unwrap();
}

fn demo_config(dir: &Path, out: &str, extra: serde_json::Value) -> PathBuf {
    let mut config = serde_json::json!({
        "dataset_path": "questions.jsonl",
        "dataset_label": "demo",
        "method": {"name": "vanilla"},
        "answer_model": {
            "provider": "mock",
            "model_name": "mock-qa",
            "decoding": {"mode": "greedy", "max_tokens": 64},
            "mock_answers_path": "mock_answers.json"
        },
        "judge": {"backend": "lexicon", "lexicon_path": "hedge_lexicon.json"},
        "plan": {"k": 20, "sampling_temperature": 1.0},
        "output_dir": dir.join(out),
        "offline": true,
        "seed": 7
    });
    if let serde_json::Value::Object(extra) = extra {
        for (key, value) in extra {
            config[key] = value;
        }
    }
    let path = dir.join(format!("config-{out}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn evaluate_emits_schema_valid_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    let config = demo_config(tmp.path(), "run", serde_json::json!({}));
    run_ok(faithcheck().args(["evaluate", "--config"]).arg(&config));

    let out = tmp.path().join("run");
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(schema::validate(schema::METRICS_SCHEMA, &metrics).is_empty());

    for line in std::fs::read_to_string(out.join("examples.jsonl"))
        .unwrap()
        .lines()
    {
        let row: serde_json::Value = serde_json::from_str(line).unwrap();
        let violations = schema::validate(schema::EXAMPLE_SCHEMA, &row);
        assert!(violations.is_empty(), "{violations:?}\nrow: {line}");
    }

    let accuracy_out = run_ok(
        faithcheck()
            .args(["accuracy", "--config"])
            .arg(&config)
            .arg("--run-dir")
            .arg(&out),
    );
    let stdout = String::from_utf8_lossy(&accuracy_out.stdout);
    assert!(stdout.contains("accuracy"), "{stdout}");
    let accuracy: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("accuracy.json")).unwrap()).unwrap();
    assert!(schema::validate(schema::ACCURACY_SCHEMA, &accuracy).is_empty());
    // 16 of the 18 scored demo answers do not contradict their gold answer.
    assert_eq!(accuracy["n_evaluated"].as_u64().unwrap(), 18);
    assert!((accuracy["accuracy"].as_f64().unwrap() - 16.0 / 18.0).abs() < 1e-12);
}

#[test]
fn report_rebuilds_identical_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    let config = demo_config(tmp.path(), "run", serde_json::json!({}));
    run_ok(faithcheck().args(["evaluate", "--config"]).arg(&config));

    let out = tmp.path().join("run");
    let originals: Vec<(PathBuf, Vec<u8>)> = ["metrics.json", "bins.csv", "table.csv", "means.csv"]
        .iter()
        .map(|f| (out.join(f), std::fs::read(out.join(f)).unwrap()))
        .collect();
    for (path, _) in &originals {
        std::fs::remove_file(path).unwrap();
    }
    run_ok(faithcheck().args(["report", "--run-dir"]).arg(&out));
    for (path, bytes) in &originals {
        assert_eq!(
            &std::fs::read(path).unwrap(),
            bytes,
            "report must rebuild {} byte-identically",
            path.display()
        );
    }
}

#[test]
fn table_accumulation_is_commutative_across_run_order() {
    // Two methods sharing an output dir produce the same table.csv no matter
    // which ran first.
    let order_a = ["vanilla", "uncertainty"];
    let order_b = ["uncertainty", "vanilla"];
    let mut tables = Vec::new();
    for order in [order_a, order_b] {
        let tmp = tempfile::tempdir().unwrap();
        stage_demo(tmp.path());
        for method in order {
            let config = demo_config(
                tmp.path(),
                &format!("grid-{method}"),
                serde_json::json!({
                    "method": {"name": method},
                    "output_dir": tmp.path().join("grid"),
                    "cache_dir": tmp.path().join(format!("cache-{method}"))
                }),
            );
            run_ok(faithcheck().args(["evaluate", "--config"]).arg(&config));
        }
        tables.push(std::fs::read(tmp.path().join("grid").join("table.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let text = String::from_utf8(tables.pop().unwrap()).unwrap();
    assert_eq!(
        text.lines().count(),
        3,
        "header + one row per method:\n{text}"
    );
}

#[test]
fn uncertainty_plus_averages_over_r_runs() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    // Handcrafted demonstration pool: four per class covers m = 2.
    let mut pool = String::new();
    for i in 0..4 {
        pool.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "class": "certain",
                "question": format!("Known thing {i}?"),
                "answer": format!("Known answer {i}."),
                "measured_conf": 1.0,
                "verified_gap": 0.0
            })
        ));
        pool.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "class": "uncertain",
                "question": format!("Shaky thing {i}?"),
                "answer": format!("I think it is shaky answer {i}."),
                "measured_conf": 0.8,
                "verified_gap": 0.0
            })
        ));
    }
    std::fs::write(tmp.path().join("demo_pool.jsonl"), pool).unwrap();

    let config = demo_config(
        tmp.path(),
        "uplus",
        serde_json::json!({
            "method": {"name": "uncertainty_plus", "m": 2, "r": 3, "demo_pool_path": "demo_pool.jsonl"}
        }),
    );
    let output = run_ok(faithcheck().args(["evaluate", "--config"]).arg(&config));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("over 3 run(s)"), "{stdout}");

    let metrics: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("uplus").join("metrics.json")).unwrap(),
    )
    .unwrap();
    let runs = metrics["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 3);
    let mean_of_runs = runs
        .iter()
        .map(|r| r["cmfg"].as_f64().unwrap())
        .sum::<f64>()
        / 3.0;
    assert!((metrics["mean"]["cmfg"].as_f64().unwrap() - mean_of_runs).abs() < 1e-12);
}

#[test]
fn uncertainty_plus_with_thin_pool_fails_clearly() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    let mut pool = String::new();
    for i in 0..4 {
        pool.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "class": "certain",
                "question": format!("Known {i}?"),
                "answer": "Yes.",
                "measured_conf": 1.0,
                "verified_gap": 0.0
            })
        ));
    }
    // Only three uncertain entries, four are required for m = 2.
    for i in 0..3 {
        pool.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "class": "uncertain",
                "question": format!("Shaky {i}?"),
                "answer": "Maybe.",
                "measured_conf": 0.5,
                "verified_gap": 0.05
            })
        ));
    }
    std::fs::write(tmp.path().join("thin_pool.jsonl"), pool).unwrap();
    let config = demo_config(
        tmp.path(),
        "thin",
        serde_json::json!({
            "method": {"name": "uncertainty_plus", "m": 2, "r": 3, "demo_pool_path": "thin_pool.jsonl"}
        }),
    );
    let output = faithcheck()
        .args(["evaluate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("uncertain") && stderr.contains("4"),
        "error should name the class and requirement: {stderr}"
    );
}

#[test]
fn simulate_emits_population_and_metric_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let output = run_ok(faithcheck().args([
        "simulate",
        "--policy",
        "decisive",
        "--n",
        "10000",
        "--seed",
        "3",
        "--seeds",
        "2",
        "--output-dir",
        out.to_str().unwrap(),
    ]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("oracle agreed"), "{stdout}");

    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3, "header + one row per seed");
    for seed in [3u64, 4] {
        let population =
            std::fs::read_to_string(out.join(format!("population-{seed}.csv"))).unwrap();
        assert_eq!(population.lines().count(), 10_001);
    }
    // The decisive policy sits at the 0.5 baseline.
    for line in metrics.lines().skip(1) {
        let cmfg: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!((cmfg - 0.5).abs() < 0.02, "{line}");
    }
}

#[test]
fn simulate_rejects_unknown_policy() {
    let output = faithcheck()
        .args(["simulate", "--policy", "bogus"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown policy"));
}

#[test]
fn convert_dataset_handles_ambiguity_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("raw.json");
    std::fs::write(
        &input,
        serde_json::json!([
            {"id": "a", "question": "Unambiguous?", "annotations": [{"type": "singleAnswer", "answer": ["yes"]}]},
            {"id": "b", "question": "Ambiguous?", "annotations": [{"type": "multipleQAs", "qaPairs": []}]}
        ])
        .to_string(),
    )
    .unwrap();
    let out_all = tmp.path().join("all.jsonl");
    run_ok(
        faithcheck()
            .args(["convert-dataset", "--format", "ambig-qa", "--input"])
            .arg(&input)
            .arg("--output")
            .arg(&out_all),
    );
    assert_eq!(
        std::fs::read_to_string(&out_all).unwrap().lines().count(),
        2
    );

    let out_clean = tmp.path().join("clean.jsonl");
    run_ok(
        faithcheck()
            .args([
                "convert-dataset",
                "--format",
                "ambig-qa",
                "--exclude-ambiguous",
                "--input",
            ])
            .arg(&input)
            .arg("--output")
            .arg(&out_clean),
    );
    let text = std::fs::read_to_string(&out_clean).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("\"id\":\"a\""));
}

#[test]
fn partial_replay_fails_then_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    let cache = tmp.path().join("shared-cache");

    // Record only the first eight questions.
    let short_dataset = tmp.path().join("short.jsonl");
    let full_text = std::fs::read_to_string(tmp.path().join("questions.jsonl")).unwrap();
    let short_text: String = full_text
        .lines()
        .take(8)
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(&short_dataset, short_text).unwrap();
    let record_short = demo_config(
        tmp.path(),
        "record-short",
        serde_json::json!({"dataset_path": "short.jsonl", "cache_dir": cache}),
    );
    run_ok(
        faithcheck()
            .args(["evaluate", "--config"])
            .arg(&record_short),
    );

    // Replaying the full corpus hits an unrecorded request and reports a
    // resumable partial run.
    let replay_config = demo_config(
        tmp.path(),
        "replay",
        serde_json::json!({
            "answer_model": {
                "provider": "replay",
                "model_name": "mock-qa",
                "decoding": {"mode": "greedy", "max_tokens": 64},
                "replay_dir": cache
            },
            "cache_dir": tmp.path().join("replay-cache")
        }),
    );
    let failed = faithcheck()
        .args(["evaluate", "--config"])
        .arg(&replay_config)
        .output()
        .unwrap();
    assert!(!failed.status.success());
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(stderr.contains("partial run"), "{stderr}");
    assert!(stderr.contains("resume"), "{stderr}");
    let checkpoint = tmp.path().join("replay").join("checkpoint.jsonl");
    assert_eq!(
        std::fs::read_to_string(&checkpoint)
            .unwrap()
            .lines()
            .count(),
        8,
        "completed examples must be checkpointed"
    );

    // Complete the recorded cache, then resume: only the remaining twelve
    // questions are replayed.
    let record_full = demo_config(
        tmp.path(),
        "record-full",
        serde_json::json!({"cache_dir": cache}),
    );
    run_ok(
        faithcheck()
            .args(["evaluate", "--config"])
            .arg(&record_full),
    );
    run_ok(
        faithcheck()
            .args(["evaluate", "--resume", "--config"])
            .arg(&replay_config),
    );
    let examples =
        std::fs::read_to_string(tmp.path().join("replay").join("examples.jsonl")).unwrap();
    assert_eq!(examples.lines().count(), 20);

    // The resumed replay matches the straight mock run byte for byte.
    let direct = std::fs::read(tmp.path().join("record-full").join("examples.jsonl")).unwrap();
    assert_eq!(
        std::fs::read(tmp.path().join("replay").join("examples.jsonl")).unwrap(),
        direct
    );
}

#[test]
fn offline_flag_rejects_http_models() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());
    let config = demo_config(
        tmp.path(),
        "http",
        serde_json::json!({
            "offline": false,
            "answer_model": {
                "provider": "http_openai_style",
                "model_name": "gpt-4-turbo",
                "endpoint_url": "https://api.example.invalid/v1/chat/completions",
                "auth_env_var": "OPENAI_API_KEY",
                "decoding": {"mode": "greedy", "max_tokens": 64}
            }
        }),
    );
    let output = faithcheck()
        .args(["evaluate", "--offline", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("offline"));
}

#[test]
fn build_demos_writes_pool_and_queue() {
    let tmp = tempfile::tempdir().unwrap();
    stage_demo(tmp.path());

    // Trivia corpus answered by a dedicated mock table: 12 confident
    // questions and 12 with a 0.75/0.25 split.
    let mut trivia = String::new();
    let mut questions = Vec::new();
    for i in 0..24 {
        let q = format!("Trivia fact {i}?");
        trivia.push_str(&format!(
            "{}\n",
            serde_json::json!({"id": format!("t{i:02}"), "question": q, "gold_answers": [format!("fact{i}")]})
        ));
        let answers = if i < 12 {
            serde_json::json!([{"text": format!("fact{i}"), "weight": 1.0}])
        } else {
            serde_json::json!([
                {"text": format!("fact{i}"), "weight": 0.75},
                {"text": format!("other{i}"), "weight": 0.25}
            ])
        };
        questions.push(serde_json::json!({"question": q, "answers": answers}));
    }
    std::fs::write(tmp.path().join("trivia.jsonl"), trivia).unwrap();
    std::fs::write(
        tmp.path().join("trivia_answers.json"),
        serde_json::json!({"questions": questions}).to_string(),
    )
    .unwrap();

    let config = demo_config(
        tmp.path(),
        "demos",
        serde_json::json!({
            "answer_model": {
                "provider": "mock",
                "model_name": "mock-qa",
                "decoding": {"mode": "greedy", "max_tokens": 64},
                "mock_answers_path": "trivia_answers.json"
            }
        }),
    );
    let output = run_ok(
        faithcheck()
            .args([
                "build-demos",
                "--certain",
                "10",
                "--uncertain",
                "10",
                "--config",
            ])
            .arg(&config)
            .arg("--trivia")
            .arg(tmp.path().join("trivia.jsonl")),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("10 certain + 10 uncertain"), "{stdout}");

    let pool_text =
        std::fs::read_to_string(tmp.path().join("demos").join("demo_pool.jsonl")).unwrap();
    assert_eq!(pool_text.lines().count(), 20);
    let uncertain_rows: Vec<serde_json::Value> = pool_text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .filter(|v: &serde_json::Value| v["class"] == "uncertain")
        .collect();
    assert_eq!(uncertain_rows.len(), 10);
    for row in &uncertain_rows {
        assert!(row["verified_gap"].as_f64().unwrap() <= 0.1 + 1e-12);
    }
}
