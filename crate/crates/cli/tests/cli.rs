//! End-to-end CLI tests: subcommands, stage chaining, and exit codes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chaseforge"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn inputs() -> Vec<String> {
    vec![
        "--program".into(),
        data("trading.vada").display().to_string(),
        "--data".into(),
        data("trading.facts").display().to_string(),
        "--glossary".into(),
        data("trading.gloss").display().to_string(),
    ]
}

#[test]
fn parse_prints_a_summary_and_round_trips() {
    let args: Vec<String> = ["parse".to_string()].into_iter().chain(inputs()).collect();
    let output = bin().args(&args).output().unwrap();
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("rules: 3"));
    assert!(text.contains("facts: 6"));

    let output = bin().args(&args).arg("--print").output().unwrap();
    assert!(output.status.success());
    assert!(stdout(&output).contains("-> Accepted(x, y, t1)."));
}

#[test]
fn parse_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.vada");
    std::fs::write(&bad, "P(x) -> Q(y).").unwrap();
    let output = run(&["parse", "--program", bad.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unbound head variable"));
}

#[test]
fn missing_required_flags_exit_with_code_1() {
    // clap-level: missing --out on run.
    let args: Vec<String> = ["run".to_string()].into_iter().chain(inputs()).collect();
    let output = bin().args(&args).output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    // dispatch-level: chase without --data.
    let output = run(&[
        "chase",
        "--program",
        data("trading.vada").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn chase_verbalize_and_validate_chain_through_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("chase.jsonl");
    let args: Vec<String> = ["chase".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--out".to_string(), dump.display().to_string()])
        .collect();
    let output = bin().args(&args).output().unwrap();
    assert!(output.status.success());
    let dump_text = std::fs::read_to_string(&dump).unwrap();
    assert_eq!(dump_text.lines().count(), 5);
    assert!(dump_text.contains("\"rule\":\"r1\""));

    // Verbalizing from the dump matches verbalizing from scratch.
    let from_dump: Vec<String> = ["verbalize".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--chase".to_string(), dump.display().to_string()])
        .collect();
    let direct: Vec<String> = ["verbalize".to_string()].into_iter().chain(inputs()).collect();
    let a = bin().args(&from_dump).output().unwrap();
    let b = bin().args(&direct).output().unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("Since the trader EGTech at time 1"));

    // Replay validation succeeds on the dump and fails on a tampered one.
    let validate: Vec<String> = ["validate".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--chase".to_string(), dump.display().to_string()])
        .collect();
    let output = bin().args(&validate).output().unwrap();
    assert!(output.status.success());
    assert!(stdout(&output).contains("\"valid\": true"));

    let tampered_path = dir.path().join("tampered.jsonl");
    std::fs::write(&tampered_path, dump_text.replace("6.9", "7.0")).unwrap();
    let validate: Vec<String> = ["validate".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--chase".to_string(), tampered_path.display().to_string()])
        .collect();
    let output = bin().args(&validate).output().unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn plan_emits_json_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    let dot = dir.path().join("plan.dot");
    let args: Vec<String> = ["plan".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--emit-plan".to_string(), dot.display().to_string()])
        .collect();
    let output = bin().args(&args).output().unwrap();
    assert!(output.status.success());
    let json = stdout(&output);
    assert!(json.contains("\"rule_id\": \"r1\""));
    assert!(!json.contains("EGTech"), "plan must not contain ground values");
    let dot_text = std::fs::read_to_string(&dot).unwrap();
    assert!(dot_text.contains("\"r1\" -> \"r2\""));
}

#[test]
fn ground_corpus_is_a_subset_of_the_chase_corpus() {
    let corpus_of = |mode: &str| -> BTreeSet<(String, String)> {
        let args: Vec<String> = ["corpus".to_string()]
            .into_iter()
            .chain(inputs())
            .chain([
                "--task".to_string(),
                "qa,explanation,description".to_string(),
                "--mode".to_string(),
                mode.to_string(),
            ])
            .collect();
        let output = bin().args(&args).output().unwrap();
        assert!(output.status.success());
        stdout(&output)
            .lines()
            .map(|line| {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                (
                    v["prompt"].as_str().unwrap().to_string(),
                    v["response"].as_str().unwrap().to_string(),
                )
            })
            .collect()
    };
    let ground = corpus_of("ground");
    let chase = corpus_of("chase");
    assert!(!ground.is_empty());
    assert!(
        ground.is_subset(&chase),
        "every ground pair must also be produceable in chase mode"
    );
    // Derived predicates only show up in chase mode.
    assert!(chase.iter().any(|(_, r)| r.contains("is accepted at time")));
    assert!(!ground.iter().any(|(_, r)| r.contains("is accepted at time")));
}

#[test]
fn run_writes_all_artifacts_and_is_deterministic() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        let args: Vec<String> = ["run".to_string()]
            .into_iter()
            .chain(inputs())
            .chain([
                "--task".to_string(),
                "qa,explanation".to_string(),
                "--seed".to_string(),
                "42".to_string(),
                "--paraphrases".to_string(),
                "1".to_string(),
                "--model".to_string(),
                "t5-large".to_string(),
                "--emit-plan".to_string(),
                "--out".to_string(),
                dir.path().join("out").display().to_string(),
            ])
            .collect();
        let output = bin().args(&args).output().unwrap();
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
        assert!(stdout(&output).contains("backend calls"));
    }
    for name in [
        "train.jsonl",
        "val.jsonl",
        "manifest.json",
        "quality_report.jsonl",
        "chase.jsonl",
        "verbalized.jsonl",
        "plan.json",
        "plan.dot",
        "templates.json",
        "transcript.jsonl",
        "corpus_raw.jsonl",
    ] {
        let a = std::fs::read(dir_a.path().join("out").join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join("out").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across identical runs");
    }
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir_a.path().join("out/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["config"]["model"], "t5-large");
    assert_eq!(manifest["backend_calls"], 6);
    assert_eq!(manifest["counts"]["steps"], 5);
}

#[test]
fn quality_stage_consumes_a_raw_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let run_out = dir.path().join("run");
    let args: Vec<String> = ["run".to_string()]
        .into_iter()
        .chain(inputs())
        .chain(["--out".to_string(), run_out.display().to_string()])
        .collect();
    assert!(bin().args(&args).output().unwrap().status.success());

    let quality_out = dir.path().join("quality");
    let args: Vec<String> = ["quality".to_string()]
        .into_iter()
        .chain(inputs())
        .chain([
            "--in".to_string(),
            run_out.join("corpus_raw.jsonl").display().to_string(),
            "--out".to_string(),
            quality_out.display().to_string(),
            "--threshold".to_string(),
            "0.5".to_string(),
        ])
        .collect();
    let output = bin().args(&args).output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    for name in ["train.jsonl", "val.jsonl", "quality_report.jsonl"] {
        assert!(quality_out.join(name).exists());
    }

    // A corrupt corpus line is a quality-stage failure: exit 5.
    let corrupt = dir.path().join("corrupt.jsonl");
    std::fs::write(&corrupt, "not json\n").unwrap();
    let args: Vec<String> = ["quality".to_string()]
        .into_iter()
        .chain(inputs())
        .chain([
            "--in".to_string(),
            corrupt.display().to_string(),
            "--out".to_string(),
            dir.path().join("q2").display().to_string(),
        ])
        .collect();
    let output = bin().args(&args).output().unwrap();
    assert_eq!(output.status.code(), Some(5));
}

#[test]
fn unreachable_backend_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let args: Vec<String> = ["run".to_string()]
        .into_iter()
        .chain(inputs())
        .chain([
            "--backend".to_string(),
            "http://127.0.0.1:9".to_string(),
            "--out".to_string(),
            dir.path().join("out").display().to_string(),
        ])
        .collect();
    let output = bin().args(&args).output().unwrap();
    assert_eq!(output.status.code(), Some(4));
    // Partial outputs are removed on failure.
    assert!(!dir.path().join("out/chase.jsonl").exists());
}
