//! Drives the installed binary end to end: one happy path per subcommand
//! plus the exit-code contract (0 ok, 1 structural findings, 2 input or
//! config rejection, 3 embedding backend unavailable).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use forgeval::config::Settings;
use forgeval::corpus::SCHEMA_VERSION;
use forgeval::fixtures::{golden_authentic_record, golden_forged_record, perfect_raw_output,
    synth_corpus};
use forgeval::grpo;
use forgeval::model::GroundTruthRecord;

fn forgeval_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forgeval"));
    // Keep the surrounding environment from silently switching the
    // embedder backend.
    cmd.env_remove("EMBEDDER_URL");
    cmd
}

fn write_gt(dir: &Path, records: &[GroundTruthRecord]) -> PathBuf {
    let path = dir.join("gt.jsonl");
    let mut file = std::fs::File::create(&path).unwrap();
    for record in records {
        let mut value = serde_json::to_value(record).unwrap();
        value["schema_version"] = serde_json::json!(SCHEMA_VERSION);
        writeln!(file, "{value}").unwrap();
    }
    path
}

fn write_lines(dir: &Path, name: &str, lines: &[String]) -> PathBuf {
    let path = dir.join(name);
    let mut file = std::fs::File::create(&path).unwrap();
    for line in lines {
        writeln!(file, "{line}").unwrap();
    }
    path
}

fn pred_line(sample_id: &str, raw_output: &str) -> String {
    serde_json::to_string(&serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "sample_id": sample_id,
        "raw_output": raw_output,
    }))
    .unwrap()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn score_writes_a_reward_log_and_reports_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let (records, predictions) = synth_corpus(42, 20);
    let gt = write_gt(dir.path(), &records);
    let pred_lines: Vec<String> = predictions
        .iter()
        .map(|p| serde_json::to_string(p).unwrap())
        .collect();
    let pred = write_lines(dir.path(), "pred.jsonl", &pred_lines);
    let out = dir.path().join("rewards.jsonl");

    let output = forgeval_cmd()
        .args(["score", "--pred"])
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(&out)
        .args(["--group-size", "4"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("scored 20 sample(s)"), "{stdout}");
    assert!(
        stdout.contains(&Settings::default().content_hash()),
        "{stdout}"
    );

    let log = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 20);
    for (i, line) in lines.iter().enumerate() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(value["sample_id"], serde_json::json!(records[i].sample_id));
        assert_eq!(value["group_id"], serde_json::json!(format!("g{}", i / 4)));
        assert!(value["r_total"].is_number());
    }
}

#[test]
fn validate_is_clean_on_golden_corpus_and_exit_1_on_broken_traces() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![golden_forged_record(), golden_authentic_record()];
    let gt = write_gt(dir.path(), &records);

    // Perfect outputs carry complete staged traces: exit 0.
    let clean_lines: Vec<String> = records
        .iter()
        .map(|r| pred_line(&r.sample_id, &perfect_raw_output(r)))
        .collect();
    let pred = write_lines(dir.path(), "clean.jsonl", &clean_lines);
    let out = dir.path().join("diag_clean.jsonl");
    let output = forgeval_cmd()
        .arg("validate")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));
    assert!(String::from_utf8_lossy(&output.stdout).contains("2 clean"));

    // A stage-less think section fails structural validation: exit 1.
    let broken_lines: Vec<String> = records
        .iter()
        .map(|r| {
            pred_line(
                &r.sample_id,
                "<think>just vibes</think><report>{\"verdict\": \"forgery\", \
                 \"regions\": [[1, 2, 3, 4]], \"rationale\": \"x\"}</report>",
            )
        })
        .collect();
    let pred = write_lines(dir.path(), "broken.jsonl", &broken_lines);
    let out = dir.path().join("diag_broken.jsonl");
    let output = forgeval_cmd()
        .arg("validate")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{}", stderr_of(&output));

    let diagnostics = std::fs::read_to_string(&out).unwrap();
    let first: serde_json::Value =
        serde_json::from_str(diagnostics.lines().next().unwrap()).unwrap();
    assert_eq!(first["structurally_valid"], serde_json::json!(false));
    let codes: Vec<&str> = first["findings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["code"].as_str().unwrap())
        .collect();
    assert!(codes.contains(&"STAGE_MISSING"), "{codes:?}");
}

#[test]
fn mismatched_corpora_are_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![golden_forged_record()];
    let gt = write_gt(dir.path(), &records);
    let pred = write_lines(
        dir.path(),
        "pred.jsonl",
        &[pred_line("no-such-sample", "<report>{}</report>")],
    );

    let output = forgeval_cmd()
        .arg("score")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(dir.path().join("rewards.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("no-such-sample"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn malformed_ground_truth_reports_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let good = golden_forged_record();
    let mut bad = serde_json::to_value(golden_authentic_record()).unwrap();
    bad["schema_version"] = serde_json::json!(SCHEMA_VERSION);
    // Authentic records must not carry regions; this violates the schema.
    bad["gt_regions"] = serde_json::json!([[1.0, 2.0, 3.0, 4.0]]);
    let mut good_value = serde_json::to_value(&good).unwrap();
    good_value["schema_version"] = serde_json::json!(SCHEMA_VERSION);
    let gt = write_lines(
        dir.path(),
        "gt.jsonl",
        &[good_value.to_string(), bad.to_string()],
    );
    let pred = write_lines(
        dir.path(),
        "pred.jsonl",
        &[pred_line(&good.sample_id, &perfect_raw_output(&good))],
    );

    let output = forgeval_cmd()
        .arg("score")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(dir.path().join("rewards.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("line 2"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn advantages_normalizes_bare_arrays_only_with_an_explicit_group_size() {
    let dir = tempfile::tempdir().unwrap();
    let rewards = dir.path().join("rewards.json");
    std::fs::write(&rewards, "[1.0, 2.0, 3.0]\n").unwrap();
    let out = dir.path().join("advantages.json");

    let output = forgeval_cmd()
        .arg("advantages")
        .arg("--rewards")
        .arg(&rewards)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("--group-size"),
        "{}",
        stderr_of(&output)
    );

    let output = forgeval_cmd()
        .arg("advantages")
        .arg("--rewards")
        .arg(&rewards)
        .arg("--out")
        .arg(&out)
        .args(["--group-size", "3"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr_of(&output));

    let written: Vec<f64> =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let expected =
        grpo::batch_advantages(&[1.0, 2.0, 3.0], 3, grpo::DEFAULT_EPSILON).unwrap();
    assert_eq!(written, expected);
}

#[test]
fn unknown_config_keys_are_rejected_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![golden_forged_record()];
    let gt = write_gt(dir.path(), &records);
    let pred = write_lines(
        dir.path(),
        "pred.jsonl",
        &[pred_line(&records[0].sample_id, &perfect_raw_output(&records[0]))],
    );
    let config = dir.path().join("eval.conf");
    std::fs::write(&config, "reward.lambda_format = 0.15\nreward.nonsense = 1\n").unwrap();

    let output = forgeval_cmd()
        .arg("score")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("rewards.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("nonsense"),
        "{}",
        stderr_of(&output)
    );
}

#[test]
fn unreachable_embedding_service_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![golden_forged_record()];
    let gt = write_gt(dir.path(), &records);
    let pred = write_lines(
        dir.path(),
        "pred.jsonl",
        &[pred_line(&records[0].sample_id, &perfect_raw_output(&records[0]))],
    );

    let output = forgeval_cmd()
        .arg("score")
        .arg("--pred")
        .arg(&pred)
        .arg("--gt")
        .arg(&gt)
        .arg("--out")
        .arg(dir.path().join("rewards.jsonl"))
        // Discard port: connection refused, retried, then surfaced.
        .env("EMBEDDER_URL", "http://127.0.0.1:9/embed")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "{}", stderr_of(&output));
    assert!(
        stderr_of(&output).contains("3 attempts"),
        "{}",
        stderr_of(&output)
    );
}
