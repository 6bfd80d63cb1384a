//! Process-level CLI contract tests: exit codes, the machine-parsable
//! error record, and reproducible sampling.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_casetime"))
}

fn fixture_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

#[test]
fn help_exits_zero_everywhere() {
    for args in [
        vec!["--help"],
        vec!["extract", "--help"],
        vec!["sample", "--help"],
        vec!["annotate", "--help"],
        vec!["match", "--help"],
        vec!["evaluate", "--help"],
        vec!["agree", "--help"],
        vec!["report", "--help"],
    ] {
        let output = bin().args(&args).output().unwrap();
        assert_eq!(output.status.code(), Some(0), "help failed for {args:?}");
        assert!(!output.stdout.is_empty());
    }
}

#[test]
fn usage_errors_exit_two() {
    let output = bin().arg("extract").output().unwrap(); // missing required flags
    assert_eq!(output.status.code(), Some(2));
    let output = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn extract_writes_manifest_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.tsv");
    let output = bin()
        .args([
            "extract",
            "--root",
            fixture_path("corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let contents = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(contents.lines().count(), 6); // header + 5 eligible reports
    assert!(contents.starts_with("id\tsource_path\tbody_char_count\n"));
}

#[test]
fn extract_invalid_root_emits_error_record_and_exits_one() {
    let output = bin()
        .args(["extract", "--root", "/no/such/dir", "--out", "/tmp/x.tsv"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap();
    let record: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(record["error"]["kind"], "InvalidRoot");
}

#[test]
fn offline_annotate_without_fixtures_reports_transport_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.tsv");
    let status = bin()
        .args([
            "extract",
            "--root",
            fixture_path("e2e/corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let output = bin()
        .args([
            "--offline",
            "annotate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out-dir",
            tmp.path().join("out").to_str().unwrap(),
            "--max-retries",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().last().unwrap();
    let record: serde_json::Value = serde_json::from_str(line).unwrap();
    assert_eq!(record["error"]["kind"], "TransportError");
}

#[test]
fn sample_is_reproducible_and_records_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.tsv");
    bin()
        .args([
            "extract",
            "--root",
            fixture_path("corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .status()
        .unwrap();

    let out_a = tmp.path().join("sample_a.tsv");
    let out_b = tmp.path().join("sample_b.tsv");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args([
                "sample",
                "--manifest",
                manifest.to_str().unwrap(),
                "--n",
                "3",
                "--seed",
                "42",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap(),
        "same seed must redraw the same sample"
    );
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("sample_a.meta.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["prng"], "chacha20/partial-fisher-yates");

    let different = tmp.path().join("sample_c.tsv");
    bin()
        .args([
            "sample",
            "--manifest",
            manifest.to_str().unwrap(),
            "--n",
            "3",
            "--seed",
            "43",
            "--out",
            different.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert_ne!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&different).unwrap(),
        "a different seed should draw a different sample of 3 from 5"
    );
}

#[test]
fn sample_larger_than_manifest_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("manifest.tsv");
    bin()
        .args([
            "extract",
            "--root",
            fixture_path("corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let output = bin()
        .args([
            "sample",
            "--manifest",
            manifest.to_str().unwrap(),
            "--n",
            "99",
            "--out",
            tmp.path().join("s.tsv").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    let record: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert_eq!(record["error"]["kind"], "SampleTooLarge");
}

#[test]
fn agree_and_levenshtein_evaluate_run_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = fixture_path("e2e");
    let manifest = tmp.path().join("manifest.tsv");
    let annotate_dir = tmp.path().join("annotate");
    bin()
        .args([
            "extract",
            "--root",
            fixtures.join("corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    bin()
        .args([
            "--offline",
            "annotate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out-dir",
            annotate_dir.to_str().unwrap(),
            "--fixtures",
            fixtures.join("responses").to_str().unwrap(),
        ])
        .status()
        .unwrap();

    // Inter-annotator agreement between the reference set (as side A) and
    // the annotated set.
    let agree_dir = tmp.path().join("agree");
    let status = bin()
        .args([
            "--offline",
            "agree",
            "--side-a",
            fixtures.join("reference").to_str().unwrap(),
            "--side-b",
            annotate_dir.join("timelines").to_str().unwrap(),
            "--out-dir",
            agree_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let summary = std::fs::read_to_string(agree_dir.join("summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["pairs"][0]["mode"], "inter_llm");
    assert_eq!(summary["pairs"][0]["total_matched"], 12);

    // Levenshtein at threshold 0 keeps only exact-text pairs, which is the
    // same twelve matches here.
    let lev_dir = tmp.path().join("lev");
    let status = bin()
        .args([
            "--offline",
            "evaluate",
            "--reference",
            fixtures.join("reference").to_str().unwrap(),
            "--candidate",
            annotate_dir.join("timelines").to_str().unwrap(),
            "--out-dir",
            lev_dir.to_str().unwrap(),
            "--metric",
            "levenshtein",
            "--threshold",
            "0",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(lev_dir.join("summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["pairs"][0]["total_matched"], 12);
    assert_eq!(summary["provenance"]["metric"], "levenshtein");
}

#[test]
fn match_subcommand_writes_audit_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = fixture_path("e2e");
    let manifest = tmp.path().join("manifest.tsv");
    let annotate_dir = tmp.path().join("annotate");
    bin()
        .args([
            "extract",
            "--root",
            fixtures.join("corpus").to_str().unwrap(),
            "--out",
            manifest.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    bin()
        .args([
            "--offline",
            "annotate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out-dir",
            annotate_dir.to_str().unwrap(),
            "--fixtures",
            fixtures.join("responses").to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let out_dir = tmp.path().join("match");
    let status = bin()
        .args([
            "--offline",
            "match",
            "--side-a",
            fixtures.join("reference").to_str().unwrap(),
            "--side-b",
            annotate_dir.join("timelines").to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let audit = std::fs::read_to_string(out_dir.join("match_audit.tsv")).unwrap();
    assert!(audit.starts_with("report_id\ttext_a\ttext_b\tdistance\taccepted\trecursion_depth\n"));
    // 12 accepted pairs across the three fixture reports.
    let accepted = audit
        .lines()
        .skip(1)
        .filter(|l| l.split('\t').nth(4) == Some("1"))
        .count();
    assert_eq!(accepted, 12);

    let curve = std::fs::read_to_string(out_dir.join("match_rate_curve.tsv")).unwrap();
    assert!(curve.lines().count() > 3);
    assert!(out_dir.join("match_candidates.tsv").exists());
    assert!(out_dir.join("provenance.json").exists());
}
