//! The command-line tool, run as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stancegraph"))
        .args(args)
        .current_dir(dir)
        .env_remove("STANCE_ANNOTATE_API_KEY")
        .output()
        .expect("spawn binary")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn hand_trace(dir: &Path) {
    fs::write(dir.join("posts.tsv"), "u1\th1,h1,h1,h3\nu2\th2,h2,h3,h3\nu3\th3,h3,h3,h3,h3\n").unwrap();
    fs::write(dir.join("s1.txt"), "h1\n").unwrap();
    fs::write(dir.join("s2.txt"), "h2\n").unwrap();
}

fn leftovers(dir: &Path) -> Vec<String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains(".partial-"))
        .collect()
}

#[test]
fn propagate_hand_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    hand_trace(d);
    ok(d, &["build-graph", "--posts", "posts.tsv", "--out", "g.sgr"]);
    let summary = ok(
        d,
        &[
            "propagate", "--graph", "g.sgr", "--seeds-s1", "s1.txt", "--seeds-s2", "s2.txt", "--out", "users.tsv",
            "--hashtags-out", "tags.tsv",
        ],
    );
    let v: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    assert_eq!(v["iterations"], 2);
    assert_eq!(v["converged"], true);
    assert_eq!(fs::read_to_string(d.join("users.tsv")).unwrap(), "u1\ts1\tpropagated\t1\nu2\ts2\tpropagated\t1\n");
    assert_eq!(fs::read_to_string(d.join("tags.tsv")).unwrap(), "h1\ts1\tseed\t0\nh2\ts2\tseed\t0\n");
    assert!(d.join("users.tsv.manifest.json").exists());
    assert!(d.join("g.sgr.manifest.json").exists());
}

#[test]
fn evaluate_identical_files_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("labels.tsv"), "a\ts1\nb\ts2\nc\ts2\nd\ts1\n").unwrap();
    let out = ok(d, &["evaluate", "--pred", "labels.tsv", "--truth", "labels.tsv"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["mean"]["f1"], 1.0);
    assert_eq!(v["mean"]["accuracy"], 1.0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| run(d, args).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["build-graph", "--posts", "missing.tsv", "--out", "g.sgr"]), Some(2));

    fs::write(d.join("junk.sgr"), b"NOPE0000").unwrap();
    hand_trace(d);
    let args = ["propagate", "--graph", "junk.sgr", "--seeds-s1", "s1.txt", "--seeds-s2", "s2.txt", "--out", "u.tsv"];
    assert_eq!(code(&args), Some(3));

    fs::write(d.join("bad.tsv"), "only-one-column\n").unwrap();
    assert_eq!(code(&["build-graph", "--posts", "bad.tsv", "--out", "g.sgr"]), Some(3));

    let args = ["synth", "--out-dir", "s", "--set", "no_such_key=1"];
    assert_eq!(code(&args), Some(2));

    fs::write(d.join("req.jsonl"), "{\"user_id\":\"u\",\"tweets\":[\"x\"],\"topic\":\"gun_control\"}\n").unwrap();
    let args = ["annotate", "--requests", "req.jsonl", "--out", "ann.tsv"];
    let out = run(d, &args);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("STANCE_ANNOTATE_API_KEY"));
}

#[test]
fn failed_commands_leave_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    hand_trace(d);
    fs::write(d.join("other1.txt"), "nowhere\n").unwrap();
    fs::write(d.join("other2.txt"), "absent\n").unwrap();
    let out = run(
        d,
        &["propagate", "--posts", "posts.tsv", "--seeds-s1", "other1.txt", "--seeds-s2", "other2.txt", "--out", "u.tsv"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("u.tsv").exists());
    assert!(!d.join("u.tsv.manifest.json").exists());
    assert!(leftovers(d).is_empty(), "{:?}", leftovers(d));
}

#[test]
fn staged_commands_chain_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--preset", "separable", "--set", "users_per_community=[60,60]", "--set", "dim=8", "--out-dir", "data"]);
    for f in ["posts.tsv", "tweets.jsonl", "truth.tsv", "seeds_s1.txt", "seeds_s2.txt", "manifest.json"] {
        assert!(d.join("data").join(f).exists(), "{f}");
    }
    ok(d, &["build-graph", "--posts", "data/posts.tsv", "--out", "g.sgr"]);
    ok(
        d,
        &["propagate", "--graph", "g.sgr", "--seeds-s1", "data/seeds_s1.txt", "--seeds-s2", "data/seeds_s2.txt", "--out", "stage1.tsv"],
    );
    ok(d, &["ingest", "--tweets", "data/tweets.jsonl", "--out", "g.sgi"]);
    ok(d, &["train", "--graph", "g.sgi", "--labels", "stage1.tsv", "--model", "sage", "--epochs", "60", "--out", "m.sgm"]);
    ok(d, &["predict", "--model", "m.sgm", "--graph", "g.sgi", "--out", "pred.tsv", "--probabilities", "p.tsv"]);
    let report = ok(d, &["evaluate", "--pred", "pred.tsv", "--truth", "data/truth.tsv"]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(v["mean"]["f1"].as_f64().unwrap() > 0.9, "{report}");

    for line in fs::read_to_string(d.join("p.tsv")).unwrap().lines() {
        let cols: Vec<&str> = line.split('\t').collect();
        let p: f64 = cols[1].parse::<f64>().unwrap() + cols[2].parse::<f64>().unwrap();
        assert!((p - 1.0).abs() < 2e-6, "{line}");
    }

    ok(d, &["replay", "pred.tsv.manifest.json"]);
    fs::write(d.join("g.sgi"), b"tampered").unwrap();
    assert_eq!(run(d, &["replay", "pred.tsv.manifest.json"]).status.code(), Some(3));
}

#[test]
fn pipeline_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "pipeline", "--synth", "preset=separable,users_per_community=[50,50],dim=8", "--model", "mlp", "--trials",
            "2", "--set", "train.epochs=40", "--out-dir", "run",
        ],
    );
    let run_dir = d.join("run");
    for f in ["stage1_users.tsv", "predictions.tsv", "report.json", "report.tsv", "summary.json", "manifest.json"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trial_count"], 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "pipeline");
    assert!(leftovers(&run_dir).is_empty());
}

#[test]
fn synth_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        ok(d, &["synth", "--set", "users_per_community=[40,30]", "--seed", "9", "--out-dir", out]);
    }
    for f in ["posts.tsv", "tweets.jsonl", "truth.tsv", "seeds_s1.txt", "seeds_s2.txt"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}
