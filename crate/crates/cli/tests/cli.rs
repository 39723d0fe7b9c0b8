use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const SMALL: &[&str] = &[
    "--set",
    "train_speakers=4",
    "--set",
    "test_speakers=4",
    "--set",
    "utts_per_speaker=12",
    "--set",
    "train_epochs=4",
    "--set",
    "sat_epochs=1",
    "--set",
    "adapt_epochs=2",
];

fn lfmmi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfmmi"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lfmmi(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    args.iter().copied().chain(SMALL.iter().copied()).collect()
}

fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

#[test]
fn smoke_pipeline_under_budget() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let start = Instant::now();
    ok(d, &with_small(&["generate", "--split", "train", "--out", "train"]));
    ok(d, &with_small(&["generate", "--split", "test", "--out", "test"]));
    ok(d, &with_small(&["train", "--corpus", "train", "--out", "si"]));
    ok(d, &with_small(&["sat", "--corpus", "train", "--init", "si", "--out", "sat"]));
    ok(
        d,
        &with_small(&["adapt", "--model", "si", "--corpus", "test", "--out", "ad", "--method", "blhuc", "--criterion", "ce"]),
    );
    ok(d, &["decode", "--model", "si", "--corpus", "test", "--adapters", "ad", "--out", "hyp.txt"]);
    let score: Value = serde_json::from_str(&ok(d, &["score", "--corpus", "test", "--hyps", "hyp.txt"])).unwrap();
    let ter = score["ter"].as_f64().unwrap();
    assert!((0.0..=1.5).contains(&ter), "{ter}");
    assert_eq!(score["per_speaker"].as_object().unwrap().len(), 4);
    assert!(start.elapsed().as_secs_f64() < 60.0, "{:?}", start.elapsed());

    assert!(d.join("sat/train-adapters/train-s000.lfa").is_file());
    let dump = ok(d, &["show-adapter", "ad/test-s000.lfa"]);
    assert!(dump.contains("bayesian"), "{dump}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(d.join("ad/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["criterion"], "ce");
    assert_eq!(summary["speakers"].as_array().unwrap().len(), 4);
}

#[test]
fn zero_epochs_give_identity_adapters_and_baseline_decode() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &with_small(&["generate", "--split", "train", "--out", "train"]));
    ok(d, &with_small(&["generate", "--split", "test", "--out", "test", "--speakers", "2"]));
    ok(d, &with_small(&["train", "--corpus", "train", "--out", "si"]));
    for method in ["lhuc", "blhuc", "map", "kl"] {
        let out = format!("ad-{method}");
        ok(
            d,
            &with_small(&["adapt", "--model", "si", "--corpus", "test", "--out", &out, "--method", method, "--epochs", "0"]),
        );
        let dump = ok(d, &["show-adapter", &format!("{out}/test-s001.lfa")]);
        assert!(dump.contains("identity true"), "{method}: {dump}");
        let hyp = format!("{method}.txt");
        ok(d, &["decode", "--model", "si", "--corpus", "test", "--adapters", &out, "--out", &hyp]);
    }
    ok(d, &["decode", "--model", "si", "--corpus", "test", "--out", "si.txt"]);
    let baseline = std::fs::read(d.join("si.txt")).unwrap();
    for method in ["lhuc", "blhuc", "map", "kl"] {
        assert_eq!(std::fs::read(d.join(format!("{method}.txt"))).unwrap(), baseline, "{method}");
    }
}

#[test]
fn config_errors_list_every_field() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.cfg"), "seed = 1\nadapt_learning_rate = -1\nselection_rate = 3\nhidden = 0\n").unwrap();
    let out = lfmmi(d, &["--config", "bad.cfg", "config"]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_of(&out);
    assert_eq!(err["error"], "invalid-config");
    let details: Vec<String> = err["details"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    for needle in ["learning_rate", "selection_rate", "hidden"] {
        assert!(details.iter().any(|m| m.contains(needle)), "{needle} missing from {details:?}");
    }

    let out = lfmmi(d, &["--set", "no_such_key=1", "--set", "seed=abc", "config"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["details"].as_array().unwrap().len(), 2);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("a.cfg"), "# comment\nseed = 7\nadapt_epochs = 3\n").unwrap();
    let text = ok(d, &["--config", "a.cfg", "--set", "adapt_epochs=5", "config"]);
    assert!(text.contains("seed = 7\n"));
    assert!(text.contains("adapt_epochs = 5\n"));

    // settings on both sides of the subcommand accumulate, later ones win
    let text = ok(
        d,
        &["--config", "a.cfg", "--set", "beam=3", "--set", "adapt_epochs=5", "config", "--set", "adapt_epochs=6", "--set", "mc_samples=2"],
    );
    for line in ["seed = 7\n", "beam = 3\n", "adapt_epochs = 6\n", "mc_samples = 2\n"] {
        assert!(text.contains(line), "{line:?} missing from {text}");
    }
}

#[test]
fn score_reports_missing_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &with_small(&["generate", "--split", "test", "--out", "test", "--speakers", "1"]));
    std::fs::write(d.join("hyp.txt"), "test-s000-u000\ta b\nghost\ta\n").unwrap();
    let out = lfmmi(d, &["score", "--corpus", "test", "--hyps", "hyp.txt"]);
    assert_eq!(out.status.code(), Some(5));
    let err = error_of(&out);
    assert_eq!(err["error"], "id-mismatch");
    let details = err["details"].to_string();
    assert!(details.contains("test-s000-u001") && details.contains("ghost"), "{details}");
}

#[test]
fn missing_inputs_fail_with_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lfmmi(tmp.path(), &["train", "--corpus", "nowhere", "--out", "m"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["error"], "invalid-argument");
    assert!(!tmp.path().join("m").exists());
}

#[test]
fn experiment_is_reproducible_and_reports_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = with_small(&[
        "--set",
        "conditions=si,lhuc,lhuc-oracle,blhuc-n2,lhuc-ce-sat",
        "--set",
        "sweep_methods=lhuc",
        "--set",
        "sweep_counts=1,3",
        "experiment",
    ]);
    let mut a = args.clone();
    a.extend(["--out", "run1"]);
    let mut b = args.clone();
    b.extend(["--out", "run2"]);
    ok(d, &a);
    ok(d, &b);
    let m1 = std::fs::read(d.join("run1/metrics.json")).unwrap();
    assert_eq!(m1, std::fs::read(d.join("run2/metrics.json")).unwrap());
    assert!(d.join("run1/timing.json").is_file());

    let csv = std::fs::read_to_string(d.join("run1/metrics.csv")).unwrap();
    // 5 conditions + 2 sweep points, one test set, plus the header
    assert_eq!(csv.lines().count(), 1 + 7);
    let plot = std::fs::read_to_string(d.join("run1/plotdata.tsv")).unwrap();
    assert!(plot.contains("lhuc\t1\t") && plot.contains("lhuc\t3\t") && plot.contains("blhuc\t2\t"), "{plot}");

    // re-emitting from the stored JSON reproduces every file
    ok(d, &["report", "--metrics", "run1/metrics.json", "--out", "again"]);
    for f in ["metrics.json", "metrics.csv", "plotdata.tsv"] {
        assert_eq!(
            std::fs::read(d.join("run1").join(f)).unwrap(),
            std::fs::read(d.join("again").join(f)).unwrap(),
            "{f}"
        );
    }
    let out = lfmmi(d, &["report", "--metrics", "run1/metrics.json", "--format", "xml", "--out", "x"]);
    assert_eq!(out.status.code(), Some(3));
}
