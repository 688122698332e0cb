use std::path::Path;
use std::process::{Command, Output};

fn aerotrack(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aerotrack")).args(args).current_dir(dir).output().unwrap()
}

fn ok(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "status {:?}\nstdout {stdout}\nstderr {}", out.status, String::from_utf8_lossy(&out.stderr));
    stdout
}

fn assets() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/assets")
}

#[test]
fn simulate_fit_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&aerotrack(&["simulate", "--frames-count", "120", "--frames-out", "f.jsonl", "--truth-out", "t.jsonl"], d));
    ok(&aerotrack(
        &["simulate", "--frames-count", "300", "--target-free", "7", "--frames-out", "cal.jsonl", "--truth-out", "cal_t.jsonl"],
        d,
    ));
    assert_eq!(std::fs::read_to_string(d.join("f.jsonl")).unwrap().lines().count(), 120);

    let fit = ok(&aerotrack(&["fit", "--frames", "cal.jsonl", "--out", "model.json"], d));
    assert!(fit.contains("modelled"), "{fit}");

    ok(&aerotrack(&["run", "--frames", "f.jsonl", "--truth", "t.jsonl", "--model", "model.json", "--out", "run"], d));
    for f in ["filtered.jsonl", "objects.jsonl", "tracks.jsonl", "run.metrics.json", "run.timings.json", "run.txt"] {
        assert!(d.join("run").join(f).exists(), "missing {f}");
    }
    assert_eq!(std::fs::read_to_string(d.join("run/filtered.jsonl")).unwrap().lines().count(), 120);

    // Rescoring the written track stream reproduces the run's own metrics.
    ok(&aerotrack(&["eval", "--tracks", "run/tracks.jsonl", "--truth", "t.jsonl", "--out", "eval.json"], d));
    let run: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("run/run.metrics.json")).unwrap()).unwrap();
    let eval: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(run["trajectory"]["total"], eval["total"]);
    assert_eq!(run["trajectory"]["fp_frames"], eval["fp_frames"]);
}

#[test]
fn simulated_run_matches_file_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&aerotrack(&["simulate", "--frames-count", "80", "--frames-out", "f.jsonl", "--truth-out", "t.jsonl"], d));
    ok(&aerotrack(&["fit", "--out", "model.json"], d));
    ok(&aerotrack(&["run", "--frames-count", "80", "--model", "model.json", "--out", "a"], d));
    ok(&aerotrack(&["run", "--frames", "f.jsonl", "--truth", "t.jsonl", "--model", "model.json", "--out", "b"], d));
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("a/run.metrics.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("b/run.metrics.json")).unwrap()).unwrap();
    assert_eq!(a["trajectory"], b["trajectory"]);
    assert_eq!(a["objects"], b["objects"]);
    assert_eq!(std::fs::read(d.join("a/tracks.jsonl")).unwrap(), std::fs::read(d.join("b/tracks.jsonl")).unwrap());
}

#[test]
fn check_mode_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&aerotrack(&["fit", "--out", "model.json"], d));

    // Target-free scene with all stages: no false outputs.
    ok(&aerotrack(&["simulate", "--frames-count", "200", "--target-free", "3", "--frames-out", "f.jsonl", "--truth-out", "t.jsonl"], d));
    let out = ok(&aerotrack(&["run", "--frames", "f.jsonl", "--truth", "t.jsonl", "--model", "model.json", "--check"], d));
    assert!(out.contains("PASS target_free_fp_rate"), "{out}");

    // Without any filtering stage F1 collapses and the check fails.
    std::fs::write(
        d.join("basic.toml"),
        "[stages]\nfingerprint = false\nspatial_confidence = false\nvelocity_confidence = false\nclassifier = false\n",
    )
    .unwrap();
    let out = aerotrack(&["run", "--config", "basic.toml", "--frames-count", "150", "--model", "model.json", "--check"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL f1"));
}

#[test]
fn parity_subcommand() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let w = assets().join("trajformer.weights");
    let p = assets().join("trajformer.parity.jsonl");
    let (w, p) = (w.to_str().unwrap(), p.to_str().unwrap());
    let out = ok(&aerotrack(&["parity", "--weights", w, "--parity", p], d));
    assert!(out.starts_with("64 vectors"), "{out}");

    // Freshly initialised weights do not reproduce the trained outputs.
    ok(&aerotrack(&["init-weights", "--seed", "5", "--out", "init.weights"], d));
    let out = aerotrack(&["parity", "--weights", "init.weights", "--parity", p], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let out = aerotrack(&["eval", "--tracks", "missing.jsonl", "--truth", "missing.jsonl"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    std::fs::write(d.join("bad.weights"), b"not a weight file").unwrap();
    let out = aerotrack(&["run", "--frames-count", "10", "--weights", "bad.weights"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn printed_config_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let text = ok(&aerotrack(&["config"], d));
    std::fs::write(d.join("c.toml"), text).unwrap();
    ok(&aerotrack(&["simulate", "--config", "c.toml", "--frames-count", "3", "--frames-out", "f.jsonl", "--truth-out", "t.jsonl"], d));
}
