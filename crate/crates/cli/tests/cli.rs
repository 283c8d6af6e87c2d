use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ltrk::logic::LogicTree;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_ltrk");

const MP_TRACE: &str = "CASE: c1
STEP 1: MAJOR: if a then b ; MINOR: a ; CONCLUSION: b
STEP 2: MAJOR: if b then c ; MINOR: b ; CONCLUSION: c
ANSWER: c
";

fn ltrk(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("LTRK_THREADS", n),
        None => cmd.env_remove("LTRK_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn ok(args: &[&str]) -> Value {
    let out = ltrk(args, None);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(text.trim()).expect("stdout is one JSON value")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn synth_writes_world_and_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let summary = ok(&["synth", "--seed", "5", "--cases", "30", "--out", p(&a)]);
    assert_eq!(summary["cases"], 30);
    ok(&["synth", "--seed", "5", "--cases", "30", "--out", p(&b)]);
    let cases = fs::read_to_string(a.join("cases.jsonl")).unwrap();
    assert_eq!(cases.lines().count(), 30);
    assert_eq!(cases, fs::read_to_string(b.join("cases.jsonl")).unwrap());
    assert_eq!(
        fs::read(a.join("world.json")).unwrap(),
        fs::read(b.join("world.json")).unwrap()
    );
}

#[test]
fn unwritable_output_is_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = write(tmp.path(), "plain", "x");
    let out = ltrk(&["synth", "--out", &format!("{file}/sub")], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_and_threads_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.cfg", "seed = 1\nbogus = 2\n");
    let out = ltrk(&["synth", "--config", &cfg, "--out", p(tmp.path())], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = ltrk(&["synth", "--set", "n_classes=1", "--out", p(tmp.path())], None);
    assert_eq!(out.status.code(), Some(2));

    let out = ltrk(&["verify", &write(tmp.path(), "t.txt", MP_TRACE)], Some("0"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_report_resume_and_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    let more = tmp.path().join("more");
    ok(&["synth", "--cases", "40", "--out", p(&data)]);

    let last = ok(&["train", "--dataset", p(&data), "--epochs", "3", "--out", p(&run)]);
    assert_eq!(last["epoch"], 3);
    let report = fs::read_to_string(run.join("report.jsonl")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let header: Value = serde_json::from_str(&fs::read_to_string(run.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(header["config"]["train"]["epochs"], 3);

    let ck = run.join("checkpoint.ltrk");
    let resumed = ok(&["train", "--dataset", p(&data), "--epochs", "2", "--out", p(&more), "--resume", p(&ck)]);
    assert_eq!(resumed["epoch"], 5);
    let report = fs::read_to_string(more.join("report.jsonl")).unwrap();
    let epochs: Vec<u64> = report
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["epoch"].as_u64().unwrap())
        .collect();
    assert_eq!(epochs, [4, 5]);

    let solo = ok(&["eval", "--dataset", p(&data), "--checkpoint", p(&ck)]);
    assert_eq!(solo["n_cases"], 40);
    assert!(solo.get("mcnemar_stat").is_none());
    let paired = ok(&["eval", "--dataset", p(&data), "--checkpoint", p(&ck), "--baseline", p(&ck)]);
    assert_eq!(paired["mcnemar_stat"], 0.0);
    assert_eq!(paired["bootstrap_p"], 1.0);
    assert_eq!(paired["accuracy"], solo["accuracy"]);
}

#[test]
fn eval_rejects_mismatched_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let small = tmp.path().join("small");
    let wide = tmp.path().join("wide");
    let run = tmp.path().join("run");
    ok(&["synth", "--cases", "10", "--out", p(&small)]);
    ok(&["synth", "--cases", "10", "--set", "d_v=5", "--out", p(&wide)]);
    ok(&["train", "--dataset", p(&small), "--epochs", "1", "--out", p(&run)]);
    let out = ltrk(
        &["eval", "--dataset", p(&wide), "--checkpoint", p(&run.join("checkpoint.ltrk"))],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d_v 8 vs dataset 5"));
}

#[test]
fn verify_scores_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let weak = "CASE: c2
STEP 1: MAJOR: if a then b ; MINOR: a ; CONCLUSION: b
STEP 2: MAJOR: if a then b ; MINOR: b ; CONCLUSION: a
ANSWER: a
";
    let file = write(tmp.path(), "t.txt", &format!("{MP_TRACE}{weak}"));
    let out = ltrk(&["verify", &file], None);
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["logic_loss"], 0.0);
    assert_eq!(lines[1]["logic_loss"], 0.25);
    assert_eq!(lines[1]["steps"][1]["rule"], "WeakInference");

    let bad = write(
        tmp.path(),
        "bad.txt",
        "CASE: x\nSTEP 1: MAJOR: if a then ; MINOR: a ; CONCLUSION: b\nANSWER: b\n",
    );
    let out = ltrk(&["verify", &bad], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn render_dot_json_and_dangling() {
    let tmp = tempfile::tempdir().unwrap();
    let file = write(tmp.path(), "t.txt", MP_TRACE);
    let out = ltrk(&["render", &file, "--format", "dot"], None);
    assert!(out.status.success());
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("shape=").count(), 5);

    let out = ltrk(&["render", &file, "--format", "json"], None);
    let text = String::from_utf8(out.stdout).unwrap();
    let tree: LogicTree = serde_json::from_str(text.trim()).unwrap();
    assert_eq!(serde_json::to_string(&tree).unwrap(), text.trim());
    assert_eq!(tree.edges.len(), 2);
    assert!(tree.edges.iter().all(|e| e.score.unwrap().value == 1.0));

    let facts = write(tmp.path(), "facts.txt", "a\nif a then b\n");
    let out = ltrk(&["render", &file, "--facts", &facts], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DanglingPremise"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen: Vec<Vec<Vec<u8>>> = Vec::new();
    for threads in ["1", "4"] {
        let root = tmp.path().join(threads);
        let data = root.join("data");
        let run = root.join("run");
        let run_s = p(&run).to_string();
        let data_s = p(&data).to_string();
        let ck = run.join("checkpoint.ltrk");
        let ck_s = p(&ck).to_string();
        let steps: [Vec<&str>; 3] = [
            vec!["synth", "--seed", "3", "--cases", "40", "--out", &data_s],
            vec!["train", "--seed", "3", "--dataset", &data_s, "--epochs", "2", "--out", &run_s],
            vec!["eval", "--seed", "3", "--dataset", &data_s, "--checkpoint", &ck_s, "--baseline", &ck_s],
        ];
        let mut bytes = Vec::new();
        for args in &steps {
            let out = ltrk(args, Some(threads));
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            if args[0] != "synth" {
                bytes.push(out.stdout);
            }
        }
        for f in [data.join("cases.jsonl"), data.join("world.json"), ck.clone(), run.join("report.jsonl")] {
            bytes.push(fs::read(f).unwrap());
        }
        seen.push(bytes);
    }
    assert_eq!(seen[0], seen[1]);
}
