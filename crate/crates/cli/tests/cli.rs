use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mmq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmq"))
        .current_dir(dir)
        .env("MMQ_LOG", "error")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

const SMALL: &str = "[gen]\nduration_s = 4.0\n[train]\nepochs = 2\nbatch_size = 32\n";

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    for out in ["a", "b"] {
        let o = mmq(tmp.path(), &["--config", "c.toml", "generate", "--n", "30", "--seed", "7", "--out", out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = tree(&tmp.path().join("a/dataset"));
    assert_eq!(a.len(), 3);
    assert_eq!(a, tree(&tmp.path().join("b/dataset")));
}

#[test]
fn train_without_data_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmq(tmp.path(), &["train", "--out", "t"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--data"));
}

#[test]
fn bad_configs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[train]\nlr_typo = 1.0\n").unwrap();
    assert_eq!(code(&mmq(tmp.path(), &["--config", "bad.toml", "generate", "--out", "x"])), 2);
    assert_eq!(code(&mmq(tmp.path(), &["--config", "missing.toml", "generate"])), 2);
    assert_eq!(code(&mmq(tmp.path(), &["generate", "--missing-rate", "1.5"])), 2);
    assert_eq!(code(&mmq(tmp.path(), &["sweep", "--rates", "0.5,0.1"])), 2);
    assert_eq!(code(&mmq(tmp.path(), &["frobnicate"])), 2);
}

#[test]
fn flags_override_the_config_file_and_are_echoed_first() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "out = \"from_file\"\n[train]\nepochs = 9\nlr = 0.002\n").unwrap();
    let o = mmq(tmp.path(), &["--config", "c.toml", "train", "--data", "nowhere", "--epochs", "4", "--lambda3", "0.5"]);
    assert_eq!(code(&o), 2);
    let run: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("from_file/run.json")).unwrap()).unwrap();
    assert_eq!(run["command"], "train");
    let train = &run["config"]["train"];
    assert_eq!(train["epochs"], 4);
    assert_eq!(train["lr"], 0.002);
    assert_eq!(train["batch_size"], 128);
    assert_eq!(train["weights"]["lambda3"], 0.5);
}

#[test]
fn train_then_eval_leaves_inputs_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.toml"), SMALL).unwrap();
    assert_eq!(code(&mmq(dir, &["--config", "c.toml", "generate", "--n", "40", "--out", "g"])), 0);
    let before = tree(&dir.join("g/dataset"));
    let o = mmq(dir, &["--config", "c.toml", "train", "--data", "g/dataset", "--out", "t"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["run.json", "history.csv", "params.bin", "meta.json", "train_metrics.json"] {
        assert!(dir.join("t").join(f).exists(), "{f}");
    }
    assert_eq!(fs::read_to_string(dir.join("t/history.csv")).unwrap().lines().count(), 3);
    let o = mmq(dir, &["eval", "--model", "t", "--data", "g/dataset", "--out", "e"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("test accuracy"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("e/eval.json")).unwrap()).unwrap();
    assert_eq!(report["split"], "test");
    assert_eq!(before, tree(&dir.join("g/dataset")));
    assert_eq!(code(&mmq(dir, &["eval", "--model", "nope", "--data", "g/dataset"])), 2);
}

#[test]
fn sweep_writes_identical_tables_twice() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.toml"), SMALL).unwrap();
    let args = |out: &'static str| {
        vec![
            "--config", "c.toml", "sweep", "--n", "30", "--seeds", "0,1", "--rates", "0,0.5", "--ablation", "full,no-lr",
            "--baseline", "--out", out,
        ]
    };
    for out in ["s1", "s2"] {
        let o = mmq(dir, &args(out));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv = fs::read_to_string(dir.join("s1/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2 * 2);
    let outputs = |out: &str| -> Vec<(String, Vec<u8>)> {
        tree(&dir.join(out)).into_iter().filter(|(p, _)| p != "run.json").collect()
    };
    assert_eq!(outputs("s1"), outputs("s2"));
}

#[test]
fn gradcheck_passes_on_fresh_init() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mmq(tmp.path(), &["gradcheck", "--out", "gc"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("gc/gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    let suites = report["suites"].as_array().unwrap();
    assert!(suites.iter().any(|s| s["name"].as_str().unwrap().starts_with("total_loss/")));
    assert!(suites.iter().all(|s| s["max_rel_error"].as_f64().unwrap() < 1e-4));
}
