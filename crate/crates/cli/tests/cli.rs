use std::path::Path;
use std::process::{Command, Output};

fn lazydrd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lazydrd"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = lazydrd(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn gen(dir: &Path, kind: &str, seed: &str, out: &str) {
    ok(
        dir,
        &["gen", "--scenario", kind, "--grid", "7x7", "--worlds", "120", "--paths", "15", "--k", "60", "--seed", seed, "--out", out],
    );
}

#[test]
fn help_lists_defaults_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for sub in ["gen", "compile-tree", "run", "sweep", "report"] {
        let out = lazydrd(dir.path(), &[sub, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("Exit codes"), "{sub}");
        assert!(text.contains("--seed"), "{sub}");
        if sub == "compile-tree" || sub == "sweep" {
            assert!(text.contains("[default: 0.05]") && text.contains("[default: 0.9]"), "{sub}");
        }
    }
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(lazydrd(d, &["gen", "--scenario", "maze", "--out", "x.bin"]).status.code(), Some(2));
    assert_eq!(lazydrd(d, &["--jobs", "0", "report", "--runs", ".", "--out", "t.csv"]).status.code(), Some(2));

    std::fs::write(d.join("junk.bin"), b"not a dataset").unwrap();
    assert_eq!(lazydrd(d, &["run", "--dataset", "junk.bin", "--policy", "random", "--out", "r"]).status.code(), Some(3));

    gen(d, "onewall", "1", "a.bin");
    gen(d, "onewall", "2", "b.bin");
    ok(d, &["compile-tree", "--dataset", "a.bin", "--out", "a.tree.json"]);
    let out = lazydrd(d, &["run", "--dataset", "b.bin", "--tree", "a.tree.json", "--out", "r"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("compiled for dataset"));
    assert_eq!(lazydrd(d, &["run", "--dataset", "b.bin", "--policy", "direct-only", "--out", "r"]).status.code(), Some(4));
    assert_eq!(lazydrd(d, &["compile-tree", "--dataset", "a.bin", "--max-nodes", "1", "--out", "t.json"]).status.code(), Some(5));
    assert!(!d.join("t.json").exists());
    assert!(!d.join("r").join("b.direct-only.json").exists());
}

#[test]
fn pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d, "twowall", "3", "tw.bin");
    ok(d, &["compile-tree", "--dataset", "tw.bin", "--train-size", "50", "--seed", "3", "--out", "tree.json"]);
    let tree: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("tree.json")).unwrap()).unwrap();
    assert_eq!(tree["params"]["train_size"], 50);
    ok(d, &["run", "--dataset", "tw.bin", "--tree", "tree.json", "--policy", "direct+bisect", "--policy", "lazysp-set", "--out", "runs"]);
    assert!(d.join("runs/tw.direct+bisect.json").exists());
    assert!(d.join("runs/tw.lazysp-set.json").exists());
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("runs/tw.direct+bisect.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["policy"], "direct+bisect");
    assert!(run["config"].get("jobs").is_none());
    ok(d, &["report", "--runs", "runs", "--bootstrap", "200", "--out", "table.csv"]);
    let csv = std::fs::read_to_string(d.join("table.csv")).unwrap();
    assert!(csv.starts_with("policy,tw_low,tw_high\ndirect+bisect,0,0\n"), "{csv}");
    assert!(d.join("table.json").exists());
    ok(d, &["sweep", "--dataset", "tw.bin", "--sizes", "20,60", "--trials", "1", "--out", "sweep"]);
    for f in ["sweep_cost.csv", "sweep_failure_direct_only.csv", "sweep_failure_direct_bisect.csv", "sweep.json"] {
        assert!(d.join("sweep").join(f).exists(), "{f}");
    }
    assert_eq!(lazydrd(d, &["sweep", "--dataset", "tw.bin", "--sizes", "60,20", "--out", "s2"]).status.code(), Some(4));
}
