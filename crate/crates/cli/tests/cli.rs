use std::path::Path;
use std::process::{Command, Output};

fn teamalloc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamalloc"))
        .arg("--out-dir")
        .arg(out)
        .args(["--log-level", "warn", "--threads", "1"])
        .args(args)
        .env_remove("TEAMALLOC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_dataset_and_run_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamalloc(
        dir.path(),
        &["--seed", "7", "gen", "--n", "20", "--teams-min", "3", "--teams-max", "4"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "manifest.json", "run-meta.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let meta = read_json(&dir.path().join("run-meta.json"));
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["config"]["command"]["name"], "gen");
    assert_eq!(meta["config"]["command"]["n"], 20);
    assert!(meta["version"].is_string());
    assert_eq!(read_json(&dir.path().join("manifest.json"))["num_samples"], 20);
}

#[test]
fn missing_instance_is_a_user_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamalloc(dir.path(), &["solve", "--instance", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn unknown_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamalloc(dir.path(), &["gen", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    let out = teamalloc(dir.path(), &["solve", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--timeout-ms"));
}

#[test]
fn invalid_ranges_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamalloc(dir.path(), &["gen", "--n", "5", "--teams-min", "5", "--teams-max", "3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_prints_result_and_leaves_input_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = dir.path().join("inst");
    let out = teamalloc(&inst_dir, &["--seed", "3", "gen", "--instance-only", "--teams-min", "4", "--teams-max", "4", "--robots-per-team-max", "3"]);
    assert!(out.status.success());
    let inst = inst_dir.join("instance.json");
    let before = std::fs::read(&inst).unwrap();
    let out = teamalloc(&dir.path().join("solve"), &["solve", "--instance", inst.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(res["best_assignment"].as_array().unwrap().len(), 12);
    assert!(res["evaluated_count"].as_u64().unwrap() >= 1);
    assert_eq!(std::fs::read(&inst).unwrap(), before);
}

#[test]
fn pipeline_gen_train_eval_infer_bench_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let data = p("data");
    let ok = |out: Output| {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out
    };
    ok(teamalloc(&data, &["--seed", "1", "gen", "--n", "40", "--teams-min", "3", "--teams-max", "4"]));
    ok(teamalloc(&p("train"), &["--seed", "2", "train", "--data", data.to_str().unwrap(), "--epochs", "2", "--hidden", "8"]));
    let ckpt = p("train").join("checkpoint.json");
    let history = std::fs::read_to_string(p("train").join("history.csv")).unwrap();
    assert_eq!(history.lines().next().unwrap(), "epoch,train_loss,val_loss,exact_acc,ms_acc,top3,move_target");
    assert_eq!(history.lines().count(), 3);

    let out = ok(teamalloc(&p("eval"), &["eval", "--data", data.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()]));
    let m: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(m["top3_acc"].as_f64().unwrap() >= m["exact_acc"].as_f64().unwrap());

    ok(teamalloc(&p("inst"), &["gen", "--instance-only", "--teams-min", "3", "--teams-max", "3"]));
    let inst = p("inst").join("instance.json");
    ok(teamalloc(&p("infer"), &["infer", "--instance", inst.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap(), "--max-steps", "5"]));
    let log = read_json(&p("infer").join("episode.json"));
    assert!(log["steps"].as_array().unwrap().len() <= 5);
    let csv = std::fs::read_to_string(p("infer").join("fire.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,team,total_fire,psi,power,L");

    let out = ok(teamalloc(&p("bench"), &["bench", "--checkpoint", ckpt.to_str().unwrap(), "--sizes", "3,4", "--exact-timeout-ms", "5000", "--max-steps", "5"]));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("Teams,Robots,Opt. Total (s)"));
    assert_eq!(text.lines().count(), 3);
    assert!(p("bench").join("bench.csv").exists());

    for target in [data.clone(), data.join("train.jsonl"), ckpt.clone(), inst.clone()] {
        let out = ok(teamalloc(&p("inspect"), &["inspect", target.to_str().unwrap()]));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v["kind"].is_string());
    }
}

#[test]
fn corrupt_checkpoint_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"format\": \"teamalloc-checkpoint\"}").unwrap();
    let out = teamalloc(dir.path(), &["inspect", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_teamalloc"))
        .args(["--log-level", "warn", "gen", "--instance-only", "--teams-min", "3", "--teams-max", "3"])
        .env("TEAMALLOC_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("instance.json").exists());
}
