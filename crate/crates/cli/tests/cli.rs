use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lstep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lstep"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run lstep")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 10 nodes; nodes 8 and 9 only appear in the last fifth of the file.
fn write_events(path: &Path) {
    let mut text = String::from("user,item,timestamp,label,f1,f2\n");
    for i in 0..240u32 {
        let (u, v) = if i < 200 { (i % 8, (i * 3 + 1) % 8) } else { (8 + i % 2, i % 8) };
        let v = if u == v { (v + 1) % 8 } else { v };
        text.push_str(&format!("{u},{v},{}.5,0,{},{}\n", i, (i % 5) as f64 * 0.2, (i % 3) as f64));
    }
    fs::write(path, text).unwrap();
}

fn write_config(path: &Path, data: &Path) {
    let text = format!(
        "dataset = {:?}\nd_t = 6\nd_n = 4\nd_e = 2\nd_p = 4\nl = 4\nt_gap = 10.0\nk = 3\nbatch_size = 20\nmax_epochs = 2\n",
        data.display().to_string()
    );
    fs::write(path, text).unwrap();
}

#[test]
fn ingest_train_eval_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.csv");
    let data = dir.path().join("events.csv");
    write_events(&raw);

    let out = lstep(&["ingest", raw.to_str().unwrap(), "--out", data.to_str().unwrap(), "--d-n", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = String::from_utf8_lossy(&out.stdout);
    assert!(manifest.contains("num_nodes = 10") && manifest.contains("num_events = 240"), "{manifest}");
    assert!(manifest.contains("d_E = 2"), "{manifest}");

    let config = dir.path().join("run.toml");
    write_config(&config, &data);
    let run = dir.path().join("run");
    let out = lstep(&["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in ["checkpoint.bin", "config.toml", "report.json", "loss_trace.csv"] {
        assert!(run.join(file).exists(), "{file}");
    }
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["loss_trace"].as_array().unwrap().len(), 2);
    assert!(report["bound_check"]["satisfied"].is_boolean());
    assert_eq!(fs::read_to_string(run.join("loss_trace.csv")).unwrap().lines().count(), 3);

    let out = lstep(&["eval", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eval: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("eval_report.json")).unwrap()).unwrap();
    let cells = eval["metrics"].as_array().unwrap();
    assert_eq!(cells.len(), 6);
    let historical = cells
        .iter()
        .find(|c| c["setting"] == "transductive" && c["strategy"] == "historical")
        .unwrap();
    assert!(historical["negative_fallbacks"].is_u64());

    let single = dir.path().join("single.json");
    let out = lstep(&[
        "eval",
        run.to_str().unwrap(),
        "--setting",
        "inductive",
        "--strategy",
        "historical",
        "--out",
        single.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let single: serde_json::Value = serde_json::from_str(&fs::read_to_string(single).unwrap()).unwrap();
    assert_eq!(single["metrics"].as_array().unwrap().len(), 1);

    let out = lstep(&["eval", run.to_str().unwrap(), "--strategy", "sideways"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("events.csv");
    write_events(&data);
    let config = dir.path().join("run.toml");
    write_config(&config, &data);
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let run = dir.path().join(name);
        let out = lstep(&["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        reports.push(fs::read(run.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn seeds_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("events.csv");
    write_events(&data);
    let config = dir.path().join("run.toml");
    write_config(&config, &data);
    let run = dir.path().join("runs");
    let out = lstep(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--max-epochs",
        "1",
        "--seeds",
        "0,1,2",
        "--aggregate",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for s in 0..3 {
        assert!(run.join(format!("seed-{s}/report.json")).exists());
    }
    let agg: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["seeds"], serde_json::json!([0, 1, 2]));
    let cell = &agg["metrics"][0];
    assert_eq!(cell["runs"], 3);
    assert!(cell["ap_std"].as_f64().unwrap() >= 0.0);
}

#[test]
fn shape_mismatch_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("events.csv");
    write_events(&data);
    let config = dir.path().join("run.toml");
    write_config(&config, &data);
    let run = dir.path().join("run");
    let out = lstep(&["train", "--config", config.to_str().unwrap(), "--out", run.to_str().unwrap(), "--max-epochs", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let stored = fs::read_to_string(run.join("config.toml")).unwrap();
    fs::write(run.join("config.toml"), stored.replace("d_p = 4", "d_p = 5")).unwrap();
    let out = lstep(&["eval", run.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("shape hash"), "{}", stderr(&out));
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("events.csv");
    write_events(&data);

    let config = dir.path().join("bad.toml");
    fs::write(&config, format!("dataset = {:?}\nd_t = 6\nalpha_neg = 2.0\n", data.display().to_string())).unwrap();
    let out = lstep(&["train", "--config", config.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    for field in ["alpha_neg", "t_gap", "batch_size"] {
        assert!(err.contains(field), "{err}");
    }
    assert!(!dir.path().join("x").exists());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let target = dir.path().join("out.csv");
    let out = lstep(&["ingest", empty.to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert_ne!(code(&out), 0);
    assert!(!target.exists());

    assert_eq!(code(&lstep(&["check", "--suite", "nonsense"])), 1);
    assert_eq!(code(&lstep(&["frobnicate"])), 1);
    assert_eq!(code(&lstep(&["--help"])), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = lstep(&["eval", dir.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn fourier_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("check.json");
    let out = lstep(&["check", "--suite", "fourier", "--out", summary.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["passed"], true);
    assert!(!json["checks"].as_array().unwrap().is_empty());
    assert_eq!(fs::read(&summary).unwrap(), out.stdout.strip_suffix(b"\n").unwrap());
}
