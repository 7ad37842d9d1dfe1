use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn infoflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infoflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stdout).trim()).unwrap()
}

#[test]
fn flow1d_zero_steps_writes_one_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let o = infoflow(tmp.path(), &["flow1d", "--steps", "0", "--particles", "5"]);
    assert!(o.status.success());
    let traj = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "t,particle_id,dim_0");
    assert_eq!(lines.len(), 6);
    assert!(lines[1..].iter().all(|l| l.starts_with("0,")));
    let ksd = std::fs::read_to_string(tmp.path().join("ksd.csv")).unwrap();
    assert_eq!(ksd.lines().count(), 2);
    let kde = std::fs::read_to_string(tmp.path().join("kde/t000000.csv")).unwrap();
    assert!(kde.starts_with("grid,density\n"));
}

#[test]
fn unknown_preset_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = infoflow(tmp.path(), &["flow1d", "--target", "foo"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gauss-3") && err.contains("gmm-sym"), "{err}");

    let o = infoflow(tmp.path(), &["approx2d", "--method", "vae"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gauss"));
    let o = infoflow(tmp.path(), &["--bandwidth", "fixed:-1", "flow1d"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn approx2d_summary_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let o = infoflow(
        tmp.path(),
        &["approx2d", "--target", "mog", "--method", "gauss", "--particles", "200", "--bootstrap", "200"],
    );
    assert!(o.status.success());
    let v = stdout_json(&o);
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["method", "target", "ksd", "gof_decision"]);
    assert_eq!(v["gof_decision"], "reject_H0");
    let saved = std::fs::read_to_string(tmp.path().join("summary.json")).unwrap();
    assert_eq!(saved.lines().count(), 1);
    let cloud = std::fs::read_to_string(tmp.path().join("cloud.csv")).unwrap();
    assert_eq!(cloud.lines().count(), 201);
}

#[test]
fn gof_reports_one_line() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("s.csv");
    let mut text = String::from("x\n");
    for i in 0..200 {
        text.push_str(&format!("{}\n", -3.0 + 0.5 * ((i as f64 + 0.5) / 200.0 - 0.5) * 3.0));
    }
    std::fs::write(&samples, text).unwrap();
    let o = infoflow(tmp.path(), &["gof", "--samples", samples.to_str().unwrap(), "--target", "student"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    for key in ["statistic", "threshold", "alpha", "decision", "B"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["decision"], "reject_H0");
    let o = infoflow(tmp.path(), &["gof", "--samples", "/nonexistent.csv", "--target", "mog"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn em_train_one_epoch_then_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let o = infoflow(
        tmp.path(),
        &["em-train", "--synthetic", "linear", "--n", "20", "--epochs", "1", "--particles", "8", "--steps", "20"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let monitor = std::fs::read_to_string(tmp.path().join("monitor.csv")).unwrap();
    assert_eq!(monitor.lines().count(), 2);
    assert!(monitor.starts_with("epoch,expected_loglik\n1,"));
    let generator: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("generator.json")).unwrap()).unwrap();
    assert_eq!(generator["truth"]["decoder"], "linear");

    let model = tmp.path().join("model.json");
    let data = tmp.path().join("data.csv");
    let pred_dir = tmp.path().join("pred");
    let o = infoflow(
        &pred_dir,
        &["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap(), "--target-cols", "0,2", "--steps", "20"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = stdout_json(&o);
    assert_eq!(metrics["n"], 40);
    let preds = std::fs::read_to_string(pred_dir.join("predictions.csv")).unwrap();
    assert!(preds.starts_with("row,x0,x2\n"));

    let o = infoflow(&pred_dir, &["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap(), "--target-cols", "7"]);
    assert_eq!(o.status.code(), Some(2));
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = infoflow(&pred_dir, &["predict", "--model", model.to_str().unwrap(), "--data", empty.to_str().unwrap(), "--target-cols", "1"]);
    assert_eq!(o.status.code(), Some(3));
    let o = infoflow(tmp.path(), &["em-train", "--data", "/nonexistent.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn zero_weight_model_predicts_bias() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");
    std::fs::write(
        &model,
        r#"{"decoder":"linear","w":[[0.0],[0.0],[0.0]],"b":[1.0,2.0,-0.5],"sigma":0.3}"#,
    )
    .unwrap();
    let data = tmp.path().join("d.csv");
    std::fs::write(&data, "a,b,c\n0.1,2.5,0\n-1,1.0,1\n3,2.2,-1\n").unwrap();
    let o = infoflow(
        tmp.path(),
        &["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap(), "--target-cols", "1"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = std::fs::read_to_string(tmp.path().join("predictions.csv")).unwrap();
    assert_eq!(preds, "row,b\n0,2\n1,2\n2,2\n");
    assert!(stdout_json(&o)["r2"].as_f64().unwrap() <= 0.0);
}

#[test]
fn divergence_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let o = infoflow(tmp.path(), &["flow1d", "--target", "gauss-3", "--step-size", "5", "--steps", "200"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
