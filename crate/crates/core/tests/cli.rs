use std::path::Path;
use std::process::{Command, Output};

fn falcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_falcon")).args(args).output().expect("run falcon")
}

fn ok(args: &[&str]) {
    let out = falcon(args);
    assert!(out.status.success(), "{args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
}

const CONFIG: &str = r#"{
  "data": { "synthetic": { "width": 24, "height": 24, "perClassCount": 30, "seed": 11 } },
  "features": { "colorGrid": { "gw": 4, "gh": 4 } },
  "select": { "probeHidden": [6], "probeTrain": { "epochs": 8 }, "delta": 0.3 },
  "tree": { "initialTrain": { "epochs": 10 }, "finalTrain": { "epochs": 10 } },
  "baseline": { "hidden": [8], "train": { "epochs": 10 } },
  "calibration": { "inputs": 4 }
}"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let cfg = root.join("run.json");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (data, build, eval, sweep, sim, cal) = (
        root.join("data"),
        root.join("build"),
        root.join("eval"),
        root.join("sweep"),
        root.join("sim"),
        root.join("cal"),
    );

    ok(&["gen-data", "--config", s(&cfg), "--out", s(&data)]);
    assert!(data.join("manifest.csv").exists());
    ok(&["build", "--config", s(&cfg), "--out", s(&build), "--data", s(&data)]);
    let tree = build.join("tree");
    assert!(tree.join("tree.json").exists());
    assert!(build.join("assignment.csv").exists());
    ok(&["eval", "--config", s(&cfg), "--out", s(&eval), "--data", s(&data), "--tree", s(&tree), "--emit-plot"]);
    assert!(eval.join("benefit_ops.dat").exists() && eval.join("sweep_accuracy.dat").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("eval.json")).unwrap()).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() > 0.25);

    ok(&[
        "sweep-delta",
        "--config",
        s(&cfg),
        "--out",
        s(&sweep),
        "--data",
        s(&data),
        "--tree",
        s(&tree),
        "--deltas",
        "0,0.2,...,1.0",
        "--emit-plot",
    ]);
    let csv = std::fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6);
    assert!(csv.starts_with("delta,accuracy,avgOps,baselineRate,avgEnergy"));
    assert!(sweep.join("sweep_energy.dat").exists());

    ok(&[
        "simulate",
        "--config",
        s(&cfg),
        "--out",
        s(&sim),
        "--data",
        s(&data),
        "--tree",
        s(&tree),
        "--trace",
        "--limit",
        "5",
    ]);
    let trace = std::fs::read_to_string(sim.join("trace.csv")).unwrap();
    assert!(trace.lines().all(|l| l.split(',').count() == 4));
    ok(&["calibrate", "--config", s(&cfg), "--out", s(&cal), "--data", s(&data), "--tree", s(&tree)]);
    let c: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(cal.join("calibration.json")).unwrap()).unwrap();
    assert!((c["execShare"].as_f64().unwrap() - 0.7892).abs() < 0.05);

    let (new, ext) = (root.join("new"), root.join("ext"));
    let classes = r#"data.synthetic.classes=[{"pattern":"green","shape":"disk"},{"pattern":"green","shape":"bar"}]"#;
    ok(&["gen-data", "--config", s(&cfg), "--out", s(&new), "--set", classes]);
    ok(&["extend", "--config", s(&cfg), "--out", s(&ext), "--data", s(&data), "--tree", s(&tree), "--new", s(&new)]);
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ext.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["newClasses"], 2);
    let manifest = std::fs::read_to_string(ext.join("tree").join("tree.json")).unwrap();
    assert!(manifest.contains("green-disk"));

    // same config and seed, same bytes
    let again = root.join("again");
    ok(&["eval", "--config", s(&cfg), "--out", s(&again), "--data", s(&data), "--tree", s(&tree)]);
    assert_eq!(std::fs::read(eval.join("eval.json")).unwrap(), std::fs::read(again.join("eval.json")).unwrap());
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let no_config = falcon(&["gen-data", "--out", s(&out)]);
    assert_eq!(no_config.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_config.stderr).contains("Usage"));
    assert_eq!(falcon(&["eval", "--nope"]).status.code(), Some(1));

    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, "{}").unwrap();
    let bad_set = falcon(&["gen-data", "--config", s(&cfg), "--out", s(&out), "--set", "tree.nope=1"]);
    assert_eq!(bad_set.status.code(), Some(1));

    std::fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(falcon(&["gen-data", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    std::fs::write(&cfg, "{}").unwrap();
    let missing = tmp.path().join("missing");
    let r = falcon(&["eval", "--config", s(&cfg), "--out", s(&out), "--data", s(&missing), "--tree", s(&missing)]);
    assert_eq!(r.status.code(), Some(2));
}
