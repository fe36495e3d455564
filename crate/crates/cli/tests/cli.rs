use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const MINIMAL: &str = r#"
seed = 5

[[streams]]
length = 600
drifts = 2
"#;

const TWO_STREAMS: &str = r#"
seed = 9
selector = "cs_thresh"

[detector]
kind = "repro"

[[streams]]
length = 900
drifts = 3

[[streams]]
length = 900
drifts = 3
seed = 1
"#;

fn botl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_botl")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_to(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    botl(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn minimal_run_writes_three_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", MINIMAL);
    let out = tmp.path().join("out");
    let o = run_to(&cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["metrics.csv", "summary.json", "transfers.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("stream,method,index,r2,pmcc2,rmse,active_models,metric_calcs"));
    // One row per record, for the meta-learner and the detector alone.
    assert_eq!(lines.count(), 2 * 600);
    let transfers = fs::read_to_string(out.join("transfers.csv")).unwrap();
    assert_eq!(transfers.lines().next(), Some("time,sequence,from_stream,to_stream,model,origin_concept"));
}

#[test]
fn summary_has_the_five_quantities_per_method() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", TWO_STREAMS);
    let out = tmp.path().join("out");
    assert_eq!(run_to(&cfg, &out, &[]).status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(v["method"], "cs_thresh");
    let streams = v["streams"].as_array().unwrap();
    assert_eq!(streams.len(), 2);
    for s in streams {
        let methods = s["methods"].as_object().unwrap();
        assert_eq!(methods.keys().collect::<Vec<_>>(), ["cdd", "cs_thresh"]);
        for m in methods.values() {
            let keys: Vec<&String> = m.as_object().unwrap().keys().collect();
            assert_eq!(keys, ["mean_active_models", "metric_calcs", "pmcc2", "r2", "rmse"]);
        }
    }
    let transfers = fs::read_to_string(out.join("transfers.csv")).unwrap();
    let sent = v["totals"]["transfers_sent"].as_u64().unwrap();
    assert_eq!(transfers.lines().count() as u64 - 1, sent);
}

#[test]
fn same_seed_gives_identical_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", TWO_STREAMS);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run_to(&cfg, &a, &[]);
    run_to(&cfg, &b, &[]);
    run_to(&cfg, &c, &["--seed", "10"]);
    let read = |d: &Path| fs::read(d.join("summary.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn json_config_matches_toml() {
    let tmp = TempDir::new().unwrap();
    let toml_cfg = write(tmp.path(), "exp.toml", MINIMAL);
    let json_cfg = write(tmp.path(), "exp.json", r#"{"seed": 5, "streams": [{"length": 600, "drifts": 2}]}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_to(&toml_cfg, &a, &[]);
    run_to(&json_cfg, &b, &[]);
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn unknown_detector_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", &format!("{MINIMAL}\n[detector]\nkind = \"kswin\"\n"));
    let o = run_to(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("detector.kind"), "{err}");
    assert!(err.contains("bad.toml:9"), "{err}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn missing_config_exits_2() {
    let o = botl(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_rows_exit_3() {
    let tmp = TempDir::new().unwrap();
    let mut data = String::from("a,b,y\n");
    for i in 0..50 {
        data += &format!("{},{},{}\n", i, i * 2, i * 3);
    }
    data += "oops,1,2\n";
    write(tmp.path(), "data.csv", &data);
    let cfg = write(
        tmp.path(),
        "exp.toml",
        "seed = 1\n[[streams]]\nkind = \"csv\"\nwindow = 10\n[streams.csv]\npath = \"data.csv\"\nfeature_columns = [\"a\", \"b\"]\ntarget_column = \"y\"\n",
    );
    let o = run_to(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unwritable_output_exits_3() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", MINIMAL);
    let blocker = write(tmp.path(), "file", "");
    let o = run_to(&cfg, &blocker.join("out"), &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn sweep_writes_one_row_per_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", TWO_STREAMS);
    let out = tmp.path().join("sw");
    let o = botl(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "tau_cs", "--values", "0.8,0.6,0.4,0.2", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("param,value,detector,method,r2,cdd_r2,r2_delta,mean_active_models,metric_calcs")
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("tau_cs,0.8,repro,cs_thresh,"));
    // Every point shares the seed, so the baseline column is constant.
    let cdd: Vec<&str> = rows.iter().map(|r| r.split(',').nth(5).unwrap()).collect();
    assert!(cdd.iter().all(|c| *c == cdd[0]));
}

#[test]
fn sweep_scaling_k_runs_each_value() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", &TWO_STREAMS.replace("cs_thresh", "cs_clust"));
    let out = tmp.path().join("sw");
    let o = botl(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "scaling_k", "--values", "2,3,4,5,6,7", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 7);
}

#[test]
fn sweep_rejects_bad_parameters() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "exp.toml", MINIMAL);
    let c = cfg.to_str().unwrap();
    for (param, values) in [("tau_xx", "0.1"), ("scaling_k", "2.5"), ("tau_cs", "0.2,abc"), ("tau_cs", "1.5")] {
        let o = botl(&["sweep", "--config", c, "--param", param, "--values", values]);
        assert_eq!(o.status.code(), Some(2), "{param} {values}: {}", stderr(&o));
    }
}
