use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 11

[pipeline]
fit_days = 20
horizon = 7
smoothing_window = 1

[scenario]
n_tracts = 4
n_pois = 60
horizon = 28

[clustering]
k = 3

[fit]
n_restarts = 2

[fit.adam]
max_iters = 40
"#;

fn metapop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_metapop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stage(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    metapop(&args)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_data_and_one_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = stage("synth", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["tracts.csv", "pois.csv", "visits_hourly.csv", "origins_weekly.csv", "devices.csv", "cases_deaths.csv"] {
        assert!(out.join("data").join(f).is_file(), "{f}");
    }
    let manifests = files_under(&out.join("manifests"));
    assert_eq!(manifests, vec![PathBuf::from("synth.json")]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifests/synth.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "synth");
    assert_eq!(m["seed"], 11);
    assert!(m["outputs"].as_array().unwrap().len() >= 6);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_required_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[pipeline]\nhorizon = 7\n");
    let o = stage("synth", &cfg, &dir.path().join("run"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("pipeline.fit_days"), "{}", stderr(&o));
}

#[test]
fn invalid_values_and_flags_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("n_tracts = 4", "n_tracts = 0"));
    assert_eq!(stage("synth", &cfg, &dir.path().join("a"), &[]).status.code(), Some(2));
    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(stage("networks", &cfg, &dir.path().join("b"), &["--mode", "global"]).status.code(), Some(2));
    let missing = dir.path().join("nope.toml");
    assert_eq!(stage("synth", &missing, &dir.path().join("c"), &[]).status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_files_and_seed_flag_changes_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(stage("synth", &cfg, &a, &[]).status.success());
    assert!(stage("synth", &cfg, &b, &[]).status.success());
    assert!(stage("synth", &cfg, &c, &["--seed", "12"]).status.success());
    let data = |root: &Path, f: &str| std::fs::read(root.join("data").join(f)).unwrap();
    let files = files_under(&a.join("data"));
    assert_eq!(files, files_under(&b.join("data")));
    for f in &files {
        let f = f.to_str().unwrap();
        assert_eq!(data(&a, f), data(&b, f), "{f}");
    }
    assert_ne!(data(&a, "cases_deaths.csv"), data(&c, "cases_deaths.csv"));
}

#[test]
fn stages_report_missing_upstream_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = stage("cluster", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("synth"));

    assert!(stage("synth", &cfg, &out, &[]).status.success());
    let o = stage("networks", &cfg, &out, &["--mode", "pattern"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("metapop cluster"), "{}", stderr(&o));

    let o = stage("calibrate", &cfg, &out, &["--mode", "tract"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("metapop networks"), "{}", stderr(&o));

    let o = stage("forecast", &cfg, &out, &["--mode", "tract"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("metapop calibrate"), "{}", stderr(&o));

    let o = stage("evaluate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("metapop forecast"), "{}", stderr(&o));
}

#[test]
fn forecast_window_beyond_the_data_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    for cmd in ["synth", "networks"] {
        let extra: &[&str] = if cmd == "networks" { &["--mode", "none"] } else { &[] };
        assert!(stage(cmd, &cfg, &out, extra).status.success());
    }
    let long = write_config(dir.path(), &SMALL.replace("fit_days = 20", "fit_days = 40"));
    let o = stage("calibrate", &long, &out, &["--mode", "none"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn full_pipeline_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    for cmd in ["synth", "cluster", "networks", "calibrate", "forecast", "evaluate"] {
        let o = stage(cmd, &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
    }
    let clusters = std::fs::read_to_string(out.join("clusters/clusters.csv")).unwrap();
    assert!(clusters.starts_with("poi_id,cluster_id\n"));
    assert_eq!(clusters.lines().count(), 61);

    let plot = std::fs::read_to_string(out.join("forecast/pattern/forecast_plot.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next(), Some("day,mean_cases,lo_cases,hi_cases,mean_deaths,lo_deaths,hi_deaths"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 7);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (20 + k) as f64);
        assert!(r[2] <= r[1] && r[1] <= r[3]);
        assert!(r[5] <= r[4] && r[4] <= r[6]);
    }

    let metrics = std::fs::read_to_string(out.join("evaluate/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    let header = lines.next().unwrap();
    for col in ["loglik", "rmse_cases", "rmse_deaths"] {
        assert!(header.split(',').any(|h| h == col));
    }
    let modes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["none", "tract", "pattern"]);

    let manifests = files_under(&out.join("manifests"));
    assert_eq!(manifests.len(), 6);
}
