use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn genbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genbo")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("c.json");
    fs::write(&path, body).unwrap();
    path
}

const RUN_CONFIG: &str = r#"{
  "surface": {"synthetic": {"seed": 4, "n_x": 5, "n_w": 4}},
  "aggregation": {"kind": "mean"},
  "strategies": ["seq-1la-ucb-pv", "random"],
  "seed0": 10,
  "n_seeds": 3,
  "budget": 8
}"#;

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn run_writes_one_file_per_campaign_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), RUN_CONFIG);
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for (out, jobs) in [(&out_a, "1"), (&out_b, "3")] {
        let o = genbo(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("seq-1la-ucb-pv") && stdout.contains("random"));
    }
    let a = read_dir_sorted(&out_a.join("trajectories"));
    assert_eq!(a.len(), 6);
    assert_eq!(a, read_dir_sorted(&out_b.join("trajectories")));
    assert_eq!(fs::read(out_a.join("summary.csv")).unwrap(), fs::read(out_b.join("summary.csv")).unwrap());
    let summary = fs::read_to_string(out_a.join("summary.csv")).unwrap();
    assert!(summary.starts_with("strategy,evals_used,mean_gap,sem_gap,n_seeds\n"));
    let traj = String::from_utf8(a[0].1.clone()).unwrap();
    assert!(traj.starts_with("strategy,seed,iteration,evals_used,x_id,w_id,y,rec_x_id,true_generality,gap\n"));
    assert_eq!(traj.lines().count(), 1 + 8);
}

#[test]
fn budget_not_above_n_init_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), RUN_CONFIG);
    let out = tmp.path().join("o");
    let o = genbo(&["run", "--config", cfg.to_str().unwrap(), "--set", "budget=2", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    assert!(!out.exists());
}

#[test]
fn config_errors_name_the_location() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"surface\": {\"synthetic\": {\"seed\": 1, \"n_x\": 3, \"n_w\": 3}},\n  \"aggregation\": {\"kind\": \"mean\"},\n  \"stratgies\": []\n}");
    let o = genbo(&["validate", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("stratgies") && err.contains("line 4"), "{err}");
    let o = genbo(&["validate", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn missing_surface_file_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"surface": {"path": "nope.csv"}, "aggregation": {"kind": "mean"}, "strategies": ["random"], "budget": 5}"#,
    );
    let o = genbo(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
}

#[test]
fn validate_reports_surface_and_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), RUN_CONFIG);
    let o = genbo(&["validate", "--config", cfg.to_str().unwrap(), "--w-mode", "single:w001"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("5 conditions x 4 tasks"));
    assert!(s.contains("seq-1la-ucb-pv+single:w001"));
}

const ANALYZE_CONFIG: &str = r#"{
  "surface": {"synthetic": {"seed": 2, "n_x": 12, "n_w": 12}},
  "aggregation": {"kind": "mean"},
  "analysis": {"sizes": [1, 2, 4], "n_splits": 30}
}"#;

#[test]
fn analyze_writes_rows_per_method_and_size() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), ANALYZE_CONFIG);
    let out = tmp.path().join("o");
    let o = genbo(&["analyze", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("transferability.csv")).unwrap();
    for m in ["random", "fps", "average"] {
        let rows = table.lines().filter(|l| l.starts_with(&format!("{m},")) && !l.contains(",summary,")).count();
        assert_eq!(rows, 3 * 30, "{m}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("spearman rho (random)"));
}

#[test]
fn analyze_rejects_unknown_method() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), ANALYZE_CONFIG);
    let o = genbo(&["analyze", "--config", cfg.to_str().unwrap(), "--set", "analysis.methods=[\"kmeans\"]"]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("random") && err.contains("fps") && err.contains("average"), "{err}");
}

#[test]
fn emit_plot_data_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    fs::write(&a, "strategy,evals_used,mean_gap,sem_gap,n_seeds\nrandom,2,0,0,3\nrandom,3,0.5,0.1,3\n").unwrap();
    fs::write(&b, " Strategy , evals_used,mean_gap,sem_gap,n_seeds\nrandom,2,0.1,0,3\n").unwrap();

    let out = tmp.path().join("plot.csv");
    let o = genbo(&["emit-plot-data", a.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(&out).unwrap(), "strategy,evals_used,mean_gap,sem_gap\nrandom,2,0,0\nrandom,3,0.5,0.1\n");

    let o = genbo(&["emit-plot-data", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("disambiguate"));

    let o = genbo(&["emit-plot-data"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout), "strategy,evals_used,mean_gap,sem_gap\n");
}

#[test]
fn run_leaves_input_surface_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let surface = genbo::synthetic_surface(&genbo::SyntheticSpec::new(1, 4, 3)).unwrap();
    let path = tmp.path().join("s.csv");
    surface.save(&path).unwrap();
    let before = fs::read(&path).unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"surface": {"path": "s.csv"}, "aggregation": {"kind": "threshold", "threshold": 0.5}, "strategies": ["bandit"], "n_seeds": 2, "budget": 6}"#,
    );
    let o = genbo(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(before, fs::read(&path).unwrap());
}
