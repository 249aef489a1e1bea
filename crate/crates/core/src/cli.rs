//! Subcommand implementations behind the `genbo` binary.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::benchmarks::{transferability_sweep, SweepResult};
use crate::campaign::{aggregate_runs, run_campaign, write_summary, Benchmark, SummaryPoint, Trajectory};
use crate::config::CampaignConfig;
use crate::error::{GenboError, Result};

pub const PLOT_HEADER: [&str; 4] = ["strategy", "evals_used", "mean_gap", "sem_gap"];

/// A campaign that failed, recorded rather than dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignFailure {
    pub strategy: String,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub trajectories: Vec<Trajectory>,
    pub summary: Vec<SummaryPoint>,
    pub failures: Vec<CampaignFailure>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// `(strategy, mean, sem, n)` of the GAP at each strategy's last evaluation count.
    pub fn final_table(&self) -> Vec<(String, f64, f64, usize)> {
        let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
        for p in &self.summary {
            match out.last_mut() {
                Some(last) if last.0 == p.strategy => *last = (p.strategy.clone(), p.mean_gap, p.sem_gap, p.n_seeds),
                _ => out.push((p.strategy.clone(), p.mean_gap, p.sem_gap, p.n_seeds)),
            }
        }
        out
    }
}

/// File-name-safe form of a strategy name.
pub fn file_stem(strategy: &str) -> String {
    strategy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn thread_pool(jobs: Option<usize>, work_items: usize) -> Result<rayon::ThreadPool> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = jobs.unwrap_or_else(|| available.min(work_items.max(1)));
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| GenboError::Config(format!("cannot start {n} worker threads: {e}")))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| GenboError::io(path, e))
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| GenboError::io(path, e))?))
}

/// Runs every (strategy, seed) campaign and writes one trajectory CSV per
/// campaign plus `summary.csv` under `cfg.out`. Failed campaigns are listed in
/// `errors.csv` and returned; the caller decides the exit status.
pub fn cmd_run(cfg: &CampaignConfig) -> Result<RunOutcome> {
    cfg.validate_run()?;
    let strategies = cfg.strategy_specs()?;
    let seeds = cfg.seeds();
    let surface = Arc::new(cfg.load_surface()?);
    let bench = Benchmark::new(cfg.problem(surface)?)?;

    let jobs: Vec<(usize, u64)> =
        (0..strategies.len()).flat_map(|s| seeds.iter().map(move |&seed| (s, seed))).collect();
    let pool = thread_pool(cfg.jobs, jobs.len())?;
    let results: Vec<Result<Trajectory>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, seed)| run_campaign(&bench, &strategies[s], seed, cfg.n_init))
            .collect()
    });

    let mut trajectories = Vec::new();
    let mut failures = Vec::new();
    for (&(s, seed), r) in jobs.iter().zip(results) {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => failures.push(CampaignFailure { strategy: strategies[s].to_string(), seed, message: e.to_string() }),
        }
    }

    let dir = cfg.out.join("trajectories");
    create_dir(&dir)?;
    let mut files = Vec::new();
    for t in &trajectories {
        let path = dir.join(format!("{}__seed{}.csv", file_stem(&t.strategy), t.seed));
        t.write_csv(&bench.problem, create_file(&path)?)?;
        files.push(path);
    }
    let summary = aggregate_runs(&trajectories);
    let path = cfg.out.join("summary.csv");
    write_summary(&summary, create_file(&path)?)?;
    files.push(path);
    if !failures.is_empty() {
        let path = cfg.out.join("errors.csv");
        let mut w = csv::Writer::from_writer(create_file(&path)?);
        w.write_record(["strategy", "seed", "error"])?;
        for f in &failures {
            w.write_record([f.strategy.as_str(), &f.seed.to_string(), &f.message])?;
        }
        w.flush().map_err(|e| GenboError::io(&path, e))?;
        files.push(path);
    }
    Ok(RunOutcome { trajectories, summary, failures, files })
}

/// Runs the transferability sweep and writes `transferability.csv` and
/// `transferability_summary.csv` under `cfg.out`.
pub fn cmd_analyze(cfg: &CampaignConfig) -> Result<SweepResult> {
    let sweep = cfg.sweep()?;
    if cfg.jobs == Some(0) {
        return Err(GenboError::Config("jobs must be positive".into()));
    }
    let surface = cfg.load_surface()?;
    let pool = thread_pool(cfg.jobs, sweep.n_splits)?;
    let result = pool.install(|| transferability_sweep(&surface, &sweep))?;
    create_dir(&cfg.out)?;
    result.write_table(create_file(&cfg.out.join("transferability.csv"))?)?;
    result.write_summary(create_file(&cfg.out.join("transferability_summary.csv"))?)?;
    Ok(result)
}

/// Concatenates summary CSVs into one long-format table. A strategy may appear
/// in only one input.
pub fn cmd_emit_plot_data<W: Write>(inputs: &[PathBuf], writer: W) -> Result<()> {
    let mut rows: Vec<[String; 4]> = Vec::new();
    let mut owner: Vec<(String, PathBuf)> = Vec::new();
    for path in inputs {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| GenboError::Parse { path: path.clone(), message: e.to_string() })?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
        let cols = PLOT_HEADER
            .iter()
            .map(|name| {
                header.iter().position(|h| h == name).ok_or_else(|| GenboError::Parse {
                    path: path.clone(),
                    message: format!("missing column {name:?}"),
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        let mut seen_here = BTreeSet::new();
        for record in reader.records() {
            let record = record?;
            let row: [String; 4] = std::array::from_fn(|i| record.get(cols[i]).unwrap_or("").to_string());
            if seen_here.insert(row[0].clone()) {
                if let Some((_, other)) = owner.iter().find(|(s, _)| *s == row[0]) {
                    return Err(GenboError::Config(format!(
                        "strategy {:?} appears in both {} and {}; rename one to disambiguate",
                        row[0],
                        other.display(),
                        path.display()
                    )));
                }
                owner.push((row[0].clone(), path.clone()));
            }
            rows.push(row);
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PLOT_HEADER)?;
    for r in &rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| GenboError::io("<plot data>", e))?;
    Ok(())
}

/// Lints a config and its surface; returns a short human-readable report.
pub fn cmd_validate(cfg: &CampaignConfig) -> Result<String> {
    let mut report = String::new();
    let surface = Arc::new(cfg.load_surface()?);
    report.push_str(&format!(
        "surface: {} conditions x {} tasks ({} cells)\n",
        surface.n_parameters(),
        surface.n_tasks(),
        surface.n_parameters() * surface.n_tasks()
    ));
    let problem = cfg.problem(surface)?;
    report.push_str(&format!(
        "problem: {} train tasks, {} test tasks, aggregation {}, budget {}\n",
        problem.train_tasks.len(),
        problem.test_tasks.len(),
        problem.aggregation.name(),
        problem.budget
    ));
    if !cfg.strategies.is_empty() {
        cfg.validate_run()?;
        let names: Vec<String> = cfg.strategy_specs()?.iter().map(|s| s.to_string()).collect();
        report.push_str(&format!("strategies: {}\n", names.join(", ")));
        report.push_str(&format!("seeds: {}\n", cfg.seeds().len()));
    }
    if cfg.analysis.is_some() {
        let sweep = cfg.sweep()?;
        report.push_str(&format!("analysis: sizes {:?}, {} splits\n", sweep.sizes, sweep.n_splits));
    }
    let bench = Benchmark::new(problem)?;
    report.push_str(&format!(
        "grid optimum on train tasks: {} ({})\n",
        bench.problem.surface.parameters()[bench.x_star].id,
        bench.y_star
    ));
    Ok(report)
}
