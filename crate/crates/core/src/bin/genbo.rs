use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use genbo::cli::{cmd_analyze, cmd_emit_plot_data, cmd_run, cmd_validate};
use genbo::config::CampaignConfig;
use genbo::Result;

#[derive(Parser)]
#[command(name = "genbo", version, about = "Generality-oriented Bayesian optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run optimization campaigns and write trajectories and a summary.
    Run(ConfigArgs),
    /// Run the grid-search transferability sweep.
    Analyze(ConfigArgs),
    /// Merge summary CSVs into one long-format table.
    EmitPlotData {
        summaries: Vec<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its surface without running anything.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config field, e.g. `--set budget=60` or `--set surface.synthetic.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed0: Option<u64>,
    #[arg(long)]
    n_seeds: Option<usize>,
    /// adaptive, complete or single:<task id>; applies to strategies without their own suffix.
    #[arg(long)]
    w_mode: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<CampaignConfig> {
        let mut cfg = CampaignConfig::load(&self.config, &self.set)?;
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if self.seed0.is_some() || self.n_seeds.is_some() {
            cfg.seeds = None;
        }
        if let Some(s) = self.seed0 {
            cfg.seed0 = s;
        }
        if let Some(n) = self.n_seeds {
            cfg.n_seeds = n;
        }
        if let Some(m) = &self.w_mode {
            cfg.w_mode = m.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = cmd_run(&cfg)?;
            println!("{:<28} {:>10} {:>10} {:>7}", "strategy", "mean_gap", "sem_gap", "n_seeds");
            for (name, mean, sem, n) in outcome.final_table() {
                println!("{name:<28} {mean:>10.4} {sem:>10.4} {n:>7}");
            }
            for f in &outcome.failures {
                eprintln!("campaign {} seed {} failed: {}", f.strategy, f.seed, f.message);
            }
            Ok(outcome.failures.is_empty())
        }
        Command::Analyze(args) => {
            let cfg = args.load()?;
            let result = cmd_analyze(&cfg)?;
            println!("{:<10} {:>8} {:>10} {:>10}", "method", "n_train", "mean", "sem");
            for s in &result.summaries {
                println!("{:<10} {:>8} {:>10.4} {:>10.4}", s.method.name(), s.n_train, s.mean_score, s.sem_score);
            }
            for (m, rho) in &result.rho {
                println!("spearman rho ({m}): {rho:.4}");
            }
            Ok(true)
        }
        Command::EmitPlotData { summaries, out } => {
            match out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|e| genbo::GenboError::Io { path, source: e })?;
                    cmd_emit_plot_data(&summaries, std::io::BufWriter::new(file))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    cmd_emit_plot_data(&summaries, &mut lock)?;
                    let _ = lock.flush();
                }
            }
            Ok(true)
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            print!("{}", cmd_validate(&cfg)?);
            println!("ok");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
