//! The optimization loop: initial design, per-round fit and acquisition,
//! recommendation and GAP scoring.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{argmax, PhiTable, ONE_STEP_DRAWS};
use crate::aggregation::{true_generality, BoundAggregation};
use crate::benchmarks::{format_float, grid_search_optimum};
use crate::error::{GenboError, Result};
use crate::gp::{base_samples, GpModel, Pair, PairSpace};
use crate::model::{GeneralityProblem, Observation, ObservationSet};
use crate::stats;
use crate::strategy::{
    apply_w_mode, bandit_recommend, bandit_select, joint_2la_select, seq_1la_select, seq_2la_select, BanditState,
    ResolvedWMode, StrategyFamily, StrategySpec, WMode,
};

pub const DEFAULT_N_INIT: usize = 2;

pub const TRAJECTORY_HEADER: [&str; 10] =
    ["strategy", "seed", "iteration", "evals_used", "x_id", "w_id", "y", "rec_x_id", "true_generality", "gap"];
pub const SUMMARY_HEADER: [&str; 5] = ["strategy", "evals_used", "mean_gap", "sem_gap", "n_seeds"];

/// A problem together with everything campaigns share: the kernel pair space
/// and the grid-search optimum on the training tasks.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub problem: GeneralityProblem,
    pub space: Arc<PairSpace>,
    pub x_star: usize,
    pub y_star: f64,
}

impl Benchmark {
    pub fn new(problem: GeneralityProblem) -> Result<Self> {
        let space = Arc::new(PairSpace::from_surface(&problem.surface)?);
        let (x_star, y_star) = grid_search_optimum(&problem.surface, &problem.train_tasks, &problem.aggregation)?;
        Ok(Benchmark { problem, space, x_star, y_star })
    }

    fn true_generality(&self, x: usize) -> Result<f64> {
        true_generality(&self.problem.surface, x, &self.problem.train_tasks, &self.problem.aggregation)
    }
}

/// `(y_k − y_0)/(y* − y_0)`, defined as 1 when `y* = y_0`.
pub fn gap(y_k: f64, y_0: f64, y_star: f64) -> f64 {
    if y_star == y_0 {
        1.0
    } else {
        (y_k - y_0) / (y_star - y_0)
    }
}

/// One oracle evaluation with the recommendation in force after its round.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    /// 0 for the initial design, then the round number.
    pub iteration: usize,
    pub evals_used: usize,
    pub x: usize,
    pub w: usize,
    pub y: f64,
    pub rec_x: usize,
    pub true_generality: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub strategy: String,
    pub seed: u64,
    pub y0: f64,
    pub y_star: f64,
    pub records: Vec<EvalRecord>,
}

impl Trajectory {
    pub fn evals_used(&self) -> usize {
        self.records.last().map_or(0, |r| r.evals_used)
    }

    pub fn final_recommendation(&self) -> usize {
        self.records.last().map(|r| r.rec_x).expect("trajectory has at least one record")
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map(|r| r.gap).expect("trajectory has at least one record")
    }

    pub fn write_csv<W: Write>(&self, problem: &GeneralityProblem, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRAJECTORY_HEADER)?;
        self.write_rows(problem, &mut w)?;
        w.flush().map_err(|e| GenboError::io("<trajectory>", e))?;
        Ok(())
    }

    fn write_rows<W: Write>(&self, problem: &GeneralityProblem, w: &mut csv::Writer<W>) -> Result<()> {
        let params = problem.surface.parameters();
        let tasks = problem.surface.tasks();
        for r in &self.records {
            w.write_record([
                self.strategy.clone(),
                self.seed.to_string(),
                r.iteration.to_string(),
                r.evals_used.to_string(),
                params[r.x].id.clone(),
                tasks[r.w].id.clone(),
                format_float(r.y),
                params[r.rec_x].id.clone(),
                format_float(r.true_generality),
                format_float(r.gap),
            ])?;
        }
        Ok(())
    }
}

/// Posterior-mean argmax of φ over `candidates`: exact for mean aggregation,
/// otherwise the SAA mean over `ONE_STEP_DRAWS` draws seeded by `seed`.
pub fn recommend(
    model: &GpModel,
    agg: &BoundAggregation,
    candidates: &[usize],
    tasks: &[usize],
    seed: u64,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(GenboError::invalid("empty candidate set"));
    }
    let base = base_samples(seed, ONE_STEP_DRAWS, tasks.len());
    let table = PhiTable::compute(model, candidates, tasks, agg, &base)?;
    Ok(candidates[argmax(&table.means).unwrap_or(0)])
}

/// Resolves a w-mode against the problem's training tasks.
pub fn resolve_w_mode(problem: &GeneralityProblem, mode: &WMode) -> Result<ResolvedWMode> {
    Ok(match mode {
        WMode::Adaptive => ResolvedWMode::Adaptive,
        WMode::Complete => ResolvedWMode::Complete,
        WMode::Single(id) => {
            let w = problem.surface.task_index(id)?;
            if !problem.train_tasks.contains(&w) {
                return Err(GenboError::invalid(format!("single-mode task {id:?} is not a training task")));
            }
            ResolvedWMode::Single(w)
        }
    })
}

/// Runs one campaign. Every stochastic choice is drawn from one ChaCha8 stream
/// seeded with `seed`; the initial design depends only on the seed and the
/// task mode, so strategies sharing a seed start from the same observations.
pub fn run_campaign(bench: &Benchmark, strategy: &StrategySpec, seed: u64, n_init: usize) -> Result<Trajectory> {
    let problem = &bench.problem;
    let budget = problem.budget;
    if n_init == 0 || n_init > budget {
        return Err(GenboError::invalid(format!("n_init = {n_init} must lie in [1, budget = {budget}]")));
    }
    let mode = resolve_w_mode(problem, &strategy.w_mode)?;
    let candidates: Vec<usize> = (0..problem.n_parameters()).collect();
    let tasks = &problem.train_tasks;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let design_tasks: Vec<usize> = match mode {
        ResolvedWMode::Single(w) => vec![w],
        _ => tasks.clone(),
    };
    let n_pairs = candidates.len() * design_tasks.len();
    if n_init > n_pairs {
        return Err(GenboError::invalid(format!("n_init = {n_init} exceeds the {n_pairs} available pairs")));
    }
    let initial: Vec<Pair> = sample(&mut rng, n_pairs, n_init)
        .into_iter()
        .map(|k| (candidates[k / design_tasks.len()], design_tasks[k % design_tasks.len()]))
        .collect();

    let mut data = ObservationSet::new();
    let mut bandit = BanditState::new(candidates.len());
    let mut pending: Vec<(usize, Pair, f64)> = Vec::new();
    for &(x, w) in &initial {
        let y = problem.surface.value(x, w);
        data.push(Observation { x, w, y })?;
        bandit.update(x, y);
        pending.push((0, (x, w), y));
    }

    let mut records = Vec::new();
    let rec = recommend_for(bench, strategy, &data, &bandit, &candidates, &mut rng)?;
    let y0 = bench.true_generality(rec)?;
    flush(&mut records, &mut pending, rec, y0, y0, bench.y_star);

    let mut iteration = 0;
    while data.len() < budget {
        iteration += 1;
        let proposed = propose(bench, strategy, &data, &mut bandit, &candidates, &mut rng)?;
        let mut evals = apply_w_mode(mode, proposed, tasks);
        evals.truncate(budget - data.len());
        for (x, w) in evals {
            let y = problem.surface.value(x, w);
            data.push(Observation { x, w, y })?;
            bandit.update(x, y);
            pending.push((iteration, (x, w), y));
        }
        let rec = recommend_for(bench, strategy, &data, &bandit, &candidates, &mut rng)?;
        let y_k = bench.true_generality(rec)?;
        flush(&mut records, &mut pending, rec, y_k, y0, bench.y_star);
    }
    Ok(Trajectory { strategy: strategy.to_string(), seed, y0, y_star: bench.y_star, records })
}

fn flush(
    records: &mut Vec<EvalRecord>,
    pending: &mut Vec<(usize, Pair, f64)>,
    rec_x: usize,
    y_k: f64,
    y0: f64,
    y_star: f64,
) {
    for (iteration, (x, w), y) in pending.drain(..) {
        let evals_used = records.len() + 1;
        records.push(EvalRecord { iteration, evals_used, x, w, y, rec_x, true_generality: y_k, gap: gap(y_k, y0, y_star) });
    }
}

fn fit(bench: &Benchmark, data: &ObservationSet) -> Result<(GpModel, BoundAggregation)> {
    let model = GpModel::fit_observations(bench.space.clone(), data)?;
    let p = &bench.problem;
    let agg = p.aggregation.bind(&p.surface, &p.train_tasks, model.scaler())?;
    Ok((model, agg))
}

fn propose(
    bench: &Benchmark,
    strategy: &StrategySpec,
    data: &ObservationSet,
    bandit: &mut BanditState,
    candidates: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Pair> {
    let tasks = &bench.problem.train_tasks;
    match strategy.family {
        StrategyFamily::Random => {
            let x = candidates[rng.random_range(0..candidates.len())];
            let w = tasks[rng.random_range(0..tasks.len())];
            Ok((x, w))
        }
        StrategyFamily::Bandit => bandit_select(bandit, tasks, rng),
        StrategyFamily::Seq1La => {
            let (model, agg) = fit(bench, data)?;
            seq_1la_select(&model, &agg, &strategy.alpha_x, &strategy.alpha_w, candidates, tasks, rng)
        }
        StrategyFamily::Seq2La => {
            let (model, agg) = fit(bench, data)?;
            seq_2la_select(&model, &agg, &strategy.alpha_x, &strategy.alpha_w, candidates, tasks, rng)
        }
        StrategyFamily::Joint2La => {
            let (model, agg) = fit(bench, data)?;
            joint_2la_select(&model, &agg, &strategy.alpha_x, candidates, tasks, rng)
        }
    }
}

fn recommend_for(
    bench: &Benchmark,
    strategy: &StrategySpec,
    data: &ObservationSet,
    bandit: &BanditState,
    candidates: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    match strategy.family {
        StrategyFamily::Random => Ok(candidates[rng.random_range(0..candidates.len())]),
        StrategyFamily::Bandit => Ok(bandit_recommend(bandit)),
        _ => {
            let (model, agg) = fit(bench, data)?;
            recommend(&model, &agg, candidates, &bench.problem.train_tasks, rng.next_u64())
        }
    }
}

/// Mean and standard error of GAP across seeds at one evaluation count.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryPoint {
    pub strategy: String,
    pub evals_used: usize,
    pub mean_gap: f64,
    pub sem_gap: f64,
    pub n_seeds: usize,
}

/// Per-strategy GAP curves indexed by evaluation count. Each curve spans the
/// union of evaluation counts of its trajectories; a trajectory contributes its
/// latest GAP at or before each count, carrying its final value forward.
pub fn aggregate_runs(trajectories: &[Trajectory]) -> Vec<SummaryPoint> {
    let mut by_strategy: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories {
        by_strategy.entry(&t.strategy).or_default().push(t);
    }
    let mut out = Vec::new();
    for (name, runs) in by_strategy {
        let max_evals = runs.iter().map(|t| t.evals_used()).max().unwrap_or(0);
        let min_start = runs.iter().filter_map(|t| t.records.first()).map(|r| r.evals_used).min().unwrap_or(1);
        for e in min_start..=max_evals {
            let gaps: Vec<f64> = runs.iter().filter_map(|t| gap_at(t, e)).collect();
            if gaps.is_empty() {
                continue;
            }
            out.push(SummaryPoint {
                strategy: name.to_string(),
                evals_used: e,
                mean_gap: stats::mean(&gaps),
                sem_gap: stats::sem(&gaps),
                n_seeds: gaps.len(),
            });
        }
    }
    out
}

fn gap_at(t: &Trajectory, evals: usize) -> Option<f64> {
    t.records.iter().take_while(|r| r.evals_used <= evals).last().map(|r| r.gap)
}

pub fn write_summary<W: Write>(points: &[SummaryPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for p in points {
        w.write_record([
            p.strategy.clone(),
            p.evals_used.to_string(),
            format_float(p.mean_gap),
            format_float(p.sem_gap),
            p.n_seeds.to_string(),
        ])?;
    }
    w.flush().map_err(|e| GenboError::io("<summary>", e))?;
    Ok(())
}
