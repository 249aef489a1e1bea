//! Per-round decision policies mapping the posterior and history to the next
//! `(condition, task)` evaluation(s).

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rayon::prelude::*;

use crate::acquisition::{
    argmax, two_step_la_with_draws, AcquisitionKind, AcquisitionSpec, FantasyTask, LookaheadDraws, PhiTable,
    FANTASIES, INNER_DRAWS, ONE_STEP_DRAWS,
};
use crate::aggregation::BoundAggregation;
use crate::error::{GenboError, Result};
use crate::gp::{base_samples, GpModel, Pair};

/// Lookahead values this close to the best count as tied; ties are resolved by
/// the one-step value of the candidate, then by lowest index.
pub const LOOKAHEAD_TIE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyFamily {
    Seq1La,
    Seq2La,
    Joint2La,
    Bandit,
    Random,
}

/// How the proposed task is turned into evaluations.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum WMode {
    Adaptive,
    /// Always the task with this id.
    Single(String),
    /// Every training task for the proposed condition.
    Complete,
}

impl FromStr for WMode {
    type Err = GenboError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(WMode::Adaptive),
            "complete" => Ok(WMode::Complete),
            _ => match s.strip_prefix("single:") {
                Some(id) if !id.is_empty() => Ok(WMode::Single(id.to_string())),
                _ => Err(GenboError::invalid(format!(
                    "unknown w-mode {s:?} (expected adaptive, single:<id> or complete)"
                ))),
            },
        }
    }
}

impl fmt::Display for WMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WMode::Adaptive => f.write_str("adaptive"),
            WMode::Single(id) => write!(f, "single:{id}"),
            WMode::Complete => f.write_str("complete"),
        }
    }
}

/// `WMode` with the single task resolved to a surface index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvedWMode {
    Adaptive,
    Single(usize),
    Complete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategySpec {
    pub family: StrategyFamily,
    pub alpha_x: AcquisitionSpec,
    pub alpha_w: AcquisitionSpec,
    pub w_mode: WMode,
}

impl StrategySpec {
    pub fn new(family: StrategyFamily, alpha_x: AcquisitionSpec, alpha_w: AcquisitionSpec) -> Self {
        StrategySpec { family, alpha_x, alpha_w, w_mode: WMode::Adaptive }
    }

    pub fn with_w_mode(mut self, w_mode: WMode) -> Self {
        self.w_mode = w_mode;
        self
    }

    /// Base name without the w-mode, e.g. `seq-1la-ucb-pv`.
    pub fn base_name(&self) -> String {
        match self.family {
            StrategyFamily::Seq1La => format!("seq-1la-{}-{}", self.alpha_x, self.alpha_w),
            StrategyFamily::Seq2La => format!("seq-2la-{}-{}", self.alpha_x, self.alpha_w),
            StrategyFamily::Joint2La => format!("joint-2la-{}", self.alpha_x),
            StrategyFamily::Bandit => "bandit".to_string(),
            StrategyFamily::Random => "random".to_string(),
        }
    }

    pub fn uses_surrogate(&self) -> bool {
        !matches!(self.family, StrategyFamily::Bandit | StrategyFamily::Random)
    }
}

impl fmt::Display for StrategySpec {
    /// Base name, suffixed with `+<w-mode>` when not adaptive.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.w_mode {
            WMode::Adaptive => f.write_str(&self.base_name()),
            mode => write!(f, "{}+{}", self.base_name(), mode),
        }
    }
}

impl FromStr for StrategySpec {
    type Err = GenboError;

    /// Accepts `seq-1la-<ax>-<aw>`, `seq-2la-<ax>-<aw>`, `joint-2la-<a>`, `bandit`,
    /// `random`, optionally followed by `+single:<id>` or `+complete`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, mode) = match s.split_once('+') {
            Some((n, m)) => (n, m.parse::<WMode>()?),
            None => (s, WMode::Adaptive),
        };
        let unknown = || GenboError::invalid(format!("unknown strategy {s:?}"));
        let parts: Vec<&str> = name.split('-').collect();
        let spec = match parts.as_slice() {
            ["bandit"] => StrategySpec::new(StrategyFamily::Bandit, AcquisitionSpec::ra(), AcquisitionSpec::ra()),
            ["random"] => StrategySpec::new(StrategyFamily::Random, AcquisitionSpec::ra(), AcquisitionSpec::ra()),
            ["seq", la, ax, aw] => {
                let family = match *la {
                    "1la" => StrategyFamily::Seq1La,
                    "2la" => StrategyFamily::Seq2La,
                    _ => return Err(unknown()),
                };
                StrategySpec::new(family, ax.parse()?, aw.parse()?)
            }
            ["joint", "2la", a] => StrategySpec::new(StrategyFamily::Joint2La, a.parse()?, AcquisitionSpec::pv()),
            _ => return Err(unknown()),
        };
        Ok(spec.with_w_mode(mode))
    }
}

/// Random numbers of one one-step round, drawn in a fixed order so that every
/// surrogate strategy consumes the same prefix of the campaign stream.
#[derive(Debug, Clone)]
pub struct RoundDraws {
    pub saa_seed: u64,
    pub x_random: Vec<f64>,
    pub w_random: Vec<f64>,
}

impl RoundDraws {
    pub fn generate(rng: &mut impl RngCore, n_candidates: usize, n_tasks: usize) -> Self {
        let saa_seed = rng.next_u64();
        let x_random = (0..n_candidates).map(|_| rng.random::<f64>()).collect();
        let w_random = (0..n_tasks).map(|_| rng.random::<f64>()).collect();
        RoundDraws { saa_seed, x_random, w_random }
    }
}

/// One-step φ-table and per-candidate x-acquisition values.
fn one_step_scores(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha_x: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    draws: &RoundDraws,
) -> Result<(PhiTable, Vec<f64>)> {
    let base = base_samples(draws.saa_seed, ONE_STEP_DRAWS, tasks.len());
    let table = PhiTable::compute(model, candidates, tasks, agg, &base)?;
    let scores = table.scores(model, alpha_x, &draws.x_random);
    Ok((table, scores))
}

/// Per-task scores of `alpha_w` on the predictive distribution of `g(x, ·)`.
fn task_scores(
    model: &GpModel,
    alpha_w: &AcquisitionSpec,
    x: usize,
    tasks: &[usize],
    draws: &RoundDraws,
) -> Result<Vec<f64>> {
    let queries: Vec<Pair> = tasks.iter().map(|&w| (x, w)).collect();
    match alpha_w.kind {
        AcquisitionKind::Pv => Ok(model.posterior_variance(&queries)?.iter().copied().collect()),
        AcquisitionKind::Ra => Ok(draws.w_random.clone()),
        _ => {
            let s = model.sample_with_base(&queries, &base_samples(draws.saa_seed, ONE_STEP_DRAWS, tasks.len()))?;
            let incumbent = if alpha_w.needs_incumbent() {
                let mu = model.posterior_mean(&queries)?;
                tasks
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| model.inputs().contains(&(x, w)))
                    .map(|(i, _)| mu[i])
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                f64::NEG_INFINITY
            };
            Ok((0..tasks.len())
                .map(|j| {
                    let col: Vec<f64> = s.values.column(j).iter().copied().collect();
                    alpha_w.evaluate(&col, incumbent, draws.w_random[j])
                })
                .collect())
        }
    }
}

fn check_spaces(candidates: &[usize], tasks: &[usize]) -> Result<()> {
    if candidates.is_empty() || tasks.is_empty() {
        return Err(GenboError::invalid("empty candidate or task set"));
    }
    Ok(())
}

/// Sequential one-step selection: the condition maximizing `alpha_x` on the
/// SAA φ-posterior, then the task maximizing `alpha_w` at that condition.
pub fn seq_1la_select(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha_x: &AcquisitionSpec,
    alpha_w: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    rng: &mut impl RngCore,
) -> Result<Pair> {
    check_spaces(candidates, tasks)?;
    let draws = RoundDraws::generate(rng, candidates.len(), tasks.len());
    let (_, scores) = one_step_scores(model, agg, alpha_x, candidates, tasks, &draws)?;
    let x = candidates[argmax(&scores).unwrap_or(0)];
    let w_scores = task_scores(model, alpha_w, x, tasks, &draws)?;
    Ok((x, tasks[argmax(&w_scores).unwrap_or(0)]))
}

/// Index of the best primary score, with near-ties (within `LOOKAHEAD_TIE_TOL`)
/// resolved by the secondary key, lexicographically.
fn argmax_with_tiebreak(primary: &[f64], secondary: &[(f64, f64)]) -> usize {
    let best = primary.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    let mut chosen: Option<usize> = None;
    for (i, &v) in primary.iter().enumerate() {
        if !(v >= best - LOOKAHEAD_TIE_TOL) {
            continue;
        }
        chosen = match chosen {
            None => Some(i),
            Some(c) if secondary[i].0 > secondary[c].0
                || (secondary[i].0 == secondary[c].0 && secondary[i].1 > secondary[c].1) =>
            {
                Some(i)
            }
            keep => keep,
        };
    }
    chosen.unwrap_or(0)
}

/// Sequential selection with a two-step lookahead on the condition side. The
/// fantasy task for each candidate is drawn uniformly from `tasks`; the task
/// side uses the one-step `alpha_w`.
pub fn seq_2la_select(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha_x: &AcquisitionSpec,
    alpha_w: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    rng: &mut impl RngCore,
) -> Result<Pair> {
    seq_2la_select_with(model, agg, alpha_x, alpha_w, candidates, tasks, FANTASIES, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn seq_2la_select_with(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha_x: &AcquisitionSpec,
    alpha_w: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    fantasies: usize,
    rng: &mut impl RngCore,
) -> Result<Pair> {
    check_spaces(candidates, tasks)?;
    let draws = RoundDraws::generate(rng, candidates.len(), tasks.len());
    let la_draws = LookaheadDraws::generate(rng.next_u64(), fantasies, INNER_DRAWS, tasks.len(), candidates.len());
    let (_, one_step) = one_step_scores(model, agg, alpha_x, candidates, tasks, &draws)?;
    let lookahead = candidates
        .par_iter()
        .map(|&x0| {
            two_step_la_with_draws(model, x0, FantasyTask::Uniform, agg, alpha_x, candidates, tasks, &la_draws)
        })
        .collect::<Result<Vec<f64>>>()?;
    let secondary: Vec<(f64, f64)> = one_step.iter().map(|&v| (v, 0.0)).collect();
    let x = candidates[argmax_with_tiebreak(&lookahead, &secondary)];
    let w_scores = task_scores(model, alpha_w, x, tasks, &draws)?;
    Ok((x, tasks[argmax(&w_scores).unwrap_or(0)]))
}

/// Joint selection over all `(x, w)` pairs of the two-step lookahead value with
/// the fantasy observation placed at `(x, w)`. Near-ties are resolved by the
/// one-step value of `x`, then by the predictive variance at `(x, w)`.
pub fn joint_2la_select(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    rng: &mut impl RngCore,
) -> Result<Pair> {
    joint_2la_select_with(model, agg, alpha, candidates, tasks, FANTASIES, rng)
}

pub fn joint_2la_select_with(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    fantasies: usize,
    rng: &mut impl RngCore,
) -> Result<Pair> {
    check_spaces(candidates, tasks)?;
    let draws = RoundDraws::generate(rng, candidates.len(), tasks.len());
    let la_draws = LookaheadDraws::generate(rng.next_u64(), fantasies, INNER_DRAWS, tasks.len(), candidates.len());
    let (_, one_step) = one_step_scores(model, agg, alpha, candidates, tasks, &draws)?;
    let pairs: Vec<(usize, Pair)> = candidates
        .iter()
        .enumerate()
        .flat_map(|(i, &x)| tasks.iter().map(move |&w| (i, (x, w))))
        .collect();
    let values = joint_2la_table(model, agg, alpha, candidates, tasks, &la_draws)?;
    let variances = model.posterior_variance(&pairs.iter().map(|p| p.1).collect::<Vec<_>>())?;
    let secondary: Vec<(f64, f64)> = pairs.iter().enumerate().map(|(k, &(i, _))| (one_step[i], variances[k])).collect();
    Ok(pairs[argmax_with_tiebreak(&values, &secondary)].1)
}

/// Two-step values for every `(x, w)` pair, row-major over `candidates × tasks`.
pub fn joint_2la_table(
    model: &GpModel,
    agg: &BoundAggregation,
    alpha: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    draws: &LookaheadDraws,
) -> Result<Vec<f64>> {
    let pairs: Vec<Pair> = candidates.iter().flat_map(|&x| tasks.iter().map(move |&w| (x, w))).collect();
    pairs
        .par_iter()
        .map(|&(x, w)| two_step_la_with_draws(model, x, FantasyTask::Fixed(w), agg, alpha, candidates, tasks, draws))
        .collect()
}

/// Per-arm statistics for UCB1-Tuned, arms being conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    counts: Vec<u64>,
    sums: Vec<f64>,
    sums_sq: Vec<f64>,
    total: u64,
    init_cursor: usize,
}

impl BanditState {
    pub fn new(n_arms: usize) -> Self {
        BanditState {
            counts: vec![0; n_arms],
            sums: vec![0.0; n_arms],
            sums_sq: vec![0.0; n_arms],
            total: 0,
            init_cursor: 0,
        }
    }

    pub fn n_arms(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// True until every arm has been pulled once by the initialization sweep.
    pub fn in_init_phase(&self) -> bool {
        self.init_cursor < self.counts.len()
    }

    pub fn update(&mut self, arm: usize, reward: f64) {
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.sums_sq[arm] += reward * reward;
        self.total += 1;
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.sums[arm] / self.counts[arm] as f64
    }

    /// Empirical (biased) reward variance of an arm.
    pub fn variance(&self, arm: usize) -> f64 {
        let m = self.mean(arm);
        (self.sums_sq[arm] / self.counts[arm] as f64 - m * m).max(0.0)
    }

    /// UCB1-Tuned index of an arm; infinite for unpulled arms.
    pub fn score(&self, arm: usize) -> f64 {
        let nj = self.counts[arm];
        if nj == 0 {
            return f64::INFINITY;
        }
        ucb1_tuned(self.total as f64, nj as f64, self.mean(arm), self.variance(arm))
    }

    /// Next arm: the initialization sweep in canonical order, then UCB1-Tuned.
    pub fn next_arm(&mut self) -> usize {
        if self.in_init_phase() {
            let arm = self.init_cursor;
            self.init_cursor += 1;
            return arm;
        }
        let scores: Vec<f64> = (0..self.n_arms()).map(|j| self.score(j)).collect();
        argmax(&scores).unwrap_or(0)
    }
}

/// `mean + sqrt((ln n / n_j) · min(1/4, V_j))`, `V_j = s²_j + sqrt(2 ln n / n_j)`.
pub fn ucb1_tuned(total: f64, n_j: f64, mean: f64, variance: f64) -> f64 {
    let ln_n = total.ln();
    let v = variance + (2.0 * ln_n / n_j).sqrt();
    mean + (ln_n / n_j * v.min(0.25)).sqrt()
}

/// Bandit proposal: arm from the state, task uniformly from `tasks`.
pub fn bandit_select(state: &mut BanditState, tasks: &[usize], rng: &mut impl RngCore) -> Result<Pair> {
    if state.n_arms() == 0 || tasks.is_empty() {
        return Err(GenboError::invalid("empty candidate or task set"));
    }
    let x = state.next_arm();
    let w = tasks[rng.random_range(0..tasks.len())];
    Ok((x, w))
}

/// Most pulled arm, ties to the lowest index.
pub fn bandit_recommend(state: &BanditState) -> usize {
    let mut best = 0;
    for (j, &c) in state.counts.iter().enumerate() {
        if c > state.counts[best] {
            best = j;
        }
    }
    best
}

/// Expands a proposal into this round's evaluations.
pub fn apply_w_mode(mode: ResolvedWMode, proposed: Pair, tasks: &[usize]) -> Vec<Pair> {
    match mode {
        ResolvedWMode::Adaptive => vec![proposed],
        ResolvedWMode::Single(w) => vec![(proposed.0, w)],
        ResolvedWMode::Complete => tasks.iter().map(|&w| (proposed.0, w)).collect(),
    }
}
