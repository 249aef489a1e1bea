//! Sample-average acquisition functions and the two-step lookahead.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::aggregation::BoundAggregation;
use crate::error::{GenboError, Result};
use crate::gp::{base_samples, GpModel, Pair};

/// Draw count for one-step SAA estimates.
pub const ONE_STEP_DRAWS: usize = 512;
/// Fantasy count of the two-step lookahead.
pub const FANTASIES: usize = 3;
/// Draw count for fantasy φ-posteriors.
pub const INNER_DRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AcquisitionKind {
    Ucb,
    Ucbe,
    Ei,
    Pv,
    Ra,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    pub beta: f64,
}

impl AcquisitionSpec {
    pub const fn ucb() -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Ucb, beta: 0.5 }
    }
    pub const fn ucbe() -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Ucbe, beta: 5.0 }
    }
    pub const fn ei() -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Ei, beta: 0.0 }
    }
    pub const fn pv() -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Pv, beta: 0.0 }
    }
    pub const fn ra() -> Self {
        AcquisitionSpec { kind: AcquisitionKind::Ra, beta: 0.0 }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AcquisitionKind::Ucb => "ucb",
            AcquisitionKind::Ucbe => "ucbe",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::Pv => "pv",
            AcquisitionKind::Ra => "ra",
        }
    }

    pub fn needs_incumbent(&self) -> bool {
        self.kind == AcquisitionKind::Ei
    }

    /// Scores one sample vector. `random` is the pre-drawn uniform used by `ra`.
    pub fn evaluate(&self, samples: &[f64], incumbent: f64, random: f64) -> f64 {
        match self.kind {
            AcquisitionKind::Ucb | AcquisitionKind::Ucbe => ucb(samples, self.beta),
            AcquisitionKind::Ei => ei(samples, incumbent),
            AcquisitionKind::Pv => pv(samples),
            AcquisitionKind::Ra => random,
        }
    }
}

impl FromStr for AcquisitionSpec {
    type Err = GenboError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ucb" => Ok(AcquisitionSpec::ucb()),
            "ucbe" => Ok(AcquisitionSpec::ucbe()),
            "ei" => Ok(AcquisitionSpec::ei()),
            "pv" => Ok(AcquisitionSpec::pv()),
            "ra" => Ok(AcquisitionSpec::ra()),
            other => Err(GenboError::invalid(format!(
                "unknown acquisition function {other:?} (expected ucb, ucbe, ei, pv or ra)"
            ))),
        }
    }
}

impl fmt::Display for AcquisitionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn sample_mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance; zero for a single draw.
fn sample_variance(samples: &[f64]) -> f64 {
    if samples.len() < 2 {
        return 0.0;
    }
    let mu = sample_mean(samples);
    samples.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
}

/// Sample mean plus `beta` sample standard deviations.
pub fn ucb(samples: &[f64], beta: f64) -> f64 {
    let mu = sample_mean(samples);
    if beta == 0.0 {
        return mu;
    }
    mu + beta * sample_variance(samples).sqrt()
}

/// Mean positive improvement over `incumbent`. Without an incumbent (`-inf`)
/// this is the sample mean.
pub fn ei(samples: &[f64], incumbent: f64) -> f64 {
    if incumbent == f64::NEG_INFINITY {
        return sample_mean(samples);
    }
    samples.iter().map(|&v| (v - incumbent).max(0.0)).sum::<f64>() / samples.len() as f64
}

pub fn pv(samples: &[f64]) -> f64 {
    sample_variance(samples)
}

/// Seeded stream of uniform `[0, 1)` scores for random acquisition.
#[derive(Debug, Clone)]
pub struct RandomAcquisition {
    rng: ChaCha8Rng,
}

impl RandomAcquisition {
    pub fn new(seed: u64) -> Self {
        RandomAcquisition { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn ra(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

fn queries_for(x: usize, tasks: &[usize]) -> Vec<Pair> {
    tasks.iter().map(|&w| (x, w)).collect()
}

/// SAA φ-samples for candidate `x`, using the supplied base samples.
pub fn phi_samples(
    model: &GpModel,
    x: usize,
    tasks: &[usize],
    agg: &BoundAggregation,
    base: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let s = model.sample_with_base(&queries_for(x, tasks), base)?;
    agg.aggregate_samples(&s.values)
}

/// Posterior-mean estimate of φ(x): exact for mean aggregation, else the mean of `phi`.
pub fn phi_mean(model: &GpModel, x: usize, tasks: &[usize], agg: &BoundAggregation, phi: &[f64]) -> Result<f64> {
    if agg.is_mean() {
        let mu = model.posterior_mean(&queries_for(x, tasks))?;
        Ok(mu.mean())
    } else {
        Ok(sample_mean(phi))
    }
}

/// φ-samples and mean estimates for every candidate, sharing one set of base samples.
#[derive(Debug, Clone)]
pub struct PhiTable {
    pub candidates: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub means: Vec<f64>,
}

impl PhiTable {
    pub fn compute(
        model: &GpModel,
        candidates: &[usize],
        tasks: &[usize],
        agg: &BoundAggregation,
        base: &DMatrix<f64>,
    ) -> Result<PhiTable> {
        let mut samples = Vec::with_capacity(candidates.len());
        let mut means = Vec::with_capacity(candidates.len());
        for &x in candidates {
            let phi = phi_samples(model, x, tasks, agg, base)?;
            means.push(phi_mean(model, x, tasks, agg, &phi)?);
            samples.push(phi);
        }
        Ok(PhiTable { candidates: candidates.to_vec(), samples, means })
    }

    /// Best posterior-mean φ among candidates present in the model's training data,
    /// or `-inf` if none has been evaluated.
    pub fn incumbent(&self, model: &GpModel) -> f64 {
        let evaluated: BTreeSet<usize> = model.inputs().iter().map(|p| p.0).collect();
        self.candidates
            .iter()
            .zip(&self.means)
            .filter(|(x, _)| evaluated.contains(x))
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Acquisition value of every candidate. `random` supplies one uniform per candidate.
    /// UCB is centred on `means`, which for mean aggregation is the exact posterior
    /// mean rather than its SAA estimate.
    pub fn scores(&self, model: &GpModel, acq: &AcquisitionSpec, random: &[f64]) -> Vec<f64> {
        let incumbent = if acq.needs_incumbent() { self.incumbent(model) } else { f64::NEG_INFINITY };
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| match acq.kind {
                AcquisitionKind::Ucb | AcquisitionKind::Ucbe => {
                    self.means[i] + acq.beta * sample_variance(s).sqrt()
                }
                _ => acq.evaluate(s, incumbent, random.get(i).copied().unwrap_or(0.0)),
            })
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index. NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Which task the fantasy observation at `x0` is placed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FantasyTask {
    /// A fixed task index (joint acquisition).
    Fixed(usize),
    /// A task drawn uniformly from the task list, independently per fantasy.
    Uniform,
}

/// All random numbers consumed by one two-step evaluation round. Sharing one
/// instance across candidates gives common random numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct LookaheadDraws {
    pub fantasy_normals: Vec<f64>,
    /// Positions into the task list, used by [`FantasyTask::Uniform`].
    pub fantasy_tasks: Vec<usize>,
    /// `fantasies × n_candidates` uniforms for an `ra` inner acquisition.
    pub random_scores: Vec<Vec<f64>>,
    /// `inner_draws × n_tasks` base samples for fantasy φ-posteriors.
    pub inner_base: DMatrix<f64>,
}

impl LookaheadDraws {
    pub fn generate(seed: u64, fantasies: usize, inner_draws: usize, n_tasks: usize, n_candidates: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fantasy_normals = (0..fantasies).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fantasy_tasks = (0..fantasies).map(|_| rng.random_range(0..n_tasks.max(1))).collect();
        let random_scores = (0..fantasies)
            .map(|_| (0..n_candidates).map(|_| rng.random::<f64>()).collect())
            .collect();
        let inner_seed = rng.next_u64();
        LookaheadDraws {
            fantasy_normals,
            fantasy_tasks,
            random_scores,
            inner_base: base_samples(inner_seed, inner_draws, n_tasks),
        }
    }

    pub fn fantasies(&self) -> usize {
        self.fantasy_normals.len()
    }
}

/// Two-step lookahead value at `x0`: the average, over fantasy observations at
/// `(x0, w)`, of the best inner acquisition value over `candidates` on the
/// conditioned φ-posterior.
#[allow(clippy::too_many_arguments)]
pub fn two_step_la(
    model: &GpModel,
    x0: usize,
    task: FantasyTask,
    agg: &BoundAggregation,
    inner: &AcquisitionSpec,
    fantasies: usize,
    candidates: &[usize],
    tasks: &[usize],
    seed: u64,
) -> Result<f64> {
    let draws = LookaheadDraws::generate(seed, fantasies, INNER_DRAWS, tasks.len(), candidates.len());
    two_step_la_with_draws(model, x0, task, agg, inner, candidates, tasks, &draws)
}

#[allow(clippy::too_many_arguments)]
pub fn two_step_la_with_draws(
    model: &GpModel,
    x0: usize,
    task: FantasyTask,
    agg: &BoundAggregation,
    inner: &AcquisitionSpec,
    candidates: &[usize],
    tasks: &[usize],
    draws: &LookaheadDraws,
) -> Result<f64> {
    if draws.fantasies() == 0 {
        return Err(GenboError::invalid("two-step lookahead needs at least one fantasy"));
    }
    if candidates.is_empty() || tasks.is_empty() {
        return Err(GenboError::invalid("empty candidate or task set"));
    }
    let mut total = 0.0;
    for j in 0..draws.fantasies() {
        let w = match task {
            FantasyTask::Fixed(w) => w,
            FantasyTask::Uniform => tasks[draws.fantasy_tasks[j]],
        };
        let base = DMatrix::from_element(1, 1, draws.fantasy_normals[j]);
        let y = model.sample_with_base(&[(x0, w)], &base)?.values[(0, 0)];
        let fantasy = model.condition_on_fantasy((x0, w), y)?;
        let table = PhiTable::compute(&fantasy, candidates, tasks, agg, &draws.inner_base)?;
        let scores = table.scores(&fantasy, inner, &draws.random_scores[j]);
        total += scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(total / draws.fantasies() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb(&[1.0, 1.0, 1.0], 5.0), 1.0);
        // mean 1, sd sqrt(2)
        assert!((ucb(&[0.0, 2.0], 0.5) - (1.0 + 0.5 * 2f64.sqrt())).abs() < 1e-12);
        assert_eq!(ucb(&[0.3, 0.9, -0.1], 0.0), sample_mean(&[0.3, 0.9, -0.1]));
        assert_eq!(ucb(&[0.4], 5.0), 0.4);
    }

    #[test]
    fn ei_examples() {
        assert_eq!(ei(&[0.5, 1.5], 1.0), 0.25);
        assert_eq!(ei(&[0.1, 0.2], 1.0), 0.0);
        assert_eq!(ei(&[0.5, -1.5], f64::NEG_INFINITY), -0.5);
    }

    #[test]
    fn pv_examples() {
        assert_eq!(pv(&[1.0, 1.0, 1.0]), 0.0);
        assert_eq!(pv(&[0.0, 2.0]), 2.0);
        let s = [0.1, 0.7, -0.4, 1.3];
        let scaled: Vec<f64> = s.iter().map(|v| v * 3.0).collect();
        assert!((pv(&scaled) - 9.0 * pv(&s)).abs() < 1e-12);
    }

    #[test]
    fn ra_stream() {
        let mut a = RandomAcquisition::new(5);
        let mut b = RandomAcquisition::new(5);
        let va: Vec<f64> = (0..10_000).map(|_| a.ra()).collect();
        let vb: Vec<f64> = (0..10_000).map(|_| b.ra()).collect();
        assert_eq!(va, vb);
        assert!(va.iter().all(|v| (0.0..1.0).contains(v)));
        let mean = sample_mean(&va);
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[f64::NAN, 2.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn parse_names() {
        assert_eq!("ucbe".parse::<AcquisitionSpec>().unwrap().beta, 5.0);
        assert!("pi".parse::<AcquisitionSpec>().is_err());
    }

    proptest! {
        #[test]
        fn ucb_monotone_in_beta(s in prop::collection::vec(-5.0f64..5.0, 2..20), b1 in 0.0f64..5.0, db in 0.0f64..5.0) {
            prop_assume!(sample_variance(&s) > 1e-12);
            prop_assert!(ucb(&s, b1 + db) >= ucb(&s, b1));
        }

        #[test]
        fn ei_monotone_in_incumbent(s in prop::collection::vec(-5.0f64..5.0, 1..20), f in -5.0f64..5.0, df in 0.0f64..3.0) {
            prop_assert!(ei(&s, f + df) <= ei(&s, f));
            prop_assert!(ei(&s, f) >= 0.0);
        }
    }
}
