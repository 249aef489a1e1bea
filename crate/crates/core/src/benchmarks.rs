//! Task splits, exhaustive grid search and the transferability sweep.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{true_generality, AggregationSpec};
use crate::error::{GenboError, Result};
use crate::fingerprint::tanimoto_similarity;
use crate::stats;
use crate::surface::LookupSurface;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMethod {
    Random,
    Fps,
    Average,
}

impl SplitMethod {
    pub const ALL: [SplitMethod; 3] = [SplitMethod::Random, SplitMethod::Fps, SplitMethod::Average];

    pub fn name(self) -> &'static str {
        match self {
            SplitMethod::Random => "random",
            SplitMethod::Fps => "fps",
            SplitMethod::Average => "average",
        }
    }
}

impl fmt::Display for SplitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitMethod {
    type Err = GenboError;

    fn from_str(s: &str) -> Result<Self> {
        SplitMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| GenboError::invalid(format!("unknown split method {s:?} (expected one of random, fps, average)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub n_train: usize,
    pub method: SplitMethod,
    pub seed: u64,
}

/// Splits `pool` (task indices of `surface`) into train and test sets.
/// `random` returns the train tasks in draw order; `fps` and `average` in
/// selection order. The test set keeps the pool order.
pub fn split_tasks(surface: &LookupSurface, pool: &[usize], spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.n_train == 0 || spec.n_train >= pool.len() {
        return Err(GenboError::invalid(format!(
            "n_train = {} must lie in [1, {})",
            spec.n_train,
            pool.len()
        )));
    }
    if pool.iter().any(|&w| w >= surface.n_tasks()) {
        return Err(GenboError::invalid("task index outside the surface"));
    }
    let train = match spec.method {
        SplitMethod::Random => {
            let mut shuffled = pool.to_vec();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
            shuffled.truncate(spec.n_train);
            shuffled
        }
        SplitMethod::Fps => fps_order(surface, pool, spec.n_train),
        SplitMethod::Average => average_order(surface, pool, spec.n_train),
    };
    let test = pool.iter().copied().filter(|w| !train.contains(w)).collect();
    Ok((train, test))
}

fn task_similarity(surface: &LookupSurface, a: usize, b: usize) -> f64 {
    let t = surface.tasks();
    tanimoto_similarity(&t[a].features, &t[b].features).expect("task fingerprints share one width")
}

/// Greedy max-min selection under Tanimoto distance, starting from the lowest index.
fn fps_order(surface: &LookupSurface, pool: &[usize], n: usize) -> Vec<usize> {
    let first = *pool.iter().min().expect("non-empty pool");
    let mut chosen = vec![first];
    let mut min_dist: Vec<f64> = pool.iter().map(|&w| 1.0 - task_similarity(surface, w, first)).collect();
    let mut taken: Vec<bool> = pool.iter().map(|&w| w == first).collect();
    while chosen.len() < n {
        let mut best: Option<usize> = None;
        for i in 0..pool.len() {
            if taken[i] {
                continue;
            }
            best = match best {
                Some(b) if min_dist[b] > min_dist[i] || (min_dist[b] == min_dist[i] && pool[b] < pool[i]) => Some(b),
                _ => Some(i),
            };
        }
        let b = best.expect("pool larger than selection");
        taken[b] = true;
        chosen.push(pool[b]);
        for i in 0..pool.len() {
            min_dist[i] = min_dist[i].min(1.0 - task_similarity(surface, pool[i], pool[b]));
        }
    }
    chosen
}

/// The `n` tasks with the highest mean similarity to the rest of the pool.
fn average_order(surface: &LookupSurface, pool: &[usize], n: usize) -> Vec<usize> {
    let scores: Vec<f64> = pool
        .iter()
        .map(|&a| {
            let s: f64 = pool.iter().filter(|&&b| b != a).map(|&b| task_similarity(surface, a, b)).sum();
            s / (pool.len() - 1) as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(pool[i].cmp(&pool[j])));
    order.into_iter().take(n).map(|i| pool[i]).collect()
}

/// True generality of every condition over `tasks`.
pub fn generality_table(surface: &LookupSurface, tasks: &[usize], agg: &AggregationSpec) -> Result<Vec<f64>> {
    (0..surface.n_parameters()).map(|x| true_generality(surface, x, tasks, agg)).collect()
}

/// Exhaustive argmax of true generality; ties go to the lowest index.
pub fn grid_search_optimum(surface: &LookupSurface, tasks: &[usize], agg: &AggregationSpec) -> Result<(usize, f64)> {
    let values = generality_table(surface, tasks, agg)?;
    let mut best = 0;
    for (x, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = x;
        }
    }
    Ok((best, values[best]))
}

fn normalize(values: &[f64], x: usize) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        1.0
    } else {
        (values[x] - lo) / (hi - lo)
    }
}

/// Generality of `x` on `tasks`, rescaled so that the worst condition scores 0
/// and the best 1. A flat surface scores 1.
pub fn normalized_generality_score(
    surface: &LookupSurface,
    x: usize,
    tasks: &[usize],
    agg: &AggregationSpec,
) -> Result<f64> {
    if x >= surface.n_parameters() {
        return Err(GenboError::invalid("condition index outside the surface"));
    }
    Ok(normalize(&generality_table(surface, tasks, agg)?, x))
}

/// Parameters of a transferability sweep. Each split seed first partitions all
/// tasks into a train pool and a held-out test set, then subsamples `n_train`
/// tasks from the pool with each method.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    pub n_splits: usize,
    pub methods: Vec<SplitMethod>,
    pub aggregation: AggregationSpec,
    pub test_fraction: f64,
    pub seed0: u64,
}

impl SweepConfig {
    pub fn new(sizes: Vec<usize>, n_splits: usize, methods: Vec<SplitMethod>, aggregation: AggregationSpec) -> Self {
        SweepConfig { sizes, n_splits, methods, aggregation, test_fraction: 0.5, seed0: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: SplitMethod,
    pub n_train: usize,
    pub split_seed: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub method: SplitMethod,
    pub n_train: usize,
    pub mean_score: f64,
    pub sem_score: f64,
    pub n_splits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SizeSummary>,
    /// Spearman ρ between `n_train` and mean score, per method in config order.
    pub rho: Vec<(SplitMethod, f64)>,
}

impl SweepResult {
    pub fn rho_for(&self, method: SplitMethod) -> Option<f64> {
        self.rho.iter().find(|(m, _)| *m == method).map(|(_, r)| *r)
    }

    pub fn mean_score(&self, method: SplitMethod, n_train: usize) -> Option<f64> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.n_train == n_train)
            .map(|s| s.mean_score)
    }

    /// Rows `method,n_train,split_seed,score,rho_per_method`, followed by one
    /// summary row per method with `n_train = all` and `split_seed = summary`.
    pub fn write_table<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "n_train", "split_seed", "score", "rho_per_method"])?;
        for r in &self.rows {
            let rho = self.rho_for(r.method).unwrap_or(f64::NAN);
            w.write_record([
                r.method.name().to_string(),
                r.n_train.to_string(),
                r.split_seed.to_string(),
                format_float(r.score),
                format_float(rho),
            ])?;
        }
        for (method, rho) in &self.rho {
            let scores: Vec<f64> = self.rows.iter().filter(|r| r.method == *method).map(|r| r.score).collect();
            w.write_record([
                method.name().to_string(),
                "all".to_string(),
                "summary".to_string(),
                format_float(stats::mean(&scores)),
                format_float(*rho),
            ])?;
        }
        w.flush().map_err(|e| GenboError::io("<sweep table>", e))?;
        Ok(())
    }

    /// Rows `method,n_train,mean_score,sem_score,n_splits,rho`.
    pub fn write_summary<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "n_train", "mean_score", "sem_score", "n_splits", "rho"])?;
        for s in &self.summaries {
            w.write_record([
                s.method.name().to_string(),
                s.n_train.to_string(),
                format_float(s.mean_score),
                format_float(s.sem_score),
                s.n_splits.to_string(),
                format_float(self.rho_for(s.method).unwrap_or(f64::NAN)),
            ])?;
        }
        w.flush().map_err(|e| GenboError::io("<sweep summary>", e))?;
        Ok(())
    }
}

/// Shortest representation that round-trips; `NaN` for undefined values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

/// Random partition of all surface tasks into `(pool, test)`, both sorted.
pub fn holdout_split(n_tasks: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || n_tasks < 2 {
        return Err(GenboError::invalid("holdout split needs at least two tasks and a test fraction in [0, 1)"));
    }
    let n_test = ((n_tasks as f64 * test_fraction).round() as usize).clamp(1, n_tasks - 1);
    let mut idx: Vec<usize> = (0..n_tasks).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut pool = idx[n_test..].to_vec();
    test.sort_unstable();
    pool.sort_unstable();
    Ok((pool, test))
}

/// Grid search on subsampled train tasks, scored on held-out tasks.
pub fn transferability_sweep(surface: &LookupSurface, config: &SweepConfig) -> Result<SweepResult> {
    if config.sizes.is_empty() || config.methods.is_empty() || config.n_splits == 0 {
        return Err(GenboError::invalid("sweep needs at least one size, method and split"));
    }
    let seeds: Vec<u64> = (0..config.n_splits as u64).map(|i| config.seed0 + i).collect();
    let splits = seeds
        .iter()
        .map(|&s| holdout_split(surface.n_tasks(), config.test_fraction, s))
        .collect::<Result<Vec<_>>>()?;
    let pool_size = splits[0].0.len();
    if let Some(&bad) = config.sizes.iter().find(|&&n| n == 0 || n >= pool_size) {
        return Err(GenboError::invalid(format!(
            "sweep size {bad} does not fit a train pool of {pool_size} tasks"
        )));
    }
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &n_train in &config.sizes {
            for (k, &seed) in seeds.iter().enumerate() {
                jobs.push((method, n_train, seed, k));
            }
        }
    }
    let rows = jobs
        .par_iter()
        .map(|&(method, n_train, seed, k)| {
            let (pool, test) = &splits[k];
            let (train, _) = split_tasks(surface, pool, SplitSpec { n_train, method, seed })?;
            let (x, _) = grid_search_optimum(surface, &train, &config.aggregation)?;
            let score = normalized_generality_score(surface, x, test, &config.aggregation)?;
            Ok(SweepRow { method, n_train, split_seed: seed, score })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summaries = Vec::new();
    let mut rho = Vec::new();
    for &method in &config.methods {
        let mut means = Vec::new();
        for &n_train in &config.sizes {
            let scores: Vec<f64> =
                rows.iter().filter(|r| r.method == method && r.n_train == n_train).map(|r| r.score).collect();
            let m = stats::mean(&scores);
            means.push(m);
            summaries.push(SizeSummary {
                method,
                n_train,
                mean_score: m,
                sem_score: stats::sem(&scores),
                n_splits: scores.len(),
            });
        }
        let sizes: Vec<f64> = config.sizes.iter().map(|&n| n as f64).collect();
        rho.push((method, stats::spearman(&sizes, &means)));
    }
    Ok(SweepResult { rows, summaries, rho })
}
