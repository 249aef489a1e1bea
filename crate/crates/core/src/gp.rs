//! Exact Gaussian-process regression over `(condition, task)` pairs.
//!
//! The joint input of a pair is the concatenation of the condition and task
//! fingerprints, and the covariance is the scaled Tanimoto kernel on that
//! concatenation. Because popcounts are additive over concatenation, the kernel
//! is evaluated from per-component intersection tables without materializing
//! the joint vectors.
//!
//! Targets are standardized per fit; every quantity returned by the model
//! (means, covariances, samples, fantasy values) lives in standardized units.
//! Use [`Standardizer`] to move between outcome and model units.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{GenboError, Result};
use crate::fingerprint::{tanimoto_from_counts, Fingerprint};
use crate::linalg;
use crate::model::ObservationSet;
use crate::surface::LookupSurface;

/// `(condition index, task index)`.
pub type Pair = (usize, usize);

/// Bounds on hyperparameters during marginal-likelihood fitting.
pub const NOISE_BOUNDS: (f64, f64) = (1e-6, 1.0);
pub const OUTPUTSCALE_BOUNDS: (f64, f64) = (1e-3, 1e3);

const STARTS: [(f64, f64); 3] = [(1.0, 0.1), (2.0, 1e-3), (0.3, 0.5)];
const MAX_ASCENT_STEPS: usize = 200;

/// Precomputed intersection tables for Tanimoto on concatenated fingerprints.
#[derive(Debug, Clone)]
pub struct PairSpace {
    n_x: usize,
    n_w: usize,
    x_ones: Vec<u32>,
    w_ones: Vec<u32>,
    x_inter: Vec<u32>,
    w_inter: Vec<u32>,
}

impl PairSpace {
    pub fn new(x_fps: &[Fingerprint], w_fps: &[Fingerprint]) -> Result<Self> {
        let table = |fps: &[Fingerprint]| -> Result<Vec<u32>> {
            let n = fps.len();
            let mut t = vec![0u32; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = fps[i].intersection(&fps[j])?;
                    t[i * n + j] = v;
                    t[j * n + i] = v;
                }
            }
            Ok(t)
        };
        Ok(PairSpace {
            n_x: x_fps.len(),
            n_w: w_fps.len(),
            x_ones: x_fps.iter().map(Fingerprint::count_ones).collect(),
            w_ones: w_fps.iter().map(Fingerprint::count_ones).collect(),
            x_inter: table(x_fps)?,
            w_inter: table(w_fps)?,
        })
    }

    pub fn from_surface(surface: &LookupSurface) -> Result<Self> {
        PairSpace::new(&surface.parameter_fingerprints(), &surface.task_fingerprints())
    }

    pub fn n_parameters(&self) -> usize {
        self.n_x
    }

    pub fn n_tasks(&self) -> usize {
        self.n_w
    }

    /// Unscaled Tanimoto similarity of the concatenated fingerprints.
    #[inline]
    pub fn similarity(&self, a: Pair, b: Pair) -> f64 {
        let inter = self.x_inter[a.0 * self.n_x + b.0] + self.w_inter[a.1 * self.n_w + b.1];
        let ones_a = self.x_ones[a.0] + self.w_ones[a.1];
        let ones_b = self.x_ones[b.0] + self.w_ones[b.1];
        tanimoto_from_counts(inter, ones_a, ones_b)
    }

    pub fn gram(&self, rows: &[Pair], cols: &[Pair]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.similarity(rows[i], cols[j]))
    }

    fn check(&self, pairs: &[Pair]) -> Result<()> {
        match pairs.iter().find(|p| p.0 >= self.n_x || p.1 >= self.n_w) {
            Some(p) => Err(GenboError::invalid(format!("pair {p:?} outside the search space"))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub outputscale: f64,
    pub noise: f64,
}

/// Affine map between outcome units and model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub const IDENTITY: Standardizer = Standardizer { mean: 0.0, std: 1.0 };

    /// Sample mean and standard deviation; degenerate spreads map to unit scale.
    pub fn from_values(ys: &[f64]) -> Self {
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let std = if ys.len() < 2 {
            1.0
        } else {
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if var.sqrt() > 1e-12 {
                var.sqrt()
            } else {
                1.0
            }
        };
        Standardizer { mean, std }
    }

    pub fn forward(&self, y: f64) -> f64 {
        (y - self.mean) / self.std
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Joint predictive Gaussian at a list of query pairs.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `M` joint posterior draws at `P` query pairs (rows are draws).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub values: DMatrix<f64>,
    pub queries: Vec<Pair>,
}

impl SampleMatrix {
    pub fn draws(&self) -> usize {
        self.values.nrows()
    }
}

/// Standard-normal base samples (`m × p`), filled row by row from a seeded stream.
pub fn base_samples(seed: u64, m: usize, p: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::<f64>::zeros(m, p);
    for i in 0..m {
        for j in 0..p {
            out[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct GpModel {
    space: Arc<PairSpace>,
    inputs: Vec<Pair>,
    targets: DVector<f64>,
    params: KernelParams,
    scaler: Standardizer,
    jitter: f64,
    chol: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Standardizes `raw_targets` and fits outputscale and noise by maximizing the
    /// log marginal likelihood (projected gradient ascent in log space, three starts).
    pub fn fit(space: Arc<PairSpace>, inputs: Vec<Pair>, raw_targets: &[f64]) -> Result<GpModel> {
        if inputs.is_empty() {
            return Err(GenboError::EmptyDataset);
        }
        if inputs.len() != raw_targets.len() {
            return Err(GenboError::invalid("inputs and targets differ in length"));
        }
        if raw_targets.iter().any(|y| !y.is_finite()) {
            return Err(GenboError::invalid("non-finite training target"));
        }
        space.check(&inputs)?;
        let scaler = Standardizer::from_values(raw_targets);
        let targets = DVector::from_iterator(inputs.len(), raw_targets.iter().map(|&y| scaler.forward(y)));
        let gram = space.gram(&inputs, &inputs);
        let params = optimize_hyperparameters(&gram, &targets);
        GpModel::assemble(space, inputs, targets, params, scaler, 0.0)
    }

    pub fn fit_observations(space: Arc<PairSpace>, data: &ObservationSet) -> Result<GpModel> {
        GpModel::fit(space, data.inputs(), &data.targets())
    }

    /// Exact model with fixed hyperparameters on already-standardized targets.
    pub fn with_params(
        space: Arc<PairSpace>,
        inputs: Vec<Pair>,
        std_targets: Vec<f64>,
        params: KernelParams,
        scaler: Standardizer,
    ) -> Result<GpModel> {
        if inputs.is_empty() {
            return Err(GenboError::EmptyDataset);
        }
        if inputs.len() != std_targets.len() {
            return Err(GenboError::invalid("inputs and targets differ in length"));
        }
        if std_targets.iter().any(|y| !y.is_finite()) {
            return Err(GenboError::invalid("non-finite training target"));
        }
        if !(params.outputscale > 0.0 && params.noise > 0.0) {
            return Err(GenboError::invalid("kernel parameters must be positive"));
        }
        space.check(&inputs)?;
        let targets = DVector::from_vec(std_targets);
        GpModel::assemble(space, inputs, targets, params, scaler, 0.0)
    }

    fn assemble(
        space: Arc<PairSpace>,
        inputs: Vec<Pair>,
        targets: DVector<f64>,
        params: KernelParams,
        scaler: Standardizer,
        start_jitter: f64,
    ) -> Result<GpModel> {
        let n = inputs.len();
        let k = space.gram(&inputs, &inputs) * params.outputscale
            + DMatrix::<f64>::identity(n, n) * params.noise;
        let (chol, jitter) = linalg::cholesky_jittered(&k, start_jitter)?;
        let alpha = linalg::solve_lower_transpose(&chol, &linalg::solve_lower(&chol, &targets));
        Ok(GpModel { space, inputs, targets, params, scaler, jitter, chol, alpha })
    }

    pub fn space(&self) -> &Arc<PairSpace> {
        &self.space
    }

    pub fn inputs(&self) -> &[Pair] {
        &self.inputs
    }

    /// Training targets in model units.
    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn params(&self) -> KernelParams {
        self.params
    }

    pub fn scaler(&self) -> Standardizer {
        self.scaler
    }

    /// Diagonal jitter added on top of the noise variance (zero unless needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    fn cross(&self, queries: &[Pair]) -> DMatrix<f64> {
        self.space.gram(&self.inputs, queries) * self.params.outputscale
    }

    pub fn posterior_mean(&self, queries: &[Pair]) -> Result<DVector<f64>> {
        self.space.check(queries)?;
        Ok(self.cross(queries).transpose() * &self.alpha)
    }

    /// Marginal predictive variances, clamped at zero.
    pub fn posterior_variance(&self, queries: &[Pair]) -> Result<DVector<f64>> {
        self.space.check(queries)?;
        let v = linalg::solve_lower_matrix(&self.chol, &self.cross(queries));
        Ok(DVector::from_iterator(
            queries.len(),
            queries.iter().enumerate().map(|(j, &q)| {
                let prior = self.params.outputscale * self.space.similarity(q, q);
                (prior - v.column(j).norm_squared()).max(0.0)
            }),
        ))
    }

    /// Joint predictive mean and covariance. The covariance is symmetrized and
    /// eigenvalues below `-1e-10` are clamped to zero.
    pub fn posterior(&self, queries: &[Pair]) -> Result<Posterior> {
        self.space.check(queries)?;
        let kxq = self.cross(queries);
        let mean = kxq.transpose() * &self.alpha;
        let v = linalg::solve_lower_matrix(&self.chol, &kxq);
        let mut cov = self.space.gram(queries, queries) * self.params.outputscale - v.transpose() * v;
        linalg::symmetrize_and_clamp(&mut cov, 1e-10);
        Ok(Posterior { mean, cov })
    }

    /// Draws with caller-supplied base samples (`m × queries.len()`), so that
    /// several candidates can share common random numbers.
    pub fn sample_with_base(&self, queries: &[Pair], base: &DMatrix<f64>) -> Result<SampleMatrix> {
        if base.ncols() != queries.len() {
            return Err(GenboError::invalid("base sample width differs from query count"));
        }
        if base.nrows() == 0 {
            return Err(GenboError::invalid("draw count must be at least 1"));
        }
        let post = self.posterior(queries)?;
        let l = linalg::psd_factor(&post.cov)?;
        let mut values = base * l.transpose();
        for mut row in values.row_iter_mut() {
            row += post.mean.transpose();
        }
        Ok(SampleMatrix { values, queries: queries.to_vec() })
    }

    pub fn sample_posterior(&self, queries: &[Pair], m: usize, seed: u64) -> Result<SampleMatrix> {
        if m == 0 {
            return Err(GenboError::invalid("draw count must be at least 1"));
        }
        self.sample_with_base(queries, &base_samples(seed, m, queries.len()))
    }

    /// Model conditioned on one extra observation `(pair, y)` in model units, with
    /// hyperparameters and standardization frozen. Extends the Cholesky factor by
    /// one row; falls back to a full refactorization if the new pivot is not positive.
    pub fn condition_on_fantasy(&self, pair: Pair, y: f64) -> Result<GpModel> {
        self.space.check(&[pair])?;
        if !y.is_finite() {
            return Err(GenboError::invalid("non-finite fantasy value"));
        }
        let n = self.inputs.len();
        let mut inputs = self.inputs.clone();
        inputs.push(pair);
        let mut targets = self.targets.clone().resize_vertically(n + 1, 0.0);
        targets[n] = y;

        let k = self.cross(&[pair]).column(0).into_owned();
        let c = self.params.outputscale * self.space.similarity(pair, pair) + self.params.noise + self.jitter;
        let l_row = linalg::solve_lower(&self.chol, &k);
        let d2 = c - l_row.norm_squared();
        if !(d2 > 0.0) || !d2.is_finite() {
            return GpModel::assemble(self.space.clone(), inputs, targets, self.params, self.scaler, self.jitter);
        }
        let mut chol = self.chol.clone().resize(n + 1, n + 1, 0.0);
        for j in 0..n {
            chol[(n, j)] = l_row[j];
        }
        chol[(n, n)] = d2.sqrt();
        let alpha = linalg::solve_lower_transpose(&chol, &linalg::solve_lower(&chol, &targets));
        Ok(GpModel {
            space: self.space.clone(),
            inputs,
            targets,
            params: self.params,
            scaler: self.scaler,
            jitter: self.jitter,
            chol,
            alpha,
        })
    }

    /// Full refactorization on the current data plus `extra`, frozen hyperparameters.
    pub fn refit_frozen(&self, extra: &[(Pair, f64)]) -> Result<GpModel> {
        let mut inputs = self.inputs.clone();
        let mut targets: Vec<f64> = self.targets.iter().copied().collect();
        for &(p, y) in extra {
            inputs.push(p);
            targets.push(y);
        }
        self.space.check(&inputs)?;
        GpModel::assemble(self.space.clone(), inputs, DVector::from_vec(targets), self.params, self.scaler, self.jitter)
    }

    /// Log marginal likelihood of the standardized targets under the current factor.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.inputs.len() as f64;
        -0.5 * self.targets.dot(&self.alpha)
            - self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
            - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
    }
}

/// Returns `(mll, d mll / d log σ², d mll / d log σₙ²)`, or `None` when `K` is not PD.
fn mll_and_gradient(gram: &DMatrix<f64>, y: &DVector<f64>, log_params: [f64; 2]) -> Option<(f64, [f64; 2])> {
    let (s2, sn2) = (log_params[0].exp(), log_params[1].exp());
    let n = gram.nrows();
    let k = gram * s2 + DMatrix::<f64>::identity(n, n) * sn2;
    let l = linalg::cholesky(&k)?;
    let alpha = linalg::solve_lower_transpose(&l, &linalg::solve_lower(&l, y));
    let mll = -0.5 * y.dot(&alpha)
        - l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let kinv = linalg::cholesky_inverse(&l);
    // d mll / dθ = ½ tr((ααᵀ − K⁻¹) dK/dθ)
    let kf = gram * s2;
    let a_kf_a = alpha.dot(&(&kf * &alpha));
    let tr_kinv_kf = kinv.component_mul(&kf).sum();
    let g_scale = 0.5 * (a_kf_a - tr_kinv_kf);
    let g_noise = 0.5 * sn2 * (alpha.norm_squared() - kinv.trace());
    Some((mll, [g_scale, g_noise]))
}

fn optimize_hyperparameters(gram: &DMatrix<f64>, y: &DVector<f64>) -> KernelParams {
    let lo = [OUTPUTSCALE_BOUNDS.0.ln(), NOISE_BOUNDS.0.ln()];
    let hi = [OUTPUTSCALE_BOUNDS.1.ln(), NOISE_BOUNDS.1.ln()];
    let project = |t: [f64; 2]| [t[0].clamp(lo[0], hi[0]), t[1].clamp(lo[1], hi[1])];

    let mut best: Option<(f64, [f64; 2])> = None;
    for &(s2, sn2) in &STARTS {
        let mut theta = project([f64::ln(s2), f64::ln(sn2)]);
        let Some((mut value, mut grad)) = mll_and_gradient(gram, y, theta) else {
            continue;
        };
        let mut step = 0.5;
        for _ in 0..MAX_ASCENT_STEPS {
            let mut accepted = false;
            while step > 1e-10 {
                let cand = project([theta[0] + step * grad[0], theta[1] + step * grad[1]]);
                let moved = [cand[0] - theta[0], cand[1] - theta[1]];
                if moved[0].abs() + moved[1].abs() < 1e-12 {
                    break;
                }
                match mll_and_gradient(gram, y, cand) {
                    Some((v, g)) if v >= value + 1e-4 * (grad[0] * moved[0] + grad[1] * moved[1]) => {
                        let converged = (v - value).abs() < 1e-10;
                        theta = cand;
                        value = v;
                        grad = g;
                        step = (step * 2.0).min(8.0);
                        accepted = !converged;
                        break;
                    }
                    _ => step *= 0.5,
                }
            }
            if !accepted {
                break;
            }
        }
        if best.is_none_or(|(v, _)| value > v) {
            best = Some((value, theta));
        }
    }
    let theta = best.map(|(_, t)| t).unwrap_or([0.0, f64::ln(0.1)]);
    KernelParams { outputscale: theta[0].exp(), noise: theta[1].exp() }
}
