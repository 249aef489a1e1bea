//! Reference computations written independently of the library internals:
//! plain bit-vector Tanimoto, Gaussian elimination, a textbook Cholesky and
//! brute-force lookahead with full refits.
#![allow(dead_code)]

use std::sync::Arc;

use genbo::acquisition::LookaheadDraws;
use genbo::fingerprint::Fingerprint;
use genbo::gp::Pair;
use genbo::model::{ParameterPoint, TaskPoint};
use genbo::surface::LookupSurface;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bits(fp: &Fingerprint) -> Vec<bool> {
    (0..fp.len()).map(|i| fp.bit(i)).collect()
}

/// Tanimoto similarity of the concatenated vectors `xa ⊕ wa` and `xb ⊕ wb`.
pub fn tanimoto_concat(xa: &[bool], wa: &[bool], xb: &[bool], wb: &[bool]) -> f64 {
    let a: Vec<bool> = xa.iter().chain(wa).copied().collect();
    let b: Vec<bool> = xb.iter().chain(wb).copied().collect();
    let mut inter = 0.0;
    let mut union = 0.0;
    for (p, q) in a.iter().zip(&b) {
        if *p && *q {
            inter += 1.0;
        }
        if *p || *q {
            union += 1.0;
        }
    }
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Vec<Vec<f64>> = (0..n).map(|i| a[i].iter().chain(&b[i]).copied().collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs())).unwrap();
        aug.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = aug[row][col] / aug[col][col];
                if f != 0.0 {
                    for k in col..n + m {
                        aug[row][k] -= f * aug[col][k];
                    }
                }
            }
        }
    }
    (0..n).map(|i| (0..m).map(|k| aug[i][n + k] / aug[i][i]).collect()).collect()
}

/// Textbook lower Cholesky; pivots at or below `tol` give zero columns.
pub fn cholesky_lower(a: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= tol {
            continue;
        }
        l[j][j] = d.sqrt();
        for i in j + 1..n {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / l[j][j];
        }
    }
    l
}

/// Exact GP posterior by dense solves.
pub struct DenseGp {
    pub xb: Vec<Vec<bool>>,
    pub wb: Vec<Vec<bool>>,
    pub inputs: Vec<Pair>,
    pub targets: Vec<f64>,
    pub outputscale: f64,
    /// Total diagonal term added to the training Gram matrix.
    pub diag: f64,
}

impl DenseGp {
    pub fn from_surface(surface: &LookupSurface, inputs: Vec<Pair>, targets: Vec<f64>, outputscale: f64, diag: f64) -> Self {
        DenseGp {
            xb: surface.parameters().iter().map(|p| bits(&p.features)).collect(),
            wb: surface.tasks().iter().map(|t| bits(&t.features)).collect(),
            inputs,
            targets,
            outputscale,
            diag,
        }
    }

    pub fn k(&self, a: Pair, b: Pair) -> f64 {
        self.outputscale * tanimoto_concat(&self.xb[a.0], &self.wb[a.1], &self.xb[b.0], &self.wb[b.1])
    }

    pub fn posterior(&self, queries: &[Pair]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.inputs.len();
        let kxx: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n).map(|j| self.k(self.inputs[i], self.inputs[j]) + if i == j { self.diag } else { 0.0 }).collect()
            })
            .collect();
        let mut rhs: Vec<Vec<f64>> = (0..n)
            .map(|i| queries.iter().map(|&q| self.k(self.inputs[i], q)).collect::<Vec<f64>>())
            .collect();
        for (i, row) in rhs.iter_mut().enumerate() {
            row.push(self.targets[i]);
        }
        let sol = gauss_solve(&kxx, &rhs);
        let q = queries.len();
        let alpha: Vec<f64> = (0..n).map(|i| sol[i][q]).collect();
        let mean: Vec<f64> = queries
            .iter()
            .map(|&qp| (0..n).map(|i| self.k(self.inputs[i], qp) * alpha[i]).sum())
            .collect();
        let cov = (0..q)
            .map(|a| {
                (0..q)
                    .map(|b| {
                        let reduce: f64 = (0..n).map(|i| self.k(self.inputs[i], queries[a]) * sol[i][b]).sum();
                        self.k(queries[a], queries[b]) - reduce
                    })
                    .collect()
            })
            .collect();
        (mean, cov)
    }

    /// Draws `mean + L z` for each row `z` of `base`.
    pub fn samples(&self, queries: &[Pair], base: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (mean, cov) = self.posterior(queries);
        let scale = (0..cov.len()).map(|i| cov[i][i].abs()).fold(0.0, f64::max).max(1e-300);
        let l = cholesky_lower(&cov, 1e-12 * scale);
        base.iter()
            .map(|z| (0..queries.len()).map(|p| mean[p] + (0..=p).map(|k| l[p][k] * z[k]).sum::<f64>()).collect())
            .collect()
    }

    pub fn with_observation(&self, pair: Pair, y: f64) -> DenseGp {
        let mut inputs = self.inputs.clone();
        inputs.push(pair);
        let mut targets = self.targets.clone();
        targets.push(y);
        DenseGp { xb: self.xb.clone(), wb: self.wb.clone(), inputs, targets, outputscale: self.outputscale, diag: self.diag }
    }
}

pub fn sample_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = sample_mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Inner acquisition of the brute-force oracles, on mean-aggregated φ samples.
/// UCB is centred on the exact posterior mean of φ.
#[derive(Clone, Copy, Debug)]
pub enum Inner {
    Ucb(f64),
    Ei,
}

/// Two-step value at `x0` with fantasies on `fantasy_w[j]`, every fantasy model
/// rebuilt from scratch. Mean aggregation over `tasks`.
pub fn brute_two_step(
    gp: &DenseGp,
    x0: usize,
    fantasy_w: &[usize],
    inner: Inner,
    candidates: &[usize],
    tasks: &[usize],
    draws: &LookaheadDraws,
) -> f64 {
    let base: Vec<Vec<f64>> = draws.inner_base.row_iter().map(|r| r.iter().copied().collect()).collect();
    let mut total = 0.0;
    for (j, &w) in fantasy_w.iter().enumerate() {
        let y = gp.samples(&[(x0, w)], &[vec![draws.fantasy_normals[j]]])[0][0];
        let f = gp.with_observation((x0, w), y);
        let mut phis = Vec::new();
        let mut means = Vec::new();
        for &x in candidates {
            let q: Vec<Pair> = tasks.iter().map(|&t| (x, t)).collect();
            let s = f.samples(&q, &base);
            phis.push(s.iter().map(|row| sample_mean(row)).collect::<Vec<f64>>());
            means.push(sample_mean(&f.posterior(&q).0));
        }
        let incumbent = candidates
            .iter()
            .zip(&means)
            .filter(|(x, _)| f.inputs.iter().any(|p| p.0 == **x))
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        let best = phis
            .iter()
            .enumerate()
            .map(|(k, phi)| match inner {
                Inner::Ucb(beta) => means[k] + beta * sample_sd(phi),
                Inner::Ei => sample_mean(&phi.iter().map(|v| (v - incumbent).max(0.0)).collect::<Vec<_>>()),
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    total / fantasy_w.len() as f64
}

/// Random fingerprint with at least one bit set.
pub fn random_fp(rng: &mut ChaCha8Rng, len: usize, density: f64) -> Fingerprint {
    loop {
        let b: Vec<bool> = (0..len).map(|_| rng.random::<f64>() < density).collect();
        if b.iter().any(|&v| v) {
            return Fingerprint::from_bits(&b);
        }
    }
}

/// Random surface with uniform outcomes and short fingerprints.
pub fn random_surface(seed: u64, n_x: usize, n_w: usize, bits: usize) -> Arc<LookupSurface> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = (0..n_x).map(|i| ParameterPoint::new(format!("x{i}"), random_fp(&mut rng, bits, 0.3))).collect();
    let tasks = (0..n_w).map(|i| TaskPoint::new(format!("w{i}"), random_fp(&mut rng, bits, 0.3))).collect();
    let values = (0..n_x).map(|_| (0..n_w).map(|_| rng.random::<f64>()).collect()).collect();
    Arc::new(LookupSurface::new(params, tasks, values).unwrap())
}
