mod common;

use std::sync::Arc;

use common::{random_surface, DenseGp};
use genbo::fingerprint::{tanimoto_kernel, Fingerprint};
use genbo::gp::{GpModel, Pair, PairSpace};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn fitted(seed: u64, n: usize) -> (Arc<genbo::LookupSurface>, GpModel, DenseGp) {
    let s = random_surface(seed, 6, 5, 40);
    let inputs: Vec<Pair> = (0..n).map(|i| ((i * 7 + seed as usize) % 6, (i * 3 + 1) % 5)).collect();
    let ys: Vec<f64> = inputs.iter().map(|&(x, w)| s.value(x, w)).collect();
    let m = GpModel::fit(Arc::new(PairSpace::from_surface(&s).unwrap()), inputs.clone(), &ys).unwrap();
    let oracle = DenseGp::from_surface(
        &s,
        inputs,
        m.targets().iter().copied().collect(),
        m.params().outputscale,
        m.params().noise + m.jitter(),
    );
    (s, m, oracle)
}

#[test]
fn five_observations_match_dense_oracle() {
    for seed in 0..10 {
        let (_, m, oracle) = fitted(seed, 5);
        for queries in [vec![(5, 4), (0, 2), (3, 3), (1, 0)], vec![(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (5, 0)]] {
            let post = m.posterior(&queries).unwrap();
            let (mean, cov) = oracle.posterior(&queries);
            for i in 0..queries.len() {
                assert!((post.mean[i] - mean[i]).abs() < 1e-8);
                for j in 0..queries.len() {
                    assert!((post.cov[(i, j)] - cov[i][j]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn sample_marginals_are_consistent() {
    let mut good = 0;
    let mut total = 0;
    for seed in 0..40 {
        let (_, m, _) = fitted(seed, 8);
        let queries = [(seed as usize % 6, 0), (1, 2), (4, 4)];
        let post = m.posterior(&queries).unwrap();
        let s = m.sample_posterior(&queries, 4096, seed).unwrap();
        for (j, _) in queries.iter().enumerate() {
            let col: Vec<f64> = s.values.column(j).iter().copied().collect();
            let bound = 5.0 * (post.cov[(j, j)] / 4096.0).sqrt();
            total += 1;
            if (common::sample_mean(&col) - post.mean[j]).abs() <= bound + 1e-12 {
                good += 1;
            }
        }
    }
    assert!(good as f64 >= 0.95 * total as f64, "{good}/{total}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_matrices_are_psd(fps in prop::collection::vec(prop::collection::vec(any::<bool>(), 32), 1..50)) {
        let fps: Vec<Fingerprint> = fps.iter().map(|b| Fingerprint::from_bits(b)).collect();
        let n = fps.len();
        let g = DMatrix::from_fn(n, n, |i, j| tanimoto_kernel(&fps[i], &fps[j], 1.0).unwrap());
        let min = SymmetricEigen::new(g).eigenvalues.min();
        prop_assert!(min >= -1e-8, "min eigenvalue {}", min);
    }

    #[test]
    fn kernel_is_symmetric(a in prop::collection::vec(any::<bool>(), 64), b in prop::collection::vec(any::<bool>(), 64), s in 1e-3f64..1e3) {
        let (fa, fb) = (Fingerprint::from_bits(&a), Fingerprint::from_bits(&b));
        let k = tanimoto_kernel(&fa, &fb, s).unwrap();
        prop_assert_eq!(k, tanimoto_kernel(&fb, &fa, s).unwrap());
        prop_assert!((0.0..=s).contains(&k));
    }
}
