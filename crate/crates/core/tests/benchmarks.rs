mod common;

use std::sync::Arc;

use common::random_surface;
use genbo::aggregation::AggregationSpec;
use genbo::benchmarks::{
    generality_table, grid_search_optimum, normalized_generality_score, split_tasks, transferability_sweep, SplitMethod,
    SplitSpec, SweepConfig,
};
use genbo::fingerprint::Fingerprint;
use genbo::model::{ParameterPoint, TaskPoint};
use genbo::surface::{synthetic_surface, LookupSurface, SyntheticSpec};
use proptest::prelude::*;

#[test]
fn synthetic_optimum_is_the_planted_condition() {
    for seed in 0..10 {
        let spec = SyntheticSpec::new(seed, 12, 8);
        let s = synthetic_surface(&spec).unwrap();
        let all: Vec<usize> = (0..8).collect();
        assert_eq!(grid_search_optimum(&s, &all, &AggregationSpec::mean()).unwrap().0, spec.dominant().unwrap());
    }
}

#[test]
fn synthetic_resolve_matches_replay() {
    let a = synthetic_surface(&SyntheticSpec::new(7, 9, 5)).unwrap();
    let b = synthetic_surface(&SyntheticSpec::new(7, 9, 5)).unwrap();
    for x in a.parameters() {
        for w in a.tasks() {
            assert_eq!(a.resolve(&x.id, &w.id).unwrap().to_bits(), b.resolve(&x.id, &w.id).unwrap().to_bits());
        }
    }
}

/// Condition 0 is best on every task, so every split agrees on it.
fn aligned_surface() -> LookupSurface {
    let base = random_surface(12, 5, 8, 24);
    let values = (0..5).map(|x| (0..8).map(|w| if x == 0 { 2.0 } else { base.value(x, w) }).collect()).collect();
    LookupSurface::new(base.parameters().to_vec(), base.tasks().to_vec(), values).unwrap()
}

#[test]
fn aligned_optimum_scores_one() {
    let s = aligned_surface();
    let mut cfg = SweepConfig::new(vec![3], 10, SplitMethod::ALL.to_vec(), AggregationSpec::mean());
    cfg.test_fraction = 0.5;
    let r = transferability_sweep(&s, &cfg).unwrap();
    assert_eq!(r.rows.len(), 30);
    assert!(r.rows.iter().all(|row| row.score == 1.0));
}

#[test]
fn sweep_rejects_oversized_train_sets() {
    let s = aligned_surface();
    let cfg = SweepConfig::new(vec![1, 4], 3, vec![SplitMethod::Random], AggregationSpec::mean());
    assert!(transferability_sweep(&s, &cfg).is_err());
}

#[test]
fn sweep_table_is_reproducible() {
    let s = synthetic_surface(&SyntheticSpec::new(3, 10, 10)).unwrap();
    let cfg = SweepConfig::new(vec![1, 2, 4], 1, SplitMethod::ALL.to_vec(), AggregationSpec::mean());
    let write = || {
        let mut buf = Vec::new();
        transferability_sweep(&s, &cfg).unwrap().write_table(&mut buf).unwrap();
        buf
    };
    let a = write();
    assert_eq!(a, write());
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,n_train,split_seed,score,rho_per_method\n"));
    // 3 sizes × 3 methods, plus one summary row per method
    assert_eq!(text.lines().count(), 1 + 9 + 3);
}

fn fp_strategy(len: usize) -> impl Strategy<Value = Vec<bool>> {
    prop::collection::vec(any::<bool>(), len)
}

fn surface_strategy() -> impl Strategy<Value = LookupSurface> {
    (2usize..6, 3usize..7)
        .prop_flat_map(|(nx, nw)| {
            (
                prop::collection::vec(fp_strategy(12), nx),
                prop::collection::vec(fp_strategy(12), nw),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, nw), nx),
            )
        })
        .prop_map(|(xf, wf, values)| {
            let params = xf.iter().enumerate().map(|(i, b)| ParameterPoint::new(format!("x{i}"), Fingerprint::from_bits(b))).collect();
            let tasks = wf.iter().enumerate().map(|(i, b)| TaskPoint::new(format!("w{i}"), Fingerprint::from_bits(b))).collect();
            LookupSurface::new(params, tasks, values).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_score_is_affine_invariant(s in surface_strategy(), a in 0.01f64..20.0, b in -10.0f64..10.0) {
        let t = s.map_values(|y| a * y + b);
        let tasks: Vec<usize> = (0..s.n_tasks()).collect();
        for agg in [AggregationSpec::mean(), AggregationSpec::min()] {
            for x in 0..s.n_parameters() {
                let u = normalized_generality_score(&s, x, &tasks, &agg).unwrap();
                let v = normalized_generality_score(&t, x, &tasks, &agg).unwrap();
                prop_assert!((u - v).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&u));
            }
        }
    }

    #[test]
    fn grid_optimum_dominates(s in surface_strategy()) {
        let tasks: Vec<usize> = (0..s.n_tasks()).collect();
        for agg in [AggregationSpec::mean(), AggregationSpec::min(), AggregationSpec::threshold(0.5)] {
            let (x, v) = grid_search_optimum(&s, &tasks, &agg).unwrap();
            let table = generality_table(&s, &tasks, &agg).unwrap();
            prop_assert!(table.iter().all(|&u| u <= v));
            prop_assert!(table[..x].iter().all(|&u| u < v));
        }
    }

    #[test]
    fn splits_partition_the_pool(s in surface_strategy(), seed in 0u64..1000, frac in 0.0f64..1.0) {
        let pool: Vec<usize> = (0..s.n_tasks()).collect();
        let n_train = 1 + ((pool.len() - 2) as f64 * frac) as usize;
        for method in SplitMethod::ALL {
            let (train, test) = split_tasks(&s, &pool, SplitSpec { n_train, method, seed }).unwrap();
            prop_assert_eq!(train.len(), n_train);
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, pool.clone());
        }
    }
}

#[test]
fn planted_surface_transfers() {
    let s = Arc::new(synthetic_surface(&SyntheticSpec::new(0, 24, 24)).unwrap());
    let cfg = SweepConfig::new(vec![1, 2, 4, 6], 30, vec![SplitMethod::Random], AggregationSpec::mean());
    let r = transferability_sweep(&s, &cfg).unwrap();
    assert!(r.rho_for(SplitMethod::Random).unwrap() > 0.0);
}
