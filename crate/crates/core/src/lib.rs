//! Generality-oriented Bayesian optimization on discrete benchmark surfaces.
//!
//! A condition `x` is scored by an aggregation `φ` of its outcomes `f(x, w)`
//! over a family of tasks `w`, while each experiment observes a single
//! `(x, w)` cell. The crate provides the Tanimoto-kernel GP surrogate,
//! sample-average acquisition functions, sequential and joint lookahead
//! policies, baselines, the campaign loop and the grid-search analyses.

pub mod acquisition;
pub mod aggregation;
pub mod benchmarks;
pub mod campaign;
pub mod cli;
pub mod config;
pub mod error;
pub mod fingerprint;
pub mod gp;
pub mod linalg;
pub mod model;
pub mod stats;
pub mod strategy;
pub mod surface;

pub use aggregation::{AggregationSpec, BenchmarkPreset};
pub use campaign::{run_campaign, Benchmark, Trajectory};
pub use error::{GenboError, Result};
pub use fingerprint::Fingerprint;
pub use gp::{GpModel, PairSpace};
pub use model::{GeneralityProblem, Observation, ObservationSet, ParameterPoint, TaskPoint};
pub use strategy::{StrategySpec, WMode};
pub use surface::{load_surface, synthetic_surface, LookupSurface, SyntheticSpec};
