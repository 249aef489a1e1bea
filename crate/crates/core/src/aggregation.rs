//! Aggregation functions that turn per-task outcomes into a generality score.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GenboError, Result};
use crate::gp::Standardizer;
use crate::surface::LookupSurface;

/// Default sigmoid sharpness, in standardized outcome units.
pub const DEFAULT_TEMPERATURE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AggregationSpec {
    Mean,
    /// Count of tasks above `threshold` (outcome units). Acquisition uses a
    /// sigmoid of width `temperature`; evaluation uses the hard count.
    Threshold {
        threshold: f64,
        #[serde(default = "default_temperature")]
        temperature: f64,
    },
    /// Negative mean squared distance to per-task targets (outcome units, keyed by task id).
    Mse { optima: BTreeMap<String, f64> },
    Min,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}

/// Threshold defaults of the four reaction benchmarks, in each dataset's native units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkPreset {
    /// Conversion in percent.
    PdCoupling,
    /// ΔΔG‡ in kcal/mol.
    NsAcetal,
    /// Yield in percent.
    Borylation,
    /// Yield in percent.
    Deoxyfluorination,
}

impl BenchmarkPreset {
    pub fn threshold(self) -> f64 {
        match self {
            BenchmarkPreset::PdCoupling => 7.5,
            BenchmarkPreset::NsAcetal => 2.0,
            BenchmarkPreset::Borylation | BenchmarkPreset::Deoxyfluorination => 90.0,
        }
    }

    pub fn threshold_aggregation(self) -> AggregationSpec {
        AggregationSpec::threshold(self.threshold())
    }
}

impl AggregationSpec {
    pub fn mean() -> Self {
        AggregationSpec::Mean
    }

    pub fn min() -> Self {
        AggregationSpec::Min
    }

    pub fn threshold(threshold: f64) -> Self {
        AggregationSpec::Threshold { threshold, temperature: DEFAULT_TEMPERATURE }
    }

    pub fn mse(optima: BTreeMap<String, f64>) -> Self {
        AggregationSpec::Mse { optima }
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregationSpec::Mean => "mean",
            AggregationSpec::Threshold { .. } => "threshold",
            AggregationSpec::Mse { .. } => "mse",
            AggregationSpec::Min => "min",
        }
    }

    pub fn validate_for(&self, surface: &LookupSurface, tasks: &[usize]) -> Result<()> {
        match self {
            AggregationSpec::Threshold { threshold, temperature } => {
                if !threshold.is_finite() {
                    return Err(GenboError::invalid("threshold must be finite"));
                }
                if !(*temperature > 0.0) || !temperature.is_finite() {
                    return Err(GenboError::invalid("temperature must be positive"));
                }
            }
            AggregationSpec::Mse { optima } => {
                for &w in tasks {
                    let id = &surface.tasks()[w].id;
                    match optima.get(id) {
                        Some(v) if v.is_finite() => {}
                        _ => return Err(GenboError::invalid(format!("mse aggregation lacks an optimum for task {id:?}"))),
                    }
                }
            }
            AggregationSpec::Mean | AggregationSpec::Min => {}
        }
        Ok(())
    }

    /// Resolves the spec against an ordered task list, mapping outcome-unit
    /// constants into model units through `scaler`.
    pub fn bind(&self, surface: &LookupSurface, tasks: &[usize], scaler: Standardizer) -> Result<BoundAggregation> {
        self.validate_for(surface, tasks)?;
        let kind = match self {
            AggregationSpec::Mean => Bound::Mean,
            AggregationSpec::Min => Bound::Min,
            AggregationSpec::Threshold { threshold, temperature } => {
                Bound::Sigmoid { threshold: scaler.forward(*threshold), temperature: *temperature }
            }
            AggregationSpec::Mse { optima } => Bound::Mse {
                optima: tasks.iter().map(|&w| scaler.forward(optima[&surface.tasks()[w].id])).collect(),
            },
        };
        Ok(BoundAggregation { kind, n_tasks: tasks.len() })
    }

    /// Binding for raw columns with no unit change; MSE optima are given positionally.
    pub fn bind_columns(&self, n_tasks: usize, mse_optima: Option<&[f64]>) -> Result<BoundAggregation> {
        let kind = match self {
            AggregationSpec::Mean => Bound::Mean,
            AggregationSpec::Min => Bound::Min,
            AggregationSpec::Threshold { threshold, temperature } => {
                if !(*temperature > 0.0) {
                    return Err(GenboError::invalid("temperature must be positive"));
                }
                Bound::Sigmoid { threshold: *threshold, temperature: *temperature }
            }
            AggregationSpec::Mse { .. } => match mse_optima {
                Some(o) if o.len() == n_tasks => Bound::Mse { optima: o.to_vec() },
                _ => return Err(GenboError::invalid("mse aggregation needs one optimum per column")),
            },
        };
        Ok(BoundAggregation { kind, n_tasks })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Bound {
    Mean,
    Min,
    Sigmoid { threshold: f64, temperature: f64 },
    Mse { optima: Vec<f64> },
}

/// An aggregation resolved against a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundAggregation {
    kind: Bound,
    n_tasks: usize,
}

impl BoundAggregation {
    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    pub fn is_mean(&self) -> bool {
        matches!(self.kind, Bound::Mean)
    }

    /// φ of one row of per-task values.
    pub fn aggregate_row(&self, row: impl IntoIterator<Item = f64>) -> f64 {
        match &self.kind {
            Bound::Mean => {
                let (s, n) = row.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                s / n as f64
            }
            Bound::Min => row.into_iter().fold(f64::INFINITY, f64::min),
            Bound::Sigmoid { threshold, temperature } => {
                row.into_iter().map(|v| sigmoid((v - threshold) / temperature)).sum()
            }
            Bound::Mse { optima } => {
                let mut s = 0.0;
                let mut n = 0usize;
                for (v, o) in row.into_iter().zip(optima) {
                    s += (o - v).powi(2);
                    n += 1;
                }
                -s / n as f64
            }
        }
    }

    /// Maps an `M × n_tasks` sample matrix to `M` samples of φ.
    pub fn aggregate_samples(&self, samples: &DMatrix<f64>) -> Result<Vec<f64>> {
        if samples.ncols() != self.n_tasks {
            return Err(GenboError::ColumnMismatch { expected: self.n_tasks, got: samples.ncols() });
        }
        Ok(samples.row_iter().map(|r| self.aggregate_row(r.iter().copied())).collect())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// φ of the true outcomes of condition `x` over `tasks`. The threshold kind counts
/// outcomes strictly above the threshold.
pub fn true_generality(surface: &LookupSurface, x: usize, tasks: &[usize], spec: &AggregationSpec) -> Result<f64> {
    if tasks.is_empty() {
        return Err(GenboError::invalid("generality over an empty task set"));
    }
    if x >= surface.n_parameters() || tasks.iter().any(|&w| w >= surface.n_tasks()) {
        return Err(GenboError::invalid("index outside the surface"));
    }
    let values = tasks.iter().map(|&w| surface.value(x, w));
    Ok(match spec {
        AggregationSpec::Mean => values.sum::<f64>() / tasks.len() as f64,
        AggregationSpec::Min => values.fold(f64::INFINITY, f64::min),
        AggregationSpec::Threshold { threshold, .. } => values.filter(|v| v > threshold).count() as f64,
        AggregationSpec::Mse { optima } => {
            let mut s = 0.0;
            for &w in tasks {
                let id = &surface.tasks()[w].id;
                let o = optima
                    .get(id)
                    .ok_or_else(|| GenboError::invalid(format!("mse aggregation lacks an optimum for task {id:?}")))?;
                s += (o - surface.value(x, w)).powi(2);
            }
            -s / tasks.len() as f64
        }
    })
}
