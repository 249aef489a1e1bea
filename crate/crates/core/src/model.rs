//! Shared domain types: points, observations and the generality problem.

use std::collections::HashSet;
use std::sync::Arc;

use crate::aggregation::AggregationSpec;
use crate::error::{GenboError, Result};
use crate::fingerprint::Fingerprint;
use crate::surface::LookupSurface;

/// A candidate parameter set (a reaction condition). `features` is the
/// concatenation of the component fingerprints in declared component order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint {
    pub id: String,
    pub features: Fingerprint,
    pub component_ids: Vec<String>,
}

impl ParameterPoint {
    pub fn new(id: impl Into<String>, features: Fingerprint) -> Self {
        ParameterPoint { id: id.into(), features, component_ids: Vec::new() }
    }

    /// Builds a point from `(component id, fingerprint)` pairs, concatenating in order.
    pub fn from_components(id: impl Into<String>, components: &[(&str, &Fingerprint)]) -> Self {
        let mut features = Fingerprint::zeros(0);
        let mut component_ids = Vec::with_capacity(components.len());
        for (cid, fp) in components {
            features = features.concat(fp);
            component_ids.push(cid.to_string());
        }
        ParameterPoint { id: id.into(), features, component_ids }
    }
}

/// A task (substrate).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskPoint {
    pub id: String,
    pub features: Fingerprint,
}

impl TaskPoint {
    pub fn new(id: impl Into<String>, features: Fingerprint) -> Self {
        TaskPoint { id: id.into(), features }
    }
}

/// One oracle evaluation. `x` and `w` index the surface's parameter and task lists.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x: usize,
    pub w: usize,
    pub y: f64,
}

/// Append-only record of evaluations. Repeated `(x, w)` pairs are legal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSet {
    observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        if !obs.y.is_finite() {
            return Err(GenboError::invalid(format!("non-finite outcome {}", obs.y)));
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    pub fn as_slice(&self) -> &[Observation] {
        &self.observations
    }

    pub fn inputs(&self) -> Vec<(usize, usize)> {
        self.observations.iter().map(|o| (o.x, o.w)).collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.y).collect()
    }

    /// Distinct parameter indices seen so far, in first-seen order.
    pub fn evaluated_parameters(&self) -> Vec<usize> {
        let mut seen = HashSet::new();
        self.observations.iter().filter(|o| seen.insert(o.x)).map(|o| o.x).collect()
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a Observation;
    type IntoIter = std::slice::Iter<'a, Observation>;

    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

/// The optimization problem: find the condition that maximizes the aggregated
/// outcome over `train_tasks`, within `budget` oracle evaluations.
#[derive(Debug, Clone)]
pub struct GeneralityProblem {
    pub surface: Arc<LookupSurface>,
    pub train_tasks: Vec<usize>,
    pub test_tasks: Vec<usize>,
    pub aggregation: AggregationSpec,
    pub budget: usize,
}

impl GeneralityProblem {
    pub fn new(
        surface: Arc<LookupSurface>,
        train_tasks: Vec<usize>,
        test_tasks: Vec<usize>,
        aggregation: AggregationSpec,
        budget: usize,
    ) -> Result<Self> {
        if budget == 0 {
            return Err(GenboError::invalid("budget must be positive"));
        }
        if train_tasks.is_empty() {
            return Err(GenboError::invalid("train task set is empty"));
        }
        let n_w = surface.n_tasks();
        let mut seen = HashSet::new();
        for &w in &train_tasks {
            if w >= n_w {
                return Err(GenboError::invalid(format!("task index {w} out of range")));
            }
            if !seen.insert(w) {
                return Err(GenboError::DuplicateId(surface.tasks()[w].id.clone()));
            }
        }
        for &w in &test_tasks {
            if w >= n_w {
                return Err(GenboError::invalid(format!("task index {w} out of range")));
            }
            if seen.contains(&w) {
                return Err(GenboError::OverlappingTasks(surface.tasks()[w].id.clone()));
            }
        }
        aggregation.validate_for(&surface, &train_tasks)?;
        Ok(GeneralityProblem { surface, train_tasks, test_tasks, aggregation, budget })
    }

    /// Problem over every task of the surface, no test split.
    pub fn full(surface: Arc<LookupSurface>, aggregation: AggregationSpec, budget: usize) -> Result<Self> {
        let train = (0..surface.n_tasks()).collect();
        GeneralityProblem::new(surface, train, Vec::new(), aggregation, budget)
    }

    pub fn from_ids(
        surface: Arc<LookupSurface>,
        train_ids: &[String],
        test_ids: &[String],
        aggregation: AggregationSpec,
        budget: usize,
    ) -> Result<Self> {
        let train = train_ids.iter().map(|id| surface.task_index(id)).collect::<Result<Vec<_>>>()?;
        let test = test_ids.iter().map(|id| surface.task_index(id)).collect::<Result<Vec<_>>>()?;
        GeneralityProblem::new(surface, train, test, aggregation, budget)
    }

    pub fn n_parameters(&self) -> usize {
        self.surface.n_parameters()
    }
}
