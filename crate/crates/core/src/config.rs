//! JSON run configuration with dotted-path overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::AggregationSpec;
use crate::benchmarks::{split_tasks, SplitMethod, SplitSpec, SweepConfig};
use crate::campaign::DEFAULT_N_INIT;
use crate::error::{GenboError, Result};
use crate::model::GeneralityProblem;
use crate::strategy::{StrategySpec, WMode};
use crate::surface::{load_surface, synthetic_surface, LookupSurface, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSource {
    /// CSV file; relative paths resolve against the config file's directory.
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainSelection {
    /// Explicit training task ids; every other task is held out.
    Ids(Vec<String>),
    /// `n_train` tasks chosen from all tasks by `method`; the rest are held out.
    Split { n_train: usize, method: SplitMethod, #[serde(default)] seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub sizes: Vec<usize>,
    #[serde(default = "default_splits")]
    pub n_splits: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed0: u64,
}

fn default_splits() -> usize {
    30
}
fn default_methods() -> Vec<String> {
    SplitMethod::ALL.iter().map(|m| m.name().to_string()).collect()
}
fn default_test_fraction() -> f64 {
    0.5
}
fn default_n_init() -> usize {
    DEFAULT_N_INIT
}
fn default_w_mode() -> String {
    "adaptive".to_string()
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub surface: SurfaceSource,
    pub aggregation: AggregationSpec,
    #[serde(default)]
    pub strategies: Vec<String>,
    /// Explicit seeds; when absent, `seed0 .. seed0 + n_seeds`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub seed0: u64,
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    /// All tasks when absent.
    #[serde(default)]
    pub train_tasks: Option<TrainSelection>,
    /// Applied to every strategy that does not carry its own `+mode` suffix.
    #[serde(default = "default_w_mode")]
    pub w_mode: String,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
}

fn default_n_seeds() -> usize {
    30
}
fn default_budget() -> usize {
    40
}

impl CampaignConfig {
    /// Parses config text after applying `key=value` overrides. Values are read
    /// as JSON when they parse, else as strings.
    pub fn parse(text: &str, origin: &Path, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            // straight from text so errors carry line and column
            return serde_json::from_str(text).map_err(|e| parse_error(origin, e));
        }
        let mut value: Value = serde_json::from_str(text).map_err(|e| parse_error(origin, e))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        serde_json::from_value(value).map_err(|e| parse_error(origin, e))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GenboError::io(path, e))?;
        let mut cfg = CampaignConfig::parse(&text, path, overrides)?;
        if let SurfaceSource::Path(p) = &mut cfg.surface {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.n_seeds as u64).map(|i| self.seed0 + i).collect(),
        }
    }

    /// Strategies with the config-level w-mode applied where none is given.
    pub fn strategy_specs(&self) -> Result<Vec<StrategySpec>> {
        let default_mode: WMode = self.w_mode.parse()?;
        self.strategies
            .iter()
            .map(|name| {
                let spec: StrategySpec = name.parse()?;
                Ok(if name.contains('+') { spec } else { spec.with_w_mode(default_mode.clone()) })
            })
            .collect()
    }

    /// Checks everything that does not need the surface.
    pub fn validate_run(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(GenboError::Config("at least one strategy is required".into()));
        }
        if self.seeds().is_empty() {
            return Err(GenboError::Config("at least one seed is required".into()));
        }
        if self.n_init == 0 {
            return Err(GenboError::Config("n_init must be at least 1".into()));
        }
        if self.budget <= self.n_init {
            return Err(GenboError::Config(format!(
                "budget ({}) must exceed n_init ({})",
                self.budget, self.n_init
            )));
        }
        if self.jobs == Some(0) {
            return Err(GenboError::Config("jobs must be positive".into()));
        }
        self.strategy_specs()?;
        Ok(())
    }

    pub fn load_surface(&self) -> Result<LookupSurface> {
        match &self.surface {
            SurfaceSource::Path(p) => load_surface(p),
            SurfaceSource::Synthetic(spec) => synthetic_surface(spec),
        }
    }

    pub fn problem(&self, surface: Arc<LookupSurface>) -> Result<GeneralityProblem> {
        let (train, test) = match &self.train_tasks {
            None => ((0..surface.n_tasks()).collect(), Vec::new()),
            Some(TrainSelection::Ids(ids)) => {
                let train = ids.iter().map(|id| surface.task_index(id)).collect::<Result<Vec<_>>>()?;
                let test = (0..surface.n_tasks()).filter(|w| !train.contains(w)).collect();
                (train, test)
            }
            Some(TrainSelection::Split { n_train, method, seed }) => {
                let pool: Vec<usize> = (0..surface.n_tasks()).collect();
                let (mut train, test) =
                    split_tasks(&surface, &pool, SplitSpec { n_train: *n_train, method: *method, seed: *seed })?;
                train.sort_unstable();
                (train, test)
            }
        };
        GeneralityProblem::new(surface, train, test, self.aggregation.clone(), self.budget)
    }

    pub fn sweep(&self) -> Result<SweepConfig> {
        let a = self
            .analysis
            .as_ref()
            .ok_or_else(|| GenboError::Config("missing `analysis` section".into()))?;
        let methods = a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<SplitMethod>>>()?;
        Ok(SweepConfig {
            sizes: a.sizes.clone(),
            n_splits: a.n_splits,
            methods,
            aggregation: self.aggregation.clone(),
            test_fraction: a.test_fraction,
            seed0: a.seed0,
        })
    }
}

fn parse_error(origin: &Path, e: serde_json::Error) -> GenboError {
    GenboError::Parse { path: origin.to_path_buf(), message: e.to_string() }
}

/// Sets `a.b.c=value` in a JSON tree, creating objects along the way.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| GenboError::Config(format!("override {assignment:?} is not of the form key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(GenboError::Config(format!("override key {key:?} has an empty segment")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(GenboError::Config(format!("override {key:?} descends into a non-object")));
        }
        node = node
            .as_object_mut()
            .expect("checked above")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(GenboError::Config(format!("override {key:?} descends into a non-object"))),
    }
}
