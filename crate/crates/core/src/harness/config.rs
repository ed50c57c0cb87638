//! Experiment configuration: a single JSON document, unknown keys rejected.
//!
//! ```json
//! {
//!   "model": "iid2",
//!   "density": { "kind": "uniform-simplex" },
//!   "n_grid": [4, 8, 16],
//!   "schedule": { "c": 1.0, "beta": 1.2 },
//!   "trials": 200,
//!   "k": "last",
//!   "metrics": ["mi", "accuracy"],
//!   "seed": 7,
//!   "out_path": "results.csv"
//! }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::anonymization::ObservationSchedule;
use crate::error::{Error, Result};
use crate::markov::{validate_chain, DependencyMap, FreeParamVector, MobilityGraph};
use crate::metrics::{MetricSet, ModelSpec};
use crate::mobility::{DensityKind, ProfileDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Iid2,
    Iidr,
    Markov,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Iid2 => "iid2",
            ModelKind::Iidr => "iidr",
            ModelKind::Markov => "markov",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityConfig {
    #[default]
    UniformSimplex,
    BoundedMixture { uniform_weight: f64, concentration: f64 },
}

impl From<DensityConfig> for DensityKind {
    fn from(d: DensityConfig) -> Self {
        match d {
            DensityConfig::UniformSimplex => DensityKind::UniformSimplex,
            DensityConfig::BoundedMixture {
                uniform_weight,
                concentration,
            } => DensityKind::BoundedMixture {
                uniform_weight,
                concentration,
            },
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    #[serde(default = "one")]
    pub c: f64,
    pub beta: f64,
}

/// `beta = tau - alpha` with `tau` the model's threshold exponent.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSchedule {
    #[serde(default = "one")]
    pub c: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Beta(BetaSchedule),
    Threshold(ThresholdSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Last {
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum TimeIndexConfig {
    At(usize),
    Named(Last),
}

impl Default for TimeIndexConfig {
    fn default() -> Self {
        TimeIndexConfig::Named(Last::Last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Mi,
    Accuracy,
    Weights,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub r: Option<usize>,
    #[serde(default)]
    pub graph_path: Option<PathBuf>,
    #[serde(default)]
    pub density: DensityConfig,
    pub n_grid: Vec<usize>,
    pub schedule: ScheduleConfig,
    pub trials: usize,
    #[serde(default)]
    pub k: TimeIndexConfig,
    pub metrics: Vec<MetricName>,
    pub seed: u64,
    #[serde(default)]
    pub out_path: Option<PathBuf>,
}

/// A validated configuration with every derived quantity filled in.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub model_kind: ModelKind,
    pub model: ModelSpec,
    pub density: DensityKind,
    pub n_grid: Vec<usize>,
    pub schedule: ObservationSchedule,
    pub trials: usize,
    pub k: Option<usize>,
    /// Metrics in a canonical order: mi, accuracy, weights.
    pub metrics: MetricSet,
    pub seed: u64,
    pub out_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config; a relative `graph_path` is taken relative to the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(g), Some(dir)) = (&cfg.graph_path, path.parent()) {
            if g.is_relative() {
                cfg.graph_path = Some(dir.join(g));
            }
        }
        Ok(cfg)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let cfg_err = |msg: String| Error::Config(msg);
        if self.n_grid.is_empty() {
            return Err(cfg_err("n_grid must not be empty".into()));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg_err(format!(
                "n_grid must be strictly ascending positive counts, got {:?}",
                self.n_grid
            )));
        }
        if self.trials == 0 {
            return Err(cfg_err("trials must be at least 1".into()));
        }
        if self.metrics.is_empty() {
            return Err(cfg_err("metrics must name at least one of mi, accuracy, weights".into()));
        }
        if self.metrics.contains(&MetricName::Mi) && self.trials < 2 {
            return Err(cfg_err("the mi metric needs at least 2 trials".into()));
        }

        let model = match self.model {
            ModelKind::Iid2 => {
                if self.r.is_some_and(|r| r != 2) {
                    return Err(cfg_err("model iid2 has r = 2".into()));
                }
                ModelSpec::Iid { r: 2 }
            }
            ModelKind::Iidr => match self.r {
                Some(r) if r >= 2 => ModelSpec::Iid { r },
                _ => return Err(cfg_err("model iidr needs r >= 2".into())),
            },
            ModelKind::Markov => {
                let path = self
                    .graph_path
                    .as_ref()
                    .ok_or_else(|| cfg_err("model markov needs graph_path".into()))?;
                let graph = MobilityGraph::load(path, self.r)
                    .map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
                ModelSpec::Markov(Arc::new(check_graph(graph)?))
            }
        };
        if self.graph_path.is_some() && self.model != ModelKind::Markov {
            return Err(cfg_err("graph_path is only valid for model markov".into()));
        }

        let density: DensityKind = self.density.into();
        ProfileDensity::new(density, model.r()).map_err(|e| cfg_err(e.to_string()))?;

        let tau = model.descriptor().threshold_exponent()?;
        let schedule = match self.schedule {
            ScheduleConfig::Beta(s) => ObservationSchedule::new(s.c, s.beta),
            ScheduleConfig::Threshold(s) => ObservationSchedule::new(s.c, tau - s.alpha),
        }
        .map_err(|e| cfg_err(e.to_string()))?;

        let k = match self.k {
            TimeIndexConfig::Named(Last::Last) => None,
            TimeIndexConfig::At(k) => {
                let m_min = schedule.observations(self.n_grid[0]);
                if k == 0 || k > m_min {
                    return Err(cfg_err(format!(
                        "k = {k} outside 1..={m_min} (observations at n = {})",
                        self.n_grid[0]
                    )));
                }
                Some(k)
            }
        };

        Ok(ResolvedConfig {
            model_kind: self.model,
            model,
            density,
            n_grid: self.n_grid.clone(),
            schedule,
            trials: self.trials,
            k,
            metrics: MetricSet {
                mi: self.metrics.contains(&MetricName::Mi),
                accuracy: self.metrics.contains(&MetricName::Accuracy),
                weights: self.metrics.contains(&MetricName::Weights),
            },
            seed: self.seed,
            out_path: self.out_path.clone(),
        })
    }
}

/// Requires at least one free parameter and a graph whose chains are
/// irreducible and aperiodic (checked on the chain with uniform rows, which
/// has exactly the graph's support).
pub fn check_graph(graph: MobilityGraph) -> Result<DependencyMap> {
    if graph.degrees_of_freedom() == 0 {
        return Err(Error::Config(
            "graph has no free parameters (d = 0); the threshold is undefined".into(),
        ));
    }
    let map = DependencyMap::new(graph);
    let uniform = FreeParamVector(
        map.free_edges()
            .iter()
            .map(|&(i, _)| 1.0 / map.graph().out_degree(i) as f64)
            .collect(),
    );
    let report = validate_chain(&map.expand(&uniform)?);
    if !report.irreducible {
        return Err(Error::Config("graph is not strongly connected".into()));
    }
    if !report.aperiodic {
        return Err(Error::Config(format!(
            "graph is periodic with period {}",
            report.period
        )));
    }
    Ok(map)
}
