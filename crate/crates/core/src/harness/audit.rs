//! Pseudonym-lifetime audit of a trace dataset.
//!
//! For a deployment with `n_effective` users the threshold exponent `tau`
//! says how many observations one pseudonym may accumulate before the
//! anonymized data starts to identify users; the audit recommends
//! `m* = round(n_effective^(tau - alpha_margin))` and measures how well a MAP
//! adversary who knows the fitted laws de-anonymizes the dataset's own users
//! at the dataset's observation count.

use std::fmt;
use std::sync::Arc;

use crate::anonymization::ModelDescriptor;
use crate::error::{Error, Result};
use crate::harness::config::check_graph;
use crate::harness::traces::{TraceDataset, TraceModel};
use crate::metrics::{deanonymization_accuracy, Cell, ModelSpec, ProfileMode, UserLaw};
use crate::mobility::DensityKind;

pub const DEFAULT_AUDIT_TRIALS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub model: String,
    pub r: usize,
    /// Free transition parameters (Markov only).
    pub d: Option<usize>,
    pub tau: f64,
    pub n_effective: usize,
    pub alpha_margin: f64,
    pub m_star: usize,
    pub users: usize,
    /// Observations per user used for the simulation (the shortest trace).
    pub observations: usize,
    pub pi1_accuracy: f64,
    pub trials: usize,
    pub labels: Vec<String>,
}

pub fn recommended_observations(n_effective: usize, tau: f64, alpha_margin: f64) -> usize {
    ((n_effective as f64).powf(tau - alpha_margin) + 0.5).floor() as usize
}

pub fn audit(
    dataset: &TraceDataset,
    laws: &[UserLaw],
    model: &TraceModel,
    n_effective: usize,
    alpha_margin: f64,
    trials: usize,
    seed: u64,
) -> Result<AuditReport> {
    if !(alpha_margin > 0.0 && alpha_margin.is_finite()) {
        return Err(Error::Config(format!("alpha margin must be positive, got {alpha_margin}")));
    }
    if n_effective == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if laws.len() != dataset.users.len() {
        return Err(Error::LengthMismatch(format!(
            "{} laws for {} users",
            laws.len(),
            dataset.users.len()
        )));
    }
    let (spec, name, d) = match model {
        TraceModel::Iid { .. } => (ModelSpec::Iid { r: dataset.r() }, "iid", None),
        TraceModel::Markov(g) => {
            let d = g.degrees_of_freedom();
            (ModelSpec::Markov(Arc::new(check_graph(g.clone())?)), "markov", Some(d))
        }
    };
    let tau = match &spec {
        ModelSpec::Iid { r } => ModelDescriptor::Iid { r: *r },
        ModelSpec::Markov(map) => ModelDescriptor::markov(map.graph()),
    }
    .threshold_exponent()?;

    let observations = dataset.min_len();
    if observations == 0 {
        return Err(Error::Config("dataset has an empty trace".into()));
    }
    let cell = Cell {
        model: spec,
        density: DensityKind::UniformSimplex,
        n: laws.len(),
        m: observations,
        k: None,
        mode: ProfileMode::Fixed(laws.to_vec()),
        index: 0,
    };
    let acc = deanonymization_accuracy(&cell, trials, seed)?;
    Ok(AuditReport {
        model: name.to_string(),
        r: dataset.r(),
        d,
        tau,
        n_effective,
        alpha_margin,
        m_star: recommended_observations(n_effective, tau, alpha_margin),
        users: laws.len(),
        observations,
        pi1_accuracy: acc.pi1_accuracy,
        trials,
        labels: dataset.labels.clone(),
    })
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# locpriv audit")?;
        writeln!(f, "# states are numbered from 1; state -> location label:")?;
        for (s, label) in self.labels.iter().enumerate() {
            writeln!(f, "#   {} -> {}", s + 1, label)?;
        }
        writeln!(f, "model: {}", self.model)?;
        writeln!(f, "r: {}", self.r)?;
        if let Some(d) = self.d {
            writeln!(f, "d: {d}")?;
        }
        writeln!(f, "threshold_exponent: {}", self.tau)?;
        writeln!(f, "n_effective: {}", self.n_effective)?;
        writeln!(f, "alpha_margin: {}", self.alpha_margin)?;
        writeln!(f, "max_observations_per_pseudonym: {}", self.m_star)?;
        writeln!(f, "dataset_users: {}", self.users)?;
        writeln!(f, "dataset_observations: {}", self.observations)?;
        writeln!(f, "simulated_pi1_accuracy: {}", self.pi1_accuracy)?;
        writeln!(f, "simulation_trials: {}", self.trials)
    }
}
