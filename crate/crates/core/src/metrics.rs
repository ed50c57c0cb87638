//! Privacy metrics: the mutual information between a user's location and the
//! anonymized observations, the adversary's location posterior, and MAP
//! de-anonymization accuracy.
//!
//! All entropies and informations are in bits.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::adversary::{
    count_stats, map_assignment, posterior_pi1, transition_stats, AssignmentPosterior,
    LikelihoodMatrix, PERMANENT_FEASIBILITY_BOUND,
};
use crate::anonymization::{anonymize, sample_permutation, ModelDescriptor, ObservationMatrix, Permutation};
use crate::error::{Error, Result};
use crate::markov::{sample_trajectory_markov, DependencyMap, TransitionMatrix};
use crate::mobility::{sample_trajectory_iid, DensityKind, IidProfile, StateId, Trajectory};
use crate::rng::{substream, Stream, SHARED_CELL};

/// Shannon entropy in bits with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidParams(format!("negative probability {v}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParams(format!("probabilities sum to {total}")));
    }
    Ok(p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.log2()).sum())
}

/// `P(X_1(k) = x | Y) = sum_j W_j 1[Y_j(k) = x]` for 1-based `k`.
pub fn conditional_location_distribution(
    y: &ObservationMatrix,
    post: &AssignmentPosterior,
    k: usize,
    r: usize,
) -> Result<Vec<f64>> {
    if k == 0 || k > y.m() {
        return Err(Error::OutOfRange(format!(
            "time index {k} outside 1..={}",
            y.m()
        )));
    }
    if post.weights.len() != y.n() {
        return Err(Error::LengthMismatch(format!(
            "{} weights for {} pseudonyms",
            post.weights.len(),
            y.n()
        )));
    }
    let mut dist = vec![0.0; r];
    for (j, &w) in post.weights.iter().enumerate() {
        dist[y.at(k, j).index()] += w;
    }
    Ok(dist)
}

/// Mobility law of one user.
#[derive(Debug, Clone, PartialEq)]
pub enum UserLaw {
    Iid(IidProfile),
    Markov(TransitionMatrix),
}

impl UserLaw {
    pub fn sample_trajectory<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Trajectory {
        match self {
            UserLaw::Iid(p) => sample_trajectory_iid(p, m, rng),
            UserLaw::Markov(t) => sample_trajectory_markov(t, m, rng),
        }
    }
}

/// Exact law of `X(k)` (1-based `k`). Markov users start in state 0, so the
/// law is `e_0 T^(k-1)`.
pub fn marginal_location_distribution(law: &UserLaw, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::OutOfRange("time indices start at 1".into()));
    }
    Ok(match law {
        UserLaw::Iid(p) => p.probs().to_vec(),
        UserLaw::Markov(t) => {
            let mut dist = vec![0.0; t.r()];
            dist[0] = 1.0;
            for _ in 1..k {
                dist = t.step(&dist);
            }
            dist
        }
    })
}

/// Mobility model shared by the population.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Iid { r: usize },
    Markov(Arc<DependencyMap>),
}

impl ModelSpec {
    pub fn r(&self) -> usize {
        match self {
            ModelSpec::Iid { r } => *r,
            ModelSpec::Markov(map) => map.graph().r(),
        }
    }

    pub fn descriptor(&self) -> ModelDescriptor {
        match self {
            ModelSpec::Iid { r } => ModelDescriptor::Iid { r: *r },
            ModelSpec::Markov(map) => ModelDescriptor::markov(map.graph()),
        }
    }

    /// One draw from the prior: a profile uniform (or mixture) on the simplex
    /// for i.i.d. users, per-row simplex draws for Markov users.
    pub fn sample_law<R: Rng + ?Sized>(&self, density: &DensityKind, rng: &mut R) -> UserLaw {
        match self {
            ModelSpec::Iid { r } => UserLaw::Iid(
                IidProfile::new(density.sample_interior(*r, rng))
                    .expect("interior simplex draw is a valid profile"),
            ),
            ModelSpec::Markov(map) => {
                let params = map.sample_params(density, rng);
                UserLaw::Markov(map.expand(&params).expect("interior draw expands"))
            }
        }
    }

    fn likelihood(&self, laws: &[UserLaw], y: &ObservationMatrix) -> Result<LikelihoodMatrix> {
        match self {
            ModelSpec::Iid { r } => {
                let profiles: Vec<IidProfile> = laws
                    .iter()
                    .map(|l| match l {
                        UserLaw::Iid(p) => Ok(p.clone()),
                        UserLaw::Markov(_) => Err(Error::InvalidParams(
                            "Markov law in an i.i.d. population".into(),
                        )),
                    })
                    .collect::<Result<_>>()?;
                LikelihoodMatrix::iid(&profiles, &count_stats(y, *r))
            }
            ModelSpec::Markov(map) => {
                let chains: Vec<TransitionMatrix> = laws
                    .iter()
                    .map(|l| match l {
                        UserLaw::Markov(t) => Ok(t.clone()),
                        UserLaw::Iid(_) => Err(Error::InvalidParams(
                            "i.i.d. law in a Markov population".into(),
                        )),
                    })
                    .collect::<Result<_>>()?;
                LikelihoodMatrix::markov(&chains, &transition_stats(y, map.graph().r()))
            }
        }
    }
}

/// Where the population's laws come from in each trial.
#[derive(Debug, Clone)]
pub enum ProfileMode {
    /// User 1's law is drawn once per experiment (shared by all cells); users
    /// 2..n are redrawn from the prior in every trial.
    ResampleOthers,
    /// The whole population is fixed.
    Fixed(Vec<UserLaw>),
}

/// One `(model, n, m)` point of an experiment.
#[derive(Debug, Clone)]
pub struct Cell {
    pub model: ModelSpec,
    pub density: DensityKind,
    pub n: usize,
    pub m: usize,
    /// 1-based evaluation time; `None` means the last observation.
    pub k: Option<usize>,
    pub mode: ProfileMode,
    /// Selects the cell's family of random substreams.
    pub index: u64,
}

impl Cell {
    pub fn time_index(&self) -> usize {
        self.k.unwrap_or(self.m)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParams("cells need n >= 1 and m >= 1".into()));
        }
        let k = self.time_index();
        if k == 0 || k > self.m {
            return Err(Error::OutOfRange(format!(
                "time index {k} outside 1..={}",
                self.m
            )));
        }
        if let ProfileMode::Fixed(laws) = &self.mode {
            if laws.len() != self.n {
                return Err(Error::LengthMismatch(format!(
                    "{} fixed laws for n = {}",
                    laws.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }

    /// Law of user 1, independent of the trial.
    pub fn first_law(&self, master_seed: u64) -> UserLaw {
        match &self.mode {
            ProfileMode::Fixed(laws) => laws[0].clone(),
            ProfileMode::ResampleOthers => {
                let mut rng = substream(master_seed, SHARED_CELL, 0);
                self.model.sample_law(&self.density, &mut rng)
            }
        }
    }
}

/// Everything a single trial produces before the metrics are read off.
#[derive(Debug, Clone)]
pub struct TrialSample {
    pub laws: Vec<UserLaw>,
    pub trajectories: Vec<Trajectory>,
    pub perm: Permutation,
    pub y: ObservationMatrix,
}

pub fn simulate_trial(cell: &Cell, first: &UserLaw, rng: &mut Stream) -> Result<TrialSample> {
    let laws: Vec<UserLaw> = match &cell.mode {
        ProfileMode::Fixed(laws) => laws.clone(),
        ProfileMode::ResampleOthers => std::iter::once(first.clone())
            .chain((1..cell.n).map(|_| cell.model.sample_law(&cell.density, rng)))
            .collect(),
    };
    let trajectories: Vec<Trajectory> = laws
        .iter()
        .map(|law| law.sample_trajectory(cell.m, rng))
        .collect();
    let perm = sample_permutation(cell.n, rng);
    let y = anonymize(&trajectories, &perm)?;
    Ok(TrialSample {
        laws,
        trajectories,
        perm,
        y,
    })
}

/// Which metrics a trial should compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricSet {
    pub mi: bool,
    pub accuracy: bool,
    pub weights: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrialMetrics {
    /// `H(X_1(k)) - H(X_1(k) | Y = y)` for this trial.
    pub mi_term: Option<f64>,
    pub pi1_correct: Option<bool>,
    pub full_correct: Option<bool>,
    /// Entropy of the posterior of user 1's pseudonym, in bits.
    pub posterior_entropy: Option<f64>,
    /// Above the permanent bound: the same entropy, conditioned on the
    /// pseudonym set of user 1 and the users with the closest laws.
    pub restricted_entropy: Option<f64>,
}

pub fn evaluate_trial(
    cell: &Cell,
    first: &UserLaw,
    prior_entropy: f64,
    master_seed: u64,
    trial: u64,
    wants: MetricSet,
) -> Result<TrialMetrics> {
    let mut rng = substream(master_seed, cell.index, trial);
    let sample = simulate_trial(cell, first, &mut rng)?;
    let l = cell.model.likelihood(&sample.laws, &sample.y)?;
    let mut out = TrialMetrics::default();
    let exact = cell.n <= PERMANENT_FEASIBILITY_BOUND;
    if exact && (wants.mi || wants.weights) {
        let post = posterior_pi1(&l)?;
        if wants.mi {
            let cond =
                conditional_location_distribution(&sample.y, &post, cell.time_index(), cell.model.r())?;
            out.mi_term = Some(prior_entropy - entropy(&cond)?);
        }
        if wants.weights {
            out.posterior_entropy = Some(post.entropy_bits());
        }
    }
    if !exact && wants.weights {
        out.restricted_entropy = Some(restricted_posterior(&l, &sample)?.entropy_bits());
    }
    if wants.accuracy {
        let guess = map_assignment(&l)?;
        out.pi1_correct = Some(guess.apply(0) == sample.perm.apply(0));
        out.full_correct = Some(guess == sample.perm);
    }
    Ok(out)
}

/// Posterior of user 1's pseudonym given the pseudonym set of the
/// `PERMANENT_FEASIBILITY_BOUND` users whose laws are closest to user 1's.
fn restricted_posterior(l: &LikelihoodMatrix, sample: &TrialSample) -> Result<AssignmentPosterior> {
    let mut order: Vec<usize> = (1..sample.laws.len()).collect();
    let dist: Vec<f64> = sample
        .laws
        .iter()
        .map(|law| law_distance(&sample.laws[0], law))
        .collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    let mut users = vec![0];
    users.extend(order.into_iter().take(PERMANENT_FEASIBILITY_BOUND - 1));
    let pseudonyms: Vec<usize> = users.iter().map(|&u| sample.perm.apply(u)).collect();
    crate::adversary::posterior_for_user(&l.submatrix(&users, &pseudonyms)?, 0)
}

/// L1 distance between two laws of the same kind.
fn law_distance(a: &UserLaw, b: &UserLaw) -> f64 {
    let (x, y) = match (a, b) {
        (UserLaw::Iid(p), UserLaw::Iid(q)) => (p.probs(), q.probs()),
        (UserLaw::Markov(s), UserLaw::Markov(t)) => (s.as_slice(), t.as_slice()),
        _ => return f64::INFINITY,
    };
    x.iter().zip(y).map(|(u, v)| (u - v).abs()).sum()
}

/// Runs every trial of a cell (in parallel, results in trial order).
pub fn run_cell(cell: &Cell, trials: usize, master_seed: u64, wants: MetricSet) -> Result<Vec<TrialMetrics>> {
    cell.validate()?;
    let first = cell.first_law(master_seed);
    let prior_entropy = entropy(&marginal_location_distribution(&first, cell.time_index())?)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| evaluate_trial(cell, &first, prior_entropy, master_seed, t, wants))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    ExactEnumeration,
    McPermanent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: usize,
    pub method: MiMethod,
}

/// Sample mean and its standard error (Welford updates, so a constant
/// sample has exactly its value as mean and zero error).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let d = v - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (v - mean);
    }
    let n = values.len() as f64;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

/// Monte Carlo estimate of `I(X_1(k); Y)`: the exact prior entropy of user 1's
/// location minus the average entropy of the adversary's exact posterior.
pub fn mutual_information_mc(cell: &Cell, trials: usize, master_seed: u64) -> Result<MiEstimate> {
    if trials < 2 {
        return Err(Error::InvalidParams("need at least 2 trials".into()));
    }
    if cell.n > PERMANENT_FEASIBILITY_BOUND {
        return Err(Error::Infeasible(format!(
            "mutual information needs n <= {PERMANENT_FEASIBILITY_BOUND}, got {}",
            cell.n
        )));
    }
    let wants = MetricSet {
        mi: true,
        ..Default::default()
    };
    let terms: Vec<f64> = run_cell(cell, trials, master_seed, wants)?
        .iter()
        .map(|t| t.mi_term.expect("requested"))
        .collect();
    let (value, std_error) = mean_and_se(&terms);
    Ok(MiEstimate {
        value,
        std_error,
        trials,
        method: MiMethod::McPermanent,
    })
}

/// Exact `I(X_1(k); Y)` for a fixed population by enumerating every possible
/// observation matrix. Only for tiny instances (`r^(m n) <= 2^20`).
pub fn mutual_information_exact(
    model: &ModelSpec,
    laws: &[UserLaw],
    m: usize,
    k: usize,
) -> Result<MiEstimate> {
    let n = laws.len();
    let r = model.r();
    let cells = m * n;
    if n == 0 || m == 0 || k == 0 || k > m {
        return Err(Error::InvalidParams("need n, m >= 1 and 1 <= k <= m".into()));
    }
    if (cells as f64) * (r as f64).log2() > 20.0 || n > PERMANENT_FEASIBILITY_BOUND {
        return Err(Error::Infeasible(format!(
            "{r}^{cells} observation matrices is too many to enumerate"
        )));
    }
    let prior = entropy(&marginal_location_distribution(&laws[0], k)?)?;

    // P(y) = mean over permutations of prod_u P(X_u = y_{pi(u)}); the 1/n!
    // and sum over pi are exactly exp(L) summed through the permanent, so
    // P(y) = perm(exp(L)) / n!. We form it through the posterior normalizer.
    let total = r.pow(cells as u32);
    let mut cond_entropy = 0.0;
    let mut mass = 0.0;
    let mut labels = vec![0usize; cells];
    for code in 0..total {
        let mut c = code;
        for v in labels.iter_mut() {
            *v = c % r;
            c /= r;
        }
        let columns: Vec<Vec<StateId>> = labels
            .chunks(m)
            .map(|col| col.iter().copied().map(StateId).collect())
            .collect();
        let y = ObservationMatrix::from_columns(&columns)?;
        let l = model.likelihood(laws, &y)?;
        let p_y = observation_probability(&l, laws, &y)?;
        if p_y == 0.0 {
            continue;
        }
        let post = posterior_pi1(&l)?;
        let cond = conditional_location_distribution(&y, &post, k, r)?;
        cond_entropy += p_y * entropy(&cond)?;
        mass += p_y;
    }
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Degenerate(format!("enumerated mass {mass} != 1")));
    }
    Ok(MiEstimate {
        value: prior - cond_entropy,
        std_error: 0.0,
        trials: total,
        method: MiMethod::ExactEnumeration,
    })
}

/// `P(Y = y)` from the likelihood matrix. `L` holds full path log-probabilities
/// here (no dropped coefficients) because every column is a concrete sequence.
fn observation_probability(l: &LikelihoodMatrix, laws: &[UserLaw], y: &ObservationMatrix) -> Result<f64> {
    let n = l.n();
    let a: Vec<f64> = l.as_slice().iter().map(|v| v.exp()).collect();
    let mut p = crate::adversary::permanent::permanent(&a, n);
    for i in 1..=n {
        p /= i as f64;
    }
    // Markov users are pinned to start in state 0.
    if laws.iter().any(|law| matches!(law, UserLaw::Markov(_))) && y.columns().any(|c| c[0] != StateId(0)) {
        return Ok(0.0);
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub pi1_accuracy: f64,
    pub full_perm_accuracy: f64,
    pub trials: usize,
}

/// Fraction of trials in which the MAP assignment recovers user 1's pseudonym
/// (and the whole permutation).
pub fn deanonymization_accuracy(cell: &Cell, trials: usize, master_seed: u64) -> Result<Accuracy> {
    if trials == 0 {
        return Err(Error::InvalidParams("need at least 1 trial".into()));
    }
    let wants = MetricSet {
        accuracy: true,
        ..Default::default()
    };
    let outcomes = run_cell(cell, trials, master_seed, wants)?;
    let pi1 = outcomes.iter().filter(|t| t.pi1_correct == Some(true)).count();
    let full = outcomes.iter().filter(|t| t.full_correct == Some(true)).count();
    Ok(Accuracy {
        pi1_accuracy: pi1 as f64 / trials as f64,
        full_perm_accuracy: full as f64 / trials as f64,
        trials,
    })
}

/// Visit-frequency table of a column set at time `k`, used by tests and reports.
pub fn column_frequencies(y: &ObservationMatrix, k: usize, r: usize) -> Vec<f64> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for j in 0..y.n() {
        *counts.entry(y.at(k, j).index()).or_default() += 1;
    }
    (0..r)
        .map(|i| *counts.get(&i).unwrap_or(&0) as f64 / y.n() as f64)
        .collect()
}
