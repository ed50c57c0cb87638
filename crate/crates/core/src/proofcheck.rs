//! Numerical checks of the two-state indistinguishability argument: the
//! shrinking windows `eps(m)` and `beta(m)`, the critical set of users whose
//! profile is within `eps(m)` of user 1's, the concentration event on visit
//! counts, the swap likelihood ratio, and the uniformity of the posterior
//! weights inside the critical set.
//!
//! Profiles here are the probability of state 1 (the second state).

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::adversary::{count_stats, posterior_for_user, LikelihoodMatrix, PERMANENT_FEASIBILITY_BOUND};
use crate::anonymization::{anonymize, sample_permutation, ObservationSchedule};
use crate::error::{Error, Result};
use crate::mobility::{sample_trajectory_iid, IidProfile};
use crate::rng::{substream, Stream};

/// Constant of the sampled `ln Delta` envelope `C m^(theta - phi)`.
pub const DELTA_ENVELOPE_CONSTANT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaParams {
    alpha: f64,
    theta: f64,
    phi: f64,
}

impl LemmaParams {
    /// Requires `0 < theta < phi`, `0 < alpha <= 1` and `lambda > 0`.
    pub fn new(alpha: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParams(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        if !(theta > 0.0 && theta < phi && phi.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need 0 < theta < phi, got theta={theta}, phi={phi}"
            )));
        }
        let params = Self { alpha, theta, phi };
        let lambda = params.lambda();
        if !(lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "lambda = alpha/2 + alpha*phi - 2*phi = {lambda} must be positive"
            )));
        }
        Ok(params)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// `m^-(1/2 + phi)`: width of the critical profile window.
    pub fn eps(&self, m: f64) -> f64 {
        m.powf(-(0.5 + self.phi))
    }

    /// `m^-(1/2 - theta)`: half-width of the count window, relative to `m`.
    pub fn beta(&self, m: f64) -> f64 {
        m.powf(-(0.5 - self.theta))
    }

    pub fn lambda(&self) -> f64 {
        self.alpha / 2.0 + self.alpha * self.phi - 2.0 * self.phi
    }

    /// `m beta(m) eps(m)`, which equals `m^(theta - phi)`.
    pub fn swap_scale(&self, m: f64) -> f64 {
        m * self.beta(m) * self.eps(m)
    }

    pub fn delta_envelope(&self, m: f64) -> f64 {
        DELTA_ENVELOPE_CONSTANT * m.powf(self.theta - self.phi)
    }
}

pub fn derive_lemma_params(alpha: f64, theta: f64, phi: f64) -> Result<LemmaParams> {
    LemmaParams::new(alpha, theta, phi)
}

/// Indices `i` with `|p_i - p_1| < eps`; `p1_index` is always included.
pub fn critical_set(p: &[f64], p1_index: usize, eps: f64) -> Vec<usize> {
    let p1 = p[p1_index];
    (0..p.len())
        .filter(|&i| i == p1_index || (p[i] - p1).abs() < eps)
        .collect()
}

/// Integer counts in `[m (p1 - beta), m (p1 + beta)]`, clipped to `[0, m]`.
/// `None` when the window holds no integer.
pub fn count_window(m: u64, p1: f64, beta: f64) -> Option<(u64, u64)> {
    let mf = m as f64;
    let lo = (mf * (p1 - beta)).ceil().max(0.0);
    let hi = (mf * (p1 + beta)).floor().min(mf);
    (lo <= hi).then_some((lo as u64, hi as u64))
}

/// Fraction of trials in which every profile's count of state-1 visits over
/// `m` steps lands in the count window around `m p1`.
pub fn interval_event_prob<R: Rng + ?Sized>(
    profiles: &[f64],
    p1: f64,
    m: u64,
    beta: f64,
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::InvalidParams("critical set is empty".into()));
    }
    if trials == 0 {
        return Err(Error::InvalidParams("need at least 1 trial".into()));
    }
    let Some((lo, hi)) = count_window(m, p1, beta) else {
        return Ok(0.0);
    };
    let laws: Vec<Binomial> = profiles
        .iter()
        .map(|&p| Binomial::new(m, p).map_err(|e| Error::InvalidParams(format!("profile {p}: {e}"))))
        .collect::<Result<_>>()?;
    let hits = (0..trials)
        .filter(|_| {
            laws.iter().all(|law| {
                let s = law.sample(rng);
                lo <= s && s <= hi
            })
        })
        .count();
    Ok(hits as f64 / trials as f64)
}

/// Likelihood ratio of swapping the state-1 counts `a` and `b` between users
/// with profiles `p_i` and `p_j`:
/// `((p_i / p_j) ((1 - p_j) / (1 - p_i)))^(a - b)`. Returns `(Delta, ln Delta)`.
pub fn likelihood_ratio_delta(p_i: f64, p_j: f64, a: f64, b: f64) -> (f64, f64) {
    let log_odds_gap = (p_i.ln() - p_j.ln()) + ((1.0 - p_j).ln() - (1.0 - p_i).ln());
    let ln = (a - b) * log_odds_gap;
    (ln.exp(), ln)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaSummary {
    pub m: u64,
    pub samples: usize,
    pub max_abs_ln_delta: f64,
    /// `5 m^(theta - phi)`.
    pub envelope: f64,
    /// Worst case over the sampling box:
    /// `(window width) * ln((p1 + eps)(1 - p1 + eps) / ((p1 - eps)(1 - p1 - eps)))`.
    pub worst_case: f64,
}

/// Samples `p_i, p_j` uniformly in `(p1 - eps(m), p1 + eps(m))` and integer
/// counts `a, b` uniformly in the count window, and records the largest
/// `|ln Delta|` per `m`.
pub fn delta_uniformity_experiment(
    params: &LemmaParams,
    p1: f64,
    m_grid: &[u64],
    samples: usize,
    seed: u64,
) -> Result<Vec<DeltaSummary>> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(Error::InvalidParams(format!("p1 must lie in (0, 1), got {p1}")));
    }
    m_grid
        .iter()
        .enumerate()
        .map(|(cell, &m)| {
            let mf = m as f64;
            let eps = params.eps(mf);
            let beta = params.beta(mf);
            if p1 - eps <= 0.0 || p1 + eps >= 1.0 {
                return Err(Error::InvalidParams(format!(
                    "eps({m}) = {eps} pushes profiles outside (0, 1)"
                )));
            }
            let (lo, hi) = count_window(m, p1, beta)
                .ok_or_else(|| Error::InvalidParams(format!("empty count window at m = {m}")))?;
            let mut rng = substream(seed, cell as u64, 0);
            let mut max_abs = 0.0f64;
            for _ in 0..samples {
                let p_i = rng.random_range(p1 - eps..p1 + eps);
                let p_j = rng.random_range(p1 - eps..p1 + eps);
                let a = rng.random_range(lo..=hi) as f64;
                let b = rng.random_range(lo..=hi) as f64;
                max_abs = max_abs.max(likelihood_ratio_delta(p_i, p_j, a, b).1.abs());
            }
            let width = (hi - lo) as f64;
            let worst_case = width
                * (((p1 + eps) * (1.0 - p1 + eps)).ln() - ((p1 - eps) * (1.0 - p1 - eps)).ln());
            Ok(DeltaSummary {
                m,
                samples,
                max_abs_ln_delta: max_abs,
                envelope: params.delta_envelope(mf),
                worst_case,
            })
        })
        .collect()
}

/// Where the two-state profiles of users 2..n come from.
#[derive(Debug, Clone, PartialEq)]
pub enum TwoStatePrior {
    /// Uniform on (0, 1).
    Uniform,
    /// Every user, including user 1, has the same profile.
    AllEqual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightTrial {
    pub critical_size: usize,
    /// `max_j |N W_j - 1|` over the pseudonyms of the critical set.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightUniformity {
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub trials: Vec<WeightTrial>,
    /// Trials whose critical set had fewer than two members.
    pub degenerate: usize,
    /// Median of `max_deviation` over non-degenerate trials.
    pub median_max_deviation: Option<f64>,
}

/// Posterior weights of user 1 conditioned on the pseudonym set of the
/// critical set, scaled by its size. With `N = |J|` the weights are uniform
/// exactly when every `N W_j` equals one.
pub fn weight_uniformity(
    params: &LemmaParams,
    p1: f64,
    prior: TwoStatePrior,
    n: usize,
    schedule: &ObservationSchedule,
    trials: usize,
    seed: u64,
) -> Result<WeightUniformity> {
    if n == 0 || n > PERMANENT_FEASIBILITY_BOUND {
        return Err(Error::Infeasible(format!(
            "weight uniformity needs 1 <= n <= {PERMANENT_FEASIBILITY_BOUND}, got {n}"
        )));
    }
    let first = IidProfile::two_state(p1)?;
    let m = schedule.observations(n);
    let eps = params.eps(m as f64);
    let results: Vec<WeightTrial> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, n as u64, t);
            weight_trial(&first, &prior, n, m, eps, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut valid: Vec<f64> = results
        .iter()
        .filter(|t| t.critical_size >= 2)
        .map(|t| t.max_deviation)
        .collect();
    let degenerate = results.len() - valid.len();
    valid.sort_by(f64::total_cmp);
    let median = match valid.len() {
        0 => None,
        k if k % 2 == 1 => Some(valid[k / 2]),
        k => Some(0.5 * (valid[k / 2 - 1] + valid[k / 2])),
    };
    Ok(WeightUniformity {
        n,
        m,
        eps,
        trials: results,
        degenerate,
        median_max_deviation: median,
    })
}

fn weight_trial(
    first: &IidProfile,
    prior: &TwoStatePrior,
    n: usize,
    m: usize,
    eps: f64,
    rng: &mut Stream,
) -> Result<WeightTrial> {
    let mut profiles = vec![first.clone()];
    for _ in 1..n {
        profiles.push(match prior {
            TwoStatePrior::AllEqual => first.clone(),
            TwoStatePrior::Uniform => loop {
                let p: f64 = rng.random();
                if let Ok(profile) = IidProfile::two_state(p) {
                    break profile;
                }
            },
        });
    }
    let trajectories: Vec<_> = profiles
        .iter()
        .map(|p| sample_trajectory_iid(p, m, rng))
        .collect();
    let perm = sample_permutation(n, rng);
    let y = anonymize(&trajectories, &perm)?;

    let p: Vec<f64> = profiles.iter().map(|q| q.probs()[1]).collect();
    let crit = critical_set(&p, 0, eps);
    if crit.len() < 2 {
        return Ok(WeightTrial {
            critical_size: crit.len(),
            max_deviation: 0.0,
        });
    }
    let pseudonyms: Vec<usize> = crit.iter().map(|&u| perm.apply(u)).collect();
    let l = LikelihoodMatrix::iid(&profiles, &count_stats(&y, 2))?.submatrix(&crit, &pseudonyms)?;
    let post = posterior_for_user(&l, 0)?;
    let size = crit.len() as f64;
    let max_deviation = post
        .weights
        .iter()
        .map(|w| (size * w - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(WeightTrial {
        critical_size: crit.len(),
        max_deviation,
    })
}

/// `D(Bernoulli(p) || Bernoulli(q))` in bits.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    for (name, v) in [("p", p), ("q", q)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::InvalidParams(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    Ok(p * (p / q).log2() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).log2())
}

/// Second-order expansion of `D(Bernoulli(p + eps) || Bernoulli(p))` in bits:
/// `eps^2 / (2 p (1 - p) ln 2)`.
pub fn quadratic_approx(p: f64, eps: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParams(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(eps * eps / (2.0 * p * (1.0 - p) * std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_from_seed;
    use proptest::prelude::*;

    #[test]
    fn params_examples() {
        let p = derive_lemma_params(1.0, 0.05, 0.1).unwrap();
        assert!((p.lambda() - 0.4).abs() < 1e-15);
        assert!((p.eps(1e4) - 10f64.powf(-2.4)).abs() < 1e-15);
        assert!((p.eps(1e4) - 3.9811e-3).abs() < 1e-7);
        assert!(derive_lemma_params(1.0, 0.6, 0.8).is_err());
        assert!(derive_lemma_params(1.0, 0.1, 0.1).is_err());
        assert!(derive_lemma_params(0.0, 0.05, 0.1).is_err());
    }

    #[test]
    fn swap_scale_identity() {
        let p = LemmaParams::new(1.0, 0.05, 0.1).unwrap();
        for e in 2..=6 {
            let m = 10f64.powi(e);
            let expect = m.powf(p.theta() - p.phi());
            assert!((p.swap_scale(m) - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn critical_set_examples() {
        assert_eq!(critical_set(&[0.5, 0.49, 0.8], 0, 0.02), vec![0, 1]);
        assert_eq!(critical_set(&[0.5, 0.01, 0.99], 0, 1.0), vec![0, 1, 2]);
        assert_eq!(critical_set(&[0.5, 0.9], 0, 0.0), vec![0]);
    }

    #[test]
    fn interval_event_edges() {
        let mut rng = stream_from_seed(4);
        let p = [0.3, 0.5, 0.7];
        assert_eq!(interval_event_prob(&p, 0.5, 50, 0.5, 500, &mut rng).unwrap(), 1.0);
        // m p1 = 25.5 is not an integer, so a zero-width window is empty.
        let q = interval_event_prob(&[0.5; 3], 0.5, 51, 0.0, 500, &mut rng).unwrap();
        assert_eq!(q, 0.0);
        assert!(interval_event_prob(&[], 0.5, 10, 0.1, 10, &mut rng).is_err());
    }

    #[test]
    fn delta_examples() {
        assert_eq!(likelihood_ratio_delta(0.3, 0.7, 4.0, 4.0), (1.0, 0.0));
        assert_eq!(likelihood_ratio_delta(0.3, 0.3, 9.0, 2.0).1, 0.0);
        let (r, _) = likelihood_ratio_delta(0.5, 0.6, 5.0, 3.0);
        assert!((r - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_bernoulli(0.4, 0.4).unwrap(), 0.0);
        let direct = 0.6 * 1.2f64.log2() + 0.4 * 0.8f64.log2();
        assert!((kl_bernoulli(0.6, 0.5).unwrap() - direct).abs() < 1e-15);
        assert!((direct - 0.029049).abs() < 1e-6);
        let ratio = kl_bernoulli(0.501, 0.5).unwrap() / quadratic_approx(0.5, 1e-3).unwrap();
        assert!((ratio - 1.0).abs() < 0.01);
        assert!(kl_bernoulli(0.0, 0.5).is_err());
        assert!(kl_bernoulli(0.5, 1.0).is_err());
    }

    #[test]
    fn symmetric_population_is_uniform() {
        let params = LemmaParams::new(0.8, 0.05, 0.1).unwrap();
        let sched = ObservationSchedule::new(1.0, 1.2).unwrap();
        let out = weight_uniformity(&params, 0.5, TwoStatePrior::AllEqual, 6, &sched, 20, 1).unwrap();
        assert_eq!(out.degenerate, 0);
        for t in &out.trials {
            assert_eq!(t.critical_size, 6);
            assert!(t.max_deviation < 1e-12, "{t:?}");
        }
    }

    #[test]
    fn single_user_has_no_deviation() {
        let params = LemmaParams::new(0.8, 0.05, 0.1).unwrap();
        let sched = ObservationSchedule::new(1.0, 1.2).unwrap();
        let out = weight_uniformity(&params, 0.5, TwoStatePrior::Uniform, 1, &sched, 5, 1).unwrap();
        assert_eq!(out.degenerate, 5);
        assert!(out.trials.iter().all(|t| t.max_deviation == 0.0));
        assert_eq!(out.median_max_deviation, None);
    }

    proptest! {
        #[test]
        fn delta_is_antisymmetric(p_i in 0.01f64..0.99, p_j in 0.01f64..0.99, a in 0u32..1000, b in 0u32..1000) {
            let (fwd, ln_fwd) = likelihood_ratio_delta(p_i, p_j, a as f64, b as f64);
            let (bwd, ln_bwd) = likelihood_ratio_delta(p_i, p_j, b as f64, a as f64);
            prop_assert_eq!(ln_fwd, -ln_bwd);
            if ln_fwd.abs() < 50.0 {
                prop_assert!((fwd * bwd - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn critical_set_monotone(p in prop::collection::vec(0.0f64..1.0, 1..30), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let small = critical_set(&p, 0, lo);
            let large = critical_set(&p, 0, hi);
            prop_assert!(small.contains(&0));
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }

        #[test]
        fn derived_lambda(alpha in 0.05f64..1.0, theta in 0.001f64..0.2, gap in 0.001f64..0.2) {
            let phi = theta + gap;
            let lambda = alpha / 2.0 + alpha * phi - 2.0 * phi;
            match LemmaParams::new(alpha, theta, phi) {
                Ok(p) => prop_assert_eq!(p.lambda(), lambda),
                Err(_) => prop_assert!(lambda <= 0.0),
            }
        }
    }
}
