//! Battery of two-state lemma checks written as result rows.
//!
//! Rows over the `m` grid carry `n = 0`; rows over the `n` grid use the
//! schedule `m = n^(2 - alpha)` (threshold exponent 2 minus `alpha`). User 1's
//! profile is fixed at 1/2 and everybody else's is uniform on (0, 1).

use rand::Rng;

use crate::adversary::PERMANENT_FEASIBILITY_BOUND;
use crate::anonymization::ObservationSchedule;
use crate::error::{Error, Result};
use crate::harness::results::{ResultRow, AGGREGATE_TRIAL};
use crate::harness::sweep::experiment_id;
use crate::metrics::mean_and_se;
use crate::proofcheck::{
    critical_set, delta_uniformity_experiment, interval_event_prob, kl_bernoulli, quadratic_approx,
    weight_uniformity, LemmaParams, TwoStatePrior,
};
use crate::rng::{hash64, substream, SHARED_CELL};

pub const LEMMA_P1: f64 = 0.5;
/// Size of the synthetic critical set used for the count-window event.
pub const INTERVAL_SET_SIZE: usize = 20;

#[derive(Debug, Clone)]
pub struct LemmaBattery {
    pub params: LemmaParams,
    pub m_grid: Vec<u64>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

pub fn run_lemma_battery(b: &LemmaBattery) -> Result<Vec<ResultRow>> {
    if b.m_grid.is_empty() || b.n_grid.is_empty() {
        return Err(Error::Config("m grid and n grid must not be empty".into()));
    }
    if b.m_grid.contains(&0) || b.n_grid.contains(&0) {
        return Err(Error::Config("grid entries must be positive".into()));
    }
    if b.trials < 2 {
        return Err(Error::Config("the lemma battery needs at least 2 trials".into()));
    }
    let p = &b.params;
    let schedule_beta = 2.0 - p.alpha();
    let schedule = ObservationSchedule::new(1.0, schedule_beta)?;
    let id = experiment_id("lemma", b.seed);
    let row = |n: usize, m: usize, metric: &str, value: f64, std_error: Option<f64>| ResultRow {
        experiment_id: id.clone(),
        model: "iid2".into(),
        n,
        m,
        beta: schedule_beta,
        trial: AGGREGATE_TRIAL,
        metric: metric.into(),
        value,
        std_error,
        seed: b.seed,
    };
    let mut rows = Vec::new();

    let deltas = delta_uniformity_experiment(p, LEMMA_P1, &b.m_grid, b.trials, hash64(b.seed, SHARED_CELL, 1))?;
    for (cell, (&m, delta)) in b.m_grid.iter().zip(&deltas).enumerate() {
        let mf = m as f64;
        let mu = m as usize;
        let eps = p.eps(mf);
        let beta = p.beta(mf);
        rows.push(row(0, mu, "eps", eps, None));
        rows.push(row(0, mu, "beta_m", beta, None));
        rows.push(row(0, mu, "swap_scale", p.swap_scale(mf), None));
        rows.push(row(0, mu, "max_abs_ln_delta", delta.max_abs_ln_delta, None));
        rows.push(row(0, mu, "delta_envelope", delta.envelope, None));
        rows.push(row(0, mu, "delta_worst_case", delta.worst_case, None));
        if LEMMA_P1 + eps < 1.0 {
            let ratio = kl_bernoulli(LEMMA_P1 + eps, LEMMA_P1)? / quadratic_approx(LEMMA_P1, eps)?;
            rows.push(row(0, mu, "kl_ratio", ratio, None));
        }

        let mut rng = substream(b.seed, SHARED_CELL - 1 - cell as u64, 3);
        let profiles: Vec<f64> = (0..INTERVAL_SET_SIZE)
            .map(|_| rng.random_range((LEMMA_P1 - eps).max(1e-9)..(LEMMA_P1 + eps).min(1.0 - 1e-9)))
            .collect();
        let prob = interval_event_prob(&profiles, LEMMA_P1, m, beta, b.trials, &mut rng)?;
        let se = (prob * (1.0 - prob) / b.trials as f64).sqrt();
        rows.push(row(0, mu, "interval_event_prob", prob, Some(se)));
    }

    for (cell, &n) in b.n_grid.iter().enumerate() {
        let m = schedule.observations(n);
        let eps = p.eps(m as f64);
        let mut rng = substream(b.seed, cell as u64, 4);
        let sizes: Vec<f64> = (0..b.trials)
            .map(|_| {
                let mut profiles = vec![LEMMA_P1];
                profiles.extend((1..n).map(|_| rng.random::<f64>()));
                critical_set(&profiles, 0, eps).len() as f64
            })
            .collect();
        let (mean, se) = mean_and_se(&sizes);
        rows.push(row(n, m, "critical_size", mean, Some(se)));
        rows.push(row(n, m, "critical_size_expected", 1.0 + (n - 1) as f64 * (2.0 * eps).min(1.0), None));

        if n <= PERMANENT_FEASIBILITY_BOUND {
            let w = weight_uniformity(p, LEMMA_P1, TwoStatePrior::Uniform, n, &schedule, b.trials, hash64(b.seed, SHARED_CELL, 2))?;
            if let Some(median) = w.median_max_deviation {
                rows.push(row(n, m, "weight_deviation_median", median, None));
            }
            rows.push(row(n, m, "weight_degenerate_trials", w.degenerate as f64, None));
        } else {
            rows.push(row(n, m, "weights_skipped", PERMANENT_FEASIBILITY_BOUND as f64, None));
        }
    }
    Ok(rows)
}
