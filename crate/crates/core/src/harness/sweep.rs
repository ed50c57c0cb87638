//! Grid sweeps over the population size.
//!
//! Cell `i` is the `i`-th entry of `n_grid`; trial `t` of cell `i` draws from
//! `substream(seed, i, t)`, and that substream's seed is what the `seed`
//! column of a per-trial row records. Rows come out ordered by cell, then
//! trial, then metric (mi, accuracy, weights), followed by the cell's
//! aggregates, so the output does not depend on the thread count.

use crate::adversary::PERMANENT_FEASIBILITY_BOUND;
use crate::error::Result;
use crate::harness::config::ResolvedConfig;
use crate::harness::results::{ResultRow, AGGREGATE_TRIAL};
use crate::metrics::{mean_and_se, run_cell, Cell, MetricSet, ProfileMode};
use crate::rng::hash64;

pub fn experiment_id(model: &str, seed: u64) -> String {
    format!("{model}-{seed:016x}")
}

/// Runs every cell of the grid.
pub fn run_sweep(cfg: &ResolvedConfig) -> Result<Vec<ResultRow>> {
    run_cells(cfg, cfg.n_grid.len())
}

/// Runs the first `cells` cells of the grid.
pub fn run_cells(cfg: &ResolvedConfig, cells: usize) -> Result<Vec<ResultRow>> {
    let model = cfg.model_kind.name();
    let id = experiment_id(model, cfg.seed);
    let mut rows = Vec::new();
    for (index, &n) in cfg.n_grid.iter().enumerate().take(cells) {
        let m = cfg.schedule.observations(n);
        let cell = Cell {
            model: cfg.model.clone(),
            density: cfg.density,
            n,
            m,
            k: cfg.k,
            mode: ProfileMode::ResampleOthers,
            index: index as u64,
        };
        let exact = n <= PERMANENT_FEASIBILITY_BOUND;
        let wants = MetricSet {
            mi: cfg.metrics.mi && exact,
            ..cfg.metrics
        };
        let outcomes = run_cell(&cell, cfg.trials, cfg.seed, wants)?;

        let base = |trial: i64, metric: &str, value: f64, std_error: Option<f64>, seed: u64| ResultRow {
            experiment_id: id.clone(),
            model: model.to_string(),
            n,
            m,
            beta: cfg.schedule.beta(),
            trial,
            metric: metric.to_string(),
            value,
            std_error,
            seed,
        };
        let weights_metric = if exact { "weights" } else { "weights_restricted" };

        let mut mi = Vec::new();
        let mut pi1 = Vec::new();
        let mut full = Vec::new();
        let mut weights = Vec::new();
        for (t, out) in outcomes.iter().enumerate() {
            let seed = hash64(cfg.seed, index as u64, t as u64);
            if let Some(v) = out.mi_term {
                mi.push(v);
                rows.push(base(t as i64, "mi", v, None, seed));
            }
            if let (Some(hit), Some(all)) = (out.pi1_correct, out.full_correct) {
                let v = f64::from(u8::from(hit));
                pi1.push(v);
                full.push(f64::from(u8::from(all)));
                rows.push(base(t as i64, "accuracy", v, None, seed));
            }
            if let Some(v) = out.posterior_entropy.or(out.restricted_entropy) {
                weights.push(v);
                rows.push(base(t as i64, weights_metric, v, None, seed));
            }
        }

        let aggregate = |metric: &str, values: &[f64]| {
            let (mean, se) = mean_and_se(values);
            base(AGGREGATE_TRIAL, metric, mean, Some(se), cfg.seed)
        };
        if cfg.metrics.mi {
            if exact {
                rows.push(aggregate("mi", &mi));
            } else {
                // The value column carries the bound that was exceeded.
                rows.push(base(
                    AGGREGATE_TRIAL,
                    "mi_skipped",
                    PERMANENT_FEASIBILITY_BOUND as f64,
                    None,
                    cfg.seed,
                ));
            }
        }
        if cfg.metrics.accuracy {
            rows.push(aggregate("accuracy", &pi1));
            rows.push(aggregate("full_accuracy", &full));
        }
        if cfg.metrics.weights {
            rows.push(aggregate(weights_metric, &weights));
        }
    }
    Ok(rows)
}
