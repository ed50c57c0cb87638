//! The strongest adversary: it knows every user's mobility law and sees the
//! anonymized observation matrix.
//!
//! Per-pseudonym visit counts (i.i.d.) or transition counts (Markov) are
//! sufficient for the permutation, so everything downstream works from a
//! [`LikelihoodMatrix`] of log-likelihood kernels. Multinomial coefficients
//! and path-count factors are the same for every permutation and are never
//! formed.

pub mod assignment;
pub mod permanent;

use rayon::prelude::*;

use crate::anonymization::{ObservationMatrix, Permutation};
use crate::error::{Error, Result};
use crate::markov::{DependencyMap, TransitionMatrix};
use crate::mobility::IidProfile;

/// Largest `n` for which the exact posterior (a sum over `n!` permutations) is
/// computed.
pub const PERMANENT_FEASIBILITY_BOUND: usize = 20;

/// Below this size the per-pseudonym likelihood rows are filled sequentially.
const PARALLEL_ROWS_FROM: usize = 64;

/// `counts[j][i]`: visits of pseudonym `j` to state `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountStats {
    pub r: usize,
    pub m: usize,
    pub counts: Vec<Vec<u32>>,
}

pub fn count_stats(y: &ObservationMatrix, r: usize) -> CountStats {
    let counts = y
        .columns()
        .map(|col| {
            let mut c = vec![0u32; r];
            for s in col {
                c[s.index()] += 1;
            }
            c
        })
        .collect();
    CountStats {
        r,
        m: y.m(),
        counts,
    }
}

/// `matrices[j][i * r + k]`: transitions `i -> k` observed for pseudonym `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionStats {
    pub r: usize,
    pub m: usize,
    pub matrices: Vec<Vec<u32>>,
}

pub fn transition_stats(y: &ObservationMatrix, r: usize) -> TransitionStats {
    let matrices = y
        .columns()
        .map(|col| {
            let mut c = vec![0u32; r * r];
            for w in col.windows(2) {
                c[w[0].index() * r + w[1].index()] += 1;
            }
            c
        })
        .collect();
    TransitionStats {
        r,
        m: y.m(),
        matrices,
    }
}

/// Multinomial kernel `sum_i counts[i] ln p(i)` (natural log).
pub fn log_likelihood_iid(profile: &IidProfile, counts: &[u32]) -> f64 {
    profile
        .probs()
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0)
        .map(|(p, &c)| c as f64 * p.ln())
        .sum()
}

/// Path kernel `sum_{i,k} M(i, k) ln T(i, k)`; `-inf` when `M` uses an edge
/// that `T` forbids.
pub fn log_likelihood_markov(t: &TransitionMatrix, counts: &[u32]) -> f64 {
    let mut total = 0.0;
    for (&p, &c) in t.as_slice().iter().zip(counts) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        total += c as f64 * p.ln();
    }
    total
}

/// `L[u][j]`: log-likelihood that user `u` produced pseudonym `j`'s statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMatrix {
    n: usize,
    data: Vec<f64>,
}

impl LikelihoodMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch(format!(
                "likelihood matrix needs {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(Error::InvalidParams(format!("log-likelihood {v} is not allowed")));
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Result<Self> {
        let data = if n >= PARALLEL_ROWS_FROM {
            (0..n * n).into_par_iter().map(|c| f(c / n, c % n)).collect()
        } else {
            (0..n * n).map(|c| f(c / n, c % n)).collect()
        };
        Self::new(n, data)
    }

    pub fn iid(profiles: &[IidProfile], stats: &CountStats) -> Result<Self> {
        check_sizes(profiles.len(), stats.counts.len())?;
        let logs: Vec<Vec<f64>> = profiles
            .iter()
            .map(|p| p.probs().iter().map(|x| x.ln()).collect())
            .collect();
        Self::from_fn(profiles.len(), |u, j| {
            logs[u]
                .iter()
                .zip(&stats.counts[j])
                .map(|(l, &c)| c as f64 * l)
                .sum()
        })
    }

    pub fn markov(chains: &[TransitionMatrix], stats: &TransitionStats) -> Result<Self> {
        check_sizes(chains.len(), stats.matrices.len())?;
        Self::from_fn(chains.len(), |u, j| {
            log_likelihood_markov(&chains[u], &stats.matrices[j])
        })
    }

    /// Experimental comparison only: scores pseudonyms by the transitions on
    /// free edges `E_d` alone, ignoring the dependent edges. This is not the
    /// exact likelihood; finite-sample counts on dependent edges are not a
    /// function of the free-edge counts.
    pub fn markov_free_edges_only(
        chains: &[TransitionMatrix],
        stats: &TransitionStats,
        map: &DependencyMap,
    ) -> Result<Self> {
        check_sizes(chains.len(), stats.matrices.len())?;
        let r = stats.r;
        Self::from_fn(chains.len(), |u, j| {
            map.free_edges()
                .iter()
                .map(|&(a, b)| {
                    let c = stats.matrices[j][a * r + b];
                    if c == 0 {
                        0.0
                    } else {
                        c as f64 * chains[u].get(a, b).ln()
                    }
                })
                .sum()
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, u: usize, j: usize) -> f64 {
        self.data[u * self.n + j]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.data[u * self.n..(u + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Restriction to the given users (rows) and pseudonyms (columns).
    pub fn submatrix(&self, users: &[usize], pseudonyms: &[usize]) -> Result<Self> {
        if users.len() != pseudonyms.len() {
            return Err(Error::LengthMismatch(
                "submatrix must be square".into(),
            ));
        }
        let data = users
            .iter()
            .flat_map(|&u| pseudonyms.iter().map(move |&j| (u, j)))
            .map(|(u, j)| self.get(u, j))
            .collect();
        Self::new(users.len(), data)
    }

    pub fn add_to_row(&mut self, u: usize, shift: f64) {
        let n = self.n;
        for v in &mut self.data[u * n..(u + 1) * n] {
            *v += shift;
        }
    }

    /// Total log-likelihood of an assignment.
    pub fn score(&self, perm: &Permutation) -> f64 {
        perm.forward()
            .iter()
            .enumerate()
            .map(|(u, &j)| self.get(u, j))
            .sum()
    }
}

fn check_sizes(users: usize, pseudonyms: usize) -> Result<()> {
    if users != pseudonyms {
        return Err(Error::LengthMismatch(format!(
            "{users} user laws but {pseudonyms} pseudonyms"
        )));
    }
    if users == 0 {
        return Err(Error::InvalidParams("empty population".into()));
    }
    Ok(())
}

/// MAP permutation: maximizes `sum_u L[u][pi(u)]`, ties going to the
/// lexicographically smallest forward array.
pub fn map_assignment(l: &LikelihoodMatrix) -> Result<Permutation> {
    let forward = assignment::max_weight_assignment(l.as_slice(), l.n())?;
    Permutation::from_forward(forward)
}

/// Posterior `W_j = P(pi(user) = j | statistics)` over pseudonyms.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentPosterior {
    pub weights: Vec<f64>,
    /// `|sum_j W_j - 1|` after normalization.
    pub residual: f64,
}

impl AssignmentPosterior {
    /// Posterior entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.log2())
            .sum()
    }

    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (j, &w)| {
                if w > best.1 {
                    (j, w)
                } else {
                    best
                }
            })
            .0
    }
}

/// Exact posterior of the first user's pseudonym.
pub fn posterior_pi1(l: &LikelihoodMatrix) -> Result<AssignmentPosterior> {
    posterior_for_user(l, 0)
}

/// Exact posterior of `user`'s pseudonym:
/// `W_j ∝ exp(L[user][j]) * perm(exp(L) without row user and column j)`.
///
/// Rows are shifted by their maxima and the remaining rows' columns by their
/// maxima before exponentiating; the column factors are carried in the log
/// domain so every minor is comparable.
pub fn posterior_for_user(l: &LikelihoodMatrix, user: usize) -> Result<AssignmentPosterior> {
    let n = l.n();
    if n > PERMANENT_FEASIBILITY_BOUND {
        return Err(Error::Infeasible(format!(
            "exact posterior needs n <= {PERMANENT_FEASIBILITY_BOUND}, got {n}"
        )));
    }
    if user >= n {
        return Err(Error::OutOfRange(format!("user {user} outside 0..{n}")));
    }
    if n == 1 {
        return Ok(AssignmentPosterior {
            weights: vec![1.0],
            residual: 0.0,
        });
    }

    let mut a = vec![0.0; n * n];
    for u in 0..n {
        let row = l.row(u);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Degenerate(format!("user {u} explains no pseudonym")));
        }
        for (dst, &v) in a[u * n..(u + 1) * n].iter_mut().zip(row) {
            *dst = (v - max).exp();
        }
    }
    let mut log_col_scale = vec![0.0; n];
    for (k, scale) in log_col_scale.iter_mut().enumerate() {
        let c = (0..n)
            .filter(|&u| u != user)
            .map(|u| a[u * n + k])
            .fold(0.0, f64::max);
        if c > 0.0 {
            for u in (0..n).filter(|&u| u != user) {
                a[u * n + k] /= c;
            }
            *scale = c.ln();
        }
    }

    let minors = permanent::minor_permanents(&a, n, user);
    let log_w: Vec<f64> = (0..n)
        .map(|j| {
            let lead = a[user * n + j];
            if lead == 0.0 || minors[j] == 0.0 {
                f64::NEG_INFINITY
            } else {
                lead.ln() + minors[j].ln() - log_col_scale[j]
            }
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Degenerate(
            "every permutation has zero (or underflowing) likelihood".into(),
        ));
    }
    let mut weights: Vec<f64> = log_w.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    let residual = (weights.iter().sum::<f64>() - 1.0).abs();
    Ok(AssignmentPosterior { weights, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anonymization::ObservationMatrix;
    use crate::markov::{FreeParamVector, MobilityGraph};
    use crate::mobility::StateId;
    use crate::rng::stream_from_seed;
    use rand::Rng;

    fn col(labels: &[usize]) -> Vec<StateId> {
        labels.iter().copied().map(StateId).collect()
    }

    #[test]
    fn two_state_counts() {
        let y = ObservationMatrix::from_columns(&[col(&[1, 0, 1, 1])]).unwrap();
        assert_eq!(count_stats(&y, 2).counts, vec![vec![1, 3]]);
    }

    #[test]
    fn worked_example_paths() {
        // 1 -> 2 -> 3 -> 4 over five locations, shifted to 0-based.
        let y = ObservationMatrix::from_columns(&[col(&[0, 1, 2, 3])]).unwrap();
        assert_eq!(count_stats(&y, 5).counts[0], vec![1, 1, 1, 1, 0]);
        let t = transition_stats(&y, 5);
        let mut expected = vec![0u32; 25];
        expected[1] = 1;
        expected[5 + 2] = 1;
        expected[10 + 3] = 1;
        assert_eq!(t.matrices[0], expected);
    }

    #[test]
    fn constant_column_transitions() {
        let y = ObservationMatrix::from_columns(&[col(&[2; 7])]).unwrap();
        let t = transition_stats(&y, 3);
        assert_eq!(t.matrices[0][2 * 3 + 2], 6);
        assert_eq!(t.matrices[0].iter().sum::<u32>(), 6);
    }

    #[test]
    fn iid_kernel_values() {
        let p = IidProfile::two_state(0.5).unwrap();
        assert!((log_likelihood_iid(&p, &[1, 1]) - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        let q = IidProfile::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!((log_likelihood_iid(&q, &[0, 4, 0]) - 4.0 * 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn swap_ratio_of_two_users() {
        // Two-state users with p = 0.5 and 0.6 exchanging state-1 counts 5 and 3.
        let m = 9;
        let pi = IidProfile::two_state(0.5).unwrap();
        let pj = IidProfile::two_state(0.6).unwrap();
        let a = [m - 5, 5];
        let b = [m - 3, 3];
        let delta = (log_likelihood_iid(&pi, &a) + log_likelihood_iid(&pj, &b)
            - log_likelihood_iid(&pi, &b)
            - log_likelihood_iid(&pj, &a))
        .exp();
        assert!((delta - 4.0 / 9.0).abs() < 1e-12, "{delta}");
    }

    #[test]
    fn markov_kernel_values() {
        let map = DependencyMap::new(MobilityGraph::example_three_state());
        let t = map.expand(&FreeParamVector(vec![0.2, 0.3, 0.4])).unwrap();
        assert_eq!(log_likelihood_markov(&t, &[0; 9]), 0.0);
        // Path 0 -> 1 -> 2.
        let mut m = [0u32; 9];
        m[1] = 1;
        m[3 + 2] = 1;
        assert!((log_likelihood_markov(&t, &m) - 0.3f64.ln()).abs() < 1e-15);
        let mut off = [0u32; 9];
        off[3] = 1;
        assert_eq!(log_likelihood_markov(&t, &off), f64::NEG_INFINITY);
    }

    #[test]
    fn map_small_cases() {
        let l = LikelihoodMatrix::new(1, vec![-2.0]).unwrap();
        assert_eq!(map_assignment(&l).unwrap(), Permutation::identity(1));
        let n = 5;
        let l = LikelihoodMatrix::from_fn(n, |u, j| if u == j { 0.0 } else { -10.0 }).unwrap();
        assert_eq!(map_assignment(&l).unwrap(), Permutation::identity(n));
    }

    #[test]
    fn posterior_small_cases() {
        let l = LikelihoodMatrix::new(1, vec![-3.0]).unwrap();
        assert_eq!(posterior_pi1(&l).unwrap().weights, vec![1.0]);

        // Identical users: every pseudonym equally likely.
        let p = IidProfile::new(vec![0.2, 0.3, 0.5]).unwrap();
        let y = ObservationMatrix::from_columns(&[
            col(&[0, 0, 1]),
            col(&[2, 2, 2]),
            col(&[1, 2, 0]),
            col(&[0, 1, 1]),
        ])
        .unwrap();
        let stats = count_stats(&y, 3);
        let l = LikelihoodMatrix::iid(&vec![p; 4], &stats).unwrap();
        let post = posterior_pi1(&l).unwrap();
        for w in &post.weights {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn posterior_rejects_large_n() {
        let n = PERMANENT_FEASIBILITY_BOUND + 1;
        let l = LikelihoodMatrix::from_fn(n, |_, _| 0.0).unwrap();
        assert!(matches!(posterior_pi1(&l), Err(Error::Infeasible(_))));
    }

    #[test]
    fn posterior_two_users_closed_form() {
        // W_0 = e^{L00 + L11} / (e^{L00 + L11} + e^{L01 + L10}).
        let mut rng = stream_from_seed(41);
        for _ in 0..100 {
            let v: Vec<f64> = (0..4).map(|_| -20.0 * rng.random::<f64>()).collect();
            let l = LikelihoodMatrix::new(2, v.clone()).unwrap();
            let w = posterior_pi1(&l).unwrap().weights;
            let keep = v[0] + v[3];
            let swap = v[1] + v[2];
            let expect = 1.0 / (1.0 + (swap - keep).exp());
            assert!((w[0] - expect).abs() < 1e-14);
            assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn row_shifts_change_nothing() {
        let mut rng = stream_from_seed(42);
        for _ in 0..50 {
            let n = rng.random_range(2..7);
            let l = LikelihoodMatrix::from_fn(n, |_, _| 0.0).unwrap();
            let vals: Vec<f64> = (0..n * n).map(|_| -30.0 * rng.random::<f64>()).collect();
            let l = LikelihoodMatrix::new(n, vals).unwrap_or(l);
            let mut shifted = l.clone();
            for u in 0..n {
                shifted.add_to_row(u, 100.0 * rng.random::<f64>() - 50.0);
            }
            let a = posterior_pi1(&l).unwrap();
            let b = posterior_pi1(&shifted).unwrap();
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() < 1e-12);
            }
            assert_eq!(map_assignment(&l).unwrap(), map_assignment(&shifted).unwrap());
        }
    }

    #[test]
    fn impossible_cells_get_zero_weight() {
        let ninf = f64::NEG_INFINITY;
        let l = LikelihoodMatrix::new(3, vec![0.0, ninf, -1.0, -1.0, 0.0, ninf, ninf, -2.0, 0.0]).unwrap();
        let post = posterior_pi1(&l).unwrap();
        assert_eq!(post.weights[1], 0.0);
        assert!((post.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_posterior_is_an_error() {
        let ninf = f64::NEG_INFINITY;
        // Users 1 and 2 both only explain pseudonym 0.
        let l = LikelihoodMatrix::new(3, vec![0.0, 0.0, 0.0, 0.0, ninf, ninf, 0.0, ninf, ninf]).unwrap();
        assert!(matches!(posterior_pi1(&l), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reduced_statistic_variant_differs_from_exact() {
        let map = DependencyMap::new(MobilityGraph::example_three_state());
        let mut rng = stream_from_seed(43);
        let chains: Vec<_> = (0..3)
            .map(|_| map.expand(&map.sample_params(&crate::mobility::DensityKind::UniformSimplex, &mut rng)).unwrap())
            .collect();
        let y = ObservationMatrix::from_columns(&[
            col(&[0, 0, 2, 1, 2, 0]),
            col(&[0, 1, 2, 0, 2, 1]),
            col(&[0, 2, 0, 0, 1, 2]),
        ])
        .unwrap();
        let stats = transition_stats(&y, 3);
        let exact = LikelihoodMatrix::markov(&chains, &stats).unwrap();
        let reduced = LikelihoodMatrix::markov_free_edges_only(&chains, &stats, &map).unwrap();
        assert_ne!(exact, reduced);
        assert!(reduced.as_slice().iter().all(|v| v.is_finite()));
    }
}
