//! Pseudonym assignment and the adversary's view of the data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::markov::MobilityGraph;
use crate::mobility::{StateId, Trajectory};

/// Bijection on `0..n`. `forward[u]` is the pseudonym of user `u`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (u, &j) in forward.iter().enumerate() {
            if j >= n || inverse[j] != usize::MAX {
                return Err(Error::InvalidParams(format!(
                    "{forward:?} is not a permutation of 0..{n}"
                )));
            }
            inverse[j] = u;
        }
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Pseudonym of user `u`.
    #[inline]
    pub fn apply(&self, u: usize) -> usize {
        self.forward[u]
    }

    /// User behind pseudonym `j`.
    #[inline]
    pub fn user_of(&self, j: usize) -> usize {
        self.inverse[j]
    }

    pub fn invert(&self) -> Self {
        Self {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }
}

/// Uniform draw from the symmetric group via a Fisher-Yates shuffle.
pub fn sample_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Permutation {
    let mut forward: Vec<usize> = (0..n).collect();
    forward.shuffle(rng);
    Permutation::from_forward(forward).expect("a shuffle is a bijection")
}

/// `m x n` matrix of anonymized observations; column `j` is the trajectory of
/// the user holding pseudonym `j`. Stored column-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMatrix {
    m: usize,
    n: usize,
    data: Vec<StateId>,
}

impl ObservationMatrix {
    pub fn from_columns(columns: &[Vec<StateId>]) -> Result<Self> {
        let n = columns.len();
        let m = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::LengthMismatch(
                "observation columns differ in length".into(),
            ));
        }
        Ok(Self {
            m,
            n,
            data: columns.concat(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[StateId] {
        &self.data[j * self.m..(j + 1) * self.m]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [StateId] {
        &mut self.data[j * self.m..(j + 1) * self.m]
    }

    /// Observation of pseudonym `j` at 1-based time `k`.
    pub fn at(&self, k: usize, j: usize) -> StateId {
        self.data[j * self.m + k - 1]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[StateId]> {
        self.data.chunks(self.m.max(1)).take(self.n)
    }
}

/// Place user `u`'s trajectory in column `perm.apply(u)`.
pub fn anonymize(trajectories: &[Trajectory], perm: &Permutation) -> Result<ObservationMatrix> {
    let n = trajectories.len();
    if perm.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{n} trajectories but a permutation of {}",
            perm.len()
        )));
    }
    let m = trajectories.first().map_or(0, Trajectory::len);
    if trajectories.iter().any(|t| t.len() != m) {
        return Err(Error::LengthMismatch(
            "trajectories differ in length".into(),
        ));
    }
    let mut data = Vec::with_capacity(m * n);
    for j in 0..n {
        data.extend_from_slice(&trajectories[perm.user_of(j)].states);
    }
    Ok(ObservationMatrix { m, n, data })
}

/// Observation budget `m(n) = max(1, round_half_up(c n^beta))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationSchedule {
    c: f64,
    beta: f64,
}

impl ObservationSchedule {
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "schedule needs c > 0 and beta > 0, got c={c}, beta={beta}"
            )));
        }
        Ok(Self { c, beta })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn observations(&self, n: usize) -> usize {
        let raw = self.c * (n as f64).powf(self.beta);
        ((raw + 0.5).floor() as usize).max(1)
    }
}

pub fn schedule_observations(n: usize, sched: &ObservationSchedule) -> usize {
    sched.observations(n)
}

/// What the threshold exponent depends on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelDescriptor {
    Iid { r: usize },
    Markov { r: usize, edges: usize },
}

impl ModelDescriptor {
    pub fn markov(graph: &MobilityGraph) -> Self {
        ModelDescriptor::Markov {
            r: graph.r(),
            edges: graph.num_edges(),
        }
    }

    /// `2 / (r - 1)` for i.i.d. movers, `2 / (|E| - r)` for Markov movers.
    pub fn threshold_exponent(&self) -> Result<f64> {
        match *self {
            ModelDescriptor::Iid { r } if r >= 2 => Ok(2.0 / (r - 1) as f64),
            ModelDescriptor::Iid { r } => Err(Error::InvalidParams(format!(
                "i.i.d. model needs r >= 2, got {r}"
            ))),
            ModelDescriptor::Markov { r, edges } if edges > r => Ok(2.0 / (edges - r) as f64),
            ModelDescriptor::Markov { .. } => Err(Error::InvalidParams(
                "Markov graph has no free parameters (d = 0): threshold undefined".into(),
            )),
        }
    }
}

pub fn threshold_exponent(model: &ModelDescriptor) -> Result<f64> {
    model.threshold_exponent()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_from_seed;
    use rand::Rng;
    use proptest::prelude::*;

    fn traj(labels: &[usize]) -> Trajectory {
        Trajectory::from_indices(labels)
    }

    #[test]
    fn single_user_permutation_is_identity() {
        let mut rng = stream_from_seed(0);
        assert_eq!(sample_permutation(1, &mut rng), Permutation::identity(1));
    }

    #[test]
    fn worked_three_user_example() {
        // Labels kept 1-based here; the matrix does not interpret them.
        let x = [traj(&[1, 2, 3, 4]), traj(&[2, 1, 3, 5]), traj(&[4, 5, 1, 3])];
        let perm = Permutation::from_forward(vec![2, 0, 1]).unwrap();
        let y = anonymize(&x, &perm).unwrap();
        assert_eq!(y.column(0), traj(&[2, 1, 3, 5]).states.as_slice());
        assert_eq!(y.column(1), traj(&[4, 5, 1, 3]).states.as_slice());
        assert_eq!(y.column(2), traj(&[1, 2, 3, 4]).states.as_slice());
        assert_eq!(y.at(4, 0), StateId(5));
    }

    #[test]
    fn identity_keeps_order() {
        let x = [traj(&[0, 1]), traj(&[1, 1])];
        let y = anonymize(&x, &Permutation::identity(2)).unwrap();
        assert_eq!(y.column(0), x[0].states.as_slice());
        assert_eq!(y.column(1), x[1].states.as_slice());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let x = [traj(&[0, 1]), traj(&[1])];
        assert!(anonymize(&x, &Permutation::identity(2)).is_err());
        assert!(anonymize(&x[..1], &Permutation::identity(2)).is_err());
    }

    #[test]
    fn permutation_rejects_non_bijection() {
        assert!(Permutation::from_forward(vec![0, 0]).is_err());
        assert!(Permutation::from_forward(vec![0, 2]).is_err());
    }

    #[test]
    fn three_element_uniformity() {
        // Chi-square with 5 degrees of freedom; 20.52 is the 0.999 quantile.
        let mut rng = stream_from_seed(21);
        let draws = 60_000;
        let mut counts = std::collections::HashMap::new();
        for _ in 0..draws {
            *counts
                .entry(sample_permutation(3, &mut rng).forward().to_vec())
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 20.52, "chi2 = {chi2}");
    }

    #[test]
    fn schedule_rounding() {
        let s = |c, b| ObservationSchedule::new(c, b).unwrap();
        assert_eq!(schedule_observations(10, &s(1.0, 2.0)), 100);
        assert_eq!(schedule_observations(3, &s(0.5, 1.0)), 2);
        assert_eq!(schedule_observations(1, &s(0.2, 2.0)), 1);
        assert!(ObservationSchedule::new(0.0, 1.0).is_err());
        assert!(ObservationSchedule::new(1.0, -1.0).is_err());
    }

    #[test]
    fn thresholds() {
        assert_eq!(ModelDescriptor::Iid { r: 2 }.threshold_exponent().unwrap(), 2.0);
        assert_eq!(ModelDescriptor::Iid { r: 3 }.threshold_exponent().unwrap(), 1.0);
        let g = MobilityGraph::example_three_state();
        assert_eq!(
            threshold_exponent(&ModelDescriptor::markov(&g)).unwrap(),
            2.0 / 3.0
        );
        assert!(ModelDescriptor::Markov { r: 3, edges: 3 }.threshold_exponent().is_err());
        assert!(ModelDescriptor::Iid { r: 1 }.threshold_exponent().is_err());
        // An i.i.d. model on d + 1 locations shares the Markov exponent.
        for d in 1..8 {
            let iid = ModelDescriptor::Iid { r: d + 1 }.threshold_exponent().unwrap();
            let mk = ModelDescriptor::Markov { r: 5, edges: 5 + d }.threshold_exponent().unwrap();
            assert_eq!(iid, mk);
        }
    }

    proptest! {
        #[test]
        fn forward_column_recovers_user(n in 1usize..12, m in 0usize..6, seed in any::<u64>()) {
            let mut rng = stream_from_seed(seed);
            let x: Vec<Trajectory> = (0..n)
                .map(|_| Trajectory::new((0..m).map(|_| StateId(rng.random_range(0..4))).collect()))
                .collect();
            let perm = sample_permutation(n, &mut rng);
            let y = anonymize(&x, &perm).unwrap();
            for (u, t) in x.iter().enumerate() {
                prop_assert_eq!(y.column(perm.apply(u)), t.states.as_slice());
                prop_assert_eq!(perm.user_of(perm.apply(u)), u);
            }
        }

        #[test]
        fn schedule_is_monotone(n in 1usize..500, c in 0.1f64..5.0, beta in 0.1f64..3.0) {
            let s = ObservationSchedule::new(c, beta).unwrap();
            prop_assert!(s.observations(n + 1) >= s.observations(n));
            prop_assert!(ObservationSchedule::new(c * 1.5, beta).unwrap().observations(n) >= s.observations(n));
            prop_assert!(ObservationSchedule::new(c, beta + 0.25).unwrap().observations(n) >= s.observations(n));
        }
    }
}
