//! User mobility laws: i.i.d. location profiles, the bounded prior they are
//! drawn from, trajectory generation, and profile fitting from traces.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::markov::{DependencyMap, FreeParamVector, TransitionMatrix};

/// Profiles closer than this to the simplex boundary are rejected and resampled.
pub const BOUNDARY_GUARD: f64 = 1e-9;

const SUM_TOLERANCE: f64 = 1e-12;

/// A location label, 0-based internally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Probability vector of an i.i.d. mover: `probs[i] = P(X_u(k) = i)`.
///
/// Every entry lies strictly inside (0, 1). For two states the conventional
/// scalar `p` is `probs[1]`, the probability of being at state 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IidProfile {
    probs: Vec<f64>,
}

impl IidProfile {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProfile(format!(
                "need at least 2 locations, got {}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::InvalidProfile(format!(
                "probability {p} is not strictly inside (0, 1)"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProfile(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Two-state profile with probability `p` of being at state 1.
    pub fn two_state(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn r(&self) -> usize {
        self.probs.len()
    }

    pub fn prob(&self, s: StateId) -> f64 {
        self.probs[s.index()]
    }

    fn within_guard(&self) -> bool {
        self.probs.iter().all(|&p| p > BOUNDARY_GUARD)
    }
}

/// Shape of the prior density over a simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityKind {
    /// Uniform on the open simplex.
    UniformSimplex,
    /// `w * uniform + (1 - w) * Dirichlet(a, .., a)` with `a >= 1`, a bump
    /// centred on the barycentre. Bounded above and away from zero.
    BoundedMixture { uniform_weight: f64, concentration: f64 },
}

impl DensityKind {
    fn validate(&self) -> Result<()> {
        if let DensityKind::BoundedMixture {
            uniform_weight,
            concentration,
        } = *self
        {
            if !(uniform_weight > 0.0 && uniform_weight <= 1.0) {
                return Err(Error::InvalidDensity(format!(
                    "uniform_weight {uniform_weight} must lie in (0, 1]"
                )));
            }
            if !(concentration >= 1.0 && concentration.is_finite()) {
                return Err(Error::InvalidDensity(format!(
                    "concentration {concentration} must be finite and >= 1"
                )));
            }
        }
        Ok(())
    }

    /// Density bounds `(delta1, delta2)` on a simplex with `k` vertices,
    /// w.r.t. Lebesgue measure on its first `k - 1` coordinates.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let uniform = ln_gamma(k as f64).exp();
        match *self {
            DensityKind::UniformSimplex => (uniform, uniform),
            DensityKind::BoundedMixture {
                uniform_weight,
                concentration,
            } => {
                let peak = symmetric_dirichlet_peak(k, concentration);
                (
                    uniform_weight * uniform,
                    uniform_weight * uniform + (1.0 - uniform_weight) * peak,
                )
            }
        }
    }

    /// Density at a point of the simplex given by its full coordinate vector.
    pub fn density_at(&self, x: &[f64]) -> f64 {
        let k = x.len();
        let inside = x.iter().all(|&v| v > 0.0) && (x.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !inside {
            return 0.0;
        }
        let uniform = ln_gamma(k as f64).exp();
        match *self {
            DensityKind::UniformSimplex => uniform,
            DensityKind::BoundedMixture {
                uniform_weight,
                concentration,
            } => {
                let a = concentration;
                let ln_norm = ln_gamma(k as f64 * a) - k as f64 * ln_gamma(a);
                let ln_kernel: f64 = x.iter().map(|v| (a - 1.0) * v.ln()).sum();
                uniform_weight * uniform + (1.0 - uniform_weight) * (ln_norm + ln_kernel).exp()
            }
        }
    }

    /// One raw draw on the simplex with `k` vertices.
    pub fn sample_point<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let a = match *self {
            DensityKind::UniformSimplex => 1.0,
            DensityKind::BoundedMixture {
                uniform_weight,
                concentration,
            } => {
                if rng.random::<f64>() < uniform_weight {
                    1.0
                } else {
                    concentration
                }
            }
        };
        sample_symmetric_dirichlet(k, a, rng)
    }

    /// Draw on the simplex, resampling anything within [`BOUNDARY_GUARD`] of the boundary.
    pub fn sample_interior<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        loop {
            let x = self.sample_point(k, rng);
            if x.iter().all(|&v| v > BOUNDARY_GUARD) {
                return x;
            }
        }
    }
}

fn symmetric_dirichlet_peak(k: usize, a: f64) -> f64 {
    let kf = k as f64;
    (ln_gamma(kf * a) - kf * ln_gamma(a) - kf * (a - 1.0) * kf.ln()).exp()
}

fn sample_symmetric_dirichlet<R: Rng + ?Sized>(k: usize, a: f64, rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = if a == 1.0 {
        (0..k).map(|_| Exp1.sample(rng)).collect()
    } else {
        let gamma = Gamma::new(a, 1.0).expect("shape >= 1 is valid");
        (0..k).map(|_| gamma.sample(rng)).collect()
    };
    let total: f64 = draws.iter().sum();
    for v in &mut draws {
        *v /= total;
    }
    draws
}

/// Prior density `f_P` over i.i.d. profiles with `r` locations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileDensity {
    kind: DensityKind,
    r: usize,
}

impl ProfileDensity {
    pub fn new(kind: DensityKind, r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidDensity(format!("need r >= 2, got {r}")));
        }
        kind.validate()?;
        let (lo, hi) = kind.bounds(r);
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidDensity(format!(
                "density bounds ({lo}, {hi}) violate 0 < delta1 <= delta2 < inf"
            )));
        }
        Ok(Self { kind, r })
    }

    pub fn uniform_simplex(r: usize) -> Result<Self> {
        Self::new(DensityKind::UniformSimplex, r)
    }

    pub fn bounded_mixture(r: usize, uniform_weight: f64, concentration: f64) -> Result<Self> {
        Self::new(
            DensityKind::BoundedMixture {
                uniform_weight,
                concentration,
            },
            r,
        )
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// `(delta1, delta2)` with `delta1 <= f_P <= delta2` on the support.
    pub fn bounds(&self) -> (f64, f64) {
        self.kind.bounds(self.r)
    }

    pub fn density_at(&self, probs: &[f64]) -> f64 {
        if probs.len() != self.r {
            return 0.0;
        }
        self.kind.density_at(probs)
    }
}

pub fn sample_profile<R: Rng + ?Sized>(density: &ProfileDensity, rng: &mut R) -> IidProfile {
    loop {
        let x = density.kind.sample_point(density.r, rng);
        if let Ok(profile) = IidProfile::new(x) {
            if profile.within_guard() {
                return profile;
            }
        }
    }
}

/// A user's observed locations at times `time_base, time_base + 1, ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub time_base: usize,
}

impl Trajectory {
    pub fn new(states: Vec<StateId>) -> Self {
        Self {
            states,
            time_base: 1,
        }
    }

    pub fn from_indices(indices: &[usize]) -> Self {
        Self::new(indices.iter().copied().map(StateId).collect())
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Visit counts per state.
    pub fn counts(&self, r: usize) -> Vec<u32> {
        let mut counts = vec![0u32; r];
        for s in &self.states {
            counts[s.index()] += 1;
        }
        counts
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn draw_state<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> StateId {
    let u: f64 = rng.random::<f64>() * cumulative[cumulative.len() - 1];
    let idx = cumulative.partition_point(|&c| c <= u);
    StateId(idx.min(cumulative.len() - 1))
}

pub(crate) fn cumulative(probs: &[f64]) -> Vec<f64> {
    probs
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

pub fn sample_trajectory_iid<R: Rng + ?Sized>(
    profile: &IidProfile,
    m: usize,
    rng: &mut R,
) -> Trajectory {
    let cdf = cumulative(profile.probs());
    Trajectory::new((0..m).map(|_| draw_state(&cdf, rng)).collect())
}

/// Laplace-smoothed frequency estimate `(count_i + s) / (m + r s)`.
pub fn fit_iid_profile(trace: &Trajectory, r: usize, smoothing: f64) -> Result<IidProfile> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "smoothing must be finite and >= 0, got {smoothing}"
        )));
    }
    if trace.is_empty() && smoothing == 0.0 {
        return Err(Error::InvalidParams(
            "cannot fit a profile to an empty trace without smoothing".into(),
        ));
    }
    if let Some(s) = trace.states.iter().find(|s| s.index() >= r) {
        return Err(Error::OutOfRange(format!(
            "state {} outside 0..{r}",
            s.index()
        )));
    }
    let counts = trace.counts(r);
    let denom = trace.len() as f64 + r as f64 * smoothing;
    IidProfile::new(
        counts
            .iter()
            .map(|&c| (c as f64 + smoothing) / denom)
            .collect(),
    )
}

/// The mobility laws of a whole population, homogeneous in model kind.
#[derive(Debug, Clone)]
pub enum Population {
    Iid(Vec<IidProfile>),
    Markov {
        params: Vec<FreeParamVector>,
        chains: Vec<TransitionMatrix>,
    },
}

impl Population {
    pub fn iid(profiles: Vec<IidProfile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::InvalidParams("population needs n >= 1".into()));
        }
        let r = profiles[0].r();
        if profiles.iter().any(|p| p.r() != r) {
            return Err(Error::InvalidParams(
                "profiles disagree on the number of locations".into(),
            ));
        }
        Ok(Population::Iid(profiles))
    }

    pub fn markov(map: &DependencyMap, params: Vec<FreeParamVector>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidParams("population needs n >= 1".into()));
        }
        let chains = params
            .iter()
            .map(|p| map.expand(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Population::Markov { params, chains })
    }

    pub fn len(&self) -> usize {
        match self {
            Population::Iid(p) => p.len(),
            Population::Markov { chains, .. } => chains.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_from_seed;

    #[test]
    fn profile_rejects_boundary_and_bad_sums() {
        assert!(IidProfile::new(vec![0.0, 1.0]).is_err());
        assert!(IidProfile::new(vec![0.5, 0.6]).is_err());
        assert!(IidProfile::new(vec![1.0]).is_err());
        assert!(IidProfile::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn two_state_sample_is_a_complementary_pair() {
        let density = ProfileDensity::uniform_simplex(2).unwrap();
        let mut rng = stream_from_seed(1);
        for _ in 0..100 {
            let p = sample_profile(&density, &mut rng);
            assert_eq!(p.r(), 2);
            assert!(p.probs()[1] > 0.0 && p.probs()[1] < 1.0);
            assert!((p.probs()[0] + p.probs()[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_two_state_mean_is_one_half() {
        let density = ProfileDensity::uniform_simplex(2).unwrap();
        let mut rng = stream_from_seed(2);
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| sample_profile(&density, &mut rng).probs()[1])
            .sum::<f64>()
            / draws as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn uniform_three_state_corner_mass() {
        // Exact: the region p_0 > 1/2 is a corner simplex scaled by 1/2 in
        // both free coordinates, so it holds (1/2)^2 = 0.25 of the volume.
        let density = ProfileDensity::uniform_simplex(3).unwrap();
        let mut rng = stream_from_seed(3);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| sample_profile(&density, &mut rng).probs()[0] > 0.5)
            .count();
        let frac = hits as f64 / draws as f64;
        assert!((frac - 0.25).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn uniform_density_bounds() {
        let d2 = ProfileDensity::uniform_simplex(2).unwrap();
        assert_eq!(d2.bounds(), (1.0, 1.0));
        let d3 = ProfileDensity::uniform_simplex(3).unwrap();
        let (lo, hi) = d3.bounds();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_bounds_bracket_the_density() {
        let d = ProfileDensity::bounded_mixture(3, 0.4, 3.0).unwrap();
        let (lo, hi) = d.bounds();
        assert!(lo > 0.0 && lo < hi);
        let mut rng = stream_from_seed(4);
        for _ in 0..2000 {
            let x = d.kind().sample_interior(3, &mut rng);
            let f = d.density_at(&x);
            assert!(f >= lo - 1e-9 && f <= hi + 1e-9, "{f} not in [{lo}, {hi}]");
        }
        // The peak is attained at the barycentre.
        let centre = d.density_at(&[1.0 / 3.0; 3]);
        assert!((centre - hi).abs() < 1e-9);
    }

    #[test]
    fn mixture_rejects_bad_parameters() {
        assert!(ProfileDensity::bounded_mixture(3, 0.0, 3.0).is_err());
        assert!(ProfileDensity::bounded_mixture(3, 0.5, 0.5).is_err());
        assert!(ProfileDensity::uniform_simplex(1).is_err());
    }

    #[test]
    fn sampling_is_reproducible() {
        let density = ProfileDensity::bounded_mixture(4, 0.5, 2.0).unwrap();
        let a: Vec<_> = {
            let mut rng = stream_from_seed(9);
            (0..20).map(|_| sample_profile(&density, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = stream_from_seed(9);
            (0..20).map(|_| sample_profile(&density, &mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn empty_trajectory() {
        let p = IidProfile::two_state(0.3).unwrap();
        let mut rng = stream_from_seed(5);
        assert!(sample_trajectory_iid(&p, 0, &mut rng).is_empty());
    }

    #[test]
    fn fair_coin_frequency() {
        let p = IidProfile::two_state(0.5).unwrap();
        let mut rng = stream_from_seed(6);
        let t = sample_trajectory_iid(&p, 100_000, &mut rng);
        let freq = t.counts(2)[1] as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn trajectory_states_in_range() {
        let p = IidProfile::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut rng = stream_from_seed(7);
        let t = sample_trajectory_iid(&p, 5000, &mut rng);
        assert!(t.states.iter().all(|s| s.index() < 4));
    }

    #[test]
    fn fit_profile_formula() {
        let t = Trajectory::from_indices(&[0, 0, 1, 0]);
        let p = fit_iid_profile(&t, 2, 1.0).unwrap();
        assert!((p.probs()[0] - 4.0 / 6.0).abs() < 1e-15);
        assert!((p.probs()[1] - 2.0 / 6.0).abs() < 1e-15);

        let t = Trajectory::from_indices(&[1, 1, 1, 1, 1]);
        assert!(fit_iid_profile(&t, 2, 0.0).is_err());

        let t = Trajectory::from_indices(&[0, 1, 1, 0]);
        assert_eq!(fit_iid_profile(&t, 2, 0.0).unwrap().probs(), &[0.5, 0.5]);

        assert!(fit_iid_profile(&Trajectory::new(vec![]), 2, 0.0).is_err());
        let p = fit_iid_profile(&Trajectory::new(vec![]), 3, 1.0).unwrap();
        assert!(p.probs().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn smoothed_fit_is_interior() {
        let mut rng = stream_from_seed(8);
        for len in 0..30 {
            let t = Trajectory::new((0..len).map(|_| StateId(rng.random_range(0..3))).collect());
            let p = fit_iid_profile(&t, 3, 0.5).unwrap();
            assert!(p.probs().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}
