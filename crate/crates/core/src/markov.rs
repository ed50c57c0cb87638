//! Markov-chain mobility.
//!
//! A [`MobilityGraph`] fixes which transitions may carry positive probability.
//! Row-stochasticity leaves `d = |E| - r` free transition probabilities; the
//! [`DependencyMap`] recovers the remaining (dependent) edge per state as an
//! affine function of the free ones.

use std::collections::VecDeque;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::mobility::{cumulative, draw_state, DensityKind, StateId, Trajectory};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Directed support graph of a chain, with the chosen free edges `E_d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MobilityGraph {
    r: usize,
    /// Lexicographically sorted `(from, to)` pairs.
    edges: Vec<(usize, usize)>,
    /// `free[e]` marks membership of `edges[e]` in `E_d`.
    free: Vec<bool>,
}

impl MobilityGraph {
    /// Graph with the canonical free-edge choice: on every row, all out-edges
    /// except the one with the largest target are free.
    pub fn new(r: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::build(r, edges.into_iter().map(|(i, j)| (i, j, None)).collect())
    }

    /// Graph with an explicit free-edge choice. Each state needs exactly one
    /// non-free (dependent) out-edge.
    pub fn with_free_edges(
        r: usize,
        edges: impl IntoIterator<Item = (usize, usize, bool)>,
    ) -> Result<Self> {
        Self::build(
            r,
            edges.into_iter().map(|(i, j, f)| (i, j, Some(f))).collect(),
        )
    }

    /// Three states: 0 -> {0, 1, 2}, 1 -> {2}, 2 -> {0, 1}, free parameters on
    /// (0,0), (0,1) and (2,1). Six edges, three degrees of freedom.
    pub fn example_three_state() -> Self {
        Self::with_free_edges(
            3,
            [
                (0, 0, true),
                (0, 1, true),
                (0, 2, false),
                (1, 2, false),
                (2, 0, false),
                (2, 1, true),
            ],
        )
        .expect("static graph is valid")
    }

    /// `flags[e] = None` requests the canonical rule for that edge's row. A row
    /// must be either all explicit or all canonical.
    fn build(r: usize, mut spec: Vec<(usize, usize, Option<bool>)>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidGraph("graph needs at least one state".into()));
        }
        if let Some(&(i, j, _)) = spec.iter().find(|(i, j, _)| *i >= r || *j >= r) {
            return Err(Error::InvalidGraph(format!(
                "edge ({i}, {j}) references a state outside 0..{r}"
            )));
        }
        spec.sort_by_key(|&(i, j, _)| (i, j));
        if let Some(w) = spec.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }

        let mut free = vec![false; spec.len()];
        let mut start = 0;
        for state in 0..r {
            let end = start + spec[start..].iter().take_while(|e| e.0 == state).count();
            if end == start {
                return Err(Error::InvalidGraph(format!(
                    "state {} has no outgoing edge",
                    state + 1
                )));
            }
            let row = &spec[start..end];
            let explicit = row.iter().filter(|e| e.2.is_some()).count();
            if explicit == 0 {
                for f in &mut free[start..end - 1] {
                    *f = true;
                }
            } else if explicit == row.len() {
                let dependent = row.iter().filter(|e| e.2 == Some(false)).count();
                if dependent != 1 {
                    return Err(Error::InvalidGraph(format!(
                        "state {} must have exactly one dependent edge, found {dependent}",
                        state + 1
                    )));
                }
                for (f, e) in free[start..end].iter_mut().zip(row) {
                    *f = e.2 == Some(true);
                }
            } else {
                return Err(Error::InvalidGraph(format!(
                    "state {} mixes explicit and automatic free flags",
                    state + 1
                )));
            }
            start = end;
        }

        Ok(Self {
            r,
            edges: spec.iter().map(|&(i, j, _)| (i, j)).collect(),
            free,
        })
    }

    /// Parse the `from,to,free` CSV format. States are 1-based in the file;
    /// `free` is `0`, `1` or `auto`. The state count is the largest label
    /// unless `r` is given.
    pub fn from_csv_reader<R: Read>(reader: R, r: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("graph file is missing column `{name}`")))
        };
        let (ci, cj, cf) = (col("from")?, col("to")?, col("free")?);
        let mut spec = Vec::new();
        let mut max_label = 0;
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let label = |c: usize| -> Result<usize> {
                let v: usize = record[c].parse().map_err(|_| {
                    Error::Parse(format!("row {}: bad state label `{}`", line + 2, &record[c]))
                })?;
                if v == 0 {
                    return Err(Error::Parse(format!(
                        "row {}: state labels are 1-based",
                        line + 2
                    )));
                }
                Ok(v)
            };
            let (i, j) = (label(ci)?, label(cj)?);
            max_label = max_label.max(i).max(j);
            let flag = match &record[cf] {
                "0" => Some(false),
                "1" => Some(true),
                "auto" => None,
                other => {
                    return Err(Error::Parse(format!(
                        "row {}: free must be 0, 1 or auto, got `{other}`",
                        line + 2
                    )))
                }
            };
            spec.push((i - 1, j - 1, flag));
        }
        Self::build(r.unwrap_or(max_label), spec)
    }

    pub fn load(path: impl AsRef<Path>, r: Option<usize>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file, r)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_free(&self, edge_index: usize) -> bool {
        self.free[edge_index]
    }

    /// Ordered free edges `E_d`.
    pub fn free_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .zip(&self.free)
            .filter(|(_, &f)| f)
            .map(|(&e, _)| e)
            .collect()
    }

    /// Dependent edge of every state, in state order.
    pub fn dependent_edges(&self) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .zip(&self.free)
            .filter(|(_, &f)| !f)
            .map(|(&e, _)| e)
            .collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i, j)).is_ok()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|e| e.0 == i).count()
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.edges.len() - self.r
    }
}

pub fn degrees_of_freedom(graph: &MobilityGraph) -> usize {
    graph.degrees_of_freedom()
}

/// Values of the free transition probabilities, in `E_d` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParamVector(pub Vec<f64>);

impl FreeParamVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Row-stochastic `r x r` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    r: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(r: usize, data: Vec<f64>) -> Result<Self> {
        if r == 0 || data.len() != r * r {
            return Err(Error::InvalidChain(format!(
                "expected {r}x{r} entries, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::InvalidChain(format!("entry {v} is not a probability")));
        }
        for (i, row) in data.chunks(r).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidChain(format!("row {} sums to {s}", i + 1)));
            }
        }
        Ok(Self { r, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if rows.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidChain("matrix is not square".into()));
        }
        Self::new(r, rows.concat())
    }

    pub fn r(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.r + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Distribution after one step from `dist`.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        for (i, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.row(i)) {
                *o += w * t;
            }
        }
        out
    }
}

/// Affine map between free parameters and full transition matrices.
///
/// Dependent probabilities are `constants[k] + sum_i params[i] * coefficients[i][k]`
/// with `constants = 1` and `coefficients[i][k] = -1` exactly when free edge `i`
/// leaves the same state as dependent edge `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DependencyMap {
    graph: MobilityGraph,
    free_edges: Vec<(usize, usize)>,
    dependent_edges: Vec<(usize, usize)>,
    coefficients: Vec<Vec<f64>>,
    constants: Vec<f64>,
}

impl DependencyMap {
    pub fn new(graph: MobilityGraph) -> Self {
        let free_edges = graph.free_edges();
        let dependent_edges = graph.dependent_edges();
        let coefficients = free_edges
            .iter()
            .map(|&(fi, _)| {
                dependent_edges
                    .iter()
                    .map(|&(di, _)| if di == fi { -1.0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let constants = vec![1.0; dependent_edges.len()];
        Self {
            graph,
            free_edges,
            dependent_edges,
            coefficients,
            constants,
        }
    }

    pub fn graph(&self) -> &MobilityGraph {
        &self.graph
    }

    pub fn d(&self) -> usize {
        self.free_edges.len()
    }

    pub fn free_edges(&self) -> &[(usize, usize)] {
        &self.free_edges
    }

    pub fn dependent_edges(&self) -> &[(usize, usize)] {
        &self.dependent_edges
    }

    /// The `d x r` linear part of the map.
    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn expand(&self, params: &FreeParamVector) -> Result<TransitionMatrix> {
        let p = params.values();
        if p.len() != self.d() {
            return Err(Error::LengthMismatch(format!(
                "expected {} free parameters, got {}",
                self.d(),
                p.len()
            )));
        }
        if let Some(v) = p.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidParams(format!(
                "free parameter {v} is not strictly inside (0, 1)"
            )));
        }
        let r = self.graph.r();
        let mut data = vec![0.0; r * r];
        for (&(i, j), &v) in self.free_edges.iter().zip(p) {
            data[i * r + j] = v;
        }
        for (k, &(i, j)) in self.dependent_edges.iter().enumerate() {
            let mut v = self.constants[k];
            for (coef, &x) in self.coefficients.iter().zip(p) {
                v += coef[k] * x;
            }
            if v <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "dependent probability on edge ({}, {}) is {v} <= 0",
                    i + 1,
                    j + 1
                )));
            }
            data[i * r + j] = v;
        }
        TransitionMatrix::new(r, data)
    }

    /// Read the free parameters back out of a matrix whose support is exactly `E`.
    pub fn contract(&self, t: &TransitionMatrix) -> Result<FreeParamVector> {
        let r = self.graph.r();
        if t.r() != r {
            return Err(Error::LengthMismatch(format!(
                "matrix has {} states, graph has {r}",
                t.r()
            )));
        }
        for i in 0..r {
            for j in 0..r {
                let on_graph = self.graph.has_edge(i, j);
                let v = t.get(i, j);
                if on_graph != (v > 0.0) {
                    return Err(Error::InvalidChain(format!(
                        "support mismatch at ({}, {}): value {v}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(FreeParamVector(
            self.free_edges.iter().map(|&(i, j)| t.get(i, j)).collect(),
        ))
    }

    /// Draw free parameters row by row from a density on each row's simplex.
    pub fn sample_params<R: Rng + ?Sized>(&self, kind: &DensityKind, rng: &mut R) -> FreeParamVector {
        let r = self.graph.r();
        let mut full = vec![0.0; r * r];
        for i in 0..r {
            let targets: Vec<usize> = self
                .graph
                .edges()
                .iter()
                .filter(|e| e.0 == i)
                .map(|e| e.1)
                .collect();
            if targets.len() == 1 {
                full[i * r + targets[0]] = 1.0;
                continue;
            }
            let x = kind.sample_interior(targets.len(), rng);
            for (&j, v) in targets.iter().zip(x) {
                full[i * r + j] = v;
            }
        }
        FreeParamVector(
            self.free_edges
                .iter()
                .map(|&(i, j)| full[i * r + j])
                .collect(),
        )
    }
}

pub fn expand_free_params(params: &FreeParamVector, map: &DependencyMap) -> Result<TransitionMatrix> {
    map.expand(params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Period of the class reachable from state 0 (gcd of its cycle lengths).
    pub period: usize,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn reachable(r: usize, from: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; r];
    let mut queue = VecDeque::from([from]);
    seen[from] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..r {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

/// Irreducibility (one strongly connected class) and aperiodicity on the
/// positive entries. The period is computed from BFS levels out of state 0:
/// the gcd of `level(i) + 1 - level(j)` over edges `i -> j` inside the class.
pub fn validate_chain(t: &TransitionMatrix) -> ChainReport {
    let r = t.r();
    let fwd = reachable(r, 0, |i, j| t.get(i, j) > 0.0);
    let bwd = reachable(r, 0, |i, j| t.get(j, i) > 0.0);
    let irreducible = fwd.iter().all(|&b| b) && bwd.iter().all(|&b| b);

    let in_class: Vec<bool> = fwd.iter().zip(&bwd).map(|(a, b)| *a && *b).collect();
    let mut level = vec![usize::MAX; r];
    level[0] = 0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for j in 0..r {
            if in_class[j] && t.get(i, j) > 0.0 && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let mut period = 0;
    for i in (0..r).filter(|&i| in_class[i]) {
        for j in (0..r).filter(|&j| in_class[j] && t.get(i, j) > 0.0) {
            let diff = (level[i] + 1).abs_diff(level[j]);
            period = gcd(period, diff);
        }
    }
    ChainReport {
        irreducible,
        aperiodic: period == 1,
        period,
    }
}

/// Unique stationary law of an irreducible aperiodic chain, from a direct
/// linear solve of `pi (T - I) = 0`, `sum pi = 1`.
pub fn stationary_distribution(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let report = validate_chain(t);
    if !report.irreducible || !report.aperiodic {
        return Err(Error::InvalidChain(format!(
            "chain must be irreducible and aperiodic (irreducible={}, period={})",
            report.irreducible, report.period
        )));
    }
    let r = t.r();
    let mut a = DMatrix::<f64>::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            a[(j, i)] = t.get(i, j) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for i in 0..r {
        a[(r - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(r);
    b[r - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Degenerate("singular stationary system".into()))?;
    let mut pi: Vec<f64> = pi.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= total;
    }
    Ok(pi)
}

pub fn sample_trajectory_markov<R: Rng + ?Sized>(
    t: &TransitionMatrix,
    m: usize,
    rng: &mut R,
) -> Trajectory {
    if m == 0 {
        return Trajectory::new(Vec::new());
    }
    let cdfs: Vec<Vec<f64>> = (0..t.r()).map(|i| cumulative(t.row(i))).collect();
    let mut states = Vec::with_capacity(m);
    let mut current = StateId(0);
    states.push(current);
    for _ in 1..m {
        current = draw_state(&cdfs[current.index()], rng);
        states.push(current);
    }
    Trajectory::new(states)
}

/// Observed transition counts `M(i, j)` of one trace, row-major.
pub fn transition_counts(trace: &Trajectory, r: usize) -> Vec<u32> {
    let mut counts = vec![0u32; r * r];
    for w in trace.states.windows(2) {
        counts[w[0].index() * r + w[1].index()] += 1;
    }
    counts
}

/// Smoothed maximum-likelihood chain on the graph:
/// `T(i, j) = (M(i, j) + s) / (visits_i + out_degree_i * s)` for `(i, j)` in `E`.
pub fn fit_markov_profile(
    trace: &Trajectory,
    graph: &MobilityGraph,
    smoothing: f64,
) -> Result<TransitionMatrix> {
    if trace.len() < 2 {
        return Err(Error::InvalidParams(
            "need at least two observations to fit a chain".into(),
        ));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "smoothing must be finite and >= 0, got {smoothing}"
        )));
    }
    let r = graph.r();
    if let Some(s) = trace.states.iter().find(|s| s.index() >= r) {
        return Err(Error::OutOfRange(format!(
            "state {} outside the graph",
            s.index() + 1
        )));
    }
    let counts = transition_counts(trace, r);
    for i in 0..r {
        for j in 0..r {
            if counts[i * r + j] > 0 && !graph.has_edge(i, j) {
                return Err(Error::InvalidGraph(format!(
                    "trace uses transition {} -> {} which is not in the graph",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let mut data = vec![0.0; r * r];
    for i in 0..r {
        let visits: u32 = counts[i * r..(i + 1) * r].iter().sum();
        let denom = visits as f64 + graph.out_degree(i) as f64 * smoothing;
        if denom == 0.0 {
            return Err(Error::InvalidParams(format!(
                "state {} is never left and smoothing is 0",
                i + 1
            )));
        }
        for j in (0..r).filter(|&j| graph.has_edge(i, j)) {
            data[i * r + j] = (counts[i * r + j] as f64 + smoothing) / denom;
        }
    }
    TransitionMatrix::new(r, data)
}
