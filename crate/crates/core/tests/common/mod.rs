//! Brute-force oracles shared by the integration tests. Everything here works
//! from raw sequences and explicit permutation enumeration, never from the
//! library's sufficient statistics or permanents.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;

use locpriv::markov::{DependencyMap, MobilityGraph, TransitionMatrix};
use locpriv::mobility::{IidProfile, StateId};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..n).collect();
    loop {
        out.push(cur.clone());
        // Next lexicographic permutation.
        let Some(i) = (0..n.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) else {
            return out;
        };
        let j = (i + 1..n).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
    }
}

/// `ln P(column | law)` straight from the sequence.
pub fn iid_path_log_prob(p: &IidProfile, column: &[StateId]) -> f64 {
    column.iter().map(|&s| p.prob(s).ln()).sum()
}

pub fn markov_path_log_prob(t: &TransitionMatrix, column: &[StateId]) -> f64 {
    column
        .windows(2)
        .map(|w| t.get(w[0].index(), w[1].index()).ln())
        .sum()
}

/// `P(pi(0) = j | Y)` by summing over all `n!` assignments, given
/// `log_lik[u][j] = ln P(column j | user u)`.
pub fn brute_posterior(log_lik: &[Vec<f64>]) -> Vec<f64> {
    let n = log_lik.len();
    let perms = permutations(n);
    let scores: Vec<f64> = perms
        .iter()
        .map(|f| f.iter().enumerate().map(|(u, &j)| log_lik[u][j]).sum())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w = vec![0.0; n];
    let mut total = 0.0;
    for (f, s) in perms.iter().zip(&scores) {
        let e = (s - max).exp();
        w[f[0]] += e;
        total += e;
    }
    w.iter().map(|v| v / total).collect()
}

/// Exhaustive maximizer of `sum_u w[u][f(u)]`; the first (lexicographically
/// smallest) permutation wins ties.
pub fn brute_map(w: &[f64], n: usize) -> (Vec<usize>, f64) {
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for f in permutations(n) {
        let s: f64 = f.iter().enumerate().map(|(u, &j)| w[u * n + j]).sum();
        if s > best.1 {
            best = (f, s);
        }
    }
    best
}

/// Exact `I(X_1(k); Y)` in bits for i.i.d. users by enumerating every location
/// matrix `X` and permutation, accumulating the joint law of `(X_1(k), Y)`.
pub fn exact_mi_iid(profiles: &[Vec<f64>], m: usize, k: usize) -> f64 {
    let n = profiles.len();
    let r = profiles[0].len();
    let cells = n * m;
    let perms = permutations(n);
    let perm_prob = 1.0 / perms.len() as f64;
    let mut joint: HashMap<(usize, Vec<usize>), f64> = HashMap::new();
    for code in 0..r.pow(cells as u32) {
        // x[u * m + t] is user u's location at time t.
        let mut x = vec![0usize; cells];
        let mut c = code;
        for v in &mut x {
            *v = c % r;
            c /= r;
        }
        let px: f64 = (0..n)
            .map(|u| (0..m).map(|t| profiles[u][x[u * m + t]]).product::<f64>())
            .product();
        for f in &perms {
            // Column f[u] holds user u's trajectory.
            let mut y = vec![0usize; cells];
            for u in 0..n {
                y[f[u] * m..(f[u] + 1) * m].copy_from_slice(&x[u * m..(u + 1) * m]);
            }
            *joint.entry((x[k - 1], y)).or_default() += px * perm_prob;
        }
    }
    let mut px1: HashMap<usize, f64> = HashMap::new();
    let mut py: HashMap<Vec<usize>, f64> = HashMap::new();
    for ((a, y), p) in &joint {
        *px1.entry(*a).or_default() += p;
        *py.entry(y.clone()).or_default() += p;
    }
    joint
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|((a, y), &p)| p * (p / (px1[a] * py[y])).log2())
        .sum()
}

/// Every length-`len` sequence from `start` whose transition-count matrix
/// equals `target` (the set of paths sharing a sufficient statistic).
pub fn same_transition_counts(start: usize, len: usize, r: usize, target: &[u32]) -> Vec<Vec<usize>> {
    fn rec(path: &mut Vec<usize>, len: usize, r: usize, left: &mut [u32], out: &mut Vec<Vec<usize>>) {
        if path.len() == len {
            if left.iter().all(|&c| c == 0) {
                out.push(path.clone());
            }
            return;
        }
        let last = *path.last().unwrap();
        for next in 0..r {
            if left[last * r + next] > 0 {
                left[last * r + next] -= 1;
                path.push(next);
                rec(path, len, r, left, out);
                path.pop();
                left[last * r + next] += 1;
            }
        }
    }
    let mut out = Vec::new();
    let mut left = target.to_vec();
    rec(&mut vec![start], len, r, &mut left, &mut out);
    out
}

/// Random graph on `r` states where every state has at least one out-edge.
pub fn random_graph<R: Rng>(r: usize, rng: &mut R) -> MobilityGraph {
    let mut edges = Vec::new();
    for i in 0..r {
        let mut row: Vec<usize> = (0..r).filter(|_| rng.random_bool(0.5)).collect();
        if row.is_empty() {
            row.push(rng.random_range(0..r));
        }
        edges.extend(row.into_iter().map(|j| (i, j)));
    }
    MobilityGraph::new(r, edges).unwrap()
}

pub fn example_map() -> DependencyMap {
    DependencyMap::new(MobilityGraph::example_three_state())
}

pub fn to_states(v: &[usize]) -> Vec<StateId> {
    v.iter().copied().map(StateId).collect()
}
