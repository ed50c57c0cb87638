//! Matrix permanents by dynamic programming over column subsets.
//!
//! `f(S)` is the permanent of the first `|S|` selected rows restricted to the
//! columns in `S`, built up by expanding along the last row:
//! `f(S) = sum_{k in S} f(S \ {k}) * a[row_{|S|}][k]`.
//! All terms are nonnegative, so unlike inclusion-exclusion there is no
//! cancellation, at the price of `2^n` memory.

/// Largest dimension the subset tables are allowed to reach.
pub const MAX_DIM: usize = 24;

/// Permanents of the `n` minors obtained by deleting row `skip_row` and each
/// column `j` in turn. `a` is row-major `n x n` with nonnegative entries.
pub fn minor_permanents(a: &[f64], n: usize, skip_row: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    assert!(n >= 1 && n <= MAX_DIM, "dimension {n} outside 1..={MAX_DIM}");
    if n == 1 {
        return vec![1.0];
    }
    let rows: Vec<usize> = (0..n).filter(|&u| u != skip_row).collect();
    let full = (1usize << n) - 1;
    let mut f = vec![0.0f64; 1 << n];
    f[0] = 1.0;
    for s in 1..full {
        let depth = s.count_ones() as usize;
        if depth > rows.len() {
            continue;
        }
        let row = &a[rows[depth - 1] * n..(rows[depth - 1] + 1) * n];
        let mut acc = 0.0;
        let mut bits = s;
        while bits != 0 {
            let k = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            acc += f[s ^ (1 << k)] * row[k];
        }
        f[s] = acc;
    }
    (0..n).map(|j| f[full ^ (1 << j)]).collect()
}

/// Permanent of a nonnegative row-major `n x n` matrix.
pub fn permanent(a: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let minors = minor_permanents(a, n, 0);
    minors.iter().zip(&a[..n]).map(|(m, x)| m * x).sum()
}
