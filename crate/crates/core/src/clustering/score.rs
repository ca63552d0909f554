use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub accuracy: f64,
    pub nmi: f64,
}

/// Counts `n[c][g]` of points with predicted label `c` and true class `g`.
pub fn contingency(labels: &[usize], truth: &[usize]) -> Result<DMatrix<f64>> {
    check_dim("label count", truth.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::invalid("cannot score an empty labeling"));
    }
    let rows = labels.iter().max().map_or(0, |m| m + 1);
    let cols = truth.iter().max().map_or(0, |m| m + 1);
    let mut n = DMatrix::zeros(rows, cols);
    for (&c, &g) in labels.iter().zip(truth) {
        n[(c, g)] += 1.0;
    }
    Ok(n)
}

/// Maximum-weight assignment of rows to columns (Kuhn-Munkres on the padded
/// square matrix). Returns `(row, col)` pairs of real rows and columns.
pub fn hungarian_max(w: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = w.nrows().max(w.ncols());
    if n == 0 {
        return Vec::new();
    }
    let top = w.iter().copied().fold(0.0_f64, f64::max);
    let cost = |i: usize, j: usize| {
        if i < w.nrows() && j < w.ncols() {
            top - w[(i, j)]
        } else {
            top
        }
    };
    // 1-based potentials over rows (u) and columns (v); p[j] is the row matched to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| p[j] - 1 < w.nrows() && j - 1 < w.ncols())
        .map(|j| (p[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

fn entropy(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    counts
        .filter(|c| *c > 0.0)
        .map(|c| {
            let q = c / total;
            -q * math::ln(q)
        })
        .sum()
}

/// `I(U; V) / sqrt(H(U) H(V))`; 1 when both labelings are constant, 0 when only one is.
pub fn nmi(labels: &[usize], truth: &[usize]) -> Result<f64> {
    let n = contingency(labels, truth)?;
    let total = labels.len() as f64;
    let rows: Vec<f64> = n.row_iter().map(|r| r.sum()).collect();
    let cols: Vec<f64> = n.column_iter().map(|c| c.sum()).collect();
    let hu = entropy(rows.iter().copied(), total);
    let hv = entropy(cols.iter().copied(), total);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..n.nrows() {
        for j in 0..n.ncols() {
            let c = n[(i, j)];
            if c > 0.0 {
                mi += c / total * math::ln(c * total / (rows[i] * cols[j]));
            }
        }
    }
    Ok((mi / math::sqrt(hu * hv)).clamp(0.0, 1.0))
}

/// Best-matching accuracy and NMI of a labeling against ground truth.
pub fn score(labels: &[usize], truth: &[usize]) -> Result<Scores> {
    let n = contingency(labels, truth)?;
    let matched: f64 = hungarian_max(&n).into_iter().map(|(i, j)| n[(i, j)]).sum();
    Ok(Scores {
        accuracy: matched / labels.len() as f64,
        nmi: nmi(labels, truth)?,
    })
}
