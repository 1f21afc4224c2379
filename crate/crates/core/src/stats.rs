//! Small descriptive statistics helpers.

use crate::error::{Error, Result};
use crate::numerics::{standardize_columns, Matrix};

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && xs[idx[end]] == xs[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation. `None` if fewer than two points or either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    crate::numerics::pearson(&average_ranks(x), &average_ranks(y))
}

/// Pairwise correlations (population moments) between the columns of `m`.
///
/// The result is symmetric with an exact unit diagonal and entries clamped to [−1, 1].
pub fn column_correlations(m: &Matrix) -> Result<Matrix> {
    if m.rows() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} observations, need at least 2",
            m.rows()
        )));
    }
    let z = standardize_columns(m)?;
    let t = m.rows() as f64;
    let mut c = z.gram();
    let n = c.rows();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = if i == j {
                1.0
            } else {
                (c[(i, j)] / t).clamp(-1.0, 1.0)
            };
        }
    }
    Ok(c)
}
