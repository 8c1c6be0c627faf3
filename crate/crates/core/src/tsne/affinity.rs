use ndarray::Array2;
use rayon::prelude::*;

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::real::Real;

const MAX_SEARCH_STEPS: usize = 200;
// on entropy in nats; far tighter than the 1e-3 perplexity guarantee needs
const ENTROPY_TOL: f64 = 1e-10;

pub fn squared_distances<T: Real>(x: &EmbeddingBatch<T>) -> Array2<f64> {
    let n = x.count();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| x.row(i).iter().map(|v| v.to_f64_lossless()).collect())
        .collect();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// Gaussian conditional distribution of one row at precision `beta`, with its
/// Shannon entropy in nats. Distances are shifted by the row minimum so the
/// exponentials cannot all underflow.
fn row_distribution(dist: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let min = dist.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = dist.iter().map(|&d| (-(d - min) * beta).exp()).collect();
    let sum: f64 = p.iter().sum();
    let weighted: f64 = p.iter().zip(dist).map(|(&pj, &d)| pj * (d - min)).sum();
    let entropy = sum.ln() + beta * weighted / sum;
    p.iter_mut().for_each(|v| *v /= sum);
    (p, entropy)
}

/// Binary search on the Gaussian precision until the row's entropy matches
/// `ln(perplexity)`. Returns the row (diagonal excluded) and its realized
/// perplexity.
fn calibrate_row(dist: &[f64], perplexity: f64) -> (Vec<f64>, f64) {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    let (mut p, mut h) = row_distribution(dist, beta);
    for _ in 0..MAX_SEARCH_STEPS {
        if (h - target).abs() < ENTROPY_TOL {
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        (p, h) = row_distribution(dist, beta);
    }
    (p, h.exp())
}

fn check_perplexity(n: usize, perplexity: f64) -> Result<()> {
    let fail = |reason: String| Err(Error::Perplexity { perplexity, n, reason });
    if n < 3 {
        return fail("at least 3 points are required".into());
    }
    if !(perplexity > 1.0 && perplexity <= (n - 1) as f64) {
        return fail(format!("perplexity must lie in (1, {}]", n - 1));
    }
    Ok(())
}

/// Row-conditional affinities `p(j|i)` (zero diagonal) and each row's realized
/// perplexity.
pub fn conditional_probabilities<T: Real>(x: &EmbeddingBatch<T>, perplexity: f64) -> Result<(Array2<f64>, Vec<f64>)> {
    let n = x.count();
    check_perplexity(n, perplexity)?;
    let dist = squared_distances(x);
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist[[i, j]]).collect();
            calibrate_row(&others, perplexity)
        })
        .collect();
    let mut p = Array2::zeros((n, n));
    let mut realized = Vec::with_capacity(n);
    for (i, (row, perp)) in rows.into_iter().enumerate() {
        let mut vals = row.into_iter();
        for j in (0..n).filter(|&j| j != i) {
            p[[i, j]] = vals.next().expect("n - 1 values");
        }
        realized.push(perp);
    }
    Ok((p, realized))
}

/// Symmetrized joint affinities `(P_c + P_c^T) / 2N`.
pub fn joint_probabilities<T: Real>(x: &EmbeddingBatch<T>, perplexity: f64) -> Result<Array2<f64>> {
    let (cond, _) = conditional_probabilities(x, perplexity)?;
    let n = cond.nrows();
    let denom = 2.0 * n as f64;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| {
        (cond[[i, j]] + cond[[j, i]]) / denom
    }))
}
