//! Distillation objectives over (teacher, student) embedding batches.
//!
//! Values are accumulated in `f64` whatever the embedding precision.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mnr,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mnr => "mnr",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mnr" => Ok(LossKind::Mnr),
            other => Err(format!("unknown loss `{other}` (expected mse or mnr)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossResult<T> {
    pub value: f64,
    /// d loss / d student embeddings, same shape as the student batch.
    pub grad_student: Array2<T>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "vectors of length {} and {}",
            u.len(),
            v.len()
        )));
    }
    let u: Vec<f64> = u.iter().map(|x| x.to_f64_lossless()).collect();
    let v: Vec<f64> = v.iter().map(|x| x.to_f64_lossless()).collect();
    let (nu, nv) = (norm(&u), norm(&v));
    if nu == 0.0 {
        return Err(Error::ZeroNorm { row: 0 });
    }
    if nv == 0.0 {
        return Err(Error::ZeroNorm { row: 1 });
    }
    Ok((dot(&u, &v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Mean over all `count * dim` elements of `(teacher - student)^2`.
pub fn mse_loss<T: Real>(teacher: &EmbeddingBatch<T>, student: &EmbeddingBatch<T>) -> Result<LossResult<T>> {
    teacher.same_shape(student)?;
    let n = (teacher.count() * teacher.dim()) as f64;
    let mut value = 0.0;
    let grad = ndarray::Zip::from(teacher.vectors())
        .and(student.vectors())
        .map_collect(|&t, &s| {
            let diff = s.to_f64_lossless() - t.to_f64_lossless();
            value += diff * diff;
            T::from_f64_lossy(2.0 * diff / n)
        });
    Ok(LossResult {
        value: value / n,
        grad_student: grad,
    })
}

fn rows_f64<T: Real>(batch: &EmbeddingBatch<T>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let rows: Vec<Vec<f64>> = (0..batch.count())
        .map(|i| batch.row(i).iter().map(|x| x.to_f64_lossless()).collect())
        .collect();
    let norms: Vec<f64> = rows.iter().map(|r| norm(r)).collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm { row });
    }
    Ok((rows, norms))
}

/// Multiple-negatives ranking loss with in-batch negatives.
///
/// Teacher row `i` is the anchor, student row `i` its positive and every other
/// student row a negative. Logits are `scale * cos(teacher_i, student_j)`; the
/// loss is the mean cross-entropy of picking the positive. `scale = 1` gives the
/// plain formulation without temperature.
pub fn mnr_loss<T: Real>(
    teacher: &EmbeddingBatch<T>,
    student: &EmbeddingBatch<T>,
    scale: f64,
) -> Result<LossResult<T>> {
    teacher.same_shape(student)?;
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidConfig(format!("scale must be positive, got {scale}")));
    }
    let b = teacher.count();
    let dim = teacher.dim();
    let (t_rows, t_norms) = rows_f64(teacher)?;
    let (s_rows, s_norms) = rows_f64(student)?;

    let mut cos = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            cos[i][j] = (dot(&t_rows[i], &s_rows[j]) / (t_norms[i] * s_norms[j])).clamp(-1.0, 1.0);
        }
    }

    // dL/dcos[i][j] = scale * (softmax_ij - [i == j]) / b
    let mut value = 0.0;
    let mut dcos = vec![vec![0.0; b]; b];
    for i in 0..b {
        let logits: Vec<f64> = cos[i].iter().map(|c| scale * c).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        value += log_z - logits[i];
        for j in 0..b {
            let p = (logits[j] - log_z).exp();
            let target = if i == j { 1.0 } else { 0.0 };
            dcos[i][j] = scale * (p - target) / b as f64;
        }
    }
    value /= b as f64;

    // d cos(t, s) / d s = t / (|t||s|) - cos * s / |s|^2
    let mut grad = Array2::zeros((b, dim));
    for j in 0..b {
        let sn = s_norms[j];
        for i in 0..b {
            let w = dcos[i][j];
            if w == 0.0 {
                continue;
            }
            let a = w / (t_norms[i] * sn);
            let c = w * cos[i][j] / (sn * sn);
            for k in 0..dim {
                let g = a * t_rows[i][k] - c * s_rows[j][k];
                grad[[j, k]] += T::from_f64_lossy(g);
            }
        }
    }
    Ok(LossResult {
        value: value.max(0.0),
        grad_student: grad,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Definitional implementations used only to check the production code.

    pub fn cos(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    }

    /// Materializes the full cosine matrix and takes -log softmax row by row.
    pub fn mnr(teacher: &[Vec<f64>], student: &[Vec<f64>], scale: f64) -> f64 {
        let b = teacher.len();
        let mut total = 0.0;
        for i in 0..b {
            let row: Vec<f64> = (0..b).map(|j| scale * cos(&teacher[i], &student[j])).collect();
            let denom: f64 = row.iter().map(|x| x.exp()).sum();
            total += -(row[i].exp() / denom).ln();
        }
        total / b as f64
    }

    pub fn mse(teacher: &[Vec<f64>], student: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for (t, s) in teacher.iter().zip(student) {
            for (a, b) in t.iter().zip(s) {
                total += (a - b) * (a - b);
                n += 1;
            }
        }
        total / n as f64
    }
}
