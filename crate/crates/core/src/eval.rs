//! Evaluation protocols: paraphrase cosine/threshold accuracy, STS
//! correlations and inference timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoder::{embed, EmbeddingBatch, EncoderParams};
use crate::error::{Error, Result};
use crate::losses::cosine;
use crate::real::Real;
use crate::tokenizer::Vocab;

pub const PARAPHRASE_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Paraphrase,
    Sts,
}

/// Metric bundle; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: EvalTask,
    pub mcs: Option<f64>,
    pub accuracy: Option<f64>,
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub inference_seconds: f64,
    pub n_items: usize,
}

impl EvalReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Row-wise cosines between two aligned batches.
pub fn pairwise_cosines<T: Real>(a: &EmbeddingBatch<T>, b: &EmbeddingBatch<T>) -> Result<Vec<f64>> {
    a.same_shape(b)?;
    (0..a.count())
        .map(|i| {
            cosine(a.row(i), b.row(i)).map_err(|e| match e {
                Error::ZeroNorm { .. } => Error::ZeroNorm { row: i },
                other => other,
            })
        })
        .collect()
}

pub fn mean_cosine_similarity<T: Real>(a: &EmbeddingBatch<T>, b: &EmbeddingBatch<T>) -> Result<f64> {
    let cos = pairwise_cosines(a, b)?;
    Ok(cos.iter().sum::<f64>() / cos.len() as f64)
}

/// Fraction of pairs whose prediction (`cosine >= threshold` means paraphrase)
/// matches the label.
pub fn paraphrase_accuracy<T: Real>(
    a: &EmbeddingBatch<T>,
    b: &EmbeddingBatch<T>,
    labels: &[u8],
    threshold: f64,
) -> Result<f64> {
    let cos = pairwise_cosines(a, b)?;
    accuracy_from_cosines(&cos, labels, threshold)
}

pub fn accuracy_from_cosines(cosines: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if cosines.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} pairs but {} labels",
            cosines.len(),
            labels.len()
        )));
    }
    if cosines.is_empty() {
        return Err(Error::Empty("no pairs to score".into()));
    }
    let correct = cosines
        .iter()
        .zip(labels)
        .filter(|(&c, &l)| u8::from(c >= threshold) == l)
        .count();
    Ok(correct as f64 / cosines.len() as f64)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Empty("correlation needs at least two points".into()));
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + end + 1) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average-tie ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Median wall-clock seconds, over `repeats` runs, to embed all `texts`.
pub fn time_inference<S: AsRef<str> + Sync>(
    params: &EncoderParams<f32>,
    vocab: &Vocab,
    texts: &[S],
    max_len: usize,
    repeats: usize,
) -> Result<f64> {
    if repeats < 1 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    if texts.is_empty() {
        return Err(Error::Empty("no texts to time".into()));
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = embed(params, vocab, texts, max_len)?;
        std::hint::black_box(&out);
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(median(&mut times))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Textbook definitions, kept apart from the production formulas.

    pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    /// Rank of v = (#values below v) + (#values equal to v + 1) / 2.
    pub fn ranks(x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let below = x.iter().filter(|&&w| w < v).count() as f64;
                let equal = x.iter().filter(|&&w| w == v).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
        pearson(&ranks(x), &ranks(y))
    }
}
