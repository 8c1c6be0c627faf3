//! Exact t-SNE layouts and SVG scatter plots.

mod affinity;
mod svg;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::real::Real;

pub use affinity::{conditional_probabilities, joint_probabilities, squared_distances};
pub use svg::{render_scatter, scatter_svg, PALETTE};

pub const INIT_STD: f64 = 1e-4;
pub const EXAGGERATION_ITERS: usize = 250;
pub const MOMENTUM_SWITCH: usize = 250;
const INITIAL_MOMENTUM: f64 = 0.5;
const FINAL_MOMENTUM: f64 = 0.8;
const MIN_GAIN: f64 = 0.01;
const Q_FLOOR: f64 = 1e-12;
/// KL is recorded every this many iterations and after the last one.
pub const KL_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            seed: 0,
        }
    }
}

impl TsneConfig {
    /// Checks the configuration against a dataset of `n` points.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.early_exaggeration >= 1.0 && self.early_exaggeration.is_finite()) {
            return Err(Error::InvalidConfig("early_exaggeration must be >= 1".into()));
        }
        let upper = n.saturating_sub(1) as f64 / 3.0;
        if n < 3 || !(self.perplexity > 1.0 && self.perplexity < upper) {
            return Err(Error::Perplexity {
                perplexity: self.perplexity,
                n,
                reason: format!("perplexity must lie in (1, {upper:.3})"),
            });
        }
        Ok(())
    }
}

/// A 2-D embedding with one class label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout2D {
    points: Array2<f64>,
    labels: Vec<usize>,
}

impl Layout2D {
    pub fn new(points: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if points.ncols() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "layout has {} columns, expected 2",
                points.ncols()
            )));
        }
        if points.nrows() < 2 {
            return Err(Error::Empty("layout needs at least 2 points".into()));
        }
        if labels.len() != points.nrows() {
            return Err(Error::Alignment {
                expected: points.nrows(),
                found: labels.len(),
            });
        }
        if !points.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("layout coordinates".into()));
        }
        Ok(Self { points, labels })
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneOutput {
    pub points: Array2<f64>,
    /// `(iteration, KL(P || Q))` with 1-based iteration counts.
    pub kl_trace: Vec<(usize, f64)>,
}

/// Row order by value (lexicographic, `total_cmp`). The descent runs in this
/// order so that permuting the input rows cannot change any floating-point
/// summation order, which makes the layout exactly permutation-equivariant.
fn canonical_order<T: Real>(x: &EmbeddingBatch<T>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.count()).collect();
    order.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(u, v)| u.to_f64_lossless().total_cmp(&v.to_f64_lossless()))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Gaussian initial coordinates; point `k` (in canonical order) draws from a
/// stream keyed on the seed and `k`.
fn initial_layout(n: usize, seed: u64) -> Array2<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    let mut y = Array2::zeros((n, 2));
    for k in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        y[[k, 0]] = normal.sample(&mut rng);
        y[[k, 1]] = normal.sample(&mut rng);
    }
    y
}

/// Student-t kernel `1 / (1 + |y_i - y_j|^2)` with zero diagonal.
fn kernel(y: &Array2<f64>) -> Array2<f64> {
    let n = y.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let dx = y[[i, 0]] - y[[j, 0]];
                        let dy = y[[i, 1]] - y[[j, 1]];
                        1.0 / (1.0 + dx * dx + dy * dy)
                    }
                })
                .collect()
        })
        .collect();
    Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("n x n")
}

fn kernel_sum(num: &Array2<f64>) -> f64 {
    // row sums in parallel, combined in row order
    let rows: Vec<f64> = (0..num.nrows())
        .into_par_iter()
        .map(|i| num.row(i).iter().sum())
        .collect();
    rows.iter().sum()
}

pub fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let num = kernel(y);
    let z = kernel_sum(&num);
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            let q = (num[[i, j]] / z).max(Q_FLOOR);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

fn gradient(p: &Array2<f64>, exaggeration: f64, y: &Array2<f64>) -> Array2<f64> {
    let n = y.nrows();
    let num = kernel(y);
    let z = kernel_sum(&num);
    let rows: Vec<[f64; 2]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[[i, j]] / z).max(Q_FLOOR);
                let w = 4.0 * (exaggeration * p[[i, j]] - q) * num[[i, j]];
                g[0] += w * (y[[i, 0]] - y[[j, 0]]);
                g[1] += w * (y[[i, 1]] - y[[j, 1]]);
            }
            g
        })
        .collect();
    Array2::from_shape_fn((n, 2), |(i, k)| rows[i][k])
}

/// Runs t-SNE and records the KL divergence along the way.
pub fn run_tsne_traced<T: Real>(x: &EmbeddingBatch<T>, config: &TsneConfig) -> Result<TsneOutput> {
    let n = x.count();
    config.validate(n)?;
    let order = canonical_order(x);
    let p = joint_probabilities(&x.select(&order)?, config.perplexity)?;
    let mut y = initial_layout(n, config.seed);
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut kl_trace = Vec::new();

    for iter in 0..config.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS {
            config.early_exaggeration
        } else {
            1.0
        };
        let momentum = if iter < MOMENTUM_SWITCH {
            INITIAL_MOMENTUM
        } else {
            FINAL_MOMENTUM
        };
        let grad = gradient(&p, exaggeration, &y);
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite(format!("t-SNE gradient at iteration {}", iter + 1)));
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - config.learning_rate * *gain * g;
        }
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("n >= 3");
        y -= &mean;

        let done = iter + 1;
        if done % KL_EVERY == 0 || done == config.iterations {
            kl_trace.push((done, kl_divergence(&p, &y)));
        }
    }
    let mut points = Array2::zeros((n, 2));
    for (k, &i) in order.iter().enumerate() {
        points.row_mut(i).assign(&y.row(k));
    }
    Ok(TsneOutput { points, kl_trace })
}

pub fn run_tsne<T: Real>(x: &EmbeddingBatch<T>, config: &TsneConfig) -> Result<Array2<f64>> {
    Ok(run_tsne_traced(x, config)?.points)
}

/// Leave-one-out 1-nearest-neighbor label accuracy of a layout.
pub fn nearest_neighbor_accuracy(layout: &Layout2D) -> f64 {
    let pts = layout.points();
    let labels = layout.labels();
    let n = layout.len();
    let hits = (0..n)
        .filter(|&i| {
            let nearest = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    let da = (pts[[i, 0]] - pts[[a, 0]]).powi(2) + (pts[[i, 1]] - pts[[a, 1]]).powi(2);
                    let db = (pts[[i, 0]] - pts[[b, 0]]).powi(2) + (pts[[i, 1]] - pts[[b, 1]]).powi(2);
                    da.total_cmp(&db)
                })
                .expect("n >= 2");
            labels[nearest] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}
