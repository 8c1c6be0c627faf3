//! The student sentence encoder: token + learned position embeddings, a stack
//! of pre-norm transformer blocks, a final layer norm and masked mean pooling.
//!
//! Forward and backward are written out by hand. Only the real (mask=1)
//! positions of each sequence are ever computed, so padding cannot influence
//! the result and pad invariance is exact.

mod model;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tokenizer::Vocab;

pub use model::{backward, embed, forward, Cache};

pub const INIT_STD: f64 = 0.02;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub ffn_mult: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("dim", self.dim),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("ffn_mult", self.ffn_mult),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
        }
        if !self.dim.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "dim {} is not divisible by n_heads {}",
                self.dim, self.n_heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.n_heads
    }

    pub fn hidden_dim(&self) -> usize {
        self.ffn_mult * self.dim
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let d = self.dim;
        let h = self.hidden_dim();
        let per_layer = 4 * (d * d + d) + 4 * d + (d * h + h) + (h * d + d);
        self.vocab_size * d + self.max_len * d + self.n_layers * per_layer + 2 * d
    }
}

/// Weights of one transformer block. Projections use the row-vector
/// convention `y = x W + b`, so `wq` maps `dim -> dim` as a `dim x dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub wq: Array2<T>,
    pub bq: Array1<T>,
    pub wk: Array2<T>,
    pub bk: Array1<T>,
    pub wv: Array2<T>,
    pub bv: Array1<T>,
    pub wo: Array2<T>,
    pub bo: Array1<T>,
    pub ln1_gain: Array1<T>,
    pub ln1_bias: Array1<T>,
    pub ln2_gain: Array1<T>,
    pub ln2_bias: Array1<T>,
    pub ffn_in: Array2<T>,
    pub ffn_in_bias: Array1<T>,
    pub ffn_out: Array2<T>,
    pub ffn_out_bias: Array1<T>,
}

impl<T: Real> LayerParams<T> {
    fn zeros(dim: usize, hidden: usize) -> Self {
        Self {
            wq: Array2::zeros((dim, dim)),
            bq: Array1::zeros(dim),
            wk: Array2::zeros((dim, dim)),
            bk: Array1::zeros(dim),
            wv: Array2::zeros((dim, dim)),
            bv: Array1::zeros(dim),
            wo: Array2::zeros((dim, dim)),
            bo: Array1::zeros(dim),
            ln1_gain: Array1::zeros(dim),
            ln1_bias: Array1::zeros(dim),
            ln2_gain: Array1::zeros(dim),
            ln2_bias: Array1::zeros(dim),
            ffn_in: Array2::zeros((dim, hidden)),
            ffn_in_bias: Array1::zeros(hidden),
            ffn_out: Array2::zeros((hidden, dim)),
            ffn_out_bias: Array1::zeros(dim),
        }
    }

    // Checkpoint order: Q, K, V, O, norms, FFN.
    fn tensors(&self) -> [(&'static str, &[T]); 16] {
        [
            ("wq", slice(&self.wq)),
            ("bq", slice1(&self.bq)),
            ("wk", slice(&self.wk)),
            ("bk", slice1(&self.bk)),
            ("wv", slice(&self.wv)),
            ("bv", slice1(&self.bv)),
            ("wo", slice(&self.wo)),
            ("bo", slice1(&self.bo)),
            ("ln1_gain", slice1(&self.ln1_gain)),
            ("ln1_bias", slice1(&self.ln1_bias)),
            ("ln2_gain", slice1(&self.ln2_gain)),
            ("ln2_bias", slice1(&self.ln2_bias)),
            ("ffn_in", slice(&self.ffn_in)),
            ("ffn_in_bias", slice1(&self.ffn_in_bias)),
            ("ffn_out", slice(&self.ffn_out)),
            ("ffn_out_bias", slice1(&self.ffn_out_bias)),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [T]; 16] {
        [
            slice_mut(&mut self.wq),
            slice1_mut(&mut self.bq),
            slice_mut(&mut self.wk),
            slice1_mut(&mut self.bk),
            slice_mut(&mut self.wv),
            slice1_mut(&mut self.bv),
            slice_mut(&mut self.wo),
            slice1_mut(&mut self.bo),
            slice1_mut(&mut self.ln1_gain),
            slice1_mut(&mut self.ln1_bias),
            slice1_mut(&mut self.ln2_gain),
            slice1_mut(&mut self.ln2_bias),
            slice_mut(&mut self.ffn_in),
            slice1_mut(&mut self.ffn_in_bias),
            slice_mut(&mut self.ffn_out),
            slice1_mut(&mut self.ffn_out_bias),
        ]
    }
}

fn slice<T>(a: &Array2<T>) -> &[T] {
    a.as_slice().expect("parameter tensors are contiguous")
}

fn slice1<T>(a: &Array1<T>) -> &[T] {
    a.as_slice().expect("parameter tensors are contiguous")
}

fn slice_mut<T>(a: &mut Array2<T>) -> &mut [T] {
    a.as_slice_mut().expect("parameter tensors are contiguous")
}

fn slice1_mut<T>(a: &mut Array1<T>) -> &mut [T] {
    a.as_slice_mut().expect("parameter tensors are contiguous")
}

/// All trainable tensors of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub config: EncoderConfig,
    pub token_embedding: Array2<T>,
    pub position_embedding: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_gain: Array1<T>,
    pub final_bias: Array1<T>,
}

/// Gradients share the parameter layout.
pub type ParamGrads<T> = EncoderParams<T>;

impl<T: Real> EncoderParams<T> {
    /// Seeded N(0, 0.02) weights, zero biases, unit layer-norm gains.
    pub fn init(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut fill = |t: &mut [T]| {
            for v in t.iter_mut() {
                *v = T::from_f64_lossy(normal.sample(&mut rng));
            }
        };
        fill(slice_mut(&mut params.token_embedding));
        fill(slice_mut(&mut params.position_embedding));
        for layer in &mut params.layers {
            fill(slice_mut(&mut layer.wq));
            fill(slice_mut(&mut layer.wk));
            fill(slice_mut(&mut layer.wv));
            fill(slice_mut(&mut layer.wo));
            fill(slice_mut(&mut layer.ffn_in));
            fill(slice_mut(&mut layer.ffn_out));
            layer.ln1_gain.fill(T::one());
            layer.ln2_gain.fill(T::one());
        }
        params.final_gain.fill(T::one());
        Ok(params)
    }

    /// All-zero tensors shaped by `config`.
    pub fn zeros(config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let d = config.dim;
        Ok(Self {
            config: config.clone(),
            token_embedding: Array2::zeros((config.vocab_size, d)),
            position_embedding: Array2::zeros((config.max_len, d)),
            layers: (0..config.n_layers)
                .map(|_| LayerParams::zeros(d, config.hidden_dim()))
                .collect(),
            final_gain: Array1::zeros(d),
            final_bias: Array1::zeros(d),
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Every tensor flattened row-major, in checkpoint order: token embedding,
    /// position embedding, each layer (Q, K, V, O, norms, FFN), final norm.
    pub fn tensors(&self) -> Vec<(String, &[T])> {
        let mut out = vec![
            ("token_embedding".to_string(), slice(&self.token_embedding)),
            ("position_embedding".to_string(), slice(&self.position_embedding)),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.extend(layer.tensors().into_iter().map(|(n, t)| (format!("layers.{i}.{n}"), t)));
        }
        out.push(("final_gain".to_string(), slice1(&self.final_gain)));
        out.push(("final_bias".to_string(), slice1(&self.final_bias)));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = vec![
            slice_mut(&mut self.token_embedding),
            slice_mut(&mut self.position_embedding),
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(slice1_mut(&mut self.final_gain));
        out.push(slice1_mut(&mut self.final_bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Elementwise cast, e.g. `f32` checkpoint weights into `f64` for checks.
    pub fn cast<U: Real>(&self) -> EncoderParams<U> {
        let mut out = EncoderParams::<U>::zeros(&self.config).expect("config already validated");
        for ((_, src), dst) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::from_f64_lossy(s.to_f64_lossless());
            }
        }
        out
    }

    /// Checks that the config agrees with `vocab`.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        if vocab.size() != self.config.vocab_size {
            return Err(Error::ShapeMismatch(format!(
                "vocabulary has {} entries, encoder expects {}",
                vocab.size(),
                self.config.vocab_size
            )));
        }
        Ok(())
    }
}

/// A `count x dim` matrix of sentence embeddings, one row per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch<T> {
    vectors: Array2<T>,
}

impl<T: Real> EmbeddingBatch<T> {
    pub fn new(vectors: Array2<T>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::Empty("embedding batch needs at least one row and column".into()));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "embedding entry ({}, {})",
                pos / vectors.ncols(),
                pos % vectors.ncols()
            )));
        }
        Ok(Self {
            vectors: vectors.as_standard_layout().into_owned(),
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch("rows have different lengths".into()));
        }
        let flat: Vec<T> = rows.iter().flatten().copied().collect();
        let vectors =
            Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(vectors)
    }

    pub fn count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn into_vectors(self) -> Array2<T> {
        self.vectors
    }

    pub fn row(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.vectors.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    pub fn cast<U: Real>(&self) -> EmbeddingBatch<U> {
        EmbeddingBatch {
            vectors: self.vectors.mapv(|v| U::from_f64_lossy(v.to_f64_lossless())),
        }
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.vectors.select(ndarray::Axis(0), indices))
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.vectors.dim() != other.vectors.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.count(),
                self.dim(),
                other.count(),
                other.dim()
            )));
        }
        Ok(())
    }
}
