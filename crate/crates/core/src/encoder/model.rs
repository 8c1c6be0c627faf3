use ndarray::{s, Array1, Array2, ArrayView2};
use rayon::prelude::*;

use super::{EmbeddingBatch, EncoderParams, LayerParams, ParamGrads, LAYER_NORM_EPS};
use crate::error::{Error, Result};
use crate::real::{lit, Real};
use crate::tokenizer::{TokenSeq, Vocab};

const GELU_COEF: f64 = 0.044715;
// sqrt(2 / pi)
const GELU_SCALE: f64 = 0.797_884_560_802_865_4;

fn gelu<T: Real>(u: T) -> T {
    let inner = lit::<T>(GELU_SCALE) * (u + lit::<T>(GELU_COEF) * u * u * u);
    lit::<T>(0.5) * u * (T::one() + inner.tanh())
}

fn gelu_grad<T: Real>(u: T) -> T {
    let c = lit::<T>(GELU_SCALE);
    let a = lit::<T>(GELU_COEF);
    let t = (c * (u + a * u * u * u)).tanh();
    let half = lit::<T>(0.5);
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + lit::<T>(3.0) * a * u * u)
}

struct NormCache<T> {
    xhat: Array2<T>,
    rstd: Array1<T>,
}

fn layer_norm<T: Real>(x: &Array2<T>, gain: &Array1<T>, bias: &Array1<T>) -> (Array2<T>, NormCache<T>) {
    let (n, d) = x.dim();
    let inv_d = T::one() / lit::<T>(d as f64);
    let eps = lit::<T>(LAYER_NORM_EPS);
    let mut xhat = Array2::zeros((n, d));
    let mut rstd = Array1::zeros(n);
    let mut y = Array2::zeros((n, d));
    for t in 0..n {
        let row = x.row(t);
        let mean = row.iter().fold(T::zero(), |acc, &v| acc + v) * inv_d;
        let var = row.iter().fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean)) * inv_d;
        let r = T::one() / (var + eps).sqrt();
        rstd[t] = r;
        for j in 0..d {
            let h = (row[j] - mean) * r;
            xhat[[t, j]] = h;
            y[[t, j]] = h * gain[j] + bias[j];
        }
    }
    (y, NormCache { xhat, rstd })
}

/// Returns dx; accumulates into `dgain` and `dbias`.
fn layer_norm_backward<T: Real>(
    dy: &Array2<T>,
    cache: &NormCache<T>,
    gain: &Array1<T>,
    dgain: &mut Array1<T>,
    dbias: &mut Array1<T>,
) -> Array2<T> {
    let (n, d) = dy.dim();
    let inv_d = T::one() / lit::<T>(d as f64);
    let mut dx = Array2::zeros((n, d));
    for t in 0..n {
        let mut mean_dxhat = T::zero();
        let mut mean_dxhat_xhat = T::zero();
        for j in 0..d {
            let g = dy[[t, j]];
            let h = cache.xhat[[t, j]];
            dgain[j] += g * h;
            dbias[j] += g;
            let dh = g * gain[j];
            mean_dxhat += dh;
            mean_dxhat_xhat += dh * h;
        }
        mean_dxhat *= inv_d;
        mean_dxhat_xhat *= inv_d;
        let r = cache.rstd[t];
        for j in 0..d {
            let h = cache.xhat[[t, j]];
            let dh = dy[[t, j]] * gain[j];
            dx[[t, j]] = r * (dh - mean_dxhat - h * mean_dxhat_xhat);
        }
    }
    dx
}

fn affine<T: Real>(x: &Array2<T>, w: &Array2<T>, b: &Array1<T>) -> Array2<T> {
    x.dot(w) + b
}

fn sum_rows_into<T: Real>(acc: &mut Array1<T>, g: &Array2<T>) {
    for row in g.rows() {
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            *a += v;
        }
    }
}

fn add_outer<T: Real>(acc: &mut Array2<T>, input: ArrayView2<T>, grad: &Array2<T>) {
    ndarray::linalg::general_mat_mul(T::one(), &input.t(), grad, T::one(), acc);
}

struct LayerCache<T> {
    ln1: NormCache<T>,
    h1: Array2<T>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    ctx: Array2<T>,
    ln2: NormCache<T>,
    h2: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

struct SeqCache<T> {
    ids: Vec<u32>,
    layers: Vec<LayerCache<T>>,
    final_norm: NormCache<T>,
}

/// Intermediates retained by [`forward`] for [`backward`].
pub struct Cache<T> {
    seqs: Vec<SeqCache<T>>,
    dim: usize,
}

impl<T> Cache<T> {
    pub fn count(&self) -> usize {
        self.seqs.len()
    }
}

fn layer_forward<T: Real>(p: &LayerParams<T>, x: &Array2<T>, n_heads: usize) -> (Array2<T>, LayerCache<T>) {
    let (n, d) = x.dim();
    let hd = d / n_heads;
    let scale = T::one() / lit::<T>(hd as f64).sqrt();

    let (h1, ln1) = layer_norm(x, &p.ln1_gain, &p.ln1_bias);
    let q = affine(&h1, &p.wq, &p.bq);
    let k = affine(&h1, &p.wk, &p.bk);
    let v = affine(&h1, &p.wv, &p.bv);

    let mut ctx = Array2::zeros((n, d));
    let mut probs = Vec::with_capacity(n_heads);
    for head in 0..n_heads {
        let cols = s![.., head * hd..(head + 1) * hd];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        for mut row in scores.rows_mut() {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut total = T::zero();
            for s in row.iter_mut() {
                *s = ((*s - max) * scale).exp();
                total += *s;
            }
            row.mapv_inplace(|s| s / total);
        }
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }

    let x_mid = x + &affine(&ctx, &p.wo, &p.bo);
    let (h2, ln2) = layer_norm(&x_mid, &p.ln2_gain, &p.ln2_bias);
    let pre = affine(&h2, &p.ffn_in, &p.ffn_in_bias);
    let act = pre.mapv(gelu);
    let out = &x_mid + &affine(&act, &p.ffn_out, &p.ffn_out_bias);

    let cache = LayerCache {
        ln1,
        h1,
        q,
        k,
        v,
        probs,
        ctx,
        ln2,
        h2,
        pre,
        act,
    };
    (out, cache)
}

fn layer_backward<T: Real>(
    p: &LayerParams<T>,
    c: &LayerCache<T>,
    dout: Array2<T>,
    n_heads: usize,
    g: &mut LayerParams<T>,
) -> Array2<T> {
    let (n, d) = dout.dim();
    let hd = d / n_heads;
    let scale = T::one() / lit::<T>(hd as f64).sqrt();

    // feed-forward branch
    add_outer(&mut g.ffn_out, c.act.view(), &dout);
    sum_rows_into(&mut g.ffn_out_bias, &dout);
    let mut dpre = dout.dot(&p.ffn_out.t());
    ndarray::Zip::from(&mut dpre)
        .and(&c.pre)
        .for_each(|dp, &u| *dp *= gelu_grad(u));
    add_outer(&mut g.ffn_in, c.h2.view(), &dpre);
    sum_rows_into(&mut g.ffn_in_bias, &dpre);
    let dh2 = dpre.dot(&p.ffn_in.t());
    let dx_mid = dout + &layer_norm_backward(&dh2, &c.ln2, &p.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

    // attention branch
    add_outer(&mut g.wo, c.ctx.view(), &dx_mid);
    sum_rows_into(&mut g.bo, &dx_mid);
    let dctx = dx_mid.dot(&p.wo.t());
    let mut dq = Array2::zeros((n, d));
    let mut dk = Array2::zeros((n, d));
    let mut dv = Array2::zeros((n, d));
    for (head, probs) in c.probs.iter().enumerate() {
        let cols = s![.., head * hd..(head + 1) * hd];
        let dctx_h = dctx.slice(cols);
        let mut dscores = dctx_h.dot(&c.v.slice(cols).t());
        dv.slice_mut(cols).assign(&probs.t().dot(&dctx_h));
        for (mut ds_row, p_row) in dscores.rows_mut().into_iter().zip(probs.rows()) {
            let inner = ds_row
                .iter()
                .zip(p_row.iter())
                .fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            for (ds, &pv) in ds_row.iter_mut().zip(p_row.iter()) {
                *ds = pv * (*ds - inner) * scale;
            }
        }
        dq.slice_mut(cols).assign(&dscores.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&dscores.t().dot(&c.q.slice(cols)));
    }
    add_outer(&mut g.wq, c.h1.view(), &dq);
    add_outer(&mut g.wk, c.h1.view(), &dk);
    add_outer(&mut g.wv, c.h1.view(), &dv);
    sum_rows_into(&mut g.bq, &dq);
    sum_rows_into(&mut g.bk, &dk);
    sum_rows_into(&mut g.bv, &dv);
    let dh1 = dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
    dx_mid + layer_norm_backward(&dh1, &c.ln1, &p.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias)
}

fn check_batch<T: Real>(params: &EncoderParams<T>, batch: &[TokenSeq]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Empty("forward needs at least one sequence".into()));
    }
    let cfg = &params.config;
    for seq in batch {
        if seq.len() > cfg.max_len {
            return Err(Error::SequenceTooLong {
                len: seq.len(),
                max_len: cfg.max_len,
            });
        }
        if let Some(&id) = seq.ids().iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
    }
    Ok(())
}

fn forward_one<T: Real>(params: &EncoderParams<T>, seq: &TokenSeq) -> (Vec<T>, SeqCache<T>) {
    let ids = seq.real_ids().to_vec();
    let n = ids.len();
    let d = params.config.dim;
    let mut x = Array2::zeros((n, d));
    for (t, &id) in ids.iter().enumerate() {
        let tok = params.token_embedding.row(id as usize);
        let pos = params.position_embedding.row(t);
        for j in 0..d {
            x[[t, j]] = tok[j] + pos[j];
        }
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (next, cache) = layer_forward(layer, &x, params.config.n_heads);
        layers.push(cache);
        x = next;
    }
    let (out, final_norm) = layer_norm(&x, &params.final_gain, &params.final_bias);

    // masked mean, positions summed in order
    let inv_n = T::one() / lit::<T>(n as f64);
    let pooled = (0..d)
        .map(|j| (0..n).fold(T::zero(), |acc, t| acc + out[[t, j]]) * inv_n)
        .collect();
    (
        pooled,
        SeqCache {
            ids,
            layers,
            final_norm,
        },
    )
}

/// Embeds a batch of token sequences. Pad positions are excluded from
/// attention and from the pooled mean.
pub fn forward<T: Real>(params: &EncoderParams<T>, batch: &[TokenSeq]) -> Result<(EmbeddingBatch<T>, Cache<T>)> {
    check_batch(params, batch)?;
    let results: Vec<(Vec<T>, SeqCache<T>)> = batch.par_iter().map(|seq| forward_one(params, seq)).collect();
    let d = params.config.dim;
    let mut vectors = Array2::zeros((batch.len(), d));
    let mut seqs = Vec::with_capacity(batch.len());
    for (i, (row, cache)) in results.into_iter().enumerate() {
        vectors.row_mut(i).assign(&Array1::from(row));
        seqs.push(cache);
    }
    Ok((EmbeddingBatch::new(vectors)?, Cache { seqs, dim: d }))
}

struct SeqGrads<T> {
    ids: Vec<u32>,
    dx0: Array2<T>,
    layers: Vec<LayerParams<T>>,
    final_gain: Array1<T>,
    final_bias: Array1<T>,
}

fn backward_one<T: Real>(params: &EncoderParams<T>, cache: &SeqCache<T>, grad: ndarray::ArrayView1<T>) -> SeqGrads<T> {
    let n = cache.ids.len();
    let d = params.config.dim;
    let inv_n = T::one() / lit::<T>(n as f64);
    let mut dout = Array2::zeros((n, d));
    for mut row in dout.rows_mut() {
        for (o, &g) in row.iter_mut().zip(grad.iter()) {
            *o = g * inv_n;
        }
    }
    let mut final_gain = Array1::zeros(d);
    let mut final_bias = Array1::zeros(d);
    let mut dx = layer_norm_backward(
        &dout,
        &cache.final_norm,
        &params.final_gain,
        &mut final_gain,
        &mut final_bias,
    );
    let zero_layers = params.zeros_like().layers;
    let mut layer_grads = zero_layers;
    for ((layer, lc), g) in params
        .layers
        .iter()
        .zip(&cache.layers)
        .zip(layer_grads.iter_mut())
        .rev()
    {
        dx = layer_backward(layer, lc, dx, params.config.n_heads, g);
    }
    SeqGrads {
        ids: cache.ids.clone(),
        dx0: dx,
        layers: layer_grads,
        final_gain,
        final_bias,
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

/// Gradients of `sum(grad_output * embeddings)` with respect to every
/// parameter. Per-sequence contributions are reduced in batch order.
pub fn backward<T: Real>(
    params: &EncoderParams<T>,
    cache: &Cache<T>,
    grad_output: &Array2<T>,
) -> Result<ParamGrads<T>> {
    if grad_output.dim() != (cache.seqs.len(), cache.dim) || cache.dim != params.config.dim {
        return Err(Error::ShapeMismatch(format!(
            "grad_output is {:?}, cache holds {} rows of dim {}",
            grad_output.dim(),
            cache.seqs.len(),
            cache.dim
        )));
    }
    let per_seq: Vec<SeqGrads<T>> = cache
        .seqs
        .par_iter()
        .enumerate()
        .map(|(i, c)| backward_one(params, c, grad_output.row(i)))
        .collect();

    let mut grads = params.zeros_like();
    for sg in per_seq {
        for (t, &id) in sg.ids.iter().enumerate() {
            let row = sg.dx0.row(t);
            grads
                .token_embedding
                .row_mut(id as usize)
                .zip_mut_with(&row, |a, &b| *a += b);
            grads.position_embedding.row_mut(t).zip_mut_with(&row, |a, &b| *a += b);
        }
        for (acc, g) in grads.layers.iter_mut().zip(&sg.layers) {
            for (dst, (_, src)) in acc.tensors_mut().into_iter().zip(g.tensors()) {
                add_into(dst, src);
            }
        }
        grads.final_gain += &sg.final_gain;
        grads.final_bias += &sg.final_bias;
    }
    Ok(grads)
}

/// Tokenizes and embeds `texts` in one call.
pub fn embed<T: Real, S: AsRef<str>>(
    params: &EncoderParams<T>,
    vocab: &Vocab,
    texts: &[S],
    max_len: usize,
) -> Result<EmbeddingBatch<T>> {
    params.check_vocab(vocab)?;
    let batch = vocab.encode_batch(texts, max_len)?;
    Ok(forward(params, &batch)?.0)
}
