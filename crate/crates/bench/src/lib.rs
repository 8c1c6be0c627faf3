//! Shared fixtures for the criterion benches.

use xdistill::synthetic::{bilingual_corpus, SyntheticConfig};
use xdistill::{EmbeddingBatch, EncoderConfig, EncoderParams, ParallelCorpus, TokenSeq, Vocab};

/// Student-sized encoder with a batch of encoded synthetic sentences.
pub struct EncoderFixture {
    pub params: EncoderParams<f32>,
    pub batch: Vec<TokenSeq>,
}

pub fn corpus(pairs: usize) -> ParallelCorpus {
    bilingual_corpus(&SyntheticConfig {
        pairs,
        seed: 1,
        ..SyntheticConfig::default()
    })
    .expect("synthetic corpus")
}

pub fn encoder_fixture(dim: usize, n_layers: usize, batch_size: usize) -> EncoderFixture {
    let corpus = corpus(batch_size);
    let vocab = Vocab::build(&corpus.sources(), 1000, 1).expect("vocab");
    let config = EncoderConfig {
        vocab_size: vocab.size(),
        dim,
        n_layers,
        n_heads: 4,
        ffn_mult: 4,
        max_len: 16,
        seed: 7,
    };
    EncoderFixture {
        params: EncoderParams::init(&config).expect("params"),
        batch: vocab.encode_batch(&corpus.sources(), 16).expect("encode"),
    }
}

/// Deterministic pseudo-random rows in [-1, 1].
pub fn rows(n: usize, dim: usize, salt: u64) -> EmbeddingBatch<f64> {
    let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let values: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    // xorshift64
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
                })
                .collect()
        })
        .collect();
    EmbeddingBatch::from_rows(&values).expect("finite rows")
}

/// `n` scores with many ties, as in graded STS labels.
pub fn scores(n: usize, salt: u64) -> Vec<f64> {
    let r = rows(n, 1, salt);
    r.vectors()
        .iter()
        .map(|v| ((v + 1.0) * 2.5 * 5.0).round() / 5.0)
        .collect()
}
