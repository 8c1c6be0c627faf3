//! Target embeddings from the frozen teacher.
//!
//! Embedding file layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "XLTE"
//! 4       4     version u32 = 1
//! 8       4     count u32
//! 12      4     dim u32
//! 16      4*count*dim  f32 values, row-major
//! ```
//!
//! Row `i` belongs to pair `i` of the corpus it was computed for. The same
//! format carries student embeddings written by the `embed` command.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::corpus::ParallelCorpus;
use crate::encoder::{embed, EmbeddingBatch, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 4] = b"XLTE";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherTable {
    pub embeddings: EmbeddingBatch<f32>,
}

impl TeacherTable {
    pub fn new(embeddings: EmbeddingBatch<f32>) -> Self {
        Self { embeddings }
    }

    pub fn count(&self) -> usize {
        self.embeddings.count()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    /// Teacher rows for the given pair indices.
    pub fn rows(&self, indices: &[usize]) -> Result<EmbeddingBatch<f32>> {
        self.embeddings.select(indices)
    }
}

pub fn encode_embedding_file(batch: &EmbeddingBatch<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * batch.count() * batch.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(batch.count() as u32).to_le_bytes());
    out.extend_from_slice(&(batch.dim() as u32).to_le_bytes());
    for v in batch.vectors().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

pub fn decode_embedding_file(bytes: &[u8]) -> Result<EmbeddingBatch<f32>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file of {} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}, expected \"XLTE\"", &bytes[..4])));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    let expected = HEADER_LEN + 4 * count * dim;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload holds {} bytes, header declares {count}x{dim} ({} bytes)",
            bytes.len() - HEADER_LEN,
            expected - HEADER_LEN
        )));
    }
    let values: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let vectors = Array2::from_shape_vec((count, dim), values).map_err(|e| Error::Format(e.to_string()))?;
    EmbeddingBatch::new(vectors)
}

pub fn write_embedding_file(path: &Path, batch: &EmbeddingBatch<f32>) -> Result<()> {
    fs::write(path, encode_embedding_file(batch)).map_err(|e| Error::io(path, e))
}

/// Reads any embedding file without a count check.
pub fn read_embedding_file(path: &Path) -> Result<EmbeddingBatch<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embedding_file(&bytes)
}

pub fn write_teacher_file(path: &Path, table: &TeacherTable) -> Result<()> {
    write_embedding_file(path, &table.embeddings)
}

/// Reads a teacher file and checks it has one row per corpus pair.
pub fn read_teacher_file(path: &Path, expected_count: usize) -> Result<TeacherTable> {
    let embeddings = read_embedding_file(path)?;
    if embeddings.count() != expected_count {
        return Err(Error::Alignment {
            expected: expected_count,
            found: embeddings.count(),
        });
    }
    Ok(TeacherTable { embeddings })
}

/// L2-normalizes every row (norms computed in `f64`).
pub fn l2_normalize(batch: &EmbeddingBatch<f32>) -> Result<EmbeddingBatch<f32>> {
    let mut v = batch.vectors().clone();
    for (i, mut row) in v.rows_mut().into_iter().enumerate() {
        let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm { row: i });
        }
        row.mapv_inplace(|x| (x as f64 / norm) as f32);
    }
    EmbeddingBatch::new(v)
}

/// Stand-in teacher: a frozen encoder initialized from `config.seed` embeds the
/// target side of `corpus`, and each row is L2-normalized. `vocab` must cover
/// the target language.
pub fn toy_teacher(config: &EncoderConfig, vocab: &Vocab, corpus: &ParallelCorpus) -> Result<TeacherTable> {
    let params = EncoderParams::<f32>::init(config)?;
    let targets = corpus.targets();
    if targets.is_empty() {
        return Err(Error::Empty("toy teacher needs at least one pair".into()));
    }
    let raw = embed(&params, vocab, &targets, config.max_len)?;
    Ok(TeacherTable::new(l2_normalize(&raw)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SentencePair;

    fn table(rows: &[Vec<f32>]) -> TeacherTable {
        TeacherTable::new(EmbeddingBatch::from_rows(rows).unwrap())
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let t = table(&[
            vec![1.0, -0.0, f32::MIN_POSITIVE, 3.5],
            vec![1e-38, 7.25, -2.0, 0.1],
            vec![f32::MAX, f32::EPSILON, 0.3, -0.3],
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_teacher_file(&path, &t).unwrap();
        assert_eq!(fs::metadata(&path).unwrap().len(), 16 + 48);
        let back = read_teacher_file(&path, 3).unwrap();
        let bits = |t: &TeacherTable| t.embeddings.vectors().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn count_mismatch_is_alignment_error() {
        let rows: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32, 1.0]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        write_teacher_file(&path, &table(&rows)).unwrap();
        assert_eq!(read_teacher_file(&path, 10).unwrap().count(), 10);
        assert!(matches!(
            read_teacher_file(&path, 12),
            Err(Error::Alignment {
                expected: 12,
                found: 10
            })
        ));
    }

    #[test]
    fn bad_magic_truncation_and_version() {
        let mut bytes = encode_embedding_file(&table(&[vec![1.0, 2.0]]).embeddings);
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(matches!(decode_embedding_file(&bad), Err(Error::Format(_))));
        assert!(matches!(
            decode_embedding_file(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        assert!(matches!(decode_embedding_file(&bytes[..10]), Err(Error::Format(_))));
        bytes[4] = 2;
        assert!(matches!(
            decode_embedding_file(&bytes),
            Err(Error::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn zero_row_table_cannot_exist() {
        // A 0-row table is unrepresentable: EmbeddingBatch enforces count >= 1,
        // and a 0-row file is rejected on read.
        assert!(EmbeddingBatch::<f32>::new(Array2::zeros((0, 4))).is_err());
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        assert!(decode_embedding_file(&bytes).is_err());
    }

    fn toy_setup() -> (EncoderConfig, Vocab, ParallelCorpus) {
        let corpus = ParallelCorpus::new(
            vec![
                SentencePair::new("ek", "one two"),
                SentencePair::new("dui", "two three four"),
                SentencePair::new("ek abar", "one two"),
            ],
            "mem",
        );
        let vocab = Vocab::build(&corpus.targets(), 100, 1).unwrap();
        let config = EncoderConfig {
            vocab_size: vocab.size(),
            dim: 16,
            n_layers: 1,
            n_heads: 2,
            ffn_mult: 2,
            max_len: 8,
            seed: 99,
        };
        (config, vocab, corpus)
    }

    #[test]
    fn toy_teacher_rows() {
        let (config, vocab, corpus) = toy_setup();
        let t = toy_teacher(&config, &vocab, &corpus).unwrap();
        assert_eq!((t.count(), t.dim()), (3, 16));
        assert_eq!(t.embeddings.row(0), t.embeddings.row(2));
        for i in 0..3 {
            let n: f64 = t
                .embeddings
                .row(i)
                .iter()
                .map(|&x| (x as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        let again = toy_teacher(&config, &vocab, &corpus).unwrap();
        assert_eq!(
            encode_embedding_file(&t.embeddings),
            encode_embedding_file(&again.embeddings)
        );
    }
}
