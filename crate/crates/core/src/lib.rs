//! Cross-lingual knowledge distillation for compact sentence encoders.
//!
//! A student encoder reads sentences in a low-resource language and is trained
//! to reproduce the embeddings a frozen teacher assigned to their translations.
//! The crate covers the whole loop: parallel-corpus handling, a word-level
//! tokenizer, a small pre-norm transformer with hand-written backpropagation,
//! the MSE and multiple-negatives ranking objectives, AdamW with a
//! warmup/decay schedule, checkpointing, and the evaluation protocols
//! (paraphrase cosine, STS correlations, t-SNE plots).

pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod real;
pub mod synthetic;
pub mod teacher;
pub mod tokenizer;
pub mod trainer;
pub mod tsne;

pub use corpus::{LabeledSentences, ParallelCorpus, ScoredPairs, TextFormat};
pub use encoder::{EmbeddingBatch, EncoderConfig, EncoderParams, ParamGrads};
pub use error::{Error, Result};
pub use eval::{EvalReport, EvalTask};
pub use losses::{LossKind, LossResult};
pub use real::Real;
pub use teacher::TeacherTable;
pub use tokenizer::{TokenSeq, Vocab};
pub use trainer::{Checkpoint, OptimizerState, StepRecord, TrainingConfig, TrainingMeta};
pub use tsne::{Layout2D, TsneConfig};
