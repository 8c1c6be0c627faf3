//! Command-line front end for the distillation toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error.

mod commands;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use xdistill::corpus::Side;
use xdistill::{LossKind, TextFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "xdistill",
    version,
    about = "Cross-lingual sentence-embedding distillation",
    arg_required_else_help = true
)]
pub struct Cli {
    /// Worker threads for data-parallel kernels
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, filter and deduplicate a parallel corpus, optionally splitting off a validation set
    Preprocess(PreprocessArgs),
    /// Build a word vocabulary from one side of a parallel corpus
    BuildVocab(BuildVocabArgs),
    /// Write teacher embeddings for the target side using a frozen, randomly initialized encoder
    ToyTeacher(ToyTeacherArgs),
    /// Train a student encoder against teacher embeddings
    Train(TrainArgs),
    /// Embed texts with a trained student
    Embed(EmbedArgs),
    /// Paraphrase evaluation: mean cosine similarity and threshold accuracy
    EvalParaphrase(EvalParaphraseArgs),
    /// STS evaluation: Pearson and Spearman correlation with gold scores
    EvalSts(EvalStsArgs),
    /// 2-D t-SNE scatter plot of labeled embeddings
    Tsne(TsneArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Tsv,
    Jsonl,
}

impl From<FormatArg> for TextFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Tsv => TextFormat::Tsv,
            FormatArg::Jsonl => TextFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Source,
    Target,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Source => Side::Source,
            SideArg::Target => Side::Target,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Mse,
    Mnr,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mse => LossKind::Mse,
            LossArg::Mnr => LossKind::Mnr,
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Parallel corpus (.tsv or .jsonl)
    #[arg(long)]
    pub corpus: PathBuf,
    /// Corpus format; inferred from the extension when omitted
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Cleaned corpus output (TSV)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_chars: usize,
    #[arg(long, default_value_t = 512)]
    pub max_chars: usize,
    /// Fraction of pairs to hold out; requires --val-out
    #[arg(long, requires = "val_out")]
    pub val_fraction: Option<f64>,
    /// Held-out pairs output (TSV)
    #[arg(long, requires = "val_fraction")]
    pub val_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary size including the two reserved tokens
    #[arg(long, default_value_t = 8000)]
    pub max_size: usize,
    #[arg(long, default_value_t = 1)]
    pub min_freq: usize,
    #[arg(long, value_enum, default_value_t = SideArg::Source)]
    pub side: SideArg,
}

#[derive(Debug, Args)]
pub struct EncoderArgs {
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 4)]
    pub ffn_mult: usize,
    /// Longest token sequence; longer texts are truncated
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args)]
pub struct ToyTeacherArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Vocabulary covering the target side
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub encoder: EncoderArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Teacher embedding file, one row per corpus pair
    #[arg(long)]
    pub teacher: PathBuf,
    /// Source-side vocabulary
    #[arg(long)]
    pub vocab: PathBuf,
    /// Checkpoint output
    #[arg(long)]
    pub out: PathBuf,
    /// Per-step log (step, epoch, lr, loss; tab-separated)
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LossArg::Mse)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub warmup_ratio: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Cosine scale of the ranking loss
    #[arg(long, default_value_t = 20.0)]
    pub scale: f64,
    #[arg(long, default_value_t = false)]
    pub no_shuffle: bool,
    /// Seeds both the student initialization and the batch order
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// One text per line; tab-separated lines use --column
    #[arg(long)]
    pub input: PathBuf,
    /// 0-based tab-separated column holding the text
    #[arg(long, default_value_t = 0)]
    pub column: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Evaluation pairs (TSV)
    #[arg(long)]
    pub pairs: PathBuf,
    /// Timing runs; the median is reported
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Also write the JSON report here
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalParaphraseArgs {
    #[command(flatten)]
    pub common: EvalArgs,
    /// Pairs with cosine at or above this are predicted paraphrases
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalStsArgs {
    #[command(flatten)]
    pub common: EvalArgs,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    /// Embedding file aligned with --labels
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Labeled sentences (text<TAB>label)
    #[arg(long)]
    pub labels: PathBuf,
    /// SVG output
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 30.0)]
    pub perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 12.0)]
    pub early_exaggeration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}
