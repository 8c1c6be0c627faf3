//! Parallel corpora and the evaluation dataset formats.
//!
//! File formats (all UTF-8, one record per line, no header):
//!
//! * parallel TSV: `<source>\t<target>`; source is the student language
//! * parallel JSONL: `{"src": "...", "tgt": "..."}`
//! * paraphrase TSV: `<text_a>\t<text_b>` with an optional third `0`/`1` label
//!   column; unlabeled rows count as paraphrases
//! * STS TSV: `<text_a>\t<text_b>\t<score>`, score a decimal in `[0, 5]`
//! * labeled TSV: `<text>\t<label_name>`; ids are assigned by first appearance

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_CHARS: usize = 1;
pub const DEFAULT_MAX_CHARS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextFormat {
    Tsv,
    Jsonl,
}

impl TextFormat {
    /// Guess from the file extension; anything other than `.jsonl`/`.json` is TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => TextFormat::Jsonl,
            _ => TextFormat::Tsv,
        }
    }
}

impl FromStr for TextFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(TextFormat::Tsv),
            "jsonl" => Ok(TextFormat::Jsonl),
            other => Err(format!("unknown format `{other}` (expected tsv or jsonl)")),
        }
    }
}

/// Which side of a parallel corpus to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
}

impl SentencePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn side(&self, side: Side) -> &str {
        match side {
            Side::Source => &self.source,
            Side::Target => &self.target,
        }
    }
}

/// Source/target sentence pairs. Source is the student language, target the
/// teacher language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub provenance: PathBuf,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<SentencePair>, provenance: impl Into<PathBuf>) -> Self {
        Self {
            pairs,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn texts(&self, side: Side) -> Vec<&str> {
        self.pairs.iter().map(|p| p.side(side)).collect()
    }

    pub fn sources(&self) -> Vec<&str> {
        self.texts(Side::Source)
    }

    pub fn targets(&self) -> Vec<&str> {
        self.texts(Side::Target)
    }

    /// Corpus restricted to `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> ParallelCorpus {
        ParallelCorpus {
            pairs: indices.iter().map(|&i| self.pairs[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for pair in &self.pairs {
            out.push_str(&pair.source);
            out.push('\t');
            out.push_str(&pair.target);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentence {
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSentences {
    pub items: Vec<LabeledSentence>,
    pub label_names: Vec<String>,
}

impl LabeledSentences {
    pub fn texts(&self) -> Vec<&str> {
        self.items.iter().map(|i| i.text.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub text_a: String,
    pub text_b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairs {
    pub items: Vec<ScoredPair>,
}

pub const STS_SCORE_MAX: f64 = 5.0;

/// Paraphrase evaluation pairs with binary labels (1 = paraphrase).
#[derive(Debug, Clone, PartialEq)]
pub struct ParaphrasePairs {
    pub text_a: Vec<String>,
    pub text_b: Vec<String>,
    pub labels: Vec<u8>,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Lines of a file with 1-based line numbers, trailing `\r` stripped.
fn numbered_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

fn split_fields<'a>(path: &Path, line_no: usize, line: &'a str, allowed: &[usize]) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split('\t').collect();
    if !allowed.contains(&fields.len()) {
        return Err(Error::ColumnCount {
            path: path.to_path_buf(),
            line: line_no,
            expected: allowed[0],
            found: fields.len(),
        });
    }
    Ok(fields)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonPair {
    src: String,
    tgt: String,
}

/// Reads a parallel corpus. Text is returned exactly as stored.
pub fn load_parallel(path: &Path, format: TextFormat) -> Result<ParallelCorpus> {
    let content = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (line_no, line) in numbered_lines(&content) {
        let pair = match format {
            TextFormat::Tsv => {
                let fields = split_fields(path, line_no, line, &[2])?;
                SentencePair::new(fields[0], fields[1])
            }
            TextFormat::Jsonl => {
                let rec: JsonPair = serde_json::from_str(line).map_err(|e| Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })?;
                SentencePair::new(rec.src, rec.tgt)
            }
        };
        pairs.push(pair);
    }
    Ok(ParallelCorpus::new(pairs, path))
}

fn normalize_text(text: &str) -> String {
    text.nfc().collect::<String>().trim().to_string()
}

/// NFC-normalizes and trims both sides, drops pairs with either side outside
/// `[min_chars, max_chars]` characters, and removes exact duplicates keeping the
/// first occurrence.
pub fn preprocess(corpus: &ParallelCorpus, min_chars: usize, max_chars: usize) -> Result<ParallelCorpus> {
    if min_chars < 1 || max_chars <= min_chars {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= min_chars < max_chars, got {min_chars}..{max_chars}"
        )));
    }
    let in_range = |s: &str| {
        let n = s.chars().count();
        n >= min_chars && n <= max_chars
    };
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for pair in &corpus.pairs {
        let cleaned = SentencePair::new(normalize_text(&pair.source), normalize_text(&pair.target));
        if !in_range(&cleaned.source) || !in_range(&cleaned.target) {
            continue;
        }
        if seen.insert(cleaned.clone()) {
            pairs.push(cleaned);
        }
    }
    Ok(ParallelCorpus::new(pairs, corpus.provenance.clone()))
}

/// Seeded train/validation split. Both parts keep corpus order.
pub fn split(corpus: &ParallelCorpus, val_fraction: f64, seed: u64) -> Result<(ParallelCorpus, ParallelCorpus)> {
    let n = corpus.len();
    if n < 2 {
        return Err(Error::Empty(format!("cannot split a corpus of {n} pair(s)")));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "val_fraction must lie in (0, 1), got {val_fraction}"
        )));
    }
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val_idx = order[..n_val].to_vec();
    let mut train_idx = order[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((corpus.select(&train_idx), corpus.select(&val_idx)))
}

pub fn load_sts(path: &Path) -> Result<ScoredPairs> {
    let content = read_to_string(path)?;
    let mut items = Vec::new();
    for (line_no, line) in numbered_lines(&content) {
        let fields = split_fields(path, line_no, line, &[3])?;
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| malformed(format!("score `{}` is not a number", fields[2])))?;
        if !(0.0..=STS_SCORE_MAX).contains(&score) {
            return Err(malformed(format!("score {score} outside [0, 5]")));
        }
        items.push(ScoredPair {
            text_a: fields[0].to_string(),
            text_b: fields[1].to_string(),
            score,
        });
    }
    Ok(ScoredPairs { items })
}

pub fn load_labeled(path: &Path) -> Result<LabeledSentences> {
    let content = read_to_string(path)?;
    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut label_names = Vec::new();
    let mut items = Vec::new();
    for (line_no, line) in numbered_lines(&content) {
        let fields = split_fields(path, line_no, line, &[2])?;
        let name = fields[1].trim();
        let label = *label_ids.entry(name.to_string()).or_insert_with(|| {
            label_names.push(name.to_string());
            label_names.len() - 1
        });
        items.push(LabeledSentence {
            text: fields[0].to_string(),
            label,
        });
    }
    if label_names.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "{}: need at least 2 distinct labels, found {}",
            path.display(),
            label_names.len()
        )));
    }
    Ok(LabeledSentences { items, label_names })
}

pub fn load_paraphrase(path: &Path) -> Result<ParaphrasePairs> {
    let content = read_to_string(path)?;
    let mut out = ParaphrasePairs {
        text_a: Vec::new(),
        text_b: Vec::new(),
        labels: Vec::new(),
    };
    for (line_no, line) in numbered_lines(&content) {
        let fields = split_fields(path, line_no, line, &[2, 3])?;
        let label = match fields.get(2).map(|s| s.trim()) {
            None | Some("1") => 1,
            Some("0") => 0,
            Some(other) => {
                return Err(Error::Malformed {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: format!("label `{other}` must be 0 or 1"),
                })
            }
        };
        out.text_a.push(fields[0].to_string());
        out.text_b.push(fields[1].to_string());
        out.labels.push(label);
    }
    Ok(out)
}
