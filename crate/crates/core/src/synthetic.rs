//! Deterministic synthetic bilingual data for closed-loop experiments.
//!
//! Source sentences are random word strings over a small lexicon. Each target
//! sentence replaces every source word with its fixed translation, so the two
//! sides carry the same content under a word-level bijection.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ParallelCorpus, SentencePair};
use crate::error::{Error, Result};

const SOURCE_ONSETS: &[&str] = &["b", "d", "g", "k", "m", "n", "p", "r", "s", "t"];
const TARGET_ONSETS: &[&str] = &["f", "h", "j", "l", "v", "w", "y", "z", "ch", "sh"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub pairs: usize,
    pub lexicon_size: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            pairs: 2000,
            lexicon_size: 16,
            min_words: 3,
            max_words: 8,
            seed: 0,
        }
    }
}

/// Two-syllable words; with ten onsets and five vowels there are 2500 of them.
fn lexicon(onsets: &[&str], size: usize) -> Vec<String> {
    let syllables: Vec<String> = onsets
        .iter()
        .flat_map(|o| VOWELS.iter().map(move |v| format!("{o}{v}")))
        .collect();
    let mut words = Vec::with_capacity(size);
    'outer: for a in &syllables {
        for b in &syllables {
            if words.len() == size {
                break 'outer;
            }
            words.push(format!("{a}{b}"));
        }
    }
    words
}

/// Source and target lexicons and the translation permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicon {
    pub source: Vec<String>,
    pub target: Vec<String>,
    /// `target[translation[i]]` translates `source[i]`.
    pub translation: Vec<usize>,
}

impl Lexicon {
    pub fn new(size: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let cap = (SOURCE_ONSETS.len() * VOWELS.len()).pow(2);
        if size < 2 || size > cap {
            return Err(Error::InvalidConfig(format!("lexicon size must be in [2, {cap}]")));
        }
        let source = lexicon(SOURCE_ONSETS, size);
        let target = lexicon(TARGET_ONSETS, size);
        let mut translation: Vec<usize> = (0..size).collect();
        translation.shuffle(rng);
        Ok(Self {
            source,
            target,
            translation,
        })
    }

    pub fn translate(&self, sentence: &[usize]) -> String {
        sentence
            .iter()
            .map(|&w| self.target[self.translation[w]].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn render(&self, sentence: &[usize]) -> String {
        sentence
            .iter()
            .map(|&w| self.source[w].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Builds `config.pairs` distinct sentence pairs.
pub fn bilingual_corpus(config: &SyntheticConfig) -> Result<ParallelCorpus> {
    if config.pairs == 0 {
        return Err(Error::InvalidConfig("pairs must be >= 1".into()));
    }
    if config.min_words == 0 || config.min_words > config.max_words {
        return Err(Error::InvalidConfig("need 1 <= min_words <= max_words".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = Lexicon::new(config.lexicon_size, &mut rng)?;
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(config.pairs);
    let mut attempts = 0usize;
    while pairs.len() < config.pairs {
        attempts += 1;
        if attempts > 100 * config.pairs + 1000 {
            return Err(Error::InvalidConfig(format!(
                "could not draw {} distinct sentences from this lexicon",
                config.pairs
            )));
        }
        let len = rng.random_range(config.min_words..=config.max_words);
        let words: Vec<usize> = (0..len).map(|_| rng.random_range(0..config.lexicon_size)).collect();
        if seen.insert(words.clone()) {
            pairs.push(SentencePair::new(lex.render(&words), lex.translate(&words)));
        }
    }
    Ok(ParallelCorpus::new(pairs, "synthetic"))
}
