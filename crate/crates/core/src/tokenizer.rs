//! Word-level vocabulary and fixed-length encoding.
//!
//! The vocabulary file is UTF-8 text with one token per line: `<pad>` (id 0),
//! `<unk>` (id 1), then the ranked tokens with ids 2, 3, ...

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self> {
        let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Format(format!("invalid vocabulary token {tok:?} at id {id}")));
            }
            if token_to_id.insert(tok.clone(), id as u32).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
        }
        if id_to_token.len() < 3 {
            return Err(Error::Empty("vocabulary has no tokens besides <pad> and <unk>".into()));
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Builds a vocabulary from whitespace-separated words. Words with frequency
    /// `>= min_freq` are ranked by frequency (descending), ties broken
    /// lexicographically, and the top `max_size - 2` kept.
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: usize, min_freq: usize) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
        }
        if max_size < 3 || min_freq < 1 {
            return Err(Error::InvalidConfig(format!(
                "need max_size >= 3 and min_freq >= 1, got {max_size} and {min_freq}"
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for word in text.as_ref().split_whitespace() {
                if word != PAD_TOKEN && word != UNK_TOKEN {
                    *counts.entry(word).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_freq).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - 2);
        Self::from_tokens(ranked.into_iter().map(|(w, _)| w.to_string()))
    }

    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        out
    }

    /// SHA-256 of the serialized vocabulary; checkpoints record it.
    pub fn content_hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_file_string().as_bytes()).into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = content.lines();
        if lines.next() != Some(PAD_TOKEN) || lines.next() != Some(UNK_TOKEN) {
            return Err(Error::Format(format!(
                "{}: vocabulary must start with {PAD_TOKEN} and {UNK_TOKEN}",
                path.display()
            )));
        }
        Self::from_tokens(lines.map(str::to_string))
    }

    /// Encodes `text` to exactly `max_len` ids, truncating or right-padding.
    pub fn encode(&self, text: &str, max_len: usize) -> Result<TokenSeq> {
        self.encode_at(text, max_len, 0)
    }

    fn encode_at(&self, text: &str, max_len: usize, index: usize) -> Result<TokenSeq> {
        if max_len < 1 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        let mut ids: Vec<u32> = text
            .split_whitespace()
            .take(max_len)
            .map(|w| self.id(w).unwrap_or(UNK_ID))
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptyText { index });
        }
        let real = ids.len();
        ids.resize(max_len, PAD_ID);
        let mut mask = vec![1u8; real];
        mask.resize(max_len, 0);
        Ok(TokenSeq { ids, mask })
    }

    pub fn encode_batch<S: AsRef<str>>(&self, texts: &[S], max_len: usize) -> Result<Vec<TokenSeq>> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| self.encode_at(t.as_ref(), max_len, i))
            .collect()
    }

    /// Tokens for the real (non-pad) positions of `seq`.
    pub fn decode(&self, seq: &TokenSeq) -> Vec<&str> {
        seq.real_ids()
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect()
    }
}

/// Padded id sequence with its attention mask (1 = real token, 0 = pad).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    ids: Vec<u32>,
    mask: Vec<u8>,
}

impl TokenSeq {
    /// Checks the mask invariant: same length as `ids`, ones then zeros, at
    /// least one real token.
    pub fn new(ids: Vec<u32>, mask: Vec<u8>) -> Result<Self> {
        if ids.len() != mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids but {} mask entries",
                ids.len(),
                mask.len()
            )));
        }
        let real = mask.iter().take_while(|&&m| m == 1).count();
        if real == 0 || mask[real..].iter().any(|&m| m != 0) {
            return Err(Error::InvalidConfig(
                "mask must be 1s followed by 0s, with at least one 1".into(),
            ));
        }
        Ok(Self { ids, mask })
    }

    /// Unpadded sequence of the given ids.
    pub fn from_ids(ids: Vec<u32>) -> Result<Self> {
        let mask = vec![1; ids.len()];
        Self::new(ids, mask)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn mask(&self) -> &[u8] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of mask=1 positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m == 1).count()
    }

    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_len()]
    }

    /// The same tokens padded to `len` (>= current length).
    pub fn padded_to(&self, len: usize) -> TokenSeq {
        let mut ids = self.ids.clone();
        let mut mask = self.mask.clone();
        ids.resize(len.max(ids.len()), PAD_ID);
        mask.resize(len.max(mask.len()), 0);
        TokenSeq { ids, mask }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_counts_and_ranks() {
        let v = Vocab::build(&["a b a"], 100, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        assert_eq!(v.size(), 4);
    }

    #[test]
    fn min_freq_drops_rare_words() {
        let v = Vocab::build(&["a b a"], 100, 2).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
        assert_eq!(v.encode("b", 1).unwrap().ids(), &[UNK_ID]);
    }

    #[test]
    fn ties_break_lexicographically_and_truncate() {
        let v = Vocab::build(&["c b a", "d"], 4, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        let empty: [&str; 0] = [];
        assert!(matches!(Vocab::build(&empty, 10, 1), Err(Error::Empty(_))));
    }

    #[test]
    fn corpus_with_no_words_rejected() {
        assert!(Vocab::build(&["   "], 10, 1).is_err());
    }

    #[test]
    fn encode_pads_and_masks() {
        let v = Vocab::build(&["a b a"], 100, 1).unwrap();
        let s = v.encode("a b", 4).unwrap();
        assert_eq!(s.ids(), &[2, 3, 0, 0]);
        assert_eq!(s.mask(), &[1, 1, 0, 0]);
    }

    #[test]
    fn encode_oov_and_truncation() {
        let v = Vocab::build(&["a b a"], 100, 1).unwrap();
        let s = v.encode("z", 2).unwrap();
        assert_eq!((s.ids(), s.mask()), (&[1, 0][..], &[1, 0][..]));
        let s = v.encode("a b a b a", 3).unwrap();
        assert_eq!((s.ids(), s.mask()), (&[2, 3, 2][..], &[1, 1, 1][..]));
    }

    #[test]
    fn encode_batch_cases() {
        let v = Vocab::build(&["a b"], 100, 1).unwrap();
        let out = v.encode_batch(&["a", "b"], 5).unwrap();
        assert!(out.iter().all(|s| s.len() == 5));
        let empty: [&str; 0] = [];
        assert!(v.encode_batch(&empty, 5).unwrap().is_empty());
        assert!(matches!(
            v.encode_batch(&["a", "  "], 5),
            Err(Error::EmptyText { index: 1 })
        ));
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::build(&["x y z y"], 100, 1).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        v.save(f.path()).unwrap();
        assert_eq!(Vocab::load(f.path()).unwrap(), v);
    }

    #[test]
    fn reserved_tokens_in_text_are_not_vocabulary() {
        let v = Vocab::build(&["<pad> <unk> a"], 100, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a"]);
    }

    #[test]
    fn token_seq_rejects_bad_masks() {
        assert!(TokenSeq::new(vec![2, 3], vec![0, 1]).is_err());
        assert!(TokenSeq::new(vec![2, 3], vec![0, 0]).is_err());
        assert!(TokenSeq::new(vec![2], vec![1, 0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn words() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec(
                prop::collection::vec("[a-e]{1,3}", 1..8).prop_map(|w| w.join(" ")),
                1..10,
            )
        }

        proptest! {
            #[test]
            fn build_is_deterministic(texts in words()) {
                let a = Vocab::build(&texts, 50, 1).unwrap();
                let mut rev = texts.clone();
                rev.reverse();
                let b = Vocab::build(&rev, 50, 1).unwrap();
                prop_assert_eq!(a.to_file_string(), b.to_file_string());
            }

            #[test]
            fn ids_in_range_and_round_trip(texts in words(), probe in "[a-f ]{1,20}", max_len in 1usize..12) {
                let v = Vocab::build(&texts, 8, 1).unwrap();
                if let Ok(seq) = v.encode(&probe, max_len) {
                    prop_assert!(seq.ids().iter().all(|&id| (id as usize) < v.size()));
                }
                for t in &texts {
                    let seq = v.encode(t, max_len).unwrap();
                    if seq.real_ids().iter().all(|&id| id != UNK_ID) {
                        let decoded = v.decode(&seq).join(" ");
                        let again = v.encode(&decoded, max_len).unwrap();
                        prop_assert_eq!(again.ids(), seq.ids());
                    }
                }
            }
        }
    }
}
