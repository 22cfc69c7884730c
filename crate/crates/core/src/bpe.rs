//! Byte-pair-encoding tokenizer with reserved task tokens.
//!
//! Words are whitespace-delimited; the last symbol of each word carries a
//! `</w>` suffix so that decoding can restore single spaces. Special tokens
//! are split out before merging and always map to a single fixed id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lexicon::AgencyLabel;

pub const END_OF_WORD: &str = "</w>";

/// Reserved tokens in id order.
pub const SPECIALS: [&str; 7] = ["<Pos>", "<Equal>", "<Neg>", "<VERB>", "<SEP>", "<PAD>", "<END>"];

pub const POS_ID: u32 = 0;
pub const EQUAL_ID: u32 = 1;
pub const NEG_ID: u32 = 2;
pub const VERB_ID: u32 = 3;
pub const SEP_ID: u32 = 4;
pub const PAD_ID: u32 = 5;
pub const END_ID: u32 = 6;

pub const DEFAULT_VOCAB_SIZE: usize = 2048;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("training corpus contains no words")]
    EmptyCorpus,
    #[error("vocab size {requested} is below the {minimum} base symbols and specials")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("character {0:?} is not in the vocabulary alphabet")]
    UnknownChar(char),
    #[error("token id {0} is out of range")]
    UnknownId(u32),
    #[error("invalid vocabulary file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct VocabFile {
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    specials: BTreeMap<String, u32>,
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    alphabet: Vec<char>,
    merges: Vec<(String, String)>,
    tokens: Vec<String>,
    id_of: HashMap<String, u32>,
    merge_rank: HashMap<(String, String), usize>,
}

enum Piece<'a> {
    Special(u32),
    Word(&'a str),
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        while !rest.is_empty() {
            let next = SPECIALS
                .iter()
                .enumerate()
                .filter_map(|(id, s)| rest.find(s).map(|at| (at, id, s.len())))
                .min();
            match next {
                Some((0, id, len)) => {
                    out.push(Piece::Special(id as u32));
                    rest = &rest[len..];
                }
                Some((at, _, _)) => {
                    out.push(Piece::Word(&rest[..at]));
                    rest = &rest[at..];
                }
                None => {
                    out.push(Piece::Word(rest));
                    rest = "";
                }
            }
        }
    }
    out
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == n {
                format!("{c}{END_OF_WORD}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merge_in_place(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let merged = format!("{left}{right}");
            symbols[i] = merged;
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

impl Vocabulary {
    fn build(alphabet: Vec<char>, merges: Vec<(String, String)>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for c in &alphabet {
            tokens.push(c.to_string());
            tokens.push(format!("{c}{END_OF_WORD}"));
        }
        let mut id_of: HashMap<String, u32> = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            id_of.insert(t.clone(), i as u32);
        }
        let mut merge_rank = HashMap::new();
        for (rank, (l, r)) in merges.iter().enumerate() {
            merge_rank.insert((l.clone(), r.clone()), rank);
            let merged = format!("{l}{r}");
            if !id_of.contains_key(&merged) {
                id_of.insert(merged.clone(), tokens.len() as u32);
                tokens.push(merged);
            }
        }
        Self {
            alphabet,
            merges,
            tokens,
            id_of,
            merge_rank,
        }
    }

    /// Greedy most-frequent-pair training. Stops at `vocab_size` tokens or
    /// when no pair occurs at least twice. Ties go to the lexicographically
    /// smallest pair.
    pub fn train<I, S>(corpus: I, vocab_size: usize) -> Result<Self, BpeError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut word_counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for piece in pieces(text.as_ref()) {
                if let Piece::Word(w) = piece {
                    *word_counts.entry(w.to_string()).or_insert(0) += 1;
                }
            }
        }
        if word_counts.is_empty() {
            return Err(BpeError::EmptyCorpus);
        }
        let alphabet: Vec<char> = word_counts
            .keys()
            .flat_map(|w| w.chars())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let minimum = SPECIALS.len() + 2 * alphabet.len();
        if vocab_size < minimum {
            return Err(BpeError::VocabTooSmall {
                requested: vocab_size,
                minimum,
            });
        }
        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &c)| (word_symbols(w), c))
            .collect();
        let mut known: BTreeSet<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for c in &alphabet {
            known.insert(c.to_string());
            known.insert(format!("{c}{END_OF_WORD}"));
        }
        let mut merges = Vec::new();
        while known.len() < vocab_size {
            let mut pair_counts: HashMap<(&str, &str), usize> = HashMap::new();
            for (symbols, count) in &words {
                for w in symbols.windows(2) {
                    *pair_counts.entry((&w[0], &w[1])).or_insert(0) += count;
                }
            }
            let best = pair_counts
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
            let Some(((l, r), count)) = best else { break };
            if count < 2 {
                break;
            }
            let (l, r) = (l.to_string(), r.to_string());
            for (symbols, _) in words.iter_mut() {
                merge_in_place(symbols, &l, &r);
            }
            known.insert(format!("{l}{r}"));
            merges.push((l, r));
        }
        Ok(Self::build(alphabet, merges))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn control_id(label: AgencyLabel) -> u32 {
        match label {
            AgencyLabel::Positive => POS_ID,
            AgencyLabel::Equal => EQUAL_ID,
            AgencyLabel::Negative => NEG_ID,
        }
    }

    pub fn is_special(id: u32) -> bool {
        (id as usize) < SPECIALS.len()
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) -> Result<(), BpeError> {
        if let Some(c) = word.chars().find(|c| self.alphabet.binary_search(c).is_err()) {
            return Err(BpeError::UnknownChar(c));
        }
        let mut symbols = word_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_rank.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            merge_in_place(&mut symbols, l, r);
        }
        for s in symbols {
            out.push(self.id_of[&s]);
        }
        Ok(())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<u32>, BpeError> {
        let mut ids = Vec::new();
        for piece in pieces(text) {
            match piece {
                Piece::Special(id) => ids.push(id),
                Piece::Word(w) => self.encode_word(w, &mut ids)?,
            }
        }
        Ok(ids)
    }

    /// Inverse of [`encode`](Self::encode) for single-space-separated text
    /// whose special tokens stand alone between spaces.
    pub fn decode(&self, ids: &[u32]) -> Result<String, BpeError> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).ok_or(BpeError::UnknownId(id))?;
            if Self::is_special(id) {
                out.push_str(tok);
                out.push(' ');
            } else if let Some(stem) = tok.strip_suffix(END_OF_WORD) {
                out.push_str(stem);
                out.push(' ');
            } else {
                out.push_str(tok);
            }
        }
        if out.ends_with(' ') {
            out.pop();
        }
        Ok(out)
    }

    /// Id of the first subtoken of a whole word.
    pub fn first_subtoken(&self, word: &str) -> Option<u32> {
        if word.is_empty() || word.contains(char::is_whitespace) {
            return None;
        }
        let mut ids = Vec::new();
        self.encode_word(word, &mut ids).ok()?;
        ids.first().copied()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            alphabet: self.alphabet.clone(),
            merges: self.merges.clone(),
            specials: SPECIALS
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i as u32))
                .collect(),
        };
        serde_json::to_string(&file).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, BpeError> {
        let file: VocabFile =
            serde_json::from_str(json).map_err(|e| BpeError::Format(e.to_string()))?;
        for (i, s) in SPECIALS.iter().enumerate() {
            if file.specials.get(*s) != Some(&(i as u32)) {
                return Err(BpeError::Format(format!("special {s} must have id {i}")));
            }
        }
        if file.specials.len() != SPECIALS.len() {
            return Err(BpeError::Format("unexpected special tokens".into()));
        }
        let mut alphabet = file.alphabet;
        alphabet.sort_unstable();
        alphabet.dedup();
        Ok(Self::build(alphabet, file.merges))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BpeError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BpeError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
