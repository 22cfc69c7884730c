//! Sentence-level agency tagging and verb masking.

use thiserror::Error;

use crate::lexicon::{AgencyLabel, AgencyLexicon};

/// Placeholder that replaces masked agency verbs.
pub const VERB_MASK: &str = "<VERB>";

/// Verb-hit count above which a sentence is dropped from training data.
pub const MAX_TRAINING_VERBS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TagError {
    #[error("sentence is empty")]
    Empty,
    #[error("sentence agency is indeterminable")]
    Indeterminable,
}

fn is_reserved(token: &str) -> bool {
    token.len() > 2 && token.starts_with('<') && token.ends_with('>') && !token[1..token.len() - 1].contains(['<', '>'])
}

/// Lowercase, split on whitespace, strip leading/trailing punctuation.
/// Reserved `<...>` tokens pass through untouched; tokens that are pure
/// punctuation disappear.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            if is_reserved(raw) {
                return Some(raw.to_string());
            }
            let t = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!t.is_empty()).then(|| t.to_lowercase())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbHit {
    pub position: usize,
    pub lemma: String,
    pub label: AgencyLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub verb_hits: Vec<VerbHit>,
    pub sentence_agency: Option<AgencyLabel>,
}

impl TaggedSentence {
    pub fn count(&self, label: AgencyLabel) -> usize {
        self.verb_hits.iter().filter(|h| h.label == label).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSentence {
    pub tokens: Vec<String>,
    pub masked_positions: Vec<usize>,
    pub original_agency: Option<AgencyLabel>,
}

impl MaskedSentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Unmasked view of a sentence with no determinable agency.
    pub fn unmasked(tagged: &TaggedSentence) -> Self {
        Self {
            tokens: tagged.tokens.clone(),
            masked_positions: Vec::new(),
            original_agency: tagged.sentence_agency,
        }
    }
}

/// Label with strictly more hits than each other label, if any.
pub fn majority(counts: [usize; 3]) -> Option<AgencyLabel> {
    AgencyLabel::ALL.into_iter().find(|l| {
        let c = counts[l.index()];
        c > 0 && AgencyLabel::ALL.iter().all(|o| o == l || counts[o.index()] < c)
    })
}

pub fn tag_tokens(tokens: Vec<String>, lexicon: &AgencyLexicon) -> TaggedSentence {
    let verb_hits: Vec<VerbHit> = tokens
        .iter()
        .enumerate()
        .filter_map(|(position, tok)| {
            let lemma = lexicon.lemma_of(tok)?;
            let label = lexicon.label_of_lemma(lemma)?;
            Some(VerbHit {
                position,
                lemma: lemma.to_string(),
                label,
            })
        })
        .collect();
    let mut counts = [0usize; 3];
    for h in &verb_hits {
        counts[h.label.index()] += 1;
    }
    TaggedSentence {
        tokens,
        verb_hits,
        sentence_agency: majority(counts),
    }
}

pub fn tag(sentence: &str, lexicon: &AgencyLexicon) -> Result<TaggedSentence, TagError> {
    let tokens = tokenize(sentence);
    if tokens.is_empty() {
        return Err(TagError::Empty);
    }
    Ok(tag_tokens(tokens, lexicon))
}

/// Replace every hit carrying the sentence's agency with [`VERB_MASK`].
pub fn mask(tagged: &TaggedSentence) -> Result<MaskedSentence, TagError> {
    let agency = tagged.sentence_agency.ok_or(TagError::Indeterminable)?;
    Ok(mask_label(tagged, agency))
}

/// Mask every hit labelled `label`, whatever the sentence majority is.
pub fn mask_label(tagged: &TaggedSentence, label: AgencyLabel) -> MaskedSentence {
    let mut tokens = tagged.tokens.clone();
    let mut masked_positions = Vec::new();
    for hit in tagged.verb_hits.iter().filter(|h| h.label == label) {
        tokens[hit.position] = VERB_MASK.to_string();
        masked_positions.push(hit.position);
    }
    MaskedSentence {
        tokens,
        masked_positions,
        original_agency: Some(label),
    }
}

pub fn eligible_for_training(tagged: &TaggedSentence) -> bool {
    tagged.sentence_agency.is_some() && tagged.verb_hits.len() <= MAX_TRAINING_VERBS
}
