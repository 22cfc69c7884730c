//! Agency-boosted nucleus sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, Vocabulary, END_ID};
use crate::exec::Execution;
use crate::lexicon::{AgencyLabel, AgencyLexicon, EmbeddingProvider};
use crate::tagger::{self, MaskedSentence, TagError};
use crate::tensor::softmax;
use crate::training::{input_segment, supplied_verb};
use crate::transformer::{ModelError, TransformerModel};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("model was built for vocabulary {model}, got {vocab}")]
    VocabMismatch { model: String, vocab: String },
    #[error("logits row has {found} entries, agency matrix has {expected}")]
    Dimension { found: usize, expected: usize },
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error(transparent)]
    Encode(#[from] BpeError),
    #[error(transparent)]
    Tag(#[from] TagError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// V×3 binary matrix stored as the (at most one) agency column of each row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgencyMatrix {
    rows: Vec<Option<AgencyLabel>>,
}

impl AgencyMatrix {
    pub fn zeros(vocab_size: usize) -> Self {
        Self {
            rows: vec![None; vocab_size],
        }
    }

    pub fn from_labels(rows: Vec<Option<AgencyLabel>>) -> Self {
        Self { rows }
    }

    pub fn vocab_size(&self) -> usize {
        self.rows.len()
    }

    pub fn label(&self, id: usize) -> Option<AgencyLabel> {
        self.rows[id]
    }

    /// Row `id` in (Positive, Equal, Negative) column order.
    pub fn row(&self, id: usize) -> [f64; 3] {
        let mut r = [0.0; 3];
        if let Some(l) = self.rows[id] {
            r[l.index()] = 1.0;
        }
        r
    }

    pub fn tagged(&self, label: AgencyLabel) -> impl Iterator<Item = usize> + '_ {
        self.rows
            .iter()
            .enumerate()
            .filter(move |(_, r)| **r == Some(label))
            .map(|(i, _)| i)
    }

    /// Total probability on rows tagged `label`.
    pub fn mass(&self, probs: &[f64], label: AgencyLabel) -> f64 {
        self.tagged(label).map(|i| probs[i]).sum()
    }
}

/// Marks the first subtoken of every inflection of every lemma. A subtoken
/// claimed by several agency levels keeps the strict majority of
/// contributing inflections; ties leave the row empty.
pub fn build_agency_matrix(lexicon: &AgencyLexicon, vocab: &Vocabulary) -> AgencyMatrix {
    let mut counts = vec![[0usize; 3]; vocab.len()];
    for (lemma, label) in lexicon.lemmas() {
        for form in lexicon.forms(lemma).unwrap_or_default() {
            if let Some(id) = vocab.first_subtoken(form) {
                counts[id as usize][label.index()] += 1;
            }
        }
    }
    AgencyMatrix {
        rows: counts.into_iter().map(tagger::majority).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostSpec {
    pub target: AgencyLabel,
    pub beta: f64,
}

/// `l + beta * A w`. Untagged entries are copied unchanged.
pub fn boost_logits(logits: &[f64], a: &AgencyMatrix, spec: BoostSpec) -> Result<Vec<f64>, DecodeError> {
    if logits.len() != a.vocab_size() {
        return Err(DecodeError::Dimension {
            found: logits.len(),
            expected: a.vocab_size(),
        });
    }
    Ok(logits
        .iter()
        .zip(&a.rows)
        .map(|(&l, r)| if *r == Some(spec.target) { l + spec.beta } else { l })
        .collect())
}

/// Smallest descending-probability prefix with cumulative mass at least
/// `top_p`. Zero-probability tokens are never included; equal
/// probabilities are ordered by id.
pub fn nucleus_filter(probs: &[f64], top_p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| probs[i] > 0.0).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let mut mass = 0.0;
    for (k, &i) in order.iter().enumerate() {
        mass += probs[i];
        if mass >= top_p {
            order.truncate(k + 1);
            break;
        }
    }
    order
}

/// Draws from `probs` renormalized over `support`.
pub fn sample_from<R: Rng + ?Sized>(probs: &[f64], support: &[usize], rng: &mut R) -> usize {
    let total: f64 = support.iter().map(|&i| probs[i]).sum();
    let mut u = rng.random::<f64>() * total;
    for &i in support {
        u -= probs[i];
        if u < 0.0 {
            return i;
        }
    }
    *support.last().expect("nonempty support")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub top_p: f64,
    pub beta: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            top_p: 0.4,
            beta: 5.0,
            max_new_tokens: 64,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(DecodeError::Config("top_p must lie in (0, 1]".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(DecodeError::Config("beta must be a nonnegative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub ids: Vec<u32>,
    pub text: String,
    /// No `<END>` was produced within the token or context budget.
    pub truncated: bool,
}

/// Samples an output segment after the conditioning prefix `x̂ <SEP> [v <SEP>] t <SEP>`.
#[allow(clippy::too_many_arguments)]
pub fn generate<R: Rng + ?Sized>(
    model: &TransformerModel,
    vocab: &Vocabulary,
    masked: &MaskedSentence,
    supplied: Option<&str>,
    target: AgencyLabel,
    a: &AgencyMatrix,
    config: &DecodeConfig,
    rng: &mut R,
) -> Result<Generation, DecodeError> {
    let vocab_hash = vocab.hash();
    if model.vocab_hash != vocab_hash {
        return Err(DecodeError::VocabMismatch {
            model: model.vocab_hash.clone(),
            vocab: vocab_hash,
        });
    }
    config.validate()?;
    let mut seq = vocab.encode(&input_segment(&masked.tokens, supplied, target))?;
    let prefix = seq.len();
    let spec = BoostSpec {
        target,
        beta: config.beta,
    };
    let mut truncated = true;
    while seq.len() - prefix < config.max_new_tokens && seq.len() < model.config.max_seq_len {
        let logits = model.next_logits(&seq)?;
        let probs = softmax(&boost_logits(&logits, a, spec)?);
        let support = nucleus_filter(&probs, config.top_p);
        let next = sample_from(&probs, &support, rng) as u32;
        if next == END_ID {
            truncated = false;
            break;
        }
        seq.push(next);
    }
    let ids = seq.split_off(prefix);
    Ok(Generation {
        text: vocab.decode(&ids)?,
        ids,
        truncated,
    })
}

/// Everything needed to revise raw sentences toward a target agency.
#[derive(Clone, Copy)]
pub struct Reviser<'a> {
    pub model: &'a TransformerModel,
    pub vocab: &'a Vocabulary,
    pub lexicon: &'a AgencyLexicon,
    pub matrix: &'a AgencyMatrix,
    pub config: DecodeConfig,
    /// Embeddings for a retrieved-verb input segment.
    pub supply: Option<&'a EmbeddingProvider>,
    /// Whether agency verbs of the input are masked before generation.
    pub mask_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    pub text: String,
    pub output: String,
    pub target: AgencyLabel,
    pub output_agency: Option<AgencyLabel>,
    pub truncated: bool,
}

impl Reviser<'_> {
    pub fn revise<R: Rng + ?Sized>(&self, text: &str, target: AgencyLabel, rng: &mut R) -> Result<Revision, DecodeError> {
        let tagged = tagger::tag(text, self.lexicon)?;
        let masked = match tagged.sentence_agency {
            Some(_) if self.mask_input => tagger::mask(&tagged)?,
            _ => MaskedSentence::unmasked(&tagged),
        };
        let verb = self
            .supply
            .and_then(|emb| supplied_verb(self.lexicon, emb, &tagged, &masked, target));
        let g = generate(
            self.model,
            self.vocab,
            &masked,
            verb.as_deref(),
            target,
            self.matrix,
            &self.config,
            rng,
        )?;
        let output_agency = tagger::tag(&g.text, self.lexicon)
            .ok()
            .and_then(|t| t.sentence_agency);
        Ok(Revision {
            text: text.to_string(),
            output: g.text,
            target,
            output_agency,
            truncated: g.truncated,
        })
    }

    /// Request `i` draws from its own stream of the configured seed, so the
    /// result does not depend on scheduling.
    pub fn revise_batch(
        &self,
        requests: &[(String, AgencyLabel)],
        exec: Execution,
    ) -> Vec<Result<Revision, DecodeError>> {
        exec.map_indexed(requests, |i, (text, target)| {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
            rng.set_stream(i as u64);
            self.revise(text, *target, &mut rng)
        })
    }
}
