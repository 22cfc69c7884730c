//! Automatic evaluation of revisions.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{BpeError, Vocabulary, END_ID, SEP_ID};
use crate::exec::Execution;
use crate::lexicon::{AgencyLabel, AgencyLexicon};
use crate::tagger::{self, VERB_MASK};
use crate::training::{InstanceKind, TrainingInstance};
use crate::transformer::{ModelError, TransformerModel};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records to evaluate")]
    Empty,
    #[error(transparent)]
    Encode(#[from] BpeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("language model vocabulary {model} does not match {vocab}")]
    VocabMismatch { model: String, vocab: String },
}

const STOPWORDS: &str = include_str!("../resources/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }
}

impl Default for Stopwords {
    /// The bundled list.
    fn default() -> Self {
        Self::parse(STOPWORDS)
    }
}

/// One input/output pair. `output_agency` is always recomputed by the tagger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    #[serde(alias = "text")]
    pub input: String,
    pub output: String,
    pub target: AgencyLabel,
    #[serde(default)]
    pub output_agency: Option<AgencyLabel>,
}

impl EvalRecord {
    pub fn new(input: impl Into<String>, output: impl Into<String>, target: AgencyLabel, lexicon: &AgencyLexicon) -> Self {
        let mut r = Self {
            input: input.into(),
            output: output.into(),
            target,
            output_agency: None,
        };
        r.retag(lexicon);
        r
    }

    pub fn retag(&mut self, lexicon: &AgencyLexicon) {
        self.output_agency = tagger::tag(&self.output, lexicon).ok().and_then(|t| t.sentence_agency);
    }

    pub fn correct(&self) -> bool {
        self.output_agency == Some(self.target)
    }
}

/// Fraction of records whose output agency equals the target. Indeterminable
/// output agency is a miss.
pub fn agency_accuracy(records: &[EvalRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.correct()).count() as f64 / records.len() as f64
}

fn content_counts(text: &str, stopwords: &Stopwords) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for t in tagger::tokenize(text) {
        if t != VERB_MASK && !stopwords.contains(&t) {
            *m.entry(t).or_insert(0) += 1;
        }
    }
    m
}

/// Multiset F1 of lowercased content tokens. Mask tokens are ignored on
/// both sides; two empty sides score 1.
pub fn meaning_proxy(input: &str, output: &str, stopwords: &Stopwords) -> f64 {
    let a = content_counts(input, stopwords);
    let b = content_counts(output, stopwords);
    let na: usize = a.values().sum();
    let nb: usize = b.values().sum();
    if na == 0 && nb == 0 {
        return 1.0;
    }
    let overlap: usize = a.iter().map(|(t, &c)| c.min(b.get(t).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / nb as f64;
    let r = overlap as f64 / na as f64;
    2.0 * p * r / (p + r)
}

/// Whether some word bigram occurs at least twice.
pub fn has_repeated_bigram(text: &str) -> bool {
    let toks = tagger::tokenize(text);
    let mut seen = HashSet::new();
    toks.windows(2).any(|w| !seen.insert((&w[0], &w[1])))
}

pub fn repetition_rate<S: AsRef<str>>(outputs: &[S]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    outputs.iter().filter(|o| has_repeated_bigram(o.as_ref())).count() as f64 / outputs.len() as f64
}

/// Fraction of outputs whose exact string occurs exactly once.
pub fn uniqueness<S: AsRef<str>>(outputs: &[S]) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for o in outputs {
        *counts.entry(o.as_ref()).or_insert(0) += 1;
    }
    outputs.iter().filter(|o| counts[o.as_ref()] == 1).count() as f64 / outputs.len() as f64
}

/// Scored sequence for the fluency LM: `<SEP> text <END>`, every token but
/// the leading `<SEP>` supervised. Sequences longer than the context are cut.
pub fn lm_sequence(text: &str, vocab: &Vocabulary, max_seq_len: usize) -> Result<Vec<u32>, BpeError> {
    let mut ids = vec![SEP_ID];
    ids.extend(vocab.encode(text)?);
    ids.push(END_ID);
    ids.truncate(max_seq_len);
    Ok(ids)
}

/// Training instance for the fluency LM on one raw sentence.
pub fn lm_instance(text: &str, vocab: &Vocabulary, max_seq_len: usize) -> Result<TrainingInstance, BpeError> {
    let ids = lm_sequence(&tagger::tokenize(text).join(" "), vocab, max_seq_len)?;
    let mut loss_mask = vec![true; ids.len()];
    loss_mask[0] = false;
    Ok(TrainingInstance {
        input_ids: vec![SEP_ID],
        output_ids: ids[1..].to_vec(),
        loss_mask,
        kind: InstanceKind::Reconstruction,
        source_agency: AgencyLabel::Equal,
        target_agency: AgencyLabel::Equal,
    })
}

/// exp of the mean per-token NLL over every scored token of every output.
pub fn fluency_ppl<S: AsRef<str> + Sync>(
    lm: &TransformerModel,
    vocab: &Vocabulary,
    outputs: &[S],
    exec: Execution,
) -> Result<f64, MetricsError> {
    if outputs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let vocab_hash = vocab.hash();
    if lm.vocab_hash != vocab_hash {
        return Err(MetricsError::VocabMismatch {
            model: lm.vocab_hash.clone(),
            vocab: vocab_hash,
        });
    }
    let per_output = exec.map(outputs, |o| -> Result<(f64, usize), MetricsError> {
        let ids = lm_sequence(o.as_ref(), vocab, lm.config.max_seq_len)?;
        let mut mask = vec![true; ids.len()];
        mask[0] = false;
        let rep = lm.loss(&ids, &mask)?;
        Ok((rep.per_position.iter().sum(), rep.token_count))
    });
    let (mut nll, mut n) = (0.0, 0usize);
    for r in per_output {
        let (s, c) = r?;
        nll += s;
        n += c;
    }
    Ok((nll / n as f64).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub meaning_proxy: f64,
    /// Absent when no fluency LM was supplied.
    pub perplexity: Option<f64>,
    pub with_rep: f64,
    pub unique: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub input: String,
    pub output: String,
    pub target: AgencyLabel,
    pub output_agency: Option<AgencyLabel>,
    pub correct: bool,
    pub meaning_proxy: f64,
    pub repeated_bigram: bool,
}

/// Retags every record and computes all metrics over the same record set.
pub fn evaluate(
    records: &[EvalRecord],
    lexicon: &AgencyLexicon,
    stopwords: &Stopwords,
    lm: Option<(&TransformerModel, &Vocabulary)>,
    exec: Execution,
) -> Result<(MetricsReport, Vec<RecordScore>), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let records: Vec<EvalRecord> = exec.map(records, |r| {
        let mut r = r.clone();
        r.retag(lexicon);
        r
    });
    let scores: Vec<RecordScore> = exec.map(&records, |r| RecordScore {
        input: r.input.clone(),
        output: r.output.clone(),
        target: r.target,
        output_agency: r.output_agency,
        correct: r.correct(),
        meaning_proxy: meaning_proxy(&r.input, &r.output, stopwords),
        repeated_bigram: has_repeated_bigram(&r.output),
    });
    let outputs: Vec<&str> = records.iter().map(|r| r.output.as_str()).collect();
    let perplexity = match lm {
        Some((m, v)) => Some(fluency_ppl(m, v, &outputs, exec)?),
        None => None,
    };
    let n = records.len();
    let report = MetricsReport {
        n,
        accuracy: agency_accuracy(&records),
        meaning_proxy: scores.iter().map(|s| s.meaning_proxy).sum::<f64>() / n as f64,
        perplexity,
        with_rep: repetition_rate(&outputs),
        unique: uniqueness(&outputs),
    };
    Ok((report, scores))
}
