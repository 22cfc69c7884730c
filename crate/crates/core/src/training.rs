//! Training instances, class balancing and the joint reconstruction +
//! paraphrase training loop.
//!
//! Sequence layout: `x̂ <SEP> [verb <SEP>] t <SEP> output <END>`, where the
//! bracketed retrieved verb appears only in supply-verb mode. Only the output
//! segment (including `<END>`) is supervised.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bpe::{Vocabulary, END_ID};
use crate::exec::Execution;
use crate::lexicon::{AgencyLabel, AgencyLexicon, EmbeddingProvider};
use crate::tagger::{self, MaskedSentence, TaggedSentence};
use crate::transformer::{AdamW, AdamWConfig, ModelConfig, ModelError, Params, TransformerModel};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("no instances in agency cell {0}")]
    EmptyCell(String),
    #[error("loss diverged at epoch {epoch}, step {step}: {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("epoch callback failed: {0}")]
    Callback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InstanceKind {
    Reconstruction,
    Paraphrase,
}

/// One supervised sequence. `loss_mask` spans `input_ids ++ output_ids` and
/// is true exactly on the output positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub input_ids: Vec<u32>,
    pub output_ids: Vec<u32>,
    pub loss_mask: Vec<bool>,
    pub kind: InstanceKind,
    pub source_agency: AgencyLabel,
    pub target_agency: AgencyLabel,
}

impl TrainingInstance {
    fn new(
        input_ids: Vec<u32>,
        output_ids: Vec<u32>,
        kind: InstanceKind,
        source_agency: AgencyLabel,
        target_agency: AgencyLabel,
    ) -> Self {
        let mut loss_mask = vec![false; input_ids.len()];
        loss_mask.resize(input_ids.len() + output_ids.len(), true);
        Self {
            input_ids,
            output_ids,
            loss_mask,
            kind,
            source_agency,
            target_agency,
        }
    }

    pub fn ids(&self) -> Vec<u32> {
        let mut ids = self.input_ids.clone();
        ids.extend_from_slice(&self.output_ids);
        ids
    }

    pub fn len(&self) -> usize {
        self.input_ids.len() + self.output_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Why a sentence produced no instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skip {
    Ineligible,
    TooLong,
    Unencodable,
    NoRetrieval,
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Skip::Ineligible => "ineligible",
            Skip::TooLong => "too long",
            Skip::Unencodable => "unencodable",
            Skip::NoRetrieval => "no retrieval",
        })
    }
}

/// Everything instance construction needs besides the text itself.
#[derive(Clone, Copy)]
pub struct InstanceContext<'a> {
    pub lexicon: &'a AgencyLexicon,
    pub vocab: &'a Vocabulary,
    pub max_seq_len: usize,
    /// Embeddings for verb retrieval; `Some` turns on supply-verb inputs.
    pub supply: Option<&'a EmbeddingProvider>,
}

/// Text of the conditioning segment, ending in the final `<SEP>`.
pub fn input_segment(masked: &[String], supplied_verb: Option<&str>, target: AgencyLabel) -> String {
    let mut parts: Vec<&str> = masked.iter().map(String::as_str).collect();
    parts.push("<SEP>");
    if let Some(v) = supplied_verb {
        parts.push(v);
        parts.push("<SEP>");
    }
    parts.push(target.control_token());
    parts.push("<SEP>");
    parts.join(" ")
}

/// The retrieved target-agency lemma for the first masked verb, if any verb was masked.
pub fn supplied_verb(
    lexicon: &AgencyLexicon,
    emb: &EmbeddingProvider,
    original: &TaggedSentence,
    masked: &MaskedSentence,
    target: AgencyLabel,
) -> Option<String> {
    let pos = *masked.masked_positions.first()?;
    lexicon.nearest_verb(emb, &original.tokens[pos], target).ok()
}

fn assemble(
    ctx: &InstanceContext,
    src: &TaggedSentence,
    masked: &MaskedSentence,
    output: &TaggedSentence,
    target: AgencyLabel,
) -> Result<(Vec<u32>, Vec<u32>), Skip> {
    let verb = match ctx.supply {
        Some(emb) => Some(supplied_verb(ctx.lexicon, emb, src, masked, target).ok_or(Skip::NoRetrieval)?),
        None => None,
    };
    let input = ctx
        .vocab
        .encode(&input_segment(&masked.tokens, verb.as_deref(), target))
        .map_err(|_| Skip::Unencodable)?;
    let mut out = ctx
        .vocab
        .encode(&output.tokens.join(" "))
        .map_err(|_| Skip::Unencodable)?;
    out.push(END_ID);
    if input.len() + out.len() > ctx.max_seq_len {
        return Err(Skip::TooLong);
    }
    Ok((input, out))
}

fn tag_eligible(text: &str, lexicon: &AgencyLexicon) -> Result<(TaggedSentence, AgencyLabel), Skip> {
    let tagged = tagger::tag(text, lexicon).map_err(|_| Skip::Ineligible)?;
    if !tagger::eligible_for_training(&tagged) {
        return Err(Skip::Ineligible);
    }
    let agency = tagged.sentence_agency.expect("eligible implies agency");
    Ok((tagged, agency))
}

/// Masked sentence, own agency as control token, original sentence as target.
pub fn build_recon_instance(sentence: &str, ctx: &InstanceContext) -> Result<TrainingInstance, Skip> {
    let (tagged, agency) = tag_eligible(sentence, ctx.lexicon)?;
    let masked = tagger::mask(&tagged).expect("eligible implies agency");
    let (input, output) = assemble(ctx, &tagged, &masked, &tagged, agency)?;
    Ok(TrainingInstance::new(
        input,
        output,
        InstanceKind::Reconstruction,
        agency,
        agency,
    ))
}

/// Source (masked unless `mask_source` is false), the target's agency as
/// control token, the target as output.
pub fn build_para_instance(
    src: &str,
    tgt: &str,
    ctx: &InstanceContext,
    mask_source: bool,
) -> Result<TrainingInstance, Skip> {
    let (src_tagged, src_agency) = tag_eligible(src, ctx.lexicon)?;
    let (tgt_tagged, tgt_agency) = tag_eligible(tgt, ctx.lexicon)?;
    let masked = if mask_source {
        tagger::mask(&src_tagged).expect("eligible implies agency")
    } else {
        MaskedSentence::unmasked(&src_tagged)
    };
    let (input, output) = assemble(ctx, &src_tagged, &masked, &tgt_tagged, tgt_agency)?;
    Ok(TrainingInstance::new(
        input,
        output,
        InstanceKind::Paraphrase,
        src_agency,
        tgt_agency,
    ))
}

/// Instances built from a corpus plus a count of skipped records per reason.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BuiltCorpus {
    pub instances: Vec<TrainingInstance>,
    pub skipped: BTreeMap<Skip, usize>,
}

impl BuiltCorpus {
    fn push(&mut self, r: Result<TrainingInstance, Skip>) {
        match r {
            Ok(i) => self.instances.push(i),
            Err(s) => *self.skipped.entry(s).or_default() += 1,
        }
    }
}

pub fn build_recon_corpus<S: AsRef<str>>(sentences: &[S], ctx: &InstanceContext) -> BuiltCorpus {
    let mut out = BuiltCorpus::default();
    for s in sentences {
        out.push(build_recon_instance(s.as_ref(), ctx));
    }
    out
}

pub fn build_para_corpus<S: AsRef<str>>(pairs: &[(S, S)], ctx: &InstanceContext, mask_source: bool) -> BuiltCorpus {
    let mut out = BuiltCorpus::default();
    for (s, t) in pairs {
        out.push(build_para_instance(s.as_ref(), t.as_ref(), ctx, mask_source));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceMode {
    PerLabel,
    PerLabelPair,
}

/// Anything that can be sorted into agency cells for balancing.
pub trait AgencyCell {
    fn source_agency(&self) -> AgencyLabel;
    fn target_agency(&self) -> AgencyLabel;
}

impl AgencyCell for TrainingInstance {
    fn source_agency(&self) -> AgencyLabel {
        self.source_agency
    }
    fn target_agency(&self) -> AgencyLabel {
        self.target_agency
    }
}

/// Downsamples every cell to the smallest cell's size. Kept items stay in
/// their original relative order; which items are kept depends only on `seed`.
pub fn balance_corpus<T: AgencyCell + Clone>(items: &[T], mode: BalanceMode, seed: u64) -> Result<Vec<T>, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyCorpus("balancing input"));
    }
    let cells: Vec<(AgencyLabel, Option<AgencyLabel>)> = match mode {
        BalanceMode::PerLabel => AgencyLabel::ALL.iter().map(|&l| (l, None)).collect(),
        BalanceMode::PerLabelPair => AgencyLabel::ALL
            .iter()
            .flat_map(|&s| AgencyLabel::ALL.iter().map(move |&t| (t, Some(s))))
            .collect(),
    };
    let cell_of = |it: &T| match mode {
        BalanceMode::PerLabel => (it.target_agency(), None),
        BalanceMode::PerLabelPair => (it.target_agency(), Some(it.source_agency())),
    };
    let mut groups: BTreeMap<(AgencyLabel, Option<AgencyLabel>), Vec<usize>> =
        cells.iter().map(|&c| (c, Vec::new())).collect();
    for (i, it) in items.iter().enumerate() {
        groups.get_mut(&cell_of(it)).expect("every cell listed").push(i);
    }
    if let Some(((t, s), _)) = groups.iter().find(|(_, v)| v.is_empty()) {
        return Err(TrainError::EmptyCell(match s {
            Some(s) => format!("{s}->{t}"),
            None => t.to_string(),
        }));
    }
    let min = groups.values().map(Vec::len).min().expect("nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(min * groups.len());
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..min]);
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| items[i].clone()).collect())
}

/// Label counts per split, in the layout of a corpus statistics table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub splits: BTreeMap<String, LabelCounts>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub pos: usize,
    #[serde(rename = "neutral")]
    pub equal: usize,
    pub neg: usize,
    #[serde(rename = "instances")]
    pub total: usize,
}

impl LabelCounts {
    pub fn add(&mut self, label: AgencyLabel) {
        match label {
            AgencyLabel::Positive => self.pos += 1,
            AgencyLabel::Equal => self.equal += 1,
            AgencyLabel::Negative => self.neg += 1,
        }
        self.total += 1;
    }

    pub fn from_labels(labels: impl IntoIterator<Item = AgencyLabel>) -> Self {
        let mut c = Self::default();
        labels.into_iter().for_each(|l| c.add(l));
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Joint,
    ParaOnly,
    ReconOnly,
}

impl Objective {
    pub fn uses_recon(self) -> bool {
        self != Objective::ParaOnly
    }

    pub fn uses_para(self) -> bool {
        self != Objective::ReconOnly
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub supply_verb: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Joint,
            supply_verb: false,
            epochs: 20,
            batch_size: 16,
            lr: 3e-4,
            weight_decay: 0.01,
            grad_clip: Some(1.0),
            seed: 0,
            execution: Execution::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.supply_verb && self.objective == Objective::ParaOnly {
            return Err(TrainError::Config("supply_verb requires a reconstruction objective".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(TrainError::Config("lr must be a nonnegative number".into()));
        }
        Ok(())
    }
}

/// Mean per-instance losses at the end of an epoch. Epoch 0 is the
/// initialized model before any update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub recon_loss: Option<f64>,
    pub para_loss: Option<f64>,
    pub total_loss: f64,
}

/// Mean over instances of each instance's mean output-token NLL.
pub fn mean_loss(model: &TransformerModel, instances: &[TrainingInstance], exec: Execution) -> Result<Option<f64>, ModelError> {
    if instances.is_empty() {
        return Ok(None);
    }
    let losses = exec.map(instances, |inst| model.loss(&inst.ids(), &inst.loss_mask).map(|r| r.total_loss));
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(Some(sum / instances.len() as f64))
}

fn report(
    epoch: usize,
    model: &TransformerModel,
    config: &TrainConfig,
    recon: &[TrainingInstance],
    para: &[TrainingInstance],
) -> Result<EpochReport, ModelError> {
    let recon_loss = if config.objective.uses_recon() {
        mean_loss(model, recon, config.execution)?
    } else {
        None
    };
    let para_loss = if config.objective.uses_para() {
        mean_loss(model, para, config.execution)?
    } else {
        None
    };
    Ok(EpochReport {
        epoch,
        recon_loss,
        para_loss,
        total_loss: recon_loss.unwrap_or(0.0) + para_loss.unwrap_or(0.0),
    })
}

/// Recon and para batch order for one epoch: a fixed interleave in which
/// each kind's batches are spread in proportion to its count.
fn interleave(n_recon: usize, n_para: usize) -> Vec<InstanceKind> {
    let mut out = Vec::with_capacity(n_recon + n_para);
    let (mut r, mut p) = (0usize, 0usize);
    while r < n_recon || p < n_para {
        // compare (r+1)/n_recon with (p+1)/n_para without division
        let take_recon = p >= n_para || (r < n_recon && (r + 1) * n_para <= (p + 1) * n_recon);
        if take_recon {
            out.push(InstanceKind::Reconstruction);
            r += 1;
        } else {
            out.push(InstanceKind::Paraphrase);
            p += 1;
        }
    }
    out
}

/// Mean gradient and mean loss of a batch. Per-instance work may run in
/// parallel; the reduction is always in batch order.
pub fn batch_gradient(
    model: &TransformerModel,
    batch: &[&TrainingInstance],
    exec: Execution,
    dropout_seed: u64,
) -> Result<(f64, Params), ModelError> {
    let results = exec.map_indexed(batch, |i, inst| {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed.wrapping_add(i as u64));
        model.backward_with_rng(&inst.ids(), &inst.loss_mask, Some(&mut rng))
    });
    let mut grads = Params::zeros(&model.config);
    let mut loss = 0.0;
    for r in results {
        let (rep, g) = r?;
        loss += rep.total_loss;
        grads.add_assign(&g);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

fn clip(grads: &mut Params, max_norm: f64) {
    let norm = grads.l2_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
}

fn batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Trains a freshly initialized model. `on_epoch` sees every report
/// (including epoch 0) together with the current model.
pub fn train<F>(
    config: &TrainConfig,
    model_config: ModelConfig,
    vocab: &Vocabulary,
    recon: &[TrainingInstance],
    para: &[TrainingInstance],
    mut on_epoch: F,
) -> Result<(TransformerModel, Vec<EpochReport>), TrainError>
where
    F: FnMut(&EpochReport, &TransformerModel) -> Result<(), String>,
{
    config.validate()?;
    if config.objective.uses_recon() && recon.is_empty() {
        return Err(TrainError::EmptyCorpus("reconstruction"));
    }
    if config.objective.uses_para() && para.is_empty() {
        return Err(TrainError::EmptyCorpus("paraphrase"));
    }
    let recon = if config.objective.uses_recon() { recon } else { &[] };
    let para = if config.objective.uses_para() { para } else { &[] };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = TransformerModel::new(model_config, vocab.hash(), &mut rng)?;
    let mut opt = AdamW::new(
        &model_config,
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
    );

    let mut history = vec![report(0, &model, config, recon, para)?];
    on_epoch(&history[0], &model).map_err(TrainError::Callback)?;

    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        let recon_batches = batches(recon.len(), config.batch_size, &mut rng);
        let para_batches = batches(para.len(), config.batch_size, &mut rng);
        let (mut ri, mut pi) = (recon_batches.iter(), para_batches.iter());
        for kind in interleave(recon_batches.len(), para_batches.len()) {
            let batch: Vec<&TrainingInstance> = match kind {
                InstanceKind::Reconstruction => ri.next().expect("scheduled").iter().map(|&i| &recon[i]).collect(),
                InstanceKind::Paraphrase => pi.next().expect("scheduled").iter().map(|&i| &para[i]).collect(),
            };
            let dropout_seed = config.seed ^ ((step as u64) << 20);
            let (loss, mut grads) = batch_gradient(&model, &batch, config.execution, dropout_seed)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::Diverged { epoch, step, loss });
            }
            if let Some(c) = config.grad_clip {
                clip(&mut grads, c);
            }
            opt.step(&mut model.params, &grads);
            step += 1;
        }
        let rep = report(epoch, &model, config, recon, para)?;
        if !rep.total_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                step,
                loss: rep.total_loss,
            });
        }
        on_epoch(&rep, &model).map_err(TrainError::Callback)?;
        history.push(rep);
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> AgencyLexicon {
        AgencyLexicon::parse("daydream\tneg\npursue\tpos\nvisit\tequal\nwant\tpos\nwait\tneg\n").unwrap()
    }

    fn vocab() -> Vocabulary {
        Vocabulary::train(
            [
                "mey daydreamed about being a doctor",
                "she pursued her dream and visited paris",
                "he waited and wanted more of it",
            ],
            400,
        )
        .unwrap()
    }

    fn ctx<'a>(lex: &'a AgencyLexicon, v: &'a Vocabulary) -> InstanceContext<'a> {
        InstanceContext {
            lexicon: lex,
            vocab: v,
            max_seq_len: 64,
            supply: None,
        }
    }

    #[test]
    fn recon_layout_matches_worked_example() {
        let (lex, v) = (lexicon(), vocab());
        let inst = build_recon_instance("mey daydreamed about being a doctor", &ctx(&lex, &v)).unwrap();
        assert_eq!(
            v.decode(&inst.input_ids).unwrap(),
            "mey <VERB> about being a doctor <SEP> <Neg> <SEP>"
        );
        assert_eq!(v.decode(&inst.output_ids).unwrap(), "mey daydreamed about being a doctor <END>");
        let n_in = inst.input_ids.len();
        assert!(inst.loss_mask[..n_in].iter().all(|&m| !m));
        assert!(inst.loss_mask[n_in..].iter().all(|&m| m));
        assert_eq!(inst.loss_mask.len(), inst.len());
    }

    #[test]
    fn ineligible_sentences_are_skipped() {
        let (lex, v) = (lexicon(), vocab());
        let c = ctx(&lex, &v);
        assert_eq!(build_recon_instance("a doctor", &c), Err(Skip::Ineligible));
        assert_eq!(
            build_recon_instance("she pursued wanted pursued wanted it", &c),
            Err(Skip::Ineligible)
        );
        let short = InstanceContext { max_seq_len: 10, ..c };
        assert_eq!(
            build_recon_instance("mey daydreamed about being a doctor", &short),
            Err(Skip::TooLong)
        );
    }

    #[test]
    fn para_instance_uses_target_agency() {
        let (lex, v) = (lexicon(), vocab());
        let c = ctx(&lex, &v);
        let inst = build_para_instance("he waited", "she pursued her dream", &c, true).unwrap();
        assert_eq!(v.decode(&inst.input_ids).unwrap(), "he <VERB> <SEP> <Pos> <SEP>");
        assert_eq!(v.decode(&inst.output_ids).unwrap(), "she pursued her dream <END>");
        assert_eq!((inst.source_agency, inst.target_agency), (AgencyLabel::Negative, AgencyLabel::Positive));
        let s = "mey daydreamed about being a doctor";
        let para = build_para_instance(s, s, &c, true).unwrap();
        let recon = build_recon_instance(s, &c).unwrap();
        assert_eq!(para.input_ids, recon.input_ids);
        assert_eq!(para.output_ids, recon.output_ids);
        assert_eq!(para.kind, InstanceKind::Paraphrase);
        assert_eq!(build_para_instance("he waited", "a doctor", &c, true), Err(Skip::Ineligible));
        let unmasked = build_para_instance("he waited", "she pursued her dream", &c, false).unwrap();
        assert_eq!(v.decode(&unmasked.input_ids).unwrap(), "he waited <SEP> <Pos> <SEP>");
    }

    #[test]
    fn supply_verb_inserts_retrieved_lemma() {
        let (lex, v) = (lexicon(), vocab());
        let emb = EmbeddingProvider::from_vectors(
            2,
            [
                ("daydream".to_string(), vec![1.0, 0.0]),
                ("wait".to_string(), vec![0.9, 0.1]),
                ("pursue".to_string(), vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let c = InstanceContext {
            supply: Some(&emb),
            ..ctx(&lex, &v)
        };
        let inst = build_recon_instance("mey daydreamed about being a doctor", &c).unwrap();
        assert_eq!(
            v.decode(&inst.input_ids).unwrap(),
            "mey <VERB> about being a doctor <SEP> daydream <SEP> <Neg> <SEP>"
        );
    }

    #[derive(Clone, Debug, PartialEq)]
    struct Cell(AgencyLabel, AgencyLabel, usize);
    impl AgencyCell for Cell {
        fn source_agency(&self) -> AgencyLabel {
            self.0
        }
        fn target_agency(&self) -> AgencyLabel {
            self.1
        }
    }

    #[test]
    fn balance_per_label_takes_min() {
        use AgencyLabel::*;
        let mut items = Vec::new();
        for (l, n) in [(Positive, 100), (Equal, 80), (Negative, 60)] {
            items.extend((0..n).map(|i| Cell(l, l, i)));
        }
        let out = balance_corpus(&items, BalanceMode::PerLabel, 3).unwrap();
        let c = LabelCounts::from_labels(out.iter().map(|c| c.1));
        assert_eq!((c.pos, c.equal, c.neg), (60, 60, 60));
        assert_eq!(out, balance_corpus(&items, BalanceMode::PerLabel, 3).unwrap());
        assert_ne!(out, balance_corpus(&items, BalanceMode::PerLabel, 4).unwrap());
    }

    #[test]
    fn balance_per_pair_and_empty_cell() {
        let mut items = Vec::new();
        for (k, s) in AgencyLabel::ALL.into_iter().enumerate() {
            for (j, t) in AgencyLabel::ALL.into_iter().enumerate() {
                items.extend((0..5 + k + j).map(|i| Cell(s, t, i)));
            }
        }
        let out = balance_corpus(&items, BalanceMode::PerLabelPair, 0).unwrap();
        assert_eq!(out.len(), 45);
        items.retain(|c| !(c.0 == AgencyLabel::Equal && c.1 == AgencyLabel::Negative));
        let err = balance_corpus(&items, BalanceMode::PerLabelPair, 0).unwrap_err();
        assert!(err.to_string().contains("equal->neg"), "{err}");
    }

    #[test]
    fn interleave_is_proportional() {
        let s = interleave(6, 2);
        assert_eq!(s.len(), 8);
        assert_eq!(s.iter().filter(|k| **k == InstanceKind::Paraphrase).count(), 2);
        assert_eq!(s[3], InstanceKind::Paraphrase);
        assert_eq!(interleave(0, 3), vec![InstanceKind::Paraphrase; 3]);
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            objective: Objective::ParaOnly,
            supply_verb: true,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
