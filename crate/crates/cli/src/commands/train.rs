use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agency_core::bpe::Vocabulary;
use agency_core::lexicon::EmbeddingProvider;
use agency_core::metrics::lm_instance;
use agency_core::tagger;
use agency_core::training::{
    build_para_corpus, build_recon_corpus, train, EpochReport, InstanceContext, Objective, TrainConfig, TrainError,
    TrainingInstance,
};
use agency_core::transformer::{Checkpoint, ModelConfig, TransformerModel};
use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifact::{self, ArtifactMeta};
use crate::commands::{ExecArgs, PairRecord, TextRecord};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Joint,
    ParaOnly,
    ReconOnly,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Joint => Objective::Joint,
            ObjectiveArg::ParaOnly => Objective::ParaOnly,
            ObjectiveArg::ReconOnly => Objective::ReconOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Context length in tokens; longer training sequences are skipped.
    #[arg(long, default_value_t = 64)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
}

impl ModelArgs {
    fn config(&self, vocab_size: usize) -> Result<ModelConfig> {
        let c = ModelConfig {
            vocab_size,
            max_seq_len: self.max_seq_len,
            embed_dim: self.embed_dim,
            n_heads: self.heads,
            n_layers: self.layers,
            dropout_rate: self.dropout,
        };
        c.validate().map_err(CliError::config)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct OptimArgs {
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    #[arg(long, default_value_t = 1.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write only the final checkpoint instead of one per epoch.
    #[arg(long)]
    pub final_only: bool,
}

/// Train the revision model.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Story sentences for the reconstruction objective, JSONL `{"text": ...}`.
    #[arg(long)]
    pub stories: Option<PathBuf>,
    /// Paraphrase pairs, JSONL `{"src": ..., "tgt": ...}`.
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Vocabulary written by `prepare`.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "joint")]
    pub objective: ObjectiveArg,
    /// Append a retrieved target-agency verb to the input.
    #[arg(long)]
    pub supply_verb: bool,
    /// Word vectors (`word v1 .. vd` lines) for verb retrieval. Without it,
    /// vectors are derived from the training text.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// Train the held-out language model used for fluency scoring.
#[derive(Debug, clap::Args)]
pub struct LmArgs {
    /// Sentences, JSONL `{"text": ...}`.
    #[arg(long)]
    pub texts: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// Context window and rank of corpus-derived retrieval vectors.
const EMBEDDING_WINDOW: usize = 2;
const EMBEDDING_DIM: usize = 16;

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    recon_loss: Option<f64>,
    para_loss: Option<f64>,
    total_loss: f64,
}

impl From<&EpochReport> for HistoryRow {
    fn from(r: &EpochReport) -> Self {
        Self {
            epoch: r.epoch,
            recon_loss: r.recon_loss,
            para_loss: r.para_loss,
            total_loss: r.total_loss,
        }
    }
}

fn train_config(o: &OptimArgs, objective: Objective, supply_verb: bool, exec: ExecArgs) -> TrainConfig {
    TrainConfig {
        objective,
        supply_verb,
        epochs: o.epochs,
        batch_size: o.batch_size,
        lr: o.lr,
        weight_decay: o.weight_decay,
        grad_clip: (o.grad_clip > 0.0).then_some(o.grad_clip),
        seed: o.seed,
        execution: exec.execution(),
    }
}

/// Settings that determine the result; the execution mode does not.
fn config_value(cfg: &TrainConfig) -> Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    v.as_object_mut().expect("struct").remove("execution");
    v
}

fn train_error(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) => CliError::config(e),
        TrainError::EmptyCorpus(_) | TrainError::EmptyCell(_) => CliError::data(e),
        _ => CliError::runtime(e),
    }
}

/// Shared training loop: per-epoch progress, optional per-epoch
/// checkpoints, final checkpoint, loss history and report.
#[allow(clippy::too_many_arguments)]
fn fit(
    command: &str,
    out: &Path,
    cfg: &TrainConfig,
    model_config: ModelConfig,
    vocab: &Vocabulary,
    recon: &[TrainingInstance],
    para: &[TrainingInstance],
    config: Value,
    mut ckpt_meta: serde_json::Map<String, Value>,
    report_extra: Value,
    epoch_checkpoints: bool,
) -> Result<()> {
    cfg.validate().map_err(train_error)?;
    let mut meta = ArtifactMeta::new(command, &config, cfg.seed);
    meta.vocab_hash = Some(vocab.hash());
    artifact::create_dir(out)?;
    let epochs_dir = out.join("checkpoints");
    if epoch_checkpoints {
        artifact::create_dir(&epochs_dir)?;
    }
    ckpt_meta.insert("artifact".into(), serde_json::to_value(&meta).expect("meta serializes"));
    let checkpoint = |model: &TransformerModel, epoch: usize| {
        let mut m = ckpt_meta.clone();
        m.insert("epoch".into(), json!(epoch));
        Checkpoint {
            model: model.clone(),
            meta: Value::Object(m),
        }
    };
    let (model, history) = train(cfg, model_config, vocab, recon, para, |rep, model| {
        eprintln!(
            "epoch {:>3}  recon {}  para {}  total {:.5}",
            rep.epoch,
            rep.recon_loss.map_or("-".into(), |l| format!("{l:.5}")),
            rep.para_loss.map_or("-".into(), |l| format!("{l:.5}")),
            rep.total_loss
        );
        if epoch_checkpoints && rep.epoch > 0 {
            checkpoint(model, rep.epoch)
                .save(epochs_dir.join(format!("epoch_{:03}.ckpt", rep.epoch)))
                .map_err(|e| e.to_string())?;
        }
        Ok(())
    })
    .map_err(train_error)?;

    let hash = checkpoint(&model, cfg.epochs)
        .save(out.join("model.ckpt"))
        .map_err(CliError::runtime)?;
    meta.checkpoint_hash = Some(hash);
    let rows: Vec<HistoryRow> = history.iter().map(HistoryRow::from).collect();
    artifact::write_csv(&out.join("loss_history.csv"), &rows, &meta)?;
    artifact::write_json(
        &out.join("train_report.json"),
        &json!({
            "meta": meta,
            "train_config": config_value(cfg),
            "model_config": model_config,
            "parameters": model.params.num_parameters(),
            "instances": report_extra,
            "history": history,
        }),
    )
}

fn load_texts(path: &Path, what: &str) -> Result<Vec<String>> {
    artifact::require_file(path, what)?;
    Ok(artifact::read_jsonl::<TextRecord>(path)?.into_iter().map(|r| r.text).collect())
}

fn load_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    artifact::require_file(path, "paraphrase corpus")?;
    Ok(artifact::read_jsonl::<PairRecord>(path)?
        .into_iter()
        .map(|r| (r.src, r.tgt))
        .collect())
}

pub fn run(args: &Args) -> Result<()> {
    let objective = Objective::from(args.objective);
    let cfg = train_config(&args.optim, objective, args.supply_verb, args.exec);
    cfg.validate().map_err(train_error)?;
    let stories = match (&args.stories, objective.uses_recon()) {
        (Some(p), true) => load_texts(p, "story corpus")?,
        (None, true) => return Err(CliError::Config(format!("{objective:?} needs --stories"))),
        _ => Vec::new(),
    };
    let pairs = match (&args.paraphrases, objective.uses_para()) {
        (Some(p), true) => load_pairs(p)?,
        (None, true) => return Err(CliError::Config(format!("{objective:?} needs --paraphrases"))),
        _ => Vec::new(),
    };
    if let Some(p) = &args.embeddings {
        artifact::require_file(p, "embeddings")?;
    }
    let lexicon = artifact::load_lexicon(&args.lexicon)?;
    let vocab = artifact::load_vocab(&args.vocab)?;
    let model_config = args.model.config(vocab.len())?;

    artifact::create_dir(&args.out)?;
    let embeddings = match (args.supply_verb, &args.embeddings) {
        (false, _) => None,
        (true, Some(p)) => Some(EmbeddingProvider::load(p).map_err(CliError::data)?),
        (true, None) => {
            let mut sentences: Vec<Vec<String>> = stories.iter().map(|s| tagger::tokenize(s)).collect();
            for (s, t) in &pairs {
                sentences.push(tagger::tokenize(s));
                sentences.push(tagger::tokenize(t));
            }
            let emb = EmbeddingProvider::from_corpus(&sentences, EMBEDDING_WINDOW, EMBEDDING_DIM).map_err(CliError::data)?;
            emb.save(args.out.join("embeddings.txt")).map_err(CliError::runtime)?;
            Some(emb)
        }
    };

    let ctx = InstanceContext {
        lexicon: &lexicon,
        vocab: &vocab,
        max_seq_len: model_config.max_seq_len,
        supply: embeddings.as_ref(),
    };
    // without reconstruction the model never sees a mask, so sources stay intact
    let mask_source = objective != Objective::ParaOnly;
    let recon = build_recon_corpus(&stories, &ctx);
    let para = build_para_corpus(&pairs, &ctx, mask_source);

    let mut inputs = BTreeMap::new();
    inputs.insert("lexicon", artifact::file_hash(&args.lexicon)?);
    inputs.insert("vocab", vocab.hash());
    if objective.uses_recon() {
        inputs.insert("stories", artifact::file_hash(args.stories.as_ref().expect("checked"))?);
    }
    if objective.uses_para() {
        inputs.insert("paraphrases", artifact::file_hash(args.paraphrases.as_ref().expect("checked"))?);
    }
    if let Some(p) = &args.embeddings {
        inputs.insert("embeddings", artifact::file_hash(p)?);
    }
    let config = json!({
        "inputs": inputs,
        "train_config": config_value(&cfg),
        "model_config": model_config,
        "epoch_checkpoints": !args.optim.final_only,
    });
    let mut ckpt_meta = serde_json::Map::new();
    ckpt_meta.insert("kind".into(), json!("reviser"));
    ckpt_meta.insert("objective".into(), json!(objective));
    ckpt_meta.insert("mask_input".into(), json!(mask_source));
    ckpt_meta.insert("supply_verb".into(), json!(args.supply_verb));
    let extra = json!({
        "reconstruction": recon.instances.len(),
        "paraphrase": para.instances.len(),
        "skipped_reconstruction": recon.skipped,
        "skipped_paraphrase": para.skipped,
    });
    fit(
        "train",
        &args.out,
        &cfg,
        model_config,
        &vocab,
        &recon.instances,
        &para.instances,
        config,
        ckpt_meta,
        extra,
        !args.optim.final_only,
    )
}

pub fn run_lm(args: &LmArgs) -> Result<()> {
    let cfg = train_config(&args.optim, Objective::ReconOnly, false, args.exec);
    cfg.validate().map_err(train_error)?;
    let texts = load_texts(&args.texts, "text corpus")?;
    let vocab = artifact::load_vocab(&args.vocab)?;
    let model_config = args.model.config(vocab.len())?;
    let mut instances = Vec::new();
    let mut unencodable = 0usize;
    for t in &texts {
        match lm_instance(t, &vocab, model_config.max_seq_len) {
            Ok(i) => instances.push(i),
            Err(_) => unencodable += 1,
        }
    }
    let config = json!({
        "inputs": { "texts": artifact::file_hash(&args.texts)?, "vocab": vocab.hash() },
        "train_config": config_value(&cfg),
        "model_config": model_config,
        "epoch_checkpoints": !args.optim.final_only,
    });
    let mut ckpt_meta = serde_json::Map::new();
    ckpt_meta.insert("kind".into(), json!("lm"));
    fit(
        "train-lm",
        &args.out,
        &cfg,
        model_config,
        &vocab,
        &instances,
        &[],
        config,
        ckpt_meta,
        json!({ "sentences": instances.len(), "unencodable": unencodable }),
        !args.optim.final_only,
    )
}
