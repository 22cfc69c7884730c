use std::path::{Path, PathBuf};

use agency_core::bpe::Vocabulary;
use agency_core::decoder::{build_agency_matrix, DecodeConfig, DecodeError, Reviser, Revision};
use agency_core::lexicon::{AgencyLexicon, EmbeddingProvider};
use agency_core::transformer::Checkpoint;
use serde_json::{json, Value};

use crate::artifact::{self, ArtifactMeta};
use crate::commands::{ExecArgs, RequestRecord};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, clap::Args)]
pub struct DecodeArgs {
    /// Boosting strength added to target-agency verb logits.
    #[arg(long, default_value_t = 5.0)]
    pub beta: f64,
    /// Nucleus sampling mass.
    #[arg(long, default_value_t = 0.4)]
    pub top_p: f64,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl DecodeArgs {
    pub fn config(&self) -> Result<DecodeConfig> {
        let c = DecodeConfig {
            top_p: self.top_p,
            beta: self.beta,
            max_new_tokens: self.max_new_tokens,
            seed: self.seed,
        };
        c.validate().map_err(CliError::config)?;
        Ok(c)
    }
}

/// Rewrite sentences toward a target agency level.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Requests, JSONL `{"text": ..., "target": "pos|equal|neg"}`.
    #[arg(long)]
    pub requests: PathBuf,
    /// Responses JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Word vectors for models trained with a supplied verb. Defaults to
    /// `embeddings.txt` beside the checkpoint.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
}

/// A trained reviser checkpoint with everything needed to decode from it.
pub struct LoadedReviser {
    pub checkpoint: Checkpoint,
    pub checkpoint_hash: String,
    pub vocab: Vocabulary,
    pub mask_input: bool,
    pub embeddings: Option<EmbeddingProvider>,
    /// Content hash of the embeddings file, when one is used.
    pub embeddings_hash: Option<String>,
}

impl LoadedReviser {
    pub fn load(checkpoint: &Path, vocab: &Path, embeddings: Option<&Path>) -> Result<Self> {
        artifact::require_file(vocab, "vocabulary")?;
        if let Some(p) = embeddings {
            artifact::require_file(p, "embeddings")?;
        }
        let (ckpt, checkpoint_hash) = artifact::load_checkpoint(checkpoint)?;
        if ckpt.meta.get("kind").and_then(Value::as_str) != Some("reviser") {
            return Err(CliError::Config(format!(
                "`{}` is not a revision model checkpoint",
                checkpoint.display()
            )));
        }
        let vocab = artifact::load_vocab(vocab)?;
        artifact::check_vocab(&ckpt, &vocab)?;
        let mask_input = ckpt.meta.get("mask_input").and_then(Value::as_bool).unwrap_or(true);
        let supply = ckpt.meta.get("supply_verb").and_then(Value::as_bool).unwrap_or(false);
        let (embeddings, embeddings_hash) = if supply {
            let path = embeddings.map(Path::to_path_buf).unwrap_or_else(|| {
                checkpoint
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .join("embeddings.txt")
            });
            artifact::require_file(&path, "embeddings for a supplied-verb model")?;
            let emb = EmbeddingProvider::load(&path).map_err(CliError::data)?;
            (Some(emb), Some(artifact::file_hash(&path)?))
        } else {
            (None, None)
        };
        Ok(Self {
            checkpoint: ckpt,
            checkpoint_hash,
            vocab,
            mask_input,
            embeddings,
            embeddings_hash,
        })
    }
}

pub fn decode_error(e: DecodeError) -> CliError {
    match e {
        DecodeError::Config(_) | DecodeError::VocabMismatch { .. } | DecodeError::Dimension { .. } => CliError::config(e),
        DecodeError::Encode(_) | DecodeError::Tag(_) => CliError::data(e),
        DecodeError::Model(_) => CliError::runtime(e),
    }
}

/// Revises every request; any failing request fails the batch.
pub fn revise_all(
    loaded: &LoadedReviser,
    lexicon: &AgencyLexicon,
    config: DecodeConfig,
    requests: &[RequestRecord],
    exec: agency_core::Execution,
) -> Result<Vec<Revision>> {
    let matrix = build_agency_matrix(lexicon, &loaded.vocab);
    let reviser = Reviser {
        model: &loaded.checkpoint.model,
        vocab: &loaded.vocab,
        lexicon,
        matrix: &matrix,
        config,
        supply: loaded.embeddings.as_ref(),
        mask_input: loaded.mask_input,
    };
    let pairs: Vec<(String, agency_core::AgencyLabel)> = requests.iter().map(|r| (r.text.clone(), r.target)).collect();
    reviser
        .revise_batch(&pairs, exec)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| match decode_error(e) {
                CliError::Data(m) => CliError::Data(format!("request {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

pub fn run(args: &Args) -> Result<()> {
    artifact::require_file(&args.requests, "requests")?;
    let config = args.decode.config()?;
    let lexicon = artifact::load_lexicon(&args.lexicon)?;
    let loaded = LoadedReviser::load(&args.checkpoint, &args.vocab, args.embeddings.as_deref())?;
    let requests: Vec<RequestRecord> = artifact::read_jsonl(&args.requests)?;

    let settings = json!({
        "inputs": {
            "checkpoint": loaded.checkpoint_hash,
            "vocab": loaded.vocab.hash(),
            "lexicon": artifact::file_hash(&args.lexicon)?,
            "requests": artifact::file_hash(&args.requests)?,
            "embeddings": loaded.embeddings_hash,
        },
        "decode": config,
    });
    let mut meta = ArtifactMeta::new("revise", &settings, config.seed);
    meta.vocab_hash = Some(loaded.vocab.hash());
    meta.checkpoint_hash = Some(loaded.checkpoint_hash.clone());

    let revisions = revise_all(&loaded, &lexicon, config, &requests, args.exec.execution())?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        artifact::create_dir(dir)?;
    }
    artifact::write_jsonl(&args.out, &revisions, &meta)?;
    let hits = revisions.iter().filter(|r| r.output_agency == Some(r.target)).count();
    eprintln!(
        "revised {} sentences, {} reach their target agency, {} truncated",
        revisions.len(),
        hits,
        revisions.iter().filter(|r| r.truncated).count()
    );
    Ok(())
}
