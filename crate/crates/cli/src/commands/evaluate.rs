use std::path::PathBuf;

use agency_core::lexicon::AgencyLabel;
use agency_core::metrics::{self, EvalRecord, MetricsError, MetricsReport, Stopwords};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::artifact::{self, ArtifactMeta};
use crate::commands::ExecArgs;
use crate::error::{CliError, Result};

/// Score revisions for agency accuracy, meaning preservation, fluency
/// and repetition.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Responses JSONL as written by `revise`.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Language model checkpoint from `train-lm`; perplexity is skipped without it.
    #[arg(long, requires = "lm_vocab")]
    pub lm_checkpoint: Option<PathBuf>,
    #[arg(long, requires = "lm_checkpoint")]
    pub lm_vocab: Option<PathBuf>,
    /// Stopword list, one word per line. A built-in English list is used otherwise.
    #[arg(long)]
    pub stopwords: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Deserialize)]
struct Response {
    text: String,
    output: String,
    target: AgencyLabel,
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    meta: ArtifactMeta,
    report: MetricsReport,
}

fn metrics_error(e: MetricsError) -> CliError {
    match e {
        MetricsError::Empty | MetricsError::Encode(_) => CliError::data(e),
        MetricsError::VocabMismatch { .. } => CliError::config(e),
        MetricsError::Model(_) => CliError::runtime(e),
    }
}

pub fn run(args: &Args) -> Result<()> {
    artifact::require_file(&args.responses, "responses")?;
    let lexicon = artifact::load_lexicon(&args.lexicon)?;
    let stopwords = match &args.stopwords {
        Some(p) => {
            artifact::require_file(p, "stopword list")?;
            Stopwords::parse(&artifact::read_text(p)?)
        }
        None => Stopwords::default(),
    };
    let lm = match (&args.lm_checkpoint, &args.lm_vocab) {
        (Some(c), Some(v)) => {
            let vocab = artifact::load_vocab(v)?;
            let (ckpt, hash) = artifact::load_checkpoint(c)?;
            if ckpt.meta.get("kind").and_then(Value::as_str) != Some("lm") {
                return Err(CliError::Config(format!("`{}` is not a language model checkpoint", c.display())));
            }
            artifact::check_vocab(&ckpt, &vocab)?;
            Some((ckpt, vocab, hash))
        }
        _ => None,
    };

    let responses: Vec<Response> = artifact::read_jsonl(&args.responses)?;
    let records: Vec<EvalRecord> = responses
        .into_iter()
        .map(|r| EvalRecord::new(r.text, r.output, r.target, &lexicon))
        .collect();

    let settings = json!({
        "inputs": {
            "responses": artifact::file_hash(&args.responses)?,
            "lexicon": artifact::file_hash(&args.lexicon)?,
            "stopwords": args.stopwords.as_deref().map(artifact::file_hash).transpose()?,
            "lm_checkpoint": lm.as_ref().map(|(_, _, h)| h),
        },
    });
    let mut meta = ArtifactMeta::new("evaluate", &settings, 0);
    if let Some((_, vocab, hash)) = &lm {
        meta.vocab_hash = Some(vocab.hash());
        meta.checkpoint_hash = Some(hash.clone());
    }

    let (report, scores) = metrics::evaluate(
        &records,
        &lexicon,
        &stopwords,
        lm.as_ref().map(|(c, v, _)| (&c.model, v)),
        args.exec.execution(),
    )
    .map_err(metrics_error)?;

    artifact::create_dir(&args.out)?;
    artifact::write_csv(&args.out.join("records.csv"), &scores, &meta)?;
    artifact::write_json(&args.out.join("metrics.json"), &MetricsFile { meta, report: report.clone() })?;
    eprintln!(
        "n={} accuracy={:.3} meaning={:.3} ppl={} with_rep={:.3} unique={:.3}",
        report.n,
        report.accuracy,
        report.meaning_proxy,
        report.perplexity.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into()),
        report.with_rep,
        report.unique
    );
    Ok(())
}
