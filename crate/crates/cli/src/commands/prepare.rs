use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agency_core::bpe::{Vocabulary, DEFAULT_VOCAB_SIZE};
use agency_core::lexicon::{AgencyLabel, AgencyLexicon};
use agency_core::tagger;
use agency_core::training::{balance_corpus, AgencyCell, BalanceMode, CorpusStats, LabelCounts};
use clap::ValueEnum;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::artifact::{self, ArtifactMeta};
use crate::commands::{PairRecord, TextRecord};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Balance {
    None,
    PerLabel,
    PerLabelPair,
}

impl Balance {
    fn mode(self) -> Option<BalanceMode> {
        match self {
            Balance::None => None,
            Balance::PerLabel => Some(BalanceMode::PerLabel),
            Balance::PerLabelPair => Some(BalanceMode::PerLabelPair),
        }
    }
}

/// Filter corpora to trainable sentences, balance, split, train the
/// subword vocabulary and report label statistics per split.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Story sentences, JSONL `{"text": ...}`.
    #[arg(long)]
    pub stories: PathBuf,
    /// Paraphrase pairs, JSONL `{"src": ..., "tgt": ...}`.
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    /// Agency lexicon TSV.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Balancing applied to stories (by sentence agency).
    #[arg(long, value_enum, default_value = "per-label")]
    pub balance: Balance,
    /// Balancing applied to paraphrase pairs (by target agency, or by source/target cell).
    #[arg(long, value_enum, default_value = "none")]
    pub para_balance: Balance,
    /// Train:dev:test proportions.
    #[arg(long, default_value = "80:13:7")]
    pub split: String,
    /// Maximum vocabulary size including special tokens.
    #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Labeled<T> {
    record: T,
    source: AgencyLabel,
    target: AgencyLabel,
}

impl<T> AgencyCell for Labeled<T> {
    fn source_agency(&self) -> AgencyLabel {
        self.source
    }
    fn target_agency(&self) -> AgencyLabel {
        self.target
    }
}

#[derive(Debug, Serialize)]
struct StatsReport {
    meta: ArtifactMeta,
    stories: CorpusStats,
    paraphrases: Option<CorpusStats>,
    /// Records dropped before balancing because no sentence-level agency
    /// could be assigned or too many agency verbs were found.
    ineligible: BTreeMap<String, usize>,
    /// Records dropped by balancing.
    balanced_away: BTreeMap<String, usize>,
}

fn parse_split(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Config(format!("split `{s}` must look like 80:13:7")))?;
    match parts.as_slice() {
        &[a, b, c] if a > 0.0 && b >= 0.0 && c >= 0.0 => {
            let t = a + b + c;
            Ok([a / t, b / t, c / t])
        }
        _ => Err(CliError::Config(format!("split `{s}` must have three nonnegative parts, the first positive"))),
    }
}

fn eligible_agency(text: &str, lexicon: &AgencyLexicon) -> Option<AgencyLabel> {
    let t = tagger::tag(text, lexicon).ok()?;
    tagger::eligible_for_training(&t).then_some(t.sentence_agency).flatten()
}

/// Shuffles, then cuts into train/dev/test by `fractions`.
fn split<T: Clone>(items: &[T], fractions: [f64; 3], rng: &mut ChaCha8Rng) -> [Vec<T>; 3] {
    let mut v = items.to_vec();
    v.shuffle(rng);
    let n = v.len();
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_dev = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let test = v.split_off(n_train + n_dev);
    let dev = v.split_off(n_train);
    [v, dev, test]
}

const SPLITS: [&str; 3] = ["train", "dev", "test"];

fn stats<T>(splits: &[Vec<Labeled<T>>; 3]) -> CorpusStats {
    CorpusStats {
        splits: SPLITS
            .iter()
            .zip(splits)
            .map(|(name, items)| (name.to_string(), LabelCounts::from_labels(items.iter().map(|i| i.target))))
            .collect(),
    }
}

fn balance<T: Clone>(items: Vec<Labeled<T>>, how: Balance, seed: u64, what: &str) -> Result<Vec<Labeled<T>>> {
    match how.mode() {
        None => Ok(items),
        Some(mode) => balance_corpus(&items, mode, seed).map_err(|e| CliError::Data(format!("{what}: {e}"))),
    }
}

pub fn run(args: &Args) -> Result<()> {
    artifact::require_file(&args.stories, "story corpus")?;
    if let Some(p) = &args.paraphrases {
        artifact::require_file(p, "paraphrase corpus")?;
    }
    let fractions = parse_split(&args.split)?;
    if args.balance == Balance::PerLabelPair {
        return Err(CliError::Config("stories have no source/target pairs; use --balance per-label or none".into()));
    }
    let lexicon = artifact::load_lexicon(&args.lexicon)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("stories", artifact::file_hash(&args.stories)?);
    inputs.insert("lexicon", artifact::file_hash(&args.lexicon)?);
    if let Some(p) = &args.paraphrases {
        inputs.insert("paraphrases", artifact::file_hash(p)?);
    }
    let config = json!({
        "inputs": inputs,
        "balance": args.balance,
        "para_balance": args.para_balance,
        "split": fractions,
        "vocab_size": args.vocab_size,
    });
    let mut meta = ArtifactMeta::new("prepare", &config, args.seed);

    let mut ineligible = BTreeMap::new();
    let mut balanced_away = BTreeMap::new();

    let stories: Vec<TextRecord> = artifact::read_jsonl(&args.stories)?;
    let labeled: Vec<Labeled<TextRecord>> = stories
        .iter()
        .filter_map(|r| {
            eligible_agency(&r.text, &lexicon).map(|a| Labeled {
                record: r.clone(),
                source: a,
                target: a,
            })
        })
        .collect();
    ineligible.insert("stories".to_string(), stories.len() - labeled.len());
    let before = labeled.len();
    let labeled = balance(labeled, args.balance, args.seed, "stories")?;
    balanced_away.insert("stories".to_string(), before - labeled.len());

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let story_splits = split(&labeled, fractions, &mut rng);

    let para_splits = match &args.paraphrases {
        None => None,
        Some(p) => {
            let pairs: Vec<PairRecord> = artifact::read_jsonl(p)?;
            let labeled: Vec<Labeled<PairRecord>> = pairs
                .iter()
                .filter_map(|r| {
                    let s = eligible_agency(&r.src, &lexicon)?;
                    let t = eligible_agency(&r.tgt, &lexicon)?;
                    Some(Labeled {
                        record: r.clone(),
                        source: s,
                        target: t,
                    })
                })
                .collect();
            ineligible.insert("paraphrases".to_string(), pairs.len() - labeled.len());
            let before = labeled.len();
            let labeled = balance(labeled, args.para_balance, args.seed, "paraphrases")?;
            balanced_away.insert("paraphrases".to_string(), before - labeled.len());
            Some(split(&labeled, fractions, &mut rng))
        }
    };

    let mut texts: Vec<String> = labeled.iter().map(|l| normalized(&l.record.text)).collect();
    if let Some(splits) = &para_splits {
        for l in splits.iter().flatten() {
            texts.push(normalized(&l.record.src));
            texts.push(normalized(&l.record.tgt));
        }
    }
    let vocab = Vocabulary::train(&texts, args.vocab_size).map_err(CliError::data)?;
    meta.vocab_hash = Some(vocab.hash());

    artifact::create_dir(&args.out)?;
    let vocab_path = args.out.join("vocab.json");
    artifact::write_bytes(&vocab_path, vocab.to_json().as_bytes())?;
    artifact::write_json(&artifact::sidecar(&vocab_path), &meta)?;
    write_splits(&args.out, "stories", &story_splits, &meta)?;
    if let Some(splits) = &para_splits {
        write_splits(&args.out, "paraphrases", splits, &meta)?;
    }
    let report = StatsReport {
        meta,
        stories: stats(&story_splits),
        paraphrases: para_splits.as_ref().map(stats),
        ineligible,
        balanced_away,
    };
    artifact::write_json(&args.out.join("stats.json"), &report)?;
    eprintln!(
        "prepared {} stories{} in {}",
        labeled.len(),
        para_splits
            .as_ref()
            .map(|s| format!(" and {} paraphrase pairs", s.iter().map(Vec::len).sum::<usize>()))
            .unwrap_or_default(),
        args.out.display()
    );
    Ok(())
}

/// The form the model sees: tagger tokens joined by spaces.
fn normalized(text: &str) -> String {
    tagger::tokenize(text).join(" ")
}

fn write_splits<T: Serialize + Clone>(
    dir: &Path,
    name: &str,
    splits: &[Vec<Labeled<T>>; 3],
    meta: &ArtifactMeta,
) -> Result<()> {
    for (split, items) in SPLITS.iter().zip(splits) {
        let rows: Vec<T> = items.iter().map(|l| l.record.clone()).collect();
        artifact::write_jsonl(&dir.join(format!("{name}.{split}.jsonl")), &rows, meta)?;
    }
    Ok(())
}
