use std::path::PathBuf;

use agency_core::bias::{debias_study, CharacterProfile, Gender, GenderList, ParseOptions, ScriptCorpus, StudyReport};
use agency_core::decoder::{build_agency_matrix, Reviser};
use serde::Serialize;
use serde_json::json;

use crate::artifact::{self, ArtifactMeta};
use crate::commands::revise::{DecodeArgs, LoadedReviser};
use crate::commands::ExecArgs;
use crate::error::{CliError, Result};

/// Profile character agency in screenplays, revise female characters'
/// narration toward positive agency, and compare the two phases.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of plain-text scripts (`*.txt`).
    #[arg(long)]
    pub scripts: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Name list, `name<TAB>M|F`.
    #[arg(long)]
    pub names: PathBuf,
    /// Gendered description words, `word<TAB>M|F`.
    #[arg(long)]
    pub gendered_words: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Longest all-caps line still read as a character cue.
    #[arg(long, default_value_t = 4)]
    pub max_cue_words: usize,
    /// Leading spaces that mark a dialogue line.
    #[arg(long, default_value_t = 1)]
    pub dialogue_indent: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Serialize)]
struct StudyFile<'a> {
    meta: ArtifactMeta,
    direction_holds: bool,
    study: &'a StudyReport,
}

#[derive(Debug, Serialize)]
struct ProfileRow<'a> {
    phase: &'a str,
    script: &'a str,
    name: &'a str,
    gender: Gender,
    n_narr: usize,
    n_words: usize,
    n_verbs: usize,
    pos_agency: usize,
    neg_agency: usize,
}

fn rows<'a>(phase: &'a str, profiles: &'a [CharacterProfile]) -> impl Iterator<Item = ProfileRow<'a>> {
    profiles.iter().map(move |p| ProfileRow {
        phase,
        script: &p.script,
        name: &p.name,
        gender: p.gender,
        n_narr: p.n_narr,
        n_words: p.n_words,
        n_verbs: p.n_verbs,
        pos_agency: p.pos_agency,
        neg_agency: p.neg_agency,
    })
}

fn load_gender_list(path: &std::path::Path, what: &str) -> Result<GenderList> {
    artifact::require_file(path, what)?;
    GenderList::parse(&artifact::read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn run(args: &Args) -> Result<()> {
    artifact::require_dir(&args.scripts, "script directory")?;
    if args.max_cue_words == 0 {
        return Err(CliError::Config("--max-cue-words must be at least 1".into()));
    }
    let config = args.decode.config()?;
    let lexicon = artifact::load_lexicon(&args.lexicon)?;
    let names = load_gender_list(&args.names, "name list")?;
    let words = load_gender_list(&args.gendered_words, "gendered word list")?;
    let loaded = LoadedReviser::load(&args.checkpoint, &args.vocab, args.embeddings.as_deref())?;

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.scripts)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.scripts.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no .txt scripts in {}", args.scripts.display())));
    }

    let opts = ParseOptions {
        max_cue_words: args.max_cue_words,
        dialogue_indent: args.dialogue_indent,
    };
    let mut script_hashes = Vec::new();
    let mut corpora = Vec::new();
    for p in &paths {
        let text = artifact::read_text(p)?;
        let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        script_hashes.push(json!([name, artifact::sha256_hex(text.as_bytes())]));
        corpora.push(ScriptCorpus::build(&name, &text, &opts, &names, &words));
    }

    let settings = json!({
        "inputs": {
            "scripts": script_hashes,
            "lexicon": artifact::file_hash(&args.lexicon)?,
            "names": artifact::file_hash(&args.names)?,
            "gendered_words": artifact::file_hash(&args.gendered_words)?,
            "checkpoint": loaded.checkpoint_hash,
            "embeddings": loaded.embeddings_hash,
        },
        "parse": opts,
        "decode": config,
    });
    let mut meta = ArtifactMeta::new("analyze-bias", &settings, config.seed);
    meta.vocab_hash = Some(loaded.vocab.hash());
    meta.checkpoint_hash = Some(loaded.checkpoint_hash.clone());

    let matrix = build_agency_matrix(&lexicon, &loaded.vocab);
    let reviser = Reviser {
        model: &loaded.checkpoint.model,
        vocab: &loaded.vocab,
        lexicon: &lexicon,
        matrix: &matrix,
        config,
        supply: loaded.embeddings.as_ref(),
        mask_input: loaded.mask_input,
    };
    let study = debias_study(&corpora, &lexicon, &reviser, args.exec.execution());

    artifact::create_dir(&args.out)?;
    let profile_rows: Vec<ProfileRow> = rows("before", &study.profiles_before)
        .chain(rows("after", &study.profiles_after))
        .collect();
    artifact::write_csv(&args.out.join("profiles.csv"), &profile_rows, &meta)?;
    let holds = study.direction_holds();
    artifact::write_json(
        &args.out.join("study.json"),
        &StudyFile {
            meta,
            direction_holds: holds,
            study: &study,
        },
    )?;
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
    eprintln!(
        "{} characters in {} scripts; female pos agency {} -> {}, neg agency {} -> {}; {} of {} revisions accepted",
        study.characters,
        study.scripts,
        fmt(study.before.female.pos_agency),
        fmt(study.after.female.pos_agency),
        fmt(study.before.female.neg_agency),
        fmt(study.after.female.neg_agency),
        study.revisions.accepted,
        study.revisions.requested
    );
    Ok(())
}
