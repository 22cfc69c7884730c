use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use agency_core::synth;
use serde::Serialize;
use serde_json::json;

use crate::artifact::{self, ArtifactMeta};
use crate::error::{CliError, Result};

/// Write the deterministic synthetic fixture set: lexicon, name lists,
/// stories, paraphrase pairs, revision prompts and screenplays.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
struct Manifest {
    meta: ArtifactMeta,
    files: BTreeMap<String, String>,
}

fn collect(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(CliError::runtime)?.path();
        if path.is_dir() {
            collect(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != "MANIFEST.json") {
            let rel = path.strip_prefix(root).expect("child of root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.insert(key, artifact::file_hash(&path)?);
        }
    }
    Ok(())
}

pub fn run(args: &Args) -> Result<()> {
    synth::write_fixtures(&args.out).map_err(|e| CliError::Runtime(format!("{}: {e}", args.out.display())))?;
    let mut files = BTreeMap::new();
    collect(&args.out, &args.out, &mut files)?;
    let meta = ArtifactMeta::new("synth", &json!({ "generator": "fixtures" }), 0);
    eprintln!("wrote {} files to {}", files.len(), args.out.display());
    artifact::write_json(&args.out.join("MANIFEST.json"), &Manifest { meta, files })
}
