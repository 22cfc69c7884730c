//! Provenance metadata and file helpers shared by every subcommand.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use agency_core::bpe::Vocabulary;
use agency_core::lexicon::AgencyLexicon;
use agency_core::transformer::Checkpoint;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Stamped into every artifact so a result can be traced back to its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool: String,
    pub command: String,
    /// sha256 of the resolved settings plus the content hashes of all inputs.
    pub config_hash: String,
    pub seed: u64,
    pub vocab_hash: Option<String>,
    pub checkpoint_hash: Option<String>,
}

impl ArtifactMeta {
    pub fn new(command: &str, config: &Value, seed: u64) -> Self {
        Self {
            tool: format!("agency {}", env!("CARGO_PKG_VERSION")),
            command: command.to_string(),
            config_hash: sha256_hex(&serde_json::to_vec(config).expect("json value serializes")),
            seed,
            vocab_hash: None,
            checkpoint_hash: None,
        }
    }

    /// `# key=value` lines for CSV headers.
    fn comment_lines(&self) -> String {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        format!(
            "# tool={}\n# command={}\n# config_hash={}\n# seed={}\n# vocab_hash={}\n# checkpoint_hash={}\n",
            self.tool,
            self.command,
            self.config_hash,
            self.seed,
            opt(&self.vocab_hash),
            opt(&self.checkpoint_hash)
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} `{}` is not a directory", path.display())))
    }
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// JSONL records cannot carry a header, so their provenance goes to `<file>.meta.json`.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T], meta: &ArtifactMeta) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r).map_err(CliError::runtime)?);
        text.push('\n');
    }
    write_bytes(path, text.as_bytes())?;
    write_json(&sidecar(path), meta)
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

/// A CSV file whose first lines are `#` comments carrying the metadata.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], meta: &ArtifactMeta) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(CliError::runtime)?;
    }
    let body = w.into_inner().map_err(CliError::runtime)?;
    let mut bytes = meta.comment_lines().into_bytes();
    bytes.write_all(&body).expect("vec write");
    write_bytes(path, &bytes)
}

pub fn load_lexicon(path: &Path) -> Result<AgencyLexicon> {
    require_file(path, "lexicon")?;
    AgencyLexicon::parse(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    require_file(path, "vocabulary")?;
    Vocabulary::from_json(&read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    require_file(path, "checkpoint")?;
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let ckpt = Checkpoint::from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((ckpt, sha256_hex(&bytes)))
}

/// Fails unless the checkpoint was trained against `vocab`.
pub fn check_vocab(ckpt: &Checkpoint, vocab: &Vocabulary) -> Result<()> {
    let hash = vocab.hash();
    if ckpt.model.vocab_hash == hash {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "checkpoint was trained with vocabulary {} but {} was given",
            ckpt.model.vocab_hash, hash
        )))
    }
}
