//! Connotation-frame agency lexicon.
//!
//! The lexicon maps verb lemmas to one of three agency levels and indexes
//! every generated inflection back to its lemma, so that tagging can match
//! surface tokens directly.

mod embedding;
pub mod inflect;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embedding::{EmbeddingError, EmbeddingProvider};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("lemma `{lemma}` has conflicting labels {first} and {second}")]
    Conflict {
        lemma: String,
        first: AgencyLabel,
        second: AgencyLabel,
    },
    #[error("retrieval failed: {0}")]
    Retrieval(String),
}

/// Agency level a verb projects onto its agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgencyLabel {
    #[serde(rename = "pos")]
    Positive,
    Equal,
    #[serde(rename = "neg")]
    Negative,
}

impl AgencyLabel {
    pub const ALL: [AgencyLabel; 3] = [Self::Positive, Self::Equal, Self::Negative];

    /// Column index in the agency matrix: (Positive, Equal, Negative).
    pub fn index(self) -> usize {
        match self {
            Self::Positive => 0,
            Self::Equal => 1,
            Self::Negative => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Positive => "pos",
            Self::Equal => "equal",
            Self::Negative => "neg",
        }
    }

    /// The special control token the model receives for this target.
    pub fn control_token(self) -> &'static str {
        match self {
            Self::Positive => "<Pos>",
            Self::Equal => "<Equal>",
            Self::Negative => "<Neg>",
        }
    }

    pub fn opposite(self) -> Option<AgencyLabel> {
        match self {
            Self::Positive => Some(Self::Negative),
            Self::Negative => Some(Self::Positive),
            Self::Equal => None,
        }
    }
}

impl fmt::Display for AgencyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgencyLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" | "positive" | "+" => Ok(Self::Positive),
            "equal" | "neutral" | "=" => Ok(Self::Equal),
            "neg" | "negative" | "-" => Ok(Self::Negative),
            other => Err(format!("unknown agency label `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    label: AgencyLabel,
    forms: Vec<String>,
}

/// Immutable lemma -> label map with an inflection index.
#[derive(Debug, Clone, Default)]
pub struct AgencyLexicon {
    entries: BTreeMap<String, Entry>,
    inflections: HashMap<String, String>,
}

impl AgencyLexicon {
    /// Build from `(lemma, label, irregular past forms)` rows. Lemmas are
    /// lowercased. A repeated lemma with the same label is merged.
    pub fn from_entries<I, S>(rows: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, AgencyLabel, Vec<String>)>,
        S: AsRef<str>,
    {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        for (lemma, label, irregular) in rows {
            let lemma = lemma.as_ref().trim().to_lowercase();
            let irregular: Vec<String> = irregular.iter().map(|f| f.trim().to_lowercase()).collect();
            match entries.get_mut(&lemma) {
                Some(existing) if existing.label != label => {
                    return Err(LexiconError::Conflict {
                        lemma,
                        first: existing.label,
                        second: label,
                    })
                }
                Some(existing) => {
                    let mut forms = existing.forms.clone();
                    forms.extend(inflect::inflections(&lemma, &irregular));
                    forms.sort();
                    forms.dedup();
                    existing.forms = forms;
                }
                None => {
                    let forms = inflect::inflections(&lemma, &irregular);
                    entries.insert(lemma, Entry { label, forms });
                }
            }
        }
        Ok(Self::index(entries))
    }

    // Base forms claim their own surface first; remaining collisions go to
    // the lexicographically smallest lemma (BTreeMap order).
    fn index(entries: BTreeMap<String, Entry>) -> Self {
        let mut inflections = HashMap::new();
        for lemma in entries.keys() {
            inflections.insert(lemma.clone(), lemma.clone());
        }
        for (lemma, entry) in &entries {
            for form in &entry.forms {
                inflections.entry(form.clone()).or_insert_with(|| lemma.clone());
            }
        }
        Self { entries, inflections }
    }

    /// Parse the TSV format `lemma<TAB>label[<TAB>irregular,past,forms]`.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, LexiconError> {
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(LexiconError::Parse {
                    line: line_no,
                    message: format!("expected 2 or 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let lemma = cols[0].trim();
            if lemma.is_empty() || lemma.contains(char::is_whitespace) {
                return Err(LexiconError::Parse {
                    line: line_no,
                    message: format!("invalid lemma `{lemma}`"),
                });
            }
            let label = match cols[1].trim() {
                "pos" => AgencyLabel::Positive,
                "equal" => AgencyLabel::Equal,
                "neg" => AgencyLabel::Negative,
                other => {
                    return Err(LexiconError::Parse {
                        line: line_no,
                        message: format!("label must be pos, equal or neg, found `{other}`"),
                    })
                }
            };
            let irregular = cols
                .get(2)
                .map(|c| {
                    c.split(',')
                        .map(str::trim)
                        .filter(|f| !f.is_empty())
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            rows.push((lemma.to_string(), label, irregular));
        }
        Self::from_entries(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lemma whose inflection set contains `token`, case-insensitively.
    pub fn lemma_of(&self, token: &str) -> Option<&str> {
        let key = token.to_lowercase();
        self.inflections.get(&key).map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<AgencyLabel> {
        self.lemma_of(token).and_then(|l| self.label_of_lemma(l))
    }

    pub fn label_of_lemma(&self, lemma: &str) -> Option<AgencyLabel> {
        self.entries.get(lemma).map(|e| e.label)
    }

    /// Generated surface forms of `lemma`, sorted.
    pub fn forms(&self, lemma: &str) -> Option<&[String]> {
        self.entries.get(lemma).map(|e| e.forms.as_slice())
    }

    /// Lemmas in lexicographic order with their labels.
    pub fn lemmas(&self) -> impl Iterator<Item = (&str, AgencyLabel)> {
        self.entries.iter().map(|(l, e)| (l.as_str(), e.label))
    }

    /// Target-labelled lemma most cosine-similar to `verb`. Ties go to the
    /// lexicographically smallest lemma.
    pub fn nearest_verb(
        &self,
        emb: &EmbeddingProvider,
        verb: &str,
        target: AgencyLabel,
    ) -> Result<String, LexiconError> {
        let verb = verb.to_lowercase();
        let query = emb
            .get(&verb)
            .or_else(|| self.lemma_of(&verb).and_then(|l| emb.get(l)))
            .ok_or_else(|| LexiconError::Retrieval(format!("no embedding for `{verb}`")))?;
        let mut best: Option<(f64, &str)> = None;
        for (lemma, label) in self.lemmas() {
            if label != target {
                continue;
            }
            let Some(vector) = self.candidate_vector(emb, lemma) else {
                continue;
            };
            let Some(sim) = EmbeddingProvider::cosine(query, vector) else {
                continue;
            };
            // strict > keeps the earliest (smallest) lemma on ties
            if best.is_none_or(|(b, _)| sim > b) {
                best = Some((sim, lemma));
            }
        }
        best.map(|(_, l)| l.to_string()).ok_or_else(|| {
            LexiconError::Retrieval(format!("no {target} lemma with an embedding"))
        })
    }

    fn candidate_vector<'e>(&self, emb: &'e EmbeddingProvider, lemma: &str) -> Option<&'e [f64]> {
        emb.get(lemma).or_else(|| {
            self.forms(lemma)
                .and_then(|forms| forms.iter().find_map(|f| emb.get(f)))
        })
    }
}
