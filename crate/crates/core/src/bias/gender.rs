use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::script::words;
use super::BiasError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
    Unknown,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::M => "M",
            Gender::F => "F",
            Gender::Unknown => "Unknown",
        })
    }
}

/// `entry<TAB>M|F` lines, keyed by lowercased entry. Blank and `#` lines are skipped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GenderList(HashMap<String, Gender>);

impl GenderList {
    pub fn parse(text: &str) -> Result<Self, BiasError> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (entry, g) = line.split_once('\t').ok_or_else(|| BiasError::Resource {
                line: i + 1,
                message: "expected entry<TAB>M|F".into(),
            })?;
            let g = match g.trim() {
                "M" | "m" => Gender::M,
                "F" | "f" => Gender::F,
                other => {
                    return Err(BiasError::Resource {
                        line: i + 1,
                        message: format!("unknown gender `{other}`"),
                    })
                }
            };
            map.insert(words(entry).join(" "), g);
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BiasError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, entry: &str) -> Option<Gender> {
        self.0.get(entry).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Full-name match, then first-name match, then any gendered word or
/// phrase in the description; otherwise unknown.
pub fn infer_gender(description: &str, names: &GenderList, gendered_words: &GenderList) -> Gender {
    let w = words(description);
    if w.is_empty() {
        return Gender::Unknown;
    }
    if let Some(g) = names.get(&w.join(" ")).or_else(|| names.get(&w[0])) {
        return g;
    }
    for len in (1..=w.len()).rev() {
        for window in w.windows(len) {
            if let Some(g) = gendered_words.get(&window.join(" ")) {
                return g;
            }
        }
    }
    Gender::Unknown
}
