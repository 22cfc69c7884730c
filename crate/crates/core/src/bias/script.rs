//! Screenplay parsing: character cues, dialogue and narration.
//!
//! Conventions: a cue is an upper-case line of at most four words (after
//! removing parentheticals) that is not a scene heading or a transition.
//! Indented lines directly under a cue are dialogue until a blank line.
//! Every other non-blank line is narration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub max_cue_words: usize,
    /// Minimum leading whitespace (in chars) that marks a dialogue line.
    pub dialogue_indent: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            max_cue_words: 4,
            dialogue_indent: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub lines: usize,
    pub cue_lines: usize,
    pub dialogue_lines: usize,
    pub narration_lines: usize,
    pub ignored_lines: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedScript {
    /// Distinct cue names in order of first appearance.
    pub characters: Vec<String>,
    pub narration: Vec<String>,
    pub coverage: Coverage,
}

fn strip_parentheticals(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut depth = 0usize;
    for c in line.chars() {
        match c {
            '(' => depth += 1,
            ')' if depth > 0 => depth -= 1,
            _ if depth == 0 => out.push(c),
            _ => {}
        }
    }
    let mut joined = out.split_whitespace().collect::<Vec<_>>().join(" ");
    for p in [".", ",", "!", "?", ";", ":"] {
        joined = joined.replace(&format!(" {p}"), p);
    }
    joined
}

fn is_heading(line: &str) -> bool {
    let l = line.trim_start();
    ["INT.", "EXT.", "INT/EXT", "I/E"].iter().any(|p| l.starts_with(p)) || l.trim_end().ends_with(':')
}

fn cue_name(line: &str, opts: &ParseOptions) -> Option<String> {
    if is_heading(line) {
        return None;
    }
    let s = strip_parentheticals(line);
    let words = s.split_whitespace().count();
    let has_letter = s.chars().any(char::is_alphabetic);
    let upper = s.chars().filter(|c| c.is_alphabetic()).all(char::is_uppercase);
    (has_letter && upper && words <= opts.max_cue_words).then_some(s)
}

fn indent(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).count()
}

pub fn parse_script(text: &str, opts: &ParseOptions) -> ParsedScript {
    let mut out = ParsedScript::default();
    let mut paragraph: Vec<String> = Vec::new();
    let mut in_dialogue = false;
    let flush = |paragraph: &mut Vec<String>, out: &mut ParsedScript| {
        if !paragraph.is_empty() {
            out.narration.extend(split_sentences(&paragraph.join(" ")));
            paragraph.clear();
        }
    };
    for line in text.lines() {
        out.coverage.lines += 1;
        if line.trim().is_empty() {
            in_dialogue = false;
            flush(&mut paragraph, &mut out);
            continue;
        }
        if in_dialogue && indent(line) >= opts.dialogue_indent {
            out.coverage.dialogue_lines += 1;
            continue;
        }
        in_dialogue = false;
        if is_heading(line) {
            out.coverage.ignored_lines += 1;
            flush(&mut paragraph, &mut out);
            continue;
        }
        if let Some(name) = cue_name(line, opts) {
            out.coverage.cue_lines += 1;
            flush(&mut paragraph, &mut out);
            if !out.characters.contains(&name) {
                out.characters.push(name);
            }
            in_dialogue = true;
            continue;
        }
        out.coverage.narration_lines += 1;
        let s = strip_parentheticals(line);
        if !s.is_empty() {
            paragraph.push(s);
        }
    }
    flush(&mut paragraph, &mut out);
    out
}

const ABBREVIATIONS: [&str; 10] = ["mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "vs.", "prof.", "e.g."];

/// Splits after `.`, `!` or `?` when the next word starts a new sentence
/// and the current word is not a known abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for (i, w) in words.iter().enumerate() {
        current.push(w);
        let bare = w.trim_end_matches(['"', '\'', ')']);
        let ends = bare.ends_with(['.', '!', '?']);
        let abbrev = ABBREVIATIONS.contains(&bare.to_lowercase().as_str());
        let next_starts = words
            .get(i + 1)
            .is_none_or(|n| n.chars().find(|c| c.is_alphanumeric()).is_some_and(|c| c.is_uppercase() || c.is_numeric()));
        if ends && !abbrev && next_starts {
            out.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        out.push(current.join(" "));
    }
    out
}

/// Lowercased word tokens for whole-word matching.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .map(|w| w.trim_matches('\'').to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Indices of `sentences` naming each character, by case-insensitive
/// whole-word match of the full name.
pub fn attribute_sentences<S: AsRef<str>>(sentences: &[S], characters: &[String]) -> Vec<Vec<usize>> {
    let sentence_words: Vec<Vec<String>> = sentences.iter().map(|s| words(s.as_ref())).collect();
    characters
        .iter()
        .map(|name| {
            let name_words = words(name);
            sentence_words
                .iter()
                .enumerate()
                .filter(|(_, sw)| !name_words.is_empty() && sw.windows(name_words.len()).any(|w| w == name_words.as_slice()))
                .map(|(i, _)| i)
                .collect()
        })
        .collect()
}
