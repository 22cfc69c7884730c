//! Gender and agency in screenplay narration, before and after revising
//! female characters' sentences toward positive agency.
//!
//! Regression outcome coding is fixed: M = 1, F = 0.

mod gender;
mod script;
pub mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::Reviser;
use crate::exec::Execution;
use crate::lexicon::{AgencyLabel, AgencyLexicon};
use crate::tagger;

pub use gender::{infer_gender, Gender, GenderList};
pub use script::{attribute_sentences, parse_script, split_sentences, Coverage, ParseOptions, ParsedScript};
pub use stats::{cohens_d, logistic_fit, zscore, Coefficient, RegressionResult, StatsError};

pub const GENDER_CODING: &str = "M=1, F=0";

/// Predictor names in design order.
pub const PREDICTORS: [&str; 5] = ["pos_agency", "neg_agency", "n_words", "n_verbs", "n_narr"];

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("resource line {line}: {message}")]
    Resource { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterProfile {
    pub script: String,
    pub name: String,
    pub gender: Gender,
    pub n_narr: usize,
    pub n_words: usize,
    pub n_verbs: usize,
    pub pos_agency: usize,
    pub neg_agency: usize,
}

impl CharacterProfile {
    fn value(&self, predictor: &str) -> f64 {
        (match predictor {
            "pos_agency" => self.pos_agency,
            "neg_agency" => self.neg_agency,
            "n_words" => self.n_words,
            "n_verbs" => self.n_verbs,
            "n_narr" => self.n_narr,
            other => panic!("unknown predictor {other}"),
        }) as f64
    }
}

/// Counts over the sentences attributed to one character.
pub fn aggregate<S: AsRef<str>>(
    script: &str,
    name: &str,
    gender: Gender,
    sentences: &[S],
    lexicon: &AgencyLexicon,
) -> CharacterProfile {
    let mut p = CharacterProfile {
        script: script.to_string(),
        name: name.to_string(),
        gender,
        n_narr: sentences.len(),
        n_words: 0,
        n_verbs: 0,
        pos_agency: 0,
        neg_agency: 0,
    };
    for s in sentences {
        let tokens = tagger::tokenize(s.as_ref());
        p.n_words += tokens.len();
        let t = tagger::tag_tokens(tokens, lexicon);
        p.n_verbs += t.verb_hits.len();
        p.pos_agency += t.count(AgencyLabel::Positive);
        p.neg_agency += t.count(AgencyLabel::Negative);
    }
    p
}

/// One parsed script with its characters' genders and attributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptCorpus {
    pub name: String,
    pub narration: Vec<String>,
    pub characters: Vec<(String, Gender)>,
    /// Per character, indices into `narration`.
    pub attribution: Vec<Vec<usize>>,
    pub coverage: Coverage,
}

impl ScriptCorpus {
    pub fn build(name: &str, text: &str, opts: &ParseOptions, names: &GenderList, words: &GenderList) -> Self {
        let parsed = parse_script(text, opts);
        let attribution = attribute_sentences(&parsed.narration, &parsed.characters);
        Self {
            name: name.to_string(),
            characters: parsed
                .characters
                .iter()
                .map(|c| (c.clone(), infer_gender(c, names, words)))
                .collect(),
            narration: parsed.narration,
            attribution,
            coverage: parsed.coverage,
        }
    }

    fn profiles(&self, narration: &[String], lexicon: &AgencyLexicon) -> Vec<CharacterProfile> {
        self.characters
            .iter()
            .zip(&self.attribution)
            .map(|((name, g), idx)| {
                let sents: Vec<&str> = idx.iter().map(|&i| narration[i].as_str()).collect();
                aggregate(&self.name, name, *g, &sents, lexicon)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMeans {
    pub n: usize,
    pub pos_agency: Option<f64>,
    pub neg_agency: Option<f64>,
    pub n_words: Option<f64>,
    pub n_verbs: Option<f64>,
    pub n_narr: Option<f64>,
}

impl GroupMeans {
    fn of(profiles: &[&CharacterProfile]) -> Self {
        let m = |k: &str| {
            (!profiles.is_empty()).then(|| profiles.iter().map(|p| p.value(k)).sum::<f64>() / profiles.len() as f64)
        };
        Self {
            n: profiles.len(),
            pos_agency: m("pos_agency"),
            neg_agency: m("neg_agency"),
            n_words: m("n_words"),
            n_verbs: m("n_verbs"),
            n_narr: m("n_narr"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub female: GroupMeans,
    pub male: GroupMeans,
    /// Male minus female, in pooled standard deviations.
    pub cohens_d_pos: Option<f64>,
    pub cohens_d_neg: Option<f64>,
    /// Absent when no fit was possible (one gender only, a constant
    /// predictor). A fit that did not converge is kept with
    /// `converged = false`; its estimates are the last Newton iterate.
    pub regression: Option<RegressionResult>,
    /// Why the fit is missing or did not converge.
    pub regression_note: Option<String>,
}

/// Logistic regression of gender (M = 1) on the z-scored predictors.
pub fn gender_regression(profiles: &[CharacterProfile]) -> Result<RegressionResult, StatsError> {
    let known: Vec<&CharacterProfile> = profiles.iter().filter(|p| p.gender != Gender::Unknown).collect();
    let outcome: Vec<bool> = known.iter().map(|p| p.gender == Gender::M).collect();
    let mut columns = Vec::new();
    for name in PREDICTORS {
        let raw: Vec<f64> = known.iter().map(|p| p.value(name)).collect();
        let z = zscore(&raw).map_err(|e| match e {
            StatsError::ConstantPredictor(_) => StatsError::ConstantPredictor(name.to_string()),
            other => other,
        })?;
        columns.push((name.to_string(), z));
    }
    logistic_fit(&outcome, &columns)
}

pub fn summarize(profiles: &[CharacterProfile]) -> PhaseSummary {
    let f: Vec<&CharacterProfile> = profiles.iter().filter(|p| p.gender == Gender::F).collect();
    let m: Vec<&CharacterProfile> = profiles.iter().filter(|p| p.gender == Gender::M).collect();
    let d = |k: &str| {
        let a: Vec<f64> = m.iter().map(|p| p.value(k)).collect();
        let b: Vec<f64> = f.iter().map(|p| p.value(k)).collect();
        cohens_d(&a, &b).ok()
    };
    let (regression, regression_note) = match gender_regression(profiles) {
        Ok(r) if r.converged => (Some(r), None),
        Ok(r) => {
            let note = format!(
                "did not converge after {} iterations (likely separation); estimates are the last iterate and only their signs are meaningful",
                r.iterations
            );
            (Some(r), Some(note))
        }
        Err(e) => (None, Some(e.to_string())),
    };
    PhaseSummary {
        female: GroupMeans::of(&f),
        male: GroupMeans::of(&m),
        cohens_d_pos: d("pos_agency"),
        cohens_d_neg: d("neg_agency"),
        regression,
        regression_note,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionCounts {
    /// Distinct sentences sent for revision.
    pub requested: usize,
    pub accepted: usize,
    /// Generations without an end token; the original sentence is kept.
    pub truncated: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub gender_coding: String,
    pub scripts: usize,
    pub characters: usize,
    pub revisions: RevisionCounts,
    pub before: PhaseSummary,
    pub after: PhaseSummary,
    pub profiles_before: Vec<CharacterProfile>,
    pub profiles_after: Vec<CharacterProfile>,
}

impl StudyReport {
    /// Female mean positive agency rises, female mean negative agency
    /// falls, and the positive-agency coefficient changes sign. A separated
    /// fit counts through the sign of the direction it diverges along.
    pub fn direction_holds(&self) -> bool {
        let (b, a) = (&self.before, &self.after);
        let rises = matches!((b.female.pos_agency, a.female.pos_agency), (Some(x), Some(y)) if y > x);
        let falls = matches!((b.female.neg_agency, a.female.neg_agency), (Some(x), Some(y)) if y < x);
        let coef = |s: &PhaseSummary| {
            s.regression
                .as_ref()
                .and_then(|r| r.get("pos_agency"))
                .map(|c| c.estimate)
                .filter(|x| x.is_finite())
        };
        let flips = matches!((coef(b), coef(a)), (Some(x), Some(y)) if x != 0.0 && y != 0.0 && x.signum() != y.signum());
        rises && falls && flips
    }
}

/// Profiles every character, revises each distinct sentence attributed to
/// a female character toward positive agency, and profiles again. Failed
/// or truncated revisions keep the original sentence.
pub fn debias_study(
    scripts: &[ScriptCorpus],
    lexicon: &AgencyLexicon,
    reviser: &Reviser,
    exec: Execution,
) -> StudyReport {
    let profiles_before: Vec<CharacterProfile> = exec
        .map(scripts, |s| s.profiles(&s.narration, lexicon))
        .into_iter()
        .flatten()
        .collect();

    let mut targets: Vec<(usize, usize)> = Vec::new();
    for (si, s) in scripts.iter().enumerate() {
        let mut idx: Vec<usize> = s
            .characters
            .iter()
            .zip(&s.attribution)
            .filter(|((_, g), _)| *g == Gender::F)
            .flat_map(|(_, a)| a.iter().copied())
            .collect();
        idx.sort_unstable();
        idx.dedup();
        targets.extend(idx.into_iter().map(|i| (si, i)));
    }
    let requests: Vec<(String, AgencyLabel)> = targets
        .iter()
        .map(|&(si, i)| (scripts[si].narration[i].clone(), AgencyLabel::Positive))
        .collect();
    let results = if requests.is_empty() {
        Vec::new()
    } else {
        reviser.revise_batch(&requests, exec)
    };

    let mut revised: Vec<Vec<String>> = scripts.iter().map(|s| s.narration.clone()).collect();
    let mut counts = RevisionCounts {
        requested: requests.len(),
        ..Default::default()
    };
    for (&(si, i), r) in targets.iter().zip(results) {
        match r {
            Ok(rev) if !rev.truncated => {
                revised[si][i] = rev.output;
                counts.accepted += 1;
            }
            Ok(_) => counts.truncated += 1,
            Err(_) => counts.failed += 1,
        }
    }
    let pairs: Vec<(&ScriptCorpus, &Vec<String>)> = scripts.iter().zip(&revised).collect();
    let profiles_after: Vec<CharacterProfile> = exec
        .map(&pairs, |(s, n)| s.profiles(n, lexicon))
        .into_iter()
        .flatten()
        .collect();

    StudyReport {
        gender_coding: GENDER_CODING.to_string(),
        scripts: scripts.len(),
        characters: profiles_before.len(),
        revisions: counts,
        before: summarize(&profiles_before),
        after: summarize(&profiles_after),
        profiles_before,
        profiles_after,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_counts_hits() {
        let lex = AgencyLexicon::parse("pursue\tpos\nwant\tpos\nwait\tneg\n").unwrap();
        let p = aggregate(
            "s",
            "ANA",
            Gender::F,
            &["Ana pursued it and wanted more.", "Ana waited."],
            &lex,
        );
        assert_eq!((p.pos_agency, p.neg_agency, p.n_verbs, p.n_narr, p.n_words), (2, 1, 3, 2, 8));
        let empty = aggregate::<&str>("s", "BO", Gender::M, &[], &lex);
        assert_eq!((empty.n_narr, empty.n_words, empty.pos_agency), (0, 0, 0));
    }

    #[test]
    fn summary_without_women_is_empty() {
        let lex = AgencyLexicon::parse("pursue\tpos\n").unwrap();
        let p = aggregate("s", "BO", Gender::M, &["Bo pursued it."], &lex);
        let s = summarize(&[p]);
        assert_eq!(s.female.n, 0);
        assert!(s.female.pos_agency.is_none());
        assert!(s.regression.is_none());
    }

    #[test]
    fn separated_fit_is_kept_and_flagged() {
        // every female verb is positive; no male character is
        let profile = |i: usize, gender, pos, neg| CharacterProfile {
            script: "s".into(),
            name: format!("C{i}"),
            gender,
            n_narr: 3 + i % 4,
            n_words: 20 + 3 * i,
            n_verbs: 4 + i % 3,
            pos_agency: pos,
            neg_agency: neg,
        };
        let mut ps = Vec::new();
        for i in 0..12 {
            let f = profile(i, Gender::F, 0, 0);
            ps.push(CharacterProfile { pos_agency: f.n_verbs, ..f });
            let m = profile(i + 12, Gender::M, 0, 1 + i % 2);
            ps.push(CharacterProfile { pos_agency: m.n_verbs - m.neg_agency, ..m });
        }
        let s = summarize(&ps);
        let r = s.regression.as_ref().unwrap();
        assert!(!r.converged);
        assert!(s.regression_note.as_deref().unwrap().contains("did not converge"));
        assert!(r.get("pos_agency").unwrap().estimate < 0.0);
    }
}
