//! Deterministic synthetic fixtures: a small agency lexicon, story
//! sentences, held-out revision prompts, out-of-domain paraphrase pairs and
//! screenplays with a planted gender/agency skew.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::lexicon::inflect::{inflections, past, progressive, third_person};
use crate::lexicon::AgencyLabel;

/// (lemma, label, irregular past)
pub const VERBS: [(&str, AgencyLabel, Option<&str>); 30] = {
    use AgencyLabel::*;
    [
        ("pursue", Positive, None),
        ("achieve", Positive, None),
        ("lead", Positive, Some("led")),
        ("build", Positive, Some("built")),
        ("win", Positive, Some("won")),
        ("choose", Positive, Some("chose")),
        ("command", Positive, None),
        ("create", Positive, None),
        ("organize", Positive, None),
        ("defend", Positive, None),
        ("visit", Equal, None),
        ("watch", Equal, None),
        ("meet", Equal, Some("met")),
        ("find", Equal, Some("found")),
        ("see", Equal, Some("saw")),
        ("walk", Equal, None),
        ("hear", Equal, Some("heard")),
        ("notice", Equal, None),
        ("read", Equal, Some("read")),
        ("greet", Equal, None),
        ("daydream", Negative, None),
        ("wait", Negative, None),
        ("hesitate", Negative, None),
        ("fail", Negative, None),
        ("suffer", Negative, None),
        ("avoid", Negative, None),
        ("lose", Negative, Some("lost")),
        ("struggle", Negative, None),
        ("worry", Negative, None),
        ("doubt", Negative, None),
    ]
};

pub const FEMALE_NAMES: [&str; 20] = [
    "mey", "sarah", "darla", "allie", "maya", "emma", "olivia", "ava", "mia", "zoe", "lily", "nora", "ruby", "chloe",
    "hannah", "grace", "ella", "julia", "rosa", "nina",
];

pub const MALE_NAMES: [&str; 20] = [
    "william", "daniel", "clint", "james", "noah", "liam", "owen", "jack", "leo", "ethan", "lucas", "henry", "oscar",
    "felix", "adam", "ryan", "victor", "theo", "hugo", "peter",
];

const GENDERED_WORDS: [(&str, char); 10] = [
    ("waitress", 'F'),
    ("actress", 'F'),
    ("mother", 'F'),
    ("woman", 'F'),
    ("girl", 'F'),
    ("doorman", 'M'),
    ("waiter", 'M'),
    ("father", 'M'),
    ("man", 'M'),
    ("boy", 'M'),
];

const POS_OBJECTS: [&str; 8] = [
    "the new project",
    "the team",
    "a bold plan",
    "the big race",
    "the city council",
    "the rescue mission",
    "a small company",
    "the final match",
];

const EQUAL_OBJECTS: [&str; 8] = [
    "the museum",
    "an old friend",
    "the garden",
    "the local library",
    "the market",
    "a neighbor",
    "the river",
    "the painting",
];

const NEG_OBJECTS: [&str; 8] = [
    "the late bus",
    "the test results",
    "the cold winter",
    "the long line",
    "the old debt",
    "a quiet answer",
    "the bad news",
    "the rainy season",
];

const ADJUNCTS: [&str; 8] = [
    "after lunch",
    "in the morning",
    "with great care",
    "last week",
    "before dinner",
    "again",
    "at night",
    "",
];

const PARA_SUBJECTS: [&str; 6] = [
    "the committee",
    "my neighbor",
    "the old farmer",
    "a young student",
    "the manager",
    "our coach",
];

const PARA_OBJECTS: [&str; 6] = [
    "the proposal",
    "the harvest",
    "the exam",
    "the budget",
    "the schedule",
    "the contract",
];

/// Adjunct pairs that say the same thing two ways.
const PARA_ADJUNCTS: [(&str, &str); 5] = [
    ("yesterday", "the day before"),
    ("in the morning", "early in the day"),
    ("at last", "in the end"),
    ("quietly", "without a word"),
    ("this year", "over the year"),
];

/// Share of story sentences whose object comes from the verb's own pool.
const OBJECT_SKEW: f64 = 0.9;

/// Cumulative shares of one- and two-clause story sentences; the rest have three.
const CLAUSE_MIX: [f64; 2] = [0.35, 0.50];
const VERBLESS_SHARE: f64 = 0.04;

pub const STORY_SEED: u64 = 20_201;
pub const DEV_SEED: u64 = 20_202;
pub const PARA_SEED: u64 = 20_203;
pub const SCRIPT_SEED: u64 = 20_204;

pub const N_STORIES: usize = 500;
pub const N_DEV: usize = 160;
pub const N_PARAPHRASES: usize = 600;
/// Chance that a paraphrase clause keeps its source verb.
const KEEP_VERB: f64 = 0.9;
pub const N_SCRIPTS: usize = 8;

fn verbs_with(label: AgencyLabel) -> Vec<(&'static str, Option<&'static str>)> {
    VERBS
        .iter()
        .filter(|v| v.1 == label)
        .map(|v| (v.0, v.2))
        .collect()
}

fn objects(label: AgencyLabel) -> &'static [&'static str] {
    match label {
        AgencyLabel::Positive => &POS_OBJECTS,
        AgencyLabel::Equal => &EQUAL_OBJECTS,
        AgencyLabel::Negative => &NEG_OBJECTS,
    }
}

pub fn lexicon_tsv() -> String {
    let mut out = String::from("# lemma\tlabel\tirregular past\n");
    for (lemma, label, irregular) in VERBS {
        match irregular {
            Some(p) => writeln!(out, "{lemma}\t{}\t{p}", label.as_str()),
            None => writeln!(out, "{lemma}\t{}", label.as_str()),
        }
        .expect("string write");
    }
    out
}

pub fn names_tsv() -> String {
    let mut out = String::new();
    for n in FEMALE_NAMES {
        out.push_str(&format!("{n}\tF\n"));
    }
    for n in MALE_NAMES {
        out.push_str(&format!("{n}\tM\n"));
    }
    out
}

pub fn gendered_words_tsv() -> String {
    GENDERED_WORDS.iter().map(|(w, g)| format!("{w}\t{g}\n")).collect()
}

#[derive(Clone, Copy)]
enum Form {
    Past,
    Present,
    Progressive,
    Base,
}

fn verb_phrase(lemma: &str, irregular: Option<&str>, form: Form) -> String {
    match form {
        Form::Past => irregular.map_or_else(|| past(lemma), str::to_string),
        Form::Present => third_person(lemma),
        Form::Progressive => format!("was {}", progressive(lemma)),
        Form::Base => format!("decided to {lemma}"),
    }
}

fn random_form<R: Rng>(rng: &mut R) -> Form {
    *[Form::Past, Form::Past, Form::Present, Form::Progressive, Form::Base]
        .choose(rng)
        .expect("nonempty")
}

fn random_label<R: Rng>(rng: &mut R, weights: [f64; 3]) -> AgencyLabel {
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for l in AgencyLabel::ALL {
        acc += weights[l.index()];
        if u < acc {
            return l;
        }
    }
    AgencyLabel::Negative
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn sentence(parts: &[&str]) -> String {
    let body = parts.iter().filter(|p| !p.is_empty()).copied().collect::<Vec<_>>().join(" ");
    format!("{}.", capitalize(&body))
}

/// Verb phrase plus object for one clause; the object comes from the
/// clause's own agency pool with probability `OBJECT_SKEW`.
fn clause<R: Rng>(rng: &mut R, label: AgencyLabel, form: Form) -> String {
    let (lemma, irregular) = *verbs_with(label).choose(rng).expect("verbs");
    let object_label = if rng.random::<f64>() < OBJECT_SKEW {
        label
    } else {
        let others: Vec<AgencyLabel> = AgencyLabel::ALL.into_iter().filter(|&l| l != label).collect();
        *others.choose(rng).expect("labels")
    };
    let object = objects(object_label).choose(rng).expect("objects");
    format!("{} {object}", verb_phrase(lemma, irregular, form))
}

/// A single-verb story sentence about `subject` with the given agency.
fn story_clause<R: Rng>(rng: &mut R, subject: &str, label: AgencyLabel) -> String {
    let form = random_form(rng);
    let c = clause(rng, label, form);
    let adjunct = ADJUNCTS.choose(rng).expect("adjuncts");
    sentence(&[subject, &c, adjunct])
}

/// A sentence of `n` clauses sharing one subject, each with an
/// independently drawn agency.
fn story_sentence<R: Rng>(rng: &mut R, subject: &str, n: usize) -> String {
    let form = random_form(rng);
    let clauses: Vec<String> = (0..n)
        .map(|_| {
            let label = random_label(rng, [1.0; 3]);
            clause(rng, label, form)
        })
        .collect();
    let body = match clauses.as_slice() {
        [one] => one.clone(),
        [init @ .., last] => format!("{} and then {last}", init.join(", ")),
        [] => unreachable!("at least one clause"),
    };
    let adjunct = ADJUNCTS.choose(rng).expect("adjuncts");
    sentence(&[subject, &body, adjunct])
}

fn any_name<R: Rng>(rng: &mut R) -> &'static str {
    if rng.random::<bool>() {
        FEMALE_NAMES.choose(rng).expect("names")
    } else {
        MALE_NAMES.choose(rng).expect("names")
    }
}

/// Story sentences with one to three agency clauses, plus a few verbless ones.
pub fn stories(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let name = capitalize(any_name(&mut rng));
            let roll: f64 = rng.random();
            if roll < VERBLESS_SHARE {
                let o = EQUAL_OBJECTS.choose(&mut rng).expect("objects");
                let adj = ADJUNCTS.choose(&mut rng).expect("adjuncts");
                sentence(&[&name, "was at", o, adj])
            } else {
                let u: f64 = rng.random();
                let n = CLAUSE_MIX.iter().position(|&c| u < c).map_or(3, |i| i + 1);
                story_sentence(&mut rng, &name, n)
            }
        })
        .collect()
}

/// Held-out single-verb prompts with a polar target: positive sources
/// become negative, negative become positive, equal alternate.
pub fn dev_prompts(n: usize, seed: u64, exclude: &[String]) -> Vec<(String, AgencyLabel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(String, AgencyLabel)> = Vec::with_capacity(n);
    let mut flip = false;
    while out.len() < n {
        let label = AgencyLabel::ALL[out.len() % 3];
        let name = capitalize(any_name(&mut rng));
        let s = story_clause(&mut rng, &name, label);
        if exclude.contains(&s) || out.iter().any(|(t, _)| *t == s) {
            continue;
        }
        let target = match label {
            AgencyLabel::Positive => AgencyLabel::Negative,
            AgencyLabel::Negative => AgencyLabel::Positive,
            AgencyLabel::Equal => {
                flip = !flip;
                if flip {
                    AgencyLabel::Positive
                } else {
                    AgencyLabel::Negative
                }
            }
        };
        out.push((s, target));
    }
    out
}

/// Paraphrase pairs from a different domain. Sources have one to three
/// clauses; each target clause keeps the source verb with probability
/// `KEEP_VERB` and otherwise takes a verb of a uniformly drawn agency, so
/// the pair's agency cell follows from the sentence-level majorities.
pub fn paraphrases(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let subj = PARA_SUBJECTS.choose(&mut rng).expect("subjects");
            let u: f64 = rng.random();
            let clauses = CLAUSE_MIX.iter().position(|&c| u < c).map_or(3, |i| i + 1);
            let form = if rng.random::<bool>() { Form::Past } else { Form::Present };
            let (mut src, mut tgt) = (Vec::new(), Vec::new());
            for _ in 0..clauses {
                let label = random_label(&mut rng, [1.0; 3]);
                let (l1, i1) = *verbs_with(label).choose(&mut rng).expect("verbs");
                let (l2, i2) = if rng.random::<f64>() < KEEP_VERB {
                    (l1, i1)
                } else {
                    let other = random_label(&mut rng, [1.0; 3]);
                    let pool: Vec<_> = verbs_with(other).into_iter().filter(|v| v.0 != l1).collect();
                    *pool.choose(&mut rng).expect("verbs")
                };
                let obj = PARA_OBJECTS.choose(&mut rng).expect("objects");
                src.push(format!("{} {obj}", verb_phrase(l1, i1, form)));
                tgt.push(format!("{} {obj}", verb_phrase(l2, i2, form)));
            }
            let (a1, a2) = *PARA_ADJUNCTS.choose(&mut rng).expect("adjuncts");
            let join = |c: &[String]| match c {
                [one] => one.clone(),
                [init @ .., last] => format!("{} and then {last}", init.join(", ")),
                [] => unreachable!("at least one clause"),
            };
            (sentence(&[subj, &join(&src), a1]), sentence(&[subj, &join(&tgt), a2]))
        })
        .collect()
}

/// Agency weights (pos, equal, neg) used for each gender in the screenplays.
pub const FEMALE_AGENCY: [f64; 3] = [0.15, 0.30, 0.55];
pub const MALE_AGENCY: [f64; 3] = [0.55, 0.30, 0.15];

const SETTINGS: [&str; 6] = [
    "INT. KITCHEN - NIGHT",
    "EXT. CITY STREET - DAY",
    "INT. OFFICE - MORNING",
    "EXT. PARK - EVENING",
    "INT. LIBRARY - DAY",
    "INT. TRAIN STATION - NIGHT",
];

const DIALOGUE: [&str; 6] = [
    "I pursued it for years.",
    "We should wait here.",
    "Did you see that?",
    "Nobody doubted you.",
    "Let us go home.",
    "I won, did I not?",
];

/// Screenplays with cues, parentheticals, dialogue and narration. Female
/// characters are narrated with mostly low agency, male characters with
/// mostly high agency.
pub fn scripts(n: usize, seed: u64) -> Vec<(String, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut f: Vec<&str> = FEMALE_NAMES.to_vec();
            let mut m: Vec<&str> = MALE_NAMES.to_vec();
            rand::seq::SliceRandom::shuffle(f.as_mut_slice(), &mut rng);
            rand::seq::SliceRandom::shuffle(m.as_mut_slice(), &mut rng);
            // (cue, narration subject, agency weights)
            let mut cast: Vec<(String, String, [f64; 3])> = Vec::new();
            for name in &f[..4] {
                cast.push((name.to_uppercase(), capitalize(name), FEMALE_AGENCY));
            }
            for name in &m[..4] {
                cast.push((name.to_uppercase(), capitalize(name), MALE_AGENCY));
            }
            match k % 4 {
                0 => cast.push(("THE WAITRESS".into(), "The waitress".into(), FEMALE_AGENCY)),
                1 => cast.push(("THE DOORMAN".into(), "The doorman".into(), MALE_AGENCY)),
                2 => cast.push(("ALEX".into(), "Alex".into(), [1.0; 3])),
                _ => {}
            }
            // each character gets 3 to 7 narration sentences, scattered over scenes
            let mut beats: Vec<usize> = Vec::new();
            for (ci, _) in cast.iter().enumerate() {
                let count = rng.random_range(3..=7);
                beats.extend(std::iter::repeat_n(ci, count));
            }
            rand::seq::SliceRandom::shuffle(beats.as_mut_slice(), &mut rng);

            let mut text = String::new();
            for (scene, chunk) in beats.chunks(6).enumerate() {
                text.push_str(SETTINGS[(scene + k) % SETTINGS.len()]);
                text.push_str("\n\n");
                for pair in chunk.chunks(2) {
                    let lines: Vec<String> = pair
                        .iter()
                        .map(|&ci| {
                            let (_, subject, w) = &cast[ci];
                            let label = random_label(&mut rng, *w);
                            story_clause(&mut rng, subject, label)
                        })
                        .collect();
                    text.push_str(&lines.join(" "));
                    text.push_str("\n\n");
                    let (cue, _, _) = &cast[pair[0]];
                    text.push_str(cue);
                    if rng.random::<f64>() < 0.3 {
                        text.push_str(" (O.S.)");
                    }
                    text.push('\n');
                    if rng.random::<f64>() < 0.3 {
                        text.push_str("          (quietly)\n");
                    }
                    text.push_str("          ");
                    text.push_str(DIALOGUE.choose(&mut rng).expect("dialogue"));
                    text.push_str("\n\n");
                }
            }
            text.push_str("FADE OUT:\n");
            (format!("script_{:02}.txt", k + 1), text)
        })
        .collect()
}

/// Writes the complete fixture set into `dir`.
pub fn write_fixtures(dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("scripts"))?;
    std::fs::write(dir.join("lexicon.tsv"), lexicon_tsv())?;
    std::fs::write(dir.join("names.tsv"), names_tsv())?;
    std::fs::write(dir.join("gendered_words.tsv"), gendered_words_tsv())?;

    let story = stories(N_STORIES, STORY_SEED);
    let jsonl = |rows: Vec<serde_json::Value>| rows.into_iter().map(|r| format!("{r}\n")).collect::<String>();
    std::fs::write(
        dir.join("stories.jsonl"),
        jsonl(story.iter().map(|s| json!({ "text": s })).collect()),
    )?;
    std::fs::write(
        dir.join("stories_dev.jsonl"),
        jsonl(
            dev_prompts(N_DEV, DEV_SEED, &story)
                .into_iter()
                .map(|(s, t)| json!({ "text": s, "target": t }))
                .collect(),
        ),
    )?;
    std::fs::write(
        dir.join("paraphrases.jsonl"),
        jsonl(
            paraphrases(N_PARAPHRASES, PARA_SEED)
                .into_iter()
                .map(|(s, t)| json!({ "src": s, "tgt": t }))
                .collect(),
        ),
    )?;
    for (name, text) in scripts(N_SCRIPTS, SCRIPT_SEED) {
        std::fs::write(dir.join("scripts").join(name), text)?;
    }
    Ok(())
}

/// Every inflection the generator can emit, for vocabulary coverage checks.
pub fn all_verb_forms() -> Vec<String> {
    VERBS
        .iter()
        .flat_map(|(l, _, irr)| inflections(l, &irr.map(|p| vec![p.to_string()]).unwrap_or_default()))
        .collect()
}
