//! Rule-based English verb inflection.
//!
//! Produces the base form, third-person singular (`-s`), past (`-ed`) and
//! progressive (`-ing`) forms of a lemma. Consonant doubling applies to
//! monosyllabic consonant-vowel-consonant stems (`stop` -> `stopped`).

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn is_consonant(c: char) -> bool {
    c.is_ascii_alphabetic() && !is_vowel(c)
}

fn vowel_groups(word: &str) -> usize {
    let mut groups = 0;
    let mut prev_vowel = false;
    for c in word.chars() {
        let v = is_vowel(c) || c == 'y' && !prev_vowel && groups > 0;
        if v && !prev_vowel {
            groups += 1;
        }
        prev_vowel = v;
    }
    groups
}

/// True when the final consonant is doubled before `-ed` / `-ing`.
fn doubles_final(lemma: &str) -> bool {
    let chars: Vec<char> = lemma.chars().collect();
    let n = chars.len();
    if n < 3 {
        return false;
    }
    let (a, b, c) = (chars[n - 3], chars[n - 2], chars[n - 1]);
    is_consonant(a)
        && is_vowel(b)
        && is_consonant(c)
        && !matches!(c, 'w' | 'x' | 'y')
        && vowel_groups(lemma) == 1
}

fn ends_consonant_y(lemma: &str) -> bool {
    let mut rev = lemma.chars().rev();
    matches!((rev.next(), rev.next()), (Some('y'), Some(p)) if is_consonant(p))
}

pub fn third_person(lemma: &str) -> String {
    if ends_consonant_y(lemma) {
        format!("{}ies", &lemma[..lemma.len() - 1])
    } else if ["s", "x", "z", "ch", "sh", "o"]
        .iter()
        .any(|s| lemma.ends_with(s))
    {
        format!("{lemma}es")
    } else {
        format!("{lemma}s")
    }
}

pub fn past(lemma: &str) -> String {
    if lemma.ends_with('e') {
        format!("{lemma}d")
    } else if ends_consonant_y(lemma) {
        format!("{}ied", &lemma[..lemma.len() - 1])
    } else if doubles_final(lemma) {
        let last = lemma.chars().last().unwrap();
        format!("{lemma}{last}ed")
    } else {
        format!("{lemma}ed")
    }
}

pub fn progressive(lemma: &str) -> String {
    if let Some(stem) = lemma.strip_suffix("ie") {
        format!("{stem}ying")
    } else if lemma.ends_with('e') && !["ee", "ye", "oe"].iter().any(|s| lemma.ends_with(s)) && lemma.len() > 2
    {
        format!("{}ing", &lemma[..lemma.len() - 1])
    } else if doubles_final(lemma) {
        let last = lemma.chars().last().unwrap();
        format!("{lemma}{last}ing")
    } else {
        format!("{lemma}ing")
    }
}

/// All surface forms of `lemma`. When `irregular_past` is non-empty it
/// replaces the generated `-ed` form.
pub fn inflections(lemma: &str, irregular_past: &[String]) -> Vec<String> {
    let mut forms = vec![lemma.to_string(), third_person(lemma), progressive(lemma)];
    if irregular_past.is_empty() {
        forms.push(past(lemma));
    } else {
        forms.extend(irregular_past.iter().cloned());
    }
    forms.sort();
    forms.dedup();
    forms
}
