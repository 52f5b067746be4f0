//! Occupation, gendered-term, person-name and CPS resources.
//!
//! Bundled defaults live in `data/` and are compiled in; every loader accepts an
//! override file with the same layout.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::word_spans;
use crate::error::{Error, Result};

const BUNDLED_OCCUPATIONS: &str = include_str!("../data/occupations.csv");
const BUNDLED_GENDER_TERMS: &str = include_str!("../data/gender_terms.csv");
const BUNDLED_NAMES: &str = include_str!("../data/names.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEntry {
    pub name: String,
    pub plural: String,
    pub dominant_gender: Gender,
    #[serde(default)]
    pub cps_female_share: Option<f64>,
}

impl OccupationEntry {
    pub fn form(&self, form: MatchedForm) -> &str {
        match form {
            MatchedForm::Singular => &self.name,
            MatchedForm::Plural => &self.plural,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedForm {
    Singular,
    Plural,
}

/// One occurrence of an occupation in a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    /// Index into the lexicon's entries.
    pub entry: usize,
    pub form: MatchedForm,
    /// Byte range covering the whole (possibly multi-word) occurrence.
    pub bytes: std::ops::Range<usize>,
    /// Index of the first word of the occurrence.
    pub first_word: usize,
}

/// Validated occupation list with a word-boundary matcher.
#[derive(Debug, Clone)]
pub struct OccupationLexicon {
    entries: Vec<OccupationEntry>,
    by_name: HashMap<String, usize>,
    // first word -> (entry, form, all words of the form)
    forms: HashMap<String, Vec<(usize, MatchedForm, Vec<String>)>>,
}

impl OccupationLexicon {
    pub fn new(entries: Vec<OccupationEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLexicon("occupation lexicon is empty".into()));
        }
        let mut by_name = HashMap::new();
        let mut seen_forms = HashSet::new();
        let mut forms: HashMap<String, Vec<(usize, MatchedForm, Vec<String>)>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            for s in [&e.name, &e.plural] {
                if s.trim().is_empty() || *s != s.to_lowercase() || s.trim() != s {
                    return Err(Error::InvalidLexicon(format!(
                        "occupation form '{s}' must be non-empty, trimmed and lowercase"
                    )));
                }
            }
            if e.name == e.plural {
                return Err(Error::InvalidLexicon(format!(
                    "occupation '{}' has identical singular and plural",
                    e.name
                )));
            }
            if let Some(share) = e.cps_female_share {
                if !(0.0..=1.0).contains(&share) {
                    return Err(Error::BadShare {
                        occupation: e.name.clone(),
                        value: share,
                    });
                }
            }
            for (form, text) in [(MatchedForm::Singular, &e.name), (MatchedForm::Plural, &e.plural)] {
                if !seen_forms.insert(text.clone()) {
                    return Err(Error::InvalidLexicon(format!(
                        "occupation form '{text}' listed twice"
                    )));
                }
                let words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                forms
                    .entry(words[0].clone())
                    .or_default()
                    .push((i, form, words));
            }
            by_name.insert(e.name.clone(), i);
        }
        // Longest form first so "construction workers" wins over a shorter prefix.
        for list in forms.values_mut() {
            list.sort_by_key(|c| std::cmp::Reverse(c.2.len()));
        }
        Ok(Self {
            entries,
            by_name,
            forms,
        })
    }

    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_OCCUPATIONS).expect("bundled occupation lexicon is valid")
    }

    pub fn from_csv_str(content: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(content.as_bytes());
        let mut entries = Vec::new();
        for row in rdr.deserialize::<OccupationEntry>() {
            entries.push(row?);
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[OccupationEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&OccupationEntry> {
        self.index_of(name).map(|i| &self.entries[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    /// All occupation occurrences in `text`, case-insensitive and on word
    /// boundaries, scanning left to right with longest match first.
    pub fn mentions(&self, text: &str) -> Vec<Mention> {
        let spans = word_spans(text);
        let words: Vec<String> = spans.iter().map(|r| text[r.clone()].to_lowercase()).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let first = strip_possessive(&words[i]).0;
            let hit = self.forms.get(first).and_then(|cands| {
                cands.iter().find_map(|(entry, form, form_words)| {
                    match_form_at(form_words, &words, i).map(|suffix| (entry, form, form_words.len(), suffix))
                })
            });
            match hit {
                Some((entry, form, n, suffix)) => {
                    let last = i + n - 1;
                    out.push(Mention {
                        entry: *entry,
                        form: *form,
                        bytes: spans[i].start..spans[last].end - suffix,
                        first_word: i,
                    });
                    i = last + 1;
                }
                None => i += 1,
            }
        }
        out
    }

    pub fn dominance_counts(&self) -> (usize, usize) {
        let male = self
            .entries
            .iter()
            .filter(|e| e.dominant_gender == Gender::Male)
            .count();
        (male, self.entries.len() - male)
    }
}

/// Matches the lowercased `form_words` against `words` starting at `i`. The
/// last word may carry a possessive "'s"; returns that suffix's byte length.
pub(crate) fn match_form_at<S: AsRef<str>>(form_words: &[S], words: &[String], i: usize) -> Option<usize> {
    let n = form_words.len();
    if n == 0 || i + n > words.len() {
        return None;
    }
    let inner_ok = form_words[..n - 1].iter().zip(&words[i..]).all(|(a, b)| a.as_ref() == b);
    let (last_word, suffix) = strip_possessive(&words[i + n - 1]);
    (inner_ok && form_words[n - 1].as_ref() == last_word).then_some(suffix)
}

/// Splits a possessive "'s" off a lowercased word; returns the stem and the
/// suffix length in bytes.
fn strip_possessive(word: &str) -> (&str, usize) {
    for suffix in ["'s", "\u{2019}s"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if !stem.is_empty() {
                return (stem, suffix.len());
            }
        }
    }
    (word, 0)
}

/// Bidirectional dictionary of gendered terms. Terms without a unique opposite
/// (e.g. "him", whose natural partner "her" is already paired with "his") are
/// kept as stop-only terms: they cause premise rejection but are never swapped.
#[derive(Debug, Clone, Default)]
pub struct GenderTermDictionary {
    pairs: Vec<(String, String)>,
    opposite: HashMap<String, String>,
    stop_only: BTreeSet<String>,
}

impl GenderTermDictionary {
    pub fn new(pairs: Vec<(String, String)>, stop_only: Vec<String>) -> Result<Self> {
        let mut opposite = HashMap::new();
        let mut seen = HashSet::new();
        let check = |t: &str| -> Result<()> {
            if t.is_empty() || t != t.to_lowercase() || t.chars().any(|c| !c.is_alphanumeric()) {
                return Err(Error::InvalidLexicon(format!(
                    "gendered term '{t}' must be a single lowercase word"
                )));
            }
            Ok(())
        };
        for (m, f) in &pairs {
            check(m)?;
            check(f)?;
            for t in [m, f] {
                if !seen.insert(t.clone()) {
                    return Err(Error::DuplicateTerm(t.clone()));
                }
            }
            opposite.insert(m.clone(), f.clone());
            opposite.insert(f.clone(), m.clone());
        }
        let mut stop = BTreeSet::new();
        for t in stop_only {
            check(&t)?;
            if !seen.insert(t.clone()) {
                return Err(Error::DuplicateTerm(t));
            }
            stop.insert(t);
        }
        Ok(Self {
            pairs,
            opposite,
            stop_only: stop,
        })
    }

    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_GENDER_TERMS).expect("bundled gender dictionary is valid")
    }

    /// Reads `male_term,female_term` rows. A row with one side empty registers a
    /// stop-only term.
    pub fn from_csv_str(content: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(content.as_bytes());
        let mut pairs = Vec::new();
        let mut stop = Vec::new();
        for row in rdr.records() {
            let row = row?;
            let m = row.get(0).unwrap_or("").to_string();
            let f = row.get(1).unwrap_or("").to_string();
            match (m.is_empty(), f.is_empty()) {
                (false, false) => pairs.push((m, f)),
                (false, true) => stop.push(m),
                (true, false) => stop.push(f),
                (true, true) => {}
            }
        }
        Self::new(pairs, stop)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn stop_only(&self) -> impl Iterator<Item = &str> {
        self.stop_only.iter().map(String::as_str)
    }

    /// Opposite of a lowercase term, if it is a swappable dictionary term.
    pub fn opposite(&self, term: &str) -> Option<&str> {
        self.opposite.get(term).map(String::as_str)
    }

    /// Whether a lowercase word is gendered (swappable or stop-only).
    pub fn contains(&self, term: &str) -> bool {
        self.opposite.contains_key(term) || self.stop_only.contains(term)
    }
}

#[derive(Debug, Clone)]
pub struct NameGazetteer {
    names: HashSet<String>,
    pub source: String,
}

impl NameGazetteer {
    pub fn new(names: impl IntoIterator<Item = String>, source: impl Into<String>) -> Self {
        Self {
            names: names
                .into_iter()
                .map(|n| n.trim().to_lowercase())
                .filter(|n| !n.is_empty())
                .collect(),
            source: source.into(),
        }
    }

    pub fn bundled() -> Self {
        Self::from_lines(BUNDLED_NAMES, "bundled")
    }

    pub fn from_lines(content: &str, source: impl Into<String>) -> Self {
        Self::new(content.lines().map(str::to_string), source)
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), "none")
    }

    pub fn contains(&self, lowercase_name: &str) -> bool {
        self.names.contains(lowercase_name)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CpsTable {
    pub rows: BTreeMap<String, f64>,
}

impl CpsTable {
    pub fn from_lexicon(lex: &OccupationLexicon) -> Self {
        Self {
            rows: lex
                .entries()
                .iter()
                .filter_map(|e| e.cps_female_share.map(|s| (e.name.clone(), s)))
                .collect(),
        }
    }

    /// Reads `occupation,female_share` rows (header required).
    pub fn from_csv_str(content: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(content.as_bytes());
        let mut rows = BTreeMap::new();
        for row in rdr.records() {
            let row = row?;
            let name = row.get(0).unwrap_or("").to_lowercase();
            let raw = row.get(1).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| {
                Error::InvalidLexicon(format!("CPS share for '{name}' is not a number: '{raw}'"))
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::BadShare {
                    occupation: name,
                    value,
                });
            }
            rows.insert(name, value);
        }
        Ok(Self { rows })
    }

    pub fn get(&self, occupation: &str) -> Option<f64> {
        self.rows.get(occupation).copied()
    }

    /// Dominance gap `|2·share − 1|`: 0 for an even split, 1 for a single-gender job.
    /// Rounded to 12 decimals so mirrored shares (0.41 and 0.59) compare equal.
    pub fn gap(&self, occupation: &str) -> Option<f64> {
        self.get(occupation)
            .map(|s| ((2.0 * s - 1.0).abs() * 1e12).round() / 1e12)
    }
}

/// Optional override files; `None` selects the bundled default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LexiconPaths {
    pub occupations: Option<PathBuf>,
    pub gender_terms: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub cps: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Lexicons {
    pub occupations: OccupationLexicon,
    pub gender_terms: GenderTermDictionary,
    pub names: NameGazetteer,
    pub cps: CpsTable,
}

impl Lexicons {
    pub fn bundled() -> Self {
        let occupations = OccupationLexicon::bundled();
        let cps = CpsTable::from_lexicon(&occupations);
        Self {
            occupations,
            gender_terms: GenderTermDictionary::bundled(),
            names: NameGazetteer::bundled(),
            cps,
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_lexicons(paths: &LexiconPaths) -> Result<Lexicons> {
    let occupations = match &paths.occupations {
        Some(p) => OccupationLexicon::from_csv_str(&read(p)?)?,
        None => OccupationLexicon::bundled(),
    };
    let gender_terms = match &paths.gender_terms {
        Some(p) => GenderTermDictionary::from_csv_str(&read(p)?)?,
        None => GenderTermDictionary::bundled(),
    };
    let names = match &paths.names {
        Some(p) => NameGazetteer::from_lines(&read(p)?, p.display().to_string()),
        None => NameGazetteer::bundled(),
    };
    let cps = match &paths.cps {
        Some(p) => CpsTable::from_csv_str(&read(p)?)?,
        None => CpsTable::from_lexicon(&occupations),
    };
    Ok(Lexicons {
        occupations,
        gender_terms,
        names,
        cps,
    })
}

/// Content fingerprint of the lexicon files in effect, for config hashes.
pub fn lexicon_fingerprint(paths: &LexiconPaths) -> Result<String> {
    let part = |p: &Option<PathBuf>, bundled: &str| -> Result<String> {
        Ok(match p {
            Some(p) => crate::hashing::bytes_hash(read(p)?.as_bytes()),
            None => crate::hashing::bytes_hash(bundled.as_bytes()),
        })
    };
    let cps = match &paths.cps {
        Some(p) => crate::hashing::bytes_hash(read(p)?.as_bytes()),
        None => "from-occupations".to_string(),
    };
    let joined = [
        part(&paths.occupations, BUNDLED_OCCUPATIONS)?,
        part(&paths.gender_terms, BUNDLED_GENDER_TERMS)?,
        part(&paths.names, BUNDLED_NAMES)?,
        cps,
    ]
    .join(":");
    Ok(crate::hashing::text_hash(&joined))
}
