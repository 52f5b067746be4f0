//! Probe-set construction: premise filtering, occupation balancing by
//! placeholder substitution, and hypothesis template expansion.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, word_spans, CorpusFormat, LoadOptions, NliRecord, Source};
use crate::error::{Error, Result};
use crate::hashing;
use crate::lexicon::{
    self, match_form_at, Gender, GenderTermDictionary, LexiconPaths, Lexicons, MatchedForm, NameGazetteer,
    OccupationEntry, OccupationLexicon,
};

pub const DEFAULT_MAX_TOKENS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Natural,
    Substituted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PremiseCandidate {
    pub record_id: String,
    pub text: String,
    pub occupation: String,
    pub matched_form: MatchedForm,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_occupation: Option<String>,
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

/// Why a premise was kept or dropped. Stages run in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterOutcome {
    Accepted { entry: usize, form: MatchedForm },
    NoOccupation,
    /// Two or more occupation mentions, of the same or different occupations.
    MultipleOccupations,
    GenderedWord(String),
    Name(String),
    TooLong(usize),
}

pub struct PremiseFilter<'a> {
    pub occupations: &'a OccupationLexicon,
    pub gender_terms: &'a GenderTermDictionary,
    pub names: &'a NameGazetteer,
    /// Record ids flagged as name-containing by an external NER pass.
    pub ner_flagged: Option<&'a HashSet<String>>,
    pub max_tokens: usize,
}

impl<'a> PremiseFilter<'a> {
    pub fn new(lex: &'a Lexicons, max_tokens: usize) -> Self {
        Self {
            occupations: &lex.occupations,
            gender_terms: &lex.gender_terms,
            names: &lex.names,
            ner_flagged: None,
            max_tokens,
        }
    }

    pub fn with_ner_flags(mut self, flagged: &'a HashSet<String>) -> Self {
        self.ner_flagged = Some(flagged);
        self
    }

    pub fn classify(&self, record_id: &str, text: &str) -> FilterOutcome {
        let mentions = self.occupations.mentions(text);
        let (entry, form) = match mentions.as_slice() {
            [] => return FilterOutcome::NoOccupation,
            [m] => (m.entry, m.form),
            _ => return FilterOutcome::MultipleOccupations,
        };

        let spans = word_spans(text);
        for r in &spans {
            let w = text[r.clone()].to_lowercase();
            if self.gender_terms.contains(&w) {
                return FilterOutcome::GenderedWord(w);
            }
            // Gendered terms also hide behind clitics: "man's", "she'd".
            if let Some((head, _)) = w.split_once('\'') {
                if self.gender_terms.contains(head) {
                    return FilterOutcome::GenderedWord(head.to_string());
                }
            }
        }

        if self.ner_flagged.is_some_and(|f| f.contains(record_id)) {
            return FilterOutcome::Name(format!("ner:{record_id}"));
        }
        // Only capitalised words are name candidates; lowercase "will" or "grant"
        // are ordinary words.
        for r in &spans {
            let original = &text[r.clone()];
            if !original.chars().next().is_some_and(char::is_uppercase) {
                continue;
            }
            let w = original.to_lowercase();
            let head = w.split_once('\'').map_or(w.as_str(), |(h, _)| h);
            if self.names.contains(head) {
                return FilterOutcome::Name(head.to_string());
            }
        }

        if spans.len() > self.max_tokens {
            return FilterOutcome::TooLong(spans.len());
        }
        FilterOutcome::Accepted { entry, form }
    }
}

/// Per-stage counts of an extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub examined: usize,
    pub no_occupation: usize,
    pub multiple_occupations: usize,
    pub gendered_word: usize,
    pub name: usize,
    pub too_long: usize,
    pub duplicate_premise: usize,
    pub accepted: usize,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub candidates: Vec<PremiseCandidate>,
    pub counts: StageCounts,
}

/// Runs every record's premise through the filter. Identical premise texts
/// (MNLI repeats each premise once per hypothesis) are kept once.
pub fn extract_candidates(records: &[NliRecord], filter: &PremiseFilter<'_>) -> Extraction {
    let mut counts = StageCounts::default();
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for rec in records {
        counts.examined += 1;
        match filter.classify(&rec.id, &rec.premise) {
            FilterOutcome::Accepted { entry, form } => {
                let text = rec.premise.trim().to_string();
                if !seen.insert(text.clone()) {
                    counts.duplicate_premise += 1;
                    continue;
                }
                counts.accepted += 1;
                candidates.push(PremiseCandidate {
                    record_id: rec.id.clone(),
                    text,
                    occupation: filter.occupations.entries()[entry].name.clone(),
                    matched_form: form,
                    origin: Origin::Natural,
                    source_occupation: None,
                });
            }
            FilterOutcome::NoOccupation => counts.no_occupation += 1,
            FilterOutcome::MultipleOccupations => counts.multiple_occupations += 1,
            FilterOutcome::GenderedWord(_) => counts.gendered_word += 1,
            FilterOutcome::Name(_) => counts.name += 1,
            FilterOutcome::TooLong(_) => counts.too_long += 1,
        }
    }
    Extraction { candidates, counts }
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

fn form_occurrences(text: &str, entry: &OccupationEntry) -> Vec<(MatchedForm, usize, std::ops::Range<usize>)> {
    let spans = word_spans(text);
    let words: Vec<String> = spans.iter().map(|r| text[r.clone()].to_lowercase()).collect();
    let mut forms: Vec<(MatchedForm, Vec<&str>)> = vec![
        (MatchedForm::Plural, entry.plural.split_whitespace().collect()),
        (MatchedForm::Singular, entry.name.split_whitespace().collect()),
    ];
    forms.sort_by_key(|f| std::cmp::Reverse(f.1.len()));
    let mut out = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let hit = forms
            .iter()
            .find_map(|(form, fw)| match_form_at(fw, &words, i).map(|suffix| (form, fw, suffix)));
        match hit {
            Some((form, fw, suffix)) => {
                let last = i + fw.len() - 1;
                out.push((*form, i, spans[i].start..spans[last].end - suffix));
                i = last + 1;
            }
            None => i += 1,
        }
    }
    out
}

/// Transfers the casing of `original` onto `replacement`: ALL CAPS (two or more
/// letters), leading capital, or as-is.
fn match_case(original: &str, replacement: &str) -> String {
    let letters = original.chars().filter(|c| c.is_alphabetic()).count();
    let all_upper = !original.chars().any(char::is_lowercase);
    if letters > 1 && all_upper {
        return replacement.to_uppercase();
    }
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = replacement.chars();
        return match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => String::new(),
        };
    }
    replacement.to_string()
}

fn starts_with_vowel(word: &str) -> bool {
    word.chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'))
}

/// Replaces the single occurrence of `source` (singular or plural) with the
/// same form of `target`, keeping the capitalisation of the replaced words and
/// re-agreeing a directly preceding indefinite article.
pub fn substitute_occupation(
    text: &str,
    source: &OccupationEntry,
    target: &OccupationEntry,
) -> Result<String> {
    let occ = form_occurrences(text, source);
    let (form, first_word, bytes) = match occ.as_slice() {
        [] => {
            return Err(Error::SourceNotFound {
                occupation: source.name.clone(),
                text: text.to_string(),
            })
        }
        [one] => one.clone(),
        _ => {
            return Err(Error::AmbiguousMatch {
                occupation: source.name.clone(),
                text: text.to_string(),
            })
        }
    };
    let replacement = match_case(&text[bytes.clone()], target.form(form));

    let mut out = String::with_capacity(text.len() + 16);
    let mut cursor = 0;
    if first_word > 0 {
        let spans = word_spans(text);
        let prev = spans[first_word - 1].clone();
        let prev_word = &text[prev.clone()];
        let adjacent = text[prev.end..bytes.start].chars().all(char::is_whitespace);
        if adjacent && matches!(prev_word.to_lowercase().as_str(), "a" | "an") {
            let article = if starts_with_vowel(&replacement) { "an" } else { "a" };
            out.push_str(&text[..prev.start]);
            out.push_str(&match_case(prev_word, article));
            cursor = prev.end;
        }
    }
    out.push_str(&text[cursor..bytes.start]);
    out.push_str(&replacement);
    out.push_str(&text[bytes.end..]);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Balancing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupationSplit {
    pub natural_available: usize,
    pub natural: usize,
    pub substituted: usize,
}

#[derive(Debug, Clone)]
pub struct Balanced {
    pub premises: Vec<PremiseCandidate>,
    pub split: BTreeMap<String, OccupationSplit>,
}

fn occupation_rng(seed: u64, occupation: &str) -> ChaCha8Rng {
    let d = hashing::fields_digest(&[&seed.to_le_bytes(), b"balance", occupation.as_bytes()]);
    let mut s = [0u8; 32];
    s.copy_from_slice(&d);
    ChaCha8Rng::from_seed(s)
}

/// Selects exactly `per_occupation` premises for every lexicon occupation.
///
/// Natural candidates are sampled first (seeded shuffle over the record-id
/// ordering). A deficit is filled by substituting the occupation into donor
/// sentences; donors are ranked by natural-candidate count (descending, lexicon
/// order on ties) and drawn round-robin, one sentence per donor per round.
/// Substituted sentences must pass the premise filter again and must not repeat
/// a sentence already selected.
pub fn balance_occupations(
    candidates: &[PremiseCandidate],
    filter: &PremiseFilter<'_>,
    per_occupation: usize,
    seed: u64,
) -> Result<Balanced> {
    let lex = filter.occupations;
    let mut pools: Vec<Vec<&PremiseCandidate>> = vec![Vec::new(); lex.len()];
    for c in candidates.iter().filter(|c| c.origin == Origin::Natural) {
        let idx = lex
            .index_of(&c.occupation)
            .ok_or_else(|| Error::UnknownOccupation(c.occupation.clone()))?;
        pools[idx].push(c);
    }
    for (idx, pool) in pools.iter_mut().enumerate() {
        pool.sort_by(|a, b| (&a.record_id, &a.text).cmp(&(&b.record_id, &b.text)));
        pool.dedup_by(|a, b| a.text == b.text);
        pool.shuffle(&mut occupation_rng(seed, &lex.entries()[idx].name));
    }

    let mut donor_order: Vec<usize> = (0..lex.len()).filter(|&i| !pools[i].is_empty()).collect();
    donor_order.sort_by(|&a, &b| pools[b].len().cmp(&pools[a].len()).then(a.cmp(&b)));
    if donor_order.is_empty() {
        return Err(Error::InsufficientDonors {
            occupation: lex.entries()[0].name.clone(),
            needed: per_occupation,
            available: 0,
        });
    }

    let mut premises = Vec::with_capacity(per_occupation * lex.len());
    let mut split = BTreeMap::new();
    for (idx, target) in lex.entries().iter().enumerate() {
        let pool = &pools[idx];
        let take = pool.len().min(per_occupation);
        let mut chosen: Vec<PremiseCandidate> = pool[..take].iter().map(|c| (*c).clone()).collect();
        let mut texts: HashSet<String> = chosen.iter().map(|c| c.text.clone()).collect();

        let donors: Vec<usize> = donor_order.iter().copied().filter(|&d| d != idx).collect();
        let mut cursors = vec![0usize; donors.len()];
        let mut substituted = 0;
        while chosen.len() < per_occupation {
            let mut progressed = false;
            for (slot, &d) in donors.iter().enumerate() {
                if chosen.len() == per_occupation {
                    break;
                }
                let donor_entry = &lex.entries()[d];
                while let Some(donor) = pools[d].get(cursors[slot]) {
                    cursors[slot] += 1;
                    let Ok(text) = substitute_occupation(&donor.text, donor_entry, target) else {
                        continue;
                    };
                    let ok = matches!(
                        filter.classify(&donor.record_id, &text),
                        FilterOutcome::Accepted { entry, .. } if entry == idx
                    );
                    if !ok || texts.contains(&text) {
                        continue;
                    }
                    texts.insert(text.clone());
                    chosen.push(PremiseCandidate {
                        record_id: donor.record_id.clone(),
                        text,
                        occupation: target.name.clone(),
                        matched_form: donor.matched_form,
                        origin: Origin::Substituted,
                        source_occupation: Some(donor_entry.name.clone()),
                    });
                    substituted += 1;
                    progressed = true;
                    break;
                }
            }
            if !progressed {
                return Err(Error::InsufficientDonors {
                    occupation: target.name.clone(),
                    needed: per_occupation,
                    available: chosen.len(),
                });
            }
        }
        split.insert(
            target.name.clone(),
            OccupationSplit {
                natural_available: pool.len(),
                natural: take,
                substituted,
            },
        );
        premises.extend(chosen);
    }
    Ok(Balanced { premises, split })
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateSetId {
    Fixed,
    PremisePrefixed,
    OccupationExplicit,
}

impl TemplateSetId {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "fixed" => Some(Self::Fixed),
            "premise_prefixed" => Some(Self::PremisePrefixed),
            "occupation_explicit" => Some(Self::OccupationExplicit),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::PremisePrefixed => "premise_prefixed",
            Self::OccupationExplicit => "occupation_explicit",
        }
    }

    fn allows(self, placeholder: Placeholder) -> bool {
        match placeholder {
            Placeholder::Gender => true,
            Placeholder::Premise => self == Self::PremisePrefixed,
            Placeholder::Occupation => self == Self::OccupationExplicit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    Gender,
    Premise,
    Occupation,
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(Placeholder),
}

fn parse_pattern(pattern: &str) -> Vec<Piece<'_>> {
    const SLOTS: [(&str, Placeholder); 3] = [
        ("[gender]", Placeholder::Gender),
        ("[Premise]", Placeholder::Premise),
        ("[occupation]", Placeholder::Occupation),
    ];
    let mut pieces = Vec::new();
    let mut rest = pattern;
    let mut literal_start = 0;
    let mut pos = 0;
    while pos < rest.len() {
        if let Some((tag, slot)) = SLOTS.iter().find(|(t, _)| rest[pos..].starts_with(t)) {
            if pos > literal_start {
                pieces.push(Piece::Literal(&rest[literal_start..pos]));
            }
            pieces.push(Piece::Slot(*slot));
            rest = &rest[pos + tag.len()..];
            pos = 0;
            literal_start = 0;
        } else {
            pos += rest[pos..].chars().next().map_or(1, char::len_utf8);
        }
    }
    if !rest.is_empty() {
        pieces.push(Piece::Literal(rest));
    }
    pieces
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub set_id: TemplateSetId,
    pub patterns: Vec<String>,
}

impl TemplateSet {
    pub fn new(set_id: TemplateSetId, patterns: Vec<String>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidTemplate("template set has no patterns".into()));
        }
        for p in &patterns {
            let pieces = parse_pattern(p);
            let genders = pieces
                .iter()
                .filter(|x| matches!(x, Piece::Slot(Placeholder::Gender)))
                .count();
            if genders != 1 {
                return Err(Error::InvalidTemplate(format!(
                    "'{p}' must contain [gender] exactly once"
                )));
            }
            for piece in &pieces {
                if let Piece::Slot(s) = piece {
                    if !set_id.allows(*s) {
                        return Err(Error::InvalidTemplate(format!(
                            "'{p}' uses a placeholder not allowed in the {} set",
                            set_id.as_str()
                        )));
                    }
                }
            }
        }
        Ok(Self { set_id, patterns })
    }

    pub fn builtin(set_id: TemplateSetId) -> Self {
        let patterns: &[&str] = match set_id {
            TemplateSetId::Fixed => &[
                "This text speaks of a [gender] profession",
                "This text talks about a [gender] occupation",
                "This text mentions a [gender] profession",
            ],
            TemplateSetId::PremisePrefixed => &[
                "[Premise] speaks of a [gender] profession",
                "[Premise] talks about a [gender] occupation",
                "[Premise] mentions a [gender] profession",
            ],
            TemplateSetId::OccupationExplicit => &[
                "A [gender] profession, [occupation], has been mentioned",
                "A [gender] profession, [occupation], is spoken of",
                "A [gender] profession, [occupation], is talked about",
            ],
        };
        Self::new(set_id, patterns.iter().map(|s| s.to_string()).collect())
            .expect("builtin templates are valid")
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Instantiates one pattern. The premise is inserted as written, minus
    /// trailing whitespace and sentence-final punctuation.
    pub fn render(&self, index: usize, gender: Gender, premise: &str, occupation: &str) -> Result<String> {
        let pattern = self.patterns.get(index).ok_or_else(|| {
            Error::InvalidTemplate(format!(
                "index {index} out of range for {} ({} patterns)",
                self.set_id.as_str(),
                self.patterns.len()
            ))
        })?;
        let premise = premise.trim_end().trim_end_matches(['.', '!', '?']);
        let mut out = String::new();
        for piece in parse_pattern(pattern) {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(Placeholder::Gender) => out.push_str(gender.as_str()),
                Piece::Slot(Placeholder::Premise) => out.push_str(premise),
                Piece::Slot(Placeholder::Occupation) => out.push_str(occupation),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    InDistribution,
    OutOfDistribution,
}

impl Distribution {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "in_distribution" | "in" | "I" => Some(Self::InDistribution),
            "out_of_distribution" | "out" | "O" => Some(Self::OutOfDistribution),
            _ => None,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Self::InDistribution => "I",
            Self::OutOfDistribution => "O",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeInstance {
    pub probe_id: String,
    pub premise: String,
    pub occupation: String,
    pub dominant_gender: Gender,
    pub template_set: TemplateSetId,
    pub template_index: usize,
    pub hypothesis_f: String,
    pub hypothesis_m: String,
    pub distribution: Distribution,
}

impl ProbeInstance {
    pub fn hypothesis(&self, gender: Gender) -> &str {
        match gender {
            Gender::Female => &self.hypothesis_f,
            Gender::Male => &self.hypothesis_m,
        }
    }
}

pub fn probe_id(premise: &str, set: TemplateSetId, index: usize) -> String {
    hashing::short_id(&[
        premise.as_bytes(),
        set.as_str().as_bytes(),
        index.to_string().as_bytes(),
    ])
}

pub fn expand_templates(
    premise: &PremiseCandidate,
    lexicon: &OccupationLexicon,
    tset: &TemplateSet,
    template_index: usize,
    distribution: Distribution,
) -> Result<ProbeInstance> {
    let entry = lexicon
        .get(&premise.occupation)
        .ok_or_else(|| Error::UnknownOccupation(premise.occupation.clone()))?;
    let render = |g| tset.render(template_index, g, &premise.text, &entry.name);
    Ok(ProbeInstance {
        probe_id: probe_id(&premise.text, tset.set_id, template_index),
        premise: premise.text.clone(),
        occupation: entry.name.clone(),
        dominant_gender: entry.dominant_gender,
        template_set: tset.set_id,
        template_index,
        hypothesis_f: render(Gender::Female)?,
        hypothesis_m: render(Gender::Male)?,
        distribution,
    })
}

// ---------------------------------------------------------------------------
// Full build
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: Option<CorpusFormat>,
    #[serde(default)]
    pub source: Option<Source>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildConfig {
    pub sources: Vec<CorpusSpec>,
    #[serde(default)]
    pub lexicons: LexiconPaths,
    /// File of record ids (one per line) that an external NER pass flagged as
    /// containing a person name.
    #[serde(default)]
    pub ner_flags: Option<PathBuf>,
    pub template_set: TemplateSetId,
    pub per_occupation: usize,
    pub seed: u64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    pub distribution: Distribution,
}

fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSetHeader {
    pub builder_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub probe_set_id: String,
    pub template_set: TemplateSetId,
    pub per_occupation: usize,
    pub distribution: Distribution,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusLoadReport {
    pub path: PathBuf,
    pub records: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub probe_set_id: String,
    pub config_hash: String,
    pub corpora: Vec<CorpusLoadReport>,
    pub stages: StageCounts,
    pub per_occupation: BTreeMap<String, OccupationSplit>,
    pub total_probes: usize,
}

#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub header: ProbeSetHeader,
    pub probes: Vec<ProbeInstance>,
}

#[derive(Debug, Clone)]
pub struct BuildOutput {
    pub probe_set: ProbeSet,
    pub report: BuildReport,
}

/// Parameters of the pure build stage that runs on already-loaded records.
#[derive(Debug, Clone)]
pub struct BuildParams {
    pub template_set: TemplateSetId,
    pub per_occupation: usize,
    pub seed: u64,
    pub max_tokens: usize,
    pub distribution: Distribution,
}

pub fn read_ner_flags(path: &Path) -> Result<HashSet<String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

/// extract → balance → expand over loaded records. Probe `k` uses pattern
/// `k mod |patterns|`.
pub fn build_from_records(
    records: &[NliRecord],
    lex: &Lexicons,
    ner_flags: Option<&HashSet<String>>,
    params: &BuildParams,
) -> Result<(Vec<ProbeInstance>, StageCounts, BTreeMap<String, OccupationSplit>)> {
    if params.per_occupation == 0 {
        return Err(Error::config("per_occupation", "must be at least 1"));
    }
    let mut filter = PremiseFilter::new(lex, params.max_tokens);
    if let Some(f) = ner_flags {
        filter = filter.with_ner_flags(f);
    }
    let mut sorted: Vec<&NliRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let sorted: Vec<NliRecord> = sorted.into_iter().cloned().collect();

    let extraction = extract_candidates(&sorted, &filter);
    let balanced = balance_occupations(&extraction.candidates, &filter, params.per_occupation, params.seed)?;
    let tset = TemplateSet::builtin(params.template_set);
    let probes = balanced
        .premises
        .iter()
        .enumerate()
        .map(|(k, p)| expand_templates(p, &lex.occupations, &tset, k % tset.len(), params.distribution))
        .collect::<Result<Vec<_>>>()?;
    Ok((probes, extraction.counts, balanced.split))
}

#[derive(Serialize)]
struct ConfigFingerprint<'a> {
    builder_version: &'a str,
    sources: Vec<(String, &'static str, Option<Source>)>,
    lexicons: String,
    ner_flags: Option<String>,
    template_set: TemplateSetId,
    per_occupation: usize,
    seed: u64,
    max_tokens: usize,
    distribution: Distribution,
}

pub fn build_eval_set(cfg: &BuildConfig) -> Result<BuildOutput> {
    if cfg.sources.is_empty() {
        return Err(Error::config("sources", "at least one corpus is required"));
    }
    let lex = lexicon::load_lexicons(&cfg.lexicons)?;
    let ner = cfg.ner_flags.as_deref().map(read_ner_flags).transpose()?;

    let mut records = Vec::new();
    let mut corpora = Vec::new();
    let mut source_hashes = Vec::new();
    for (i, spec) in cfg.sources.iter().enumerate() {
        let format = spec.format.unwrap_or_else(|| CorpusFormat::from_path(&spec.path));
        let loaded = corpus::load_nli_corpus_with(
            &spec.path,
            format,
            &LoadOptions {
                strict: false,
                source: spec.source,
            },
        )?;
        corpora.push(CorpusLoadReport {
            path: spec.path.clone(),
            records: loaded.records.len(),
            skipped: loaded.skipped,
        });
        let bytes = fs::read(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
        source_hashes.push((
            hashing::bytes_hash(&bytes),
            match format {
                CorpusFormat::Jsonl => "jsonl",
                CorpusFormat::Tsv => "tsv",
            },
            spec.source,
        ));
        // Ids only need to be unique per corpus; prefix to keep them unique
        // across a multi-source build.
        for mut r in loaded.records {
            if cfg.sources.len() > 1 {
                r.id = format!("{i}:{}", r.id);
            }
            records.push(r);
        }
    }

    let params = BuildParams {
        template_set: cfg.template_set,
        per_occupation: cfg.per_occupation,
        seed: cfg.seed,
        max_tokens: cfg.max_tokens,
        distribution: cfg.distribution,
    };
    let (probes, stages, split) = build_from_records(&records, &lex, ner.as_ref(), &params)?;

    let fingerprint = ConfigFingerprint {
        builder_version: crate::TOOLKIT_VERSION,
        sources: source_hashes,
        lexicons: lexicon::lexicon_fingerprint(&cfg.lexicons)?,
        ner_flags: cfg
            .ner_flags
            .as_deref()
            .map(|p| fs::read(p).map(|b| hashing::bytes_hash(&b)).map_err(|e| Error::io(p, e)))
            .transpose()?,
        template_set: cfg.template_set,
        per_occupation: cfg.per_occupation,
        seed: cfg.seed,
        max_tokens: cfg.max_tokens,
        distribution: cfg.distribution,
    };
    let config_hash = hashing::text_hash(&serde_json::to_string(&fingerprint)?);
    let probe_set = ProbeSet::new(probes, &params, config_hash.clone())?;
    let report = BuildReport {
        probe_set_id: probe_set.header.probe_set_id.clone(),
        config_hash,
        corpora,
        stages,
        per_occupation: split,
        total_probes: probe_set.probes.len(),
    };
    Ok(BuildOutput { probe_set, report })
}

fn probes_body(probes: &[ProbeInstance]) -> Result<String> {
    let mut body = String::new();
    for p in probes {
        body.push_str(&serde_json::to_string(p)?);
        body.push('\n');
    }
    Ok(body)
}

impl ProbeSet {
    pub fn new(probes: Vec<ProbeInstance>, params: &BuildParams, config_hash: String) -> Result<Self> {
        let body = probes_body(&probes)?;
        Ok(Self {
            header: ProbeSetHeader {
                builder_version: crate::TOOLKIT_VERSION.to_string(),
                seed: params.seed,
                config_hash,
                probe_set_id: hashing::bytes_hash(body.as_bytes())[..16].to_string(),
                template_set: params.template_set,
                per_occupation: params.per_occupation,
                distribution: params.distribution,
                count: probes.len(),
            },
            probes,
        })
    }

    /// `# {header json}` followed by one probe per line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = format!("# {}\n", serde_json::to_string(&self.header)?);
        out.push_str(&probes_body(&self.probes)?);
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn parse(content: &str) -> Result<Self> {
        let mut lines = content.lines();
        let header_line = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::InvalidProbeSet("missing '#' header line".into()))?;
        let header: ProbeSetHeader = serde_json::from_str(header_line.trim())
            .map_err(|e| Error::InvalidProbeSet(format!("bad header: {e}")))?;
        let mut probes = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let p: ProbeInstance = serde_json::from_str(line)
                .map_err(|e| Error::InvalidProbeSet(format!("line {}: {e}", i + 2)))?;
            probes.push(p);
        }
        let id = hashing::bytes_hash(probes_body(&probes)?.as_bytes())[..16].to_string();
        if id != header.probe_set_id || probes.len() != header.count {
            return Err(Error::InvalidProbeSet(format!(
                "content does not match header (id {id} vs {}, {} vs {} probes)",
                header.probe_set_id,
                probes.len(),
                header.count
            )));
        }
        Ok(Self { header, probes })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex() -> Lexicons {
        Lexicons::bundled()
    }

    fn entry<'a>(lx: &'a Lexicons, name: &str) -> &'a OccupationEntry {
        lx.occupations.get(name).unwrap()
    }

    fn record(id: &str, premise: &str) -> NliRecord {
        NliRecord {
            id: id.into(),
            premise: premise.into(),
            hypothesis: String::new(),
            gold_label: crate::corpus::GoldLabel::Unlabeled,
            source: Source::Mnli,
        }
    }

    #[test]
    fn filter_examples() {
        let lx = lex();
        let f = PremiseFilter::new(&lx, DEFAULT_MAX_TOKENS);
        assert!(matches!(
            f.classify("1", "A nurse is sitting on a bench in the park."),
            FilterOutcome::Accepted { form: MatchedForm::Singular, .. }
        ));
        assert_eq!(
            f.classify("2", "The woman nurse smiled."),
            FilterOutcome::GenderedWord("woman".into())
        );
        assert_eq!(
            f.classify("3", "John the carpenter is walking."),
            FilterOutcome::Name("john".into())
        );
        assert_eq!(
            f.classify("4", "The nurse greeted the doctor and the teacher."),
            FilterOutcome::MultipleOccupations
        );
        assert_eq!(
            f.classify("5", "The nurse is sitting on a long bench in the park today."),
            FilterOutcome::TooLong(12)
        );
    }

    #[test]
    fn two_occupation_sentence_rejected() {
        // "doctor" is not a lexicon entry; use two that are.
        let lx = lex();
        let f = PremiseFilter::new(&lx, DEFAULT_MAX_TOKENS);
        assert_eq!(
            f.classify("x", "The nurse greeted the lawyer."),
            FilterOutcome::MultipleOccupations
        );
    }

    #[test]
    fn ner_flags_reject_by_record_id() {
        let lx = lex();
        let flagged: HashSet<String> = ["r9".to_string()].into();
        let f = PremiseFilter::new(&lx, DEFAULT_MAX_TOKENS).with_ner_flags(&flagged);
        assert!(matches!(f.classify("r9", "The cook smiled."), FilterOutcome::Name(_)));
        assert!(matches!(f.classify("r8", "The cook smiled."), FilterOutcome::Accepted { .. }));
    }

    #[test]
    fn substitution_goldens() {
        let lx = lex();
        let cases = [
            ("A nurse is sitting on a bench in the park.", "nurse", "teacher", "A teacher is sitting on a bench in the park."),
            ("Janitors are doing their job well.", "janitor", "teacher", "Teachers are doing their job well."),
            ("A carpenter is walking towards the store.", "carpenter", "baker", "A baker is walking towards the store."),
            ("A carpenter is walking towards the store.", "carpenter", "accountant", "An accountant is walking towards the store."),
            ("An editor waved at a bus.", "editor", "cook", "A cook waved at a bus."),
            ("THE CEO LEFT.", "ceo", "driver", "THE DRIVER LEFT."),
            ("Two construction workers rested.", "construction worker", "salesperson", "Two salespeople rested."),
            ("The librarian's desk is tidy.", "librarian", "nurse", "The nurse's desk is tidy."),
        ];
        for (text, src, dst, want) in cases {
            assert_eq!(
                substitute_occupation(text, entry(&lx, src), entry(&lx, dst)).unwrap(),
                want
            );
        }
    }

    #[test]
    fn substitution_errors() {
        let lx = lex();
        assert!(matches!(
            substitute_occupation("The cook smiled.", entry(&lx, "nurse"), entry(&lx, "cook")),
            Err(Error::SourceNotFound { .. })
        ));
        assert!(matches!(
            substitute_occupation("The nurse met a nurse.", entry(&lx, "nurse"), entry(&lx, "cook")),
            Err(Error::AmbiguousMatch { .. })
        ));
    }

    #[test]
    fn template_expansion_goldens() {
        let lx = lex();
        let nurse = PremiseCandidate {
            record_id: "r".into(),
            text: "A nurse is sitting on a bench in the park.".into(),
            occupation: "nurse".into(),
            matched_form: MatchedForm::Singular,
            origin: Origin::Natural,
            source_occupation: None,
        };
        let p = expand_templates(&nurse, &lx.occupations, &TemplateSet::builtin(TemplateSetId::Fixed), 0, Distribution::InDistribution).unwrap();
        assert_eq!(p.hypothesis_f, "This text speaks of a female profession");
        assert_eq!(p.hypothesis_m, "This text speaks of a male profession");
        assert_eq!(p.dominant_gender, Gender::Female);

        let acc = PremiseCandidate {
            text: "Accountants are coming".into(),
            occupation: "accountant".into(),
            matched_form: MatchedForm::Plural,
            ..nurse.clone()
        };
        let p = expand_templates(&acc, &lx.occupations, &TemplateSet::builtin(TemplateSetId::PremisePrefixed), 2, Distribution::InDistribution).unwrap();
        assert_eq!(p.hypothesis_f, "Accountants are coming mentions a female profession");
        assert_eq!(p.hypothesis_m, "Accountants are coming mentions a male profession");

        let p = expand_templates(&acc, &lx.occupations, &TemplateSet::builtin(TemplateSetId::OccupationExplicit), 1, Distribution::InDistribution).unwrap();
        assert_eq!(p.hypothesis_f, "A female profession, accountant, is spoken of");
        assert_eq!(p.hypothesis_m, "A male profession, accountant, is spoken of");

        assert!(expand_templates(&acc, &lx.occupations, &TemplateSet::builtin(TemplateSetId::Fixed), 3, Distribution::InDistribution).is_err());
    }

    #[test]
    fn template_validation() {
        assert!(TemplateSet::new(TemplateSetId::Fixed, vec!["no slot".into()]).is_err());
        assert!(TemplateSet::new(TemplateSetId::Fixed, vec!["[gender] and [gender]".into()]).is_err());
        assert!(TemplateSet::new(TemplateSetId::Fixed, vec!["[Premise] is [gender]".into()]).is_err());
        assert!(TemplateSet::new(TemplateSetId::PremisePrefixed, vec!["[Premise] is [gender]".into()]).is_ok());
        assert!(TemplateSet::new(TemplateSetId::Fixed, vec![]).is_err());
    }

    #[test]
    fn premise_containing_placeholder_text_is_not_reexpanded() {
        let t = TemplateSet::builtin(TemplateSetId::PremisePrefixed);
        let out = t.render(0, Gender::Male, "The [gender] clerk", "clerk").unwrap();
        assert_eq!(out, "The [gender] clerk speaks of a male profession");
    }

    #[test]
    fn deficit_filled_from_donor() {
        let lx = lex();
        let f = PremiseFilter::new(&lx, DEFAULT_MAX_TOKENS);
        // Natural premises only for nurse; every other occupation is filled by substitution.
        let records: Vec<NliRecord> = (0..120)
            .map(|i| record(&format!("n{i:03}"), &format!("A nurse waited near gate {i}.")))
            .collect();
        let ex = extract_candidates(&records, &f);
        assert_eq!(ex.candidates.len(), 120);
        let b = balance_occupations(&ex.candidates, &f, 50, 7).unwrap();
        assert_eq!(b.premises.len(), 1900);
        let teacher: Vec<_> = b.premises.iter().filter(|p| p.occupation == "teacher").collect();
        assert_eq!(teacher.len(), 50);
        assert!(teacher.iter().all(|p| p.origin == Origin::Substituted
            && p.source_occupation.as_deref() == Some("nurse")));
        assert_eq!(b.split["nurse"], OccupationSplit { natural_available: 120, natural: 50, substituted: 0 });
        // "An accountant" re-agrees the article.
        assert!(b.premises.iter().filter(|p| p.occupation == "accountant").all(|p| p.text.starts_with("An accountant")));

        let again = balance_occupations(&ex.candidates, &f, 50, 7).unwrap();
        assert_eq!(b.premises, again.premises);
        let other = balance_occupations(&ex.candidates, &f, 50, 8).unwrap();
        assert_ne!(b.premises, other.premises);
    }

    #[test]
    fn insufficient_donors() {
        let lx = lex();
        let f = PremiseFilter::new(&lx, DEFAULT_MAX_TOKENS);
        let records = vec![record("a", "The cook smiled."), record("b", "The cook left.")];
        let ex = extract_candidates(&records, &f);
        match balance_occupations(&ex.candidates, &f, 5, 1) {
            Err(Error::InsufficientDonors { needed: 5, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            balance_occupations(&[], &f, 5, 1),
            Err(Error::InsufficientDonors { .. })
        ));
    }

    #[test]
    fn probe_set_round_trip_and_tamper_detection() {
        let lx = lex();
        let records: Vec<NliRecord> = (0..10)
            .map(|i| record(&format!("r{i}"), &format!("The clerk filed form {i}.")))
            .collect();
        let params = BuildParams {
            template_set: TemplateSetId::Fixed,
            per_occupation: 2,
            seed: 3,
            max_tokens: DEFAULT_MAX_TOKENS,
            distribution: Distribution::InDistribution,
        };
        let (probes, _, _) = build_from_records(&records, &lx, None, &params).unwrap();
        assert_eq!(probes.len(), 76);
        let set = ProbeSet::new(probes, &params, "cfg".into()).unwrap();
        let text = set.to_jsonl().unwrap();
        assert!(text.starts_with("# {"));
        let back = ProbeSet::parse(&text).unwrap();
        assert_eq!(back.probes, set.probes);
        assert_eq!(back.header, set.header);

        let tampered = text.replacen("The clerk", "The Clerk", 1);
        assert!(matches!(ProbeSet::parse(&tampered), Err(Error::InvalidProbeSet(_))));
    }
}
