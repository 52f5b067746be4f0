//! Gender-swapped counterfactual copies of training records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::NliRecord;
use crate::lexicon::{GenderTermDictionary, OccupationLexicon};

/// Suffix appended to the id of a swapped copy.
pub const SWAP_ID_SUFFIX: &str = "-gs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentScope {
    /// Only records whose premise or hypothesis mentions a lexicon occupation.
    #[default]
    OccupationRecords,
    AllRecords,
}

impl AugmentScope {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw {
            "occupation_records" => Some(Self::OccupationRecords),
            "all_records" => Some(Self::AllRecords),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AugmentStats {
    pub input_size: usize,
    /// Records within scope, whether or not they contained a gendered term.
    pub eligible: usize,
    pub swapped: usize,
    pub output_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapResult {
    pub original: NliRecord,
    pub swapped: NliRecord,
    pub terms_swapped: usize,
}

#[derive(Clone, Copy)]
enum CasePattern {
    Lower,
    Upper,
    Title,
}

fn title_case(lower: &str) -> String {
    let mut chars = lower.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn case_pattern(word: &str, lower: &str) -> Option<CasePattern> {
    if word == lower {
        Some(CasePattern::Lower)
    } else if lower.chars().count() > 1 && word == lower.to_uppercase() {
        Some(CasePattern::Upper)
    } else if word == title_case(lower) {
        Some(CasePattern::Title)
    } else {
        None
    }
}

fn apply_pattern(pattern: CasePattern, lower: &str) -> String {
    match pattern {
        CasePattern::Lower => lower.to_string(),
        CasePattern::Upper => lower.to_uppercase(),
        CasePattern::Title => title_case(lower),
    }
}

fn swap_word(word: &str, dict: &GenderTermDictionary) -> Option<String> {
    let lower = word.to_lowercase();
    let opposite = dict.opposite(&lower)?;
    let pattern = case_pattern(word, &lower)?;
    // A one-letter UPPER rendering would read back as Title.
    if matches!(pattern, CasePattern::Upper) && opposite.chars().count() < 2 {
        return None;
    }
    Some(apply_pattern(pattern, opposite))
}

/// Replaces every dictionary term by its opposite in one left-to-right pass.
///
/// Words are maximal alphanumeric runs, so "man's" swaps its "man". A word is
/// swapped only when it is all lowercase, all uppercase or title case, and the
/// replacement takes the same pattern. Returns the new text and the number of
/// replacements.
pub fn gender_swap_text(text: &str, dict: &GenderTermDictionary) -> (String, usize) {
    let mut out = String::with_capacity(text.len() + 8);
    let mut count = 0;
    let mut word_start: Option<usize> = None;
    let mut flush = |out: &mut String, word: &str| match swap_word(word, dict) {
        Some(s) => {
            out.push_str(&s);
            count += 1;
        }
        None => out.push_str(word),
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            word_start.get_or_insert(i);
        } else {
            if let Some(s) = word_start.take() {
                flush(&mut out, &text[s..i]);
            }
            out.push(c);
        }
    }
    if let Some(s) = word_start {
        flush(&mut out, &text[s..]);
    }
    (out, count)
}

/// Swapped copy of one record, or `None` when neither side contains a term.
pub fn swap_record(record: &NliRecord, dict: &GenderTermDictionary) -> Option<SwapResult> {
    let (premise, np) = gender_swap_text(&record.premise, dict);
    let (hypothesis, nh) = gender_swap_text(&record.hypothesis, dict);
    let terms_swapped = np + nh;
    (terms_swapped > 0).then(|| SwapResult {
        original: record.clone(),
        swapped: NliRecord {
            id: format!("{}{SWAP_ID_SUFFIX}", record.id),
            premise,
            hypothesis,
            gold_label: record.gold_label,
            source: record.source,
        },
        terms_swapped,
    })
}

fn in_scope(record: &NliRecord, lexicon: &OccupationLexicon, scope: AugmentScope) -> bool {
    match scope {
        AugmentScope::AllRecords => true,
        AugmentScope::OccupationRecords => {
            !lexicon.mentions(&record.premise).is_empty()
                || !lexicon.mentions(&record.hypothesis).is_empty()
        }
    }
}

/// The input records followed by swapped copies of every in-scope record that
/// contains at least one gendered term, in input order.
pub fn augment_corpus(
    records: &[NliRecord],
    lexicon: &OccupationLexicon,
    dict: &GenderTermDictionary,
    scope: AugmentScope,
) -> (Vec<NliRecord>, AugmentStats) {
    let per_record: Vec<(bool, Option<SwapResult>)> = records
        .par_iter()
        .map(|r| {
            if in_scope(r, lexicon, scope) {
                (true, swap_record(r, dict))
            } else {
                (false, None)
            }
        })
        .collect();

    let eligible = per_record.iter().filter(|(e, _)| *e).count();
    let mut out = records.to_vec();
    out.extend(per_record.into_iter().filter_map(|(_, s)| s.map(|s| s.swapped)));
    let stats = AugmentStats {
        input_size: records.len(),
        eligible,
        swapped: out.len() - records.len(),
        output_size: out.len(),
    };
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, GoldLabel, Source};
    use proptest::prelude::*;

    fn dict() -> GenderTermDictionary {
        GenderTermDictionary::bundled()
    }

    fn rec(id: &str, premise: &str, hypothesis: &str, label: GoldLabel) -> NliRecord {
        NliRecord {
            id: id.into(),
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            gold_label: label,
            source: Source::Mnli,
        }
    }

    #[test]
    fn swap_examples() {
        let d = dict();
        assert_eq!(
            gender_swap_text("The nurse said he was tired.", &d),
            ("The nurse said she was tired.".to_string(), 1)
        );
        assert_eq!(
            gender_swap_text("His sister met her brother.", &d),
            ("Her brother met his sister.".to_string(), 4)
        );
        assert_eq!(
            gender_swap_text("The teacher smiled.", &d),
            ("The teacher smiled.".to_string(), 0)
        );
    }

    #[test]
    fn case_and_boundaries() {
        let d = dict();
        assert_eq!(gender_swap_text("HE left", &d).0, "SHE left");
        assert_eq!(gender_swap_text("the man's hat", &d).0, "the woman's hat");
        assert_eq!(gender_swap_text("mankind", &d).0, "mankind");
        assert_eq!(gender_swap_text("hE", &d), ("hE".to_string(), 0));
        assert_eq!(gender_swap_text("Mr. Smith", &d).0, "Mrs. Smith");
        // Names are left alone.
        assert_eq!(gender_swap_text("John and Mary", &d).0, "John and Mary");
    }

    #[test]
    fn augment_counts() {
        let lex = OccupationLexicon::bundled();
        let d = dict();
        let records = vec![
            rec("1", "The nurse said he was tired.", "Someone spoke.", GoldLabel::Entailment),
            rec("2", "The nurse smiled.", "The nurse is happy.", GoldLabel::Neutral),
            rec("3", "He walked home.", "A man walked.", GoldLabel::Entailment),
            rec("4", "A baker sold bread.", "Her shop was open.", GoldLabel::Contradiction),
        ];
        let (out, stats) = augment_corpus(&records, &lex, &d, AugmentScope::OccupationRecords);
        assert_eq!(
            stats,
            AugmentStats { input_size: 4, eligible: 3, swapped: 2, output_size: 6 }
        );
        assert_eq!(&out[..4], &records[..]);
        assert_eq!(out[4].id, "1-gs");
        assert_eq!(out[4].premise, "The nurse said she was tired.");
        assert_eq!(out[5].id, "4-gs");
        assert_eq!(out[5].premise, "A baker sold bread.");
        assert_eq!(out[5].hypothesis, "His shop was open.");
        assert_eq!(out[5].gold_label, GoldLabel::Contradiction);

        let (out, stats) = augment_corpus(&records, &lex, &d, AugmentScope::AllRecords);
        assert_eq!(stats.swapped, 3);
        assert_eq!(out.len(), 7);
    }

    #[test]
    fn no_terms_is_identity() {
        let lex = OccupationLexicon::bundled();
        let records = vec![rec("a", "The teacher smiled.", "Someone smiled.", GoldLabel::Neutral)];
        let (out, stats) = augment_corpus(&records, &lex, &dict(), AugmentScope::AllRecords);
        assert_eq!(out, records);
        assert_eq!(stats.swapped, 0);
    }

    fn sentence() -> impl Strategy<Value = String> {
        let d = dict();
        let mut words: Vec<String> = d
            .pairs()
            .iter()
            .flat_map(|(m, f)| [m.clone(), f.clone()])
            .collect();
        words.extend(["the", "nurse", "walked", "x1", "Émile", "ß"].map(String::from));
        let word = prop_oneof![
            proptest::sample::select(words).prop_flat_map(|w| {
                let title = title_case(&w);
                let upper = w.to_uppercase();
                proptest::sample::select(vec![w, title, upper])
            }),
            "[a-zA-Z0-9']{1,6}",
            "\\PC{1,4}",
        ];
        let sep = proptest::sample::select(vec![" ", ", ", "'", "-", "  ", ". "]);
        proptest::collection::vec((word, sep), 0..12)
            .prop_map(|ws| ws.into_iter().map(|(w, s)| format!("{w}{s}")).collect())
    }

    proptest! {
        #[test]
        fn swap_is_involution(s in sentence()) {
            let d = dict();
            let (once, n1) = gender_swap_text(&s, &d);
            let (twice, n2) = gender_swap_text(&once, &d);
            prop_assert_eq!(&twice, &s);
            prop_assert_eq!(n1, n2);
            prop_assert_eq!(tokenize(&once).len(), tokenize(&s).len());
        }
    }
}
