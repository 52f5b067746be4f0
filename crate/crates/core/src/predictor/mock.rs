//! Deterministic stand-in models for tests and pipeline dry runs.

use std::fmt;

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::hashing::{fields_digest, unit_interval};
use crate::lexicon::{Gender, OccupationLexicon};

use super::Logits3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockProfile {
    /// Logits depend on the premise alone, so both hypotheses of a probe score
    /// identically.
    NeutralFair,
    /// `NeutralFair` plus `delta` on the entailment logit when the hypothesis
    /// gender matches the occupation's dominant gender, minus `delta` otherwise.
    Stereotyped { delta: f64 },
    /// Pseudo-random logits keyed on (seed, premise, hypothesis).
    HashNoise { seed: u64 },
}

impl MockProfile {
    /// Parses `neutral_fair`, `stereotyped:<delta>` or `hash_noise:<seed>`.
    pub fn parse(raw: &str) -> Option<Self> {
        let (name, arg) = match raw.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (raw, None),
        };
        match (name, arg) {
            ("neutral_fair", None) => Some(Self::NeutralFair),
            ("stereotyped", Some(a)) => a
                .parse::<f64>()
                .ok()
                .filter(|d| d.is_finite() && *d >= 0.0)
                .map(|delta| Self::Stereotyped { delta }),
            ("hash_noise", Some(a)) => a.parse().ok().map(|seed| Self::HashNoise { seed }),
            _ => None,
        }
    }

    pub fn tag(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MockProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NeutralFair => f.write_str("neutral_fair"),
            Self::Stereotyped { delta } => write!(f, "stereotyped:{delta}"),
            Self::HashNoise { seed } => write!(f, "hash_noise:{seed}"),
        }
    }
}

/// Three logits in [-4, 4) drawn from a digest.
fn logits_from_digest(d: &[u8; 32]) -> Logits3 {
    let at = |i: usize| unit_interval(&d[i * 8..i * 8 + 8]) * 8.0 - 4.0;
    Logits3::new(at(0), at(1), at(2))
}

/// Base logits of the fair mock; a function of the premise text only.
pub fn premise_base_logits(premise: &str) -> Logits3 {
    logits_from_digest(&fields_digest(&[b"neutral_fair", premise.as_bytes()]))
}

fn hypothesis_gender(hypothesis: &str) -> Option<Gender> {
    let toks = tokenize(hypothesis);
    if toks.iter().any(|t| t == "female") {
        Some(Gender::Female)
    } else if toks.iter().any(|t| t == "male") {
        Some(Gender::Male)
    } else {
        None
    }
}

pub fn mock_predict(
    premise: &str,
    hypothesis: &str,
    profile: &MockProfile,
    lexicon: &OccupationLexicon,
) -> Result<Logits3> {
    match *profile {
        MockProfile::NeutralFair => Ok(premise_base_logits(premise)),
        MockProfile::Stereotyped { delta } => {
            let mut l = premise_base_logits(premise);
            let mention = lexicon
                .mentions(premise)
                .into_iter()
                .next()
                .ok_or_else(|| Error::UnknownOccupation(premise.to_string()))?;
            let dominant = lexicon.entries()[mention.entry].dominant_gender;
            // A hypothesis without a gender word gets no shift.
            match hypothesis_gender(hypothesis) {
                Some(g) if g == dominant => l.entail += delta,
                Some(_) => l.entail -= delta,
                None => {}
            }
            Ok(l)
        }
        MockProfile::HashNoise { seed } => Ok(logits_from_digest(&fields_digest(&[
            b"hash_noise",
            &seed.to_le_bytes(),
            premise.as_bytes(),
            hypothesis.as_bytes(),
        ]))),
    }
}
