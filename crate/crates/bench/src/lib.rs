//! Deterministic fixtures shared by the benchmarks.

use genderbias::corpus::{GoldLabel, NliRecord, Source};
use genderbias::metrics::ProStereo;
use genderbias::{BinaryLabel, Gender, Lexicons, Logits3, ProbeOutcome};

const VERBS: [&str; 8] = ["opened", "closed", "painted", "cleaned", "moved", "checked", "fixed", "carried"];
const OBJECTS: [&str; 8] = ["door", "window", "box", "table", "car", "chair", "fence", "lamp"];

/// SplitMix64 step, enough for spreading fixture values.
fn mix(i: u64) -> u64 {
    let mut z = i.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit(i: u64) -> f64 {
    (mix(i) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn logits(n: usize) -> Vec<Logits3> {
    (0..n as u64)
        .map(|i| Logits3::new(8.0 * unit(3 * i) - 4.0, 8.0 * unit(3 * i + 1) - 4.0, 8.0 * unit(3 * i + 2) - 4.0))
        .collect()
}

pub fn outcomes(n: usize) -> Vec<ProbeOutcome> {
    let label = |p: f64| if p > 0.5 { BinaryLabel::Entailment } else { BinaryLabel::Contradiction };
    (0..n as u64)
        .map(|i| {
            let (pf, pm) = (unit(2 * i), unit(2 * i + 1));
            let dominant = if i % 2 == 0 { Gender::Female } else { Gender::Male };
            let (pro, anti) = if dominant == Gender::Female { (pf, pm) } else { (pm, pf) };
            ProbeOutcome {
                probe_id: format!("b{i}"),
                occupation: "cook".into(),
                dominant_gender: dominant,
                p_entail_f: pf,
                p_entail_m: pm,
                label_f: label(pf),
                label_m: label(pm),
                same_label: label(pf) == label(pm),
                abs_diff: (pf - pm).abs(),
                pro_stereo_higher: match pro.partial_cmp(&anti) {
                    Some(std::cmp::Ordering::Greater) => ProStereo::Yes,
                    Some(std::cmp::Ordering::Less) => ProStereo::No,
                    _ => ProStereo::Tie,
                },
            }
        })
        .collect()
}

/// Sentences mixing gendered terms in several casings with neutral words.
pub fn sentences(n: usize) -> Vec<String> {
    const WORDS: [&str; 16] = [
        "The", "woman", "told", "HIS", "brother", "that", "Mr", "Smith", "and", "her", "aunt", "met", "the", "nurse",
        "yesterday", "Girls",
    ];
    (0..n as u64)
        .map(|i| {
            (0..12)
                .map(|k| WORDS[(mix(i * 12 + k) % WORDS.len() as u64) as usize])
                .collect::<Vec<_>>()
                .join(" ")
                + "."
        })
        .collect()
}

/// `per_occupation` clean premises for every bundled occupation.
pub fn corpus(per_occupation: usize) -> Vec<NliRecord> {
    let lex = Lexicons::bundled();
    let mut out = Vec::new();
    for (k, e) in lex.occupations.entries().iter().enumerate() {
        for i in 0..per_occupation {
            let c = (7 * k + i) % (VERBS.len() * OBJECTS.len());
            out.push(NliRecord {
                id: format!("{k:02}-{i:03}"),
                premise: format!("The {} {} the old {}.", e.name, VERBS[c / OBJECTS.len()], OBJECTS[c % OBJECTS.len()]),
                hypothesis: "Something happened.".into(),
                gold_label: GoldLabel::Neutral,
                source: Source::Mnli,
            });
        }
    }
    out
}
