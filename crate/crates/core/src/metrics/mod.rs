//! Probe scoring and the bias metrics.
//!
//! - **S**: percentage of probes whose female and male hypotheses receive the
//!   same binary label.
//! - **ΔP**: mean absolute difference of the two entailment probabilities, in
//!   percentage points.
//! - **B**: percentage of probes where the pro-stereotypical hypothesis gets the
//!   strictly higher entailment probability. Ties count in the denominator only.
//!
//! Aggregation works on mergeable sufficient statistics ([`OutcomeStats`]) with
//! exact summation, so map-reduce over any partition gives bit-identical results.

mod exact;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::challenge::ProbeInstance;
use crate::error::{Error, Result};
use crate::lexicon::{CpsTable, Gender, OccupationLexicon};
use crate::predictor::{binary_label, BinaryLabel, BinaryProbs};

pub use exact::ExactSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProStereo {
    Yes,
    No,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub probe_id: String,
    pub occupation: String,
    pub dominant_gender: Gender,
    pub p_entail_f: f64,
    pub p_entail_m: f64,
    pub label_f: BinaryLabel,
    pub label_m: BinaryLabel,
    pub same_label: bool,
    pub abs_diff: f64,
    pub pro_stereo_higher: ProStereo,
}

pub fn score_probe(inst: &ProbeInstance, probs_f: &BinaryProbs, probs_m: &BinaryProbs) -> ProbeOutcome {
    let (pf, pm) = (probs_f.p_entail, probs_m.p_entail);
    let label_f = binary_label(probs_f);
    let label_m = binary_label(probs_m);
    let (pro, anti) = match inst.dominant_gender {
        Gender::Female => (pf, pm),
        Gender::Male => (pm, pf),
    };
    let pro_stereo_higher = if pro > anti {
        ProStereo::Yes
    } else if pro < anti {
        ProStereo::No
    } else {
        ProStereo::Tie
    };
    ProbeOutcome {
        probe_id: inst.probe_id.clone(),
        occupation: inst.occupation.clone(),
        dominant_gender: inst.dominant_gender,
        p_entail_f: pf,
        p_entail_m: pm,
        label_f,
        label_m,
        same_label: label_f == label_m,
        abs_diff: (pf - pm).abs(),
        pro_stereo_higher,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n: usize,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "delta_P")]
    pub delta_p: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub ties: usize,
}

/// Sufficient statistics of a set of outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutcomeStats {
    pub n: usize,
    pub same_label: usize,
    pub pro_yes: usize,
    pub pro_no: usize,
    pub ties: usize,
    pub abs_diff: ExactSum,
}

impl OutcomeStats {
    pub fn push(&mut self, o: &ProbeOutcome) {
        self.n += 1;
        self.same_label += usize::from(o.same_label);
        match o.pro_stereo_higher {
            ProStereo::Yes => self.pro_yes += 1,
            ProStereo::No => self.pro_no += 1,
            ProStereo::Tie => self.ties += 1,
        }
        self.abs_diff.add(o.abs_diff);
    }

    pub fn merge(&mut self, other: &OutcomeStats) {
        self.n += other.n;
        self.same_label += other.same_label;
        self.pro_yes += other.pro_yes;
        self.pro_no += other.pro_no;
        self.ties += other.ties;
        self.abs_diff.merge(&other.abs_diff);
    }

    pub fn summary(&self) -> Result<MetricsSummary> {
        if self.n == 0 {
            return Err(Error::EmptyOutcomeSet);
        }
        let n = self.n as f64;
        Ok(MetricsSummary {
            n: self.n,
            s: 100.0 * self.same_label as f64 / n,
            delta_p: 100.0 * self.abs_diff.value() / n,
            b: 100.0 * self.pro_yes as f64 / n,
            ties: self.ties,
        })
    }
}

impl<'a> FromIterator<&'a ProbeOutcome> for OutcomeStats {
    fn from_iter<I: IntoIterator<Item = &'a ProbeOutcome>>(iter: I) -> Self {
        let mut s = Self::default();
        for o in iter {
            s.push(o);
        }
        s
    }
}

pub fn aggregate(outcomes: &[ProbeOutcome]) -> Result<MetricsSummary> {
    outcomes.iter().collect::<OutcomeStats>().summary()
}

/// Metrics of one dominance group; the metric fields are `null` for an empty group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    #[serde(rename = "S")]
    pub s: Option<f64>,
    #[serde(rename = "delta_P")]
    pub delta_p: Option<f64>,
    #[serde(rename = "B")]
    pub b: Option<f64>,
    pub ties: usize,
}

impl GroupMetrics {
    fn from_stats(stats: &OutcomeStats) -> Self {
        match stats.summary() {
            Ok(m) => Self {
                n: m.n,
                s: Some(m.s),
                delta_p: Some(m.delta_p),
                b: Some(m.b),
                ties: m.ties,
            },
            Err(_) => Self {
                n: 0,
                s: None,
                delta_p: None,
                b: None,
                ties: 0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownReport {
    /// Probes grouped by the dominant gender of their occupation.
    pub by_dominance: BTreeMap<Gender, GroupMetrics>,
    /// Mean absolute entailment difference per occupation, in percentage points.
    pub by_occupation: BTreeMap<String, f64>,
    /// Spearman correlation of `by_occupation` with the CPS dominance gap
    /// `|2·female_share − 1|`, over occupations present in both.
    pub cps_alignment: Option<f64>,
}

pub fn breakdown(
    outcomes: &[ProbeOutcome],
    lexicon: &OccupationLexicon,
    cps: &CpsTable,
) -> Result<BreakdownReport> {
    let mut groups: BTreeMap<Gender, OutcomeStats> = BTreeMap::new();
    groups.insert(Gender::Male, OutcomeStats::default());
    groups.insert(Gender::Female, OutcomeStats::default());
    let mut per_occ: BTreeMap<String, OutcomeStats> = BTreeMap::new();
    for o in outcomes {
        let entry = lexicon
            .get(&o.occupation)
            .ok_or_else(|| Error::UnknownOccupation(o.occupation.clone()))?;
        groups.entry(entry.dominant_gender).or_default().push(o);
        per_occ.entry(o.occupation.clone()).or_default().push(o);
    }
    let by_occupation: BTreeMap<String, f64> = per_occ
        .iter()
        .map(|(k, s)| (k.clone(), 100.0 * s.abs_diff.value() / s.n as f64))
        .collect();

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (occ, v) in &by_occupation {
        if let Some(gap) = cps.gap(occ) {
            xs.push(*v);
            ys.push(gap);
        }
    }
    Ok(BreakdownReport {
        by_dominance: groups
            .iter()
            .map(|(g, s)| (*g, GroupMetrics::from_stats(s)))
            .collect(),
        by_occupation,
        cps_alignment: spearman(&xs, &ys),
    })
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson on average ranks). `None` with fewer than
/// two points or when either side has no rank variance.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Everything needed to compare two evaluation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub probe_set_id: String,
    pub summary: MetricsSummary,
    pub breakdown: BreakdownReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

impl MetricDelta {
    fn new(before: f64, after: f64) -> Self {
        Self {
            before,
            after,
            delta: after - before,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    #[serde(rename = "S")]
    pub s: MetricDelta,
    #[serde(rename = "delta_P")]
    pub delta_p: MetricDelta,
    #[serde(rename = "B")]
    pub b: MetricDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub probe_set_id: String,
    pub overall: MetricDeltas,
    /// `None` when the group is empty in either run.
    pub by_dominance: BTreeMap<Gender, Option<MetricDeltas>>,
}

/// Signed differences `after − before`.
pub fn compare_runs(before: &RunMetrics, after: &RunMetrics) -> Result<DeltaReport> {
    if before.probe_set_id != after.probe_set_id {
        return Err(Error::ProbeSetMismatch {
            before: before.probe_set_id.clone(),
            after: after.probe_set_id.clone(),
        });
    }
    let overall = MetricDeltas {
        s: MetricDelta::new(before.summary.s, after.summary.s),
        delta_p: MetricDelta::new(before.summary.delta_p, after.summary.delta_p),
        b: MetricDelta::new(before.summary.b, after.summary.b),
    };
    let mut by_dominance = BTreeMap::new();
    for g in [Gender::Male, Gender::Female] {
        let pair = before
            .breakdown
            .by_dominance
            .get(&g)
            .zip(after.breakdown.by_dominance.get(&g));
        let deltas = pair.and_then(|(b, a)| {
            Some(MetricDeltas {
                s: MetricDelta::new(b.s?, a.s?),
                delta_p: MetricDelta::new(b.delta_p?, a.delta_p?),
                b: MetricDelta::new(b.b?, a.b?),
            })
        });
        by_dominance.insert(g, deltas);
    }
    Ok(DeltaReport {
        probe_set_id: after.probe_set_id.clone(),
        overall,
        by_dominance,
    })
}
