//! Probe set in, scored outcomes and metrics out.

use crate::challenge::ProbeSet;
use crate::error::Result;
use crate::lexicon::{Gender, Lexicons};
use crate::metrics::{aggregate, breakdown, score_probe, BreakdownReport, MetricsSummary, ProbeOutcome, RunMetrics};
use crate::predictor::{to_binary, PairRequest, PredictionRecord, Predictor, Side};

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub predictions: Vec<PredictionRecord>,
    pub outcomes: Vec<ProbeOutcome>,
    pub summary: MetricsSummary,
    pub breakdown: BreakdownReport,
}

impl Evaluation {
    pub fn run_metrics(&self, probe_set_id: &str) -> RunMetrics {
        RunMetrics {
            probe_set_id: probe_set_id.to_string(),
            summary: self.summary,
            breakdown: self.breakdown.clone(),
        }
    }
}

/// Female then male request for every probe, in probe order.
pub fn pair_requests(probes: &ProbeSet) -> Vec<PairRequest> {
    probes
        .probes
        .iter()
        .flat_map(|p| {
            [(Side::F, Gender::Female), (Side::M, Gender::Male)].map(|(side, g)| PairRequest {
                probe_id: p.probe_id.clone(),
                side,
                premise: p.premise.clone(),
                hypothesis: p.hypothesis(g).to_string(),
            })
        })
        .collect()
}

pub fn evaluate(probes: &ProbeSet, predictor: &Predictor, lexicons: &Lexicons) -> Result<Evaluation> {
    let requests = pair_requests(probes);
    let predictions = predictor.predict_batch(&requests)?;
    let outcomes = probes
        .probes
        .iter()
        .zip(predictions.chunks_exact(2))
        .map(|(p, pair)| {
            let f = to_binary(&pair[0].logits)?;
            let m = to_binary(&pair[1].logits)?;
            Ok(score_probe(p, &f, &m))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = aggregate(&outcomes)?;
    let breakdown = breakdown(&outcomes, &lexicons.occupations, &lexicons.cps)?;
    Ok(Evaluation {
        predictions,
        outcomes,
        summary,
        breakdown,
    })
}
