//! Client side of the `/predict` wire protocol.
//!
//! Request: `{"model": str, "pairs": [{"premise": str, "hypothesis": str}, ...]}`.
//! Response: `{"logits": [[e, n, c], ...]}` aligned with the request order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{ContentKey, EndpointConfig, Logits3, PairRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestPair {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model: String,
    pub pairs: Vec<RequestPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub logits: Vec<Vec<f64>>,
}

enum BatchError {
    /// Transport failure or non-200 status; worth retrying.
    Unavailable(String),
    Schema(String),
}

pub(super) struct Client<'a> {
    url: String,
    agent: ureq::Agent,
    model: &'a str,
    batch_size: usize,
    retries: u32,
    concurrency: usize,
    calls: &'a AtomicUsize,
}

impl<'a> Client<'a> {
    pub(super) fn new(base: &str, cfg: &'a EndpointConfig, calls: &'a AtomicUsize) -> Self {
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/predict") {
            base.to_string()
        } else {
            format!("{base}/predict")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url,
            agent,
            model: &cfg.model_tag,
            batch_size: cfg.batch_size,
            retries: cfg.retries,
            concurrency: cfg.concurrency,
            calls,
        }
    }

    fn send(&self, pairs: &[&PairRequest]) -> std::result::Result<Vec<Logits3>, BatchError> {
        let body = PredictRequest {
            model: self.model.to_string(),
            pairs: pairs
                .iter()
                .map(|p| RequestPair {
                    premise: p.premise.clone(),
                    hypothesis: p.hypothesis.clone(),
                })
                .collect(),
        };
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| BatchError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(BatchError::Unavailable(format!("HTTP {status}")));
        }
        let parsed: PredictResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| BatchError::Schema(format!("unreadable body: {e}")))?;
        if parsed.logits.len() != pairs.len() {
            return Err(BatchError::Schema(format!(
                "{} rows for {} pairs",
                parsed.logits.len(),
                pairs.len()
            )));
        }
        parsed
            .logits
            .iter()
            .map(|row| match Logits3::from_slice(row) {
                Ok(l) => Ok(l),
                Err(Error::NonFiniteLogit) => Err(BatchError::Schema("non-finite logit".into())),
                Err(e) => Err(BatchError::Schema(e.to_string())),
            })
            .collect()
    }

    fn send_with_retries(&self, pairs: &[&PairRequest]) -> std::result::Result<Vec<Logits3>, BatchError> {
        let mut attempt = 0;
        loop {
            match self.send(pairs) {
                Err(BatchError::Unavailable(_)) if attempt < self.retries => {
                    attempt += 1;
                    thread::sleep(Duration::from_millis(25 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    /// Fetches logits for every pair, batching and running up to `concurrency`
    /// batches at once. A batch that still fails after retries is re-sent pair by
    /// pair so the error can name exactly the failing probes.
    pub(super) fn fetch_all(&self, work: &[(&PairRequest, &ContentKey)]) -> Result<Vec<Logits3>> {
        let batches: Vec<Vec<usize>> = (0..work.len())
            .collect::<Vec<_>>()
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        let results: Mutex<Vec<Option<Logits3>>> = Mutex::new(vec![None; work.len()]);
        let failures: Mutex<Vec<(usize, String)>> = Mutex::new(Vec::new());
        let schema_error: Mutex<Option<String>> = Mutex::new(None);
        let next = AtomicUsize::new(0);

        let run_batch = |idx: &[usize]| {
            let pairs: Vec<&PairRequest> = idx.iter().map(|&i| work[i].0).collect();
            match self.send_with_retries(&pairs) {
                Ok(ls) => {
                    let mut r = results.lock().expect("results mutex");
                    for (&i, l) in idx.iter().zip(ls) {
                        r[i] = Some(l);
                    }
                }
                Err(BatchError::Schema(msg)) => {
                    schema_error.lock().expect("schema mutex").get_or_insert(msg);
                }
                Err(BatchError::Unavailable(msg)) if idx.len() == 1 => {
                    failures.lock().expect("failures mutex").push((idx[0], msg));
                }
                Err(BatchError::Unavailable(_)) => {
                    for &i in idx {
                        match self.send_with_retries(&[work[i].0]) {
                            Ok(ls) => results.lock().expect("results mutex")[i] = Some(ls[0]),
                            Err(BatchError::Schema(msg)) => {
                                schema_error.lock().expect("schema mutex").get_or_insert(msg);
                            }
                            Err(BatchError::Unavailable(msg)) => {
                                failures.lock().expect("failures mutex").push((i, msg));
                            }
                        }
                    }
                }
            }
        };

        let workers = self.concurrency.min(batches.len()).max(1);
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let b = next.fetch_add(1, Ordering::SeqCst);
                    match batches.get(b) {
                        Some(idx) => run_batch(idx),
                        None => break,
                    }
                });
            }
        });

        if let Some(msg) = schema_error.into_inner().expect("schema mutex") {
            return Err(Error::SchemaMismatch(msg));
        }
        let mut failures = failures.into_inner().expect("failures mutex");
        if !failures.is_empty() {
            failures.sort_by_key(|(i, _)| *i);
            let reason = failures[0].1.clone();
            let mut probe_ids: Vec<String> = failures
                .into_iter()
                .map(|(i, _)| work[i].0.probe_id.clone())
                .collect();
            probe_ids.dedup();
            return Err(Error::EndpointUnavailable { probe_ids, reason });
        }
        Ok(results
            .into_inner()
            .expect("results mutex")
            .into_iter()
            .map(|l| l.expect("every pair resolved"))
            .collect())
    }
}
