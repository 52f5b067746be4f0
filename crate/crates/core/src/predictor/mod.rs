//! Three-class NLI logits and their reduction to entailment vs contradiction.
//!
//! Logits come from one of three backends: an HTTP endpoint speaking the
//! `/predict` wire protocol, an offline prediction file, or a deterministic mock.
//! The wire label order is fixed as `[entailment, neutral, contradiction]`.

mod http;
mod mock;
mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::text_hash;
use crate::lexicon::OccupationLexicon;

pub use http::{PredictRequest, PredictResponse, RequestPair};
pub use mock::{mock_predict, premise_base_logits, MockProfile};
pub use store::{write_offline, PredictionStore, StoredPrediction};

/// Raw model scores in wire order `[entailment, neutral, contradiction]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logits3 {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl Logits3 {
    pub fn new(entail: f64, neutral: f64, contradict: f64) -> Self {
        Self {
            entail,
            neutral,
            contradict,
        }
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        match values {
            [e, n, c] => {
                let l = Self::new(*e, *n, *c);
                if l.is_finite() {
                    Ok(l)
                } else {
                    Err(Error::NonFiniteLogit)
                }
            }
            _ => Err(Error::SchemaMismatch(format!(
                "expected 3 logits, got {}",
                values.len()
            ))),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entail.is_finite() && self.neutral.is_finite() && self.contradict.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.entail, self.neutral, self.contradict]
    }
}

impl Serialize for Logits3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Logits3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Logits3::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryProbs {
    pub p_entail: f64,
    pub p_contradict: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Entailment,
    Contradiction,
}

/// Drops the neutral logit and takes a two-way softmax over entailment and
/// contradiction, shifted by the larger of the two for stability.
pub fn to_binary(l: &Logits3) -> Result<BinaryProbs> {
    if !l.is_finite() {
        return Err(Error::NonFiniteLogit);
    }
    let m = l.entail.max(l.contradict);
    let e = (l.entail - m).exp();
    let c = (l.contradict - m).exp();
    let z = e + c;
    Ok(BinaryProbs {
        p_entail: e / z,
        p_contradict: c / z,
    })
}

/// Entailment iff `p_entail > 0.5`; an exact tie resolves to contradiction.
pub fn binary_label(p: &BinaryProbs) -> BinaryLabel {
    if p.p_entail > 0.5 {
        BinaryLabel::Entailment
    } else {
        BinaryLabel::Contradiction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    F,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub probe_id: String,
    pub side: Side,
    pub logits: Logits3,
    pub model_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRequest {
    pub probe_id: String,
    pub side: Side,
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Http { url: String },
    Offline { path: PathBuf },
    Mock(MockProfile),
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub backend: Backend,
    pub model_tag: String,
    pub batch_size: usize,
    pub timeout: Duration,
    pub retries: u32,
    /// Maximum number of batches in flight at once.
    pub concurrency: usize,
    pub cache: Option<PathBuf>,
}

impl EndpointConfig {
    pub fn mock(profile: MockProfile) -> Self {
        Self {
            model_tag: format!("mock-{}", profile.tag()),
            backend: Backend::Mock(profile),
            batch_size: 32,
            timeout: Duration::from_secs(30),
            retries: 2,
            concurrency: 1,
            cache: None,
        }
    }

    pub fn http(url: impl Into<String>, model_tag: impl Into<String>) -> Self {
        Self {
            backend: Backend::Http { url: url.into() },
            model_tag: model_tag.into(),
            batch_size: 32,
            timeout: Duration::from_secs(30),
            retries: 2,
            concurrency: 1,
            cache: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.concurrency == 0 {
            return Err(Error::config("concurrency", "must be at least 1"));
        }
        if let Backend::Mock(MockProfile::Stereotyped { delta }) = self.backend {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::config("mock", "stereotype delta must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// Cache/offline lookup key: model tag plus content hashes of both texts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentKey {
    pub model: String,
    pub premise_hash: String,
    pub hypothesis_hash: String,
}

impl ContentKey {
    pub fn new(model: &str, premise: &str, hypothesis: &str) -> Self {
        Self {
            model: model.to_string(),
            premise_hash: text_hash(premise),
            hypothesis_hash: text_hash(hypothesis),
        }
    }
}

/// Resolves pairs to logits through the configured backend.
pub struct Predictor {
    cfg: EndpointConfig,
    lexicon: Option<OccupationLexicon>,
    offline: Option<PredictionStore>,
    cache: Option<PredictionStore>,
    endpoint_calls: AtomicUsize,
}

impl Predictor {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let offline = match &cfg.backend {
            Backend::Offline { path } => Some(PredictionStore::open_read_only(path)?),
            _ => None,
        };
        let cache = match (&cfg.backend, &cfg.cache) {
            (Backend::Http { .. }, Some(path)) => Some(PredictionStore::open_append(path)?),
            _ => None,
        };
        Ok(Self {
            cfg,
            lexicon: None,
            offline,
            cache,
            endpoint_calls: AtomicUsize::new(0),
        })
    }

    /// Lexicon used by the stereotyped mock to find the premise occupation.
    pub fn with_lexicon(mut self, lexicon: OccupationLexicon) -> Self {
        self.lexicon = Some(lexicon);
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    pub fn model_tag(&self) -> &str {
        &self.cfg.model_tag
    }

    /// HTTP requests issued so far (including retries).
    pub fn endpoint_calls(&self) -> usize {
        self.endpoint_calls.load(Ordering::SeqCst)
    }

    /// One record per input pair, in input order.
    pub fn predict_batch(&self, pairs: &[PairRequest]) -> Result<Vec<PredictionRecord>> {
        let logits = match &self.cfg.backend {
            Backend::Mock(profile) => {
                let bundled;
                let lex = match &self.lexicon {
                    Some(l) => l,
                    None => {
                        bundled = OccupationLexicon::bundled();
                        &bundled
                    }
                };
                pairs
                    .iter()
                    .map(|p| mock_predict(&p.premise, &p.hypothesis, profile, lex))
                    .collect::<Result<Vec<_>>>()?
            }
            Backend::Offline { .. } => self.lookup_offline(pairs)?,
            Backend::Http { url } => self.fetch_http(url, pairs)?,
        };
        Ok(pairs
            .iter()
            .zip(logits)
            .map(|(p, logits)| PredictionRecord {
                probe_id: p.probe_id.clone(),
                side: p.side,
                logits,
                model_tag: self.cfg.model_tag.clone(),
            })
            .collect())
    }

    fn lookup_offline(&self, pairs: &[PairRequest]) -> Result<Vec<Logits3>> {
        let store = self.offline.as_ref().expect("offline backend has a store");
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            match store.get(&ContentKey::new(&self.cfg.model_tag, &p.premise, &p.hypothesis)) {
                Some(l) => out.push(l),
                None => missing.push(p.probe_id.clone()),
            }
        }
        if !missing.is_empty() {
            missing.dedup();
            return Err(Error::MissingPrediction { probe_ids: missing });
        }
        Ok(out)
    }

    fn fetch_http(&self, url: &str, pairs: &[PairRequest]) -> Result<Vec<Logits3>> {
        let keys: Vec<ContentKey> = pairs
            .iter()
            .map(|p| ContentKey::new(&self.cfg.model_tag, &p.premise, &p.hypothesis))
            .collect();
        let mut resolved: HashMap<ContentKey, Logits3> = HashMap::new();
        if let Some(cache) = &self.cache {
            cache.refresh()?;
            for k in &keys {
                if let Some(l) = cache.get(k) {
                    resolved.insert(k.clone(), l);
                }
            }
        }

        // Unique uncached pairs, first occurrence wins.
        let mut todo: Vec<usize> = Vec::new();
        let mut queued = std::collections::HashSet::new();
        for (i, k) in keys.iter().enumerate() {
            if !resolved.contains_key(k) && queued.insert(k.clone()) {
                todo.push(i);
            }
        }

        if !todo.is_empty() {
            let client = http::Client::new(url, &self.cfg, &self.endpoint_calls);
            let work: Vec<(&PairRequest, &ContentKey)> =
                todo.iter().map(|&i| (&pairs[i], &keys[i])).collect();
            let fetched = client.fetch_all(&work)?;
            if let Some(cache) = &self.cache {
                let entries: Vec<StoredPrediction> = work
                    .iter()
                    .zip(&fetched)
                    .map(|((_, k), l)| StoredPrediction::new(k, *l))
                    .collect();
                cache.append(&entries)?;
            }
            for ((_, k), l) in work.into_iter().zip(fetched) {
                resolved.insert(k.clone(), l);
            }
        }
        Ok(keys.iter().map(|k| resolved[k]).collect())
    }
}

/// Convenience wrapper: build a predictor for `cfg` and run one batch.
pub fn predict_batch(pairs: &[PairRequest], cfg: &EndpointConfig) -> Result<Vec<PredictionRecord>> {
    Predictor::new(cfg.clone())?.predict_batch(pairs)
}
