//! Gender-occupation bias probes for natural-language-inference models.
//!
//! The crate covers the whole offline pipeline:
//!
//! - [`corpus`] and [`lexicon`] load NLI corpora and the occupation, gendered-term,
//!   name and CPS resources.
//! - [`challenge`] filters premises, balances occupations and expands hypothesis
//!   templates into female/male probe pairs.
//! - [`predictor`] obtains 3-class logits (HTTP endpoint, offline file, or a
//!   deterministic mock) and reduces them to entailment-vs-contradiction.
//! - [`metrics`] scores probes and aggregates S, ΔP and B.
//! - [`augment`] builds gender-swapped counterfactual training corpora.
//! - [`report`] writes the CSV/JSON artifacts.

pub mod augment;
pub mod challenge;
pub mod corpus;
pub mod error;
pub mod hashing;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod report;

pub use augment::{augment_corpus, gender_swap_text, AugmentScope, AugmentStats};
pub use challenge::{
    build_eval_set, BuildConfig, Distribution, ProbeInstance, ProbeSet, TemplateSet, TemplateSetId,
};
pub use corpus::{load_nli_corpus, tokenize, CorpusFormat, GoldLabel, NliRecord, Source};
pub use error::{Error, Result};
pub use lexicon::{
    CpsTable, Gender, GenderTermDictionary, Lexicons, NameGazetteer, OccupationEntry,
    OccupationLexicon,
};
pub use metrics::{aggregate, BreakdownReport, MetricsSummary, ProbeOutcome};
pub use predictor::{BinaryLabel, BinaryProbs, EndpointConfig, Logits3, MockProfile, Predictor};

/// Version string embedded in probe-set headers and run manifests.
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
