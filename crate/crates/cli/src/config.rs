//! TOML run configuration. Relative paths resolve against the config file's
//! directory; command-line flags override file values.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use genderbias::augment::AugmentScope;
use genderbias::challenge::{BuildConfig, CorpusSpec, Distribution, TemplateSetId};
use genderbias::corpus::{CorpusFormat, Source};
use genderbias::lexicon::LexiconPaths;
use genderbias::predictor::{Backend, EndpointConfig, MockProfile};
use genderbias::Error;
use serde::Deserialize;

pub const DEFAULT_PER_OCCUPATION: usize = 50;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub per_occupation: Option<usize>,
    pub templates: Option<String>,
    pub distribution: Option<String>,
    pub max_tokens: Option<usize>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Vec<CorpusEntry>,
    #[serde(default)]
    pub lexicons: LexiconSection,
    #[serde(default)]
    pub endpoint: EndpointSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub augment: AugmentSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub format: Option<String>,
    pub source: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexiconSection {
    pub occupations: Option<PathBuf>,
    pub gender_terms: Option<PathBuf>,
    pub names: Option<PathBuf>,
    pub cps: Option<PathBuf>,
    pub ner_flags: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub url: Option<String>,
    pub predictions: Option<PathBuf>,
    pub mock: Option<String>,
    pub model: Option<String>,
    pub batch_size: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub retries: Option<u32>,
    pub concurrency: Option<usize>,
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub probes: Option<PathBuf>,
    pub eval_set: Option<String>,
    /// Externally measured task accuracy, copied into the summary table.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSection {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub scope: Option<String>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn resolve_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        resolve(base, p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::config("--config", format!("{} not found", path.display())),
            _ => Error::config("--config", e.to_string()),
        })?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::config("--config", e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for c in &mut cfg.corpus {
            resolve(base, &mut c.path);
        }
        resolve_opt(base, &mut cfg.out);
        let l = &mut cfg.lexicons;
        for p in [&mut l.occupations, &mut l.gender_terms, &mut l.names, &mut l.cps, &mut l.ner_flags] {
            resolve_opt(base, p);
        }
        resolve_opt(base, &mut cfg.endpoint.predictions);
        resolve_opt(base, &mut cfg.endpoint.cache);
        resolve_opt(base, &mut cfg.eval.probes);
        resolve_opt(base, &mut cfg.augment.input);
        resolve_opt(base, &mut cfg.augment.output);
        Ok(cfg)
    }

    pub fn lexicon_paths(&self) -> Result<LexiconPaths, Error> {
        let l = &self.lexicons;
        let named = [
            ("lexicons.occupations", &l.occupations),
            ("lexicons.gender_terms", &l.gender_terms),
            ("lexicons.names", &l.names),
            ("lexicons.cps", &l.cps),
            ("lexicons.ner_flags", &l.ner_flags),
        ];
        for (field, p) in named {
            require_file(field, p.as_deref())?;
        }
        Ok(LexiconPaths {
            occupations: l.occupations.clone(),
            gender_terms: l.gender_terms.clone(),
            names: l.names.clone(),
            cps: l.cps.clone(),
        })
    }

    pub fn build_config(&self) -> Result<BuildConfig, Error> {
        if self.corpus.is_empty() {
            return Err(Error::config("corpus", "at least one [[corpus]] entry or --corpus is required"));
        }
        let mut sources = Vec::new();
        for (i, c) in self.corpus.iter().enumerate() {
            require_file(&format!("corpus[{i}].path"), Some(&c.path))?;
            let format = match c.format.as_deref() {
                None => None,
                Some("jsonl") => Some(CorpusFormat::Jsonl),
                Some("tsv") => Some(CorpusFormat::Tsv),
                Some(other) => {
                    return Err(Error::config(format!("corpus[{i}].format"), format!("unknown format {other:?}")))
                }
            };
            let source = match c.source.as_deref() {
                None => None,
                Some(s) => Some(Source::parse(s).ok_or_else(|| {
                    Error::config(format!("corpus[{i}].source"), format!("unknown source {s:?}"))
                })?),
            };
            sources.push(CorpusSpec {
                path: c.path.clone(),
                format,
                source,
            });
        }
        let per_occupation = self.per_occupation.unwrap_or(DEFAULT_PER_OCCUPATION);
        if per_occupation == 0 {
            return Err(Error::config("per_occupation", "must be at least 1"));
        }
        let max_tokens = self.max_tokens.unwrap_or(10);
        if max_tokens == 0 {
            return Err(Error::config("max_tokens", "must be at least 1"));
        }
        Ok(BuildConfig {
            sources,
            lexicons: self.lexicon_paths()?,
            ner_flags: self.lexicons.ner_flags.clone(),
            template_set: self.template_set()?,
            per_occupation,
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            max_tokens,
            distribution: self.distribution()?,
        })
    }

    pub fn template_set(&self) -> Result<TemplateSetId, Error> {
        match self.templates.as_deref() {
            None => Ok(TemplateSetId::Fixed),
            Some(t) => TemplateSetId::parse(t)
                .ok_or_else(|| Error::config("templates", format!("unknown template set {t:?}"))),
        }
    }

    pub fn distribution(&self) -> Result<Distribution, Error> {
        match self.distribution.as_deref() {
            None => Ok(Distribution::InDistribution),
            Some(d) => Distribution::parse(d)
                .ok_or_else(|| Error::config("distribution", format!("unknown distribution {d:?}"))),
        }
    }

    pub fn endpoint_config(&self) -> Result<EndpointConfig, Error> {
        let e = &self.endpoint;
        let chosen = [e.url.is_some(), e.predictions.is_some(), e.mock.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if chosen != 1 {
            return Err(Error::config(
                "endpoint",
                "exactly one of --endpoint, --predictions or --mock is required",
            ));
        }
        let mut cfg = if let Some(url) = &e.url {
            let model = e
                .model
                .clone()
                .ok_or_else(|| Error::config("endpoint.model", "a model tag is required with an HTTP endpoint"))?;
            EndpointConfig::http(url.clone(), model)
        } else if let Some(path) = &e.predictions {
            require_file("endpoint.predictions", Some(path))?;
            let model = e.model.clone().ok_or_else(|| {
                Error::config("endpoint.model", "a model tag is required with an offline predictions file")
            })?;
            EndpointConfig {
                backend: Backend::Offline { path: path.clone() },
                ..EndpointConfig::http(String::new(), model)
            }
        } else {
            let raw = e.mock.as_deref().unwrap_or_default();
            let profile = MockProfile::parse(raw)
                .ok_or_else(|| Error::config("endpoint.mock", format!("unknown mock profile {raw:?}")))?;
            let mut cfg = EndpointConfig::mock(profile);
            if let Some(m) = &e.model {
                cfg.model_tag = m.clone();
            }
            cfg
        };
        if let Some(b) = e.batch_size {
            cfg.batch_size = b;
        }
        if let Some(t) = e.timeout_secs {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("endpoint.timeout_secs", "must be a positive number"));
            }
            cfg.timeout = Duration::from_secs_f64(t);
        }
        if let Some(r) = e.retries {
            cfg.retries = r;
        }
        if let Some(c) = e.concurrency {
            cfg.concurrency = c;
        }
        cfg.cache = e.cache.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn augment_scope(&self) -> Result<AugmentScope, Error> {
        match self.augment.scope.as_deref() {
            None => Ok(AugmentScope::default()),
            Some(s) => AugmentScope::parse(s)
                .ok_or_else(|| Error::config("augment.scope", format!("unknown scope {s:?}"))),
        }
    }
}

pub fn require_file(field: &str, path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) if !p.is_file() => Err(Error::config(field, format!("{} does not exist", p.display()))),
        _ => Ok(()),
    }
}
