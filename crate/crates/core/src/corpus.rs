//! NLI corpus ingestion and the shared word tokenizer.
//!
//! The canonical interchange format is JSONL with the fields
//! `{id, premise, hypothesis, gold_label, source}`. The JSONL reader also accepts
//! the field names used by the SNLI/MNLI/ANLI/QNLI distribution files
//! (`sentence1`, `sentence2`, `pairID`, `context`, `uid`, `label`, ...), and a TSV
//! reader covers the tab-separated releases.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldLabel {
    Entailment,
    Neutral,
    Contradiction,
    Unlabeled,
}

impl GoldLabel {
    /// Maps a raw label string to a gold label. Anything unrecognised, including
    /// SNLI's `-` (no annotator consensus), becomes [`GoldLabel::Unlabeled`].
    pub fn parse(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "entailment" | "e" => GoldLabel::Entailment,
            "neutral" | "n" => GoldLabel::Neutral,
            "contradiction" | "c" => GoldLabel::Contradiction,
            _ => GoldLabel::Unlabeled,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "SNLI")]
    Snli,
    #[serde(rename = "MNLI")]
    Mnli,
    #[serde(rename = "ANLI")]
    Anli,
    #[serde(rename = "QNLI")]
    Qnli,
    #[serde(rename = "other")]
    Other,
}

impl Source {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "snli" => Some(Source::Snli),
            "mnli" | "multinli" => Some(Source::Mnli),
            "anli" => Some(Source::Anli),
            "qnli" => Some(Source::Qnli),
            "other" => Some(Source::Other),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Snli => "SNLI",
            Source::Mnli => "MNLI",
            Source::Anli => "ANLI",
            Source::Qnli => "QNLI",
            Source::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NliRecord {
    pub id: String,
    pub premise: String,
    #[serde(default)]
    pub hypothesis: String,
    pub gold_label: GoldLabel,
    pub source: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// Guesses the format from the file extension; anything but `.tsv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Fail on the first malformed line instead of skipping it.
    pub strict: bool,
    /// Source tag for records that do not carry one.
    pub source: Option<Source>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub records: Vec<NliRecord>,
    /// Lines that could not be parsed, had an empty premise, or repeated an id.
    pub skipped: usize,
}

pub fn load_nli_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<LoadedCorpus> {
    load_nli_corpus_with(path, format, &LoadOptions::default())
}

pub fn load_nli_corpus_with(
    path: impl AsRef<Path>,
    format: CorpusFormat,
    opts: &LoadOptions,
) -> Result<LoadedCorpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut builder = CorpusBuilder::new(path, opts);
    match format {
        CorpusFormat::Jsonl => {
            for (idx, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = parse_json_line(line, idx + 1, opts.source);
                builder.push(idx + 1, parsed)?;
            }
        }
        CorpusFormat::Tsv => parse_tsv(&content, &mut builder, opts.source)?,
    }
    builder.finish()
}

struct CorpusBuilder {
    path: PathBuf,
    strict: bool,
    seen: HashSet<String>,
    records: Vec<NliRecord>,
    skipped: usize,
}

impl CorpusBuilder {
    fn new(path: &Path, opts: &LoadOptions) -> Self {
        Self {
            path: path.to_path_buf(),
            strict: opts.strict,
            seen: HashSet::new(),
            records: Vec::new(),
            skipped: 0,
        }
    }

    fn push(&mut self, line: usize, parsed: std::result::Result<NliRecord, String>) -> Result<()> {
        let outcome = parsed.and_then(|rec| {
            if rec.premise.trim().is_empty() {
                Err("empty premise".to_string())
            } else if self.seen.contains(&rec.id) {
                Err(format!("duplicate id '{}'", rec.id))
            } else {
                Ok(rec)
            }
        });
        match outcome {
            Ok(rec) => {
                self.seen.insert(rec.id.clone());
                self.records.push(rec);
                Ok(())
            }
            Err(reason) if self.strict => Err(Error::MalformedRecord {
                path: self.path.clone(),
                line,
                reason,
            }),
            Err(_) => {
                self.skipped += 1;
                Ok(())
            }
        }
    }

    fn finish(self) -> Result<LoadedCorpus> {
        if self.records.is_empty() {
            return Err(Error::EmptyCorpus(self.path));
        }
        Ok(LoadedCorpus {
            records: self.records,
            skipped: self.skipped,
        })
    }
}

#[derive(Deserialize)]
struct RawJsonRecord {
    #[serde(default, alias = "pairID", alias = "uid", alias = "idx")]
    id: Option<Value>,
    #[serde(default, alias = "sentence1", alias = "context", alias = "sentence")]
    premise: Option<String>,
    #[serde(default, alias = "sentence2", alias = "question")]
    hypothesis: Option<String>,
    #[serde(default, alias = "label")]
    gold_label: Option<Value>,
    #[serde(default)]
    source: Option<String>,
}

fn parse_json_line(
    line: &str,
    line_no: usize,
    default_source: Option<Source>,
) -> std::result::Result<NliRecord, String> {
    let raw: RawJsonRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let premise = raw.premise.ok_or("missing premise")?;
    let source = raw
        .source
        .as_deref()
        .and_then(Source::parse)
        .or(default_source)
        .unwrap_or(Source::Other);
    let id = match raw.id {
        Some(Value::String(s)) => s,
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::Null) | None => default_id(source, line_no),
        Some(other) => return Err(format!("unsupported id value {other}")),
    };
    let gold_label = match raw.gold_label {
        Some(Value::String(s)) => GoldLabel::parse(&s),
        _ => GoldLabel::Unlabeled,
    };
    Ok(NliRecord {
        id,
        premise,
        hypothesis: raw.hypothesis.unwrap_or_default(),
        gold_label,
        source,
    })
}

fn default_id(source: Source, line_no: usize) -> String {
    format!("{}-{}", source.as_str().to_ascii_lowercase(), line_no)
}

/// Column lookup for the TSV releases. QNLI's declarative `sentence` column is
/// used as the premise and its `question` as the hypothesis.
fn parse_tsv(content: &str, builder: &mut CorpusBuilder, source: Option<Source>) -> Result<()> {
    let mut lines = content.lines().enumerate();
    let Some((_, header)) = lines.find(|(_, l)| !l.trim().is_empty()) else {
        return Ok(());
    };
    let cols: Vec<String> = header.split('\t').map(|c| c.trim().to_string()).collect();
    let find = |names: &[&str]| {
        cols.iter()
            .position(|c| names.iter().any(|n| c.eq_ignore_ascii_case(n)))
    };
    let premise_col = find(&["premise", "sentence1", "sentence", "context"]).ok_or_else(|| {
        Error::MalformedRecord {
            path: builder.path.clone(),
            line: 1,
            reason: "TSV header has no premise column".into(),
        }
    })?;
    let hyp_col = find(&["hypothesis", "sentence2", "question"]);
    let label_col = find(&["gold_label", "label"]);
    let id_col = find(&["id", "pairid", "uid", "index", "idx"]);
    let source = source.unwrap_or(Source::Other);

    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let line_no = idx + 1;
        let parsed = match fields.get(premise_col) {
            None => Err(format!("expected at least {} columns", premise_col + 1)),
            Some(premise) => {
                let get = |c: Option<usize>| c.and_then(|c| fields.get(c)).map(|s| s.to_string());
                Ok(NliRecord {
                    id: get(id_col)
                        .filter(|s| !s.is_empty())
                        .unwrap_or_else(|| default_id(source, line_no)),
                    premise: premise.to_string(),
                    hypothesis: get(hyp_col).unwrap_or_default(),
                    gold_label: get(label_col)
                        .map(|l| GoldLabel::parse(&l))
                        .unwrap_or(GoldLabel::Unlabeled),
                    source,
                })
            }
        };
        builder.push(line_no, parsed)?;
    }
    Ok(())
}

/// Writes records in the canonical JSONL schema, one object per line.
pub fn write_corpus_jsonl<W: Write>(records: &[NliRecord], mut out: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(|e| Error::io("<corpus output>", e))?;
    }
    Ok(())
}

/// Byte ranges of the words of `text`: whitespace-separated chunks with leading
/// and trailing non-alphanumeric characters removed. Chunks that are pure
/// punctuation yield nothing.
pub fn word_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut offset = 0;
    for chunk in text.split_inclusive(char::is_whitespace) {
        let start = offset;
        offset += chunk.len();
        let trimmed_start = chunk.trim_start_matches(|c: char| !c.is_alphanumeric());
        let lead = chunk.len() - trimmed_start.len();
        let core = trimmed_start.trim_end_matches(|c: char| !c.is_alphanumeric());
        if !core.is_empty() {
            spans.push(start + lead..start + lead + core.len());
        }
    }
    spans
}

/// Lowercased words of `text`; internal apostrophes and hyphens are kept.
pub fn tokenize(text: &str) -> Vec<String> {
    word_spans(text)
        .into_iter()
        .map(|r| text[r].to_lowercase())
        .collect()
}
