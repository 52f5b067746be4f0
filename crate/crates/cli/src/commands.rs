use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use genderbias::challenge::{build_eval_set, ProbeSet};
use genderbias::corpus::{load_nli_corpus, write_corpus_jsonl, CorpusFormat};
use genderbias::lexicon::load_lexicons;
use genderbias::metrics::compare_runs;
use genderbias::pipeline::evaluate;
use genderbias::report::{
    artifact_stem, emit_debias_comparison, emit_occupation_profile, emit_summary_table, load_run, ArtifactKind,
    RunManifest, MANIFEST_FILE, METRICS_FILE, OUTCOMES_FILE,
};
use genderbias::{augment_corpus, Error, Predictor, TOOLKIT_VERSION};
use serde::Serialize;

use crate::config::{require_file, RunConfig};

pub const PROBES_FILE: &str = "probes.jsonl";
pub const BUILD_REPORT_FILE: &str = "build_report.json";

/// Failures writing outputs are pipeline errors even when the OS reports
/// "not found" (e.g. a missing parent on a read-only mount).
fn write_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Error> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::config("out", "an output directory is required (--out)"))?;
    fs::create_dir_all(&dir).map_err(|e| write_err(&dir, e))?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(path, body).map_err(|e| write_err(path, e))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn build(cfg: &RunConfig) -> Result<(), Error> {
    let build_cfg = cfg.build_config()?;
    let dir = out_dir(cfg)?;
    let out = build_eval_set(&build_cfg)?;
    let probes_path = dir.join(PROBES_FILE);
    out.probe_set.write(&probes_path)?;
    write_json(&dir.join(BUILD_REPORT_FILE), &out.report)?;
    eprintln!(
        "wrote {} probes ({} premises kept of {} examined) to {}",
        out.report.total_probes,
        out.report.stages.accepted,
        out.report.stages.examined,
        probes_path.display()
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<(), Error> {
    let probes_path = cfg
        .eval
        .probes
        .clone()
        .ok_or_else(|| Error::config("eval.probes", "a probe-set file is required (--probes)"))?;
    require_file("eval.probes", Some(&probes_path))?;
    let endpoint = cfg.endpoint_config()?;
    let lexicons = load_lexicons(&cfg.lexicon_paths()?)?;
    let dir = out_dir(cfg)?;
    let probes = ProbeSet::read(&probes_path)?;

    let started_at = unix_now();
    let predictor = Predictor::new(endpoint)?.with_lexicon(lexicons.occupations.clone());
    let result = evaluate(&probes, &predictor, &lexicons)?;
    eprintln!("endpoint calls: {}", predictor.endpoint_calls());

    let header = &probes.header;
    let eval_set = cfg.eval.eval_set.clone().unwrap_or_else(|| {
        probes_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "probes".into())
    });
    let manifest = RunManifest {
        model_tag: predictor.model_tag().to_string(),
        eval_set,
        probe_set_id: header.probe_set_id.clone(),
        config_hash: header.config_hash.clone(),
        distribution: header.distribution.short().to_string(),
        started_at,
        finished_at: unix_now(),
        toolkit_version: TOOLKIT_VERSION.to_string(),
        accuracy: cfg.eval.accuracy,
    };

    let outcomes_path = dir.join(OUTCOMES_FILE);
    let file = fs::File::create(&outcomes_path).map_err(|e| write_err(&outcomes_path, e))?;
    let mut w = BufWriter::new(file);
    for o in &result.outcomes {
        serde_json::to_writer(&mut w, o)?;
        w.write_all(b"\n").map_err(|e| write_err(&outcomes_path, e))?;
    }
    w.flush().map_err(|e| write_err(&outcomes_path, e))?;
    write_json(&dir.join(METRICS_FILE), &result.run_metrics(&header.probe_set_id))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;

    let stem = |kind| artifact_stem(&manifest.model_tag, &manifest.eval_set, &manifest.distribution, kind);
    emit_summary_table(&[(manifest.clone(), result.summary)])?.write(&dir, &stem(ArtifactKind::Summary))?;
    emit_occupation_profile(&result.breakdown, &lexicons.occupations, &lexicons.cps)?
        .write(&dir, &stem(ArtifactKind::Occupations))?;

    println!("{}", serde_json::to_string(&result.summary)?);
    Ok(())
}

pub fn augment(cfg: &RunConfig) -> Result<(), Error> {
    let input = cfg
        .augment
        .input
        .clone()
        .ok_or_else(|| Error::config("augment.input", "an input corpus is required (--input)"))?;
    require_file("augment.input", Some(&input))?;
    let output = cfg
        .augment
        .output
        .clone()
        .ok_or_else(|| Error::config("augment.output", "an output path is required (--output)"))?;
    let scope = cfg.augment_scope()?;
    let lexicons = load_lexicons(&cfg.lexicon_paths()?)?;

    let corpus = load_nli_corpus(&input, CorpusFormat::from_path(&input))?;
    let (records, stats) = augment_corpus(&corpus.records, &lexicons.occupations, &lexicons.gender_terms, scope);

    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| write_err(parent, e))?;
    }
    let file = fs::File::create(&output).map_err(|e| write_err(&output, e))?;
    let mut w = BufWriter::new(file);
    write_corpus_jsonl(&records, &mut w)?;
    w.flush().map_err(|e| write_err(&output, e))?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

pub fn compare(before: &Path, after: &Path, out: Option<&Path>) -> Result<(), Error> {
    let (_, before_metrics) = load_run(before)?;
    let (after_manifest, after_metrics) = load_run(after)?;
    let delta = compare_runs(&before_metrics, &after_metrics)?;
    let dir = out.unwrap_or(after);
    let stem = artifact_stem(
        &after_manifest.model_tag,
        &after_manifest.eval_set,
        &after_manifest.distribution,
        ArtifactKind::Debias,
    );
    let (csv_path, _) = emit_debias_comparison(&delta)?.write(dir, &stem)?;
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}
