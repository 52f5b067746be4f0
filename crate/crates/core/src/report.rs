//! CSV and JSON artifacts for evaluation runs.
//!
//! Numbers are written with `.` as decimal separator and two decimals. Files are
//! named `<model>_<evalset>_<dist>_<kind>.csv` with a sibling `.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lexicon::{CpsTable, Gender, OccupationLexicon};
use crate::metrics::{BreakdownReport, DeltaReport, MetricDeltas, MetricsSummary, RunMetrics};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_tag: String,
    pub eval_set: String,
    pub probe_set_id: String,
    pub config_hash: String,
    pub distribution: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub toolkit_version: String,
    #[serde(default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Summary,
    Occupations,
    Debias,
}

impl ArtifactKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ArtifactKind::Summary => "summary",
            ArtifactKind::Occupations => "occupations",
            ArtifactKind::Debias => "debias",
        }
    }
}

/// Rendered CSV text and the matching JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub csv: String,
    pub json: Value,
}

impl Artifact {
    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let err = |path: &Path, source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&csv_path, &self.csv).map_err(|e| err(&csv_path, e))?;
        let mut body = serde_json::to_string_pretty(&self.json)?;
        body.push('\n');
        fs::write(&json_path, body).map_err(|e| err(&json_path, e))?;
        Ok((csv_path, json_path))
    }
}

fn file_component(raw: &str) -> String {
    let s: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-') { c } else { '-' })
        .collect();
    if s.is_empty() {
        "unnamed".into()
    } else {
        s
    }
}

/// `<model>_<evalset>_<dist>_<kind>`, with unsafe characters replaced by `-`.
pub fn artifact_stem(model: &str, eval_set: &str, distribution: &str, kind: ArtifactKind) -> String {
    format!(
        "{}_{}_{}_{}",
        file_component(model),
        file_component(eval_set),
        file_component(distribution),
        kind.as_str()
    )
}

/// Two decimals, never `-0.00`.
pub fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt2).unwrap_or_default()
}

/// Value as stored in the CSV, used for best-value comparisons so that flags
/// agree with what a reader sees.
fn stored(x: f64) -> f64 {
    fmt2(x).parse().expect("formatted float parses")
}

fn csv_string(rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

const SUMMARY_HEADER: [&str; 12] = [
    "model", "eval_set", "distribution", "n", "Acc", "S", "delta_P", "B", "best_Acc", "best_S",
    "best_delta_P", "best_B",
];

/// One row per run. Best values are flagged within each (eval set, distribution)
/// group: highest Acc and S, lowest ΔP and B. Tied rows are all flagged.
pub fn emit_summary_table(runs: &[(RunManifest, MetricsSummary)]) -> Result<Artifact> {
    if runs.is_empty() {
        return Err(Error::config("runs", "at least one run is required"));
    }
    let cols: Vec<[Option<f64>; 4]> = runs
        .iter()
        .map(|(m, s)| {
            [m.accuracy, Some(s.s), Some(s.delta_p), Some(s.b)].map(|v| v.map(stored))
        })
        .collect();
    let maximize = [true, true, false, false];

    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, (m, _)) in runs.iter().enumerate() {
        groups.entry((&m.eval_set, &m.distribution)).or_default().push(i);
    }
    let mut best = vec![[false; 4]; runs.len()];
    for members in groups.values() {
        for c in 0..4 {
            let values = members.iter().filter_map(|&i| cols[i][c]);
            let target = if maximize[c] {
                values.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            } else {
                values.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            };
            if let Some(t) = target {
                for &i in members {
                    best[i][c] = cols[i][c] == Some(t);
                }
            }
        }
    }

    let mut rows = vec![SUMMARY_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    let mut json_rows = Vec::new();
    for (i, (m, s)) in runs.iter().enumerate() {
        let mut row = vec![
            m.model_tag.clone(),
            m.eval_set.clone(),
            m.distribution.clone(),
            s.n.to_string(),
            fmt_opt(m.accuracy),
            fmt2(s.s),
            fmt2(s.delta_p),
            fmt2(s.b),
        ];
        row.extend(best[i].iter().map(|b| b.to_string()));
        rows.push(row);
        json_rows.push(json!({
            "model": m.model_tag,
            "eval_set": m.eval_set,
            "distribution": m.distribution,
            "probe_set_id": m.probe_set_id,
            "n": s.n,
            "Acc": cols[i][0],
            "S": cols[i][1],
            "delta_P": cols[i][2],
            "B": cols[i][3],
            "ties": s.ties,
            "best": {
                "Acc": best[i][0],
                "S": best[i][1],
                "delta_P": best[i][2],
                "B": best[i][3],
            },
        }));
    }
    Ok(Artifact {
        csv: csv_string(&rows)?,
        json: Value::Array(json_rows),
    })
}

/// Per-occupation mean |p_f − p_m| next to the CPS dominance gap, both in
/// percent, sorted by gap (largest first; occupations without CPS data last).
/// The last row carries the Spearman coefficient.
pub fn emit_occupation_profile(
    report: &BreakdownReport,
    lexicon: &OccupationLexicon,
    cps: &CpsTable,
) -> Result<Artifact> {
    if report.by_occupation.is_empty() {
        return Err(Error::EmptyOutcomeSet);
    }
    let mut rows: Vec<(&String, f64, Option<f64>, Option<Gender>)> = report
        .by_occupation
        .iter()
        .map(|(occ, v)| {
            let gap = cps.gap(occ).map(|g| 100.0 * g);
            (occ, *v, gap, lexicon.get(occ).map(|e| e.dominant_gender))
        })
        .collect();
    rows.sort_by(|a, b| match (a.2, b.2) {
        (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.0.cmp(b.0)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.0.cmp(b.0),
    });

    let mut table = vec![["occupation", "mean_abs_diff", "cps_gap", "dominant_gender"]
        .map(String::from)
        .to_vec()];
    let mut json_rows = Vec::new();
    for (occ, v, gap, g) in &rows {
        let g = g.map(|g| g.as_str()).unwrap_or_default();
        table.push(vec![occ.to_string(), fmt2(*v), fmt_opt(*gap), g.to_string()]);
        json_rows.push(json!({
            "occupation": occ,
            "mean_abs_diff": stored(*v),
            "cps_gap": gap.map(stored),
            "dominant_gender": g,
        }));
    }
    table.push(vec![
        "spearman".into(),
        fmt_opt(report.cps_alignment),
        String::new(),
        String::new(),
    ]);
    Ok(Artifact {
        csv: csv_string(&table)?,
        json: json!({
            "occupations": json_rows,
            "spearman": report.cps_alignment.map(stored),
        }),
    })
}

/// Rows `metric × group` (group ∈ all, male, female) with before, after and
/// delta = after − before.
pub fn emit_debias_comparison(delta: &DeltaReport) -> Result<Artifact> {
    let groups: [(&str, Option<&MetricDeltas>); 3] = [
        ("all", Some(&delta.overall)),
        ("male", delta.by_dominance.get(&Gender::Male).and_then(Option::as_ref)),
        ("female", delta.by_dominance.get(&Gender::Female).and_then(Option::as_ref)),
    ];
    let mut table = vec![["metric", "group", "before", "after", "delta"].map(String::from).to_vec()];
    let mut json_rows = Vec::new();
    for metric in ["S", "delta_P", "B"] {
        for (group, d) in groups {
            let md = d.map(|d| match metric {
                "S" => d.s,
                "delta_P" => d.delta_p,
                _ => d.b,
            });
            // Delta of the stored values, so the columns stay consistent.
            let (before, after) = (md.map(|m| stored(m.before)), md.map(|m| stored(m.after)));
            let diff = before.zip(after).map(|(b, a)| a - b);
            table.push(vec![
                metric.into(),
                group.into(),
                fmt_opt(before),
                fmt_opt(after),
                fmt_opt(diff),
            ]);
            json_rows.push(json!({
                "metric": metric,
                "group": group,
                "before": before,
                "after": after,
                "delta": diff.map(stored),
            }));
        }
    }
    Ok(Artifact {
        csv: csv_string(&table)?,
        json: json!({ "probe_set_id": delta.probe_set_id, "rows": json_rows }),
    })
}

/// Loads the manifest and metrics that an evaluation wrote into `dir`.
pub fn load_run(dir: &Path) -> Result<(RunManifest, RunMetrics)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let metrics_path = dir.join(METRICS_FILE);
    if !manifest_path.is_file() || !metrics_path.is_file() {
        return Err(Error::MissingRun(dir.to_path_buf()));
    }
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let manifest = serde_json::from_str(&read(&manifest_path)?)?;
    let metrics = serde_json::from_str(&read(&metrics_path)?)?;
    Ok((manifest, metrics))
}
