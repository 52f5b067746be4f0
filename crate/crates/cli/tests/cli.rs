#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const OCCUPATIONS: [&str; 38] = [
    "attendant", "cashier", "teacher", "nurse", "assistant", "secretary", "auditor", "cleaner",
    "receptionist", "clerk", "counselor", "designer", "hairdresser", "writer", "housekeeper",
    "librarian", "accountant", "editor", "tailor", "driver", "supervisor", "janitor", "cook", "ceo",
    "laborer", "construction worker", "baker", "developer", "carpenter", "manager", "lawyer",
    "farmer", "salesperson", "physician", "guard", "analyst", "mechanic", "sheriff",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genderbias"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small corpus with three clean premises per occupation.
fn corpus(dir: &Path) -> PathBuf {
    let path = dir.join("mnli.jsonl");
    let occs: Vec<(&str, usize)> = OCCUPATIONS.iter().map(|o| (*o, 3)).collect();
    common::write_mnli_corpus(&path, &occs);
    path
}

fn build(dir: &Path, out: &Path) -> PathBuf {
    let c = corpus(dir);
    let o = run(&["build", "--corpus", s(&c), "--per-occupation", "2", "--seed", "5", "--out", s(out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("probes.jsonl")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn help_exits_zero() {
    for args in [
        vec!["--help"],
        vec!["build", "--help"],
        vec!["eval", "--help"],
        vec!["augment", "--help"],
        vec!["compare", "--help"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
    }
}

#[test]
fn build_writes_balanced_probe_set() {
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("a"));
    let text = fs::read_to_string(&probes).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 38);
    assert!(text.starts_with("# {"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("a/build_report.json")).unwrap()).unwrap();
    assert_eq!(report["total_probes"], 76);

    // Same inputs, same seed: byte-identical outputs.
    build(dir.path(), &dir.path().join("b"));
    assert_eq!(read_dir_sorted(&dir.path().join("a")), read_dir_sorted(&dir.path().join("b")));
}

#[test]
fn zero_per_occupation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let o = run(&["build", "--corpus", s(&c), "--per-occupation", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("per_occupation"), "{}", stderr(&o));
}

#[test]
fn missing_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "per_occupation = 2\n\n[[corpus]]\npath = \"nope.jsonl\"\n").unwrap();
    let o = run(&["build", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corpus[0].path"), "{}", stderr(&o));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 1\nper_occupation = 3\ntemplates = \"occupation_explicit\"\nout = \"built\"\n\n[[corpus]]\npath = \"mnli.jsonl\"\nsource = \"MNLI\"\n",
    )
    .unwrap();
    let o = run(&["build", "--config", s(&cfg), "--per-occupation", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("built/probes.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1 + 38);
    assert!(text.contains("\"template_set\":\"occupation_explicit\""));
}

fn summary(o: &Output) -> Value {
    assert!(o.status.success(), "{}", stderr(o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn eval_with_mocks() {
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("build"));

    let fair = summary(&run(&["eval", "--probes", s(&probes), "--mock", "neutral_fair", "--out", s(&dir.path().join("fair"))]));
    assert_eq!(fair["S"], 100.0);
    assert_eq!(fair["delta_P"], 0.0);
    assert_eq!(fair["B"], 0.0);
    assert_eq!(fair["n"], 76);

    let st = summary(&run(&[
        "eval", "--probes", s(&probes), "--mock", "stereotyped:0.2", "--out", s(&dir.path().join("st")),
    ]));
    assert_eq!(st["B"], 100.0);

    let files: Vec<String> = read_dir_sorted(&dir.path().join("fair")).into_iter().map(|(n, _)| n).collect();
    assert_eq!(
        files,
        [
            "manifest.json",
            "metrics.json",
            "mock-neutral-fair_probes_I_occupations.csv",
            "mock-neutral-fair_probes_I_occupations.json",
            "mock-neutral-fair_probes_I_summary.csv",
            "mock-neutral-fair_probes_I_summary.json",
            "outcomes.jsonl",
        ]
    );
    let occ = fs::read_to_string(dir.path().join("fair/mock-neutral-fair_probes_I_occupations.csv")).unwrap();
    assert_eq!(occ.lines().count(), 1 + 38 + 1);
}

fn without_manifest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    read_dir_sorted(dir).into_iter().filter(|(n, _)| n != "manifest.json").collect()
}

#[test]
fn eval_over_http_with_warm_cache() {
    let server = common::PredictServer::deterministic();
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("build"));
    let cache = dir.path().join("cache.jsonl");
    let eval = |out: &str| {
        run(&[
            "eval", "--probes", s(&probes), "--endpoint", &server.url, "--model", "tiny-nli", "--cache",
            s(&cache), "--out", s(&dir.path().join(out)),
        ])
    };
    let first = eval("one");
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(!stderr(&first).contains("endpoint calls: 0"));
    let before = server.request_count();

    let second = eval("two");
    assert!(second.status.success(), "{}", stderr(&second));
    assert!(stderr(&second).contains("endpoint calls: 0"), "{}", stderr(&second));
    assert_eq!(server.request_count(), before);
    assert_eq!(without_manifest(&dir.path().join("one")), without_manifest(&dir.path().join("two")));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn endpoint_failure_exits_4() {
    let server = common::PredictServer::start(|_| (500, "{}".into()));
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("build"));
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("[endpoint]\nurl = \"{}\"\nmodel = \"m\"\nretries = 0\n", server.url)).unwrap();
    let o = run(&["eval", "--config", s(&cfg), "--probes", s(&probes), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn eval_requires_a_backend() {
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("build"));
    let o = run(&["eval", "--probes", s(&probes), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["eval", "--probes", s(&probes), "--mock", "bogus", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn augment_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("train.jsonl");
    let lines = [
        common::mnli_line("1", "The nurse said he was tired.", "Someone was tired.", "entailment"),
        common::mnli_line("2", "The cook opened the door.", "The door is open.", "entailment"),
        common::mnli_line("3", "A man walked home.", "A person walked.", "neutral"),
    ];
    fs::write(&input, lines.join("\n")).unwrap();
    let output = dir.path().join("out/aug.jsonl");
    let o = run(&["augment", "--input", s(&input), "--output", s(&output)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["eligible"], 2);
    assert_eq!(stats["swapped"], 1);
    assert_eq!(stats["output_size"], 4);
    let text = fs::read_to_string(&output).unwrap();
    let last: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["id"], "1-gs");
    assert_eq!(last["premise"], "The nurse said she was tired.");
    assert_eq!(last["gold_label"], "entailment");

    // A corpus without gendered terms comes back unchanged.
    let plain = dir.path().join("plain.jsonl");
    fs::write(&plain, &lines[1]).unwrap();
    let plain_out = dir.path().join("plain_out.jsonl");
    let o = run(&["augment", "--input", s(&plain), "--output", s(&plain_out), "--scope", "all_records"]);
    let stats: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stats["swapped"], 0);
    assert_eq!(fs::read_to_string(&plain_out).unwrap().lines().count(), 1);
}

#[test]
fn augment_unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("train.jsonl");
    fs::write(&input, common::mnli_line("1", "The nurse said he was tired.", "x", "neutral")).unwrap();
    // A regular file where a directory is expected.
    let blocker = dir.path().join("blocker");
    fs::write(&blocker, "").unwrap();
    let o = run(&["augment", "--input", s(&input), "--output", s(&blocker.join("aug.jsonl"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn compare_runs() {
    let dir = tempfile::tempdir().unwrap();
    let probes = build(dir.path(), &dir.path().join("build"));
    let before = dir.path().join("before");
    let after = dir.path().join("after");
    summary(&run(&["eval", "--probes", s(&probes), "--mock", "stereotyped:0.5", "--out", s(&before)]));
    summary(&run(&["eval", "--probes", s(&probes), "--mock", "stereotyped:0.5", "--out", s(&after)]));

    let out = dir.path().join("cmp");
    let o = run(&["compare", s(&before), s(&after), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("mock-stereotyped-0.5_probes_I_debias.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",0.00"), "{line}");
    }

    // A run on a different probe set.
    let c = corpus(dir.path());
    let other_build = dir.path().join("other_build");
    let b = run(&["build", "--corpus", s(&c), "--per-occupation", "1", "--out", s(&other_build)]);
    assert!(b.status.success());
    let other = dir.path().join("other");
    summary(&run(&["eval", "--probes", s(&other_build.join("probes.jsonl")), "--mock", "neutral_fair", "--out", s(&other)]));
    let o = run(&["compare", s(&before), s(&other)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("probe-set mismatch"), "{}", stderr(&o));

    let o = run(&["compare", s(&before), s(&dir.path().join("missing"))]);
    assert_eq!(o.status.code(), Some(2));
}
