//! Fixtures shared by the integration tests of both crates: synthetic NLI
//! corpora and a minimal `/predict` HTTP server.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use serde_json::{json, Value};

const VERBS: [&str; 8] = ["opened", "closed", "painted", "cleaned", "moved", "checked", "fixed", "carried"];
const OBJECTS: [&str; 8] = ["door", "window", "box", "table", "car", "chair", "fence", "lamp"];

/// Premises mentioning exactly one occupation, short and free of gendered
/// words or names, so every one of them passes the premise filter.
pub fn clean_premises(occupation: &str, count: usize) -> Vec<String> {
    clean_premises_from(occupation, count, 0, "old")
}

/// `count` distinct premises starting at verb/object combination `offset`
/// (wrapping), using `adjective` on the object.
pub fn clean_premises_from(occupation: &str, count: usize, offset: usize, adjective: &str) -> Vec<String> {
    let combos = VERBS.len() * OBJECTS.len();
    assert!(count <= combos, "at most {combos} clean premises per occupation");
    (0..count)
        .map(|i| {
            let k = (offset + i) % combos;
            format!("The {occupation} {} the {adjective} {}.", VERBS[k / OBJECTS.len()], OBJECTS[k % OBJECTS.len()])
        })
        .collect()
}

/// Premises that the filter must reject.
pub const REJECTED_PREMISES: [&str; 6] = [
    "The nurse and the driver opened the door.",
    "The teacher said he was tired.",
    "The cashier met her friend.",
    "Emily the baker fixed the oven.",
    "The mechanic walked slowly all the way down the long winding road today.",
    "A dog chased the ball.",
];

/// One JSONL line in MNLI field naming.
pub fn mnli_line(id: &str, premise: &str, hypothesis: &str, label: &str) -> String {
    json!({
        "pairID": id,
        "sentence1": premise,
        "sentence2": hypothesis,
        "gold_label": label,
        "genre": "fiction",
    })
    .to_string()
}

/// Writes an MNLI-style corpus with the given number of clean premises per
/// occupation (each starting at a different combination) plus the rejected
/// fixtures, and returns the record count.
pub fn write_mnli_corpus(path: &Path, occupations: &[(&str, usize)]) -> usize {
    let labels = ["entailment", "neutral", "contradiction"];
    let mut lines = Vec::new();
    for (k, (occ, n)) in occupations.iter().enumerate() {
        for (i, p) in clean_premises_from(occ, *n, 7 * k, "old").into_iter().enumerate() {
            let id = format!("{}-{i}", occ.replace(' ', "_"));
            lines.push(mnli_line(&id, &p, "Something happened.", labels[i % 3]));
        }
    }
    for (i, p) in REJECTED_PREMISES.iter().enumerate() {
        lines.push(mnli_line(&format!("rej-{i}"), p, "Something happened.", "neutral"));
    }
    let n = lines.len();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
    n
}

/// Handler result: HTTP status and response body.
pub type Reply = (u16, String);

pub struct PredictServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl PredictServer {
    /// Serves `POST /predict` on an ephemeral port until the process exits.
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Value) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let handler = Arc::new(handler);
        let counter = requests.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                let counter = counter.clone();
                thread::spawn(move || serve_connection(stream, &*handler, &counter));
            }
        });
        Self { url, requests }
    }

    /// Deterministic logits derived from the hypothesis text: entailment wins
    /// for hypotheses containing "female".
    pub fn deterministic() -> Self {
        Self::start(|req| {
            let logits: Vec<Value> = req["pairs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|p| {
                    let h = p["hypothesis"].as_str().unwrap();
                    let e = if h.contains("female") { 1.5 } else { 0.5 };
                    let c = (p["premise"].as_str().unwrap().len() % 7) as f64 / 7.0;
                    json!([e, 0.0, c])
                })
                .collect();
            (200, json!({ "logits": logits }).to_string())
        })
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

fn serve_connection(stream: TcpStream, handler: &(dyn Fn(&Value) -> Reply + Send + Sync), counter: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    loop {
        let mut content_length = 0usize;
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        counter.fetch_add(1, Ordering::SeqCst);
        let (status, reply) = if request_line.starts_with("POST") && request_line.contains("/predict") {
            match serde_json::from_slice::<Value>(&body) {
                Ok(v) => handler(&v),
                Err(_) => (400, "{}".to_string()),
            }
        } else {
            (404, "{}".to_string())
        };
        let head = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            reply.len()
        );
        if writer.write_all(head.as_bytes()).is_err() || writer.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}
