mod common;

use std::time::Duration;

use common::PredictServer;
use genderbias::predictor::{
    write_offline, Backend, ContentKey, PairRequest, Side, StoredPrediction,
};
use genderbias::{EndpointConfig, Error, Logits3, Predictor};
use serde_json::{json, Value};

fn pairs(n: usize) -> Vec<PairRequest> {
    (0..n)
        .map(|i| PairRequest {
            probe_id: format!("p{i}"),
            side: if i % 2 == 0 { Side::F } else { Side::M },
            premise: format!("The cook opened door number {i}."),
            hypothesis: if i % 2 == 0 {
                "This text speaks of a female profession".into()
            } else {
                "This text speaks of a male profession".into()
            },
        })
        .collect()
}

fn http_cfg(url: &str) -> EndpointConfig {
    let mut cfg = EndpointConfig::http(url, "test-model");
    cfg.batch_size = 3;
    cfg.retries = 1;
    cfg.timeout = Duration::from_secs(5);
    cfg
}

fn expected(p: &PairRequest) -> Logits3 {
    let e = if p.hypothesis.contains("female") { 1.5 } else { 0.5 };
    Logits3::new(e, 0.0, (p.premise.len() % 7) as f64 / 7.0)
}

#[test]
fn http_results_follow_input_order() {
    let server = PredictServer::deterministic();
    let mut cfg = http_cfg(&server.url);
    cfg.concurrency = 4;
    let input = pairs(20);
    let out = Predictor::new(cfg).unwrap().predict_batch(&input).unwrap();
    assert_eq!(out.len(), 20);
    for (p, r) in input.iter().zip(&out) {
        assert_eq!(r.probe_id, p.probe_id);
        assert_eq!(r.side, p.side);
        assert_eq!(r.logits, expected(p));
        assert_eq!(r.model_tag, "test-model");
    }
    // 20 pairs in batches of 3.
    assert_eq!(server.request_count(), 7);
}

#[test]
fn wire_request_shape() {
    let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::<Value>::new()));
    let log = seen.clone();
    let server = PredictServer::start(move |req| {
        log.lock().unwrap().push(req.clone());
        let n = req["pairs"].as_array().unwrap().len();
        (200, json!({ "logits": vec![[0.0, 0.0, 0.0]; n] }).to_string())
    });
    let input = pairs(2);
    Predictor::new(http_cfg(&server.url)).unwrap().predict_batch(&input).unwrap();
    let reqs = seen.lock().unwrap();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0]["model"], "test-model");
    assert_eq!(reqs[0]["pairs"][1]["premise"], input[1].premise.as_str());
    assert_eq!(reqs[0]["pairs"][1]["hypothesis"], input[1].hypothesis.as_str());
    assert_eq!(reqs[0]["pairs"][0].as_object().unwrap().len(), 2);
}

#[test]
fn two_value_rows_are_schema_errors() {
    let server = PredictServer::start(|req| {
        let n = req["pairs"].as_array().unwrap().len();
        (200, json!({ "logits": vec![[0.1, 0.2]; n] }).to_string())
    });
    let err = Predictor::new(http_cfg(&server.url)).unwrap().predict_batch(&pairs(4)).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch(_)), "{err:?}");
}

#[test]
fn row_count_mismatch_is_schema_error() {
    let server = PredictServer::start(|_| (200, json!({ "logits": [[0.0, 0.0, 0.0]] }).to_string()));
    let err = Predictor::new(http_cfg(&server.url)).unwrap().predict_batch(&pairs(3)).unwrap_err();
    assert!(matches!(err, Error::SchemaMismatch(_)), "{err:?}");
}

#[test]
fn permanent_failure_names_the_failing_probe() {
    let server = PredictServer::start(|req| {
        let pairs = req["pairs"].as_array().unwrap();
        if pairs.iter().any(|p| p["premise"].as_str().unwrap().contains("number 4.")) {
            return (500, "{}".into());
        }
        (200, json!({ "logits": vec![[1.0, 0.0, 0.0]; pairs.len()] }).to_string())
    });
    let err = Predictor::new(http_cfg(&server.url)).unwrap().predict_batch(&pairs(8)).unwrap_err();
    match err {
        Error::EndpointUnavailable { probe_ids, .. } => assert_eq!(probe_ids, vec!["p4".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_endpoint() {
    // Bind then drop to get a port with nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut cfg = http_cfg(&format!("http://127.0.0.1:{port}"));
    cfg.retries = 0;
    let err = Predictor::new(cfg).unwrap().predict_batch(&pairs(2)).unwrap_err();
    match err {
        Error::EndpointUnavailable { probe_ids, .. } => assert_eq!(probe_ids, vec!["p0", "p1"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn warm_cache_makes_no_calls() {
    let server = PredictServer::deterministic();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = http_cfg(&server.url);
    cfg.cache = Some(dir.path().join("cache/preds.jsonl"));
    let input = pairs(10);

    let first = Predictor::new(cfg.clone()).unwrap();
    let a = first.predict_batch(&input).unwrap();
    assert!(first.endpoint_calls() > 0);

    let second = Predictor::new(cfg.clone()).unwrap();
    let b = second.predict_batch(&input).unwrap();
    assert_eq!(second.endpoint_calls(), 0);
    assert_eq!(a, b);

    // A different model tag does not hit the cache.
    cfg.model_tag = "other".into();
    let third = Predictor::new(cfg).unwrap();
    third.predict_batch(&input).unwrap();
    assert!(third.endpoint_calls() > 0);
}

#[test]
fn offline_file_needs_no_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("preds.jsonl");
    let input = pairs(6);
    let records: Vec<StoredPrediction> = input
        .iter()
        .map(|p| StoredPrediction::new(&ContentKey::new("offline-model", &p.premise, &p.hypothesis), expected(p)))
        .collect();
    write_offline(&path, &records).unwrap();

    let mut cfg = EndpointConfig::http("http://127.0.0.1:9", "offline-model");
    cfg.backend = Backend::Offline { path: path.clone() };
    let predictor = Predictor::new(cfg.clone()).unwrap();
    let out = predictor.predict_batch(&input).unwrap();
    assert_eq!(predictor.endpoint_calls(), 0);
    for (p, r) in input.iter().zip(&out) {
        assert_eq!(r.logits, expected(p));
    }

    let mut extra = pairs(7);
    extra[6].probe_id = "missing".into();
    match predictor.predict_batch(&extra).unwrap_err() {
        Error::MissingPrediction { probe_ids } => assert_eq!(probe_ids, vec!["missing"]),
        other => panic!("{other:?}"),
    }
}
