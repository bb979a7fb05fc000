use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use pe_core::genapi::{Degree, GenerationApi, HttpBackend};
use pe_core::{PeError, Sample};
use serde_json::{json, Value};

type Handler = Arc<dyn Fn(&str, &Value) -> (u16, String) + Send + Sync>;

/// Minimal HTTP/1.1 server answering JSON POSTs until the test exits.
fn serve(handler: Handler, log: Arc<Mutex<Vec<(String, Value)>>>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let handler = handler.clone();
            let log = log.clone();
            thread::spawn(move || connection(stream, handler, log));
        }
    });
    format!("http://{addr}")
}

fn connection(stream: TcpStream, handler: Handler, log: Arc<Mutex<Vec<(String, Value)>>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
        let mut length = 0usize;
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0u8; length];
        reader.read_exact(&mut body).unwrap();
        let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
        log.lock().unwrap().push((path.clone(), value.clone()));
        let (status, text) = handler(&path, &value);
        let reply = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{text}",
            text.len()
        );
        if out.write_all(reply.as_bytes()).is_err() {
            return;
        }
    }
}

/// `/random` returns rows `[i, seed]`; `/variation` returns each input
/// shifted by `degree + j` for its `j`-th copy.
fn echo_handler() -> Handler {
    Arc::new(|path, body| match path {
        "/random" => {
            let n = body["n"].as_u64().unwrap();
            let seed = body["seed"].as_f64().unwrap();
            let rows: Vec<Value> = (0..n).map(|i| json!([i as f64, seed])).collect();
            (200, json!({ "samples": rows }).to_string())
        }
        "/variation" => {
            let degree = body["degree"].as_f64().unwrap();
            let count = body["count_per_sample"].as_u64().unwrap();
            let mut rows = Vec::new();
            for s in body["samples"].as_array().unwrap() {
                for j in 0..count {
                    let shifted: Vec<f64> = s
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|x| x.as_f64().unwrap() + degree + j as f64)
                        .collect();
                    rows.push(json!(shifted));
                }
            }
            (200, json!({ "samples": rows }).to_string())
        }
        _ => (404, "{}".into()),
    })
}

#[test]
fn random_and_variation_round_trip() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let url = serve(echo_handler(), log.clone());
    let api = HttpBackend::new(url, 2).unwrap();

    let r = api.random(3, Some("cat"), 42).unwrap();
    assert_eq!(r.len(), 3);
    assert_eq!(r[2].coords, vec![2.0, 42.0]);
    assert_eq!(r[0].condition.as_deref(), Some("cat"));

    let src = vec![
        Sample::labeled(vec![0.0, 0.0], "a"),
        Sample::labeled(vec![1.0, 1.0], "b"),
    ];
    let v = api.variation(&src, &Degree::Sigma(0.5), 2, 9).unwrap();
    let coords: Vec<Vec<f64>> = v.iter().map(|s| s.coords.clone()).collect();
    assert_eq!(
        coords,
        vec![vec![0.5, 0.5], vec![1.5, 1.5], vec![1.5, 1.5], vec![2.5, 2.5]]
    );
    let labels: Vec<_> = v.iter().map(|s| s.label.clone().unwrap()).collect();
    assert_eq!(labels, ["a", "a", "b", "b"]);

    let log = log.lock().unwrap();
    assert_eq!(log[0].0, "/random");
    assert_eq!(log[0].1["dim"], 2);
    assert_eq!(log[0].1["condition"], "cat");
    assert_eq!(log[1].0, "/variation");
    assert_eq!(log[1].1["seed"], 9);
}

#[test]
fn identity_degree_is_sent_as_zero() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let url = serve(echo_handler(), log.clone());
    let api = HttpBackend::new(url, 1).unwrap();
    let v = api.variation(&[Sample::new(vec![3.0])], &Degree::Identity, 1, 0).unwrap();
    assert_eq!(v[0].coords, vec![3.0]);
    assert_eq!(log.lock().unwrap()[0].1["degree"], 0.0);
}

#[test]
fn server_errors_abort_without_retry() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let url = serve(Arc::new(|_, _| (500, "{}".into())), log.clone());
    let api = HttpBackend::new(url, 2).unwrap();
    let err = api.random(1, None, 0).unwrap_err();
    assert!(matches!(err, PeError::Backend(_)), "{err}");
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn wrong_count_and_dimension_are_rejected() {
    let log = Arc::new(Mutex::new(Vec::new()));
    let short = serve(Arc::new(|_, _| (200, r#"{"samples":[[1.0,2.0]]}"#.into())), log.clone());
    let api = HttpBackend::new(short, 2).unwrap();
    assert!(api.random(2, None, 0).is_err());

    let wide = serve(Arc::new(|_, _| (200, r#"{"samples":[[1.0,2.0,3.0]]}"#.into())), log);
    let api = HttpBackend::new(wide, 2).unwrap();
    assert!(matches!(
        api.random(1, None, 0).unwrap_err(),
        PeError::DimensionMismatch { expected: 2, found: 3, .. }
    ));
}

#[test]
fn unreachable_endpoint_is_a_backend_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let api = HttpBackend::new(format!("http://127.0.0.1:{port}"), 2).unwrap();
    assert!(matches!(api.random(1, None, 0).unwrap_err(), PeError::Backend(_)));
}
