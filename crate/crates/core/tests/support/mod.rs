//! Minimal threaded HTTP/1.1 server for exercising the provider clients.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine as _;
use geoprog::providers::{Detector, EmbeddingProvider, OracleDetector, OracleEmbedder};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }

    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

pub type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

pub struct Server {
    pub url: String,
    pub log: Arc<Mutex<Vec<Request>>>,
    pub peak_concurrency: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
}

impl Server {
    pub fn start(handler: impl Fn(&Request) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let peak = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let (log2, peak2, stop2) = (log.clone(), peak.clone(), stop.clone());
        std::thread::spawn(move || {
            let active = Arc::new(AtomicUsize::new(0));
            for stream in listener.incoming() {
                if stop2.load(Ordering::Relaxed) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (handler, log, peak, active) = (handler.clone(), log2.clone(), peak2.clone(), active.clone());
                std::thread::spawn(move || {
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    serve(stream, &*handler, &log);
                    active.fetch_sub(1, Ordering::SeqCst);
                });
            }
        });
        Self { url, log, peak_concurrency: peak, stop }
    }

    pub fn requests(&self, path: &str) -> usize {
        self.log.lock().unwrap().iter().filter(|r| r.path == path).count()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        let _ = TcpStream::connect(self.url.trim_start_matches("http://"));
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>) {
    stream.set_read_timeout(Some(Duration::from_secs(10))).ok();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.trim_end().split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len: usize = headers.iter().find(|(k, _)| k.eq_ignore_ascii_case("content-length")).and_then(|(_, v)| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let req = Request { method, path, headers, body };
    log.lock().unwrap().push(req.clone());
    let (status, text) = handler(&req);
    let mut out = stream;
    let _ = write!(
        out,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = out.flush();
}

/// Serves `/info`, `/embed` and `/detect` from the oracle providers, and
/// `/generate` from `programs` keyed by the prompt's last `Query:` line.
pub fn oracle_backend(programs: Vec<(String, String)>) -> impl Fn(&Request) -> (u16, String) + Send + Sync + 'static {
    let embedder = OracleEmbedder::synth_classes();
    let detector = OracleDetector::default();
    move |req| match req.path.as_str() {
        "/info" => (200, json!({ "kind": "embed", "dim": embedder.dim().unwrap(), "model": "oracle" }).to_string()),
        "/embed" => {
            let texts: Vec<String> = serde_json::from_value(req.json()["texts"].clone()).unwrap_or_default();
            let vectors = embedder.embed(&texts).unwrap();
            (200, json!({ "vectors": vectors, "dim": embedder.dim().unwrap() }).to_string())
        }
        "/detect" => {
            let body = req.json();
            let png = base64::engine::general_purpose::STANDARD.decode(body["image_b64"].as_str().unwrap_or_default()).unwrap_or_default();
            match detector.detect(&png, body["query"].as_str().unwrap_or_default()) {
                Ok(d) => (200, json!({ "boxes": d.boxes, "scores": d.scores }).to_string()),
                Err(e) => (400, json!({ "error": e.to_string() }).to_string()),
            }
        }
        "/generate" => {
            let prompt = req.json()["prompt"].as_str().unwrap_or_default().to_string();
            let query = prompt.lines().rev().find_map(|l| l.trim_start().strip_prefix("Query:")).map(str::trim).unwrap_or_default();
            let text = programs.iter().find(|(q, _)| q.eq_ignore_ascii_case(query)).map_or_else(|| "no idea".to_string(), |(_, p)| p.clone());
            (200, json!({ "text": text }).to_string())
        }
        _ => (404, "{}".into()),
    }
}
