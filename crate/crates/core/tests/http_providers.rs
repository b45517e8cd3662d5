mod support;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use geoprog::eval::suite::SynthSuite;
use geoprog::eval::{load_dataset, run_benchmark, Engine, SceneCatalog};
use geoprog::program::{assemble_prompt, generate_program, ApiRegistry, IceStore};
use geoprog::providers::{Detector, EmbeddingProvider, HttpDetector, HttpEmbedder, HttpGenerator, ProgramGenerator, ProviderEndpoint, ProviderError};
use geoprog::scene::synth::SynthSpec;
use serde_json::json;
use support::{oracle_backend, Server};

fn endpoint(server: &Server) -> ProviderEndpoint {
    ProviderEndpoint { backoff_ms: 5, ..ProviderEndpoint::new(server.url.clone()) }
}

#[test]
fn embeddings_are_cached_per_model_and_text() {
    let server = Server::start(oracle_backend(vec![]));
    let ep = ProviderEndpoint { token: Some("s3cret".into()), ..endpoint(&server) };
    let e = HttpEmbedder::new(ep).unwrap();
    assert_eq!(e.dim().unwrap(), 16);
    assert_eq!(e.model_id(), "oracle");

    let v = e.embed(&["car".to_string()]).unwrap();
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].len(), 16);
    assert_eq!(e.network_calls(), 1);

    let again = e.embed(&["car".to_string()]).unwrap();
    assert_eq!(again, v);
    assert_eq!(e.network_calls(), 1);
    assert_eq!(server.requests("/embed"), 1);

    // only the unseen text goes out, once even when repeated
    let mixed = e.embed(&["building".into(), "car".into(), "building".into()]).unwrap();
    assert_eq!(mixed.len(), 3);
    assert_eq!(mixed[1], v[0]);
    assert_eq!(server.requests("/embed"), 2);
    let sent = server.log.lock().unwrap().iter().filter(|r| r.path == "/embed").last().unwrap().json();
    assert_eq!(sent["texts"], json!(["building"]));
    let dot: f32 = mixed[0].iter().zip(&v[0]).map(|(a, b)| a * b).sum();
    assert!(dot.abs() < 1e-6);

    assert!(server.log.lock().unwrap().iter().all(|r| r.header("authorization") == Some("Bearer s3cret")));
}

#[test]
fn embedding_dimension_must_match_info() {
    let server = Server::start(|req| match req.path.as_str() {
        "/info" => (200, json!({ "kind": "embed", "dim": 4, "model": "m" }).to_string()),
        _ => (200, json!({ "vectors": [[1.0, 0.0, 0.0]], "dim": 3 }).to_string()),
    });
    let e = HttpEmbedder::new(endpoint(&server)).unwrap();
    assert!(matches!(e.embed(&["x".into()]), Err(ProviderError::DimensionMismatch { expected: 4, got: 3 })));
}

#[test]
fn detections_are_validated_and_sorted() {
    let server = Server::start(|req| {
        let q = req.json()["query"].as_str().unwrap_or_default().to_string();
        match q.as_str() {
            "car" => (200, json!({ "boxes": [[0, 0, 4, 4], [10, 10, 12, 14], [5, 5, 6, 6]], "scores": [0.5, 0.9, 0.2] }).to_string()),
            "broken" => (200, "{\"boxes\": [[0, 0,".into()),
            "flipped" => (200, json!({ "boxes": [[4, 4, 0, 0]], "scores": [0.9] }).to_string()),
            _ => (200, json!({ "boxes": [], "scores": [] }).to_string()),
        }
    });
    let d = HttpDetector::new(endpoint(&server)).unwrap();
    let png = geoprog::imageio::encode_rgb(8, 8, &[0.0; 8 * 8 * 3]).unwrap();
    let cars = d.detect(&png, "car").unwrap();
    assert_eq!(cars.scores, vec![0.9, 0.5]);
    assert_eq!(cars.boxes[0], [10.0, 10.0, 12.0, 14.0]);
    assert!(d.detect(&png, "anything").unwrap().is_empty());
    assert!(matches!(d.detect(&png, "broken"), Err(ProviderError::MalformedResponse(_))));
    assert!(matches!(d.detect(&png, "flipped"), Err(ProviderError::MalformedResponse(_))));

    let sent = server.log.lock().unwrap()[0].json();
    assert_eq!(sent["query"], "car");
    assert!(sent["image_b64"].as_str().unwrap().starts_with("iVBORw0KGgo"));

    let strict = HttpDetector::new(endpoint(&server)).unwrap().with_threshold(0.6);
    assert_eq!(strict.detect(&png, "car").unwrap().len(), 1);
}

#[test]
fn retries_back_off_then_give_up() {
    let server = Server::start(|_| (503, "{}".into()));
    let ep = ProviderEndpoint { retries: 3, backoff_ms: 20, ..ProviderEndpoint::new(server.url.clone()) };
    let g = HttpGenerator::new(ep).unwrap();
    let start = Instant::now();
    assert!(matches!(g.generate("hi"), Err(ProviderError::Unavailable(_))));
    assert_eq!(g.transport().attempts(), 4);
    assert_eq!(server.requests("/generate"), 4);
    // 20 + 40 + 80 ms of backoff
    assert!(start.elapsed() >= Duration::from_millis(140));

    let flaky_calls = Arc::new(AtomicUsize::new(0));
    let seen = flaky_calls.clone();
    let flaky = Server::start(move |_| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            (500, "{}".into())
        } else {
            (200, json!({ "text": "ok" }).to_string())
        }
    });
    let g = HttpGenerator::new(endpoint(&flaky)).unwrap();
    assert_eq!(g.generate("hi").unwrap(), "ok");
    assert_eq!(g.transport().attempts(), 3);

    let missing = Server::start(|_| (404, "{}".into()));
    let g = HttpGenerator::new(endpoint(&missing)).unwrap();
    assert!(g.generate("hi").is_err());
    assert_eq!(g.transport().attempts(), 1);
}

#[test]
fn timeouts_count_as_failed_attempts() {
    let server = Server::start(|_| {
        std::thread::sleep(Duration::from_millis(600));
        (200, json!({ "text": "late" }).to_string())
    });
    let ep = ProviderEndpoint { timeout: 0.1, retries: 1, ..endpoint(&server) };
    let g = HttpGenerator::new(ep).unwrap();
    assert!(matches!(g.generate("hi"), Err(ProviderError::Unavailable(_))));
    assert_eq!(g.transport().attempts(), 2);

    assert!(HttpGenerator::new(ProviderEndpoint { timeout: 0.0, ..ProviderEndpoint::new("http://x") }).is_err());
    assert!(HttpGenerator::new(ProviderEndpoint { max_in_flight: 0, ..ProviderEndpoint::new("http://x") }).is_err());
}

#[test]
fn in_flight_requests_are_capped() {
    let server = Server::start(|_| {
        std::thread::sleep(Duration::from_millis(50));
        (200, json!({ "text": "ok" }).to_string())
    });
    let g = Arc::new(HttpGenerator::new(ProviderEndpoint { max_in_flight: 2, ..endpoint(&server) }).unwrap());
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let g = g.clone();
            std::thread::spawn(move || g.generate("x").unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), "ok");
    }
    assert_eq!(server.requests("/generate"), 8);
    assert!(server.peak_concurrency.load(Ordering::SeqCst) <= 2);
}

#[test]
fn long_prompts_arrive_unmodified() {
    let server = Server::start(|req| (200, json!({ "text": req.json()["prompt"] }).to_string()));
    let g = HttpGenerator::new(endpoint(&server)).unwrap();
    let store = IceStore::builtin();
    let mut prompt = assemble_prompt("The car north of Building A", &store, 10).unwrap();
    assert_eq!(prompt.matches("Program:").count(), 10);
    while prompt.len() < 40 * 1024 {
        prompt.push_str("padding line with unicode \u{e9}\u{4e2d}\n");
    }
    assert_eq!(g.generate(&prompt).unwrap(), prompt);
}

#[test]
fn generated_program_flows_through_checker() {
    let suite_program = "SEG0=GetLandmarkSeg(query='Building A')\nSEG1=SegDirection(seg=SEG0,direction='north')\nSEG2=GetStructureSeg(query='car',area=SEG1)\nANSWER=LargestSeg(segs=SEG2)";
    let server = Server::start(oracle_backend(vec![("The car north of Building A".into(), format!("```\n{suite_program}\n```"))]));
    let g = HttpGenerator::new(endpoint(&server)).unwrap();
    let generation = generate_program("The car north of Building A", &IceStore::builtin(), 5, &g, ApiRegistry::standard()).unwrap();
    assert_eq!(generation.program.program().to_string().trim(), suite_program);
    assert_eq!(generation.attempts, 1);
    assert!(generate_program("Something else", &IceStore::builtin(), 5, &g, ApiRegistry::standard()).is_err());
    assert_eq!(server.requests("/generate"), 3);
}

#[test]
fn http_backed_oracle_matches_in_process_oracle() {
    let suite = SynthSuite::generate(7, &SynthSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let records = load_dataset(suite.write(dir.path()).unwrap()).unwrap();
    let programs = suite.queries.iter().map(|q| (q.query.clone(), q.program.clone())).collect();
    let server = Server::start(oracle_backend(programs));

    let local = run_benchmark(&records, &Engine::new(Arc::new(suite.oracle_catalog()), Arc::new(suite.stub_generator())));

    let mut catalog = SceneCatalog::new(Arc::new(HttpEmbedder::new(endpoint(&server)).unwrap()), Arc::new(HttpDetector::new(endpoint(&server)).unwrap()));
    catalog.insert(suite.scene_id.clone(), suite.assets());
    let mut engine = Engine::new(Arc::new(catalog), Arc::new(HttpGenerator::new(endpoint(&server)).unwrap()));
    engine.jobs = 4;
    let remote = run_benchmark(&records, &engine);

    assert_eq!(local.to_json(), remote.to_json());
    assert!(server.requests("/detect") > 0 && server.requests("/embed") > 0);
    assert_eq!(server.requests("/generate"), records.len());
}
