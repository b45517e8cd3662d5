//! Point the HTTP provider clients at a running service and try each one.
//!
//!     cargo run --example http_providers -- http://localhost:8080 [token]
//!
//! The service is expected to answer `GET /info`, `POST /embed`,
//! `POST /detect` and `POST /generate` with JSON bodies.

use geoprog::imageio::encode_rgb;
use geoprog::program::{generate_program, ApiRegistry, IceStore};
use geoprog::providers::{Detector, EmbeddingProvider, HttpDetector, HttpEmbedder, HttpGenerator, ProviderEndpoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let Some(url) = args.next() else {
        eprintln!("usage: http_providers BASE_URL [TOKEN]");
        std::process::exit(2);
    };
    let endpoint = ProviderEndpoint { token: args.next(), timeout: 10.0, retries: 1, ..ProviderEndpoint::new(url) };
    println!("{}", serde_json::to_string_pretty(&endpoint)?);

    let embedder = HttpEmbedder::new(endpoint.clone())?;
    match embedder.dim() {
        Ok(dim) => {
            let v = embedder.embed(&["car".into(), "building".into(), "car".into()])?;
            println!("embed: model {} dim {dim}, {} vectors, {} network call(s)", embedder.model_id(), v.len(), embedder.network_calls());
        }
        Err(e) => println!("embed: {e}"),
    }

    let detector = HttpDetector::new(endpoint.clone())?.with_threshold(0.3);
    let png = encode_rgb(64, 64, &vec![0.5; 64 * 64 * 3])?;
    match detector.detect(&png, "car") {
        Ok(d) => println!("detect: {} boxes {:?}", d.len(), d.boxes),
        Err(e) => println!("detect: {e} after {} attempt(s)", detector.transport().attempts()),
    }

    let generator = HttpGenerator::new(endpoint)?;
    match generate_program("How many cars are there?", &IceStore::builtin(), 5, &generator, ApiRegistry::standard()) {
        Ok(g) => println!("generate ({} attempt(s)):\n{}", g.attempts, g.program.program()),
        Err(e) => println!("generate: {e}"),
    }
    Ok(())
}
