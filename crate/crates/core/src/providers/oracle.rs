//! Deterministic stand-ins for the embedding, detection and generation services.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Detections, Detector, EmbeddingProvider, ProgramGenerator, ProviderError, DEFAULT_BOX_THRESHOLD};
use crate::imageio;
use crate::scene::synth::CLASS_PALETTE;

/// Embedding width of the oracle embedder.
pub const ORACLE_DIM: usize = 16;

fn seeded(tag: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("geoprog-oracle:{tag}").as_bytes());
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

fn random_vec(tag: &str, dim: usize) -> Vec<f64> {
    let mut rng = seeded(tag);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>]) -> Vec<f64> {
    // two rounds of classical Gram-Schmidt
    for _ in 0..2 {
        for b in basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// Vocabulary entry named by a free-text query: the last whole-word (or plural) match.
pub fn match_vocabulary<'a>(text: &str, vocab: &'a [String]) -> Option<&'a String> {
    let toks = words(text);
    let mut best: Option<(usize, &String)> = None;
    for term in vocab {
        let tw = words(term);
        if tw.is_empty() || tw.len() > toks.len() {
            continue;
        }
        for start in 0..=toks.len() - tw.len() {
            let hit = tw.iter().enumerate().all(|(k, w)| {
                let t = &toks[start + k];
                t == w || (k + 1 == tw.len() && (t == &format!("{w}s") || t == &format!("{w}es")))
            });
            if hit && best.is_none_or(|(pos, _)| start + tw.len() > pos) {
                best = Some((start + tw.len(), term));
            }
        }
    }
    best.map(|(_, t)| t)
}

/// Hash-seeded orthonormal embeddings over a closed vocabulary.
///
/// A text naming a vocabulary term maps to that term's vector; any other text
/// maps to a unit vector orthogonal to the whole vocabulary.
#[derive(Debug)]
pub struct OracleEmbedder {
    vocab: Vec<String>,
    basis: Vec<Vec<f64>>,
    dim: usize,
    calls: AtomicUsize,
}

impl OracleEmbedder {
    pub fn new(vocab: Vec<String>, dim: usize) -> Self {
        assert!(dim > vocab.len(), "oracle dimension must exceed vocabulary size");
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for term in &vocab {
            let v = orthonormalize(random_vec(term, dim), &basis);
            basis.push(v);
        }
        Self { vocab, basis, dim, calls: AtomicUsize::new(0) }
    }

    /// Vocabulary of the synthetic city classes.
    pub fn synth_classes() -> Self {
        Self::new(CLASS_PALETTE.iter().map(|(c, _)| c.to_string()).collect(), ORACLE_DIM)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn vector(&self, text: &str) -> Vec<f32> {
        let v = match match_vocabulary(text, &self.vocab) {
            Some(term) => {
                let i = self.vocab.iter().position(|t| t == term).unwrap();
                self.basis[i].clone()
            }
            None => orthonormalize(random_vec(&format!("oov:{}", words(text).join(" ")), self.dim), &self.basis),
        };
        v.into_iter().map(|x| x as f32).collect()
    }
}

impl EmbeddingProvider for OracleEmbedder {
    fn model_id(&self) -> &str {
        "oracle-orthonormal"
    }

    fn dim(&self) -> Result<usize, ProviderError> {
        Ok(self.dim)
    }

    fn vocabulary(&self) -> Option<Vec<String>> {
        Some(self.vocab.clone())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Colour-keyed detector for synthetic renders.
///
/// Pixels within `color_tol` of the queried class colour are grouped into
/// 8-connected blobs; each blob of at least `min_pixels` becomes a box whose
/// score is the blob's fill ratio of its box.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    pub palette: Vec<(String, [f32; 3])>,
    pub color_tol: f32,
    pub min_pixels: usize,
    pub threshold: f64,
}

impl Default for OracleDetector {
    fn default() -> Self {
        Self {
            palette: CLASS_PALETTE.iter().map(|(c, rgb)| (c.to_string(), *rgb)).collect(),
            color_tol: 0.2,
            min_pixels: 4,
            threshold: DEFAULT_BOX_THRESHOLD,
        }
    }
}

impl Detector for OracleDetector {
    fn detect(&self, png: &[u8], query: &str) -> Result<Detections, ProviderError> {
        let img = imageio::decode_rgb8(png).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
        let names: Vec<String> = self.palette.iter().map(|(c, _)| c.clone()).collect();
        let Some(class) = match_vocabulary(query, &names) else {
            return Ok(Detections::default());
        };
        let color = self.palette.iter().find(|(c, _)| c == class).unwrap().1;
        let (w, h) = (img.width, img.height);
        let hit: Vec<bool> = (0..w * h)
            .map(|i| {
                let p = img.pixel(i / w, i % w);
                let d2: f32 = (0..3).map(|k| (f32::from(p[k]) / 255.0 - color[k]).powi(2)).sum();
                d2.sqrt() <= self.color_tol
            })
            .collect();
        let mut seen = vec![false; w * h];
        let mut out = Detections::default();
        for start in 0..w * h {
            if !hit[start] || seen[start] {
                continue;
            }
            let (mut r0, mut c0, mut r1, mut c1, mut count) = (usize::MAX, usize::MAX, 0, 0, 0usize);
            let mut queue = std::collections::VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                let (r, c) = (i / w, i % w);
                count += 1;
                (r0, c0, r1, c1) = (r0.min(r), c0.min(c), r1.max(r), c1.max(c));
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let j = nr as usize * w + nc as usize;
                        if hit[j] && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
            if count >= self.min_pixels {
                let area = ((r1 - r0 + 1) * (c1 - c0 + 1)) as f64;
                out.boxes.push([c0 as f64, r0 as f64, (c1 + 1) as f64, (r1 + 1) as f64]);
                out.scores.push(count as f64 / area);
            }
        }
        Ok(out.normalized(self.threshold))
    }
}

/// Queries that the stub refuses to answer, per in-context example count.
#[derive(Debug, Clone, Default)]
pub struct FailurePlan {
    by_ice_count: HashMap<usize, HashSet<String>>,
}

impl FailurePlan {
    pub fn fail(mut self, ice_count: usize, queries: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.by_ice_count.entry(ice_count).or_default().extend(queries.into_iter().map(|q| normalize_query(&q.into())));
        self
    }

    pub fn should_fail(&self, ice_count: usize, query: &str) -> bool {
        self.by_ice_count.get(&ice_count).is_some_and(|s| s.contains(&normalize_query(query)))
    }
}

fn normalize_query(q: &str) -> String {
    q.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Generator that answers canned queries with stored programs.
///
/// The query is read from the prompt's last `Query:` line and the number of
/// in-context examples from its `Program:` lines. Unknown queries and planned
/// failures yield unparsable text.
#[derive(Debug, Default)]
pub struct StubGenerator {
    table: HashMap<String, String>,
    failures: FailurePlan,
    calls: AtomicUsize,
}

pub(crate) const STUB_REFUSAL: &str = "I am not able to write a program for this query.";

impl StubGenerator {
    pub fn new(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        Self {
            table: entries.into_iter().map(|(q, p)| (normalize_query(&q), p)).collect(),
            failures: FailurePlan::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_failures(mut self, plan: FailurePlan) -> Self {
        self.failures = plan;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

pub(crate) fn prompt_query(prompt: &str) -> Option<&str> {
    prompt.lines().rev().find_map(|l| l.trim_start().strip_prefix("Query:")).map(str::trim)
}

pub(crate) fn prompt_ice_count(prompt: &str) -> usize {
    prompt.lines().filter(|l| l.trim() == "Program:").count()
}

impl ProgramGenerator for StubGenerator {
    fn generate(&self, prompt: &str) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let query = prompt_query(prompt).unwrap_or_default();
        if self.failures.should_fail(prompt_ice_count(prompt), query) {
            return Ok(STUB_REFUSAL.to_string());
        }
        Ok(self.table.get(&normalize_query(query)).cloned().unwrap_or_else(|| STUB_REFUSAL.to_string()))
    }
}
