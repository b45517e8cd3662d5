//! Benchmark runner: generate, check, execute and score every record.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{score_task, MetricsReport, ScoreOptions, ScoredRow, TaskRecord};
use crate::field::LatentCodec;
use crate::georef::GeoTransform;
use crate::gv::{GeoContext, GvConfig};
use crate::program::{execute_program, generate_program, ApiRegistry, ExecOptions, IceStore, Value};
use crate::providers::{Detector, EmbeddingProvider, ProgramGenerator};
use crate::registry::Registry;
use crate::render::TopDownView;
use crate::scene::{load_scene, SceneTree};

#[derive(Clone)]
pub struct SceneAssets {
    pub tree: Arc<SceneTree>,
    pub registry: Arc<Registry>,
    pub transform: GeoTransform,
}

/// Scenes by id plus the providers and settings every context shares.
/// Contexts are built on first use per (scene, view) and then reused.
pub struct SceneCatalog {
    scenes: BTreeMap<String, SceneAssets>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub detector: Arc<dyn Detector>,
    pub codec: Option<LatentCodec>,
    pub gv: GvConfig,
    contexts: Mutex<HashMap<(String, String), Arc<GeoContext>>>,
}

impl SceneCatalog {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>, detector: Arc<dyn Detector>) -> Self {
        Self { scenes: BTreeMap::new(), embedder, detector, codec: None, gv: GvConfig::default(), contexts: Mutex::new(HashMap::new()) }
    }

    pub fn insert(&mut self, id: impl Into<String>, assets: SceneAssets) {
        self.scenes.insert(id.into(), assets);
        self.contexts.get_mut().unwrap_or_else(|e| e.into_inner()).clear();
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.scenes.keys().map(String::as_str)
    }

    /// Every `<id>.gclf` in `dir`, with `<id>.landmarks.geojson` when present.
    /// Scenes must carry an embedded transform.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, String> {
        let mut n = 0;
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for path in entries.into_iter().filter(|p| p.extension().is_some_and(|e| e == "gclf")) {
            let id = path.file_stem().unwrap().to_string_lossy().into_owned();
            let tree = load_scene(&path).map_err(|e| format!("{}: {e}", path.display()))?;
            let transform = tree.transform().cloned().ok_or_else(|| format!("{}: scene has no transform", path.display()))?;
            let reg_path = dir.join(format!("{id}.landmarks.geojson"));
            let registry = if reg_path.is_file() { Registry::load(&reg_path).map_err(|e| format!("{}: {e}", reg_path.display()))? } else { Registry::default() };
            self.insert(id, SceneAssets { tree: Arc::new(tree), registry: Arc::new(registry), transform });
            n += 1;
        }
        Ok(n)
    }

    pub fn context(&self, scene: &str, view: Option<&TopDownView>) -> Result<Arc<GeoContext>, String> {
        let assets = self.scenes.get(scene).ok_or_else(|| format!("unknown scene {scene:?}"))?;
        let view = match view {
            Some(v) => *v,
            None => TopDownView::covering(&assets.tree, 1.0 / assets.transform.scale(), 0.0).map_err(|e| e.to_string())?,
        };
        let key = (scene.to_string(), serde_json::to_string(&view).expect("view serializes"));
        let mut cache = self.contexts.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(c) = cache.get(&key) {
            return Ok(c.clone());
        }
        let mut ctx = GeoContext::new(assets.tree.clone(), assets.registry.clone(), assets.transform.clone(), view, self.embedder.clone(), self.detector.clone())
            .with_config(self.gv.clone());
        if let Some(codec) = &self.codec {
            ctx = ctx.with_codec(codec.clone());
        }
        let ctx = Arc::new(ctx);
        cache.insert(key, ctx.clone());
        Ok(ctx)
    }
}

#[derive(Clone)]
pub struct Engine {
    pub catalog: Arc<SceneCatalog>,
    pub generator: Arc<dyn ProgramGenerator>,
    pub ices: IceStore,
    pub n_ice: usize,
    pub exec: ExecOptions,
    pub score: ScoreOptions,
    pub jobs: usize,
    /// Per-query program, trace and segment artifacts go under here.
    pub trace_dir: Option<PathBuf>,
}

impl Engine {
    pub fn new(catalog: Arc<SceneCatalog>, generator: Arc<dyn ProgramGenerator>) -> Self {
        Self {
            catalog,
            generator,
            ices: IceStore::builtin(),
            n_ice: 10,
            exec: ExecOptions::default(),
            score: ScoreOptions::default(),
            jobs: 1,
            trace_dir: None,
        }
    }

    fn run_one(&self, index: usize, record: &TaskRecord) -> ScoredRow {
        let dir = self.trace_dir.as_ref().map(|d| d.join(format!("q{index:04}")));
        let (value, generated, attempts, failed_step, error) = match generate_program(&record.query, &self.ices, self.n_ice, self.generator.as_ref(), ApiRegistry::standard()) {
            Err(e) => (Value::None, false, 0, None, Some(e.to_string())),
            Ok(g) => {
                if let Some(d) = &dir {
                    let _ = std::fs::create_dir_all(d);
                    let _ = std::fs::write(d.join("program.txt"), g.program.program().to_string());
                }
                match self.catalog.context(&record.scene, record.view.as_ref()) {
                    Err(e) => (Value::None, true, g.attempts, None, Some(e)),
                    Ok(ctx) => {
                        let opts = ExecOptions { artifact_dir: dir.clone(), ..self.exec.clone() };
                        let run = execute_program(&g.program, &ctx, &opts);
                        if let Some(d) = &dir {
                            let _ = run.trace.save(&d.join("trace.json"));
                        }
                        let failed = run
                            .trace
                            .failure()
                            .map(|(i, e)| format!("statement {} {}={}: {}", i + 1, e.target, e.func, e.message.clone().unwrap_or_default()));
                        (run.value, true, g.attempts, failed, None)
                    }
                }
            }
        };
        let mut row = score_task(record, &value, &self.score);
        row.index = index;
        row.generated = generated;
        row.attempts = attempts;
        row.failed_step = failed_step;
        if error.is_some() {
            row.error = error;
        }
        row
    }
}

/// Run every record through generate, check, execute and score on a pool of
/// `engine.jobs` workers. Rows come back in record order.
pub fn run_benchmark(records: &[TaskRecord], engine: &Engine) -> MetricsReport {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(engine.jobs.max(1)).build().expect("thread pool");
    let rows: Vec<ScoredRow> = pool.install(|| records.par_iter().enumerate().map(|(i, r)| engine.run_one(i, r)).collect());
    MetricsReport::from_rows(rows, &engine.score, engine.n_ice)
}

/// One report per in-context example count.
pub fn ice_sweep(records: &[TaskRecord], engine: &Engine, counts: &[usize]) -> Vec<MetricsReport> {
    counts
        .iter()
        .map(|&n| {
            let mut e = engine.clone();
            e.n_ice = n;
            e.trace_dir = engine.trace_dir.as_ref().map(|d| d.join(format!("ice{n}")));
            run_benchmark(records, &e)
        })
        .collect()
}
