//! Command-line front end: query, eval, synth, ingest, georef and render.
//!
//! Settings come from a TOML file (`--config` or `GEOPROG_CONFIG`) and are
//! overridden by flags. Relative paths in the file resolve against its folder.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::eval::suite::SynthSuite;
use crate::eval::{ice_sweep, load_dataset, run_benchmark, Engine, MetricsReport, NonePolicy, SceneAssets, SceneCatalog, ScoreOptions};
use crate::field::{bake_features, relevancy_map, LatentCodec};
use crate::georef::{estimate_transform, ControlPointSet, GeoTransform, TransformKind};
use crate::gv::{GeoContext, GvConfig};
use crate::program::{execute_program, generate_program, Arg, ApiRegistry, ExecOptions, Ice, IceStore, Trace, Value};
use crate::providers::{
    Detector, EmbeddingProvider, HttpDetector, HttpEmbedder, HttpGenerator, OracleDetector, OracleEmbedder, ProgramGenerator, ProviderEndpoint, StubGenerator,
};
use crate::registry::Registry;
use crate::render::{render_topdown, select_lod_cut, TopDownView};
use crate::scene::synth::SynthSpec;
use crate::scene::{load_scene, save_scene, validate_tree, SceneTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Oracle,
    Http,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Oracle mode: JSON list of `{query, program}` served by the stub generator.
    pub programs: Option<PathBuf>,
    pub embed: Option<ProviderEndpoint>,
    pub detect: Option<ProviderEndpoint>,
    pub generate: Option<ProviderEndpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub scene: Option<PathBuf>,
    pub registry: Option<PathBuf>,
    /// `embedded` (default) or a path to a transform JSON file.
    pub transform: Option<String>,
    /// Active view; defaults to the scene bounds at 1 m/px.
    pub view: Option<TopDownView>,
    pub tau: f64,
    pub ice: Option<PathBuf>,
    pub ice_count: usize,
    /// Seconds per program.
    pub timeout: f64,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub none_policy: NonePolicy,
    pub provider: ProviderConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            scene: None,
            registry: None,
            transform: None,
            view: None,
            tau: 0.5,
            ice: None,
            ice_count: 10,
            timeout: 60.0,
            out: PathBuf::from("out"),
            seed: 7,
            jobs: 1,
            none_policy: NonePolicy::Penalize,
            provider: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CliError(String);

impl CliError {
    fn new(msg: impl std::fmt::Display) -> Self {
        Self(msg.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn ctx<T, E: std::fmt::Display>(r: Result<T, E>, what: impl std::fmt::Display) -> CliResult<T> {
    r.map_err(|e| CliError(format!("{what}: {e}")))
}

impl EngineConfig {
    pub fn from_toml(text: &str, base: &Path) -> CliResult<Self> {
        let mut c: EngineConfig = ctx(toml::from_str(text), "config")?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p.as_mut() {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut c.scene);
        fix(&mut c.registry);
        fix(&mut c.ice);
        fix(&mut c.provider.programs);
        if c.out.is_relative() {
            c.out = base.join(&c.out);
        }
        if let Some(t) = c.transform.as_mut() {
            if t != "embedded" && Path::new(t).is_relative() {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = ctx(std::fs::read_to_string(path), path.display())?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn apply(&mut self, f: &Flags) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &f.$field {
                    self.$field = v.clone().into();
                }
            )*};
        }
        set!(scene, registry, transform, ice);
        if let Some(v) = f.tau {
            self.tau = v;
        }
        if let Some(v) = f.ice_count {
            self.ice_count = v;
        }
        if let Some(v) = f.timeout {
            self.timeout = v;
        }
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.jobs {
            self.jobs = v;
        }
        if let Some(v) = f.providers {
            self.provider.mode = v;
        }
        if let Some(v) = &f.programs {
            self.provider.programs = Some(v.clone());
        }
        if let Some(v) = f.none_policy {
            self.none_policy = v;
        }
    }

    fn validate(&self) -> CliResult {
        for p in [&self.scene, &self.registry, &self.ice, &self.provider.programs].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError(format!("{} does not exist", p.display())));
            }
        }
        if let Some(t) = self.transform.as_deref().filter(|t| *t != "embedded") {
            if !Path::new(t).exists() {
                return Err(CliError(format!("transform file {t} does not exist")));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(CliError(format!("tau must be in [0, 1], got {}", self.tau)));
        }
        if !(self.timeout > 0.0) {
            return Err(CliError("timeout must be positive".into()));
        }
        Ok(())
    }

    fn exec_options(&self) -> ExecOptions {
        ExecOptions { timeout: Duration::from_secs_f64(self.timeout), artifact_dir: None }
    }

    fn gv_config(&self) -> GvConfig {
        GvConfig { tau: self.tau, ..GvConfig::default() }
    }

    fn ices(&self) -> CliResult<IceStore> {
        match &self.ice {
            Some(p) => ctx(IceStore::load(p), p.display()),
            None => Ok(IceStore::builtin()),
        }
    }

    fn embedder(&self) -> CliResult<Arc<dyn EmbeddingProvider>> {
        Ok(match self.provider.mode {
            ProviderMode::Oracle => Arc::new(OracleEmbedder::synth_classes()),
            ProviderMode::Http => {
                let ep = self.provider.embed.clone().ok_or_else(|| CliError::new("http mode needs [provider.embed]"))?;
                Arc::new(ctx(HttpEmbedder::new(ep), "embed endpoint")?)
            }
        })
    }

    fn detector(&self) -> CliResult<Arc<dyn Detector>> {
        Ok(match self.provider.mode {
            ProviderMode::Oracle => Arc::new(OracleDetector::default()),
            ProviderMode::Http => {
                let ep = self.provider.detect.clone().ok_or_else(|| CliError::new("http mode needs [provider.detect]"))?;
                Arc::new(ctx(HttpDetector::new(ep), "detect endpoint")?)
            }
        })
    }

    fn generator(&self) -> CliResult<Arc<dyn ProgramGenerator>> {
        Ok(match self.provider.mode {
            ProviderMode::Oracle => {
                let entries: Vec<Ice> = match &self.provider.programs {
                    Some(p) => ctx(serde_json::from_str(&ctx(std::fs::read_to_string(p), p.display())?), p.display())?,
                    None => Vec::new(),
                };
                Arc::new(StubGenerator::new(entries.into_iter().map(|e| (e.query, e.program))))
            }
            ProviderMode::Http => {
                let ep = self.provider.generate.clone().ok_or_else(|| CliError::new("http mode needs [provider.generate]"))?;
                Arc::new(ctx(HttpGenerator::new(ep), "generate endpoint")?)
            }
        })
    }

    fn load_scene_assets(&self) -> CliResult<(SceneTree, SceneAssets)> {
        let path = self.scene.as_ref().ok_or_else(|| CliError::new("no scene given (--scene or `scene` in the config)"))?;
        let tree = ctx(load_scene(path), path.display())?;
        let transform = match self.transform.as_deref() {
            None | Some("embedded") => tree.transform().cloned().ok_or_else(|| CliError::new("scene has no embedded transform; pass --transform FILE"))?,
            Some(file) => ctx(serde_json::from_str::<GeoTransform>(&ctx(std::fs::read_to_string(file), file)?), file)?,
        };
        let registry = match &self.registry {
            Some(p) => ctx(Registry::load(p), p.display())?,
            None => Registry::default(),
        };
        let assets = SceneAssets { tree: Arc::new(tree.clone()), registry: Arc::new(registry), transform };
        Ok((tree, assets))
    }

    fn view_for(&self, tree: &SceneTree, transform: &GeoTransform) -> CliResult<TopDownView> {
        match self.view {
            Some(v) => Ok(v),
            None => ctx(TopDownView::covering(tree, 1.0 / transform.scale(), 0.0), "view"),
        }
    }
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// `embedded` or a transform JSON file.
    #[arg(long, global = true)]
    pub transform: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub providers: Option<ProviderMode>,
    /// Stub generator table for oracle mode.
    #[arg(long, global = true)]
    pub programs: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    /// In-context example file (JSON list of {query, program}).
    #[arg(long, global = true)]
    pub ice: Option<PathBuf>,
    #[arg(long = "ice-count", global = true)]
    pub ice_count: Option<usize>,
    /// Seconds per program.
    #[arg(long, global = true)]
    pub timeout: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long = "none-policy", global = true, value_parser = clap::builder::ValueParser::new(|s: &str| s.parse::<NonePolicy>()))]
    pub none_policy: Option<NonePolicy>,
}

#[derive(Debug, Parser)]
#[command(name = "geoprog", version, about = "Geographic question answering over Gaussian city scenes")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, global = true, env = "GEOPROG_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: Flags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer one natural-language query and write program, trace and overlays.
    Query { text: String },
    /// Run a JSON-lines benchmark and write metric reports.
    Eval {
        dataset: PathBuf,
        /// Comma-separated example counts; one report per count.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<usize>,
    },
    /// Generate a synthetic city with registry, control points and a query suite.
    Synth,
    /// Load and validate a scene; optionally bake class features from a label file.
    Ingest {
        input: PathBuf,
        /// JSON list with one class label per node.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a scene-to-world transform from control points.
    Georef {
        control_points: PathBuf,
        #[arg(long, value_enum, default_value = "similarity")]
        kind: KindArg,
        /// Container to write the transform into (defaults to the scene path).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render the scene top-down and export colour, alpha, feature and height rasters.
    Render {
        /// World meters per pixel.
        #[arg(long, default_value_t = 1.0)]
        res: f64,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Similarity,
    Affine,
}

/// Resolve the effective configuration: defaults, then file, then flags.
pub fn resolve_config(cli: &Cli) -> CliResult<EngineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => EngineConfig::load(p)?,
        None => EngineConfig::default(),
    };
    cfg.apply(&cli.flags);
    cfg.validate()?;
    Ok(cfg)
}

fn describe(v: &Value, c: &GeoContext) -> String {
    match v {
        Value::Segment(s) => match s.centroid_scene() {
            Some(p) => {
                let w = c.transform.to_world(p);
                format!("segment of {} px centred at ({:.2}, {:.2})", s.count(), w[0], w[1])
            }
            None => format!("empty segment {:?}", s.provenance.flags),
        },
        Value::Number(n) => format!("{n}"),
        Value::Text(t) => t.clone(),
        Value::Boolean(b) => if *b { "yes" } else { "no" }.into(),
        Value::Detections(d) => format!("{} detections", d.len()),
        Value::None => "None".into(),
    }
}

fn overlay(rgb: &[f32], mask: &[bool]) -> Vec<f32> {
    let mut out = rgb.to_vec();
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (k, tint) in [1.0f32, 0.1, 0.8].into_iter().enumerate() {
            out[3 * i + k] = 0.4 * out[3 * i + k] + 0.6 * tint;
        }
    }
    out
}

fn cmd_query(cfg: &EngineConfig, text: &str, out: &mut dyn Write) -> CliResult {
    let (_, assets) = cfg.load_scene_assets()?;
    let view = cfg.view_for(&assets.tree, &assets.transform)?;
    let context = GeoContext::new(assets.tree.clone(), assets.registry.clone(), assets.transform.clone(), view, cfg.embedder()?, cfg.detector()?)
        .with_config(cfg.gv_config());
    let dir = &cfg.out;
    ctx(std::fs::create_dir_all(dir), dir.display())?;
    let generator = cfg.generator()?;
    let generation = generate_program(text, &cfg.ices()?, cfg.ice_count, generator.as_ref(), ApiRegistry::standard());
    let program = match generation {
        Ok(g) => g.program,
        Err(e) => {
            let failed = serde_json::json!({ "query": text, "stage": "generation", "error": e.to_string(), "statements": [] });
            ctx(std::fs::write(dir.join("trace.json"), serde_json::to_vec_pretty(&failed).unwrap()), "trace")?;
            writeln!(out, "None").ok();
            writeln!(out, "generation failed: {e}").ok();
            return Ok(());
        }
    };
    ctx(std::fs::write(dir.join("program.txt"), program.program().to_string()), "program")?;
    let opts = ExecOptions { artifact_dir: Some(dir.join("segments")), ..cfg.exec_options() };
    let run = execute_program(&program, &context, &opts);
    ctx(run.trace.save(&dir.join("trace.json")), "trace")?;

    // confidence maps for every literal structure query
    if let Ok(render) = context.render() {
        for st in &program.program().statements {
            let Some(q) = st.call.kwargs.iter().find(|k| k.name == "query").and_then(|k| match &k.value {
                Arg::Str(s) if st.call.func == "GetStructureSeg" => Some(s.clone()),
                _ => None,
            }) else {
                continue;
            };
            if let Ok(map) = relevancy_map(&render, &q, context.embedder.as_ref(), &context.codec) {
                let _ = map.export(&dir.join(format!("confidence_{}.png", st.target)));
            }
        }
        if let Value::Segment(s) = &run.value {
            let png = crate::imageio::encode_rgb(view.width, view.height, &overlay(&render.rgb, &s.mask));
            if let Ok(png) = png {
                let _ = crate::imageio::write_file(dir.join("answer_overlay.png"), &png);
            }
            if let Ok(png) = s.to_png() {
                let _ = crate::imageio::write_file(dir.join("answer.png"), &png);
            }
        }
    }
    writeln!(out, "PROGRAM:\n{}", program.program()).ok();
    writeln!(out, "ANSWER: {}", describe(&run.value, &context)).ok();
    if let Some((i, e)) = run.trace.failure() {
        writeln!(out, "failed at statement {} ({}={}): {}", i + 1, e.target, e.func, e.message.clone().unwrap_or_default()).ok();
    }
    Ok(())
}

fn summarize(report: &MetricsReport, out: &mut dyn Write) {
    writeln!(out, "queries {}  none {} ({:.1}%)  generated {:.1}%", report.total, report.none_count, report.none_share, report.generation_success_rate).ok();
    for (task, m) in &report.tasks {
        let mut line = format!("{:6} n={:<4} none={:<3} gen={:5.1}%", task.code(), m.queries, m.none_count, m.generation_success_rate);
        if let Some(v) = m.localization_accuracy {
            line += &format!("  acc@{}={v:.2}%", report.iou_threshold);
        }
        if let Some(v) = m.mean_iou {
            line += &format!("  mIoU={v:.4}");
        }
        if let Some(v) = m.mae {
            line += &format!("  MAE={v:.4}");
        }
        if let Some(v) = m.exact_match {
            line += &format!("  EM={v:.2}%");
        }
        writeln!(out, "{line}").ok();
    }
}

fn cmd_eval(cfg: &EngineConfig, dataset: &Path, sweep: &[usize], out: &mut dyn Write) -> CliResult {
    let records = ctx(load_dataset(dataset), dataset.display())?;
    let mut catalog = SceneCatalog::new(cfg.embedder()?, cfg.detector()?);
    catalog.gv = cfg.gv_config();
    let root = dataset.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    ctx(catalog.load_dir(root), root.display())?;
    if let Some(p) = &cfg.scene {
        let (_, assets) = cfg.load_scene_assets()?;
        catalog.insert(p.file_stem().unwrap_or_default().to_string_lossy(), assets);
    }
    let mut engine = Engine::new(Arc::new(catalog), cfg.generator()?);
    engine.ices = cfg.ices()?;
    engine.n_ice = cfg.ice_count;
    engine.exec = cfg.exec_options();
    engine.score = ScoreOptions { none_policy: cfg.none_policy, ..ScoreOptions::default() };
    engine.jobs = cfg.jobs.max(1);
    engine.trace_dir = Some(cfg.out.join("traces"));
    let reports = if sweep.is_empty() { vec![run_benchmark(&records, &engine)] } else { ice_sweep(&records, &engine, sweep) };
    for r in &reports {
        let stem = if sweep.is_empty() { "report".to_string() } else { format!("report_ice{}", r.ice_count) };
        let (json, csv) = ctx(r.save(&cfg.out, &stem), "report")?;
        writeln!(out, "[{} examples] {} {}", r.ice_count, json.display(), csv.display()).ok();
        summarize(r, out);
    }
    Ok(())
}

fn cmd_synth(cfg: &EngineConfig, out: &mut dyn Write) -> CliResult {
    let suite = ctx(SynthSuite::generate(cfg.seed, &SynthSpec::default()), "synth")?;
    let dir = &cfg.out;
    let dataset = ctx(suite.write(dir), dir.display())?;
    let id = &suite.scene_id;
    let config = EngineConfig {
        scene: Some(format!("{id}.gclf").into()),
        registry: Some(format!("{id}.landmarks.geojson").into()),
        view: Some(suite.view),
        out: "run".into(),
        seed: cfg.seed,
        provider: ProviderConfig { programs: Some("programs.json".into()), ..ProviderConfig::default() },
        ..EngineConfig::default()
    };
    let cfg_path = dir.join("geoprog.toml");
    ctx(std::fs::write(&cfg_path, toml::to_string_pretty(&config).expect("config serializes")), cfg_path.display())?;
    writeln!(out, "scene     {}", dir.join(format!("{id}.gclf")).display()).ok();
    writeln!(out, "registry  {}", dir.join(format!("{id}.landmarks.geojson")).display()).ok();
    writeln!(out, "dataset   {} ({} queries)", dataset.display(), suite.queries.len()).ok();
    writeln!(out, "config    {}", cfg_path.display()).ok();
    Ok(())
}

fn cmd_ingest(cfg: &EngineConfig, input: &Path, labels: Option<&Path>, output: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let tree = ctx(load_scene(input), input.display())?;
    let issues = validate_tree(&tree);
    writeln!(out, "{}: {} nodes, {} leaves, depth {}, latent dim {}", input.display(), tree.len(), tree.leaf_count(), tree.depth(), tree.header.latent_dim).ok();
    writeln!(out, "transform: {}", if tree.transform().is_some() { "embedded" } else { "none" }).ok();
    if !issues.is_empty() {
        return Err(CliError(format!("{} invariant violations, first: {:?}", issues.len(), issues[0])));
    }
    let Some(labels) = labels else { return Ok(()) };
    let names: Vec<String> = ctx(serde_json::from_str(&ctx(std::fs::read_to_string(labels), labels.display())?), labels.display())?;
    let embedder = cfg.embedder()?;
    let dim = ctx(embedder.dim(), "embedder")?;
    let baked = ctx(bake_features(&tree, &names, embedder.as_ref(), &LatentCodec::identity(dim)), "bake")?;
    let dest = output.map(Path::to_path_buf).unwrap_or_else(|| cfg.out.join(input.file_name().unwrap_or_default()));
    if let Some(d) = dest.parent() {
        ctx(std::fs::create_dir_all(d), d.display())?;
    }
    ctx(save_scene(&baked, &dest), dest.display())?;
    writeln!(out, "baked {} features into {}", baked.len(), dest.display()).ok();
    Ok(())
}

fn cmd_georef(cfg: &EngineConfig, points: &Path, kind: KindArg, output: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let cps = ctx(ControlPointSet::load(points), points.display())?;
    let kind = match kind {
        KindArg::Similarity => TransformKind::Similarity,
        KindArg::Affine => TransformKind::Affine,
    };
    let t = ctx(estimate_transform(&cps, kind), "georef")?;
    writeln!(out, "points {}  rmse {:.6e}  scale {:.9}  rotation {:.9} rad", cps.len(), t.residual_rmse, t.scale(), t.rotation()).ok();
    let target = output.map(Path::to_path_buf).or_else(|| cfg.scene.clone());
    if let Some(dest) = target {
        let src = cfg.scene.clone().unwrap_or_else(|| dest.clone());
        let mut tree = ctx(load_scene(&src), src.display())?;
        tree.set_transform(Some(t));
        ctx(save_scene(&tree, &dest), dest.display())?;
        writeln!(out, "transform written to {}", dest.display()).ok();
    } else {
        writeln!(out, "{}", serde_json::to_string_pretty(&t).unwrap()).ok();
    }
    Ok(())
}

fn cmd_render(cfg: &EngineConfig, res: f64, out: &mut dyn Write) -> CliResult {
    if !(res > 0.0) {
        return Err(CliError::new("--res must be positive"));
    }
    let (tree, assets) = cfg.load_scene_assets()?;
    let view = ctx(TopDownView::covering(&tree, res / assets.transform.scale(), 0.0), "view")?;
    let product = ctx(render_topdown(&tree, &view), "render")?;
    ctx(product.export(&cfg.out), cfg.out.display())?;
    let cut = select_lod_cut(&tree, &view);
    writeln!(out, "{}x{} px, cut {} of {} nodes ({} leaves), written to {}", view.width, view.height, cut.len(), tree.len(), tree.leaf_count(), cfg.out.display()).ok();
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Query { text } => cmd_query(&cfg, text, out),
        Command::Eval { dataset, sweep } => cmd_eval(&cfg, dataset, sweep, out),
        Command::Synth => cmd_synth(&cfg, out),
        Command::Ingest { input, labels, output } => cmd_ingest(&cfg, input, labels.as_deref(), output.as_deref(), out),
        Command::Georef { control_points, kind, output } => cmd_georef(&cfg, control_points, *kind, output.as_deref(), out),
        Command::Render { res } => cmd_render(&cfg, *res, out),
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                let _ = write!(err, "{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Save a failed-generation or execution trace next to other artifacts.
pub fn write_trace(dir: &Path, trace: &Trace) -> std::io::Result<()> {
    trace.save(&dir.join("trace.json"))
}
