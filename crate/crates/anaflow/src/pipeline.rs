//! End-to-end orchestration. Each stage consumes the previous stage's
//! artifact, writes its own artifacts plus a JSON manifest into the output
//! directory, and `run_full` chains them image-to-layout. `run_case` adapts
//! one fixture case and attempt into benchmark evidence for the evaluation
//! harness.
//!
//! Determinism contract: with the same config, seed and replay fixtures,
//! every artifact and manifest is byte-identical except for the manifest
//! `timestamp` field.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evaluation::{AttemptEvidence, EvalError};
use crate::gateway::{
    render_transcript, Gateway, HttpGateway, RecordingGateway, ReplayGateway,
};
use crate::netlist::{parse_spice, recovery_score, serialize, NetlistIR, RecoveryReport};
use crate::placement::{
    anneal, cost_parts, instance_from_netlist, Instance, Placement, Schedule, Weights,
};
use crate::reasoning::{fuse, run_branches, ExtractionInput, FuseOutcome, ReasoningConfig};
use crate::routing::{
    build_grid, derive_net_pairs, drc_check, layout_svg, route_all, CostWeights, RouteReport,
    RoutingRules, Violation,
};
use crate::sizing::{
    optimize, plan_search_space, AgentConfig, AnalyticEvaluator, AnalyticOptions, OptimizeConfig,
    Spec, SpiceAdapter, SpiceConfig, Study,
};
use crate::vision::{
    annotate, derive_wire_mask, label_regions, load_raster, merge_nodes, Annotated, DetectionSet,
    NodeMap, Raster, VisionConfig,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("extract: {0}")]
    Extract(String),
    #[error("netlist: {0}")]
    Netlist(String),
    #[error("sizing: {0}")]
    Sizing(String),
    #[error("placement: {0}")]
    Placement(String),
    #[error("routing: {0}")]
    Routing(String),
}

impl PipelineError {
    /// Stage tag used in error reporting and exit messages.
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Io(_) => "io",
            PipelineError::Extract(_) => "extract",
            PipelineError::Netlist(_) => "netlist",
            PipelineError::Sizing(_) => "sizing",
            PipelineError::Placement(_) => "placement",
            PipelineError::Routing(_) => "routing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Replay,
    Record,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Replay => "replay",
            Mode::Record => "record",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(Mode::Live),
            "replay" => Ok(Mode::Replay),
            "record" => Ok(Mode::Record),
            other => Err(format!("mode must be live, replay or record, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub model: String,
    /// Step-by-step instructions in extraction prompts.
    pub cot: bool,
    /// Worked example ahead of each extraction query.
    pub micl: bool,
    /// Model arbitration when extraction branches disagree.
    pub intent: bool,
    pub seed: u64,
    /// Sizing trial budget.
    pub budget: usize,
    pub schedule: Schedule,
    pub place_weights: Weights,
    /// Block clearance for placement, µm.
    pub spacing: f64,
    pub rules: RoutingRules,
    pub router: CostWeights,
    pub fixtures: PathBuf,
    pub out: PathBuf,
    pub simulator: Option<PathBuf>,
    /// Distinguishes replay keys between cases and attempts.
    pub case_tag: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: Mode::Replay,
            model: "default".to_string(),
            cot: true,
            micl: true,
            intent: true,
            seed: 42,
            budget: 100,
            schedule: Schedule::default(),
            place_weights: Weights::default(),
            spacing: 1.0,
            rules: RoutingRules::default(),
            router: CostWeights::default(),
            fixtures: PathBuf::from("fixtures"),
            out: PathBuf::from("out"),
            simulator: None,
            case_tag: "case".to_string(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| PipelineError::Config(format!("{key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        other => Err(PipelineError::Config(format!(
            "{key}: expected true/false, got {other}"
        ))),
    }
}

impl PipelineConfig {
    /// Apply one `key = value` setting. Unknown keys are errors so typos in
    /// config files fail loudly.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        match key {
            "mode" => self.mode = value.parse().map_err(PipelineError::Config)?,
            "model" => self.model = value.to_string(),
            "cot" => self.cot = parse_bool(key, value)?,
            "micl" => self.micl = parse_bool(key, value)?,
            "intent" => self.intent = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "budget" => self.budget = parse_num(key, value)?,
            "sa_t0" => {
                self.schedule.t0 = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "sa_alpha" => self.schedule.alpha = parse_num(key, value)?,
            "sa_moves_per_temp" => self.schedule.moves_per_temp = parse_num(key, value)?,
            "sa_stop_ratio" => self.schedule.stop_ratio = parse_num(key, value)?,
            "area_weight" => self.place_weights.area = parse_num(key, value)?,
            "wirelength_weight" => self.place_weights.wirelength = parse_num(key, value)?,
            "symmetry_weight" => self.place_weights.symmetry = parse_num(key, value)?,
            "spacing" => self.spacing = parse_num(key, value)?,
            "pitch" => self.rules.pitch = parse_num(key, value)?,
            "margin" => self.rules.margin = parse_num(key, value)?,
            "min_spacing" => self.rules.min_spacing = parse_num(key, value)?,
            "base_cost" => self.router.base = parse_num(key, value)?,
            "wrong_dir_cost" => self.router.wrong_dir = parse_num(key, value)?,
            "via_cost" => self.router.via = parse_num(key, value)?,
            "congestion_cost" => self.router.congestion = parse_num(key, value)?,
            "sensitivity_cost" => self.router.sensitivity = parse_num(key, value)?,
            "fixtures" => self.fixtures = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "simulator" => {
                self.simulator = if value.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(value))
                }
            }
            "case_tag" => self.case_tag = value.to_string(),
            other => {
                return Err(PipelineError::Config(format!("unknown config key {other}")))
            }
        }
        Ok(())
    }

    /// Load `key = value` lines; `#` starts a comment, blank lines skipped.
    pub fn load_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let text = fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!(
                    "{}:{}: expected key = value",
                    path.display(),
                    lineno + 1
                )));
            };
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// The loadable `key = value` rendering of this config. Paths are kept
    /// relative to wherever the file is consumed, so `fixtures` and `out`
    /// are deliberately not emitted.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        push("mode", self.mode.as_str().to_string());
        push("model", self.model.clone());
        push("cot", self.cot.to_string());
        push("micl", self.micl.to_string());
        push("intent", self.intent.to_string());
        push("seed", self.seed.to_string());
        push("budget", self.budget.to_string());
        push(
            "sa_t0",
            self.schedule.t0.map_or("auto".to_string(), |t| t.to_string()),
        );
        push("sa_alpha", self.schedule.alpha.to_string());
        push("sa_moves_per_temp", self.schedule.moves_per_temp.to_string());
        push("sa_stop_ratio", self.schedule.stop_ratio.to_string());
        push("area_weight", self.place_weights.area.to_string());
        push("wirelength_weight", self.place_weights.wirelength.to_string());
        push("symmetry_weight", self.place_weights.symmetry.to_string());
        push("spacing", self.spacing.to_string());
        push("pitch", self.rules.pitch.to_string());
        push("margin", self.rules.margin.to_string());
        push("min_spacing", self.rules.min_spacing.to_string());
        push("base_cost", self.router.base.to_string());
        push("wrong_dir_cost", self.router.wrong_dir.to_string());
        push("via_cost", self.router.via.to_string());
        push("congestion_cost", self.router.congestion.to_string());
        push("sensitivity_cost", self.router.sensitivity.to_string());
        out
    }

    fn echo(&self) -> ConfigEcho {
        ConfigEcho {
            mode: self.mode,
            model: self.model.clone(),
            cot: self.cot,
            micl: self.micl,
            intent: self.intent,
            seed: self.seed,
            budget: self.budget,
            case_tag: self.case_tag.clone(),
        }
    }
}

/// The config fields echoed into every manifest. Paths are excluded so the
/// same run in a different directory produces identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub mode: Mode,
    pub model: String,
    pub cot: bool,
    pub micl: bool,
    pub intent: bool,
    pub seed: u64,
    pub budget: usize,
    pub case_tag: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub ok: bool,
    pub timestamp: u64,
    pub config: ConfigEcho,
    /// Input name → sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, PipelineError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_manifest(
    cfg: &PipelineConfig,
    stage: &str,
    ok: bool,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    details: serde_json::Value,
) -> Result<PathBuf, PipelineError> {
    let manifest = Manifest {
        stage: stage.to_string(),
        ok,
        timestamp: now_secs(),
        config: cfg.echo(),
        inputs,
        outputs,
        details,
    };
    let path = cfg.out.join(format!("{stage}.manifest.json"));
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Config(format!("manifest: {e}")))?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

fn write_artifact(cfg: &PipelineConfig, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
    fs::write(cfg.out.join(name), bytes)?;
    Ok(())
}

/// Build the gateway for the configured mode. Live and record modes read
/// credentials from the environment; replay needs only the fixture dir.
pub fn make_gateway(cfg: &PipelineConfig) -> Result<Box<dyn Gateway + Sync>, PipelineError> {
    let replay_dir = cfg.fixtures.join("replay");
    match cfg.mode {
        Mode::Replay => Ok(Box::new(ReplayGateway::new(replay_dir))),
        Mode::Live => {
            let live = HttpGateway::from_env()
                .map_err(|e| PipelineError::Config(format!("live gateway: {e}")))?;
            Ok(Box::new(live))
        }
        Mode::Record => {
            let live = HttpGateway::from_env()
                .map_err(|e| PipelineError::Config(format!("record gateway: {e}")))?;
            Ok(Box::new(RecordingGateway::new(live, replay_dir)))
        }
    }
}

/// The extraction artifact bundle handed to the reasoning branches.
pub struct ExtractBundle {
    pub raw_png: Vec<u8>,
    pub annotated: Annotated,
}

fn raster_png(r: &Raster) -> Result<Vec<u8>, PipelineError> {
    let img: image::GrayImage =
        image::ImageBuffer::from_raw(r.width as u32, r.height as u32, r.pixels.clone())
            .ok_or_else(|| PipelineError::Extract("raster buffer size mismatch".to_string()))?;
    let mut png = std::io::Cursor::new(Vec::new());
    img.write_to(&mut png, image::ImageFormat::Png)
        .map_err(|e| PipelineError::Extract(format!("png encode: {e}")))?;
    Ok(png.into_inner())
}

/// Connectivity analysis: raster + detections → labeled wire regions and
/// the annotated overlay. Writes raw.png, overlay.png, node_map.json.
pub fn stage_extract(
    cfg: &PipelineConfig,
    image: &Path,
    detections: &Path,
) -> Result<ExtractBundle, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let raster = load_raster(image).map_err(|e| PipelineError::Extract(e.to_string()))?;
    let det_text = fs::read_to_string(detections)?;
    let dets =
        DetectionSet::from_json(&det_text).map_err(|e| PipelineError::Extract(e.to_string()))?;

    let vcfg = VisionConfig::default();
    let mask = derive_wire_mask(&raster, &dets, &vcfg);
    let labeling = label_regions(&mask, &vcfg);
    let labeling = merge_nodes(&labeling, vcfg.merge_dist);
    let annotated = annotate(&raster, &mask, &labeling, &dets.detections)
        .map_err(|e| PipelineError::Extract(e.to_string()))?;
    let raw_png = raster_png(&raster)?;

    let node_map_json = serde_json::to_string_pretty(&annotated.node_map)
        .map_err(|e| PipelineError::Extract(format!("node map: {e}")))?;
    write_artifact(cfg, "raw.png", &raw_png)?;
    write_artifact(cfg, "overlay.png", &annotated.overlay_png)?;
    write_artifact(cfg, "node_map.json", node_map_json.as_bytes())?;

    let inputs = BTreeMap::from([
        ("image".to_string(), sha256_hex(&fs::read(image)?)),
        ("detections".to_string(), sha256_hex(det_text.as_bytes())),
    ]);
    write_manifest(
        cfg,
        "extract",
        true,
        inputs,
        vec!["raw.png".into(), "overlay.png".into(), "node_map.json".into()],
        serde_json::json!({
            "regions": annotated.node_map.regions.len(),
            "detections": annotated.node_map.detections.len(),
            "wire_pixels": mask.count(),
        }),
    )?;
    Ok(ExtractBundle { raw_png, annotated })
}

/// Rehydrate a bundle written by `stage_extract` from its directory.
pub fn load_bundle(dir: &Path) -> Result<ExtractBundle, PipelineError> {
    let raw_png = fs::read(dir.join("raw.png"))?;
    let overlay_png = fs::read(dir.join("overlay.png"))?;
    let node_map: NodeMap =
        serde_json::from_str(&fs::read_to_string(dir.join("node_map.json"))?)
            .map_err(|e| PipelineError::Extract(format!("node_map.json: {e}")))?;
    Ok(ExtractBundle {
        raw_png,
        annotated: Annotated {
            overlay_png,
            node_map,
        },
    })
}

pub struct NetlistOutcome {
    pub fused: FuseOutcome,
    pub recovery: Option<RecoveryReport>,
}

/// Multi-branch extraction and fusion. Writes branches.json, fused.sp.
/// When a golden netlist is supplied the recovery score lands in the
/// manifest; a mismatch is a scoring fact, not a stage failure.
pub fn stage_netlist(
    cfg: &PipelineConfig,
    gateway: &(dyn Gateway + Sync),
    bundle: &ExtractBundle,
    golden: Option<&NetlistIR>,
) -> Result<NetlistOutcome, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let rcfg = ReasoningConfig {
        model: cfg.model.clone(),
        case_tag: cfg.case_tag.clone(),
        cot: cfg.cot,
        micl: cfg.micl,
        intent_fusion: cfg.intent,
    };
    let input = ExtractionInput {
        raw_png: &bundle.raw_png,
        annotated: &bundle.annotated,
    };
    let hypotheses =
        run_branches(&gateway, &input, &rcfg).map_err(|e| PipelineError::Netlist(e.to_string()))?;
    let branches_json = serde_json::to_string_pretty(&hypotheses)
        .map_err(|e| PipelineError::Netlist(format!("branches: {e}")))?;
    write_artifact(cfg, "branches.json", branches_json.as_bytes())?;

    let fused =
        fuse(&gateway, &hypotheses, &rcfg).map_err(|e| PipelineError::Netlist(e.to_string()))?;
    let deck = serialize(&fused.netlist);
    write_artifact(cfg, "fused.sp", deck.as_bytes())?;

    let recovery = golden.map(|g| recovery_score(&fused.netlist, g));
    let inputs = BTreeMap::from([
        ("raw_png".to_string(), sha256_hex(&bundle.raw_png)),
        (
            "overlay_png".to_string(),
            sha256_hex(&bundle.annotated.overlay_png),
        ),
    ]);
    write_manifest(
        cfg,
        "netlist",
        true,
        inputs,
        vec!["branches.json".into(), "fused.sp".into()],
        serde_json::json!({
            "method": fused.method,
            "branch_valid": fused.branch_valid,
            "notes": fused.notes,
            "devices": fused.netlist.devices.len(),
            "recovery": recovery,
        }),
    )?;
    Ok(NetlistOutcome { fused, recovery })
}

pub struct SizeOutcome {
    pub sized: NetlistIR,
    pub study: Study,
    pub spec_met: bool,
    pub best_fom: f64,
}

/// Search-space planning plus the sizing loop. Writes transcript.txt,
/// study.jsonl, sized.sp.
pub fn stage_size(
    cfg: &PipelineConfig,
    gateway: &(dyn Gateway + Sync),
    ir: &NetlistIR,
    spec: &Spec,
) -> Result<SizeOutcome, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let acfg = AgentConfig {
        model: cfg.model.clone(),
        case_tag: cfg.case_tag.clone(),
        ..AgentConfig::default()
    };
    let plan =
        plan_search_space(ir, &gateway, &acfg).map_err(|e| PipelineError::Sizing(e.to_string()))?;
    write_artifact(cfg, "transcript.txt", render_transcript(&plan.transcript).as_bytes())?;

    let ocfg = OptimizeConfig {
        budget: cfg.budget,
        ..OptimizeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let study = match &cfg.simulator {
        Some(sim) => {
            let adapter = SpiceAdapter::new(
                ir,
                &plan.space,
                SpiceConfig {
                    simulator: sim.clone(),
                    ..SpiceConfig::default()
                },
            );
            optimize(&plan.space, &adapter, spec, &ocfg, &mut rng)
        }
        None => {
            let evaluator = AnalyticEvaluator::new(ir, &plan.space, AnalyticOptions::default())
                .map_err(|e| PipelineError::Sizing(e.to_string()))?;
            optimize(&plan.space, &evaluator, spec, &ocfg, &mut rng)
        }
    }
    .map_err(|e| PipelineError::Sizing(e.to_string()))?;

    let best = study
        .best()
        .ok_or_else(|| PipelineError::Sizing("study has no completed trial".to_string()))?;
    let sized = plan.space.apply(ir, &best.x);
    let spec_met = spec.met(&best.metrics);
    let best_fom = best.fom;
    let best_index = best.index;
    let deck = serialize(&sized);

    study
        .save_jsonl(&cfg.out.join("study.jsonl"))
        .map_err(|e| PipelineError::Sizing(e.to_string()))?;
    write_artifact(cfg, "sized.sp", deck.as_bytes())?;

    let pruned = study
        .trials
        .iter()
        .filter(|t| t.state == crate::sizing::TrialState::Pruned)
        .count();
    let failed = study
        .trials
        .iter()
        .filter(|t| t.state == crate::sizing::TrialState::Failed)
        .count();
    let inputs = BTreeMap::from([
        ("netlist".to_string(), sha256_hex(serialize(ir).as_bytes())),
        (
            "spec".to_string(),
            sha256_hex(
                serde_json::to_string(&spec.targets)
                    .unwrap_or_default()
                    .as_bytes(),
            ),
        ),
    ]);
    write_manifest(
        cfg,
        "size",
        true,
        inputs,
        vec!["transcript.txt".into(), "study.jsonl".into(), "sized.sp".into()],
        serde_json::json!({
            "dims": plan.space.dims.len(),
            "agent_exhausted": plan.exhausted,
            "trials": study.trials.len(),
            "pruned": pruned,
            "failed": failed,
            "best_index": best_index,
            "best_fom": best_fom,
            "spec_met": spec_met,
        }),
    )?;
    Ok(SizeOutcome {
        sized,
        study,
        spec_met,
        best_fom,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlaceArtifact {
    pub instance: Instance,
    pub placement: Placement,
    pub cost: f64,
}

/// Simulated-annealing placement. Writes placement.json.
pub fn stage_place(cfg: &PipelineConfig, ir: &NetlistIR) -> Result<PlaceArtifact, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let instance = instance_from_netlist(ir, cfg.spacing);
    if instance.blocks.is_empty() {
        return Err(PipelineError::Placement(
            "netlist has no placeable devices".to_string(),
        ));
    }
    // Offset stream so placement does not share the sizing loop's draws.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let result = anneal(&instance, &cfg.schedule, &cfg.place_weights, &mut rng);
    let parts = cost_parts(&result.placement, &instance);

    let artifact = PlaceArtifact {
        instance: instance.clone(),
        placement: result.placement,
        cost: result.cost,
    };
    let json = serde_json::to_string_pretty(&artifact)
        .map_err(|e| PipelineError::Placement(format!("placement: {e}")))?;
    write_artifact(cfg, "placement.json", json.as_bytes())?;

    let inputs = BTreeMap::from([("netlist".to_string(), sha256_hex(serialize(ir).as_bytes()))]);
    write_manifest(
        cfg,
        "place",
        true,
        inputs,
        vec!["placement.json".into()],
        serde_json::json!({
            "blocks": instance.blocks.len(),
            "pairs": instance.pairs,
            "bbox": artifact.placement.bbox,
            "area": parts.area,
            "wirelength": parts.hpwl,
            "symmetry": parts.symmetry,
            "cost": artifact.cost,
        }),
    )?;
    Ok(artifact)
}

pub struct RouteOutcome {
    pub report: RouteReport,
    pub violations: Vec<Violation>,
    /// Every multi-pin net routed and DRC came back empty.
    pub clean: bool,
}

/// Mirror axis shared by the placed symmetry pairs, if any.
fn pair_axis(placement: &Placement, instance: &Instance) -> Option<f64> {
    let mut axes = Vec::new();
    for (a, b) in &instance.pairs {
        if let (Some(ra), Some(rb)) = (placement.rects.get(a), placement.rects.get(b)) {
            axes.push(0.5 * ((ra.x + 0.5 * ra.w) + (rb.x + 0.5 * rb.w)));
        }
    }
    if axes.is_empty() {
        None
    } else {
        Some(axes.iter().sum::<f64>() / axes.len() as f64)
    }
}

/// Grid construction, A* routing and design-rule checking. Writes
/// routes.json, drc.json, layout.svg.
pub fn stage_route(
    cfg: &PipelineConfig,
    ir: &NetlistIR,
    place: &PlaceArtifact,
) -> Result<RouteOutcome, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let mut grid = build_grid(&place.placement, &place.instance, &cfg.rules)
        .map_err(|e| PipelineError::Routing(e.to_string()))?;
    let (net_pairs, sensitive) = derive_net_pairs(ir, &place.instance.pairs);
    let axis = pair_axis(&place.placement, &place.instance);
    let report = route_all(&mut grid, &cfg.router, &net_pairs, &sensitive, axis);
    let violations = drc_check(&report.routes, &grid, &cfg.rules);
    let clean = report.is_clean() && violations.is_empty();

    let svg = layout_svg(&place.instance, &place.placement, &grid, &report.routes);
    write_artifact(cfg, "layout.svg", svg.as_bytes())?;
    let routes_json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Routing(format!("routes: {e}")))?;
    write_artifact(cfg, "routes.json", routes_json.as_bytes())?;
    let drc_json = serde_json::to_string_pretty(&violations)
        .map_err(|e| PipelineError::Routing(format!("drc: {e}")))?;
    write_artifact(cfg, "drc.json", drc_json.as_bytes())?;

    let placement_hash = sha256_hex(
        serde_json::to_string(&place.placement)
            .unwrap_or_default()
            .as_bytes(),
    );
    let inputs = BTreeMap::from([
        ("netlist".to_string(), sha256_hex(serialize(ir).as_bytes())),
        ("placement".to_string(), placement_hash),
    ]);
    write_manifest(
        cfg,
        "route",
        clean,
        inputs,
        vec!["routes.json".into(), "drc.json".into(), "layout.svg".into()],
        serde_json::json!({
            "routed": report.routes.len(),
            "unrouted": report.unrouted,
            "asymmetric": report.asymmetric,
            "violations": violations.len(),
            "net_pairs": net_pairs,
            "axis": axis,
            "clean": clean,
        }),
    )?;
    Ok(RouteOutcome {
        report,
        violations,
        clean,
    })
}

/// Everything `run_full` learned about one attempt. `error` is the stage
/// that aborted the run, if any; artifacts from completed stages remain on
/// disk either way.
pub struct FullOutcome {
    pub evidence: AttemptEvidence,
    pub recovery: Option<RecoveryReport>,
    pub error: Option<PipelineError>,
}

impl FullOutcome {
    /// Full-pipeline success: every stage ran, the layout is clean, and the
    /// fused netlist matched the golden one when a golden was supplied.
    pub fn ok(&self) -> bool {
        self.error.is_none()
            && self.evidence.drc_clean == Some(true)
            && self.evidence.netlist_exact != Some(false)
    }
}

/// Image to layout in one call, collecting per-stage evidence as it goes.
/// A stage failure stops the chain and is recorded in the evidence instead
/// of propagating, so benchmark attempts can be scored uniformly.
pub fn run_full(
    cfg: &PipelineConfig,
    gateway: &(dyn Gateway + Sync),
    image: &Path,
    detections: &Path,
    spec: &Spec,
    golden: Option<&NetlistIR>,
) -> FullOutcome {
    let mut evidence = AttemptEvidence::default();
    let mut stages: Vec<(&str, bool)> = Vec::new();
    let fail = |mut evidence: AttemptEvidence,
                stages: Vec<(&str, bool)>,
                recovery: Option<RecoveryReport>,
                cfg: &PipelineConfig,
                e: PipelineError| {
        evidence.note = Some(format!("{}: {e}", e.stage()));
        let _ = write_full_manifest(cfg, &stages, &evidence, false);
        FullOutcome {
            evidence,
            recovery,
            error: Some(e),
        }
    };

    let bundle = match stage_extract(cfg, image, detections) {
        Ok(b) => b,
        Err(e) => {
            evidence.netlist_exact = Some(false);
            stages.push(("extract", false));
            return fail(evidence, stages, None, cfg, e);
        }
    };
    stages.push(("extract", true));

    let netlist = match stage_netlist(cfg, gateway, &bundle, golden) {
        Ok(n) => n,
        Err(e) => {
            evidence.netlist_exact = Some(false);
            stages.push(("netlist", false));
            return fail(evidence, stages, None, cfg, e);
        }
    };
    stages.push(("netlist", true));
    let recovery = netlist.recovery.clone();
    evidence.netlist_exact = recovery.as_ref().map(|r| r.exact_match);

    let sized = match stage_size(cfg, gateway, &netlist.fused.netlist, spec) {
        Ok(s) => s,
        Err(e) => {
            evidence.spec_met = Some(false);
            stages.push(("size", false));
            return fail(evidence, stages, recovery, cfg, e);
        }
    };
    stages.push(("size", true));
    evidence.spec_met = Some(sized.spec_met);

    let placed = match stage_place(cfg, &sized.sized) {
        Ok(p) => p,
        Err(e) => {
            evidence.placed = Some(false);
            stages.push(("place", false));
            return fail(evidence, stages, recovery, cfg, e);
        }
    };
    stages.push(("place", true));
    evidence.placed = Some(true);

    let routed = match stage_route(cfg, &sized.sized, &placed) {
        Ok(r) => r,
        Err(e) => {
            evidence.drc_clean = Some(false);
            stages.push(("route", false));
            return fail(evidence, stages, recovery, cfg, e);
        }
    };
    stages.push(("route", routed.clean));
    evidence.drc_clean = Some(routed.clean);
    if !routed.clean {
        evidence.note = Some(format!(
            "routing left {} nets unrouted, {} violations",
            routed.report.unrouted.len(),
            routed.violations.len()
        ));
    }

    let ok = evidence.drc_clean == Some(true) && evidence.netlist_exact != Some(false);
    let _ = write_full_manifest(cfg, &stages, &evidence, ok);
    FullOutcome {
        evidence,
        recovery,
        error: None,
    }
}

fn write_full_manifest(
    cfg: &PipelineConfig,
    stages: &[(&str, bool)],
    evidence: &AttemptEvidence,
    ok: bool,
) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(&cfg.out)?;
    let stage_list: Vec<serde_json::Value> = stages
        .iter()
        .map(|(name, ok)| serde_json::json!({"stage": name, "ok": ok}))
        .collect();
    write_manifest(
        cfg,
        "full",
        ok,
        BTreeMap::new(),
        Vec::new(),
        serde_json::json!({
            "stages": stage_list,
            "evidence": evidence,
        }),
    )
}

/// Fixture layout for one benchmark case.
pub struct CasePaths {
    pub dir: PathBuf,
    pub schematic: PathBuf,
    pub detections: PathBuf,
    pub golden: PathBuf,
    pub spec: PathBuf,
}

impl CasePaths {
    pub fn new(fixtures: &Path, case: &str) -> CasePaths {
        let dir = fixtures.join("cases").join(case);
        CasePaths {
            schematic: dir.join("schematic.pgm"),
            detections: dir.join("detections.json"),
            golden: dir.join("golden.sp"),
            spec: dir.join("spec.json"),
            dir,
        }
    }

    pub fn complete(&self) -> bool {
        self.schematic.is_file()
            && self.detections.is_file()
            && self.golden.is_file()
            && self.spec.is_file()
    }
}

/// Case subdirectories of a fixture corpus, sorted.
pub fn list_cases(fixtures: &Path) -> Vec<String> {
    let mut cases = Vec::new();
    if let Ok(entries) = fs::read_dir(fixtures.join("cases")) {
        for entry in entries.flatten() {
            if entry.path().is_dir() {
                cases.push(entry.file_name().to_string_lossy().to_string());
            }
        }
    }
    cases.sort();
    cases
}

/// One benchmark attempt: key the replay tag and artifact dir by case and
/// attempt index, run the full pipeline, return the evidence. Only
/// infrastructure problems (incomplete fixtures, no gateway) are errors.
pub fn run_case(
    cfg: &PipelineConfig,
    case: &str,
    attempt: usize,
) -> Result<AttemptEvidence, EvalError> {
    let paths = CasePaths::new(&cfg.fixtures, case);
    if !paths.complete() {
        return Err(EvalError::MissingFixture(case.to_string()));
    }
    let golden_text = fs::read_to_string(&paths.golden)
        .map_err(|e| EvalError::MissingFixture(format!("{case}: golden.sp: {e}")))?;
    let golden = parse_spice(&golden_text)
        .map_err(|e| EvalError::MissingFixture(format!("{case}: golden.sp: {e}")))?
        .ir;
    let spec_text = fs::read_to_string(&paths.spec)
        .map_err(|e| EvalError::MissingFixture(format!("{case}: spec.json: {e}")))?;
    let spec = Spec::from_json(&spec_text)
        .map_err(|e| EvalError::MissingFixture(format!("{case}: spec.json: {e}")))?;

    let mut sub = cfg.clone();
    sub.case_tag = format!("{case}:a{attempt:02}");
    sub.out = cfg.out.join(case).join(format!("a{attempt:02}"));
    let gateway = make_gateway(&sub)
        .map_err(|e| EvalError::MissingFixture(format!("{case}: gateway: {e}")))?;

    let outcome = run_full(
        &sub,
        gateway.as_ref(),
        &paths.schematic,
        &paths.detections,
        &spec,
        Some(&golden),
    );
    Ok(outcome.evidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_rendering_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.seed = 7;
        cfg.budget = 33;
        cfg.cot = false;
        cfg.schedule.moves_per_temp = 17;
        cfg.router.via = 4.5;
        cfg.rules.pitch = 0.25;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.conf");
        fs::write(&path, cfg.to_kv()).unwrap();
        let mut loaded = PipelineConfig::default();
        loaded.load_file(&path).unwrap();
        assert_eq!(loaded.seed, 7);
        assert_eq!(loaded.budget, 33);
        assert!(!loaded.cot);
        assert_eq!(loaded.schedule.moves_per_temp, 17);
        assert_eq!(loaded.router.via, 4.5);
        assert_eq!(loaded.rules.pitch, 0.25);
    }

    #[test]
    fn unknown_config_keys_fail_loudly() {
        let mut cfg = PipelineConfig::default();
        let err = cfg.set("buget", "50").unwrap_err();
        assert!(matches!(err, PipelineError::Config(m) if m.contains("buget")));
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, "# a comment\n\nseed = 9 # trailing\nmode = record\n").unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.load_file(&path).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.mode, Mode::Record);
    }

    #[test]
    fn manifest_round_trips_through_its_reader() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.out = dir.path().to_path_buf();
        let path = write_manifest(
            &cfg,
            "extract",
            true,
            BTreeMap::from([("image".to_string(), "ab".to_string())]),
            vec!["raw.png".to_string()],
            serde_json::json!({"regions": 7}),
        )
        .unwrap();
        let loaded = Manifest::load(&path).unwrap();
        assert_eq!(loaded.stage, "extract");
        assert!(loaded.ok);
        assert_eq!(loaded.inputs["image"], "ab");
        assert_eq!(loaded.details["regions"], 7);
    }

    #[test]
    fn missing_fixture_dir_is_reported_per_case() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.fixtures = dir.path().to_path_buf();
        cfg.out = dir.path().join("out");
        let err = run_case(&cfg, "ghost", 0).unwrap_err();
        assert!(matches!(err, EvalError::MissingFixture(c) if c == "ghost"));
    }
}
