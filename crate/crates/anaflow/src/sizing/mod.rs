//! Device sizing: an agent-compressed parameter space searched by TPE
//! Bayesian optimization with median pruning, over pluggable circuit
//! evaluators (closed-form square-law model or an external simulator).

pub mod agent;
pub mod analytic;
pub mod spice;
mod tpe;

pub use agent::{plan_search_space, AgentConfig, SearchPlan};
pub use analytic::{AnalyticEvaluator, AnalyticOptions};
pub use spice::{SpiceAdapter, SpiceConfig};
pub use tpe::tpe_suggest;

use crate::netlist::NetlistIR;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SizingError {
    #[error("invalid parameter space: {0}")]
    InvalidSpace(String),
    #[error("metric {0} missing from evaluation result")]
    MissingMetric(String),
    #[error("no trial completed")]
    AllTrialsFailed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("topology not recognized by the analytic model")]
    UnsupportedTopology,
    #[error("simulator not found: {0}")]
    SimulatorNotFound(String),
    #[error("simulation exceeded {0:?}")]
    SimulationTimeout(Duration),
    #[error("could not parse measurement output: {0}")]
    MeasureParse(String),
    #[error("evaluation failed: {0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// One searchable dimension, e.g. `M1.W` in metres.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
    pub unit: String,
}

impl Dim {
    pub fn to_scale(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        }
    }

    pub fn from_scale(&self, v: f64) -> f64 {
        match self.scale {
            Scale::Linear => v,
            Scale::Log => v.exp(),
        }
    }

    pub fn scale_bounds(&self) -> (f64, f64) {
        (self.to_scale(self.lo), self.to_scale(self.hi))
    }
}

/// Search space plus the dim-to-device wiring. A dim named `M1.W` sizes
/// `M1`'s `w` by default; `ties` widens that to several devices so matched
/// pairs stay identical by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub dims: Vec<Dim>,
    pub ties: BTreeMap<String, Vec<(String, String)>>,
    pub provenance: Option<String>,
}

impl ParameterSpace {
    pub fn new(dims: Vec<Dim>) -> Self {
        ParameterSpace {
            dims,
            ties: BTreeMap::new(),
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<(), SizingError> {
        if self.dims.is_empty() {
            return Err(SizingError::InvalidSpace("no dimensions".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.dims {
            if !seen.insert(&d.name) {
                return Err(SizingError::InvalidSpace(format!("duplicate dim {}", d.name)));
            }
            if !(d.lo < d.hi) {
                return Err(SizingError::InvalidSpace(format!(
                    "{}: lo {} not below hi {}",
                    d.name, d.lo, d.hi
                )));
            }
            if d.scale == Scale::Log && d.lo <= 0.0 {
                return Err(SizingError::InvalidSpace(format!(
                    "{}: log scale needs lo > 0",
                    d.name
                )));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> BTreeMap<String, f64> {
        self.dims
            .iter()
            .map(|d| {
                let (lo, hi) = d.scale_bounds();
                (d.name.clone(), d.from_scale(rng.gen_range(lo..hi)))
            })
            .collect()
    }

    /// Devices and params a dim drives: the tie list when present, else the
    /// `DEV.PARAM` reading of the name.
    pub fn targets_of(&self, dim: &str) -> Vec<(String, String)> {
        if let Some(t) = self.ties.get(dim) {
            return t.clone();
        }
        match dim.split_once('.') {
            Some((dev, param)) => vec![(dev.to_string(), param.to_lowercase())],
            None => Vec::new(),
        }
    }

    /// Write a trial point into device params, returning the sized netlist.
    pub fn apply(&self, ir: &NetlistIR, x: &BTreeMap<String, f64>) -> NetlistIR {
        let mut out = ir.clone();
        for dim in &self.dims {
            let Some(v) = x.get(&dim.name) else { continue };
            for (dev, param) in self.targets_of(&dim.name) {
                if let Some(d) = out.devices.iter_mut().find(|d| d.id == dev) {
                    d.params.insert(param.clone(), *v);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Running,
    Complete,
    Pruned,
    Failed,
}

mod fom_value {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub x: BTreeMap<String, f64>,
    pub metrics: BTreeMap<String, f64>,
    /// Intermediate figure of merit after each completed evaluator stage.
    pub steps: Vec<f64>,
    #[serde(with = "fom_value")]
    pub fom: f64,
    pub state: TrialState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "<=")]
    AtMost,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Target {
    pub metric: String,
    pub dir: Direction,
    pub threshold: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spec {
    pub targets: Vec<Target>,
}

impl Spec {
    pub fn from_json(text: &str) -> Result<Self, SizingError> {
        let targets: Vec<Target> = serde_json::from_str(text)?;
        let spec = Spec { targets };
        for t in &spec.targets {
            if !(t.weight > 0.0) {
                return Err(SizingError::InvalidSpace(format!(
                    "target {}: weight must be positive",
                    t.metric
                )));
            }
        }
        Ok(spec)
    }

    /// True when every target is met outright.
    pub fn met(&self, metrics: &BTreeMap<String, f64>) -> bool {
        self.targets.iter().all(|t| match metrics.get(&t.metric) {
            Some(v) => match t.dir {
                Direction::AtLeast => *v >= t.threshold,
                Direction::AtMost => *v <= t.threshold,
            },
            None => false,
        })
    }
}

fn saturation(t: &Target, value: f64) -> f64 {
    let ratio = match t.dir {
        Direction::AtLeast => value / t.threshold,
        Direction::AtMost => t.threshold / value,
    };
    ratio.min(1.0)
}

/// Composite figure of merit: weighted sum of per-target saturating ratios;
/// a metric at threshold contributes exactly its weight, overshoot earns
/// nothing extra, undershoot keeps a gradient.
pub fn fom(metrics: &BTreeMap<String, f64>, spec: &Spec) -> Result<f64, SizingError> {
    let mut total = 0.0;
    for t in &spec.targets {
        let v = metrics
            .get(&t.metric)
            .ok_or_else(|| SizingError::MissingMetric(t.metric.clone()))?;
        total += t.weight * saturation(t, *v);
    }
    Ok(total)
}

/// Like [`fom`] but scoring only the targets measured so far, for pruning
/// decisions between evaluator stages.
pub fn fom_partial(metrics: &BTreeMap<String, f64>, spec: &Spec) -> f64 {
    spec.targets
        .iter()
        .filter_map(|t| metrics.get(&t.metric).map(|v| t.weight * saturation(t, *v)))
        .sum()
}

/// True when the running trial's intermediate fom falls below the median of
/// completed trials at the same stage; inert until `n_warmup` trials have
/// reported there.
pub fn median_prune(trials: &[Trial], fom_at_step: f64, step: usize, n_warmup: usize) -> bool {
    let mut vals: Vec<f64> = trials
        .iter()
        .filter(|t| t.state == TrialState::Complete && t.steps.len() > step)
        .map(|t| t.steps[step])
        .collect();
    if vals.len() < n_warmup.max(1) {
        return false;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    let median = if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    };
    fom_at_step < median
}

/// A circuit evaluator runs a fixed list of staged analyses; the optimizer
/// may stop a trial between stages.
pub trait CircuitEvaluator {
    fn stages(&self) -> usize {
        1
    }

    /// Run one stage, folding newly measured metrics into `out`.
    fn run_stage(
        &self,
        x: &BTreeMap<String, f64>,
        stage: usize,
        out: &mut BTreeMap<String, f64>,
    ) -> Result<(), EvalError>;
}

#[derive(Debug, Clone)]
pub struct OptimizeConfig {
    pub budget: usize,
    pub n_startup: usize,
    pub n_warmup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            budget: 100,
            n_startup: 10,
            n_warmup: 5,
            gamma: 0.25,
            n_candidates: 24,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Study {
    pub trials: Vec<Trial>,
}

impl Study {
    /// Highest-fom completed trial; pruned and failed trials never win.
    pub fn best(&self) -> Option<&Trial> {
        let mut best: Option<&Trial> = None;
        for t in &self.trials {
            if t.state != TrialState::Complete {
                continue;
            }
            if best.map_or(true, |b| t.fom > b.fom) {
                best = Some(t);
            }
        }
        best
    }

    /// Best completed fom seen up to and including each trial index.
    pub fn best_trace(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trials
            .iter()
            .map(|t| {
                if t.state == TrialState::Complete {
                    best = best.max(t.fom);
                }
                best
            })
            .collect()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), SizingError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for t in &self.trials {
            serde_json::to_writer(&mut f, t)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self, SizingError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut trials = Vec::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            trials.push(serde_json::from_str(&line)?);
        }
        Ok(Study { trials })
    }
}

/// Run the sizing loop: random exploration for the first `n_startup`
/// completions, TPE suggestions after, median pruning between evaluator
/// stages throughout. Deterministic for a fixed rng and evaluator.
pub fn optimize<E: CircuitEvaluator, R: Rng>(
    space: &ParameterSpace,
    evaluator: &E,
    spec: &Spec,
    cfg: &OptimizeConfig,
    rng: &mut R,
) -> Result<Study, SizingError> {
    space.validate()?;
    let mut study = Study::default();
    for index in 0..cfg.budget {
        let completed = study
            .trials
            .iter()
            .filter(|t| t.state == TrialState::Complete)
            .count();
        let x = if completed < cfg.n_startup {
            space.sample(rng)
        } else {
            tpe_suggest(&study.trials, space, rng, cfg.gamma, cfg.n_candidates)
        };

        let mut metrics = BTreeMap::new();
        let mut steps = Vec::new();
        let mut verdict: Option<(TrialState, Option<String>)> = None;
        let stages = evaluator.stages().max(1);
        for stage in 0..stages {
            match evaluator.run_stage(&x, stage, &mut metrics) {
                Err(e) => {
                    verdict = Some((TrialState::Failed, Some(e.to_string())));
                    break;
                }
                Ok(()) => {
                    let f = fom_partial(&metrics, spec);
                    steps.push(f);
                    if stage + 1 < stages && median_prune(&study.trials, f, stage, cfg.n_warmup) {
                        verdict = Some((TrialState::Pruned, None));
                        break;
                    }
                }
            }
        }
        let (state, fom_val, failure) = match verdict {
            Some((TrialState::Failed, why)) => (TrialState::Failed, f64::NEG_INFINITY, why),
            Some((TrialState::Pruned, _)) => (
                TrialState::Pruned,
                steps.last().copied().unwrap_or(f64::NEG_INFINITY),
                None,
            ),
            _ => match fom(&metrics, spec) {
                Ok(f) if f.is_finite() => (TrialState::Complete, f, None),
                Ok(f) => (
                    TrialState::Failed,
                    f64::NEG_INFINITY,
                    Some(format!("non-finite fom {f}")),
                ),
                Err(e) => (TrialState::Failed, f64::NEG_INFINITY, Some(e.to_string())),
            },
        };
        study.trials.push(Trial {
            index,
            x,
            metrics,
            steps,
            fom: fom_val,
            state,
            failure,
        });
    }
    if study.best().is_none() {
        return Err(SizingError::AllTrialsFailed);
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_one(metric: &str, dir: Direction, threshold: f64) -> Spec {
        Spec {
            targets: vec![Target {
                metric: metric.to_string(),
                dir,
                threshold,
                weight: 1.0,
            }],
        }
    }

    #[test]
    fn fom_saturates_at_the_threshold() {
        let spec = spec_one("gain_db", Direction::AtLeast, 40.0);
        let at = |v: f64| fom(&[("gain_db".to_string(), v)].into(), &spec).unwrap();
        assert_eq!(at(40.0), 1.0);
        assert_eq!(at(80.0), 1.0);
        assert_eq!(at(20.0), 0.5);
    }

    #[test]
    fn fom_rewards_low_values_on_at_most_targets() {
        let spec = spec_one("power_w", Direction::AtMost, 1e-3);
        let at = |v: f64| fom(&[("power_w".to_string(), v)].into(), &spec).unwrap();
        assert_eq!(at(1e-3), 1.0);
        assert_eq!(at(5e-4), 1.0);
        assert_eq!(at(2e-3), 0.5);
    }

    #[test]
    fn fom_errors_on_missing_metric() {
        let spec = spec_one("gbw_hz", Direction::AtLeast, 1e8);
        assert!(matches!(
            fom(&BTreeMap::new(), &spec),
            Err(SizingError::MissingMetric(m)) if m == "gbw_hz"
        ));
    }

    #[test]
    fn all_targets_met_scores_the_weight_sum() {
        let spec = Spec {
            targets: vec![
                Target { metric: "a".into(), dir: Direction::AtLeast, threshold: 2.0, weight: 1.5 },
                Target { metric: "b".into(), dir: Direction::AtMost, threshold: 3.0, weight: 0.5 },
            ],
        };
        let metrics = [("a".to_string(), 2.0), ("b".to_string(), 3.0)].into();
        assert_eq!(fom(&metrics, &spec).unwrap(), 2.0);
        assert!(spec.met(&metrics));
    }

    #[test]
    fn median_prune_needs_warmup_and_uses_the_median() {
        let mk = |i: usize, step0: f64| Trial {
            index: i,
            x: BTreeMap::new(),
            metrics: BTreeMap::new(),
            steps: vec![step0],
            fom: step0,
            state: TrialState::Complete,
            failure: None,
        };
        let trials: Vec<Trial> = (0..5).map(|i| mk(i, i as f64)).collect();
        assert!(!median_prune(&trials[..4], 0.0, 0, 5), "warmup not reached");
        assert!(median_prune(&trials, 1.9, 0, 5), "below median 2.0");
        assert!(!median_prune(&trials, 2.0, 0, 5), "at median");
        assert!(!median_prune(&trials, 3.5, 0, 5), "above median");
    }

    #[test]
    fn spec_round_trips_through_json() {
        let text = r#"[
            {"metric": "gain_db", "dir": ">=", "threshold": 40.0, "weight": 1.0},
            {"metric": "power_w", "dir": "<=", "threshold": 5e-4, "weight": 1.0}
        ]"#;
        let spec = Spec::from_json(text).unwrap();
        assert_eq!(spec.targets.len(), 2);
        assert_eq!(spec.targets[0].dir, Direction::AtLeast);
        let back = serde_json::to_string(&spec.targets).unwrap();
        let again = Spec::from_json(&back).unwrap();
        assert_eq!(again.targets[1].threshold, 5e-4);
    }

    #[test]
    fn study_jsonl_round_trips_non_finite_foms() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("study.jsonl");
        let study = Study {
            trials: vec![
                Trial {
                    index: 0,
                    x: [("x".to_string(), 1.0)].into(),
                    metrics: [("m".to_string(), 2.0)].into(),
                    steps: vec![0.5],
                    fom: 0.5,
                    state: TrialState::Complete,
                    failure: None,
                },
                Trial {
                    index: 1,
                    x: [("x".to_string(), 2.0)].into(),
                    metrics: BTreeMap::new(),
                    steps: vec![],
                    fom: f64::NEG_INFINITY,
                    state: TrialState::Failed,
                    failure: Some("boom".to_string()),
                },
            ],
        };
        study.save_jsonl(&path).unwrap();
        let back = Study::load_jsonl(&path).unwrap();
        assert_eq!(back.trials.len(), 2);
        assert_eq!(back.trials[0].fom, 0.5);
        assert_eq!(back.trials[1].fom, f64::NEG_INFINITY);
        assert_eq!(back.trials[1].failure.as_deref(), Some("boom"));
    }

    #[test]
    fn apply_writes_tied_devices() {
        let ir = crate::netlist::parse_spice(
            "M1 a in1 t gnd nfet\nM2 b in2 t gnd nfet\n.end",
        )
        .unwrap()
        .ir;
        let mut space = ParameterSpace::new(vec![Dim {
            name: "M1.W".to_string(),
            lo: 1e-7,
            hi: 1e-4,
            scale: Scale::Log,
            unit: "m".to_string(),
        }]);
        space.ties.insert(
            "M1.W".to_string(),
            vec![("M1".to_string(), "w".to_string()), ("M2".to_string(), "w".to_string())],
        );
        let sized = space.apply(&ir, &[("M1.W".to_string(), 2e-6)].into());
        assert_eq!(sized.device("M1").unwrap().params["w"], 2e-6);
        assert_eq!(sized.device("M2").unwrap().params["w"], 2e-6);
    }
}
