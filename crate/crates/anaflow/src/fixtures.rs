//! Synthetic fixture corpus generation. Builds a small benchmark corpus:
//! a drawn five-transistor OTA schematic, detector boxes, golden netlist
//! and spec per case, plus replay transcripts recorded by running the real
//! pipeline against scripted model responses. Because recording goes
//! through the same request builders as replay, the stored keys match
//! exactly when the corpus is replayed later.
//!
//! Three cases exercise three fusion regimes: `ota5t` (all branches
//! agree), `ota5t-noisy` (every third attempt fuses a corrupted majority),
//! and `ota5t-corrupt` (all branches disagree so only intent arbitration
//! recovers the netlist).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluation::{Stage, SuccessPolicy};
use crate::gateway::RecordingGateway;
use crate::gateway::ScriptedGateway;
use crate::netlist::parse_spice;
use crate::pipeline::{run_full, stage_extract, CasePaths, PipelineConfig, PipelineError};
use crate::placement::Schedule;
use crate::reasoning::{run_branches, ExtractionInput, ReasoningConfig};
use crate::sizing::Spec;
use crate::vision::{Detection, DetectionSet, Raster};

pub const GOLDEN_5T: &str = "\
* five transistor ota
M1 d1 vin_p tail gnd nfet W=8u L=0.5u
M2 vout vin_n tail gnd nfet W=8u L=0.5u
M3 d1 d1 vdd vdd pfet W=12u L=0.5u
M4 vout d1 vdd vdd pfet W=12u L=0.5u
M5 tail vbias gnd gnd nfet W=20u L=0.5u
.end
";

/// Differential pair broken: M2 sources to ground instead of the tail.
const PAIR_BROKEN_5T: &str = "\
* five transistor ota
M1 d1 vin_p tail gnd nfet W=8u L=0.5u
M2 vout vin_n gnd gnd nfet W=8u L=0.5u
M3 d1 d1 vdd vdd pfet W=12u L=0.5u
M4 vout d1 vdd vdd pfet W=12u L=0.5u
M5 tail vbias gnd gnd nfet W=20u L=0.5u
.end
";

/// Tail gate grounded. Paired with [`TAIL_GND_INPUT_SWAPPED`] this gives
/// the wrong tie a two-of-three pin-pair majority, so slot consensus keeps
/// it; only arbitration over the candidates recovers the bias net.
const TAIL_GATE_GND: &str = "\
* five transistor ota
M1 d1 vin_p tail gnd nfet W=8u L=0.5u
M2 vout vin_n tail gnd nfet W=8u L=0.5u
M3 d1 d1 vdd vdd pfet W=12u L=0.5u
M4 vout d1 vdd vdd pfet W=12u L=0.5u
M5 tail gnd gnd gnd nfet W=20u L=0.5u
.end
";

/// Tail gate grounded and the left input shorted to the output. The extra
/// defect keeps this canonically distinct from [`TAIL_GATE_GND`] while
/// still seconding its tail-gate vote.
const TAIL_GND_INPUT_SWAPPED: &str = "\
* five transistor ota
M1 d1 vout tail gnd nfet W=8u L=0.5u
M2 vout vin_n tail gnd nfet W=8u L=0.5u
M3 d1 d1 vdd vdd pfet W=12u L=0.5u
M4 vout d1 vdd vdd pfet W=12u L=0.5u
M5 tail gnd gnd gnd nfet W=20u L=0.5u
.end
";

const SPEC_JSON: &str = r#"[
  {"metric": "gain_db", "dir": ">=", "threshold": 40.0, "weight": 1.0},
  {"metric": "gbw_hz", "dir": ">=", "threshold": 3e7, "weight": 1.0},
  {"metric": "power_w", "dir": "<=", "threshold": 2e-3, "weight": 0.5}
]
"#;

pub const CASES: [&str; 3] = ["ota5t", "ota5t-corrupt", "ota5t-noisy"];

fn hline(r: &mut Raster, y: usize, x0: usize, x1: usize) {
    for y in y..y + 2 {
        for x in x0..x1 {
            r.set(x, y, 0);
        }
    }
}

fn vline(r: &mut Raster, x: usize, y0: usize, y1: usize) {
    for x in x..x + 2 {
        for y in y0..y1 {
            r.set(x, y, 0);
        }
    }
}

/// Hand-drawn five-transistor OTA: rails, a diff pair under a mirror load,
/// a tail source, and stubs for the three external nets. Eight wire
/// regions survive detector-box clearing.
pub fn draw_five_t() -> (Raster, DetectionSet) {
    let mut r = Raster::new(360, 280, 255);
    hline(&mut r, 24, 60, 300); // vdd rail
    vline(&mut r, 90, 24, 60); // rail to M3
    vline(&mut r, 270, 24, 60); // rail to M4
    vline(&mut r, 90, 100, 150); // d1: M3 drain to M1 drain
    hline(&mut r, 120, 90, 250); // d1: mirror gate crossbar
    vline(&mut r, 270, 100, 150); // vout: M4 drain to M2 drain
    hline(&mut r, 125, 270, 330); // vout stub
    hline(&mut r, 170, 30, 70); // vin_p
    hline(&mut r, 170, 290, 330); // vin_n
    vline(&mut r, 90, 190, 220); // M1 source down
    vline(&mut r, 270, 190, 220); // M2 source down
    hline(&mut r, 220, 90, 272); // tail bus
    vline(&mut r, 180, 220, 230); // tail to M5
    hline(&mut r, 250, 30, 160); // vbias
    vline(&mut r, 180, 270, 278); // M5 source to vss
    hline(&mut r, 276, 60, 300); // vss rail

    let boxed = |class: &str, x: i64, y: i64| Detection {
        class: class.to_string(),
        x,
        y,
        w: 40,
        h: 40,
        score: 0.98,
    };
    let detections = DetectionSet {
        detections: vec![
            boxed("pmos", 70, 60),
            boxed("pmos", 250, 60),
            boxed("nmos", 70, 150),
            boxed("nmos", 250, 150),
            boxed("nmos", 160, 230),
        ],
    };
    (r, detections)
}

/// Branch decks per case and attempt, in (raw, annotated, dual) order.
fn decks_for(case: &str, attempt: usize) -> [&'static str; 3] {
    match case {
        "ota5t-noisy" if attempt % 3 == 2 => [PAIR_BROKEN_5T, PAIR_BROKEN_5T, GOLDEN_5T],
        "ota5t-corrupt" => [TAIL_GATE_GND, TAIL_GND_INPUT_SWAPPED, GOLDEN_5T],
        _ => [GOLDEN_5T; 3],
    }
}

fn branch_text(view: &str, deck: &str) -> String {
    format!(
        "Step 1: the {view} view shows a differential pair under a PMOS mirror load \
with a dedicated tail device.\nStep 2: the mirror gates tie to the left drain; \
the output leaves the right drain.\nStep 3: writing the deck.\n\n```spice\n{deck}```\n"
    )
}

fn intent_text() -> String {
    format!(
        "Two readings ground the tail gate, but a tail current source must be biased \
from its own net or the stage carries no current at all; the input short in the \
second reading contradicts both others. The third reading is self-consistent.\n\n\
```spice\n{GOLDEN_5T}```\n"
    )
}

const PLAN_TEXT: &str = "TODO:\n1. Confirm the topology and the matched pairs.\n\
2. Bound the tail device so the GBW target is reachable.\n\
3. Bound the signal-path lengths for gain.\n4. Leave the rest on defaults.";

const FINISH_TEXT: &str =
    "Thought: The fallback ranges already cover this topology comfortably.\nAction: finish()";

fn script_attempt(case: &str, attempt: usize, tag: &str) -> ScriptedGateway {
    let gw = ScriptedGateway::new();
    let [raw, annotated, dual] = decks_for(case, attempt);
    gw.push(format!("extract:raw:{tag}"), branch_text("raw", raw));
    gw.push(
        format!("extract:annotated:{tag}"),
        branch_text("annotated", annotated),
    );
    gw.push(format!("extract:dual:{tag}"), branch_text("dual", dual));
    if case == "ota5t-corrupt" {
        gw.push(format!("fuse:intent:{tag}"), intent_text());
    }
    gw.push(format!("size:plan:{tag}"), PLAN_TEXT);
    if attempt == 0 {
        gw.push(
            format!("size:step:00:{tag}"),
            "Thought: Confirm the device arrangement first.\nAction: topology_query()",
        );
        gw.push(
            format!("size:step:01:{tag}"),
            "Thought: Probe a mid-range sizing to see where the metrics land.\n\
Action: operating_point_probe({\"M5.W\": 2e-05, \"M5.L\": 5e-07})",
        );
        gw.push(
            format!("size:step:02:{tag}"),
            "Thought: The tail current sets GBW; keep W5 well above the probe point.\n\
Action: range_propose(\"M5.W\", 5e-06, 8e-05)",
        );
        gw.push(
            format!("size:step:03:{tag}"),
            "Thought: Long input channels buy gain on the signal path.\n\
Action: range_propose(\"M1.L\", 3e-07, 4e-06)",
        );
        gw.push(
            format!("size:step:04:{tag}"),
            "Thought: Defaults are fine for the mirror.\nAction: finish()",
        );
    } else {
        gw.push(format!("size:step:00:{tag}"), FINISH_TEXT);
    }
    gw
}

#[derive(Debug, Clone, Default)]
pub struct FixtureOptions {
    pub attempts: usize,
    pub config: PipelineConfig,
}

impl FixtureOptions {
    /// Corpus defaults: the paper-shaped 15 attempts with a budget and
    /// anneal schedule light enough to regenerate quickly.
    pub fn corpus() -> Self {
        let mut config = PipelineConfig::default();
        config.budget = 60;
        config.schedule = Schedule {
            t0: None,
            alpha: 0.9,
            moves_per_temp: 60,
            stop_ratio: 0.01,
        };
        FixtureOptions {
            attempts: 15,
            config,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub attempts: usize,
    pub cases: Vec<String>,
    /// Successes per case when replayed with the bundled pipeline.conf.
    pub expected_c: BTreeMap<String, usize>,
    /// Stage-of-failure per attempt per case, `null` for successes.
    pub failures: BTreeMap<String, Vec<Option<Stage>>>,
}

/// Generate the corpus into `dir`: per-case fixture files, the shared
/// replay store, a loadable pipeline.conf, and a manifest freezing the
/// outcomes observed while recording.
pub fn generate(dir: &Path, opts: &FixtureOptions) -> Result<FixtureManifest, PipelineError> {
    let attempts = opts.attempts.max(1);
    fs::create_dir_all(dir.join("replay"))?;
    let (raster, detections) = draw_five_t();
    let spec = Spec::from_json(SPEC_JSON).map_err(|e| PipelineError::Config(e.to_string()))?;
    let golden = parse_spice(GOLDEN_5T)
        .map_err(|e| PipelineError::Config(e.to_string()))?
        .ir;

    let mut expected_c = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for case in CASES {
        let paths = CasePaths::new(dir, case);
        fs::create_dir_all(&paths.dir)?;
        fs::write(&paths.schematic, raster.to_pgm_bytes())?;
        let det_json = serde_json::to_string_pretty(&detections)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        fs::write(&paths.detections, det_json + "\n")?;
        fs::write(&paths.golden, GOLDEN_5T)?;
        fs::write(&paths.spec, SPEC_JSON)?;

        // One scratch extraction gives the bundle the ablation-variant
        // branch recordings reuse below.
        let mut scratch = opts.config.clone();
        scratch.out = dir.join("build").join(case).join("bundle");
        let bundle = stage_extract(&scratch, &paths.schematic, &paths.detections)?;

        let mut case_failures = Vec::with_capacity(attempts);
        for attempt in 0..attempts {
            let tag = format!("{case}:a{attempt:02}");
            let scripted = script_attempt(case, attempt, &tag);
            let recording = RecordingGateway::new(scripted, dir.join("replay"));
            let mut sub = opts.config.clone();
            sub.case_tag = tag.clone();
            sub.fixtures = dir.to_path_buf();
            sub.out = dir.join("build").join(case).join(format!("a{attempt:02}"));
            let outcome = run_full(
                &sub,
                &recording,
                &paths.schematic,
                &paths.detections,
                &spec,
                Some(&golden),
            );
            case_failures.push(outcome.evidence.failed_stage(&SuccessPolicy::default()));

            // Branch recordings for the prompt-shape ablations, so replayed
            // sweeps with --no-cot or --no-micl find their keys. Fusion and
            // sizing requests are ablation-independent and already stored.
            for (cot, micl) in [(false, true), (true, false)] {
                let [raw, annotated, dual] = decks_for(case, attempt);
                let variant = ScriptedGateway::new();
                variant.push(format!("extract:raw:{tag}"), branch_text("raw", raw));
                variant.push(
                    format!("extract:annotated:{tag}"),
                    branch_text("annotated", annotated),
                );
                variant.push(format!("extract:dual:{tag}"), branch_text("dual", dual));
                let recording = RecordingGateway::new(variant, dir.join("replay"));
                let rcfg = ReasoningConfig {
                    model: opts.config.model.clone(),
                    case_tag: tag.clone(),
                    cot,
                    micl,
                    intent_fusion: true,
                };
                let input = ExtractionInput {
                    raw_png: &bundle.raw_png,
                    annotated: &bundle.annotated,
                };
                run_branches(&recording, &input, &rcfg)
                    .map_err(|e| PipelineError::Netlist(e.to_string()))?;
            }
        }
        let c = case_failures.iter().filter(|f| f.is_none()).count();
        expected_c.insert(case.to_string(), c);
        failures.insert(case.to_string(), case_failures);
    }

    let mut conf = opts.config.clone();
    conf.mode = crate::pipeline::Mode::Replay;
    fs::write(dir.join("pipeline.conf"), conf.to_kv())?;

    let manifest = FixtureManifest {
        attempts,
        cases: CASES.iter().map(|c| c.to_string()).collect(),
        expected_c,
        failures,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    fs::write(dir.join("fixture_manifest.json"), json + "\n")?;
    Ok(manifest)
}
