//! Command-line front end. Subcommands map one-to-one onto pipeline
//! stages, plus `full` for the whole flow, `eval` for benchmark sweeps,
//! `passk` for the estimator, and `gen-fixtures` for the synthetic corpus.
//! A key=value config file loads first; flags override it.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use anaflow::evaluation::{pass_at_k, run_benchmark, SuccessPolicy};
use anaflow::fixtures::{generate, FixtureManifest, FixtureOptions};
use anaflow::netlist::{parse_spice, NetlistIR};
use anaflow::pipeline::{
    list_cases, make_gateway, run_case, run_full, stage_extract, stage_netlist, stage_place,
    stage_route, stage_size, CasePaths, Mode, PipelineConfig, PipelineError,
};
use anaflow::sizing::Spec;

#[derive(Parser)]
#[command(name = "anaflow", version, about = "Schematic-to-layout analog design pipeline")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// key=value config file, applied before any flag overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// live, replay, or record.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Model name sent with gateway requests.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Sizing trial budget.
    #[arg(long, global = true)]
    budget: Option<usize>,
    /// Disable chain-of-thought scaffolding in extraction prompts.
    #[arg(long, global = true)]
    no_cot: bool,
    /// Disable the in-context exemplar in extraction prompts.
    #[arg(long, global = true)]
    no_micl: bool,
    /// Disable stage-2 intent arbitration during fusion.
    #[arg(long, global = true)]
    no_intent: bool,
    /// Artifact output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fixture corpus root (cases/ and replay/ live here).
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    /// SPICE simulator executable; analytic models when absent.
    #[arg(long, global = true)]
    simulator: Option<PathBuf>,
    /// Replay key namespace, e.g. "ota5t:a00".
    #[arg(long, global = true)]
    case_tag: Option<String>,
}

impl Overrides {
    fn build(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = PipelineConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse::<Mode>().map_err(PipelineError::Config)?;
        }
        if let Some(model) = &self.model {
            cfg.model = model.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(budget) = self.budget {
            cfg.budget = budget;
        }
        if self.no_cot {
            cfg.cot = false;
        }
        if self.no_micl {
            cfg.micl = false;
        }
        if self.no_intent {
            cfg.intent = false;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(fixtures) = &self.fixtures {
            cfg.fixtures = fixtures.clone();
        }
        if let Some(simulator) = &self.simulator {
            cfg.simulator = Some(simulator.clone());
        }
        if let Some(tag) = &self.case_tag {
            cfg.case_tag = tag.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Label wire regions in a schematic image and emit the annotated bundle.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        detections: PathBuf,
    },
    /// Extract, run the reasoning branches, and fuse a netlist.
    Netlist {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Reference netlist; adds a recovery score to the manifest.
        #[arg(long)]
        golden: Option<PathBuf>,
    },
    /// Plan a search space and size a netlist against a spec.
    Size {
        #[arg(long)]
        netlist: PathBuf,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Place a netlist by simulated annealing.
    Place {
        #[arg(long)]
        netlist: PathBuf,
    },
    /// Place and route a netlist, emitting the SVG layout and DRC report.
    Route {
        #[arg(long)]
        netlist: PathBuf,
    },
    /// Run the whole flow: image to DRC-checked layout.
    Full {
        /// Fixture case name; resolves image/detections/spec/golden.
        #[arg(long, conflicts_with_all = ["image", "detections", "spec"])]
        case: Option<String>,
        /// Attempt index used for replay keying with --case.
        #[arg(long, default_value_t = 0)]
        attempt: usize,
        #[arg(long, requires = "detections", requires = "spec")]
        image: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        golden: Option<PathBuf>,
    },
    /// Benchmark every fixture case and write Pass@k tables.
    Eval {
        /// Attempts per case; defaults to the corpus manifest value.
        #[arg(long)]
        attempts: Option<usize>,
        /// Score netlist recovery only, ignoring downstream stages.
        #[arg(long)]
        netlist_only: bool,
        #[arg(long, default_value = "baseline")]
        label: String,
    },
    /// Unbiased pass@k from n attempts with c successes.
    Passk { n: u64, c: u64, k: u64 },
    /// Generate the synthetic fixture corpus with recorded transcripts.
    GenFixtures {
        #[arg(long, default_value_t = 15)]
        attempts: usize,
    },
}

fn read_netlist(path: &PathBuf) -> Result<NetlistIR, PipelineError> {
    let text = fs::read_to_string(path)?;
    parse_spice(&text)
        .map(|p| p.ir)
        .map_err(|e| PipelineError::Netlist(format!("{}: {e}", path.display())))
}

fn read_spec(path: &PathBuf) -> Result<Spec, PipelineError> {
    let text = fs::read_to_string(path)?;
    Spec::from_json(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<ExitCode, PipelineError> {
    let cfg = cli.overrides.build()?;
    match cli.cmd {
        Cmd::Extract { image, detections } => {
            let bundle = stage_extract(&cfg, &image, &detections)?;
            println!(
                "extracted {} regions -> {}",
                bundle.annotated.node_map.regions.len(),
                cfg.out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Netlist {
            image,
            detections,
            golden,
        } => {
            let bundle = stage_extract(&cfg, &image, &detections)?;
            let gateway = make_gateway(&cfg)?;
            let golden_ir = golden.as_ref().map(read_netlist).transpose()?;
            let outcome = stage_netlist(&cfg, gateway.as_ref(), &bundle, golden_ir.as_ref())?;
            println!(
                "fused {} devices via {:?} -> {}",
                outcome.fused.netlist.devices.len(),
                outcome.fused.method,
                cfg.out.join("fused.sp").display()
            );
            if let Some(r) = &outcome.recovery {
                println!(
                    "recovery: exact_match={} components={:.3} edges={:.3}",
                    r.exact_match, r.component_accuracy, r.edge_accuracy
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Size { netlist, spec } => {
            let ir = read_netlist(&netlist)?;
            let spec = read_spec(&spec)?;
            let gateway = make_gateway(&cfg)?;
            let outcome = stage_size(&cfg, gateway.as_ref(), &ir, &spec)?;
            println!(
                "best fom {:.4} over {} trials, spec {} -> {}",
                outcome.best_fom,
                outcome.study.trials.len(),
                if outcome.spec_met { "met" } else { "not met" },
                cfg.out.join("sized.sp").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Place { netlist } => {
            let ir = read_netlist(&netlist)?;
            let place = stage_place(&cfg, &ir)?;
            println!(
                "placed {} blocks, bbox {:.1} x {:.1} um, cost {:.3}",
                place.instance.blocks.len(),
                place.placement.bbox.0,
                place.placement.bbox.1,
                place.cost
            );
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Route { netlist } => {
            let ir = read_netlist(&netlist)?;
            let place = stage_place(&cfg, &ir)?;
            let outcome = stage_route(&cfg, &ir, &place)?;
            println!(
                "routed {} nets, {} failures, {} violations -> {}",
                outcome.report.routes.len(),
                outcome.report.unrouted.len(),
                outcome.violations.len(),
                cfg.out.join("layout.svg").display()
            );
            Ok(if outcome.clean {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Full {
            case,
            attempt,
            image,
            detections,
            spec,
            golden,
        } => {
            let (image, detections, spec, golden_ir, cfg) = match case {
                Some(name) => {
                    let paths = CasePaths::new(&cfg.fixtures, &name);
                    if !paths.complete() {
                        return Err(PipelineError::Config(format!(
                            "fixture case {name} is incomplete under {}",
                            cfg.fixtures.display()
                        )));
                    }
                    let mut sub = cfg.clone();
                    sub.case_tag = format!("{name}:a{attempt:02}");
                    let golden_ir = Some(read_netlist(&paths.golden)?);
                    let spec = read_spec(&paths.spec)?;
                    (paths.schematic, paths.detections, spec, golden_ir, sub)
                }
                None => {
                    let (Some(image), Some(detections), Some(spec)) = (image, detections, spec)
                    else {
                        return Err(PipelineError::Config(
                            "full needs --case or --image/--detections/--spec".to_string(),
                        ));
                    };
                    let golden_ir = golden.as_ref().map(read_netlist).transpose()?;
                    (image, detections, read_spec(&spec)?, golden_ir, cfg)
                }
            };
            let gateway = make_gateway(&cfg)?;
            let outcome = run_full(
                &cfg,
                gateway.as_ref(),
                &image,
                &detections,
                &spec,
                golden_ir.as_ref(),
            );
            let ev = &outcome.evidence;
            let verdict = |v: Option<bool>| match v {
                Some(true) => "ok",
                Some(false) => "fail",
                None => "-",
            };
            println!(
                "netlist={} sizing={} placement={} routing={}",
                verdict(ev.netlist_exact),
                verdict(ev.spec_met),
                verdict(ev.placed),
                verdict(ev.drc_clean)
            );
            if let Some(err) = &outcome.error {
                eprintln!("error at {}: {err}", err.stage());
                return Ok(ExitCode::FAILURE);
            }
            if let Some(note) = &ev.note {
                println!("note: {note}");
            }
            Ok(if outcome.ok() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Eval {
            attempts,
            netlist_only,
            label,
        } => {
            let attempts = match attempts {
                Some(n) => n,
                None => fs::read_to_string(cfg.fixtures.join("fixture_manifest.json"))
                    .ok()
                    .and_then(|s| serde_json::from_str::<FixtureManifest>(&s).ok())
                    .map(|m| m.attempts)
                    .unwrap_or(15),
            };
            let cases = list_cases(&cfg.fixtures);
            if cases.is_empty() {
                return Err(PipelineError::Config(format!(
                    "no cases under {}",
                    cfg.fixtures.join("cases").display()
                )));
            }
            let policy = if netlist_only {
                SuccessPolicy::netlist_only()
            } else {
                SuccessPolicy::default()
            };
            let report = run_benchmark(&cases, attempts, &policy, &label, |case, attempt| {
                run_case(&cfg, case, attempt)
            })
            .map_err(|e| PipelineError::Config(e.to_string()))?;
            fs::create_dir_all(&cfg.out)?;
            fs::write(cfg.out.join("results.csv"), report.to_csv())?;
            fs::write(cfg.out.join("results.md"), report.to_markdown())?;
            print!("{}", report.to_markdown());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Passk { n, c, k } => {
            let p = pass_at_k(n as usize, c as usize, k as usize)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            println!("{p:.3}");
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GenFixtures { attempts } => {
            let opts = FixtureOptions {
                attempts,
                config: cfg.clone(),
            };
            let manifest = generate(&cfg.fixtures, &opts)?;
            for case in &manifest.cases {
                println!(
                    "{case}: {}/{} attempts succeed on replay",
                    manifest.expected_c[case], manifest.attempts
                );
            }
            println!("corpus -> {}", cfg.fixtures.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error at {}: {err}", err.stage());
            ExitCode::FAILURE
        }
    }
}
