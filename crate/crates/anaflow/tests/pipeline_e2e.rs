//! End-to-end pipeline runs over a generated corpus. The corpus is built
//! once per process: scripted model responses are recorded through the
//! real request builders, so replaying afterwards exercises the same
//! lookup path a regular replay run uses.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anaflow::evaluation::{run_benchmark, Stage, SuccessPolicy};
use anaflow::fixtures::{generate, FixtureManifest, FixtureOptions};
use anaflow::pipeline::{list_cases, run_case, PipelineConfig};
use anaflow::placement::Schedule;

struct Corpus {
    dir: PathBuf,
    manifest: FixtureManifest,
    _keep: tempfile::TempDir,
}

static CORPUS: OnceLock<Corpus> = OnceLock::new();

fn corpus() -> &'static Corpus {
    CORPUS.get_or_init(|| {
        let keep = tempfile::TempDir::new().expect("tempdir");
        let dir = keep.path().join("fixtures");
        let mut config = PipelineConfig::default();
        config.budget = 60;
        config.schedule = Schedule {
            t0: None,
            alpha: 0.85,
            moves_per_temp: 40,
            stop_ratio: 0.02,
        };
        let opts = FixtureOptions {
            attempts: 3,
            config,
        };
        let manifest = generate(&dir, &opts).expect("corpus generation");
        Corpus {
            dir,
            manifest,
            _keep: keep,
        }
    })
}

fn replay_config(out: &Path) -> PipelineConfig {
    let c = corpus();
    let mut cfg = PipelineConfig::default();
    cfg.load_file(&c.dir.join("pipeline.conf")).expect("conf");
    cfg.fixtures = c.dir.clone();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn corpus_records_the_designed_outcomes() {
    let c = corpus();
    assert_eq!(c.manifest.attempts, 3);
    assert_eq!(c.manifest.expected_c["ota5t"], 3);
    assert_eq!(c.manifest.expected_c["ota5t-corrupt"], 3);
    assert_eq!(c.manifest.expected_c["ota5t-noisy"], 2);
    assert_eq!(
        c.manifest.failures["ota5t-noisy"],
        vec![None, None, Some(Stage::Netlist)],
        "every third noisy attempt fuses a corrupted majority"
    );
    assert!(c.manifest.failures["ota5t"].iter().all(Option::is_none));
}

#[test]
fn replay_reproduces_the_recording_byte_for_byte() {
    let scratch = tempfile::TempDir::new().unwrap();
    let evidence: Vec<_> = ["one", "two"]
        .iter()
        .map(|leg| {
            let cfg = replay_config(&scratch.path().join(leg));
            run_case(&cfg, "ota5t", 0).expect("replay run")
        })
        .collect();
    for ev in &evidence {
        assert_eq!(ev.netlist_exact, Some(true));
        assert_eq!(ev.spec_met, Some(true));
        assert_eq!(ev.placed, Some(true));
        assert_eq!(ev.drc_clean, Some(true), "note: {:?}", ev.note);
    }

    let a = scratch.path().join("one/ota5t/a00");
    let b = scratch.path().join("two/ota5t/a00");
    for name in [
        "fused.sp",
        "sized.sp",
        "placement.json",
        "routes.json",
        "drc.json",
        "layout.svg",
        "study.jsonl",
        "transcript.txt",
    ] {
        let left = fs::read(a.join(name)).unwrap_or_else(|_| panic!("missing {name}"));
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "artifact {name} must be identical");
    }
    for stage in ["extract", "netlist", "size", "place", "route", "full"] {
        let name = format!("{stage}.manifest.json");
        let mut left: serde_json::Value =
            serde_json::from_slice(&fs::read(a.join(&name)).unwrap()).unwrap();
        let mut right: serde_json::Value =
            serde_json::from_slice(&fs::read(b.join(&name)).unwrap()).unwrap();
        left["timestamp"] = serde_json::Value::Null;
        right["timestamp"] = serde_json::Value::Null;
        assert_eq!(left, right, "manifest {name} differs beyond its timestamp");
    }

    // The corpus was recorded in a different directory tree entirely, so a
    // path leaking into any manifest would already have broken the
    // comparison above; spot-check the config echo all the same.
    let full = fs::read_to_string(a.join("full.manifest.json")).unwrap();
    assert!(!full.contains(scratch.path().to_str().unwrap()));
}

#[test]
fn intent_arbitration_decides_the_corrupt_case() {
    let scratch = tempfile::TempDir::new().unwrap();
    let mut with = replay_config(&scratch.path().join("with"));
    with.intent = true;
    let ev = run_case(&with, "ota5t-corrupt", 0).expect("replay");
    assert_eq!(ev.netlist_exact, Some(true), "arbitration recovers the deck");

    let mut without = replay_config(&scratch.path().join("without"));
    without.intent = false;
    let ev = run_case(&without, "ota5t-corrupt", 0).expect("replay");
    assert_eq!(
        ev.netlist_exact,
        Some(false),
        "slot consensus alone keeps a corrupted tail gate"
    );
}

#[test]
fn benchmark_scores_the_replayed_corpus() {
    let c = corpus();
    let scratch = tempfile::TempDir::new().unwrap();
    let cfg = replay_config(scratch.path());
    let cases = list_cases(&c.dir);
    assert_eq!(cases, vec!["ota5t", "ota5t-corrupt", "ota5t-noisy"]);

    let report = run_benchmark(
        &cases,
        c.manifest.attempts,
        &SuccessPolicy::default(),
        "baseline",
        |case, attempt| run_case(&cfg, case, attempt),
    )
    .expect("benchmark");

    for row in &report.cases {
        assert_eq!(
            row.c, c.manifest.expected_c[&row.case],
            "case {} successes drifted from the recorded corpus",
            row.case
        );
    }
    let noisy = report
        .cases
        .iter()
        .find(|r| r.case == "ota5t-noisy")
        .unwrap();
    assert!((noisy.pass_at_1 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(noisy.pass_at_5, 1.0, "k clamps to n and c covers the gap");
    assert_eq!(noisy.breakdown()[&Stage::Netlist], 1);

    let csv = report.to_csv();
    assert!(csv.contains("ota5t-noisy,3,2,66.7,100.0,1,0,0,0"), "{csv}");
    let md = report.to_markdown();
    assert!(md.contains("| ota5t-noisy | 3 | 2 | 66.7 | 100.0 |"), "{md}");
}
