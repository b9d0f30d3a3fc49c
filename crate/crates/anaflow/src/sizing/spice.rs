//! External-simulator adapter. Each evaluator stage writes a sized deck
//! with one analysis card, runs the simulator as a subprocess under a
//! deadline, and scrapes `name = value` measurement lines from stdout.

use super::{CircuitEvaluator, EvalError, ParameterSpace};
use crate::netlist::{serialize, NetlistIR};
use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct SpiceConfig {
    pub simulator: PathBuf,
    /// Extra deck lines, e.g. a PDK `.include` or `.lib` card.
    pub include: Vec<String>,
    pub corner: String,
    pub temp_c: f64,
    pub timeout: Duration,
}

impl Default for SpiceConfig {
    fn default() -> Self {
        SpiceConfig {
            simulator: PathBuf::from("ngspice"),
            include: Vec::new(),
            corner: "tt".to_string(),
            temp_c: 25.0,
            timeout: Duration::from_secs(30),
        }
    }
}

/// The staged analyses, one per pruning step.
const ANALYSES: [(&str, &str); 3] = [
    ("op", ".op"),
    ("ac", ".ac dec 10 1 1g"),
    ("tran", ".tran 1n 1u"),
];

pub struct SpiceAdapter {
    ir: NetlistIR,
    space: ParameterSpace,
    cfg: SpiceConfig,
}

impl SpiceAdapter {
    pub fn new(ir: &NetlistIR, space: &ParameterSpace, cfg: SpiceConfig) -> Self {
        SpiceAdapter {
            ir: ir.clone(),
            space: space.clone(),
            cfg,
        }
    }

    fn deck(&self, x: &BTreeMap<String, f64>, stage: usize) -> String {
        let sized = self.space.apply(&self.ir, x);
        let body = serialize(&sized);
        let body = body.trim_end_matches(".end\n").trim_end_matches(".end");
        let mut deck = String::from("* staged analysis deck\n");
        for line in &self.cfg.include {
            deck.push_str(line);
            deck.push('\n');
        }
        deck.push_str(&format!(
            ".options temp={} corner={}\n",
            self.cfg.temp_c, self.cfg.corner
        ));
        deck.push_str(body);
        deck.push_str(ANALYSES[stage].1);
        deck.push_str("\n.end\n");
        deck
    }

    fn run(&self, deck: &str, stage: usize) -> Result<String, EvalError> {
        let dir = tempfile::tempdir().map_err(|e| EvalError::Failed(e.to_string()))?;
        let path = dir.path().join(format!("{}.sp", ANALYSES[stage].0));
        std::fs::write(&path, deck).map_err(|e| EvalError::Failed(e.to_string()))?;

        let mut child = Command::new(&self.cfg.simulator)
            .arg(&path)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    EvalError::SimulatorNotFound(self.cfg.simulator.display().to_string())
                } else {
                    EvalError::Failed(e.to_string())
                }
            })?;

        let deadline = Instant::now() + self.cfg.timeout;
        loop {
            match child.try_wait() {
                Ok(Some(_)) => break,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(EvalError::SimulationTimeout(self.cfg.timeout));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(EvalError::Failed(e.to_string())),
            }
        }
        let mut out = String::new();
        if let Some(mut stdout) = child.stdout.take() {
            stdout
                .read_to_string(&mut out)
                .map_err(|e| EvalError::Failed(e.to_string()))?;
        }
        Ok(out)
    }
}

/// Pull `name = value` pairs out of simulator output; names are lowered.
pub fn parse_measurements(stdout: &str) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for line in stdout.lines() {
        let Some((name, value)) = line.split_once('=') else {
            continue;
        };
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            continue;
        }
        if let Ok(v) = value.trim().parse::<f64>() {
            out.insert(name.to_ascii_lowercase(), v);
        }
    }
    out
}

impl CircuitEvaluator for SpiceAdapter {
    fn stages(&self) -> usize {
        ANALYSES.len()
    }

    fn run_stage(
        &self,
        x: &BTreeMap<String, f64>,
        stage: usize,
        out: &mut BTreeMap<String, f64>,
    ) -> Result<(), EvalError> {
        let deck = self.deck(x, stage);
        let stdout = self.run(&deck, stage)?;
        let parsed = parse_measurements(&stdout);
        if parsed.is_empty() && stage > 0 {
            return Err(EvalError::MeasureParse(format!(
                "no measurements in {} output",
                ANALYSES[stage].0
            )));
        }
        out.extend(parsed);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_spice;
    use crate::sizing::{Dim, Scale};

    fn fixture() -> (NetlistIR, ParameterSpace) {
        let ir = parse_spice("M1 vout vin gnd gnd nfet W=2u L=0.3u\nR1 vdd vout 10k\n.end")
            .unwrap()
            .ir;
        let space = ParameterSpace::new(vec![Dim {
            name: "M1.W".to_string(),
            lo: 1e-7,
            hi: 1e-4,
            scale: Scale::Log,
            unit: "m".to_string(),
        }]);
        (ir, space)
    }

    #[test]
    fn parses_measurement_lines_and_skips_noise() {
        let text = "\
Note: simulation starting
gain_db = 4.44e+01
 gbw_hz =1.7e8
power_w = 3.9e-4
this is = not a metric name
broken = 1.2.3
";
        let m = parse_measurements(text);
        assert_eq!(m.len(), 3);
        assert_eq!(m["gain_db"], 44.4);
        assert_eq!(m["gbw_hz"], 1.7e8);
    }

    #[cfg(unix)]
    fn stub_script(dir: &std::path::Path, body: &str) -> PathBuf {
        use std::os::unix::fs::PermissionsExt;
        let path = dir.join("fake-sim");
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path
    }

    #[cfg(unix)]
    #[test]
    fn stub_simulator_round_trips_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let sim = stub_script(
            dir.path(),
            "echo 'gain_db = 41.0'; echo 'gbw_hz = 9e7'; echo 'power_w = 2e-4'",
        );
        let (ir, space) = fixture();
        let adapter = SpiceAdapter::new(
            &ir,
            &space,
            SpiceConfig {
                simulator: sim,
                ..SpiceConfig::default()
            },
        );
        let mut m = BTreeMap::new();
        for stage in 0..adapter.stages() {
            adapter
                .run_stage(&[("M1.W".to_string(), 2e-6)].into(), stage, &mut m)
                .unwrap();
        }
        assert_eq!(m["gain_db"], 41.0);
        assert_eq!(m["power_w"], 2e-4);
    }

    #[cfg(unix)]
    #[test]
    fn hung_simulator_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let sim = stub_script(dir.path(), "sleep 5");
        let (ir, space) = fixture();
        let adapter = SpiceAdapter::new(
            &ir,
            &space,
            SpiceConfig {
                simulator: sim,
                timeout: Duration::from_millis(200),
                ..SpiceConfig::default()
            },
        );
        let start = Instant::now();
        let err = adapter
            .run_stage(&[("M1.W".to_string(), 2e-6)].into(), 0, &mut BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, EvalError::SimulationTimeout(_)));
        assert!(start.elapsed() < Duration::from_secs(3));
    }

    #[test]
    fn missing_simulator_is_distinguished() {
        let (ir, space) = fixture();
        let adapter = SpiceAdapter::new(
            &ir,
            &space,
            SpiceConfig {
                simulator: PathBuf::from("/nonexistent/simulator-binary"),
                ..SpiceConfig::default()
            },
        );
        let err = adapter
            .run_stage(&[("M1.W".to_string(), 2e-6)].into(), 0, &mut BTreeMap::new())
            .unwrap_err();
        assert!(matches!(err, EvalError::SimulatorNotFound(_)));
    }

    #[test]
    fn deck_carries_analysis_card_and_sizing() {
        let (ir, space) = fixture();
        let adapter = SpiceAdapter::new(&ir, &space, SpiceConfig::default());
        let deck = adapter.deck(&[("M1.W".to_string(), 5e-6)].into(), 1);
        assert!(deck.contains(".ac dec 10 1 1g"), "deck:\n{deck}");
        assert!(deck.contains("w=5u"), "deck:\n{deck}");
        assert!(deck.trim_end().ends_with(".end"));
        assert_eq!(deck.matches(".end").count(), 1);
    }
}
