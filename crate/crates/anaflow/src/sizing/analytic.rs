//! Closed-form square-law evaluator for a few amplifier templates. It is a
//! hermetic stand-in for a simulator: every device is assumed saturated at
//! a fixed overdrive, so currents, transconductances and output resistances
//! follow directly from W and L.

use super::{CircuitEvaluator, EvalError, ParameterSpace};
use crate::netlist::{Device, DeviceKind, NetlistIR, RailKind};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy)]
pub struct AnalyticOptions {
    pub vdd: f64,
    /// Load capacitance at the output, F.
    pub cl: f64,
    /// Fixed overdrive voltage, V.
    pub vov: f64,
    /// NMOS and PMOS transconductance parameters k' = µ·Cox, A/V².
    pub kn: f64,
    pub kp: f64,
    /// Channel-length modulation: λ = lambda0 · (lambda_l / L).
    pub lambda0: f64,
    pub lambda_l: f64,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions {
            vdd: 1.8,
            cl: 1e-12,
            vov: 0.2,
            kn: 270e-6,
            kp: 90e-6,
            lambda0: 0.1,
            lambda_l: 0.15e-6,
        }
    }
}

impl AnalyticOptions {
    pub fn drain_current(&self, kind: DeviceKind, w: f64, l: f64) -> f64 {
        let k = match kind {
            DeviceKind::Nmos => self.kn,
            DeviceKind::Pmos => self.kp,
            _ => 0.0,
        };
        0.5 * k * (w / l) * self.vov * self.vov
    }

    pub fn gm(&self, id: f64) -> f64 {
        2.0 * id / self.vov
    }

    pub fn lambda(&self, l: f64) -> f64 {
        self.lambda0 * (self.lambda_l / l)
    }

    pub fn ro(&self, l: f64, id: f64) -> f64 {
        1.0 / (self.lambda(l) * id)
    }
}

#[derive(Debug, Clone)]
enum Topology {
    /// One gain device with a resistive load to the opposite supply.
    CommonSource { gain: String, load: String },
    /// Differential pair, current-mirror load, tail current source.
    FiveT { input: String, load: String, tail: String },
    /// Stacked input + cascode device with a current-source load.
    Cascode { input: String, casc: String, load: String },
}

pub struct AnalyticEvaluator {
    ir: NetlistIR,
    /// dim name -> (device, param) targets, for reading trial points.
    dim_targets: BTreeMap<(String, String), String>,
    topo: Topology,
    opts: AnalyticOptions,
}

fn rail_of(ir: &NetlistIR, net: &str) -> Option<RailKind> {
    ir.rails.get(net).copied()
}

fn is_rail(ir: &NetlistIR, net: &str, kind: RailKind) -> bool {
    rail_of(ir, net) == Some(kind)
}

fn classify(ir: &NetlistIR) -> Result<Topology, EvalError> {
    let mos: Vec<&Device> = ir.devices.iter().filter(|d| d.kind.is_mos()).collect();
    let res: Vec<&Device> = ir
        .devices
        .iter()
        .filter(|d| d.kind == DeviceKind::Resistor)
        .collect();

    if mos.len() == 1 && res.len() == 1 {
        let m = mos[0];
        let r = res[0];
        let (drain, source) = (m.ports[0].as_str(), m.ports[2].as_str());
        let grounded = match m.kind {
            DeviceKind::Nmos => is_rail(ir, source, RailKind::Gnd),
            _ => is_rail(ir, source, RailKind::Vdd),
        };
        let loaded = r.ports.iter().any(|p| p == drain)
            && r.ports
                .iter()
                .any(|p| matches!(rail_of(ir, p), Some(RailKind::Vdd | RailKind::Gnd)));
        if grounded && loaded {
            return Ok(Topology::CommonSource {
                gain: m.id.clone(),
                load: r.id.clone(),
            });
        }
    }

    if mos.len() == 5 {
        // Input pair: same kind, shared non-rail source, distinct gates.
        for i in 0..5 {
            for j in (i + 1)..5 {
                let (a, b) = (mos[i], mos[j]);
                if a.kind != b.kind || a.ports[2] != b.ports[2] || a.ports[1] == b.ports[1] {
                    continue;
                }
                let tail_net = a.ports[2].as_str();
                if rail_of(ir, tail_net).is_some() {
                    continue;
                }
                let Some(tail) = mos
                    .iter()
                    .find(|d| d.id != a.id && d.id != b.id && d.ports[0] == tail_net)
                else {
                    continue;
                };
                let loads: Vec<&&Device> = mos
                    .iter()
                    .filter(|d| ![&a.id, &b.id, &tail.id].contains(&&d.id))
                    .collect();
                if loads.len() != 2 || loads[0].kind != loads[1].kind || loads[0].kind == a.kind {
                    continue;
                }
                if loads[0].ports[1] != loads[1].ports[1] {
                    continue;
                }
                let diode = loads.iter().any(|d| d.ports[0] == d.ports[1]);
                if !diode {
                    continue;
                }
                return Ok(Topology::FiveT {
                    input: a.id.clone(),
                    load: loads[0].id.clone(),
                    tail: tail.id.clone(),
                });
            }
        }
    }

    if mos.len() == 3 && res.is_empty() {
        let nmos: Vec<&&Device> = mos.iter().filter(|d| d.kind == DeviceKind::Nmos).collect();
        let pmos: Vec<&&Device> = mos.iter().filter(|d| d.kind == DeviceKind::Pmos).collect();
        if nmos.len() == 2 && pmos.len() == 1 {
            let load = pmos[0];
            for input in &nmos {
                let Some(casc) = nmos.iter().find(|c| c.id != input.id) else {
                    continue;
                };
                let stacked = is_rail(ir, &input.ports[2], RailKind::Gnd)
                    && casc.ports[2] == input.ports[0]
                    && is_rail(ir, &load.ports[2], RailKind::Vdd)
                    && load.ports[0] == casc.ports[0];
                if stacked {
                    return Ok(Topology::Cascode {
                        input: input.id.clone(),
                        casc: casc.id.clone(),
                        load: load.id.clone(),
                    });
                }
            }
        }
    }

    Err(EvalError::UnsupportedTopology)
}

impl AnalyticEvaluator {
    pub fn new(
        ir: &NetlistIR,
        space: &ParameterSpace,
        opts: AnalyticOptions,
    ) -> Result<Self, EvalError> {
        let topo = classify(ir)?;
        let mut dim_targets = BTreeMap::new();
        for dim in &space.dims {
            for (dev, param) in space.targets_of(&dim.name) {
                dim_targets.insert((dev, param), dim.name.clone());
            }
        }
        Ok(AnalyticEvaluator {
            ir: ir.clone(),
            dim_targets,
            topo,
            opts,
        })
    }

    pub fn options(&self) -> &AnalyticOptions {
        &self.opts
    }

    fn param(&self, x: &BTreeMap<String, f64>, dev: &str, param: &str) -> Result<f64, EvalError> {
        let key = (dev.to_string(), param.to_string());
        if let Some(dim) = self.dim_targets.get(&key) {
            if let Some(v) = x.get(dim) {
                return Ok(*v);
            }
        }
        self.ir
            .device(dev)
            .and_then(|d| d.params.get(param).copied())
            .ok_or_else(|| EvalError::Failed(format!("{dev}.{param} not sized and not in netlist")))
    }

    fn mos_wl(&self, x: &BTreeMap<String, f64>, dev: &str) -> Result<(f64, f64), EvalError> {
        Ok((self.param(x, dev, "w")?, self.param(x, dev, "l")?))
    }

    fn kind_of(&self, dev: &str) -> DeviceKind {
        self.ir.device(dev).map(|d| d.kind).unwrap_or(DeviceKind::Nmos)
    }
}

impl CircuitEvaluator for AnalyticEvaluator {
    fn run_stage(
        &self,
        x: &BTreeMap<String, f64>,
        _stage: usize,
        out: &mut BTreeMap<String, f64>,
    ) -> Result<(), EvalError> {
        let o = &self.opts;
        let (gain, gbw, power) = match &self.topo {
            Topology::CommonSource { gain, load } => {
                let (w, l) = self.mos_wl(x, gain)?;
                let id = o.drain_current(self.kind_of(gain), w, l);
                let gm = o.gm(id);
                let ro = o.ro(l, id);
                let r = self.param(x, load, "r")?;
                let rout = ro * r / (ro + r);
                (gm * rout, gm / (2.0 * std::f64::consts::PI * o.cl), o.vdd * id)
            }
            Topology::FiveT { input, load, tail } => {
                let (wt, lt) = self.mos_wl(x, tail)?;
                let i_tail = o.drain_current(self.kind_of(tail), wt, lt);
                let branch = 0.5 * i_tail;
                let (_, li) = self.mos_wl(x, input)?;
                let (_, ll) = self.mos_wl(x, load)?;
                let gm_in = o.gm(branch);
                let ro_n = o.ro(li, branch);
                let ro_p = o.ro(ll, branch);
                let rout = ro_n * ro_p / (ro_n + ro_p);
                (
                    gm_in * rout,
                    gm_in / (2.0 * std::f64::consts::PI * o.cl),
                    o.vdd * i_tail,
                )
            }
            Topology::Cascode { input, casc, load } => {
                let (wi, li) = self.mos_wl(x, input)?;
                let id = o.drain_current(self.kind_of(input), wi, li);
                let gm1 = o.gm(id);
                let ro1 = o.ro(li, id);
                let (_, lc) = self.mos_wl(x, casc)?;
                let r_down = o.gm(id) * o.ro(lc, id) * ro1;
                let (_, ll) = self.mos_wl(x, load)?;
                let r_up = o.ro(ll, id);
                let rout = r_down * r_up / (r_down + r_up);
                (gm1 * rout, gm1 / (2.0 * std::f64::consts::PI * o.cl), o.vdd * id)
            }
        };
        if !(gain.is_finite() && gain > 0.0) {
            return Err(EvalError::Failed(format!("degenerate gain {gain}")));
        }
        out.insert("gain_db".to_string(), 20.0 * gain.log10());
        out.insert("gbw_hz".to_string(), gbw);
        out.insert("power_w".to_string(), power);
        Ok(())
    }
}
