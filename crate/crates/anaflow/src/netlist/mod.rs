//! Netlist intermediate representation.
//!
//! Devices carry ordered ports whose meaning is fixed by the device kind
//! (a MOSFET is always drain, gate, source, body). Nets are plain strings,
//! case-insensitive and stored lowercased; the ground aliases `0` and `vss`
//! style names are recognised through [`RailConfig`]. Subcircuits are kept
//! as opaque bodies, never flattened.

mod canonical;
mod parse;
mod recovery;
mod serialize;

pub use canonical::{canonicalize, CanonicalForm};
pub use parse::{parse_spice, parse_spice_with, Parsed};
pub use recovery::{recovery_score, RecoveryReport};
pub use serialize::serialize;

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid netlist: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceKind {
    Nmos,
    Pmos,
    Npn,
    Pnp,
    Resistor,
    Capacitor,
    Inductor,
    VSource,
    ISource,
    Diode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PortRole {
    Drain,
    Gate,
    Source,
    Body,
    Collector,
    Base,
    Emitter,
    Pos,
    Neg,
    Anode,
    Cathode,
}

impl DeviceKind {
    pub fn roles(&self) -> &'static [PortRole] {
        use PortRole::*;
        match self {
            DeviceKind::Nmos | DeviceKind::Pmos => &[Drain, Gate, Source, Body],
            DeviceKind::Npn | DeviceKind::Pnp => &[Collector, Base, Emitter],
            DeviceKind::Resistor
            | DeviceKind::Capacitor
            | DeviceKind::Inductor
            | DeviceKind::VSource
            | DeviceKind::ISource => &[Pos, Neg],
            DeviceKind::Diode => &[Anode, Cathode],
        }
    }

    /// SPICE element letter used when serializing.
    pub fn prefix(&self) -> char {
        match self {
            DeviceKind::Nmos | DeviceKind::Pmos => 'M',
            DeviceKind::Npn | DeviceKind::Pnp => 'Q',
            DeviceKind::Resistor => 'R',
            DeviceKind::Capacitor => 'C',
            DeviceKind::Inductor => 'L',
            DeviceKind::VSource => 'V',
            DeviceKind::ISource => 'I',
            DeviceKind::Diode => 'D',
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DeviceKind::Nmos => "nmos",
            DeviceKind::Pmos => "pmos",
            DeviceKind::Npn => "npn",
            DeviceKind::Pnp => "pnp",
            DeviceKind::Resistor => "res",
            DeviceKind::Capacitor => "cap",
            DeviceKind::Inductor => "ind",
            DeviceKind::VSource => "vsrc",
            DeviceKind::ISource => "isrc",
            DeviceKind::Diode => "diode",
        }
    }

    pub fn is_mos(&self) -> bool {
        matches!(self, DeviceKind::Nmos | DeviceKind::Pmos)
    }
}

impl PortRole {
    pub fn code(&self) -> &'static str {
        match self {
            PortRole::Drain => "d",
            PortRole::Gate => "g",
            PortRole::Source => "s",
            PortRole::Body => "b",
            PortRole::Collector => "c",
            PortRole::Base => "base",
            PortRole::Emitter => "e",
            PortRole::Pos => "p",
            PortRole::Neg => "n",
            PortRole::Anode => "a",
            PortRole::Cathode => "k",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: String,
    pub kind: DeviceKind,
    /// Net per port, ordered as [`DeviceKind::roles`].
    pub ports: Vec<String>,
    pub params: BTreeMap<String, f64>,
}

impl Device {
    pub fn port(&self, role: PortRole) -> Option<&str> {
        let idx = self.kind.roles().iter().position(|r| *r == role)?;
        self.ports.get(idx).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RailKind {
    Vdd,
    Gnd,
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subckt {
    pub name: String,
    pub ports: Vec<String>,
    /// Raw body lines, preserved verbatim.
    pub body: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetlistIR {
    pub devices: Vec<Device>,
    pub nets: BTreeSet<String>,
    /// Nets recognised as supply, ground, input or output rails.
    pub rails: BTreeMap<String, RailKind>,
    pub subckts: BTreeMap<String, Subckt>,
}

impl NetlistIR {
    pub fn empty() -> Self {
        NetlistIR {
            devices: Vec::new(),
            nets: BTreeSet::new(),
            rails: BTreeMap::new(),
            subckts: BTreeMap::new(),
        }
    }

    /// Build from devices alone: nets and rails are derived.
    pub fn from_devices(devices: Vec<Device>, rails: &RailConfig) -> Self {
        let mut nets = BTreeSet::new();
        for d in &devices {
            for n in &d.ports {
                nets.insert(n.clone());
            }
        }
        let rail_map = nets
            .iter()
            .filter_map(|n| rails.classify(n).map(|k| (n.clone(), k)))
            .collect();
        NetlistIR {
            devices,
            nets,
            rails: rail_map,
            subckts: BTreeMap::new(),
        }
    }

    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }

    /// Structural checks: port arity, net membership, no dangling nets,
    /// unique ids, finite params, physically positive geometry values.
    pub fn validate(&self) -> Result<(), NetlistError> {
        let mut seen = BTreeSet::new();
        let mut touched: BTreeSet<&str> = BTreeSet::new();
        for d in &self.devices {
            if !seen.insert(d.id.as_str()) {
                return Err(NetlistError::Invalid(format!("duplicate device id {}", d.id)));
            }
            if d.ports.len() != d.kind.roles().len() {
                return Err(NetlistError::Invalid(format!(
                    "{} has {} ports, {} expects {}",
                    d.id,
                    d.ports.len(),
                    d.kind.name(),
                    d.kind.roles().len()
                )));
            }
            for n in &d.ports {
                if !self.nets.contains(n) {
                    return Err(NetlistError::Invalid(format!(
                        "{} references unknown net {n}",
                        d.id
                    )));
                }
                touched.insert(n);
            }
            for (k, v) in &d.params {
                if !v.is_finite() {
                    return Err(NetlistError::Invalid(format!(
                        "{}: parameter {k} is not finite",
                        d.id
                    )));
                }
                if matches!(k.as_str(), "w" | "l" | "r" | "c") && *v <= 0.0 {
                    return Err(NetlistError::Invalid(format!(
                        "{}: parameter {k}={v} must be positive",
                        d.id
                    )));
                }
            }
        }
        for n in &self.nets {
            if !touched.contains(n.as_str()) {
                return Err(NetlistError::Invalid(format!("net {n} touches no device")));
            }
        }
        for n in self.rails.keys() {
            if !self.nets.contains(n) {
                return Err(NetlistError::Invalid(format!("rail {n} is not a net")));
            }
        }
        Ok(())
    }
}

/// Net-name alias lists used to recognise rails. Matching is exact on the
/// lowercased net name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RailConfig {
    pub vdd: Vec<String>,
    pub gnd: Vec<String>,
    pub input: Vec<String>,
    pub output: Vec<String>,
}

impl Default for RailConfig {
    fn default() -> Self {
        fn list(items: &[&str]) -> Vec<String> {
            items.iter().map(|s| s.to_string()).collect()
        }
        RailConfig {
            vdd: list(&["vdd", "vcc", "avdd", "vdd!"]),
            gnd: list(&["gnd", "vss", "agnd", "vss!", "0"]),
            input: list(&[
                "in", "vin", "inp", "inn", "in_p", "in_n", "vinp", "vinn", "vin_p", "vin_n",
            ]),
            output: list(&[
                "out", "vout", "outp", "outn", "out_p", "out_n", "voutp", "voutn",
            ]),
        }
    }
}

impl RailConfig {
    pub fn classify(&self, net: &str) -> Option<RailKind> {
        let n = net.to_ascii_lowercase();
        if self.vdd.iter().any(|a| *a == n) {
            Some(RailKind::Vdd)
        } else if self.gnd.iter().any(|a| *a == n) {
            Some(RailKind::Gnd)
        } else if self.input.iter().any(|a| *a == n) {
            Some(RailKind::Input)
        } else if self.output.iter().any(|a| *a == n) {
            Some(RailKind::Output)
        } else {
            None
        }
    }
}
