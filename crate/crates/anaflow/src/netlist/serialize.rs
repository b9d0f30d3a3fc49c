//! Deck emission. Output parses back to the same IR: device order, ids,
//! nets and parameter values survive the round trip exactly (values are
//! printed via [`format_si`], which only picks forms that re-parse to the
//! identical bits).

use super::{DeviceKind, NetlistIR};
use crate::units::format_si;
use std::collections::BTreeSet;
use std::fmt::Write;

pub fn serialize(ir: &NetlistIR) -> String {
    let mut out = String::new();
    for d in &ir.devices {
        let mut line = format!("{} {}", d.id, d.ports.join(" "));
        match d.kind {
            DeviceKind::Nmos | DeviceKind::Pmos | DeviceKind::Npn | DeviceKind::Pnp => {
                line.push(' ');
                line.push_str(d.kind.name());
                for (k, v) in &d.params {
                    let _ = write!(line, " {k}={}", format_si(*v));
                }
            }
            DeviceKind::Diode => {
                line.push_str(" dmod");
                for (k, v) in &d.params {
                    let _ = write!(line, " {k}={}", format_si(*v));
                }
            }
            DeviceKind::Resistor | DeviceKind::Capacitor | DeviceKind::Inductor => {
                let key = d.kind.prefix().to_ascii_lowercase().to_string();
                if let Some(v) = d.params.get(&key) {
                    let _ = write!(line, " {}", format_si(*v));
                }
                for (k, v) in &d.params {
                    if *k != key {
                        let _ = write!(line, " {k}={}", format_si(*v));
                    }
                }
            }
            DeviceKind::VSource | DeviceKind::ISource => {
                for probe in ["dc", "ac"] {
                    if let Some(v) = d.params.get(probe) {
                        let _ = write!(line, " {probe} {}", format_si(*v));
                    }
                }
                for (k, v) in &d.params {
                    if k != "dc" && k != "ac" {
                        let _ = write!(line, " {k}={}", format_si(*v));
                    }
                }
            }
        }
        out.push_str(&line);
        out.push('\n');
    }

    let kinds: BTreeSet<DeviceKind> = ir.devices.iter().map(|d| d.kind).collect();
    for kind in kinds {
        match kind {
            DeviceKind::Nmos | DeviceKind::Pmos | DeviceKind::Npn | DeviceKind::Pnp => {
                let _ = writeln!(out, ".model {} {}", kind.name(), kind.name());
            }
            DeviceKind::Diode => {
                let _ = writeln!(out, ".model dmod d");
            }
            _ => {}
        }
    }

    for sub in ir.subckts.values() {
        let _ = writeln!(out, ".subckt {} {}", sub.name, sub.ports.join(" "));
        for body_line in &sub.body {
            out.push_str(body_line);
            out.push('\n');
        }
        out.push_str(".ends\n");
    }

    out.push_str(".end\n");
    out
}
