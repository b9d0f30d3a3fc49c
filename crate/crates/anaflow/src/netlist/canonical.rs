//! Canonical labeling of the device-net graph.
//!
//! The netlist is viewed as a bipartite multigraph: device vertices with
//! ordered ports on one side, net vertices on the other. Canonicalization
//! runs iterative color refinement; when refinement stalls with a
//! non-singleton net class it individualizes each member in turn, recurses,
//! and keeps the lexicographically smallest emission. Rail nets start with
//! colors derived from their names, so they are fixed points: an inverter
//! and a source follower never compare equal just because their internal
//! nets could be permuted.
//!
//! Device parameters are deliberately excluded. Two netlists are canonically
//! equal when they have the same component kinds and the same connectivity,
//! which is what recovery scoring measures.

use super::{NetlistIR, RailKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalForm(String);

impl CanonicalForm {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn sha256_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.0.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

struct Graph<'a> {
    ir: &'a NetlistIR,
    nets: Vec<&'a str>,
    /// Per device: net index of each port.
    dev_ports: Vec<Vec<usize>>,
    /// Per net: (device index, port position) incidences.
    net_inc: Vec<Vec<(usize, usize)>>,
}

pub fn canonicalize(ir: &NetlistIR) -> CanonicalForm {
    let nets: Vec<&str> = ir.nets.iter().map(String::as_str).collect();
    let net_index = |name: &str| nets.binary_search(&name).expect("port net in net set");
    let dev_ports: Vec<Vec<usize>> = ir
        .devices
        .iter()
        .map(|d| d.ports.iter().map(|n| net_index(n)).collect())
        .collect();
    let mut net_inc = vec![Vec::new(); nets.len()];
    for (di, ports) in dev_ports.iter().enumerate() {
        for (pi, ni) in ports.iter().enumerate() {
            net_inc[*ni].push((di, pi));
        }
    }
    let g = Graph { ir, nets, dev_ports, net_inc };

    // Initial colors: devices by kind; nets by rail name or a shared blank.
    let dev_init: Vec<String> = g.ir.devices.iter().map(|d| d.kind.name().to_string()).collect();
    let net_init: Vec<String> = g
        .nets
        .iter()
        .map(|n| match g.ir.rails.get(*n) {
            Some(_) => format!("rail:{n}"),
            None => "net".to_string(),
        })
        .collect();
    let dev_colors = rank_by(&dev_init);
    let net_colors = rank_by(&net_init);

    CanonicalForm(canon_rec(&g, dev_colors, net_colors))
}

/// Assign each item the rank of its key among sorted distinct keys.
fn rank_by<K: Ord + Clone>(keys: &[K]) -> Vec<u64> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap() as u64)
        .collect()
}

/// One refinement pass to a fixpoint. Old colors lead each signature, so the
/// partition only ever splits and ranks are stable once it stops splitting.
fn refine(g: &Graph, mut dev_colors: Vec<u64>, mut net_colors: Vec<u64>) -> (Vec<u64>, Vec<u64>) {
    loop {
        let dev_sigs: Vec<Vec<u64>> = g
            .dev_ports
            .iter()
            .enumerate()
            .map(|(di, ports)| {
                let mut sig = vec![dev_colors[di]];
                sig.extend(ports.iter().map(|ni| net_colors[*ni]));
                sig
            })
            .collect();
        let new_dev = rank_by(&dev_sigs);

        let net_sigs: Vec<Vec<u64>> = g
            .net_inc
            .iter()
            .enumerate()
            .map(|(ni, inc)| {
                let mut touch: Vec<(u64, u64)> =
                    inc.iter().map(|(di, pi)| (new_dev[*di], *pi as u64)).collect();
                touch.sort();
                let mut sig = vec![net_colors[ni]];
                for (c, p) in touch {
                    sig.push(c);
                    sig.push(p);
                }
                sig
            })
            .collect();
        let new_net = rank_by(&net_sigs);

        if new_dev == dev_colors && new_net == net_colors {
            return (dev_colors, net_colors);
        }
        dev_colors = new_dev;
        net_colors = new_net;
    }
}

fn canon_rec(g: &Graph, dev_colors: Vec<u64>, net_colors: Vec<u64>) -> String {
    let (dev_colors, net_colors) = refine(g, dev_colors, net_colors);

    // Smallest color class with more than one net, if any.
    let mut counts = std::collections::BTreeMap::new();
    for c in &net_colors {
        *counts.entry(*c).or_insert(0usize) += 1;
    }
    let target = counts.iter().find(|(_, n)| **n > 1).map(|(c, _)| *c);

    match target {
        None => emit(g, &net_colors),
        Some(color) => {
            let fresh = net_colors.iter().max().copied().unwrap_or(0) + 1;
            let mut best: Option<String> = None;
            for j in 0..net_colors.len() {
                if net_colors[j] != color {
                    continue;
                }
                let mut nc = net_colors.clone();
                nc[j] = fresh;
                let s = canon_rec(g, dev_colors.clone(), nc);
                if best.as_ref().map_or(true, |b| s < *b) {
                    best = Some(s);
                }
            }
            best.expect("target class is non-empty")
        }
    }
}

fn emit(g: &Graph, net_colors: &[u64]) -> String {
    let mut lines: Vec<String> = Vec::new();
    for (name, kind) in &g.ir.rails {
        let ni = g.nets.binary_search(&name.as_str()).expect("rail is a net");
        let code = match kind {
            RailKind::Vdd => "vdd",
            RailKind::Gnd => "gnd",
            RailKind::Input => "in",
            RailKind::Output => "out",
        };
        lines.push(format!("rail {code} {name}=n{}", net_colors[ni]));
    }
    let mut dev_lines: Vec<String> = g
        .ir
        .devices
        .iter()
        .enumerate()
        .map(|(di, d)| {
            let ports: Vec<String> = d
                .kind
                .roles()
                .iter()
                .zip(&g.dev_ports[di])
                .map(|(role, ni)| format!("{}=n{}", role.code(), net_colors[*ni]))
                .collect();
            format!("{}({})", d.kind.name(), ports.join(","))
        })
        .collect();
    dev_lines.sort();
    lines.extend(dev_lines);
    lines.join("\n")
}
