//! Recovery scoring: how close is an extracted netlist to the ground truth.
//!
//! `exact_match` is canonical-form equality and is the headline number.
//! The two accuracies are diagnostics for inspecting near misses: component
//! accuracy is kind-multiset overlap, edge accuracy counts recovered
//! port-net incidences. When the prediction is exactly right both are 1 by
//! definition; otherwise edge accuracy aligns devices by id when the id sets
//! agree (the common case for corrupted variants of one extraction) and
//! falls back to a best-effort positional alignment.

use super::{canonicalize, Device, DeviceKind, NetlistIR};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const MAX_MISMATCHES: usize = 32;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub exact_match: bool,
    pub component_accuracy: f64,
    pub edge_accuracy: f64,
    pub mismatches: Vec<String>,
}

pub fn recovery_score(pred: &NetlistIR, truth: &NetlistIR) -> RecoveryReport {
    if canonicalize(pred) == canonicalize(truth) {
        return RecoveryReport {
            exact_match: true,
            component_accuracy: 1.0,
            edge_accuracy: 1.0,
            mismatches: Vec::new(),
        };
    }

    let mut mismatches = Vec::new();
    let component_accuracy = component_accuracy(pred, truth, &mut mismatches);
    let edge_accuracy = edge_accuracy(pred, truth, &mut mismatches);
    mismatches.truncate(MAX_MISMATCHES);

    RecoveryReport {
        exact_match: false,
        component_accuracy,
        edge_accuracy,
        mismatches,
    }
}

fn kind_counts(ir: &NetlistIR) -> BTreeMap<DeviceKind, usize> {
    let mut counts = BTreeMap::new();
    for d in &ir.devices {
        *counts.entry(d.kind).or_insert(0) += 1;
    }
    counts
}

fn component_accuracy(pred: &NetlistIR, truth: &NetlistIR, mismatches: &mut Vec<String>) -> f64 {
    let pc = kind_counts(pred);
    let tc = kind_counts(truth);
    if truth.devices.is_empty() {
        return if pred.devices.is_empty() { 1.0 } else { 0.0 };
    }
    let mut matched = 0usize;
    for (kind, t) in &tc {
        let p = pc.get(kind).copied().unwrap_or(0);
        matched += p.min(*t);
        if p != *t {
            mismatches.push(format!("kind count {}: pred {p}, truth {t}", kind.name()));
        }
    }
    for (kind, p) in &pc {
        if !tc.contains_key(kind) {
            mismatches.push(format!("kind count {}: pred {p}, truth 0", kind.name()));
        }
    }
    matched as f64 / truth.devices.len() as f64
}

fn edge_accuracy(pred: &NetlistIR, truth: &NetlistIR, mismatches: &mut Vec<String>) -> f64 {
    let total: usize = truth.devices.iter().map(|d| d.ports.len()).sum();
    if total == 0 {
        return if pred.devices.iter().all(|d| d.ports.is_empty()) { 1.0 } else { 0.0 };
    }

    let pred_ids: BTreeMap<&str, &Device> =
        pred.devices.iter().map(|d| (d.id.as_str(), d)).collect();
    let ids_align = pred.devices.len() == truth.devices.len()
        && truth.devices.iter().all(|d| pred_ids.contains_key(d.id.as_str()));

    let pairs: Vec<(&Device, &Device)> = if ids_align {
        truth
            .devices
            .iter()
            .map(|t| (pred_ids[t.id.as_str()], t))
            .collect()
    } else {
        positional_pairs(pred, truth)
    };

    let mut matched = 0usize;
    for (p, t) in &pairs {
        if p.kind != t.kind {
            mismatches.push(format!("{}: kind pred {}, truth {}", t.id, p.kind.name(), t.kind.name()));
            continue;
        }
        for (i, role) in t.kind.roles().iter().enumerate() {
            if p.ports.get(i) == t.ports.get(i) {
                matched += 1;
            } else {
                mismatches.push(format!(
                    "{}.{}: pred {}, truth {}",
                    t.id,
                    role.code(),
                    p.ports.get(i).map(String::as_str).unwrap_or("?"),
                    t.ports[i]
                ));
            }
        }
    }
    if pairs.len() < truth.devices.len() {
        mismatches.push(format!(
            "device count: pred {}, truth {}",
            pred.devices.len(),
            truth.devices.len()
        ));
    }
    matched as f64 / total as f64
}

/// Pair same-kind devices in a canonical order when ids are unusable.
fn positional_pairs<'a>(
    pred: &'a NetlistIR,
    truth: &'a NetlistIR,
) -> Vec<(&'a Device, &'a Device)> {
    let sort_key = |d: &Device| (d.kind, d.ports.join(","), d.id.clone());
    let mut ps: Vec<&Device> = pred.devices.iter().collect();
    let mut ts: Vec<&Device> = truth.devices.iter().collect();
    ps.sort_by_key(|d| sort_key(d));
    ts.sort_by_key(|d| sort_key(d));
    let mut pairs = Vec::new();
    let mut pi = 0;
    for t in ts {
        while pi < ps.len() && ps[pi].kind < t.kind {
            pi += 1;
        }
        if pi < ps.len() && ps[pi].kind == t.kind {
            pairs.push((ps[pi], t));
            pi += 1;
        }
    }
    pairs
}
