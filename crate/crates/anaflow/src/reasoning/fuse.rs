//! Hypothesis fusion.
//!
//! Stage 1 is mechanical: if two branches agree up to canonical form, that
//! form wins. Otherwise devices are aligned by id and voted slot by slot:
//! kind by majority, connectivity by pin-pair majority, with nets rebuilt
//! from the voted pin pairs through union-find. Stage 2, when enabled and
//! the branches truly disagree, asks the model to arbitrate with the
//! candidates in front of it; its answer is kept only if it parses and
//! validates, so a bad arbitration can never make the result worse than
//! stage 1.

use super::{BranchHypothesis, BranchKind, ReasoningConfig, FUSE_INTENT};
use crate::dsu::Dsu;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::netlist::{
    canonicalize, parse_spice, serialize, Device, DeviceKind, NetlistIR, RailConfig,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FuseError {
    #[error("no branch produced a valid netlist")]
    NoValidBranch,
    #[error("branches disagree and no consensus could be built: {0}")]
    NoConsensus(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FuseMethod {
    /// Two or more branches agreed up to canonical form (or only one was
    /// valid to begin with).
    CanonicalMajority,
    /// Slot-by-slot vote across disagreeing branches.
    SlotConsensus,
    /// Model arbitration over the candidate netlists.
    IntentRefined,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FuseOutcome {
    pub netlist: NetlistIR,
    pub method: FuseMethod,
    /// Which branches produced parseable netlists.
    pub branch_valid: Vec<(BranchKind, bool)>,
    pub notes: Vec<String>,
}

pub fn fuse<G: Gateway>(
    gateway: &G,
    hypotheses: &[BranchHypothesis],
    cfg: &ReasoningConfig,
) -> Result<FuseOutcome, FuseError> {
    let branch_valid: Vec<(BranchKind, bool)> = hypotheses
        .iter()
        .map(|h| (h.kind, h.netlist.is_some()))
        .collect();
    let mut valid: Vec<&BranchHypothesis> = hypotheses
        .iter()
        .filter(|h| h.netlist.is_some())
        .collect();
    valid.sort_by_key(|h| h.kind.priority());
    if valid.is_empty() {
        return Err(FuseError::NoValidBranch);
    }
    let mut notes: Vec<String> = hypotheses
        .iter()
        .filter_map(|h| h.error.as_ref().map(|e| format!("{}: {e}", h.kind.name())))
        .collect();

    // Stage 1a: canonical vote. `valid` is in priority order, so the first
    // hypothesis matching the modal form is also the preferred one.
    let forms: Vec<_> = valid
        .iter()
        .map(|h| canonicalize(h.netlist.as_ref().unwrap()))
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for f in &forms {
        *counts.entry(f.as_str()).or_insert(0) += 1;
    }
    let (modal_form, modal_count) = counts
        .iter()
        .max_by_key(|(_, c)| **c)
        .map(|(f, c)| (*f, *c))
        .expect("at least one form");
    if modal_count >= 2 || valid.len() == 1 {
        let winner = valid
            .iter()
            .zip(&forms)
            .find(|(_, f)| f.as_str() == modal_form)
            .map(|(h, _)| *h)
            .expect("modal form has a member");
        notes.push(format!(
            "canonical majority: {modal_count} of {} branches agree",
            valid.len()
        ));
        return Ok(FuseOutcome {
            netlist: winner.netlist.clone().unwrap(),
            method: FuseMethod::CanonicalMajority,
            branch_valid,
            notes,
        });
    }

    // Stage 1b: slot-level vote.
    let slot = slot_consensus(&valid, &mut notes);

    // Stage 2: model arbitration, kept only when it survives parsing and
    // validation.
    if cfg.intent_fusion {
        match intent_refine(gateway, &valid, cfg)? {
            Ok(ir) => {
                notes.push("intent arbitration accepted".to_string());
                return Ok(FuseOutcome {
                    netlist: ir,
                    method: FuseMethod::IntentRefined,
                    branch_valid,
                    notes,
                });
            }
            Err(reason) => notes.push(format!("intent arbitration rejected: {reason}")),
        }
    }

    match slot {
        Some(ir) => Ok(FuseOutcome {
            netlist: ir,
            method: FuseMethod::SlotConsensus,
            branch_valid,
            notes,
        }),
        None => Err(FuseError::NoConsensus(notes.join("; "))),
    }
}

/// Inner `Result` distinguishes a rejected arbitration (recoverable) from a
/// gateway failure (not).
fn intent_refine<G: Gateway>(
    gateway: &G,
    valid: &[&BranchHypothesis],
    cfg: &ReasoningConfig,
) -> Result<Result<NetlistIR, String>, GatewayError> {
    let candidates = valid
        .iter()
        .map(|h| {
            format!(
                "Attempt from the {} view:\n```spice\n{}```",
                h.kind.name(),
                serialize(h.netlist.as_ref().unwrap())
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    let req = ChatRequest::new(cfg.model.clone(), format!("fuse:intent:{}", cfg.case_tag))
        .system(super::SYSTEM_EXTRACT.trim_end())
        .user(FUSE_INTENT.trim_end().replace("{candidates}", &candidates));
    let response = gateway.complete(&req)?;
    let Some(deck) = super::extract_spice_block(&response) else {
        return Ok(Err("no fenced spice block".to_string()));
    };
    match parse_spice(&deck) {
        Ok(parsed) if !parsed.ir.devices.is_empty() => Ok(Ok(parsed.ir)),
        Ok(_) => Ok(Err("deck has no devices".to_string())),
        Err(e) => Ok(Err(e.to_string())),
    }
}

/// Natural ordering for device ids: M2 before M10.
fn nat_key(id: &str) -> (String, u64, String) {
    let digits_at = id
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()
        .map(|(i, _)| i)
        .unwrap_or(id.len());
    let num = id[digits_at..].parse::<u64>().unwrap_or(0);
    (id[..digits_at].to_string(), num, id.to_string())
}

fn slot_consensus(valid: &[&BranchHypothesis], notes: &mut Vec<String>) -> Option<NetlistIR> {
    let irs: Vec<&NetlistIR> = valid.iter().map(|h| h.netlist.as_ref().unwrap()).collect();
    let by_id: Vec<BTreeMap<&str, &Device>> = irs
        .iter()
        .map(|ir| ir.devices.iter().map(|d| (d.id.as_str(), d)).collect())
        .collect();

    // Consensus component set: ids seen in at least two branches, or the
    // priority branch's ids when there is no overlap at all.
    let mut id_count: BTreeMap<&str, usize> = BTreeMap::new();
    for m in &by_id {
        for id in m.keys() {
            *id_count.entry(id).or_insert(0) += 1;
        }
    }
    let mut ids: Vec<&str> = id_count
        .iter()
        .filter(|(_, c)| **c >= 2)
        .map(|(id, _)| *id)
        .collect();
    if ids.is_empty() {
        ids = by_id[0].keys().copied().collect();
        notes.push("no id overlap between branches; using priority branch ids".to_string());
    }
    ids.sort_by_key(|id| nat_key(id));

    // Kind vote per id; ties go to the highest-priority branch's reading.
    let mut kinds: BTreeMap<&str, DeviceKind> = BTreeMap::new();
    for id in &ids {
        let mut votes: BTreeMap<DeviceKind, usize> = BTreeMap::new();
        for m in &by_id {
            if let Some(d) = m.get(id) {
                *votes.entry(d.kind).or_insert(0) += 1;
            }
        }
        let best = votes.values().max().copied().unwrap_or(0);
        let kind = by_id
            .iter()
            .filter_map(|m| m.get(id))
            .map(|d| d.kind)
            .find(|k| votes[k] == best)
            .expect("id present in some branch");
        kinds.insert(id, kind);
    }

    // Pin-pair and pin-rail connectivity votes.
    let mut pins: Vec<(String, usize)> = Vec::new();
    for id in &ids {
        for p in 0..kinds[id].roles().len() {
            pins.push((id.to_string(), p));
        }
    }
    let rails: BTreeSet<&str> = irs.iter().flat_map(|ir| ir.rails.keys()).map(String::as_str).collect();
    let rails: Vec<&str> = rails.into_iter().collect();
    let node_count = pins.len() + rails.len();
    let mut dsu = Dsu::new(node_count);

    let pin_net = |bi: usize, pin: &(String, usize)| -> Option<&str> {
        by_id[bi]
            .get(pin.0.as_str())
            .and_then(|d| d.ports.get(pin.1))
            .map(String::as_str)
    };
    let vote = |defined: usize, conn: usize| -> bool {
        match defined {
            0 => false,
            1 => conn == 1,
            _ => conn * 2 > defined,
        }
    };

    for i in 0..pins.len() {
        for j in (i + 1)..pins.len() {
            let (mut defined, mut conn) = (0, 0);
            for bi in 0..irs.len() {
                if let (Some(a), Some(b)) = (pin_net(bi, &pins[i]), pin_net(bi, &pins[j])) {
                    defined += 1;
                    if a == b {
                        conn += 1;
                    }
                }
            }
            if vote(defined, conn) {
                dsu.union(i, j);
            }
        }
        for (ri, rail) in rails.iter().enumerate() {
            let (mut defined, mut conn) = (0, 0);
            for bi in 0..irs.len() {
                if let Some(net) = pin_net(bi, &pins[i]) {
                    defined += 1;
                    if net == *rail {
                        conn += 1;
                    }
                }
            }
            if vote(defined, conn) {
                dsu.union(i, pins.len() + ri);
            }
        }
    }

    // Name each class: a rail name when the class contains exactly one
    // rail, a fresh internal name otherwise. Two rails in one class means
    // the vote shorted supplies; that is never a sensible consensus.
    let mut class_rails: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (ri, rail) in rails.iter().enumerate() {
        class_rails.entry(dsu.find(pins.len() + ri)).or_default().push(rail);
    }
    for (_, rs) in class_rails.iter() {
        if rs.len() > 1 {
            notes.push(format!("slot vote shorted rails {}", rs.join("+")));
            return None;
        }
    }
    let mut names: BTreeMap<usize, String> = class_rails
        .iter()
        .map(|(root, rs)| (*root, rs[0].to_string()))
        .collect();
    let mut next_internal = 0usize;
    let mut ports_for: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for (i, pin) in pins.iter().enumerate() {
        let root = dsu.find(i);
        let name = names.entry(root).or_insert_with(|| {
            next_internal += 1;
            format!("n{next_internal}")
        });
        ports_for.entry(ids[ids.iter().position(|id| *id == pin.0).unwrap()])
            .or_default()
            .push(name.clone());
    }

    let devices: Vec<Device> = ids
        .iter()
        .map(|id| {
            let params = by_id
                .iter()
                .filter_map(|m| m.get(id))
                .find(|d| d.kind == kinds[id])
                .map(|d| d.params.clone())
                .unwrap_or_default();
            Device {
                id: id.to_string(),
                kind: kinds[id],
                ports: ports_for.remove(id).expect("ports collected per id"),
                params,
            }
        })
        .collect();

    let ir = NetlistIR::from_devices(devices, &RailConfig::default());
    match ir.validate() {
        Ok(()) => {
            notes.push("slot consensus built".to_string());
            Some(ir)
        }
        Err(e) => {
            notes.push(format!("slot consensus invalid: {e}"));
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::recovery_score;

    const GOLDEN: &str = "\
M1 d1 vin_p tail gnd nfet
M2 vout vin_n tail gnd nfet
M3 d1 d1 vdd vdd pfet
M4 vout d1 vdd vdd pfet
M5 tail vbias gnd gnd nfet
.end";

    struct NoCall;
    impl Gateway for NoCall {
        fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
            panic!("unexpected gateway call {}", req.tag);
        }
    }

    struct Canned(String);
    impl Gateway for Canned {
        fn complete(&self, _req: &ChatRequest) -> Result<String, GatewayError> {
            Ok(self.0.clone())
        }
    }

    fn hyp(kind: BranchKind, deck: &str) -> BranchHypothesis {
        let parsed = parse_spice(deck);
        match parsed {
            Ok(p) if !p.ir.devices.is_empty() => BranchHypothesis {
                kind,
                response: format!("```spice\n{deck}\n```"),
                netlist: Some(p.ir),
                error: None,
            },
            other => BranchHypothesis {
                kind,
                response: deck.to_string(),
                netlist: None,
                error: Some(match other {
                    Err(e) => e.to_string(),
                    _ => "empty".to_string(),
                }),
            },
        }
    }

    fn golden_ir() -> NetlistIR {
        parse_spice(GOLDEN).unwrap().ir
    }

    #[test]
    fn canonical_majority_skips_the_model() {
        let renamed = GOLDEN.replace("tail", "ntail").replace("d1", "x");
        let hyps = vec![
            hyp(BranchKind::Raw, "garbage, not spice"),
            hyp(BranchKind::Annotated, GOLDEN),
            hyp(BranchKind::Dual, &renamed),
        ];
        let cfg = ReasoningConfig::default();
        let out = fuse(&NoCall, &hyps, &cfg).unwrap();
        assert_eq!(out.method, FuseMethod::CanonicalMajority);
        assert!(recovery_score(&out.netlist, &golden_ir()).exact_match);
        assert_eq!(
            out.branch_valid,
            vec![
                (BranchKind::Raw, false),
                (BranchKind::Annotated, true),
                (BranchKind::Dual, true)
            ]
        );
    }

    #[test]
    fn single_valid_branch_passes_through() {
        let hyps = vec![
            hyp(BranchKind::Raw, "nope"),
            hyp(BranchKind::Annotated, GOLDEN),
            hyp(BranchKind::Dual, "also nope"),
        ];
        let out = fuse(&NoCall, &hyps, &ReasoningConfig::default()).unwrap();
        assert_eq!(out.method, FuseMethod::CanonicalMajority);
        assert!(recovery_score(&out.netlist, &golden_ir()).exact_match);
    }

    #[test]
    fn disjoint_corruptions_are_outvoted_slot_by_slot() {
        // Each branch wrong somewhere different: the other two outvote it.
        let a = GOLDEN.replace("M5 tail vbias gnd gnd nfet", "M5 tail vbias gnd gnd pfet");
        let b = GOLDEN.replace("M2 vout vin_n tail gnd nfet", "M2 vout vin_p tail gnd nfet");
        let c = GOLDEN.replace("M4 vout d1 vdd vdd pfet", "M4 vout d1 gnd vdd pfet");
        let hyps = vec![
            hyp(BranchKind::Raw, &a),
            hyp(BranchKind::Annotated, &b),
            hyp(BranchKind::Dual, &c),
        ];
        let cfg = ReasoningConfig {
            intent_fusion: false,
            ..ReasoningConfig::default()
        };
        let out = fuse(&NoCall, &hyps, &cfg).unwrap();
        assert_eq!(out.method, FuseMethod::SlotConsensus);
        let score = recovery_score(&out.netlist, &golden_ir());
        assert!(score.exact_match, "mismatches: {:?}", score.mismatches);
    }

    #[test]
    fn intent_arbitration_resolves_three_way_ties() {
        // All three disagree on M5's kind: no majority anywhere.
        let a = GOLDEN.replace("M5 tail vbias gnd gnd nfet", "M5 tail vbias gnd gnd pfet");
        let b = GOLDEN.replace("M5 tail vbias gnd gnd nfet", "Q5 tail vbias gnd npn");
        let hyps = vec![
            hyp(BranchKind::Raw, &a),
            hyp(BranchKind::Annotated, &b),
            hyp(BranchKind::Dual, GOLDEN),
        ];
        let cfg = ReasoningConfig::default();
        let arbiter = Canned(format!("The tail is clearly NMOS.\n```spice\n{GOLDEN}\n```"));
        let out = fuse(&arbiter, &hyps, &cfg).unwrap();
        assert_eq!(out.method, FuseMethod::IntentRefined);
        assert!(recovery_score(&out.netlist, &golden_ir()).exact_match);
    }

    #[test]
    fn invalid_arbitration_falls_back_to_slot_vote() {
        let a = GOLDEN.replace("M5 tail vbias gnd gnd nfet", "M5 tail vbias gnd gnd pfet");
        let b = GOLDEN.replace("M2 vout vin_n tail gnd nfet", "M2 vout vin_p tail gnd nfet");
        let c = GOLDEN.replace("M4 vout d1 vdd vdd pfet", "M4 vout d1 gnd vdd pfet");
        let hyps = vec![
            hyp(BranchKind::Raw, &a),
            hyp(BranchKind::Annotated, &b),
            hyp(BranchKind::Dual, &c),
        ];
        let out = fuse(&Canned("I refuse.".to_string()), &hyps, &ReasoningConfig::default()).unwrap();
        assert_eq!(out.method, FuseMethod::SlotConsensus);
        assert!(recovery_score(&out.netlist, &golden_ir()).exact_match);
    }

    #[test]
    fn no_valid_branch_is_an_error() {
        let hyps = vec![
            hyp(BranchKind::Raw, "x"),
            hyp(BranchKind::Annotated, "y"),
            hyp(BranchKind::Dual, "z"),
        ];
        assert!(matches!(
            fuse(&NoCall, &hyps, &ReasoningConfig::default()),
            Err(FuseError::NoValidBranch)
        ));
    }
}
