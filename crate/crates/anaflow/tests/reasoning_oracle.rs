//! Monte-Carlo reference for the joint pass bound and randomized checks of
//! hypothesis fusion.

mod common;

use anaflow::gateway::{ChatRequest, Gateway, GatewayError};
use anaflow::netlist::{canonicalize, parse_spice, recovery_score, Device, DeviceKind, NetlistIR, RailConfig};
use anaflow::reasoning::{fuse, joint_pass_lower_bound, BranchHypothesis, BranchKind, FuseMethod, ReasoningConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct NoCall;
impl Gateway for NoCall {
    fn complete(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        panic!("unexpected gateway call {}", req.tag);
    }
}

#[test]
fn independent_branches_match_the_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    // The fixed probe first: three branches at (0.3, 0.4, 0.5) give a bound
    // of 1 - 0.7 * 0.6 * 0.5 = 0.79.
    let ps = [0.3, 0.4, 0.5];
    let trials = 100_000u32;
    let mut hits = 0u32;
    for _ in 0..trials {
        if ps.iter().any(|p| rng.gen::<f64>() < *p) {
            hits += 1;
        }
    }
    let observed = f64::from(hits) / f64::from(trials);
    let bound = joint_pass_lower_bound(&ps);
    assert!((bound - 0.79).abs() < 1e-12);
    assert!(
        (observed - bound).abs() < 0.01,
        "observed {observed}, bound {bound}"
    );

    // Then random probability triples: independence makes the bound exact.
    for _ in 0..10 {
        let ps: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..0.9)).collect();
        let mut hits = 0u32;
        for _ in 0..trials {
            if ps.iter().any(|p| rng.gen::<f64>() < *p) {
                hits += 1;
            }
        }
        let observed = f64::from(hits) / f64::from(trials);
        let bound = joint_pass_lower_bound(&ps);
        assert!(
            (observed - bound).abs() < 0.01,
            "ps {ps:?}: observed {observed}, bound {bound}"
        );
    }
}

#[test]
fn complementary_branches_beat_the_bound() {
    // Branches that fail on disjoint inputs: one passes exactly when the
    // other would not, so the union rate is the sum of the rates, which
    // exceeds the independence bound by p_a * p_b.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..10 {
        let pa = rng.gen_range(0.2..0.45);
        let pb = rng.gen_range(0.2..0.45);
        let trials = 100_000u32;
        let mut hits = 0u32;
        for _ in 0..trials {
            let u: f64 = rng.gen();
            if u < pa || u > 1.0 - pb {
                hits += 1;
            }
        }
        let observed = f64::from(hits) / f64::from(trials);
        let bound = joint_pass_lower_bound(&[pa, pb]);
        assert!(
            observed >= bound,
            "pa {pa} pb {pb}: observed {observed} below bound {bound}"
        );
    }
}

#[test]
fn bound_dominates_every_single_branch() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..200 {
        let ps: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
        let bound = joint_pass_lower_bound(&ps);
        let max = ps.iter().cloned().fold(0.0f64, f64::max);
        assert!(bound >= max - 1e-12, "ps {ps:?}: bound {bound} < max {max}");
        assert!((0.0..=1.0).contains(&bound));
    }
}

const GOLDEN: &str = "\
M1 d1 vin_p tail gnd nfet
M2 vout vin_n tail gnd nfet
M3 d1 d1 vdd vdd pfet
M4 vout d1 vdd vdd pfet
M5 tail vbias gnd gnd nfet
.end";

fn golden_ir() -> NetlistIR {
    parse_spice(GOLDEN).unwrap().ir
}

/// Corrupt one device: flip its MOS polarity or swap two of its ports.
/// Returns None when the mutation is a no-op (e.g. swapping equal nets).
fn corrupt(ir: &NetlistIR, dev: usize, rng: &mut ChaCha8Rng) -> Option<NetlistIR> {
    let mut devices: Vec<Device> = ir.devices.clone();
    let d = &mut devices[dev];
    if d.kind.is_mos() && rng.gen_bool(0.5) {
        d.kind = match d.kind {
            DeviceKind::Nmos => DeviceKind::Pmos,
            DeviceKind::Pmos => DeviceKind::Nmos,
            other => other,
        };
    } else {
        let a = rng.gen_range(0..d.ports.len());
        let b = rng.gen_range(0..d.ports.len());
        if d.ports[a] == d.ports[b] {
            return None;
        }
        d.ports.swap(a, b);
    }
    let out = NetlistIR::from_devices(devices, &RailConfig::default());
    out.validate().ok()?;
    Some(out)
}

fn hypothesis(kind: BranchKind, ir: NetlistIR) -> BranchHypothesis {
    BranchHypothesis {
        kind,
        response: String::new(),
        netlist: Some(ir),
        error: None,
    }
}

#[test]
fn slot_vote_repairs_disjoint_corruptions() {
    // Each branch corrupts a different device, so every slot of the golden
    // answer keeps a two-of-three majority and fusion must recover it
    // exactly, without consulting the arbitration model. Fusion must also
    // not care about the order the hypotheses arrive in.
    let golden = golden_ir();
    let golden_form = canonicalize(&golden);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = ReasoningConfig {
        intent_fusion: false,
        ..ReasoningConfig::default()
    };
    let mut slot_runs = 0;
    for _ in 0..40 {
        let mut picks: Vec<usize> = (0..golden.devices.len()).collect();
        picks.shuffle(&mut rng);
        let corrupted: Vec<NetlistIR> = match picks[..3]
            .iter()
            .map(|&i| corrupt(&golden, i, &mut rng))
            .collect::<Option<Vec<_>>>()
        {
            Some(c) => c,
            None => continue,
        };
        // Two corruptions that happen to be isomorphic would form a
        // legitimate (wrong) majority; the repair claim only holds when
        // the branches genuinely disagree.
        let forms: Vec<_> = corrupted.iter().map(canonicalize).collect();
        if forms[0] == forms[1] || forms[0] == forms[2] || forms[1] == forms[2] {
            continue;
        }
        if forms.iter().any(|f| *f == golden_form) {
            continue;
        }
        let mut hyps = vec![
            hypothesis(BranchKind::Raw, corrupted[0].clone()),
            hypothesis(BranchKind::Annotated, corrupted[1].clone()),
            hypothesis(BranchKind::Dual, corrupted[2].clone()),
        ];
        let out = fuse(&NoCall, &hyps, &cfg).expect("consensus");
        assert_eq!(out.method, FuseMethod::SlotConsensus);
        let score = recovery_score(&out.netlist, &golden);
        assert!(score.exact_match, "not repaired: {:?}", score.mismatches);

        hyps.shuffle(&mut rng);
        let again = fuse(&NoCall, &hyps, &cfg).expect("consensus");
        assert_eq!(canonicalize(&again.netlist), golden_form);
        slot_runs += 1;
    }
    assert!(slot_runs >= 20, "only {slot_runs} informative runs");
}
