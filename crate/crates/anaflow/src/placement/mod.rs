//! Sequence-pair placement under simulated annealing.
//!
//! Mirror-symmetry pairs are packed into a rigid stack block whose halves
//! sit mirrored about a common vertical axis, so pair alignment is
//! structural: the annealer moves the stack as one unit and can never
//! break symmetry. The cost function still scores area, wirelength and
//! symmetry deviation independently, so hand-built placements can be
//! graded too.

use crate::netlist::{DeviceKind, NetlistIR};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Footprint margin around a transistor's active area, µm.
const ENCLOSURE_UM: f64 = 0.5;
/// Lattice quantum for generated footprints, matching the router's default
/// grid pitch.
pub const GRID_UM: f64 = 0.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pin {
    pub net: String,
    pub dx: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Block {
    pub id: String,
    pub w: f64,
    pub h: f64,
    pub pins: Vec<Pin>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub blocks: Vec<Block>,
    pub pairs: Vec<(String, String)>,
    /// Minimum clearance between any two blocks, µm.
    pub spacing: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Placement {
    pub rects: BTreeMap<String, Rect>,
    /// Blocks placed with swapped width/height.
    pub rotated: BTreeSet<String>,
    /// Blocks placed as the mirrored half of a symmetry pair.
    pub mirrored: BTreeSet<String>,
    pub bbox: (f64, f64),
}

impl Placement {
    /// Absolute pin positions, honoring rotation and mirroring.
    pub fn pin_positions(&self, instance: &Instance) -> BTreeMap<String, Vec<(f64, f64)>> {
        let mut nets: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for b in &instance.blocks {
            let Some(r) = self.rects.get(&b.id) else { continue };
            for p in &b.pins {
                let (mut dx, mut dy) = (p.dx, p.dy);
                if self.rotated.contains(&b.id) {
                    (dx, dy) = (b.h - dy, dx);
                }
                if self.mirrored.contains(&b.id) {
                    dx = r.w - dx;
                }
                nets.entry(p.net.clone()).or_default().push((r.x + dx, r.y + dy));
            }
        }
        nets
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Weights {
    pub area: f64,
    pub wirelength: f64,
    pub symmetry: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            area: 1.0,
            wirelength: 0.5,
            symmetry: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Schedule {
    /// Initial temperature; None calibrates it so roughly 80% of random
    /// initial moves would be accepted.
    pub t0: Option<f64>,
    pub alpha: f64,
    pub moves_per_temp: usize,
    /// Stop when T drops below this fraction of T0.
    pub stop_ratio: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            t0: None,
            alpha: 0.95,
            moves_per_temp: 200,
            stop_ratio: 1e-3,
        }
    }
}

/// Same-kind MOS pairs that should mirror each other: a differential pair
/// (shared internal source, distinct input-marked gates) or a mirror pair
/// (shared rail source, shared gate), with matching W/L.
pub fn derive_symmetry_pairs(ir: &NetlistIR) -> Vec<(String, String)> {
    use crate::netlist::RailKind;
    let mos: Vec<_> = ir.devices.iter().filter(|d| d.kind.is_mos()).collect();
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut pairs = Vec::new();
    for i in 0..mos.len() {
        for j in (i + 1)..mos.len() {
            let (a, b) = (mos[i], mos[j]);
            if used.contains(a.id.as_str()) || used.contains(b.id.as_str()) {
                continue;
            }
            if a.kind != b.kind || a.ports[2] != b.ports[2] {
                continue;
            }
            if a.params.get("w") != b.params.get("w") || a.params.get("l") != b.params.get("l") {
                continue;
            }
            let source_rail = ir.rails.get(&a.ports[2]).copied();
            let gate_rail = |d: &crate::netlist::Device| ir.rails.get(&d.ports[1]).copied();
            let differential = source_rail.is_none()
                && a.ports[1] != b.ports[1]
                && gate_rail(a) == Some(RailKind::Input)
                && gate_rail(b) == Some(RailKind::Input);
            let mirror = matches!(source_rail, Some(RailKind::Vdd | RailKind::Gnd))
                && a.ports[1] == b.ports[1];
            if differential || mirror {
                used.insert(a.id.as_str());
                used.insert(b.id.as_str());
                pairs.push((a.id.clone(), b.id.clone()));
            }
        }
    }
    pairs
}

/// Build a placement instance from a netlist: fixed footprints per device
/// kind, transistors sized from their W/L. Voltage and current sources are
/// bias bookkeeping, not layout blocks, and are skipped.
pub fn instance_from_netlist(ir: &NetlistIR, spacing: f64) -> Instance {
    // Footprints round up to the router lattice so block edges, and the
    // pins derived from them, stay on cell boundaries regardless of the
    // continuous device sizes the optimizer picked.
    let quant = |v: f64| (v / GRID_UM).ceil().max(1.0) * GRID_UM;
    let mut blocks = Vec::new();
    for d in &ir.devices {
        let (w, h) = match d.kind {
            k if k.is_mos() => {
                let wm = d.params.get("w").copied().unwrap_or(1e-6);
                let lm = d.params.get("l").copied().unwrap_or(0.15e-6);
                (
                    quant(wm * 1e6 + 2.0 * ENCLOSURE_UM),
                    quant(lm * 1e6 + 2.0 * ENCLOSURE_UM),
                )
            }
            DeviceKind::Resistor => (1.0, 3.0),
            DeviceKind::Capacitor | DeviceKind::Inductor => (3.0, 3.0),
            DeviceKind::Diode => (1.0, 1.0),
            DeviceKind::VSource | DeviceKind::ISource => continue,
            _ => (2.0, 2.0),
        };
        let roles = d.kind.roles();
        let pins = d
            .ports
            .iter()
            .enumerate()
            .map(|(i, net)| {
                let (dx, dy) = match roles.len() {
                    4 => [(0.5 * w, h), (0.0, 0.5 * h), (0.5 * w, 0.0), (w, 0.5 * h)][i],
                    3 => [(0.5 * w, h), (0.0, 0.5 * h), (0.5 * w, 0.0)][i],
                    _ => [(0.5 * w, h), (0.5 * w, 0.0)][i],
                };
                Pin {
                    net: net.clone(),
                    dx,
                    dy,
                }
            })
            .collect();
        blocks.push(Block {
            id: d.id.clone(),
            w,
            h,
            pins,
        });
    }
    let present: BTreeSet<&str> = blocks.iter().map(|b| b.id.as_str()).collect();
    let pairs = derive_symmetry_pairs(ir)
        .into_iter()
        .filter(|(a, b)| present.contains(a.as_str()) && present.contains(b.as_str()))
        .collect();
    Instance {
        blocks,
        pairs,
        spacing,
    }
}

/// Longest-path packing of a sequence pair. Block `b` is left of `c` when
/// it precedes `c` in both sequences, below `c` when it precedes only in
/// the negative sequence.
pub fn realize(
    pos: &[usize],
    neg: &[usize],
    sizes: &[(f64, f64)],
    spacing: f64,
) -> (Vec<(f64, f64)>, (f64, f64)) {
    let n = sizes.len();
    let mut pos_idx = vec![0usize; n];
    let mut neg_idx = vec![0usize; n];
    for (i, &b) in pos.iter().enumerate() {
        pos_idx[b] = i;
    }
    for (i, &b) in neg.iter().enumerate() {
        neg_idx[b] = i;
    }
    let mut x = vec![0.0f64; n];
    for &c in pos {
        for &b in pos {
            if pos_idx[b] < pos_idx[c] && neg_idx[b] < neg_idx[c] {
                x[c] = x[c].max(x[b] + sizes[b].0 + spacing);
            }
        }
    }
    let mut y = vec![0.0f64; n];
    for &c in neg {
        for &b in neg {
            if pos_idx[b] > pos_idx[c] && neg_idx[b] < neg_idx[c] {
                y[c] = y[c].max(y[b] + sizes[b].1 + spacing);
            }
        }
    }
    let mut bw = 0.0f64;
    let mut bh = 0.0f64;
    for i in 0..n {
        bw = bw.max(x[i] + sizes[i].0);
        bh = bh.max(y[i] + sizes[i].1);
    }
    (
        x.into_iter().zip(y).collect(),
        (bw, bh),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParts {
    pub area: f64,
    pub hpwl: f64,
    pub symmetry: f64,
}

impl CostParts {
    pub fn total(&self, w: &Weights) -> f64 {
        w.area * self.area + w.wirelength * self.hpwl + w.symmetry * self.symmetry
    }
}

/// Score a placement: bounding-box area, summed half-perimeter wirelength,
/// and symmetry deviation (per pair, the y mismatch plus the distance of
/// each member's center from their common mirror axis).
pub fn cost_parts(p: &Placement, instance: &Instance) -> CostParts {
    let area = p.bbox.0 * p.bbox.1;

    let mut hpwl = 0.0;
    for pins in p.pin_positions(instance).values() {
        if pins.len() < 2 {
            continue;
        }
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pins {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        hpwl += (x1 - x0) + (y1 - y0);
    }

    let mut symmetry = 0.0;
    let mut axes = Vec::new();
    for (a, b) in &instance.pairs {
        let (Some(ra), Some(rb)) = (p.rects.get(a), p.rects.get(b)) else {
            continue;
        };
        symmetry += (ra.y - rb.y).abs();
        axes.push(0.5 * ((ra.x + 0.5 * ra.w) + (rb.x + 0.5 * rb.w)));
    }
    if !axes.is_empty() {
        let shared = axes.iter().sum::<f64>() / axes.len() as f64;
        for axis in &axes {
            symmetry += (axis - shared).abs();
        }
    }

    CostParts {
        area,
        hpwl,
        symmetry,
    }
}

pub fn cost(p: &Placement, instance: &Instance, weights: &Weights) -> f64 {
    cost_parts(p, instance).total(weights)
}

/// Working block for the annealer: either one real block or the rigid
/// mirror stack holding every symmetry pair.
struct WorkBlock {
    w: f64,
    h: f64,
    /// (block index in instance, offset, mirrored) for expansion.
    members: Vec<(usize, f64, f64, bool)>,
    rotatable: bool,
}

fn build_work_blocks(instance: &Instance) -> Vec<WorkBlock> {
    let index_of: BTreeMap<&str, usize> = instance
        .blocks
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let mut in_stack: BTreeSet<usize> = BTreeSet::new();
    let mut rows = Vec::new();
    for (a, b) in &instance.pairs {
        if let (Some(&ia), Some(&ib)) = (index_of.get(a.as_str()), index_of.get(b.as_str())) {
            rows.push((ia, ib));
            in_stack.insert(ia);
            in_stack.insert(ib);
        }
    }

    let mut work = Vec::new();
    if !rows.is_empty() {
        let gap = instance.spacing.max(0.0);
        let stack_w = rows
            .iter()
            .map(|&(ia, _)| 2.0 * instance.blocks[ia].w + gap)
            .fold(0.0f64, f64::max);
        let mut y = 0.0;
        let mut members = Vec::new();
        for &(ia, ib) in &rows {
            let bw = instance.blocks[ia].w;
            let bh = instance.blocks[ia].h;
            let left = 0.5 * stack_w - bw - 0.5 * gap;
            let right = 0.5 * stack_w + 0.5 * gap;
            members.push((ia, left, y, false));
            members.push((ib, right, y, true));
            y += bh + gap;
        }
        let stack_h = y - gap;
        work.push(WorkBlock {
            w: stack_w,
            h: stack_h,
            members,
            rotatable: false,
        });
    }
    for (i, b) in instance.blocks.iter().enumerate() {
        if !in_stack.contains(&i) {
            work.push(WorkBlock {
                w: b.w,
                h: b.h,
                members: vec![(i, 0.0, 0.0, false)],
                rotatable: true,
            });
        }
    }
    work
}

fn expand(
    instance: &Instance,
    work: &[WorkBlock],
    coords: &[(f64, f64)],
    bbox: (f64, f64),
    rot: &[bool],
) -> Placement {
    let mut rects = BTreeMap::new();
    let mut rotated = BTreeSet::new();
    let mut mirrored = BTreeSet::new();
    for (wb, (&(x, y), &r)) in work.iter().zip(coords.iter().zip(rot)) {
        for &(bi, ox, oy, mir) in &wb.members {
            let b = &instance.blocks[bi];
            let (bw, bh) = if r { (b.h, b.w) } else { (b.w, b.h) };
            rects.insert(
                b.id.clone(),
                Rect {
                    x: x + ox,
                    y: y + oy,
                    w: bw,
                    h: bh,
                },
            );
            if r {
                rotated.insert(b.id.clone());
            }
            if mir {
                mirrored.insert(b.id.clone());
            }
        }
    }
    Placement {
        rects,
        rotated,
        mirrored,
        bbox,
    }
}

#[derive(Clone)]
struct State {
    pos: Vec<usize>,
    neg: Vec<usize>,
    rot: Vec<bool>,
}

#[derive(Debug)]
pub struct AnnealResult {
    pub placement: Placement,
    pub cost: f64,
    /// Best cost seen after each evaluated move; non-increasing.
    pub trace: Vec<f64>,
}

fn eval(instance: &Instance, work: &[WorkBlock], s: &State, weights: &Weights) -> (Placement, f64) {
    let sizes: Vec<(f64, f64)> = work
        .iter()
        .zip(&s.rot)
        .map(|(w, &r)| if r { (w.h, w.w) } else { (w.w, w.h) })
        .collect();
    let (coords, bbox) = realize(&s.pos, &s.neg, &sizes, instance.spacing);
    let p = expand(instance, work, &coords, bbox, &s.rot);
    let c = cost(&p, instance, weights);
    (p, c)
}

fn propose<R: Rng>(s: &State, work: &[WorkBlock], rng: &mut R) -> State {
    let n = s.pos.len();
    let mut next = s.clone();
    let rotatable: Vec<usize> = (0..n).filter(|&i| work[i].rotatable).collect();
    loop {
        match rng.gen_range(0..3) {
            0 if n >= 2 => {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                next.pos.swap(i, j);
                return next;
            }
            1 if n >= 2 => {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                next.pos.swap(i, j);
                next.neg.swap(i, j);
                return next;
            }
            2 if !rotatable.is_empty() => {
                let b = rotatable[rng.gen_range(0..rotatable.len())];
                next.rot[b] = !next.rot[b];
                return next;
            }
            _ => {
                if n < 2 && rotatable.is_empty() {
                    return next;
                }
            }
        }
    }
}

/// Simulated annealing over sequence pairs; geometric cooling; returns the
/// best placement seen. Deterministic for a fixed rng.
pub fn anneal<R: Rng>(
    instance: &Instance,
    schedule: &Schedule,
    weights: &Weights,
    rng: &mut R,
) -> AnnealResult {
    let work = build_work_blocks(instance);
    let n = work.len();
    let init = State {
        pos: (0..n).collect(),
        neg: (0..n).collect(),
        rot: vec![false; n],
    };
    let (p0, c0) = eval(instance, &work, &init, weights);
    if n <= 1 {
        return AnnealResult {
            placement: p0,
            cost: c0,
            trace: vec![c0],
        };
    }

    let t0 = schedule.t0.unwrap_or_else(|| {
        let mut up = Vec::new();
        let mut probe = init.clone();
        let mut c = c0;
        for _ in 0..50 {
            let cand = propose(&probe, &work, rng);
            let (_, cc) = eval(instance, &work, &cand, weights);
            if cc > c {
                up.push(cc - c);
            }
            probe = cand;
            c = cc;
        }
        if up.is_empty() {
            1.0
        } else {
            let mean = up.iter().sum::<f64>() / up.len() as f64;
            // exp(-mean/T0) = 0.8 for the average uphill move.
            mean / (1.0f64 / 0.8).ln()
        }
    });

    let mut current = init.clone();
    let mut current_cost = c0;
    let mut best = init;
    let mut best_cost = c0;
    let mut trace = vec![c0];
    let mut t = t0;
    while t > schedule.stop_ratio * t0 {
        for _ in 0..schedule.moves_per_temp {
            let cand = propose(&current, &work, rng);
            let (_, cc) = eval(instance, &work, &cand, weights);
            let delta = cc - current_cost;
            if delta <= 0.0 || rng.gen::<f64>() < (-delta / t).exp() {
                current = cand;
                current_cost = cc;
                if cc < best_cost {
                    best_cost = cc;
                    best = current.clone();
                }
            }
            trace.push(best_cost);
        }
        t *= schedule.alpha;
    }
    let (placement, cost) = eval(instance, &work, &best, weights);
    AnnealResult {
        placement,
        cost,
        trace,
    }
}
