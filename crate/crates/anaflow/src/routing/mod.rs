//! Two-layer grid router. Layer 1 prefers horizontal runs, layer 2 vertical;
//! A* searches a composite cost field (direction penalty, vias, congestion
//! history, sensitivity surcharge), nets commit sequentially, and symmetric
//! net pairs try a mirrored copy of their partner's route before falling
//! back to an independent search.

use crate::netlist::NetlistIR;
use crate::placement::{Instance, Placement};
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use thiserror::Error;

/// Grid coordinate: (layer, column, row). Layer 0 runs horizontally, layer
/// 1 vertically.
pub type Cell = (usize, usize, usize);

const FREE: u16 = u16::MAX;

#[derive(Debug, Error)]
pub enum RoutingError {
    #[error("net {net}: pin at ({x:.3}, {y:.3}) um has no adjacent free cell")]
    PinOffGrid { net: String, x: f64, y: f64 },
    #[error("net {0}: pins cannot be connected")]
    Unreachable(String),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoutingRules {
    /// Grid pitch, µm.
    pub pitch: f64,
    /// Clearance added around the placement bbox, µm.
    pub margin: f64,
    /// Minimum same-layer clearance between different nets, grid steps.
    pub min_spacing: usize,
}

impl Default for RoutingRules {
    fn default() -> Self {
        RoutingRules {
            pitch: 0.5,
            margin: 5.0,
            min_spacing: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CostWeights {
    pub base: f64,
    /// Extra cost for running against a layer's preferred direction.
    pub wrong_dir: f64,
    pub via: f64,
    /// Surcharge for cells bordering committed sensitive-net wiring.
    pub sensitivity: f64,
    /// Multiplier on the congestion history left by committed routes.
    pub congestion: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            base: 1.0,
            wrong_dir: 1.0,
            via: 3.0,
            sensitivity: 2.0,
            congestion: 1.0,
        }
    }
}

/// Occupancy lattice for one routing job. Obstacles block layer 0 only;
/// committed wiring blocks its own cells and leaves congestion history on
/// the neighbours.
#[derive(Debug, Clone)]
pub struct RoutingGrid {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
    /// World coordinates of the lower-left corner of cell (0, 0), µm.
    pub origin: (f64, f64),
    pub pins: BTreeMap<String, Vec<Cell>>,
    obstacle: Vec<bool>,
    names: Vec<String>,
    occ: Vec<u16>,
    history: Vec<f64>,
    sensitive_near: Vec<bool>,
}

impl RoutingGrid {
    /// Empty grid for fixtures and small experiments.
    pub fn open(nx: usize, ny: usize, pitch: f64) -> Self {
        RoutingGrid {
            nx,
            ny,
            pitch,
            origin: (0.0, 0.0),
            pins: BTreeMap::new(),
            obstacle: vec![false; nx * ny],
            names: Vec::new(),
            occ: vec![FREE; 2 * nx * ny],
            history: vec![0.0; 2 * nx * ny],
            sensitive_near: vec![false; 2 * nx * ny],
        }
    }

    pub fn set_obstacle(&mut self, ix: usize, iy: usize) {
        self.obstacle[iy * self.nx + ix] = true;
    }

    pub fn is_obstacle(&self, ix: usize, iy: usize) -> bool {
        self.obstacle[iy * self.nx + ix]
    }

    /// Register a pin and reserve its cell for the net, so no other route
    /// can strand it.
    pub fn add_pin(&mut self, net: &str, cell: Cell) {
        let id = self.intern(net);
        let i = self.idx(cell);
        self.occ[i] = id;
        self.pins.entry(net.to_string()).or_default().push(cell);
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacle.iter().filter(|b| **b).count()
    }

    /// World position of a cell centre, µm.
    pub fn center(&self, cell: Cell) -> (f64, f64) {
        (
            self.origin.0 + (cell.1 as f64 + 0.5) * self.pitch,
            self.origin.1 + (cell.2 as f64 + 0.5) * self.pitch,
        )
    }

    fn idx(&self, c: Cell) -> usize {
        (c.0 * self.ny + c.2) * self.nx + c.1
    }

    fn intern(&mut self, net: &str) -> u16 {
        match self.names.iter().position(|n| n == net) {
            Some(i) => i as u16,
            None => {
                self.names.push(net.to_string());
                (self.names.len() - 1) as u16
            }
        }
    }

    /// Can `net` occupy `cell`: in bounds, off layer-0 obstacles, and not
    /// claimed by a different committed net.
    pub fn passable(&self, net: &str, cell: Cell) -> bool {
        if cell.0 > 1 || cell.1 >= self.nx || cell.2 >= self.ny {
            return false;
        }
        if cell.0 == 0 && self.obstacle[cell.2 * self.nx + cell.1] {
            return false;
        }
        let o = self.occ[self.idx(cell)];
        o == FREE || self.names.get(o as usize).map(String::as_str) == Some(net)
    }

    /// In-bounds lateral and via neighbours, in a fixed order.
    pub fn neighbors(&self, c: Cell) -> Vec<Cell> {
        let (l, x, y) = c;
        let mut out = Vec::with_capacity(5);
        if x > 0 {
            out.push((l, x - 1, y));
        }
        if x + 1 < self.nx {
            out.push((l, x + 1, y));
        }
        if y > 0 {
            out.push((l, x, y - 1));
        }
        if y + 1 < self.ny {
            out.push((l, x, y + 1));
        }
        out.push((1 - l, x, y));
        out
    }

    /// Cost of stepping from `from` into `to` (adjacent cells). A layer
    /// change is a via; a lateral move pays the base rate, a penalty when
    /// it runs against the layer's preferred direction, plus congestion
    /// and sensitivity surcharges on the target cell.
    pub fn step_cost(&self, w: &CostWeights, from: Cell, to: Cell) -> f64 {
        let i = self.idx(to);
        let mut cost = if from.0 != to.0 {
            w.via
        } else {
            let horizontal = from.1 != to.1;
            let preferred = (to.0 == 0) == horizontal;
            w.base + if preferred { 0.0 } else { w.wrong_dir }
        };
        cost += w.congestion * self.history[i];
        if self.sensitive_near[i] {
            cost += w.sensitivity;
        }
        cost
    }

    /// Record a finished route: its cells become exclusive to the net, and
    /// neighbouring cells pick up congestion history (and a sensitivity
    /// mark when the net is tagged sensitive).
    pub fn commit(&mut self, route: &Route, sensitive: bool) {
        let id = self.intern(&route.net);
        for cell in route.cells() {
            let i = self.idx(cell);
            self.occ[i] = id;
            for n in self.neighbors(cell) {
                if n.0 == cell.0 {
                    let j = self.idx(n);
                    self.history[j] += 1.0;
                    if sensitive {
                        self.sensitive_near[j] = true;
                    }
                }
            }
        }
    }
}

/// Lattice over a placement: the bbox plus margin, with block footprints
/// blocking layer 0 and every device pin projected to the nearest free
/// cell on its block edge.
pub fn build_grid(
    placement: &Placement,
    instance: &Instance,
    rules: &RoutingRules,
) -> Result<RoutingGrid, RoutingError> {
    let p = rules.pitch;
    let origin = (-rules.margin, -rules.margin);
    let span_x = placement.bbox.0 + 2.0 * rules.margin;
    let span_y = placement.bbox.1 + 2.0 * rules.margin;
    let nx = (span_x / p).ceil().max(1.0) as usize;
    let ny = (span_y / p).ceil().max(1.0) as usize;
    let mut grid = RoutingGrid::open(nx, ny, p);
    grid.origin = origin;

    for r in placement.rects.values() {
        let eps = 1e-9;
        let ix0 = (((r.x - origin.0) / p) + eps).floor().max(0.0) as usize;
        let ix1 = ((((r.x + r.w - origin.0) / p) - eps).ceil() as usize).min(nx);
        let iy0 = (((r.y - origin.1) / p) + eps).floor().max(0.0) as usize;
        let iy1 = ((((r.y + r.h - origin.1) / p) - eps).ceil() as usize).min(ny);
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                grid.set_obstacle(ix, iy);
            }
        }
    }

    for (net, positions) in placement.pin_positions(instance) {
        for (px, py) in positions {
            let bx = ((px - origin.0) / p).floor() as i64;
            let by = ((py - origin.1) / p).floor() as i64;
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (cx, cy) = (bx + dx, by + dy);
                    if cx < 0 || cy < 0 || cx as usize >= nx || cy as usize >= ny {
                        continue;
                    }
                    let (ix, iy) = (cx as usize, cy as usize);
                    if !grid.passable(&net, (0, ix, iy)) {
                        continue;
                    }
                    let (wx, wy) = grid.center((0, ix, iy));
                    let d2 = (wx - px) * (wx - px) + (wy - py) * (wy - py);
                    candidates.push((d2, ix, iy));
                }
            }
            // The nearest free cell in the window wins. Block edges need
            // not align with the lattice, so the best cell can sit past
            // one pitch; only a pin with every neighbour blocked is fatal.
            candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            match candidates.first() {
                Some(&(_, ix, iy)) => {
                    if !grid.pins.get(&net).map(|v| v.contains(&(0, ix, iy))).unwrap_or(false) {
                        grid.add_pin(&net, (0, ix, iy));
                    }
                }
                None => {
                    return Err(RoutingError::PinOffGrid {
                        net: net.clone(),
                        x: px,
                        y: py,
                    })
                }
            }
        }
    }
    Ok(grid)
}

/// One routed net: contiguous segments (one per Steiner leg), total wire
/// length and via count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Route {
    pub net: String,
    pub segments: Vec<Vec<Cell>>,
    /// Lateral wire length, µm.
    pub length: f64,
    pub vias: usize,
}

impl Route {
    /// Every cell the route occupies, deduplicated.
    pub fn cells(&self) -> BTreeSet<Cell> {
        self.segments.iter().flatten().copied().collect()
    }
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    cell: Cell,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.f
            .total_cmp(&other.f)
            .then_with(|| self.cell.cmp(&other.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One A* leg from `start` to any goal cell. The heuristic is Manhattan
/// distance times the cheapest possible step, so it never overestimates.
fn astar_leg(
    grid: &RoutingGrid,
    net: &str,
    start: Cell,
    goals: &BTreeSet<Cell>,
    w: &CostWeights,
) -> Option<(Vec<Cell>, f64)> {
    let size = 2 * grid.nx * grid.ny;
    let mut dist = vec![f64::INFINITY; size];
    let mut parent = vec![usize::MAX; size];
    let mut closed = vec![false; size];
    let goal_list: Vec<Cell> = goals.iter().copied().collect();
    let h = |c: Cell| -> f64 {
        goal_list
            .iter()
            .map(|g| {
                let dx = (c.1 as f64 - g.1 as f64).abs();
                let dy = (c.2 as f64 - g.2 as f64).abs();
                (dx + dy) * w.base
            })
            .fold(f64::INFINITY, f64::min)
    };

    if !grid.passable(net, start) || goal_list.is_empty() {
        return None;
    }
    let mut heap = BinaryHeap::new();
    dist[grid.idx(start)] = 0.0;
    heap.push(Reverse(Entry {
        f: h(start),
        cell: start,
    }));

    while let Some(Reverse(Entry { cell, .. })) = heap.pop() {
        let ci = grid.idx(cell);
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if goals.contains(&cell) {
            let mut path = vec![cell];
            let mut at = ci;
            while parent[at] != usize::MAX {
                at = parent[at];
                let l = at / (grid.nx * grid.ny);
                let rem = at % (grid.nx * grid.ny);
                path.push((l, rem % grid.nx, rem / grid.nx));
            }
            path.reverse();
            return Some((path, dist[ci]));
        }
        for n in grid.neighbors(cell) {
            if !grid.passable(net, n) {
                continue;
            }
            let ni = grid.idx(n);
            if closed[ni] {
                continue;
            }
            let g = dist[ci] + grid.step_cost(w, cell, n);
            if g < dist[ni] {
                dist[ni] = g;
                parent[ni] = ci;
                heap.push(Reverse(Entry { f: g + h(n), cell: n }));
            }
        }
    }
    None
}

fn leg_stats(path: &[Cell]) -> (usize, usize) {
    let mut lateral = 0;
    let mut vias = 0;
    for w in path.windows(2) {
        if w[0].0 != w[1].0 {
            vias += 1;
        } else {
            lateral += 1;
        }
    }
    (lateral, vias)
}

/// Cheapest path between two cells on the current cost field.
pub fn astar_route(
    grid: &RoutingGrid,
    net: &str,
    src: Cell,
    dst: Cell,
    w: &CostWeights,
) -> Result<Route, RoutingError> {
    let goals: BTreeSet<Cell> = [dst].into_iter().collect();
    let (path, _) = astar_leg(grid, net, src, &goals, w)
        .ok_or_else(|| RoutingError::Unreachable(net.to_string()))?;
    let (lateral, vias) = leg_stats(&path);
    Ok(Route {
        net: net.to_string(),
        segments: vec![path],
        length: lateral as f64 * grid.pitch,
        vias,
    })
}

/// Multi-pin net as a sequential Steiner tree: seed with the first pin,
/// then connect each remaining pin to the tree built so far.
pub fn route_net(
    grid: &RoutingGrid,
    net: &str,
    w: &CostWeights,
) -> Result<Route, RoutingError> {
    let mut pins: Vec<Cell> = grid.pins.get(net).cloned().unwrap_or_default();
    pins.sort();
    pins.dedup();
    let mut tree: BTreeSet<Cell> = BTreeSet::new();
    let mut segments = Vec::new();
    let mut length = 0.0;
    let mut vias = 0;
    for (i, &pin) in pins.iter().enumerate() {
        if i == 0 {
            tree.insert(pin);
            continue;
        }
        if tree.contains(&pin) {
            continue;
        }
        let (path, _) = astar_leg(grid, net, pin, &tree, w)
            .ok_or_else(|| RoutingError::Unreachable(net.to_string()))?;
        let (lat, v) = leg_stats(&path);
        length += lat as f64 * grid.pitch;
        vias += v;
        tree.extend(path.iter().copied());
        segments.push(path);
    }
    Ok(Route {
        net: net.to_string(),
        segments,
        length,
        vias,
    })
}

/// Net pairs that should route as mirror images, derived from device
/// symmetry pairs: the two gate nets (also the sensitive set) and the two
/// drain nets, when they differ.
pub fn derive_net_pairs(
    ir: &NetlistIR,
    device_pairs: &[(String, String)],
) -> (Vec<(String, String)>, BTreeSet<String>) {
    let mut pairs = Vec::new();
    let mut sensitive = BTreeSet::new();
    let mut seen = BTreeSet::new();
    for (a, b) in device_pairs {
        let (Some(da), Some(db)) = (ir.device(a), ir.device(b)) else {
            continue;
        };
        if !(da.kind.is_mos() && db.kind.is_mos()) {
            continue;
        }
        let gates = (da.ports[1].clone(), db.ports[1].clone());
        if gates.0 != gates.1 {
            sensitive.insert(gates.0.clone());
            sensitive.insert(gates.1.clone());
            if seen.insert(ord(&gates)) {
                pairs.push(gates);
            }
        }
        let drains = (da.ports[0].clone(), db.ports[0].clone());
        if drains.0 != drains.1 && seen.insert(ord(&drains)) {
            pairs.push(drains);
        }
    }
    (pairs, sensitive)
}

fn ord(p: &(String, String)) -> (String, String) {
    if p.0 <= p.1 {
        p.clone()
    } else {
        (p.1.clone(), p.0.clone())
    }
}

/// Reflect a route about the vertical line `axis` (world µm) and rebind it
/// to `net`. Fails when the mirror lands off-lattice, on blocked cells, or
/// misses any of the net's pins.
fn mirror_route(
    grid: &RoutingGrid,
    route: &Route,
    axis: f64,
    net: &str,
) -> Option<Route> {
    // Cell ix mirrors to 2*(axis - origin)/pitch - ix - 1; it must land on
    // an integer column for the reflection to stay on the lattice.
    let twice = 2.0 * (axis - grid.origin.0) / grid.pitch - 1.0;
    let mirror_ix = |ix: usize| -> Option<usize> {
        let m = twice - ix as f64;
        let r = m.round();
        if (m - r).abs() > 1e-6 || r < 0.0 || r as usize >= grid.nx {
            return None;
        }
        Some(r as usize)
    };
    let mut segments = Vec::new();
    let mut cells = BTreeSet::new();
    for seg in &route.segments {
        let mut out = Vec::with_capacity(seg.len());
        for &(l, ix, iy) in seg {
            let mx = mirror_ix(ix)?;
            let cell = (l, mx, iy);
            if !grid.passable(net, cell) {
                return None;
            }
            cells.insert(cell);
            out.push(cell);
        }
        segments.push(out);
    }
    let pins = grid.pins.get(net)?;
    if !pins.iter().all(|p| cells.contains(p)) {
        return None;
    }
    Some(Route {
        net: net.to_string(),
        segments,
        length: route.length,
        vias: route.vias,
    })
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RouteReport {
    pub routes: Vec<Route>,
    /// Nets that could not be completed, with the failure reason.
    pub unrouted: Vec<(String, String)>,
    /// Paired nets that had to be routed independently.
    pub asymmetric: Vec<String>,
}

impl RouteReport {
    pub fn is_clean(&self) -> bool {
        self.unrouted.is_empty()
    }
}

/// Route every multi-pin net, cheapest-to-hardest (pin count, then pin
/// bbox), committing each result so later nets see it as occupancy and
/// congestion. Paired nets first try the mirror of their partner's route.
pub fn route_all(
    grid: &mut RoutingGrid,
    weights: &CostWeights,
    pairs: &[(String, String)],
    sensitive: &BTreeSet<String>,
    axis: Option<f64>,
) -> RouteReport {
    let mut order: Vec<(usize, usize, String)> = grid
        .pins
        .iter()
        .filter(|(_, pins)| pins.len() >= 2)
        .map(|(net, pins)| {
            let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0, usize::MAX, 0);
            for &(_, ix, iy) in pins {
                x0 = x0.min(ix);
                x1 = x1.max(ix);
                y0 = y0.min(iy);
                y1 = y1.max(iy);
            }
            (pins.len(), (x1 - x0) + (y1 - y0), net.clone())
        })
        .collect();
    order.sort();

    let partner = |net: &str| -> Option<String> {
        pairs.iter().find_map(|(a, b)| {
            if a == net {
                Some(b.clone())
            } else if b == net {
                Some(a.clone())
            } else {
                None
            }
        })
    };

    let mut report = RouteReport::default();
    let mut done: BTreeSet<String> = BTreeSet::new();
    for (_, _, net) in &order {
        if done.contains(net) {
            continue;
        }
        match route_net(grid, net, weights) {
            Ok(route) => {
                grid.commit(&route, sensitive.contains(net));
                done.insert(net.clone());
                report.routes.push(route);
            }
            Err(e) => {
                done.insert(net.clone());
                report.unrouted.push((net.clone(), e.to_string()));
                continue;
            }
        }

        // A freshly routed net whose partner is still pending: mirror it.
        let Some(other) = partner(net) else { continue };
        if done.contains(&other) || !grid.pins.get(&other).map(|p| p.len() >= 2).unwrap_or(false)
        {
            continue;
        }
        let mirrored = axis.and_then(|ax| {
            let last = report.routes.last().unwrap();
            mirror_route(grid, last, ax, &other)
        });
        match mirrored {
            Some(route) => {
                grid.commit(&route, sensitive.contains(&other));
                done.insert(other.clone());
                report.routes.push(route);
            }
            None => {
                report.asymmetric.push(format!("{net}/{other}"));
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Spacing,
    ViaStack,
    Discontiguous,
    OutOfBounds,
    ObstacleOverlap,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub net: String,
    pub other: Option<String>,
    pub cell: Cell,
}

/// Post-route checks: same-layer spacing between different nets, via
/// clearance, path contiguity, bounds, and obstacle overlap. An empty
/// result means the routes are clean under `rules`.
pub fn drc_check(routes: &[Route], grid: &RoutingGrid, rules: &RoutingRules) -> Vec<Violation> {
    let mut found: BTreeSet<Violation> = BTreeSet::new();
    let r = rules.min_spacing;

    let mut by_cell: BTreeMap<Cell, BTreeSet<&str>> = BTreeMap::new();
    let mut vias: Vec<(String, usize, usize)> = Vec::new();
    for route in routes {
        for cell in route.cells() {
            by_cell.entry(cell).or_default().insert(&route.net);
        }
        for seg in &route.segments {
            for w in seg.windows(2) {
                if w[0].0 != w[1].0 {
                    vias.push((route.net.clone(), w[0].1, w[0].2));
                }
            }
        }
    }

    for (&(l, ix, iy), nets) in &by_cell {
        for net in nets {
            // Scan the clearance neighbourhood once per occupied cell; the
            // canonical ordering below dedups the symmetric hits.
            for dy in 0..r {
                for dx in 0..r {
                    for (sx, sy) in [(1i64, 1i64), (1, -1), (-1, 1), (-1, -1)] {
                        let jx = ix as i64 + sx * dx as i64;
                        let jy = iy as i64 + sy * dy as i64;
                        if jx < 0 || jy < 0 {
                            continue;
                        }
                        let other_cell = (l, jx as usize, jy as usize);
                        let Some(others) = by_cell.get(&other_cell) else {
                            continue;
                        };
                        for o in others {
                            if o == net {
                                continue;
                            }
                            let (a, b) = if net <= o { (net, o) } else { (o, net) };
                            let (ca, cb) = if (l, ix, iy) <= other_cell {
                                ((l, ix, iy), other_cell)
                            } else {
                                (other_cell, (l, ix, iy))
                            };
                            if ca == cb && a == b {
                                continue;
                            }
                            found.insert(Violation {
                                kind: ViolationKind::Spacing,
                                net: a.to_string(),
                                other: Some(b.to_string()),
                                cell: ca,
                            });
                            let _ = cb;
                        }
                    }
                }
            }
        }
    }

    for i in 0..vias.len() {
        for j in i + 1..vias.len() {
            let (na, xa, ya) = &vias[i];
            let (nb, xb, yb) = &vias[j];
            if na == nb {
                continue;
            }
            let cheb = (*xa as i64 - *xb as i64)
                .abs()
                .max((*ya as i64 - *yb as i64).abs()) as usize;
            if cheb < r {
                let (a, b) = if na <= nb { (na, nb) } else { (nb, na) };
                found.insert(Violation {
                    kind: ViolationKind::ViaStack,
                    net: a.clone(),
                    other: Some(b.clone()),
                    cell: (0, *xa.min(xb), *ya.min(yb)),
                });
            }
        }
    }

    for route in routes {
        for seg in &route.segments {
            for &cell in seg {
                if cell.0 > 1 || cell.1 >= grid.nx || cell.2 >= grid.ny {
                    found.insert(Violation {
                        kind: ViolationKind::OutOfBounds,
                        net: route.net.clone(),
                        other: None,
                        cell,
                    });
                } else if cell.0 == 0 && grid.is_obstacle(cell.1, cell.2) {
                    found.insert(Violation {
                        kind: ViolationKind::ObstacleOverlap,
                        net: route.net.clone(),
                        other: None,
                        cell,
                    });
                }
            }
            for w in seg.windows(2) {
                let dl = (w[0].0 as i64 - w[1].0 as i64).abs();
                let dx = (w[0].1 as i64 - w[1].1 as i64).abs();
                let dy = (w[0].2 as i64 - w[1].2 as i64).abs();
                if dl + dx + dy != 1 {
                    found.insert(Violation {
                        kind: ViolationKind::Discontiguous,
                        net: route.net.clone(),
                        other: None,
                        cell: w[1],
                    });
                }
            }
        }
    }

    found.into_iter().collect()
}

/// Final layout as a standalone SVG: blocks grey, layer-1 wiring red,
/// layer-2 blue, vias as dark squares, one label per block and per net.
pub fn layout_svg(
    instance: &Instance,
    placement: &Placement,
    grid: &RoutingGrid,
    routes: &[Route],
) -> String {
    use std::fmt::Write as _;
    let s = 8.0;
    let w = grid.nx as f64 * grid.pitch;
    let h = grid.ny as f64 * grid.pitch;
    let fy = |y: f64| (grid.origin.1 + h - y) * s;
    let fx = |x: f64| (x - grid.origin.0) * s;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {:.1} {:.1}\">\n",
        w * s,
        h * s
    );
    let _ = write!(
        svg,
        "<rect width=\"{:.1}\" height=\"{:.1}\" fill=\"#fafafa\"/>\n",
        w * s,
        h * s
    );

    for b in &instance.blocks {
        let Some(r) = placement.rects.get(&b.id) else {
            continue;
        };
        let _ = write!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" \
             fill=\"#ddd\" stroke=\"#555\"/>\n",
            fx(r.x),
            fy(r.y + r.h),
            r.w * s,
            r.h * s
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\" \
             fill=\"#333\">{}</text>\n",
            fx(r.x + 0.5 * r.w),
            fy(r.y + 0.5 * r.h) + 3.0,
            b.id
        );
    }

    for route in routes {
        for seg in &route.segments {
            for win in seg.windows(2) {
                let (a, b) = (win[0], win[1]);
                if a.0 != b.0 {
                    let (cx, cy) = grid.center(a);
                    let side = 0.6 * grid.pitch * s;
                    let _ = write!(
                        svg,
                        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{side:.1}\" height=\"{side:.1}\" \
                         fill=\"#222\"/>\n",
                        fx(cx) - 0.5 * side,
                        fy(cy) - 0.5 * side
                    );
                    continue;
                }
                let color = if a.0 == 0 { "#d33" } else { "#36c" };
                let (ax, ay) = grid.center(a);
                let (bx, by) = grid.center(b);
                let _ = write!(
                    svg,
                    "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
                     stroke=\"{color}\" stroke-width=\"{:.1}\" stroke-opacity=\"0.8\" \
                     stroke-linecap=\"round\"/>\n",
                    fx(ax),
                    fy(ay),
                    fx(bx),
                    fy(by),
                    0.4 * grid.pitch * s
                );
            }
        }
        if let Some(first) = route.segments.first().and_then(|s| s.first()) {
            let (cx, cy) = grid.center(*first);
            let _ = write!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"8\" fill=\"#777\">{}</text>\n",
                fx(cx) + 2.0,
                fy(cy) - 2.0,
                route.net
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_spice;
    use crate::placement::{anneal, instance_from_netlist, Schedule, Weights};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_weights() -> CostWeights {
        CostWeights {
            base: 1.0,
            wrong_dir: 0.0,
            via: 3.0,
            sensitivity: 2.0,
            congestion: 1.0,
        }
    }

    #[test]
    fn open_field_costs_manhattan() {
        let grid = RoutingGrid::open(5, 5, 1.0);
        let route = astar_route(&grid, "a", (0, 0, 0), (0, 4, 4), &unit_weights()).unwrap();
        assert_eq!(route.length, 8.0);
        assert_eq!(route.vias, 0);
        assert_eq!(route.segments[0].len(), 9);
    }

    #[test]
    fn wall_with_a_gap_is_threaded() {
        let mut grid = RoutingGrid::open(7, 7, 1.0);
        for iy in 0..7 {
            if iy != 5 {
                grid.set_obstacle(3, iy);
            }
        }
        // Stay on layer 0 by making vias prohibitive.
        let w = CostWeights {
            via: 1e6,
            ..unit_weights()
        };
        let route = astar_route(&grid, "a", (0, 0, 0), (0, 6, 0), &w).unwrap();
        assert!(route.segments[0].contains(&(0, 3, 5)), "path skips the gap");
        assert_eq!(route.vias, 0);
        assert_eq!(route.length, 6.0 + 10.0);
    }

    #[test]
    fn long_wrong_way_runs_switch_layers() {
        let grid = RoutingGrid::open(3, 12, 1.0);
        let route = astar_route(&grid, "a", (0, 0, 0), (1, 0, 8), &CostWeights::default()).unwrap();
        // Vertical on layer 0 costs 2 per step; one via then preferred
        // vertical on layer 1 costs 3 + 8.
        assert_eq!(route.vias, 1);
        assert_eq!(route.length, 8.0);
    }

    #[test]
    fn occupancy_blocks_other_nets_but_not_the_owner() {
        let mut grid = RoutingGrid::open(5, 1, 1.0);
        let route = astar_route(&grid, "a", (0, 0, 0), (0, 4, 0), &unit_weights()).unwrap();
        grid.commit(&route, false);
        assert!(grid.passable("a", (0, 2, 0)));
        assert!(!grid.passable("b", (0, 2, 0)));
        // b must go around via the other layer.
        let detour = astar_route(&grid, "b", (1, 0, 0), (1, 4, 0), &unit_weights()).unwrap();
        assert_eq!(detour.vias, 0);
    }

    #[test]
    fn sensitive_commit_raises_neighbour_costs() {
        let mut grid = RoutingGrid::open(5, 3, 1.0);
        let route = astar_route(&grid, "vin", (0, 0, 1), (0, 4, 1), &unit_weights()).unwrap();
        grid.commit(&route, true);
        let w = unit_weights();
        // Stepping into a cell bordering the sensitive run pays extra.
        let c = grid.step_cost(&w, (0, 0, 0), (0, 1, 0));
        assert_eq!(c, 1.0 + 1.0 + 2.0, "base + history + sensitivity");
        let far = grid.step_cost(&w, (1, 0, 0), (1, 1, 0));
        assert_eq!(far, 1.0);
    }

    #[test]
    fn block_footprint_becomes_obstacles_and_pins_stay_free() {
        let net = "M1 out in gnd gnd nfet w=1u l=1u\n.end";
        let ir = parse_spice(net).unwrap().ir;
        let instance = instance_from_netlist(&ir, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let placed = anneal(&instance, &Schedule::default(), &Weights::default(), &mut rng);
        let rules = RoutingRules {
            pitch: 1.0,
            margin: 5.0,
            min_spacing: 1,
        };
        let grid = build_grid(&placed.placement, &instance, &rules).unwrap();
        // 2x2 um footprint on a 1 um pitch: four blocked cells.
        assert_eq!(grid.obstacle_count(), 4);
        for (net, pins) in &grid.pins {
            for &pin in pins {
                assert!(grid.passable(net, pin), "pin sits on an obstacle");
                assert!(!grid.is_obstacle(pin.1, pin.2));
            }
        }
        // Pin projections stay within one pitch of the true offsets.
        for (net, positions) in placed.placement.pin_positions(&instance) {
            let cells = &grid.pins[&net];
            for (px, py) in positions {
                let near = cells.iter().any(|&c| {
                    let (cx, cy) = grid.center(c);
                    ((cx - px).powi(2) + (cy - py).powi(2)).sqrt() <= rules.pitch + 1e-9
                });
                assert!(near, "net {net}: no projected pin within a pitch");
            }
        }
    }

    #[test]
    fn mirrored_pins_route_as_mirror_images() {
        let mut grid = RoutingGrid::open(11, 6, 1.0);
        // Pins mirror about the column boundary between ix 4 and 6, i.e.
        // world x = 5.5.
        grid.add_pin("left", (0, 1, 0));
        grid.add_pin("left", (0, 3, 5));
        grid.add_pin("right", (0, 9, 0));
        grid.add_pin("right", (0, 7, 5));
        let pairs = vec![("left".to_string(), "right".to_string())];
        let report = route_all(
            &mut grid,
            &CostWeights::default(),
            &pairs,
            &BTreeSet::new(),
            Some(5.5),
        );
        assert!(report.is_clean());
        assert!(report.asymmetric.is_empty(), "mirror was rejected");
        let left = report.routes.iter().find(|r| r.net == "left").unwrap();
        let right = report.routes.iter().find(|r| r.net == "right").unwrap();
        assert_eq!(left.length, right.length);
        assert_eq!(left.vias, right.vias);
        let mirrored: BTreeSet<Cell> = left
            .cells()
            .into_iter()
            .map(|(l, ix, iy)| (l, 10 - ix, iy))
            .collect();
        assert_eq!(mirrored, right.cells());
    }

    #[test]
    fn adjacent_nets_violate_spacing_two() {
        let grid = RoutingGrid::open(6, 4, 1.0);
        let a = Route {
            net: "a".to_string(),
            segments: vec![vec![(0, 0, 1), (0, 1, 1), (0, 2, 1)]],
            length: 2.0,
            vias: 0,
        };
        let b = Route {
            net: "b".to_string(),
            segments: vec![vec![(0, 0, 2), (0, 1, 2), (0, 2, 2)]],
            length: 2.0,
            vias: 0,
        };
        let strict = RoutingRules {
            pitch: 1.0,
            margin: 0.0,
            min_spacing: 2,
        };
        let loose = RoutingRules {
            min_spacing: 1,
            ..strict
        };
        assert!(drc_check(&[a.clone()], &grid, &strict).is_empty());
        let hits = drc_check(&[a.clone(), b.clone()], &grid, &strict);
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|v| v.kind == ViolationKind::Spacing));
        assert!(drc_check(&[a, b], &grid, &loose).is_empty());
    }

    #[test]
    fn svg_draws_blocks_wires_and_vias() {
        let net = "\
M1 d1 vin_p tail gnd nfet w=4u l=1u
M2 vout vin_n tail gnd nfet w=4u l=1u
M5 tail vbias gnd gnd nfet w=4u l=1u
.end";
        let ir = parse_spice(net).unwrap().ir;
        let instance = instance_from_netlist(&ir, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let placed = anneal(&instance, &Schedule::default(), &Weights::default(), &mut rng);
        let rules = RoutingRules::default();
        let mut grid = build_grid(&placed.placement, &instance, &rules).unwrap();
        let report = route_all(
            &mut grid,
            &CostWeights::default(),
            &[],
            &BTreeSet::new(),
            None,
        );
        assert!(report.is_clean(), "unrouted: {:?}", report.unrouted);
        let svg = layout_svg(&instance, &placed.placement, &grid, &report.routes);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains(">M1<"));
        assert!(svg.contains("#d33") || svg.contains("#36c"));
        assert!(svg.contains("tail"));
    }
}
