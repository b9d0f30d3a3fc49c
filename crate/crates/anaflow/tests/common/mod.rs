//! Shared test helpers: an independent brute-force isomorphism oracle and a
//! seeded random netlist generator. The oracle enumerates every permutation
//! of the non-rail nets, so it is only usable on small instances, which is
//! exactly what makes it trustworthy as a reference.

#![allow(dead_code)]

use anaflow::netlist::{Device, DeviceKind, NetlistIR, RailConfig};
use anaflow::vision::{Mask, RegionLabeling};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

/// True when some rail-preserving renaming of `b`'s internal nets makes the
/// two device multisets identical. Rails must match by name and kind.
pub fn brute_force_isomorphic(a: &NetlistIR, b: &NetlistIR) -> bool {
    if a.rails != b.rails || a.devices.len() != b.devices.len() {
        return false;
    }
    let internal = |ir: &NetlistIR| -> Vec<String> {
        ir.nets
            .iter()
            .filter(|n| !ir.rails.contains_key(*n))
            .cloned()
            .collect()
    };
    let ai = internal(a);
    let bi = internal(b);
    if ai.len() != bi.len() {
        return false;
    }
    let a_desc = descriptors(a, &ai, &ai);
    for perm in permutations(&ai) {
        // Try the bijection bi[j] -> perm[j] from b's internals onto a's.
        if descriptors(b, &bi, &perm) == a_desc {
            return true;
        }
    }
    false
}

/// Sorted device descriptors with internal nets renamed: `from[i]` maps to
/// `to[i]`, rails map to themselves.
fn descriptors(ir: &NetlistIR, from: &[String], to: &[String]) -> Vec<String> {
    let rename = |net: &str| -> String {
        match from.iter().position(|n| n == net) {
            Some(i) => to[i].clone(),
            None => net.to_string(),
        }
    };
    let mut out: Vec<String> = ir
        .devices
        .iter()
        .map(|d| {
            let ports: Vec<String> = d.ports.iter().map(|n| rename(n)).collect();
            format!("{}|{}", d.kind.name(), ports.join("|"))
        })
        .collect();
    out.sort();
    out
}

fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest: Vec<T> = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

const KINDS: &[DeviceKind] = &[
    DeviceKind::Nmos,
    DeviceKind::Pmos,
    DeviceKind::Npn,
    DeviceKind::Resistor,
    DeviceKind::Capacitor,
    DeviceKind::VSource,
    DeviceKind::Diode,
];

/// Random small netlist over a fixed net pool. Every net in the result is
/// touched by at least one device, so the IR always validates.
pub fn random_ir(rng: &mut ChaCha8Rng) -> NetlistIR {
    let pool = ["vdd", "gnd", "in", "out", "a", "b", "c", "d"];
    let n_dev = rng.gen_range(1..=6);
    let mut devices = Vec::new();
    for i in 0..n_dev {
        let kind = *KINDS.choose(rng).unwrap();
        let ports: Vec<String> = (0..kind.roles().len())
            .map(|_| pool.choose(rng).unwrap().to_string())
            .collect();
        let mut params = std::collections::BTreeMap::new();
        match kind {
            DeviceKind::Resistor => {
                params.insert("r".to_string(), 1000.0 * (i + 1) as f64);
            }
            DeviceKind::Capacitor => {
                params.insert("c".to_string(), 1e-12 * (i + 1) as f64);
            }
            DeviceKind::VSource => {
                params.insert("dc".to_string(), 0.9);
            }
            DeviceKind::Nmos | DeviceKind::Pmos => {
                params.insert("w".to_string(), 1e-6);
                params.insert("l".to_string(), 1.5e-7);
            }
            _ => {}
        }
        devices.push(Device {
            id: format!("{}{}", kind.prefix(), i + 1),
            kind,
            ports,
            params,
        });
    }
    let ir = NetlistIR::from_devices(devices, &RailConfig::default());
    ir.validate().expect("generated netlist validates");
    ir
}

/// Isomorphic copy: fresh internal net names, shuffled device order, fresh
/// device ids. Rails keep their names.
pub fn renamed_clone(ir: &NetlistIR, rng: &mut ChaCha8Rng) -> NetlistIR {
    let internal: Vec<String> = ir
        .nets
        .iter()
        .filter(|n| !ir.rails.contains_key(*n))
        .cloned()
        .collect();
    let mut fresh: Vec<String> = (0..internal.len()).map(|i| format!("x{i}")).collect();
    fresh.shuffle(rng);
    let rename = |net: &str| -> String {
        match internal.iter().position(|n| n == net) {
            Some(i) => fresh[i].clone(),
            None => net.to_string(),
        }
    };
    let mut devices: Vec<Device> = ir
        .devices
        .iter()
        .map(|d| Device {
            id: d.id.clone(),
            kind: d.kind,
            ports: d.ports.iter().map(|n| rename(n)).collect(),
            params: d.params.clone(),
        })
        .collect();
    devices.shuffle(rng);
    let mut used: BTreeSet<String> = BTreeSet::new();
    for (i, d) in devices.iter_mut().enumerate() {
        d.id = format!("{}{}", d.kind.prefix(), 90 + i);
        assert!(used.insert(d.id.clone()));
    }
    let clone = NetlistIR::from_devices(devices, &RailConfig::default());
    clone.validate().expect("renamed clone validates");
    clone
}

/// Brute-force Chebyshev dilation, O(pixels * radius^2).
pub fn naive_dilate(mask: &Mask, radius: usize) -> Mask {
    let r = radius as i64;
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            'scan: for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && nx < w && ny >= 0 && ny < h && mask.get(nx as usize, ny as usize)
                    {
                        out.set(x as usize, y as usize, true);
                        break 'scan;
                    }
                }
            }
        }
    }
    out
}

/// Reference labeling: explicit-stack flood fill over 8-neighbours on the
/// naively dilated mask, dropping regions under the area threshold. Returns
/// each region as a set of pixel indices.
pub fn flood_fill_regions(mask: &Mask, radius: usize, min_area: usize) -> BTreeSet<BTreeSet<usize>> {
    let dilated = naive_dilate(mask, radius);
    let (w, h) = (dilated.width as i64, dilated.height as i64);
    let mut visited = vec![false; dilated.bits.len()];
    let mut regions = BTreeSet::new();
    for start in 0..dilated.bits.len() {
        if !dilated.bits[start] || visited[start] {
            continue;
        }
        let mut members = BTreeSet::new();
        let mut stack = vec![start];
        visited[start] = true;
        while let Some(idx) = stack.pop() {
            members.insert(idx);
            let (x, y) = ((idx % dilated.width) as i64, (idx / dilated.width) as i64);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || nx >= w || ny < 0 || ny >= h {
                        continue;
                    }
                    let nidx = (ny * w + nx) as usize;
                    if dilated.bits[nidx] && !visited[nidx] {
                        visited[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
        if members.len() >= min_area {
            regions.insert(members);
        }
    }
    regions
}

/// Pixel membership of a labeling as a set of sets, for comparison up to
/// relabeling.
pub fn labeling_membership(labeling: &RegionLabeling) -> BTreeSet<BTreeSet<usize>> {
    let mut by_label: std::collections::BTreeMap<u32, BTreeSet<usize>> = Default::default();
    for (idx, l) in labeling.labels.iter().enumerate() {
        if *l > 0 {
            by_label.entry(*l).or_default().insert(idx);
        }
    }
    by_label.into_values().collect()
}

/// Random synthetic wire mask: bars, boxes and specks.
pub fn random_mask(rng: &mut ChaCha8Rng) -> Mask {
    let (w, h) = (64, 48);
    let mut mask = Mask::new(w, h);
    for _ in 0..rng.gen_range(2..6) {
        let y = rng.gen_range(0..h);
        let x0 = rng.gen_range(0..w / 2);
        let len = rng.gen_range(4..w - x0);
        for x in x0..x0 + len {
            mask.set(x, y, true);
        }
    }
    for _ in 0..rng.gen_range(2..6) {
        let x = rng.gen_range(0..w);
        let y0 = rng.gen_range(0..h / 2);
        let len = rng.gen_range(4..h - y0);
        for y in y0..y0 + len {
            mask.set(x, y, true);
        }
    }
    for _ in 0..rng.gen_range(0..3) {
        let x0 = rng.gen_range(0..w - 6);
        let y0 = rng.gen_range(0..h - 6);
        for y in y0..y0 + rng.gen_range(3..6) {
            for x in x0..x0 + rng.gen_range(3..6) {
                mask.set(x, y, true);
            }
        }
    }
    for _ in 0..rng.gen_range(5..20) {
        mask.set(rng.gen_range(0..w), rng.gen_range(0..h), true);
    }
    mask
}
