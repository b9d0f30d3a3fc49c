//! Region labeling: dilation, connected components, noise rejection and
//! centroid-distance node merging.

use super::{Mask, VisionConfig};
use crate::dsu::Dsu;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    /// 1-based region id, dense.
    pub id: u32,
    pub area: usize,
    pub centroid: (f64, f64),
}

/// Label raster over the dilated mask. Label 0 is background; region ids
/// are dense 1..=K in first-scan order, which makes labeling deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLabeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<RegionStats>,
}

impl RegionLabeling {
    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }
}

/// Chebyshev dilation: a pixel is set when any mask pixel lies within the
/// given square radius.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let r = radius as i64;
    let (w, h) = (mask.width as i64, mask.height as i64);
    // Two separable passes, horizontal then vertical.
    let mut horiz = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let mut hit = false;
            for dx in -r..=r {
                let nx = x + dx;
                if nx >= 0 && nx < w && mask.get(nx as usize, y as usize) {
                    hit = true;
                    break;
                }
            }
            horiz.set(x as usize, y as usize, hit);
        }
    }
    let mut out = Mask::new(mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            let mut hit = false;
            for dy in -r..=r {
                let ny = y + dy;
                if ny >= 0 && ny < h && horiz.get(x as usize, ny as usize) {
                    hit = true;
                    break;
                }
            }
            out.set(x as usize, y as usize, hit);
        }
    }
    out
}

/// Dilate, label 8-connected components, drop regions under the area
/// threshold, and compact ids in scan order.
pub fn label_regions(mask: &Mask, cfg: &VisionConfig) -> RegionLabeling {
    let dilated = dilate(mask, cfg.dilation_radius);
    let (w, h) = (dilated.width, dilated.height);
    let mut dsu = Dsu::new(w * h);
    for y in 0..h {
        for x in 0..w {
            if !dilated.get(x, y) {
                continue;
            }
            // Union with already-scanned 8-neighbours.
            let idx = y * w + x;
            if x > 0 && dilated.get(x - 1, y) {
                dsu.union(idx, idx - 1);
            }
            if y > 0 {
                if dilated.get(x, y - 1) {
                    dsu.union(idx, idx - w);
                }
                if x > 0 && dilated.get(x - 1, y - 1) {
                    dsu.union(idx, idx - w - 1);
                }
                if x + 1 < w && dilated.get(x + 1, y - 1) {
                    dsu.union(idx, idx - w + 1);
                }
            }
        }
    }

    // Compact roots to dense ids in scan order, then measure.
    let mut root_to_id: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();
    let mut labels = vec![0u32; w * h];
    let mut areas: Vec<usize> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !dilated.get(x, y) {
                continue;
            }
            let root = dsu.find(y * w + x);
            let next = root_to_id.len() as u32 + 1;
            let id = *root_to_id.entry(root).or_insert(next);
            if id == next {
                areas.push(0);
                sums.push((0.0, 0.0));
            }
            labels[y * w + x] = id;
            let slot = (id - 1) as usize;
            areas[slot] += 1;
            sums[slot].0 += x as f64;
            sums[slot].1 += y as f64;
        }
    }

    // Drop noise regions and renumber the survivors densely.
    let mut remap = vec![0u32; areas.len() + 1];
    let mut regions = Vec::new();
    for (i, area) in areas.iter().enumerate() {
        if *area >= cfg.min_region_area {
            let id = regions.len() as u32 + 1;
            remap[i + 1] = id;
            regions.push(RegionStats {
                id,
                area: *area,
                centroid: (sums[i].0 / *area as f64, sums[i].1 / *area as f64),
            });
        }
    }
    for l in labels.iter_mut() {
        *l = remap[*l as usize];
    }

    RegionLabeling {
        width: w,
        height: h,
        labels,
        regions,
    }
}

/// Merge regions whose centroids sit within `merge_dist` of each other,
/// repeating on the merged centroids until nothing moves. Running the
/// result through this again is a no-op.
pub fn merge_nodes(labeling: &RegionLabeling, merge_dist: f64) -> RegionLabeling {
    let mut current = labeling.clone();
    loop {
        let k = current.regions.len();
        let mut dsu = Dsu::new(k);
        let mut any = false;
        for i in 0..k {
            for j in (i + 1)..k {
                let (xi, yi) = current.regions[i].centroid;
                let (xj, yj) = current.regions[j].centroid;
                let dist = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
                if dist <= merge_dist && dsu.union(i, j) {
                    any = true;
                }
            }
        }
        if !any {
            return current;
        }

        // Relabel groups densely in order of their first member.
        let mut group_id = vec![0u32; k];
        let mut next = 0u32;
        for i in 0..k {
            let root = dsu.find(i);
            if group_id[root] == 0 {
                next += 1;
                group_id[root] = next;
            }
            group_id[i] = group_id[root];
        }
        let mut areas = vec![0usize; next as usize];
        let mut sums = vec![(0.0, 0.0); next as usize];
        for r in &current.regions {
            let g = (group_id[(r.id - 1) as usize] - 1) as usize;
            areas[g] += r.area;
            sums[g].0 += r.centroid.0 * r.area as f64;
            sums[g].1 += r.centroid.1 * r.area as f64;
        }
        let regions: Vec<RegionStats> = (0..next as usize)
            .map(|g| RegionStats {
                id: g as u32 + 1,
                area: areas[g],
                centroid: (sums[g].0 / areas[g] as f64, sums[g].1 / areas[g] as f64),
            })
            .collect();
        let labels: Vec<u32> = current
            .labels
            .iter()
            .map(|l| {
                if *l == 0 {
                    0
                } else {
                    group_id[(*l - 1) as usize]
                }
            })
            .collect();
        current = RegionLabeling {
            width: current.width,
            height: current.height,
            labels,
            regions,
        };
    }
}
