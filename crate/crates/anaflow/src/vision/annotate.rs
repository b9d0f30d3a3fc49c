//! Colored node overlay for prompting: each electrical region is painted a
//! distinct color and listed, with its color and centroid, in a machine
//! readable node map the language model can cross-reference.

use super::{Detection, Mask, Raster, RegionLabeling, VisionError};
use serde::{Deserialize, Serialize};
use std::io::Cursor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: u32,
    /// `#rrggbb` as painted in the overlay.
    pub color: String,
    pub centroid: [f64; 2],
    pub area: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMap {
    pub regions: Vec<NodeEntry>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone)]
pub struct Annotated {
    pub overlay_png: Vec<u8>,
    pub node_map: NodeMap,
}

/// Golden-ratio hue walk keeps adjacent region colors far apart.
pub fn region_color(index: usize) -> [u8; 3] {
    let hue = (index as f64 * 0.618_033_988_75).fract();
    hsv_to_rgb(hue, 0.65, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

/// RGB overlay: the grayscale base lightened, original wire ink painted in
/// its region color, detection boxes outlined.
pub fn render_overlay(
    base: &Raster,
    mask: &Mask,
    labeling: &RegionLabeling,
    detections: &[Detection],
) -> (usize, usize, Vec<u8>) {
    let (w, h) = (base.width, base.height);
    let mut rgb = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let gray = 128 + base.get(x, y) / 2;
            let label = labeling.label_at(x, y);
            let px = if label > 0 && mask.get(x, y) {
                region_color(label as usize - 1)
            } else {
                [gray, gray, gray]
            };
            let o = (y * w + x) * 3;
            rgb[o..o + 3].copy_from_slice(&px);
        }
    }
    const BOX: [u8; 3] = [40, 40, 220];
    for det in detections {
        let x0 = det.x.max(0) as usize;
        let y0 = det.y.max(0) as usize;
        let x1 = ((det.x + det.w).max(0) as usize).min(w.saturating_sub(1));
        let y1 = ((det.y + det.h).max(0) as usize).min(h.saturating_sub(1));
        if x0 >= w || y0 >= h {
            continue;
        }
        for x in x0..=x1 {
            for y in [y0, y1] {
                let o = (y * w + x) * 3;
                rgb[o..o + 3].copy_from_slice(&BOX);
            }
        }
        for y in y0..=y1 {
            for x in [x0, x1] {
                let o = (y * w + x) * 3;
                rgb[o..o + 3].copy_from_slice(&BOX);
            }
        }
    }
    (w, h, rgb)
}

pub fn annotate(
    base: &Raster,
    mask: &Mask,
    labeling: &RegionLabeling,
    detections: &[Detection],
) -> Result<Annotated, VisionError> {
    let (w, h, rgb) = render_overlay(base, mask, labeling, detections);
    let img: image::RgbImage = image::ImageBuffer::from_raw(w as u32, h as u32, rgb)
        .ok_or_else(|| VisionError::Image("overlay buffer size mismatch".to_string()))?;
    let mut png = Cursor::new(Vec::new());
    img.write_to(&mut png, image::ImageFormat::Png)
        .map_err(|e| VisionError::Image(format!("png encode: {e}")))?;

    let regions = labeling
        .regions
        .iter()
        .map(|r| {
            let [cr, cg, cb] = region_color(r.id as usize - 1);
            NodeEntry {
                id: r.id,
                color: format!("#{cr:02x}{cg:02x}{cb:02x}"),
                centroid: [r.centroid.0, r.centroid.1],
                area: r.area,
            }
        })
        .collect();

    Ok(Annotated {
        overlay_png: png.into_inner(),
        node_map: NodeMap {
            regions,
            detections: detections.to_vec(),
        },
    })
}
