//! Wire mask derivation: threshold the scan, blank out detected symbols.

use super::{DetectionSet, Mask, Raster, VisionConfig};

/// Classes whose boxes stay in the mask. Junction dots are wire, everything
/// else (symbols, text) would short unrelated nets together once dilated.
const KEEP_CLASSES: &[&str] = &["junction"];

pub fn derive_wire_mask(img: &Raster, dets: &DetectionSet, cfg: &VisionConfig) -> Mask {
    let mut mask = Mask::new(img.width, img.height);
    for y in 0..img.height {
        for x in 0..img.width {
            mask.set(x, y, img.get(x, y) <= cfg.ink_threshold);
        }
    }
    // Clear boxes grown by the dilation radius so symbol ink cannot reach a
    // wire region even after dilation.
    let grow = cfg.dilation_radius as i64;
    for det in &dets.detections {
        if KEEP_CLASSES.contains(&det.class.to_ascii_lowercase().as_str()) {
            continue;
        }
        let x0 = (det.x - grow).max(0) as usize;
        let y0 = (det.y - grow).max(0) as usize;
        let x1 = ((det.x + det.w + grow).max(0) as usize).min(img.width);
        let y1 = ((det.y + det.h + grow).max(0) as usize).min(img.height);
        for y in y0..y1 {
            for x in x0..x1 {
                mask.set(x, y, false);
            }
        }
    }
    mask
}
