//! Schematic image connectivity analysis.
//!
//! A scanned schematic is thresholded to an ink mask, component symbol and
//! text regions from an upstream detector are blanked out, and the leftover
//! wire ink is dilated and labeled into connected electrical regions. Each
//! region is one candidate net; a colored overlay plus a color-to-region
//! map is produced for prompting.

mod annotate;
mod label;
mod mask;

pub use annotate::{annotate, render_overlay, Annotated, NodeEntry, NodeMap};
pub use label::{label_regions, merge_nodes, RegionLabeling, RegionStats};
pub use mask::derive_wire_mask;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VisionError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(String),
    #[error("bad input: {0}")]
    BadInput(String),
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Raster {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Binary PGM (P5) bytes.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Decode a PNG or PGM file to grayscale.
pub fn load_raster(path: &std::path::Path) -> Result<Raster, VisionError> {
    let img = image::open(path)
        .map_err(|e| VisionError::Image(format!("{}: {e}", path.display())))?
        .to_luma8();
    Ok(Raster {
        width: img.width() as usize,
        height: img.height() as usize,
        pixels: img.into_raw(),
    })
}

/// Row-major boolean mask; true marks wire ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// One detector box in pixel coordinates. Boxes may hang over the image
/// edge; consumers clamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class: String,
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
    #[serde(default = "default_score")]
    pub score: f64,
}

fn default_score() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn from_json(text: &str) -> Result<Self, VisionError> {
        serde_json::from_str(text).map_err(|e| VisionError::BadInput(format!("detections: {e}")))
    }
}

/// Knobs for mask derivation and labeling.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisionConfig {
    /// Gray levels at or below this are ink.
    pub ink_threshold: u8,
    /// Chebyshev radius for dilation and for expanding cleared boxes.
    pub dilation_radius: usize,
    /// Regions smaller than this many pixels (after dilation) are noise.
    pub min_region_area: usize,
    /// Regions with centroids at most this far apart merge into one node.
    pub merge_dist: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            ink_threshold: 128,
            dilation_radius: 2,
            min_region_area: 25,
            merge_dist: 10.0,
        }
    }
}
