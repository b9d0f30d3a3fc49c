//! Analog design automation library.
//!
//! The pipeline turns a schematic image into a sized, placed and routed
//! layout sketch: connectivity analysis of the raster, multi-branch LLM
//! netlist extraction with consensus fusion, Bayesian device sizing,
//! simulated-annealing placement and grid routing. Each stage is usable
//! on its own; `pipeline` chains them and writes per-stage manifests.

mod dsu;

pub mod evaluation;
pub mod fixtures;
pub mod gateway;
pub mod netlist;
pub mod pipeline;
pub mod placement;
pub mod reasoning;
pub mod routing;
pub mod sizing;
pub mod units;
pub mod vision;
