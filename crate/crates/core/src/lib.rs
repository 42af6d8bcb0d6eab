//! Separation of overlapping elongated objects from per-pixel class,
//! orientation and dilated-overlap layers, with a synthetic data generator,
//! a prediction emulator and the matching evaluation metrics.
//!
//! Typical flow: [`synthgen::build_dataset`] → [`emulate::predict`] →
//! [`instseg::segment_instances`] → [`metrics`]. [`pipeline`] wires the same
//! flow to files.

pub mod emulate;
pub mod error;
pub mod grid;
pub mod instseg;
pub mod io;
pub mod metrics;
pub mod orientation;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synthgen;

pub use error::{Error, Result};
pub use grid::{BinaryMask, Connectivity, DistanceImage, Grid, IntensityImage, LabelMap, SegmentImage};
