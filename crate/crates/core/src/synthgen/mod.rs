//! Synthetic overlapping-shape datasets.

mod assign;
mod compose;
mod dataset;
mod shape;

pub use assign::{assign_classes, choose_first, AssignmentRule};
pub use compose::{
    compose, compose_pair, fits, place, sample_cluster, sample_pair, separation, InstanceMeta,
    PairOptions, PlacedShape, Pose, Provenance, SyntheticSample, DILATED_OVERLAP_RADIUS,
};
pub use dataset::{build_dataset, sample_seed, split_counts, DatasetOptions, GeneratedSample};
pub use shape::{procedural_bank, procedural_bank_with, procedural_shape, ShapeParams, SourceShape, Split};
