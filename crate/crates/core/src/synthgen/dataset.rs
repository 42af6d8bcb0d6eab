//! Split-aware dataset construction.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par;

use super::assign::{assign_classes, AssignmentRule};
use super::compose::{sample_pair, PairOptions, SyntheticSample};
use super::shape::{SourceShape, Split};

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetOptions {
    pub canvas: (usize, usize),
    pub rule: AssignmentRule,
    /// Probability that a pair only touches instead of overlapping.
    pub touch_fraction: f64,
    /// Required axial distance between the two bodies' mean orientations.
    pub min_separation: Option<f64>,
    /// Pose attempts per shape pair.
    pub max_attempts: usize,
    /// Shape pairs tried before a sample fails.
    pub max_shape_draws: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            canvas: (128, 128),
            rule: AssignmentRule::LengthWise,
            touch_fraction: 0.1,
            min_separation: None,
            max_attempts: 200,
            max_shape_draws: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub name: String,
    pub split: Split,
    pub seed: u64,
    pub touching: bool,
    pub sample: SyntheticSample,
}

/// Seed for sample `index`: independent of every other index.
pub fn sample_seed(master_seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

/// Distributes `total` over splits proportionally to `weights` by the
/// largest-remainder rule; ties go to the earlier split.
pub fn split_counts(total: usize, weights: [usize; 3]) -> [usize; 3] {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return [0; 3];
    }
    let mut counts = weights.map(|w| total * w / sum);
    let mut rest: Vec<(usize, usize)> = (0..3).map(|k| (total * weights[k] % sum, k)).collect();
    rest.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - counts.iter().sum::<usize>();
    for &(_, k) in rest.iter().take(missing) {
        counts[k] += 1;
    }
    counts
}

/// Builds `counts[split]` pairs per split, drawing both shapes of a pair from
/// that split only. Sample `i` (train first, then val, then test) depends only
/// on `master_seed` and `i`.
pub fn build_dataset(
    bank: &[SourceShape],
    counts: [usize; 3],
    master_seed: u64,
    options: &DatasetOptions,
) -> Result<Vec<GeneratedSample>> {
    if !(0.0..=1.0).contains(&options.touch_fraction) {
        return Err(Error::Config(format!(
            "touch fraction {} outside [0, 1]",
            options.touch_fraction
        )));
    }
    let mut by_split: [Vec<&SourceShape>; 3] = Default::default();
    for shape in bank {
        by_split[shape.split as usize].push(shape);
    }
    for (k, split) in Split::ALL.iter().enumerate() {
        if counts[k] > 0 && by_split[k].len() < 2 {
            return Err(Error::Config(format!(
                "split {split} has {} source shapes; at least 2 are needed",
                by_split[k].len()
            )));
        }
    }

    let mut jobs = Vec::new();
    for (k, &split) in Split::ALL.iter().enumerate() {
        for j in 0..counts[k] {
            jobs.push((split, j));
        }
    }

    par::try_map_indexed(jobs.len(), |index| {
        let (split, j) = jobs[index];
        let seed = sample_seed(master_seed, index);
        let shapes = &by_split[split as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let touching = rng.random_bool(options.touch_fraction);
        let pair_options = PairOptions {
            touching,
            min_separation: options.min_separation,
            max_attempts: options.max_attempts,
        };
        let mut last = None;
        for _ in 0..options.max_shape_draws.max(1) {
            let a = rng.random_range(0..shapes.len());
            let mut b = rng.random_range(0..shapes.len() - 1);
            if b >= a {
                b += 1;
            }
            match sample_pair(shapes[a], shapes[b], options.canvas, &pair_options, seed, &mut rng) {
                Ok(sample) => {
                    return Ok(GeneratedSample {
                        name: format!("{split}-{j:04}"),
                        split,
                        seed,
                        touching,
                        sample: assign_classes(sample, options.rule, seed)?,
                    })
                }
                Err(e @ Error::Composition { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one draw"))
    })
}
