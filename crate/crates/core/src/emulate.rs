//! Noisy stand-in predictions derived from ground-truth layers.
//!
//! Every pixel draws a fixed number of random values whatever the profile,
//! so two profiles sharing a seed see the same draws. Raising a rate can
//! then only add corrupted pixels, which keeps calibration searches monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid, LabelMap};
use crate::instseg::PredictionLayers;
use crate::metrics::iou;
use crate::orientation::{encode_degrees, field_error, AxialAngle, OrientationField};
use crate::par;
use crate::synthgen::sample_seed;

const STREAM_SEMANTIC: u64 = 1;
const STREAM_DILATED: u64 = 2;
const STREAM_ORIENTATION: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionProfile {
    /// Flip probability per pixel within `boundary_band` of a class boundary.
    pub boundary_flip_rate: f64,
    pub boundary_band: usize,
    /// Gaussian angle noise in degrees.
    pub orientation_noise_sigma: f64,
    /// Probability that a pixel's vector is replaced by a random one.
    pub orientation_dropout_rate: f64,
    /// Flip probability for pixels outside the boundary band.
    pub speckle_rate: f64,
    pub seed: u64,
}

impl Default for CorruptionProfile {
    fn default() -> Self {
        Self::zero(0)
    }
}

impl CorruptionProfile {
    /// The identity profile.
    pub fn zero(seed: u64) -> Self {
        Self {
            boundary_flip_rate: 0.0,
            boundary_band: 0,
            orientation_noise_sigma: 0.0,
            orientation_dropout_rate: 0.0,
            speckle_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} {v} outside [0, 1]")))
            }
        };
        rate("boundary_flip_rate", self.boundary_flip_rate)?;
        rate("orientation_dropout_rate", self.orientation_dropout_rate)?;
        rate("speckle_rate", self.speckle_rate)?;
        if !(self.orientation_noise_sigma >= 0.0 && self.orientation_noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "orientation_noise_sigma {} must be finite and non-negative",
                self.orientation_noise_sigma
            )));
        }
        Ok(())
    }

    /// Same rates with a seed specific to sample `index`.
    pub fn for_sample(&self, index: usize) -> Self {
        Self {
            seed: sample_seed(self.seed, index),
            ..*self
        }
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Distinct classes other than the pixel's own within Chebyshev radius `r`.
fn nearby_classes(truth: &LabelMap, i: usize, r: usize, out: &mut Vec<u8>) {
    out.clear();
    let (x, y) = truth.coords(i);
    let own = truth.as_slice()[i];
    let r = r as i64;
    for dy in -r..=r {
        for dx in -r..=r {
            if let Some(&c) = truth.get_signed(x as i64 + dx, y as i64 + dy) {
                if c != own && !out.contains(&c) {
                    out.push(c);
                }
            }
        }
    }
    out.sort_unstable();
}

/// Pixels within `band` (Chebyshev) of a class change; empty when `band` is 0.
pub fn boundary_band(truth: &LabelMap, band: usize) -> BinaryMask {
    let mut scratch = Vec::new();
    Grid::from_fn(truth.width(), truth.height(), |x, y| {
        band > 0 && {
            nearby_classes(truth, truth.index(x, y), band, &mut scratch);
            !scratch.is_empty()
        }
    })
}

fn corrupt_labels(truth: &LabelMap, num_classes: u8, profile: &CorruptionProfile, stream: u64) -> Result<LabelMap> {
    profile.validate()?;
    if num_classes < 2 {
        return Err(Error::InvalidParameter("at least two classes are needed".into()));
    }
    if let Some(&c) = truth.iter().find(|&&c| c >= num_classes) {
        return Err(Error::InvalidParameter(format!(
            "class {c} outside the {num_classes}-class alphabet"
        )));
    }
    let mut rng = profile.rng(stream);
    let mut out = truth.clone();
    let mut candidates = Vec::new();
    for i in 0..truth.len() {
        let flip: f64 = rng.random();
        let choice: f64 = rng.random();
        let own = truth.as_slice()[i];
        if profile.boundary_band > 0 {
            nearby_classes(truth, i, profile.boundary_band, &mut candidates);
        } else {
            candidates.clear();
        }
        if !candidates.is_empty() {
            if flip < profile.boundary_flip_rate {
                let k = ((choice * candidates.len() as f64) as usize).min(candidates.len() - 1);
                out.as_mut_slice()[i] = candidates[k];
            }
        } else if flip < profile.speckle_rate {
            let others = num_classes as usize - 1;
            let k = ((choice * others as f64) as usize).min(others - 1) as u8;
            out.as_mut_slice()[i] = if k >= own { k + 1 } else { k };
        }
    }
    Ok(out)
}

/// Boundary flips to a uniformly chosen nearby class plus speckle to a
/// uniformly chosen other class. Codes stay below `num_classes`.
pub fn corrupt_semantic(truth: &LabelMap, num_classes: u8, profile: &CorruptionProfile) -> Result<LabelMap> {
    corrupt_labels(truth, num_classes, profile, STREAM_SEMANTIC)
}

/// Gaussian angle noise plus dropout to an isotropic random vector of
/// magnitude in `(0, 1]`. Validity is unchanged.
pub fn corrupt_orientation(truth: &OrientationField, profile: &CorruptionProfile) -> Result<OrientationField> {
    profile.validate()?;
    let mut rng = profile.rng(STREAM_ORIENTATION);
    let mut out = truth.clone();
    for i in 0..truth.valid.len() {
        let noise: f64 = rng.sample(StandardNormal);
        let drop: f64 = rng.random();
        let angle: f64 = rng.random_range(0.0..180.0);
        let magnitude: f64 = 1.0 - rng.random::<f64>();
        let Some(theta) = truth.angle_at(i) else {
            continue;
        };
        out.vectors.as_mut_slice()[i] = if drop < profile.orientation_dropout_rate {
            encode_degrees(angle).scale(magnitude)
        } else if profile.orientation_noise_sigma > 0.0 {
            encode_degrees(AxialAngle::wrap(theta.degrees() + profile.orientation_noise_sigma * noise).degrees())
        } else {
            truth.vectors.as_slice()[i]
        };
    }
    Ok(out)
}

/// Corrupts every layer. The 3-class map and the dilated overlap use
/// independent random streams.
pub fn predict(truth: &PredictionLayers, profile: &CorruptionProfile) -> Result<PredictionLayers> {
    let semantic = corrupt_semantic(&truth.semantic3(), 3, profile)?;
    let dilated = corrupt_labels(&truth.dilated_overlap.map(|&b| u8::from(b)), 2, profile, STREAM_DILATED)?;
    PredictionLayers::from_semantic3(
        &semantic,
        dilated.mask_eq(1),
        corrupt_orientation(&truth.orientation, profile)?,
    )
}

/// Layer quality as measured against truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub chromosome_iou: f64,
    pub overlap_iou: f64,
    /// Mean axial error in degrees.
    pub orientation_error: f64,
}

impl std::fmt::Display for Quality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "chromosome IOU {:.4}, overlap IOU {:.4}, orientation error {:.3} deg",
            self.chromosome_iou, self.overlap_iou, self.orientation_error
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub profile: CorruptionProfile,
    pub achieved: Quality,
}

/// Search tolerances and bounds for [`calibrate_to_quality`].
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOptions {
    pub iou_tolerance: f64,
    pub orientation_tolerance: f64,
    pub bands: Vec<usize>,
    pub max_speckle: f64,
    pub max_sigma: f64,
    pub bisection_steps: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            iou_tolerance: 0.03,
            orientation_tolerance: 1.0,
            bands: vec![2, 1, 3, 4],
            max_speckle: 0.2,
            max_sigma: 90.0,
            bisection_steps: 14,
            rounds: 5,
            seed: 0,
        }
    }
}

/// Mean layer quality over a batch; sample `i` uses `profile.for_sample(i)`.
pub fn measure(batch: &[PredictionLayers], profile: &CorruptionProfile) -> Result<Quality> {
    let per = par::try_map_indexed(batch.len(), |i| {
        let p = profile.for_sample(i);
        let pred = predict(&batch[i], &p)?;
        let err = field_error(&pred.orientation, &batch[i].orientation, &batch[i].chromosome).ok();
        Ok::<_, Error>((
            iou(&pred.chromosome, &batch[i].chromosome)?,
            iou(&pred.overlap, &batch[i].overlap)?,
            err,
        ))
    })?;
    Ok(summarize(&per))
}

fn summarize(per: &[(f64, f64, Option<f64>)]) -> Quality {
    let n = per.len().max(1) as f64;
    let errs: Vec<f64> = per.iter().filter_map(|p| p.2).collect();
    Quality {
        chromosome_iou: per.iter().map(|p| p.0).sum::<f64>() / n,
        overlap_iou: per.iter().map(|p| p.1).sum::<f64>() / n,
        orientation_error: if errs.is_empty() {
            0.0
        } else {
            errs.iter().sum::<f64>() / errs.len() as f64
        },
    }
}

fn semantic_quality(batch: &[PredictionLayers], profile: &CorruptionProfile) -> Result<(f64, f64)> {
    let per = par::try_map_indexed(batch.len(), |i| {
        let truth = batch[i].semantic3();
        let pred = corrupt_semantic(&truth, 3, &profile.for_sample(i))?;
        Ok::<_, Error>((
            iou(&pred.mask_eq(1), &batch[i].chromosome)?,
            iou(&pred.mask_eq(2), &batch[i].overlap)?,
        ))
    })?;
    let n = per.len().max(1) as f64;
    Ok((
        per.iter().map(|p| p.0).sum::<f64>() / n,
        per.iter().map(|p| p.1).sum::<f64>() / n,
    ))
}

fn orientation_quality(batch: &[PredictionLayers], profile: &CorruptionProfile) -> Result<f64> {
    let per = par::try_map_indexed(batch.len(), |i| {
        let pred = corrupt_orientation(&batch[i].orientation, &profile.for_sample(i))?;
        Ok::<_, Error>(field_error(&pred, &batch[i].orientation, &batch[i].chromosome).ok())
    })?;
    let errs: Vec<f64> = per.into_iter().flatten().collect();
    Ok(if errs.is_empty() {
        0.0
    } else {
        errs.iter().sum::<f64>() / errs.len() as f64
    })
}

/// Largest `x` in `[lo, hi]` with `f(x) >= target` for a non-increasing `f`,
/// refined by bisection.
fn bisect(mut lo: f64, mut hi: f64, steps: usize, target: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if f(hi)? >= target {
        return Ok(hi);
    }
    if f(lo)? < target {
        return Ok(lo);
    }
    for _ in 0..steps {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick whichever end is closer to the target.
    let (flo, fhi) = (f(lo)?, f(hi)?);
    Ok(if (flo - target).abs() <= (fhi - target).abs() { lo } else { hi })
}

/// Searches for a profile whose corrupted batch hits the targets.
///
/// The angle noise is bisected alone against the orientation error. The
/// boundary flip rate and the speckle rate are then bisected in alternation
/// against the chromosome and overlap IOU, trying each boundary band in
/// turn. Fails with the closest profile found when no band meets both IOU
/// tolerances.
pub fn calibrate_to_quality(
    batch: &[PredictionLayers],
    targets: &Quality,
    options: &CalibrationOptions,
) -> Result<Calibration> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("calibration batch is empty".into()));
    }
    let in_unit = |v: f64| v > 0.0 && v <= 1.0;
    if !in_unit(targets.chromosome_iou)
        || !in_unit(targets.overlap_iou)
        || !(0.0..90.0).contains(&targets.orientation_error)
    {
        return Err(Error::InvalidParameter(format!(
            "calibration targets out of range: {targets}"
        )));
    }
    let mut profile = CorruptionProfile::zero(options.seed);
    if targets.chromosome_iou >= 1.0 && targets.overlap_iou >= 1.0 && targets.orientation_error == 0.0 {
        let achieved = measure(batch, &profile)?;
        return Ok(Calibration { profile, achieved });
    }

    // Orientation error increases with sigma, so bisect on its negation.
    profile.orientation_noise_sigma = bisect(0.0, options.max_sigma, options.bisection_steps + 4, -targets.orientation_error, |s| {
        let p = CorruptionProfile {
            orientation_noise_sigma: s,
            ..profile
        };
        orientation_quality(batch, &p).map(|e| -e)
    })?;

    let mut best: Option<(f64, CorruptionProfile)> = None;
    for &band in &options.bands {
        let mut p = CorruptionProfile {
            boundary_band: band,
            boundary_flip_rate: 0.0,
            speckle_rate: 0.0,
            ..profile
        };
        for _ in 0..options.rounds {
            p.boundary_flip_rate = bisect(0.0, 1.0, options.bisection_steps, targets.chromosome_iou, |f| {
                semantic_quality(batch, &CorruptionProfile { boundary_flip_rate: f, ..p }).map(|q| q.0)
            })?;
            p.speckle_rate = bisect(0.0, options.max_speckle, options.bisection_steps, targets.overlap_iou, |s| {
                semantic_quality(batch, &CorruptionProfile { speckle_rate: s, ..p }).map(|q| q.1)
            })?;
        }
        let (c, o) = semantic_quality(batch, &p)?;
        let miss = ((c - targets.chromosome_iou).abs()).max((o - targets.overlap_iou).abs());
        if best.as_ref().is_none_or(|(m, _)| miss < *m) {
            best = Some((miss, p));
        }
        if miss <= options.iou_tolerance {
            break;
        }
    }
    let (_, profile) = best.expect("at least one band");
    let achieved = measure(batch, &profile)?;
    let calibration = Calibration { profile, achieved };
    let ok = (achieved.chromosome_iou - targets.chromosome_iou).abs() <= options.iou_tolerance
        && (achieved.overlap_iou - targets.overlap_iou).abs() <= options.iou_tolerance
        && (achieved.orientation_error - targets.orientation_error).abs() <= options.orientation_tolerance;
    if ok {
        Ok(calibration)
    } else {
        Err(Error::Calibration {
            best: Box::new(calibration),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stripes(w: usize, h: usize) -> LabelMap {
        Grid::from_fn(w, h, |x, _| ((x / 16) % 3) as u8)
    }

    #[test]
    fn zero_profile_is_identity() {
        let truth = stripes(40, 20);
        let p = CorruptionProfile::zero(3);
        assert_eq!(corrupt_semantic(&truth, 3, &p).unwrap(), truth);
        let field = OrientationField::from_angles(&Grid::from_fn(8, 8, |x, _| (x > 2).then_some(x as f64 * 20.0)));
        assert_eq!(corrupt_orientation(&field, &p).unwrap(), field);
    }

    #[test]
    fn saturated_boundary_flips_every_band_pixel() {
        let truth = stripes(48, 4);
        let p = CorruptionProfile {
            boundary_flip_rate: 1.0,
            boundary_band: 1,
            ..CorruptionProfile::zero(1)
        };
        let out = corrupt_semantic(&truth, 3, &p).unwrap();
        let band = boundary_band(&truth, 1);
        for i in 0..truth.len() {
            assert_eq!(out.as_slice()[i] != truth.as_slice()[i], band.as_slice()[i]);
        }
    }

    #[test]
    fn flip_fraction_matches_binomial_expectation() {
        let truth = Grid::from_fn(128, 128, |x, y| {
            let (dx, dy) = (x as f64 - 64.0, y as f64 - 64.0);
            let r = (dx * dx + dy * dy).sqrt();
            if r < 20.0 { 2 } else if r < 45.0 { 1 } else { 0 }
        });
        let p = CorruptionProfile {
            boundary_flip_rate: 0.1,
            boundary_band: 2,
            speckle_rate: 0.001,
            ..CorruptionProfile::zero(77)
        };
        let band = boundary_band(&truth, 2).count() as f64;
        let interior = truth.len() as f64 - band;
        let expected = 0.1 * band + 0.001 * interior;
        let out = corrupt_semantic(&truth, 3, &p).unwrap();
        let flipped = out.iter().zip(truth.iter()).filter(|(a, b)| a != b).count() as f64;
        assert!((flipped - expected).abs() <= 0.2 * expected, "{flipped} vs {expected}");
    }

    #[test]
    fn alphabet_is_preserved_and_checked() {
        let truth = stripes(64, 16);
        let p = CorruptionProfile {
            boundary_flip_rate: 0.5,
            boundary_band: 3,
            speckle_rate: 0.3,
            ..CorruptionProfile::zero(9)
        };
        assert!(corrupt_semantic(&truth, 3, &p).unwrap().iter().all(|&c| c < 3));
        assert!(corrupt_semantic(&truth, 2, &p).is_err());
    }

    fn ramp_field(n: usize) -> OrientationField {
        OrientationField::from_angles(&Grid::from_fn(n, n, |x, y| Some(((x * 7 + y * 3) % 180) as f64)))
    }

    #[test]
    fn sigma_five_error_is_half_normal_mean() {
        let truth = ramp_field(110);
        let p = CorruptionProfile {
            orientation_noise_sigma: 5.0,
            ..CorruptionProfile::zero(4)
        };
        let out = corrupt_orientation(&truth, &p).unwrap();
        let all = BinaryMask::new(110, 110, true);
        let err = field_error(&out, &truth, &all).unwrap();
        let oracle = 5.0 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((err - oracle).abs() < 0.2, "{err} vs {oracle}");
    }

    #[test]
    fn full_dropout_is_uniform_axial_error() {
        let truth = ramp_field(110);
        let p = CorruptionProfile {
            orientation_dropout_rate: 1.0,
            ..CorruptionProfile::zero(5)
        };
        let out = corrupt_orientation(&truth, &p).unwrap();
        let all = BinaryMask::new(110, 110, true);
        let err = field_error(&out, &truth, &all).unwrap();
        assert!((err - 45.0).abs() < 1.5, "{err}");
    }

    #[test]
    fn more_flips_never_raise_iou() {
        let truth = Grid::from_fn(64, 64, |x, y| u8::from((16..48).contains(&x) && (20..30).contains(&y)));
        let fg = truth.mask_eq(1);
        for seed in 0..20 {
            let mut last = 1.0;
            for rate in [0.0, 0.1, 0.3, 0.6, 1.0] {
                let p = CorruptionProfile {
                    boundary_flip_rate: rate,
                    boundary_band: 2,
                    ..CorruptionProfile::zero(seed)
                };
                let v = iou(&corrupt_semantic(&truth, 2, &p).unwrap().mask_eq(1), &fg).unwrap();
                assert!(v <= last + 1e-12);
                last = v;
            }
        }
    }

    #[test]
    fn invalid_rates_are_rejected() {
        let p = CorruptionProfile {
            speckle_rate: 1.5,
            ..CorruptionProfile::zero(0)
        };
        assert!(p.validate().is_err());
    }
}
