//! Procedural source shapes: bent bands with banded intensity and a
//! per-pixel medial-axis tangent orientation.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, Grid, IntensityImage};
use crate::orientation::{AxialAngle, OrientationField};
use crate::raster::connected_components;

/// Which independent subset a source shape belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Geometry of a procedural band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeParams {
    /// Medial-axis arc length in pixels, 20–120.
    pub length: f64,
    /// Band width in pixels, 4–16.
    pub width: f64,
    /// Total signed turning of the medial axis in degrees, at most 180 in
    /// magnitude; the bend radius must stay at least one width.
    pub bend_degrees: f64,
    /// Peak brightness in `(0, 1]`.
    pub brightness: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            length: 60.0,
            width: 9.0,
            bend_degrees: 0.0,
            brightness: 0.8,
        }
    }
}

impl ShapeParams {
    pub const LENGTH_RANGE: (f64, f64) = (20.0, 120.0);
    pub const WIDTH_RANGE: (f64, f64) = (4.0, 16.0);

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.length.is_finite() && self.width.is_finite() && self.bend_degrees.is_finite()) {
            return bad("shape parameters must be finite".into());
        }
        if self.width > self.length {
            return bad(format!(
                "width {} exceeds length {}",
                self.width, self.length
            ));
        }
        let (lo, hi) = Self::LENGTH_RANGE;
        if !(lo..=hi).contains(&self.length) {
            return bad(format!("length {} outside [{lo}, {hi}]", self.length));
        }
        let (lo, hi) = Self::WIDTH_RANGE;
        if !(lo..=hi).contains(&self.width) {
            return bad(format!("width {} outside [{lo}, {hi}]", self.width));
        }
        if self.bend_degrees.abs() > 180.0 {
            return bad(format!("bend {} exceeds 180 degrees", self.bend_degrees));
        }
        if self.bend_degrees != 0.0 {
            let radius = self.length / self.bend_degrees.abs().to_radians();
            if radius < self.width {
                return bad(format!(
                    "bend radius {radius:.2} is below the width {}",
                    self.width
                ));
            }
        }
        if !(self.brightness > 0.0 && self.brightness <= 1.0) {
            return bad(format!("brightness {} outside (0, 1]", self.brightness));
        }
        Ok(())
    }

    /// Draws parameters from the ranges used for generated banks.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let length: f64 = rng.random_range(30.0..80.0);
        let width: f64 = rng.random_range(6.0..12.0);
        // Keep the radius at least two widths so the band reads as elongated.
        let max_bend = (length / (2.0 * width)).to_degrees().min(45.0);
        let bend_degrees = rng.random_range(-max_bend..=max_bend);
        let brightness = rng.random_range(0.55..0.95);
        Self {
            length,
            width,
            bend_degrees,
            brightness,
        }
    }
}

/// One isolated chromosome-like object: a tight crop with its body mask and
/// per-pixel axial orientation.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceShape {
    pub id: String,
    pub split: Split,
    pub intensity: IntensityImage,
    pub body: BinaryMask,
    /// Valid exactly on `body`.
    pub orientation: OrientationField,
    /// Medial-axis length in pixels.
    pub medial_length: f64,
    /// Medial axis sampled about once per pixel, in crop coordinates.
    pub axis: Vec<(f64, f64)>,
}

impl SourceShape {
    pub fn width(&self) -> usize {
        self.body.width()
    }

    pub fn height(&self) -> usize {
        self.body.height()
    }

    /// Checks the structural invariants of an ingested or generated shape.
    pub fn validate(&self) -> Result<()> {
        self.body.ensure_same_dims(&self.intensity, "shape intensity")?;
        self.body.ensure_same_dims(&self.orientation.valid, "shape orientation")?;
        if self.orientation.valid != self.body {
            return Err(Error::InvalidParameter(format!(
                "shape {}: orientation validity must equal the body",
                self.id
            )));
        }
        let comps = connected_components(&self.body, Connectivity::Eight).max_label();
        if comps != 1 {
            return Err(Error::InvalidParameter(format!(
                "shape {}: body must be one 8-connected component, found {comps}",
                self.id
            )));
        }
        Ok(())
    }
}

/// Medial axis: a straight segment or a circular arc of constant curvature,
/// parametrised by arc length `s ∈ [0, L]` and centred on the origin.
struct Axis {
    length: f64,
    /// Total turning in radians.
    bend: f64,
    /// Signed radius `L / bend`; unused when straight.
    radius: f64,
    /// Arc centre.
    center: (f64, f64),
}

impl Axis {
    fn new(length: f64, bend_degrees: f64) -> Self {
        let bend = bend_degrees.to_radians();
        if bend == 0.0 {
            return Self {
                length,
                bend,
                radius: f64::INFINITY,
                center: (0.0, 0.0),
            };
        }
        let radius = length / bend;
        // The arc midpoint (heading 0) sits at the origin.
        Self {
            length,
            bend,
            radius,
            center: (0.0, radius),
        }
    }

    fn heading(&self, s: f64) -> f64 {
        -self.bend / 2.0 + self.bend * s / self.length
    }

    fn point(&self, s: f64) -> (f64, f64) {
        if self.bend == 0.0 {
            return (s - self.length / 2.0, 0.0);
        }
        let phi = self.heading(s);
        (
            self.center.0 + self.radius * phi.sin(),
            self.center.1 - self.radius * phi.cos(),
        )
    }

    /// Nearest axis parameter and distance for a point.
    fn nearest(&self, q: (f64, f64)) -> (f64, f64) {
        if self.bend == 0.0 {
            let s = (q.0 + self.length / 2.0).clamp(0.0, self.length);
            let p = self.point(s);
            return (s, (q.0 - p.0).hypot(q.1 - p.1));
        }
        let u = (q.0 - self.center.0, q.1 - self.center.1);
        let psi = u.1.atan2(u.0);
        let phi = if self.radius > 0.0 {
            psi + PI / 2.0
        } else {
            psi - PI / 2.0
        };
        let phi = (phi + PI).rem_euclid(2.0 * PI) - PI;
        let s = (phi + self.bend / 2.0) * self.length / self.bend;
        if (0.0..=self.length).contains(&s) {
            let d = (u.0.hypot(u.1) - self.radius.abs()).abs();
            return (s, d);
        }
        let p0 = self.point(0.0);
        let p1 = self.point(self.length);
        let d0 = (q.0 - p0.0).hypot(q.1 - p0.1);
        let d1 = (q.0 - p1.0).hypot(q.1 - p1.1);
        if d0 <= d1 {
            (0.0, d0)
        } else {
            (self.length, d1)
        }
    }
}

/// Banding along the axis: alternating light and dark stripes with random
/// widths and contrast.
struct Banding {
    edges: Vec<f64>,
    levels: Vec<f64>,
}

impl Banding {
    fn new(rng: &mut ChaCha8Rng, start: f64, end: f64) -> Self {
        let mut edges = vec![start];
        let mut levels = Vec::new();
        let mut s = start;
        let mut dark = rng.random_bool(0.5);
        while s < end {
            s += rng.random_range(2.0..7.0);
            edges.push(s);
            levels.push(if dark {
                rng.random_range(0.55..0.75)
            } else {
                rng.random_range(0.85..1.0)
            });
            dark = !dark;
        }
        Self { edges, levels }
    }

    fn level(&self, s: f64) -> f64 {
        let k = self.edges.partition_point(|&e| e <= s).saturating_sub(1);
        self.levels[k.min(self.levels.len() - 1)]
    }
}

/// Renders a procedural band. Deterministic in `seed`.
pub fn procedural_shape(
    id: impl Into<String>,
    split: Split,
    seed: u64,
    params: &ShapeParams,
) -> Result<SourceShape> {
    params.validate()?;
    let axis = Axis::new(params.length, params.bend_degrees);
    let half = params.width / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let banding = Banding::new(&mut rng, -half, params.length + half);

    let steps = params.length.ceil().max(1.0) as usize;
    let samples: Vec<(f64, f64)> = (0..=steps)
        .map(|k| axis.point(params.length * k as f64 / steps as f64))
        .collect();
    let margin = half + 2.0;
    let min_x = samples.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - margin;
    let max_x = samples.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + margin;
    let min_y = samples.iter().map(|p| p.1).fold(f64::INFINITY, f64::min) - margin;
    let max_y = samples.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max) + margin;
    let origin = (min_x.floor(), min_y.floor());
    let width = (max_x.ceil() - origin.0) as usize + 1;
    let height = (max_y.ceil() - origin.1) as usize + 1;

    let mut body = BinaryMask::empty(width, height);
    let mut intensity = Grid::new(width, height, 0.0);
    let mut angles: Grid<Option<f64>> = Grid::new(width, height, None);
    for y in 0..height {
        for x in 0..width {
            let q = (origin.0 + x as f64, origin.1 + y as f64);
            let (s, d) = axis.nearest(q);
            if d > half {
                continue;
            }
            body.set(x, y, true);
            let edge = 1.0 - 0.35 * (d / half).powi(2);
            // Caps continue the banding past the axis ends.
            let along = if s <= 0.0 {
                -d
            } else if s >= params.length {
                params.length + d
            } else {
                s
            };
            let v = params.brightness * banding.level(along) * edge;
            intensity.set(x, y, v.clamp(0.0, 1.0));
            angles.set(x, y, Some(AxialAngle::wrap(axis.heading(s).to_degrees()).degrees()));
        }
    }

    let shape = SourceShape {
        id: id.into(),
        split,
        intensity,
        body,
        orientation: OrientationField::from_angles(&angles),
        medial_length: params.length,
        axis: samples
            .iter()
            .map(|p| (p.0 - origin.0, p.1 - origin.1))
            .collect(),
    };
    debug_assert!(shape.validate().is_ok());
    Ok(shape)
}

/// A bank of procedural shapes with `counts[k]` shapes in split `Split::ALL[k]`.
/// Ids are `"<split>-<nnn>"`.
pub fn procedural_bank(counts: [usize; 3], seed: u64) -> Result<Vec<SourceShape>> {
    procedural_bank_with(counts, seed, None)
}

/// As [`procedural_bank`]; with `fixed` every shape uses those parameters and
/// only the banding varies.
pub fn procedural_bank_with(
    counts: [usize; 3],
    seed: u64,
    fixed: Option<&ShapeParams>,
) -> Result<Vec<SourceShape>> {
    let mut bank = Vec::new();
    let mut stream = 0u64;
    for (split, &count) in Split::ALL.iter().zip(counts.iter()) {
        for k in 0..count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            let sampled = ShapeParams::sample(&mut rng);
            let params = fixed.copied().unwrap_or(sampled);
            let shape_seed = rng.random();
            bank.push(procedural_shape(
                format!("{split}-{k:03}"),
                *split,
                shape_seed,
                &params,
            )?);
        }
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::axial_distance_degrees;

    #[test]
    fn deterministic_in_seed() {
        let p = ShapeParams {
            bend_degrees: 40.0,
            ..ShapeParams::default()
        };
        let a = procedural_shape("a", Split::Train, 11, &p).unwrap();
        let b = procedural_shape("a", Split::Train, 11, &p).unwrap();
        assert_eq!(a, b);
        let c = procedural_shape("a", Split::Train, 12, &p).unwrap();
        assert_ne!(a.intensity, c.intensity);
        assert_eq!(a.body, c.body);
    }

    #[test]
    fn straight_band_is_horizontal_everywhere() {
        let s = procedural_shape("s", Split::Test, 1, &ShapeParams::default()).unwrap();
        assert!(s.body.count() > 400);
        for i in s.body.set_indices() {
            assert_eq!(s.orientation.angle_at(i).unwrap().degrees(), 0.0);
        }
        s.validate().unwrap();
    }

    #[test]
    fn semicircle_tangent_matches_arc() {
        let p = ShapeParams {
            length: 100.0,
            width: 8.0,
            bend_degrees: 180.0,
            brightness: 0.9,
        };
        let s = procedural_shape("c", Split::Val, 5, &p).unwrap();
        s.validate().unwrap();
        // Circle through the first, middle and last axis samples.
        let (a, b, c) = (s.axis[0], s.axis[s.axis.len() / 2], s.axis[s.axis.len() - 1]);
        let d = 2.0 * (a.0 * (b.1 - c.1) + b.0 * (c.1 - a.1) + c.0 * (a.1 - b.1));
        let sq = |p: (f64, f64)| p.0 * p.0 + p.1 * p.1;
        let ux = (sq(a) * (b.1 - c.1) + sq(b) * (c.1 - a.1) + sq(c) * (a.1 - b.1)) / d;
        let uy = (sq(a) * (c.0 - b.0) + sq(b) * (a.0 - c.0) + sq(c) * (b.0 - a.0)) / d;
        let mut checked = 0;
        let mut seen = Vec::new();
        for i in s.body.set_indices() {
            let (x, y) = s.body.coords(i);
            let (rx, ry) = (x as f64 - ux, y as f64 - uy);
            // Skip the rounded caps, which lie beyond the arc's diameter line.
            let chord_side = (rx * (c.1 - a.1) - ry * (c.0 - a.0)) * ((b.0 - ux) * (c.1 - a.1) - (b.1 - uy) * (c.0 - a.0));
            if chord_side <= 0.0 {
                continue;
            }
            let tangent = ry.atan2(rx).to_degrees() + 90.0;
            let got = s.orientation.angle_at(i).unwrap().degrees();
            assert!(axial_distance_degrees(got, tangent) <= 5.0, "pixel ({x},{y}): {got} vs {tangent}");
            checked += 1;
            seen.push(got);
        }
        assert!(checked > 500);
        // Orientation sweeps the whole half circle.
        let spread = seen.iter().cloned().fold(0.0, f64::max) - seen.iter().cloned().fold(180.0, f64::min);
        assert!(spread > 150.0);
    }

    #[test]
    fn rejects_degenerate_params() {
        let wide = ShapeParams {
            length: 20.0,
            width: 30.0,
            ..ShapeParams::default()
        };
        assert!(matches!(wide.validate(), Err(Error::InvalidParameter(_))));
        let tight = ShapeParams {
            length: 30.0,
            width: 16.0,
            bend_degrees: 180.0,
            ..ShapeParams::default()
        };
        assert!(tight.validate().is_err());
        let long = ShapeParams {
            length: 130.0,
            ..ShapeParams::default()
        };
        assert!(long.validate().is_err());
    }

    #[test]
    fn bank_ids_and_splits() {
        let bank = procedural_bank([3, 2, 2], 9).unwrap();
        assert_eq!(bank.len(), 7);
        assert_eq!(bank[0].id, "train-000");
        assert_eq!(bank[3].id, "val-000");
        assert_eq!(bank[6].split, Split::Test);
        for s in &bank {
            s.validate().unwrap();
        }
        assert_eq!(bank, procedural_bank([3, 2, 2], 9).unwrap());
    }
}
