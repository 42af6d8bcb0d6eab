//! Axial orientations and the double-angle embedding.
//!
//! An axial angle identifies `θ` and `θ + 180°`. Embedding it as
//! `(cos 2θ, sin 2θ)` removes the wraparound: a direction and its reverse map
//! to the same point, and averaging in the embedded space is well defined.
//!
//! Angles are in degrees, measured from the +x axis towards +y in image
//! coordinates (x to the right, y down). Vertical is 90°.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Grid};

/// An angle in `[0, 180)` degrees.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AxialAngle(f64);

impl AxialAngle {
    pub fn new(degrees: f64) -> Result<Self> {
        if degrees.is_finite() && (0.0..180.0).contains(&degrees) {
            Ok(Self(degrees))
        } else {
            Err(Error::InvalidParameter(format!(
                "axial angle must lie in [0, 180), got {degrees}"
            )))
        }
    }

    /// Reduces any finite angle modulo 180°.
    pub fn wrap(degrees: f64) -> Self {
        let mut t = degrees.rem_euclid(180.0);
        // rem_euclid can round up to exactly 180 for tiny negative inputs.
        if t >= 180.0 {
            t = 0.0;
        }
        Self(t)
    }

    #[inline]
    pub fn degrees(self) -> f64 {
        self.0
    }
}

/// Two-channel double-angle vector `(d0, d1) = (cos 2θ, sin 2θ)` for codec
/// outputs; arbitrary magnitude for prediction-like values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DoubleAngle {
    pub d0: f64,
    pub d1: f64,
}

impl DoubleAngle {
    pub const ZERO: DoubleAngle = DoubleAngle { d0: 0.0, d1: 0.0 };

    pub fn new(d0: f64, d1: f64) -> Self {
        Self { d0, d1 }
    }

    /// Embeds the axis of a direction vector. `v` and `-v` give bit-identical
    /// results because only the products `dx·dx`, `dy·dy` and `dx·dy` enter.
    pub fn from_direction(dx: f64, dy: f64) -> Result<Self> {
        let n = dx * dx + dy * dy;
        if n == 0.0 || !n.is_finite() {
            return Err(Error::UndefinedOrientation("zero direction vector"));
        }
        Ok(Self {
            d0: (dx * dx - dy * dy) / n,
            d1: 2.0 * dx * dy / n,
        })
    }

    pub fn magnitude(self) -> f64 {
        self.d0.hypot(self.d1)
    }

    pub fn scale(self, s: f64) -> Self {
        Self {
            d0: self.d0 * s,
            d1: self.d1 * s,
        }
    }
}

impl std::ops::Add for DoubleAngle {
    type Output = DoubleAngle;
    fn add(self, rhs: DoubleAngle) -> DoubleAngle {
        DoubleAngle {
            d0: self.d0 + rhs.d0,
            d1: self.d1 + rhs.d1,
        }
    }
}

impl std::ops::AddAssign for DoubleAngle {
    fn add_assign(&mut self, rhs: DoubleAngle) {
        self.d0 += rhs.d0;
        self.d1 += rhs.d1;
    }
}

/// `θ ↦ (cos 2θ, sin 2θ)`.
pub fn encode(theta: AxialAngle) -> DoubleAngle {
    encode_degrees(theta.degrees())
}

/// Encodes an arbitrary real angle; values 180° apart encode identically up
/// to rounding.
pub fn encode_degrees(degrees: f64) -> DoubleAngle {
    let (s, c) = (2.0 * degrees).to_radians().sin_cos();
    DoubleAngle { d0: c, d1: s }
}

/// `(d0, d1) ↦ ½·atan2(d1, d0) mod 180°`. Invariant to positive scaling.
pub fn decode(v: DoubleAngle) -> Result<AxialAngle> {
    if !(v.d0.is_finite() && v.d1.is_finite()) {
        return Err(Error::UndefinedOrientation("non-finite double-angle vector"));
    }
    if v.d0 == 0.0 && v.d1 == 0.0 {
        return Err(Error::UndefinedOrientation("zero double-angle vector"));
    }
    Ok(AxialAngle::wrap(0.5 * v.d1.atan2(v.d0).to_degrees()))
}

/// Distance between two axes on the half circle, in `[0, 90]`.
pub fn axial_distance(a: AxialAngle, b: AxialAngle) -> f64 {
    axial_distance_degrees(a.degrees(), b.degrees())
}

pub(crate) fn axial_distance_degrees(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Per-pixel double-angle vectors with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct OrientationField {
    pub vectors: Grid<DoubleAngle>,
    pub valid: BinaryMask,
}

impl OrientationField {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            vectors: Grid::new(width, height, DoubleAngle::ZERO),
            valid: BinaryMask::empty(width, height),
        }
    }

    pub fn new(vectors: Grid<DoubleAngle>, valid: BinaryMask) -> Result<Self> {
        vectors.ensure_same_dims(&valid, "orientation field validity")?;
        for i in valid.set_indices() {
            let v = vectors.as_slice()[i];
            if !(v.d0.is_finite() && v.d1.is_finite()) {
                return Err(Error::InvalidParameter(
                    "valid orientation pixels must be finite".into(),
                ));
            }
        }
        Ok(Self { vectors, valid })
    }

    /// Builds a field from per-pixel angles in degrees; `None` marks invalid.
    pub fn from_angles(angles: &Grid<Option<f64>>) -> Self {
        Self {
            vectors: angles.map(|a| a.map(encode_degrees).unwrap_or_default()),
            valid: angles.map(|a| a.is_some()),
        }
    }

    pub fn width(&self) -> usize {
        self.valid.width()
    }

    pub fn height(&self) -> usize {
        self.valid.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.valid.dims()
    }

    /// Decoded angle at a pixel; `None` when invalid or zero.
    pub fn angle_at(&self, i: usize) -> Option<AxialAngle> {
        if self.valid.as_slice()[i] {
            decode(self.vectors.as_slice()[i]).ok()
        } else {
            None
        }
    }

    /// Decoded angles for every pixel.
    pub fn angles(&self) -> Grid<Option<f64>> {
        Grid::from_fn(self.width(), self.height(), |x, y| {
            self.angle_at(self.valid.index(x, y)).map(AxialAngle::degrees)
        })
    }

    /// Restricts validity to `region`.
    pub fn masked(&self, region: &BinaryMask) -> Self {
        Self {
            vectors: self.vectors.clone(),
            valid: self.valid.and(region),
        }
    }
}

/// Resultant-vector mean axis of the valid pixels inside `region`.
pub fn region_mean_orientation(field: &OrientationField, region: &BinaryMask) -> Result<AxialAngle> {
    field.valid.ensure_same_dims(region, "region mean orientation")?;
    let mut sum = DoubleAngle::ZERO;
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, (&valid, &inside)) in field.valid.iter().zip(region.iter()).enumerate() {
        if valid && inside {
            let v = field.vectors.as_slice()[i];
            sum += v;
            total += v.magnitude();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedOrientation("no valid pixels in region"));
    }
    if sum.magnitude() <= 1e-9 * total.max(f64::MIN_POSITIVE) {
        return Err(Error::UndefinedOrientation("zero resultant in region"));
    }
    decode(sum)
}

/// Mean per-pixel axial distance between two fields over pixels valid in both
/// and inside `region`. Pixels whose vector is zero are skipped.
pub fn field_error(
    predicted: &OrientationField,
    truth: &OrientationField,
    region: &BinaryMask,
) -> Result<f64> {
    predicted.valid.ensure_same_dims(&truth.valid, "field error")?;
    predicted.valid.ensure_same_dims(region, "field error region")?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..region.len() {
        if !region.as_slice()[i] {
            continue;
        }
        if let (Some(p), Some(t)) = (predicted.angle_at(i), truth.angle_at(i)) {
            sum += axial_distance(p, t);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no jointly valid orientation pixels"));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ang(d: f64) -> AxialAngle {
        AxialAngle::new(d).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn uniform_field(w: usize, h: usize, degrees: f64) -> OrientationField {
        OrientationField::from_angles(&Grid::new(w, h, Some(degrees)))
    }

    #[test]
    fn encode_examples() {
        let v = encode(ang(0.0));
        assert!(close(v.d0, 1.0, 1e-15) && close(v.d1, 0.0, 1e-15));
        let v = encode(ang(90.0));
        assert!(close(v.d0, -1.0, 1e-15) && close(v.d1, 0.0, 1e-15));
        let v = encode(ang(45.0));
        assert!(close(v.d0, 0.0, 1e-15) && close(v.d1, 1.0, 1e-15));
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode(DoubleAngle::new(1.0, 0.0)).unwrap().degrees(), 0.0);
        assert!(close(decode(DoubleAngle::new(0.0, -1.0)).unwrap().degrees(), 135.0, 1e-12));
        assert!(close(decode(DoubleAngle::new(0.3, 0.3)).unwrap().degrees(), 22.5, 1e-12));
        assert!(matches!(
            decode(DoubleAngle::ZERO),
            Err(Error::UndefinedOrientation(_))
        ));
    }

    #[test]
    fn axial_angle_rejects_out_of_range() {
        assert!(AxialAngle::new(180.0).is_err());
        assert!(AxialAngle::new(-0.1).is_err());
        assert!(AxialAngle::new(f64::NAN).is_err());
        assert_eq!(AxialAngle::wrap(-1e-18).degrees(), 0.0);
        assert_eq!(AxialAngle::wrap(190.0).degrees(), 10.0);
    }

    #[test]
    fn axial_distance_examples() {
        assert_eq!(axial_distance(ang(37.0), ang(37.0)), 0.0);
        assert!(close(axial_distance(ang(179.0), ang(1.0)), 2.0, 1e-12));
        assert_eq!(axial_distance(ang(0.0), ang(90.0)), 90.0);
    }

    #[test]
    fn direction_and_negation_encode_identically() {
        let a = DoubleAngle::from_direction(0.3, -1.7).unwrap();
        let b = DoubleAngle::from_direction(-0.3, 1.7).unwrap();
        assert_eq!(a, b);
        let theta = (-1.7f64).atan2(0.3).to_degrees();
        let c = encode_degrees(theta);
        assert!(close(a.d0, c.d0, 1e-12) && close(a.d1, c.d1, 1e-12));
    }

    #[test]
    fn region_mean_examples() {
        let f = uniform_field(4, 4, 30.0);
        let region = Grid::new(4, 4, true);
        assert!(close(region_mean_orientation(&f, &region).unwrap().degrees(), 30.0, 1e-9));

        let f = OrientationField::from_angles(&Grid::from_vec(2, 1, vec![Some(10.0), Some(170.0)]).unwrap());
        let region = Grid::new(2, 1, true);
        let m = region_mean_orientation(&f, &region).unwrap().degrees();
        assert!(axial_distance_degrees(m, 0.0) < 1e-9);

        let f = OrientationField::from_angles(&Grid::from_vec(2, 1, vec![Some(0.0), Some(90.0)]).unwrap());
        assert!(matches!(
            region_mean_orientation(&f, &region),
            Err(Error::UndefinedOrientation(_))
        ));
    }

    #[test]
    fn region_mean_requires_valid_pixels() {
        let f = OrientationField::invalid(3, 3);
        assert!(region_mean_orientation(&f, &Grid::new(3, 3, true)).is_err());
    }

    #[test]
    fn field_error_examples() {
        let truth = uniform_field(8, 8, 0.0);
        let region = Grid::new(8, 8, true);
        assert_eq!(field_error(&truth, &truth, &region).unwrap(), 0.0);

        let pred = uniform_field(8, 8, 10.0);
        assert!(close(field_error(&pred, &truth, &region).unwrap(), 10.0, 1e-9));

        let alternating = Grid::from_fn(8, 8, |x, y| Some(if (x + y) % 2 == 0 { 10.0 } else { 170.0 }));
        let pred = OrientationField::from_angles(&alternating);
        assert!(close(field_error(&pred, &truth, &region).unwrap(), 10.0, 1e-9));

        let empty = BinaryMask::empty(8, 8);
        assert!(matches!(
            field_error(&pred, &truth, &empty),
            Err(Error::UndefinedMetric(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip(theta in 0.0f64..180.0) {
            let back = decode(encode(ang(theta))).unwrap().degrees();
            prop_assert!(axial_distance_degrees(back, theta) <= 1e-9);
        }

        #[test]
        fn decode_is_scale_invariant(theta in 0.0f64..180.0, s in 1e-3f64..1e3) {
            let v = encode(ang(theta));
            let a = decode(v).unwrap().degrees();
            let b = decode(v.scale(s)).unwrap().degrees();
            prop_assert!(axial_distance_degrees(a, b) <= 1e-9);
        }

        #[test]
        fn axial_distance_is_a_metric(a in 0.0f64..180.0, b in 0.0f64..180.0, c in 0.0f64..180.0) {
            let (a, b, c) = (ang(a), ang(b), ang(c));
            let ab = axial_distance(a, b);
            prop_assert!((0.0..=90.0).contains(&ab));
            prop_assert_eq!(ab, axial_distance(b, a));
            prop_assert!(ab <= axial_distance(a, c) + axial_distance(c, b) + 1e-9);
            prop_assert_eq!(axial_distance(a, a), 0.0);
        }

        #[test]
        fn region_mean_ignores_half_turns_and_order(
            angles in proptest::collection::vec(0.0f64..40.0, 1..20),
            flips in proptest::collection::vec(any::<bool>(), 20),
        ) {
            let n = angles.len();
            let base = Grid::from_vec(n, 1, angles.iter().map(|&a| Some(a)).collect()).unwrap();
            let flipped = Grid::from_vec(
                n,
                1,
                angles.iter().zip(&flips).map(|(&a, &f)| Some(if f { a + 180.0 } else { a })).collect(),
            ).unwrap();
            let reversed = Grid::from_vec(n, 1, angles.iter().rev().map(|&a| Some(a)).collect()).unwrap();
            let region = Grid::new(n, 1, true);
            let m0 = region_mean_orientation(&OrientationField::from_angles(&base), &region).unwrap();
            let m1 = region_mean_orientation(&OrientationField::from_angles(&flipped), &region).unwrap();
            let m2 = region_mean_orientation(&OrientationField::from_angles(&reversed), &region).unwrap();
            prop_assert!(axial_distance(m0, m1) < 1e-9);
            prop_assert!(axial_distance(m0, m2) < 1e-9);
        }
    }
}
