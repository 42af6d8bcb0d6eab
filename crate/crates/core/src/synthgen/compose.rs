//! Placing source shapes on a canvas and composing overlapping samples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, Grid, IntensityImage, LabelMap};
use crate::instseg::PredictionLayers;
use crate::orientation::{region_mean_orientation, AxialAngle, OrientationField};
use crate::raster::dilate;

use super::shape::SourceShape;

/// Radius of the contact-region dilation that produces the dilated-overlap target.
pub const DILATED_OVERLAP_RADIUS: usize = 2;

/// Rigid placement: rotate the crop about its centre, then put the centre at
/// `(tx, ty)` on the canvas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation_degrees: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Pose {
    pub fn new(rotation_degrees: f64, tx: f64, ty: f64) -> Self {
        Self {
            rotation_degrees,
            tx,
            ty,
        }
    }

    fn forward(&self, shape: &SourceShape, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = cos_sin(self.rotation_degrees);
        let (ox, oy) = crop_center(shape);
        let (dx, dy) = (p.0 - ox, p.1 - oy);
        (c * dx - s * dy + self.tx, s * dx + c * dy + self.ty)
    }

    fn inverse(&self, shape: &SourceShape, q: (f64, f64)) -> (f64, f64) {
        let (c, s) = cos_sin(self.rotation_degrees);
        let (ox, oy) = crop_center(shape);
        let (dx, dy) = (q.0 - self.tx, q.1 - self.ty);
        (c * dx + s * dy + ox, -s * dx + c * dy + oy)
    }
}

fn cos_sin(degrees: f64) -> (f64, f64) {
    let (s, c) = degrees.to_radians().sin_cos();
    (c, s)
}

fn crop_center(shape: &SourceShape) -> (f64, f64) {
    (
        (shape.width() as f64 - 1.0) / 2.0,
        (shape.height() as f64 - 1.0) / 2.0,
    )
}

/// A source shape resampled onto the canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacedShape {
    pub body: BinaryMask,
    /// Zero outside `body`.
    pub intensity: IntensityImage,
    /// Rotated axial orientation on `body`.
    pub angles: Grid<Option<f64>>,
}

/// True when every source body pixel centre lands at least one pixel inside
/// the canvas border, so nearest-neighbour resampling cannot clip the body.
pub fn fits(shape: &SourceShape, pose: &Pose, canvas: (usize, usize)) -> bool {
    let (w, h) = (canvas.0 as f64, canvas.1 as f64);
    shape.body.set_indices().all(|i| {
        let (x, y) = shape.body.coords(i);
        let (u, v) = pose.forward(shape, (x as f64, y as f64));
        u >= 1.0 && v >= 1.0 && u <= w - 2.0 && v <= h - 2.0
    })
}

/// Resamples a shape: nearest neighbour for the body and orientation
/// (orientation rotated by the pose angle), bilinear for intensity.
pub fn place(shape: &SourceShape, pose: &Pose, canvas: (usize, usize)) -> PlacedShape {
    let (w, h) = canvas;
    let mut body = BinaryMask::empty(w, h);
    let mut intensity = Grid::new(w, h, 0.0);
    let mut angles = Grid::new(w, h, None);

    // Canvas bounding box of the rotated crop.
    let corners = [
        (-0.5, -0.5),
        (shape.width() as f64 - 0.5, -0.5),
        (-0.5, shape.height() as f64 - 0.5),
        (shape.width() as f64 - 0.5, shape.height() as f64 - 0.5),
    ]
    .map(|p| pose.forward(shape, p));
    let clamp_x = |v: f64| v.clamp(0.0, (w - 1) as f64) as usize;
    let clamp_y = |v: f64| v.clamp(0.0, (h - 1) as f64) as usize;
    let x0 = clamp_x(corners.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor());
    let x1 = clamp_x(corners.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil());
    let y0 = clamp_y(corners.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor());
    let y1 = clamp_y(corners.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil());

    for y in y0..=y1 {
        for x in x0..=x1 {
            let (sx, sy) = pose.inverse(shape, (x as f64, y as f64));
            let (nx, ny) = (sx.round() as i64, sy.round() as i64);
            if shape.body.get_signed(nx, ny) != Some(&true) {
                continue;
            }
            body.set(x, y, true);
            let i = shape.body.index(nx as usize, ny as usize);
            let theta = shape
                .orientation
                .angle_at(i)
                .map(|a| AxialAngle::wrap(a.degrees() + pose.rotation_degrees).degrees());
            angles.set(x, y, theta);
            intensity.set(x, y, bilinear(&shape.intensity, sx, sy));
        }
    }
    PlacedShape {
        body,
        intensity,
        angles,
    }
}

fn bilinear(img: &IntensityImage, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xx: f64, yy: f64| *img.get_signed(xx as i64, yy as i64).unwrap_or(&0.0);
    let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1.0, y0) * fx;
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + at(x0 + 1.0, y0 + 1.0) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Per-instance facts the class-assignment rules need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub source_id: String,
    pub medial_length: f64,
    pub area: usize,
    pub centroid: (f64, f64),
    /// Resultant mean orientation over the whole placed body.
    pub mean_orientation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_ids: Vec<String>,
    pub poses: Vec<Pose>,
    pub seed: u64,
}

/// One composed sample with every target layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: IntensityImage,
    /// `0` background, `1` ch1, `2` ch2, `3` overlap. Only for pairs.
    pub semantic4: Option<LabelMap>,
    /// `0` background, `1` chromosome, `2` overlap.
    pub semantic3: LabelMap,
    pub dilated_overlap: BinaryMask,
    /// Valid on pixels covered by exactly one body.
    pub orientation: OrientationField,
    /// Placed bodies, overlap included.
    pub instances: Vec<BinaryMask>,
    pub meta: Vec<InstanceMeta>,
    pub provenance: Provenance,
}

impl SyntheticSample {
    pub fn dims(&self) -> (usize, usize) {
        self.semantic3.dims()
    }

    pub fn overlap(&self) -> BinaryMask {
        self.semantic3.mask_eq(2)
    }

    /// True when the bodies touch without sharing any pixel.
    pub fn is_touching_only(&self) -> bool {
        !self.overlap().any()
    }

    /// The ground-truth layers in the form the instance separation consumes.
    pub fn layers(&self) -> PredictionLayers {
        PredictionLayers::from_semantic3(&self.semantic3, self.dilated_overlap.clone(), self.orientation.clone())
            .expect("generated layers are consistent")
    }
}

/// Composes placed shapes. Fails when a body does not fit the canvas, when
/// any pixel is covered by three or more bodies, or when the bodies do not
/// form one touching or overlapping cluster.
pub fn compose(
    shapes: &[&SourceShape],
    poses: &[Pose],
    canvas: (usize, usize),
    seed: u64,
) -> Result<SyntheticSample> {
    if !(2..=5).contains(&shapes.len()) {
        return Err(Error::InvalidParameter(format!(
            "a composition takes 2 to 5 shapes, got {}",
            shapes.len()
        )));
    }
    if shapes.len() != poses.len() {
        return Err(Error::InvalidParameter(format!(
            "{} shapes but {} poses",
            shapes.len(),
            poses.len()
        )));
    }
    for (shape, pose) in shapes.iter().zip(poses) {
        if !fits(shape, pose, canvas) {
            return Err(Error::Precondition(format!(
                "shape {} does not fit the {}x{} canvas",
                shape.id, canvas.0, canvas.1
            )));
        }
    }
    let placed: Vec<PlacedShape> = shapes
        .iter()
        .zip(poses)
        .map(|(s, p)| place(s, p, canvas))
        .collect();
    compose_placed(shapes, poses, &placed, canvas, seed)
}

/// Convenience wrapper for exactly two shapes.
pub fn compose_pair(
    a: &SourceShape,
    b: &SourceShape,
    pose_a: Pose,
    pose_b: Pose,
    canvas: (usize, usize),
    seed: u64,
) -> Result<SyntheticSample> {
    compose(&[a, b], &[pose_a, pose_b], canvas, seed)
}

/// Contact between two bodies: their intersection when it is non-empty,
/// otherwise the pixels of either body 8-adjacent to the other.
fn contact(a: &BinaryMask, b: &BinaryMask) -> BinaryMask {
    let inter = a.and(b);
    if inter.any() {
        return inter;
    }
    let near_b = dilate(b, 1, Connectivity::Eight);
    let near_a = dilate(a, 1, Connectivity::Eight);
    a.and(&near_b).or(&b.and(&near_a))
}

fn compose_placed(
    shapes: &[&SourceShape],
    poses: &[Pose],
    placed: &[PlacedShape],
    canvas: (usize, usize),
    seed: u64,
) -> Result<SyntheticSample> {
    let (w, h) = canvas;
    let n = placed.len();
    let mut cover = Grid::new(w, h, 0u8);
    for p in placed {
        for i in p.body.set_indices() {
            cover.as_mut_slice()[i] += 1;
        }
    }
    if cover.iter().any(|&c| c >= 3) {
        return Err(Error::Precondition(
            "a pixel is covered by three or more bodies".into(),
        ));
    }

    // Contact graph must be connected.
    let mut contacts = BinaryMask::empty(w, h);
    let mut linked = vec![false; n];
    linked[0] = true;
    let mut adjacency = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = contact(&placed[i].body, &placed[j].body);
            if c.any() {
                adjacency[i][j] = true;
                adjacency[j][i] = true;
                contacts = contacts.or(&c);
            }
        }
    }
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if adjacency[i][j] && !linked[j] {
                linked[j] = true;
                stack.push(j);
            }
        }
    }
    if linked.iter().any(|&l| !l) {
        return Err(Error::Precondition(
            "bodies neither overlap nor touch".into(),
        ));
    }

    let mut image = Grid::new(w, h, 0.0);
    let mut angles: Grid<Option<f64>> = Grid::new(w, h, None);
    for p in placed {
        for i in p.body.set_indices() {
            image.as_mut_slice()[i] += p.intensity.as_slice()[i];
            if cover.as_slice()[i] == 1 {
                angles.as_mut_slice()[i] = p.angles.as_slice()[i];
            }
        }
    }
    for (v, &c) in image.as_mut_slice().iter_mut().zip(cover.iter()) {
        if c > 1 {
            *v /= c as f64;
        }
    }

    let semantic3 = cover.map(|&c| c.min(2));
    let semantic4 = (n == 2).then(|| {
        Grid::from_fn(w, h, |x, y| {
            match (*placed[0].body.get(x, y), *placed[1].body.get(x, y)) {
                (true, true) => 3,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 0,
            }
        })
    });

    let meta = shapes
        .iter()
        .zip(placed)
        .map(|(s, p)| {
            let field = OrientationField::from_angles(&p.angles);
            InstanceMeta {
                source_id: s.id.clone(),
                medial_length: s.medial_length,
                area: p.body.count(),
                centroid: p.body.centroid().unwrap_or((0.0, 0.0)),
                mean_orientation: region_mean_orientation(&field, &p.body)
                    .ok()
                    .map(AxialAngle::degrees),
            }
        })
        .collect();

    Ok(SyntheticSample {
        image,
        semantic4,
        semantic3,
        dilated_overlap: dilate(&contacts, DILATED_OVERLAP_RADIUS, Connectivity::Eight),
        orientation: OrientationField::from_angles(&angles),
        instances: placed.iter().map(|p| p.body.clone()).collect(),
        meta,
        provenance: Provenance {
            source_ids: shapes.iter().map(|s| s.id.clone()).collect(),
            poses: poses.to_vec(),
            seed,
        },
    })
}

/// Pose-sampling options for random pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairOptions {
    /// Touch without overlapping instead of overlapping.
    pub touching: bool,
    /// Minimum axial distance between the two bodies' mean orientations.
    pub min_separation: Option<f64>,
    pub max_attempts: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            touching: false,
            min_separation: None,
            max_attempts: 200,
        }
    }
}

fn random_anchor<R: Rng + ?Sized>(mask: &BinaryMask, rng: &mut R) -> Option<usize> {
    let n = mask.count();
    (n > 0).then(|| mask.set_indices().nth(rng.random_range(0..n)).unwrap())
}

/// Pose for `shape` that lands a random body pixel of it on canvas pixel `target`.
fn pose_onto<R: Rng + ?Sized>(shape: &SourceShape, rotation: f64, target: (usize, usize), rng: &mut R) -> Pose {
    let i = random_anchor(&shape.body, rng).expect("shapes have a body");
    let (bx, by) = shape.body.coords(i);
    let probe = Pose::new(rotation, 0.0, 0.0).forward(shape, (bx as f64, by as f64));
    Pose::new(
        rotation,
        (target.0 as f64 - probe.0).round(),
        (target.1 as f64 - probe.1).round(),
    )
}

fn first_pose<R: Rng + ?Sized>(canvas: (usize, usize), rng: &mut R) -> Pose {
    let jitter = (canvas.0.min(canvas.1) / 8).max(1) as f64;
    Pose::new(
        rng.random_range(0.0..360.0),
        (canvas.0 as f64 / 2.0 + rng.random_range(-jitter..=jitter)).round(),
        (canvas.1 as f64 / 2.0 + rng.random_range(-jitter..=jitter)).round(),
    )
}

/// Samples poses for two shapes until they overlap (or only touch, see
/// [`PairOptions::touching`]) inside the canvas.
pub fn sample_pair<R: Rng + ?Sized>(
    a: &SourceShape,
    b: &SourceShape,
    canvas: (usize, usize),
    options: &PairOptions,
    seed: u64,
    rng: &mut R,
) -> Result<SyntheticSample> {
    let mut last_reason = String::from("no attempt made");
    for _ in 0..options.max_attempts {
        let pose_a = first_pose(canvas, rng);
        if !fits(a, &pose_a, canvas) {
            last_reason = format!("shape {} does not fit", a.id);
            continue;
        }
        let placed_a = place(a, &pose_a, canvas);
        let target = placed_a.body.coords(random_anchor(&placed_a.body, rng).unwrap());
        let rotation_b = if options.touching {
            // Near-parallel so the pair reads as end-to-end or side-by-side.
            pose_a.rotation_degrees + rng.random_range(-15.0..15.0) + if rng.random_bool(0.5) { 180.0 } else { 0.0 }
        } else {
            rng.random_range(0.0..360.0)
        };
        let mut pose_b = pose_onto(b, rotation_b, target, rng);

        if options.touching {
            let direction = rng.random_range(0.0..std::f64::consts::TAU);
            let (dx, dy) = (direction.cos(), direction.sin());
            let start = pose_b;
            let mut found = None;
            for k in 1..=canvas.0.max(canvas.1) {
                let candidate = Pose::new(
                    start.rotation_degrees,
                    start.tx + (k as f64 * dx).round(),
                    start.ty + (k as f64 * dy).round(),
                );
                let placed_b = place(b, &candidate, canvas);
                if !placed_b.body.intersects(&placed_a.body) {
                    found = Some(candidate);
                    break;
                }
            }
            match found {
                Some(p) => pose_b = p,
                None => {
                    last_reason = "could not separate the pair".into();
                    continue;
                }
            }
        }

        if !fits(b, &pose_b, canvas) {
            last_reason = format!("shape {} does not fit", b.id);
            continue;
        }
        let placed_b = place(b, &pose_b, canvas);
        let overlapping = placed_a.body.intersects(&placed_b.body);
        if overlapping == options.touching {
            last_reason = "contact kind mismatch".into();
            continue;
        }
        let placed = [placed_a, placed_b];
        let sample = match compose_placed(&[a, b], &[pose_a, pose_b], &placed, canvas, seed) {
            Ok(s) => s,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        if let Some(min_sep) = options.min_separation {
            match separation(&sample) {
                Some(sep) if sep >= min_sep => {}
                _ => {
                    last_reason = "orientation separation too small".into();
                    continue;
                }
            }
        }
        return Ok(sample);
    }
    Err(Error::Composition {
        attempts: options.max_attempts,
        reason: last_reason,
    })
}

/// Axial distance between the first two instances' mean orientations.
pub fn separation(sample: &SyntheticSample) -> Option<f64> {
    let a = sample.meta.first()?.mean_orientation?;
    let b = sample.meta.get(1)?.mean_orientation?;
    Some(crate::orientation::axial_distance_degrees(a, b))
}

/// Samples a chain cluster: each shape overlaps its predecessor and no pixel
/// is covered three times.
pub fn sample_cluster<R: Rng + ?Sized>(
    shapes: &[&SourceShape],
    canvas: (usize, usize),
    max_attempts: usize,
    seed: u64,
    rng: &mut R,
) -> Result<SyntheticSample> {
    if !(2..=5).contains(&shapes.len()) {
        return Err(Error::InvalidParameter(format!(
            "a cluster takes 2 to 5 shapes, got {}",
            shapes.len()
        )));
    }
    let mut last_reason = String::from("no attempt made");
    'attempt: for _ in 0..max_attempts {
        let mut poses = vec![first_pose(canvas, rng)];
        if !fits(shapes[0], &poses[0], canvas) {
            continue;
        }
        let mut placed = vec![place(shapes[0], &poses[0], canvas)];
        for k in 1..shapes.len() {
            let prev = &placed[k - 1].body;
            let target = prev.coords(random_anchor(prev, rng).unwrap());
            let pose = pose_onto(shapes[k], rng.random_range(0.0..360.0), target, rng);
            if !fits(shapes[k], &pose, canvas) {
                last_reason = format!("shape {} does not fit", shapes[k].id);
                continue 'attempt;
            }
            poses.push(pose);
            placed.push(place(shapes[k], &pose, canvas));
        }
        match compose_placed(shapes, &poses, &placed, canvas, seed) {
            Ok(s) => return Ok(s),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::Composition {
        attempts: max_attempts,
        reason: last_reason,
    })
}
