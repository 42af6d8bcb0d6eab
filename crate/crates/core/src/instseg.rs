//! Orientation-based instance separation.
//!
//! The pipeline runs, in order:
//!
//! 1. [`clean_overlap`] drops small overlap speckles.
//! 2. [`seed_and_grow`] seeds the distance-transform maxima of the chromosome
//!    layer outside the dilated overlap, grows them with the spurious-seed
//!    merge, then fills the whole chromosome layer.
//! 3. [`orientation_merge`] joins neighbouring segments with similar
//!    orientation whose contact is away from any overlap.
//! 4. Segments below `min_segment_area` are dropped.
//! 5. [`resolve_overlap_adjacency`] merges segments around each overlap region
//!    until at most two remain.
//! 6. [`attach_overlaps`] adds each overlap region to its adjacent segments.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, LabelMap, SegmentImage};
use crate::orientation::{axial_distance, region_mean_orientation, AxialAngle, OrientationField};
use crate::raster::{
    adjacent_pairs, connected_components, dilate, distance_transform, fill_region, grow_segments_traced,
    label_areas, local_maxima, remove_small_components,
};

/// The five per-pixel layers the separation consumes.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionLayers {
    pub orientation: OrientationField,
    pub dilated_overlap: BinaryMask,
    pub background: BinaryMask,
    pub chromosome: BinaryMask,
    pub overlap: BinaryMask,
}

impl PredictionLayers {
    /// Splits a 3-class map (`0` background, `1` chromosome, `2` overlap).
    pub fn from_semantic3(
        semantic3: &LabelMap,
        dilated_overlap: BinaryMask,
        orientation: OrientationField,
    ) -> Result<Self> {
        if let Some(&c) = semantic3.iter().find(|&&c| c > 2) {
            return Err(Error::InvalidParameter(format!(
                "class code {c} outside the 3-class alphabet"
            )));
        }
        let layers = Self {
            orientation,
            dilated_overlap,
            background: semantic3.mask_eq(0),
            chromosome: semantic3.mask_eq(1),
            overlap: semantic3.mask_eq(2),
        };
        layers.validate()?;
        Ok(layers)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.chromosome.dims()
    }

    pub fn semantic3(&self) -> LabelMap {
        self.chromosome
            .zip_map(&self.overlap, |&c, &o| if o { 2 } else { u8::from(c) })
    }

    /// Same dimensions everywhere; background, chromosome and overlap
    /// partition the canvas.
    pub fn validate(&self) -> Result<()> {
        let c = &self.chromosome;
        c.ensure_same_dims(&self.background, "background layer")?;
        c.ensure_same_dims(&self.overlap, "overlap layer")?;
        c.ensure_same_dims(&self.dilated_overlap, "dilated overlap layer")?;
        c.ensure_same_dims(&self.orientation.valid, "orientation layer")?;
        for i in 0..c.len() {
            let n = u8::from(self.background.as_slice()[i])
                + u8::from(c.as_slice()[i])
                + u8::from(self.overlap.as_slice()[i]);
            if n != 1 {
                let (x, y) = c.coords(i);
                return Err(Error::Precondition(format!(
                    "class layers do not partition the canvas at ({x}, {y})"
                )));
            }
        }
        Ok(())
    }
}

/// Ordered instance masks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InstanceSet {
    pub masks: Vec<BinaryMask>,
}

impl InstanceSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegParams {
    pub min_overlap_area: usize,
    pub min_segment_area: usize,
    /// Degrees, at most 90.
    pub orientation_merge_threshold: f64,
    pub near_overlap_radius: usize,
    pub merge_band_width: usize,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            min_overlap_area: 8,
            min_segment_area: 12,
            orientation_merge_threshold: 20.0,
            near_overlap_radius: 3,
            merge_band_width: 2,
        }
    }
}

impl SegParams {
    pub fn validate(&self) -> Result<()> {
        let t = self.orientation_merge_threshold;
        if !(0.0..=90.0).contains(&t) {
            return Err(Error::InvalidParameter(format!(
                "orientation_merge_threshold {t} outside [0, 90]"
            )));
        }
        Ok(())
    }
}

/// An overlap region that did not end up between exactly two segments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapFlag {
    /// Region label in scan order over the cleaned overlap.
    pub region: u32,
    pub area: usize,
    pub adjacent_segments: usize,
}

/// Counters describing one run, written next to the instance files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub seeds: usize,
    pub fallback_seeding: bool,
    pub growth_merges: usize,
    pub segments_after_growth: usize,
    pub orientation_merges: usize,
    pub small_segments_removed: usize,
    pub overlap_regions: usize,
    pub adjacency_merges: usize,
    pub flagged_overlaps: Vec<OverlapFlag>,
    pub instances: usize,
}

/// Removes overlap components smaller than `min_overlap_area` (8-connected).
pub fn clean_overlap(overlap: &BinaryMask, params: &SegParams) -> BinaryMask {
    remove_small_components(overlap, params.min_overlap_area, Connectivity::Eight)
}

/// Output of [`seed_and_grow`].
#[derive(Clone, Debug)]
pub struct Seeding {
    pub segments: SegmentImage,
    pub seeds: usize,
    pub merges: usize,
    /// Set when nothing of the chromosome layer lies outside the dilated
    /// overlap, so each chromosome component became one segment.
    pub fallback: bool,
}

/// Seeds at the distance-transform maxima of `chromosome ∧ ¬dilated_overlap`,
/// level-scheduled growth inside that region, then growth without merging
/// over the whole chromosome layer.
pub fn seed_and_grow(chromosome: &BinaryMask, dilated_overlap: &BinaryMask) -> Result<Seeding> {
    chromosome.ensure_same_dims(dilated_overlap, "seed_and_grow")?;
    let interior = chromosome.and_not(dilated_overlap);
    if !interior.any() {
        let segments = connected_components(chromosome, Connectivity::Eight);
        return Ok(Seeding {
            seeds: segments.max_label() as usize,
            segments,
            merges: 0,
            fallback: chromosome.any(),
        });
    }
    let dist = distance_transform(&interior);
    let seeds = local_maxima(&dist, Connectivity::Eight);
    let growth = grow_segments_traced(&seeds, &interior, &dist)?;
    Ok(Seeding {
        seeds: seeds.max_label() as usize,
        segments: fill_region(&growth.segments, chromosome)?,
        merges: growth.merges,
        fallback: false,
    })
}

/// For every pixel, the distinct non-zero labels in its closed 3×3
/// neighbourhood, grouped by label pair: the pixels where the two segments'
/// one-pixel dilations meet.
fn contact_pixels(labels: &SegmentImage) -> BTreeMap<(u32, u32), Vec<usize>> {
    let mut out: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    let mut seen = Vec::with_capacity(9);
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            seen.clear();
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if let Some(&l) = labels.get_signed(x as i64 + dx, y as i64 + dy) {
                        if l != 0 && !seen.contains(&l) {
                            seen.push(l);
                        }
                    }
                }
            }
            if seen.len() < 2 {
                continue;
            }
            seen.sort_unstable();
            let i = labels.index(x, y);
            for a in 0..seen.len() {
                for b in a + 1..seen.len() {
                    out.entry((seen[a], seen[b])).or_default().push(i);
                }
            }
        }
    }
    out
}

fn relabel(labels: &mut SegmentImage, from: u32, to: u32) {
    for l in labels.as_mut_slice() {
        if *l == from {
            *l = to;
        }
    }
}

fn segment_mean(labels: &SegmentImage, label: u32, field: &OrientationField) -> Option<AxialAngle> {
    region_mean_orientation(field, &labels.mask_of(label)).ok()
}

/// Mean orientation of `label` within `width` pixels of the contact, or of
/// the whole segment when the band has no usable orientation.
fn band_mean(
    labels: &SegmentImage,
    label: u32,
    contact: &BinaryMask,
    width: usize,
    field: &OrientationField,
) -> Option<AxialAngle> {
    let segment = labels.mask_of(label);
    let band = dilate(contact, width, Connectivity::Eight).and(&segment);
    region_mean_orientation(field, &band)
        .ok()
        .or_else(|| region_mean_orientation(field, &segment).ok())
}

/// Repeatedly merges the first adjacent pair, in ascending label order, whose
/// contact avoids `near_zone`, includes a labelled pixel outside `seam`, and whose
/// boundary-band mean orientations are within the threshold. The lower label
/// survives. Returns the merge count.
pub fn orientation_merge(
    segments: &SegmentImage,
    orientation: &OrientationField,
    near_zone: &BinaryMask,
    seam: &BinaryMask,
    params: &SegParams,
) -> Result<(SegmentImage, usize)> {
    segments.ensure_same_dims(near_zone, "orientation_merge near zone")?;
    segments.ensure_same_dims(seam, "orientation_merge seam")?;
    segments.ensure_same_dims(&orientation.valid, "orientation_merge orientation")?;
    let mut labels = segments.clone();
    let mut merges = 0;
    // Pairs already rejected stay rejected until one of them changes.
    let mut rejected: BTreeSet<(u32, u32)> = BTreeSet::new();
    loop {
        let adjacent = adjacent_pairs(&labels);
        let contacts = contact_pixels(&labels);
        let mut chosen = None;
        for &(a, b) in &adjacent {
            if rejected.contains(&(a, b)) {
                continue;
            }
            let pixels = &contacts[&(a, b)];
            let off_seam = pixels.iter().filter(|&&i| labels.as_slice()[i] != 0 && !seam.as_slice()[i]).count();
            let qualifies = !pixels.iter().any(|&i| near_zone.as_slice()[i]) && off_seam > 0 && {
                let mut contact = BinaryMask::empty(labels.width(), labels.height());
                for &i in pixels {
                    contact.as_mut_slice()[i] = true;
                }
                let w = params.merge_band_width;
                match (
                    band_mean(&labels, a, &contact, w, orientation),
                    band_mean(&labels, b, &contact, w, orientation),
                ) {
                    (Some(ta), Some(tb)) => axial_distance(ta, tb) <= params.orientation_merge_threshold,
                    _ => false,
                }
            };
            if qualifies {
                chosen = Some((a, b));
                break;
            }
            rejected.insert((a, b));
        }
        let Some((a, b)) = chosen else {
            return Ok((labels, merges));
        };
        relabel(&mut labels, b, a);
        rejected.retain(|&(x, y)| x != a && y != a && x != b && y != b);
        merges += 1;
    }
}

/// Clears segments smaller than `min_area`; returns how many were removed.
pub fn remove_small_segments(segments: &SegmentImage, min_area: usize) -> (SegmentImage, usize) {
    let areas = label_areas(segments);
    let removed = areas
        .iter()
        .enumerate()
        .skip(1)
        .filter(|&(_, &a)| a > 0 && a < min_area)
        .count();
    (segments.map(|&l| if areas[l as usize] < min_area { 0 } else { l }), removed)
}

/// Labels of segments 8-adjacent to (or inside) `region`.
fn adjacent_labels(labels: &SegmentImage, region: &BinaryMask) -> Vec<u32> {
    let mut out = BTreeSet::new();
    for i in region.set_indices() {
        let l = labels.as_slice()[i];
        if l != 0 {
            out.insert(l);
        }
        for q in labels.neighbors(i, Connectivity::Eight) {
            let l = labels.as_slice()[q];
            if l != 0 {
                out.insert(l);
            }
        }
    }
    out.into_iter().collect()
}

/// For each 8-connected overlap region in scan order, merges the adjacent
/// segments with the closest whole-segment mean orientations until at most
/// two are adjacent. Undefined orientations compare as infinitely far; ties
/// take the lowest label pair. Returns the merge count.
pub fn resolve_overlap_adjacency(
    segments: &SegmentImage,
    overlap: &BinaryMask,
    orientation: &OrientationField,
) -> Result<(SegmentImage, usize)> {
    segments.ensure_same_dims(overlap, "resolve_overlap_adjacency")?;
    let regions = connected_components(overlap, Connectivity::Eight);
    let mut labels = segments.clone();
    let mut merges = 0;
    for r in 1..=regions.max_label() {
        let region = regions.mask_of(r);
        loop {
            let adjacent = adjacent_labels(&labels, &region);
            if adjacent.len() <= 2 {
                break;
            }
            let means: Vec<Option<AxialAngle>> = adjacent
                .iter()
                .map(|&l| segment_mean(&labels, l, orientation))
                .collect();
            let mut best = (f64::INFINITY, adjacent[0], adjacent[1]);
            let mut found = false;
            for i in 0..adjacent.len() {
                for j in i + 1..adjacent.len() {
                    let d = match (means[i], means[j]) {
                        (Some(a), Some(b)) => axial_distance(a, b),
                        _ => f64::INFINITY,
                    };
                    if !found || d < best.0 {
                        best = (d, adjacent[i], adjacent[j]);
                        found = true;
                    }
                }
            }
            relabel(&mut labels, best.2, best.1);
            merges += 1;
        }
    }
    Ok((labels, merges))
}

/// One instance per segment in ascending label order, each extended by its
/// adjacent overlap regions. Regions with other than two adjacent segments
/// are flagged; those with none are dropped.
pub fn attach_overlaps(segments: &SegmentImage, overlap: &BinaryMask) -> Result<(InstanceSet, Vec<OverlapFlag>)> {
    segments.ensure_same_dims(overlap, "attach_overlaps")?;
    let labels = segments.labels();
    let mut masks: Vec<BinaryMask> = labels.iter().map(|&l| segments.mask_of(l)).collect();
    let regions = connected_components(overlap, Connectivity::Eight);
    let mut flags = Vec::new();
    for r in 1..=regions.max_label() {
        let region = regions.mask_of(r);
        let adjacent = adjacent_labels(segments, &region);
        if adjacent.len() != 2 {
            flags.push(OverlapFlag {
                region: r,
                area: region.count(),
                adjacent_segments: adjacent.len(),
            });
        }
        for l in adjacent {
            let k = labels.binary_search(&l).expect("adjacent label exists");
            masks[k] = masks[k].or(&region);
        }
    }
    Ok((InstanceSet { masks }, flags))
}

/// Runs the whole separation.
pub fn segment_instances(layers: &PredictionLayers, params: &SegParams) -> Result<(InstanceSet, Diagnostics)> {
    params.validate()?;
    layers.validate()?;
    let mut diag = Diagnostics::default();

    let overlap = clean_overlap(&layers.overlap, params);
    // Speckles removed from the overlap are treated as chromosome.
    let chromosome = layers.chromosome.or(&layers.overlap.and_not(&overlap));
    if !chromosome.any() {
        return Ok((InstanceSet::default(), diag));
    }

    let seeding = seed_and_grow(&chromosome, &layers.dilated_overlap)?;
    diag.seeds = seeding.seeds;
    diag.fallback_seeding = seeding.fallback;
    diag.growth_merges = seeding.merges;
    diag.segments_after_growth = seeding.segments.labels().len();

    let seam = remove_small_components(&layers.dilated_overlap, params.min_overlap_area, Connectivity::Eight);
    let near_zone = dilate(&overlap, params.near_overlap_radius, Connectivity::Eight);
    let (segments, merges) = orientation_merge(&seeding.segments, &layers.orientation, &near_zone, &seam, params)?;
    diag.orientation_merges = merges;

    let (segments, removed) = remove_small_segments(&segments, params.min_segment_area);
    diag.small_segments_removed = removed;

    diag.overlap_regions = connected_components(&overlap, Connectivity::Eight).max_label() as usize;
    let (segments, merges) = resolve_overlap_adjacency(&segments, &overlap, &layers.orientation)?;
    diag.adjacency_merges = merges;

    let (instances, flags) = attach_overlaps(&segments, &overlap)?;
    diag.flagged_overlaps = flags;
    diag.instances = instances.len();
    Ok((instances, diag))
}
