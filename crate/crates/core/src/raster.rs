//! Raster primitives behind the instance separation: connected components,
//! dilation, an exact Euclidean distance transform, plateau maxima, small
//! component removal and level-scheduled seeded growth.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::grid::{BinaryMask, Connectivity, DistanceImage, Grid, SegmentImage};

/// Labels connected components `1..=K` in first-encounter row-major order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> SegmentImage {
    let mut labels = Grid::new(mask.width(), mask.height(), 0u32);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.len() {
        if !mask.as_slice()[start] || labels.as_slice()[start] != 0 {
            continue;
        }
        next += 1;
        labels.as_mut_slice()[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in mask.neighbors(p, connectivity) {
                if mask.as_slice()[q] && labels.as_slice()[q] == 0 {
                    labels.as_mut_slice()[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    labels
}

/// Pixel count per label; index 0 counts unlabelled pixels.
pub fn label_areas(labels: &SegmentImage) -> Vec<usize> {
    let mut areas = vec![0usize; labels.max_label() as usize + 1];
    for &l in labels.iter() {
        areas[l as usize] += 1;
    }
    areas
}

/// Morphological dilation by `radius` unit steps. Connectivity 4 grows a
/// diamond, connectivity 8 a square.
pub fn dilate(mask: &BinaryMask, radius: usize, connectivity: Connectivity) -> BinaryMask {
    let mut current = mask.clone();
    let mut frontier: Vec<usize> = current.set_indices().collect();
    for _ in 0..radius {
        let mut next = Vec::new();
        for &p in &frontier {
            for q in mask.neighbors(p, connectivity) {
                if !current.as_slice()[q] {
                    current.as_mut_slice()[q] = true;
                    next.push(q);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    current
}

/// Exact Euclidean distance from every set pixel to the nearest unset pixel
/// centre. Pixels beyond the border count as unset.
pub fn distance_transform(mask: &BinaryMask) -> DistanceImage {
    // Pad by one background pixel on each side so every row and column has a
    // zero, then run the separable lower-envelope transform on squared
    // distances.
    const FAR: f64 = 1e20;
    let (w, h) = (mask.width() + 2, mask.height() + 2);
    let mut sq = vec![0.0f64; w * h];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if *mask.get(x, y) {
                sq[(y + 1) * w + x + 1] = FAR;
            }
        }
    }

    let n = w.max(h);
    let mut f = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0; n + 1];

    for y in 0..h {
        f[..w].copy_from_slice(&sq[y * w..(y + 1) * w]);
        lower_envelope(&f[..w], &mut d[..w], &mut v, &mut z);
        sq[y * w..(y + 1) * w].copy_from_slice(&d[..w]);
    }
    for x in 0..w {
        for y in 0..h {
            f[y] = sq[y * w + x];
        }
        lower_envelope(&f[..h], &mut d[..h], &mut v, &mut z);
        for y in 0..h {
            sq[y * w + x] = d[y];
        }
    }

    Grid::from_fn(mask.width(), mask.height(), |x, y| {
        sq[(y + 1) * w + x + 1].sqrt()
    })
}

/// One-dimensional squared distance transform of a sampled function.
fn lower_envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this never underflows.
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Plateau maxima of a distance image. A connected plateau of equal positive
/// values becomes one seed when no pixel adjacent to it is strictly larger.
/// Seeds are labelled `1..=K` in first-encounter row-major order.
pub fn local_maxima(dist: &DistanceImage, connectivity: Connectivity) -> SegmentImage {
    let mut labels = Grid::new(dist.width(), dist.height(), 0u32);
    let mut visited = vec![false; dist.len()];
    let values = dist.as_slice();
    let mut next = 0u32;
    let mut plateau = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..dist.len() {
        let v = values[start];
        if visited[start] || v <= 0.0 {
            continue;
        }
        plateau.clear();
        let mut is_max = true;
        visited[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            plateau.push(p);
            for q in dist.neighbors(p, connectivity) {
                let vq = values[q];
                if vq > v {
                    is_max = false;
                } else if vq == v && !visited[q] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
        if is_max {
            next += 1;
            for &p in &plateau {
                labels.as_mut_slice()[p] = next;
            }
        }
    }
    labels
}

/// Drops every connected component whose area is below `min_area`.
pub fn remove_small_components(
    mask: &BinaryMask,
    min_area: usize,
    connectivity: Connectivity,
) -> BinaryMask {
    if min_area == 0 {
        return mask.clone();
    }
    let labels = connected_components(mask, connectivity);
    let areas = label_areas(&labels);
    labels.map(|&l| l != 0 && areas[l as usize] >= min_area)
}

/// Result of [`grow_segments_traced`].
#[derive(Clone, Debug)]
pub struct Growth {
    pub segments: SegmentImage,
    /// Number of pairwise merges performed by the spurious-seed rule.
    pub merges: usize,
}

/// Grows seed segments over `allowed` following a descending level schedule.
///
/// See [`grow_segments_traced`].
pub fn grow_segments(
    seeds: &SegmentImage,
    allowed: &BinaryMask,
    dist: &DistanceImage,
) -> Result<SegmentImage> {
    grow_segments_traced(seeds, allowed, dist).map(|g| g.segments)
}

/// Level-scheduled seeded growth with spurious-seed merging.
///
/// Levels run from `ceil(max dist)` down to `0` in unit steps. At each level
/// every segment is repeatedly dilated by one pixel (8-connectivity) into
/// unassigned `allowed` pixels whose distance is at least the level; when two
/// segments claim the same pixel in one round the lower label wins. Once the
/// level is stable, adjacent segments merge when the smaller of their peak
/// distances is at most `level + 1`; the lower label survives and keeps the
/// larger peak. Parts of `allowed` no seed can reach receive fresh labels
/// above the largest seed label, so the output always partitions `allowed`.
pub fn grow_segments_traced(
    seeds: &SegmentImage,
    allowed: &BinaryMask,
    dist: &DistanceImage,
) -> Result<Growth> {
    allowed.ensure_same_dims(seeds, "grow_segments seeds")?;
    allowed.ensure_same_dims(dist, "grow_segments distance")?;
    for (i, (&l, &a)) in seeds.iter().zip(allowed.iter()).enumerate() {
        if l != 0 && !a {
            let (x, y) = seeds.coords(i);
            return Err(Error::Precondition(format!(
                "seed label {l} at ({x}, {y}) lies outside the allowed region"
            )));
        }
    }

    let mut labels = seeds.clone();
    let max_label = labels.max_label() as usize;
    let mut peak = vec![f64::NEG_INFINITY; max_label + 1];
    for (&l, &d) in labels.iter().zip(dist.iter()) {
        if l != 0 {
            peak[l as usize] = peak[l as usize].max(d);
        }
    }

    let top = allowed
        .set_indices()
        .map(|i| dist.as_slice()[i])
        .fold(0.0f64, f64::max)
        .ceil() as i64;

    let mut merges = 0;
    let mut parent: Vec<u32> = (0..=max_label as u32).collect();
    for level in (0..=top).rev() {
        let threshold = level as f64;
        let d = dist.as_slice();
        let a = allowed.as_slice();
        flood_rounds(&mut labels, |q| a[q] && d[q] >= threshold);

        let pairs = adjacent_pairs(&labels);
        let mut merged_any = false;
        for (x, y) in pairs {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            if rx == ry {
                continue;
            }
            let (px, py) = (peak[rx as usize], peak[ry as usize]);
            if px.min(py) <= threshold + 1.0 {
                let (keep, gone) = (rx.min(ry), rx.max(ry));
                parent[gone as usize] = keep;
                peak[keep as usize] = px.max(py);
                merges += 1;
                merged_any = true;
            }
        }
        if merged_any {
            for l in labels.as_mut_slice() {
                if *l != 0 {
                    *l = find(&mut parent, *l);
                }
            }
        }
    }

    let next = max_label as u32 + 1;
    label_unreached(&mut labels, allowed, next);
    Ok(Growth {
        segments: labels,
        merges,
    })
}

/// Grows existing segments over `allowed` without merging, then gives each
/// unreached component of `allowed` a fresh label. Contention: lower label wins.
pub fn fill_region(segments: &SegmentImage, allowed: &BinaryMask) -> Result<SegmentImage> {
    allowed.ensure_same_dims(segments, "fill_region")?;
    let mut labels = segments.clone();
    let a = allowed.as_slice();
    flood_rounds(&mut labels, |q| a[q]);
    let next = labels.max_label() + 1;
    label_unreached(&mut labels, allowed, next);
    Ok(labels)
}

fn label_unreached(labels: &mut SegmentImage, allowed: &BinaryMask, first_fresh: u32) {
    let unreached = allowed.zip_map(labels, |&a, &l| a && l == 0);
    if !unreached.any() {
        return;
    }
    let comps = connected_components(&unreached, Connectivity::Eight);
    for (l, &c) in labels.as_mut_slice().iter_mut().zip(comps.iter()) {
        if c != 0 {
            *l = first_fresh - 1 + c;
        }
    }
}

/// Synchronous one-pixel dilation rounds into eligible unassigned pixels until
/// nothing changes.
fn flood_rounds(labels: &mut SegmentImage, eligible: impl Fn(usize) -> bool) {
    let n = labels.len();
    let mut claim = vec![0u32; n];
    let mut frontier: Vec<usize> = (0..n)
        .filter(|&p| {
            labels.as_slice()[p] != 0
                && labels
                    .neighbors(p, Connectivity::Eight)
                    .any(|q| labels.as_slice()[q] == 0 && eligible(q))
        })
        .collect();
    let mut touched = Vec::new();
    while !frontier.is_empty() {
        touched.clear();
        for &p in &frontier {
            let l = labels.as_slice()[p];
            for q in labels.neighbors(p, Connectivity::Eight) {
                if labels.as_slice()[q] != 0 || !eligible(q) {
                    continue;
                }
                if claim[q] == 0 {
                    claim[q] = l;
                    touched.push(q);
                } else if l < claim[q] {
                    claim[q] = l;
                }
            }
        }
        for &q in &touched {
            labels.as_mut_slice()[q] = claim[q];
            claim[q] = 0;
        }
        std::mem::swap(&mut frontier, &mut touched);
    }
}

/// Distinct `(low, high)` label pairs that touch under 8-connectivity,
/// ascending.
pub fn adjacent_pairs(labels: &SegmentImage) -> BTreeSet<(u32, u32)> {
    const FORWARD: [(i64, i64); 4] = [(1, 0), (-1, 1), (0, 1), (1, 1)];
    let mut pairs = BTreeSet::new();
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let a = *labels.get(x, y);
            if a == 0 {
                continue;
            }
            for (dx, dy) in FORWARD {
                if let Some(&b) = labels.get_signed(x as i64 + dx, y as i64 + dy) {
                    if b != 0 && b != a {
                        pairs.insert((a.min(b), a.max(b)));
                    }
                }
            }
        }
    }
    pairs
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let up = parent[parent[x as usize] as usize];
        parent[x as usize] = up;
        x = up;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        Grid::from_fn(w, h, |x, y| rows[y].as_bytes()[x] == b'#')
    }

    /// Brute-force nearest background over the grid padded by one pixel.
    fn brute_distance(mask: &BinaryMask) -> DistanceImage {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        Grid::from_fn(mask.width(), mask.height(), |x, y| {
            if !*mask.get(x, y) {
                return 0.0;
            }
            let mut best = i64::MAX;
            for by in -1..=h {
                for bx in -1..=w {
                    let background = match mask.get_signed(bx, by) {
                        Some(&b) => !b,
                        None => true,
                    };
                    if background {
                        let d = (bx - x as i64).pow(2) + (by - y as i64).pow(2);
                        best = best.min(d);
                    }
                }
            }
            (best as f64).sqrt()
        })
    }

    #[test]
    fn components_empty_and_full() {
        let empty = BinaryMask::empty(4, 3);
        let cc = connected_components(&empty, Connectivity::Eight);
        assert_eq!(cc.max_label(), 0);
        let full = Grid::new(3, 3, true);
        let cc = connected_components(&full, Connectivity::Four);
        assert!(cc.iter().all(|&l| l == 1));
    }

    #[test]
    fn diagonal_pixels_depend_on_connectivity() {
        let m = mask_from(&["#.", ".#"]);
        assert_eq!(connected_components(&m, Connectivity::Four).max_label(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).max_label(), 1);
    }

    #[test]
    fn components_labelled_in_scan_order() {
        let m = mask_from(&["..#", "#..", "..#"]);
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(*cc.get(2, 0), 1);
        assert_eq!(*cc.get(0, 1), 2);
        assert_eq!(*cc.get(2, 2), 3);
    }

    #[test]
    fn dilate_radius_zero_is_identity() {
        let m = mask_from(&["#..#", ".##.", "...."]);
        assert_eq!(dilate(&m, 0, Connectivity::Eight), m);
        assert_eq!(dilate(&m, 0, Connectivity::Four), m);
    }

    #[test]
    fn dilate_plus_and_square() {
        let mut m = BinaryMask::empty(5, 5);
        m.set(2, 2, true);
        let plus = dilate(&m, 1, Connectivity::Four);
        assert_eq!(plus, mask_from(&[".....", "..#..", ".###.", "..#..", "....."]));

        let mut m = BinaryMask::empty(7, 7);
        m.set(3, 3, true);
        let sq = dilate(&m, 2, Connectivity::Eight);
        // Chebyshev distance oracle.
        for y in 0..7i64 {
            for x in 0..7i64 {
                let cheb = (x - 3).abs().max((y - 3).abs());
                assert_eq!(*sq.get(x as usize, y as usize), cheb <= 2);
            }
        }
        assert_eq!(sq.count(), 25);
    }

    #[test]
    fn distance_transform_small_cases() {
        let empty = BinaryMask::empty(5, 4);
        assert!(distance_transform(&empty).iter().all(|&d| d == 0.0));

        let mut single = BinaryMask::empty(5, 5);
        single.set(1, 3, true);
        let d = distance_transform(&single);
        assert_eq!(*d.get(1, 3), 1.0);
        assert_eq!(d.iter().filter(|&&v| v != 0.0).count(), 1);

        let full = Grid::new(5, 5, true);
        let d = distance_transform(&full);
        assert_eq!(*d.get(2, 2), 3.0);
        assert_eq!(*d.get(0, 0), 1.0);
        assert_eq!(*d.get(4, 2), 1.0);
        assert_eq!(d, brute_distance(&full));
    }

    #[test]
    fn distance_transform_matches_brute_force_on_shapes() {
        let m = mask_from(&[
            "..........",
            ".#######..",
            ".########.",
            "..######..",
            "...#####..",
            "....###...",
            "......#...",
        ]);
        assert_eq!(distance_transform(&m), brute_distance(&m));
    }

    #[test]
    fn single_peak_one_seed() {
        let m = mask_from(&[".......", ".#####.", ".#####.", ".#####.", "......."]);
        let seeds = local_maxima(&distance_transform(&m), Connectivity::Eight);
        assert_eq!(seeds.max_label(), 1);
    }

    #[test]
    fn two_equal_peaks_two_seeds() {
        let m = mask_from(&["###...###", "###...###", "###...###"]);
        let seeds = local_maxima(&distance_transform(&m), Connectivity::Eight);
        assert_eq!(seeds.max_label(), 2);
    }

    #[test]
    fn dumbbell_gives_one_seed_per_blob() {
        let m = mask_from(&[
            ".............",
            ".#####.#####.",
            ".#####.#####.",
            ".###########.",
            ".#####.#####.",
            ".#####.#####.",
            ".............",
        ]);
        let dist = distance_transform(&m);
        let seeds = local_maxima(&dist, Connectivity::Eight);
        // Brute-force: a pixel is a strict maximum when it exceeds every neighbour.
        let mut strict = Vec::new();
        for i in 0..dist.len() {
            let v = dist.as_slice()[i];
            if v > 0.0 && dist.neighbors(i, Connectivity::Eight).all(|q| dist.as_slice()[q] < v) {
                strict.push(dist.coords(i));
            }
        }
        assert_eq!(strict, vec![(3, 3), (9, 3)]);
        assert_eq!(seeds.max_label(), 2);
        assert_eq!(*seeds.get(3, 3), 1);
        assert_eq!(*seeds.get(9, 3), 2);
        assert_eq!(seeds.iter().filter(|&&l| l != 0).count(), 2);
    }

    #[test]
    fn remove_small_keeps_boundary_area() {
        let m = mask_from(&["###.....", "........", "..######", "..######", "..######", "........"]);
        assert_eq!(remove_small_components(&m, 0, Connectivity::Eight), m);
        let kept = remove_small_components(&m, 9, Connectivity::Eight);
        assert_eq!(kept.count(), 18);
        assert!(!*kept.get(0, 0));
        // Exactly min_area survives.
        let kept = remove_small_components(&m, 3, Connectivity::Eight);
        assert_eq!(kept, m);
        let kept = remove_small_components(&m, 4, Connectivity::Eight);
        assert_eq!(kept.count(), 18);
    }

    #[test]
    fn grow_single_seed_fills_region() {
        let m = mask_from(&["........", ".######.", ".######.", ".######.", "........"]);
        let dist = distance_transform(&m);
        let seeds = local_maxima(&dist, Connectivity::Eight);
        let grown = grow_segments(&seeds, &m, &dist).unwrap();
        assert_eq!(grown.foreground(), m);
        assert_eq!(grown.labels(), vec![1]);
    }

    #[test]
    fn grow_two_components_stay_separate() {
        let m = mask_from(&["###...####", "###...####", "###...####"]);
        let dist = distance_transform(&m);
        let seeds = local_maxima(&dist, Connectivity::Eight);
        let grown = grow_segments(&seeds, &m, &dist).unwrap();
        let cc = connected_components(&m, Connectivity::Eight);
        assert_eq!(grown.compact(), cc);
    }

    #[test]
    fn grow_rejects_seed_outside_allowed() {
        let allowed = mask_from(&["##.", "##."]);
        let mut seeds = Grid::new(3, 2, 0u32);
        seeds.set(2, 0, 1);
        let dist = distance_transform(&allowed);
        assert!(matches!(
            grow_segments(&seeds, &allowed, &dist),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dumbbell_keeps_two_segments() {
        // Peaks of 3 joined at level 1: neither peak is within 1 of the
        // contact level, so both survive.
        let m = mask_from(&[
            ".............",
            ".#####.#####.",
            ".#####.#####.",
            ".###########.",
            ".#####.#####.",
            ".#####.#####.",
            ".............",
        ]);
        let dist = distance_transform(&m);
        let seeds = local_maxima(&dist, Connectivity::Eight);
        let growth = grow_segments_traced(&seeds, &m, &dist).unwrap();
        assert_eq!(growth.merges, 0);
        assert_eq!(growth.segments.labels(), vec![1, 2]);
        assert_eq!(growth.segments.foreground(), m);
    }

    #[test]
    fn fill_region_assigns_unreached_components() {
        let allowed = mask_from(&["###..##", "###..##"]);
        let mut seeds = Grid::new(7, 2, 0u32);
        seeds.set(0, 0, 4);
        let filled = fill_region(&seeds, &allowed).unwrap();
        assert_eq!(*filled.get(2, 1), 4);
        assert_eq!(*filled.get(6, 1), 5);
        assert_eq!(filled.foreground(), allowed);
    }
}
