//! Dense row-major 2-D grids and the raster aliases used throughout the crate.

use crate::error::{Error, Result};

/// A dense `width × height` grid stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Per-pixel boolean membership.
pub type BinaryMask = Grid<bool>;
/// Per-pixel segment label, `0` means unassigned.
pub type SegmentImage = Grid<u32>;
/// Per-pixel Euclidean distance in pixels.
pub type DistanceImage = Grid<f64>;
/// Per-pixel class code.
pub type LabelMap = Grid<u8>;
/// Grayscale intensities in `[0, 1]`.
pub type IntensityImage = Grid<f64>;

impl<T: Clone> Grid<T> {
    /// # Panics
    /// If either dimension is zero.
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width >= 1 && height >= 1, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.width, i / self.width)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    /// Signed lookup; `None` outside the grid.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> Option<&T> {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            None
        } else {
            Some(&self.data[y as usize * self.width + x as usize])
        }
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Grid<V> {
        assert_eq!(self.dims(), other.dims(), "grid dimensions differ");
        Grid {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn ensure_same_dims<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// In-bounds neighbours of pixel `i` under the given connectivity.
    pub fn neighbors(&self, i: usize, connectivity: Connectivity) -> Neighbors {
        let (x, y) = self.coords(i);
        Neighbors {
            x: x as i64,
            y: y as i64,
            width: self.width as i64,
            height: self.height as i64,
            offsets: connectivity.offsets(),
            k: 0,
        }
    }
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Grid::new(width, height, false)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |&a, &b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |&a, &b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |&a, &b| a && !b)
    }

    pub fn not(&self) -> BinaryMask {
        self.map(|&a| !a)
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(other.data.iter()).any(|(&a, &b)| a && b)
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data.iter().zip(other.data.iter()).all(|(&a, &b)| !a || b)
    }

    /// Indices of set pixels in row-major order.
    pub fn set_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Area-weighted centroid `(x, y)`, `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for i in self.set_indices() {
            let (x, y) = self.coords(i);
            sx += x as f64;
            sy += y as f64;
            n += 1;
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

impl<T: PartialEq> Grid<T> {
    pub fn mask_eq(&self, value: T) -> BinaryMask {
        self.map(|v| *v == value)
    }
}

impl SegmentImage {
    pub fn max_label(&self) -> u32 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn mask_of(&self, label: u32) -> BinaryMask {
        self.map(|&l| l == label)
    }

    /// Sorted distinct non-zero labels.
    pub fn labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.data.iter().copied().filter(|&l| l != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    }

    /// Renumber non-zero labels to `1..=K` in first-encounter row-major order.
    pub fn compact(&self) -> SegmentImage {
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        self.map(|&l| {
            if l == 0 {
                0
            } else {
                *remap.entry(l).or_insert_with(|| {
                    next += 1;
                    next
                })
            }
        })
    }

    pub fn foreground(&self) -> BinaryMask {
        self.map(|&l| l != 0)
    }
}

/// Pixel adjacency used for component analysis, dilation and growth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

const OFFSETS_4: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
const OFFSETS_8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

impl Connectivity {
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            Connectivity::Four => &OFFSETS_4,
            Connectivity::Eight => &OFFSETS_8,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

pub struct Neighbors {
    x: i64,
    y: i64,
    width: i64,
    height: i64,
    offsets: &'static [(i64, i64)],
    k: usize,
}

impl Iterator for Neighbors {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        while self.k < self.offsets.len() {
            let (dx, dy) = self.offsets[self.k];
            self.k += 1;
            let (nx, ny) = (self.x + dx, self.y + dy);
            if nx >= 0 && ny >= 0 && nx < self.width && ny < self.height {
                return Some((ny * self.width + nx) as usize);
            }
        }
        None
    }
}
