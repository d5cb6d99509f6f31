//! Dense label volumes, binary masks and voxel-to-world transforms.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSchema;

/// A point in world space, millimetres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Homogeneous 4x4 voxel-index to world-mm transform, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine(pub [[f64; 4]; 4]);

impl Default for Affine {
    fn default() -> Self {
        Affine::identity()
    }
}

impl Affine {
    pub fn identity() -> Self {
        Affine::from_scale_translation([1.0; 3], [0.0; 3])
    }

    pub fn from_scale_translation(scale: [f64; 3], translation: [f64; 3]) -> Self {
        let mut m = [[0.0; 4]; 4];
        for i in 0..3 {
            m[i][i] = scale[i];
            m[i][3] = translation[i];
        }
        m[3][3] = 1.0;
        Affine(m)
    }

    /// Builds an affine from the three NIfTI `srow` rows.
    pub fn from_rows(rows: [[f64; 4]; 3]) -> Self {
        Affine([rows[0], rows[1], rows[2], [0.0, 0.0, 0.0, 1.0]])
    }

    pub fn rows(&self) -> [[f64; 4]; 3] {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn apply(&self, p: [f64; 3]) -> Point3 {
        let m = &self.0;
        let r = |i: usize| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2] + m[i][3];
        Point3::new(r(0), r(1), r(2))
    }

    /// Euclidean norms of the columns of the 3x3 linear block.
    pub fn column_norms(&self) -> [f64; 3] {
        let m = &self.0;
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            *o = (m[0][j] * m[0][j] + m[1][j] * m[1][j] + m[2][j] * m[2][j]).sqrt();
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Affine) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

#[inline]
pub(crate) fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

fn check_dims(dims: [usize; 3]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidVolume(format!("dims must be positive, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidVolume(format!("dims {dims:?} overflow")))
}

/// Dense 3D label grid. Voxel `(i, j, k)` lives at `i + nx * (j + ny * k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    dims: [usize; 3],
    data: Vec<u8>,
    spacing: [f64; 3],
    affine: Affine,
}

impl LabelVolume {
    /// Spacing is taken from the column norms of the affine.
    pub fn new(dims: [usize; 3], data: Vec<u8>, affine: Affine) -> Result<Self> {
        let n = check_dims(dims)?;
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "data length {} does not match dims {dims:?} ({n} voxels)",
                data.len()
            )));
        }
        if !affine.is_finite() {
            return Err(Error::InvalidVolume("affine has non-finite entries".into()));
        }
        let spacing = affine.column_norms();
        if spacing.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidVolume(format!("degenerate affine, column norms {spacing:?}")));
        }
        Ok(LabelVolume { dims, data, spacing, affine })
    }

    /// Axis-aligned volume with origin at voxel (0, 0, 0).
    pub fn with_spacing(dims: [usize; 3], data: Vec<u8>, spacing: [f64; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::InvalidVolume(format!("spacing must be positive, got {spacing:?}")));
        }
        LabelVolume::new(dims, data, Affine::from_scale_translation(spacing, [0.0; 3]))
    }

    pub fn filled(dims: [usize; 3], value: u8, affine: Affine) -> Result<Self> {
        let n = check_dims(dims)?;
        LabelVolume::new(dims, vec![value; n], affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Affine {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Option<u8> {
        (i < self.dims[0] && j < self.dims[1] && k < self.dims[2])
            .then(|| self.data[linear_index(self.dims, i, j, k)])
    }

    pub fn world_coords(&self, index: [usize; 3]) -> Result<Point3> {
        if (0..3).any(|a| index[a] >= self.dims[a]) {
            return Err(Error::OutOfBounds { index, dims: self.dims });
        }
        Ok(self.affine.apply([index[0] as f64, index[1] as f64, index[2] as f64]))
    }

    /// World position of a fractional voxel index (e.g. a centroid).
    pub fn world_coords_f(&self, index: [f64; 3]) -> Point3 {
        self.affine.apply(index)
    }

    pub fn binary_mask(&self, code: u8) -> Mask {
        Mask {
            dims: self.dims,
            data: self.data.iter().map(|&v| v == code).collect(),
        }
    }

    /// Rejects any voxel code the schema does not know about.
    pub fn validate_codes(&self, schema: &LabelSchema) -> Result<()> {
        let known = schema.known_table();
        match self.data.iter().find(|&&v| !known[v as usize]) {
            Some(&code) => Err(Error::UnknownLabel { code }),
            None => Ok(()),
        }
    }

    /// True when dims match and affines agree within `tol`.
    pub fn same_grid(&self, other: &LabelVolume, tol: f64) -> bool {
        self.dims == other.dims && self.affine.max_abs_diff(&other.affine) <= tol
    }
}

/// Binary voxel grid over the same index layout as [`LabelVolume`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    dims: [usize; 3],
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(dims: [usize; 3]) -> Self {
        Mask { dims, data: vec![false; dims[0] * dims[1] * dims[2]] }
    }

    pub fn from_vec(dims: [usize; 3], data: Vec<bool>) -> Result<Self> {
        let n = check_dims(dims)?;
        if data.len() != n {
            return Err(Error::InvalidVolume(format!(
                "mask length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        Ok(Mask { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Mask { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        linear_index(self.dims, i, j, k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[linear_index(self.dims, i, j, k)]
    }

    /// Like [`Mask::get`] but treats anything outside the grid as background.
    #[inline]
    pub fn get_signed(&self, i: isize, j: isize, k: isize) -> bool {
        if i < 0 || j < 0 || k < 0 {
            return false;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        i < self.dims[0] && j < self.dims[1] && k < self.dims[2] && self.get(i, j, k)
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = linear_index(self.dims, i, j, k);
        self.data[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Inclusive `(min, max)` voxel corners of the set voxels.
    pub fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        let [nx, ny, _] = self.dims;
        for (idx, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let p = [idx % nx, (idx / nx) % ny, idx / (nx * ny)];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            any = true;
        }
        any.then_some((lo, hi))
    }

    /// Iterator over `(i, j, k)` of set voxels in storage order.
    pub fn iter_set(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [nx, ny, _] = self.dims;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(idx, _)| [idx % nx, (idx / nx) % ny, idx / (nx * ny)])
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.data.iter().zip(&other.data).filter(|(&a, &b)| a && b).count()
    }

    pub fn complement(&self) -> Mask {
        Mask { dims: self.dims, data: self.data.iter().map(|&b| !b).collect() }
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.dims != other.dims {
            return Err(Error::Shape { left: self.dims, right: other.dims });
        }
        Ok(Mask {
            dims: self.dims,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a || b).collect(),
        })
    }

    /// Shifts the mask by an integer offset; voxels leaving the grid are dropped.
    pub fn translated(&self, offset: [isize; 3]) -> Mask {
        let mut out = Mask::empty(self.dims);
        for [i, j, k] in self.iter_set() {
            let p = [i as isize + offset[0], j as isize + offset[1], k as isize + offset[2]];
            if (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a]) {
                out.set(p[0] as usize, p[1] as usize, p[2] as usize, true);
            }
        }
        out
    }
}
