//! Synthetic label volumes with known geometry and topology, plus slow
//! brute-force reference implementations used to cross-check the metrics.
//!
//! The oracles deliberately share no code with the fast paths they check,
//! except the percentile rule that defines HD95 itself.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::TissueLabel;
use crate::metrics::percentile_sorted;
use crate::metrics::Connectivity;
use crate::volume::{LabelVolume, Mask};

/// Largest grid (per axis) the brute-force oracles accept.
pub const ORACLE_MAX_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomShape {
    SolidBall { center: [f64; 3], radius: f64 },
    /// Spherical shell `inner < r <= outer`, enclosing one cavity.
    HollowSphere { center: [f64; 3], inner: f64, outer: f64 },
    /// Solid torus around the z axis through `center`.
    Torus { center: [f64; 3], major: f64, minor: f64 },
    /// Concentric brain-like layering with all seven tissue labels.
    NestedShells { center: [f64; 3], radius: f64 },
    /// Two disjoint solid balls.
    TwoComponents { centers: [[f64; 3]; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: PhantomShape,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// Label code used by single-label shapes.
    pub label: u8,
}

impl PhantomSpec {
    pub fn new(shape: PhantomShape, dims: [usize; 3]) -> Self {
        PhantomSpec { shape, dims, spacing: [1.0; 3], label: 1 }
    }

    pub fn with_spacing(mut self, spacing: [f64; 3]) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = label;
        self
    }

    /// Places the shape at the grid centre.
    pub fn centered(shape_ctor: impl FnOnce([f64; 3]) -> PhantomShape, dims: [usize; 3]) -> Self {
        let c = dims.map(|d| (d as f64 - 1.0) / 2.0);
        PhantomSpec::new(shape_ctor(c), dims)
    }

    /// Axis-aligned extents `(center, half_width)` that must fit the grid.
    fn extents(&self) -> Vec<([f64; 3], [f64; 3])> {
        match &self.shape {
            PhantomShape::SolidBall { center, radius } => vec![(*center, [*radius; 3])],
            PhantomShape::HollowSphere { center, outer, .. } => vec![(*center, [*outer; 3])],
            PhantomShape::Torus { center, major, minor } => {
                vec![(*center, [major + minor, major + minor, *minor])]
            }
            PhantomShape::NestedShells { center, radius } => vec![(*center, [*radius; 3])],
            PhantomShape::TwoComponents { centers, radius } => {
                centers.iter().map(|c| (*c, [*radius; 3])).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 3) {
            return Err(Error::Phantom(format!("dims {:?} too small", self.dims)));
        }
        if self.spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::Phantom(format!("spacing {:?} must be positive", self.spacing)));
        }
        let params_ok = match &self.shape {
            PhantomShape::SolidBall { radius, .. } => *radius >= 0.0,
            PhantomShape::HollowSphere { inner, outer, .. } => *inner >= 0.0 && outer > inner,
            PhantomShape::Torus { major, minor, .. } => *minor > 0.0 && major > minor,
            PhantomShape::NestedShells { radius, .. } => *radius >= 10.0,
            PhantomShape::TwoComponents { centers, radius } => {
                let d: f64 = (0..3).map(|a| (centers[0][a] - centers[1][a]).powi(2)).sum::<f64>().sqrt();
                *radius >= 0.0 && d > 2.0 * radius + 2.0
            }
        };
        if !params_ok {
            return Err(Error::Phantom(format!("invalid geometric parameters {:?}", self.shape)));
        }
        for (c, half) in self.extents() {
            for a in 0..3 {
                if c[a] - half[a] < 1.0 || c[a] + half[a] > self.dims[a] as f64 - 2.0 {
                    return Err(Error::Phantom(format!(
                        "shape overflows axis {a}: [{}, {}] must lie within [1, {}]",
                        c[a] - half[a],
                        c[a] + half[a],
                        self.dims[a] - 2
                    )));
                }
            }
        }
        Ok(())
    }
}

fn dist(p: [f64; 3], c: [f64; 3]) -> f64 {
    ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt()
}

/// Label for one voxel centre `p` (voxel units) of a nested-shells phantom.
///
/// Outer to inner: eCSF shell, GM shell, WM core. Inside the WM sit a
/// central VM ball (a cavity of the WM) and three small balls for SGM, CBM
/// and BSM.
fn nested_label(p: [f64; 3], c: [f64; 3], r: f64) -> TissueLabel {
    let d = dist(p, c);
    if d > r {
        return TissueLabel::Background;
    }
    if d > 0.85 * r {
        return TissueLabel::Ecsf;
    }
    if d > 0.7 * r {
        return TissueLabel::Gm;
    }
    if d <= 0.2 * r {
        return TissueLabel::Vm;
    }
    let inner = [
        (TissueLabel::Sgm, [0.42 * r, 0.0, 0.0], 0.14 * r),
        (TissueLabel::Cbm, [0.0, -0.42 * r, 0.0], 0.14 * r),
        (TissueLabel::Bsm, [0.0, 0.0, -0.42 * r], 0.12 * r),
    ];
    for (label, off, rad) in inner {
        if dist(p, [c[0] + off[0], c[1] + off[1], c[2] + off[2]]) <= rad {
            return label;
        }
    }
    TissueLabel::Wm
}

/// Voxelises a phantom: a voxel is set iff its centre satisfies the shape's
/// inequality.
pub fn generate(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let [nx, ny, nz] = spec.dims;
    let mut data = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = [i as f64, j as f64, k as f64];
                let on = |b: bool| if b { spec.label } else { 0 };
                let v = match &spec.shape {
                    PhantomShape::SolidBall { center, radius } => on(dist(p, *center) <= *radius),
                    PhantomShape::HollowSphere { center, inner, outer } => {
                        let d = dist(p, *center);
                        on(d > *inner && d <= *outer)
                    }
                    PhantomShape::Torus { center, major, minor } => {
                        let rho = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                        on((rho - major).powi(2) + (p[2] - center[2]).powi(2) <= minor * minor)
                    }
                    PhantomShape::NestedShells { center, radius } => nested_label(p, *center, *radius).code(),
                    PhantomShape::TwoComponents { centers, radius } => {
                        on(centers.iter().any(|c| dist(p, *c) <= *radius))
                    }
                };
                data.push(v);
            }
        }
    }
    LabelVolume::with_spacing(spec.dims, data, spec.spacing)
}

/// Euler characteristic implied by the shape class of a single-label phantom.
pub fn analytic_euler(shape: &PhantomShape) -> Option<i64> {
    match shape {
        PhantomShape::SolidBall { .. } => Some(1),
        PhantomShape::HollowSphere { .. } => Some(2),
        PhantomShape::Torus { .. } => Some(0),
        PhantomShape::TwoComponents { .. } => Some(2),
        PhantomShape::NestedShells { .. } => None,
    }
}

fn check_oracle_scope(dims: [usize; 3]) -> Result<()> {
    if dims.iter().any(|&d| d > ORACLE_MAX_DIM) {
        return Err(Error::OracleScope(format!("dims {dims:?} exceed the {ORACLE_MAX_DIM}^3 oracle cap")));
    }
    Ok(())
}

fn brute_surface(mask: &Mask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims();
    let mut out = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !mask.get(i, j, k) {
                    continue;
                }
                let faces = [
                    i == 0 || !mask.get(i - 1, j, k),
                    i + 1 == nx || !mask.get(i + 1, j, k),
                    j == 0 || !mask.get(i, j - 1, k),
                    j + 1 == ny || !mask.get(i, j + 1, k),
                    k == 0 || !mask.get(i, j, k - 1),
                    k + 1 == nz || !mask.get(i, j, k + 1),
                ];
                if faces.iter().any(|&f| f) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn world_dist(a: [usize; 3], b: [usize; 3], s: [f64; 3]) -> f64 {
    (0..3)
        .map(|i| ((a[i] as f64 - b[i] as f64) * s[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// All-pairs percentile surface distance; same pooling and percentile rule as
/// the metric.
pub fn brute_hausdorff(pred: &Mask, reference: &Mask, spacing: [f64; 3], percentile: f64) -> Result<f64> {
    check_oracle_scope(pred.dims())?;
    if pred.dims() != reference.dims() {
        return Err(Error::Shape { left: pred.dims(), right: reference.dims() });
    }
    let sp = brute_surface(pred);
    let sg = brute_surface(reference);
    if sp.is_empty() || sg.is_empty() {
        return Err(Error::EmptyMask("brute-force Hausdorff needs two non-empty masks"));
    }
    let nearest = |from: &[[usize; 3]], to: &[[usize; 3]]| -> Vec<f64> {
        from.iter()
            .map(|&a| to.iter().map(|&b| world_dist(a, b, spacing)).fold(f64::INFINITY, f64::min))
            .collect()
    };
    let mut d = nearest(&sp, &sg);
    d.extend(nearest(&sg, &sp));
    d.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&d, percentile))
}

/// Nearest-set-voxel distance by exhaustive scan.
pub fn brute_edt(mask: &Mask, spacing: [f64; 3]) -> Result<Vec<f64>> {
    check_oracle_scope(mask.dims())?;
    let sites: Vec<[usize; 3]> = mask.iter_set().collect();
    if sites.is_empty() {
        return Err(Error::EmptyMask("brute-force EDT needs a set voxel"));
    }
    let [nx, ny, nz] = mask.dims();
    let mut out = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let d = sites.iter().map(|&s| world_dist([i, j, k], s, spacing)).fold(f64::INFINITY, f64::min);
                out.push(d);
            }
        }
    }
    Ok(out)
}

/// Flood-fill component count.
pub fn brute_components(mask: &Mask, connectivity: Connectivity) -> Result<u64> {
    check_oracle_scope(mask.dims())?;
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let mut seen = vec![false; mask.data().len()];
    let mut count = 0;
    for start in mask.iter_set() {
        let sidx = mask.index(start[0], start[1], start[2]);
        if seen[sidx] {
            continue;
        }
        count += 1;
        seen[sidx] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            for o in &offsets {
                let q = [p[0] as isize + o[0], p[1] as isize + o[1], p[2] as isize + o[2]];
                if (0..3).any(|a| q[a] < 0 || q[a] as usize >= dims[a]) {
                    continue;
                }
                let q = q.map(|v| v as usize);
                let qi = mask.index(q[0], q[1], q[2]);
                if mask.data()[qi] && !seen[qi] {
                    seen[qi] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(count)
}

/// Enclosed background components: flood fill of the complement on a grid
/// padded by one voxel, minus the single outer component.
pub fn brute_cavities(mask: &Mask) -> Result<u64> {
    check_oracle_scope(mask.dims())?;
    let [nx, ny, nz] = mask.dims();
    let padded = Mask::from_fn([nx + 2, ny + 2, nz + 2], |i, j, k| {
        let inside = (1..=nx).contains(&i) && (1..=ny).contains(&j) && (1..=nz).contains(&k);
        !(inside && mask.get(i - 1, j - 1, k - 1))
    });
    // padding may push the grid past the cap; count directly
    let total = flood_count_unchecked(&padded, Connectivity::Six);
    Ok(total - 1)
}

fn flood_count_unchecked(mask: &Mask, connectivity: Connectivity) -> u64 {
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let mut seen = vec![false; mask.data().len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in mask.iter_set() {
        let sidx = mask.index(start[0], start[1], start[2]);
        if seen[sidx] {
            continue;
        }
        count += 1;
        seen[sidx] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for o in &offsets {
                let q = [p[0] as isize + o[0], p[1] as isize + o[1], p[2] as isize + o[2]];
                if (0..3).any(|a| q[a] < 0 || q[a] as usize >= dims[a]) {
                    continue;
                }
                let q = q.map(|v| v as usize);
                let qi = mask.index(q[0], q[1], q[2]);
                if mask.data()[qi] && !seen[qi] {
                    seen[qi] = true;
                    stack.push(q);
                }
            }
        }
    }
    count
}

/// Euler characteristic by enumerating the distinct cells of the cubical
/// complex in doubled coordinates.
pub fn brute_euler(mask: &Mask) -> Result<i64> {
    check_oracle_scope(mask.dims())?;
    let mut cells: HashSet<[usize; 3]> = HashSet::new();
    for [i, j, k] in mask.iter_set() {
        for dz in 0..3 {
            for dy in 0..3 {
                for dx in 0..3 {
                    cells.insert([2 * i + dx, 2 * j + dy, 2 * k + dz]);
                }
            }
        }
    }
    Ok(cells
        .iter()
        .map(|c| {
            let odd = c.iter().filter(|&&v| v % 2 == 1).count();
            if odd % 2 == 0 { 1 } else { -1 }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{betti_numbers, euler_characteristic, TopologySummary};

    #[test]
    fn zero_radius_ball_is_one_voxel() {
        let v = generate(&PhantomSpec::new(PhantomShape::SolidBall { center: [3.0, 3.0, 3.0], radius: 0.0 }, [7, 7, 7])).unwrap();
        assert_eq!(v.binary_mask(1).count(), 1);
        assert_eq!(v.get(3, 3, 3), Some(1));
    }

    #[test]
    fn hollow_sphere_topology() {
        let spec = PhantomSpec::centered(|c| PhantomShape::HollowSphere { center: c, inner: 3.0, outer: 5.0 }, [13; 3]);
        let m = generate(&spec).unwrap().binary_mask(1);
        assert_eq!(betti_numbers(&m).unwrap(), TopologySummary { bn0: 1, bn1: 0, bn2: 1, ec: 2 });
    }

    #[test]
    fn torus_topology() {
        for (major, minor) in [(4.0, 1.0), (5.0, 2.0), (7.5, 2.5)] {
            let n = (2.0 * (major + minor) + 5.0) as usize;
            let spec = PhantomSpec::centered(|c| PhantomShape::Torus { center: c, major, minor }, [n, n, 9]);
            let m = generate(&spec).unwrap().binary_mask(1);
            assert_eq!(betti_numbers(&m).unwrap(), TopologySummary { bn0: 1, bn1: 1, bn2: 0, ec: 0 }, "R={major} r={minor}");
        }
    }

    #[test]
    fn analytic_euler_matches_for_each_shape() {
        let shapes = [
            PhantomSpec::centered(|c| PhantomShape::SolidBall { center: c, radius: 4.0 }, [13; 3]),
            PhantomSpec::centered(|c| PhantomShape::HollowSphere { center: c, inner: 2.5, outer: 5.0 }, [13; 3]),
            PhantomSpec::centered(|c| PhantomShape::Torus { center: c, major: 4.0, minor: 1.5 }, [15, 15, 7]),
            PhantomSpec::new(
                PhantomShape::TwoComponents { centers: [[4.0, 4.0, 4.0], [12.0, 4.0, 4.0]], radius: 2.0 },
                [17, 9, 9],
            ),
        ];
        for spec in shapes {
            let m = generate(&spec).unwrap().binary_mask(1);
            let ec = euler_characteristic(&m);
            assert_eq!(Some(ec), analytic_euler(&spec.shape), "{:?}", spec.shape);
            assert_eq!(brute_euler(&m).unwrap(), ec);
        }
    }

    #[test]
    fn nested_shells_contain_all_labels() {
        let spec = PhantomSpec::centered(|c| PhantomShape::NestedShells { center: c, radius: 12.0 }, [29; 3]);
        let v = generate(&spec).unwrap();
        for l in TissueLabel::TISSUES {
            assert!(v.binary_mask(l.code()).count() > 0, "{l} missing");
        }
        // VM, SGM, CBM and BSM each carve a cavity out of WM
        let wm = betti_numbers(&v.binary_mask(TissueLabel::Wm.code())).unwrap();
        assert_eq!((wm.bn0, wm.bn1, wm.bn2), (1, 0, 4));
        let ecsf = betti_numbers(&v.binary_mask(TissueLabel::Ecsf.code())).unwrap();
        assert_eq!((ecsf.bn0, ecsf.bn1, ecsf.bn2), (1, 0, 1));
    }

    #[test]
    fn overflow_rejected() {
        let spec = PhantomSpec::new(PhantomShape::SolidBall { center: [2.0, 5.0, 5.0], radius: 2.0 }, [11; 3]);
        assert!(matches!(generate(&spec), Err(Error::Phantom(_))));
        let spec = PhantomSpec::centered(|c| PhantomShape::NestedShells { center: c, radius: 8.0 }, [21; 3]);
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn component_oracle_examples() {
        assert_eq!(brute_components(&Mask::empty([3, 3, 3]), Connectivity::Six).unwrap(), 0);
        let mut m = Mask::empty([3, 3, 3]);
        m.set(0, 0, 0, true);
        m.set(1, 1, 1, true);
        assert_eq!(brute_components(&m, Connectivity::TwentySix).unwrap(), 1);
        assert_eq!(brute_components(&m, Connectivity::Six).unwrap(), 2);
        assert!(brute_components(&Mask::empty([33, 1, 1]), Connectivity::Six).is_err());
    }

    #[test]
    fn hausdorff_oracle_examples() {
        let spec = PhantomSpec::centered(|c| PhantomShape::SolidBall { center: c, radius: 3.0 }, [11; 3]);
        let m = generate(&spec).unwrap().binary_mask(1);
        assert_eq!(brute_hausdorff(&m, &m, [1.0; 3], 95.0).unwrap(), 0.0);
        // a slab shifted along x: every surface voxel sees its copy d away
        let slab = Mask::from_fn([12, 4, 4], |i, _, _| i == 2);
        let moved = slab.translated([5, 0, 0]);
        assert_eq!(brute_hausdorff(&slab, &moved, [0.5, 1.0, 1.0], 95.0).unwrap(), 2.5);
        assert!(brute_hausdorff(&Mask::empty([33, 2, 2]), &Mask::empty([33, 2, 2]), [1.0; 3], 95.0).is_err());
    }
}
