//! Surface extraction, exact Euclidean distance transform and percentile
//! Hausdorff distance.
//!
//! The distance transform is the separable lower-envelope algorithm of
//! Felzenszwalb and Huttenlocher: one exact 1D squared transform per axis,
//! with anisotropic spacing folded into each pass.

use crate::error::{Error, Result};
use crate::volume::{linear_index, Mask};

/// Percentile used by the HD95 metric.
pub const HD_PERCENTILE: f64 = 95.0;

/// Dense grid of distances in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl DistanceMap {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[linear_index(self.dims, i, j, k)]
    }
}

const OFFSETS_6: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// Foreground voxels with at least one face neighbour in the background.
/// Out-of-grid neighbours count as background.
pub fn surface_voxels(mask: &Mask) -> Mask {
    let mut out = Mask::empty(mask.dims());
    for [i, j, k] in mask.iter_set() {
        let (i, j, k) = (i as isize, j as isize, k as isize);
        if OFFSETS_6.iter().any(|o| !mask.get_signed(i + o[0], j + o[1], k + o[2])) {
            out.set(i as usize, j as usize, k as usize, true);
        }
    }
    out
}

/// Exact 1D squared distance transform of sampled function `f`
/// (`f64::INFINITY` marks non-sites) with sample spacing `s`.
fn transform_line(f: &[f64], s: f64, out: &mut [f64], v: &mut Vec<usize>, z: &mut Vec<f64>) {
    v.clear();
    z.clear();
    let s2 = s * s;
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        let hq = fq + s2 * (q * q) as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.push(f64::NEG_INFINITY);
                break;
            };
            let hp = f[p] + s2 * (p * p) as f64;
            let x = (hq - hp) / (2.0 * s2 * (q - p) as f64);
            if x <= *z.last().unwrap() {
                v.pop();
                z.pop();
                continue;
            }
            v.push(q);
            z.push(x);
            break;
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < q as f64 {
            k += 1;
        }
        let d = (q as f64 - v[k] as f64) * s;
        *o = d * d + f[v[k]];
    }
}

/// Squared EDT of `sites` on a grid of `dims`; non-site voxels get the squared
/// distance to the nearest site, `INFINITY` if there is none.
pub(crate) fn squared_edt(sites: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let mut grid: Vec<f64> = sites.iter().map(|&b| if b { 0.0 } else { f64::INFINITY }).collect();
    let longest = nx.max(ny).max(nz);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = Vec::with_capacity(longest);
    let mut z = Vec::with_capacity(longest);

    // x rows are contiguous
    for row in grid.chunks_mut(nx) {
        line[..nx].copy_from_slice(row);
        transform_line(&line[..nx], spacing[0], row, &mut v, &mut z);
    }
    for k in 0..nz {
        for i in 0..nx {
            for j in 0..ny {
                line[j] = grid[linear_index(dims, i, j, k)];
            }
            transform_line(&line[..ny], spacing[1], &mut out[..ny], &mut v, &mut z);
            for j in 0..ny {
                grid[linear_index(dims, i, j, k)] = out[j];
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..nz {
                line[k] = grid[linear_index(dims, i, j, k)];
            }
            transform_line(&line[..nz], spacing[2], &mut out[..nz], &mut v, &mut z);
            for k in 0..nz {
                grid[linear_index(dims, i, j, k)] = out[k];
            }
        }
    }
    grid
}

/// Euclidean distance (mm) from every voxel centre to the nearest set voxel.
pub fn edt(mask: &Mask, spacing: [f64; 3]) -> Result<DistanceMap> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("distance transform needs at least one set voxel"));
    }
    check_spacing(spacing)?;
    let mut data = squared_edt(mask.data(), mask.dims(), spacing);
    data.iter_mut().for_each(|d| *d = d.sqrt());
    Ok(DistanceMap { dims: mask.dims(), data })
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().any(|&s| !s.is_finite() || s <= 0.0) {
        return Err(Error::InvalidInput(format!("spacing must be positive, got {spacing:?}")));
    }
    Ok(())
}

/// Linear-interpolation percentile of an ascending slice, index `p(n-1)/100`.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let h = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pooled directed surface distances `d(∂P→∂G) ∪ d(∂G→∂P)`.
///
/// Returns `None` when either mask is empty.
pub fn surface_distances(pred: &Mask, reference: &Mask, spacing: [f64; 3]) -> Result<Option<Vec<f64>>> {
    if pred.dims() != reference.dims() {
        return Err(Error::Shape { left: pred.dims(), right: reference.dims() });
    }
    check_spacing(spacing)?;
    if pred.is_empty() || reference.is_empty() {
        return Ok(None);
    }
    let sp = surface_voxels(pred);
    let sg = surface_voxels(reference);
    let (lo_p, hi_p) = sp.bounding_box().expect("non-empty mask has a surface");
    let (lo_g, hi_g) = sg.bounding_box().expect("non-empty mask has a surface");
    let lo = [0, 1, 2].map(|a| lo_p[a].min(lo_g[a]));
    let hi = [0, 1, 2].map(|a| hi_p[a].max(hi_g[a]));
    let crop = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);

    // Nearest sites and queries both lie inside the joint surface bounding
    // box, so the transform restricted to that box is exact.
    let cropped = |m: &Mask| -> Vec<bool> {
        let mut out = Vec::with_capacity(crop.iter().product());
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    out.push(m.get(i, j, k));
                }
            }
        }
        out
    };
    let cp = cropped(&sp);
    let cg = cropped(&sg);
    let to_g = squared_edt(&cg, crop, spacing);
    let to_p = squared_edt(&cp, crop, spacing);

    let mut dists = Vec::with_capacity(sp.count() + sg.count());
    dists.extend(cp.iter().zip(&to_g).filter(|(&s, _)| s).map(|(_, &d)| d.sqrt()));
    dists.extend(cg.iter().zip(&to_p).filter(|(&s, _)| s).map(|(_, &d)| d.sqrt()));
    Ok(Some(dists))
}

/// `p`-th percentile of the pooled surface distance multiset, in mm.
pub fn hausdorff_percentile(pred: &Mask, reference: &Mask, spacing: [f64; 3], p: f64) -> Result<Option<f64>> {
    Ok(surface_distances(pred, reference, spacing)?.map(|mut d| {
        d.sort_by(f64::total_cmp);
        percentile_sorted(&d, p)
    }))
}

/// 95th-percentile Hausdorff distance; `None` (MISSING) if either mask is empty.
pub fn hd95(pred: &Mask, reference: &Mask, spacing: [f64; 3]) -> Result<Option<f64>> {
    hausdorff_percentile(pred, reference, spacing, HD_PERCENTILE)
}
