//! Euler characteristic and Betti numbers of voxel sets, viewed as the union
//! of closed unit cubes.
//!
//! Foreground components use 26-connectivity and background components use
//! 6-connectivity, the pairing under which component counts agree with the
//! cubical complex `V - E + F - C`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{TissueLabel, TopologyTargets};
use crate::volume::{linear_index, Mask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbours.
    Six,
    /// Face, edge and vertex neighbours.
    TwentySix,
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Neighbours that precede a voxel in storage order.
    fn backward_offsets(self) -> Vec<[isize; 3]> {
        self.offsets()
            .into_iter()
            .filter(|o| o[2] < 0 || (o[2] == 0 && (o[1] < 0 || (o[1] == 0 && o[0] < 0))))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub bn0: u64,
    pub bn1: u64,
    pub bn2: u64,
    pub ec: i64,
}

/// Per-vertex Euler contribution of each 2x2x2 voxel configuration.
///
/// Each lattice point owns its vertex, the three edges, three faces and one
/// cube extending from it in the positive directions. All of them are
/// determined by the eight voxels meeting at that point; bit
/// `dx + 2 dy + 4 dz` is the voxel at offset `(dx-1, dy-1, dz-1)`.
fn euler_lut() -> &'static [i8; 256] {
    static LUT: OnceLock<[i8; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0i8; 256];
        for (config, slot) in lut.iter_mut().enumerate() {
            let any = |pred: &dyn Fn(usize, usize, usize) -> bool| {
                (0..8).any(|b| config & (1 << b) != 0 && pred(b & 1, (b >> 1) & 1, (b >> 2) & 1))
            };
            let v = (config != 0) as i8;
            let e = any(&|dx, _, _| dx == 1) as i8 + any(&|_, dy, _| dy == 1) as i8 + any(&|_, _, dz| dz == 1) as i8;
            let f = any(&|dx, dy, _| dx == 1 && dy == 1) as i8
                + any(&|dx, _, dz| dx == 1 && dz == 1) as i8
                + any(&|_, dy, dz| dy == 1 && dz == 1) as i8;
            let c = (config & 0x80 != 0) as i8;
            *slot = v - e + f - c;
        }
        lut
    })
}

/// Euler characteristic `V - E + F - C` of the union of closed voxel cubes.
pub fn euler_characteristic(mask: &Mask) -> i64 {
    let Some((lo, hi)) = mask.bounding_box() else {
        return 0;
    };
    let lut = euler_lut();
    let mut ec = 0i64;
    for pz in lo[2]..=hi[2] + 1 {
        for py in lo[1]..=hi[1] + 1 {
            for px in lo[0]..=hi[0] + 1 {
                let (x, y, z) = (px as isize, py as isize, pz as isize);
                let mut config = 0usize;
                for b in 0..8 {
                    let (dx, dy, dz) = ((b & 1) as isize, ((b >> 1) & 1) as isize, ((b >> 2) & 1) as isize);
                    if mask.get_signed(x - 1 + dx, y - 1 + dy, z - 1 + dz) {
                        config |= 1 << b;
                    }
                }
                ec += lut[config] as i64;
            }
        }
    }
    ec
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect() }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Two-pass union-find labelling of the `on` voxels of a grid.
fn label(on: &[bool], dims: [usize; 3], conn: Connectivity) -> UnionFind {
    let mut uf = UnionFind::new(on.len());
    let back = conn.backward_offsets();
    let [nx, ny, nz] = dims;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = linear_index(dims, i, j, k);
                if !on[idx] {
                    continue;
                }
                for o in &back {
                    let (ni, nj, nk) = (i as isize + o[0], j as isize + o[1], k as isize + o[2]);
                    if ni < 0 || nj < 0 || nk < 0 || ni as usize >= nx || nj as usize >= ny {
                        continue;
                    }
                    let nidx = linear_index(dims, ni as usize, nj as usize, nk as usize);
                    if on[nidx] {
                        uf.union(idx as u32, nidx as u32);
                    }
                }
            }
        }
    }
    uf
}

/// Extracts the sub-grid `[lo, hi]` (inclusive) of a mask.
fn crop(mask: &Mask, lo: [usize; 3], hi: [usize; 3]) -> (Vec<bool>, [usize; 3]) {
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
    let mut out = Vec::with_capacity(dims.iter().product());
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            for i in lo[0]..=hi[0] {
                out.push(mask.get(i, j, k));
            }
        }
    }
    (out, dims)
}

/// Number of connected foreground components.
pub fn count_components(mask: &Mask, conn: Connectivity) -> u64 {
    let Some((lo, hi)) = mask.bounding_box() else {
        return 0;
    };
    let (on, dims) = crop(mask, lo, hi);
    let mut uf = label(&on, dims, conn);
    (0..on.len()).filter(|&i| on[i] && uf.find(i as u32) == i as u32).count() as u64
}

/// Number of 6-connected background components enclosed by the foreground,
/// i.e. not reaching the grid boundary.
pub fn count_cavities(mask: &Mask) -> u64 {
    let Some((lo, hi)) = mask.bounding_box() else {
        return 0;
    };
    // Background outside the bounding box is connected to the grid boundary,
    // so a one-voxel margin around the box isolates every cavity.
    let dims = mask.dims();
    let lo = lo.map(|v| v.saturating_sub(1));
    let hi = [0, 1, 2].map(|a| (hi[a] + 1).min(dims[a] - 1));
    let (fg, cdims) = crop(mask, lo, hi);
    let bg: Vec<bool> = fg.iter().map(|&b| !b).collect();
    let mut uf = label(&bg, cdims, Connectivity::Six);

    let [nx, ny, nz] = cdims;
    let mut touches = vec![false; bg.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = linear_index(cdims, i, j, k);
                let on_border = i == 0 || j == 0 || k == 0 || i == nx - 1 || j == ny - 1 || k == nz - 1;
                if bg[idx] && on_border {
                    let r = uf.find(idx as u32) as usize;
                    touches[r] = true;
                }
            }
        }
    }
    (0..bg.len())
        .filter(|&i| bg[i] && uf.find(i as u32) == i as u32 && !touches[i])
        .count() as u64
}

/// Betti numbers from component counts and the Euler characteristic.
pub fn betti_numbers(mask: &Mask) -> Result<TopologySummary> {
    let ec = euler_characteristic(mask);
    let bn0 = count_components(mask, Connectivity::TwentySix);
    let bn2 = count_cavities(mask);
    let bn1 = bn0 as i64 + bn2 as i64 - ec;
    if bn1 < 0 {
        return Err(Error::Topology(format!(
            "bn1 = bn0 + bn2 - ec = {bn0} + {bn2} - {ec} is negative"
        )));
    }
    Ok(TopologySummary { bn0, bn1: bn1 as u64, bn2, ec })
}

/// `|EC(pred) - target(label)|` with the fixed anatomical targets.
pub fn euler_difference(pred: &Mask, label: TissueLabel, targets: &TopologyTargets) -> u64 {
    (euler_characteristic(pred) - targets.target(label)).unsigned_abs()
}
