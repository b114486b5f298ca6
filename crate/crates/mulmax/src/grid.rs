//! ν-ary grids on the unit cube, the 2^d third-shifted dyadic grids, and
//! lattice-general cube enumeration for brute-force oracles.
//!
//! All geometry is integer: a cube is identified by (grid, level, offset)
//! and realized as a half-open box of finest-lattice cells. With shifted
//! grids enabled the lattice has 3·ν^L_max cells per side so that the
//! ±1/3 shifts land on exact cell boundaries.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Which cube family a cube belongs to.
///
/// `Shifted(mask)` is the dyadic grid with shift α ∈ {0,1/3}^d encoded by
/// the bitmask (bit i set ⇔ α_i = 1/3) and per-level sign (−1)^level.
/// `Shifted(0)` coincides with `Standard`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GridId {
    Standard,
    Shifted(u8),
    Lattice,
}

impl Serialize for GridId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GridId::Standard => s.serialize_str("standard"),
            GridId::Shifted(m) => s.serialize_str(&format!("shifted:{m}")),
            GridId::Lattice => s.serialize_str("lattice"),
        }
    }
}

/// A cube of some grid. For `Lattice` cubes, `level` holds the sidelength
/// in cells and `offset` the corner cell, since lattice-general cubes have
/// no tree level.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Cube {
    pub grid_id: GridId,
    pub level: u32,
    pub offset: Vec<u32>,
}

/// Half-open box of finest-lattice cells, `[lo, hi)` per axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBox {
    pub lo: Vec<u32>,
    pub hi: Vec<u32>,
}

impl LatticeBox {
    pub fn d(&self) -> usize {
        self.lo.len()
    }

    pub fn ncells(&self) -> u64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| (h - l) as u64)
            .product()
    }

    pub fn contains(&self, other: &LatticeBox) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .zip(other.lo.iter().zip(&other.hi))
            .all(|((&l, &h), (&ol, &oh))| l <= ol && oh <= h)
    }

    pub fn intersect(&self, other: &LatticeBox) -> Option<LatticeBox> {
        let mut lo = Vec::with_capacity(self.d());
        let mut hi = Vec::with_capacity(self.d());
        for i in 0..self.d() {
            let l = self.lo[i].max(other.lo[i]);
            let h = self.hi[i].min(other.hi[i]);
            if l >= h {
                return None;
            }
            lo.push(l);
            hi.push(h);
        }
        Some(LatticeBox { lo, hi })
    }

    /// Row-major global indices of the cells in this box.
    pub fn cells(&self, resolution: u32) -> Vec<usize> {
        let d = self.d();
        let mut out = Vec::with_capacity(self.ncells() as usize);
        let mut idx = self.lo.clone();
        loop {
            let mut flat = 0usize;
            for i in 0..d {
                flat = flat * resolution as usize + idx[i] as usize;
            }
            out.push(flat);
            // odometer increment over the box extents
            let mut axis = d;
            while axis > 0 {
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.hi[axis] {
                    break;
                }
                idx[axis] = self.lo[axis];
                if axis == 0 {
                    return out;
                }
            }
        }
    }
}

/// Enumeration scope for cube families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeScope {
    StandardGrid,
    ShiftedGrid(u8),
    LatticeGeneral,
}

/// Grid geometry: dimension, base ν, finest level, lattice resolution.
#[derive(Clone, Debug, Serialize)]
pub struct GridConfig {
    pub d: usize,
    pub nu: u32,
    pub l_max: u32,
    pub resolution: u32,
    /// true when the 2^d third-shifted grids are lattice-exact
    pub shifted: bool,
}

impl GridConfig {
    pub fn new(d: usize, nu: u32, l_max: u32, resolution: u32) -> Result<Self> {
        if d == 0 || d > 4 {
            return Err(Error::InvalidGrid(format!("d = {d} outside 1..=4")));
        }
        if nu < 2 {
            return Err(Error::InvalidGrid(format!("nu = {nu} must be >= 2")));
        }
        let fine = nu
            .checked_pow(l_max)
            .ok_or_else(|| Error::InvalidGrid(format!("nu^L_max overflows: {nu}^{l_max}")))?;
        let shifted = if resolution == fine {
            false
        } else if nu == 2 && resolution == 3 * fine {
            true
        } else {
            return Err(Error::InvalidGrid(format!(
                "resolution {resolution} must be nu^L_max = {fine} (plain) or 3*2^L_max (shifted, nu = 2)"
            )));
        };
        if (resolution as u64).pow(d as u32) > 1 << 28 {
            return Err(Error::InvalidGrid(format!(
                "lattice with {resolution}^{d} cells is beyond desk scale"
            )));
        }
        Ok(GridConfig {
            d,
            nu,
            l_max,
            resolution,
            shifted,
        })
    }

    /// ν from a dilation parameter ρ ∈ (1,∞): the least integer ≥ ρ.
    pub fn nu_for_rho(rho: f64) -> Result<u32> {
        if !(rho > 1.0 && rho.is_finite()) {
            return Err(Error::InvalidGrid(format!("rho = {rho} outside (1, inf)")));
        }
        Ok((rho.ceil() as u32).max(2))
    }

    pub fn ncells(&self) -> usize {
        (self.resolution as usize).pow(self.d as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        (self.resolution as f64).powi(-(self.d as i32))
    }

    /// cells per grid-cube side at a given level (1 or 3 at the finest level)
    pub fn side_cells(&self, level: u32) -> u32 {
        let base = self.resolution / self.nu.pow(self.l_max);
        base * self.nu.pow(self.l_max - level)
    }

    /// Lebesgue sidelength of a box given its side in cells.
    pub fn side_len(&self, side_cells: u32) -> f64 {
        side_cells as f64 / self.resolution as f64
    }

    fn shift_component(&self, level: u32, mask: u8, axis: usize) -> i64 {
        if mask >> axis & 1 == 0 {
            return 0;
        }
        let u = (self.side_cells(level) / 3) as i64;
        if level % 2 == 1 {
            -u
        } else {
            u
        }
    }

    /// Lattice realization of a cube; `None` only for out-of-domain shifted
    /// cubes (never constructed by the enumerators).
    pub fn lattice(&self, cube: &Cube) -> LatticeBox {
        match cube.grid_id {
            GridId::Standard => {
                let s = self.side_cells(cube.level);
                let lo: Vec<u32> = cube.offset.iter().map(|&j| j * s).collect();
                let hi: Vec<u32> = lo.iter().map(|&l| l + s).collect();
                LatticeBox { lo, hi }
            }
            GridId::Shifted(mask) => {
                let s = self.side_cells(cube.level);
                let lo: Vec<u32> = (0..self.d)
                    .map(|i| {
                        let v = cube.offset[i] as i64 * s as i64 + self.shift_component(cube.level, mask, i);
                        debug_assert!(v >= 0);
                        v as u32
                    })
                    .collect();
                let hi: Vec<u32> = lo.iter().map(|&l| l + s).collect();
                LatticeBox { lo, hi }
            }
            GridId::Lattice => {
                let s = cube.level;
                let hi: Vec<u32> = cube.offset.iter().map(|&l| l + s).collect();
                LatticeBox {
                    lo: cube.offset.clone(),
                    hi,
                }
            }
        }
    }

    pub fn cube_side_cells(&self, cube: &Cube) -> u32 {
        match cube.grid_id {
            GridId::Lattice => cube.level,
            _ => self.side_cells(cube.level),
        }
    }

    /// The grid cube of `grid_id` at `level` containing the given cell,
    /// if it lies fully inside the unit cube.
    pub fn cube_containing(&self, grid_id: GridId, level: u32, cell: &[u32]) -> Option<Cube> {
        let s = self.side_cells(level) as i64;
        let mut offset = Vec::with_capacity(self.d);
        for i in 0..self.d {
            let t = match grid_id {
                GridId::Standard => 0,
                GridId::Shifted(mask) => self.shift_component(level, mask, i),
                GridId::Lattice => return None,
            };
            let j = (cell[i] as i64 - t).div_euclid(s);
            let lo = j * s + t;
            if j < 0 || lo < 0 || lo + s > self.resolution as i64 {
                return None;
            }
            offset.push(j as u32);
        }
        Some(Cube {
            grid_id,
            level,
            offset,
        })
    }

    /// The grid ancestor `j` levels up; errors above the root.
    pub fn ancestor(&self, cube: &Cube, j: u32) -> Result<Cube> {
        if cube.grid_id == GridId::Lattice {
            return Err(Error::Misaligned(
                "lattice-general cubes have no grid ancestors".into(),
            ));
        }
        if j > cube.level {
            return Err(Error::OutOfRoot {
                level: cube.level,
                requested: j,
            });
        }
        if j == 0 {
            return Ok(cube.clone());
        }
        let target = cube.level - j;
        match cube.grid_id {
            GridId::Standard => {
                let factor = self.nu.pow(j);
                Ok(Cube {
                    grid_id: GridId::Standard,
                    level: target,
                    offset: cube.offset.iter().map(|&o| o / factor).collect(),
                })
            }
            GridId::Shifted(_) => {
                let b = self.lattice(cube);
                let anc = self
                    .cube_containing(cube.grid_id, target, &b.lo)
                    .ok_or_else(|| Error::CoverUnavailable(format!("{cube:?}")))?;
                debug_assert!(self.lattice(&anc).contains(&b));
                Ok(anc)
            }
            GridId::Lattice => unreachable!(),
        }
    }

    fn enumerate_grid(&self, grid_id: GridId) -> Vec<Cube> {
        let mut out = Vec::new();
        for level in 0..=self.l_max {
            let s = self.side_cells(level) as i64;
            // valid offset range per axis so the cube stays inside [0, resolution)
            let mut ranges = Vec::with_capacity(self.d);
            for i in 0..self.d {
                let t = match grid_id {
                    GridId::Standard => 0,
                    GridId::Shifted(mask) => self.shift_component(level, mask, i),
                    GridId::Lattice => unreachable!(),
                };
                let lo_j = if t < 0 { 1 } else { 0 };
                let hi_j = (self.resolution as i64 - s - t).div_euclid(s);
                ranges.push((lo_j, hi_j));
            }
            if ranges.iter().any(|&(l, h)| h < l) {
                continue;
            }
            let mut offset: Vec<i64> = ranges.iter().map(|&(l, _)| l).collect();
            'cubes: loop {
                out.push(Cube {
                    grid_id,
                    level,
                    offset: offset.iter().map(|&j| j as u32).collect(),
                });
                let mut axis = self.d;
                loop {
                    if axis == 0 {
                        break 'cubes;
                    }
                    axis -= 1;
                    offset[axis] += 1;
                    if offset[axis] <= ranges[axis].1 {
                        break;
                    }
                    offset[axis] = ranges[axis].0;
                }
            }
        }
        out
    }

    fn enumerate_lattice(&self) -> Vec<Cube> {
        let mut out = Vec::new();
        for side in 1..=self.resolution {
            let n = self.resolution - side + 1;
            let mut offset = vec![0u32; self.d];
            'pos: loop {
                out.push(Cube {
                    grid_id: GridId::Lattice,
                    level: side,
                    offset: offset.clone(),
                });
                let mut axis = self.d;
                loop {
                    if axis == 0 {
                        break 'pos;
                    }
                    axis -= 1;
                    offset[axis] += 1;
                    if offset[axis] < n {
                        break;
                    }
                    offset[axis] = 0;
                }
            }
        }
        out
    }

    /// All cubes of the requested scope, coarse to fine, offsets in
    /// lexicographic order.
    pub fn enumerate_cubes(&self, scope: CubeScope) -> Vec<Cube> {
        match scope {
            CubeScope::StandardGrid => self.enumerate_grid(GridId::Standard),
            CubeScope::ShiftedGrid(mask) => self.enumerate_grid(GridId::Shifted(mask)),
            CubeScope::LatticeGeneral => self.enumerate_lattice(),
        }
    }

    /// Smallest in-domain cube among the 2^d shifted grids containing `q`.
    /// The covering lemma promises sidelength ≤ 6·ℓq away from the domain
    /// boundary; near the boundary the cover can be unavailable.
    pub fn shifted_cover(&self, q: &LatticeBox) -> Result<Cube> {
        if !self.shifted {
            return Err(Error::InvalidGrid(
                "shifted grids require resolution = 3*2^L_max".into(),
            ));
        }
        for level in (0..=self.l_max).rev() {
            for mask in 0..(1u8 << self.d) {
                if let Some(c) = self.cube_containing(GridId::Shifted(mask), level, &q.lo) {
                    if self.lattice(&c).contains(q) {
                        return Ok(c);
                    }
                }
            }
        }
        Err(Error::CoverUnavailable(format!("{:?}", q.lo)))
    }
}
