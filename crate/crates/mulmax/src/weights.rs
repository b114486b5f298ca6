//! Discrete weight tuples on the finest lattice with summed-area tables
//! for exact cube masses, exponent vectors, and input-file loading.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridConfig, LatticeBox};

/// Nonnegative piecewise-constant density on the finest lattice, with a
/// d-dimensional summed-area table over (resolution+1)^d corner points.
#[derive(Clone, Debug)]
pub struct DiscreteWeight {
    pub d: usize,
    pub resolution: u32,
    pub density: Vec<f64>,
    prefix: Vec<f64>,
}

impl DiscreteWeight {
    pub fn new(d: usize, resolution: u32, density: Vec<f64>) -> Result<Self> {
        let n = (resolution as usize).pow(d as u32);
        if density.len() != n {
            return Err(Error::Validation {
                field: "density".into(),
                message: format!("expected {n} cells, got {}", density.len()),
            });
        }
        if let Some(i) = density.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation {
                field: "density".into(),
                message: format!("cell {i} is {} (must be finite and >= 0)", density[i]),
            });
        }
        let mut w = DiscreteWeight {
            d,
            resolution,
            density,
            prefix: Vec::new(),
        };
        w.build_prefix();
        Ok(w)
    }

    pub fn constant(d: usize, resolution: u32, value: f64) -> Self {
        let n = (resolution as usize).pow(d as u32);
        DiscreteWeight::new(d, resolution, vec![value; n]).unwrap()
    }

    /// prefix[c] = sum of density over cells strictly below corner c,
    /// accumulated axis by axis in a fixed lexicographic order.
    fn build_prefix(&mut self) {
        let d = self.d;
        let res = self.resolution as usize;
        let side = res + 1;
        let n = side.pow(d as u32);
        let mut p = vec![0.0_f64; n];
        // strides of the corner array, row-major
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * side;
        }
        // deposit each cell at its high corner
        for (flat, &v) in self.density.iter().enumerate() {
            let mut rem = flat;
            let mut corner = 0usize;
            for i in (0..d).rev() {
                let c = rem % res;
                rem /= res;
                corner += (c + 1) * strides[i];
            }
            p[corner] = v;
        }
        // running sums along each axis
        for axis in 0..d {
            for idx in 0..n {
                let coord = idx / strides[axis] % side;
                if coord > 0 {
                    p[idx] += p[idx - strides[axis]];
                }
            }
        }
        self.prefix = p;
    }

    fn corner_index(&self, corner: &[u32]) -> usize {
        let side = self.resolution as usize + 1;
        let mut flat = 0usize;
        for &c in corner {
            flat = flat * side + c as usize;
        }
        flat
    }

    /// Sum of cell densities over a box, by inclusion–exclusion.
    pub fn cell_sum(&self, b: &LatticeBox) -> f64 {
        let d = self.d;
        let mut total = 0.0;
        let mut corner = vec![0u32; d];
        for choice in 0..(1u32 << d) {
            let mut sign = 1.0;
            for i in 0..d {
                if choice >> i & 1 == 1 {
                    corner[i] = b.hi[i];
                } else {
                    corner[i] = b.lo[i];
                    sign = -sign;
                }
            }
            total += sign * self.prefix[self.corner_index(&corner)];
        }
        total.max(0.0)
    }

    pub fn cell_volume(&self) -> f64 {
        (self.resolution as f64).powi(-(self.d as i32))
    }

    /// ∫_Q w in Lebesgue units.
    pub fn measure(&self, b: &LatticeBox) -> f64 {
        self.cell_sum(b) * self.cell_volume()
    }

    /// ⟨w⟩_Q = measure / |Q|; resolution-free.
    pub fn average(&self, b: &LatticeBox) -> f64 {
        self.cell_sum(b) / b.ncells() as f64
    }

    pub fn total(&self) -> f64 {
        // fixed accumulation order, matching the prefix construction
        self.density.iter().sum::<f64>() * self.cell_volume()
    }
}

/// (p_1, …, p_m) with 1/p = Σ 1/p_i and conjugates p_i' = p_i/(p_i − 1).
#[derive(Clone, Debug, Serialize)]
pub struct ExponentVector {
    pub p_i: Vec<f64>,
    pub p: f64,
    pub conjugates: Vec<f64>,
}

impl ExponentVector {
    pub fn new(p_i: Vec<f64>) -> Result<Self> {
        if p_i.is_empty() {
            return Err(Error::Validation {
                field: "p".into(),
                message: "need at least one exponent".into(),
            });
        }
        for (i, &p) in p_i.iter().enumerate() {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::Validation {
                    field: format!("p[{i}]"),
                    message: format!("{p} outside (1, inf)"),
                });
            }
        }
        let inv: f64 = p_i.iter().map(|p| 1.0 / p).sum();
        let p = 1.0 / inv;
        let m = p_i.len() as f64;
        if m * p - 1.0 <= 0.0 {
            return Err(Error::Validation {
                field: "p".into(),
                message: format!("mp = {} must exceed 1", m * p),
            });
        }
        let conjugates = p_i.iter().map(|&q| q / (q - 1.0)).collect();
        Ok(ExponentVector { p_i, p, conjugates })
    }

    pub fn m(&self) -> usize {
        self.p_i.len()
    }
}

/// The full tuple (ω, σ⃗, p⃗) on one grid, plus the prefix table of the
/// coupled density ∏ σ_i^{p/p_i} used by the reverse-Hölder side.
#[derive(Clone, Debug)]
pub struct WeightSystem {
    pub grid: GridConfig,
    pub exponents: ExponentVector,
    pub omega: DiscreteWeight,
    pub sigmas: Vec<DiscreteWeight>,
    pub product: DiscreteWeight,
}

impl WeightSystem {
    pub fn new(
        grid: GridConfig,
        exponents: ExponentVector,
        omega: DiscreteWeight,
        sigmas: Vec<DiscreteWeight>,
    ) -> Result<Self> {
        if sigmas.len() != exponents.m() {
            return Err(Error::Validation {
                field: "sigma".into(),
                message: format!(
                    "{} weights for {} exponents",
                    sigmas.len(),
                    exponents.m()
                ),
            });
        }
        for (i, s) in sigmas.iter().enumerate() {
            if s.resolution != grid.resolution || s.d != grid.d {
                return Err(Error::Validation {
                    field: format!("sigma[{i}]"),
                    message: "resolution/dimension mismatch with grid".into(),
                });
            }
        }
        if omega.resolution != grid.resolution || omega.d != grid.d {
            return Err(Error::Validation {
                field: "omega".into(),
                message: "resolution/dimension mismatch with grid".into(),
            });
        }
        let n = grid.ncells();
        let mut prod = vec![1.0_f64; n];
        for (i, s) in sigmas.iter().enumerate() {
            let e = exponents.p / exponents.p_i[i];
            for c in 0..n {
                prod[c] *= s.density[c].powf(e);
            }
        }
        let product = DiscreteWeight::new(grid.d, grid.resolution, prod)?;
        Ok(WeightSystem {
            grid,
            exponents,
            omega,
            sigmas,
            product,
        })
    }

    pub fn m(&self) -> usize {
        self.exponents.m()
    }

    /// ∫_Q ∏ σ_i^{p/p_i}, exact up to floating rounding of the cellwise powers.
    pub fn product_mass(&self, b: &LatticeBox) -> f64 {
        self.product.measure(b)
    }

    /// ∏ σ_i(Q)^{p/p_i} — the left side of the reverse-Hölder coupling.
    pub fn sigma_mass_product(&self, b: &LatticeBox) -> f64 {
        let mut v = 1.0;
        for (i, s) in self.sigmas.iter().enumerate() {
            v *= s.measure(b).powf(self.exponents.p / self.exponents.p_i[i]);
        }
        v
    }
}

/// Structured result of system validation.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<String>,
    /// cells where some σ_i vanishes, per weight index
    pub degenerate_cells: Vec<Vec<usize>>,
}

pub fn validate(ws: &WeightSystem) -> ValidationReport {
    let mut issues = Vec::new();
    let tol = 1e-12;
    let inv: f64 = ws.exponents.p_i.iter().map(|p| 1.0 / p).sum();
    if ((1.0 / ws.exponents.p) - inv).abs() > tol * inv.abs() {
        issues.push("exponent identity 1/p = sum(1/p_i) violated".into());
    }
    for (i, (&p, &c)) in ws.exponents.p_i.iter().zip(&ws.exponents.conjugates).enumerate() {
        if (1.0 / p + 1.0 / c - 1.0).abs() > tol {
            issues.push(format!("conjugate identity fails for p[{i}]"));
        }
    }
    let full = LatticeBox {
        lo: vec![0; ws.grid.d],
        hi: vec![ws.grid.resolution; ws.grid.d],
    };
    let mut check_total = |name: String, w: &DiscreteWeight| {
        let direct: f64 = w.density.iter().sum();
        let queried = w.cell_sum(&full);
        if (direct - queried).abs() > 1e-12 * direct.abs().max(1.0) {
            issues.push(format!("{name}: prefix total disagrees with direct sum"));
        }
    };
    check_total("omega".into(), &ws.omega);
    for (i, s) in ws.sigmas.iter().enumerate() {
        check_total(format!("sigma[{i}]"), s);
    }
    let degenerate_cells: Vec<Vec<usize>> = ws
        .sigmas
        .iter()
        .map(|s| {
            s.density
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 0.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    ValidationReport {
        ok: issues.is_empty(),
        issues,
        degenerate_cells,
    }
}

/// On-disk fixture format: one JSON document with the grid, exponents and
/// row-major density arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputFile {
    pub d: usize,
    pub nu: u32,
    #[serde(rename = "L_max")]
    pub l_max: u32,
    pub resolution: u32,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
}

impl InputFile {
    pub fn load(path: &Path) -> Result<InputFile> {
        let text = fs::read_to_string(path)?;
        let f: InputFile =
            serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Ok(f)
    }

    pub fn build(&self) -> Result<WeightSystem> {
        let grid = GridConfig::new(self.d, self.nu, self.l_max, self.resolution)?;
        let exponents = ExponentVector::new(self.p.clone())?;
        let omega = DiscreteWeight::new(self.d, self.resolution, self.omega.clone())?;
        let sigmas = self
            .sigma
            .iter()
            .map(|s| DiscreteWeight::new(self.d, self.resolution, s.clone()))
            .collect::<Result<Vec<_>>>()?;
        WeightSystem::new(grid, exponents, omega, sigmas)
    }

    pub fn from_system(ws: &WeightSystem) -> InputFile {
        InputFile {
            d: ws.grid.d,
            nu: ws.grid.nu,
            l_max: ws.grid.l_max,
            resolution: ws.grid.resolution,
            p: ws.exponents.p_i.clone(),
            omega: ws.omega.density.clone(),
            sigma: ws.sigmas.iter().map(|s| s.density.clone()).collect(),
        }
    }
}

/// CSV export of a weight (cell index, density), for plotting.
pub fn weight_csv(w: &DiscreteWeight) -> String {
    let mut out = String::from("cell,density\n");
    for (i, v) in w.density.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CubeScope;
    use proptest::prelude::*;

    fn boxed(lo: Vec<u32>, hi: Vec<u32>) -> LatticeBox {
        LatticeBox { lo, hi }
    }

    #[test]
    fn lebesgue_measures() {
        let w = DiscreteWeight::constant(1, 4, 1.0);
        assert_eq!(w.measure(&boxed(vec![0], vec![2])), 0.5);
        assert_eq!(w.measure(&boxed(vec![0], vec![4])), 1.0);
    }

    #[test]
    fn point_mass_cell() {
        let w = DiscreteWeight::new(1, 4, vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(w.measure(&boxed(vec![0], vec![1])), 1.0);
        assert_eq!(w.measure(&boxed(vec![1], vec![4])), 0.0);
    }

    #[test]
    fn prefix_matches_direct_2d() {
        let density: Vec<f64> = (0..16).map(|i| (i * 7 % 5) as f64).collect();
        let w = DiscreteWeight::new(2, 4, density.clone()).unwrap();
        for lo0 in 0..4 {
            for hi0 in lo0 + 1..=4 {
                for lo1 in 0..4 {
                    for hi1 in lo1 + 1..=4 {
                        let b = boxed(vec![lo0, lo1], vec![hi0, hi1]);
                        let direct: f64 = b
                            .cells(4)
                            .iter()
                            .map(|&c| density[c])
                            .sum();
                        assert!((w.cell_sum(&b) - direct).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_negative_density() {
        let err = DiscreteWeight::new(1, 2, vec![1.0, -0.5]).unwrap_err();
        assert!(err.to_string().contains("cell 1"));
    }

    #[test]
    fn exponent_vector_identities() {
        let e = ExponentVector::new(vec![2.0, 2.0]).unwrap();
        assert!((e.p - 1.0).abs() < 1e-12);
        assert!((e.conjugates[0] - 2.0).abs() < 1e-12);
        assert!(ExponentVector::new(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn product_mass_cases() {
        let grid = GridConfig::new(1, 2, 1, 2).unwrap();
        let e = ExponentVector::new(vec![2.0, 2.0]).unwrap();
        // all ones: product mass is |Q|
        let ws = WeightSystem::new(
            grid.clone(),
            e.clone(),
            DiscreteWeight::constant(1, 2, 1.0),
            vec![
                DiscreteWeight::constant(1, 2, 1.0),
                DiscreteWeight::constant(1, 2, 1.0),
            ],
        )
        .unwrap();
        let full = boxed(vec![0], vec![2]);
        assert!((ws.product_mass(&full) - 1.0).abs() < 1e-12);
        // disjoint supports: cellwise sqrt(s1*s2) = 0
        let ws = WeightSystem::new(
            grid,
            e,
            DiscreteWeight::constant(1, 2, 1.0),
            vec![
                DiscreteWeight::new(1, 2, vec![2.0, 0.0]).unwrap(),
                DiscreteWeight::new(1, 2, vec![0.0, 2.0]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(ws.product_mass(&full), 0.0);
    }

    #[test]
    fn validate_flags_exponent_breakage() {
        let grid = GridConfig::new(1, 2, 1, 2).unwrap();
        let mut e = ExponentVector::new(vec![2.0, 2.0]).unwrap();
        e.p = 0.9; // deliberately inconsistent
        let ws = WeightSystem::new(
            grid,
            e,
            DiscreteWeight::constant(1, 2, 1.0),
            vec![
                DiscreteWeight::constant(1, 2, 1.0),
                DiscreteWeight::constant(1, 2, 1.0),
            ],
        )
        .unwrap();
        let r = validate(&ws);
        assert!(!r.ok);
        assert!(r.issues[0].contains("exponent identity"));
    }

    proptest! {
        #[test]
        fn measure_additive_over_children(cells in proptest::collection::vec(0.0_f64..10.0, 8)) {
            let grid = GridConfig::new(1, 2, 3, 8).unwrap();
            let w = DiscreteWeight::new(1, 8, cells).unwrap();
            for q in grid.enumerate_cubes(CubeScope::StandardGrid) {
                if q.level == grid.l_max { continue; }
                let b = grid.lattice(&q);
                let parent = w.measure(&b);
                let child_sum: f64 = grid
                    .enumerate_cubes(CubeScope::StandardGrid)
                    .iter()
                    .filter(|c| c.level == q.level + 1 && b.contains(&grid.lattice(c)))
                    .map(|c| w.measure(&grid.lattice(c)))
                    .sum();
                prop_assert!((parent - child_sum).abs() <= 1e-12 * parent.abs().max(1.0));
                // monotonicity under containment
                prop_assert!(child_sum <= parent + 1e-12);
            }
        }
    }
}
