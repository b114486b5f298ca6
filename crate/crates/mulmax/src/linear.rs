//! One-weight (m = 1) path coded separately from the multilinear
//! machinery: direct cell summation, no prefix tables, scalar exponent q.
//! Serves as the comparison side for the five reduction identities that
//! collapse the multilinear constants when p_i = q and σ_i = σ.

use serde::Serialize;

use crate::constants::{self, ParentMode, Scope, Strategy};
use crate::error::{Error, Result};
use crate::grid::{Cube, GridConfig, GridId, LatticeBox};
use crate::maximal::DEFAULT_BUDGET;
use crate::weights::WeightSystem;

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub grid: GridConfig,
    pub q: f64,
    pub omega: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl LinearSystem {
    pub fn new(grid: GridConfig, q: f64, omega: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::Validation {
                field: "q".into(),
                message: format!("exponent {q} outside (1, ∞)"),
            });
        }
        for (name, dens) in [("omega", &omega), ("sigma", &sigma)] {
            if dens.len() != grid.ncells() {
                return Err(Error::Validation {
                    field: name.into(),
                    message: "density length does not match the grid".into(),
                });
            }
            if dens.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Validation {
                    field: name.into(),
                    message: "densities must be finite and nonnegative".into(),
                });
            }
        }
        Ok(Self {
            grid,
            q,
            omega,
            sigma,
        })
    }

    fn sum_over(&self, dens: &[f64], b: &LatticeBox) -> f64 {
        b.cells(self.grid.resolution)
            .into_iter()
            .map(|c| dens[c])
            .sum()
    }

    fn scope_cubes(&self, scope: Scope) -> Vec<(Cube, LatticeBox)> {
        self.grid
            .enumerate_cubes(scope.cube_scope())
            .into_iter()
            .map(|q| {
                let b = self.grid.lattice(&q);
                (q, b)
            })
            .collect()
    }

    /// [ω, σ]_q^q = sup_Q ⟨ω⟩_Q ⟨σ⟩_Q^{q/q'}
    pub fn aq(&self, scope: Scope) -> f64 {
        let qc = self.q / (self.q - 1.0);
        let mut best = 0.0_f64;
        for (_, b) in self.scope_cubes(scope) {
            let n = b.ncells() as f64;
            let aw = self.sum_over(&self.omega, &b) / n;
            let as_ = self.sum_over(&self.sigma, &b) / n;
            let v = if as_ == 0.0 {
                0.0
            } else {
                aw * as_.powf(self.q / qc)
            };
            if v > best {
                best = v;
            }
        }
        best
    }

    /// M(σ 1_Q) over the scope family, evaluated on `eval_cells`.
    fn indicator_maximal(
        &self,
        qb: &LatticeBox,
        family: &[(Cube, LatticeBox)],
        eval_cells: &[usize],
        field: &mut [f64],
    ) {
        for &c in eval_cells {
            field[c] = 0.0;
        }
        for (_, pb) in family {
            let Some(ib) = pb.intersect(qb) else { continue };
            let v = self.sum_over(&self.sigma, &ib) / pb.ncells() as f64;
            if v <= 0.0 {
                continue;
            }
            // the average acts on all of P, not just the part inside Q
            for c in pb.cells(self.grid.resolution) {
                if v > field[c] {
                    field[c] = v;
                }
            }
        }
    }

    fn energy(&self, cells: &[usize], field: &[f64]) -> f64 {
        let cv = self.grid.cell_volume();
        cells
            .iter()
            .map(|&c| {
                if field[c] > 0.0 {
                    field[c].powf(self.q) * self.omega[c] * cv
                } else {
                    0.0
                }
            })
            .sum()
    }

    fn sup_ratio(&self, scope: Scope, localized: bool, eligible: Option<(f64, f64, ParentMode)>) -> f64 {
        let family = self.scope_cubes(scope);
        let all_cells: Vec<usize> = (0..self.grid.ncells()).collect();
        let mut field = vec![0.0; self.grid.ncells()];
        let mut best = 0.0_f64;
        for (q, qb) in &family {
            if let Some((rho, dd, mode)) = eligible {
                if !self.is_eligible(q, rho, dd, mode) {
                    continue;
                }
            }
            let mass = self.sum_over(&self.sigma, qb) * self.grid.cell_volume();
            if mass == 0.0 {
                continue;
            }
            let eval: &[usize] = if localized {
                &qb.cells(self.grid.resolution)
            } else {
                &all_cells
            };
            self.indicator_maximal(qb, &family, eval, &mut field);
            let v = self.energy(eval, &field) / mass;
            if v > best {
                best = v;
            }
        }
        best
    }

    /// [ω, σ]_{S_q}^q = sup_Q ∫_Q M(σ 1_Q)^q ω / σ(Q)
    pub fn sq(&self, scope: Scope) -> f64 {
        self.sup_ratio(scope, true, None)
    }

    /// 𝔓_{q,ρ,D}^q: the S_q ratio restricted to cubes with a (ρ, D)
    /// doubling parent.
    pub fn testing(&self, rho: f64, dd: f64, scope: Scope, mode: ParentMode) -> f64 {
        self.sup_ratio(scope, true, Some((rho, dd, mode)))
    }

    /// Indicator lower bound for ‖M(σ·)‖^q: the S_q ratio with the
    /// integral over the whole domain instead of Q.
    pub fn norm_lower_indicators(&self, scope: Scope) -> f64 {
        self.sup_ratio(scope, false, None)
    }

    fn is_eligible(&self, q: &Cube, rho: f64, dd: f64, mode: ParentMode) -> bool {
        let grid = &self.grid;
        let qb = grid.lattice(q);
        let mq = self.sum_over(&self.sigma, &qb);
        match mode {
            ParentMode::DyadicAncestor => {
                if q.grid_id == GridId::Lattice || q.level == 0 {
                    return false;
                }
                let parent = grid.ancestor(q, 1).expect("level checked");
                self.sum_over(&self.sigma, &grid.lattice(&parent)) <= dd * mq
            }
            ParentMode::Lattice => {
                let side = grid.cube_side_cells(q) as u64;
                let want = ((rho * side as f64).ceil() as u64).max(side + 1);
                if want > grid.resolution as u64 {
                    return false;
                }
                let want = want as u32;
                let mut ranges = Vec::with_capacity(grid.d);
                for i in 0..grid.d {
                    let lo_min = qb.hi[i].saturating_sub(want);
                    let lo_max = qb.lo[i].min(grid.resolution - want);
                    if lo_max < lo_min {
                        return false;
                    }
                    ranges.push((lo_min, lo_max));
                }
                let mut lo: Vec<u32> = ranges.iter().map(|&(l, _)| l).collect();
                loop {
                    let pb = LatticeBox {
                        lo: lo.clone(),
                        hi: lo.iter().map(|&l| l + want).collect(),
                    };
                    if self.sum_over(&self.sigma, &pb) <= dd * mq {
                        return true;
                    }
                    let mut axis = grid.d;
                    loop {
                        if axis == 0 {
                            return false;
                        }
                        axis -= 1;
                        lo[axis] += 1;
                        if lo[axis] <= ranges[axis].1 {
                            break;
                        }
                        lo[axis] = ranges[axis].0;
                    }
                }
            }
        }
    }
}

/// The multilinear system with m identical factors (p_i = q, σ_i = σ)
/// that a linear system collapses to.
pub fn lift(lin: &LinearSystem, m: usize) -> Result<WeightSystem> {
    use crate::weights::{DiscreteWeight, ExponentVector};
    let sigma = DiscreteWeight::new(lin.grid.d, lin.grid.resolution, lin.sigma.clone())?;
    WeightSystem::new(
        lin.grid.clone(),
        ExponentVector::new(vec![lin.q; m])?,
        DiscreteWeight::new(lin.grid.d, lin.grid.resolution, lin.omega.clone())?,
        vec![sigma; m],
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub linear: f64,
    pub multilinear: f64,
    pub ok: bool,
}

/// The five reduction identities, multilinear path vs this module.
pub fn reduction_checks(
    lin: &LinearSystem,
    m: usize,
    rho: f64,
    dd: f64,
    scope: Scope,
    mode: ParentMode,
    tol: f64,
) -> Result<Vec<IdentityCheck>> {
    let ws = lift(lin, m)?;
    let budget = DEFAULT_BUDGET;
    let mut out = Vec::with_capacity(5);
    let mut push = |name: &str, linear: f64, multilinear: f64| {
        out.push(IdentityCheck {
            name: name.into(),
            linear,
            multilinear,
            ok: crate::eq_rel(linear, multilinear, tol),
        });
    };
    push(
        "rh_trivial",
        1.0,
        constants::rh_constant(&ws, scope, budget)?.value,
    );
    push(
        "ap",
        lin.aq(scope),
        constants::ap_constant(&ws, scope, budget)?.value,
    );
    push(
        "testing",
        lin.testing(rho, dd, scope, mode),
        constants::testing_constant(&ws, rho, dd, scope, mode, budget)?.value,
    );
    // indicator lower bounds of the operator norms, full-domain energy
    let mut multi_norm = 0.0_f64;
    for qc in ws.grid.enumerate_cubes(scope.cube_scope()) {
        let b = ws.grid.lattice(&qc);
        let mut ind = vec![0.0; ws.grid.ncells()];
        for c in b.cells(ws.grid.resolution) {
            ind[c] = 1.0;
        }
        let f: Vec<Vec<f64>> = vec![ind; m];
        if let Some(v) = constants::trial_ratio(&ws, &f, scope, budget)? {
            if v > multi_norm {
                multi_norm = v;
            }
        }
    }
    push("norm_indicators", lin.norm_lower_indicators(scope), multi_norm);
    push(
        "sq",
        lin.sq(scope),
        constants::sp_constant(&ws, scope, budget)?.value,
    );
    Ok(out)
}

/// Convenience wrapper mirroring the multilinear indicator route for the
/// norm identity when only the localized form is wanted.
pub fn norm_lower_localized(ws: &WeightSystem, scope: Scope) -> Result<f64> {
    Ok(constants::norm_lower(
        ws,
        Strategy::Indicators,
        scope,
        &constants::SearchParams::default(),
        DEFAULT_BUDGET,
    )?
    .value)
}
