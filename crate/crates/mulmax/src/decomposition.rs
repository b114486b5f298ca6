//! Four-collection replay of the restricted-testing argument: pick the
//! doubling parameter D and the cutoff depth k, split the sparse cubes
//! under a root R into Testing / Top / Small / Remaining, bound each of
//! the first three with explicit constants, and certify the last empty.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::constants::{
    self, ap_constant, local_ap, rh_constant, testing_constant, ParentMode, Scope,
};
use crate::error::{Error, Result};
use crate::grid::{Cube, GridId};
use crate::weights::{ExponentVector, WeightSystem};

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProofParameters {
    /// doubling parameter D
    pub doubling: f64,
    /// scale cutoff: every depth n ≥ k satisfies 2^{dmnp} n^{-q} > 1
    pub k: u32,
    /// exponent of φ(x) = (log₂ x)^q
    pub q: f64,
    pub rho: f64,
}

/// 2^{dmnp} n^{-q} > 1, the depth-n contradiction margin for the default D.
fn depth_margin_ok(d: usize, m: usize, p: f64, q: f64, n: u32) -> bool {
    let n = n as f64;
    (d * m) as f64 * n * p * std::f64::consts::LN_2 - q * n.ln() > 0.0
}

/// Smallest k ≥ 1 with 2^{dmnp} n^{-q} > 1 for every n ≥ k. The margin
/// can dip back below 1 after small early successes (large q), so the
/// scan runs past the stationary point q/(dmp ln 2) of the margin.
pub fn minimal_k(d: usize, m: usize, p: f64, q: f64) -> u32 {
    let stationary = (q / ((d * m) as f64 * p * std::f64::consts::LN_2)).ceil() as u32;
    let mut k = 1;
    let mut n = 1;
    loop {
        let ok = depth_margin_ok(d, m, p, q, n);
        if !ok {
            k = n + 1;
        }
        if ok && n >= stationary {
            return k;
        }
        n += 1;
    }
}

pub fn choose_parameters(
    d: usize,
    exponents: &ExponentVector,
    q: f64,
    rho: f64,
    doubling_override: Option<f64>,
) -> Result<ProofParameters> {
    let m = exponents.p_i.len();
    let p = exponents.p;
    if q <= 1.0 {
        return Err(Error::Validation {
            field: "q".into(),
            message: format!("phi exponent {q} must exceed 1"),
        });
    }
    if !(1.0 < rho && rho <= 2.0) {
        return Err(Error::Validation {
            field: "rho".into(),
            message: format!("rho {rho} outside (1, 2] for the dyadic run"),
        });
    }
    let doubling = match doubling_override {
        Some(dd) => {
            constants::validate_doubling_override(d, m, p, dd)?;
            dd
        }
        None => constants::default_doubling(d, m, p),
    };
    let k = minimal_k(d, m, p, q);
    debug_assert!(depth_margin_ok(d, m, p, q, k));
    debug_assert!(k == 1 || !depth_margin_ok(d, m, p, q, k - 1));
    Ok(ProofParameters {
        doubling,
        k,
        q,
        rho,
    })
}

/// How the Testing roots are selected: by the parent-doubling geometry
/// that forces the testing inequality, or by numerically comparing each
/// cube's localized ratio against the realized testing constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TestingMode {
    EligibilityGeometry,
    NumericInequality,
}

#[derive(Clone, Debug, Serialize)]
pub struct Partition {
    pub root: Cube,
    /// maximal selected dyadic cubes inside the root
    pub testing_roots: Vec<Cube>,
    pub testing: Vec<Cube>,
    pub top: Vec<Cube>,
    pub small: Vec<Cube>,
    pub remaining: Vec<Cube>,
}

impl Partition {
    pub fn total(&self) -> usize {
        self.testing.len() + self.top.len() + self.small.len() + self.remaining.len()
    }
}

fn contains(ws: &WeightSystem, outer: &Cube, inner: &Cube) -> bool {
    ws.grid.lattice(outer).contains(&ws.grid.lattice(inner))
}

/// All standard-grid cubes contained in `root`, coarse levels first.
fn dyadic_cubes_below(ws: &WeightSystem, root: &Cube) -> Vec<Cube> {
    let grid = &ws.grid;
    let nu = grid.nu;
    let mut out = Vec::new();
    for level in root.level..=grid.l_max {
        let scale = nu.pow(level - root.level);
        let mut idx = vec![0u32; grid.d];
        loop {
            out.push(Cube {
                grid_id: GridId::Standard,
                level,
                offset: root
                    .offset
                    .iter()
                    .zip(&idx)
                    .map(|(&o, &i)| o * scale + i)
                    .collect(),
            });
            let mut axis = grid.d;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < scale {
                    break;
                }
                idx[axis] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    out
}

/// Partition the distinct sparse cubes `s_r` (all inside `root`) into the
/// four collections.
pub fn partition(
    ws: &WeightSystem,
    s_r: &[Cube],
    root: &Cube,
    params: &ProofParameters,
    mode: TestingMode,
    budget: u64,
) -> Result<Partition> {
    for q in s_r {
        if !contains(ws, root, q) {
            return Err(Error::Validation {
                field: "family".into(),
                message: format!("sparse cube {q:?} not inside the root"),
            });
        }
    }
    let candidates = dyadic_cubes_below(ws, root);
    let selected: Vec<bool> = match mode {
        TestingMode::EligibilityGeometry => candidates
            .iter()
            .map(|q| {
                constants::is_eligible(ws, q, params.rho, params.doubling, ParentMode::DyadicAncestor)
            })
            .collect(),
        TestingMode::NumericInequality => {
            let cap = testing_constant(
                ws,
                params.rho,
                params.doubling,
                Scope::Dyadic,
                ParentMode::DyadicAncestor,
                budget,
            )?
            .value;
            let family =
                constants::with_boxes(&ws.grid, ws.grid.enumerate_cubes(Scope::Dyadic.cube_scope()));
            let mut scratch = Vec::new();
            candidates
                .iter()
                .map(|q| {
                    let r = constants::sp_ratio_at(ws, &ws.grid.lattice(q), &family, &mut scratch);
                    crate::le_rel(r, cap, 1e-12)
                })
                .collect()
        }
    };
    // coarse-first order makes the maximal-elements sweep a single pass
    let mut testing_roots: Vec<Cube> = Vec::new();
    for (q, &sel) in candidates.iter().zip(&selected) {
        if sel && !testing_roots.iter().any(|t| contains(ws, t, q)) {
            testing_roots.push(q.clone());
        }
    }
    let mut testing = Vec::new();
    let mut top = Vec::new();
    let mut small = Vec::new();
    let mut remaining = Vec::new();
    let ap = ap_constant(ws, Scope::Dyadic, budget)?.value;
    for q in s_r {
        if testing_roots.iter().any(|t| contains(ws, t, q)) {
            testing.push(q.clone());
            continue;
        }
        let s = q.level - root.level;
        if s <= params.k {
            top.push(q.clone());
            continue;
        }
        let phi = (s as f64).powf(params.q);
        if local_ap(ws, &ws.grid.lattice(q)) <= ap / phi {
            small.push(q.clone());
        } else {
            remaining.push(q.clone());
        }
    }
    Ok(Partition {
        root: root.clone(),
        testing_roots,
        testing,
        top,
        small,
        remaining,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Violation {
    pub cube: Cube,
    /// depth of the root above the cube
    pub n: u32,
    pub ancestors: Vec<Cube>,
    /// per ancestor step, per weight: σ_i(Q^{(j+1)}) / σ_i(Q^{(j)})
    pub sigma_ratios: Vec<Vec<f64>>,
    pub local_ap: f64,
    pub ap: f64,
    /// φ(ℓR/ℓQ) = n^q
    pub phi: f64,
    /// the contradiction chain's final lower bound ap · 2^{-dn} (D/2^d)^{n(mp-1)} n^{-q},
    /// which must exceed ap for the collection to be provably empty
    pub chain_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmptinessReport {
    pub empty: bool,
    pub violations: Vec<Violation>,
}

/// Assert the Remaining collection empty; a nonempty one yields, per cube,
/// a falsification certificate with its ancestor chain, per-step doubling
/// ratios, and the contradiction-chain values.
pub fn verify_empty(
    ws: &WeightSystem,
    part: &Partition,
    params: &ProofParameters,
    budget: u64,
) -> Result<EmptinessReport> {
    if part.remaining.is_empty() {
        return Ok(EmptinessReport {
            empty: true,
            violations: Vec::new(),
        });
    }
    let grid = &ws.grid;
    let d = grid.d;
    let m = ws.sigmas.len();
    let p = ws.exponents.p;
    let ap = ap_constant(ws, Scope::Dyadic, budget)?.value;
    let mut violations = Vec::new();
    for q in &part.remaining {
        let n = q.level - part.root.level;
        let mut ancestors = Vec::with_capacity(n as usize);
        for j in 1..=n {
            ancestors.push(grid.ancestor(q, j)?);
        }
        let mut sigma_ratios = Vec::with_capacity(n as usize);
        let mut below: Vec<f64> = ws
            .sigmas
            .iter()
            .map(|s| s.cell_sum(&grid.lattice(q)))
            .collect();
        for a in &ancestors {
            let above: Vec<f64> = ws
                .sigmas
                .iter()
                .map(|s| s.cell_sum(&grid.lattice(a)))
                .collect();
            sigma_ratios.push(
                above
                    .iter()
                    .zip(&below)
                    .map(|(&hi, &lo)| if lo > 0.0 { hi / lo } else { f64::INFINITY })
                    .collect(),
            );
            below = above;
        }
        let nf = n as f64;
        let phi = nf.powf(params.q);
        let mp = m as f64 * p;
        let chain_bound = ap
            * 2f64.powf(-(d as f64) * nf)
            * (params.doubling / 2f64.powi(d as i32)).powf(nf * (mp - 1.0))
            / phi;
        violations.push(Violation {
            cube: q.clone(),
            n,
            ancestors,
            sigma_ratios,
            local_ap: local_ap(ws, &grid.lattice(q)),
            ap,
            phi,
            chain_bound,
        });
    }
    Ok(EmptinessReport {
        empty: false,
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CollectionBound {
    pub sum: f64,
    pub constant: f64,
    pub bound: f64,
    pub ratio: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    /// false when the reverse-Hölder constant is infinite
    pub applicable: bool,
    pub rh: f64,
    pub ap: f64,
    pub testing_constant: f64,
    pub top_count: usize,
    pub top_count_bound: u64,
    pub testing: Option<CollectionBound>,
    pub top: Option<CollectionBound>,
    pub small: Option<CollectionBound>,
}

fn collection_sum(
    ws: &WeightSystem,
    cubes: &[Cube],
    omega_e: &BTreeMap<Cube, (f64, usize)>,
) -> f64 {
    let p = ws.exponents.p;
    let cv = ws.grid.cell_volume();
    let mut total = 0.0;
    for q in cubes {
        let Some(&(we, _)) = omega_e.get(q) else { continue };
        let b = ws.grid.lattice(q);
        let vol = b.ncells() as f64 * cv;
        let dens: f64 = ws.sigmas.iter().map(|s| s.measure(&b) / vol).product();
        total += we * dens.powf(p);
    }
    total
}

/// Verify the three explicit-constant collection bounds against
/// ∫_R ∏ σ_i^{p/p_i}. `omega_e` carries the accumulated ω(E_Q) per
/// distinct sparse cube.
pub fn verify_collection_bounds(
    ws: &WeightSystem,
    part: &Partition,
    omega_e: &BTreeMap<Cube, (f64, usize)>,
    params: &ProofParameters,
    budget: u64,
) -> Result<BoundsReport> {
    let grid = &ws.grid;
    let d = grid.d;
    let top_count_bound = 1u64 << (1 + d as u32 * (params.k + 1));
    if part.top.len() as u64 > top_count_bound {
        return Err(Error::InvariantViolated(format!(
            "Top collection has {} elements, above the cap {top_count_bound}",
            part.top.len()
        )));
    }
    let rh = rh_constant(ws, Scope::Dyadic, budget)?.value;
    let ap = ap_constant(ws, Scope::Dyadic, budget)?.value;
    let testing = testing_constant(
        ws,
        params.rho,
        params.doubling,
        Scope::Dyadic,
        ParentMode::DyadicAncestor,
        budget,
    )?
    .value;
    let mut report = BoundsReport {
        applicable: rh.is_finite(),
        rh,
        ap,
        testing_constant: testing,
        top_count: part.top.len(),
        top_count_bound,
        testing: None,
        top: None,
        small: None,
    };
    if !report.applicable {
        return Ok(report);
    }
    let root_mass = ws.product_mass(&grid.lattice(&part.root));
    // tail Σ s^{-q} over the scales that can actually occur below R
    let mut tail = 0.0;
    for s in (params.k + 1)..=(grid.l_max - part.root.level).max(params.k + 1) {
        tail += (s as f64).powf(-params.q);
    }
    let checks = [
        ("Testing", &part.testing, testing * rh),
        ("Top", &part.top, top_count_bound as f64 * ap * rh),
        ("Small", &part.small, tail * ap * rh),
    ];
    let mut out = Vec::new();
    for (name, cubes, constant) in checks {
        let sum = collection_sum(ws, cubes, omega_e);
        let bound = constant * root_mass;
        let ok = crate::le_rel(sum, bound, 1e-10);
        if !ok {
            return Err(Error::InvariantViolated(format!(
                "{name} collection bound violated: sum = {sum}, bound = {bound}, ratio = {}",
                sum / bound
            )));
        }
        out.push(CollectionBound {
            sum,
            constant,
            bound,
            ratio: if bound > 0.0 { sum / bound } else { 0.0 },
            ok,
        });
    }
    report.small = Some(out.pop().unwrap());
    report.top = Some(out.pop().unwrap());
    report.testing = Some(out.pop().unwrap());
    Ok(report)
}
