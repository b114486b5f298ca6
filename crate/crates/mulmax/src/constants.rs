//! The four weight constants and the operator-norm lower bound, plus the
//! exact inequality chain linking them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Cube, CubeScope, GridConfig, LatticeBox};
use crate::maximal::{check_budget, dyadic_maximal, field_over_family, MaximalField};
use crate::weights::{DiscreteWeight, WeightSystem};
use crate::grid::GridId;

/// Which cube family suprema range over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scope {
    Dyadic,
    General,
}

impl Scope {
    pub fn cube_scope(self) -> CubeScope {
        match self {
            Scope::Dyadic => CubeScope::StandardGrid,
            Scope::General => CubeScope::LatticeGeneral,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Dyadic => "dyadic",
            Scope::General => "general",
        }
    }
}

/// How the enlarged cube P of the testing condition is searched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ParentMode {
    /// any lattice-aligned cube P ⊃ Q with ℓP ≥ ρℓQ
    Lattice,
    /// dyadic ancestors of Q only (the proof's Q^{(1)})
    DyadicAncestor,
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessedValue {
    pub value: f64,
    pub witness: Option<Cube>,
}

pub(crate) fn enumerate_scope(grid: &GridConfig, scope: Scope, budget: u64) -> Result<Vec<Cube>> {
    let family = grid.enumerate_cubes(scope.cube_scope());
    if scope == Scope::General {
        check_budget(grid, family.len(), budget)?;
    }
    Ok(family)
}

/// ⟨ω⟩_Q ∏ ⟨σ_i⟩_Q^{p/p_i'} at a single cube.
pub fn local_ap(ws: &WeightSystem, b: &LatticeBox) -> f64 {
    let mut v = ws.omega.average(b);
    for (i, s) in ws.sigmas.iter().enumerate() {
        v *= s.average(b).powf(ws.exponents.p / ws.exponents.conjugates[i]);
    }
    v
}

/// The joint-size constant: sup over cubes of the local product.
pub fn ap_constant(ws: &WeightSystem, scope: Scope, budget: u64) -> Result<WitnessedValue> {
    let family = enumerate_scope(&ws.grid, scope, budget)?;
    let mut best = WitnessedValue {
        value: 0.0,
        witness: None,
    };
    for q in family {
        let v = local_ap(ws, &ws.grid.lattice(&q));
        if v > best.value {
            best = WitnessedValue {
                value: v,
                witness: Some(q),
            };
        }
    }
    Ok(best)
}

/// ∫_Q M(σ⃗1_Q)^p ω with M ranging over `family`. Uses the box identity
/// ∫_P σ_i 1_Q = ∫_{P∩Q} σ_i so no per-Q weights are rebuilt.
pub fn localized_energy(
    ws: &WeightSystem,
    qb: &LatticeBox,
    family: &[(Cube, LatticeBox)],
    scratch: &mut Vec<f64>,
) -> f64 {
    let res = ws.grid.resolution;
    let cells = qb.cells(res);
    scratch.resize(ws.grid.ncells(), 0.0);
    for &c in &cells {
        scratch[c] = 0.0;
    }
    for (_, pb) in family {
        let Some(ib) = pb.intersect(qb) else { continue };
        let n = pb.ncells() as f64;
        let mut v = 1.0;
        for s in &ws.sigmas {
            v *= s.cell_sum(&ib) / n;
        }
        if v <= 0.0 {
            continue;
        }
        for c in ib.cells(res) {
            if v > scratch[c] {
                scratch[c] = v;
            }
        }
    }
    let p = ws.exponents.p;
    let cv = ws.grid.cell_volume();
    let mut total = 0.0;
    for &c in &cells {
        if scratch[c] > 0.0 {
            total += scratch[c].powf(p) * ws.omega.density[c] * cv;
        }
    }
    total
}

pub(crate) fn with_boxes(grid: &GridConfig, family: Vec<Cube>) -> Vec<(Cube, LatticeBox)> {
    family
        .into_iter()
        .map(|c| {
            let b = grid.lattice(&c);
            (c, b)
        })
        .collect()
}

pub(crate) fn sp_ratio_at(
    ws: &WeightSystem,
    qb: &LatticeBox,
    family: &[(Cube, LatticeBox)],
    scratch: &mut Vec<f64>,
) -> f64 {
    if ws.sigmas.iter().any(|s| s.cell_sum(qb) == 0.0) {
        // numerator vanishes with the indicator masses
        return 0.0;
    }
    localized_energy(ws, qb, family, scratch) / ws.sigma_mass_product(qb)
}

/// The localized testing constant: sup over cubes Q (with all σ_i(Q) > 0)
/// of ∫_Q M(σ⃗1_Q)^p ω / ∏ σ_i(Q)^{p/p_i}.
pub fn sp_constant(ws: &WeightSystem, scope: Scope, budget: u64) -> Result<WitnessedValue> {
    let family = with_boxes(&ws.grid, enumerate_scope(&ws.grid, scope, budget)?);
    let mut scratch = Vec::new();
    let mut best = WitnessedValue {
        value: 0.0,
        witness: None,
    };
    for (q, qb) in &family {
        let v = sp_ratio_at(ws, qb, &family, &mut scratch);
        if v > best.value {
            best = WitnessedValue {
                value: v,
                witness: Some(q.clone()),
            };
        }
    }
    Ok(best)
}

/// Reverse-Hölder coupling constant; +∞ when some cube has positive
/// numerator over a vanishing coupled mass.
pub fn rh_constant(ws: &WeightSystem, scope: Scope, budget: u64) -> Result<WitnessedValue> {
    let family = enumerate_scope(&ws.grid, scope, budget)?;
    let mut best = WitnessedValue {
        value: 0.0,
        witness: None,
    };
    for q in family {
        let b = ws.grid.lattice(&q);
        let num = ws.sigma_mass_product(&b);
        let den = ws.product_mass(&b);
        let v = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        if v > best.value {
            best = WitnessedValue {
                value: v,
                witness: Some(q),
            };
            if v.is_infinite() {
                break;
            }
        }
    }
    Ok(best)
}

/// Does Q admit an enlarged cube P (per `mode`) with ℓP ≥ ρℓQ on which
/// some σ_i grows by at most D? Monotonicity of the masses means only the
/// minimal admissible sidelength needs scanning.
pub fn is_eligible(
    ws: &WeightSystem,
    q: &Cube,
    rho: f64,
    dd: f64,
    mode: ParentMode,
) -> bool {
    let grid = &ws.grid;
    let qb = grid.lattice(q);
    let sq: Vec<f64> = ws.sigmas.iter().map(|s| s.cell_sum(&qb)).collect();
    match mode {
        ParentMode::DyadicAncestor => {
            if q.grid_id == GridId::Lattice || q.level == 0 {
                return false;
            }
            // the parent is the least ancestor; σ_i monotone up the tree,
            // so admitting any ancestor is the same as admitting the parent
            let parent = grid.ancestor(q, 1).expect("level checked");
            let pb = grid.lattice(&parent);
            ws.sigmas
                .iter()
                .zip(&sq)
                .any(|(s, &m)| s.cell_sum(&pb) <= dd * m)
        }
        ParentMode::Lattice => {
            let side = grid.cube_side_cells(q) as u64;
            let want = ((rho * side as f64).ceil() as u64).max(side + 1);
            if want > grid.resolution as u64 {
                return false;
            }
            let want = want as u32;
            // scan all positions of the minimal admissible P containing Q
            let d = grid.d;
            let mut ranges = Vec::with_capacity(d);
            for i in 0..d {
                let hi_end = qb.hi[i];
                let lo_min = hi_end.saturating_sub(want);
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
                debug_assert!(pb.contains(&qb));
                if ws
                    .sigmas
                    .iter()
                    .zip(&sq)
                    .any(|(s, &m)| s.cell_sum(&pb) <= dd * m)
                {
                    return true;
                }
                let mut axis = d;
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

/// All cubes of the scope family admitting a (ρ, D)-parent.
pub fn eligible_cubes(
    ws: &WeightSystem,
    rho: f64,
    dd: f64,
    scope: Scope,
    mode: ParentMode,
    budget: u64,
) -> Result<Vec<Cube>> {
    let family = enumerate_scope(&ws.grid, scope, budget)?;
    Ok(family
        .into_iter()
        .filter(|q| is_eligible(ws, q, rho, dd, mode))
        .collect())
}

/// The parent-doubling testing constant: the localized ratio supremum
/// restricted to eligible cubes; 0 when nothing is eligible.
pub fn testing_constant(
    ws: &WeightSystem,
    rho: f64,
    dd: f64,
    scope: Scope,
    mode: ParentMode,
    budget: u64,
) -> Result<WitnessedValue> {
    let family = with_boxes(&ws.grid, enumerate_scope(&ws.grid, scope, budget)?);
    let mut scratch = Vec::new();
    let mut best = WitnessedValue {
        value: 0.0,
        witness: None,
    };
    for (q, qb) in &family {
        if !is_eligible(ws, q, rho, dd, mode) {
            continue;
        }
        let v = sp_ratio_at(ws, qb, &family, &mut scratch);
        if v > best.value {
            best = WitnessedValue {
                value: v,
                witness: Some(q.clone()),
            };
        }
    }
    Ok(best)
}

/// Default doubling parameter 2^{2mpd/(mp−1)}.
pub fn default_doubling(d: usize, m: usize, p: f64) -> f64 {
    let mp = m as f64 * p;
    2f64.powf(2.0 * mp * d as f64 / (mp - 1.0))
}

/// Validate a user override D = 2^{dt}: requires (t−1)(mp−1) − 1 > 0.
pub fn validate_doubling_override(d: usize, m: usize, p: f64, dd: f64) -> Result<()> {
    let t = dd.log2() / d as f64;
    let mp = m as f64 * p;
    if (t - 1.0) * (mp - 1.0) - 1.0 <= 0.0 {
        return Err(Error::Validation {
            field: "D".into(),
            message: format!(
                "D = 2^(d t) with t = {t:.6}: need (t-1)(mp-1)-1 > 0, got {}",
                (t - 1.0) * (mp - 1.0) - 1.0
            ),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Strategy {
    Indicators,
    Random,
    Ascent,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Indicators => "indicators",
            Strategy::Random => "random",
            Strategy::Ascent => "ascent",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SearchParams {
    pub seed: u64,
    pub starts: usize,
    pub steps: usize,
    /// multiplicative step e^{±scale}
    pub step_scale: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            seed: 0,
            starts: 64,
            steps: 200,
            step_scale: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NormLowerResult {
    pub value: f64,
    pub witness_cube: Option<Cube>,
    /// best trial densities when a non-indicator trial won
    pub best_f: Option<Vec<Vec<f64>>>,
}

fn trial_field(ws: &WeightSystem, g: &[DiscreteWeight], scope: Scope, budget: u64) -> Result<MaximalField> {
    match scope {
        Scope::Dyadic => Ok(dyadic_maximal(&ws.grid, g, GridId::Standard)),
        Scope::General => {
            let family = enumerate_scope(&ws.grid, scope, budget)?;
            Ok(field_over_family(&ws.grid, g, &family, "lattice-general", false))
        }
    }
}

/// ‖M(f⃗σ⃗)‖^p_{L^p(ω)} / ∏ ‖f_i‖^p_{L^{p_i}(σ_i)} for one trial f⃗.
/// None when some trial denominator vanishes.
pub fn trial_ratio(
    ws: &WeightSystem,
    f: &[Vec<f64>],
    scope: Scope,
    budget: u64,
) -> Result<Option<f64>> {
    let n = ws.grid.ncells();
    let cv = ws.grid.cell_volume();
    let mut denom = 1.0;
    for (i, fi) in f.iter().enumerate() {
        let pi = ws.exponents.p_i[i];
        let norm_p: f64 = fi
            .iter()
            .zip(&ws.sigmas[i].density)
            .map(|(&fv, &sv)| fv.powf(pi) * sv * cv)
            .sum();
        if norm_p == 0.0 {
            return Ok(None);
        }
        denom *= norm_p.powf(ws.exponents.p / pi);
    }
    let g: Vec<DiscreteWeight> = f
        .iter()
        .enumerate()
        .map(|(i, fi)| {
            let dens: Vec<f64> = fi
                .iter()
                .zip(&ws.sigmas[i].density)
                .map(|(&fv, &sv)| fv * sv)
                .collect();
            DiscreteWeight::new(ws.grid.d, ws.grid.resolution, dens)
        })
        .collect::<Result<Vec<_>>>()?;
    let field = trial_field(ws, &g, scope, budget)?;
    let p = ws.exponents.p;
    let mut num = 0.0;
    for c in 0..n {
        if field.values[c] > 0.0 {
            num += field.values[c].powf(p) * ws.omega.density[c] * cv;
        }
    }
    Ok(Some(num / denom))
}

fn random_f(ws: &WeightSystem, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = ws.grid.ncells();
    (0..ws.m())
        .map(|i| {
            (0..n)
                .map(|c| {
                    if ws.sigmas[i].density[c] == 0.0 {
                        0.0
                    } else {
                        // Exp(1) cells keep some spread without huge outliers
                        -(1.0 - rng.gen::<f64>()).ln()
                    }
                })
                .collect()
        })
        .collect()
}

/// Best lower bound for the norm constant C over the tried test tuples.
pub fn norm_lower(
    ws: &WeightSystem,
    strategy: Strategy,
    scope: Scope,
    params: &SearchParams,
    budget: u64,
) -> Result<NormLowerResult> {
    // indicators: f_i = 1_Q with the energy localized to Q reproduces the
    // testing-constant formula, and every value stays a valid lower bound
    let indicators = sp_constant(ws, scope, budget)?;
    let mut best = NormLowerResult {
        value: indicators.value,
        witness_cube: indicators.witness,
        best_f: None,
    };
    if strategy == Strategy::Indicators {
        if best.value == 0.0 && ws.sigmas.iter().all(|s| s.density.iter().all(|&v| v == 0.0)) {
            return Err(Error::Degenerate("all trial denominators vanish".into()));
        }
        return Ok(best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut any_trial = false;
    for _ in 0..params.starts {
        let mut f = random_f(ws, &mut rng);
        let Some(mut cur) = trial_ratio(ws, &f, scope, budget)? else {
            continue;
        };
        any_trial = true;
        if cur > best.value {
            best = NormLowerResult {
                value: cur,
                witness_cube: None,
                best_f: Some(f.clone()),
            };
        }
        if strategy == Strategy::Random {
            continue;
        }
        let n = ws.grid.ncells();
        for _ in 0..params.steps {
            let i = rng.gen_range(0..ws.m());
            let c = rng.gen_range(0..n);
            if f[i][c] == 0.0 {
                continue;
            }
            let factor = if rng.gen::<bool>() {
                params.step_scale.exp()
            } else {
                (-params.step_scale).exp()
            };
            let old = f[i][c];
            f[i][c] = old * factor;
            match trial_ratio(ws, &f, scope, budget)? {
                Some(v) if v > cur => {
                    cur = v;
                    if v > best.value {
                        best = NormLowerResult {
                            value: v,
                            witness_cube: None,
                            best_f: Some(f.clone()),
                        };
                    }
                }
                _ => f[i][c] = old,
            }
        }
    }
    if !any_trial && best.value == 0.0 {
        return Err(Error::Degenerate("all trial denominators vanish".into()));
    }
    Ok(best)
}

/// Everything the `constants` subcommand reports.
#[derive(Clone, Debug)]
pub struct ConstantsReport {
    pub scope: Scope,
    pub rho: f64,
    pub doubling: f64,
    pub a_p: WitnessedValue,
    pub s_p: WitnessedValue,
    pub rh: WitnessedValue,
    pub testing: WitnessedValue,
    pub norm_lower: NormLowerResult,
    pub strategy: Strategy,
    /// ([A_p] + testing) · [RH]
    pub certificate: f64,
    /// norm_lower / certificate, the empirically tracked implied constant
    pub certificate_ratio: f64,
}

#[derive(Clone, Debug)]
pub struct ConstantsOptions {
    pub scope: Scope,
    pub rho: f64,
    pub doubling: Option<f64>,
    pub parent_mode: ParentMode,
    pub strategy: Strategy,
    pub search: SearchParams,
    pub budget: u64,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions {
            scope: Scope::Dyadic,
            rho: 2.0,
            doubling: None,
            parent_mode: ParentMode::Lattice,
            strategy: Strategy::Indicators,
            search: SearchParams::default(),
            budget: crate::maximal::DEFAULT_BUDGET,
        }
    }
}

pub fn constants_report(ws: &WeightSystem, opts: &ConstantsOptions) -> Result<ConstantsReport> {
    let p = ws.exponents.p;
    let dd = match opts.doubling {
        Some(v) => {
            validate_doubling_override(ws.grid.d, ws.m(), p, v)?;
            v
        }
        None => default_doubling(ws.grid.d, ws.m(), p),
    };
    let a_p = ap_constant(ws, opts.scope, opts.budget)?;
    let s_p = sp_constant(ws, opts.scope, opts.budget)?;
    let rh = rh_constant(ws, opts.scope, opts.budget)?;
    let testing = testing_constant(ws, opts.rho, dd, opts.scope, opts.parent_mode, opts.budget)?;
    let nl = norm_lower(ws, opts.strategy, opts.scope, &opts.search, opts.budget)?;
    let certificate = (a_p.value + testing.value) * rh.value;
    let certificate_ratio = if certificate > 0.0 {
        nl.value / certificate
    } else if nl.value == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ConstantsReport {
        scope: opts.scope,
        rho: opts.rho,
        doubling: dd,
        a_p,
        s_p,
        rh,
        testing,
        norm_lower: nl,
        strategy: opts.strategy,
        certificate,
        certificate_ratio,
    })
}

/// The theorem-level chain at constant 1: ap ≤ sp, testing ≤ sp,
/// sp ≤ norm_lower.
pub fn chain_holds(ap: f64, sp: f64, testing: f64, norm_lower: f64, tol: f64) -> bool {
    crate::le_rel(ap, sp, tol) && crate::le_rel(testing, sp, tol) && crate::le_rel(sp, norm_lower, tol)
}
