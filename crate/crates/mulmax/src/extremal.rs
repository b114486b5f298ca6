//! Randomized fixture generation and an elitist hill-climb that hunts for
//! weight systems stressing the inequality chain: large norm-to-certificate
//! gaps, large localized-to-restricted gaps, or blown-up reverse-Hölder
//! coupling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::{
    ap_constant, rh_constant, sp_constant, testing_constant, ParentMode, Scope,
};
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::maximal::DEFAULT_BUDGET;
use crate::weights::{DiscreteWeight, ExponentVector, WeightSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Profile {
    Uniform,
    Lognormal,
    Spiky,
    PowerLawRadial,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::Lognormal => "lognormal",
            Profile::Spiky => "spiky",
            Profile::PowerLawRadial => "power-law-radial",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Profile::Uniform),
            "lognormal" => Ok(Profile::Lognormal),
            "spiky" => Ok(Profile::Spiky),
            "power-law-radial" => Ok(Profile::PowerLawRadial),
            other => Err(Error::Validation {
                field: "profile".into(),
                message: format!("unknown profile {other:?}"),
            }),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniforms
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn density(rng: &mut ChaCha8Rng, grid: &GridConfig, profile: Profile) -> Vec<f64> {
    let n = grid.ncells();
    match profile {
        Profile::Uniform => (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect(),
        Profile::Lognormal => (0..n).map(|_| normal(rng).exp()).collect(),
        Profile::Spiky => {
            let mut dens: Vec<f64> = (0..n).map(|_| 0.5 + rng.gen::<f64>()).collect();
            let mut sorted = dens.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = sorted[n / 2];
            // a single cell three orders of magnitude above the median
            dens[rng.gen_range(0..n)] = 2e3 * median;
            dens
        }
        Profile::PowerLawRadial => {
            let res = grid.resolution as f64;
            let floor = 1.0 / res;
            (0..n)
                .map(|c| {
                    // row-major cell index -> center coordinates
                    let mut rem = c;
                    let mut r2 = 0.0;
                    for _ in 0..grid.d {
                        let i = rem % grid.resolution as usize;
                        rem /= grid.resolution as usize;
                        let x = (i as f64 + 0.5) / res - 0.5;
                        r2 += x * x;
                    }
                    (r2.sqrt() + floor).powf(-1.5)
                })
                .collect()
        }
    }
}

/// Seed-deterministic weight system: one ω and m σ's drawn from `profile`.
pub fn random_system(
    seed: u64,
    grid: &GridConfig,
    exponents: &ExponentVector,
    profile: Profile,
) -> Result<WeightSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = exponents.p_i.len();
    let omega = DiscreteWeight::new(grid.d, grid.resolution, density(&mut rng, grid, profile))?;
    let sigmas = (0..m)
        .map(|_| DiscreteWeight::new(grid.d, grid.resolution, density(&mut rng, grid, profile)))
        .collect::<Result<Vec<_>>>()?;
    WeightSystem::new(grid.clone(), exponents.clone(), omega, sigmas)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Objective {
    /// norm lower bound over the certificate (ap + testing) · rh
    Certificate,
    /// sp over ap + testing
    ChainGap,
    /// reverse-Hölder constant, capped so ∞ stays comparable
    RhStress,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Certificate => "certificate",
            Objective::ChainGap => "chain-gap",
            Objective::RhStress => "rh-stress",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "certificate" => Ok(Objective::Certificate),
            "chain-gap" => Ok(Objective::ChainGap),
            "rh-stress" => Ok(Objective::RhStress),
            other => Err(Error::Validation {
                field: "objective".into(),
                message: format!("unknown objective {other:?}"),
            }),
        }
    }
}

const RH_CAP: f64 = 1e12;

#[derive(Clone, Debug, Serialize)]
pub struct SearchConfig {
    pub seed: u64,
    pub population: usize,
    pub iterations: usize,
    pub mutation_scale: f64,
    pub objective: Objective,
    pub scope: Scope,
    pub rho: f64,
    pub doubling: f64,
    pub budget: u64,
}

impl SearchConfig {
    pub fn new(seed: u64, objective: Objective, rho: f64, doubling: f64) -> Self {
        Self {
            seed,
            population: 8,
            iterations: 100,
            mutation_scale: 0.3,
            objective,
            scope: Scope::Dyadic,
            rho,
            doubling,
            budget: DEFAULT_BUDGET,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Validation {
                field: "population".into(),
                message: "population must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ChainPoint {
    pub ap: f64,
    pub sp: f64,
    pub testing: f64,
    pub rh: f64,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub best: WeightSystem,
    pub objective: f64,
    pub trace: Vec<f64>,
    pub final_point: ChainPoint,
}

fn evaluate(ws: &WeightSystem, cfg: &SearchConfig) -> Result<(f64, ChainPoint)> {
    let ap = ap_constant(ws, cfg.scope, cfg.budget)?.value;
    let sp = sp_constant(ws, cfg.scope, cfg.budget)?.value;
    let testing = testing_constant(
        ws,
        cfg.rho,
        cfg.doubling,
        cfg.scope,
        ParentMode::DyadicAncestor,
        cfg.budget,
    )?
    .value;
    let rh = rh_constant(ws, cfg.scope, cfg.budget)?.value;
    // the chain is a theorem; failing it means a computation bug
    if !crate::le_rel(ap, sp, 1e-10) || !crate::le_rel(testing, sp, 1e-10) {
        return Err(Error::InvariantViolated(format!(
            "constant chain broken during search: ap = {ap}, testing = {testing}, sp = {sp}"
        )));
    }
    let point = ChainPoint {
        ap,
        sp,
        testing,
        rh,
    };
    let objective = match cfg.objective {
        Objective::Certificate => {
            // sp is the indicator norm lower bound
            let cert = (ap + testing) * rh;
            if cert.is_infinite() || cert == 0.0 {
                0.0
            } else {
                sp / cert
            }
        }
        Objective::ChainGap => {
            if ap + testing > 0.0 {
                sp / (ap + testing)
            } else {
                0.0
            }
        }
        Objective::RhStress => rh.min(RH_CAP),
    };
    Ok((objective, point))
}

fn mutate(ws: &WeightSystem, rng: &mut ChaCha8Rng, scale: f64) -> Result<WeightSystem> {
    let n = ws.grid.ncells();
    let m = ws.sigmas.len();
    let which = rng.gen_range(0..=m);
    let cell = rng.gen_range(0..n);
    let factor = if rng.gen::<bool>() {
        scale.exp()
    } else {
        (-scale).exp()
    };
    let mut omega = ws.omega.density.clone();
    let mut sigmas: Vec<Vec<f64>> = ws.sigmas.iter().map(|s| s.density.clone()).collect();
    if which == 0 {
        omega[cell] *= factor;
    } else {
        sigmas[which - 1][cell] *= factor;
    }
    WeightSystem::new(
        ws.grid.clone(),
        ws.exponents.clone(),
        DiscreteWeight::new(ws.grid.d, ws.grid.resolution, omega)?,
        sigmas
            .into_iter()
            .map(|s| DiscreteWeight::new(ws.grid.d, ws.grid.resolution, s))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Elitist search: per iteration, `population` single-cell multiplicative
/// mutations of the incumbent; the best strict improvement is accepted.
/// The chain invariant is re-verified at every evaluation.
pub fn ascend(start: WeightSystem, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate()?;
    let (mut cur_obj, mut cur_point) = evaluate(&start, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best = start;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut winner: Option<(f64, ChainPoint, WeightSystem)> = None;
        for _ in 0..cfg.population {
            let cand = mutate(&best, &mut rng, cfg.mutation_scale)?;
            let (obj, point) = evaluate(&cand, cfg)?;
            let better_than_winner = winner.as_ref().map_or(true, |w| obj > w.0);
            if obj > cur_obj && better_than_winner {
                winner = Some((obj, point, cand));
            }
        }
        if let Some((obj, point, cand)) = winner {
            cur_obj = obj;
            cur_point = point;
            best = cand;
        }
        trace.push(cur_obj);
    }
    Ok(SearchResult {
        best,
        objective: cur_obj,
        trace,
        final_point: cur_point,
    })
}
