use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use mulmax::constants::{
    self, ConstantsOptions, ParentMode, Scope, SearchParams, Strategy,
};
use mulmax::decomposition::{self, TestingMode};
use mulmax::error::Error;
use mulmax::extremal::{self, Objective, Profile, SearchConfig};
use mulmax::grid::{Cube, GridId};
use mulmax::linear::LinearSystem;
use mulmax::maximal::{self, DEFAULT_BUDGET};
use mulmax::report::{self, envelope, num, val, RunManifest};
use mulmax::sparse;
use mulmax::weights::{validate, InputFile, WeightSystem};
use mulmax::Result;

#[derive(Parser)]
#[command(name = "mulmax", version, about = "Two-weight bounds of the multilinear maximal operator, verified at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// weight-system JSON fixture
    #[arg(long)]
    input: PathBuf,
    /// directory for reports
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// cube family: dyadic | general
    #[arg(long, default_value = "dyadic")]
    scope: String,
    /// parent sidelength factor in (1, 2]
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    /// doubling parameter override
    #[arg(long = "D")]
    doubling: Option<f64>,
    /// doubling exponent override: D = 2^{dt}
    #[arg(long)]
    t: Option<f64>,
    /// brute-force evaluation budget (cube-cell operations)
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// fixed report timestamp (unix seconds) for byte-stable output
    #[arg(long)]
    timestamp: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the four weight constants and a norm lower bound
    Constants {
        #[command(flatten)]
        common: Common,
        /// trial strategy: indicators | random | ascent
        #[arg(long, default_value = "indicators")]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the maximal function fields
    Maximal {
        #[command(flatten)]
        common: Common,
    },
    /// Build the sparse family and check domination + Carleson embedding
    Sparse {
        #[command(flatten)]
        common: Common,
        /// level-set base override (default 2^{m(d+1)})
        #[arg(long)]
        base: Option<f64>,
    },
    /// Replay the four-collection decomposition and verify the bounds
    VerifyTheorem {
        #[command(flatten)]
        common: Common,
        /// φ exponent
        #[arg(long, default_value_t = 2.0)]
        q: f64,
        /// root cube as level:o1,o2,… (default: domain root)
        #[arg(long = "R")]
        root: Option<String>,
        /// classify Testing roots numerically instead of by geometry
        #[arg(long)]
        numeric_testing: bool,
    },
    /// Hill-climb for weight systems stressing the inequality chain
    SearchExtremal {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// start profile: uniform | lognormal | spiky | power-law-radial
        /// (omit to start from the input weights)
        #[arg(long)]
        profile: Option<String>,
        /// certificate | chain-gap | rh-stress
        #[arg(long, default_value = "certificate")]
        objective: String,
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        #[arg(long, default_value_t = 8)]
        population: usize,
    },
    /// Check the five single-weight reduction identities
    ReduceLinear {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_scope(s: &str) -> Result<Scope> {
    match s {
        "dyadic" => Ok(Scope::Dyadic),
        "general" => Ok(Scope::General),
        other => Err(Error::Validation {
            field: "scope".into(),
            message: format!("unknown scope {other:?}"),
        }),
    }
}

fn parse_strategy(s: &str) -> Result<Strategy> {
    match s {
        "indicators" => Ok(Strategy::Indicators),
        "random" => Ok(Strategy::Random),
        "ascent" => Ok(Strategy::Ascent),
        other => Err(Error::Validation {
            field: "strategy".into(),
            message: format!("unknown strategy {other:?}"),
        }),
    }
}

fn parse_root(spec: &str, ws: &WeightSystem) -> Result<Cube> {
    let bad = |msg: &str| Error::Validation {
        field: "R".into(),
        message: msg.into(),
    };
    let (lvl, offs) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected level:o1,o2,…"))?;
    let level: u32 = lvl.parse().map_err(|_| bad("level is not an integer"))?;
    let offset: Vec<u32> = offs
        .split(',')
        .map(|o| o.parse().map_err(|_| bad("offset is not an integer")))
        .collect::<Result<_>>()?;
    if level > ws.grid.l_max {
        return Err(bad("level beyond the finest grid level"));
    }
    if offset.len() != ws.grid.d {
        return Err(bad("offset dimension mismatch"));
    }
    let side = ws.grid.nu.pow(level);
    if offset.iter().any(|&o| o >= side) {
        return Err(bad("offset outside the unit cube"));
    }
    Ok(Cube {
        grid_id: GridId::Standard,
        level,
        offset,
    })
}

fn resolve_doubling(common: &Common, ws: &WeightSystem) -> Result<Option<f64>> {
    let d = ws.grid.d;
    let m = ws.m();
    let p = ws.exponents.p;
    match (common.doubling, common.t) {
        (Some(_), Some(_)) => Err(Error::Validation {
            field: "D".into(),
            message: "give either --D or --t, not both".into(),
        }),
        (Some(dd), None) => {
            constants::validate_doubling_override(d, m, p, dd)?;
            Ok(Some(dd))
        }
        (None, Some(t)) => {
            let dd = 2f64.powf(d as f64 * t);
            constants::validate_doubling_override(d, m, p, dd)?;
            Ok(Some(dd))
        }
        (None, None) => Ok(None),
    }
}

fn load_system(common: &Common) -> Result<WeightSystem> {
    let ws = InputFile::load(&common.input)?.build()?;
    let v = validate(&ws);
    if !v.ok {
        return Err(Error::Validation {
            field: "input".into(),
            message: v.issues.join("; "),
        });
    }
    Ok(ws)
}

fn manifest(common: &Common, name: &str, ws: &WeightSystem) -> RunManifest {
    let mut m = RunManifest::new(name, common.input.to_str(), common.timestamp);
    m.param("nu", ws.grid.nu.into())
        .param("rho", num(common.rho))
        .param("scope", common.scope.clone().into())
        .param("budget", common.budget.into());
    m
}

fn write(common: &Common, name: &str, v: &Value) -> Result<()> {
    report::write_report(&common.out_dir.join(format!("{name}.json")), v)
}

fn run_constants(common: &Common, strategy: &str, seed: u64) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let scope = parse_scope(&common.scope)?;
    let opts = ConstantsOptions {
        scope,
        rho: common.rho,
        doubling: resolve_doubling(common, &ws)?,
        parent_mode: ParentMode::Lattice,
        strategy: parse_strategy(strategy)?,
        search: SearchParams {
            seed,
            ..SearchParams::default()
        },
        budget: common.budget,
    };
    let rep = constants::constants_report(&ws, &opts)?;
    let chain_ok = constants::chain_holds(
        rep.a_p.value,
        rep.s_p.value,
        rep.testing.value,
        rep.norm_lower.value,
        1e-10,
    );
    let mut man = manifest(common, "constants", &ws);
    man.param("D", num(rep.doubling))
        .param("seed", seed.into())
        .param("strategy", rep.strategy.as_str().into());
    let body = serde_json::json!({
        "ap": {"value": num(rep.a_p.value), "witness": val(&rep.a_p.witness)},
        "sp": {"value": num(rep.s_p.value), "witness": val(&rep.s_p.witness)},
        "rh": {"value": num(rep.rh.value), "witness": val(&rep.rh.witness)},
        "testing": {"value": num(rep.testing.value), "witness": val(&rep.testing.witness)},
        "norm_lower": {"value": num(rep.norm_lower.value), "witness": val(&rep.norm_lower.witness_cube)},
        "certificate": num(rep.certificate),
        "certificate_ratio": num(rep.certificate_ratio),
        "chain_ok": chain_ok,
    });
    write(common, "constants", &envelope(&man, vec![("constants", body)]))?;
    Ok(if chain_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run_maximal(common: &Common) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let scope = parse_scope(&common.scope)?;
    let g = ws.sigmas.clone();
    let field = match scope {
        Scope::Dyadic => maximal::dyadic_maximal(&ws.grid, &g, GridId::Standard),
        Scope::General => maximal::general_maximal_bruteforce(&ws.grid, &g, common.budget)?,
    };
    if !maximal::witnesses_consistent(&ws.grid, &g, &field) {
        return Err(Error::InvariantViolated("maximal witnesses inconsistent".into()));
    }
    std::fs::create_dir_all(&common.out_dir)?;
    std::fs::write(common.out_dir.join("field.csv"), maximal::field_csv(&field))?;
    let max = field.values.iter().cloned().fold(0.0_f64, f64::max);
    let man = manifest(common, "maximal", &ws);
    let body = serde_json::json!({
        "scope": field.scope,
        "max_value": num(max),
        "cells": field.values.len(),
    });
    write(common, "maximal", &envelope(&man, vec![("field", body)]))?;
    Ok(ExitCode::SUCCESS)
}

fn run_sparse(common: &Common, base: Option<f64>) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let g = ws.sigmas.clone();
    let base = base.unwrap_or_else(|| sparse::default_base(ws.grid.d, ws.m()));
    let family = sparse::build_sparse(&ws.grid, &g, base)?;
    let coeffs = sparse::coefficients(&ws, &family);
    let domination = sparse::domination_check(&ws, &g, &family)?;
    let ones = vec![vec![1.0; ws.grid.ncells()]; ws.m()];
    let carleson = sparse::carleson_check(&ws, &coeffs, &ones)?;
    let mut man = manifest(common, "sparse", &ws);
    man.param("base", num(base));
    let body = serde_json::json!({
        "base": num(base),
        "generations": family.generations.len(),
        "instances": family.n_instances(),
        "domination": {
            "lhs": num(domination.lhs),
            "constant": num(domination.constant),
            "rhs_sum": num(domination.rhs_sum),
            "ratio": num(domination.ratio),
            "ok": domination.ok,
        },
        "carleson": {
            "a_star": num(carleson.a_star),
            "lhs": num(carleson.lhs),
            "rhs": num(carleson.rhs),
            "ok": carleson.ok,
            "vacuous": carleson.vacuous,
        },
        "family": val(&family),
    });
    write(common, "sparse", &envelope(&man, vec![("sparse", body)]))?;
    Ok(ExitCode::SUCCESS)
}

fn run_verify(
    common: &Common,
    q: f64,
    root_spec: Option<&str>,
    numeric_testing: bool,
) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let params = decomposition::choose_parameters(
        ws.grid.d,
        &ws.exponents,
        q,
        common.rho,
        resolve_doubling(common, &ws)?,
    )?;
    let root = match root_spec {
        Some(s) => parse_root(s, &ws)?,
        None => Cube {
            grid_id: GridId::Standard,
            level: 0,
            offset: vec![0; ws.grid.d],
        },
    };
    let g = ws.sigmas.clone();
    let family = sparse::build_sparse(&ws.grid, &g, sparse::default_base(ws.grid.d, ws.m()))?;
    let omega_e = sparse::distinct_cubes(&ws, &family);
    let rb = ws.grid.lattice(&root);
    let s_r: Vec<Cube> = omega_e
        .keys()
        .filter(|qc| rb.contains(&ws.grid.lattice(qc)))
        .cloned()
        .collect();
    let mode = if numeric_testing {
        TestingMode::NumericInequality
    } else {
        TestingMode::EligibilityGeometry
    };
    let part = decomposition::partition(&ws, &s_r, &root, &params, mode, common.budget)?;
    let emptiness = decomposition::verify_empty(&ws, &part, &params, common.budget)?;
    let bounds = decomposition::verify_collection_bounds(&ws, &part, &omega_e, &params, common.budget);
    let mut man = manifest(common, "verify-theorem", &ws);
    man.param("D", num(params.doubling))
        .param("k", params.k.into())
        .param("q", num(params.q))
        .param("testing_mode", if numeric_testing { "numeric" } else { "geometry" }.into());
    let bound_value = |b: &Option<decomposition::CollectionBound>| match b {
        Some(cb) => serde_json::json!({
            "sum": num(cb.sum),
            "constant": num(cb.constant),
            "bound": num(cb.bound),
            "ratio": num(cb.ratio),
            "ok": cb.ok,
        }),
        None => Value::Null,
    };
    let bounds_value = match &bounds {
        Ok(b) => serde_json::json!({
                "applicable": b.applicable,
                "rh": num(b.rh),
                "ap": num(b.ap),
                "testing_constant": num(b.testing_constant),
                "top_count": b.top_count,
                "top_count_bound": b.top_count_bound,
                "testing": bound_value(&b.testing),
                "top": bound_value(&b.top),
                "small": bound_value(&b.small),
        }),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let violations: Vec<Value> = emptiness
        .violations
        .iter()
        .map(|v| {
            serde_json::json!({
                "cube": val(&v.cube),
                "n": v.n,
                "ancestors": val(&v.ancestors),
                "sigma_ratios": v.sigma_ratios.iter()
                    .map(|step| step.iter().map(|&r| num(r)).collect::<Vec<_>>())
                    .collect::<Vec<_>>(),
                "local_ap": num(v.local_ap),
                "ap": num(v.ap),
                "phi": num(v.phi),
                "chain_bound": num(v.chain_bound),
            })
        })
        .collect();
    let body = serde_json::json!({
        "root": val(&root),
        "family_size": s_r.len(),
        "partition": {
            "testing_roots": val(&part.testing_roots),
            "testing": part.testing.len(),
            "top": part.top.len(),
            "small": part.small.len(),
            "remaining": part.remaining.len(),
        },
        "remaining_empty": emptiness.empty,
        "violations": violations,
        "bounds": bounds_value,
    });
    write(common, "verify-theorem", &envelope(&man, vec![("theorem", body)]))?;
    if let Err(e @ Error::InvariantViolated(_)) = bounds {
        eprintln!("{e}");
        return Ok(ExitCode::from(1));
    }
    bounds?;
    Ok(if emptiness.empty {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[allow(clippy::too_many_arguments)]
fn run_search(
    common: &Common,
    seed: u64,
    profile: Option<&str>,
    objective: &str,
    iterations: usize,
    population: usize,
) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let start = match profile {
        Some(p) => extremal::random_system(seed, &ws.grid, &ws.exponents, Profile::parse(p)?)?,
        None => ws.clone(),
    };
    let objective = Objective::parse(objective)?;
    let doubling = resolve_doubling(common, &ws)?
        .unwrap_or_else(|| constants::default_doubling(ws.grid.d, ws.m(), ws.exponents.p));
    let cfg = SearchConfig {
        population,
        iterations,
        scope: parse_scope(&common.scope)?,
        budget: common.budget,
        ..SearchConfig::new(seed, objective, common.rho, doubling)
    };
    let result = extremal::ascend(start, &cfg)?;
    std::fs::create_dir_all(&common.out_dir)?;
    let mut csv = String::from("iteration,objective\n");
    for (i, v) in result.trace.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.17e}\n"));
    }
    std::fs::write(common.out_dir.join("trace.csv"), csv)?;
    let mut man = manifest(common, "search-extremal", &ws);
    man.param("seed", seed.into())
        .param("objective", objective.as_str().into())
        .param("iterations", iterations.into())
        .param("population", population.into())
        .param("D", num(doubling));
    let body = serde_json::json!({
        "objective": num(result.objective),
        "trace": result.trace.iter().map(|&v| num(v)).collect::<Vec<_>>(),
        "final_point": {
            "ap": num(result.final_point.ap),
            "sp": num(result.final_point.sp),
            "testing": num(result.final_point.testing),
            "rh": num(result.final_point.rh),
        },
        "best": val(&InputFile::from_system(&result.best)),
    });
    write(common, "search-extremal", &envelope(&man, vec![("search", body)]))?;
    Ok(ExitCode::SUCCESS)
}

fn run_reduce(common: &Common) -> Result<ExitCode> {
    let ws = load_system(common)?;
    let q = ws.exponents.p_i[0];
    if ws.exponents.p_i.iter().any(|&pi| pi != q) {
        return Err(Error::Validation {
            field: "p".into(),
            message: "reduction requires all p_i equal".into(),
        });
    }
    for s in &ws.sigmas {
        if s.density != ws.sigmas[0].density {
            return Err(Error::Validation {
                field: "sigma".into(),
                message: "reduction requires all sigma_i equal".into(),
            });
        }
    }
    let lin = LinearSystem::new(
        ws.grid.clone(),
        q,
        ws.omega.density.clone(),
        ws.sigmas[0].density.clone(),
    )?;
    let scope = parse_scope(&common.scope)?;
    let doubling = resolve_doubling(common, &ws)?
        .unwrap_or_else(|| constants::default_doubling(ws.grid.d, ws.m(), ws.exponents.p));
    let checks = mulmax::linear::reduction_checks(
        &lin,
        ws.m(),
        common.rho,
        doubling,
        scope,
        ParentMode::Lattice,
        1e-9,
    )?;
    let all_ok = checks.iter().all(|c| c.ok);
    let mut man = manifest(common, "reduce-linear", &ws);
    man.param("q", num(q)).param("D", num(doubling));
    let body = Value::Array(
        checks
            .iter()
            .map(|c| {
                serde_json::json!({
                    "name": c.name,
                    "linear": num(c.linear),
                    "multilinear": num(c.multilinear),
                    "ok": c.ok,
                })
            })
            .collect(),
    );
    write(common, "reduce-linear", &envelope(&man, vec![("identities", body)]))?;
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Constants {
            common,
            strategy,
            seed,
        } => run_constants(common, strategy, *seed),
        Command::Maximal { common } => run_maximal(common),
        Command::Sparse { common, base } => run_sparse(common, *base),
        Command::VerifyTheorem {
            common,
            q,
            root,
            numeric_testing,
        } => run_verify(common, *q, root.as_deref(), *numeric_testing),
        Command::SearchExtremal {
            common,
            seed,
            profile,
            objective,
            iterations,
            population,
        } => run_search(
            common,
            *seed,
            profile.as_deref(),
            objective,
            *iterations,
            *population,
        ),
        Command::ReduceLinear { common } => run_reduce(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                // broken verified inequality: falsification, not misuse
                Error::InvariantViolated(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
