//! End-to-end acceptance gate. Each test covers one numbered criterion and
//! prints a single `criterion N (...): PASS` line when it holds; a failing
//! criterion panics with the offending fixture spelled out.

use std::collections::HashSet;

use mulmax::constants::{
    self, ap_constant, sp_constant, testing_constant, ConstantsOptions, ParentMode,
    Scope, SearchParams, Strategy,
};
use mulmax::decomposition::{
    choose_parameters, partition, verify_collection_bounds, verify_empty, TestingMode,
};
use mulmax::extremal::{random_system, Profile};
use mulmax::grid::{CubeScope, GridConfig, GridId};
use mulmax::linear::{reduction_checks, LinearSystem};
use mulmax::maximal::{dyadic_maximal, shifted_bound_check, DEFAULT_BUDGET};
use mulmax::sparse::{
    build_sparse, carleson_check, coefficients, default_base, distinct_cubes, domination_check,
};
use mulmax::weights::{DiscreteWeight, ExponentVector, WeightSystem};
use mulmax::{eq_rel, le_rel};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PROFILES: [Profile; 4] = [
    Profile::Uniform,
    Profile::Lognormal,
    Profile::Spiky,
    Profile::PowerLawRadial,
];

/// (d, nu, l_max, resolution, exponents)
type Shape = (usize, u32, u32, u32, &'static [f64]);

/// `n` seeded fixtures cycling through the given grid/exponent shapes and
/// all four density profiles.
fn fixtures(shapes: &[Shape], n: usize) -> Vec<WeightSystem> {
    (0..n)
        .map(|i| {
            let (d, nu, l_max, res, p_i) = shapes[i % shapes.len()];
            let grid = GridConfig::new(d, nu, l_max, res).unwrap();
            let exps = ExponentVector::new(p_i.to_vec()).unwrap();
            random_system(i as u64, &grid, &exps, PROFILES[i % PROFILES.len()]).unwrap()
        })
        .collect()
}

fn pass(n: u32, name: &str) {
    println!("criterion {n} ({name}): PASS");
}

// ---------------------------------------------------------------- 1

/// Naive per-cell dyadic maximal value, written against the raw density
/// arrays with no shared geometry or prefix tables.
fn naive_dyadic_cell(grid: &GridConfig, g: &[DiscreteWeight], coords: &[u32]) -> f64 {
    let res = grid.resolution as usize;
    let d = grid.d;
    let mut best = 0.0_f64;
    for level in 0..=grid.l_max {
        let side = res / (grid.nu as usize).pow(level);
        let lo: Vec<usize> = coords.iter().map(|&c| (c as usize / side) * side).collect();
        let mut prod = 1.0;
        for w in g {
            let mut sum = 0.0;
            let mut idx = vec![0usize; d];
            'cells: loop {
                let mut flat = 0usize;
                for i in 0..d {
                    flat = flat * res + lo[i] + idx[i];
                }
                sum += w.density[flat];
                let mut axis = d;
                while axis > 0 {
                    axis -= 1;
                    idx[axis] += 1;
                    if idx[axis] < side {
                        continue 'cells;
                    }
                    idx[axis] = 0;
                }
                break;
            }
            prod *= sum / (side as f64).powi(d as i32);
        }
        if prod > best {
            best = prod;
        }
    }
    best
}

#[test]
fn c01_oracle_equivalence() {
    let shapes: &[Shape] = &[
        (1, 2, 4, 16, &[2.0, 2.0]),
        (1, 2, 3, 8, &[2.0]),
        (2, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (1, 2, 4, 16, &[4.0, 4.0 / 3.0]),
        (2, 2, 2, 4, &[2.0, 2.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let field = dyadic_maximal(&ws.grid, &ws.sigmas, GridId::Standard);
        let res = ws.grid.resolution;
        let d = ws.grid.d;
        for cell in 0..ws.grid.ncells() {
            let mut coords = vec![0u32; d];
            let mut rest = cell;
            for i in (0..d).rev() {
                coords[i] = (rest % res as usize) as u32;
                rest /= res as usize;
            }
            let naive = naive_dyadic_cell(&ws.grid, &ws.sigmas, &coords);
            assert!(
                eq_rel(field.values[cell], naive, 1e-12),
                "fixture {i}, cell {cell}: dyadic {} vs oracle {naive}",
                field.values[cell]
            );
        }
    }
    pass(1, "oracle equivalence");
}

// ---------------------------------------------------------------- 2

#[test]
fn c02_constant_chain() {
    let shapes: &[Shape] = &[
        (1, 2, 4, 16, &[2.0, 2.0]),
        (1, 2, 3, 8, &[2.0]),
        (2, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (2, 2, 2, 4, &[4.0, 4.0 / 3.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let dd = constants::default_doubling(ws.grid.d, ws.m(), ws.exponents.p);
        for scope in [Scope::Dyadic, Scope::General] {
            let ap = ap_constant(ws, scope, DEFAULT_BUDGET).unwrap().value;
            let sp = sp_constant(ws, scope, DEFAULT_BUDGET).unwrap().value;
            let testing = testing_constant(ws, 2.0, dd, scope, ParentMode::Lattice, DEFAULT_BUDGET)
                .unwrap()
                .value;
            let params = SearchParams {
                seed: i as u64,
                starts: 4,
                steps: 40,
                step_scale: 0.25,
            };
            let nl_ind = constants::norm_lower(ws, Strategy::Indicators, scope, &params, DEFAULT_BUDGET)
                .unwrap()
                .value;
            let nl_asc = constants::norm_lower(ws, Strategy::Ascent, scope, &params, DEFAULT_BUDGET)
                .unwrap()
                .value;
            let ctx = format!("fixture {i}, scope {scope:?}");
            assert!(le_rel(ap, sp, 1e-10), "{ctx}: ap {ap} > sp {sp}");
            assert!(le_rel(testing, sp, 1e-10), "{ctx}: testing {testing} > sp {sp}");
            assert!(eq_rel(sp, nl_ind, 1e-10), "{ctx}: sp {sp} != indicators {nl_ind}");
            assert!(le_rel(nl_ind, nl_asc, 1e-10), "{ctx}: indicators {nl_ind} > ascent {nl_asc}");
        }
    }
    pass(2, "exact constant chain");
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_linear_reduction() {
    let grid = GridConfig::new(1, 2, 3, 8).unwrap();
    let mut count = 0;
    for &q in &[1.5, 2.0, 3.0] {
        for m in 1..=3usize {
            for seed in 0..12u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * m as u64 + 10 * seed + q as u64);
                let omega: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..2.0)).collect();
                let sigma: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..2.0)).collect();
                let lin = LinearSystem::new(grid.clone(), q, omega, sigma).unwrap();
                let dd = constants::default_doubling(1, m, q / m as f64);
                let checks =
                    reduction_checks(&lin, m, 2.0, dd, Scope::Dyadic, ParentMode::Lattice, 1e-9)
                        .unwrap();
                assert_eq!(checks.len(), 5);
                for c in &checks {
                    assert!(
                        c.ok,
                        "q={q} m={m} seed={seed}: identity {} linear {} vs multilinear {}",
                        c.name, c.linear, c.multilinear
                    );
                }
                count += 1;
            }
        }
    }
    assert_eq!(count, 108);
    pass(3, "m=1 reduction identities");
}

// ---------------------------------------------------------------- 4

#[test]
fn c04_sparse_invariants() {
    let shapes: &[Shape] = &[
        (1, 2, 5, 32, &[2.0, 2.0]),
        (1, 2, 4, 16, &[2.0]),
        (2, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (2, 2, 2, 4, &[4.0, 4.0 / 3.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let base = default_base(ws.grid.d, ws.m());
        let fam = build_sparse(&ws.grid, &ws.sigmas, base)
            .unwrap_or_else(|e| panic!("fixture {i}: build failed: {e}"));
        let mut e_seen: HashSet<usize> = HashSet::new();
        let mut prev_omega: Option<HashSet<usize>> = None;
        for gen in &fam.generations {
            // within one generation the stopping cubes are pairwise disjoint
            let mut gen_cells: HashSet<usize> = HashSet::new();
            let mut n_cells = 0usize;
            for sc in &gen.cubes {
                let cells = ws.grid.lattice(&sc.cube).cells(ws.grid.resolution);
                n_cells += cells.len();
                // half of the cube stays in E (integer cell counts)
                assert!(
                    cells.len() <= 2 * sc.e_cells.len(),
                    "fixture {i} gen {}: |Q|={} > 2|E|={}",
                    gen.k,
                    cells.len(),
                    2 * sc.e_cells.len()
                );
                for c in cells {
                    gen_cells.insert(c);
                }
                for &c in &sc.e_cells {
                    assert!(e_seen.insert(c), "fixture {i}: E sets overlap at cell {c}");
                }
            }
            assert_eq!(gen_cells.len(), n_cells, "fixture {i} gen {}: cubes overlap", gen.k);
            // each generation's level set nests inside the previous one
            if let Some(prev) = &prev_omega {
                assert!(
                    gen.omega_cells.iter().all(|c| prev.contains(c)),
                    "fixture {i} gen {}: level sets not nested",
                    gen.k
                );
            }
            prev_omega = Some(gen_cells);
        }
    }
    pass(4, "sparse-family invariants");
}

// ---------------------------------------------------------------- 5

fn scaled_weights(ws: &WeightSystem, f: &[Vec<f64>]) -> Vec<DiscreteWeight> {
    ws.sigmas
        .iter()
        .zip(f)
        .map(|(s, fi)| {
            let dens: Vec<f64> = s.density.iter().zip(fi).map(|(a, b)| a * b).collect();
            DiscreteWeight::new(s.d, s.resolution, dens).unwrap()
        })
        .collect()
}

fn test_functions(ws: &WeightSystem, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let n = ws.grid.ncells();
    let m = ws.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![vec![1.0; n]; m];
    let random: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(0.1..2.0)).collect())
        .collect();
    let mut spiky = vec![vec![0.1; n]; m];
    for fi in spiky.iter_mut() {
        let cell = rng.gen_range(0..n);
        fi[cell] = 1.0e3;
    }
    vec![ones, random, spiky]
}

#[test]
fn c05_sparse_domination() {
    let shapes: &[Shape] = &[
        (1, 2, 4, 16, &[2.0, 2.0]),
        (1, 2, 3, 8, &[2.0]),
        (2, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (2, 2, 2, 4, &[4.0, 4.0 / 3.0]),
    ];
    for (i, ws) in fixtures(shapes, 34).iter().enumerate() {
        let d = ws.grid.d;
        let m = ws.m();
        let p = ws.exponents.p;
        let base = default_base(d, m);
        for (j, f) in test_functions(ws, i as u64).iter().enumerate() {
            let g = scaled_weights(ws, f);
            let fam = build_sparse(&ws.grid, &g, base).unwrap();
            let rep = domination_check(ws, &g, &fam).unwrap();
            let expected = 2f64.powf((m * (d + 1)) as f64 * p);
            assert!(
                eq_rel(rep.constant, expected, 1e-12),
                "fixture {i} f#{j}: constant {} vs 2^(m(d+1)p) = {expected}",
                rep.constant
            );
            assert!(
                rep.ok,
                "fixture {i} f#{j}: domination fails, lhs {} vs {} * {}",
                rep.lhs, rep.constant, rep.rhs_sum
            );
        }
    }
    pass(5, "sparse domination with explicit constant");
}

// ---------------------------------------------------------------- 6

#[test]
fn c06_carleson_embedding() {
    let shapes: &[Shape] = &[
        (1, 2, 4, 16, &[2.0, 2.0]),
        (1, 2, 3, 8, &[2.0]),
        (2, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (2, 2, 2, 4, &[4.0, 4.0 / 3.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let base = default_base(ws.grid.d, ws.m());
        let fam = build_sparse(&ws.grid, &ws.sigmas, base).unwrap();
        let coeffs = coefficients(ws, &fam);
        let n = ws.grid.ncells();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let f: Vec<Vec<f64>> = (0..ws.m())
            .map(|_| (0..n).map(|_| rng.gen_range(0.1..2.0)).collect())
            .collect();
        let rep = carleson_check(ws, &coeffs, &f).unwrap();
        assert!(
            rep.ok,
            "fixture {i}: embedding fails, lhs {} vs rhs {}",
            rep.lhs, rep.rhs
        );
        // scaling every f_i by lambda scales the left side by lambda^{mp}
        let lambda = 1.7_f64;
        let fl: Vec<Vec<f64>> = f
            .iter()
            .map(|fi| fi.iter().map(|v| v * lambda).collect())
            .collect();
        let rep_l = carleson_check(ws, &coeffs, &fl).unwrap();
        let factor = lambda.powf(ws.m() as f64 * ws.exponents.p);
        assert!(
            eq_rel(rep_l.lhs, factor * rep.lhs, 1e-9),
            "fixture {i}: scaled lhs {} vs lambda^mp * lhs {}",
            rep_l.lhs,
            factor * rep.lhs
        );
    }
    pass(6, "Carleson embedding and scaling");
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_theorem_structure() {
    let shapes: &[Shape] = &[
        (1, 2, 4, 16, &[2.0, 2.0]),
        (1, 2, 4, 16, &[2.0]),
        (1, 2, 3, 8, &[3.0, 3.0, 3.0]),
        (2, 2, 3, 8, &[2.0, 2.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let base = default_base(ws.grid.d, ws.m());
        let fam = build_sparse(&ws.grid, &ws.sigmas, base).unwrap();
        let omega_e = distinct_cubes(ws, &fam);
        let roots = ws.grid.enumerate_cubes(CubeScope::StandardGrid);
        for &q in &[2.0, 3.0, 6.0] {
            let params = choose_parameters(ws.grid.d, &ws.exponents, q, 2.0, None).unwrap();
            for root in &roots {
                let rb = ws.grid.lattice(root);
                let s_r: Vec<_> = omega_e
                    .keys()
                    .filter(|c| rb.contains(&ws.grid.lattice(c)))
                    .cloned()
                    .collect();
                let part = partition(
                    ws,
                    &s_r,
                    root,
                    &params,
                    TestingMode::EligibilityGeometry,
                    DEFAULT_BUDGET,
                )
                .unwrap();
                let ctx = format!("fixture {i}, q={q}, root level {} {:?}", root.level, root.offset);
                assert_eq!(part.total(), s_r.len(), "{ctx}: partition loses cubes");
                let emp = verify_empty(ws, &part, &params, DEFAULT_BUDGET).unwrap();
                assert!(
                    emp.empty,
                    "{ctx}: Remaining nonempty, first certificate {:?}",
                    emp.violations.first()
                );
                // errors out when |Top| exceeds 2^{1+d(k+1)}
                let bounds =
                    verify_collection_bounds(ws, &part, &omega_e, &params, DEFAULT_BUDGET)
                        .unwrap_or_else(|e| panic!("{ctx}: {e}"));
                if bounds.applicable {
                    for (name, b) in [
                        ("testing", &bounds.testing),
                        ("top", &bounds.top),
                        ("small", &bounds.small),
                    ] {
                        if let Some(b) = b {
                            assert!(
                                b.ok,
                                "{ctx}: {name} sum {} above bound {}",
                                b.sum, b.bound
                            );
                        }
                    }
                }
            }
        }
    }
    pass(7, "four-collection theorem structure");
}

// ---------------------------------------------------------------- 8

#[test]
fn c08_cover_lemma() {
    // every lattice cube of the 12-per-side shifted configuration has a
    // shifted-grid cover of at most 6 times its sidelength
    for d in [1usize, 2] {
        let grid = GridConfig::new(d, 2, 2, 12).unwrap();
        for q in grid.enumerate_cubes(CubeScope::LatticeGeneral) {
            let qb = grid.lattice(&q);
            let cover = grid
                .shifted_cover(&qb)
                .unwrap_or_else(|e| panic!("d={d}, cube {:?}: {e}", qb.lo));
            let qs = qb.hi[0] - qb.lo[0];
            let cs = grid.cube_side_cells(&cover);
            assert!(
                cs <= 6 * qs,
                "d={d}, cube {:?} side {qs}: cover side {cs} above 6x",
                qb.lo
            );
        }
    }
    // pointwise: general maximal <= 6^{dm} * max over the shifted grids
    let shapes: &[Shape] = &[
        (1, 2, 2, 12, &[2.0, 2.0]),
        (1, 2, 2, 12, &[2.0]),
        (2, 2, 2, 12, &[3.0, 3.0, 3.0]),
        (2, 2, 2, 12, &[2.0, 2.0]),
    ];
    for (i, ws) in fixtures(shapes, 100).iter().enumerate() {
        let rep = shifted_bound_check(ws, &ws.sigmas, DEFAULT_BUDGET).unwrap();
        assert!(
            rep.ok,
            "fixture {i}: ratio {} above 6^dm = {}",
            rep.max_ratio, rep.bound
        );
    }
    pass(8, "shifted-grid cover lemma");
}

// ---------------------------------------------------------------- 9

#[test]
fn c09_certificate_stability() {
    // one fixed density per seed, refined by cell replication across
    // resolutions 8 -> 16 -> 32; equal sigmas keep the coupling constant 1
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega8: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..2.0)).collect();
        let sigma8: Vec<f64> = (0..8).map(|_| rng.gen_range(0.2..2.0)).collect();
        let mut ratios = Vec::new();
        for (l_max, res) in [(3u32, 8u32), (4, 16), (5, 32)] {
            let rep = res as usize / 8;
            let refine = |v: &[f64]| -> Vec<f64> {
                v.iter().flat_map(|&x| std::iter::repeat(x).take(rep)).collect()
            };
            let grid = GridConfig::new(1, 2, l_max, res).unwrap();
            let exps = ExponentVector::new(vec![2.0, 2.0]).unwrap();
            let omega = DiscreteWeight::new(1, res, refine(&omega8)).unwrap();
            let sigma = DiscreteWeight::new(1, res, refine(&sigma8)).unwrap();
            let ws = WeightSystem::new(grid, exps, omega, vec![sigma.clone(), sigma]).unwrap();
            let rep = constants::constants_report(&ws, &ConstantsOptions::default()).unwrap();
            assert!(
                rep.certificate_ratio.is_finite() && rep.certificate_ratio > 0.0,
                "seed {seed} res {res}: ratio {} not finite positive",
                rep.certificate_ratio
            );
            ratios.push(rep.certificate_ratio);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(
            hi < 4.0 * lo,
            "seed {seed}: ratios {ratios:?} vary by more than 4x"
        );
    }
    pass(9, "certificate ratio stability");
}

// ---------------------------------------------------------------- 10

#[test]
fn c10_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_mulmax");
    let dir = std::env::temp_dir().join(format!("mulmax-acc-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let grid = GridConfig::new(1, 2, 3, 8).unwrap();
    let exps = ExponentVector::new(vec![2.0, 2.0]).unwrap();
    let ws = random_system(42, &grid, &exps, Profile::Lognormal).unwrap();
    let input = dir.join("fixture.json");
    std::fs::write(
        &input,
        serde_json::to_string(&mulmax::weights::InputFile::from_system(&ws)).unwrap(),
    )
    .unwrap();

    let run = |sub: &str, out: &std::path::Path, extra: &[&str]| {
        let mut cmd = Command::new(bin);
        cmd.arg(sub)
            .arg("--input")
            .arg(&input)
            .arg("--out-dir")
            .arg(out)
            .arg("--timestamp")
            .arg("1000");
        cmd.args(extra);
        let st = cmd.status().unwrap();
        assert!(st.success(), "{sub} exited with {st:?}");
    };

    for (sub, file, extra) in [
        ("constants", "constants.json", vec![]),
        ("verify-theorem", "verify-theorem.json", vec![]),
        ("search-extremal", "search-extremal.json", vec!["--iterations", "15"]),
    ] {
        let (a, b) = (dir.join(format!("{sub}-a")), dir.join(format!("{sub}-b")));
        // the two runs execute concurrently
        std::thread::scope(|s| {
            s.spawn(|| run(sub, &a, &extra));
            s.spawn(|| run(sub, &b, &extra));
        });
        let ba = std::fs::read(a.join(file)).unwrap();
        let bb = std::fs::read(b.join(file)).unwrap();
        assert_eq!(ba, bb, "{sub}: reports differ between runs");
        assert!(!ba.is_empty());
    }
    std::fs::remove_dir_all(&dir).ok();
    pass(10, "byte-identical deterministic reports");
}
