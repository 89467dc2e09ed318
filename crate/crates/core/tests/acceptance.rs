//! Desk-scale acceptance run: unit disk, `T = 5`, `η = 0.25`.
//!
//! Every criterion prints one line straight to stdout, so the summary shows
//! up even when the harness captures output.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use albedo_lab::coefficients::{
    catalog, phantom, phantom_pair, AngularLaw, CoefficientPair, Phantom, PhantomPair, Scattering,
    SpatialProfile,
};
use albedo_lab::forward::{operator_mass_check, BoundarySource, Solver, SolverConfig};
use albedo_lab::geometry::{
    direction, phase_space_integral, Domain, PhasePoint, PhaseResolution, PhaseRoute, Sign, Vector,
};
use albedo_lab::inversion::{
    extract_k, pooled_k, reconstruct_sigma, FbpConfig, KExtractionConfig, ReconstructionGrid,
    ScanMode, Sinogram,
};
use albedo_lab::kernels::{
    attenuation_e, ballistic_kernel, beta_function, double_scatter_geometry, halton_points,
    BetaResolution,
};
use albedo_lab::stability::*;
use albedo_lab::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T_MAX: f64 = 5.0;
const ETA: f64 = 0.25;
const ENTRIES: usize = 100;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: usize, title: &str, result: Result<Outcome>, elapsed: Duration) -> bool {
    let (pass, detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let line = format!(
        "acceptance {id:>2} {} {title}: {detail} [{:.1} s]\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(line.as_bytes());
    let _ = stdout.flush();
    pass
}

fn disk() -> Domain {
    Domain::UnitDisk
}

fn diameter_source() -> PhasePoint {
    PhasePoint::planar(-1.0, 0.0, 0.0)
}

/// Chord of the unit disk through `x` along `v`, from the perpendicular offset.
fn disk_chord(x: &Vector, v: &Vector) -> f64 {
    let along = x.dot(v);
    let offset2 = x.norm_squared() - along * along;
    2.0 * (1.0 - offset2).max(0.0).sqrt()
}

/// Forward distance from `x` to the unit circle along `v`.
fn disk_exit(x: &Vector, v: &Vector) -> f64 {
    let along = x.dot(v);
    -along + (along * along + 1.0 - x.norm_squared()).max(0.0).sqrt()
}

fn geometry_identities() -> Result<Outcome> {
    let d = disk();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut chord_error: f64 = 0.0;
    let mut landing_error: f64 = 0.0;
    for _ in 0..10_000 {
        let r = rng.random::<f64>().sqrt() * 0.999_999;
        let x = r * direction(rng.random_range(0.0..2.0 * PI));
        let v = direction(rng.random_range(0.0..2.0 * PI));
        let p = PhasePoint::new(x, v)?;
        let plus = d.exit_time(&p, Sign::Plus)?;
        let minus = d.exit_time(&p, Sign::Minus)?;
        chord_error = chord_error.max((plus + minus - disk_chord(&x, &v)).abs());
        landing_error = landing_error
            .max(((x + plus * v).norm() - 1.0).abs())
            .max(((x - minus * v).norm() - 1.0).abs());
    }

    let resolution = PhaseResolution::default();
    let centre = Vector::new(0.2, -0.1, 0.0);
    let gaussian = phantom("gaussian").expect("catalog phantom").pair;
    let integrands: Vec<(&str, Box<dyn Fn(&Vector, &Vector) -> f64 + Sync>)> = vec![
        ("one", Box::new(|_, _| 1.0)),
        ("radius-squared", Box::new(|x, _| x.norm_squared())),
        (
            "exponential",
            Box::new(|x, v| (x.x + 0.5 * x.y).exp() * (1.0 + v.y).powi(2)),
        ),
        (
            "gaussian-sigma",
            Box::new(move |x, v| gaussian.sigma(x, v) * (2.0 + v.x)),
        ),
        (
            "interior-bump",
            Box::new(move |x, v| {
                let r2 = (x - centre).norm_squared() / 0.36;
                if r2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - r2).powi(8) * (1.0 + 0.5 * v.x)
                }
            }),
        ),
    ];
    let mut route_error: f64 = 0.0;
    for (_, f) in &integrands {
        let volume = phase_space_integral(&d, f, PhaseRoute::Volume, &resolution)?;
        for sign in [Sign::Plus, Sign::Minus] {
            let boundary = phase_space_integral(&d, f, PhaseRoute::Boundary(sign), &resolution)?;
            route_error = route_error.max(((boundary - volume) / volume).abs());
        }
    }
    Ok(Outcome::new(
        chord_error <= 1e-12 && landing_error <= 1e-12 && route_error <= 1e-6,
        format!(
            "chord {chord_error:.1e}, landing {landing_error:.1e} (tol 1e-12); two-route {route_error:.1e} over {} integrands (tol 1e-6)",
            integrands.len()
        ),
    ))
}

fn kernel_closed_forms() -> Result<Outcome> {
    let d = disk();
    let sigma0 = 0.5;
    let pair = CoefficientPair::constant(d, sigma0, 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut ballistic_error: f64 = 0.0;
    let mut e_error: f64 = 0.0;
    for _ in 0..1000 {
        let theta = rng.random_range(0.0..2.0 * PI);
        let psi = rng.random_range(-1.5..1.5);
        let exit = PhasePoint {
            x: d.boundary_point(theta),
            v: d.boundary_direction(theta, psi, Sign::Plus),
        };
        let arrival = ballistic_kernel(&pair, &d, &exit)?;
        let exact = (-sigma0 * 2.0 * f64::cos(psi)).exp();
        ballistic_error = ballistic_error.max((arrival.weight - exact).abs());

        let entry = PhasePoint {
            x: d.boundary_point(theta),
            v: d.boundary_direction(theta, psi, Sign::Minus),
        };
        let s = rng.random::<f64>() * 2.0 * psi.cos();
        let w = direction(rng.random_range(0.0..2.0 * PI));
        let e = attenuation_e(&pair, &d, &entry, s, &w, Sign::Plus)?;
        let out = disk_exit(&(entry.x + s * entry.v), &w);
        e_error = e_error.max((e - (-sigma0 * (s + out)).exp()).abs());
    }

    let mut identity_error: f64 = 0.0;
    let mut points = 0;
    while points < 1000 {
        let theta = rng.random_range(0.0..2.0 * PI);
        let exit = PhasePoint {
            x: d.boundary_point(theta),
            v: d.boundary_direction(theta, rng.random_range(-1.5..1.5), Sign::Plus),
        };
        let source = rng.random::<f64>().sqrt() * 0.99 * direction(rng.random_range(0.0..2.0 * PI));
        let tau = (exit.x - source).norm() + rng.random_range(1e-3..T_MAX);
        let Some(g) = double_scatter_geometry(2, tau, &exit, &source)? else {
            continue;
        };
        let turn = exit.x - g.s1 * exit.v;
        identity_error = identity_error
            .max((g.s1 + (turn - source).norm() - tau).abs())
            .max((g.v1.norm() - 1.0).abs());
        points += 1;
    }
    Ok(Outcome::new(
        ballistic_error <= 1e-10 && e_error <= 1e-10 && identity_error <= 1e-10,
        format!("ballistic {ballistic_error:.1e}, E+ {e_error:.1e}, two-collision identity {identity_error:.1e} at {points} points (tol 1e-10)"),
    ))
}

fn beta_stability() -> Result<Outcome> {
    let d = disk();
    let mut worst: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut finite = true;
    for x in halton_points(&d, 50) {
        let coarse = beta_function(&d, &x, 1.2, T_MAX, BetaResolution::default())?;
        let fine = beta_function(&d, &x, 1.2, T_MAX, BetaResolution::default().refined())?;
        finite &= coarse.is_finite() && fine.is_finite();
        worst = worst.max(((coarse - fine) / fine).abs());
        largest = largest.max(fine);
    }
    Ok(Outcome::new(
        finite && worst < 0.02,
        format!(
            "max refinement change {:.2e}% (tol 2%), max beta {largest:.2} over 50 points, p = 1.2",
            100.0 * worst
        ),
    ))
}

fn narrow_source(solver: &Solver<'_>) -> Result<BoundarySource> {
    Ok(BoundarySource::Mollified(solver.mollified_source(
        diameter_source(),
        0.05,
        0.05,
        ETA,
    )?))
}

fn solver_kernel_equivalence() -> Result<Outcome> {
    let mut gaussian = phantom("gaussian").expect("catalog phantom").pair;
    gaussian.kappa = Scattering {
        profile: SpatialProfile::constant(0.0),
        law: AngularLaw::Isotropic,
    };
    let solver = Solver::new(&gaussian, SolverConfig::default())?;
    let BoundarySource::Mollified(source) = narrow_source(&solver)? else {
        unreachable!()
    };
    let response = solver.solve(&BoundarySource::Mollified(source.clone()))?;
    let dt = response.time.width();
    let mut ballistic_error: f64 = 0.0;
    for (q, (node, parts)) in source
        .phase
        .nodes()
        .iter()
        .zip(response.window.nodes.iter().zip(&response.window.parts))
    {
        let arrival = ballistic_kernel(
            &gaussian,
            &gaussian.domain,
            &PhasePoint {
                x: node.x,
                v: node.v,
            },
        )?;
        let expected =
            q.density * arrival.weight * source.temporal.cdf(response.meta.t_max - arrival.delay);
        let scale = expected.max(1e-300);
        ballistic_error = ballistic_error.max((parts[0].integral(dt) - expected).abs() / scale);
    }

    let constant = phantom("constant").expect("catalog phantom").pair;
    let solver = Solver::new(
        &constant,
        SolverConfig {
            order: 1,
            ..SolverConfig::default()
        },
    )?;
    let BoundarySource::Mollified(source) = narrow_source(&solver)? else {
        unreachable!()
    };
    let response = solver.solve(&BoundarySource::Mollified(source.clone()))?;
    let global = response.global.as_ref().expect("global grid");
    let dt = response.time.width();
    let mut single_error: f64 = 0.0;
    let mut checked = 0;
    for (i, node) in global.nodes.iter().enumerate() {
        // Nodes whose backward ray crosses the source beam well inside the disk.
        if global.excluded[i] || common::crossing_margin(&constant, &source, node) < 0.1 {
            continue;
        }
        let value = global.parts[i][1].integral(dt);
        if value < 1e-4 {
            continue;
        }
        let oracle = common::single_scatter_from_source(&constant, &source, node, 40);
        single_error = single_error.max(((value - oracle) / oracle).abs());
        checked += 1;
    }
    Ok(Outcome::new(
        ballistic_error <= 1e-10 && single_error <= 1e-6 && checked > 0,
        format!("k = 0 trace vs ballistic {ballistic_error:.1e} (tol 1e-10); order 1 vs single-scatter {single_error:.1e} at {checked} nodes (tol 1e-6)"),
    ))
}

/// Relative slack on the growth bound, the same one the solver's guard uses.
const MASS_TOLERANCE: f64 = 1e-9;

fn mass_bounds() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in [
        "vacuum",
        "absorbing",
        "constant",
        "scattering-only",
        "gaussian",
        "gaussian-hg",
    ] {
        let pair = phantom(name).expect("catalog phantom").pair;
        let solver = Solver::new(&pair, SolverConfig::default())?;
        let source = narrow_source(&solver)?;
        let response = solver.solve(&source)?;
        let check = operator_mass_check(&response, &source, solver.budget().sigma_p_sup)?;
        pass &= check.ratio <= check.bound * (1.0 + MASS_TOLERANCE);
        if name == "vacuum" {
            pass &= (check.ratio - 1.0).abs() <= 1e-6;
            parts.push(format!(
                "vacuum |ratio - 1| {:.1e}",
                (check.ratio - 1.0).abs()
            ));
        } else {
            parts.push(format!("{name} {:.4}/{:.3}", check.ratio, check.bound));
        }
    }
    Ok(Outcome::new(
        pass,
        format!(
            "{}; ratio/bound with quadrature tolerance {MASS_TOLERANCE:.0e}",
            parts.join(", ")
        ),
    ))
}

fn reconstruction() -> Result<Outcome> {
    let start = Instant::now();
    let gaussian = phantom("gaussian").expect("catalog phantom").pair;
    let sinogram = Sinogram::scan(&gaussian, 128, 129, &ScanMode::Analytic)?;
    let recon = reconstruct_sigma(&sinogram, gaussian.domain, FbpConfig::default())?;
    let truth = ReconstructionGrid::sample(gaussian.domain, 128, 1.0, &gaussian.sigma.profile);
    let fbp_error = recon.relative_l2_error(&truth)?;

    let constant = phantom("constant").expect("catalog phantom").pair;
    let config = SolverConfig {
        time_bins: 1000,
        ..SolverConfig::default()
    };
    let solver = Solver::new(&constant, config)?;
    let source = solver.mollified_source(diameter_source(), 0.02, 0.02, ETA)?;
    let response = solver.solve(&BoundarySource::Mollified(source))?;
    let true_k = pooled_k(&extract_k(
        &response,
        &constant,
        KExtractionConfig::default(),
    )?)?;
    let sinogram = Sinogram::scan(&constant, 128, 129, &ScanMode::Analytic)?;
    let sigma = reconstruct_sigma(&sinogram, constant.domain, FbpConfig::default())?;
    let fbp_k = pooled_k(&extract_k(&response, &sigma, KExtractionConfig::default())?)?;
    let true_error = (true_k / 0.05 - 1.0).abs();
    let fbp_k_error = (fbp_k / 0.05 - 1.0).abs();
    let elapsed = start.elapsed();
    Ok(Outcome::new(
        fbp_error <= 0.05 && true_error <= 0.02 && fbp_k_error <= 0.03 && elapsed < Duration::from_secs(300),
        format!(
            "FBP L2 {:.2}% (tol 5%); pooled k error {:.2}% true sigma (tol 2%), {:.2}% FBP sigma (tol 3%)",
            100.0 * fbp_error,
            100.0 * true_error,
            100.0 * fbp_k_error
        ),
    ))
}

fn distance_config() -> DistanceConfig {
    DistanceConfig::default()
}

fn operator_distance_inequalities() -> Result<Outcome> {
    let entries = entry_set(&disk(), ENTRIES, 0)?;
    let config = BoundCheckConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["identical", "const-bump", "k-shift"] {
        let pair = phantom_pair(name).expect("catalog pair");
        let (a, b) = (&pair.first.pair, &pair.second.pair);
        let distance = albedo_distance(a, b, &entries, &distance_config())?;
        let mut rows = check_attenuation_rows(a, b, &entries, &distance, &config)?;
        rows.extend(check_scattering_rows(a, &entries, &distance, &config)?);
        let failed = rows.iter().filter(|r| !r.pass).count();
        let max_lhs = rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
        pass &= failed == 0;
        if name == "identical" {
            pass &= max_lhs <= 1e-10;
        }
        parts.push(format!(
            "{name} {}/{} rows, max LHS {max_lhs:.2e}",
            rows.len() - failed,
            rows.len()
        ));
    }
    Ok(Outcome::new(pass, parts.join("; ")))
}

const LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

fn class_stability_tiers() -> Result<Outcome> {
    let entries = entry_set(&disk(), ENTRIES, 0)?;
    let checks = ClassCheckConfig::default();
    let pairs: Vec<PhantomPair> = ["gaussian-ladder-0", "gaussian-hg"]
        .iter()
        .map(|n| phantom_pair(n).expect("catalog pair"))
        .chain(
            LADDER
                .iter()
                .map(|d| phantom_pair(&format!("gaussian-ladder-{d}")).expect("ladder pair")),
        )
        .collect();
    let phantoms = catalog();
    let mut members: Vec<&Phantom> = phantoms.iter().filter(|p| p.class_m.is_some()).collect();
    members.extend(pairs.iter().flat_map(|p| [&p.first, &p.second]));
    let embedding = embedding_constant(&members, &checks)?;

    let mut chain_rows = 0;
    let mut chain_failed = 0;
    let mut rungs = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let distance = albedo_distance(
            &pair.first.pair,
            &pair.second.pair,
            &entries,
            &distance_config(),
        )?;
        let outcome = check_class_rows(pair, &entries, &distance, embedding, &checks)?;
        chain_rows += outcome.rows.len();
        chain_failed += outcome.rows.iter().filter(|r| !r.pass).count();
        if i >= 2 {
            rungs.push(LadderRung {
                delta: LADDER[i - 2],
                sigma_difference: outcome.sigma_difference,
                distance: distance.lower,
                kappa: outcome.kappa_sigma,
            });
        }
    }
    let scaling = check_ladder_scaling(&rungs)?;
    let variation = scaling.iter().map(|r| r.lhs).fold(0.0, f64::max);
    let scaling_ok = scaling.iter().all(|r| r.pass);
    Ok(Outcome::new(
        chain_failed == 0 && scaling_ok,
        format!(
            "chain rows {}/{chain_rows} over {} pairs (D3 = {embedding:.4}); scaling variation {variation:.3} (tol < 2)",
            chain_rows - chain_failed,
            pairs.len()
        ),
    ))
}

fn multiple_scatter_pairing() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["constant", "gaussian-hg"] {
        let pair = phantom(name).expect("catalog phantom").pair;
        let rows = check_multiple_scatter_pairing(&pair, &TailConfig::default())?;
        let failed = rows.iter().filter(|r| !r.pass).count();
        let worst = rows.iter().map(|r| r.lhs / r.rhs).fold(0.0, f64::max);
        pass &= failed == 0 && !rows.is_empty();
        parts.push(format!(
            "{name} {}/{} rungs, C = {:.3}, max LHS/RHS {worst:.2e}",
            rows.len() - failed,
            rows.len(),
            rows[0].constants["C"]
        ));
    }
    Ok(Outcome::new(
        pass,
        format!("{} at p = 1.2", parts.join("; ")),
    ))
}

fn random_field(rng: &mut ChaCha8Rng) -> FieldGrid {
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                rng.random_range(0.15..0.4),
                rng.random_range(-1.0..1.0),
            )
        })
        .collect();
    FieldGrid::sample(64, 2.0, move |x| {
        bumps
            .iter()
            .map(|(cx, cy, w, a)| {
                a * (-((x.x - cx).powi(2) + (x.y - cy).powi(2)) / (2.0 * w * w)).exp()
            })
            .sum()
    })
}

fn interpolation() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let orders = [-0.5, 0.0, 0.5];
    let mut smallest = [f64::INFINITY; 3];
    for _ in 0..20 {
        let field = random_field(&mut rng);
        for (m, s) in smallest.iter_mut().zip(orders) {
            *m = m.min(interpolation_check(&field, s, 1.0)?.margin);
        }
    }
    let detail: Vec<String> = orders
        .iter()
        .zip(&smallest)
        .map(|(s, m)| format!("s = {s}: {m:.3e}"))
        .collect();
    Ok(Outcome::new(
        smallest.iter().all(|m| *m >= 0.0),
        format!(
            "20 fields, smallest margin {} (tol >= 0)",
            detail.join(", ")
        ),
    ))
}

type Criterion = (&'static str, fn() -> Result<Outcome>, Option<Duration>);

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        (
            "geometry identities",
            geometry_identities,
            Some(Duration::from_secs(10)),
        ),
        ("kernel closed forms", kernel_closed_forms, None),
        (
            "integrability function",
            beta_stability,
            Some(Duration::from_secs(120)),
        ),
        ("solver/kernel equivalence", solver_kernel_equivalence, None),
        ("mass bounds", mass_bounds, None),
        (
            "reconstruction",
            reconstruction,
            Some(Duration::from_secs(300)),
        ),
        (
            "operator-distance inequalities",
            operator_distance_inequalities,
            None,
        ),
        ("class-M stability tiers", class_stability_tiers, None),
        ("multiple-scatter pairing", multiple_scatter_pairing, None),
        ("interpolation inequality", interpolation, None),
    ];
    let mut failed = Vec::new();
    for (i, (title, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = result.map(|mut o| {
            if let Some(limit) = budget {
                if elapsed > *limit {
                    o.pass = false;
                    o.detail
                        .push_str(&format!(", over the {} s budget", limit.as_secs()));
                }
            }
            o
        });
        if !report(i + 1, title, result, elapsed) {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
