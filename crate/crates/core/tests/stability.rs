use std::f64::consts::PI;

use albedo_lab::coefficients::{phantom, phantom_pair, CoefficientPair};
use albedo_lab::geometry::{Domain, Sign, SphereQuadrature};
use albedo_lab::quadrature::GaussLegendre;
use albedo_lab::stability::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> DistanceConfig {
    DistanceConfig {
        probes: 2,
        ..DistanceConfig::default()
    }
}

fn pair(name: &str) -> (CoefficientPair, CoefficientPair) {
    let p = phantom_pair(name).unwrap();
    (p.first.pair, p.second.pair)
}

fn disk_entries(n: usize) -> Vec<Entry> {
    entry_set(&Domain::UnitDisk, n, 0).unwrap()
}

#[test]
fn identical_phantoms_have_zero_lower_and_tail_upper() {
    let (a, b) = pair("identical");
    let d = albedo_distance(&a, &b, &disk_entries(6), &small()).unwrap();
    assert!(d.lower <= 1e-10);
    assert!(d.tail_first > 0.0);
    assert_eq!(d.upper, d.tail_first + d.tail_second);
}

#[test]
fn constant_bump_lower_is_the_largest_ballistic_difference() {
    let (a, b) = pair("const-bump");
    let entries = disk_entries(8);
    let config = DistanceConfig {
        probes: entries.len(),
        ..DistanceConfig::default()
    };
    let d = albedo_distance(&a, &b, &entries, &config).unwrap();
    // Unit disk: chord 2 cos ψ.
    let exact = entries
        .iter()
        .map(|e| {
            let l = 2.0 * e.psi.cos();
            ((-0.5 * l).exp() - (-0.6 * l).exp()).abs()
        })
        .fold(0.0, f64::max);
    assert!(
        (d.lower - exact).abs() < 1e-3 * exact,
        "{} vs {exact}",
        d.lower
    );
    assert!((d.upper - exact).abs() < 1e-12);
}

#[test]
fn halving_the_perturbation_halves_the_lower_estimate() {
    let entries = disk_entries(4);
    let lower = |delta: f64| {
        let (a, b) = pair(&format!("gaussian-ladder-{delta}"));
        albedo_distance(&a, &b, &entries, &small()).unwrap().lower
    };
    let ratio = lower(0.05) / lower(0.1);
    assert!((ratio - 0.5).abs() < 0.025, "ratio {ratio}");
}

#[test]
fn distance_is_symmetric() {
    let (a, b) = pair("k-shift");
    let entries = disk_entries(4);
    let ab = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let ba = albedo_distance(&b, &a, &entries, &small()).unwrap();
    assert!((ab.upper - ba.upper).abs() < 1e-12 * ab.upper);
    assert!((ab.lower - ba.lower).abs() < 1e-12 * ab.lower);
    assert!(ab.lower <= ab.upper);
}

#[test]
fn different_domains_are_rejected() {
    let a = CoefficientPair::constant(Domain::UnitDisk, 0.5, 0.0);
    let b = CoefficientPair::constant(Domain::Ellipse { a: 1.2, b: 0.8 }, 0.5, 0.0);
    assert!(albedo_distance(&a, &b, &disk_entries(2), &small()).is_err());
}

#[test]
fn bound_identical_rows_pass_with_zero_lhs() {
    let (a, b) = pair("identical");
    let entries = disk_entries(10);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let config = BoundCheckConfig::default();
    let rows: Vec<_> = check_attenuation_rows(&a, &b, &entries, &d, &config)
        .unwrap()
        .into_iter()
        .chain(check_scattering_rows(&a, &entries, &d, &config).unwrap())
        .collect();
    assert!(rows.iter().all(|r| r.pass && r.lhs <= 1e-10));
}

#[test]
fn bound_constant_bump_rows_match_the_chord_formula() {
    let (a, b) = pair("const-bump");
    let entries = disk_entries(20);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let rows = check_attenuation_rows(&a, &b, &entries, &d, &BoundCheckConfig::default()).unwrap();
    assert!(rows.iter().all(|r| r.pass));
    for r in rows.iter().filter(|r| r.name == "attenuation") {
        let l = 2.0 * entries[r.entry.unwrap()].psi.cos();
        let exact = ((-0.5 * l).exp() - (-0.6 * l).exp()).abs();
        assert!((r.lhs - exact).abs() < 1e-12);
    }
    assert_eq!(
        rows.iter()
            .filter(|r| r.name == "attenuation-probe")
            .count(),
        3
    );
}

#[test]
fn bound_ladder_shrinks_with_bounded_ratio() {
    let entries = disk_entries(6);
    let mut previous: Option<(f64, f64)> = None;
    for delta in [0.2, 0.1, 0.05] {
        let (a, b) = pair(&format!("gaussian-ladder-{delta}"));
        let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
        let rows =
            check_attenuation_rows(&a, &b, &entries, &d, &BoundCheckConfig::default()).unwrap();
        assert!(rows.iter().all(|r| r.pass));
        let lhs = rows.iter().map(|r| r.lhs).fold(0.0, f64::max);
        let explicit = d.upper - d.tail_first - d.tail_second;
        assert!(lhs / explicit > 0.5 && lhs <= explicit);
        if let Some((l, u)) = previous {
            assert!(lhs < l && explicit < u);
        }
        previous = Some((lhs, explicit));
    }
}

#[test]
fn bound_ii_scattering_shift_against_direct_quadrature() {
    let (a, b) = pair("k-shift");
    let entries = disk_entries(5);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let rows = check_scattering_rows(&a, &entries, &d, &BoundCheckConfig::default()).unwrap();
    // Constant σ = 0.5: E₊ = exp(−0.5 (s + τ₊(x′ + s v′, v))).
    let rule = GaussLegendre::new(40);
    let sphere = SphereQuadrature::new(2, 400);
    for (r, e) in rows.iter().zip(&entries) {
        assert!(r.pass);
        assert_eq!(r.constants["sup_e_difference"], 0.0);
        let integral: f64 = rule
            .on(0.0, e.chord)
            .map(|(s, w)| {
                let y = e.point.x + s * e.point.v;
                w * sphere
                    .iter()
                    .map(|(v, wv)| {
                        wv * (-0.5 * (s + Domain::UnitDisk.travel(&y, v, Sign::Plus))).exp()
                    })
                    .sum::<f64>()
            })
            .sum();
        let expected = 0.01 * integral;
        assert!(
            (r.lhs - expected).abs() < 1e-4 * expected,
            "{} vs {expected}",
            r.lhs
        );
    }
}

#[test]
fn bound_ii_absorption_only_change_has_zero_lhs() {
    let (a, b) = pair("gaussian-ladder-0.1");
    let entries = disk_entries(3);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    for r in check_scattering_rows(&a, &entries, &d, &BoundCheckConfig::default()).unwrap() {
        assert!(r.pass && r.lhs == 0.0 && r.rhs > 0.0);
    }
}

#[test]
fn bound_requires_long_observation() {
    let (a, b) = pair("const-bump");
    let entries = disk_entries(2);
    let mut config = small();
    config.solver.t_max = 3.0;
    let d = albedo_distance(&a, &b, &entries, &config).unwrap();
    assert!(check_attenuation_rows(&a, &b, &entries, &d, &BoundCheckConfig::default()).is_ok());
    assert!(check_scattering_rows(&a, &entries, &d, &BoundCheckConfig::default()).is_err());
}

#[test]
fn class_identical_gaussian_pair() {
    let pair = phantom_pair("gaussian-ladder-0").unwrap();
    let entries = disk_entries(6);
    let d = albedo_distance(&pair.first.pair, &pair.second.pair, &entries, &small()).unwrap();
    let config = ClassCheckConfig::default();
    let d3 = embedding_constant(&[&pair.first], &config).unwrap();
    let out = check_class_rows(&pair, &entries, &d, d3, &config).unwrap();
    assert!(out.rows.iter().all(|r| r.pass));
    assert_eq!(out.sigma_difference, 0.0);
    assert_eq!(out.kernel_entry_difference, 0.0);
    assert_eq!(out.kappa_sigma, 1.0);
    assert!(out
        .rows
        .iter()
        .filter(|r| r.name.starts_with("5.3"))
        .all(|r| r.entry.is_none() || r.lhs == 0.0));
}

#[test]
fn class_chain_rows_pass_on_the_ladder() {
    let pair = phantom_pair("gaussian-ladder-0.1").unwrap();
    let entries = disk_entries(8);
    let d = albedo_distance(&pair.first.pair, &pair.second.pair, &entries, &small()).unwrap();
    let config = ClassCheckConfig::default();
    let d3 = embedding_constant(&[&pair.first, &pair.second], &config).unwrap();
    let out = check_class_rows(&pair, &entries, &d, d3, &config).unwrap();
    for name in [
        "sigma-embedding",
        "sigma-class-norm",
        "depth-gap",
        "depth-mean-value",
        "attenuation-floor",
        "attenuation-difference",
    ] {
        let rows: Vec<_> = out.rows.iter().filter(|r| r.name == name).collect();
        assert!(!rows.is_empty(), "{name}");
        assert!(rows.iter().all(|r| r.pass), "{name}");
    }
    assert!(out.sigma_difference > 0.0);
}

#[test]
fn class_needs_class_data() {
    let pair = phantom_pair("const-bump").unwrap();
    let entries = disk_entries(2);
    let d = albedo_distance(&pair.first.pair, &pair.second.pair, &entries, &small()).unwrap();
    assert!(check_class_rows(&pair, &entries, &d, 1.0, &ClassCheckConfig::default()).is_err());
}

#[test]
fn attenuation_floor_for_constant_pairs() {
    let (a, b) = pair("k-shift");
    let entries = disk_entries(6);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let rows = attenuation_floor_rows(&d.terms, 2.0, 0.5, 1e-12);
    assert!(rows.iter().all(|r| r.pass && r.lhs > 0.0));
    // The floor e^{−2·diam·σ₀} is below the smallest broken-ray attenuation e^{−σ₀·2·diam}.
    assert!(rows
        .iter()
        .all(|r| r.constants["floor"] <= r.constants["min_e"]));
}

#[test]
fn scaling_tier_flags_variation() {
    let rung = |delta: f64, distance: f64| LadderRung {
        delta,
        sigma_difference: delta,
        distance,
        kappa: 1.0,
    };
    let flat = check_ladder_scaling(&[rung(0.2, 0.2), rung(0.1, 0.11)]).unwrap();
    assert!(flat.iter().all(|r| r.pass));
    let steep = check_ladder_scaling(&[rung(0.2, 0.2), rung(0.1, 0.01)]).unwrap();
    assert!(steep.iter().any(|r| !r.pass));
}

#[test]
fn sobolev_zero_field() {
    let f = FieldGrid::sample(32, 2.0, |_| 0.0);
    assert_eq!(sobolev_norm(&f, 1.5).value, 0.0);
}

#[test]
fn sobolev_l2_matches_analytic_gaussian() {
    // ∫ exp(−|x|²/w²) dx = π w².
    let w = 0.3;
    let f = FieldGrid::sample(128, 2.0, |x| (-x.norm_squared() / (2.0 * w * w)).exp());
    let norm = sobolev_norm(&f, 0.0).value;
    assert!((norm - (PI * w * w).sqrt()).abs() < 1e-8);
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

#[test]
fn interpolation_holds_for_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let f = random_field(&mut rng);
        for s in [-0.5, 0.0, 0.5] {
            let check = interpolation_check(&f, s, 1.0).unwrap();
            assert!(check.margin >= 0.0, "{check:?}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn sobolev_norm_is_monotone(seed in any::<u64>(), s in -0.5f64..2.0, step in 0.0f64..1.0) {
        let f = random_field(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(sobolev_norm(&f, s).value <= sobolev_norm(&f, s + step).value * (1.0 + 1e-12));
    }
}

#[test]
fn tail_vanishes_without_scattering() {
    let pair = phantom("absorbing").unwrap().pair;
    let rows = check_multiple_scatter_pairing(&pair, &TailConfig::default()).unwrap();
    assert!(rows.iter().all(|r| r.pass && r.lhs == 0.0 && r.rhs == 0.0));
}

#[test]
fn tail_ladder_stays_below_the_constant() {
    let pair = phantom("constant").unwrap().pair;
    let config = TailConfig {
        rungs: 4,
        ..TailConfig::default()
    };
    let rows = check_multiple_scatter_pairing(&pair, &config).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.pass && r.lhs > 0.0));
    let full = &rows[0];
    let expected = 5.0 * pair.domain.gamma_measure();
    assert!((full.constants["support_measure"] - expected).abs() < 1e-2 * expected);
    assert!(rows
        .windows(2)
        .all(|w| w[1].constants["support_measure"] < w[0].constants["support_measure"]));
}

#[test]
fn report_files() {
    let (a, b) = pair("const-bump");
    let entries = disk_entries(4);
    let d = albedo_distance(&a, &b, &entries, &small()).unwrap();
    let mut report = StabilityReport::new("stability-thm31");
    report.entries = entries.iter().map(|e| [e.theta, e.psi]).collect();
    report.rows =
        check_attenuation_rows(&a, &b, &entries, &d, &BoundCheckConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("r.json");
    report.write_json(&json).unwrap();
    assert_eq!(StabilityReport::read_json(&json).unwrap(), report);
    let csv = dir.path().join("r.csv");
    report.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), report.rows.len() + 1);
    assert!(text.starts_with("name,entry,theta,psi,lhs,rhs,tolerance,margin,pass"));
}
