use albedo_lab::coefficients::{phantom, Attenuation, CoefficientPair, SpatialProfile};
use albedo_lab::forward::{BoundarySource, Solver, SolverConfig};
use albedo_lab::geometry::{Domain, PhasePoint};
use albedo_lab::inversion::*;
use albedo_lab::Error;

fn diameter_source() -> PhasePoint {
    PhasePoint::planar(-1.0, 0.0, 0.0)
}

fn ballistic(pair: &CoefficientPair, center: PhasePoint, eps: f64) -> BallisticEstimate {
    let solver = Solver::new(
        pair,
        SolverConfig {
            window_only: true,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let source = solver.mollified_source(center, eps, eps, 0.25).unwrap();
    extract_ballistic(&solver.solve(&BoundarySource::Mollified(source)).unwrap()).unwrap()
}

#[test]
fn vacuum_arrival_is_complete() {
    let pair = phantom("vacuum").unwrap().pair;
    let estimate = ballistic(&pair, diameter_source(), 0.05);
    assert!((estimate.value - 1.0).abs() < 1e-6, "{estimate:?}");
    assert_eq!(estimate.contamination, 0.0);
}

#[test]
fn absorbing_diameter_arrival() {
    let pair = phantom("absorbing").unwrap().pair;
    let estimate = ballistic(&pair, diameter_source(), 1e-3);
    assert!(
        (estimate.value - (-1.0f64).exp()).abs() < 1e-6,
        "{estimate:?}"
    );
    let ladder: Vec<(f64, f64)> = [0.1, 0.05]
        .iter()
        .map(|e| (*e, ballistic(&pair, diameter_source(), *e).value))
        .collect();
    let limit = extrapolate_ladder(&ladder).unwrap();
    assert!((limit - (-1.0f64).exp()).abs() < 1e-6, "{limit}");
}

#[test]
fn scattering_contamination_is_reported() {
    let pair = CoefficientPair::new(
        Domain::UnitDisk,
        phantom("gaussian").unwrap().pair.sigma,
        albedo_lab::coefficients::Scattering {
            profile: SpatialProfile::constant(0.05),
            law: albedo_lab::coefficients::AngularLaw::Isotropic,
        },
    );
    let center = PhasePoint::planar(-0.8, -0.6, 0.5);
    let estimate = ballistic(&pair, center, 0.02);
    let (entry, length) = Line::through(&center).chord(&pair.domain).unwrap();
    let oracle = (-pair.optical_depth(&entry.x, &entry.v, 0.0, length)).exp();
    assert!(estimate.contamination > 0.0);
    assert!(
        (estimate.ballistic - oracle).abs() < 1e-3,
        "{} vs {oracle}",
        estimate.ballistic
    );
    assert!((estimate.value - oracle).abs() <= estimate.contamination + 1e-3);
}

#[test]
fn extraction_needs_a_long_window() {
    let pair = phantom("vacuum").unwrap().pair;
    let solver = Solver::new(
        &pair,
        SolverConfig {
            t_max: 1.5,
            time_bins: 50,
            window_only: true,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let source = solver
        .mollified_source(diameter_source(), 0.05, 0.05, 0.25)
        .unwrap();
    let response = solver.solve(&BoundarySource::Mollified(source)).unwrap();
    assert!(matches!(
        extract_ballistic(&response),
        Err(Error::OutOfRange(_))
    ));
}

#[test]
fn analytic_scan_examples() {
    let pair = CoefficientPair::constant(Domain::UnitDisk, 0.7, 0.0);
    let lines = [
        Line::new(0.2, 0.5),
        Line::new(1.0, 1.3),
        Line::new(2.0, -0.1),
    ];
    let samples = xray_transform_scan(&pair, &lines, &ScanMode::Analytic).unwrap();
    assert!((samples[0].value - 0.7 * 2.0 * (0.75f64).sqrt()).abs() < 1e-14);
    assert_eq!(samples[1].value, 0.0);
    let gaussian = phantom("gaussian").unwrap().pair;
    let there = xray_transform_scan(&gaussian, &lines, &ScanMode::Analytic).unwrap();
    let back: Vec<Line> = lines.iter().map(Line::reversed).collect();
    let back = xray_transform_scan(&gaussian, &back, &ScanMode::Analytic).unwrap();
    for (a, b) in there.iter().zip(&back) {
        assert!((a.value - b.value).abs() < 1e-12 && a.value >= 0.0);
    }
}

#[test]
fn measurement_scan_matches_closed_form() {
    let pair = phantom("gaussian").unwrap().pair;
    let lines = [
        Line::new(0.3, 0.1),
        Line::new(1.0, -0.4),
        Line::new(2.0, 1.5),
        Line::new(0.5, 0.99999999),
    ];
    let analytic = xray_transform_scan(&pair, &lines, &ScanMode::Analytic).unwrap();
    let measured = xray_transform_scan(
        &pair,
        &lines,
        &ScanMode::Measurement(MeasurementConfig::default()),
    )
    .unwrap();
    for (a, m) in analytic.iter().zip(&measured).take(2) {
        assert!(!m.flagged);
        assert!(
            (a.value - m.value).abs() < 1e-3,
            "{:?}: {} vs {}",
            a.line,
            a.value,
            m.value
        );
        let rungs = &m.extraction.as_ref().unwrap().rungs;
        let errors: Vec<f64> = rungs
            .iter()
            .map(|(_, b)| (-b.value.ln() - a.value).abs())
            .collect();
        assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    }
    assert!(!measured[2].flagged && measured[2].value == 0.0);
    assert!(measured[3].flagged);
}

fn disk_sinogram(angles: usize, offsets: usize, sigma: f64) -> Sinogram {
    let lines = Sinogram::lines(angles, offsets, 1.0);
    let values: Vec<f64> = lines
        .iter()
        .map(|l| 2.0 * sigma * (1.0 - l.offset * l.offset).max(0.0).sqrt())
        .collect();
    Sinogram {
        angles,
        offsets,
        radius: 1.0,
        flagged: vec![false; values.len()],
        values,
    }
}

#[test]
fn uniform_disk_reconstruction() {
    let recon = reconstruct_sigma(
        &disk_sinogram(128, 129, 0.5),
        Domain::UnitDisk,
        FbpConfig::default(),
    )
    .unwrap();
    let inner: Vec<f64> = (0..recon.n * recon.n)
        .filter(|i| recon.point(i % recon.n, i / recon.n).norm() < 0.5)
        .map(|i| recon.values[i])
        .collect();
    let mean = inner.iter().sum::<f64>() / inner.len() as f64;
    assert!((mean - 0.5).abs() < 0.01, "{mean}");
    let zero = reconstruct_sigma(
        &disk_sinogram(64, 65, 0.0),
        Domain::UnitDisk,
        FbpConfig::default(),
    )
    .unwrap();
    assert!(zero.values.iter().all(|v| *v == 0.0));
    assert!(matches!(
        reconstruct_sigma(
            &disk_sinogram(31, 65, 0.5),
            Domain::UnitDisk,
            FbpConfig::default()
        ),
        Err(Error::OutOfRange(_))
    ));
}

#[test]
fn gaussian_reconstruction_and_linearity() {
    let pair = phantom("gaussian").unwrap().pair;
    let sinogram = Sinogram::scan(&pair, 128, 129, &ScanMode::Analytic).unwrap();
    let recon = reconstruct_sigma(&sinogram, pair.domain, FbpConfig::default()).unwrap();
    let truth = ReconstructionGrid::sample(pair.domain, 128, 1.0, &pair.sigma.profile);
    let error = recon.relative_l2_error(&truth).unwrap();
    assert!(error <= 0.05, "{error}");

    let disk = disk_sinogram(128, 129, 0.3);
    let mut sum = sinogram.clone();
    for (s, d) in sum.values.iter_mut().zip(&disk.values) {
        *s += d;
    }
    let config = FbpConfig::default();
    let a = reconstruct_sigma(&sinogram, pair.domain, config).unwrap();
    let b = reconstruct_sigma(&disk, pair.domain, config).unwrap();
    let ab = reconstruct_sigma(&sum, pair.domain, config).unwrap();
    for ((x, y), z) in a.values.iter().zip(&b.values).zip(&ab.values) {
        assert!((x + y - z).abs() < 1e-12);
    }
}

#[test]
fn grid_line_integrals() {
    let profile = SpatialProfile::constant(0.4);
    let grid = ReconstructionGrid::sample(Domain::UnitDisk, 128, 1.0, &profile);
    let entry = diameter_source();
    let depth = grid.optical_depth(&entry.x, &entry.v, 0.1, 1.9);
    assert!((depth - 0.4 * 1.8).abs() < 1e-12);
}

fn k_response(
    pair: &CoefficientPair,
    eps: f64,
    order: usize,
) -> albedo_lab::forward::AlbedoResponse {
    let config = SolverConfig {
        time_bins: 1000,
        order,
        ..SolverConfig::default()
    };
    let solver = Solver::new(pair, config).unwrap();
    let source = solver
        .mollified_source(diameter_source(), eps, eps, 0.25)
        .unwrap();
    solver.solve(&BoundarySource::Mollified(source)).unwrap()
}

#[test]
fn single_scatter_in_vacuum_gives_k_directly() {
    let pair = CoefficientPair::constant(Domain::UnitDisk, 0.0, 0.05);
    let response = k_response(&pair, 0.02, 1);
    let samples = extract_k(&response, &pair, KExtractionConfig::default()).unwrap();
    assert!(samples.len() > 300);
    for s in &samples {
        assert_eq!(s.extinction, 1.0);
        assert!((s.value - 0.05).abs() < 1e-3 * 0.05, "{s:?}");
    }
}

#[test]
fn no_scattering_gives_zero() {
    let pair = phantom("absorbing").unwrap().pair;
    let response = k_response(&pair, 0.05, 2);
    let samples = extract_k(&response, &pair, KExtractionConfig::default()).unwrap();
    assert!(samples.iter().all(|s| s.value == 0.0));
}

#[test]
fn constant_k_recovery() {
    let pair = phantom("constant").unwrap().pair;
    let response = k_response(&pair, 0.02, 2);
    let samples = extract_k(&response, &pair, KExtractionConfig::default()).unwrap();
    let pooled = pooled_k(&samples).unwrap();
    assert!((pooled / 0.05 - 1.0).abs() < 0.02, "{pooled}");
    for s in &samples {
        let error = (s.value / 0.05 - 1.0).abs();
        assert!(error <= s.contamination.abs() + 0.01, "{s:?}");
        assert!(s.gate.width() >= 2.0 * 0.02);
    }

    let sinogram = Sinogram::scan(&pair, 128, 129, &ScanMode::Analytic).unwrap();
    let recon = reconstruct_sigma(&sinogram, pair.domain, FbpConfig::default()).unwrap();
    let pooled =
        pooled_k(&extract_k(&response, &recon, KExtractionConfig::default()).unwrap()).unwrap();
    assert!((pooled / 0.05 - 1.0).abs() < 0.03, "{pooled}");
}

#[test]
fn k_extraction_preconditions() {
    let pair = phantom("constant").unwrap().pair;
    let solver = Solver::new(
        &pair,
        SolverConfig {
            t_max: 3.5,
            time_bins: 100,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let source = solver
        .mollified_source(diameter_source(), 0.05, 0.05, 0.25)
        .unwrap();
    let short = solver.solve(&BoundarySource::Mollified(source)).unwrap();
    assert!(matches!(
        extract_k(&short, &pair, KExtractionConfig::default()),
        Err(Error::OutOfRange(_))
    ));

    let solver = Solver::new(
        &pair,
        SolverConfig {
            window_only: true,
            ..SolverConfig::default()
        },
    )
    .unwrap();
    let source = solver
        .mollified_source(diameter_source(), 0.05, 0.05, 0.25)
        .unwrap();
    let windowed = solver.solve(&BoundarySource::Mollified(source)).unwrap();
    assert!(matches!(
        extract_k(&windowed, &pair, KExtractionConfig::default()),
        Err(Error::Invalid(_))
    ));

    let opaque = CoefficientPair::constant(Domain::UnitDisk, 12.0, 0.05);
    let response = k_response(&opaque, 0.05, 1);
    assert!(matches!(
        extract_k(&response, &opaque, KExtractionConfig::default()),
        Err(Error::Singular(_))
    ));
}

#[test]
fn exports_are_plain_csv() {
    let pair = phantom("gaussian").unwrap().pair;
    let sinogram = Sinogram::scan(&pair, 32, 17, &ScanMode::Analytic).unwrap();
    let recon = reconstruct_sigma(
        &sinogram,
        pair.domain,
        FbpConfig {
            grid: 16,
            ..FbpConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    sinogram.write_csv(&dir.path().join("s.csv")).unwrap();
    recon.write_csv(&dir.path().join("r.csv")).unwrap();
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 32 * 17);
    assert!(text.starts_with("angle,offset,value,flagged"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("r.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 256
    );
}
