//! Pipelines behind `run --experiment`.

use albedo_lab::coefficients::{catalog, phantom, phantom_pair, CoefficientPair, PhantomPair};
use albedo_lab::forward::io::write_response;
use albedo_lab::forward::{operator_mass_check, BoundarySource, Solver, SolverConfig};
use albedo_lab::geometry::direction;
use albedo_lab::inversion::{
    extract_k, pooled_k, reconstruct_sigma, FbpConfig, KExtractionConfig, KSample,
    MeasurementConfig, ReconstructionGrid, ScanMode, Sinogram,
};
use albedo_lab::stability::{
    albedo_distance, check_attenuation_rows, check_class_rows, check_ladder_scaling,
    check_multiple_scatter_pairing, check_scattering_rows, embedding_constant, entry_set,
    BoundCheckConfig, ClassCheckConfig, DistanceConfig, Entry, LadderRung, PairInfo,
    StabilityReport, TailConfig,
};
use albedo_lab::{Error, Result};

use crate::config::ExperimentConfig;
use crate::output::Outputs;

/// Outcome of a completed pipeline.
pub struct Completed {
    pub summary: Vec<(String, String)>,
    /// Inequality rows that did not hold.
    pub failed_rows: usize,
}

fn row(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

fn named_phantom(config: &ExperimentConfig) -> Result<CoefficientPair> {
    phantom(&config.phantom)
        .map(|p| p.pair)
        .ok_or_else(|| Error::Invalid(format!("unknown phantom {}", config.phantom)))
}

fn named_pair(name: &str) -> Result<PhantomPair> {
    phantom_pair(name).ok_or_else(|| Error::Invalid(format!("unknown phantom pair {name}")))
}

fn solver_config(config: &ExperimentConfig) -> SolverConfig {
    SolverConfig {
        t_max: config.time.t_max,
        time_bins: config.time.bins,
        boundary_nodes: config.grid.boundary,
        angle_nodes: config.grid.angle,
        window_nodes: config.grid.window,
        order: config.grid.order,
        p: config.kernel.p,
        beta_samples: config.kernel.beta_samples,
        ..SolverConfig::default()
    }
}

fn source_entry(config: &ExperimentConfig) -> Result<Entry> {
    Entry::new(&config.domain, config.source.theta, config.source.psi)
}

pub fn run(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    match config.experiment.as_str() {
        "forward" => forward(config, out),
        "ballistic-sigma" => ballistic_sigma(config, out),
        "scatter-k" => scatter_k(config, out),
        "stability-thm31" => distance_bounds(config, out),
        "stability-thm32" => class_bounds(config, out),
        "multiple-scatter" => multiple_scatter(config, out),
        other => Err(Error::Invalid(format!("unknown experiment {other}"))),
    }
}

fn forward(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_phantom(config)?;
    let solver = Solver::new(&pair, solver_config(config))?;
    let entry = source_entry(config)?;
    let source = solver.mollified_source(
        entry.point,
        config.mollifier.eps1,
        config.mollifier.eps2,
        config.time.eta,
    )?;
    let source = BoundarySource::Mollified(source);
    let mut response = solver.solve(&source)?;
    response.meta.config_hash = Some(config.hash());
    let mass = operator_mass_check(&response, &source, solver.budget().sigma_p_sup)?;
    let files = write_response(&response, &out.dir().join("response"))?;
    for f in files.all() {
        out.track(f);
    }
    let mut summary = vec![
        row("phantom", &config.phantom),
        row("phantom_hash", pair.hash()),
    ];
    for (j, label) in ["ballistic", "single", "double"]
        .iter()
        .enumerate()
        .take(config.grid.order + 1)
    {
        summary.push(row(&format!("mass_{label}"), response.order_mass(j)));
    }
    summary.extend([
        row("outgoing_mass", mass.outgoing),
        row("incoming_mass", mass.incoming),
        row("mass_ratio", mass.ratio),
        row("growth_bound", mass.bound),
        row("tail_bound", response.meta.tail_bound),
    ]);
    for w in &response.meta.warnings {
        summary.push(row("warning", w));
    }
    Ok(Completed {
        summary,
        failed_rows: 0,
    })
}

fn scan_mode(config: &ExperimentConfig) -> ScanMode {
    if config.mollifier.ladder.is_empty() {
        return ScanMode::Analytic;
    }
    let defaults = MeasurementConfig::default();
    ScanMode::Measurement(MeasurementConfig {
        ladder: config.mollifier.ladder.clone(),
        eta: config.time.eta,
        solver: SolverConfig {
            t_max: config.time.t_max,
            window_nodes: config.grid.window,
            ..defaults.solver
        },
        extrapolate: true,
    })
}

fn fbp(
    pair: &CoefficientPair,
    config: &ExperimentConfig,
    mode: &ScanMode,
) -> Result<(Sinogram, ReconstructionGrid)> {
    let sinogram = Sinogram::scan(
        pair,
        config.grid.sinogram_angles,
        config.grid.sinogram_offsets,
        mode,
    )?;
    let recon = reconstruct_sigma(
        &sinogram,
        pair.domain,
        FbpConfig {
            grid: config.grid.reconstruction,
            ..FbpConfig::default()
        },
    )?;
    Ok((sinogram, recon))
}

fn ballistic_sigma(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_phantom(config)?;
    let mode = scan_mode(config);
    let (sinogram, recon) = fbp(&pair, config, &mode)?;
    let reference =
        ReconstructionGrid::sample(pair.domain, recon.n, recon.radius, &pair.sigma.profile);
    let error = recon.relative_l2_error(&reference)?;
    out.csv("sinogram.csv", |p| sinogram.write_csv(p))?;
    out.csv("reconstruction.csv", |p| recon.write_csv(p))?;
    Ok(Completed {
        summary: vec![
            row("phantom", &config.phantom),
            row("phantom_hash", pair.hash()),
            row(
                "line_integrals",
                if config.mollifier.ladder.is_empty() {
                    "analytic"
                } else {
                    "measured"
                },
            ),
            row("angles", sinogram.angles),
            row("offsets", sinogram.offsets),
            row(
                "flagged_lines",
                sinogram.flagged.iter().filter(|f| **f).count(),
            ),
            row("grid", recon.n),
            row("relative_l2_error", error),
        ],
        failed_rows: 0,
    })
}

fn write_k_samples(
    path: &std::path::Path,
    samples: &[KSample],
    pair: &CoefficientPair,
    incoming: &albedo_lab::geometry::Vector,
) -> Result<()> {
    let mut text = String::from("node,depth,angle,x,y,value,true_value,contamination\n");
    for s in samples {
        let point = albedo_lab::geometry::planar(s.point[0], s.point[1]);
        let truth = pair.kappa(&point, incoming, &direction(s.angle));
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.node, s.depth, s.angle, s.point[0], s.point[1], s.value, truth, s.contamination
        ));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn scatter_k(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_phantom(config)?;
    let solver = Solver::new(&pair, solver_config(config))?;
    let entry = source_entry(config)?;
    let source = solver.mollified_source(
        entry.point,
        config.mollifier.eps1,
        config.mollifier.eps2,
        config.time.eta,
    )?;
    let response = solver.solve(&BoundarySource::Mollified(source))?;
    let samples = extract_k(&response, &pair, KExtractionConfig::default())?;
    let pooled_true = pooled_k(&samples)?;
    let (_, recon) = fbp(&pair, config, &ScanMode::Analytic)?;
    let fbp_samples = extract_k(&response, &recon, KExtractionConfig::default())?;
    let pooled_fbp = pooled_k(&fbp_samples)?;
    out.csv("k_samples.csv", |p| {
        write_k_samples(p, &samples, &pair, &entry.point.v)
    })?;
    out.csv("k_samples_fbp.csv", |p| {
        write_k_samples(p, &fbp_samples, &pair, &entry.point.v)
    })?;
    Ok(Completed {
        summary: vec![
            row("phantom", &config.phantom),
            row("phantom_hash", pair.hash()),
            row("samples", samples.len()),
            row("pooled_k_true_sigma", pooled_true),
            row("pooled_k_fbp_sigma", pooled_fbp),
        ],
        failed_rows: 0,
    })
}

fn distance_config(config: &ExperimentConfig) -> DistanceConfig {
    DistanceConfig {
        probes: config.stability.probes,
        probe_eps1: config.mollifier.eps1,
        probe_eps2: config.mollifier.eps2,
        eta: config.time.eta,
        solver: solver_config(config),
        ..DistanceConfig::default()
    }
}

fn base_report(config: &ExperimentConfig, entries: &[Entry]) -> StabilityReport {
    let mut report = StabilityReport::new(&config.experiment);
    report.config_hash = Some(config.hash());
    report.entries = entries.iter().map(|e| [e.theta, e.psi]).collect();
    for (k, v) in [
        ("t_max", config.time.t_max),
        ("eta", config.time.eta),
        ("time_bins", config.time.bins as f64),
        ("boundary_nodes", config.grid.boundary as f64),
        ("angle_nodes", config.grid.angle as f64),
        ("window_nodes", config.grid.window as f64),
        ("order", config.grid.order as f64),
        ("entries", entries.len() as f64),
        ("probes", config.stability.probes as f64),
        ("seed", config.seed as f64),
    ] {
        report.grid.insert(k.into(), v);
    }
    report
}

fn pair_info(pair: &PhantomPair) -> PairInfo {
    PairInfo {
        name: pair.name.clone(),
        first_hash: pair.first.hash(),
        second_hash: pair.second.hash(),
    }
}

fn finish_report(
    report: StabilityReport,
    out: &mut Outputs,
    mut summary: Vec<(String, String)>,
) -> Result<Completed> {
    out.json("report.json", &report)?;
    out.csv("report.csv", |p| report.write_csv(p))?;
    let failed_rows = report.failures().count();
    summary.extend([
        row("rows", report.rows.len()),
        row("failed_rows", failed_rows),
    ]);
    for w in &report.warnings {
        summary.push(row("warning", w));
    }
    Ok(Completed {
        summary,
        failed_rows,
    })
}

fn distance_bounds(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_pair(&config.pair)?;
    let entries = entry_set(&config.domain, config.stability.entries, config.seed)?;
    let (a, b) = (&pair.first.pair, &pair.second.pair);
    let distance = albedo_distance(a, b, &entries, &distance_config(config))?;
    let checks = BoundCheckConfig::default();
    let mut report = base_report(config, &entries);
    report.pairs.push(pair_info(&pair));
    report.rows = check_attenuation_rows(a, b, &entries, &distance, &checks)?;
    report
        .rows
        .extend(check_scattering_rows(a, &entries, &distance, &checks)?);
    for (k, v) in [
        ("lower", distance.lower),
        ("upper", distance.upper),
        ("tail_first", distance.tail_first),
        ("tail_second", distance.tail_second),
    ] {
        report.observations.insert(k.into(), v);
    }
    let summary = vec![
        row("pair", &pair.name),
        row("distance_lower", distance.lower),
        row("distance_upper", distance.upper),
    ];
    finish_report(report, out, summary)
}

fn class_bounds(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_pair(&config.pair)?;
    let entries = entry_set(&config.domain, config.stability.entries, config.seed)?;
    let distance_cfg = distance_config(config);
    let checks = ClassCheckConfig {
        s: config.stability.s,
        r: config.stability.r,
        grid: config.stability.sobolev_grid,
        ..ClassCheckConfig::default()
    };
    let ladder: Vec<PhantomPair> = config
        .stability
        .ladder
        .iter()
        .map(|d| named_pair(&format!("gaussian-ladder-{d}")))
        .collect::<Result<_>>()?;

    let phantoms = catalog();
    let mut members: Vec<&albedo_lab::coefficients::Phantom> =
        phantoms.iter().filter(|p| p.class_m.is_some()).collect();
    members.extend([&pair.first, &pair.second]);
    members.extend(ladder.iter().flat_map(|p| [&p.first, &p.second]));
    let embedding = embedding_constant(&members, &checks)?;

    let mut report = base_report(config, &entries);
    report.observations.insert("D3".into(), embedding);
    let mut rungs = Vec::new();
    for (i, p) in std::iter::once(&pair).chain(&ladder).enumerate() {
        let distance = albedo_distance(&p.first.pair, &p.second.pair, &entries, &distance_cfg)?;
        let outcome = check_class_rows(p, &entries, &distance, embedding, &checks)?;
        report.pairs.push(pair_info(p));
        report.rows.extend(outcome.rows);
        report.warnings.extend(outcome.warnings);
        let prefix = &p.name;
        for (k, v) in [
            ("lower", distance.lower),
            ("upper", distance.upper),
            ("sigma_difference", outcome.sigma_difference),
            ("kernel_entry_difference", outcome.kernel_entry_difference),
            ("kernel_global_difference", outcome.kernel_global_difference),
            ("kappa_sigma", outcome.kappa_sigma),
            ("kappa_k", outcome.kappa_k),
        ] {
            report.observations.insert(format!("{prefix}.{k}"), v);
        }
        if i > 0 {
            rungs.push(LadderRung {
                delta: config.stability.ladder[i - 1],
                sigma_difference: outcome.sigma_difference,
                distance: distance.lower,
                kappa: outcome.kappa_sigma,
            });
        }
    }
    report.rows.extend(check_ladder_scaling(&rungs)?);
    let summary = vec![
        row("pair", &pair.name),
        row("embedding_constant", embedding),
    ];
    finish_report(report, out, summary)
}

fn multiple_scatter(config: &ExperimentConfig, out: &mut Outputs) -> Result<Completed> {
    let pair = named_phantom(config)?;
    let tail = TailConfig {
        solver: solver_config(config),
        eps1: config.mollifier.eps1,
        eps2: config.mollifier.eps2,
        eta: config.time.eta,
        theta: config.source.theta,
        psi: config.source.psi,
        rungs: config.stability.tail_rungs,
    };
    let mut report = base_report(config, &[]);
    report.rows = check_multiple_scatter_pairing(&pair, &tail)?;
    let constant = report.rows[0].constants["C"];
    report.observations.insert("constant".into(), constant);
    report.observations.insert("p".into(), config.kernel.p);
    let summary = vec![row("phantom", &config.phantom), row("constant", constant)];
    finish_report(report, out, summary)
}
