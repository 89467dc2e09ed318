//! Row generators for the stability inequalities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::distance::{EntryTerms, OperatorDistance};
use super::report::ReportRow;
use super::sobolev::{sobolev_norm, FieldGrid};
use super::Entry;
use crate::coefficients::{
    check_admissible, Attenuation, CoefficientPair, Phantom, PhantomPair, SamplingResolution,
};
use crate::error::{Error, Result};
use crate::forward::source::wrap;
use crate::forward::{kernel_budget, BoundarySource, ResponseGrid, Solver, SolverConfig};
use crate::geometry::{angle_of, SphereQuadrature};
use crate::kernels::halton_points;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundCheckConfig {
    /// Relative quadrature tolerance on the upper-estimate rows.
    pub quadrature_tolerance: f64,
    /// Relative slack between a ray's attenuation difference and its mollified probe.
    pub probe_relative: f64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            quadrature_tolerance: 1e-9,
            probe_relative: 0.02,
        }
    }
}

fn check_terms(entries: &[Entry], distance: &OperatorDistance) -> Result<()> {
    if entries.len() != distance.terms.len() {
        return Err(Error::GridMismatch(format!(
            "{} entries against a distance evaluated on {}",
            entries.len(),
            distance.terms.len()
        )));
    }
    Ok(())
}

fn require_time(
    distance: &OperatorDistance,
    diameters: f64,
    first: &CoefficientPair,
) -> Result<()> {
    let need = diameters * first.domain.diameter();
    if distance.t_max <= need {
        return Err(Error::OutOfRange(format!(
            "T = {} must exceed {diameters}·diam(X) = {need}",
            distance.t_max
        )));
    }
    Ok(())
}

/// Per entry, `|e^{−Pσ} − e^{−Pσ̃}| ≤ ‖A − Ã‖` against the upper estimate, and
/// against the entry's own probe when it was probed.
pub fn check_attenuation_rows(
    first: &CoefficientPair,
    second: &CoefficientPair,
    entries: &[Entry],
    distance: &OperatorDistance,
    config: &BoundCheckConfig,
) -> Result<Vec<ReportRow>> {
    require_time(distance, 1.0, first)?;
    check_terms(entries, distance)?;
    let mut rows = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        let depth_first = first.optical_depth(&e.point.x, &e.point.v, 0.0, e.chord);
        let depth_second = second.optical_depth(&e.point.x, &e.point.v, 0.0, e.chord);
        let lhs = ((-depth_first).exp() - (-depth_second).exp()).abs();
        rows.push(
            ReportRow::new(
                "attenuation",
                Some(i),
                lhs,
                distance.upper,
                1e-12 + config.quadrature_tolerance * distance.upper,
            )
            .with("chord", e.chord)
            .with("depth_first", depth_first)
            .with("depth_second", depth_second)
            .with("lower", distance.lower)
            .with("tail", distance.tail_first + distance.tail_second),
        );
        if let Some(probe) = distance.probe_at(i) {
            rows.push(
                ReportRow::new(
                    "attenuation-probe",
                    Some(i),
                    lhs,
                    probe.value,
                    1e-10 + config.probe_relative * lhs,
                )
                .with("eps1", probe.eps1),
            );
        }
    }
    Ok(rows)
}

/// Per entry, `∫∫|k − k̃|E₊ ≤ τ₊ sup σ̃_p sup|E₊ − Ẽ₊| + ‖A − Ã‖`.
pub fn check_scattering_rows(
    first: &CoefficientPair,
    entries: &[Entry],
    distance: &OperatorDistance,
    config: &BoundCheckConfig,
) -> Result<Vec<ReportRow>> {
    require_time(distance, 2.0, first)?;
    check_terms(entries, distance)?;
    Ok(distance
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let attenuation = t.chord * t.sup_sigma_p_second * t.sup_e_difference;
            let rhs = attenuation + distance.upper;
            ReportRow::new(
                "scattering",
                Some(i),
                t.kernel_weighted,
                rhs,
                1e-12 + config.quadrature_tolerance * rhs,
            )
            .with("chord", t.chord)
            .with("sup_sigma_p_second", t.sup_sigma_p_second)
            .with("sup_e_difference", t.sup_e_difference)
            .with("upper", distance.upper)
        })
        .collect())
}

/// `κ` of the extinction estimate: `(d + 2(r̃ − s))/(d + 1 + 2r̃)`.
pub fn kappa_sigma(dimension: usize, s: f64, extra_smoothness: f64) -> f64 {
    let d = dimension as f64;
    (d + 2.0 * (extra_smoothness - s)) / (d + 1.0 + 2.0 * extra_smoothness)
}

/// `κ` of the scattering estimates: `2(r̃ − r)/(d + 1 + 2r̃)`.
pub fn kappa_k(dimension: usize, r: f64, extra_smoothness: f64) -> f64 {
    let d = dimension as f64;
    2.0 * (extra_smoothness - r) / (d + 1.0 + 2.0 * extra_smoothness)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassCheckConfig {
    pub s: f64,
    pub r: f64,
    /// Samples per axis of the Sobolev grid.
    pub grid: usize,
    /// Factor on the empirical embedding ratio.
    pub embedding_safety: f64,
    pub tolerance: f64,
}

impl Default for ClassCheckConfig {
    fn default() -> Self {
        Self {
            s: -0.5,
            r: 0.0,
            grid: 128,
            embedding_safety: 1.5,
            tolerance: 1e-12,
        }
    }
}

fn sigma_field(phantom: &Phantom, n: usize) -> Result<FieldGrid> {
    if !phantom.pair.sigma_isotropic() {
        return Err(Error::Unsupported(format!(
            "{}: the norm estimates need isotropic σ",
            phantom.name
        )));
    }
    FieldGrid::from_profile(&phantom.pair.domain, n, &phantom.pair.sigma.profile)
}

/// Grid maximum, checked against the profile at its bump centres.
fn sigma_sup(phantom: &Phantom, field: &FieldGrid) -> f64 {
    let profile = &phantom.pair.sigma.profile;
    profile
        .bumps
        .iter()
        .map(|b| profile.value(&b.center_vector()).abs())
        .fold(field.sup(), f64::max)
}

/// `1.5 · max ‖σ‖∞ / ‖σ‖_{H^{d/2 + r̃}}` over the phantoms carrying class data.
pub fn embedding_constant(phantoms: &[&Phantom], config: &ClassCheckConfig) -> Result<f64> {
    let mut ratio: f64 = 0.0;
    let mut seen = false;
    for p in phantoms {
        let Some(class) = p.class_m else { continue };
        let field = sigma_field(p, config.grid)?;
        let high = sobolev_norm(
            &field,
            p.pair.dimension() as f64 / 2.0 + class.extra_smoothness,
        )
        .value;
        if high > 0.0 {
            ratio = ratio.max(sigma_sup(p, &field) / high);
            seen = true;
        }
    }
    if !seen {
        return Err(Error::Invalid(
            "no phantom with class data and nonzero σ to estimate the embedding".into(),
        ));
    }
    Ok(config.embedding_safety * ratio)
}

/// `e^{−2 diam·sup σ} ∫∫|k − k̃| ≤ ∫∫|k − k̃| E₊` per entry.
pub fn attenuation_floor_rows(
    terms: &[EntryTerms],
    diameter: f64,
    sigma_bound: f64,
    tolerance: f64,
) -> Vec<ReportRow> {
    let floor = (-2.0 * diameter * sigma_bound).exp();
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            ReportRow::new(
                "attenuation-floor",
                Some(i),
                floor * t.kernel_l1,
                t.kernel_weighted,
                tolerance * t.kernel_weighted,
            )
            .with("floor", floor)
            .with("min_e", t.min_e)
        })
        .collect()
}

/// Values of the left-hand sides of the quantitative estimates for one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCheckOutcome {
    pub rows: Vec<ReportRow>,
    /// `‖σ − σ̃‖_{H^s}`.
    pub sigma_difference: f64,
    /// Largest per-entry `∫∫|k − k̃|`.
    pub kernel_entry_difference: f64,
    /// `∫_X ∫∫ |k − k̃| dx dv′ dv`.
    pub kernel_global_difference: f64,
    pub embedding: f64,
    pub bound: f64,
    pub extra_smoothness: f64,
    pub kappa_sigma: f64,
    pub kappa_k: f64,
    pub warnings: Vec<String>,
}

/// The computable links of the quantitative estimate for a pair in the class.
pub fn check_class_rows(
    pair: &PhantomPair,
    entries: &[Entry],
    distance: &OperatorDistance,
    embedding: f64,
    config: &ClassCheckConfig,
) -> Result<ClassCheckOutcome> {
    let members = [&pair.first, &pair.second];
    let mut bound: f64 = 0.0;
    let mut extra_smoothness = f64::INFINITY;
    for p in members {
        let class = p
            .class_m
            .ok_or_else(|| Error::Invalid(format!("phantom {} lacks class-M metadata", p.name)))?;
        bound = bound.max(class.bound);
        extra_smoothness = extra_smoothness.min(class.extra_smoothness);
    }
    let first = &pair.first.pair;
    let second = &pair.second.pair;
    require_time(distance, 1.0, first)?;
    check_terms(entries, distance)?;
    let d = first.dimension();
    let top = d as f64 / 2.0 + extra_smoothness;
    if !(-0.5..top).contains(&config.s) || !(0.0..extra_smoothness).contains(&config.r) {
        return Err(Error::OutOfRange(format!(
            "need -1/2 <= s < {top} and 0 <= r < {extra_smoothness}, got s = {}, r = {}",
            config.s, config.r
        )));
    }
    let diameter = first.domain.diameter();
    let chain = embedding * bound;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();

    let mut fields = Vec::new();
    for p in members {
        let field = sigma_field(p, config.grid)?;
        let high = sobolev_norm(&field, top);
        warnings.extend(high.warning.iter().map(|w| format!("{}: {w}", p.name)));
        let sup = sigma_sup(p, &field);
        let sigma_p = check_admissible(&p.pair, SamplingResolution::default()).sigma_p_max;
        rows.push(
            ReportRow::new(
                "sigma-embedding",
                None,
                sup,
                embedding * high.value,
                config.tolerance * sup,
            )
            .with("D3", embedding)
            .with("norm_high", high.value),
        );
        rows.push(
            ReportRow::new("sigma-class-norm", None, high.value, bound, 0.0).with("M", bound),
        );
        rows.push(ReportRow::new("class-sigma-p", None, sigma_p, bound, 0.0).with("M", bound));
        fields.push(field);
    }
    let difference = fields[0].difference(&fields[1])?;
    let low = sobolev_norm(&difference, config.s);
    let sup_difference = difference.sup();

    for (i, t) in distance.terms.iter().enumerate() {
        let gap = (t.depth_first - t.depth_second).abs();
        let factor = (-diameter * chain).exp();
        rows.push(
            ReportRow::new(
                "depth-gap",
                Some(i),
                factor * gap,
                t.ballistic,
                config.tolerance * t.ballistic + 1e-300,
            )
            .with("factor", factor)
            .with("t1", t.depth_first.min(t.depth_second))
            .with("t2", t.depth_first.max(t.depth_second)),
        );
        if gap > 1e-12 {
            let (t1, t2) = (
                t.depth_first.min(t.depth_second),
                t.depth_first.max(t.depth_second),
            );
            let c = t1 - ((-(-gap).exp_m1()) / gap).ln();
            let outside = (t1 - c).max(c - t2).max(0.0);
            rows.push(
                ReportRow::new("depth-mean-value", Some(i), outside, 0.0, 1e-9 * (1.0 + t2))
                    .with("c", c)
                    .with("t1", t1)
                    .with("t2", t2),
            );
        }
    }

    let scatters = first.scatters() || second.scatters();
    if scatters && distance.t_max > 2.0 * diameter {
        rows.extend(attenuation_floor_rows(
            &distance.terms,
            diameter,
            chain,
            config.tolerance,
        ));
        let scale = 2.0 * diameter * bound * (2.0 * diameter * chain).exp();
        for (i, t) in distance.terms.iter().enumerate() {
            let lhs = t.sup_sigma_p_second * t.sup_e_difference;
            rows.push(
                ReportRow::new(
                    "attenuation-difference",
                    Some(i),
                    lhs,
                    scale * sup_difference,
                    config.tolerance * lhs,
                )
                .with("sup_sigma_difference", sup_difference),
            );
        }
    }
    for row in rows.iter_mut() {
        row.constants.insert("M".into(), bound);
        row.constants.insert("r_tilde".into(), extra_smoothness);
    }

    Ok(ClassCheckOutcome {
        rows,
        sigma_difference: low.value,
        kernel_entry_difference: distance.terms.iter().fold(0.0, |m, t| m.max(t.kernel_l1)),
        kernel_global_difference: kernel_global_difference(first, second),
        embedding,
        bound,
        extra_smoothness,
        kappa_sigma: kappa_sigma(d, config.s, extra_smoothness),
        kappa_k: kappa_k(d, config.r, extra_smoothness),
        warnings,
    })
}

fn kernel_global_difference(first: &CoefficientPair, second: &CoefficientPair) -> f64 {
    if first.kappa == second.kappa {
        return 0.0;
    }
    let points = halton_points(&first.domain, 256);
    let sphere = SphereQuadrature::new(first.dimension(), 24);
    let cell = first.domain.volume() / points.len() as f64;
    let mut total = 0.0;
    for x in &points {
        for (vin, win) in sphere.iter() {
            for (vout, wout) in sphere.iter() {
                total += cell
                    * win
                    * wout
                    * (first.kappa(x, vin, vout) - second.kappa(x, vin, vout)).abs();
            }
        }
    }
    total
}

/// One pair of a perturbation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRung {
    pub delta: f64,
    pub sigma_difference: f64,
    pub distance: f64,
    pub kappa: f64,
}

/// `‖σ − σ̃‖_{H^s} / ‖A − Ã‖^κ` along the ladder, each rung against the
/// smallest ratio; the variation must stay below `2`.
pub fn check_ladder_scaling(rungs: &[LadderRung]) -> Result<Vec<ReportRow>> {
    if rungs.len() < 2 {
        return Err(Error::Invalid(
            "a scaling ladder needs at least two rungs".into(),
        ));
    }
    let ratios: Vec<f64> = rungs
        .iter()
        .map(|r| r.sigma_difference / r.distance.powf(r.kappa))
        .collect();
    let smallest = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(rungs
        .iter()
        .zip(&ratios)
        .map(|(r, ratio)| {
            ReportRow::new("ladder-scaling", None, ratio / smallest, 2.0, 0.0)
                .with("delta", r.delta)
                .with("ratio", *ratio)
                .with("kappa", r.kappa)
                .with("distance", r.distance)
                .with("sigma_difference", r.sigma_difference)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailConfig {
    pub solver: SolverConfig,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
    /// Boundary parameter and normal angle of the source centre.
    pub theta: f64,
    pub psi: f64,
    /// Rung 0 is `ψ ≡ 1`; each further rung halves the support in time, position and direction.
    pub rungs: usize,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig {
                boundary_nodes: 32,
                angle_nodes: 16,
                ..SolverConfig::default()
            },
            eps1: 0.1,
            eps2: 0.1,
            eta: 0.25,
            theta: PI,
            psi: 0.0,
            rungs: 5,
        }
    }
}

/// `⟨ψ, u₂⟩ ≤ C ‖ψ‖_{L^{p′}}` per unit incoming mass for indicator weights of
/// shrinking support around the peak of the two-collision response.
pub fn check_multiple_scatter_pairing(
    pair: &CoefficientPair,
    config: &TailConfig,
) -> Result<Vec<ReportRow>> {
    let solver_config = SolverConfig {
        order: 2,
        window_only: false,
        ..config.solver
    };
    let budget = kernel_budget(
        pair,
        solver_config.t_max,
        solver_config.p,
        solver_config.beta_samples,
    )?;
    let solver = Solver::with_budget(pair, solver_config, budget)?;
    let entry = Entry::new(&pair.domain, config.theta, config.psi)?;
    let source = BoundarySource::Mollified(solver.mollified_source(
        entry.point,
        config.eps1,
        config.eps2,
        config.eta,
    )?);
    let response = solver.solve(&source)?;
    let time = response.time;
    let dt = time.width();
    let grids: Vec<&ResponseGrid> = std::iter::once(&response.window)
        .chain(response.global.as_ref())
        .collect();

    let mut peak = (
        0.0,
        response.window.nodes[0].x,
        response.window.nodes[0].v,
        0.0,
    );
    for g in &grids {
        for (i, node) in g.nodes.iter().enumerate() {
            if g.excluded[i] {
                continue;
            }
            for (bin, value) in g.parts[i][2].iter() {
                if value > peak.0 {
                    peak = (value, node.x, node.v, time.center(bin));
                }
            }
        }
    }
    let (_, peak_x, peak_v, peak_t) = peak;
    let constant = budget.constant;
    let p_conjugate = budget.p_conjugate;
    let mut rows = Vec::new();
    for rung in 0..config.rungs.max(1) {
        let shrink = 0.5f64.powi(rung as i32);
        let inside_time = |t: f64| rung == 0 || (t - peak_t).abs() <= 0.5 * time.t_max * shrink;
        let inside_phase = |x: &crate::geometry::Vector, v: &crate::geometry::Vector| {
            rung == 0
                || (wrap(angle_of(x) - angle_of(&peak_x)).abs() <= PI * shrink
                    && wrap(angle_of(v) - angle_of(&peak_v)).abs() <= PI * shrink)
        };
        let bins: Vec<usize> = (0..time.bins)
            .filter(|b| inside_time(time.center(*b)))
            .collect();
        let mut measure = 0.0;
        let mut pairing = 0.0;
        for g in &grids {
            for (i, node) in g.nodes.iter().enumerate() {
                if g.excluded[i] || !inside_phase(&node.x, &node.v) {
                    continue;
                }
                measure += node.weight * dt * bins.len() as f64;
                pairing +=
                    node.weight * dt * bins.iter().map(|b| g.parts[i][2].get(*b)).sum::<f64>();
            }
        }
        let norm = measure.powf(1.0 / p_conjugate);
        let lhs = pairing / source.mass();
        rows.push(
            ReportRow::new("multiple-scatter", None, lhs, constant * norm, 0.0)
                .with("rung", rung as f64)
                .with("support_measure", measure)
                .with("weight_norm", norm)
                .with("C", constant)
                .with("p", budget.p),
        );
    }
    Ok(rows)
}
