//! Two-sided estimates of `‖A − Ã‖` on `L¹` sources.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Entry;
use crate::coefficients::{Attenuation, CoefficientPair};
use crate::error::{Error, Result};
use crate::forward::{
    kernel_budget, AlbedoResponse, BoundarySource, ResponseGrid, Solver, SolverConfig, ORDERS,
};
use crate::geometry::{Sign, SphereQuadrature};
use crate::kernels::{e_plus, KernelBudget};
use crate::quadrature::{Composite, GaussLegendre};

/// Quadratures for the per-entry kernel integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelQuadrature {
    pub depth_order: usize,
    pub depth_panels: usize,
    pub directions: usize,
    /// Gauss–Legendre nodes per leg of a two-collision path.
    pub double_depth: usize,
    pub double_directions: usize,
}

impl Default for KernelQuadrature {
    fn default() -> Self {
        Self {
            depth_order: 4,
            depth_panels: 6,
            directions: 64,
            double_depth: 10,
            double_directions: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistanceConfig {
    /// Halton entries probed with mollified deltas.
    pub probes: usize,
    pub probe_eps1: f64,
    pub probe_eps2: f64,
    pub eta: f64,
    pub solver: SolverConfig,
    pub quadrature: KernelQuadrature,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self {
            probes: 3,
            probe_eps1: 0.05,
            probe_eps2: 0.05,
            eta: 0.25,
            solver: SolverConfig {
                boundary_nodes: 32,
                angle_nodes: 16,
                ..SolverConfig::default()
            },
            quadrature: KernelQuadrature::default(),
        }
    }
}

/// Kernel differences issued from one entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryTerms {
    pub chord: f64,
    pub depth_first: f64,
    pub depth_second: f64,
    /// `|e^{−Pσ} − e^{−Pσ̃}|`.
    pub ballistic: f64,
    /// `∫∫ |k E₊ − k̃ Ẽ₊| ds dv`.
    pub single: f64,
    /// `L¹` difference of the two-collision path densities.
    pub double: f64,
    /// `∫∫ |k − k̃| E₊ ds dv`.
    pub kernel_weighted: f64,
    /// `∫∫ |k − k̃| ds dv`.
    pub kernel_l1: f64,
    pub sup_e_difference: f64,
    pub min_e: f64,
    /// `sup σ̃_p` over the closed chord.
    pub sup_sigma_p_second: f64,
}

impl EntryTerms {
    /// Outgoing `L¹` mass of the kernel difference through order two.
    pub fn explicit(&self) -> f64 {
        self.ballistic + self.single + self.double
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Index into the entry set.
    pub entry: usize,
    pub eps1: f64,
    /// `‖(A − Ã)φ‖₁ / ‖φ‖₁` through the solver's truncation order.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDistance {
    pub lower: f64,
    pub upper: f64,
    /// Entry attaining the upper estimate.
    pub upper_entry: usize,
    pub tail_first: f64,
    pub tail_second: f64,
    pub t_max: f64,
    pub probes: Vec<Probe>,
    pub terms: Vec<EntryTerms>,
    pub probe_description: String,
}

impl OperatorDistance {
    pub fn probe_at(&self, entry: usize) -> Option<&Probe> {
        self.probes.iter().find(|p| p.entry == entry)
    }
}

fn budget(pair: &CoefficientPair, config: &SolverConfig) -> Result<KernelBudget> {
    kernel_budget(pair, config.t_max, config.p, config.beta_samples)
}

fn tail(pair: &CoefficientPair, budget: &KernelBudget, order: usize) -> f64 {
    if pair.scatters() {
        budget.tail_mass_bound(order, pair.domain.gamma_measure())
    } else {
        0.0
    }
}

/// Lower estimate from probes at the first `config.probes` entries plus the
/// entry with the largest kernel difference; upper estimate as the largest
/// per-entry kernel difference plus both tail bounds.
pub fn albedo_distance(
    first: &CoefficientPair,
    second: &CoefficientPair,
    entries: &[Entry],
    config: &DistanceConfig,
) -> Result<OperatorDistance> {
    if first.domain != second.domain {
        return Err(Error::GridMismatch(
            "phantoms live on different domains".into(),
        ));
    }
    if entries.is_empty() {
        return Err(Error::Invalid("empty entry set".into()));
    }
    let budget_first = budget(first, &config.solver)?;
    let budget_second = budget(second, &config.solver)?;
    let t_max = config.solver.t_max;
    let terms = entries
        .par_iter()
        .map(|e| entry_terms(first, second, e, t_max, &config.quadrature))
        .collect::<Result<Vec<_>>>()?;
    let (upper_entry, explicit) = terms.iter().map(EntryTerms::explicit).enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, v)| if v > best.1 { (i, v) } else { best },
    );
    let tail_first = tail(first, &budget_first, config.solver.order);
    let tail_second = tail(second, &budget_second, config.solver.order);

    let mut probed: Vec<usize> = (0..config.probes.min(entries.len())).collect();
    if !probed.contains(&upper_entry) {
        probed.push(upper_entry);
    }
    let solver_first = Solver::with_budget(first, config.solver, budget_first)?;
    let solver_second = Solver::with_budget(second, config.solver, budget_second)?;
    let probes = probed
        .iter()
        .map(|&i| probe(&solver_first, &solver_second, i, &entries[i], config))
        .collect::<Result<Vec<_>>>()?;
    let lower = probes.iter().fold(0.0, |m: f64, p| m.max(p.value));
    Ok(OperatorDistance {
        lower,
        upper: explicit + tail_first + tail_second,
        upper_entry,
        tail_first,
        tail_second,
        t_max,
        probe_description: format!(
            "mollified deltas (eps1 <= {}, eps2 = {}) at entries {:?}, order-{} responses on window and {}x{} grids",
            config.probe_eps1, config.probe_eps2, probed, config.solver.order, config.solver.boundary_nodes,
            config.solver.angle_nodes
        ),
        probes,
        terms,
    })
}

fn probe(
    first: &Solver,
    second: &Solver,
    index: usize,
    entry: &Entry,
    config: &DistanceConfig,
) -> Result<Probe> {
    let eps1 = config.probe_eps1.min(0.5 * entry.psi.cos());
    let source = first.mollified_source(entry.point, eps1, config.probe_eps2, config.eta)?;
    let source = BoundarySource::Mollified(source);
    let a = first.solve(&source)?;
    let b = second.solve(&source)?;
    Ok(Probe {
        entry: index,
        eps1,
        value: response_difference(&a, &b)? / source.mass(),
    })
}

/// `∫∫ |u − ũ| dt dξ` summed over all computed orders.
fn response_difference(a: &AlbedoResponse, b: &AlbedoResponse) -> Result<f64> {
    let dt = a.time.width();
    let grid = |x: &ResponseGrid, y: &ResponseGrid| -> Result<f64> {
        if x.nodes.len() != y.nodes.len() {
            return Err(Error::GridMismatch(
                "responses were computed on different grids".into(),
            ));
        }
        let bins = a.time.bins;
        let mut total = 0.0;
        for i in 0..x.nodes.len() {
            if x.excluded[i] {
                continue;
            }
            let mut diff = vec![0.0; bins];
            for j in 0..ORDERS {
                for (bin, v) in x.parts[i][j].iter() {
                    diff[bin] += v;
                }
                for (bin, v) in y.parts[i][j].iter() {
                    diff[bin] -= v;
                }
            }
            total += x.nodes[i].weight * dt * diff.iter().map(|d| d.abs()).sum::<f64>();
        }
        Ok(total)
    };
    let mut total = grid(&a.window, &b.window)?;
    match (&a.global, &b.global) {
        (Some(x), Some(y)) => total += grid(x, y)?,
        (None, None) => {}
        _ => {
            return Err(Error::GridMismatch(
                "only one response carries a global grid".into(),
            ))
        }
    }
    Ok(total)
}

/// Per-entry kernel differences by the quadratures of `quadrature`.
/// Paths longer than `t_max` are left out.
pub fn entry_terms(
    first: &CoefficientPair,
    second: &CoefficientPair,
    entry: &Entry,
    t_max: f64,
    quadrature: &KernelQuadrature,
) -> Result<EntryTerms> {
    let domain = first.domain;
    let (x0, v0) = (entry.point.x, entry.point.v);
    let chord = entry.chord;
    let depth_first = first.optical_depth(&x0, &v0, 0.0, chord);
    let depth_second = second.optical_depth(&x0, &v0, 0.0, chord);
    let mut terms = EntryTerms {
        chord,
        depth_first,
        depth_second,
        ballistic: ((-depth_first).exp() - (-depth_second).exp()).abs(),
        single: 0.0,
        double: 0.0,
        kernel_weighted: 0.0,
        kernel_l1: 0.0,
        sup_e_difference: 0.0,
        min_e: 1.0,
        sup_sigma_p_second: 0.0,
    };
    if !first.scatters() && !second.scatters() {
        return Ok(terms);
    }

    let sphere = SphereQuadrature::new(domain.dimension(), quadrature.directions);
    let rule = Composite::new(quadrature.depth_order, quadrature.depth_panels);
    let mut chord_points: Vec<f64> = vec![0.0, chord];
    for (s, w) in rule.on(0.0, chord) {
        let y = x0 + s * v0;
        chord_points.push(s);
        for (v, wv) in sphere.iter() {
            let out = domain.travel(&y, v, Sign::Plus);
            if s + out >= t_max {
                continue;
            }
            let ea = e_plus(first, &domain, &x0, &v0, s, v);
            let eb = e_plus(second, &domain, &x0, &v0, s, v);
            let ka = first.kappa(&y, &v0, v);
            let kb = second.kappa(&y, &v0, v);
            let weight = w * wv;
            terms.single += weight * (ka * ea - kb * eb).abs();
            terms.kernel_weighted += weight * (ka - kb).abs() * ea;
            terms.kernel_l1 += weight * (ka - kb).abs();
            terms.sup_e_difference = terms.sup_e_difference.max((ea - eb).abs());
            terms.min_e = terms.min_e.min(ea);
        }
    }
    for s in chord_points {
        let sp = second.sigma_p(&(x0 + s * v0), &v0, &sphere)?;
        terms.sup_sigma_p_second = terms.sup_sigma_p_second.max(sp);
    }
    terms.double = double_difference(first, second, entry, t_max, quadrature);
    Ok(terms)
}

/// `∫∫∫∫ |k k E − k̃ k̃ Ẽ| ds₁ dv₁ ds₂ dv` over two-collision paths.
fn double_difference(
    first: &CoefficientPair,
    second: &CoefficientPair,
    entry: &Entry,
    t_max: f64,
    quadrature: &KernelQuadrature,
) -> f64 {
    let domain = first.domain;
    let (x0, v0) = (entry.point.x, entry.point.v);
    let depth = GaussLegendre::new(quadrature.double_depth);
    let sphere = SphereQuadrature::new(domain.dimension(), quadrature.double_directions);
    let mut total = 0.0;
    for (s1, w1) in depth.on(0.0, entry.chord) {
        let y1 = x0 + s1 * v0;
        let leg1 = [
            first.optical_depth(&x0, &v0, 0.0, s1),
            second.optical_depth(&x0, &v0, 0.0, s1),
        ];
        for (v1, wv1) in sphere.iter() {
            let k1 = [first.kappa(&y1, &v0, v1), second.kappa(&y1, &v0, v1)];
            if k1 == [0.0, 0.0] {
                continue;
            }
            let reach = domain.travel(&y1, v1, Sign::Plus);
            for (s2, w2) in depth.on(0.0, reach) {
                let y2 = y1 + s2 * v1;
                let leg2 = [
                    leg1[0] + first.optical_depth(&y1, v1, 0.0, s2),
                    leg1[1] + second.optical_depth(&y1, v1, 0.0, s2),
                ];
                for (v, wv) in sphere.iter() {
                    let out = domain.travel(&y2, v, Sign::Plus);
                    if s1 + s2 + out >= t_max {
                        continue;
                    }
                    let a = k1[0]
                        * first.kappa(&y2, v1, v)
                        * (-(leg2[0] + first.optical_depth(&y2, v, 0.0, out))).exp();
                    let b = k1[1]
                        * second.kappa(&y2, v1, v)
                        * (-(leg2[1] + second.optical_depth(&y2, v, 0.0, out))).exp();
                    total += w1 * wv1 * w2 * wv * (a - b).abs();
                }
            }
        }
    }
    total
}
