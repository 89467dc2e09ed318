//! Orders 0–2 of the collision expansion evaluated node by node.

use rayon::prelude::*;

use super::response::{
    AlbedoResponse, GridKind, ResponseGrid, ResponseMeta, Series, ORDERS, SCHEMA_VERSION,
};
use super::source::{bump, wrap, MollifiedSource, SourceNode};
use super::Solver;
use crate::coefficients::{Attenuation, CoefficientPair};
use crate::error::Result;
use crate::geometry::{angle_of, Sign, TimeGrid, Vector};
use crate::kernels::double_scatter_value;
use crate::quadrature::{Composite, GaussLegendre};

struct Evaluator<'a> {
    pair: &'a CoefficientPair,
    source: &'a MollifiedSource,
    time: TimeGrid,
    order: usize,
    directions: GaussLegendre,
    depth: GaussLegendre,
    beam: Vec<SourceNode>,
    beam_depth: Composite,
    near: GaussLegendre,
    far: GaussLegendre,
    near_span: f64,
    tau_spacing: f64,
    tube: f64,
}

impl Evaluator<'_> {
    fn node(&self, x: &Vector, v: &Vector, ballistic: Option<(f64, f64)>) -> [Series; ORDERS] {
        let bins = self.time.bins;
        let mut dense = [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]];
        if let Some((weight, delay)) = ballistic {
            self.source
                .temporal
                .deposit(&self.time, &mut dense[0], weight, delay);
        }
        if self.order >= 1 && self.pair.scatters() {
            self.single(x, v, &mut dense[1]);
        }
        if self.order >= 2 && self.pair.scatters() {
            self.double(x, v, &mut dense[2]);
        }
        [
            Series::from_dense(&dense[0]),
            Series::from_dense(&dense[1]),
            Series::from_dense(&dense[2]),
        ]
    }

    /// Single scattering: every scattering depth `s` along the backward ray
    /// from `(x, v)` and every incoming direction of the source window.
    fn single(&self, x: &Vector, v: &Vector, out: &mut [f64]) {
        let domain = &self.pair.domain;
        let phase = &self.source.phase;
        let reach = domain.travel(x, v, Sign::Minus);
        let arc_lo = domain.boundary_point(phase.theta0 - phase.half_theta);
        let arc_hi = domain.boundary_point(phase.theta0 + phase.half_theta);
        for (omega, w_omega) in self.directions.on(
            phase.omega0 - phase.half_omega,
            phase.omega0 + phase.half_omega,
        ) {
            let f_omega = bump(wrap(omega - phase.omega0) / phase.half_omega);
            if f_omega == 0.0 {
                continue;
            }
            let incoming = crate::geometry::direction(omega);
            let across = Vector::new(-omega.sin(), omega.cos(), 0.0);
            let denom = v.dot(&across);
            if denom.abs() < 1e-14 {
                continue;
            }
            let (pa, pb) = (arc_lo.dot(&across), arc_hi.dot(&across));
            let here = x.dot(&across);
            let (sa, sb) = ((here - pa) / denom, (here - pb) / denom);
            let lo = sa.min(sb).max(0.0);
            let hi = sa.max(sb).min(reach);
            if hi <= lo {
                continue;
            }
            for (s, w_s) in self.depth.on(lo, hi) {
                let y = x - s * v;
                let back = domain.travel(&y, &incoming, Sign::Minus);
                let entry = y - back * incoming;
                let f_theta =
                    bump(wrap(domain.boundary_parameter(&entry) - phase.theta0) / phase.half_theta);
                if f_theta == 0.0 {
                    continue;
                }
                let k = self.pair.kappa(&y, &incoming, v);
                if k == 0.0 {
                    continue;
                }
                let depth = self.pair.optical_depth(&entry, &incoming, 0.0, back)
                    + self.pair.optical_depth(&y, v, 0.0, s);
                let weight =
                    phase.normalization() * f_theta * f_omega * k * (-depth).exp() * w_omega * w_s;
                self.source
                    .temporal
                    .deposit(&self.time, out, weight, back + s);
            }
        }
    }

    /// Double scattering: first collision along each beam ray, arrival time
    /// integrated through the explicit two-collision kernel.
    fn double(&self, x: &Vector, v: &Vector, out: &mut [f64]) {
        let domain = &self.pair.domain;
        let t_max = self.time.t_max;
        let reach = domain.travel(x, v, Sign::Minus);
        let far_end = x - reach * v;
        for q in &self.beam {
            let mass = q.density * q.measure;
            if mass == 0.0 {
                continue;
            }
            let length = domain.travel(&q.x, &q.v, Sign::Plus);
            for (s, w_s) in self.beam_depth.on(0.0, length) {
                let first = q.x + s * q.v;
                let attenuation = (-self.pair.optical_depth(&q.x, &q.v, 0.0, s)).exp();
                let w = x - first;
                let r = w.norm();
                let c = w.dot(v);
                let cap = (reach + (far_end - first).norm()).min(t_max - s);
                let start = r + self.tube;
                if cap <= start {
                    continue;
                }
                let scale = mass * w_s * attenuation;
                let split = (r + self.near_span).min(cap);
                let (z0, z1) = ((start - c).ln(), (split - c).ln());
                if z1 > z0 {
                    let panels = ((z1 - z0) / 0.5).ceil().max(1.0) as usize;
                    let h = (z1 - z0) / panels as f64;
                    for p in 0..panels {
                        let a = z0 + h * p as f64;
                        for (z, w_z) in self.near.on(a, a + h) {
                            let tau = c + z.exp();
                            self.deposit_double(
                                x,
                                v,
                                q,
                                &first,
                                tau,
                                scale * w_z * z.exp(),
                                s,
                                out,
                            );
                        }
                    }
                }
                if cap > split {
                    let panels = ((cap - split) / self.tau_spacing).ceil().max(1.0) as usize;
                    let h = (cap - split) / panels as f64;
                    for p in 0..panels {
                        let a = split + h * p as f64;
                        for (tau, w_tau) in self.far.on(a, a + h) {
                            self.deposit_double(x, v, q, &first, tau, scale * w_tau, s, out);
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn deposit_double(
        &self,
        x: &Vector,
        v: &Vector,
        q: &SourceNode,
        first: &Vector,
        tau: f64,
        weight: f64,
        s: f64,
        out: &mut [f64],
    ) {
        // The log substitution keeps tau off the singular set, so errors cannot occur here.
        if let Ok(Some(value)) = double_scatter_value(self.pair, tau, x, v, first, &q.v) {
            self.source
                .temporal
                .deposit(&self.time, out, weight * value, s + tau);
        }
    }
}

pub(super) fn solve(solver: &Solver<'_>, source: &MollifiedSource) -> Result<AlbedoResponse> {
    let pair = solver.pair();
    let config = solver.config();
    let domain = pair.domain;
    let time = solver.time();
    let nodes = source.phase.nodes();
    let eval = Evaluator {
        pair,
        source,
        time,
        order: config.order,
        directions: GaussLegendre::new(config.single.directions),
        depth: GaussLegendre::new(config.single.depth),
        beam: source.phase.beam_nodes(config.double.source_nodes.max(1)),
        beam_depth: Composite::new(4, config.double.depth_panels.max(1)),
        near: GaussLegendre::new(4),
        far: GaussLegendre::new(2),
        near_span: config.double.near_span,
        tau_spacing: config.double.tau_spacing,
        tube: config.double.tube,
    };

    let window_nodes = source.phase.window_grid();
    let window_parts: Vec<[Series; ORDERS]> = nodes
        .par_iter()
        .zip(window_nodes.par_iter())
        .map(|(q, node)| {
            let reach = domain.travel(&q.x, &q.v, Sign::Plus);
            let weight = q.density * (-pair.optical_depth(&q.x, &q.v, 0.0, reach)).exp();
            eval.node(&node.x, &node.v, Some((weight, reach)))
        })
        .collect();
    let window = ResponseGrid {
        kind: GridKind::Window,
        n_boundary: config.window_nodes,
        n_angle: config.window_nodes,
        excluded: vec![false; window_nodes.len()],
        nodes: window_nodes,
        parts: window_parts,
    };

    let global = solver.global.as_ref().map(|grid| {
        let excluded: Vec<bool> = grid
            .nodes()
            .iter()
            .map(|n| {
                let back = domain.travel(&n.x, &n.v, Sign::Minus);
                let entry = n.x - back * n.v;
                source
                    .phase
                    .contains(domain.boundary_parameter(&entry), angle_of(&n.v))
            })
            .collect();
        let parts: Vec<[Series; ORDERS]> = grid
            .nodes()
            .par_iter()
            .zip(excluded.par_iter())
            .map(|(n, ex)| {
                if *ex {
                    Default::default()
                } else {
                    eval.node(&n.x, &n.v, None)
                }
            })
            .collect();
        ResponseGrid {
            kind: GridKind::Global,
            n_boundary: grid.n_boundary,
            n_angle: grid.n_angle,
            nodes: grid.nodes().to_vec(),
            excluded,
            parts,
        }
    });

    let mut warnings = Vec::new();
    if config.t_max <= source.eta {
        warnings.push(format!(
            "T = {} does not exceed eta = {}",
            config.t_max, source.eta
        ));
    }
    let c = source.center();
    let meta = ResponseMeta {
        schema_version: SCHEMA_VERSION,
        backend: "closed-form".into(),
        domain,
        order: config.order,
        t_max: config.t_max,
        time_bins: config.time_bins,
        eta: source.eta,
        eps1: source.eps1,
        eps2: source.eps2,
        source_center: [c.x.x, c.x.y, angle_of(&c.v)],
        window_nodes: config.window_nodes,
        global_grid: solver.global.as_ref().map(|g| [g.n_boundary, g.n_angle]),
        tail_bound: solver.tail_bound(1.0),
        incoming_mass: 1.0,
        phantom_hash: pair.hash(),
        warnings,
        config_hash: None,
    };
    Ok(AlbedoResponse {
        time,
        window,
        global,
        meta,
    })
}
