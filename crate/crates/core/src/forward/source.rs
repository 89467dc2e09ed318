//! Incoming boundary sources: separable mollified deltas and tabulated data.

use std::f64::consts::PI;

use crate::coefficients::{Attenuation, CoefficientPair};
use crate::error::{Error, Result};
use crate::geometry::{
    angle_of, direction, BoundaryGrid, BoundaryNode, Domain, PhasePoint, Sign, TimeGrid, Vector,
};
use crate::quadrature::GaussLegendre;

/// Smallest `|ν·v|` allowed anywhere in a mollifier's support.
pub const SUPPORT_MARGIN: f64 = 1e-3;

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if a == -PI {
        PI
    } else {
        a
    }
}

/// `cos⁴(πu/2)` on `[−1, 1]`, zero outside.
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (0.5 * PI * u).cos().powi(4)
    }
}

/// Unit-mass pulse `(8 / 3w) sin⁴(πt/w)` supported on `(0, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalMollifier {
    pub width: f64,
}

impl TemporalMollifier {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::OutOfRange(format!(
                "pulse width must be positive, got {width}"
            )));
        }
        Ok(Self { width })
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= self.width {
            0.0
        } else {
            8.0 / (3.0 * self.width) * (PI * t / self.width).sin().powi(4)
        }
    }

    /// `∫_{−∞}^{t}` of the pulse, in closed form.
    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= self.width {
            1.0
        } else {
            let a = PI * t / self.width;
            8.0 / (3.0 * PI) * (3.0 * a / 8.0 - (2.0 * a).sin() / 4.0 + (4.0 * a).sin() / 32.0)
        }
    }

    /// Adds `weight · g(t − delay)` averaged over each bin of `time` into `bins`.
    pub fn deposit(&self, time: &TimeGrid, bins: &mut [f64], weight: f64, delay: f64) {
        if weight == 0.0 {
            return;
        }
        let h = time.width();
        let range = time.bins_touching(delay, delay + self.width);
        let mut previous = self.cdf(range.start as f64 * h - delay);
        for i in range {
            let next = self.cdf((i + 1) as f64 * h - delay);
            bins[i] += weight * (next - previous).max(0.0) / h;
            previous = next;
        }
    }
}

/// One quadrature node of a phase mollifier's support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceNode {
    pub x: Vector,
    pub v: Vector,
    pub theta: f64,
    pub omega: f64,
    /// `dξ` weight of the node.
    pub measure: f64,
    /// Value of the normalized profile at the node.
    pub density: f64,
    pub theta_index: usize,
    pub omega_index: usize,
}

/// A smooth bump on `Γ₋` around a planar phase point, with unit `dξ`-mass.
///
/// The profile is a product of `cos⁴` bumps in the boundary parameter and in
/// the direction angle, with half-widths chosen so the whole support lies
/// within `ε₁` of the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMollifier {
    pub domain: Domain,
    pub center: PhasePoint,
    pub theta0: f64,
    pub omega0: f64,
    pub half_theta: f64,
    pub half_omega: f64,
    pub nodes_per_axis: usize,
    normalization: f64,
}

impl PhaseMollifier {
    pub fn new(
        domain: Domain,
        center: PhasePoint,
        eps1: f64,
        nodes_per_axis: usize,
    ) -> Result<Self> {
        if domain.dimension() != 2 {
            return Err(Error::Unsupported(
                "mollified sources are implemented for planar domains".into(),
            ));
        }
        if !(eps1 > 0.0 && eps1 < 1.5) {
            return Err(Error::OutOfRange(format!(
                "phase mollifier width must lie in (0, 1.5), got {eps1}"
            )));
        }
        if domain.level(&center.x).abs() > 1e-9 {
            return Err(Error::Invalid(
                "source centre is not on the boundary".into(),
            ));
        }
        let mut m = Self {
            domain,
            center,
            theta0: domain.boundary_parameter(&center.x),
            omega0: angle_of(&center.v),
            half_theta: 0.5 * eps1 / domain.max_boundary_speed(),
            half_omega: 0.5 * eps1,
            nodes_per_axis: nodes_per_axis.max(1),
            normalization: 1.0,
        };
        let worst = m.worst_incidence();
        if worst < SUPPORT_MARGIN {
            return Err(Error::NearTangent { cosine: worst });
        }
        let raw: f64 = m.nodes().iter().map(|n| n.density * n.measure).sum();
        m.normalization = 1.0 / raw;
        Ok(m)
    }

    /// Smallest `−ν·v` over a fine sample of the support, corners included.
    fn worst_incidence(&self) -> f64 {
        let mut worst = f64::INFINITY;
        for i in 0..=8 {
            let theta = self.theta0 + self.half_theta * (i as f64 / 4.0 - 1.0);
            let normal = self
                .domain
                .outward_normal(&self.domain.boundary_point(theta));
            for j in 0..=8 {
                let omega = self.omega0 + self.half_omega * (j as f64 / 4.0 - 1.0);
                worst = worst.min(-normal.dot(&direction(omega)));
            }
        }
        worst
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn profile(&self, theta: f64, omega: f64) -> f64 {
        self.normalization
            * bump(wrap(theta - self.theta0) / self.half_theta)
            * bump(wrap(omega - self.omega0) / self.half_omega)
    }

    /// `f_{ε₁}(x, v)` for a boundary point `x`.
    pub fn value(&self, x: &Vector, v: &Vector) -> f64 {
        if self.domain.level(x).abs() > 1e-9 {
            return 0.0;
        }
        self.profile(self.domain.boundary_parameter(x), angle_of(v))
    }

    pub fn contains(&self, theta: f64, omega: f64) -> bool {
        wrap(theta - self.theta0).abs() < self.half_theta
            && wrap(omega - self.omega0).abs() < self.half_omega
    }

    /// Tensor Gauss–Legendre nodes over the support.
    pub fn nodes(&self) -> Vec<SourceNode> {
        self.nodes_with(self.nodes_per_axis)
    }

    pub fn nodes_with(&self, n: usize) -> Vec<SourceNode> {
        let rule = GaussLegendre::new(n);
        let mut out = Vec::with_capacity(n * n);
        for (i, (theta, wt)) in rule
            .on(self.theta0 - self.half_theta, self.theta0 + self.half_theta)
            .enumerate()
        {
            let x = self.domain.boundary_point(theta);
            let normal = self.domain.outward_normal(&x);
            let speed = self.domain.boundary_speed(theta);
            for (j, (omega, wo)) in rule
                .on(self.omega0 - self.half_omega, self.omega0 + self.half_omega)
                .enumerate()
            {
                let v = direction(omega);
                out.push(SourceNode {
                    x,
                    v,
                    theta,
                    omega,
                    measure: normal.dot(&v).abs() * speed * wt * wo,
                    density: self.profile(theta, omega),
                    theta_index: i,
                    omega_index: j,
                });
            }
        }
        out
    }

    /// Outgoing nodes hit by the source nodes' rays, carrying their `dξ` weights.
    pub fn window_grid(&self) -> Vec<BoundaryNode> {
        self.nodes()
            .iter()
            .map(|q| {
                let reach = self.domain.travel(&q.x, &q.v, Sign::Plus);
                let exit = q.x + reach * q.v;
                BoundaryNode {
                    x: exit,
                    v: q.v,
                    weight: q.measure,
                    boundary_index: q.theta_index,
                    angle_index: q.omega_index,
                    normal_cosine: self.domain.outward_normal(&exit).dot(&q.v),
                }
            })
            .collect()
    }

    /// Nodes reweighted so their masses sum to one; a single node is the centre.
    pub fn beam_nodes(&self, n: usize) -> Vec<SourceNode> {
        let mut nodes = self.nodes_with(n);
        let total: f64 = nodes.iter().map(|q| q.density * q.measure).sum();
        for q in &mut nodes {
            q.density /= total;
        }
        nodes
    }
}

/// `g_{ε₂}(t) f_{ε₁}(x, v)`: a mollified delta at a point of `Γ₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct MollifiedSource {
    pub phase: PhaseMollifier,
    pub temporal: TemporalMollifier,
    pub eps1: f64,
    pub eps2: f64,
    pub eta: f64,
}

impl MollifiedSource {
    pub fn new(
        domain: Domain,
        center: PhasePoint,
        eps1: f64,
        eps2: f64,
        eta: f64,
        nodes_per_axis: usize,
    ) -> Result<Self> {
        if !(eta > 0.0) || !(eps2 > 0.0) {
            return Err(Error::OutOfRange(format!(
                "need eta > 0 and eps2 > 0, got {eta}, {eps2}"
            )));
        }
        Ok(Self {
            phase: PhaseMollifier::new(domain, center, eps1, nodes_per_axis)?,
            temporal: TemporalMollifier::new(eps2.min(eta))?,
            eps1,
            eps2,
            eta,
        })
    }

    pub fn value(&self, t: f64, x: &Vector, v: &Vector) -> f64 {
        self.temporal.value(t) * self.phase.value(x, v)
    }

    pub fn center(&self) -> PhasePoint {
        self.phase.center
    }
}

/// Incoming flux tabulated on a `Γ₋` grid and piecewise constant in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSource {
    pub grid: BoundaryGrid,
    pub time: TimeGrid,
    /// Node-major values: `values[node * time.bins + bin]`.
    pub values: Vec<f64>,
    psi_nodes: Vec<f64>,
}

impl TabulatedSource {
    pub fn new(grid: BoundaryGrid, time: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if grid.sign != Sign::Minus || grid.domain.dimension() != 2 {
            return Err(Error::Invalid(
                "tabulated sources live on a planar incoming grid".into(),
            ));
        }
        if grid.len() != grid.n_boundary * grid.n_angle {
            return Err(Error::Invalid(
                "tabulated source grid must keep every node".into(),
            ));
        }
        if values.len() != grid.len() * time.bins {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes x {} bins",
                values.len(),
                grid.len(),
                time.bins
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid(
                "tabulated source values must be finite and nonnegative".into(),
            ));
        }
        let psi_nodes = GaussLegendre::new(grid.n_angle)
            .on(-PI / 2.0, PI / 2.0)
            .map(|(p, _)| p)
            .collect();
        Ok(Self {
            grid,
            time,
            values,
            psi_nodes,
        })
    }

    /// Nearest-node lookup in boundary parameter and normal-relative angle.
    pub fn value(&self, t: f64, x: &Vector, v: &Vector) -> f64 {
        if t < 0.0 || t >= self.time.t_max {
            return 0.0;
        }
        let domain = &self.grid.domain;
        let n = self.grid.n_boundary;
        let step = 2.0 * PI / n as f64;
        let theta = domain.boundary_parameter(x);
        let i = ((theta.rem_euclid(2.0 * PI) / step).round() as usize) % n;
        let inward = angle_of(&domain.outward_normal(&domain.boundary_point(i as f64 * step))) + PI;
        let psi = wrap(angle_of(v) - inward);
        if psi.abs() >= PI / 2.0 {
            return 0.0;
        }
        let j = nearest(&self.psi_nodes, psi);
        let bin = ((t / self.time.width()) as usize).min(self.time.bins - 1);
        self.values[(i * self.grid.n_angle + j) * self.time.bins + bin]
    }

    pub fn mass(&self) -> f64 {
        let h = self.time.width();
        self.grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(k, node)| {
                node.weight
                    * h
                    * self.values[k * self.time.bins..(k + 1) * self.time.bins]
                        .iter()
                        .sum::<f64>()
            })
            .sum()
    }
}

fn nearest(sorted: &[f64], x: f64) -> usize {
    let i = sorted.partition_point(|&p| p < x);
    if i == 0 {
        0
    } else if i == sorted.len() || x - sorted[i - 1] <= sorted[i] - x {
        i - 1
    } else {
        i
    }
}

/// An incoming boundary condition for the transport problem.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySource {
    Mollified(MollifiedSource),
    Tabulated(TabulatedSource),
}

impl BoundarySource {
    pub fn value(&self, t: f64, x: &Vector, v: &Vector) -> f64 {
        match self {
            BoundarySource::Mollified(m) => m.value(t, x, v),
            BoundarySource::Tabulated(s) => s.value(t, x, v),
        }
    }

    /// `‖φ‖_{L¹((0,η) × Γ₋)}`.
    pub fn mass(&self) -> f64 {
        match self {
            BoundarySource::Mollified(_) => 1.0,
            BoundarySource::Tabulated(s) => s.mass(),
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            BoundarySource::Mollified(m) => m.temporal.width,
            BoundarySource::Tabulated(s) => s.time.t_max,
        }
    }
}

/// `G₋(t)φ`: the incoming data transported into the domain without scattering.
#[derive(Debug, Clone, Copy)]
pub struct LiftedSource<'a> {
    pub pair: &'a CoefficientPair,
    pub source: &'a BoundarySource,
}

pub fn lift_source<'a>(pair: &'a CoefficientPair, source: &'a BoundarySource) -> LiftedSource<'a> {
    LiftedSource { pair, source }
}

impl LiftedSource<'_> {
    pub fn value(&self, t: f64, x: &Vector, v: &Vector) -> f64 {
        let domain = &self.pair.domain;
        if !domain.contains(x) {
            return 0.0;
        }
        let back = domain.travel(x, v, Sign::Minus);
        if t - back <= 0.0 {
            return 0.0;
        }
        let entry = x - back * v;
        let phi = self.source.value(t - back, &entry, v);
        if phi == 0.0 {
            return 0.0;
        }
        phi * (-self.pair.optical_depth(&entry, v, 0.0, back)).exp()
    }
}
