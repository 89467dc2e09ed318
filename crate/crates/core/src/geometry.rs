//! Ray geometry of convex domains with closed-form boundary intersections.
//!
//! Points and directions are stored as three-component vectors; planar
//! domains keep the third component at zero.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{finite, Error, Result};
use crate::quadrature::{periodic_nodes, Composite, GaussLegendre};

pub type Vector = nalgebra::Vector3<f64>;

/// Nodes whose `|ν·v|` falls below this are dropped from boundary grids.
pub const TANGENT_CUTOFF: f64 = 1e-6;

const UNIT_TOLERANCE: f64 = 1e-12;
const INSIDE_TOLERANCE: f64 = 1e-12;

pub fn planar(x: f64, y: f64) -> Vector {
    Vector::new(x, y, 0.0)
}

/// Unit vector at polar angle `angle` in the plane.
pub fn direction(angle: f64) -> Vector {
    Vector::new(angle.cos(), angle.sin(), 0.0)
}

pub fn angle_of(v: &Vector) -> f64 {
    v.y.atan2(v.x)
}

/// Which way along a line we travel to reach the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    /// Forward along `v`; the outgoing boundary.
    Plus,
    /// Backward along `v`; the incoming boundary.
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    UnitDisk,
    UnitBall,
    Ellipse { a: f64, b: f64 },
}

impl Default for Domain {
    fn default() -> Self {
        Domain::UnitDisk
    }
}

/// A position together with a unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: Vector,
    pub v: Vector,
}

impl PhasePoint {
    pub fn new(x: Vector, v: Vector) -> Result<Self> {
        check_unit(&v)?;
        Ok(Self { x, v })
    }

    pub fn planar(x: f64, y: f64, angle: f64) -> Self {
        Self {
            x: planar(x, y),
            v: direction(angle),
        }
    }
}

pub fn check_unit(v: &Vector) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE || !norm.is_finite() {
        return Err(Error::NotUnit { norm });
    }
    Ok(())
}

/// Volume of the unit sphere `S^{d-1}`.
pub fn sphere_volume(dimension: usize) -> f64 {
    match dimension {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("only d = 2 and d = 3 are supported"),
    }
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        if let Domain::Ellipse { a, b } = *self {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::OutOfRange(format!(
                    "ellipse semi-axes must be positive, got a={a}, b={b}"
                )));
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::UnitBall => 3,
            _ => 2,
        }
    }

    fn semi_axes(&self) -> Vector {
        match *self {
            Domain::Ellipse { a, b } => Vector::new(a, b, 1.0),
            _ => Vector::new(1.0, 1.0, 1.0),
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Ellipse { a, b } => 2.0 * a.max(b),
            _ => 2.0,
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Domain::UnitDisk => PI,
            Domain::UnitBall => 4.0 * PI / 3.0,
            Domain::Ellipse { a, b } => PI * a * b,
        }
    }

    /// Arclength (d = 2) or area (d = 3) of the boundary.
    pub fn boundary_measure(&self) -> f64 {
        match *self {
            Domain::UnitDisk => 2.0 * PI,
            Domain::UnitBall => 4.0 * PI,
            Domain::Ellipse { .. } => {
                let rule = GaussLegendre::new(64);
                (0..8)
                    .map(|j| {
                        let lo = j as f64 * PI / 4.0;
                        rule.integrate(lo, lo + PI / 4.0, |t| self.boundary_speed(t))
                    })
                    .sum()
            }
        }
    }

    /// `∫_{Γ±} dξ`, the same for both signs.
    pub fn gamma_measure(&self) -> f64 {
        match self.dimension() {
            2 => 2.0 * self.boundary_measure(),
            _ => PI * self.boundary_measure(),
        }
    }

    fn scaled(&self, x: &Vector) -> Vector {
        let a = self.semi_axes();
        match self.dimension() {
            2 => Vector::new(x.x / a.x, x.y / a.y, 0.0),
            _ => Vector::new(x.x / a.x, x.y / a.y, x.z / a.z),
        }
    }

    /// Signed level function, negative inside.
    pub fn level(&self, x: &Vector) -> f64 {
        self.scaled(x).norm_squared() - 1.0
    }

    pub fn contains(&self, x: &Vector) -> bool {
        self.level(x) <= INSIDE_TOLERANCE
    }

    pub fn outward_normal(&self, x: &Vector) -> Vector {
        let a = self.semi_axes();
        let mut g = Vector::new(x.x / (a.x * a.x), x.y / (a.y * a.y), x.z / (a.z * a.z));
        if self.dimension() == 2 {
            g.z = 0.0;
        }
        g.normalize()
    }

    /// `τ±(x, v)` without argument checks.
    pub fn travel(&self, x: &Vector, v: &Vector, sign: Sign) -> f64 {
        let sx = self.scaled(x);
        let sv = self.scaled(v);
        let a = sv.norm_squared();
        let b = sign.factor() * sx.dot(&sv);
        let c = sx.norm_squared() - 1.0;
        let disc = (b * b - a * c).max(0.0);
        let root = disc.sqrt();
        let s = if b <= 0.0 {
            (-b + root) / a
        } else if b + root > 0.0 {
            -c / (b + root)
        } else {
            0.0
        };
        s.max(0.0)
    }

    /// `τ±(x, v)`: time to reach the boundary travelling along `±v`.
    pub fn exit_time(&self, p: &PhasePoint, sign: Sign) -> Result<f64> {
        check_unit(&p.v)?;
        if !self.contains(&p.x) {
            return Err(Error::OutsideDomain);
        }
        Ok(self.travel(&p.x, &p.v, sign))
    }

    /// Parameters `(t_in, t_out)` where the line `x + t v` crosses the
    /// boundary, for any `x`; `None` if the line misses or only grazes.
    pub fn line_crossing(&self, x: &Vector, v: &Vector) -> Option<(f64, f64)> {
        let sx = self.scaled(x);
        let sv = self.scaled(v);
        let a = sv.norm_squared();
        let b = sx.dot(&sv);
        let c = sx.norm_squared() - 1.0;
        let disc = b * b - a * c;
        if !(disc > 0.0) || a == 0.0 {
            return None;
        }
        let q = -(b + b.signum() * disc.sqrt());
        let (t0, t1) = if q == 0.0 {
            let r = (-c / a).sqrt();
            (-r, r)
        } else {
            let (r0, r1) = (q / a, c / q);
            (r0.min(r1), r0.max(r1))
        };
        Some((t0, t1))
    }

    /// `τ(x, v) = τ₊ + τ₋`, the chord length through `x`.
    pub fn chord(&self, x: &Vector, v: &Vector) -> f64 {
        self.travel(x, v, Sign::Plus) + self.travel(x, v, Sign::Minus)
    }

    /// Whether the closed segment `[x, y]` lies in the closed domain.
    pub fn segment_indicator(&self, x: &Vector, y: &Vector) -> bool {
        self.contains(x) && self.contains(y)
    }

    /// Boundary point at parameter angle `theta` (planar domains).
    pub fn boundary_point(&self, theta: f64) -> Vector {
        let a = self.semi_axes();
        planar(a.x * theta.cos(), a.y * theta.sin())
    }

    /// Arclength per unit parameter angle.
    pub fn boundary_speed(&self, theta: f64) -> f64 {
        let a = self.semi_axes();
        (a.x * a.x * theta.sin().powi(2) + a.y * a.y * theta.cos().powi(2)).sqrt()
    }

    /// Parameter angle of a boundary point (planar domains).
    pub fn boundary_parameter(&self, x: &Vector) -> f64 {
        let a = self.semi_axes();
        (x.y / a.y).atan2(x.x / a.x)
    }

    pub fn max_boundary_speed(&self) -> f64 {
        let a = self.semi_axes();
        a.x.max(a.y)
    }

    /// Direction obtained by rotating the normal at `theta` by `psi`,
    /// pointing out of the domain for `Plus` and into it for `Minus`.
    pub fn boundary_direction(&self, theta: f64, psi: f64, sign: Sign) -> Vector {
        let n = self.outward_normal(&self.boundary_point(theta));
        let base = angle_of(&n) + if sign == Sign::Minus { PI } else { 0.0 };
        direction(base + psi)
    }

    /// `|ν(x)·v|` for a boundary point.
    pub fn normal_cosine(&self, x: &Vector, v: &Vector) -> f64 {
        self.outward_normal(x).dot(v).abs()
    }
}

/// One node of a quadrature on `Γ±` carrying the weight of `dξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub x: Vector,
    pub v: Vector,
    pub weight: f64,
    pub boundary_index: usize,
    pub angle_index: usize,
    pub normal_cosine: f64,
}

/// Tensor quadrature on `Γ₊` or `Γ₋`.
///
/// Boundary positions are equally spaced in the boundary parameter and
/// directions use Gauss–Legendre nodes in the angle measured from the normal,
/// so every node is strictly inside its half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub domain: Domain,
    pub sign: Sign,
    pub n_boundary: usize,
    pub n_angle: usize,
    nodes: Vec<BoundaryNode>,
}

impl BoundaryGrid {
    pub fn new(domain: Domain, sign: Sign, n_boundary: usize, n_angle: usize) -> Result<Self> {
        domain.validate()?;
        if n_boundary < 4 || n_angle < 2 {
            return Err(Error::OutOfRange(format!(
                "boundary grid needs at least 4 positions and 2 angles, got {n_boundary}x{n_angle}"
            )));
        }
        let mut nodes = Vec::with_capacity(n_boundary * n_angle);
        match domain.dimension() {
            2 => {
                let psi_rule = GaussLegendre::new(n_angle);
                for (i, (theta, dtheta)) in periodic_nodes(n_boundary, 0.0).enumerate() {
                    let x = domain.boundary_point(theta);
                    let dmu = domain.boundary_speed(theta) * dtheta;
                    for (j, (psi, wpsi)) in psi_rule.on(-PI / 2.0, PI / 2.0).enumerate() {
                        let cosine = psi.cos();
                        if cosine < TANGENT_CUTOFF {
                            continue;
                        }
                        nodes.push(BoundaryNode {
                            x,
                            v: domain.boundary_direction(theta, psi, sign),
                            weight: cosine * wpsi * dmu,
                            boundary_index: i,
                            angle_index: j,
                            normal_cosine: cosine,
                        });
                    }
                }
            }
            _ => {
                let polar = GaussLegendre::new(n_boundary.div_ceil(2));
                let cosine_rule = GaussLegendre::new(n_angle.div_ceil(2));
                let mut i = 0;
                for (mu, wmu) in polar.on(-1.0, 1.0) {
                    let rho = (1.0 - mu * mu).sqrt();
                    for (phi, dphi) in periodic_nodes(n_boundary, 0.0) {
                        let x = Vector::new(rho * phi.cos(), rho * phi.sin(), mu);
                        let n = x;
                        let (e1, e2) = frame(&n);
                        let inward = sign.factor();
                        let mut j = 0;
                        for (c, wc) in cosine_rule.on(0.0, 1.0) {
                            let s = (1.0 - c * c).sqrt();
                            for (az, daz) in periodic_nodes(n_angle, 0.5) {
                                let v = inward * c * n + s * (az.cos() * e1 + az.sin() * e2);
                                if c >= TANGENT_CUTOFF {
                                    nodes.push(BoundaryNode {
                                        x,
                                        v,
                                        weight: c * wc * daz * wmu * dphi,
                                        boundary_index: i,
                                        angle_index: j,
                                        normal_cosine: c,
                                    });
                                }
                                j += 1;
                            }
                        }
                        i += 1;
                    }
                }
            }
        }
        Ok(Self {
            domain,
            sign,
            n_boundary,
            n_angle,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_measure(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }
}

/// Two unit vectors completing `n` to an orthonormal frame.
pub fn frame(n: &Vector) -> (Vector, Vector) {
    let helper = if n.x.abs() < 0.9 {
        Vector::x()
    } else {
        Vector::y()
    };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

/// Direction quadrature on the whole sphere `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub directions: Vec<Vector>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// Uniform trapezoid for `d = 2`; Gauss–Legendre in the polar cosine
    /// times a uniform azimuth for `d = 3`.
    pub fn new(dimension: usize, n: usize) -> Self {
        let mut directions = Vec::new();
        let mut weights = Vec::new();
        match dimension {
            2 => {
                for (a, w) in periodic_nodes(n, 0.0) {
                    directions.push(direction(a));
                    weights.push(w);
                }
            }
            _ => {
                let rule = GaussLegendre::new(n.div_ceil(2));
                for (mu, wmu) in rule.on(-1.0, 1.0) {
                    let rho = (1.0 - mu * mu).sqrt();
                    for (phi, dphi) in periodic_nodes(n, 0.0) {
                        directions.push(Vector::new(rho * phi.cos(), rho * phi.sin(), mu));
                        weights.push(wmu * dphi);
                    }
                }
            }
        }
        Self {
            directions,
            weights,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector, f64)> {
        self.directions.iter().zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Uniform bins partitioning `(0, t_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub bins: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, bins: usize) -> Result<Self> {
        if !(t_max > 0.0) || bins == 0 {
            return Err(Error::OutOfRange(format!(
                "time grid needs T > 0 and at least one bin, got T={t_max}, bins={bins}"
            )));
        }
        Ok(Self { t_max, bins })
    }

    pub fn width(&self) -> f64 {
        self.t_max / self.bins as f64
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let h = self.width();
        (h * i as f64, h * (i + 1) as f64)
    }

    pub fn center(&self, i: usize) -> f64 {
        self.width() * (i as f64 + 0.5)
    }

    /// Indices of the bins intersecting `[a, b]`.
    pub fn bins_touching(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let h = self.width();
        let lo = (a / h).floor().max(0.0) as usize;
        let hi = ((b / h).ceil().max(0.0) as usize).min(self.bins);
        lo.min(hi)..hi
    }
}

/// Which side of the phase-space change of variables to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseRoute {
    /// Tensor quadrature over `X × S^{d-1}`.
    Volume,
    /// Integration along rays from `Γ₊` (backward) or `Γ₋` (forward).
    Boundary(Sign),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseResolution {
    pub radial: Composite,
    pub boundary: usize,
    pub angles: usize,
    pub ray: Composite,
}

impl Default for PhaseResolution {
    fn default() -> Self {
        Self {
            radial: Composite::new(12, 4),
            boundary: 96,
            angles: 48,
            ray: Composite::new(12, 4),
        }
    }
}

/// `∬ f dx dv`, either directly or through boundary rays.
pub fn phase_space_integral<F>(
    domain: &Domain,
    f: F,
    route: PhaseRoute,
    resolution: &PhaseResolution,
) -> Result<f64>
where
    F: Fn(&Vector, &Vector) -> f64 + Sync,
{
    domain.validate()?;
    let d = domain.dimension();
    let sphere = SphereQuadrature::new(d, resolution.angles);
    let partials: Vec<Result<f64>> = match route {
        PhaseRoute::Volume => {
            let cells = volume_cells(domain, resolution);
            cells
                .par_iter()
                .map(|(x, w)| {
                    let mut acc = 0.0;
                    for (v, wv) in sphere.iter() {
                        acc += wv * finite(f(x, v), "phase-space integrand")?;
                    }
                    Ok(acc * w)
                })
                .collect()
        }
        PhaseRoute::Boundary(sign) => {
            let grid = BoundaryGrid::new(*domain, sign, resolution.boundary, resolution.angles)?;
            // Rays run inward: backward from outgoing nodes, forward from incoming ones.
            let step = -sign.factor();
            grid.nodes()
                .par_iter()
                .map(|node| {
                    let length = domain.travel(
                        &node.x,
                        &node.v,
                        match sign {
                            Sign::Plus => Sign::Minus,
                            Sign::Minus => Sign::Plus,
                        },
                    );
                    let mut acc = 0.0;
                    for (s, ws) in resolution.ray.on(0.0, length) {
                        let y = node.x + step * s * node.v;
                        acc += ws * finite(f(&y, &node.v), "phase-space integrand")?;
                    }
                    Ok(acc * node.weight)
                })
                .collect()
        }
    };
    let mut total = 0.0;
    for p in partials {
        total += p?;
    }
    Ok(total)
}

fn volume_cells(domain: &Domain, resolution: &PhaseResolution) -> Vec<(Vector, f64)> {
    let mut cells = Vec::new();
    match *domain {
        Domain::UnitBall => {
            let polar = GaussLegendre::new(resolution.boundary.div_ceil(2));
            for (r, wr) in resolution.radial.on(0.0, 1.0) {
                for (mu, wmu) in polar.on(-1.0, 1.0) {
                    let rho = (1.0 - mu * mu).sqrt();
                    for (phi, dphi) in periodic_nodes(resolution.boundary, 0.0) {
                        let x = r * Vector::new(rho * phi.cos(), rho * phi.sin(), mu);
                        cells.push((x, wr * r * r * wmu * dphi));
                    }
                }
            }
        }
        _ => {
            let jac = domain.volume() / PI;
            for (r, wr) in resolution.radial.on(0.0, 1.0) {
                for (theta, dtheta) in periodic_nodes(resolution.boundary, 0.0) {
                    cells.push((r * domain.boundary_point(theta), wr * r * dtheta * jac));
                }
            }
        }
    }
    cells
}
