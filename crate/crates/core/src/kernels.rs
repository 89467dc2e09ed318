//! Closed-form pieces of the albedo kernel: ballistic and single-scattering
//! arrivals, the double-scattering kernel, attenuation along broken rays,
//! and the integrability function bounding multiple scattering.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{Attenuation, CoefficientPair};
use crate::error::{Error, Result};
use crate::geometry::{check_unit, frame, Domain, PhasePoint, Sign, Vector, TANGENT_CUTOFF};
use crate::quadrature::{halton, Composite, GaussLegendre};

const BOUNDARY_TOLERANCE: f64 = 1e-9;
const RANGE_TOLERANCE: f64 = 1e-12;

/// The unscattered arrival at an outgoing boundary point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallisticArrival {
    pub exit: PhasePoint,
    pub entry: PhasePoint,
    pub delay: f64,
    pub weight: f64,
}

fn check_boundary(domain: &Domain, p: &PhasePoint, sign: Sign) -> Result<f64> {
    check_unit(&p.v)?;
    if domain.level(&p.x).abs() > BOUNDARY_TOLERANCE {
        return Err(Error::Invalid("phase point is not on the boundary".into()));
    }
    let cosine = sign.factor() * domain.outward_normal(&p.x).dot(&p.v);
    if cosine < TANGENT_CUTOFF {
        return Err(Error::NearTangent { cosine });
    }
    Ok(cosine)
}

/// Entry point, delay and attenuation of the straight path ending at `exit ∈ Γ₊`.
pub fn ballistic_kernel<A: Attenuation + ?Sized>(
    sigma: &A,
    domain: &Domain,
    exit: &PhasePoint,
) -> Result<BallisticArrival> {
    check_boundary(domain, exit, Sign::Plus)?;
    let delay = domain.travel(&exit.x, &exit.v, Sign::Minus);
    let entry = PhasePoint {
        x: exit.x - delay * exit.v,
        v: exit.v,
    };
    let weight = (-sigma.optical_depth(&entry.x, &entry.v, 0.0, delay)).exp();
    Ok(BallisticArrival {
        exit: *exit,
        entry,
        delay,
        weight,
    })
}

/// Attenuation `E₊` (from an incoming point) or `E₋` (from an outgoing one)
/// along the broken path that turns into direction `w` after depth `s`.
pub fn attenuation_e<A: Attenuation + ?Sized>(
    sigma: &A,
    domain: &Domain,
    point: &PhasePoint,
    s: f64,
    w: &Vector,
    sign: Sign,
) -> Result<f64> {
    check_unit(&point.v)?;
    check_unit(w)?;
    let reach = match sign {
        Sign::Plus => domain.travel(&point.x, &point.v, Sign::Plus),
        Sign::Minus => domain.travel(&point.x, &point.v, Sign::Minus),
    };
    if !(s >= -RANGE_TOLERANCE && s <= reach + RANGE_TOLERANCE) {
        return Err(Error::OutOfRange(format!("depth {s} outside [0, {reach}]")));
    }
    let s = s.clamp(0.0, reach);
    Ok(match sign {
        Sign::Plus => e_plus(sigma, domain, &point.x, &point.v, s, w),
        Sign::Minus => {
            let y = point.x - s * point.v;
            let back = domain.travel(&y, w, Sign::Minus);
            let depth = sigma.optical_depth(&y, &point.v, 0.0, s)
                + sigma.optical_depth(&(y - back * w), w, 0.0, back);
            (-depth).exp()
        }
    })
}

/// `E₊` along the broken ray entering at `(entry, v0)` and turning to `w` at depth `s`, without argument checks.
pub fn e_plus<A: Attenuation + ?Sized>(
    sigma: &A,
    domain: &Domain,
    entry: &Vector,
    v0: &Vector,
    s: f64,
    w: &Vector,
) -> f64 {
    let y = entry + s * v0;
    let out = domain.travel(&y, w, Sign::Plus);
    (-(sigma.optical_depth(entry, v0, 0.0, s) + sigma.optical_depth(&y, w, 0.0, out))).exp()
}

/// One point of the single-scattering sheet issued from an incoming ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleScatterSample {
    pub entry: PhasePoint,
    pub depth: f64,
    pub direction: Vector,
    pub exit_point: Vector,
    pub delay: f64,
    pub density: f64,
}

/// `k(x′ + s v′, v′, v) · E₊(x′, v′, s, v)` with its exit event.
pub fn single_scatter_density(
    pair: &CoefficientPair,
    entry: &PhasePoint,
    s: f64,
    v: &Vector,
) -> Result<SingleScatterSample> {
    let e = attenuation_e(pair, &pair.domain, entry, s, v, Sign::Plus)?;
    let y = entry.x + s * entry.v;
    let out = pair.domain.travel(&y, v, Sign::Plus);
    Ok(SingleScatterSample {
        entry: *entry,
        depth: s,
        direction: *v,
        exit_point: y + out * v,
        delay: s + out,
        density: pair.kappa(&y, &entry.v, v) * e,
    })
}

/// Intermediate collision data of a two-collision path of total length `τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleScatterGeometry {
    /// Distance from the second collision back along `-v` to the exit point.
    pub s1: f64,
    /// Direction between the two collisions.
    pub v1: Vector,
    /// `2^{d−2} (τ − w·v)^{d−3} / |w − τ v|^{2d−4}` with `w = x − x′`.
    pub jacobian: f64,
}

/// Solves for the intermediate collision; `None` when `τ < |x − x′|`.
pub fn double_scatter_geometry(
    dimension: usize,
    tau: f64,
    exit: &PhasePoint,
    source: &Vector,
) -> Result<Option<DoubleScatterGeometry>> {
    let w = exit.x - source;
    let r = w.norm();
    if tau < r {
        return Ok(None);
    }
    let gap = tau - w.dot(&exit.v);
    if tau - r <= f64::EPSILON * tau.max(1.0) || gap <= 0.0 {
        return Err(Error::Singular(format!(
            "two-collision kernel at tau = {tau}, |x - x'| = {r}"
        )));
    }
    let s1 = (tau - r) * (tau + r) / (2.0 * gap);
    let v1 = (w - s1 * exit.v) / (tau - s1);
    let jacobian = match dimension {
        2 => 1.0 / gap,
        _ => 2.0 / (w - tau * exit.v).norm_squared(),
    };
    Ok(Some(DoubleScatterGeometry { s1, v1, jacobian }))
}

/// The two-collision kernel at time `τ` for an exit `(x, v) ∈ Γ₊` and a
/// source point `(x′, v′)` inside the domain.
pub fn double_scatter_kernel(
    pair: &CoefficientPair,
    tau: f64,
    exit: &PhasePoint,
    source: &Vector,
    source_direction: &Vector,
) -> Result<f64> {
    check_unit(&exit.v)?;
    check_unit(source_direction)?;
    Ok(double_scatter_value(pair, tau, &exit.x, &exit.v, source, source_direction)?.unwrap_or(0.0))
}

pub(crate) fn double_scatter_value(
    pair: &CoefficientPair,
    tau: f64,
    x: &Vector,
    v: &Vector,
    source: &Vector,
    source_direction: &Vector,
) -> Result<Option<f64>> {
    let exit = PhasePoint { x: *x, v: *v };
    let Some(g) = double_scatter_geometry(pair.dimension(), tau, &exit, source)? else {
        return Ok(None);
    };
    let turn = x - g.s1 * v;
    if !pair.domain.contains(&turn) {
        return Ok(Some(0.0));
    }
    let k = pair.kappa(&turn, &g.v1, v) * pair.kappa(source, source_direction, &g.v1);
    if k == 0.0 {
        return Ok(Some(0.0));
    }
    let depth = pair.optical_depth(&turn, v, 0.0, g.s1)
        + pair.optical_depth(source, &g.v1, 0.0, tau - g.s1);
    Ok(Some(g.jacobian * k * (-depth).exp()))
}

/// Quadrature density for [`beta_function`]; `refined` doubles every rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaResolution {
    pub panels: usize,
    pub order: usize,
    /// Rotation of the boundary quadrature, for symmetry checks.
    pub rotation: f64,
}

impl Default for BetaResolution {
    fn default() -> Self {
        Self {
            panels: 6,
            order: 8,
            rotation: 0.0,
        }
    }
}

impl BetaResolution {
    pub fn refined(self) -> Self {
        Self {
            panels: self.panels * 2,
            ..self
        }
    }
}

pub fn check_integrability_exponent(dimension: usize, p: f64) -> Result<()> {
    let upper = (dimension as f64 + 1.0) / dimension as f64;
    if !(p > 1.0 && p < upper) {
        return Err(Error::OutOfRange(format!(
            "integrability exponent must lie in (1, {upper}), got {p}"
        )));
    }
    Ok(())
}

/// The integrability function: the `p`-th power of the two-collision
/// geometry integrated over outgoing boundary points, directions and arrival
/// times up to `T + diam`.
pub fn beta_function(
    domain: &Domain,
    source: &Vector,
    p: f64,
    t_max: f64,
    resolution: BetaResolution,
) -> Result<f64> {
    let d = domain.dimension();
    check_integrability_exponent(d, p)?;
    if !domain.contains(source) || domain.level(source) > -1e-12 {
        return Err(Error::OutsideDomain);
    }
    let horizon = t_max + domain.diameter();
    match d {
        2 => Ok(beta_planar(domain, source, p, horizon, resolution)),
        _ => Ok(beta_spatial(domain, source, p, horizon, resolution)),
    }
}

/// Grading exponent that cancels the leading angular singularity.
fn grading(p: f64) -> f64 {
    1.0 / (3.0 - 2.0 * p)
}

fn beta_planar(domain: &Domain, source: &Vector, p: f64, horizon: f64, res: BetaResolution) -> f64 {
    let rule = Composite::new(res.order, res.panels);
    let q = grading(p);
    let centre = if source.norm() > 0.0 {
        domain.boundary_parameter(source)
    } else {
        0.0
    } + res.rotation;
    let halves: Vec<f64> = [1.0, -1.0]
        .par_iter()
        .map(|&side| {
            let mut acc = 0.0;
            for (u, wu) in rule.on(0.0, 1.0) {
                let theta = centre + side * PI * u * u;
                let dtheta = 2.0 * PI * u * wu;
                let x = domain.boundary_point(theta);
                let normal = domain.outward_normal(&x);
                let w = x - source;
                let r = w.norm();
                let peak = (normal.x * w.y - normal.y * w.x).atan2(normal.dot(&w));
                let mut inner = 0.0;
                for (lo, hi) in [(-PI / 2.0, peak), (peak, PI / 2.0)] {
                    let span = hi - lo;
                    for (t, wt) in rule.on(0.0, 1.0) {
                        let graded = t.powf(q);
                        let (psi, dpsi) = if lo == peak {
                            (
                                peak + span * graded,
                                span * q * graded / t.max(f64::MIN_POSITIVE),
                            )
                        } else {
                            (
                                peak - span * graded,
                                span * q * graded / t.max(f64::MIN_POSITIVE),
                            )
                        };
                        let offset = psi - peak;
                        let near = 2.0 * r * (0.5 * offset).sin().powi(2);
                        let c = r * offset.cos();
                        let radial = (near.powf(1.0 - p) - (horizon - c).powf(1.0 - p)) / (p - 1.0);
                        inner += wt * dpsi * psi.cos() * radial;
                    }
                }
                acc += dtheta * domain.boundary_speed(theta) * inner;
            }
            acc
        })
        .collect();
    halves[0] + halves[1]
}

fn beta_spatial(
    domain: &Domain,
    source: &Vector,
    p: f64,
    horizon: f64,
    res: BetaResolution,
) -> f64 {
    let rule = Composite::new(res.order, res.panels);
    let azimuth = GaussLegendre::new(2 * res.order);
    let q = grading(p);
    let axis = if source.norm() > 1e-12 {
        source.normalize()
    } else {
        Vector::z()
    };
    let (a1, a2) = frame(&axis);
    let polar: Vec<(f64, f64)> = rule.on(0.0, 1.0).collect();
    let rows: Vec<f64> = polar
        .par_iter()
        .map(|&(u, wu)| {
            let chi = PI * u * u;
            let dchi = 2.0 * PI * u * wu;
            let mut acc = 0.0;
            for (phi, wphi) in azimuth.on(0.0, 2.0 * PI) {
                let phi = phi + res.rotation;
                let x = chi.cos() * axis + chi.sin() * (phi.cos() * a1 + phi.sin() * a2);
                let normal = domain.outward_normal(&x);
                let w = x - source;
                let r = w.norm();
                let wh = w / r;
                let (e1, e2) = frame(&wh);
                let mut inner = 0.0;
                for (t, wt) in rule.on(0.0, 1.0) {
                    let omega = PI * t.powf(q);
                    let domega = PI * q * t.powf(q - 1.0) * wt;
                    // ν·v = A + B cos(φ − φ0) over the cone of half-angle ω.
                    let a = omega.cos() * normal.dot(&wh);
                    let (bx, by) = (omega.sin() * normal.dot(&e1), omega.sin() * normal.dot(&e2));
                    let b = bx.hypot(by);
                    let (lo, hi) = if a >= b {
                        (0.0, 2.0 * PI)
                    } else if -a >= b {
                        continue;
                    } else {
                        let half = (-a / b).acos();
                        let phi0 = by.atan2(bx);
                        (phi0 - half, phi0 + half)
                    };
                    let h = r * omega.sin();
                    let c = r * omega.cos();
                    let radial = sheet_integral(r - c, horizon - c, h, p);
                    let mut ring = 0.0;
                    for (f, wf) in azimuth.on(lo, hi) {
                        ring += wf * (a + bx * f.cos() + by * f.sin()).max(0.0);
                    }
                    inner += domega * omega.sin() * ring * radial;
                }
                acc += wphi * inner;
            }
            dchi * chi.sin() * acc
        })
        .collect();
    rows.iter().sum()
}

/// `∫_{a}^{b} ((s)² + h²)^{−p} ds` through `s = h sinh z`.
fn sheet_integral(a: f64, b: f64, h: f64, p: f64) -> f64 {
    if h < 1e-14 {
        return ((a.max(1e-300)).powf(1.0 - 2.0 * p) - b.powf(1.0 - 2.0 * p)) / (2.0 * p - 1.0);
    }
    let z0 = (a / h).asinh();
    let z1 = (b / h).asinh();
    let rule = Composite::new(8, ((z1 - z0).ceil() as usize).clamp(1, 64));
    h.powf(1.0 - 2.0 * p) * rule.integrate(z0, z1, |z| z.cosh().powf(1.0 - 2.0 * p))
}

/// Maximum of the integrability function over Halton points, times 1.1.
pub fn beta_sup(
    domain: &Domain,
    p: f64,
    t_max: f64,
    samples: usize,
    resolution: BetaResolution,
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for x in halton_points(domain, samples) {
        best = best.max(beta_function(domain, &x, p, t_max, resolution)?);
    }
    Ok(BETA_SAFETY * best)
}

pub const BETA_SAFETY: f64 = 1.1;

/// Low-discrepancy interior points, the origin first.
pub fn halton_points(domain: &Domain, n: usize) -> Vec<Vector> {
    let mut pts = vec![Vector::zeros()];
    let shrink = 0.98;
    for i in 1..n {
        let x = match domain.dimension() {
            2 => {
                let r = shrink * halton(i, 2).sqrt();
                r * domain.boundary_point(2.0 * PI * halton(i, 3))
            }
            _ => {
                let r = shrink * halton(i, 2).cbrt();
                let mu = 2.0 * halton(i, 3) - 1.0;
                let phi = 2.0 * PI * halton(i, 5);
                let rho = (1.0 - mu * mu).sqrt();
                r * Vector::new(rho * phi.cos(), rho * phi.sin(), mu)
            }
        };
        pts.push(x);
    }
    pts
}

pub fn default_exponent(dimension: usize) -> f64 {
    if dimension == 2 {
        1.2
    } else {
        1.15
    }
}

/// The norms and constant bounding the multiple-scattering part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelBudget {
    pub dimension: usize,
    pub p: f64,
    pub p_conjugate: f64,
    pub beta_sup: f64,
    pub kappa_sup: f64,
    pub sigma_p_sup: f64,
    pub t_max: f64,
    /// `2^{d−2} T ‖k‖²∞ ‖β‖∞^{1/p} e^{T‖σ_p‖∞}`.
    pub constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetInputs {
    pub dimension: usize,
    pub p: f64,
    pub beta_sup: f64,
    pub kappa_sup: f64,
    pub sigma_p_sup: f64,
    pub t_max: f64,
}

pub fn remainder_constant(inputs: BudgetInputs) -> KernelBudget {
    let BudgetInputs {
        dimension,
        p,
        beta_sup,
        kappa_sup,
        sigma_p_sup,
        t_max,
    } = inputs;
    let constant = 2f64.powi(dimension as i32 - 2)
        * t_max
        * kappa_sup
        * kappa_sup
        * beta_sup.powf(1.0 / p)
        * (t_max * sigma_p_sup).exp();
    KernelBudget {
        dimension,
        p,
        p_conjugate: p / (p - 1.0),
        beta_sup,
        kappa_sup,
        sigma_p_sup,
        t_max,
        constant,
    }
}

impl KernelBudget {
    /// `2^{d−2} ‖k‖²∞ ‖β‖∞^{1/p}`, the kernel factor shared by both remainder pieces.
    fn kernel_factor(&self) -> f64 {
        2f64.powi(self.dimension as i32 - 2)
            * self.kappa_sup
            * self.kappa_sup
            * self.beta_sup.powf(1.0 / self.p)
    }

    /// `‖ψ‖_{L^{p′}}` of the indicator of `(0, T) × Γ₊`.
    pub fn unit_weight_norm(&self, gamma_measure: f64) -> f64 {
        (self.t_max * gamma_measure).powf(1.0 / self.p_conjugate)
    }

    /// Bound on the outgoing mass per unit incoming mass of all paths with
    /// more than `order` collisions.
    pub fn tail_mass_bound(&self, order: usize, gamma_measure: f64) -> f64 {
        let growth = (self.t_max * self.sigma_p_sup).exp() - 1.0;
        let weight = self.unit_weight_norm(gamma_measure);
        match order {
            0 => growth,
            1 => self.constant * weight,
            _ => self.kernel_factor() * self.t_max * growth * weight,
        }
    }
}
