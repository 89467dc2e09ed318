//! Forward transport: the albedo operator applied to boundary sources by the
//! collision expansion, plus a lattice Picard iteration used as an oracle.

mod closed_form;
pub mod io;
pub mod picard;
pub mod response;
pub mod source;

use serde::{Deserialize, Serialize};

use crate::coefficients::{check_admissible, Attenuation, CoefficientPair, SamplingResolution};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryGrid, Sign, SphereQuadrature, TimeGrid, Vector};
use crate::kernels::{
    beta_sup, check_integrability_exponent, remainder_constant, BetaResolution, BudgetInputs,
    KernelBudget,
};

pub use response::{
    AlbedoResponse, GridKind, ResponseGrid, ResponseMeta, Series, ORDERS, SCHEMA_VERSION,
};
pub use source::{
    lift_source, BoundarySource, LiftedSource, MollifiedSource, PhaseMollifier, SourceNode,
    TabulatedSource, TemporalMollifier,
};

/// A function on `X × S^{d−1}`.
pub trait PhaseField: Sync {
    fn value(&self, x: &Vector, v: &Vector) -> f64;
}

impl<F> PhaseField for F
where
    F: Fn(&Vector, &Vector) -> f64 + Sync,
{
    fn value(&self, x: &Vector, v: &Vector) -> f64 {
        self(x, v)
    }
}

/// `U₁(t) f`: free transport with absorption, zero once the back-traced
/// point has left the domain.
pub struct Streamed<'a, F> {
    pair: &'a CoefficientPair,
    field: F,
    t: f64,
}

pub fn apply_u1<F: PhaseField>(
    pair: &CoefficientPair,
    field: F,
    t: f64,
) -> Result<Streamed<'_, F>> {
    if !(t >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "streaming time must be nonnegative, got {t}"
        )));
    }
    Ok(Streamed { pair, field, t })
}

impl<F: PhaseField> PhaseField for Streamed<'_, F> {
    fn value(&self, x: &Vector, v: &Vector) -> f64 {
        let y = x - self.t * v;
        if !self.pair.domain.segment_indicator(&y, x) {
            return 0.0;
        }
        (-self.pair.optical_depth(&y, v, 0.0, self.t)).exp() * self.field.value(&y, v)
    }
}

/// `A₂ f = ∫ k(x, v′, v) f(x, v′) dv′` on a direction quadrature.
pub struct Scattered<'a, F> {
    pair: &'a CoefficientPair,
    field: F,
    sphere: SphereQuadrature,
}

pub fn apply_a2<F: PhaseField>(
    pair: &CoefficientPair,
    field: F,
    sphere: SphereQuadrature,
) -> Scattered<'_, F> {
    Scattered {
        pair,
        field,
        sphere,
    }
}

impl<F: PhaseField> PhaseField for Scattered<'_, F> {
    fn value(&self, x: &Vector, v: &Vector) -> f64 {
        self.sphere
            .iter()
            .map(|(w, weight)| weight * self.pair.kappa(x, w, v) * self.field.value(x, w))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleResolution {
    /// Gauss–Legendre nodes across the source's direction window.
    pub directions: usize,
    /// Gauss–Legendre nodes along the crossing of the source beam.
    pub depth: usize,
}

impl Default for SingleResolution {
    fn default() -> Self {
        Self {
            directions: 16,
            depth: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoubleResolution {
    /// Source nodes per axis; one node collapses the source to its centre.
    pub source_nodes: usize,
    /// Four-point panels along each source ray.
    pub depth_panels: usize,
    /// Arrival-time span after the direct distance resolved on a log scale.
    pub near_span: f64,
    /// Node spacing in arrival time beyond the near span.
    pub tau_spacing: f64,
    /// Excluded neighbourhood of the singular arrival time.
    pub tube: f64,
}

impl Default for DoubleResolution {
    fn default() -> Self {
        Self {
            source_nodes: 1,
            depth_panels: 4,
            near_span: 0.25,
            tau_spacing: 0.04,
            tube: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub t_max: f64,
    pub time_bins: usize,
    pub boundary_nodes: usize,
    pub angle_nodes: usize,
    /// Source (and window grid) nodes per axis.
    pub window_nodes: usize,
    /// Highest collision order computed explicitly.
    pub order: usize,
    /// Skip the global outgoing grid.
    pub window_only: bool,
    pub single: SingleResolution,
    pub double: DoubleResolution,
    pub p: f64,
    pub beta_samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t_max: 5.0,
            time_bins: 250,
            boundary_nodes: 64,
            angle_nodes: 32,
            window_nodes: 12,
            order: 2,
            window_only: false,
            single: SingleResolution::default(),
            double: DoubleResolution::default(),
            p: 1.2,
            beta_samples: 16,
        }
    }
}

/// Sup norms and the integrability bound for a pair.
pub fn kernel_budget(
    pair: &CoefficientPair,
    t_max: f64,
    p: f64,
    beta_samples: usize,
) -> Result<KernelBudget> {
    check_integrability_exponent(pair.dimension(), p)?;
    let report = check_admissible(pair, SamplingResolution::default());
    if !report.admissible {
        return Err(Error::Invalid(format!(
            "pair is not admissible: {}",
            report.violations.join("; ")
        )));
    }
    let beta = if pair.scatters() {
        beta_sup(
            &pair.domain,
            p,
            t_max,
            beta_samples.max(1),
            BetaResolution::default(),
        )?
    } else {
        0.0
    };
    Ok(remainder_constant(BudgetInputs {
        dimension: pair.dimension(),
        p,
        beta_sup: beta,
        kappa_sup: report.kappa_sup,
        sigma_p_sup: report.sigma_p_sup,
        t_max,
    }))
}

/// Closed-form collision-expansion solver for one coefficient pair.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    pair: &'a CoefficientPair,
    config: SolverConfig,
    time: TimeGrid,
    budget: KernelBudget,
    global: Option<BoundaryGrid>,
}

impl<'a> Solver<'a> {
    pub fn new(pair: &'a CoefficientPair, config: SolverConfig) -> Result<Self> {
        let budget = kernel_budget(pair, config.t_max, config.p, config.beta_samples)?;
        Self::with_budget(pair, config, budget)
    }

    pub fn with_budget(
        pair: &'a CoefficientPair,
        config: SolverConfig,
        budget: KernelBudget,
    ) -> Result<Self> {
        pair.validate()?;
        if pair.dimension() != 2 {
            return Err(Error::Unsupported(
                "the forward solver runs on planar domains".into(),
            ));
        }
        if config.order > 2 {
            return Err(Error::Unsupported(format!(
                "the closed-form backend computes at most two collisions (requested {}); use the Picard backend",
                config.order
            )));
        }
        let time = TimeGrid::new(config.t_max, config.time_bins)?;
        let global = if config.window_only {
            None
        } else {
            Some(BoundaryGrid::new(
                pair.domain,
                Sign::Plus,
                config.boundary_nodes,
                config.angle_nodes,
            )?)
        };
        Ok(Self {
            pair,
            config,
            time,
            budget,
            global,
        })
    }

    pub fn budget(&self) -> &KernelBudget {
        &self.budget
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn pair(&self) -> &CoefficientPair {
        self.pair
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    /// Builds the mollified source this solver's window grid expects.
    pub fn mollified_source(
        &self,
        center: crate::geometry::PhasePoint,
        eps1: f64,
        eps2: f64,
        eta: f64,
    ) -> Result<MollifiedSource> {
        MollifiedSource::new(
            self.pair.domain,
            center,
            eps1,
            eps2,
            eta,
            self.config.window_nodes,
        )
    }

    pub fn solve(&self, source: &BoundarySource) -> Result<AlbedoResponse> {
        match source {
            BoundarySource::Mollified(m) => closed_form::solve(self, m),
            BoundarySource::Tabulated(_) => Err(Error::Unsupported(
                "the closed-form backend needs a mollified point source; tabulated data go through the Picard backend"
                    .into(),
            )),
        }
    }

    pub fn tail_bound(&self, incoming_mass: f64) -> f64 {
        if !self.pair.scatters() {
            return 0.0;
        }
        self.budget
            .tail_mass_bound(self.config.order, self.pair.domain.gamma_measure())
            * incoming_mass
    }
}

/// Convenience wrapper building a [`Solver`] for one call.
pub fn solve(
    pair: &CoefficientPair,
    source: &BoundarySource,
    config: SolverConfig,
) -> Result<AlbedoResponse> {
    Solver::new(pair, config)?.solve(source)
}

/// Outgoing against incoming mass with the certified growth bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassCheck {
    pub outgoing: f64,
    pub incoming: f64,
    pub ratio: f64,
    pub bound: f64,
}

/// Ratio of outgoing to incoming `L¹` mass; trips when it exceeds `e^{T‖σ_p‖∞}`.
pub fn operator_mass_check(
    response: &AlbedoResponse,
    source: &BoundarySource,
    sigma_p_sup: f64,
) -> Result<MassCheck> {
    let incoming = source.mass();
    let outgoing = response.outgoing_mass();
    let ratio = outgoing / incoming;
    let bound = (response.meta.t_max * sigma_p_sup).exp();
    let check = MassCheck {
        outgoing,
        incoming,
        ratio,
        bound,
    };
    if !ratio.is_finite() || ratio > bound * (1.0 + 1e-9) {
        return Err(Error::NumericalGuard(format!(
            "outgoing/incoming mass {ratio} exceeds the growth bound {bound}"
        )));
    }
    Ok(check)
}
