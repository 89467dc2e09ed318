//! Absorption and scattering fields, admissibility checks and the phantom
//! catalog.

use std::f64::consts::PI;

use libm::{erf, erfc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{finite, Error, Result};
use crate::geometry::{Domain, SphereQuadrature, Vector};
use crate::quadrature::{periodic_nodes, Composite};

/// `amplitude · exp(−|x − center|² / width²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub width: f64,
    pub amplitude: f64,
}

impl GaussianBump {
    pub fn center_vector(&self) -> Vector {
        let c = &self.center;
        Vector::new(
            c.first().copied().unwrap_or(0.0),
            c.get(1).copied().unwrap_or(0.0),
            c.get(2).copied().unwrap_or(0.0),
        )
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let r2 = (x - self.center_vector()).norm_squared();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }

    /// `∫_{s0}^{s1}` of the bump along `x + s v`, through the error function.
    pub fn line_integral(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64 {
        let w = self.width;
        let offset = self.center_vector() - x;
        let closest = offset.dot(v);
        let miss2 = (offset.norm_squared() - closest * closest).max(0.0);
        let a = (s0 - closest) / w;
        let b = (s1 - closest) / w;
        let span = if a >= 0.0 {
            erfc(a) - erfc(b)
        } else if b <= 0.0 {
            erfc(-b) - erfc(-a)
        } else {
            erf(b) - erf(a)
        };
        self.amplitude * (-miss2 / (w * w)).exp() * 0.5 * PI.sqrt() * w * span
    }
}

/// A background constant plus Gaussian bumps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpatialProfile {
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub bumps: Vec<GaussianBump>,
}

impl SpatialProfile {
    pub fn constant(value: f64) -> Self {
        Self {
            background: value,
            bumps: Vec::new(),
        }
    }

    pub fn with_bump(mut self, center: &[f64], width: f64, amplitude: f64) -> Self {
        self.bumps.push(GaussianBump {
            center: center.to_vec(),
            width,
            amplitude,
        });
        self
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.background + self.bumps.iter().map(|b| b.value(x)).sum::<f64>()
    }

    pub fn line_integral(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64 {
        self.background * (s1 - s0)
            + self
                .bumps
                .iter()
                .map(|b| b.line_integral(x, v, s0, s1))
                .sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.background == 0.0 && self.bumps.iter().all(|b| b.amplitude == 0.0)
    }

    /// Same profile with every amplitude (and the background) scaled.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            background: self.background * factor,
            bumps: self
                .bumps
                .iter()
                .map(|b| GaussianBump {
                    amplitude: b.amplitude * factor,
                    ..b.clone()
                })
                .collect(),
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        for b in &self.bumps {
            if !(b.width > 0.0)
                || !b.amplitude.is_finite()
                || b.center.iter().any(|c| !c.is_finite())
            {
                return Err(Error::Invalid(format!(
                    "{what}: malformed Gaussian bump {b:?}"
                )));
            }
        }
        finite(self.background, what)?;
        Ok(())
    }
}

/// Directional modulation `1 + strength · (v · axis)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    pub axis: Vec<f64>,
    pub strength: f64,
}

impl Anisotropy {
    fn factor(&self, v: &Vector) -> f64 {
        let a = &self.axis;
        let axis = Vector::new(
            a.first().copied().unwrap_or(0.0),
            a.get(1).copied().unwrap_or(0.0),
            a.get(2).copied().unwrap_or(0.0),
        );
        1.0 + self.strength * axis.dot(v)
    }
}

/// The extinction coefficient `σ(x, v)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Absorption {
    pub profile: SpatialProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<Anisotropy>,
}

impl Absorption {
    pub fn isotropic(profile: SpatialProfile) -> Self {
        Self {
            profile,
            anisotropy: None,
        }
    }

    pub fn value(&self, x: &Vector, v: &Vector) -> f64 {
        let base = self.profile.value(x);
        match &self.anisotropy {
            Some(a) => base * a.factor(v),
            None => base,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.anisotropy.as_ref().is_none_or(|a| a.strength == 0.0)
    }

    fn line_integral(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64 {
        let base = self.profile.line_integral(x, v, s0, s1);
        match &self.anisotropy {
            Some(a) => base * a.factor(v),
            None => base,
        }
    }
}

/// Angular dependence of the scattering kernel on `μ = v'·v`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum AngularLaw {
    #[default]
    Isotropic,
    /// `(1 − g²) / (1 + g² − 2gμ)`.
    HenyeyGreenstein { g: f64 },
    /// `1 + slope · μ`; negative somewhere when `|slope| > 1`.
    Linear { slope: f64 },
}

impl AngularLaw {
    pub fn value(&self, mu: f64) -> f64 {
        match *self {
            AngularLaw::Isotropic => 1.0,
            AngularLaw::HenyeyGreenstein { g } => (1.0 - g * g) / (1.0 + g * g - 2.0 * g * mu),
            AngularLaw::Linear { slope } => 1.0 + slope * mu,
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            AngularLaw::Isotropic => 1.0,
            AngularLaw::HenyeyGreenstein { g } => (1.0 + g.abs()) / (1.0 - g.abs()),
            AngularLaw::Linear { slope } => 1.0 + slope.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let AngularLaw::HenyeyGreenstein { g } = *self {
            if !(g.abs() < 1.0) {
                return Err(Error::OutOfRange(format!(
                    "anisotropy factor must satisfy |g| < 1, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// The scattering kernel `k(x, v', v) = profile(x) · law(v'·v)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scattering {
    pub profile: SpatialProfile,
    #[serde(default, flatten)]
    pub law: AngularLaw,
}

impl Scattering {
    pub fn isotropic(profile: SpatialProfile) -> Self {
        Self {
            profile,
            law: AngularLaw::Isotropic,
        }
    }

    pub fn value(&self, x: &Vector, incoming: &Vector, outgoing: &Vector) -> f64 {
        self.profile.value(x) * self.law.value(incoming.dot(outgoing))
    }
}

/// Line integrals of the extinction coefficient.
pub trait Attenuation: Sync {
    /// `∫_{s0}^{s1} σ(x + s v, v) ds`.
    fn optical_depth(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64;
}

/// Extinction and scattering coefficients on a fixed domain.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoefficientPair {
    #[serde(default)]
    pub domain: Domain,
    pub sigma: Absorption,
    pub kappa: Scattering,
}

impl CoefficientPair {
    pub fn new(domain: Domain, sigma: Absorption, kappa: Scattering) -> Self {
        Self {
            domain,
            sigma,
            kappa,
        }
    }

    /// Constant isotropic coefficients.
    pub fn constant(domain: Domain, sigma: f64, kappa: f64) -> Self {
        Self::new(
            domain,
            Absorption::isotropic(SpatialProfile::constant(sigma)),
            Scattering::isotropic(SpatialProfile::constant(kappa)),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.sigma.profile.validate("sigma")?;
        self.kappa.profile.validate("kappa")?;
        self.kappa.law.validate()?;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension()
    }

    pub fn sigma(&self, x: &Vector, v: &Vector) -> f64 {
        self.sigma.value(x, v)
    }

    pub fn kappa(&self, x: &Vector, incoming: &Vector, outgoing: &Vector) -> f64 {
        self.kappa.value(x, incoming, outgoing)
    }

    pub fn sigma_isotropic(&self) -> bool {
        self.sigma.is_isotropic()
    }

    /// Every implemented kernel is bounded.
    pub fn kappa_bounded(&self) -> bool {
        true
    }

    pub fn scatters(&self) -> bool {
        !self.kappa.profile.is_zero()
    }

    /// `σ_p(x, v') = ∫ k(x, v', v) dv` by the given direction quadrature.
    pub fn sigma_p(&self, x: &Vector, incoming: &Vector, sphere: &SphereQuadrature) -> Result<f64> {
        let mut acc = 0.0;
        for (v, w) in sphere.iter() {
            acc += w * finite(self.kappa(x, incoming, v), "scattering kernel")?;
        }
        Ok(acc)
    }

    /// Gauss–Legendre value of `∫_{s0}^{s1} σ(x + s v, v) ds`.
    pub fn line_integral_sigma(
        &self,
        x: &Vector,
        v: &Vector,
        s0: f64,
        s1: f64,
        rule: &Composite,
    ) -> Result<f64> {
        if !self.domain.segment_indicator(&(x + s0 * v), &(x + s1 * v)) {
            return Err(Error::SegmentLeavesDomain);
        }
        let mut acc = 0.0;
        for (s, w) in rule.on(s0, s1) {
            acc += w * finite(self.sigma(&(x + s * v), v), "extinction coefficient")?;
        }
        Ok(acc)
    }

    /// Stable content hash of the parameters.
    pub fn hash(&self) -> String {
        content_hash(self)
    }
}

impl Attenuation for CoefficientPair {
    fn optical_depth(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64 {
        self.sigma.line_integral(x, v, s0, s1)
    }
}

pub(crate) fn content_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("parameters serialize");
    hex::encode(&Sha256::digest(&bytes)[..8])
}

/// Sampling density for [`check_admissible`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingResolution {
    pub radial: usize,
    pub angular: usize,
    pub directions: usize,
}

impl Default for SamplingResolution {
    fn default() -> Self {
        Self {
            radial: 24,
            angular: 48,
            directions: 32,
        }
    }
}

pub const SUP_SAFETY: f64 = 1.05;

/// Sampled extrema of a coefficient pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub sigma_max: f64,
    pub sigma_min: f64,
    pub kappa_max: f64,
    pub kappa_min: f64,
    pub sigma_p_max: f64,
    /// Sampled maxima times [`SUP_SAFETY`].
    pub sigma_sup: f64,
    pub kappa_sup: f64,
    pub sigma_p_sup: f64,
    pub violations: Vec<String>,
    pub admissible: bool,
    pub membership: Option<Membership>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub bound: f64,
    pub sigma_p_ok: bool,
    pub sigma_isotropic: bool,
}

impl AdmissibilityReport {
    pub fn with_membership(mut self, class: &ClassM, sigma_isotropic: bool) -> Self {
        self.membership = Some(Membership {
            bound: class.bound,
            sigma_p_ok: self.sigma_p_max <= class.bound,
            sigma_isotropic,
        });
        self
    }
}

/// Samples `σ`, `k` and `σ_p` on a dense polar grid plus every bump center.
pub fn check_admissible(
    pair: &CoefficientPair,
    resolution: SamplingResolution,
) -> AdmissibilityReport {
    let d = pair.dimension();
    let sphere = SphereQuadrature::new(d, resolution.directions);
    let mut points = sample_points(&pair.domain, resolution);
    for b in pair
        .sigma
        .profile
        .bumps
        .iter()
        .chain(&pair.kappa.profile.bumps)
    {
        let c = b.center_vector();
        if pair.domain.contains(&c) {
            points.push(c);
        }
    }
    let mut report = AdmissibilityReport {
        sigma_max: f64::NEG_INFINITY,
        sigma_min: f64::INFINITY,
        kappa_max: f64::NEG_INFINITY,
        kappa_min: f64::INFINITY,
        sigma_p_max: 0.0,
        sigma_sup: 0.0,
        kappa_sup: 0.0,
        sigma_p_sup: 0.0,
        violations: Vec::new(),
        admissible: true,
        membership: None,
    };
    let mut non_finite = false;
    for x in &points {
        for (vin, _) in sphere.iter() {
            let s = pair.sigma(x, vin);
            non_finite |= !s.is_finite();
            report.sigma_max = report.sigma_max.max(s);
            report.sigma_min = report.sigma_min.min(s);
            let mut sp = 0.0;
            for (vout, w) in sphere.iter() {
                let k = pair.kappa(x, vin, vout);
                non_finite |= !k.is_finite();
                report.kappa_max = report.kappa_max.max(k);
                report.kappa_min = report.kappa_min.min(k);
                sp += w * k;
            }
            report.sigma_p_max = report.sigma_p_max.max(sp);
        }
    }
    if non_finite {
        report
            .violations
            .push("non-finite coefficient sample".into());
    }
    if report.sigma_min < 0.0 {
        report.violations.push(format!(
            "extinction coefficient negative (min {:.3e})",
            report.sigma_min
        ));
    }
    if report.kappa_min < 0.0 {
        report.violations.push(format!(
            "scattering kernel negative (min {:.3e})",
            report.kappa_min
        ));
    }
    if let Err(e) = pair.validate() {
        report.violations.push(e.to_string());
    }
    report.admissible = report.violations.is_empty();
    report.sigma_sup = SUP_SAFETY * report.sigma_max.max(0.0);
    report.kappa_sup = SUP_SAFETY * report.kappa_max.max(0.0);
    report.sigma_p_sup = SUP_SAFETY * report.sigma_p_max;
    report
}

fn sample_points(domain: &Domain, resolution: SamplingResolution) -> Vec<Vector> {
    let mut points = Vec::new();
    match domain.dimension() {
        2 => {
            for i in 0..=resolution.radial {
                let r = i as f64 / resolution.radial as f64;
                let n = if i == 0 { 1 } else { resolution.angular };
                for (theta, _) in periodic_nodes(n, 0.0) {
                    points.push(r * domain.boundary_point(theta));
                }
            }
        }
        _ => {
            let sphere = SphereQuadrature::new(3, resolution.angular / 2);
            points.push(Vector::zeros());
            for i in 1..=resolution.radial {
                let r = i as f64 / resolution.radial as f64;
                points.extend(sphere.directions.iter().map(|u| r * u));
            }
        }
    }
    points
}

/// Parameters of the smoothness class used by the quantitative stability results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassM {
    /// Common bound `M` on `‖σ‖_{H^{d/2 + r̃}}` and `‖σ_p‖∞`.
    pub bound: f64,
    /// Extra smoothness `r̃ > 0`.
    pub extra_smoothness: f64,
}

/// A named analytic coefficient pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pair: CoefficientPair,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_m: Option<ClassM>,
}

impl Phantom {
    pub fn new(name: &str, description: &str, pair: CoefficientPair) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            pair,
            class_m: None,
        }
    }

    pub fn in_class(mut self, bound: f64, extra_smoothness: f64) -> Self {
        self.class_m = Some(ClassM {
            bound,
            extra_smoothness,
        });
        self
    }

    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Phantom = toml::from_str(text).map_err(|e| Error::Invalid(e.to_string()))?;
        p.pair.validate()?;
        Ok(p)
    }
}

/// Two phantoms compared by the stability experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomPair {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub first: Phantom,
    pub second: Phantom,
}

fn gaussian_sigma() -> SpatialProfile {
    SpatialProfile::default()
        .with_bump(&[0.3, 0.1], 0.25, 1.0)
        .with_bump(&[-0.25, -0.2], 0.2, 0.7)
        .with_bump(&[-0.1, 0.35], 0.15, 0.5)
}

/// The built-in phantoms, all on the unit disk unless the name says otherwise.
pub fn catalog() -> Vec<Phantom> {
    let disk = Domain::UnitDisk;
    vec![
        Phantom::new(
            "vacuum",
            "no absorption, no scattering",
            CoefficientPair::constant(disk, 0.0, 0.0),
        )
        .in_class(1.0, 1.0),
        Phantom::new(
            "absorbing",
            "constant absorption 0.5, no scattering",
            CoefficientPair::constant(disk, 0.5, 0.0),
        ),
        Phantom::new(
            "constant",
            "constant absorption 0.5 and isotropic scattering 0.05",
            CoefficientPair::constant(disk, 0.5, 0.05),
        ),
        Phantom::new(
            "scattering-only",
            "no absorption, isotropic scattering 0.05",
            CoefficientPair::constant(disk, 0.0, 0.05),
        ),
        Phantom::new(
            "gaussian",
            "three Gaussian absorption bumps, weak isotropic scattering 0.01",
            CoefficientPair::new(
                disk,
                Absorption::isotropic(gaussian_sigma()),
                Scattering::isotropic(SpatialProfile::constant(0.01)),
            ),
        )
        .in_class(50.0, 1.0),
        Phantom::new(
            "gaussian-hg",
            "Gaussian absorption bumps with forward-peaked scattering (g = 0.5)",
            CoefficientPair::new(
                disk,
                Absorption::isotropic(gaussian_sigma()),
                Scattering {
                    profile: SpatialProfile::constant(0.02).with_bump(&[0.0, 0.0], 0.4, 0.02),
                    law: AngularLaw::HenyeyGreenstein { g: 0.5 },
                },
            ),
        )
        .in_class(50.0, 1.0),
        Phantom::new(
            "anisotropic-absorption",
            "absorption 0.4 modulated by 1 + 0.3 v.e1, isotropic scattering 0.03",
            CoefficientPair::new(
                disk,
                Absorption {
                    profile: SpatialProfile::constant(0.4),
                    anisotropy: Some(Anisotropy {
                        axis: vec![1.0, 0.0],
                        strength: 0.3,
                    }),
                },
                Scattering::isotropic(SpatialProfile::constant(0.03)),
            ),
        ),
        Phantom::new(
            "ellipse-constant",
            "constant coefficients on the ellipse with semi-axes 1.2 and 0.8",
            CoefficientPair::constant(Domain::Ellipse { a: 1.2, b: 0.8 }, 0.5, 0.05),
        ),
        Phantom::new(
            "ball-constant",
            "constant coefficients on the unit ball",
            CoefficientPair::constant(Domain::UnitBall, 0.5, 0.05),
        ),
    ]
}

pub fn phantom(name: &str) -> Option<Phantom> {
    catalog().into_iter().find(|p| p.name == name)
}

fn perturbed(base: &Phantom, name: &str, sigma_factor: f64, kappa_factor: f64) -> Phantom {
    let mut p = base.clone();
    p.name = name.into();
    p.pair.sigma.profile = p.pair.sigma.profile.scaled(sigma_factor);
    p.pair.kappa.profile = p.pair.kappa.profile.scaled(kappa_factor);
    p
}

/// Gaussian pair whose second member has all bump amplitudes scaled by `1 + delta`.
pub fn gaussian_ladder_pair(delta: f64) -> PhantomPair {
    let base = phantom("gaussian").expect("catalog phantom");
    let second = perturbed(
        &base,
        &format!("gaussian-x{:.4}", 1.0 + delta),
        1.0 + delta,
        1.0,
    );
    PhantomPair {
        name: format!("gaussian-ladder-{delta}"),
        description: format!("Gaussian absorption amplitudes scaled by 1 + {delta}"),
        first: base,
        second,
    }
}

pub fn pair_catalog() -> Vec<PhantomPair> {
    let constant = phantom("constant").expect("catalog phantom");
    let absorbing = phantom("absorbing").expect("catalog phantom");
    let hg = phantom("gaussian-hg").expect("catalog phantom");
    let mut bumped = absorbing.clone();
    bumped.name = "absorbing-0.6".into();
    bumped.pair.sigma.profile = SpatialProfile::constant(0.6);
    let mut shifted = constant.clone();
    shifted.name = "constant-k0.06".into();
    shifted.pair.kappa.profile = SpatialProfile::constant(0.06);
    vec![
        PhantomPair {
            name: "identical".into(),
            description: "the constant phantom against itself".into(),
            first: constant.clone(),
            second: constant.clone(),
        },
        PhantomPair {
            name: "const-bump".into(),
            description: "absorption 0.5 against 0.6, no scattering".into(),
            first: absorbing,
            second: bumped,
        },
        PhantomPair {
            name: "k-shift".into(),
            description: "same absorption, isotropic scattering 0.05 against 0.06".into(),
            first: constant,
            second: shifted,
        },
        PhantomPair {
            name: "gaussian-hg".into(),
            description: "Gaussian absorption and forward scattering, second member 10% stronger"
                .into(),
            second: perturbed(&hg, "gaussian-hg-x1.1", 1.1, 1.1),
            first: hg,
        },
        gaussian_ladder_pair(0.1),
    ]
}

pub fn phantom_pair(name: &str) -> Option<PhantomPair> {
    if let Some(delta) = name.strip_prefix("gaussian-ladder-") {
        return delta.parse().ok().map(gaussian_ladder_pair);
    }
    pair_catalog().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{direction, planar};
    use approx::assert_relative_eq;

    #[test]
    fn sigma_p_of_constant_kernel() {
        let pair = CoefficientPair::constant(Domain::UnitDisk, 0.5, 0.05);
        let sphere = SphereQuadrature::new(2, 16);
        let v = direction(0.3);
        assert_relative_eq!(
            pair.sigma_p(&planar(0.1, 0.2), &v, &sphere).unwrap(),
            0.1 * PI,
            max_relative = 1e-13
        );
        let vacuum = CoefficientPair::constant(Domain::UnitDisk, 0.0, 0.0);
        assert_eq!(vacuum.sigma_p(&planar(0.0, 0.0), &v, &sphere).unwrap(), 0.0);
    }

    #[test]
    fn line_integral_of_constant() {
        let pair = CoefficientPair::constant(Domain::UnitDisk, 0.5, 0.0);
        let rule = Composite::new(4, 1);
        let got = pair
            .line_integral_sigma(&planar(-1.0, 0.0), &direction(0.0), 0.0, 2.0, &rule)
            .unwrap();
        assert_relative_eq!(got, 1.0, epsilon = 1e-15);
        assert!(matches!(
            pair.line_integral_sigma(&planar(-1.0, 0.0), &direction(0.0), 0.0, 2.5, &rule),
            Err(Error::SegmentLeavesDomain)
        ));
    }

    #[test]
    fn gaussian_line_integral_matches_quadrature() {
        let bump = GaussianBump {
            center: vec![0.2, -0.1],
            width: 0.3,
            amplitude: 1.3,
        };
        let x = planar(-0.9, 0.3);
        let v = direction(-0.4);
        let rule = Composite::new(16, 16);
        for (s0, s1) in [(0.0, 1.5), (0.9, 1.6), (1.5, 1.7), (-0.3, 0.1)] {
            let q = rule.integrate(s0, s1, |s| bump.value(&(x + s * v)));
            assert_relative_eq!(
                bump.line_integral(&x, &v, s0, s1),
                q,
                epsilon = 1e-14,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn negative_lobe_is_reported() {
        let pair = CoefficientPair::new(
            Domain::UnitDisk,
            Absorption::isotropic(SpatialProfile::constant(0.5)),
            Scattering {
                profile: SpatialProfile::constant(0.05),
                law: AngularLaw::Linear { slope: 1.5 },
            },
        );
        let r = check_admissible(&pair, SamplingResolution::default());
        assert!(!r.admissible);
        assert!(r.violations.iter().any(|v| v.contains("negative")));
    }

    #[test]
    fn catalog_names_are_unique() {
        let names: std::collections::BTreeSet<_> = catalog().into_iter().map(|p| p.name).collect();
        assert_eq!(names.len(), catalog().len());
        for p in catalog() {
            p.pair.validate().unwrap();
        }
    }
}
