//! `H^s` norms of planar fields through the discrete Fourier transform.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coefficients::SpatialProfile;
use crate::error::{Error, Result};
use crate::geometry::{planar, Domain, Vector};

/// Share of a norm carried by frequencies above half the grid Nyquist
/// beyond which [`sobolev_norm`] warns.
pub const RESOLUTION_WARNING: f64 = 1e-3;

/// Cell-centred samples on the square `[−half_width, half_width]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub n: usize,
    pub half_width: f64,
    /// Row-major, `y` outer.
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn sample(n: usize, half_width: f64, f: impl Fn(&Vector) -> f64) -> Self {
        let h = 2.0 * half_width / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                let x = planar(
                    -half_width + (ix as f64 + 0.5) * h,
                    -half_width + (iy as f64 + 0.5) * h,
                );
                values.push(f(&x));
            }
        }
        Self {
            n,
            half_width,
            values,
        }
    }

    /// A box covering `2X`, as the norms need zero padding around the domain.
    pub fn for_domain(domain: &Domain, n: usize, f: impl Fn(&Vector) -> f64) -> Result<Self> {
        if domain.dimension() != 2 {
            return Err(Error::Unsupported(
                "Sobolev norms are computed for planar fields".into(),
            ));
        }
        Ok(Self::sample(n, domain.diameter(), f))
    }

    /// The profile itself, not cut off at `∂X`; its norms bound those of the restriction.
    pub fn from_profile(domain: &Domain, n: usize, profile: &SpatialProfile) -> Result<Self> {
        if profile.background != 0.0 {
            return Err(Error::Unsupported(
                "a nonzero background has no finite-energy extension; use bump-only profiles"
                    .into(),
            ));
        }
        Self::for_domain(domain, n, |x| profile.value(x))
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(h² Σ f²)^{1/2}` directly on the samples.
    pub fn l2(&self) -> f64 {
        let h = self.spacing();
        (self.values.iter().map(|v| v * v).sum::<f64>() * h * h).sqrt()
    }

    pub fn difference(&self, other: &FieldGrid) -> Result<FieldGrid> {
        if self.n != other.n || self.half_width != other.half_width {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        Ok(FieldGrid {
            n: self.n,
            half_width: self.half_width,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// `|f̂(ξ)|² Δξ / (2π)²` and `|ξ|²` for every discrete frequency.
    pub fn spectrum(&self) -> Spectrum {
        let n = self.n;
        let h = self.spacing();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(n);
        let mut data: Vec<Complex<f64>> =
            self.values.iter().map(|v| Complex::new(*v, 0.0)).collect();
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut column = vec![Complex::new(0.0, 0.0); n];
        for ix in 0..n {
            for iy in 0..n {
                column[iy] = data[iy * n + ix];
            }
            fft.process(&mut column);
            for iy in 0..n {
                data[iy * n + ix] = column[iy];
            }
        }
        let dxi = 2.0 * PI / (n as f64 * h);
        let scale = h.powi(4) * dxi * dxi / (4.0 * PI * PI);
        let frequency = |i: usize| {
            let k = if i <= n / 2 {
                i as f64
            } else {
                i as f64 - n as f64
            };
            k * dxi
        };
        let mut power = Vec::with_capacity(n * n);
        let mut xi2 = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                power.push(data[iy * n + ix].norm_sqr() * scale);
                xi2.push(frequency(ix).powi(2) + frequency(iy).powi(2));
            }
        }
        Spectrum {
            power,
            xi2,
            nyquist: PI / h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    power: Vec<f64>,
    xi2: Vec<f64>,
    nyquist: f64,
}

impl Spectrum {
    pub fn norm(&self, s: f64) -> SobolevNorm {
        let mut total = 0.0;
        let mut high = 0.0;
        let cut = 0.25 * self.nyquist * self.nyquist;
        for (p, x) in self.power.iter().zip(&self.xi2) {
            let term = (1.0 + x).powf(s) * p;
            total += term;
            if *x > cut {
                high += term;
            }
        }
        let share = if total > 0.0 { high / total } else { 0.0 };
        SobolevNorm {
            s,
            value: total.sqrt(),
            high_frequency_share: share,
            warning: (share > RESOLUTION_WARNING).then(|| {
                format!(
                    "{:.1e} of the H^{s} norm sits above half the grid Nyquist; refine the grid",
                    share
                )
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevNorm {
    pub s: f64,
    pub value: f64,
    pub high_frequency_share: f64,
    pub warning: Option<String>,
}

pub fn sobolev_norm(field: &FieldGrid, s: f64) -> SobolevNorm {
    field.spectrum().norm(s)
}

/// Both sides of the interpolation between `H^{−1/2}` and `H^{d/2 + r̃}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Exponent on the high norm, `(2s + 1)/(d + 1 + 2r̃)`.
    pub high_exponent: f64,
    /// Exponent on the low norm, `(d + 2(r̃ − s))/(d + 1 + 2r̃)`.
    pub low_exponent: f64,
    pub margin: f64,
}

pub fn interpolation_check(
    field: &FieldGrid,
    s: f64,
    extra_smoothness: f64,
) -> Result<InterpolationCheck> {
    let d = 2.0;
    let top = d / 2.0 + extra_smoothness;
    if !(-0.5..=top).contains(&s) {
        return Err(Error::OutOfRange(format!(
            "s = {s} must lie in [-1/2, {top}]"
        )));
    }
    let spectrum = field.spectrum();
    let denominator = d + 1.0 + 2.0 * extra_smoothness;
    let high_exponent = (2.0 * s + 1.0) / denominator;
    let low_exponent = (d + 2.0 * (extra_smoothness - s)) / denominator;
    let lhs = spectrum.norm(s).value;
    let rhs =
        spectrum.norm(top).value.powf(high_exponent) * spectrum.norm(-0.5).value.powf(low_exponent);
    Ok(InterpolationCheck {
        s,
        lhs,
        rhs,
        high_exponent,
        low_exponent,
        margin: rhs - lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(width: f64) -> FieldGrid {
        FieldGrid::sample(64, 2.0, |x| {
            (-x.norm_squared() / (2.0 * width * width)).exp()
        })
    }

    #[test]
    fn zeroth_order_is_parseval() {
        let f = gaussian(0.3);
        let norm = sobolev_norm(&f, 0.0);
        assert!((norm.value - f.l2()).abs() < 1e-12 * f.l2());
        assert!(norm.warning.is_none());
    }

    #[test]
    fn gaussian_h1_against_closed_form() {
        // ‖g‖²_{H¹} = ‖g‖² + ‖∇g‖² = π w² + π for g = exp(−|x|²/2w²).
        let w = 0.3;
        let norm = sobolev_norm(&gaussian(w), 1.0).value;
        let exact = (PI * w * w + PI).sqrt();
        assert!((norm - exact).abs() < 1e-9 * exact, "{norm} vs {exact}");
    }

    #[test]
    fn monotone_in_order() {
        let f = gaussian(0.2);
        let norms: Vec<f64> = [-0.5, 0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|s| sobolev_norm(&f, *s).value)
            .collect();
        assert!(norms.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn under_resolved_field_warns() {
        let f = FieldGrid::sample(32, 2.0, |x| {
            if x.x.abs() < 0.5 && x.y.abs() < 0.5 {
                1.0
            } else {
                0.0
            }
        });
        assert!(sobolev_norm(&f, 2.0).warning.is_some());
    }

    #[test]
    fn interpolation_exponents() {
        let check = interpolation_check(&gaussian(0.25), -0.5, 1.0).unwrap();
        assert_eq!(check.high_exponent, 0.0);
        assert_eq!(check.low_exponent, 1.0);
        assert!(check.margin.abs() < 1e-12 * check.lhs);
        assert!(interpolation_check(&gaussian(0.25), 2.5, 1.0).is_err());
    }
}
