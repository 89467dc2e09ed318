//! Recovery of the coefficients from boundary measurements: line integrals of
//! `σ` from ballistic arrivals, filtered back-projection, and pointwise `k`
//! from single-scattering arrivals along broken rays.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coefficients::{Attenuation, CoefficientPair, SpatialProfile};
use crate::error::{finite, Error, Result};
use crate::forward::{
    AlbedoResponse, BoundarySource, GridKind, MollifiedSource, Solver, SolverConfig, SourceNode,
};
use crate::geometry::{angle_of, direction, planar, Domain, PhasePoint, Sign, Vector};
use crate::kernels::e_plus;

/// Below this incidence cosine a line is treated as tangent.
pub const TANGENT_INCIDENCE: f64 = 1e-3;

/// Smallest extinction factor extraction divides by.
pub const MIN_EXTINCTION: f64 = 1e-8;

/// Fewest projection angles [`reconstruct_sigma`] accepts.
pub const MIN_ANGLES: usize = 32;

/// The line `{x : x·n = offset}` with `n = (cos angle, sin angle)`, oriented
/// along `(−sin angle, cos angle)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub angle: f64,
    pub offset: f64,
}

impl Line {
    pub fn new(angle: f64, offset: f64) -> Self {
        Self { angle, offset }
    }

    pub fn normal(&self) -> Vector {
        direction(self.angle)
    }

    pub fn direction(&self) -> Vector {
        direction(self.angle + 0.5 * PI)
    }

    /// The line traversed the other way.
    pub fn reversed(&self) -> Self {
        Self {
            angle: self.angle + PI,
            offset: -self.offset,
        }
    }

    /// Entry point on `Γ₋` and chord length; `None` if the line misses `X`.
    pub fn chord(&self, domain: &Domain) -> Option<(PhasePoint, f64)> {
        let base = self.offset * self.normal();
        let d = self.direction();
        let (t0, t1) = domain.line_crossing(&base, &d)?;
        Some((
            PhasePoint {
                x: base + t0 * d,
                v: d,
            },
            t1 - t0,
        ))
    }

    /// The line through an incoming phase point.
    pub fn through(point: &PhasePoint) -> Self {
        let angle = angle_of(&point.v) - 0.5 * PI;
        Self {
            angle,
            offset: point.x.dot(&direction(angle)),
        }
    }
}

/// Time gate used to isolate one arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub start: f64,
    pub end: f64,
}

impl Gate {
    /// Width `2ε₂ + Δt` centred on the mean arrival `delay + w/2`.
    pub fn around(response: &AlbedoResponse, delay: f64) -> Self {
        let emission = response.meta.eta.min(response.meta.eps2);
        let half = response.meta.eps2 + 0.5 * response.time.width();
        let centre = delay + 0.5 * emission;
        Self {
            start: centre - half,
            end: centre + half,
        }
    }

    pub fn width(&self) -> f64 {
        self.end - self.start
    }

    pub fn widened(self, by: f64) -> Self {
        Self {
            start: self.start - by,
            end: self.end + by,
        }
    }

    fn bins(&self, response: &AlbedoResponse) -> Result<std::ops::Range<usize>> {
        if self.start < 0.0 || self.end > response.meta.t_max {
            return Err(Error::OutOfRange(format!(
                "gate [{}, {}] leaves the measurement window (0, {})",
                self.start, self.end, response.meta.t_max
            )));
        }
        Ok(response.time.bins_touching(self.start, self.end))
    }
}

/// Gated ballistic arrival for one mollified source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallisticEstimate {
    /// Gated outgoing mass over incoming mass, all collision orders.
    pub value: f64,
    /// The unscattered share of `value`.
    pub ballistic: f64,
    /// Scattered mass inside the gate.
    pub contamination: f64,
    /// Bound on unresolved orders, from the response metadata.
    pub tail_bound: f64,
    pub gate: Gate,
}

/// Estimates `exp(−∫σ)` along the source's central line from the window grid.
pub fn extract_ballistic(response: &AlbedoResponse) -> Result<BallisticEstimate> {
    let meta = &response.meta;
    let diameter = meta.domain.diameter();
    if meta.t_max <= diameter {
        return Err(Error::OutOfRange(format!(
            "ballistic extraction needs T > diam(X) = {diameter}, got {}",
            meta.t_max
        )));
    }
    let [x, y, angle] = meta.source_center;
    let entry = PhasePoint::planar(x, y, angle);
    let incidence = -meta.domain.outward_normal(&entry.x).dot(&entry.v);
    if incidence < TANGENT_INCIDENCE {
        return Err(Error::NearTangent { cosine: incidence });
    }
    let delay = meta.domain.travel(&entry.x, &entry.v, Sign::Plus);
    let gate = Gate::around(response, delay);
    let bins = gate.bins(response)?;
    let total =
        response.window_gate_mass(bins.clone(), 0..crate::forward::ORDERS) / meta.incoming_mass;
    let ballistic = response.window_gate_mass(bins, 0..1) / meta.incoming_mass;
    Ok(BallisticEstimate {
        value: total,
        ballistic,
        contamination: total - ballistic,
        tail_bound: meta.tail_bound,
        gate,
    })
}

/// Richardson limit of a sequence measured at decreasing widths.
///
/// Three or more rungs estimate the convergence order from successive
/// differences (clamped to `[1, 4]`); two rungs assume second order.
pub fn extrapolate_ladder(rungs: &[(f64, f64)]) -> Result<f64> {
    match rungs {
        [] => Err(Error::Invalid("empty refinement ladder".into())),
        [(_, v)] => Ok(*v),
        _ => {
            let n = rungs.len();
            let (e1, v1) = rungs[n - 2];
            let (e2, v2) = rungs[n - 1];
            let ratio = e1 / e2;
            if !(ratio > 1.0) {
                return Err(Error::Invalid("ladder widths must decrease".into()));
            }
            let mut order = 2.0;
            if n >= 3 {
                let (e0, v0) = rungs[n - 3];
                let (d0, d1) = (v1 - v0, v2 - v1);
                if d0 != 0.0
                    && d1 != 0.0
                    && d0.signum() == d1.signum()
                    && (e0 / e1 - ratio).abs() < 1e-9 * ratio
                {
                    order = ((d0 / d1).ln() / ratio.ln()).clamp(1.0, 4.0);
                }
            }
            let factor = ratio.powf(order);
            Ok(v2 + (v2 - v1) / (factor - 1.0))
        }
    }
}

/// How line integrals are obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ScanMode {
    /// Closed-form line integrals of the phantom.
    Analytic,
    /// `−log` of gated ballistic arrivals from forward solves.
    Measurement(MeasurementConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeasurementConfig {
    /// Mollifier widths, decreasing; `ε₁ = ε₂` on each rung.
    pub ladder: Vec<f64>,
    pub eta: f64,
    pub solver: SolverConfig,
    /// Report the Richardson limit instead of the finest rung.
    pub extrapolate: bool,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            ladder: vec![0.1, 0.05],
            eta: 0.25,
            solver: SolverConfig {
                window_only: true,
                order: 1,
                time_bins: 500,
                ..SolverConfig::default()
            },
            extrapolate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub rungs: Vec<(f64, BallisticEstimate)>,
    pub eps1: Vec<f64>,
}

/// One line integral of `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XRaySample {
    pub line: Line,
    pub value: f64,
    /// Tangent line, failed extraction or nonpositive arrival.
    pub flagged: bool,
    pub extraction: Option<Extraction>,
}

pub fn xray_transform_scan(
    pair: &CoefficientPair,
    lines: &[Line],
    mode: &ScanMode,
) -> Result<Vec<XRaySample>> {
    if pair.dimension() != 2 {
        return Err(Error::Unsupported(
            "line scans run on planar domains".into(),
        ));
    }
    match mode {
        ScanMode::Analytic => Ok(lines
            .par_iter()
            .map(|line| {
                let value = line.chord(&pair.domain).map_or(0.0, |(entry, length)| {
                    pair.optical_depth(&entry.x, &entry.v, 0.0, length)
                });
                XRaySample {
                    line: *line,
                    value,
                    flagged: false,
                    extraction: None,
                }
            })
            .collect()),
        ScanMode::Measurement(config) => {
            if config.ladder.is_empty() || config.ladder.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Invalid(
                    "measurement ladder must be nonempty and decreasing".into(),
                ));
            }
            let solver = Solver::new(pair, config.solver)?;
            Ok(lines
                .iter()
                .map(|line| measure_line(&solver, line, config))
                .collect())
        }
    }
}

fn measure_line(solver: &Solver<'_>, line: &Line, config: &MeasurementConfig) -> XRaySample {
    let flagged = |extraction| XRaySample {
        line: *line,
        value: 0.0,
        flagged: true,
        extraction,
    };
    let domain = solver.pair().domain;
    let Some((entry, _)) = line.chord(&domain) else {
        return XRaySample {
            line: *line,
            value: 0.0,
            flagged: false,
            extraction: None,
        };
    };
    let incidence = -domain.outward_normal(&entry.x).dot(&entry.v);
    if incidence < TANGENT_INCIDENCE {
        return flagged(None);
    }
    let mut rungs = Vec::new();
    let mut widths = Vec::new();
    for &eps in &config.ladder {
        // Shrink the phase window so it stays inside Γ₋ near tangency.
        let eps1 = eps.min(0.5 * incidence);
        let estimate = solver
            .mollified_source(entry, eps1, eps, config.eta)
            .and_then(|source| solver.solve(&BoundarySource::Mollified(source)))
            .and_then(|response| extract_ballistic(&response));
        match estimate {
            Ok(e) => {
                rungs.push((eps, e));
                widths.push(eps1);
            }
            Err(_) => return flagged(None),
        }
    }
    let ladder: Vec<(f64, f64)> = rungs.iter().map(|(e, b)| (*e, b.value)).collect();
    let arrival = if config.extrapolate {
        extrapolate_ladder(&ladder).unwrap_or(ladder[ladder.len() - 1].1)
    } else {
        ladder[ladder.len() - 1].1
    };
    let extraction = Extraction {
        rungs,
        eps1: widths,
    };
    if !(arrival > 0.0) || !arrival.is_finite() {
        return flagged(Some(extraction));
    }
    XRaySample {
        line: *line,
        value: -arrival.ln(),
        flagged: false,
        extraction: Some(extraction),
    }
}

/// Parallel-beam samples on `angles × offsets` lines; angles cover `[0, π)`,
/// offsets span the domain's bounding radius end to end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub angles: usize,
    pub offsets: usize,
    pub radius: f64,
    /// Angle-major values.
    pub values: Vec<f64>,
    pub flagged: Vec<bool>,
}

impl Sinogram {
    pub fn lines(angles: usize, offsets: usize, radius: f64) -> Vec<Line> {
        let step = 2.0 * radius / (offsets.max(2) - 1) as f64;
        (0..angles)
            .flat_map(|i| {
                let angle = PI * i as f64 / angles as f64;
                (0..offsets).map(move |j| Line::new(angle, -radius + step * j as f64))
            })
            .collect()
    }

    pub fn offset_step(&self) -> f64 {
        2.0 * self.radius / (self.offsets - 1) as f64
    }

    pub fn from_samples(
        angles: usize,
        offsets: usize,
        radius: f64,
        samples: &[XRaySample],
    ) -> Result<Self> {
        if samples.len() != angles * offsets {
            return Err(Error::GridMismatch(format!(
                "{} samples for a {angles}×{offsets} sinogram",
                samples.len()
            )));
        }
        Ok(Self {
            angles,
            offsets,
            radius,
            values: samples.iter().map(|s| s.value).collect(),
            flagged: samples.iter().map(|s| s.flagged).collect(),
        })
    }

    pub fn scan(
        pair: &CoefficientPair,
        angles: usize,
        offsets: usize,
        mode: &ScanMode,
    ) -> Result<Self> {
        let radius = 0.5 * pair.domain.diameter();
        let samples = xray_transform_scan(pair, &Self::lines(angles, offsets, radius), mode)?;
        Self::from_samples(angles, offsets, radius, &samples)
    }

    pub fn row(&self, angle: usize) -> &[f64] {
        &self.values[angle * self.offsets..(angle + 1) * self.offsets]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let io = |e: csv::Error| Error::Io(e.to_string());
        writer
            .write_record(["angle", "offset", "value", "flagged"])
            .map_err(io)?;
        let lines = Self::lines(self.angles, self.offsets, self.radius);
        for ((line, value), flagged) in lines.iter().zip(&self.values).zip(&self.flagged) {
            writer
                .serialize((line.angle, line.offset, value, flagged))
                .map_err(io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RampFilter {
    RamLak,
    /// Ramp times `½(1 + cos(π f / f_c))` below `f_c = cutoff · Nyquist`.
    RaisedCosine {
        cutoff: f64,
    },
}

impl Default for RampFilter {
    fn default() -> Self {
        Self::RaisedCosine { cutoff: 0.9 }
    }
}

impl RampFilter {
    fn window(&self, nu: f64) -> f64 {
        match *self {
            Self::RamLak => 1.0,
            Self::RaisedCosine { cutoff } => {
                if nu >= cutoff {
                    0.0
                } else {
                    0.5 * (1.0 + (PI * nu / cutoff).cos())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FbpConfig {
    pub grid: usize,
    pub filter: RampFilter,
}

impl Default for FbpConfig {
    fn default() -> Self {
        Self {
            grid: 128,
            filter: RampFilter::default(),
        }
    }
}

/// Cell-centred samples of `σ` on the square `[−radius, radius]²`, zero
/// outside the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionGrid {
    pub domain: Domain,
    pub n: usize,
    pub radius: f64,
    /// Row-major, `y` outer.
    pub values: Vec<f64>,
}

impl ReconstructionGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.n as f64
    }

    pub fn point(&self, ix: usize, iy: usize) -> Vector {
        let h = self.spacing();
        planar(
            -self.radius + (ix as f64 + 0.5) * h,
            -self.radius + (iy as f64 + 0.5) * h,
        )
    }

    /// Samples a profile on the same cells.
    pub fn sample(domain: Domain, n: usize, radius: f64, profile: &SpatialProfile) -> Self {
        let mut grid = Self {
            domain,
            n,
            radius,
            values: vec![0.0; n * n],
        };
        for iy in 0..n {
            for ix in 0..n {
                let x = grid.point(ix, iy);
                if domain.contains(&x) {
                    grid.values[iy * n + ix] = profile.value(&x);
                }
            }
        }
        grid
    }

    /// Bilinear interpolation between cell centres, zero beyond the grid.
    pub fn value(&self, x: &Vector) -> f64 {
        let h = self.spacing();
        let fx = (x.x + self.radius) / h - 0.5;
        let fy = (x.y + self.radius) / h - 0.5;
        let (x0, y0) = (fx.floor(), fy.floor());
        let (ax, ay) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let n = self.n as isize;
        let mut acc = 0.0;
        for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
            for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
                let (cx, cy) = (x0 + dx, y0 + dy);
                if cx >= 0 && cy >= 0 && cx < n && cy < n {
                    acc += wx * wy * self.values[(cy * n + cx) as usize];
                }
            }
        }
        acc
    }

    /// `‖self − other‖₂ / ‖other‖₂` over cells inside the domain.
    pub fn relative_l2_error(&self, reference: &ReconstructionGrid) -> Result<f64> {
        if self.n != reference.n || self.radius != reference.radius {
            return Err(Error::GridMismatch("reconstruction grids differ".into()));
        }
        let (mut diff, mut norm) = (0.0, 0.0);
        for (a, b) in self.values.iter().zip(&reference.values) {
            diff += (a - b) * (a - b);
            norm += b * b;
        }
        finite((diff / norm).sqrt(), "relative L2 error")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
        let io = |e: csv::Error| Error::Io(e.to_string());
        writer.write_record(["x", "y", "value"]).map_err(io)?;
        for iy in 0..self.n {
            for ix in 0..self.n {
                let p = self.point(ix, iy);
                writer
                    .serialize((p.x, p.y, self.values[iy * self.n + ix]))
                    .map_err(io)?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

impl Attenuation for ReconstructionGrid {
    /// Simpson's rule at half-cell steps.
    fn optical_depth(&self, x: &Vector, v: &Vector, s0: f64, s1: f64) -> f64 {
        let length = s1 - s0;
        if length == 0.0 {
            return 0.0;
        }
        let panels = ((length.abs() / (0.5 * self.spacing())).ceil() as usize).max(1);
        let h = length / (2 * panels) as f64;
        let mut acc = self.value(&(x + s0 * v)) + self.value(&(x + s1 * v));
        for i in 1..2 * panels {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * self.value(&(x + (s0 + i as f64 * h) * v));
        }
        acc * h / 3.0
    }
}

/// Filtered back-projection of a parallel-beam sinogram.
pub fn reconstruct_sigma(
    sinogram: &Sinogram,
    domain: Domain,
    config: FbpConfig,
) -> Result<ReconstructionGrid> {
    if domain.dimension() != 2 {
        return Err(Error::Unsupported("back-projection is planar".into()));
    }
    if sinogram.angles < MIN_ANGLES {
        return Err(Error::OutOfRange(format!(
            "{} projection angles do not cover the domain; at least {MIN_ANGLES} are needed",
            sinogram.angles
        )));
    }
    if sinogram.offsets < 3 || sinogram.values.len() != sinogram.angles * sinogram.offsets {
        return Err(Error::GridMismatch(
            "sinogram shape does not match its values".into(),
        ));
    }
    if config.grid == 0 {
        return Err(Error::OutOfRange(
            "reconstruction grid must have cells".into(),
        ));
    }
    let filtered = filter_projections(sinogram, config.filter);
    let n = config.grid;
    let radius = sinogram.radius;
    let mut grid = ReconstructionGrid {
        domain,
        n,
        radius,
        values: vec![0.0; n * n],
    };
    let normals: Vec<Vector> = (0..sinogram.angles)
        .map(|i| direction(PI * i as f64 / sinogram.angles as f64))
        .collect();
    let step = sinogram.offset_step();
    let scale = PI / sinogram.angles as f64;
    let template = grid.clone();
    grid.values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(iy, row)| {
            for (ix, value) in row.iter_mut().enumerate() {
                let x = template.point(ix, iy);
                if !domain.contains(&x) {
                    continue;
                }
                let mut acc = 0.0;
                for (i, normal) in normals.iter().enumerate() {
                    let f = (x.dot(normal) + radius) / step;
                    let j = f.floor();
                    let a = f - j;
                    let j = j as isize;
                    let q = &filtered[i * sinogram.offsets..(i + 1) * sinogram.offsets];
                    let at = |k: isize| {
                        if k >= 0 && (k as usize) < q.len() {
                            q[k as usize]
                        } else {
                            0.0
                        }
                    };
                    acc += (1.0 - a) * at(j) + a * at(j + 1);
                }
                *value = acc * scale;
            }
        });
    Ok(grid)
}

/// Convolves each projection with the discrete ramp kernel, apodized in frequency.
fn filter_projections(sinogram: &Sinogram, filter: RampFilter) -> Vec<f64> {
    let m = sinogram.offsets;
    let length = (2 * m).next_power_of_two();
    let step = sinogram.offset_step();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(length);
    let inverse = planner.plan_fft_inverse(length);

    let mut kernel = vec![Complex::new(0.0, 0.0); length];
    kernel[0].re = 1.0 / (4.0 * step * step);
    for k in (1..m).step_by(2) {
        let value = -1.0 / (PI * PI * (k * k) as f64 * step * step);
        kernel[k].re = value;
        kernel[length - k].re = value;
    }
    forward.process(&mut kernel);
    for (i, h) in kernel.iter_mut().enumerate() {
        let nu = 2.0 * i.min(length - i) as f64 / length as f64;
        *h *= step * filter.window(nu) / length as f64;
    }

    let mut out = vec![0.0; sinogram.values.len()];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let mut buffer = vec![Complex::new(0.0, 0.0); length];
        for (b, v) in buffer.iter_mut().zip(sinogram.row(i)) {
            b.re = *v;
        }
        forward.process(&mut buffer);
        for (b, h) in buffer.iter_mut().zip(&kernel) {
            *b *= h;
        }
        inverse.process(&mut buffer);
        for (o, b) in row.iter_mut().zip(&buffer) {
            *o = b.re;
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KExtractionConfig {
    /// Half-width of the excluded cone around the incoming direction.
    pub cone: f64,
    /// Source nodes per axis for the geometric factor.
    pub source_nodes: usize,
    /// Smallest normalized distance of the crossing from the ray ends.
    pub margin: f64,
    /// Subtract the smooth background estimated from bins flanking the gate.
    pub subtract_background: bool,
}

impl Default for KExtractionConfig {
    fn default() -> Self {
        Self {
            cone: 0.1,
            source_nodes: 24,
            margin: 0.05,
            subtract_background: true,
        }
    }
}

/// One pointwise estimate of `k(x′ + s v′, v′, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSample {
    pub node: usize,
    pub depth: f64,
    /// Direction angle of the outgoing velocity.
    pub angle: f64,
    pub point: [f64; 2],
    pub value: f64,
    pub measured: f64,
    pub extinction: f64,
    /// `Σ_q W_q / |v_q × v|` over source nodes whose ray crosses the node's.
    pub geometric: f64,
    /// Double-scattered gate mass not removed by the background estimate,
    /// relative to `measured`.
    pub contamination: f64,
    pub gate: Gate,
}

/// Broken-ray crossing of the source's central line with a backward ray:
/// `(depth along the source line, distance back from x, |v′ × v|)`.
pub fn broken_ray(entry: &PhasePoint, x: &Vector, v: &Vector) -> Option<(f64, f64, f64)> {
    let det = entry.v.x * v.y - entry.v.y * v.x;
    if det.abs() < 1e-12 {
        return None;
    }
    let w = x - entry.x;
    Some((
        (w.x * v.y - w.y * v.x) / det,
        (entry.v.x * w.y - entry.v.y * w.x) / det,
        det.abs(),
    ))
}

/// Estimates `k` at every outgoing node of the global grid whose broken ray
/// is resolved, dividing gated arrivals by `E₊` computed from `sigma`.
pub fn extract_k<A: Attenuation + ?Sized>(
    response: &AlbedoResponse,
    sigma: &A,
    config: KExtractionConfig,
) -> Result<Vec<KSample>> {
    let meta = &response.meta;
    let domain = meta.domain;
    let diameter = domain.diameter();
    if meta.t_max <= 2.0 * diameter {
        return Err(Error::OutOfRange(format!(
            "scattering extraction needs T > 2 diam(X) = {}, got {}",
            2.0 * diameter,
            meta.t_max
        )));
    }
    let global = response
        .global
        .as_ref()
        .filter(|g| g.kind == GridKind::Global)
        .ok_or_else(|| {
            Error::Invalid("scattering extraction needs the global outgoing grid".into())
        })?;
    let [x0, y0, angle0] = meta.source_center;
    let entry = PhasePoint::planar(x0, y0, angle0);
    let source = MollifiedSource::new(
        domain,
        entry,
        meta.eps1,
        meta.eps2,
        meta.eta,
        meta.window_nodes,
    )?;
    let reach = domain.travel(&entry.x, &entry.v, Sign::Plus);
    let nodes = source.phase.nodes_with(config.source_nodes);
    let dt = response.time.width();

    let mut out = Vec::new();
    for (i, node) in global.nodes.iter().enumerate() {
        if global.excluded[i] {
            continue;
        }
        let turn = node.v.dot(&entry.v).clamp(-1.0, 1.0).acos();
        if turn < config.cone {
            continue;
        }
        let Some((s, r, _)) = broken_ray(&entry, &node.x, &node.v) else {
            continue;
        };
        let back = domain.travel(&node.x, &node.v, Sign::Minus);
        let scale = config.margin * diameter;
        if !(s > scale && reach - s > scale && r > scale && back - r > scale) {
            continue;
        }
        let (geometric, spread) = geometric_factor(&domain, &nodes, &node.x, &node.v, s + r);
        if geometric <= 0.0 {
            continue;
        }
        let gate = Gate::around(response, s + r).widened(spread);
        let Ok(bins) = gate.bins(response) else {
            continue;
        };
        let parts = &global.parts[i];
        let total = |range: std::ops::Range<usize>| {
            parts[1].integral_over(range.clone(), dt) + parts[2].integral_over(range, dt)
        };
        let gated = total(bins.clone());
        let background = if config.subtract_background {
            let flank = (bins.len() / 2).max(1);
            if bins.start < flank || bins.end + flank > response.time.bins {
                continue;
            }
            let sides = total(bins.start - flank..bins.start) + total(bins.end..bins.end + flank);
            sides * bins.len() as f64 / (2 * flank) as f64
        } else {
            0.0
        };
        let double = parts[2].integral_over(bins, dt);
        let measured = (gated - background) / meta.incoming_mass;
        let extinction = e_plus(sigma, &domain, &entry.x, &entry.v, s, &node.v);
        if !(extinction >= MIN_EXTINCTION) {
            return Err(Error::Singular(format!(
                "extinction {extinction} along the broken ray at node {i} is too small to divide by"
            )));
        }
        let point = entry.x + s * entry.v;
        out.push(KSample {
            node: i,
            depth: s,
            angle: angle_of(&node.v),
            point: [point.x, point.y],
            value: measured / (extinction * geometric),
            measured,
            extinction,
            geometric,
            contamination: if measured > 0.0 {
                (double - background) / meta.incoming_mass / measured
            } else {
                0.0
            },
            gate,
        });
    }
    Ok(out)
}

/// `Σ_q W_q / |v_q × v|` over source nodes whose ray meets the backward ray
/// from `(x, v)` inside the domain, and the largest shift of their broken-ray
/// arrival times from `delay`.
fn geometric_factor(
    domain: &Domain,
    nodes: &[SourceNode],
    x: &Vector,
    v: &Vector,
    delay: f64,
) -> (f64, f64) {
    let mut total = 0.0;
    let mut spread: f64 = 0.0;
    for q in nodes {
        let Some((s, r, sin)) = broken_ray(&PhasePoint { x: q.x, v: q.v }, x, v) else {
            continue;
        };
        let reach = domain.travel(&q.x, &q.v, Sign::Plus);
        if s > 0.0 && s < reach && r > 0.0 {
            total += q.density * q.measure / sin;
            spread = spread.max((s + r - delay).abs());
        }
    }
    (total, spread)
}

/// Median of the sample estimates, the recovered value of a constant `k`.
pub fn pooled_k(samples: &[KSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Invalid("no resolved scattering samples".into()));
    }
    let mut values: Vec<f64> = samples.iter().map(|s| s.value).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Ok(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_through_its_entry() {
        let line = Line::new(0.4, 0.3);
        let (entry, length) = line.chord(&Domain::UnitDisk).unwrap();
        assert!((entry.x.norm() - 1.0).abs() < 1e-14);
        assert!((length - 2.0 * (1.0f64 - 0.09).sqrt()).abs() < 1e-14);
        let back = Line::through(&entry);
        assert!((back.offset - 0.3).abs() < 1e-14);
        assert!((direction(back.angle) - direction(0.4)).norm() < 1e-14);
        assert!(Line::new(1.0, 1.2).chord(&Domain::UnitDisk).is_none());
        let reversed = line.reversed().chord(&Domain::UnitDisk).unwrap();
        assert!((reversed.1 - length).abs() < 1e-14);
    }

    #[test]
    fn richardson_removes_quadratic_error() {
        let f = |e: f64| 2.0 + 0.3 * e * e;
        let limit = extrapolate_ladder(&[(0.2, f(0.2)), (0.1, f(0.1))]).unwrap();
        assert!((limit - 2.0).abs() < 1e-14);
        let g = |e: f64| 1.0 - 0.5 * e;
        let limit = extrapolate_ladder(&[(0.2, g(0.2)), (0.1, g(0.1)), (0.05, g(0.05))]).unwrap();
        assert!((limit - 1.0).abs() < 1e-12);
        assert!(extrapolate_ladder(&[(0.1, 1.0), (0.2, 1.0)]).is_err());
        assert!(extrapolate_ladder(&[]).is_err());
    }

    #[test]
    fn window_shape() {
        let w = RampFilter::default();
        assert_eq!(w.window(0.0), 1.0);
        assert!((w.window(0.45) - 0.5).abs() < 1e-15);
        assert_eq!(w.window(0.95), 0.0);
        assert_eq!(RampFilter::RamLak.window(1.0), 1.0);
    }

    #[test]
    fn median_of_samples() {
        let sample = |value| KSample {
            node: 0,
            depth: 0.0,
            angle: 0.0,
            point: [0.0; 2],
            value,
            measured: 0.0,
            extinction: 1.0,
            geometric: 1.0,
            contamination: 0.0,
            gate: Gate {
                start: 0.0,
                end: 1.0,
            },
        };
        assert_eq!(
            pooled_k(&[sample(3.0), sample(1.0), sample(2.0)]).unwrap(),
            2.0
        );
        assert_eq!(pooled_k(&[sample(3.0), sample(1.0)]).unwrap(), 2.0);
        assert!(pooled_k(&[]).is_err());
    }
}
