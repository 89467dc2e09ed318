//! Duhamel iteration on a `(t, x, v)` lattice.
//!
//! Order `j + 1` is obtained from order `j` by scattering on the lattice and
//! streaming along characteristics. The scheme is low order and only serves
//! to cross-check the explicit kernels.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::source::{BoundarySource, LiftedSource};
use crate::coefficients::{Attenuation, CoefficientPair};
use crate::error::{Error, Result};
use crate::geometry::{angle_of, direction, BoundaryGrid, Sign, Vector};
use crate::quadrature::{periodic_nodes, GaussLegendre};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardConfig {
    pub t_max: f64,
    /// Highest collision order iterated.
    pub order: usize,
    /// Lattice cells per axis.
    pub cells: usize,
    pub angles: usize,
    pub steps: usize,
    /// Direction nodes used to scatter the unscattered field.
    pub fine_angles: usize,
    pub boundary_nodes: usize,
    pub angle_nodes: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            t_max: 5.0,
            order: 2,
            cells: 40,
            angles: 40,
            steps: 100,
            fine_angles: 32,
            boundary_nodes: 64,
            angle_nodes: 24,
        }
    }
}

/// Per-order outgoing masses and node-wise time integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    /// `∫∫ u_j dt dξ` for `j = 0..=order`; order 0 is evaluated exactly.
    pub order_masses: Vec<f64>,
    pub grid: BoundaryGrid,
    /// `node_integrals[j][n] = ∫ u_j(t, x_n, v_n) dt` for `j ≥ 1`.
    pub node_integrals: Vec<Vec<f64>>,
}

struct Lattice {
    cells: usize,
    half: f64,
    spacing: f64,
    angles: usize,
    steps: usize,
    dt: f64,
}

impl Lattice {
    fn point(&self, i: usize) -> Vector {
        let (ix, iy) = (i % self.cells, i / self.cells);
        Vector::new(
            -self.half + (ix as f64 + 0.5) * self.spacing,
            -self.half + (iy as f64 + 0.5) * self.spacing,
            0.0,
        )
    }

    fn index(&self, m: usize, j: usize) -> usize {
        (m * self.angles + j) * self.cells * self.cells
    }

    /// Bilinear interpolation of slice `(m, j)`; zero beyond the lattice.
    fn sample(&self, data: &[f64], m: usize, j: usize, x: &Vector) -> f64 {
        let base = self.index(m, j);
        let n = self.cells as isize;
        let fx = (x.x + self.half) / self.spacing - 0.5;
        let fy = (x.y + self.half) / self.spacing - 0.5;
        let (x0, y0) = (fx.floor(), fy.floor());
        let (ax, ay) = (fx - x0, fy - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let mut acc = 0.0;
        for (dy, wy) in [(0, 1.0 - ay), (1, ay)] {
            for (dx, wx) in [(0, 1.0 - ax), (1, ax)] {
                let (cx, cy) = (x0 + dx, y0 + dy);
                if cx >= 0 && cy >= 0 && cx < n && cy < n {
                    acc += wx * wy * data[base + (cy * n + cx) as usize];
                }
            }
        }
        acc
    }
}

/// Pulls a lattice point outside the domain back onto its boundary so the
/// stored fields extend continuously.
fn clamp_inside(pair: &CoefficientPair, x: &Vector) -> Vector {
    let level = pair.domain.level(x);
    if level <= 0.0 {
        *x
    } else {
        x / (level + 1.0).sqrt() * (1.0 - 1e-12)
    }
}

pub fn solve_picard(
    pair: &CoefficientPair,
    source: &BoundarySource,
    config: PicardConfig,
) -> Result<PicardOutcome> {
    pair.validate()?;
    if pair.dimension() != 2 {
        return Err(Error::Unsupported(
            "the lattice backend runs on planar domains".into(),
        ));
    }
    if config.cells < 8 || config.angles < 8 || config.steps < 4 {
        return Err(Error::OutOfRange(
            "lattice needs at least 8 cells, 8 angles and 4 steps".into(),
        ));
    }
    let half = 0.5 * pair.domain.diameter();
    let lattice = Lattice {
        cells: config.cells,
        half,
        spacing: 2.0 * half / config.cells as f64,
        angles: config.angles,
        steps: config.steps,
        dt: config.t_max / config.steps as f64,
    };
    let grid = BoundaryGrid::new(
        pair.domain,
        Sign::Plus,
        config.boundary_nodes,
        config.angle_nodes,
    )?;
    let lifted = LiftedSource { pair, source };
    let directions: Vec<Vector> = periodic_nodes(config.angles, 0.0)
        .map(|(a, _)| direction(a))
        .collect();
    let dw = 2.0 * PI / config.angles as f64;

    let mut order_masses = vec![ballistic_mass(pair, source, config.t_max)];
    let mut node_integrals = Vec::new();
    let mut scattered = first_scatter(
        pair,
        &lifted,
        &lattice,
        &directions,
        config.fine_angles,
        source,
    );
    for j in 1..=config.order {
        let trace = outgoing_trace(pair, &lattice, &scattered, &grid);
        order_masses.push(
            grid.nodes()
                .iter()
                .zip(&trace)
                .map(|(n, t)| n.weight * t)
                .sum(),
        );
        node_integrals.push(trace);
        if j < config.order {
            let streamed = stream(pair, &lattice, &scattered, &directions);
            scattered = rescatter(pair, &lattice, &streamed, &directions, dw);
        }
    }
    Ok(PicardOutcome {
        order_masses,
        grid,
        node_integrals,
    })
}

/// Unscattered outgoing mass, from the source side.
fn ballistic_mass(pair: &CoefficientPair, source: &BoundarySource, t_max: f64) -> f64 {
    match source {
        BoundarySource::Mollified(m) => m
            .phase
            .nodes_with(24)
            .iter()
            .map(|q| {
                let reach = pair.domain.travel(&q.x, &q.v, Sign::Plus);
                q.density
                    * q.measure
                    * (-pair.optical_depth(&q.x, &q.v, 0.0, reach)).exp()
                    * m.temporal.cdf(t_max - reach)
            })
            .sum(),
        BoundarySource::Tabulated(s) => {
            let h = s.time.width();
            s.grid
                .nodes()
                .iter()
                .enumerate()
                .map(|(k, node)| {
                    let reach = pair.domain.travel(&node.x, &node.v, Sign::Plus);
                    let w = (-pair.optical_depth(&node.x, &node.v, 0.0, reach)).exp();
                    (0..s.time.bins)
                        .map(|b| {
                            let (t0, t1) = s.time.edges(b);
                            let arrived = ((t_max - reach).min(t1) - t0).clamp(0.0, h);
                            s.values[k * s.time.bins + b] * arrived
                        })
                        .sum::<f64>()
                        * w
                        * node.weight
                })
                .sum()
        }
    }
}

/// `A₂ G₋φ` on the lattice, using a fine direction rule over the source's directions.
fn first_scatter(
    pair: &CoefficientPair,
    lifted: &LiftedSource<'_>,
    lattice: &Lattice,
    directions: &[Vector],
    fine: usize,
    source: &BoundarySource,
) -> Vec<f64> {
    let window: Vec<(Vector, f64)> = match source {
        BoundarySource::Mollified(m) => GaussLegendre::new(fine.max(4))
            .on(
                m.phase.omega0 - m.phase.half_omega,
                m.phase.omega0 + m.phase.half_omega,
            )
            .map(|(a, w)| (direction(a), w))
            .collect(),
        BoundarySource::Tabulated(_) => periodic_nodes(fine.max(4) * 4, 0.25)
            .map(|(a, w)| (direction(a), w))
            .collect(),
    };
    let cells = lattice.cells * lattice.cells;
    let mut out = vec![0.0; (lattice.steps + 1) * lattice.angles * cells];
    out.par_chunks_mut(cells)
        .enumerate()
        .for_each(|(slice, chunk)| {
            let (m, j) = (slice / lattice.angles, slice % lattice.angles);
            let t = m as f64 * lattice.dt;
            let v = &directions[j];
            for (i, value) in chunk.iter_mut().enumerate() {
                let x = clamp_inside(pair, &lattice.point(i));
                *value = window
                    .iter()
                    .map(|(w, wt)| {
                        let u = lifted.value(t, &x, w);
                        if u == 0.0 {
                            0.0
                        } else {
                            wt * pair.kappa(&x, w, v) * u
                        }
                    })
                    .sum();
            }
        });
    out
}

/// `∫₀^t U₁(r) S(t − r) dr` at every lattice node.
fn stream(
    pair: &CoefficientPair,
    lattice: &Lattice,
    scattered: &[f64],
    directions: &[Vector],
) -> Vec<f64> {
    let cells = lattice.cells * lattice.cells;
    let mut out = vec![0.0; scattered.len()];
    out.par_chunks_mut(cells)
        .enumerate()
        .for_each(|(slice, chunk)| {
            let (m, j) = (slice / lattice.angles, slice % lattice.angles);
            let v = &directions[j];
            for (i, value) in chunk.iter_mut().enumerate() {
                let x = clamp_inside(pair, &lattice.point(i));
                *value = characteristic(pair, lattice, scattered, m, j, &x, v);
            }
        });
    out
}

fn characteristic(
    pair: &CoefficientPair,
    lattice: &Lattice,
    scattered: &[f64],
    m: usize,
    j: usize,
    x: &Vector,
    v: &Vector,
) -> f64 {
    let reach = pair.domain.travel(x, v, Sign::Minus);
    let mut acc = 0.0;
    let mut depth = 0.0;
    for l in 0..=m {
        let r = l as f64 * lattice.dt;
        if r > reach {
            break;
        }
        let y = x - r * v;
        if l > 0 {
            depth += pair.optical_depth(&y, v, 0.0, lattice.dt);
        }
        let w = if l == 0 || l == m { 0.5 } else { 1.0 };
        acc += w * (-depth).exp() * lattice.sample(scattered, m - l, j, &y);
    }
    acc * lattice.dt
}

/// `A₂` on the lattice directions.
fn rescatter(
    pair: &CoefficientPair,
    lattice: &Lattice,
    streamed: &[f64],
    directions: &[Vector],
    dw: f64,
) -> Vec<f64> {
    let cells = lattice.cells * lattice.cells;
    let mut out = vec![0.0; streamed.len()];
    out.par_chunks_mut(cells)
        .enumerate()
        .for_each(|(slice, chunk)| {
            let (m, j) = (slice / lattice.angles, slice % lattice.angles);
            let v = &directions[j];
            for (i, value) in chunk.iter_mut().enumerate() {
                let x = clamp_inside(pair, &lattice.point(i));
                let mut acc = 0.0;
                for (jj, w) in directions.iter().enumerate() {
                    let u = streamed[lattice.index(m, jj) + i];
                    if u != 0.0 {
                        acc += pair.kappa(&x, w, v) * u;
                    }
                }
                *value = acc * dw;
            }
        });
    out
}

/// Time-integrated outgoing flux of one order at the nodes of `grid`.
fn outgoing_trace(
    pair: &CoefficientPair,
    lattice: &Lattice,
    scattered: &[f64],
    grid: &BoundaryGrid,
) -> Vec<f64> {
    let step = 2.0 * PI / lattice.angles as f64;
    grid.nodes()
        .par_iter()
        .map(|node| {
            let a = angle_of(&node.v).rem_euclid(2.0 * PI) / step;
            let j0 = a.floor() as usize % lattice.angles;
            let j1 = (j0 + 1) % lattice.angles;
            let frac = a - a.floor();
            let mut total = 0.0;
            for m in 0..=lattice.steps {
                let lo = characteristic(pair, lattice, scattered, m, j0, &node.x, &node.v);
                let hi = characteristic(pair, lattice, scattered, m, j1, &node.x, &node.v);
                let w = if m == 0 || m == lattice.steps {
                    0.5
                } else {
                    1.0
                };
                total += w * ((1.0 - frac) * lo + frac * hi);
            }
            total * lattice.dt
        })
        .collect()
}
