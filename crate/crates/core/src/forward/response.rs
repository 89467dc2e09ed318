//! Time-resolved outgoing flux on `(0, T) × Γ₊`, split by collision order.

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundaryNode, Domain, TimeGrid};

/// Number of explicitly computed collision orders (ballistic, single, double).
pub const ORDERS: usize = 3;

pub const SCHEMA_VERSION: u32 = 1;

/// Bin averages of one node's flux over a contiguous run of time bins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub start: usize,
    pub values: Vec<f64>,
}

impl Series {
    /// Keeps the run between the first and last nonzero entries.
    pub fn from_dense(dense: &[f64]) -> Self {
        let Some(first) = dense.iter().position(|v| *v != 0.0) else {
            return Self::default();
        };
        let last = dense.iter().rposition(|v| *v != 0.0).unwrap_or(first);
        Self {
            start: first,
            values: dense[first..=last].to_vec(),
        }
    }

    pub fn get(&self, bin: usize) -> f64 {
        bin.checked_sub(self.start)
            .and_then(|i| self.values.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.start + i, *v))
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `∫ u dt` over all bins.
    pub fn integral(&self, dt: f64) -> f64 {
        self.values.iter().sum::<f64>() * dt
    }

    /// `∫ u dt` over bins `range`.
    pub fn integral_over(&self, range: std::ops::Range<usize>, dt: f64) -> f64 {
        range.map(|i| self.get(i)).sum::<f64>() * dt
    }

    pub fn to_dense(&self, bins: usize) -> Vec<f64> {
        let mut out = vec![0.0; bins];
        for (i, v) in self.iter() {
            if i < bins {
                out[i] = v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    /// Ballistic image of the source support; holds every order.
    Window,
    /// Uniform outgoing grid; nodes inside the window are excluded.
    Global,
}

/// Responses at the nodes of one outgoing quadrature.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseGrid {
    pub kind: GridKind,
    pub n_boundary: usize,
    pub n_angle: usize,
    pub nodes: Vec<BoundaryNode>,
    pub excluded: Vec<bool>,
    pub parts: Vec<[Series; ORDERS]>,
}

impl ResponseGrid {
    /// `∫∫ u dt dξ` of collision order `order` over included nodes.
    pub fn order_mass(&self, order: usize, dt: f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.parts)
            .zip(&self.excluded)
            .filter(|(_, ex)| !**ex)
            .map(|((n, p), _)| n.weight * p[order].integral(dt))
            .sum()
    }

    pub fn node_mass(&self, index: usize, dt: f64) -> f64 {
        self.parts[index].iter().map(|s| s.integral(dt)).sum()
    }
}

/// Everything needed to regenerate the grids of a stored response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMeta {
    pub schema_version: u32,
    pub backend: String,
    pub domain: Domain,
    pub order: usize,
    pub t_max: f64,
    pub time_bins: usize,
    pub eta: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Source centre as `[x, y, direction angle]`.
    pub source_center: [f64; 3],
    pub window_nodes: usize,
    pub global_grid: Option<[usize; 2]>,
    /// Bound on the outgoing mass of all orders beyond `order`.
    pub tail_bound: f64,
    pub incoming_mass: f64,
    pub phantom_hash: String,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Hash of the experiment configuration that produced the response.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

/// Sampled outgoing flux for one incoming source.
#[derive(Debug, Clone, PartialEq)]
pub struct AlbedoResponse {
    pub time: TimeGrid,
    pub window: ResponseGrid,
    pub global: Option<ResponseGrid>,
    pub meta: ResponseMeta,
}

impl AlbedoResponse {
    /// Outgoing mass of one collision order.
    pub fn order_mass(&self, order: usize) -> f64 {
        let dt = self.time.width();
        self.window.order_mass(order, dt)
            + self
                .global
                .as_ref()
                .map_or(0.0, |g| g.order_mass(order, dt))
    }

    pub fn outgoing_mass(&self) -> f64 {
        (0..ORDERS).map(|j| self.order_mass(j)).sum()
    }

    /// `∫_gate Σ_orders u dt dξ` over the window grid.
    pub fn window_gate_mass(
        &self,
        bins: std::ops::Range<usize>,
        orders: std::ops::Range<usize>,
    ) -> f64 {
        let dt = self.time.width();
        self.window
            .nodes
            .iter()
            .zip(&self.window.parts)
            .map(|(n, p)| {
                n.weight
                    * orders
                        .clone()
                        .map(|j| p[j].integral_over(bins.clone(), dt))
                        .sum::<f64>()
            })
            .sum()
    }
}
