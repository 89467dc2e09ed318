//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use albedo_lab::coefficients::CoefficientPair;
use albedo_lab::forward::MollifiedSource;
use albedo_lab::geometry::{BoundaryNode, Sign, Vector};
use albedo_lab::kernels::single_scatter_density;

/// Where the backward ray of an outgoing node crosses a source ray: depth
/// `s` along the source ray and distance `r` back from the exit point.
pub fn crossing(
    source_x: &Vector,
    source_v: &Vector,
    x: &Vector,
    v: &Vector,
) -> Option<(f64, f64, f64)> {
    let det = source_v.x * v.y - source_v.y * v.x;
    if det.abs() < 1e-12 {
        return None;
    }
    let w = x - source_x;
    let s = (w.x * v.y - w.y * v.x) / det;
    let r = (source_v.x * w.y - source_v.y * w.x) / det;
    Some((s, r, det.abs()))
}

/// `∫ u₁ dt` at an outgoing node, integrated over the source's `(θ, ω)`
/// instead of the node's backward ray.
pub fn single_scatter_from_source(
    pair: &CoefficientPair,
    source: &MollifiedSource,
    node: &BoundaryNode,
    per_axis: usize,
) -> f64 {
    let mut total = 0.0;
    for q in source.phase.nodes_with(per_axis) {
        let Some((s, r, sin)) = crossing(&q.x, &q.v, &node.x, &node.v) else {
            continue;
        };
        let reach = pair.domain.travel(&q.x, &q.v, Sign::Plus);
        if !(s > 0.0 && s < reach && r > 0.0) {
            continue;
        }
        let entry = albedo_lab::geometry::PhasePoint { x: q.x, v: q.v };
        let sample = single_scatter_density(pair, &entry, s, &node.v).expect("interior crossing");
        total += q.density * q.measure * sample.density / sin;
    }
    total
}

/// Distance of the node's backward ray crossing from the ends of both rays,
/// measured through the centre of the source beam.
pub fn crossing_margin(
    pair: &CoefficientPair,
    source: &MollifiedSource,
    node: &BoundaryNode,
) -> f64 {
    let c = source.center();
    let Some((s, r, sin)) = crossing(&c.x, &c.v, &node.x, &node.v) else {
        return 0.0;
    };
    let reach = pair.domain.travel(&c.x, &c.v, Sign::Plus);
    let back = pair.domain.travel(&node.x, &node.v, Sign::Minus);
    s.min(reach - s).min(r.min(back - r)) * sin
}
