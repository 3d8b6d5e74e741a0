//! Shared fixtures for the criterion benchmarks.

use kccjet_core::{parse, Expr, SodeModel, SpatialMetric, TemporalMetric};

/// Harmonic model on the unit sphere (constant curvature 1).
pub fn sphere_model() -> SodeModel {
    let phi = SpatialMetric::diagonal(vec![Expr::one(), parse("sin(x1)^2", 2).unwrap()]);
    SodeModel::harmonic(TemporalMetric::flat(), phi).unwrap()
}

/// Explicit two-dimensional model with velocity-coupled forces.
pub fn cubic_model() -> SodeModel {
    SodeModel::explicit(
        TemporalMetric::flat(),
        vec![
            parse("y1^3 + x1*y2^2", 2).unwrap(),
            parse("sin(x2)*y1*y2 + t*y2", 2).unwrap(),
        ],
    )
    .unwrap()
}
