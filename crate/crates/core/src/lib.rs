//! Jet-space KCC invariants of second-order ODE systems.
//!
//! Given a SODE `d²x^i/dt² + F^i(t, x, y) = 0` on the 1-jet space
//! `J¹(ℝ, M)` together with a temporal metric `h11(t)`, this crate computes
//! the five h-KCC invariants (ε, P, R, B, D) exactly via symbolic
//! differentiation, converts among semisprays and nonlinear connections,
//! integrates trajectories and variational (Jacobi) equations, and verifies
//! tensorial covariance under jet coordinate changes.
//!
//! Module map:
//! - [`expr`] — the embedded expression language (parse, diff, simplify, eval)
//! - [`geometry`] — metrics, Christoffel symbols, curvature, semisprays,
//!   coordinate changes and the d-tensor transformation law
//! - [`kcc`] — the five invariants and the flatness characterization check
//! - [`dynamics`] — fixed-step RK4 trajectories, deviation tracks and the
//!   covariant Jacobi residual

pub mod dynamics;
pub mod expr;
pub mod geometry;
pub mod kcc;

pub use expr::{parse, Env, EvalError, Expr, ParseError, VarId};
pub use geometry::{
    CoordinateChange, DTensor, IndexKind, JetPoint, LinearConnection, NonlinearConnection,
    SodeModel, SpatialMetric, TemporalMetric,
};
pub use kcc::InvariantSet;
