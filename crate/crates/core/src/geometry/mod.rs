//! Geometric objects on the 1-jet space: temporal and spatial metrics with
//! their Christoffel symbols, curvature, canonical semisprays and nonlinear
//! connections, SODE constructors, coordinate changes and the d-tensor
//! transformation law.
//!
//! Index conventions follow the stored array order literally: the curvature
//! `R^i_{pqj}` lives at `[i][p][q][j]`, Christoffel symbols `γ^i_{jk}` at
//! `[i][j][k]`.

use thiserror::Error;

use crate::expr::{Env, EvalError, Expr, ParseError, VarId};

mod dtensor;
mod transform;

pub use dtensor::{make_liouville, make_normalization, DTensor, IndexKind};
pub use transform::CoordinateChange;

/// A point `(t, x, y)` of the 1-jet space in a chart. Identical in shape to
/// the expression evaluation environment.
pub type JetPoint = Env;

pub type ExprVector = Vec<Expr>;
pub type ExprMatrix = Vec<Vec<Expr>>;
pub type ExprRank3 = Vec<Vec<Vec<Expr>>>;
pub type ExprRank4 = Vec<Vec<Vec<Vec<Expr>>>>;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("symbolic metric inverse is limited to n <= 3 (got n = {0}); use the per-point numeric path")]
    SymbolicInverseTooLarge(usize),
    #[error("singular matrix at evaluation point")]
    Singular,
    #[error("singular jacobian")]
    SingularJacobian,
    #[error("vector field must depend only on (t, x), found velocity variable")]
    VelocityDependent,
    #[error("expression must depend only on {allowed}, found `{found}`")]
    ForbiddenVariable { allowed: &'static str, found: VarId },
    #[error("coordinate change round-trip residual {residual:e} exceeds tolerance {tol:e}")]
    RoundTripFailed { residual: f64, tol: f64 },
    #[error("newton inverse requires a componentwise forward map (x{0} depends on other coordinates)")]
    NotComponentwise(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Riemannian metric `h11(t)` on the time axis. Positivity is checked at
/// use sites, not at construction.
#[derive(Clone, Debug)]
pub struct TemporalMetric {
    pub h11: Expr,
}

impl TemporalMetric {
    pub fn new(h11: Expr) -> Result<TemporalMetric, GeometryError> {
        for v in h11.variables() {
            if v != VarId::Time {
                return Err(GeometryError::ForbiddenVariable { allowed: "t", found: v });
            }
        }
        Ok(TemporalMetric { h11 })
    }

    /// Flat metric `h11 = 1`.
    pub fn flat() -> TemporalMetric {
        TemporalMetric { h11: Expr::one() }
    }
}

/// Riemannian metric `φ_ij(x)` on the spatial manifold.
#[derive(Clone, Debug)]
pub struct SpatialMetric {
    pub n: usize,
    pub phi: ExprMatrix,
}

impl SpatialMetric {
    pub fn new(phi: ExprMatrix) -> Result<SpatialMetric, GeometryError> {
        let n = phi.len();
        if n == 0 || phi.iter().any(|row| row.len() != n) {
            return Err(GeometryError::Dimension("spatial metric must be a square matrix".into()));
        }
        for row in &phi {
            for entry in row {
                for v in entry.variables() {
                    if !matches!(v, VarId::Spatial(_)) {
                        return Err(GeometryError::ForbiddenVariable { allowed: "x1..xn", found: v });
                    }
                }
            }
        }
        Ok(SpatialMetric { n, phi })
    }

    /// Euclidean metric `δ_ij`.
    pub fn euclidean(n: usize) -> SpatialMetric {
        let phi = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Expr::one() } else { Expr::zero() })
                    .collect()
            })
            .collect();
        SpatialMetric { n, phi }
    }

    /// Diagonal metric from the given entries.
    pub fn diagonal(entries: Vec<Expr>) -> SpatialMetric {
        let n = entries.len();
        let phi = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { entries[i].clone() } else { Expr::zero() })
                    .collect()
            })
            .collect();
        SpatialMetric { n, phi }
    }
}

/// Linear connection coefficients `Γ^i_{jk}(x)`, symmetric in the lower
/// indices.
#[derive(Clone, Debug)]
pub struct LinearConnection {
    pub n: usize,
    pub gamma: ExprRank3,
}

impl LinearConnection {
    pub fn new(gamma: ExprRank3) -> Result<LinearConnection, GeometryError> {
        let n = gamma.len();
        let shape_ok = gamma
            .iter()
            .all(|m| m.len() == n && m.iter().all(|row| row.len() == n));
        if n == 0 || !shape_ok {
            return Err(GeometryError::Dimension("connection must have shape n x n x n".into()));
        }
        Ok(LinearConnection { n, gamma })
    }
}

/// Temporal semispray components `H^(j)_(1)1`.
#[derive(Clone, Debug)]
pub struct TemporalSemispray {
    pub components: ExprVector,
}

/// Spatial semispray components `G^(j)_(1)1`.
#[derive(Clone, Debug)]
pub struct SpatialSemispray {
    pub components: ExprVector,
}

/// Nonlinear connection `(M^(j)_(1)1, N^(j)_(1)i)`.
#[derive(Clone, Debug)]
pub struct NonlinearConnection {
    pub temporal: ExprVector,
    pub spatial: ExprMatrix,
}

/// How a SODE model was constructed; carried for closed-form oracles.
#[derive(Clone, Debug)]
pub enum Provenance {
    Explicit,
    Harmonic { phi: SpatialMetric },
    VectorField { field: ExprVector },
    Connection { gamma: LinearConnection },
}

/// A second-order system `d²x^i/dt² + F^i(t, x, y) = 0` together with the
/// temporal metric `h11(t)`.
#[derive(Clone, Debug)]
pub struct SodeModel {
    pub n: usize,
    pub h: TemporalMetric,
    pub force: ExprVector,
    pub provenance: Provenance,
}

impl SodeModel {
    /// Model from explicitly given force components.
    pub fn explicit(h: TemporalMetric, force: ExprVector) -> Result<SodeModel, GeometryError> {
        let n = force.len();
        if n == 0 {
            return Err(GeometryError::Dimension("force vector must be nonempty".into()));
        }
        Ok(SodeModel { n, h, force, provenance: Provenance::Explicit })
    }

    /// Harmonic curves of the metric pair `(h, φ)`:
    /// `F^i = -H¹₁₁ y^i + γ^i_{jk} y^j y^k`.
    pub fn harmonic(h: TemporalMetric, phi: SpatialMetric) -> Result<SodeModel, GeometryError> {
        let n = phi.n;
        let big_h = christoffel_temporal(&h);
        let gamma = christoffel_spatial(&phi)?;
        let mut force = Vec::with_capacity(n);
        for i in 0..n {
            let mut f = -(big_h.clone() * Expr::velocity(i + 1));
            for j in 0..n {
                for k in 0..n {
                    f = f + gamma[i][j][k].clone() * Expr::velocity(j + 1) * Expr::velocity(k + 1);
                }
            }
            force.push(f.simplify());
        }
        Ok(SodeModel { n, h, force, provenance: Provenance::Harmonic { phi } })
    }

    /// Prolongation of the rheonomic flow `dx^i/dt = X^i(t, x)`:
    /// `F^i = -∂X^i/∂t - (∂X^i/∂x^m) y^m`.
    pub fn from_vectorfield(field: ExprVector, h: TemporalMetric) -> Result<SodeModel, GeometryError> {
        let n = field.len();
        if n == 0 {
            return Err(GeometryError::Dimension("vector field must be nonempty".into()));
        }
        for c in &field {
            if c.depends_on_velocity() {
                return Err(GeometryError::VelocityDependent);
            }
        }
        let mut force = Vec::with_capacity(n);
        for x_i in &field {
            let mut f = -x_i.diff(VarId::Time);
            for m in 0..n {
                f = f - x_i.diff(VarId::Spatial(m + 1)) * Expr::velocity(m + 1);
            }
            force.push(f.simplify());
        }
        Ok(SodeModel { n, h, force, provenance: Provenance::VectorField { field } })
    }

    /// Model of the characterization theorem's canonical form:
    /// `F^i = Γ^i_{pq}(x) y^p y^q - H¹₁₁(t) y^i`.
    pub fn from_connection(gamma: LinearConnection, h: TemporalMetric) -> Result<SodeModel, GeometryError> {
        let n = gamma.n;
        let big_h = christoffel_temporal(&h);
        let mut force = Vec::with_capacity(n);
        for i in 0..n {
            let mut f = -(big_h.clone() * Expr::velocity(i + 1));
            for p in 0..n {
                for q in 0..n {
                    f = f + gamma.gamma[i][p][q].clone()
                        * Expr::velocity(p + 1)
                        * Expr::velocity(q + 1);
                }
            }
            force.push(f.simplify());
        }
        Ok(SodeModel { n, h, force, provenance: Provenance::Connection { gamma } })
    }
}

/// Temporal Christoffel symbol `H¹₁₁ = (h¹¹/2) dh₁₁/dt`.
pub fn christoffel_temporal(h: &TemporalMetric) -> Expr {
    (h.h11.clone().diff(VarId::Time) / (Expr::constant(2.0) * h.h11.clone())).simplify()
}

/// Symbolic inverse of a square expression matrix via adjugate over
/// determinant; n <= 3 only (symbolic inverses grow exponentially).
pub fn symbolic_inverse(m: &ExprMatrix) -> Result<ExprMatrix, GeometryError> {
    let n = m.len();
    let det = match n {
        1 => m[0][0].clone(),
        2 => det2(&m[0][0], &m[0][1], &m[1][0], &m[1][1]),
        3 => {
            let mut d = Expr::zero();
            for j in 0..3 {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                d = d + Expr::constant(sign) * m[0][j].clone() * minor(m, 0, j);
            }
            d
        }
        _ => return Err(GeometryError::SymbolicInverseTooLarge(n)),
    };
    let det = det.simplify();
    let mut inv = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            // inverse[i][j] = cofactor(j, i) / det
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            let cof = match n {
                1 => Expr::one(),
                _ => minor(m, j, i),
            };
            inv[i][j] = (Expr::constant(sign) * cof / det.clone()).simplify();
        }
    }
    Ok(inv)
}

fn det2(a: &Expr, b: &Expr, c: &Expr, d: &Expr) -> Expr {
    a.clone() * d.clone() - b.clone() * c.clone()
}

/// Determinant of the submatrix with row `r` and column `c` removed (n = 2 or 3).
fn minor(m: &ExprMatrix, r: usize, c: usize) -> Expr {
    let n = m.len();
    let rows: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| j != c).collect();
    match rows.len() {
        1 => m[rows[0]][cols[0]].clone(),
        2 => det2(
            &m[rows[0]][cols[0]],
            &m[rows[0]][cols[1]],
            &m[rows[1]][cols[0]],
            &m[rows[1]][cols[1]],
        ),
        _ => unreachable!("minor is only used for n <= 3"),
    }
}

/// Spatial Christoffel symbols
/// `γ^i_{jk} = (φ^{im}/2)(∂φ_{jm}/∂x^k + ∂φ_{km}/∂x^j - ∂φ_{jk}/∂x^m)`,
/// fully symbolic (n <= 3).
pub fn christoffel_spatial(phi: &SpatialMetric) -> Result<ExprRank3, GeometryError> {
    let n = phi.n;
    let inv = symbolic_inverse(&phi.phi)?;
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = Expr::zero();
                for m in 0..n {
                    let term = phi.phi[j][m].clone().diff(VarId::Spatial(k + 1))
                        + phi.phi[k][m].clone().diff(VarId::Spatial(j + 1))
                        - phi.phi[j][k].clone().diff(VarId::Spatial(m + 1));
                    s = s + inv[i][m].clone() * term;
                }
                gamma[i][j][k] = (Expr::constant(0.5) * s).simplify();
            }
        }
    }
    Ok(gamma)
}

/// Numeric Christoffel symbols at a single spatial point, valid for any n.
/// The metric inverse is computed numerically per point.
pub fn christoffel_spatial_at(phi: &SpatialMetric, x: &[f64]) -> Result<Vec<Vec<Vec<f64>>>, GeometryError> {
    let n = phi.n;
    if x.len() != n {
        return Err(GeometryError::Dimension(format!(
            "point has dimension {}, metric has dimension {n}",
            x.len()
        )));
    }
    let env = Env::new(0.0, x.to_vec(), vec![0.0; n]);
    let mut mat = nalgebra::DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            mat[(i, j)] = phi.phi[i][j].eval(&env)?;
        }
    }
    let inv = mat.try_inverse().ok_or(GeometryError::Singular)?;
    let mut dphi = vec![vec![vec![0.0; n]; n]; n];
    for j in 0..n {
        for m in 0..n {
            for k in 0..n {
                dphi[j][m][k] = phi.phi[j][m].diff(VarId::Spatial(k + 1)).eval(&env)?;
            }
        }
    }
    let mut gamma = vec![vec![vec![0.0; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for m in 0..n {
                    s += inv[(i, m)] * (dphi[j][m][k] + dphi[k][m][j] - dphi[j][k][m]);
                }
                gamma[i][j][k] = 0.5 * s;
            }
        }
    }
    Ok(gamma)
}

/// Curvature of a symmetric linear connection, with the index order and
/// sign convention `R^i_{pqj} = ∂γ^i_{pq}/∂x^j - ∂γ^i_{pj}/∂x^q
/// + γ^r_{pq} γ^i_{rj} - γ^r_{pj} γ^i_{rq}`, stored as `[i][p][q][j]`.
pub fn riemann_curvature(gamma: &ExprRank3) -> ExprRank4 {
    let n = gamma.len();
    let mut r = vec![vec![vec![vec![Expr::zero(); n]; n]; n]; n];
    for i in 0..n {
        for p in 0..n {
            for q in 0..n {
                for j in 0..n {
                    let mut s = gamma[i][p][q].clone().diff(VarId::Spatial(j + 1))
                        - gamma[i][p][j].clone().diff(VarId::Spatial(q + 1));
                    for t in 0..n {
                        s = s + gamma[t][p][q].clone() * gamma[i][t][j].clone()
                            - gamma[t][p][j].clone() * gamma[i][t][q].clone();
                    }
                    r[i][p][q][j] = s.simplify();
                }
            }
        }
    }
    r
}

/// Canonical temporal semispray `H̊^(j) = -(1/2) H¹₁₁ y^j`.
pub fn canonical_temporal_semispray(h: &TemporalMetric, n: usize) -> TemporalSemispray {
    let big_h = christoffel_temporal(h);
    let components = (0..n)
        .map(|j| (Expr::constant(-0.5) * big_h.clone() * Expr::velocity(j + 1)).simplify())
        .collect();
    TemporalSemispray { components }
}

/// Canonical spatial semispray `G̊^(j) = (1/2) γ^j_{kl} y^k y^l`.
pub fn canonical_spatial_semispray(phi: &SpatialMetric) -> Result<SpatialSemispray, GeometryError> {
    let n = phi.n;
    let gamma = christoffel_spatial(phi)?;
    let mut components = Vec::with_capacity(n);
    for j in 0..n {
        let mut s = Expr::zero();
        for k in 0..n {
            for l in 0..n {
                s = s + gamma[j][k][l].clone() * Expr::velocity(k + 1) * Expr::velocity(l + 1);
            }
        }
        components.push((Expr::constant(0.5) * s).simplify());
    }
    Ok(SpatialSemispray { components })
}

/// Canonical nonlinear connection of the metric pair:
/// `M̊^(j) = -H¹₁₁ y^j`, `N̊^(j)_i = γ^j_{im} y^m`.
pub fn canonical_nonlinear_connection(
    h: &TemporalMetric,
    phi: &SpatialMetric,
) -> Result<NonlinearConnection, GeometryError> {
    let n = phi.n;
    let big_h = christoffel_temporal(h);
    let gamma = christoffel_spatial(phi)?;
    let temporal = (0..n)
        .map(|j| (-(big_h.clone() * Expr::velocity(j + 1))).simplify())
        .collect();
    let mut spatial = vec![vec![Expr::zero(); n]; n];
    for j in 0..n {
        for i in 0..n {
            let mut s = Expr::zero();
            for m in 0..n {
                s = s + gamma[j][i][m].clone() * Expr::velocity(m + 1);
            }
            spatial[j][i] = s.simplify();
        }
    }
    Ok(NonlinearConnection { temporal, spatial })
}
