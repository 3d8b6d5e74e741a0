//! The five h-KCC invariants of a SODE on the 1-jet space, the h-KCC
//! covariant derivatives they come from, and the numeric verification of
//! the flatness characterization theorem.
//!
//! Everything here is built symbolically and then simplified; numeric
//! evaluation happens only at query points. The fourth invariant needs
//! fourth-order derivatives of the force components, where finite
//! differences would lose most of the mantissa; symbolic differentiation
//! keeps it exact.
//!
//! Total time derivatives substitute the flow of the SODE itself:
//! `d/dt = ∂/∂t + y^k ∂/∂x^k - F^k ∂/∂y^k`.

use crate::expr::{Expr, VarId};
use crate::geometry::{
    riemann_curvature, ExprMatrix, ExprRank3, ExprRank4, ExprVector, GeometryError, JetPoint,
    SodeModel,
};

/// The five h-KCC invariant tensors of a SODE.
///
/// `epsilon` is the first invariant (external force), `p` the deviation
/// curvature, `r3` the third (antisymmetric in its lower index pair), `b4`
/// the fourth, `d5` the fifth (totally symmetric in its lower indices).
#[derive(Clone, Debug)]
pub struct InvariantSet {
    pub epsilon: ExprVector,
    pub p: ExprMatrix,
    pub r3: ExprRank3,
    pub b4: ExprRank4,
    pub d5: ExprRank4,
}

/// Decomposition of a SODE into semispray data:
/// `G^i = F^i/2 + (1/2) H¹₁₁ y^i`, `N^i_j = ∂G^i/∂y^j`, `M^j = -H¹₁₁ y^j`.
#[derive(Clone, Debug)]
pub struct SemisprayDecomposition {
    pub g: ExprVector,
    pub n_conn: ExprMatrix,
    pub m_conn: ExprVector,
    pub h: Expr,
}

/// Rewrites the SODE in semispray form.
pub fn decompose(m: &SodeModel) -> SemisprayDecomposition {
    let n = m.n;
    let h = crate::geometry::christoffel_temporal(&m.h);
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        g.push(
            (Expr::constant(0.5) * m.force[i].clone()
                + Expr::constant(0.5) * h.clone() * Expr::velocity(i + 1))
            .simplify(),
        );
    }
    let n_conn = semispray_to_connection(&g);
    let m_conn = (0..n)
        .map(|j| (-(h.clone() * Expr::velocity(j + 1))).simplify())
        .collect();
    SemisprayDecomposition { g, n_conn, m_conn, h }
}

/// `N^(j)_k = ∂G^(j)/∂y^k`.
pub fn semispray_to_connection(g: &[Expr]) -> ExprMatrix {
    let n = g.len();
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| g[j].diff(VarId::Velocity(k + 1)).simplify())
                .collect()
        })
        .collect()
}

/// `G^(j) = (1/2) N^(j)_m y^m`. Round-trips with
/// [`semispray_to_connection`] exactly for y-quadratic-homogeneous `G`;
/// the correspondence is not bijective in general.
pub fn connection_to_semispray(n_conn: &ExprMatrix) -> ExprVector {
    let n = n_conn.len();
    (0..n)
        .map(|j| {
            let mut s = Expr::zero();
            for m in 0..n {
                s = s + n_conn[j][m].clone() * Expr::velocity(m + 1);
            }
            (Expr::constant(0.5) * s).simplify()
        })
        .collect()
}

/// Total derivative along the SODE flow:
/// `d/dt = ∂/∂t + y^k ∂/∂x^k - F^k ∂/∂y^k`.
fn flow_derivative(e: &Expr, m: &SodeModel) -> Expr {
    let mut out = e.diff(VarId::Time);
    for k in 0..m.n {
        out = out + e.diff(VarId::Spatial(k + 1)) * Expr::velocity(k + 1);
        out = out - e.diff(VarId::Velocity(k + 1)) * m.force[k].clone();
    }
    out.simplify()
}

/// h-KCC covariant derivative of a d-tensor of kind `T^(i)_(1)`:
/// `DT^i/dt = dT^i/dt + (1/2)(∂F^i/∂y^r) T^r - (1/2) H¹₁₁ T^i`.
pub fn kcc_covariant_derivative_t(t: &[Expr], m: &SodeModel) -> ExprVector {
    covariant_derivative(t, m, -1.0)
}

/// h-KCC covariant derivative of a d-tensor of kind `ξ^i`:
/// `Dξ^i/dt = dξ^i/dt + (1/2)(∂F^i/∂y^m) ξ^m + (1/2) H¹₁₁ ξ^i`
/// (note the opposite sign of the `H` term compared to the T-kind).
pub fn kcc_covariant_derivative_xi(xi: &[Expr], m: &SodeModel) -> ExprVector {
    covariant_derivative(xi, m, 1.0)
}

fn covariant_derivative(t: &[Expr], m: &SodeModel, h_sign: f64) -> ExprVector {
    let n = m.n;
    let h = crate::geometry::christoffel_temporal(&m.h);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = flow_derivative(&t[i], m);
        for r in 0..n {
            s = s + Expr::constant(0.5)
                * m.force[i].diff(VarId::Velocity(r + 1))
                * t[r].clone();
        }
        s = s + Expr::constant(0.5 * h_sign) * h.clone() * t[i].clone();
        out.push(s.simplify());
    }
    out
}

/// First invariant `ε^(i) = -F^i + (1/2)(∂F^i/∂y^r) y^r - (1/2) H¹₁₁ y^i`.
pub fn first_invariant(m: &SodeModel) -> ExprVector {
    let n = m.n;
    let h = crate::geometry::christoffel_temporal(&m.h);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = -m.force[i].clone();
        for r in 0..n {
            s = s + Expr::constant(0.5)
                * m.force[i].diff(VarId::Velocity(r + 1))
                * Expr::velocity(r + 1);
        }
        s = s - Expr::constant(0.5) * h.clone() * Expr::velocity(i + 1);
        out.push(s.simplify());
    }
    out
}

/// Deviation curvature (second invariant):
/// `P^i_j = -∂F^i/∂x^j + (1/2)∂²F^i/∂t∂y^j + (1/2)(∂²F^i/∂x^r∂y^j) y^r
///  - (1/2)(∂²F^i/∂y^r∂y^j) F^r + (1/4)(∂F^i/∂y^r)(∂F^r/∂y^j)
///  + (1/2)(dH¹₁₁/dt) δ^i_j - (1/4)(H¹₁₁)² δ^i_j`.
pub fn deviation_curvature(m: &SodeModel) -> ExprMatrix {
    let n = m.n;
    let h = crate::geometry::christoffel_temporal(&m.h);
    let h_dot = h.diff(VarId::Time).simplify();
    let mut out = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let fy_j = m.force[i].diff(VarId::Velocity(j + 1));
            let mut s = -m.force[i].diff(VarId::Spatial(j + 1));
            s = s + Expr::constant(0.5) * fy_j.diff(VarId::Time);
            for r in 0..n {
                s = s + Expr::constant(0.5)
                    * fy_j.diff(VarId::Spatial(r + 1))
                    * Expr::velocity(r + 1);
                s = s - Expr::constant(0.5)
                    * fy_j.diff(VarId::Velocity(r + 1))
                    * m.force[r].clone();
                s = s + Expr::constant(0.25)
                    * m.force[i].diff(VarId::Velocity(r + 1))
                    * m.force[r].diff(VarId::Velocity(j + 1));
            }
            if i == j {
                s = s + Expr::constant(0.5) * h_dot.clone()
                    - Expr::constant(0.25) * h.clone() * h.clone();
            }
            out[i][j] = s.simplify();
        }
    }
    out
}

/// Third invariant `R^i_{jk} = (1/3)[∂P^i_j/∂y^k - ∂P^i_k/∂y^j]`.
pub fn third_invariant(p: &ExprMatrix) -> ExprRank3 {
    let n = p.len();
    let third = Expr::one() / Expr::constant(3.0);
    let mut out = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i][j][k] = (third.clone()
                    * (p[i][j].diff(VarId::Velocity(k + 1))
                        - p[i][k].diff(VarId::Velocity(j + 1))))
                .simplify();
            }
        }
    }
    out
}

/// Fourth invariant `B^i_{jkm} = ∂R^i_{jk}/∂y^m`.
pub fn fourth_invariant(r3: &ExprRank3) -> ExprRank4 {
    let n = r3.len();
    let mut out = vec![vec![vec![vec![Expr::zero(); n]; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for mm in 0..n {
                    out[i][j][k][mm] =
                        r3[i][j][k].diff(VarId::Velocity(mm + 1)).simplify();
                }
            }
        }
    }
    out
}

/// Fifth invariant `D^{i1}_{jkm} = ∂³F^i/∂y^j∂y^k∂y^m`.
pub fn fifth_invariant(m: &SodeModel) -> ExprRank4 {
    let n = m.n;
    let mut out = vec![vec![vec![vec![Expr::zero(); n]; n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let fj = m.force[i].diff(VarId::Velocity(j + 1)).simplify();
            for k in 0..n {
                let fjk = fj.diff(VarId::Velocity(k + 1)).simplify();
                for mm in 0..n {
                    out[i][j][k][mm] = fjk.diff(VarId::Velocity(mm + 1)).simplify();
                }
            }
        }
    }
    out
}

/// All five invariants of the model.
pub fn all_invariants(m: &SodeModel) -> InvariantSet {
    let epsilon = first_invariant(m);
    let p = deviation_curvature(m);
    let r3 = third_invariant(&p);
    let b4 = fourth_invariant(&r3);
    let d5 = fifth_invariant(m);
    InvariantSet { epsilon, p, r3, b4, d5 }
}

/// Deviation curvature of a rheonomic model `dx/dt = X(t, x)` in closed
/// form, used as an independent oracle against [`deviation_curvature`]:
/// `P^i_j = (1/2)∂²X^i/∂t∂x^j + (1/2)(∂²X^i/∂x^j∂x^r) y^r
///  + (1/4)(∂X^i/∂x^r)(∂X^r/∂x^j) + (1/2)(dH/dt) δ - (1/4)H² δ`.
pub fn rheonomic_deviation_closed_form(field: &[Expr], h: &crate::geometry::TemporalMetric) -> ExprMatrix {
    let n = field.len();
    let big_h = crate::geometry::christoffel_temporal(h);
    let h_dot = big_h.diff(VarId::Time).simplify();
    let mut out = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let xj = field[i].diff(VarId::Spatial(j + 1));
            let mut s = Expr::constant(0.5) * xj.diff(VarId::Time);
            for r in 0..n {
                s = s + Expr::constant(0.5)
                    * xj.diff(VarId::Spatial(r + 1))
                    * Expr::velocity(r + 1);
                s = s + Expr::constant(0.25)
                    * field[i].diff(VarId::Spatial(r + 1))
                    * field[r].diff(VarId::Spatial(j + 1));
            }
            if i == j {
                s = s + Expr::constant(0.5) * h_dot.clone()
                    - Expr::constant(0.25) * big_h.clone() * big_h.clone();
            }
            out[i][j] = s.simplify();
        }
    }
    out
}

/// Report of [`flatness_check`]: whether all five invariants vanish
/// numerically on the sample grid, the reconstructed connection when the
/// model admits one, and the largest curvature component of that
/// connection over the samples.
#[derive(Clone, Debug)]
pub struct FlatnessReport {
    /// All five invariants below `tol` at every sample point.
    pub vanish: bool,
    /// Largest absolute invariant component seen over the samples.
    pub max_invariant: f64,
    /// Reconstructed `Γ^i_{jk} = (1/2) ∂²F^i/∂y^j∂y^k`, present when it is
    /// independent of `t` and `y` on the samples (below `tol`).
    pub gamma: Option<ExprRank3>,
    /// Max absolute curvature component of the reconstructed connection.
    pub curvature_max: f64,
    /// Max residual of `F - (Γ y y - H y)` over the samples.
    pub residual_max: f64,
    /// Sample points where evaluation failed, with the error text.
    pub failed_points: Vec<(JetPoint, String)>,
}

/// Desk-scale verification of the characterization theorem: the five
/// invariants vanish (numerically, below `tol`, over the samples) exactly
/// when `F^i = Γ^i_{pq}(x) y^p y^q - H¹₁₁(t) y^i` for a flat symmetric
/// linear connection `Γ`. Reconstructs `Γ` from the force and reports the
/// curvature it generates. A numeric check cannot certify identical
/// vanishing; this is verification at sample scale, not proof.
pub fn flatness_check(
    m: &SodeModel,
    tol: f64,
    sample_points: &[JetPoint],
) -> Result<FlatnessReport, GeometryError> {
    let n = m.n;
    let inv = all_invariants(m);
    let mut max_invariant: f64 = 0.0;
    let mut failed_points = Vec::new();

    let mut flat_components: Vec<&Expr> = Vec::new();
    flat_components.extend(inv.epsilon.iter());
    flat_components.extend(inv.p.iter().flatten());
    flat_components.extend(inv.r3.iter().flatten().flatten());
    flat_components.extend(inv.b4.iter().flatten().flatten().flatten());
    flat_components.extend(inv.d5.iter().flatten().flatten().flatten());

    for p in sample_points {
        let mut failed = false;
        for e in &flat_components {
            match e.eval(p) {
                Ok(v) => max_invariant = max_invariant.max(v.abs()),
                Err(err) => {
                    if !failed {
                        failed_points.push((p.clone(), err.to_string()));
                        failed = true;
                    }
                }
            }
        }
    }
    let vanish = max_invariant < tol && failed_points.is_empty();

    // Γ^i_{jk} = (1/2) ∂²F^i/∂y^j∂y^k, then demand t- and y-independence.
    let mut gamma = vec![vec![vec![Expr::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                gamma[i][j][k] = (Expr::constant(0.5)
                    * m.force[i]
                        .diff(VarId::Velocity(j + 1))
                        .diff(VarId::Velocity(k + 1)))
                .simplify();
            }
        }
    }
    let mut dependence: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut partials = vec![gamma[i][j][k].diff(VarId::Time).simplify()];
                for r in 0..n {
                    partials.push(gamma[i][j][k].diff(VarId::Velocity(r + 1)).simplify());
                }
                for p in sample_points {
                    for d in &partials {
                        if let Ok(v) = d.eval(p) {
                            dependence = dependence.max(v.abs());
                        }
                    }
                }
            }
        }
    }
    let gamma_valid = dependence < tol;

    // Residual of the canonical form: F - (Γ y y - H y).
    let h = crate::geometry::christoffel_temporal(&m.h);
    let mut residual_max: f64 = 0.0;
    for i in 0..n {
        let mut canon = -(h.clone() * Expr::velocity(i + 1));
        for p in 0..n {
            for q in 0..n {
                canon = canon + gamma[i][p][q].clone()
                    * Expr::velocity(p + 1)
                    * Expr::velocity(q + 1);
            }
        }
        let resid = (m.force[i].clone() - canon).simplify();
        for pt in sample_points {
            if let Ok(v) = resid.eval(pt) {
                residual_max = residual_max.max(v.abs());
            }
        }
    }

    // Curvature of the reconstructed connection over the samples.
    let curvature = riemann_curvature(&gamma);
    let mut curvature_max: f64 = 0.0;
    for pt in sample_points {
        for e in curvature.iter().flatten().flatten().flatten() {
            if let Ok(v) = e.eval(pt) {
                curvature_max = curvature_max.max(v.abs());
            }
        }
    }

    Ok(FlatnessReport {
        vanish,
        max_invariant,
        gamma: if gamma_valid { Some(gamma) } else { None },
        curvature_max,
        residual_max,
        failed_points,
    })
}
