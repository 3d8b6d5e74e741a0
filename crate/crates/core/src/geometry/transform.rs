//! Jet coordinate changes `t̃ = t̃(t)`, `x̃^i = x̃^i(x)` with user-supplied
//! inverses, and the induced transformations of points, metrics and SODE
//! force components.
//!
//! Both charts share the same variable ids: an expression "in the tilde
//! chart" reads `t`, `x_i`, `y_i` as the tilde coordinates. The inverse
//! maps are expressions over the tilde variables; no symbolic inversion is
//! attempted. For forward maps without a closed-form inverse,
//! [`CoordinateChange::componentwise_newton_inverse`] builds the inverse as
//! a fixed number of symbolically unrolled Newton steps.

use crate::expr::{Env, Expr, VarId};

use super::{GeometryError, JetPoint, Provenance, SodeModel, SpatialMetric, TemporalMetric};

#[derive(Clone, Debug)]
pub struct CoordinateChange {
    pub n: usize,
    /// `t̃(t)`, an expression in `t`.
    pub t_fwd: Expr,
    /// `t(t̃)`, an expression in the tilde time (same variable id).
    pub t_inv: Expr,
    /// `x̃^i(x)`.
    pub x_fwd: Vec<Expr>,
    /// `x^i(x̃)`.
    pub x_inv: Vec<Expr>,
}

fn check_time_only(e: &Expr) -> Result<(), GeometryError> {
    for v in e.variables() {
        if v != VarId::Time {
            return Err(GeometryError::ForbiddenVariable { allowed: "t", found: v });
        }
    }
    Ok(())
}

fn check_spatial_only(e: &Expr) -> Result<(), GeometryError> {
    for v in e.variables() {
        if !matches!(v, VarId::Spatial(_)) {
            return Err(GeometryError::ForbiddenVariable { allowed: "x1..xn", found: v });
        }
    }
    Ok(())
}

impl CoordinateChange {
    /// Spatial changes are time-independent and time changes
    /// space-independent, matching the product structure of the jet chart
    /// transition rules; this is enforced structurally here.
    pub fn new(
        t_fwd: Expr,
        t_inv: Expr,
        x_fwd: Vec<Expr>,
        x_inv: Vec<Expr>,
    ) -> Result<CoordinateChange, GeometryError> {
        let n = x_fwd.len();
        if n == 0 || x_inv.len() != n {
            return Err(GeometryError::Dimension(
                "forward and inverse spatial maps must be nonempty and of equal length".into(),
            ));
        }
        check_time_only(&t_fwd)?;
        check_time_only(&t_inv)?;
        for e in x_fwd.iter().chain(&x_inv) {
            check_spatial_only(e)?;
        }
        Ok(CoordinateChange { n, t_fwd, t_inv, x_fwd, x_inv })
    }

    pub fn identity(n: usize) -> CoordinateChange {
        CoordinateChange {
            n,
            t_fwd: Expr::time(),
            t_inv: Expr::time(),
            x_fwd: (1..=n).map(Expr::spatial).collect(),
            x_inv: (1..=n).map(Expr::spatial).collect(),
        }
    }

    /// Builds the spatial inverse as `iters` symbolically unrolled Newton
    /// steps on each component. Requires a componentwise forward map
    /// (each `x̃^i` depends only on `x_i`). With a contraction-factor
    /// forward map, a handful of steps already reaches round-off level.
    pub fn componentwise_newton_inverse(
        t_fwd: Expr,
        t_inv: Expr,
        x_fwd: Vec<Expr>,
        iters: usize,
    ) -> Result<CoordinateChange, GeometryError> {
        let n = x_fwd.len();
        let mut x_inv = Vec::with_capacity(n);
        for (i, fwd) in x_fwd.iter().enumerate() {
            let var = VarId::Spatial(i + 1);
            for v in fwd.variables() {
                if v != var {
                    return Err(GeometryError::NotComponentwise(i + 1));
                }
            }
            let deriv = fwd.diff(var).simplify();
            // g0 = x̃_i; g_{k+1} = g_k - (fwd(g_k) - x̃_i) / fwd'(g_k)
            let target = Expr::var(var);
            let mut g = target.clone();
            for _ in 0..iters {
                let at_g = |e: &Expr| {
                    e.substitute(&|v| if v == var { Some(g.clone()) } else { None })
                };
                g = (g.clone() - (at_g(fwd) - target.clone()) / at_g(&deriv)).simplify();
            }
            x_inv.push(g);
        }
        CoordinateChange::new(t_fwd, t_inv, x_fwd, x_inv)
    }

    /// Checks the declared inverses round-trip at the sample points
    /// (tolerance `tol`) and that both Jacobians are nonsingular there.
    pub fn validate(&self, points: &[JetPoint], tol: f64) -> Result<(), GeometryError> {
        for p in points {
            let t_env = Env::new(p.t, Vec::new(), Vec::new());
            let tt = self.t_fwd.eval(&t_env)?;
            let back = self.t_inv.eval(&Env::new(tt, Vec::new(), Vec::new()))?;
            let mut residual: f64 = (back - p.t).abs();

            let x_env = Env::new(0.0, p.x.clone(), Vec::new());
            let xt: Vec<f64> = self
                .x_fwd
                .iter()
                .map(|e| e.eval(&x_env))
                .collect::<Result<_, _>>()?;
            let xt_env = Env::new(0.0, xt, Vec::new());
            for (i, inv) in self.x_inv.iter().enumerate() {
                residual = residual.max((inv.eval(&xt_env)? - p.x[i]).abs());
            }
            if residual > tol {
                return Err(GeometryError::RoundTripFailed { residual, tol });
            }
            if self.time_derivative_at(p.t)? == 0.0 {
                return Err(GeometryError::SingularJacobian);
            }
            let jac = self.spatial_jacobian_at(&p.x)?;
            invert_matrix(&jac)?;
        }
        Ok(())
    }

    /// `dt̃/dt` at `t`.
    pub fn time_derivative_at(&self, t: f64) -> Result<f64, GeometryError> {
        Ok(self
            .t_fwd
            .diff(VarId::Time)
            .eval(&Env::new(t, Vec::new(), Vec::new()))?)
    }

    /// `∂x̃^i/∂x^j` at `x`.
    pub fn spatial_jacobian_at(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, GeometryError> {
        let env = Env::new(0.0, x.to_vec(), Vec::new());
        let mut jac = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                jac[i][j] = self.x_fwd[i].diff(VarId::Spatial(j + 1)).eval(&env)?;
            }
        }
        Ok(jac)
    }

    /// Point transformation: `t̃ = t̃(t)`, `x̃ = x̃(x)`,
    /// `ỹ^i = (∂x̃^i/∂x^j)(dt/dt̃) y^j`.
    pub fn transform_point(&self, p: &JetPoint) -> Result<JetPoint, GeometryError> {
        let tt = self.t_fwd.eval(&Env::new(p.t, Vec::new(), Vec::new()))?;
        let x_env = Env::new(0.0, p.x.clone(), Vec::new());
        let xt: Vec<f64> = self
            .x_fwd
            .iter()
            .map(|e| e.eval(&x_env))
            .collect::<Result<_, _>>()?;
        let s = self.time_derivative_at(p.t)?;
        if s == 0.0 {
            return Err(GeometryError::SingularJacobian);
        }
        let jac = self.spatial_jacobian_at(&p.x)?;
        let mut yt = vec![0.0; self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                yt[i] += jac[i][j] * p.y[j] / s;
            }
        }
        Ok(JetPoint::new(tt, xt, yt))
    }

    /// Rewrites an expression over the original chart as an expression over
    /// the tilde chart, substituting `t = t(t̃)`, `x = x(x̃)` and
    /// `y^j = (∂x^j/∂x̃^m)(dt̃/dt) ỹ^m`.
    pub fn to_tilde(&self, e: &Expr) -> Expr {
        let n = self.n;
        // dt̃/dt expressed in the tilde chart: 1 / (dt/dt̃)
        let tfac = Expr::one() / self.t_inv.diff(VarId::Time);
        let mut y_sub = Vec::with_capacity(n);
        for j in 0..n {
            let mut s = Expr::zero();
            for m in 0..n {
                s = s + self.x_inv[j].diff(VarId::Spatial(m + 1))
                    * tfac.clone()
                    * Expr::velocity(m + 1);
            }
            y_sub.push(s.simplify());
        }
        e.substitute(&|v| match v {
            VarId::Time => Some(self.t_inv.clone()),
            VarId::Spatial(i) => Some(self.x_inv[i - 1].clone()),
            VarId::Velocity(i) => Some(y_sub[i - 1].clone()),
        })
    }

    /// Transformed temporal metric `h̃₁₁ = h₁₁(t(t̃)) (dt/dt̃)²`.
    pub fn transform_temporal_metric(&self, h: &TemporalMetric) -> TemporalMetric {
        let back = h.h11.substitute(&|v| match v {
            VarId::Time => Some(self.t_inv.clone()),
            _ => None,
        });
        let dt = self.t_inv.diff(VarId::Time);
        TemporalMetric { h11: (back * dt.clone() * dt).simplify() }
    }

    /// Transformed spatial metric
    /// `φ̃_{pq}(x̃) = φ_{ij}(x(x̃)) (∂x^i/∂x̃^p)(∂x^j/∂x̃^q)`.
    pub fn transform_spatial_metric(&self, phi: &SpatialMetric) -> SpatialMetric {
        let n = self.n;
        let sub = |e: &Expr| {
            e.substitute(&|v| match v {
                VarId::Spatial(i) => Some(self.x_inv[i - 1].clone()),
                _ => None,
            })
        };
        let inv_jac: Vec<Vec<Expr>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|p| self.x_inv[i].diff(VarId::Spatial(p + 1)).simplify())
                    .collect()
            })
            .collect();
        let mut out = vec![vec![Expr::zero(); n]; n];
        for p in 0..n {
            for q in 0..n {
                let mut s = Expr::zero();
                for i in 0..n {
                    for j in 0..n {
                        s = s + sub(&phi.phi[i][j]) * inv_jac[i][p].clone() * inv_jac[j][q].clone();
                    }
                }
                out[p][q] = s.simplify();
            }
        }
        SpatialMetric { n, phi: out }
    }

    /// Transformed SODE: the force components obey
    /// `F̃^r = F^j (dt/dt̃)² ∂x̃^r/∂x^j - (dt/dt̃) ∂x̃₁^r/∂t
    ///  - (∂x^m/∂x̃^j)(∂x̃₁^r/∂x^m) x̃₁^j`,
    /// with `x̃₁^r(t,x,y) = (∂x̃^r/∂x^j)(dt/dt̃) y^j` substituted
    /// symbolically, and `h̃₁₁ = h₁₁ (dt/dt̃)²`. The result is expressed in
    /// tilde variables via the declared inverse maps.
    pub fn transform_sode(&self, m: &SodeModel) -> Result<SodeModel, GeometryError> {
        if m.n != self.n {
            return Err(GeometryError::Dimension(format!(
                "model dimension {} does not match change dimension {}",
                m.n, self.n
            )));
        }
        let n = self.n;
        // dt/dt̃ as a function of the original t
        let dt_dtt = (Expr::one() / self.t_fwd.diff(VarId::Time)).simplify();

        // x̃₁^r in original variables
        let mut x1t = Vec::with_capacity(n);
        for r in 0..n {
            let mut s = Expr::zero();
            for j in 0..n {
                s = s + self.x_fwd[r].diff(VarId::Spatial(j + 1))
                    * dt_dtt.clone()
                    * Expr::velocity(j + 1);
            }
            x1t.push(s.simplify());
        }

        // ∂x^m/∂x̃^j pulled back to the original chart
        let pullback = |e: &Expr| {
            e.substitute(&|v| match v {
                VarId::Spatial(i) => Some(self.x_fwd[i - 1].clone()),
                _ => None,
            })
        };
        let mut inv_jac_orig = vec![vec![Expr::zero(); n]; n];
        for mi in 0..n {
            for j in 0..n {
                inv_jac_orig[mi][j] =
                    pullback(&self.x_inv[mi].diff(VarId::Spatial(j + 1)).simplify());
            }
        }

        let mut force = Vec::with_capacity(n);
        for r in 0..n {
            let mut f = Expr::zero();
            for j in 0..n {
                f = f + m.force[j].clone()
                    * dt_dtt.clone()
                    * dt_dtt.clone()
                    * self.x_fwd[r].diff(VarId::Spatial(j + 1));
            }
            f = f - dt_dtt.clone() * x1t[r].diff(VarId::Time);
            for j in 0..n {
                for mi in 0..n {
                    f = f - inv_jac_orig[mi][j].clone()
                        * x1t[r].diff(VarId::Spatial(mi + 1))
                        * x1t[j].clone();
                }
            }
            force.push(self.to_tilde(&f.simplify()).simplify());
        }

        let h = self.transform_temporal_metric(&m.h);
        Ok(SodeModel { n, h, force, provenance: Provenance::Explicit })
    }

    /// Composite change: apply `self`, then `next`.
    pub fn compose(&self, next: &CoordinateChange) -> Result<CoordinateChange, GeometryError> {
        if self.n != next.n {
            return Err(GeometryError::Dimension("composed changes must share a dimension".into()));
        }
        let sub_time = |outer: &Expr, inner: &Expr| {
            outer.substitute(&|v| match v {
                VarId::Time => Some(inner.clone()),
                _ => None,
            })
        };
        let sub_spatial = |outer: &Expr, inner: &[Expr]| {
            outer.substitute(&|v| match v {
                VarId::Spatial(i) => Some(inner[i - 1].clone()),
                _ => None,
            })
        };
        let t_fwd = sub_time(&next.t_fwd, &self.t_fwd);
        let t_inv = sub_time(&self.t_inv, &next.t_inv);
        let x_fwd = next
            .x_fwd
            .iter()
            .map(|e| sub_spatial(e, &self.x_fwd))
            .collect();
        let x_inv = self
            .x_inv
            .iter()
            .map(|e| sub_spatial(e, &next.x_inv))
            .collect();
        CoordinateChange::new(t_fwd, t_inv, x_fwd, x_inv)
    }
}

/// Numeric inverse of a small square matrix.
pub(super) fn invert_matrix(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GeometryError> {
    let n = m.len();
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| m[i][j]);
    let inv = mat.try_inverse().ok_or(GeometryError::SingularJacobian)?;
    Ok((0..n)
        .map(|i| (0..n).map(|j| inv[(i, j)]).collect())
        .collect())
}
