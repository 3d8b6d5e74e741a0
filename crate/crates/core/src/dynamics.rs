//! Fixed-step RK4 integration of SODE trajectories and of the variational
//! (Jacobi) equations, plus the residual check that integrated deviations
//! satisfy the covariant second-order form `D/dt[Dξ/dt] = P ξ`.
//!
//! Fixed step, no adaptivity: the acceptance workloads run in milliseconds
//! at <= 10^4 steps and determinism matters more than speed. Non-finite
//! state is detected after every step and aborts with the last good time.

use thiserror::Error;

use crate::expr::{Expr, VarId};
use crate::geometry::{JetPoint, SodeModel};
use crate::kcc;

#[derive(Debug, Error)]
pub enum IntegrationError {
    #[error("evaluation failed at t = {time}: {source}")]
    Eval {
        time: f64,
        #[source]
        source: crate::expr::EvalError,
    },
    #[error("state became non-finite at t = {time}")]
    NonFinite { time: f64 },
    #[error("steps must be >= 1")]
    NoSteps,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Uniformly sampled solution of the SODE, `(t, x, y)` per step.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<JetPoint>,
    pub step: f64,
}

/// Deviation field `(t, ξ, dξ/dt)` aligned sample-for-sample with a
/// carrier [`Trajectory`].
#[derive(Clone, Debug)]
pub struct DeviationTrack {
    pub samples: Vec<(f64, Vec<f64>, Vec<f64>)>,
}

fn eval_at(e: &Expr, p: &JetPoint) -> Result<f64, IntegrationError> {
    e.eval(p).map_err(|source| IntegrationError::Eval { time: p.t, source })
}

/// Classical RK4 on the first-order form `dx = y`, `dy = -F(t, x, y)` from
/// `p0` to terminal time `t1` in `steps` uniform steps.
pub fn integrate_trajectory(
    m: &SodeModel,
    p0: &JetPoint,
    t1: f64,
    steps: usize,
) -> Result<Trajectory, IntegrationError> {
    if steps == 0 {
        return Err(IntegrationError::NoSteps);
    }
    if p0.x.len() != m.n || p0.y.len() != m.n {
        return Err(IntegrationError::Dimension(format!(
            "initial point has dimension {}, model has {}",
            p0.x.len(),
            m.n
        )));
    }
    let n = m.n;
    let dt = (t1 - p0.t) / steps as f64;

    let deriv = |p: &JetPoint| -> Result<(Vec<f64>, Vec<f64>), IntegrationError> {
        let mut dy = Vec::with_capacity(n);
        for f in &m.force {
            dy.push(-eval_at(f, p)?);
        }
        Ok((p.y.clone(), dy))
    };

    let mut samples = Vec::with_capacity(steps + 1);
    let mut current = p0.clone();
    samples.push(current.clone());
    for step in 0..steps {
        let t = p0.t + step as f64 * dt;
        let half = dt / 2.0;

        let k1 = deriv(&current)?;
        let s2 = offset_point(&current, t + half, &k1, half);
        let k2 = deriv(&s2)?;
        let s3 = offset_point(&current, t + half, &k2, half);
        let k3 = deriv(&s3)?;
        let s4 = offset_point(&current, t + dt, &k3, dt);
        let k4 = deriv(&s4)?;

        let mut x = current.x.clone();
        let mut y = current.y.clone();
        for i in 0..n {
            x[i] += dt / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
            y[i] += dt / 6.0 * (k1.1[i] + 2.0 * k2.1[i] + 2.0 * k3.1[i] + k4.1[i]);
        }
        let t_next = p0.t + (step + 1) as f64 * dt;
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(IntegrationError::NonFinite { time: t });
        }
        current = JetPoint::new(t_next, x, y);
        samples.push(current.clone());
    }
    Ok(Trajectory { samples, step: dt })
}

fn offset_point(p: &JetPoint, t: f64, k: &(Vec<f64>, Vec<f64>), scale: f64) -> JetPoint {
    let x = p.x.iter().zip(&k.0).map(|(v, d)| v + scale * d).collect();
    let y = p.y.iter().zip(&k.1).map(|(v, d)| v + scale * d).collect();
    JetPoint::new(t, x, y)
}

/// Integrates the variational equations
/// `ξ̈^i + (∂F^i/∂x^j) ξ^j + (∂F^i/∂y^r) ξ̇^r = 0`
/// along the trajectory. The carrier state is re-integrated jointly on the
/// same grid (a coupled 4n-dimensional system), so the coefficients are
/// evaluated exactly on the RK4 nodes with no interpolation.
pub fn integrate_deviation(
    m: &SodeModel,
    traj: &Trajectory,
    xi0: &[f64],
    xidot0: &[f64],
) -> Result<DeviationTrack, IntegrationError> {
    let n = m.n;
    if traj.samples.is_empty() {
        return Err(IntegrationError::NoSteps);
    }
    if xi0.len() != n || xidot0.len() != n {
        return Err(IntegrationError::Dimension(format!(
            "deviation initial data must have dimension {n}"
        )));
    }
    let steps = traj.samples.len() - 1;
    let p0 = &traj.samples[0];
    let dt = traj.step;

    let f_x: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| m.force[i].diff(VarId::Spatial(j + 1)).simplify())
                .collect()
        })
        .collect();
    let f_y: Vec<Vec<Expr>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|r| m.force[i].diff(VarId::Velocity(r + 1)).simplify())
                .collect()
        })
        .collect();

    // state = (x, y, xi, xidot)
    #[derive(Clone)]
    struct State {
        x: Vec<f64>,
        y: Vec<f64>,
        xi: Vec<f64>,
        xidot: Vec<f64>,
    }

    let deriv = |t: f64, s: &State| -> Result<State, IntegrationError> {
        let p = JetPoint::new(t, s.x.clone(), s.y.clone());
        let mut dy = Vec::with_capacity(n);
        for f in &m.force {
            dy.push(-eval_at(f, &p)?);
        }
        let mut dxidot = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                dxidot[i] -= eval_at(&f_x[i][j], &p)? * s.xi[j];
                dxidot[i] -= eval_at(&f_y[i][j], &p)? * s.xidot[j];
            }
        }
        Ok(State { x: s.y.clone(), y: dy, xi: s.xidot.clone(), xidot: dxidot })
    };

    let advance = |s: &State, d: &State, scale: f64| State {
        x: s.x.iter().zip(&d.x).map(|(v, k)| v + scale * k).collect(),
        y: s.y.iter().zip(&d.y).map(|(v, k)| v + scale * k).collect(),
        xi: s.xi.iter().zip(&d.xi).map(|(v, k)| v + scale * k).collect(),
        xidot: s.xidot.iter().zip(&d.xidot).map(|(v, k)| v + scale * k).collect(),
    };

    let mut state = State {
        x: p0.x.clone(),
        y: p0.y.clone(),
        xi: xi0.to_vec(),
        xidot: xidot0.to_vec(),
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((p0.t, state.xi.clone(), state.xidot.clone()));
    for step in 0..steps {
        let t = p0.t + step as f64 * dt;
        let half = dt / 2.0;
        let k1 = deriv(t, &state)?;
        let k2 = deriv(t + half, &advance(&state, &k1, half))?;
        let k3 = deriv(t + half, &advance(&state, &k2, half))?;
        let k4 = deriv(t + dt, &advance(&state, &k3, dt))?;
        let mut next = state.clone();
        for (field, k1f, k2f, k3f, k4f) in [
            (&mut next.x, &k1.x, &k2.x, &k3.x, &k4.x),
            (&mut next.y, &k1.y, &k2.y, &k3.y, &k4.y),
            (&mut next.xi, &k1.xi, &k2.xi, &k3.xi, &k4.xi),
            (&mut next.xidot, &k1.xidot, &k2.xidot, &k3.xidot, &k4.xidot),
        ] {
            for i in 0..n {
                field[i] += dt / 6.0 * (k1f[i] + 2.0 * k2f[i] + 2.0 * k3f[i] + k4f[i]);
            }
        }
        let t_next = p0.t + (step + 1) as f64 * dt;
        if next
            .xi
            .iter()
            .chain(&next.xidot)
            .chain(&next.x)
            .chain(&next.y)
            .any(|v| !v.is_finite())
        {
            return Err(IntegrationError::NonFinite { time: t });
        }
        state = next;
        samples.push((t_next, state.xi.clone(), state.xidot.clone()));
    }
    Ok(DeviationTrack { samples })
}

/// Max-norm residual of the covariant Jacobi identity
/// `D/dt[Dξ/dt] - P ξ` over the interior samples of the track. The inner
/// derivative is expanded symbolically, `η = Dξ/dt = ξ̇ + [(1/2)∂F/∂y +
/// (1/2)H δ] ξ`, and its time derivative along the track is taken by
/// central differences of the sampled `η`, so the identity — exact for
/// true Jacobi fields along true trajectories — is probed with the
/// integrated data and the residual is dominated by integration error.
pub fn deviation_residual(
    m: &SodeModel,
    traj: &Trajectory,
    track: &DeviationTrack,
) -> Result<f64, IntegrationError> {
    let n = m.n;
    if traj.samples.len() != track.samples.len() {
        return Err(IntegrationError::Dimension(
            "trajectory and deviation track are not aligned".into(),
        ));
    }
    if traj.samples.len() < 3 {
        return Err(IntegrationError::Dimension(
            "residual needs at least three samples".into(),
        ));
    }
    let h = crate::geometry::christoffel_temporal(&m.h);
    let p_mat = kcc::deviation_curvature(m);

    // η^i = Dξ^i/dt = ξ̇^i + A^i_m ξ^m with A = (1/2)∂F/∂y + (1/2)H δ;
    // the outer derivative acts on the other kind:
    // Dη^i/dt = η̇^i + A2^i_r η^r with A2 = (1/2)∂F/∂y - (1/2)H δ.
    let mut a = vec![vec![Expr::zero(); n]; n];
    let mut a2 = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            let fy = Expr::constant(0.5) * m.force[i].diff(VarId::Velocity(j + 1));
            let (mut ai, mut a2i) = (fy.clone(), fy);
            if i == j {
                ai = ai + Expr::constant(0.5) * h.clone();
                a2i = a2i - Expr::constant(0.5) * h.clone();
            }
            a[i][j] = ai.simplify();
            a2[i][j] = a2i.simplify();
        }
    }

    let eta_at = |idx: usize| -> Result<Vec<f64>, IntegrationError> {
        let p = &traj.samples[idx];
        let (_, xi, xidot) = &track.samples[idx];
        let mut eta = xidot.clone();
        for i in 0..n {
            for j in 0..n {
                eta[i] += eval_at(&a[i][j], p)? * xi[j];
            }
        }
        Ok(eta)
    };

    let dt = traj.step;
    let mut max_residual: f64 = 0.0;
    let mut eta_prev = eta_at(0)?;
    let mut eta_here = eta_at(1)?;
    for idx in 1..traj.samples.len() - 1 {
        let eta_next = eta_at(idx + 1)?;
        let p = &traj.samples[idx];
        let (_, xi, _) = &track.samples[idx];
        for i in 0..n {
            let eta_dot = (eta_next[i] - eta_prev[i]) / (2.0 * dt);
            let mut res = eta_dot;
            for j in 0..n {
                res += eval_at(&a2[i][j], p)? * eta_here[j];
                res -= eval_at(&p_mat[i][j], p)? * xi[j];
            }
            max_residual = max_residual.max(res.abs());
        }
        eta_prev = eta_here;
        eta_here = eta_next;
    }
    Ok(max_residual)
}

/// Numeric deviation curvature at a point and its eigenvalues
/// (real, imaginary), sorted by real part then imaginary part for
/// deterministic output.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub p_matrix: Vec<Vec<f64>>,
    pub eigenvalues: Vec<(f64, f64)>,
}

pub fn stability_report(m: &SodeModel, p: &JetPoint) -> Result<StabilityReport, IntegrationError> {
    let n = m.n;
    let p_exprs = kcc::deviation_curvature(m);
    let mut p_matrix = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            p_matrix[i][j] = eval_at(&p_exprs[i][j], p)?;
        }
    }
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| p_matrix[i][j]);
    let mut eigenvalues: Vec<(f64, f64)> = mat
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(StabilityReport { p_matrix, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::geometry::{SpatialMetric, TemporalMetric};

    fn free_model() -> SodeModel {
        SodeModel::explicit(TemporalMetric::flat(), vec![Expr::zero()]).unwrap()
    }

    fn rheonomic_model() -> SodeModel {
        SodeModel::from_vectorfield(vec![parse("x1", 1).unwrap()], TemporalMetric::flat()).unwrap()
    }

    fn sphere_model() -> SodeModel {
        let phi = SpatialMetric::diagonal(vec![Expr::one(), parse("sin(x1)^2", 2).unwrap()]);
        SodeModel::harmonic(TemporalMetric::flat(), phi).unwrap()
    }

    #[test]
    fn free_flow_is_exact() {
        let m = free_model();
        let p0 = JetPoint::new(0.0, vec![0.25], vec![1.5]);
        let traj = integrate_trajectory(&m, &p0, 1.0, 10).unwrap();
        assert_eq!(traj.samples.len(), 11);
        let last = traj.samples.last().unwrap();
        assert!((last.x[0] - 1.75).abs() < 1e-12);
        assert!((last.y[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn equator_is_a_geodesic() {
        let m = sphere_model();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let p0 = JetPoint::new(0.0, vec![half_pi, 0.0], vec![0.0, 1.0]);
        let traj = integrate_trajectory(&m, &p0, std::f64::consts::PI, 1000).unwrap();
        let mut drift: f64 = 0.0;
        for p in &traj.samples {
            drift = drift.max((p.x[0] - half_pi).abs());
        }
        assert!(drift < 1e-8, "drift {drift}");
        let last = traj.samples.last().unwrap();
        assert!((last.x[1] - std::f64::consts::PI).abs() < 1e-8);
    }

    #[test]
    fn rheonomic_exponential() {
        let m = rheonomic_model();
        let p0 = JetPoint::new(0.0, vec![1.0], vec![1.0]);
        let traj = integrate_trajectory(&m, &p0, 1.0, 1000).unwrap();
        let last = traj.samples.last().unwrap();
        assert!((last.y[0] - std::f64::consts::E).abs() < 1e-6);
    }

    #[test]
    fn rk4_fourth_order_convergence() {
        let m = rheonomic_model();
        let p0 = JetPoint::new(0.0, vec![1.0], vec![1.0]);
        let exact = std::f64::consts::E;
        let err = |steps: usize| {
            let traj = integrate_trajectory(&m, &p0, 1.0, steps).unwrap();
            (traj.samples.last().unwrap().y[0] - exact).abs()
        };
        let e1 = err(50);
        let e2 = err(100);
        assert!(e1 / e2 >= 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn free_deviation_is_linear() {
        let m = free_model();
        let p0 = JetPoint::new(0.0, vec![0.0], vec![0.0]);
        let traj = integrate_trajectory(&m, &p0, 2.0, 20).unwrap();
        let track = integrate_deviation(&m, &traj, &[0.5], &[2.0]).unwrap();
        for (t, xi, _) in &track.samples {
            assert!((xi[0] - (0.5 + 2.0 * t)).abs() < 1e-12);
        }
        let res = deviation_residual(&m, &traj, &track).unwrap();
        assert!(res < 1e-10);
    }

    #[test]
    fn sphere_jacobi_field_is_sine() {
        let m = sphere_model();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let p0 = JetPoint::new(0.0, vec![half_pi, 0.0], vec![0.0, 1.0]);
        let traj = integrate_trajectory(&m, &p0, std::f64::consts::PI, 2000).unwrap();
        let track = integrate_deviation(&m, &traj, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let mut max_err: f64 = 0.0;
        for (t, xi, _) in &track.samples {
            max_err = max_err.max((xi[0] - t.sin()).abs());
        }
        assert!(max_err < 1e-6, "max error {max_err}");
        let res = deviation_residual(&m, &traj, &track).unwrap();
        assert!(res < 1e-5, "residual {res}");
    }

    #[test]
    fn rheonomic_deviation_is_exponential() {
        let m = rheonomic_model();
        let p0 = JetPoint::new(0.0, vec![1.0], vec![1.0]);
        let traj = integrate_trajectory(&m, &p0, 1.0, 4000).unwrap();
        let track = integrate_deviation(&m, &traj, &[0.0], &[1.0]).unwrap();
        for (t, _, xidot) in &track.samples {
            assert!((xidot[0] - t.exp()).abs() < 1e-6);
        }
        let res = deviation_residual(&m, &traj, &track).unwrap();
        assert!(res < 1e-7, "residual {res}");
    }

    #[test]
    fn residual_decreases_under_refinement() {
        let m = sphere_model();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let p0 = JetPoint::new(0.0, vec![half_pi, 0.1], vec![0.2, 1.0]);
        let res = |steps: usize| {
            let traj = integrate_trajectory(&m, &p0, 1.0, steps).unwrap();
            let track = integrate_deviation(&m, &traj, &[0.1, 0.0], &[0.5, 0.2]).unwrap();
            deviation_residual(&m, &traj, &track).unwrap()
        };
        assert!(res(400) < res(100));
    }

    #[test]
    fn finite_difference_variation_oracle() {
        // (x̄(t, s) - x(t)) / s approximates ξ(t) for small s
        let m = sphere_model();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let s = 1e-6;
        let p0 = JetPoint::new(0.0, vec![half_pi, 0.0], vec![0.0, 1.0]);
        let p0s = JetPoint::new(0.0, vec![half_pi, 0.0], vec![s, 1.0]);
        let base = integrate_trajectory(&m, &p0, 2.0, 1000).unwrap();
        let pert = integrate_trajectory(&m, &p0s, 2.0, 1000).unwrap();
        let track = integrate_deviation(&m, &base, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        for idx in [250, 500, 750, 1000] {
            let fd = (pert.samples[idx].x[0] - base.samples[idx].x[0]) / s;
            let xi = track.samples[idx].1[0];
            assert!((fd - xi).abs() < 1e-4, "fd {fd} vs xi {xi}");
        }
    }

    #[test]
    fn stability_report_examples() {
        let m = free_model();
        let r = stability_report(&m, &JetPoint::new(0.0, vec![0.0], vec![0.0])).unwrap();
        assert_eq!(r.eigenvalues, vec![(0.0, 0.0)]);

        let m = rheonomic_model();
        let r = stability_report(&m, &JetPoint::new(0.0, vec![0.0], vec![0.0])).unwrap();
        assert!((r.eigenvalues[0].0 - 0.25).abs() < 1e-12);

        let m = sphere_model();
        let r = stability_report(&m, &JetPoint::new(0.0, vec![1.0, 0.0], vec![1.0, 0.0])).unwrap();
        assert!(r.eigenvalues.iter().any(|e| (e.0 + 1.0).abs() < 1e-9));
    }

    #[test]
    fn integration_aborts_on_domain_error() {
        // F = log(x1) leaves its domain when the trajectory crosses x1 = 0
        let m =
            SodeModel::explicit(TemporalMetric::flat(), vec![parse("log(x1)", 1).unwrap()]).unwrap();
        let p0 = JetPoint::new(0.0, vec![1e-4], vec![-10.0]);
        let err = integrate_trajectory(&m, &p0, 1.0, 100).unwrap_err();
        match err {
            IntegrationError::Eval { .. } | IntegrationError::NonFinite { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }
}
