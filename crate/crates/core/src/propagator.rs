//! Ground-truth integration of i h psi' = H(t) psi with H = [[V, eps], [eps, -V]].

use crate::error::{Error, Result};
use crate::linalg::{c, exp_herm_traceless, max_abs, unitarity_defect, Mat2};
use crate::potential::PotentialModel;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Stepper {
    /// Dormand-Prince 5(4) with FSAL.
    #[default]
    Dopri5,
    /// Fourth-order commutator-free exponential integrator, step doubling.
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorOptions {
    pub tol: f64,
    pub stepper: Stepper,
    pub max_steps: u64,
}

impl Default for PropagatorOptions {
    fn default() -> Self {
        Self { tol: 1e-10, stepper: Stepper::Dopri5, max_steps: 100_000_000 }
    }
}

impl PropagatorOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Lower bound on h for full-line scattering runs.
pub const H_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagation {
    /// M(t1, t0)
    pub matrix: Mat2,
    pub steps: u64,
    pub rejected: u64,
    pub unitarity_defect: f64,
}

pub fn hamiltonian(model: &PotentialModel, eps: f64, t: f64) -> Mat2 {
    let v = model.eval(t);
    Mat2::new(c(v, 0.0), c(eps, 0.0), c(eps, 0.0), c(-v, 0.0))
}

/// Unitary flow M(t1, t0) of the system.
pub fn fundamental_matrix(
    model: &PotentialModel,
    eps: f64,
    h: f64,
    t0: f64,
    t1: f64,
    opts: &PropagatorOptions,
) -> Result<Propagation> {
    assert!(h > 0.0 && eps >= 0.0 && opts.tol > 0.0);
    let v = |t: f64| model.eval(t);
    let out = match opts.stepper {
        Stepper::Dopri5 => dopri5(&v, eps, h, t0, t1, opts),
        Stepper::Magnus4 => magnus4(&v, eps, h, t0, t1, opts),
    }?;
    Ok(out)
}

/// psi(t1) from psi(t0).
pub fn propagate(
    model: &PotentialModel,
    eps: f64,
    h: f64,
    t0: f64,
    t1: f64,
    psi0: [C64; 2],
    opts: &PropagatorOptions,
) -> Result<([C64; 2], Propagation)> {
    let p = fundamental_matrix(model, eps, h, t0, t1, opts)?;
    let m = &p.matrix;
    let psi = [m[(0, 0)] * psi0[0] + m[(0, 1)] * psi0[1], m[(1, 0)] * psi0[0] + m[(1, 1)] * psi0[1]];
    Ok((psi, p))
}

/// F(t, Y) = -(i/h) H(t) Y
fn rhs(vt: f64, eps: f64, h: f64, y: &Mat2) -> Mat2 {
    let s = c(0.0, -1.0 / h);
    let mut out = Mat2::zeros();
    for col in 0..2 {
        let (a, b) = (y[(0, col)], y[(1, col)]);
        out[(0, col)] = s * (a * vt + b * eps);
        out[(1, col)] = s * (a * eps - b * vt);
    }
    out
}

fn local_rate(vt: f64, eps: f64, h: f64) -> f64 {
    (vt * vt + eps * eps).sqrt().max(1e-300) / h
}

fn check_step(t: f64, dt: f64) -> Result<()> {
    if dt.abs() < 1e-14 * t.abs().max(1.0) || !dt.is_finite() {
        return Err(Error::StepUnderflow { t, dt });
    }
    Ok(())
}

fn dopri5<V: Fn(f64) -> f64>(v: &V, eps: f64, h: f64, t0: f64, t1: f64, opts: &PropagatorOptions) -> Result<Propagation> {
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let mut y = Mat2::identity();
    let mut stats = (0u64, 0u64);
    if t0 == t1 {
        return Ok(finish(y, stats));
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut dt = dir * 0.1 / local_rate(v(t0), eps, h);
    let mut k1 = rhs(v(t), eps, h, &y);
    loop {
        let rem = t1 - t;
        if rem * dir <= 0.0 {
            break;
        }
        let cap = 3.0 / local_rate(v(t), eps, h);
        if dt.abs() > cap {
            dt = dir * cap;
        }
        let last = dt.abs() >= rem.abs();
        if last {
            dt = rem;
        }
        check_step(t, dt)?;
        if stats.0 + stats.1 >= opts.max_steps {
            return Err(Error::StepBudgetExhausted { t, max_steps: opts.max_steps });
        }
        let w = |a: f64| c(a * dt, 0.0);
        let k2 = rhs(v(t + C2 * dt), eps, h, &(y + k1 * w(A21)));
        let k3 = rhs(v(t + C3 * dt), eps, h, &(y + k1 * w(A31) + k2 * w(A32)));
        let k4 = rhs(v(t + C4 * dt), eps, h, &(y + k1 * w(A41) + k2 * w(A42) + k3 * w(A43)));
        let k5 = rhs(v(t + C5 * dt), eps, h, &(y + k1 * w(A51) + k2 * w(A52) + k3 * w(A53) + k4 * w(A54)));
        let k6 = rhs(
            v(t + dt),
            eps,
            h,
            &(y + k1 * w(A61) + k2 * w(A62) + k3 * w(A63) + k4 * w(A64) + k5 * w(A65)),
        );
        let ynew = y + k1 * w(B1) + k3 * w(B3) + k4 * w(B4) + k5 * w(B5) + k6 * w(B6);
        let tnew = if last { t1 } else { t + dt };
        let k7 = rhs(v(tnew), eps, h, &ynew);
        let err = max_abs(&(k1 * w(E1) + k3 * w(E3) + k4 * w(E4) + k5 * w(E5) + k6 * w(E6) + k7 * w(E7)));
        let fac = if err == 0.0 { 5.0 } else { (0.9 * (opts.tol / err).powf(0.2)).clamp(0.2, 5.0) };
        if err <= opts.tol {
            t = tnew;
            y = ynew;
            k1 = k7;
            stats.0 += 1;
            if last {
                break;
            }
            dt *= fac;
        } else {
            stats.1 += 1;
            dt *= fac.min(1.0);
        }
    }
    Ok(finish(y, stats))
}

const GAUSS_OFF: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
const W_BIG: f64 = 0.25 + GAUSS_OFF;
const W_SMALL: f64 = 0.25 - GAUSS_OFF;

fn cf4_step<V: Fn(f64) -> f64>(v: &V, eps: f64, h: f64, t: f64, dt: f64) -> Mat2 {
    let v1 = v(t + (0.5 - GAUSS_OFF) * dt);
    let v2 = v(t + (0.5 + GAUSS_OFF) * dt);
    // Coefficients sum to 1/2, so each exponential carries eps/2 off the diagonal.
    let first = exp_herm_traceless(W_BIG * v1 + W_SMALL * v2, c(0.5 * eps, 0.0), dt / h);
    let second = exp_herm_traceless(W_SMALL * v1 + W_BIG * v2, c(0.5 * eps, 0.0), dt / h);
    second * first
}

fn magnus4<V: Fn(f64) -> f64>(v: &V, eps: f64, h: f64, t0: f64, t1: f64, opts: &PropagatorOptions) -> Result<Propagation> {
    let mut y = Mat2::identity();
    let mut stats = (0u64, 0u64);
    if t0 == t1 {
        return Ok(finish(y, stats));
    }
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut dt = dir * 0.5 / local_rate(v(t0), eps, h);
    loop {
        let rem = t1 - t;
        if rem * dir <= 0.0 {
            break;
        }
        let last = dt.abs() >= rem.abs();
        if last {
            dt = rem;
        }
        check_step(t, dt)?;
        if stats.0 + stats.1 >= opts.max_steps {
            return Err(Error::StepBudgetExhausted { t, max_steps: opts.max_steps });
        }
        let full = cf4_step(v, eps, h, t, dt);
        let half = cf4_step(v, eps, h, t + 0.5 * dt, 0.5 * dt) * cf4_step(v, eps, h, t, 0.5 * dt);
        let err = max_abs(&(full - half)) / 15.0;
        let fac = if err == 0.0 { 4.0 } else { (0.9 * (opts.tol / err).powf(0.2)).clamp(0.2, 4.0) };
        if err <= opts.tol {
            y = half * y;
            t = if last { t1 } else { t + dt };
            stats.0 += 1;
            if last {
                break;
            }
            dt *= fac;
        } else {
            stats.1 += 1;
            dt *= fac.min(1.0);
        }
    }
    Ok(finish(y, stats))
}

fn finish(y: Mat2, stats: (u64, u64)) -> Propagation {
    Propagation { unitarity_defect: unitarity_defect(&y), matrix: y, steps: stats.0, rejected: stats.1 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn lz() -> PotentialModel {
        PotentialModel::linear_lz(1.0).unwrap()
    }

    #[test]
    fn identity_for_empty_interval() {
        let p = fundamental_matrix(&lz(), 0.1, 0.1, 0.3, 0.3, &PropagatorOptions::default()).unwrap();
        assert_eq!(p.matrix, identity());
    }

    #[test]
    fn decoupled_phases_exact() {
        // eps = 0, V = t: psi_1(t) = psi_1(0) exp(-i t^2/(2h)).
        let h = 0.05;
        for stepper in [Stepper::Dopri5, Stepper::Magnus4] {
            let opts = PropagatorOptions { stepper, ..Default::default() };
            let (psi, _) = propagate(&lz(), 0.0, h, 0.0, 2.0, [c(1.0, 0.0), c(0.0, 0.0)], &opts).unwrap();
            let exact = C64::from_polar(1.0, -4.0 / (2.0 * h));
            assert!((psi[0] - exact).norm() < 1e-7, "{stepper:?}");
            assert!(psi[1].norm() < 1e-14);
        }
    }

    #[test]
    fn constant_potential_matches_closed_form() {
        let m = PotentialModel::linear_lz(1.0).unwrap();
        // Beyond the window V = 8 exactly.
        let (eps, h) = (0.3, 0.1);
        let exact = exp_herm_traceless(8.0, c(eps, 0.0), 3.0 / h);
        for stepper in [Stepper::Dopri5, Stepper::Magnus4] {
            let opts = PropagatorOptions { stepper, ..Default::default() };
            let p = fundamental_matrix(&m, eps, h, 9.0, 12.0, &opts).unwrap();
            assert!(max_abs(&(p.matrix - exact)) < 1e-8, "{stepper:?}");
        }
    }

    #[test]
    fn magnus_is_fourth_order() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let v = |t: f64| m.eval(t);
        let (eps, h) = (0.2, 0.3);
        let run = |n: usize| {
            let dt = 2.0 / n as f64;
            let mut y = identity();
            for i in 0..n {
                y = cf4_step(&v, eps, h, -1.0 + i as f64 * dt, dt) * y;
            }
            y
        };
        let reference = run(4096);
        let e1 = max_abs(&(run(64) - reference));
        let e2 = max_abs(&(run(128) - reference));
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn steppers_agree_and_stay_unitary() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let a = fundamental_matrix(&m, 0.05, 0.02, -3.0, 3.0, &PropagatorOptions::with_tol(1e-12)).unwrap();
        let b = fundamental_matrix(
            &m,
            0.05,
            0.02,
            -3.0,
            3.0,
            &PropagatorOptions { tol: 1e-12, stepper: Stepper::Magnus4, ..Default::default() },
        )
        .unwrap();
        assert!(max_abs(&(a.matrix - b.matrix)) < 1e-8);
        assert!(a.unitarity_defect < 1e-8 && b.unitarity_defect < 1e-10);
    }

    #[test]
    fn time_reversal_structure() {
        // M maps (psi1, psi2) -> ... and (-conj psi2, conj psi1) likewise, so M = [[a, -conj b], [b, conj a]].
        let m = PotentialModel::tanh_product(1.0, &[(2, 1.5, 0.3), (1, 1.0, -0.5)]).unwrap();
        let p = fundamental_matrix(&m, 0.1, 0.05, -2.0, 2.5, &PropagatorOptions::with_tol(1e-12)).unwrap();
        let x = p.matrix;
        assert!((x[(0, 1)] + x[(1, 0)].conj()).norm() < 1e-8);
        assert!((x[(1, 1)] - x[(0, 0)].conj()).norm() < 1e-8);
    }
}
