//! Jost solutions, the scattering matrix and the transition probability.

use crate::error::{Error, Result};
use crate::linalg::{c, diag, exp_herm_traceless, j, mat, max_abs, unitarity_defect, Mat2};
use crate::oscillatory::{integrate_on_knots, panel_knots};
use crate::potential::{CrossingCatalog, PotentialModel, Side};
use crate::propagator::{fundamental_matrix, PropagatorOptions};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Angles of the asymptotic eigenbases, tan 2 theta = eps / V.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JostAngles {
    pub theta_r: f64,
    pub theta_l: f64,
    /// pi/2 - theta_l, the angle used for V_l < 0.
    pub eta_l: Option<f64>,
}

/// theta = arctan((sqrt(V^2+eps^2) - V)/eps), with the eps = 0 limit.
pub fn jost_angle(v: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return if v > 0.0 { 0.0 } else { std::f64::consts::FRAC_PI_2 };
    }
    let lam = v.hypot(eps);
    // For V > 0 use the cancellation-free form eps/(lam + V).
    let x = if v > 0.0 { eps / (lam + v) } else { (lam - v) / eps };
    x.atan()
}

pub fn jost_angles(model: &PotentialModel, eps: f64) -> JostAngles {
    let theta_r = jost_angle(model.v_right, eps);
    let theta_l = jost_angle(model.v_left, eps);
    let eta_l = (model.v_left < 0.0).then(|| std::f64::consts::FRAC_PI_2 - theta_l);
    JostAngles { theta_r, theta_l, eta_l }
}

/// Free solutions (phi^+, phi^-) at time t for the constant tail value v.
pub fn free_basis(v: f64, eps: f64, h: f64, t: f64) -> Mat2 {
    let th = jost_angle(v, eps);
    let (s, co) = th.sin_cos();
    let lam = v.hypot(eps);
    let ep = C64::from_polar(1.0, -lam * t / h);
    let em = ep.conj();
    mat(ep * co, -em * s, ep * s, em * co)
}

/// Tail-correction data on one side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCorrection {
    /// int_{+-inf}^{T} (V - V_tail)
    pub diagonal: f64,
    /// int_{+-inf}^{T} (V - V_tail) e^{2 i lambda s / h}
    pub off_diagonal: C64,
    /// bound on the truncated oscillatory remainder
    pub remainder_bound: f64,
    /// max |U - I|
    pub size: f64,
}

fn tail_correction(model: &PotentialModel, eps: f64, h: f64, side: Side, t: f64) -> Result<(Mat2, TailCorrection)> {
    let vt = model.tail(side);
    let lam = vt.hypot(eps);
    let theta = jost_angle(vt, eps);
    let kappa = 2.0 * lam / h;
    let g = |s: f64| model.eval(s) - vt;
    let dir = if side == Side::Right { 1.0 } else { -1.0 };
    let end = model.tail_point(side);
    // Far point: beyond the tail point and past where g * 2/kappa drops below 1e-13.
    let mut far = if dir * (end - t) > 0.0 { end } else { t };
    let mut step = 0;
    while g(far).abs() * 2.0 / kappa > 1e-13 && step < 400 {
        far += dir * 0.25;
        step += 1;
    }
    let bound = g(far).abs() * 2.0 / kappa;
    if bound > 1e-12 {
        return Err(Error::TailNotConverged { bound });
    }
    let (a, b) = if dir > 0.0 { (t, far) } else { (far, t) };
    let off = if b > a {
        let knots = panel_knots(a, b, |_| (0.5 / kappa).min(0.25));
        integrate_on_knots(&knots, |s| C64::from_polar(g(s), kappa * s), 1e-15)?
    } else {
        c(0.0, 0.0)
    };
    // int_{inf}^{T} = -int_T^{inf} on the right; int_{-inf}^{T} on the left.
    let (diag_int, off_int) = match side {
        Side::Right => (-model.tail_integral(Side::Right, t), -off),
        Side::Left => (model.tail_integral(Side::Left, t), off),
    };
    let (s2, c2) = (2.0 * theta).sin_cos();
    let u = exp_herm_traceless(c2 * diag_int, off_int * (-s2), 1.0 / h);
    let size = max_abs(&(u - Mat2::identity()));
    Ok((u, TailCorrection { diagonal: diag_int, off_diagonal: off_int, remainder_bound: bound, size }))
}

/// Jost basis (J^+, J^-) on the given side evaluated at t.
pub fn jost_basis(model: &PotentialModel, eps: f64, h: f64, side: Side, t: f64) -> Result<Mat2> {
    Ok(jost_basis_with_tail(model, eps, h, side, t)?.0)
}

fn jost_basis_with_tail(model: &PotentialModel, eps: f64, h: f64, side: Side, t: f64) -> Result<(Mat2, TailCorrection)> {
    let (u, tc) = tail_correction(model, eps, h, side, t)?;
    Ok((free_basis(model.tail(side), eps, h, t) * u, tc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ScatteringOptions {
    pub propagator: PropagatorOptions,
    /// Truncation points; default to where |V - V_tail| < 1e-14.
    pub t_right: Option<f64>,
    pub t_left: Option<f64>,
}

impl ScatteringOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { propagator: PropagatorOptions::with_tol(tol), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub eps: f64,
    pub h: f64,
    pub s: Mat2,
    pub p: f64,
    pub t_right: f64,
    pub t_left: f64,
    pub unitarity_defect: f64,
    pub tail_right: TailCorrection,
    pub tail_left: TailCorrection,
    pub steps: u64,
}

/// S = J_r(T_r)^{-1} M(T_r, T_l) J_l(T_l), P = |s_21|^2.
pub fn scattering_matrix(model: &PotentialModel, eps: f64, h: f64, opts: &ScatteringOptions) -> Result<ScatteringReport> {
    let tr = opts.t_right.unwrap_or_else(|| model.tail_point(Side::Right));
    let tl = opts.t_left.unwrap_or_else(|| model.tail_point(Side::Left));
    let (jr, tail_right) = jost_basis_with_tail(model, eps, h, Side::Right, tr)?;
    let (jl, tail_left) = jost_basis_with_tail(model, eps, h, Side::Left, tl)?;
    let prop = fundamental_matrix(model, eps, h, tl, tr, &opts.propagator)?;
    let jr_inv = jr.try_inverse().ok_or_else(|| Error::InvalidModel("singular Jost basis".into()))?;
    let s = jr_inv * prop.matrix * jl;
    Ok(ScatteringReport {
        eps,
        h,
        p: s[(1, 0)].norm_sqr(),
        unitarity_defect: unitarity_defect(&s),
        s,
        t_right: tr,
        t_left: tl,
        tail_right,
        tail_left,
        steps: prop.steps,
    })
}

/// Connector matrix with its claimed error orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connector {
    pub matrix: Mat2,
    pub action: f64,
    pub anchor: f64,
    pub error_orders: Vec<String>,
}

/// Leading T_r = diag(e^{-i R_r/h}, e^{i R_r/h}).
pub fn connector_t_r(model: &PotentialModel, catalog: &CrossingCatalog, h: f64, anchor: f64) -> Result<Connector> {
    let r = checked_action(model, catalog, Side::Right, anchor)?;
    Ok(Connector {
        matrix: phase_diag(r, h),
        action: r,
        anchor,
        error_orders: vec!["O(eps^2/h)".into(), "O(eps)".into()],
    })
}

/// Leading T_l: diagonal for V_l > 0, antidiagonal [[0, -e^{-iR/h}], [e^{iR/h}, 0]] for V_l < 0.
pub fn connector_t_ell(model: &PotentialModel, catalog: &CrossingCatalog, h: f64, anchor: f64) -> Result<Connector> {
    let r = checked_action(model, catalog, Side::Left, anchor)?;
    let d = phase_diag(r, h);
    let matrix = if model.v_left > 0.0 { d } else { d * j() };
    Ok(Connector { matrix, action: r, anchor, error_orders: vec!["O(eps^2/h)".into(), "O(eps^2)".into(), "O(eps)".into()] })
}

pub fn phase_diag(r: f64, h: f64) -> Mat2 {
    let e = C64::from_polar(1.0, -r / h);
    diag(e, e.conj())
}

fn checked_action(model: &PotentialModel, catalog: &CrossingCatalog, side: Side, anchor: f64) -> Result<f64> {
    let tail = model.tail_integral(side, anchor);
    if tail.abs() <= 1e-14 * model.tail(side).abs().max(1.0) {
        return Err(Error::TailIntegralVanishes { anchor });
    }
    model.regularized_action(catalog, side, anchor)
}

/// Default connector anchor: first point 0.5, 1.0, ... past the outermost crossing
/// where the tail integral is clearly nonzero.
pub fn default_anchor(model: &PotentialModel, catalog: &CrossingCatalog, side: Side) -> f64 {
    let (start, dir) = match side {
        Side::Right => (catalog.crossings.first().map(|c| c.t).unwrap_or(0.0), 1.0),
        Side::Left => (catalog.crossings.last().map(|c| c.t).unwrap_or(0.0), -1.0),
    };
    let mut t = start + dir * 0.5;
    for _ in 0..200 {
        if model.tail_integral(side, t).abs() > 1e-8 {
            return t;
        }
        t += dir * 0.5;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::potential::Family;

    #[test]
    fn landau_zener_reference_point() {
        let m = PotentialModel::linear_lz(1.0).unwrap();
        let r = scattering_matrix(&m, 0.1, 0.2, &ScatteringOptions::default()).unwrap();
        let lz = (-std::f64::consts::PI * 0.01 / 0.2f64).exp();
        assert!((lz - 0.85464).abs() < 1e-5);
        assert!((r.p - lz).abs() < 1e-5, "P = {} vs {lz}", r.p);
        assert!(r.unitarity_defect < 1e-7, "defect {}", r.unitarity_defect);
    }

    #[test]
    fn truncation_independence() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let opts = ScatteringOptions::with_tol(1e-11);
        let a = scattering_matrix(&m, 0.02, 0.05, &opts).unwrap();
        let far = ScatteringOptions { t_right: Some(2.0 * a.t_right), t_left: Some(2.0 * a.t_left), ..opts };
        let b = scattering_matrix(&m, 0.02, 0.05, &far).unwrap();
        assert!((a.p - b.p).abs() < 1e-7, "{} {}", a.p, b.p);
        // A short truncation is repaired by the tail correction.
        let near = ScatteringOptions { t_right: Some(6.0), t_left: Some(-6.0), ..opts };
        let c = scattering_matrix(&m, 0.02, 0.05, &near).unwrap();
        assert!(c.tail_right.size > 1e-9);
        assert!((a.p - c.p).abs() < 1e-7, "{} {}", a.p, c.p);
    }

    #[test]
    fn steppers_agree_on_p() {
        use crate::propagator::Stepper;
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, -2.0), (3, 1.0, 2.0)]).unwrap();
        let mut o = ScatteringOptions::with_tol(1e-11);
        let a = scattering_matrix(&m, 0.01, 0.05, &o).unwrap();
        o.propagator.stepper = Stepper::Magnus4;
        let b = scattering_matrix(&m, 0.01, 0.05, &o).unwrap();
        assert!((a.p - b.p).abs() < 1e-8, "{} {}", a.p, b.p);
    }

    #[test]
    fn no_coupling_no_crossing() {
        let m = PotentialModel::new(Family::PolynomialWindowed { coeffs: vec![1.0, 0.2], inner: 3.0, outer: 4.0 }).unwrap();
        let r = scattering_matrix(&m, 0.0, 0.1, &ScatteringOptions::default()).unwrap();
        assert!(r.p < 1e-20);
    }

    #[test]
    fn jost_angle_branches() {
        assert_eq!(jost_angle(1.0, 0.0), 0.0);
        for (v, e) in [(1.0, 0.1), (-1.0, 0.1), (0.3, 2.0), (1.0, 1e-9)] {
            let th = jost_angle(v, e);
            assert!(th > 0.0 && th < std::f64::consts::FRAC_PI_2);
            assert!(((2.0 * th).tan() - e / v).abs() < 1e-9 * (e / v).abs().max(1.0));
        }
    }

    #[test]
    fn jost_basis_examples() {
        // Beyond the window V = V_r exactly, so U = I.
        let m = PotentialModel::linear_lz(1.0).unwrap();
        let b = jost_basis(&m, 0.1, 0.2, Side::Right, 9.0).unwrap();
        assert!(max_abs(&(b - free_basis(8.0, 0.1, 0.2, 9.0))) < 1e-15);
        assert!(unitarity_defect(&b) < 1e-12);
        let d = jost_basis(&m, 0.0, 0.2, Side::Right, 9.0).unwrap();
        assert!(d[(0, 1)].norm() == 0.0 && d[(1, 0)].norm() == 0.0);
        // Inside the tail the correction is nontrivial but unitary.
        let t3 = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let jb = jost_basis(&t3, 0.05, 0.05, Side::Right, 4.0).unwrap();
        assert!(unitarity_defect(&jb) < 1e-10);
    }

    #[test]
    fn connectors() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let tr = connector_t_r(&m, &cat, 0.1, 2.0).unwrap();
        assert!(unitarity_defect(&tr.matrix) < 1e-14);
        let tl = connector_t_ell(&m, &cat, 0.1, -2.0).unwrap();
        assert_eq!(tl.matrix[(0, 0)], c(0.0, 0.0));
        let e = C64::from_polar(1.0, -tl.action / 0.1);
        assert!((tl.matrix[(0, 1)] + e).norm() < 1e-14);
        assert!((tl.matrix[(1, 0)] - e.conj()).norm() < 1e-14);
        assert_eq!(phase_diag(0.0, 0.1), identity());
        let lz = PotentialModel::linear_lz(1.0).unwrap();
        let lc = lz.crossings().unwrap();
        assert!(matches!(connector_t_r(&lz, &lc, 0.1, 9.0), Err(Error::TailIntegralVanishes { .. })));
    }
}
