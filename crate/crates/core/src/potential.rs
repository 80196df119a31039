//! The coupling function V(t): builtin families, zeros, actions, turning points.

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::quad;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Highest derivative order inspected when classifying a zero.
pub const MAX_ZERO_ORDER: usize = 12;
const ZERO_DERIV_TOL: f64 = 1e-9;
/// |V - V_tail| below this counts as "at infinity".
pub const TAIL_THRESHOLD: f64 = 1e-14;

fn default_inner() -> f64 {
    6.0
}
fn default_outer() -> f64 {
    8.0
}

/// One factor tanh^p(s (t - b)).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanhFactor {
    pub p: u32,
    pub s: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum Family {
    /// c * prod tanh^p_i(s_i (t - b_i))
    ScaledTanhProduct { c: f64, factors: Vec<TanhFactor> },
    /// Polynomial (ascending coefficients) on |t| <= inner, blended smoothly to
    /// its values at +-outer, constant beyond.
    PolynomialWindowed {
        coeffs: Vec<f64>,
        #[serde(default = "default_inner")]
        inner: f64,
        #[serde(default = "default_outer")]
        outer: f64,
    },
    /// V = v t, windowed like PolynomialWindowed.
    #[serde(rename = "LinearLZ")]
    LinearLz {
        v: f64,
        #[serde(default = "default_inner")]
        inner: f64,
        #[serde(default = "default_outer")]
        outer: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub family: Family,
    pub v_right: f64,
    pub v_left: f64,
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

fn poly_c(c: &[f64], t: C64) -> C64 {
    c.iter().rev().fold(C64::new(0.0, 0.0), |acc, &a| acc * t + a)
}

fn poly_deriv(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(i, a)| i as f64 * a).collect()
}

/// Smooth step 0 -> 1 on [0, 1], flat to all orders at both ends.
fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let f = (-1.0 / x).exp();
        let g = (-1.0 / (1.0 - x)).exp();
        f / (f + g)
    }
}

fn smooth_step_jet(x: &Jet) -> Jet {
    let n = x.order();
    let x0 = x.0[0];
    if x0 <= 0.0 {
        return Jet::constant(0.0, n);
    }
    if x0 >= 1.0 {
        return Jet::constant(1.0, n);
    }
    let f = x.recip().scale(-1.0).exp();
    let one_minus = x.scale(-1.0).shift(1.0);
    let g = one_minus.recip().scale(-1.0).exp();
    f.div(&f.add(&g))
}

impl PotentialModel {
    pub fn new(family: Family) -> Result<Self> {
        let (vr, vl) = match &family {
            Family::ScaledTanhProduct { c, factors } => {
                if factors.is_empty() {
                    return Err(Error::InvalidModel("tanh product needs at least one factor".into()));
                }
                let mut r = *c;
                let mut l = *c;
                for f in factors {
                    if f.p == 0 || f.s == 0.0 || !f.s.is_finite() || !f.b.is_finite() {
                        return Err(Error::InvalidModel(format!("bad tanh factor {f:?}")));
                    }
                    let sg = f.s.signum();
                    r *= sg.powi(f.p as i32);
                    l *= (-sg).powi(f.p as i32);
                }
                (r, l)
            }
            Family::PolynomialWindowed { coeffs, inner, outer } => {
                check_window(*inner, *outer)?;
                if coeffs.is_empty() {
                    return Err(Error::InvalidModel("empty polynomial".into()));
                }
                (poly(coeffs, *outer), poly(coeffs, -*outer))
            }
            Family::LinearLz { v, inner, outer } => {
                check_window(*inner, *outer)?;
                (v * outer, -v * outer)
            }
        };
        if !(vr > 0.0) {
            return Err(Error::InvalidModel(format!("V_r = {vr} must be positive")));
        }
        if vl == 0.0 || !vl.is_finite() {
            return Err(Error::InvalidModel(format!("V_l = {vl} must be nonzero")));
        }
        Ok(Self { family, v_right: vr, v_left: vl })
    }

    /// V(t) = t (optionally scaled), windowed at |t| = 8.
    pub fn linear_lz(v: f64) -> Result<Self> {
        Self::new(Family::LinearLz { v, inner: default_inner(), outer: default_outer() })
    }

    pub fn tanh_product(c: f64, factors: &[(u32, f64, f64)]) -> Result<Self> {
        Self::new(Family::ScaledTanhProduct {
            c,
            factors: factors.iter().map(|&(p, s, b)| TanhFactor { p, s, b }).collect(),
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fam: Family = serde_json::from_str(s)?;
        Self::new(fam)
    }

    pub fn tail(&self, side: Side) -> f64 {
        match side {
            Side::Right => self.v_right,
            Side::Left => self.v_left,
        }
    }

    fn windowed(&self) -> Option<(std::borrow::Cow<'_, [f64]>, f64, f64)> {
        match &self.family {
            Family::PolynomialWindowed { coeffs, inner, outer } => {
                Some((std::borrow::Cow::Borrowed(coeffs.as_slice()), *inner, *outer))
            }
            Family::LinearLz { v, inner, outer } => Some((std::borrow::Cow::Owned(vec![0.0, *v]), *inner, *outer)),
            _ => None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.family {
            Family::ScaledTanhProduct { c, factors } => {
                let mut v = *c;
                for f in factors {
                    v *= (f.s * (t - f.b)).tanh().powi(f.p as i32);
                }
                v
            }
            Family::LinearLz { v, inner, outer } => {
                let a = t.abs();
                if a <= *inner {
                    v * t
                } else {
                    let w = smooth_step((a - inner) / (outer - inner));
                    v * t * (1.0 - w) + v * outer * t.signum() * w
                }
            }
            Family::PolynomialWindowed { coeffs, inner, outer } => {
                let a = t.abs();
                if a <= *inner {
                    poly(coeffs, t)
                } else {
                    let w = smooth_step((a - inner) / (outer - inner));
                    poly(coeffs, t) * (1.0 - w) + poly(coeffs, outer * t.signum()) * w
                }
            }
        }
    }

    /// Taylor jet of V around t to order n.
    pub fn taylor(&self, t: f64, n: usize) -> Jet {
        let x = Jet::variable(t, n);
        match &self.family {
            Family::ScaledTanhProduct { c, factors } => {
                let mut v = Jet::constant(*c, n);
                for f in factors {
                    v = v.mul(&x.shift(-f.b).scale(f.s).tanh().powi(f.p));
                }
                v
            }
            _ => {
                let (coeffs, inner, outer) = self.windowed().unwrap();
                let mut p = Jet::constant(0.0, n);
                for &a in coeffs.iter().rev() {
                    p = p.mul(&x).shift(a);
                }
                if t.abs() <= inner {
                    return p;
                }
                let sg = t.signum();
                let xi = x.scale(sg).shift(-inner).scale(1.0 / (outer - inner));
                let w = smooth_step_jet(&xi);
                let end = poly(&coeffs, outer * sg);
                p.mul(&w.scale(-1.0).shift(1.0)).add(&w.scale(end))
            }
        }
    }

    /// l-th derivative at t.
    pub fn derivative(&self, t: f64, l: usize) -> f64 {
        self.taylor(t, l).derivative(l)
    }

    /// Analytic continuation to complex t; None where the family is not analytic.
    pub fn eval_c(&self, z: C64) -> Option<C64> {
        match &self.family {
            Family::ScaledTanhProduct { c, factors } => {
                let mut v = C64::new(*c, 0.0);
                for f in factors {
                    v *= ((z - f.b) * f.s).tanh().powi(f.p as i32);
                }
                Some(v)
            }
            _ => {
                let (coeffs, inner, _) = self.windowed().unwrap();
                (z.re.abs() <= inner).then(|| poly_c(&coeffs, z))
            }
        }
    }

    pub fn deriv_c(&self, z: C64) -> Option<C64> {
        match &self.family {
            Family::ScaledTanhProduct { c, factors } => {
                let th: Vec<C64> = factors.iter().map(|f| ((z - f.b) * f.s).tanh()).collect();
                let mut total = C64::new(0.0, 0.0);
                for (i, fi) in factors.iter().enumerate() {
                    let mut term = C64::new(*c, 0.0)
                        * fi.s
                        * fi.p as f64
                        * (C64::new(1.0, 0.0) - th[i] * th[i])
                        * th[i].powi(fi.p as i32 - 1);
                    for (j, fj) in factors.iter().enumerate() {
                        if j != i {
                            term *= th[j].powi(fj.p as i32);
                        }
                    }
                    total += term;
                }
                Some(total)
            }
            _ => {
                let (coeffs, inner, _) = self.windowed().unwrap();
                (z.re.abs() <= inner).then(|| poly_c(&poly_deriv(&coeffs), z))
            }
        }
    }

    /// Closed-form antiderivative where the family has one (polynomial interior,
    /// single tanh^p factor with p <= 3).
    pub fn primitive(&self, t: f64) -> Option<f64> {
        match &self.family {
            Family::ScaledTanhProduct { c, factors } if factors.len() == 1 && factors[0].p <= 3 => {
                let f = factors[0];
                let x = f.s * (t - f.b);
                let lncosh = x.abs() + (-2.0 * x.abs()).exp().ln_1p() - std::f64::consts::LN_2;
                let th = x.tanh();
                let g = match f.p {
                    1 => lncosh,
                    2 => x - th,
                    _ => lncosh - 0.5 * th * th,
                };
                Some(c * g / f.s)
            }
            Family::ScaledTanhProduct { .. } => None,
            _ => {
                let (coeffs, inner, _) = self.windowed().unwrap();
                if t.abs() > inner {
                    return None;
                }
                let anti: Vec<f64> = std::iter::once(0.0)
                    .chain(coeffs.iter().enumerate().map(|(i, a)| a / (i + 1) as f64))
                    .collect();
                Some(poly(&anti, t))
            }
        }
    }

    /// Region where V differs from its tail values; beyond it |V - V_tail| < TAIL_THRESHOLD.
    pub fn tail_point(&self, side: Side) -> f64 {
        if let Some((_, _, outer)) = self.windowed() {
            return match side {
                Side::Right => outer,
                Side::Left => -outer,
            };
        }
        let (lo, hi) = self.core_extent();
        let vt = self.tail(side);
        let dir = if side == Side::Right { 1.0 } else { -1.0 };
        let mut t = if side == Side::Right { hi } else { lo };
        let far = |t: f64| (self.eval(t) - vt).abs() < TAIL_THRESHOLD;
        while !(far(t) && far(t + dir * 0.5)) {
            t += dir * 0.5;
        }
        // Bisect back to where the threshold is first met.
        let (mut a, mut b) = (t - dir * 0.5, t);
        if far(a) {
            return a;
        }
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if far(m) {
                b = m;
            } else {
                a = m;
            }
        }
        b
    }

    /// Interval containing all structure of V (zeros and transitions).
    pub fn core_extent(&self) -> (f64, f64) {
        match &self.family {
            Family::ScaledTanhProduct { factors, .. } => {
                let lo = factors.iter().map(|f| f.b).fold(f64::INFINITY, f64::min);
                let hi = factors.iter().map(|f| f.b).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            _ => {
                let (_, _, outer) = self.windowed().unwrap();
                (-outer, outer)
            }
        }
    }

    /// Slowest exponential decay rate of V - V_tail (tanh products only).
    fn decay_rate(&self) -> Option<f64> {
        match &self.family {
            Family::ScaledTanhProduct { factors, .. } => {
                Some(2.0 * factors.iter().map(|f| f.s.abs()).fold(f64::INFINITY, f64::min))
            }
            _ => None,
        }
    }

    /// Search interval that contains every zero.
    pub fn default_search_interval(&self) -> (f64, f64) {
        match &self.family {
            Family::ScaledTanhProduct { factors, .. } => {
                let (lo, hi) = self.core_extent();
                let w = 5.0 / factors.iter().map(|f| f.s.abs()).fold(f64::INFINITY, f64::min);
                (lo - w, hi + w)
            }
            _ => {
                let (_, inner, _) = self.windowed().unwrap();
                (-inner, inner)
            }
        }
    }

    /// int_a^b V.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (lo, hi, sg) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let n = ((hi - lo) / 2.0).ceil().max(1.0) as usize;
        let dt = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x0 = lo + i as f64 * dt;
            let x1 = if i + 1 == n { hi } else { x0 + dt };
            s += quad::adaptive_with(&mut |t| C64::new(self.eval(t), 0.0), x0, x1, 1e-15, 20000)
                .map(|z| z.re)
                .unwrap_or(f64::NAN);
        }
        sg * s
    }

    /// Right: int_t^inf (V - V_r). Left: int_{-inf}^t (V - V_l).
    pub fn tail_integral(&self, side: Side, t: f64) -> f64 {
        let vt = self.tail(side);
        let end = self.tail_point(side);
        let g = |s: f64| self.eval(s) - vt;
        let (a, b) = match side {
            Side::Right => (t, end.max(t)),
            Side::Left => (end.min(t), t),
        };
        let mut s = 0.0;
        if b > a {
            let n = ((b - a) / 1.0).ceil() as usize;
            let dt = (b - a) / n as f64;
            for i in 0..n {
                let x0 = a + i as f64 * dt;
                let x1 = if i + 1 == n { b } else { x0 + dt };
                s += quad::adaptive_real(g, x0, x1, 1e-16).unwrap_or(f64::NAN);
            }
        }
        // Exponential remainder beyond the tail point.
        if let Some(rate) = self.decay_rate() {
            let edge = match side {
                Side::Right => b,
                Side::Left => a,
            };
            s += g(edge) / rate;
        }
        s
    }

    /// R_r = V_r t_r + int_{+inf}^{t_r}(V - V_r), R_l = V_l t_l + int_{-inf}^{t_l}(V - V_l).
    pub fn regularized_action(&self, catalog: &CrossingCatalog, side: Side, anchor: f64) -> Result<f64> {
        if let (Some(first), Some(last)) = (catalog.crossings.first(), catalog.crossings.last()) {
            let bad = match side {
                Side::Right => anchor <= first.t,
                Side::Left => anchor >= last.t,
            };
            if bad {
                return Err(Error::AnchorInsideCrossings { anchor });
            }
        }
        let tail = self.tail_integral(side, anchor);
        Ok(match side {
            Side::Right => self.v_right * anchor - tail,
            Side::Left => self.v_left * anchor + tail,
        })
    }

    /// Zeros of V in [lo, hi] with orders and leading coefficients.
    pub fn find_crossings(&self, lo: f64, hi: f64) -> Result<CrossingCatalog> {
        let mut cands: Vec<f64> = Vec::new();
        match &self.family {
            Family::ScaledTanhProduct { factors, .. } => {
                for f in factors {
                    if f.b > lo && f.b < hi {
                        cands.push(f.b);
                    }
                }
            }
            _ => cands = self.scan_zeros(lo, hi),
        }
        let mut crossings = Vec::new();
        for t in cands {
            let (t, m, v) = self.classify_zero(t)?;
            crossings.push(Crossing { t, m, v });
        }
        crossings.sort_by(|a, b| b.t.partial_cmp(&a.t).unwrap());
        crossings.dedup_by(|a, b| (a.t - b.t).abs() < 1e-7);
        let cat = CrossingCatalog::from_crossings(crossings);
        cat.check_signs(self)?;
        Ok(cat)
    }

    pub fn crossings(&self) -> Result<CrossingCatalog> {
        let (lo, hi) = self.default_search_interval();
        self.find_crossings(lo, hi)
    }

    fn scan_zeros(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = 4000;
        let dt = (hi - lo) / n as f64;
        let ts: Vec<f64> = (0..=n).map(|i| lo + i as f64 * dt).collect();
        let vs: Vec<f64> = ts.iter().map(|&t| self.eval(t)).collect();
        let scale = vs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut out = Vec::new();
        for i in 0..n {
            if vs[i] == 0.0 {
                out.push(ts[i]);
            } else if vs[i] * vs[i + 1] < 0.0 {
                let (mut a, mut b) = (ts[i], ts[i + 1]);
                let fa = vs[i];
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    let fm = self.eval(m);
                    if fm == 0.0 {
                        a = m;
                        b = m;
                        break;
                    }
                    if fm * fa > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            } else if i > 0 && vs[i].abs() < vs[i - 1].abs() && vs[i].abs() <= vs[i + 1].abs() && vs[i].abs() < 1e-3 * scale {
                // Possible even-order zero: minimize |V| via Newton on V'.
                let mut t = ts[i];
                for _ in 0..100 {
                    let j = self.taylor(t, 2);
                    if j.0[2] == 0.0 {
                        break;
                    }
                    let dt = -j.0[1] / (2.0 * j.0[2]);
                    t += dt.clamp(-0.01, 0.01);
                    if dt.abs() < 1e-15 {
                        break;
                    }
                }
                if self.eval(t).abs() < 1e-10 * scale {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Order m, refined location and v = V^(m)(t) of a zero near t.
    fn classify_zero(&self, mut t: f64) -> Result<(f64, usize, f64)> {
        let order_at = |t: f64| -> Option<(usize, f64)> {
            let j = self.taylor(t, MAX_ZERO_ORDER);
            (1..=MAX_ZERO_ORDER)
                .map(|l| (l, j.derivative(l)))
                .find(|(_, d)| d.abs() >= ZERO_DERIV_TOL * d.abs().max(1.0))
        };
        let undetermined = |t: f64| Error::ZeroOrderUndetermined { t, max_order: MAX_ZERO_ORDER };
        let (mut m, _) = order_at(t).ok_or(undetermined(t))?;
        // Newton on V^(m-1), which has a simple zero; repeat until the order settles.
        for _ in 0..6 {
            if self.eval(t) == 0.0 {
                break;
            }
            for _ in 0..80 {
                let j = self.taylor(t, m);
                let dt = -j.derivative(m - 1) / j.derivative(m);
                if !dt.is_finite() {
                    break;
                }
                t += dt;
                if dt.abs() < 1e-15 * t.abs().max(1.0) {
                    break;
                }
            }
            let m_new = order_at(t).ok_or(undetermined(t))?.0;
            if m_new == m {
                break;
            }
            m = m_new;
        }
        let v = self.derivative(t, m);
        Ok((t, m, v))
    }

    /// 2 int_{t_k}^{t_j} |V| for j < k (0-based, t_j > t_k).
    pub fn area_between(&self, catalog: &CrossingCatalog, j: usize, k: usize) -> f64 {
        if j >= k {
            return 0.0;
        }
        2.0 * self.abs_integral(catalog.crossings[k].t, catalog.crossings[j].t)
    }

    /// int_a^b |V| for a < b, split at the zeros of V.
    pub fn abs_integral(&self, a: f64, b: f64) -> f64 {
        let mut cuts = vec![a, b];
        if let Ok(cat) = self.crossings() {
            cuts.extend(cat.crossings.iter().map(|c| c.t).filter(|&t| t > a && t < b));
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.windows(2).map(|w| self.integral(w[0], w[1]).abs()).sum()
    }

    /// Complex turning points and actions for crossing k.
    pub fn turning_points(&self, catalog: &CrossingCatalog, k: usize, eps: f64) -> Result<TurningPoints> {
        let c = catalog.crossings[k];
        let m = c.m;
        let mf = factorial(m);
        let rho = (mf * eps / c.v.abs()).powf(1.0 / m as f64);
        let js = [1usize, m];
        let mut zeta = [C64::new(0.0, 0.0); 2];
        let mut action = [C64::new(0.0, 0.0); 2];
        for (slot, &j) in js.iter().enumerate() {
            let phi = std::f64::consts::PI * (2 * j - 1) as f64 / (2 * m) as f64;
            let seed = C64::new(c.t, 0.0) + C64::from_polar(rho, phi);
            let z = self.newton_turning(k, seed, eps)?;
            if z.im <= 0.0 {
                return Err(Error::TurningPointFailure { k, detail: format!("root {z} not in upper half-plane") });
            }
            zeta[slot] = z;
            action[slot] = self.action(k, c.t, z, eps)?;
        }
        let p = (m as f64 + 1.0) / m as f64;
        let scale = eps.powf(p);
        let a = [action[0].im / scale, action[1].im / scale];
        Ok(TurningPoints { k, eps, m, zeta, action, a, a_k: a[0].min(a[1]) })
    }

    fn newton_turning(&self, k: usize, seed: C64, eps: f64) -> Result<C64> {
        let f = |z: C64| -> Option<C64> { self.eval_c(z).map(|v| v * v + eps * eps) };
        let mut z = seed;
        let mut fz = f(z).ok_or(Error::NewtonDiverged { k, residual: f64::INFINITY })?;
        let tol = 1e-12f64.min(1e-12 * eps * eps).max(1e-300);
        for _ in 0..60 {
            if fz.norm() <= tol {
                return Ok(z);
            }
            let v = self.eval_c(z).unwrap();
            let dv = self.deriv_c(z).ok_or(Error::NewtonDiverged { k, residual: fz.norm() })?;
            let step = fz / (v * dv * 2.0);
            if !step.is_finite() {
                return Err(Error::NewtonDiverged { k, residual: fz.norm() });
            }
            let mut lam = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let zn = z - step * lam;
                if let Some(fnew) = f(zn) {
                    if fnew.norm() < fz.norm() {
                        z = zn;
                        fz = fnew;
                        accepted = true;
                        break;
                    }
                }
                lam *= 0.5;
            }
            if !accepted || (step * lam).norm() <= 1e-16 * z.norm().max(1.0) {
                break;
            }
        }
        if fz.norm() <= tol.max(1e-14 * eps * eps) {
            Ok(z)
        } else {
            Err(Error::NewtonDiverged { k, residual: fz.norm() })
        }
    }

    /// 2 int_{t_k}^{zeta} sqrt(V^2 + eps^2) along the segment, branch = eps at t_k.
    fn action(&self, k: usize, tk: f64, zeta: C64, eps: f64) -> Result<C64> {
        let d = zeta - tk;
        let (x, w) = quad::gauss_legendre(10);
        let panels = 48;
        let mut prev = C64::new(eps, 0.0);
        let mut sum = C64::new(0.0, 0.0);
        // s = 1 - u^2 removes the square-root endpoint singularity at zeta.
        for p in (0..panels).rev() {
            let u0 = p as f64 / panels as f64;
            let u1 = (p + 1) as f64 / panels as f64;
            for i in (0..x.len()).rev() {
                let u = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * x[i];
                let s = 1.0 - u * u;
                let z = d * s + tk;
                let v = self.eval_c(z).ok_or(Error::BranchAmbiguity { k })?;
                let f = v * v + eps * eps;
                if f.norm() < 1e-12 * eps * eps && s < 0.99 {
                    return Err(Error::BranchAmbiguity { k });
                }
                let mut r = f.sqrt();
                if (r - prev).norm() > (r + prev).norm() {
                    r = -r;
                }
                prev = r;
                sum += r * (2.0 * u) * (0.5 * (u1 - u0) * w[i]);
            }
        }
        Ok(sum * d * 2.0)
    }
}

fn check_window(inner: f64, outer: f64) -> Result<()> {
    if !(inner > 0.0 && outer > inner && outer.is_finite()) {
        return Err(Error::InvalidModel(format!("window needs 0 < inner < outer, got {inner}, {outer}")));
    }
    Ok(())
}

pub fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t: f64,
    pub m: usize,
    pub v: f64,
}

/// Zeros ordered t_1 > t_2 > ... (index 0 is the rightmost).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingCatalog {
    pub crossings: Vec<Crossing>,
    pub sigma: Vec<usize>,
    pub m_star: usize,
    pub lambda_star: Vec<usize>,
}

impl CrossingCatalog {
    pub fn from_crossings(crossings: Vec<Crossing>) -> Self {
        let mut sigma = Vec::with_capacity(crossings.len());
        let mut acc = 0;
        for c in &crossings {
            acc += c.m;
            sigma.push(acc);
        }
        let m_star = crossings.iter().map(|c| c.m).max().unwrap_or(0);
        let lambda_star = (0..crossings.len()).filter(|&k| crossings[k].m == m_star).collect();
        Self { crossings, sigma, m_star, lambda_star }
    }

    pub fn len(&self) -> usize {
        self.crossings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.crossings.is_empty()
    }

    pub fn sigma_n(&self) -> usize {
        self.sigma.last().copied().unwrap_or(0)
    }

    /// sigma_{k-1} in 1-based terms, i.e. the order sum strictly right of crossing k.
    pub fn sigma_before(&self, k: usize) -> usize {
        if k == 0 {
            0
        } else {
            self.sigma[k - 1]
        }
    }

    /// Indices whose order equals m.
    pub fn with_order(&self, m: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.crossings[k].m == m).collect()
    }

    fn check_signs(&self, model: &PotentialModel) -> Result<()> {
        let n = self.len();
        let mut probes = Vec::new();
        let right = self.crossings.first().map(|c| c.t + 0.5).unwrap_or(0.0);
        probes.push((right, 0usize));
        for k in 0..n.saturating_sub(1) {
            let mid = 0.5 * (self.crossings[k].t + self.crossings[k + 1].t);
            probes.push((mid, self.sigma[k]));
        }
        if n > 0 {
            probes.push((self.crossings[n - 1].t - 0.5, self.sigma[n - 1]));
        }
        for (t, s) in probes {
            let v = model.eval(t);
            let sg = if s % 2 == 0 { 1.0 } else { -1.0 };
            if !(sg * v > 0.0) {
                return Err(Error::BracketingFailed(format!("V({t}) = {v} has the wrong sign for sigma = {s}")));
            }
        }
        let sg = if self.sigma_n() % 2 == 0 { 1.0 } else { -1.0 };
        if !(sg * model.v_left > 0.0) {
            return Err(Error::BracketingFailed("sign of V_l inconsistent with the zero orders".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    pub k: usize,
    pub eps: f64,
    pub m: usize,
    /// zeta_{k,1} and zeta_{k,m}
    pub zeta: [C64; 2],
    pub action: [C64; 2],
    /// Im A / eps^{(m+1)/m} for both roots.
    pub a: [f64; 2],
    pub a_k: f64,
}

/// Limit of Im A / eps^{(m+1)/m} for V = v (t - t_k)^m / m!.
pub fn decay_constant_monomial(m: usize, v: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let mf = m as f64;
    let b = gamma(1.0 + 0.5 / mf) * gamma(1.5) / gamma(1.5 + 0.5 / mf);
    2.0 * (factorial(m) / v.abs()).powf(1.0 / mf) * (std::f64::consts::PI / (2.0 * mf)).sin() * b
}

/// Per-crossing regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    NonAdiabatic,
    Adiabatic,
}

/// V with its sign flipped between odd-order adiabatic crossings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivePotential {
    /// Open intervals (lo, hi) where the sign is flipped; lo may be -inf.
    pub flips: Vec<(f64, f64)>,
    /// Indices k(1) < ... < k(N) of odd-order adiabatic crossings.
    pub odd_adiabatic: Vec<usize>,
}

impl EffectivePotential {
    pub fn new(catalog: &CrossingCatalog, regimes: &[Regime]) -> Self {
        let odd: Vec<usize> = (0..catalog.len())
            .filter(|&k| regimes[k] == Regime::Adiabatic && catalog.crossings[k].m % 2 == 1)
            .collect();
        let mut flips = Vec::new();
        for pair in odd.chunks(2) {
            let hi = catalog.crossings[pair[0]].t;
            let lo = if pair.len() == 2 { catalog.crossings[pair[1]].t } else { f64::NEG_INFINITY };
            flips.push((lo, hi));
        }
        Self { flips, odd_adiabatic: odd }
    }

    pub fn n(&self) -> usize {
        self.odd_adiabatic.len()
    }

    pub fn sign(&self, t: f64) -> f64 {
        if self.flips.iter().any(|&(lo, hi)| t > lo && t < hi) {
            -1.0
        } else {
            1.0
        }
    }

    pub fn eval(&self, model: &PotentialModel, t: f64) -> f64 {
        self.sign(t) * model.eval(t)
    }

    /// int_a^b of the effective potential, a < b, split at flip boundaries.
    pub fn integral(&self, model: &PotentialModel, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.integral(model, b, a);
        }
        let mut cuts = vec![a, b];
        for &(lo, hi) in &self.flips {
            for x in [lo, hi] {
                if x > a && x < b {
                    cuts.push(x);
                }
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.windows(2)
            .map(|w| self.sign(0.5 * (w[0] + w[1])) * model.integral(w[0], w[1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh3() -> PotentialModel {
        PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap()
    }

    fn pair() -> PotentialModel {
        PotentialModel::tanh_product(1.0, &[(3, 1.0, 2.0), (3, 1.0, -2.0)]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let lz = PotentialModel::linear_lz(1.0).unwrap();
        assert_eq!(lz.eval(0.5), 0.5);
        assert_eq!(tanh3().eval(0.0), 0.0);
        assert!((tanh3().eval(40.0) - 1.0).abs() < 1e-15);
        assert_eq!(tanh3().v_right, 1.0);
        assert_eq!(tanh3().v_left, -1.0);
        assert_eq!(lz.v_right, 8.0);
        assert_eq!(lz.eval(9.0), 8.0);
        assert_eq!(lz.eval(-9.0), -8.0);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(PotentialModel::tanh_product(-1.0, &[(3, 1.0, 0.0)]).is_err());
        assert!(PotentialModel::tanh_product(1.0, &[(2, 1.0, 0.0), (1, -1.0, 0.0)]).is_err());
        assert!(PotentialModel::linear_lz(-1.0).is_err());
        assert!(PotentialModel::from_json(r#"{"family":"LinearLZ","params":{"v":1.0,"inner":3.0,"outer":2.0}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = PotentialModel::from_json(
            r#"{"family":"ScaledTanhProduct","params":{"c":1.0,"factors":[{"p":3,"s":1.0,"b":2.0},{"p":3,"s":1.0,"b":-2.0}]}}"#,
        )
        .unwrap();
        assert_eq!(m, pair());
        let lz = PotentialModel::from_json(r#"{"family":"LinearLZ","params":{"v":1.0}}"#).unwrap();
        assert_eq!(lz, PotentialModel::linear_lz(1.0).unwrap());
    }

    #[test]
    fn crossings_of_tanh3() {
        let cat = tanh3().crossings().unwrap();
        assert_eq!(cat.len(), 1);
        let c = cat.crossings[0];
        assert_eq!((c.t, c.m), (0.0, 3));
        assert!((c.v - 6.0).abs() < 1e-12);
        let lz = PotentialModel::linear_lz(1.0).unwrap().crossings().unwrap();
        assert_eq!(lz.crossings[0].m, 1);
        assert!(lz.crossings[0].t.abs() < 1e-15);
        assert!((lz.crossings[0].v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn crossings_of_tanh3_pair() {
        let m = pair();
        let cat = m.crossings().unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.sigma, vec![3, 6]);
        assert_eq!(cat.crossings[0].t, 2.0);
        assert_eq!(cat.crossings[1].t, -2.0);
        // Oracle: seven-point central difference of V'' at the zero.
        for c in &cat.crossings {
            let d = 1e-2;
            let f = |x: f64| m.eval(c.t + x);
            let fd = (-f(3.0 * d) + 8.0 * f(2.0 * d) - 13.0 * f(d) + 13.0 * f(-d) - 8.0 * f(-2.0 * d) + f(-3.0 * d))
                / (8.0 * d * d * d);
            assert!((fd - c.v).abs() < 1e-3 * c.v.abs(), "{fd} vs {}", c.v);
        }
        let expect = 6.0 * 4f64.tanh().powi(3);
        assert!((cat.crossings[0].v - expect).abs() < 1e-12);
        assert!((cat.crossings[1].v + expect).abs() < 1e-12);
    }

    #[test]
    fn polynomial_zeros_with_multiplicity() {
        // (t - 1)^2 (t + 1)^3 has an even zero at 1 and an odd one at -1.
        let coeffs = vec![1.0, 1.0, -2.0, -2.0, 1.0, 1.0];
        let m = PotentialModel::new(Family::PolynomialWindowed { coeffs, inner: 2.0, outer: 3.0 }).unwrap();
        let cat = m.crossings().unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.crossings[0].m, 2);
        assert_eq!(cat.crossings[1].m, 3);
        assert!((cat.crossings[0].t - 1.0).abs() < 1e-6);
        assert!((cat.crossings[1].t + 1.0).abs() < 1e-6);
        // V''(1) = 2 * 8 = 16
        assert!((cat.crossings[0].v - 16.0).abs() < 1e-5);
    }

    #[test]
    fn area_examples() {
        let m = pair();
        let cat = m.crossings().unwrap();
        assert_eq!(m.area_between(&cat, 1, 1), 0.0);
        let a = m.area_between(&cat, 0, 1);
        // Independent oracle: composite Simpson on a fine grid.
        let n = 200_000;
        let dt = 4.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * m.eval(-2.0 + i as f64 * dt).abs();
        }
        let simpson = 2.0 * s * dt / 3.0;
        assert!((a - simpson).abs() < 1e-10, "{a} vs {simpson}");
        // LZ: 2 int_{-1}^{1} |t| dt = 2
        let lz = PotentialModel::linear_lz(1.0).unwrap();
        let syn = CrossingCatalog::from_crossings(vec![
            Crossing { t: 1.0, m: 1, v: 1.0 },
            Crossing { t: -1.0, m: 1, v: 1.0 },
        ]);
        assert!((lz.area_between(&syn, 0, 1) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn regularized_action_examples() {
        let m = tanh3();
        let cat = m.crossings().unwrap();
        let r = m.regularized_action(&cat, Side::Right, 5.0).unwrap();
        // int (tanh^3 - 1) = ln cosh - tanh^2/2 - t; tail from 5 to inf
        let anti = |t: f64| t.cosh().ln() - 0.5 * t.tanh().powi(2) - t;
        let at_inf = -std::f64::consts::LN_2 - 0.5;
        let expect = 5.0 - (at_inf - anti(5.0));
        assert!((r - expect).abs() < 1e-12, "{r} vs {expect}");
        assert!(matches!(
            m.regularized_action(&cat, Side::Right, -1.0),
            Err(Error::AnchorInsideCrossings { .. })
        ));
        let lz = PotentialModel::linear_lz(1.0).unwrap();
        let lc = lz.crossings().unwrap();
        assert_eq!(lz.regularized_action(&lc, Side::Right, 9.0).unwrap(), 72.0);
        // Even potential: R_l(-t) = -R_r(t).
        let even = PotentialModel::tanh_product(1.0, &[(2, 1.0, 0.0)]).unwrap();
        let ec = even.crossings().unwrap();
        let rr = even.regularized_action(&ec, Side::Right, 3.0).unwrap();
        let rl = even.regularized_action(&ec, Side::Left, -3.0).unwrap();
        assert!((rr + rl).abs() < 1e-12);
    }

    #[test]
    fn lz_turning_points() {
        let m = PotentialModel::linear_lz(1.0).unwrap();
        let cat = m.crossings().unwrap();
        let eps = 0.1;
        let tp = m.turning_points(&cat, 0, eps).unwrap();
        assert!((tp.zeta[0] - C64::new(0.0, eps)).norm() < 1e-12);
        assert!((tp.action[0].im - std::f64::consts::PI * eps * eps / 2.0).abs() < 1e-12);
        assert!((tp.a_k - std::f64::consts::PI / 2.0).abs() < 1e-10);
    }

    #[test]
    fn tanh3_turning_points_scale() {
        let m = tanh3();
        let cat = m.crossings().unwrap();
        let t1 = m.turning_points(&cat, 0, 1e-3).unwrap();
        let t2 = m.turning_points(&cat, 0, 5e-4).unwrap();
        for tp in [&t1, &t2] {
            assert!(tp.zeta.iter().all(|z| z.im > 0.0));
            for z in tp.zeta {
                let v = m.eval_c(z).unwrap();
                assert!((v * v + tp.eps * tp.eps).norm() < 1e-12);
            }
        }
        // Im A ~ eps^{4/3}
        let p = (t1.action[0].im / t2.action[0].im).ln() / 2f64.ln();
        assert!((p - 4.0 / 3.0).abs() < 0.01, "exponent {p}");
        let a = decay_constant_monomial(3, 6.0);
        assert!((t2.a_k - a).abs() < 0.02 * a, "{} vs {a}", t2.a_k);
        // Roots sit near the asymptotic rays pi/6 and 5 pi/6.
        assert!((t2.zeta[0].arg() - std::f64::consts::PI / 6.0).abs() < 0.02);
        assert!((t2.zeta[1].arg() - 5.0 * std::f64::consts::PI / 6.0).abs() < 0.02);
    }

    #[test]
    fn effective_potential_masks() {
        let cat = CrossingCatalog::from_crossings(
            (0..4).map(|k| Crossing { t: 3.0 - 2.0 * k as f64, m: 2 * k + 1, v: 1.0 }).collect(),
        );
        use Regime::*;
        let none = EffectivePotential::new(&cat, &[NonAdiabatic; 4]);
        assert!(none.flips.is_empty());
        let one = EffectivePotential::new(&cat, &[NonAdiabatic, Adiabatic, NonAdiabatic, NonAdiabatic]);
        assert_eq!(one.flips, vec![(f64::NEG_INFINITY, 1.0)]);
        let two = EffectivePotential::new(&cat, &[NonAdiabatic, Adiabatic, Adiabatic, Adiabatic]);
        assert_eq!(two.flips, vec![(-1.0, 1.0), (f64::NEG_INFINITY, -3.0)]);
        assert_eq!(two.sign(0.0), -1.0);
        assert_eq!(two.sign(-2.0), 1.0);
        assert_eq!(two.sign(-4.0), -1.0);
    }
}
