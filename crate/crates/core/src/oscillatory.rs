//! Oscillatory integrals with a degenerate stationary point.

use crate::error::{Error, Result};
use crate::potential::PotentialModel;
use crate::quad::{gauss_legendre, gk15};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaM {
    pub m: usize,
    pub v: f64,
    pub value: C64,
}

/// omega_m = 2 ((m+1)!/(2|v|))^{1/(m+1)} Gamma((m+2)/(m+1)) eta_m.
pub fn omega_m(m: usize, v: f64) -> C64 {
    assert!(m >= 1 && v != 0.0, "omega_m needs m >= 1 and v != 0");
    let mp = (m + 1) as f64;
    let fact: f64 = (1..=m + 1).map(|k| k as f64).product();
    let modulus = 2.0 * (fact / (2.0 * v.abs())).powf(1.0 / mp) * gamma((mp + 1.0) / mp);
    let half = PI / (2.0 * mp);
    if m % 2 == 0 {
        C64::new(modulus * half.cos(), 0.0)
    } else {
        C64::from_polar(modulus, v.signum() * half)
    }
}

pub fn omega(m: usize, v: f64) -> OmegaM {
    OmegaM { m, v, value: omega_m(m, v) }
}

/// f(t0) omega_m h^{1/(m+1)}.
pub fn stationary_phase_leading(f_at_t0: C64, m: usize, v: f64, h: f64) -> C64 {
    if f_at_t0 == C64::new(0.0, 0.0) {
        return f_at_t0;
    }
    f_at_t0 * omega_m(m, v) * h.powf(1.0 / (m + 1) as f64)
}

/// Phi(t) = int_{t0}^t V, tabulated at knots and refined inside panels.
pub struct PhaseTable<'a> {
    model: &'a PotentialModel,
    t0: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
    closed: Option<f64>,
    gl: (Vec<f64>, Vec<f64>),
}

impl<'a> PhaseTable<'a> {
    /// `knots` must be ascending and cover every point later passed to `phi`.
    pub fn new(model: &'a PotentialModel, t0: f64, knots: &[f64]) -> Self {
        let gl = gauss_legendre(10);
        let lo = knots.first().copied().unwrap_or(t0).min(t0);
        let hi = knots.last().copied().unwrap_or(t0).max(t0);
        let closed = match (model.primitive(lo), model.primitive(hi), model.primitive(t0)) {
            (Some(_), Some(_), Some(p0)) => Some(p0),
            _ => None,
        };
        let mut table = Self { model, t0, knots: Vec::new(), values: Vec::new(), closed, gl };
        if closed.is_some() {
            table.knots = knots.to_vec();
            return table;
        }
        let mut ks: Vec<f64> = knots.to_vec();
        ks.push(t0);
        ks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ks.dedup();
        let i0 = ks.iter().position(|&x| x == t0).unwrap();
        let mut vals = vec![0.0; ks.len()];
        // Compensated running sums outward from t0.
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for i in i0 + 1..ks.len() {
            let y = table.segment(ks[i - 1], ks[i]) - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
            vals[i] = s;
        }
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for i in (0..i0).rev() {
            let y = -table.segment(ks[i], ks[i + 1]) - c;
            let t = s + y;
            c = (t - s) - y;
            s = t;
            vals[i] = s;
        }
        table.knots = ks;
        table.values = vals;
        table
    }

    fn segment(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let (x, w) = &self.gl;
        let c = 0.5 * (a + b);
        let r = 0.5 * (b - a);
        let mut s = 0.0;
        for i in 0..x.len() {
            s += w[i] * self.model.eval(c + r * x[i]);
        }
        s * r
    }

    pub fn phi(&self, t: f64) -> f64 {
        if let Some(p0) = self.closed {
            return self.model.primitive(t).unwrap() - p0;
        }
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        // Use the nearer neighbouring knot.
        let j = if i == 0 {
            0
        } else if i >= self.knots.len() {
            self.knots.len() - 1
        } else if t - self.knots[i - 1] <= self.knots[i] - t {
            i - 1
        } else {
            i
        };
        self.values[j] + self.segment(self.knots[j], t)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }
}

/// Breakpoints on [a, b] whose spacing never exceeds `max_len(t)`.
pub fn panel_knots<F: Fn(f64) -> f64>(a: f64, b: f64, max_len: F) -> Vec<f64> {
    let mut ks = vec![a];
    let mut t = a;
    while t < b {
        let l1 = max_len(t);
        let l = l1.min(max_len((t + 0.5 * l1).min(b))).max((b - a) * 1e-12);
        t = (t + l).min(b);
        if b - t < 1e-3 * l {
            t = b;
        }
        ks.push(t);
    }
    ks
}

/// Sum of G7/K15 panels over the knots, bisecting panels that miss `tol`.
pub fn integrate_on_knots<F: FnMut(f64) -> C64>(knots: &[f64], mut f: F, tol: f64) -> Result<C64> {
    let mut sum = C64::new(0.0, 0.0);
    let mut comp = C64::new(0.0, 0.0);
    let mut worst = 0.0f64;
    for w in knots.windows(2) {
        let v = panel(&mut f, w[0], w[1], tol, 0, &mut worst);
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    if worst > tol * 10.0 {
        return Err(Error::QuadratureTolExceeded { estimate: worst, tol });
    }
    Ok(sum)
}

fn panel<F: FnMut(f64) -> C64>(f: &mut F, a: f64, b: f64, tol: f64, depth: usize, worst: &mut f64) -> C64 {
    let (v, e) = gk15(f, a, b);
    if e <= tol || depth >= 12 {
        if e > tol {
            *worst = worst.max(e);
        }
        return v;
    }
    let m = 0.5 * (a + b);
    panel(f, a, m, tol, depth + 1, worst) + panel(f, m, b, tol, depth + 1, worst)
}

/// Exponent sign in exp(+-(2i/h) Phi).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseSign {
    Plus,
    Minus,
}

impl PhaseSign {
    pub fn value(self) -> f64 {
        match self {
            PhaseSign::Plus => 1.0,
            PhaseSign::Minus => -1.0,
        }
    }
}

/// Knots on [a, b] for the phase (2/h) int V: about 1/8 rad per panel, with a
/// floor h^{1/(m+1)}/8 that keeps the stationary ball from being over-refined.
pub fn phase_knots(model: &PotentialModel, a: f64, b: f64, t0: f64, h: f64, m: usize) -> Vec<f64> {
    let ball = h.powf(1.0 / (m + 1) as f64);
    let cap = ((b - a) / 4.0).min(0.25);
    let floor = (ball / 8.0).min(cap);
    panel_knots(a, b, |t| {
        let rate = 2.0 * model.eval(t).abs();
        let l = (h / (8.0 * rate)).min(cap);
        if (t - t0).abs() < 2.0 * ball {
            l.max(floor)
        } else {
            l
        }
    })
}

/// int_a^b f(t) exp(+-(2i/h) int_{t0}^t V) dt.
pub fn osc_integral<F: FnMut(f64) -> C64>(
    model: &PotentialModel,
    interval: (f64, f64),
    t0: f64,
    h: f64,
    mut f: F,
    sign: PhaseSign,
) -> Result<C64> {
    let (a, b) = interval;
    if a == b {
        return Ok(C64::new(0.0, 0.0));
    }
    let m = model
        .crossings()
        .ok()
        .and_then(|c| c.crossings.iter().find(|x| (x.t - t0).abs() < 1e-9).map(|x| x.m))
        .unwrap_or(1);
    let knots = phase_knots(model, a.min(b), a.max(b), t0, h, m);
    let table = PhaseTable::new(model, t0, &knots);
    let s = sign.value() * 2.0 / h;
    let val = integrate_on_knots(
        &knots,
        |t| {
            let fv = f(t);
            if fv == C64::new(0.0, 0.0) {
                fv
            } else {
                fv * C64::from_polar(1.0, s * table.phi(t))
            }
        },
        1e-12,
    )?;
    Ok(if a < b { val } else { -val })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Family;

    fn monomial(m: usize, v: f64) -> PotentialModel {
        let mut coeffs = vec![0.0; m + 1];
        coeffs[m] = v / crate::potential::factorial(m);
        PotentialModel::new(Family::PolynomialWindowed { coeffs, inner: 10.0, outer: 11.0 }).unwrap()
    }

    #[test]
    fn omega_examples() {
        let w = omega_m(1, 1.0);
        assert!((w.norm() - PI.sqrt()).abs() < 1e-14);
        assert!((w.arg() - PI / 4.0).abs() < 1e-14);
        let w2 = omega_m(2, 2.0);
        let expect = 2.0 * 1.5f64.powf(1.0 / 3.0) * 0.892_979_511_569_249_2 * (PI / 6.0).cos();
        assert!((w2.re - expect).abs() < 1e-12 && w2.im == 0.0);
        assert!((w2.re - 1.770_513_360_349_543_5).abs() < 1e-12);
        assert!((omega_m(1, -1.0) - w.conj()).norm() < 1e-15);
        assert!((omega_m(3, -6.0) - omega_m(3, 6.0).conj()).norm() < 1e-15);
    }

    #[test]
    fn leading_term_examples() {
        let l = stationary_phase_leading(C64::new(1.0, 0.0), 1, 1.0, 0.01);
        assert!((l.norm() - (0.01 * PI).sqrt()).abs() < 1e-14);
        assert!((l.norm() - 0.17725).abs() < 1e-5);
        assert_eq!(stationary_phase_leading(C64::new(0.0, 0.0), 3, 6.0, 1e-4), C64::new(0.0, 0.0));
    }

    #[test]
    fn gaussian_regulated_fresnel() {
        // int exp(i t^2/h - d t^2) dt = sqrt(pi/(d - i/h))
        let model = monomial(1, 1.0);
        let h = 0.02;
        let d = 1.0;
        let got = osc_integral(&model, (-6.5, 6.5), 0.0, h, |t| C64::new((-d * t * t).exp(), 0.0), PhaseSign::Plus)
            .unwrap();
        let exact = (C64::new(PI, 0.0) / C64::new(d, -1.0 / h)).sqrt();
        assert!((got - exact).norm() < 1e-11, "{got} vs {exact}");
    }

    #[test]
    fn zero_amplitude_and_conjugation() {
        let model = monomial(2, 2.0);
        let z = osc_integral(&model, (-1.0, 1.0), 0.0, 0.05, |_| C64::new(0.0, 0.0), PhaseSign::Plus).unwrap();
        assert_eq!(z, C64::new(0.0, 0.0));
        let f = |t: f64| C64::new((t * 0.7).cos() + t, 0.0);
        let p = osc_integral(&model, (-1.0, 1.5), 0.0, 0.05, f, PhaseSign::Plus).unwrap();
        let m = osc_integral(&model, (-1.0, 1.5), 0.0, 0.05, f, PhaseSign::Minus).unwrap();
        assert!((p - m.conj()).norm() < 1e-13);
    }

    #[test]
    fn phase_table_matches_closed_form() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 2.0), (3, 1.0, -2.0)]).unwrap();
        let knots: Vec<f64> = (0..=80).map(|i| -4.0 + 0.1 * i as f64).collect();
        let table = PhaseTable::new(&m, 2.0, &knots);
        for t in [-3.95, -2.0, 0.013, 1.7, 3.99] {
            let direct = m.integral(2.0, t);
            assert!((table.phi(t) - direct).abs() < 1e-13, "{t}");
        }
        let single = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let t2 = PhaseTable::new(&single, 0.0, &knots);
        assert!((t2.phi(3.0) - single.integral(0.0, 3.0)).abs() < 1e-13);
    }
}
