//! Closed-form predictions for P(eps, h).

use crate::error::{Error, Result};
use crate::linalg::c;
use crate::oscillatory::omega_m;
use crate::potential::{factorial, CrossingCatalog, EffectivePotential, PotentialModel, Regime};
use crate::transfer::{adiabatic_factor, mu, Su2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

/// Phase offset between opposite-sign odd crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThetaConvention {
    /// sgn(v_j) pi/(m+1)
    #[default]
    Full,
    /// sgn(v_j) pi/(2(m+1))
    Half,
}

pub fn gamma_star(m: usize) -> f64 {
    let mf = m as f64;
    let even = if m % 2 == 0 { 1.0 } else { 0.0 };
    4.0 * (factorial(m + 1) / 2.0).powf(2.0 / (mf + 1.0))
        * gamma((mf + 2.0) / (mf + 1.0)).powi(2)
        * (1.0 - even * (PI / (2.0 * (mf + 1.0))).sin().powi(2))
}

pub fn theta_jk(m: usize, vj: f64, vk: f64, conv: ThetaConvention) -> f64 {
    if m % 2 == 1 && vj.signum() == -vk.signum() {
        let base = PI / (m as f64 + 1.0);
        vj.signum() * if conv == ThetaConvention::Full { base } else { base / 2.0 }
    } else {
        0.0
    }
}

/// Sum over Lambda_* of |v_j|^{-2/(m+1)} plus the cosine cross terms.
pub fn delta_star(model: &PotentialModel, cat: &CrossingCatalog, h: f64, conv: ThetaConvention) -> f64 {
    let m = cat.m_star;
    let q = 1.0 / (m as f64 + 1.0);
    let ls = &cat.lambda_star;
    let mut d = 0.0;
    for (a, &jj) in ls.iter().enumerate() {
        let vj = cat.crossings[jj].v;
        d += vj.abs().powf(-2.0 * q);
        for &kk in &ls[a + 1..] {
            let vk = cat.crossings[kk].v;
            let phase = 2.0 / h * model.integral(cat.crossings[kk].t, cat.crossings[jj].t) + theta_jk(m, vj, vk, conv);
            d += 2.0 * (vj * vk).abs().powf(-q) * phase.cos();
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonadiabaticPrediction {
    pub parity_odd: bool,
    pub mu_star: f64,
    pub gamma_star: f64,
    pub delta_star: f64,
    pub c_star: f64,
    pub p_pred: f64,
    /// mu^2 (mu + h^{1/(m(m+1))})
    pub error_order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorOptions {
    pub theta: ThetaConvention,
    pub mu_threshold: f64,
    /// Permit m_* = 1 for consistency checks against Landau-Zener.
    pub allow_m1: bool,
}

impl Default for PredictorOptions {
    fn default() -> Self {
        Self { theta: ThetaConvention::Full, mu_threshold: 0.1, allow_m1: false }
    }
}

pub fn nonadiabatic_p(model: &PotentialModel, cat: &CrossingCatalog, eps: f64, h: f64, opts: &PredictorOptions) -> Result<NonadiabaticPrediction> {
    if cat.is_empty() {
        return Err(Error::InvalidModel("no crossings".into()));
    }
    let m = cat.m_star;
    if m < 2 && !opts.allow_m1 {
        return Err(Error::MStarTooSmall);
    }
    let mu_star = mu(m, eps, h);
    if mu_star > opts.mu_threshold {
        return Err(Error::RegimeViolation { k: cat.lambda_star[0], mu: mu_star, detail: "mu_* above threshold".into() });
    }
    let g = gamma_star(m);
    let d = delta_star(model, cat, h, opts.theta);
    let cs = g * d;
    let parity_odd = cat.sigma_n() % 2 == 1;
    let lead = cs * mu_star * mu_star;
    let mf = m as f64;
    Ok(NonadiabaticPrediction {
        parity_odd,
        mu_star,
        gamma_star: g,
        delta_star: d,
        c_star: cs,
        p_pred: if parity_odd { 1.0 - lead } else { lead },
        error_order: mu_star * mu_star * (mu_star + h.powf(1.0 / (mf * (mf + 1.0)))),
    })
}

/// Local minimum (or zero) of delta_* in h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceZero {
    pub h: f64,
    pub delta: f64,
    /// delta_* vanishes here, not just a local minimum.
    pub exact: bool,
}

/// Points in [h_lo, h_hi] where delta_* vanishes. Two crossings use the
/// quantization ladder; more use refined minima of delta_* on a 1/h grid.
pub fn interference_zeros(
    model: &PotentialModel,
    cat: &CrossingCatalog,
    h_lo: f64,
    h_hi: f64,
    conv: ThetaConvention,
) -> Vec<InterferenceZero> {
    let ls = &cat.lambda_star;
    let m = cat.m_star;
    if ls.len() < 2 {
        return vec![];
    }
    if ls.len() == 2 {
        let (a, b) = (&cat.crossings[ls[0]], &cat.crossings[ls[1]]);
        if (a.v.abs() - b.v.abs()).abs() > 1e-9 * a.v.abs() {
            return vec![];
        }
        // (2/h) I + theta = pi (2k + 1)
        let integral = model.integral(b.t, a.t);
        let th = theta_jk(m, a.v, b.v, conv);
        let mut out = vec![];
        let (x_lo, x_hi) = (1.0 / h_hi, 1.0 / h_lo);
        let kmin = ((2.0 * integral * x_lo.min(x_hi) + th) / PI - 1.0).min((2.0 * integral * x_hi + th) / PI - 1.0) / 2.0;
        let kmax = ((2.0 * integral * x_lo + th) / PI - 1.0).max((2.0 * integral * x_hi + th) / PI - 1.0) / 2.0;
        for k in (kmin.floor() as i64)..=(kmax.ceil() as i64) {
            let denom = PI * (2 * k + 1) as f64 - th;
            let h = 2.0 * integral / denom;
            if h >= h_lo && h <= h_hi && h > 0.0 {
                out.push(InterferenceZero { h, delta: delta_star(model, cat, h, conv), exact: true });
            }
        }
        out.sort_by(|p, q| p.h.partial_cmp(&q.h).unwrap());
        return out;
    }
    // Numerical minima in x = 1/h, sampled finer than the fastest cross frequency.
    let mut fmax = 0.0f64;
    for (i, &jj) in ls.iter().enumerate() {
        for &kk in &ls[i + 1..] {
            fmax = fmax.max(2.0 * model.integral(cat.crossings[kk].t, cat.crossings[jj].t).abs());
        }
    }
    let (x_lo, x_hi) = (1.0 / h_hi, 1.0 / h_lo);
    let n = (((x_hi - x_lo) * fmax / (2.0 * PI)) * 64.0).ceil().max(256.0) as usize;
    let f = |x: f64| delta_star(model, cat, 1.0 / x, conv);
    let xs: Vec<f64> = (0..=n).map(|i| x_lo + (x_hi - x_lo) * i as f64 / n as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let scale: f64 = ls.iter().map(|&k| cat.crossings[k].v.abs().powf(-2.0 / (m as f64 + 1.0))).sum();
    let mut out = vec![];
    for i in 1..n {
        if ys[i] <= ys[i - 1] && ys[i] < ys[i + 1] {
            let x = golden_min(&f, xs[i - 1], xs[i + 1]);
            let d = f(x);
            out.push(InterferenceZero { h: 1.0 / x, delta: d, exact: d < 1e-6 * scale });
        }
    }
    out.sort_by(|p, q| p.h.partial_cmp(&q.h).unwrap());
    out
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// DFT magnitudes of delta_* sampled uniformly in 1/h. Returns (angular frequency, |amplitude|).
pub fn delta_spectrum(model: &PotentialModel, cat: &CrossingCatalog, x_lo: f64, x_hi: f64, n: usize, conv: ThetaConvention) -> Vec<(f64, f64)> {
    let dx = (x_hi - x_lo) / n as f64;
    let ys: Vec<f64> = (0..n).map(|i| delta_star(model, cat, 1.0 / (x_lo + dx * i as f64), conv)).collect();
    // Hann window keeps leakage from masking neighbouring peaks.
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..n / 2)
        .map(|k| {
            let mut s = c(0.0, 0.0);
            for i in 0..n {
                s += C64::from_polar(ys[i] * w[i], -2.0 * PI * (k * i) as f64 / n as f64);
            }
            (2.0 * PI * k as f64 / (n as f64 * dx), s.norm() / n as f64)
        })
        .collect()
}

/// Local maxima of a spectrum above `rel` times the largest non-DC peak.
pub fn spectral_peaks(spec: &[(f64, f64)], rel: f64) -> Vec<f64> {
    let top = spec.iter().skip(3).map(|p| p.1).fold(0.0f64, f64::max);
    (3..spec.len().saturating_sub(1))
        .filter(|&i| spec[i].1 > spec[i - 1].1 && spec[i].1 >= spec[i + 1].1 && spec[i].1 > rel * top)
        .map(|i| spec[i].0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedPrediction {
    pub n_odd_adiabatic: usize,
    pub parity_odd: bool,
    pub m_flat: Option<usize>,
    pub m_sharp: Option<usize>,
    pub mu_flat: f64,
    pub mu_sharp: f64,
    pub flat_flat: f64,
    pub sharp_diag: f64,
    pub flat_sharp: f64,
    pub sharp_sharp: f64,
    pub leading: f64,
    pub p_pred: f64,
    pub eps1: f64,
    pub eps2: f64,
}

/// Leading term of P in a mixed regime, from the Q-conjugated factors and the
/// effective-potential phases.
pub fn mixed_leading(model: &PotentialModel, cat: &CrossingCatalog, eps: f64, h: f64, regimes: &[Regime]) -> Result<MixedPrediction> {
    let n = cat.len();
    if regimes.len() != n {
        return Err(Error::Config("one regime per crossing required".into()));
    }
    let flat: Vec<usize> = (0..n).filter(|&k| regimes[k] == Regime::NonAdiabatic).collect();
    let sharp: Vec<usize> = (0..n).filter(|&k| regimes[k] == Regime::Adiabatic).collect();
    let m_flat = flat.iter().map(|&k| cat.crossings[k].m).max();
    let m_sharp = sharp.iter().map(|&k| cat.crossings[k].m).min();
    let eff = EffectivePotential::new(cat, regimes);
    // Tilde coefficients, one per crossing.
    let mut alpha = vec![c(1.0, 0.0); n];
    let mut beta = vec![c(0.0, 0.0); n];
    let mut flipped = false;
    let mut a_min = f64::INFINITY;
    for k in 0..n {
        let x = &cat.crossings[k];
        let su2 = match regimes[k] {
            Regime::NonAdiabatic => Su2::new(c(1.0, 0.0), c(0.0, -mu(x.m, eps, h)) * omega_m(x.m, x.v).conj()),
            Regime::Adiabatic => {
                let f = adiabatic_factor(model, cat, k, eps, h)?;
                if f.iq {
                    flipped = !flipped;
                }
                if Some(x.m) == m_sharp {
                    a_min = a_min.min(model.turning_points(cat, k, eps)?.a_k);
                }
                f.su2
            }
        };
        let t = if flipped { su2.q_conj() } else { su2 };
        alpha[k] = t.a;
        beta[k] = t.b;
    }
    let nu: Vec<C64> = (0..n)
        .map(|k| if k + 1 < n { C64::from_polar(1.0, -eff.integral(model, cat.crossings[k + 1].t, cat.crossings[k].t) / h) } else { c(1.0, 0.0) })
        .collect();
    let in_flat = |k: usize| regimes[k] == Regime::NonAdiabatic && Some(cat.crossings[k].m) == m_flat;
    let in_sharp = |k: usize| regimes[k] == Regime::Adiabatic && Some(cat.crossings[k].m) == m_sharp;
    let (mut ff, mut sd, mut fs, mut ss) = (0.0, 0.0, 0.0, 0.0);
    for jj in 0..n {
        if in_flat(jj) {
            ff += beta[jj].norm_sqr();
        } else if in_sharp(jj) {
            sd += beta[jj].norm_sqr();
        }
        for k in jj + 1..n {
            let mut t = beta[jj] * alpha[jj] * alpha[k] * beta[k].conj();
            for kk in jj + 1..k {
                t *= alpha[kk] * alpha[kk];
            }
            for kk in jj..k {
                t *= nu[kk] * nu[kk];
            }
            let v = 2.0 * t.re;
            if in_flat(jj) && in_flat(k) {
                ff += v;
            } else if in_sharp(jj) && in_sharp(k) {
                ss += v;
            } else if (in_flat(jj) || in_sharp(jj)) && (in_flat(k) || in_sharp(k)) {
                fs += v;
            }
        }
    }
    let leading = ff + sd + fs + ss;
    let parity_odd = (cat.sigma_n() + eff.n()) % 2 == 1;
    let mu_flat = m_flat.map(|m| mu(m, eps, h)).unwrap_or(0.0);
    let mu_sharp = m_sharp.map(|m| mu(m, eps, h)).unwrap_or(f64::INFINITY);
    let expo = match m_sharp {
        Some(m) if a_min.is_finite() => (-a_min * mu_sharp.powf((m as f64 + 1.0) / m as f64)).exp(),
        _ => 0.0,
    };
    let eps1 = mu_flat + expo;
    let h_pow = m_flat.map(|m| h.powf(1.0 / (m as f64 * (m as f64 + 1.0)))).unwrap_or(0.0);
    let sharp_pow = m_sharp.map(|m| mu_sharp.powf(-(m as f64 + 1.0) / m as f64)).unwrap_or(0.0);
    let eps2 = mu_flat * (mu_flat + h_pow) + sharp_pow * expo;
    Ok(MixedPrediction {
        n_odd_adiabatic: eff.n(),
        parity_odd,
        m_flat,
        m_sharp,
        mu_flat,
        mu_sharp,
        flat_flat: ff,
        sharp_diag: sd,
        flat_sharp: fs,
        sharp_sharp: ss,
        leading,
        p_pred: if parity_odd { 1.0 - leading } else { leading },
        eps1,
        eps2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::{build_chain, tau21_sq_unit_alpha};

    #[test]
    fn gamma_star_examples() {
        assert!((gamma_star(1) - PI).abs() < 1e-12);
        let g2 = 4.0 * 3f64.powf(2.0 / 3.0) * gamma(4.0 / 3.0).powi(2) * 0.75;
        assert!((gamma_star(2) - g2).abs() < 1e-12);
        assert!((gamma_star(3) - 4.0 * 12f64.sqrt() * 0.906_402_477_055_477f64.powi(2)).abs() < 1e-9);
        assert!((gamma_star(3) - 11.384).abs() < 1e-3);
        assert!((gamma_star(3) / 6f64.sqrt() - 4.6475).abs() < 1e-4);
        for m in 1..8 {
            for v in [0.5, 1.0, 6.0] {
                let w = omega_m(m, v);
                assert!((gamma_star(m) * v.powf(-2.0 / (m as f64 + 1.0)) - w.norm_sqr()).abs() < 1e-10);
            }
        }
    }

    fn two_cubic() -> PotentialModel {
        PotentialModel::tanh_product(1.0, &[(3, 1.0, -2.0), (3, 1.0, 2.0)]).unwrap()
    }

    #[test]
    fn delta_examples() {
        let t3 = PotentialModel::tanh_product(1.0, &[(3, 1.0, 0.0)]).unwrap();
        let cat = t3.crossings().unwrap();
        assert!((delta_star(&t3, &cat, 0.01, ThetaConvention::Full) - 6f64.powf(-0.5)).abs() < 1e-12);
        // Two opposite cubic crossings: 4|v|^{-1/2} cos^2(A/(2h) - pi/8).
        let m = two_cubic();
        let cat = m.crossings().unwrap();
        let v = cat.crossings[0].v.abs();
        let area = m.area_between(&cat, 0, 1);
        for h in [0.003, 0.0031, 0.0047] {
            let d = delta_star(&m, &cat, h, ThetaConvention::Full);
            let want = 4.0 * v.powf(-0.5) * (area / (2.0 * h) - PI / 8.0).cos().powi(2);
            assert!((d - want).abs() < 1e-9, "{d} {want}");
            assert!(d >= -1e-15);
        }
    }

    #[test]
    fn three_crossing_bracket() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 3.0), (3, 1.0, 0.0), (3, 1.0, -3.0)]).unwrap();
        let cat = m.crossings().unwrap();
        // slopes alternate in sign; weights w_j = |v_j|^{-1/4}
        let w: Vec<f64> = cat.crossings.iter().map(|x| x.v.abs().powf(-0.25)).collect();
        assert!(cat.crossings[0].v > 0.0 && cat.crossings[1].v < 0.0 && cat.crossings[2].v > 0.0);
        let a1 = m.area_between(&cat, 0, 1);
        let a2 = m.area_between(&cat, 1, 2);
        let h = 0.01;
        let th = PI / 4.0;
        let want = w.iter().map(|x| x * x).sum::<f64>()
            + 2.0 * (w[0] * w[1] * (a1 / h - th).cos() + w[1] * w[2] * (a2 / h - th).cos() + w[0] * w[2] * ((a1 - a2) / h).cos());
        let d = delta_star(&m, &cat, h, ThetaConvention::Full);
        assert!((d - want).abs() < 1e-9, "{d} {want}");
    }

    #[test]
    fn nonadiabatic_matches_tau21_substitution() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 3.0), (2, 0.7, 0.0), (3, 1.3, -3.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let (eps, h) = (1e-4, 0.004);
        let pred = nonadiabatic_p(&m, &cat, eps, h, &PredictorOptions::default()).unwrap();
        // alpha = 1, beta only on Lambda_*, nu from V.
        let beta: Vec<C64> = (0..cat.len())
            .map(|k| {
                let x = &cat.crossings[k];
                if x.m == cat.m_star { c(0.0, -mu(x.m, eps, h)) * omega_m(x.m, x.v).conj() } else { c(0.0, 0.0) }
            })
            .collect();
        let nu: Vec<C64> = (0..cat.len())
            .map(|k| if k + 1 < cat.len() { C64::from_polar(1.0, -m.integral(cat.crossings[k + 1].t, cat.crossings[k].t) / h) } else { c(1.0, 0.0) })
            .collect();
        let sq = tau21_sq_unit_alpha(&beta, &nu);
        let lead = pred.c_star * pred.mu_star.powi(2);
        assert!((sq - lead).abs() < 1e-12 * lead.max(1e-30) + 1e-22, "{sq} {lead}");
    }

    #[test]
    fn m1_needs_diagnostic_mode() {
        let lz = PotentialModel::linear_lz(2.0).unwrap();
        let cat = lz.crossings().unwrap();
        assert!(matches!(nonadiabatic_p(&lz, &cat, 1e-3, 0.01, &PredictorOptions::default()), Err(Error::MStarTooSmall)));
        let o = PredictorOptions { allow_m1: true, ..Default::default() };
        let (eps, h) = (1e-3, 0.01);
        let p = nonadiabatic_p(&lz, &cat, eps, h, &o).unwrap();
        assert!((p.c_star * p.mu_star.powi(2) - PI * eps * eps / (2.0 * h)).abs() < 1e-15);
    }

    #[test]
    fn quantization_ladder() {
        let m = two_cubic();
        let cat = m.crossings().unwrap();
        let area = m.area_between(&cat, 0, 1);
        let zs = interference_zeros(&m, &cat, 2e-3, 4e-3, ThetaConvention::Full);
        assert!(!zs.is_empty());
        for z in &zs {
            // A/h + 3 pi/4 in 2 pi Z
            let r = (area / z.h + 0.75 * PI) / (2.0 * PI);
            assert!((r - r.round()).abs() < 1e-9, "{r}");
            assert!(z.delta.abs() < 1e-9);
        }
        // unequal slopes: no exact zeros
        let u = PotentialModel::tanh_product(1.0, &[(3, 1.0, -2.0), (3, 2.0, 2.0)]).unwrap();
        let cu = u.crossings().unwrap();
        assert!(interference_zeros(&u, &cu, 2e-3, 4e-3, ThetaConvention::Full).is_empty());
    }

    #[test]
    fn even_ladder() {
        let m = PotentialModel::tanh_product(1.0, &[(2, 1.0, -2.0), (2, 1.0, 2.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let area = m.area_between(&cat, 0, 1);
        for z in interference_zeros(&m, &cat, 5e-3, 1e-2, ThetaConvention::Full) {
            let r = (area / z.h + PI) / (2.0 * PI);
            assert!((r - r.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn three_crossing_minima() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 3.0), (3, 1.0, 0.0), (3, 1.0, -3.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let zs = interference_zeros(&m, &cat, 0.01, 0.02, ThetaConvention::Full);
        assert!(!zs.is_empty());
        for z in zs {
            let d = |h: f64| delta_star(&m, &cat, h, ThetaConvention::Full);
            assert!(z.delta <= d(z.h * (1.0 + 1e-4)) && z.delta <= d(z.h * (1.0 - 1e-4)));
        }
    }

    #[test]
    fn spectrum_recovers_pair_frequencies() {
        let m = PotentialModel::tanh_product(1.0, &[(3, 1.0, 3.0), (3, 1.0, 0.0), (3, 1.0, -3.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let a1 = m.area_between(&cat, 0, 1);
        let a2 = m.area_between(&cat, 1, 2);
        let spec = delta_spectrum(&m, &cat, 50.0, 250.0, 2048, ThetaConvention::Full);
        let peaks = spectral_peaks(&spec, 0.2);
        let res = 2.0 * PI / 200.0;
        for f in [a1, a2] {
            assert!(peaks.iter().any(|&p| (p - f).abs() < 2.0 * res), "{f} not in {peaks:?}");
        }
    }

    #[test]
    fn mixed_reduces_without_sharp() {
        let m = two_cubic();
        let cat = m.crossings().unwrap();
        let (eps, h) = (1e-4, 0.003);
        let t1 = nonadiabatic_p(&m, &cat, eps, h, &PredictorOptions::default()).unwrap();
        let t2 = mixed_leading(&m, &cat, eps, h, &[Regime::NonAdiabatic; 2]).unwrap();
        assert!((t1.p_pred - t2.p_pred).abs() < 1e-15);
        assert_eq!(t2.n_odd_adiabatic, 0);
    }

    #[test]
    fn mixed_mixed_parity_and_bookkeeping() {
        let m = PotentialModel::tanh_product(1.0, &[(1, 1.0, 3.0), (3, 1.0, 0.0), (1, 1.0, -3.0)]).unwrap();
        let cat = m.crossings().unwrap();
        let regimes = vec![Regime::NonAdiabatic, Regime::Adiabatic, Regime::NonAdiabatic];
        let (eps, h) = (3e-6, 1e-9);
        let t2 = mixed_leading(&m, &cat, eps, h, &regimes).unwrap();
        assert_eq!(t2.n_odd_adiabatic, 1);
        assert_eq!(t2.parity_odd, (cat.sigma_n() + 1) % 2 == 1);
        assert!(t2.mu_flat < 0.1 && t2.mu_sharp > 10.0);
        assert!(t2.sharp_diag + t2.flat_sharp.abs() < 1e-3 * t2.flat_flat, "{t2:?}");
        // Same flat-flat block from the Q-masked chain phases.
        let chain = build_chain(&m, &cat, eps, h, &regimes, 0.0).unwrap();
        let tilde = chain.tilde_factors();
        let b0 = c(0.0, -mu(1, eps, h)) * omega_m(1, cat.crossings[0].v).conj();
        let b2 = c(0.0, -mu(1, eps, h)) * omega_m(1, cat.crossings[2].v).conj();
        let b2t = Su2::new(c(1.0, 0.0), b2).q_conj().b;
        let a1 = tilde[2].a;
        let nus = tilde[1].a * tilde[3].a;
        let cross = 2.0 * (b0 * a1 * a1 * b2t.conj() * nus * nus).re;
        let want = b0.norm_sqr() + b2.norm_sqr() + cross;
        assert!((t2.flat_flat - want).abs() < 1e-12, "{} {want}", t2.flat_flat);
    }
}
