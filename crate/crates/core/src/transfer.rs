//! Transfer matrices across and between crossings, and their SU(2) products.

use crate::error::{Error, Result};
use crate::linalg::{c, j, mat, q, Mat2};
use crate::oscillatory::omega_m;
use crate::potential::{Crossing, CrossingCatalog, EffectivePotential, PotentialModel, Regime, Side};
use crate::scattering::{default_anchor, phase_diag};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// [[a, -conj b], [b, conj a]]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Su2 {
    pub a: C64,
    pub b: C64,
}

impl Su2 {
    pub fn identity() -> Self {
        Self { a: c(1.0, 0.0), b: c(0.0, 0.0) }
    }

    pub fn new(a: C64, b: C64) -> Self {
        Self { a, b }
    }

    /// Divide by sqrt(|a|^2 + |b|^2) so the determinant is exactly one.
    pub fn normalized(a: C64, b: C64) -> Self {
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        Self { a: a / n, b: b / n }
    }

    /// diag(e^{i phi}, e^{-i phi})
    pub fn phase(phi: f64) -> Self {
        Self { a: C64::from_polar(1.0, phi), b: c(0.0, 0.0) }
    }

    pub fn from_mat(m: &Mat2) -> Self {
        Self { a: m[(0, 0)], b: m[(1, 0)] }
    }

    pub fn matrix(&self) -> Mat2 {
        mat(self.a, -self.b.conj(), self.b, self.a.conj())
    }

    pub fn det_defect(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() - 1.0).abs()
    }

    pub fn mul(&self, o: &Self) -> Self {
        Self { a: self.a * o.a - self.b.conj() * o.b, b: self.b * o.a + self.a.conj() * o.b }
    }

    pub fn inverse(&self) -> Self {
        Self { a: self.a.conj(), b: -self.b }
    }

    /// Q M Q
    pub fn q_conj(&self) -> Self {
        Self { a: self.a.conj(), b: -self.b.conj() }
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> Self {
        Self { a: self.a.conj(), b: self.b.conj() }
    }
}

/// mu_m = eps h^{-m/(m+1)}
pub fn mu(m: usize, eps: f64, h: f64) -> f64 {
    eps * h.powf(-(m as f64) / (m as f64 + 1.0))
}

/// (log 1/h)^{1/2} eps h^{-1/2}
pub fn mu_tilde_1(eps: f64, h: f64) -> f64 {
    (1.0 / h).ln().sqrt() * mu(1, eps, h)
}

/// Regime thresholds on the smallness parameter of each crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub non_adiabatic: f64,
    pub adiabatic: f64,
    /// Use mu_m |v_k|^{-1/(m+1)}, the parameter of the rescaled monomial problem.
    pub normalize_by_slope: bool,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self { non_adiabatic: 0.1, adiabatic: 10.0, normalize_by_slope: false }
    }
}

impl RegimeThresholds {
    fn scale(&self, x: &Crossing) -> f64 {
        if self.normalize_by_slope {
            x.v.abs().powf(-1.0 / (x.m as f64 + 1.0))
        } else {
            1.0
        }
    }

    /// Parameter compared against the non-adiabatic threshold (log-corrected for m = 1).
    pub fn small_parameter(&self, x: &Crossing, eps: f64, h: f64) -> f64 {
        let base = if x.m == 1 { mu_tilde_1(eps, h) } else { mu(x.m, eps, h) };
        base * self.scale(x)
    }

    pub fn large_parameter(&self, x: &Crossing, eps: f64, h: f64) -> f64 {
        mu(x.m, eps, h) * self.scale(x)
    }

    pub fn classify(&self, cat: &CrossingCatalog, k: usize, eps: f64, h: f64) -> Result<Regime> {
        let x = &cat.crossings[k];
        let small = self.small_parameter(x, eps, h);
        let large = self.large_parameter(x, eps, h);
        if small <= self.non_adiabatic {
            Ok(Regime::NonAdiabatic)
        } else if large >= self.adiabatic {
            Ok(Regime::Adiabatic)
        } else {
            Err(Error::RegimeViolation {
                k,
                mu: large,
                detail: format!("between thresholds {} and {}", self.non_adiabatic, self.adiabatic),
            })
        }
    }

    pub fn classify_all(&self, cat: &CrossingCatalog, eps: f64, h: f64) -> Result<Vec<Regime>> {
        (0..cat.len()).map(|k| self.classify(cat, k, eps, h)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FactorKind {
    Crossing { k: usize, regime: Regime },
    Between { k: usize },
    LeftConnector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub kind: FactorKind,
    pub su2: Su2,
    /// The literal factor is i Q su2.
    pub iq: bool,
    pub error: String,
}

impl Factor {
    pub fn literal(&self) -> Mat2 {
        if self.iq {
            q() * self.su2.matrix() * c(0.0, 1.0)
        } else {
            self.su2.matrix()
        }
    }
}

/// [[1, -i omega mu], [-i conj(omega) mu, 1]] rescaled into SU(2).
pub fn t_k_nonadiabatic(cat: &CrossingCatalog, k: usize, eps: f64, h: f64, thr: &RegimeThresholds) -> Result<Factor> {
    let x = &cat.crossings[k];
    let small = thr.small_parameter(x, eps, h);
    if small > thr.non_adiabatic {
        return Err(Error::RegimeViolation { k, mu: small, detail: "not non-adiabatic".into() });
    }
    Ok(Factor {
        kind: FactorKind::Crossing { k, regime: Regime::NonAdiabatic },
        su2: nonadiabatic_su2(x, eps, h),
        iq: false,
        error: format!("O(mu^2 + mu h^(1/{}))", x.m + 1),
    })
}

/// The non-adiabatic factor without the threshold check.
pub fn nonadiabatic_su2(x: &Crossing, eps: f64, h: f64) -> Su2 {
    let w = omega_m(x.m, x.v);
    let m = mu(x.m, eps, h);
    Su2::normalized(c(1.0, 0.0), c(0.0, -m) * w.conj())
}

/// diag(nu, conj nu), nu = exp(-(i/h) int_{t_{k+1}}^{t_k} V), with V replaced by
/// the effective potential when one is given.
pub fn t_between(model: &PotentialModel, cat: &CrossingCatalog, k: usize, h: f64, eff: Option<&EffectivePotential>) -> Factor {
    let (hi, lo) = (cat.crossings[k].t, cat.crossings[k + 1].t);
    let integral = match eff {
        Some(e) => e.integral(model, lo, hi),
        None => model.integral(lo, hi),
    };
    Factor { kind: FactorKind::Between { k }, su2: Su2::phase(-integral / h), iq: false, error: "O(eps^2/h)".into() }
}

/// Raw adiabatic coefficients (alpha, beta) before normalization.
pub fn adiabatic_coefficients(model: &PotentialModel, cat: &CrossingCatalog, k: usize, eps: f64, h: f64) -> Result<(C64, C64)> {
    let x = &cat.crossings[k];
    let tp = model.turning_points(cat, k, eps)?;
    let (a1, am) = (tp.action[0], tp.action[1]);
    let ex = |z: C64| (c(0.0, 0.5 / h) * z).exp();
    let sign_sigma = if cat.sigma[k] % 2 == 0 { 1.0 } else { -1.0 };
    if x.m == 1 {
        // One turning point: the two paths coincide.
        return Ok((ex(a1 - am), ex(a1 - a1.conj()) * sign_sigma));
    }
    let sm = if x.m % 2 == 0 { 1.0 } else { -1.0 };
    let alpha = ex(a1 - am) + ex(a1 - a1.conj() * 2.0 + am) * sm;
    let beta = (ex(a1 - am.conj()) - ex(a1 - a1.conj() * 2.0 + am.conj()) * sm) * sign_sigma;
    Ok((alpha, beta))
}

/// Adiabatic factor with the parity dressing; odd m carries an extra i Q.
pub fn t_k_adiabatic(model: &PotentialModel, cat: &CrossingCatalog, k: usize, eps: f64, h: f64, thr: &RegimeThresholds) -> Result<Factor> {
    let x = &cat.crossings[k];
    let large = thr.large_parameter(x, eps, h);
    if large < thr.adiabatic {
        return Err(Error::RegimeViolation { k, mu: large, detail: "not adiabatic".into() });
    }
    Ok(adiabatic_factor(model, cat, k, eps, h)?)
}

/// The adiabatic factor without the threshold check.
pub fn adiabatic_factor(model: &PotentialModel, cat: &CrossingCatalog, k: usize, eps: f64, h: f64) -> Result<Factor> {
    let x = &cat.crossings[k];
    let (alpha, beta) = adiabatic_coefficients(model, cat, k, eps, h)?;
    if !(alpha.is_finite() && beta.is_finite()) || alpha.norm_sqr() + beta.norm_sqr() == 0.0 {
        return Err(Error::TurningPointFailure { k, detail: "degenerate adiabatic coefficients".into() });
    }
    let w = Su2::normalized(alpha, beta);
    let odd_m = x.m % 2 == 1;
    let odd_before = cat.sigma_before(k) % 2 == 1;
    let (su2, iq) = match (odd_m, odd_before) {
        (false, false) => (w, false),
        (false, true) => (w.conj(), false),
        (true, false) => (Su2::new(c(0.0, -1.0), c(0.0, 0.0)).mul(&w), true),
        (true, true) => (Su2::new(c(0.0, 1.0), c(0.0, 0.0)).mul(&w.conj()), true),
    };
    let p = (x.m as f64 + 1.0) / x.m as f64;
    Ok(Factor {
        kind: FactorKind::Crossing { k, regime: Regime::Adiabatic },
        su2,
        iq,
        error: format!("O(mu^-{p:.3}) in alpha, O(mu^-{p:.3} exp(-a mu^{p:.3})) in beta"),
    })
}

/// Ordered factors T_1, T_{1,2}, ..., T_n, T_{n,n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferChain {
    pub factors: Vec<Factor>,
    pub regimes: Vec<Regime>,
    /// Factors conjugated by Q when the i Q terms are moved to the right.
    pub q_mask: Vec<bool>,
    pub n_odd_adiabatic: usize,
}

impl TransferChain {
    pub fn new(factors: Vec<Factor>, regimes: Vec<Regime>) -> Self {
        let mut mask = Vec::with_capacity(factors.len());
        let mut flipped = false;
        let mut n = 0;
        for f in &factors {
            if f.iq {
                flipped = !flipped;
                n += 1;
            }
            mask.push(flipped);
        }
        Self { factors, regimes, q_mask: mask, n_odd_adiabatic: n }
    }

    /// Q-conjugated SU(2) parts, whose product times (iQ)^N is the literal product.
    pub fn tilde_factors(&self) -> Vec<Su2> {
        self.factors
            .iter()
            .zip(&self.q_mask)
            .map(|(f, &m)| if m { f.su2.q_conj() } else { f.su2 })
            .collect()
    }
}

/// Exact product of SU(2) factors, left to right.
pub fn su2_chain_product(factors: &[Su2]) -> Su2 {
    factors.iter().fold(Su2::identity(), |acc, f| acc.mul(f))
}

pub fn literal_product(chain: &TransferChain) -> Mat2 {
    chain.factors.iter().fold(Mat2::identity(), |acc, f| acc * f.literal())
}

/// First-order tau_21 and the |tau_21|^2 expansion for T_k = SU2(alpha_k, beta_k),
/// T_{k,k+1} = diag(nu_k, conj nu_k).
pub fn tau21_perturbative(alpha: &[C64], beta: &[C64], nu: &[C64]) -> (C64, f64) {
    let n = beta.len();
    let mut tau = c(0.0, 0.0);
    for jj in 0..n {
        let mut t = beta[jj];
        for k in 0..jj {
            t *= (alpha[k] * nu[k]).conj();
        }
        for k in jj + 1..n {
            t *= alpha[k];
        }
        for k in jj..n {
            t *= nu[k];
        }
        tau += t;
    }
    let mut sq: f64 = beta.iter().map(|b| b.norm_sqr()).sum();
    let mut cross = c(0.0, 0.0);
    for jj in 0..n {
        for k in jj + 1..n {
            let mut t = beta[jj] * alpha[jj] * alpha[k] * beta[k].conj();
            for kk in jj + 1..k {
                t *= alpha[kk] * alpha[kk];
            }
            for kk in jj..k {
                t *= nu[kk] * nu[kk];
            }
            cross += t;
        }
    }
    sq += 2.0 * cross.re;
    (tau, sq)
}

/// The same expansion with every alpha_k = 1.
pub fn tau21_sq_unit_alpha(beta: &[C64], nu: &[C64]) -> f64 {
    let ones = vec![c(1.0, 0.0); beta.len()];
    tau21_perturbative(&ones, beta, nu).1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Anchors {
    pub right: Option<f64>,
    pub left: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedScattering {
    pub chain: TransferChain,
    pub s_literal: Mat2,
    pub s_tilde: Mat2,
    pub p: f64,
    /// sigma_n + N odd means P is near one.
    pub parity_odd: bool,
    pub r_right: f64,
    pub r_left: f64,
}

pub fn build_chain(
    model: &PotentialModel,
    cat: &CrossingCatalog,
    eps: f64,
    h: f64,
    regimes: &[Regime],
    r_left: f64,
) -> Result<TransferChain> {
    let n = cat.len();
    let mut factors = Vec::with_capacity(2 * n);
    for k in 0..n {
        let f = match regimes[k] {
            Regime::NonAdiabatic => Factor {
                kind: FactorKind::Crossing { k, regime: Regime::NonAdiabatic },
                su2: nonadiabatic_su2(&cat.crossings[k], eps, h),
                iq: false,
                error: format!("O(mu^2 + mu h^(1/{}))", cat.crossings[k].m + 1),
            },
            Regime::Adiabatic => adiabatic_factor(model, cat, k, eps, h)?,
        };
        factors.push(f);
        if k + 1 < n {
            factors.push(t_between(model, cat, k, h, None));
        } else {
            factors.push(Factor {
                kind: FactorKind::LeftConnector,
                su2: Su2::phase(-r_left / h),
                iq: false,
                error: "O(eps^2/h)".into(),
            });
        }
    }
    Ok(TransferChain::new(factors, regimes.to_vec()))
}

/// S = T_r^{-1} T_1 T_{1,2} ... T_n T_l with the regime assignment given per crossing.
pub fn predicted_scattering(
    model: &PotentialModel,
    cat: &CrossingCatalog,
    eps: f64,
    h: f64,
    regimes: &[Regime],
    anchors: Anchors,
) -> Result<PredictedScattering> {
    if regimes.len() != cat.len() {
        return Err(Error::Config("one regime per crossing required".into()));
    }
    let ar = anchors.right.unwrap_or_else(|| default_anchor(model, cat, Side::Right));
    let al = anchors.left.unwrap_or_else(|| default_anchor(model, cat, Side::Left));
    let r_right = model.regularized_action(cat, Side::Right, ar)?;
    let r_left = model.regularized_action(cat, Side::Left, al)?;
    let chain = build_chain(model, cat, eps, h, regimes, r_left)?;
    let tr_inv = phase_diag(r_right, h).try_inverse().unwrap();
    let sigma_odd = cat.sigma_n() % 2 == 1;
    let tail = if sigma_odd { j() } else { Mat2::identity() };
    let lead = if cat.is_empty() { phase_diag(r_left, h) } else { Mat2::identity() };
    let s_literal = tr_inv * lead * literal_product(&chain) * tail;
    let mut iq_n = Mat2::identity();
    for _ in 0..chain.n_odd_adiabatic {
        iq_n *= q() * c(0.0, 1.0);
    }
    let s_tilde = tr_inv * lead * su2_chain_product(&chain.tilde_factors()).matrix() * iq_n * tail;
    let parity_odd = (cat.sigma_n() + chain.n_odd_adiabatic) % 2 == 1;
    Ok(PredictedScattering { p: s_literal[(1, 0)].norm_sqr(), s_literal, s_tilde, parity_odd, chain, r_right, r_left })
}
