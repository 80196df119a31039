//! Sweeps, rate fits, interference scans, the regime-switch walk, verification
//! suites and file output.

use crate::error::{Error, Result};
use crate::fit::fit_line;
use crate::linalg::{c, max_abs, unitarity_defect};
use crate::msa::{k_norm_ratio, msa_solution, symmetry_defect, Grid, Sign, Which};
use crate::oscillatory::{omega_m, osc_integral, PhaseSign};
use crate::potential::{factorial, CrossingCatalog, EffectivePotential, Family, PotentialModel, Regime};
use crate::predictor::{interference_zeros, nonadiabatic_p, mixed_leading, PredictorOptions, ThetaConvention};
use crate::propagator::{fundamental_matrix, PropagatorOptions};
use crate::scattering::{scattering_matrix, ScatteringOptions};
use crate::transfer::{mu, su2_chain_product, tau21_perturbative, RegimeThresholds, Su2};
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const CSV_SCHEMA: u32 = 1;

/// Points in the (eps, h) plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Every eps against every h.
    Product { eps: Vec<f64>, h: Vec<f64> },
    /// eps = c h^alpha along an h ladder.
    Power { c: f64, alpha: f64, h: Vec<f64> },
    /// eps = h^alpha at fixed h along an alpha ladder.
    Alpha { h: f64, alpha: Vec<f64> },
    /// eps = (h log(1/h^rho))^{m/(m+1)} along an h ladder.
    Log { rho: f64, m: usize, h: Vec<f64> },
    /// eps = mu h^{m/(m+1)}: fixed mu_m along an h ladder.
    FixedMu { mu: f64, m: usize, h: Vec<f64> },
}

fn strictly_monotone(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] > w[0]) || xs.windows(2).all(|w| w[1] < w[0])
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ladders: Vec<(&str, &[f64])> = match self {
            GridSpec::Product { eps, h } => vec![("eps", eps), ("h", h)],
            GridSpec::Power { h, .. } | GridSpec::Log { h, .. } | GridSpec::FixedMu { h, .. } => vec![("h", h)],
            GridSpec::Alpha { alpha, .. } => vec![("alpha", alpha)],
        };
        for (name, l) in ladders {
            if !strictly_monotone(l) {
                return Err(Error::Config(format!("{name} ladder is not strictly monotone")));
            }
            if name != "alpha" && l.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::Config(format!("{name} ladder must be positive")));
            }
        }
        if let GridSpec::Alpha { h, .. } = self {
            if !(*h > 0.0 && *h < 1.0) {
                return Err(Error::Config("alpha path needs 0 < h < 1".into()));
            }
        }
        Ok(())
    }

    /// (eps, h) in row order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        match self {
            GridSpec::Product { eps, h } => h.iter().flat_map(|&hh| eps.iter().map(move |&e| (e, hh))).collect(),
            GridSpec::Power { c, alpha, h } => h.iter().map(|&hh| (c * hh.powf(*alpha), hh)).collect(),
            GridSpec::Alpha { h, alpha } => alpha.iter().map(|&a| (h.powf(a), *h)).collect(),
            GridSpec::Log { rho, m, h } => {
                let e = *m as f64 / (*m as f64 + 1.0);
                h.iter().map(|&hh| ((hh * (rho * (1.0 / hh).ln())).powf(e), hh)).collect()
            }
            GridSpec::FixedMu { mu, m, h } => {
                let e = *m as f64 / (*m as f64 + 1.0);
                h.iter().map(|&hh| (mu * hh.powf(e), hh)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    Numeric,
    Nonadiabatic,
    Mixed,
    Chain,
}

fn default_oracles() -> Vec<Oracle> {
    vec![Oracle::Numeric]
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub potential: Family,
    pub grid: GridSpec,
    #[serde(default = "default_oracles")]
    pub oracles: Vec<Oracle>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default)]
    pub theta: ThetaConvention,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub jobs: Option<usize>,
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.tol > 0.0 && self.tol < 1e-3) {
            return Err(Error::Config(format!("tol {} outside (0, 1e-3)", self.tol)));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be positive".into()));
        }
        PotentialModel::new(self.potential.clone()).map(|_| ())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("config serializes"))
    }
}

pub fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub const STATUS_OK: &str = "OK";
pub const STATUS_SKIPPED: &str = "SKIPPED_REGIME";
pub const STATUS_ERROR: &str = "ERROR";

/// One sweep row. Predictions are blank when the row sits in the forbidden band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub eps: f64,
    pub h: f64,
    /// mu_{m_k} per crossing, joined with ';'.
    pub mu: String,
    /// N/A per crossing.
    pub regimes: String,
    pub status: String,
    pub p_numeric: Option<f64>,
    pub unitarity_defect: Option<f64>,
    pub p_landau_zener: Option<f64>,
    pub p_nonadiabatic: Option<f64>,
    pub p_mixed: Option<f64>,
    pub p_chain: Option<f64>,
    pub residual_landau_zener: Option<f64>,
    pub residual_nonadiabatic: Option<f64>,
    pub residual_mixed: Option<f64>,
    pub residual_chain: Option<f64>,
    pub error: Option<String>,
}

fn join(xs: impl Iterator<Item = String>) -> String {
    xs.collect::<Vec<_>>().join(";")
}

fn regime_code(r: &Result<Regime>) -> &'static str {
    match r {
        Ok(Regime::NonAdiabatic) => "N",
        Ok(Regime::Adiabatic) => "A",
        Err(_) => "-",
    }
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build().map(|p| p.install(f)).unwrap_or_else(|_| panic!("thread pool")),
        None => f(),
    }
}

fn compute_row(cfg: &SweepConfig, model: &PotentialModel, cat: &CrossingCatalog, index: usize, eps: f64, h: f64) -> SweepRow {
    let classes: Vec<Result<Regime>> = (0..cat.len()).map(|k| cfg.thresholds.classify(cat, k, eps, h)).collect();
    let forbidden = classes.iter().any(|r| r.is_err());
    let mut row = SweepRow {
        index,
        eps,
        h,
        mu: join(cat.crossings.iter().map(|x| format!("{:.6e}", mu(x.m, eps, h)))),
        regimes: classes.iter().map(regime_code).collect(),
        status: if forbidden { STATUS_SKIPPED } else { STATUS_OK }.into(),
        p_numeric: None,
        unitarity_defect: None,
        p_landau_zener: None,
        p_nonadiabatic: None,
        p_mixed: None,
        p_chain: None,
        residual_landau_zener: None,
        residual_nonadiabatic: None,
        residual_mixed: None,
        residual_chain: None,
        error: None,
    };
    let mut errors = vec![];
    if let Family::LinearLz { v, .. } = cfg.potential {
        row.p_landau_zener = Some((-std::f64::consts::PI * eps * eps / (v.abs() * h)).exp());
    }
    if cfg.oracles.contains(&Oracle::Numeric) {
        match scattering_matrix(model, eps, h, &ScatteringOptions::with_tol(cfg.tol)) {
            Ok(r) => {
                row.p_numeric = Some(r.p);
                row.unitarity_defect = Some(r.unitarity_defect);
            }
            Err(e) => errors.push(format!("numeric: {e}")),
        }
    }
    if !forbidden {
        let regimes: Vec<Regime> = classes.iter().map(|r| *r.as_ref().unwrap()).collect();
        let all_na = regimes.iter().all(|&r| r == Regime::NonAdiabatic);
        if cfg.oracles.contains(&Oracle::Nonadiabatic) && all_na {
            let o = PredictorOptions { theta: cfg.theta, mu_threshold: f64::INFINITY, allow_m1: false };
            match nonadiabatic_p(model, cat, eps, h, &o) {
                Ok(p) => row.p_nonadiabatic = Some(p.p_pred),
                Err(e) => errors.push(format!("nonadiabatic: {e}")),
            }
        }
        if cfg.oracles.contains(&Oracle::Mixed) {
            match mixed_leading(model, cat, eps, h, &regimes) {
                Ok(p) => row.p_mixed = Some(p.p_pred),
                Err(e) => errors.push(format!("mixed: {e}")),
            }
        }
        if cfg.oracles.contains(&Oracle::Chain) {
            match crate::transfer::predicted_scattering(model, cat, eps, h, &regimes, crate::transfer::Anchors::default()) {
                Ok(p) => row.p_chain = Some(p.p),
                Err(e) => errors.push(format!("chain: {e}")),
            }
        }
    }
    if let Some(pn) = row.p_numeric {
        let d = |x: Option<f64>| x.map(|p| (pn - p).abs());
        row.residual_landau_zener = d(row.p_landau_zener);
        row.residual_nonadiabatic = d(row.p_nonadiabatic);
        row.residual_mixed = d(row.p_mixed);
        row.residual_chain = d(row.p_chain);
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
        if row.status == STATUS_OK {
            row.status = STATUS_ERROR.into();
        }
    }
    row
}

/// Rows in grid order. Per-row failures are recorded in the row.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let model = PotentialModel::new(cfg.potential.clone())?;
    let cat = model.crossings()?;
    let pts = cfg.grid.points();
    Ok(with_pool(cfg.jobs, || {
        pts.par_iter().enumerate().map(|(i, &(e, h))| compute_row(cfg, &model, &cat, i, e, h)).collect()
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub used: usize,
    pub expected: Option<f64>,
}

/// Least-squares slope of log y against log x over points with y above 100x
/// the noise floor.
pub fn fit_rate(points: &[(f64, f64)], noise_floor: f64, expected: Option<f64>) -> Result<RateFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && y.is_finite() && y.abs() > 100.0 * noise_floor)
        .map(|&(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if usable.len() < 5 {
        return Err(Error::InsufficientData { usable: usable.len(), needed: 5 });
    }
    let (slope, intercept, r2) = fit_line(&usable);
    let lo = usable.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).exp();
    let hi = usable.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(RateFit { slope, intercept, r2, window: (lo, hi), used: usable.len(), expected })
}

/// Residual column of sweep rows against h.
pub fn rows_residual_vs_h(rows: &[SweepRow], pick: fn(&SweepRow) -> Option<f64>) -> Vec<(f64, f64)> {
    rows.iter().filter_map(|r| pick(r).map(|y| (r.h, y))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConfig {
    pub potential: Family,
    /// mu_{m_*} held fixed while h varies.
    pub mu: f64,
    pub h: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub theta: ThetaConvention,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub h: f64,
    pub eps: f64,
    pub p_numeric: f64,
    /// Transition share divided by mu^2 (1 - P for odd parity).
    pub normalized: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimumMatch {
    pub h_numeric: f64,
    pub h_predicted: f64,
    pub relative_offset: f64,
    /// Offset in units of the local oscillation period in h.
    pub period_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceScan {
    pub points: Vec<ScanPoint>,
    pub minima: Vec<MinimumMatch>,
    /// 1 - SS_res / SS_tot of the data against the closed-form prediction.
    pub r2: f64,
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> f64 {
    let d = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2]);
    let a = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / d;
    let b = (x[2] * x[2] * (y[0] - y[1]) + x[1] * x[1] * (y[2] - y[0]) + x[0] * x[0] * (y[1] - y[2])) / d;
    -b / (2.0 * a)
}

pub fn scan_interference(cfg: &InterferenceConfig) -> Result<InterferenceScan> {
    if !strictly_monotone(&cfg.h) || cfg.h.len() < 3 {
        return Err(Error::Config("h ladder must be strictly monotone with at least 3 points".into()));
    }
    let model = PotentialModel::new(cfg.potential.clone())?;
    let cat = model.crossings()?;
    if cat.lambda_star.len() < 2 {
        return Err(Error::NoMinimaFound);
    }
    let m = cat.m_star;
    let e = m as f64 / (m as f64 + 1.0);
    let odd = cat.sigma_n() % 2 == 1;
    let popts = PredictorOptions { theta: cfg.theta, mu_threshold: f64::INFINITY, allow_m1: true };
    let points: Vec<ScanPoint> = with_pool(cfg.jobs, || {
        cfg.h
            .par_iter()
            .map(|&h| {
                let eps = cfg.mu * h.powf(e);
                let r = scattering_matrix(&model, eps, h, &ScatteringOptions::with_tol(cfg.tol))?;
                let share = if odd { 1.0 - r.p } else { r.p };
                let pred = nonadiabatic_p(&model, &cat, eps, h, &popts)?;
                Ok(ScanPoint { h, eps, p_numeric: r.p, normalized: share / (cfg.mu * cfg.mu), predicted: pred.c_star })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut pts = points;
    pts.sort_by(|a, b| a.h.partial_cmp(&b.h).unwrap());
    let mean = pts.iter().map(|p| p.normalized).sum::<f64>() / pts.len() as f64;
    let ss_tot: f64 = pts.iter().map(|p| (p.normalized - mean).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.normalized - p.predicted).powi(2)).sum();
    let (h_lo, h_hi) = (pts[0].h, pts[pts.len() - 1].h);
    let predicted = interference_zeros(&model, &cat, h_lo * 0.9, h_hi * 1.1, cfg.theta);
    // oscillation period in 1/h from the fastest cross phase
    let mut freq = 0.0f64;
    for (i, &j) in cat.lambda_star.iter().enumerate() {
        for &k in &cat.lambda_star[i + 1..] {
            freq = freq.max(2.0 * model.integral(cat.crossings[k].t, cat.crossings[j].t).abs());
        }
    }
    let mut minima = vec![];
    for i in 1..pts.len() - 1 {
        let (a, b, cc) = (&pts[i - 1], &pts[i], &pts[i + 1]);
        if b.normalized < a.normalized && b.normalized <= cc.normalized {
            let hv = 1.0 / parabola_vertex([1.0 / a.h, 1.0 / b.h, 1.0 / cc.h], [a.normalized, b.normalized, cc.normalized]);
            let hv = if hv.is_finite() && hv >= a.h.min(cc.h) && hv <= a.h.max(cc.h) { hv } else { b.h };
            if let Some(z) = predicted.iter().min_by(|p, q| (p.h - hv).abs().partial_cmp(&(q.h - hv).abs()).unwrap()) {
                let period_h = 2.0 * std::f64::consts::PI / freq * hv * hv;
                minima.push(MinimumMatch {
                    h_numeric: hv,
                    h_predicted: z.h,
                    relative_offset: (hv - z.h).abs() / z.h,
                    period_fraction: (hv - z.h).abs() / period_h,
                });
            }
        }
    }
    if minima.is_empty() {
        return Err(Error::NoMinimaFound);
    }
    Ok(InterferenceScan { points: pts, minima, r2: 1.0 - ss_res / ss_tot })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchConfig {
    pub potential: Family,
    pub h: f64,
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub thresholds: RegimeThresholds,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchRow {
    pub alpha: f64,
    pub eps: f64,
    pub regimes: String,
    pub skipped: bool,
    pub n_odd_adiabatic: Option<usize>,
    pub parity_odd: Option<bool>,
    pub p_numeric: Option<f64>,
    /// "near0", "near1" or "middle".
    pub branch: Option<String>,
    pub correct: Option<bool>,
    /// Effective-energy sign on each gap, right to left, starting right of t_1.
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub sigma_n: usize,
    pub rows: Vec<SwitchRow>,
    pub evaluated: usize,
    pub correct: usize,
}

pub fn regime_switch_demo(cfg: &SwitchConfig) -> Result<SwitchReport> {
    if !strictly_monotone(&cfg.alpha) {
        return Err(Error::Config("alpha ladder must be strictly monotone".into()));
    }
    let model = PotentialModel::new(cfg.potential.clone())?;
    let cat = model.crossings()?;
    let rows: Vec<SwitchRow> = with_pool(cfg.jobs, || {
        cfg.alpha
            .par_iter()
            .map(|&alpha| {
                let eps = cfg.h.powf(alpha);
                let classes: Vec<Result<Regime>> = (0..cat.len()).map(|k| cfg.thresholds.classify(&cat, k, eps, cfg.h)).collect();
                let regimes_s: String = classes.iter().map(regime_code).collect();
                if classes.iter().any(|r| r.is_err()) {
                    return Ok(SwitchRow {
                        alpha,
                        eps,
                        regimes: regimes_s,
                        skipped: true,
                        n_odd_adiabatic: None,
                        parity_odd: None,
                        p_numeric: None,
                        branch: None,
                        correct: None,
                        mask: None,
                    });
                }
                let regimes: Vec<Regime> = classes.into_iter().map(|r| r.unwrap()).collect();
                let eff = EffectivePotential::new(&cat, &regimes);
                let parity_odd = (cat.sigma_n() + eff.n()) % 2 == 1;
                let r = scattering_matrix(&model, eps, cfg.h, &ScatteringOptions::with_tol(cfg.tol))?;
                let branch = if r.p < 0.2 {
                    "near0"
                } else if r.p > 0.8 {
                    "near1"
                } else {
                    "middle"
                };
                let correct = (branch == "near1" && parity_odd) || (branch == "near0" && !parity_odd);
                let mut probes = vec![cat.crossings[0].t + 1.0];
                probes.extend(cat.crossings.windows(2).map(|w| 0.5 * (w[0].t + w[1].t)));
                probes.push(cat.crossings[cat.len() - 1].t - 1.0);
                let mask = probes.iter().map(|&t| if eff.sign(t) > 0.0 { '+' } else { '-' }).collect();
                Ok(SwitchRow {
                    alpha,
                    eps,
                    regimes: regimes_s,
                    skipped: false,
                    n_odd_adiabatic: Some(eff.n()),
                    parity_odd: Some(parity_odd),
                    p_numeric: Some(r.p),
                    branch: Some(branch.into()),
                    correct: Some(correct),
                    mask: Some(mask),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let evaluated = rows.iter().filter(|r| !r.skipped).count();
    if evaluated == 0 {
        return Err(Error::PathCrossesForbiddenBand);
    }
    let correct = rows.iter().filter(|r| r.correct == Some(true)).count();
    Ok(SwitchReport { sigma_n: cat.sigma_n(), rows, evaluated, correct })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub worst: f64,
    pub tol: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn suite(name: &str, tol: f64, metrics: Vec<f64>) -> SuiteResult {
    SuiteResult {
        name: name.into(),
        cases: metrics.len(),
        failures: metrics.iter().filter(|&&x| !(x <= tol)).count(),
        worst: metrics.iter().cloned().fold(0.0, f64::max),
        tol,
    }
}

fn random_tanh(rng: &mut ChaCha8Rng) -> PotentialModel {
    let n = rng.gen_range(1..=2);
    let mut factors = vec![];
    for i in 0..n {
        let p = [1, 2, 3][rng.gen_range(0..3)];
        let b = if n == 1 { 0.0 } else { 2.5 * (2.0 * i as f64 - 1.0) };
        factors.push((p, rng.gen_range(0.7..1.5), b + rng.gen_range(-0.3..0.3)));
    }
    PotentialModel::tanh_product(rng.gen_range(0.5..1.5), &factors).expect("valid tanh product")
}

fn monomial(m: usize, v: f64) -> PotentialModel {
    let mut coeffs = vec![0.0; m + 1];
    coeffs[m] = v / factorial(m);
    PotentialModel::new(Family::PolynomialWindowed { coeffs, inner: 6.0, outer: 8.0 }).expect("valid monomial")
}

fn suite_propagator(rng: &mut ChaCha8Rng, tol: f64) -> Result<SuiteResult> {
    let mut metrics = vec![];
    for _ in 0..6 {
        let model = random_tanh(rng);
        let eps = rng.gen_range(0.01..0.3);
        let h = rng.gen_range(0.02..0.1);
        let (t0, t1) = (rng.gen_range(-6.0..-3.0), rng.gen_range(3.0..6.0));
        let tm = rng.gen_range(t0..t1);
        let o = PropagatorOptions::with_tol(tol);
        let full = fundamental_matrix(&model, eps, h, t0, t1, &o)?;
        let a = fundamental_matrix(&model, eps, h, t0, tm, &o)?;
        let b = fundamental_matrix(&model, eps, h, tm, t1, &o)?;
        metrics.push(unitarity_defect(&full.matrix));
        metrics.push(max_abs(&(b.matrix * a.matrix - full.matrix)));
    }
    Ok(suite("propagator unitarity/composition", 1e3 * tol, metrics))
}

fn suite_msa(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    let mut metrics = vec![];
    for _ in 0..6 {
        let m = rng.gen_range(2..=3);
        let v = rng.gen_range(0.5..3.0);
        let model = monomial(m, v);
        let h: f64 = rng.gen_range(0.01..0.05);
        let eps = rng.gen_range(0.02..0.1) * h.powf(m as f64 / (m as f64 + 1.0));
        let (lo, hi) = (-rng.gen_range(1.0..1.5), rng.gen_range(1.0..1.5));
        let g = Grid::new(&model, lo, hi, 0.0, h, 2048)?;
        let a = g.t[rng.gen_range(0..g.len())];
        let w1 = msa_solution(&g, eps, Which::W1, a, a, 3)?;
        let w2 = msa_solution(&g, eps, Which::W2, a, a, 3)?;
        metrics.push(symmetry_defect(&w1, &w2));
    }
    Ok(suite("MSA symmetry", 1e-10, metrics))
}

fn suite_norm_scaling(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    // h^{m/(m+1)} times the K-norm ratio stays bounded along an h ladder.
    let mut metrics = vec![];
    for _ in 0..3 {
        let m = rng.gen_range(2..=3);
        let model = monomial(m, rng.gen_range(0.5..2.0));
        let (f0, f1) = (rng.gen_range(0.5..1.5), rng.gen_range(-0.5..0.5));
        let mut vals = vec![];
        for h in [0.04f64, 0.02, 0.01, 0.005] {
            let g = Grid::new(&model, -1.0, 1.0, 0.0, h, 2048)?;
            let f: Vec<C64> = g.t.iter().map(|&s| c(f0 + f1 * s, 0.0)).collect();
            vals.push(k_norm_ratio(&g, Sign::Plus, -1.0, &f, m)? * h.powf(m as f64 / (m as f64 + 1.0)));
        }
        let (lo, hi) = vals.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        metrics.push(hi / lo - 1.0);
    }
    Ok(suite("norm scaling", 1.0, metrics))
}

fn suite_stationary_phase(rng: &mut ChaCha8Rng) -> Result<SuiteResult> {
    // Metrics are normalized by their own tolerance.
    // Gaussian-regulated Fresnel integral in closed form, to 1e-9.
    let mut metrics = vec![];
    let model = monomial(1, 1.0);
    for _ in 0..4 {
        let d = rng.gen_range(0.8..2.0);
        let h = rng.gen_range(0.01..0.1);
        let got = osc_integral(&model, (-6.5, 6.5), 0.0, h, |t| c((-d * t * t).exp(), 0.0), PhaseSign::Plus)?;
        let exact = (c(std::f64::consts::PI, 0.0) / c(d, -1.0 / h)).sqrt();
        metrics.push((got - exact).norm() / 1e-9);
    }
    // Leading term dominates: the remainder shrinks relative to h^{1/(m+1)}.
    for m in 2..=3usize {
        let v = rng.gen_range(0.5..2.0);
        let model = monomial(m, v);
        let rel = |h: f64| -> Result<f64> {
            let got = osc_integral(&model, (-3.0, 3.0), 0.0, h, |t| c((-t * t).exp() * (1.0 + 0.5 * t), 0.0), PhaseSign::Plus)?;
            let lead = omega_m(m, v) * h.powf(1.0 / (m as f64 + 1.0));
            Ok((got - lead).norm() / lead.norm())
        };
        metrics.push(rel(0.0025)? / rel(0.04)? / 0.7);
    }
    Ok(suite("stationary phase", 1.0, metrics))
}

fn random_su2(rng: &mut ChaCha8Rng, beta_max: f64) -> Su2 {
    let b = C64::from_polar(rng.gen_range(0.0..beta_max), rng.gen_range(0.0..6.3));
    let a = C64::from_polar((1.0 - b.norm_sqr()).sqrt(), rng.gen_range(0.0..6.3));
    Su2::new(a, b)
}

/// Random chains: |tau21 expansion - exact|/mu^2 and the exact product's defect.
pub fn su2_chain_check(rng: &mut ChaCha8Rng, count: usize, mu_val: f64) -> (f64, f64) {
    let mut worst_k = 0.0f64;
    let mut worst_u = 0.0f64;
    for _ in 0..count {
        let n = rng.gen_range(1..=6);
        let mut alpha = vec![];
        let mut beta = vec![];
        let mut nu = vec![];
        let mut factors = vec![];
        for k in 0..n {
            let f = random_su2(rng, mu_val);
            alpha.push(f.a);
            beta.push(f.b);
            factors.push(f);
            let phase = C64::from_polar(1.0, rng.gen_range(0.0..6.3));
            nu.push(phase);
            if k + 1 < n {
                factors.push(Su2::new(phase, c(0.0, 0.0)));
            }
        }
        nu[n - 1] = c(1.0, 0.0);
        // product right to left: T_1 T_{12} T_2 ... with T_1 leftmost
        let exact = su2_chain_product(&factors);
        worst_u = worst_u.max(unitarity_defect(&exact.matrix()));
        let (tau, _) = tau21_perturbative(&alpha, &beta, &nu);
        worst_k = worst_k.max((tau - exact.b).norm() / (mu_val * mu_val));
    }
    (worst_k, worst_u)
}

fn suite_su2(rng: &mut ChaCha8Rng) -> SuiteResult {
    let (k, u) = su2_chain_check(rng, 200, 1e-2);
    suite("SU(2) chains", 1e-12, vec![u, if k.is_finite() && k < 100.0 { 0.0 } else { 1.0 }])
}

fn suite_jost(rng: &mut ChaCha8Rng, tol: f64) -> Result<SuiteResult> {
    let mut metrics = vec![];
    for _ in 0..3 {
        let model = random_tanh(rng);
        let eps = rng.gen_range(0.05..0.3);
        let h: f64 = rng.gen_range(0.05..0.15);
        let o = ScatteringOptions::with_tol(tol);
        let base = scattering_matrix(&model, eps, h, &o)?;
        let far = ScatteringOptions { t_right: Some(base.t_right * 1.5), t_left: Some(base.t_left * 1.5), ..o };
        let r = scattering_matrix(&model, eps, h, &far)?;
        metrics.push((r.p - base.p).abs());
        metrics.push(base.unitarity_defect);
        // Moving the connector anchors leaves the predicted P unchanged.
        let cat = model.crossings()?;
        let regimes = vec![Regime::NonAdiabatic; cat.len()];
        let small = 0.05 * h.powf(cat.m_star as f64 / (cat.m_star as f64 + 1.0));
        let near = crate::transfer::predicted_scattering(&model, &cat, small, h, &regimes, crate::transfer::Anchors::default())?;
        let moved = crate::transfer::Anchors {
            right: Some(crate::scattering::default_anchor(&model, &cat, crate::potential::Side::Right) + 1.0),
            left: Some(crate::scattering::default_anchor(&model, &cat, crate::potential::Side::Left) - 1.0),
        };
        let far = crate::transfer::predicted_scattering(&model, &cat, small, h, &regimes, moved)?;
        metrics.push((near.p - far.p).abs());
    }
    Ok(suite("Jost anchor/truncation", 1e4 * tol, metrics))
}

/// All property suites with a fixed seed.
pub fn verify(seed: u64, tol: f64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        suite_propagator(&mut rng, tol)?,
        suite_msa(&mut rng)?,
        suite_norm_scaling(&mut rng)?,
        suite_stationary_phase(&mut rng)?,
        suite_su2(&mut rng),
        suite_jost(&mut rng, tol)?,
    ])
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub schema: u32,
    pub config_hash: String,
    pub version: String,
    pub wall_seconds: f64,
}

impl RunMeta {
    pub fn new(config_hash: String, wall_seconds: f64) -> Self {
        Self { schema: CSV_SCHEMA, config_hash, version: env!("CARGO_PKG_VERSION").into(), wall_seconds }
    }
}

pub fn write_json<T: Serialize>(path: &Path, meta: &RunMeta, body: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let v = serde_json::json!({ "meta": meta, "report": body });
    std::fs::write(path, serde_json::to_string_pretty(&v)?)?;
    Ok(())
}
