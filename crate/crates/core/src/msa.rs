//! Successive approximations near a single crossing.
//!
//! Functions live on a uniform grid over an interval I. The phase is measured
//! from the crossing t_k, so u^+(t) = exp(-(i/h) int_{t_k}^t V) and u^- = 1/u^+.

use crate::error::{Error, Result};
use crate::linalg::{c, diag, Mat2};
use crate::oscillatory::PhaseTable;
use crate::potential::PotentialModel;
use crate::propagator::{fundamental_matrix, PropagatorOptions};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Radians of (2/h)|V| per grid step allowed before the grid is refined.
pub const MAX_PHASE_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsaOptions {
    pub grid_points: usize,
    pub depth: usize,
    /// Also evaluate on the doubled grid and report the difference.
    pub richardson: bool,
}

impl Default for MsaOptions {
    fn default() -> Self {
        Self { grid_points: 4096, depth: 3, richardson: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    W1,
    W2,
}

/// Uniform grid with u^+ tabulated.
#[derive(Debug, Clone)]
pub struct Grid {
    pub t: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub h: f64,
    up: Vec<C64>,
}

impl Grid {
    /// At least `min_points` nodes, refined so the phase step stays below MAX_PHASE_STEP.
    pub fn new(model: &PotentialModel, lo: f64, hi: f64, t0: f64, h: f64, min_points: usize) -> Result<Self> {
        if !(lo < hi) || !(lo..=hi).contains(&t0) {
            return Err(Error::Config(format!("grid [{lo}, {hi}] must contain t0 = {t0}")));
        }
        let probe = 2048;
        let vmax = (0..=probe)
            .map(|i| model.eval(lo + (hi - lo) * i as f64 / probe as f64).abs())
            .fold(0.0f64, f64::max);
        let need = ((hi - lo) * 2.0 * vmax / h / MAX_PHASE_STEP).ceil() as usize + 1;
        Ok(Self::with_points(model, lo, hi, t0, h, min_points.max(need).max(8)))
    }

    pub fn with_points(model: &PotentialModel, lo: f64, hi: f64, t0: f64, h: f64, n: usize) -> Self {
        let dt = (hi - lo) / (n - 1) as f64;
        let t: Vec<f64> = (0..n).map(|i| if i == n - 1 { hi } else { lo + dt * i as f64 }).collect();
        let table = PhaseTable::new(model, t0, &t);
        let up = t.iter().map(|&s| C64::from_polar(1.0, -table.phi(s) / h)).collect();
        Self { t, dt, t0, h, up }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn refined(&self, model: &PotentialModel) -> Self {
        Self::with_points(model, self.t[0], *self.t.last().unwrap(), self.t0, self.h, 2 * self.len() - 1)
    }

    pub fn u(&self, sign: Sign) -> Vec<C64> {
        match sign {
            Sign::Plus => self.up.clone(),
            Sign::Minus => self.up.iter().map(|z| z.conj()).collect(),
        }
    }

    fn u_at(&self, sign: Sign, i: usize) -> C64 {
        match sign {
            Sign::Plus => self.up[i],
            Sign::Minus => self.up[i].conj(),
        }
    }

    /// Index of the node at `a`; base points must sit on the grid.
    pub fn node(&self, a: f64) -> Result<usize> {
        let x = (a - self.t[0]) / self.dt;
        let i = x.round();
        if i < 0.0 || i as usize >= self.len() || (x - i).abs() > 1e-6 {
            return Err(Error::Config(format!("base point {a} is not a grid node")));
        }
        Ok(i as usize)
    }
}

/// Cumulative int_{t_a}^{t_i} g on the grid, fourth order.
pub fn cumulative(g: &[C64], dt: f64, ia: usize) -> Vec<C64> {
    let n = g.len();
    let w = dt / 24.0;
    let step = |i: usize| -> C64 {
        // integral over [t_i, t_{i+1}]
        if n < 4 {
            return (g[i] + g[i + 1]) * (dt / 2.0);
        }
        if i == 0 {
            (g[0] * 9.0 + g[1] * 19.0 - g[2] * 5.0 + g[3]) * w
        } else if i == n - 2 {
            (g[n - 4] - g[n - 3] * 5.0 + g[n - 2] * 19.0 + g[n - 1] * 9.0) * w
        } else {
            ((g[i] + g[i + 1]) * 13.0 - g[i - 1] - g[i + 2]) * w
        }
    };
    let mut out = vec![c(0.0, 0.0); n];
    for i in ia + 1..n {
        out[i] = out[i - 1] + step(i - 1);
    }
    for i in (0..ia).rev() {
        out[i] = out[i + 1] - step(i);
    }
    out
}

/// K_a^{+-} f = (i/h) u^{+-}(t) int_a^t f/u^{+-}.
pub fn apply_k(grid: &Grid, sign: Sign, ia: usize, f: &[C64]) -> Vec<C64> {
    let other = if sign == Sign::Plus { Sign::Minus } else { Sign::Plus };
    let g: Vec<C64> = f.iter().enumerate().map(|(i, &v)| v * grid.u_at(other, i)).collect();
    let cum = cumulative(&g, grid.dt, ia);
    let ih = c(0.0, 1.0 / grid.h);
    cum.iter().enumerate().map(|(i, &s)| ih * grid.u_at(sign, i) * s).collect()
}

fn sup(f: &[C64]) -> f64 {
    f.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MsaSolution {
    pub which: Which,
    pub a_plus: f64,
    pub a_minus: f64,
    pub depth: usize,
    pub t: Vec<f64>,
    pub psi1: Vec<C64>,
    pub psi2: Vec<C64>,
    /// sup norms of the successive terms (eps^2 K K)^k u
    pub term_norms: Vec<f64>,
    /// Geometric estimate of the dropped terms.
    pub tail_bound: f64,
}

pub fn msa_solution(grid: &Grid, eps: f64, which: Which, a_plus: f64, a_minus: f64, depth: usize) -> Result<MsaSolution> {
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    let ip = grid.node(a_plus)?;
    let im = grid.node(a_minus)?;
    let e2 = eps * eps;
    // W1: x_{k+1} = eps^2 K^+ K^- x_k starting from u^+; W2 mirrors it.
    let (start, inner, ii, outer, io) = match which {
        Which::W1 => (Sign::Plus, Sign::Minus, im, Sign::Plus, ip),
        Which::W2 => (Sign::Minus, Sign::Plus, ip, Sign::Minus, im),
    };
    let mut term = grid.u(start);
    let mut sum = term.clone();
    let mut norms = vec![sup(&term)];
    for k in 1..=depth {
        let next: Vec<C64> = apply_k(grid, outer, io, &apply_k(grid, inner, ii, &term)).iter().map(|z| z * e2).collect();
        let nrm = sup(&next);
        let prev = norms[k - 1];
        if prev > 0.0 && nrm >= prev && nrm > 1e-300 {
            return Err(Error::SeriesNotContracting { ratio: nrm / prev, depth: k });
        }
        norms.push(nrm);
        for (s, x) in sum.iter_mut().zip(&next) {
            *s += x;
        }
        term = next;
    }
    let other: Vec<C64> = apply_k(grid, inner, ii, &sum).iter().map(|z| -z * eps).collect();
    let ratio = if norms[depth - 1] > 0.0 { norms[depth] / norms[depth - 1] } else { 0.0 };
    let tail_bound = norms[depth] * ratio / (1.0 - ratio).max(1e-300);
    let (psi1, psi2) = match which {
        Which::W1 => (sum, other),
        Which::W2 => (other, sum),
    };
    Ok(MsaSolution { which, a_plus, a_minus, depth, t: grid.t.clone(), psi1, psi2, term_norms: norms, tail_bound })
}

impl MsaSolution {
    /// max |i h psi' - H psi| / max(|V|, eps) over interior nodes, fourth-order differences.
    pub fn residual(&self, model: &PotentialModel, eps: f64, h: f64) -> f64 {
        let n = self.t.len();
        if n < 5 {
            return f64::NAN;
        }
        let dt = self.t[1] - self.t[0];
        let d = |f: &[C64], i: usize| (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) / (12.0 * dt);
        let mut worst = 0.0f64;
        for i in 2..n - 2 {
            let v = model.eval(self.t[i]);
            let r1 = c(0.0, h) * d(&self.psi1, i) - (self.psi1[i] * v + self.psi2[i] * eps);
            let r2 = c(0.0, h) * d(&self.psi2, i) - (self.psi1[i] * eps - self.psi2[i] * v);
            worst = worst.max(r1.norm().max(r2.norm()) / v.abs().max(eps).max(1e-300));
        }
        worst
    }

    pub fn at(&self, i: usize) -> [C64; 2] {
        [self.psi1[i], self.psi2[i]]
    }
}

/// max |[[0,1],[-1,0]] conj(w2) - w1| pointwise.
pub fn symmetry_defect(w1: &MsaSolution, w2: &MsaSolution) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..w1.t.len() {
        let a = (w2.psi2[i].conj() - w1.psi1[i]).norm();
        let b = (-w2.psi1[i].conj() - w1.psi2[i]).norm();
        worst = worst.max(a.max(b));
    }
    worst
}

/// ||f||_q = sup|f| + h^q sup|f'| with f' from central differences. Returns the
/// norm and the change in the derivative term when the difference step doubles.
pub fn norm_q(f: &[C64], dt: f64, h: f64, q: f64) -> (f64, f64) {
    let n = f.len();
    let deriv = |k: usize| -> f64 {
        let mut m = 0.0f64;
        for i in k..n - k {
            m = m.max(((f[i + k] - f[i - k]) / (2.0 * k as f64 * dt)).norm());
        }
        m
    };
    let d1 = deriv(1);
    let d2 = deriv(2);
    let s = h.powf(q);
    (sup(f) + s * d1, s * (d1 - d2).abs())
}

/// ||(u^{+-})^{-1} K_a^{+-}(u^{-+} f)||_q / ||f||_q with q = 1/(m+1).
pub fn k_norm_ratio(grid: &Grid, sign: Sign, a: f64, f: &[C64], m: usize) -> Result<f64> {
    let ia = grid.node(a)?;
    let other = if sign == Sign::Plus { Sign::Minus } else { Sign::Plus };
    let uf: Vec<C64> = f.iter().enumerate().map(|(i, &v)| v * grid.u_at(other, i)).collect();
    let kf = apply_k(grid, sign, ia, &uf);
    let g: Vec<C64> = kf.iter().enumerate().map(|(i, &v)| v * grid.u_at(other, i)).collect();
    let q = 1.0 / (m + 1) as f64;
    let num = norm_q(&g, grid.dt, grid.h, q).0;
    let den = norm_q(f, grid.dt, grid.h, q).0;
    Ok(num / den)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionResult {
    pub t: Mat2,
    pub grid_points: usize,
    /// |T_N - T_2N| when the doubled grid was evaluated.
    pub richardson_error: Option<f64>,
    pub tail_bound: f64,
    pub symmetry_defect: f64,
}

fn connection_on(grid: &Grid, eps: f64, ell: f64, depth: usize) -> Result<(Mat2, f64, f64)> {
    let w1 = msa_solution(grid, eps, Which::W1, ell, ell, depth)?;
    let w2 = msa_solution(grid, eps, Which::W2, ell, ell, depth)?;
    let n = grid.len() - 1;
    let up = grid.u_at(Sign::Plus, n);
    let um = grid.u_at(Sign::Minus, n);
    let t = diag(um, up) * Mat2::new(w1.psi1[n], w2.psi1[n], w1.psi2[n], w2.psi2[n]);
    Ok((t, w1.tail_bound.max(w2.tail_bound), symmetry_defect(&w1, &w2)))
}

/// T with (w_{1,l} w_{2,l}) = (w_{1,r} w_{2,r}) T, evaluated at t = r.
pub fn connection_t_numeric(
    model: &PotentialModel,
    eps: f64,
    h: f64,
    t_k: f64,
    ell: f64,
    r: f64,
    opts: &MsaOptions,
) -> Result<ConnectionResult> {
    let grid = Grid::new(model, ell, r, t_k, h, opts.grid_points)?;
    let (t, tail_bound, sym) = connection_on(&grid, eps, ell, opts.depth)?;
    let (t, richardson_error) = if opts.richardson {
        let fine = grid.refined(model);
        let (t2, _, _) = connection_on(&fine, eps, ell, opts.depth)?;
        (t2, Some(crate::linalg::max_abs(&(t2 - t))))
    } else {
        (t, None)
    };
    Ok(ConnectionResult { t, grid_points: grid.len(), richardson_error, tail_bound, symmetry_defect: sym })
}

/// Same T from the propagator: diag(u^-(r), u^+(r)) M(r, l) diag(u^+(l), u^-(l)).
pub fn connection_t_propagator(
    model: &PotentialModel,
    eps: f64,
    h: f64,
    t_k: f64,
    ell: f64,
    r: f64,
    opts: &PropagatorOptions,
) -> Result<Mat2> {
    let m = fundamental_matrix(model, eps, h, ell, r, opts)?.matrix;
    let up = |t: f64| C64::from_polar(1.0, -model.integral(t_k, t) / h);
    let (ur, ul) = (up(r), up(ell));
    Ok(diag(ur.conj(), ur) * m * diag(ul, ul.conj()))
}
