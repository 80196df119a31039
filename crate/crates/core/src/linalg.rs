//! 2x2 complex helpers.

use nalgebra::Matrix2;
use num_complex::Complex64 as C64;

pub type Mat2 = Matrix2<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn mat(a: C64, b: C64, cc: C64, d: C64) -> Mat2 {
    Mat2::new(a, b, cc, d)
}

pub fn identity() -> Mat2 {
    Mat2::identity()
}

pub fn diag(a: C64, d: C64) -> Mat2 {
    mat(a, c(0.0, 0.0), c(0.0, 0.0), d)
}

/// Q = [[0, 1], [1, 0]]
pub fn q() -> Mat2 {
    mat(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

/// J = [[0, -1], [1, 0]]
pub fn j() -> Mat2 {
    mat(c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

/// exp(-i tau [[a, b], [conj b, -a]]) for real a.
pub fn exp_herm_traceless(a: f64, b: C64, tau: f64) -> Mat2 {
    let r = (a * a + b.norm_sqr()).sqrt();
    let (s, co) = (tau * r).sin_cos();
    let sr = if r > 0.0 { s / r } else { tau };
    let mi = c(0.0, -sr);
    mat(c(co, 0.0) + mi * a, mi * b, mi * b.conj(), c(co, 0.0) - mi * a)
}

/// max |(M^H M - I)_{ij}|
pub fn unitarity_defect(m: &Mat2) -> f64 {
    let p = m.adjoint() * m - Mat2::identity();
    p.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs(m: &Mat2) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}
