//! Least-squares helpers for rate fits.

/// Fit y = slope x + intercept. Returns (slope, intercept, r^2).
pub fn fit_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Slope of log y against log x.
pub fn loglog_slope(pts: &[(f64, f64)]) -> (f64, f64) {
    let l: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.abs().ln())).collect();
    let (s, _, r2) = fit_line(&l);
    (s, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 - 1.0)).collect();
        let (s, b, r2) = fit_line(&pts);
        assert!((s - 2.0).abs() < 1e-14 && (b + 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
        let pw: Vec<(f64, f64)> = (1..6).map(|i| (i as f64, 3.0 * (i as f64).powf(1.5))).collect();
        assert!((loglog_slope(&pw).0 - 1.5).abs() < 1e-12);
    }
}
