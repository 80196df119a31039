use crossings::fit::fit_line;
use crossings::harness::GridSpec;
use crossings::linalg::{c, exp_herm_traceless, unitarity_defect};
use crossings::oscillatory::omega_m;
use crossings::potential::{PotentialModel, Regime};
use crossings::predictor::{delta_star, gamma_star, interference_zeros, mixed_leading, ThetaConvention};
use crossings::propagator::{fundamental_matrix, PropagatorOptions};
use crossings::scattering::{free_basis, jost_angle};
use crossings::transfer::{mu, su2_chain_product, tau21_perturbative, tau21_sq_unit_alpha, Su2};
use crossings::C64;
use proptest::prelude::*;
use std::f64::consts::PI;

fn su2() -> impl Strategy<Value = Su2> {
    (0.0..1.0f64, 0.0..6.3f64, 0.0..6.3f64).prop_map(|(r, pa, pb)| {
        let b = C64::from_polar(r, pb);
        Su2::new(C64::from_polar((1.0 - r * r).sqrt(), pa), b)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn su2_products_stay_in_su2(fs in prop::collection::vec(su2(), 1..12)) {
        let p = su2_chain_product(&fs);
        prop_assert!(p.det_defect() < 1e-12);
        prop_assert!(unitarity_defect(&p.matrix()) < 1e-12);
        let inv = p.mul(&p.inverse());
        prop_assert!((inv.a - c(1.0, 0.0)).norm() < 1e-12 && inv.b.norm() < 1e-12);
    }

    #[test]
    fn q_conjugation_is_an_involution(f in su2()) {
        let g = f.q_conj().q_conj();
        prop_assert!((g.a - f.a).norm() < 1e-15 && (g.b - f.b).norm() < 1e-15);
    }

    #[test]
    fn gamma_matches_omega(m in 1usize..9, v in 0.05..20.0f64, neg in any::<bool>()) {
        let v = if neg && m % 2 == 1 { -v } else { v };
        let w = omega_m(m, v);
        let g = gamma_star(m) * v.abs().powf(-2.0 / (m as f64 + 1.0));
        prop_assert!((g - w.norm_sqr()).abs() < 1e-10 * g);
        if m % 2 == 1 {
            prop_assert!((omega_m(m, -v) - w.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn expansion_unit_alpha_is_modulus_squared(
        n in 1usize..7,
        seed in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, 0.0..6.3f64), 7),
        scale in 1e-4..1e-2f64,
    ) {
        let beta: Vec<C64> = seed[..n].iter().map(|&(x, y, _)| c(x, y) * scale).collect();
        let mut nu: Vec<C64> = seed[..n].iter().map(|&(_, _, p)| C64::from_polar(1.0, p)).collect();
        nu[n - 1] = c(1.0, 0.0);
        let ones = vec![c(1.0, 0.0); n];
        let (tau, sq) = tau21_perturbative(&ones, &beta, &nu);
        prop_assert!((tau.norm_sqr() - sq).abs() < 1e-12 * scale * scale);
        prop_assert!((tau21_sq_unit_alpha(&beta, &nu) - sq).abs() < 1e-18);
    }

    #[test]
    fn delta_star_is_nonnegative(b in 1.5..3.0f64, s in 0.7..1.4f64, h in 1e-3..5e-2f64, odd in any::<bool>()) {
        let p = if odd { 3 } else { 2 };
        let model = PotentialModel::tanh_product(1.0, &[(p, 1.0, b), (p, s, -b)]).unwrap();
        let cat = model.crossings().unwrap();
        prop_assert!(delta_star(&model, &cat, h, ThetaConvention::Full) >= -1e-12);
    }

    #[test]
    fn ladder_zeros_kill_delta(b in 1.5..3.0f64, odd in any::<bool>()) {
        let p = if odd { 3 } else { 2 };
        let model = PotentialModel::tanh_product(1.0, &[(p, 1.0, b), (p, 1.0, -b)]).unwrap();
        let cat = model.crossings().unwrap();
        for z in interference_zeros(&model, &cat, 5e-3, 1e-2, ThetaConvention::Full) {
            prop_assert!(delta_star(&model, &cat, z.h, ThetaConvention::Full).abs() < 1e-9);
        }
    }

    #[test]
    fn hermitian_exponential_is_unitary(a in -3.0..3.0f64, br in -3.0..3.0f64, bi in -3.0..3.0f64, tau in 0.01..100.0f64) {
        let u = exp_herm_traceless(a, c(br, bi), tau);
        prop_assert!(unitarity_defect(&u) < 1e-12);
        prop_assert!((u.determinant() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn jost_angles_and_free_basis(v in -5.0..5.0f64, eps in 1e-4..1.0f64, h in 1e-3..1.0f64, t in -50.0..50.0f64) {
        let th = jost_angle(v, eps);
        prop_assert!(th.abs() <= PI / 2.0 + 1e-15);
        prop_assert!(unitarity_defect(&free_basis(v, eps, h, t)) < 1e-10);
    }

    #[test]
    fn fixed_mu_path_holds_mu(m in 1usize..6, target in 1e-3..1.0f64, h0 in 1e-4..1e-2f64) {
        let g = GridSpec::FixedMu { mu: target, m, h: vec![h0, 2.0 * h0, 4.0 * h0] };
        for (e, h) in g.points() {
            prop_assert!((mu(m, e, h) - target).abs() < 1e-12 * target);
        }
    }

    #[test]
    fn line_fit_recovers_lines(a in -5.0..5.0f64, b in -5.0..5.0f64) {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (i as f64 * 0.3, a * i as f64 * 0.3 + b)).collect();
        let (s, i, r2) = fit_line(&pts);
        prop_assert!((s - a).abs() < 1e-10 && (i - b).abs() < 1e-10);
        prop_assert!(a.abs() < 1e-8 || r2 > 1.0 - 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn propagator_is_unitary_and_composes(
        s in 0.7..1.4f64,
        eps in 0.01..0.3f64,
        h in 0.03..0.1f64,
        tm in -2.0..2.0f64,
    ) {
        let model = PotentialModel::tanh_product(1.0, &[(3, s, 0.0)]).unwrap();
        let o = PropagatorOptions::with_tol(1e-11);
        let full = fundamental_matrix(&model, eps, h, -4.0, 4.0, &o).unwrap();
        let a = fundamental_matrix(&model, eps, h, -4.0, tm, &o).unwrap();
        let b = fundamental_matrix(&model, eps, h, tm, 4.0, &o).unwrap();
        prop_assert!(unitarity_defect(&full.matrix) < 1e-8);
        prop_assert!(crossings::linalg::max_abs(&(b.matrix * a.matrix - full.matrix)) < 1e-7);
    }

    #[test]
    fn mixed_parity_counts_odd_adiabatic(pattern in prop::collection::vec(any::<bool>(), 3)) {
        let model = PotentialModel::tanh_product(1.0, &[(1, 1.0, 3.0), (3, 1.0, 0.0), (2, 1.0, -3.0)]).unwrap();
        let cat = model.crossings().unwrap();
        let regimes: Vec<Regime> = pattern.iter().map(|&a| if a { Regime::Adiabatic } else { Regime::NonAdiabatic }).collect();
        let n_odd = (0..3).filter(|&k| regimes[k] == Regime::Adiabatic && cat.crossings[k].m % 2 == 1).count();
        let t2 = mixed_leading(&model, &cat, 1e-3, 1e-2, &regimes).unwrap();
        prop_assert_eq!(t2.n_odd_adiabatic, n_odd);
        prop_assert_eq!(t2.parity_odd, (cat.sigma_n() + n_odd) % 2 == 1);
    }
}
