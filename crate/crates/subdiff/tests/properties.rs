//! Randomized checks of the structural invariants: weight signs and sums,
//! symbol identities, scheme stability and linearity, oracle sanity, and
//! the rate estimator. Deterministic spot values live in the module tests;
//! these sweep the parameter boxes.

use num_complex::Complex64;
use proptest::prelude::*;

use subdiff::cq::{be_cq_weights, beta_tau, mu, mu0, SymbolSample};
use subdiff::fem::{build_interval_space, l2_project};
use subdiff::harness::estimate_rate;
use subdiff::oracles::{catalog, mittag_leffler, ode_power_solution};
use subdiff::stepper::{advance_final, advance_scalar, SchemeConfig, Variant};

fn variant_strategy() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Uncorrected),
        Just(Variant::Corrected2),
        Just(Variant::Corrected3),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// b_0 = 1, every later weight is negative, and the partial sums are
    /// positive, strictly decreasing, and satisfy the shifted recurrence
    /// s_n = s_{n-1} (n - alpha) / n.
    #[test]
    fn weight_invariants_hold(alpha in 0.01f64..0.995, n_max in 50usize..800) {
        let w = be_cq_weights(alpha, n_max).unwrap().weights;
        prop_assert_eq!(w[0], 1.0);
        let mut partial = w[0];
        for (j, &b) in w.iter().enumerate().skip(1) {
            prop_assert!(b < 0.0, "b_{} = {} at alpha {}", j, b, alpha);
            let predicted = partial * (j as f64 - alpha) / j as f64;
            partial += b;
            prop_assert!(partial > 0.0);
            prop_assert!((partial - predicted).abs() <= 1e-11 * predicted.abs() + 1e-300);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The partial sum at depth n tracks n^{-alpha} / Gamma(1 - alpha).
    #[test]
    fn weight_tail_matches_power_decay(alpha in 0.05f64..0.95) {
        let n = 1000usize;
        let w = be_cq_weights(alpha, n).unwrap().weights;
        let s: f64 = w.iter().sum();
        let scaled = s * libm::tgamma(1.0 - alpha) * (n as f64).powf(alpha);
        prop_assert!(
            (scaled - 1.0).abs() < 0.01,
            "scaled tail {} at alpha {}",
            scaled,
            alpha
        );
    }

    /// Real coefficients force conjugate symmetry of all three symbols.
    #[test]
    fn symbols_respect_conjugation(
        alpha in 0.05f64..0.999,
        log_tau in -5.0f64..-1.0,
        angle in 0.01f64..3.13,
    ) {
        let tau = 10f64.powf(log_tau);
        let xi = Complex64::new(angle.cos(), angle.sin());
        let b = beta_tau(xi, alpha, tau).unwrap();
        let bc = beta_tau(xi.conj(), alpha, tau).unwrap();
        prop_assert!((bc - b.conj()).norm() <= 1e-12 * b.norm().max(1.0));
        let m = mu(xi, alpha).unwrap();
        let mc = mu(xi.conj(), alpha).unwrap();
        prop_assert!((mc - m.conj()).norm() <= 1e-12 * m.norm().max(1.0));
        let m0 = mu0(xi, alpha).unwrap();
        let m0c = mu0(xi.conj(), alpha).unwrap();
        prop_assert!((m0c - m0.conj()).norm() <= 1e-12 * m0.norm().max(1.0));
    }

    /// For |z tau| small the discrete symbol agrees with z to second order.
    /// A literal 1 - e^{-z tau} would leave cancellation noise orders of
    /// magnitude above this tolerance.
    #[test]
    fn symbol_tracks_z_without_cancellation(
        alpha in 0.1f64..0.95,
        z_abs in 1e-3f64..1.0,
        angle in -1.5f64..1.5,
    ) {
        let tau = 1e-6;
        let z = Complex64::from_polar(z_abs, angle);
        let s = SymbolSample::at(z, alpha, tau).unwrap();
        let rel = (s.beta / z - Complex64::new(1.0, 0.0)).norm();
        prop_assert!(rel < 1e-10, "rel defect {} at z {}", rel, z);
    }

    /// E_alpha(-x) behaves like a relaxation profile: inside (0, 1) and
    /// decreasing in x.
    #[test]
    fn mittag_leffler_relaxation_shape(
        alpha in 0.25f64..1.0,
        x in 0.01f64..3.0,
        factor in 1.1f64..3.0,
    ) {
        let e1 = mittag_leffler(alpha, -x).unwrap();
        let e2 = mittag_leffler(alpha, -x * factor).unwrap();
        prop_assert!(e1 > 0.0 && e1 < 1.0);
        prop_assert!(e2 < e1);
    }

    /// alpha = 1 reduces to the exponential.
    #[test]
    fn mittag_leffler_alpha_one_is_exp(x in 0.0f64..5.0) {
        let e = mittag_leffler(1.0, -x).unwrap();
        prop_assert!((e - (-x).exp()).abs() < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The scalar scheme never blows up and has lost any start-up transient
    /// well before the final steps.
    #[test]
    fn scalar_scheme_stays_bounded(
        alpha in 0.05f64..0.999,
        log_lambda in -2.0f64..3.0,
        log_tau in -4.0f64..-0.31,
        variant in variant_strategy(),
    ) {
        let lambda = 10f64.powf(log_lambda);
        let tau = 10f64.powf(log_tau);
        let u = advance_scalar(alpha, lambda, 1.0, tau, 60, variant).unwrap();
        for &un in &u {
            prop_assert!(un.is_finite());
            prop_assert!(un.abs() <= 5.0, "|u| = {} at lambda {} tau {}", un.abs(), lambda, tau);
        }
        if lambda >= 0.1 {
            prop_assert!(u[60].abs() <= u[50].abs() * (1.0 + 1e-9) + 1e-30);
        }
    }

    /// At alpha = 1 the plain scheme is classical Crank-Nicolson exactly.
    #[test]
    fn alpha_one_collapses_to_crank_nicolson(
        lambda in 0.01f64..50.0,
        tau in 1e-3f64..0.2,
        u0 in -2.0f64..2.0,
    ) {
        let n = 30;
        let u = advance_scalar(1.0, lambda, u0, tau, n, Variant::Uncorrected).unwrap();
        let q = (1.0 - lambda * tau / 2.0) / (1.0 + lambda * tau / 2.0);
        for (k, &uk) in u.iter().enumerate() {
            prop_assert!((uk - u0 * q.powi(k as i32)).abs() <= 1e-11);
        }
    }

    /// The rate estimator recovers a pure power law to roundoff.
    #[test]
    fn rate_estimator_recovers_slope(p in 0.3f64..3.0, c in 1e-6f64..10.0) {
        let taus: Vec<f64> = (0..6).map(|i| 0.1 / 2f64.powi(i)).collect();
        let errors: Vec<f64> = taus.iter().map(|t| c * t.powf(p)).collect();
        let rates = estimate_rate(&taus, &errors);
        prop_assert!(rates[0].is_none());
        for r in rates.iter().skip(1) {
            let r = r.unwrap();
            prop_assert!((r - p).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The closed-form power solution satisfies the scalar equation
    /// D^alpha u = t^beta when the derivative is discretized by the L1
    /// rule, up to its own truncation error.
    #[test]
    fn power_rule_satisfies_equation(alpha in 0.25f64..0.85, beta in 0.8f64..2.0) {
        let t = 1.0;
        let n = 800usize;
        let tau = t / n as f64;
        let u = |s: f64| ode_power_solution(alpha, beta, s).unwrap();
        let mut acc = 0.0;
        for j in 0..n {
            let a_j = ((j + 1) as f64).powf(1.0 - alpha) - (j as f64).powf(1.0 - alpha);
            let hi = u(t - j as f64 * tau);
            let lo = u(t - (j + 1) as f64 * tau);
            acc += a_j * (hi - lo);
        }
        let deriv = acc / (libm::tgamma(2.0 - alpha) * tau.powf(alpha));
        let rhs = t.powf(beta);
        prop_assert!(
            (deriv - rhs).abs() <= 2e-2 * rhs,
            "L1 residual {} at alpha {} beta {}",
            (deriv - rhs).abs(),
            alpha,
            beta
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Projecting a function that already lies in the P1 space returns its
    /// own nodal coefficients.
    #[test]
    fn projection_reproduces_member_functions(
        coeffs in proptest::collection::vec(-2.0f64..2.0, 15),
    ) {
        let m = 16usize;
        let h = 1.0 / m as f64;
        let space = build_interval_space(m).unwrap();
        let vals = coeffs.clone();
        let f = move |p: [f64; 2]| {
            let x = p[0].clamp(0.0, 1.0);
            let cell = ((x / h) as usize).min(m - 1);
            let frac = x / h - cell as f64;
            let left = if cell == 0 { 0.0 } else { vals[cell - 1] };
            let right = if cell == m - 1 { 0.0 } else { vals[cell] };
            left * (1.0 - frac) + right * frac
        };
        let proj = l2_project(&space, &f);
        for (a, b) in proj.coeffs.iter().zip(&coeffs) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    /// The source-free evolution is linear in the initial data.
    #[test]
    fn evolution_is_linear_in_initial_data(
        alpha in 0.1f64..0.9,
        scale in -3.0f64..3.0,
        variant in variant_strategy(),
    ) {
        let space = build_interval_space(8).unwrap();
        let v = l2_project(&space, &|p| p[0] * (1.0 - p[0]));
        let mut sv = v.clone();
        sv.coeffs *= scale;
        let cfg = SchemeConfig { alpha, tau: 0.1, n_steps: 10, variant };
        let a = advance_final(&v, None, &cfg).unwrap();
        let b = advance_final(&sv, None, &cfg).unwrap();
        for (x, y) in a.coeffs.iter().zip(b.coeffs.iter()) {
            prop_assert!((scale * x - y).abs() <= 1e-12 * scale.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Every catalogued problem rejects orders outside (0, 1].
    #[test]
    fn catalog_rejects_bad_alpha(
        alpha in prop_oneof![-5.0f64..=0.0, 1.000001f64..10.0],
    ) {
        for id in ["ex1a", "ex1b", "sq_a", "sq_b", "sq_c", "sq_d"] {
            prop_assert!(catalog(id, alpha, Some(0.5)).is_err());
        }
    }

    /// The power-source problem needs an exponent in (0, 1).
    #[test]
    fn power_source_validates_exponent(
        bad in prop_oneof![-3.0f64..=0.0, 1.0f64..5.0],
        good in 0.01f64..0.99,
    ) {
        prop_assert!(catalog("sq_d", 0.5, Some(bad)).is_err());
        prop_assert!(catalog("sq_d", 0.5, None).is_err());
        prop_assert!(catalog("sq_d", 0.5, Some(good)).is_ok());
    }
}

#[test]
fn symbols_fix_the_point_one() {
    let one = Complex64::new(1.0, 0.0);
    for alpha in [0.1, 0.5, 0.9] {
        let m = mu(one, alpha).unwrap();
        let m0 = mu0(one, alpha).unwrap();
        assert!((m - one).norm() < 1e-14);
        assert!((m0 - one).norm() < 1e-14);
    }
}
