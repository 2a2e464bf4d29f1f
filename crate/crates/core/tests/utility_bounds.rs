use approx::assert_relative_eq;
use napp::bounds::{
    achievable_excess_risk, complexity_constant, empirical_risk_bound, excess_risk_bound,
    realized_overlay, realized_regularizer, sample_complexity, BoundParams, Guarantee, ProbeMode,
    RiskInputs,
};
use napp::{NappError, Penalty, RegularizerTarget};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inputs(guarantee: Guarantee, p: usize, n: usize) -> RiskInputs {
    RiskInputs {
        guarantee,
        p,
        zeta1: 1.0,
        zeta2: 1.0,
        r: 0.5,
        epsilon: 1.0,
        delta: Some(1e-3),
        n,
        n_e: 10_000,
        lpp0: 1.0,
        v_min: 1e-4,
    }
}

#[test]
fn empirical_bound_examples() {
    assert_eq!(empirical_risk_bound(0.0, 100, 10, 1.0, 0.1, 2.0, 2.0), 0.0);
    assert_relative_eq!(
        empirical_risk_bound(2.0, 100, 2, 1.0, 1.0, 1.5, 0.5),
        0.03,
        max_relative = 1e-14
    );
}

#[test]
fn b1_example() {
    // bracket = 1 / modulus + reg_gap = 1
    let inp = RiskInputs {
        n: 500,
        n_e: 1,
        v_min: 1e12,
        ..inputs(Guarantee::Eps, 16, 500)
    };
    let b1 = excess_risk_bound(&inp, 1.0 - 1e-12, 0.05).unwrap();
    let expected = (16.0 * 2.0 * 320f64.ln()).powi(2) / 500.0;
    assert_relative_eq!(b1, expected, max_relative = 1e-9);
    assert!((b1 - 68.1).abs() < 0.1);
}

#[test]
fn b2_formula() {
    let inp = inputs(Guarantee::EpsDelta, 8, 400);
    let bracket = 1.0 / inp.modulus() + 0.2;
    let expected =
        4.0 * 8.0 * (0.5 + (2.0f64 / 1e-3).ln()) * (1.0f64 / 0.05).ln() / 0.25 / 400.0 * bracket;
    assert_relative_eq!(
        excess_risk_bound(&inp, 0.2, 0.05).unwrap(),
        expected,
        max_relative = 1e-12
    );
    let no_delta = RiskInputs { delta: None, ..inp };
    assert!(matches!(
        excess_risk_bound(&no_delta, 0.2, 0.05),
        Err(NappError::GaussianNeedsDelta(_))
    ));
}

#[test]
fn doubling_n_halves_bounds() {
    for g in [Guarantee::Eps, Guarantee::EpsDelta] {
        let a = excess_risk_bound(&inputs(g, 16, 500), 0.3, 0.05).unwrap();
        let b = excess_risk_bound(&inputs(g, 16, 1000), 0.3, 0.05).unwrap();
        assert_relative_eq!(a, 2.0 * b, max_relative = 1e-14);
    }
}

#[test]
fn bounds_monotone_in_n_and_p() {
    for g in [Guarantee::Eps, Guarantee::EpsDelta] {
        for n in [50, 100, 500, 1000] {
            let mut last = 0.0;
            for p in [1, 2, 4, 8, 16, 32] {
                let b = excess_risk_bound(&inputs(g, p, n), 0.1, 0.05).unwrap();
                assert!(b >= 0.0 && b > last);
                last = b;
                let smaller = excess_risk_bound(&inputs(g, p, 2 * n), 0.1, 0.05).unwrap();
                assert!(smaller < b);
            }
        }
    }
    assert!(
        empirical_risk_bound(1.0, 50, 10, 1.0, 1.0, 1.0, 0.5)
            > empirical_risk_bound(1.0, 100, 10, 1.0, 1.0, 1.0, 0.5)
    );
}

#[test]
fn sample_complexity_unit_instance() {
    let inp = RiskInputs {
        guarantee: Guarantee::Eps,
        p: 1,
        zeta1: 1.0,
        zeta2: 1.0,
        r: 1.0,
        epsilon: 1.0,
        delta: None,
        n: 1,
        n_e: 1,
        lpp0: 1.0,
        v_min: 1.0,
    };
    let e_inv = (-1.0f64).exp();
    let params = BoundParams {
        pi: e_inv,
        pi_prime: e_inv,
        c_prime: 1.0,
        varrho: 1.0,
    };
    // C = 2 (1 * log(e))^2 = 2; n = (1 + 2 / 1) / (1 - 1/2) = 6
    let sc = sample_complexity(&params, &inp, 1.0).unwrap();
    assert_relative_eq!(sc.c, 2.0, max_relative = 1e-14);
    assert_relative_eq!(sc.n_required, 6.0, max_relative = 1e-14);
    assert_eq!(sc.c_prime, 1.0);
    let at = RiskInputs { n: 6, ..inp };
    assert_relative_eq!(
        achievable_excess_risk(&params, &at, 1.0).unwrap(),
        1.0,
        max_relative = 1e-14
    );
}

#[test]
fn sample_complexity_vanishes_for_loose_targets_and_rejects_tight_ones() {
    let inp = inputs(Guarantee::Eps, 16, 500);
    let mut last = f64::INFINITY;
    for varrho in [10.0, 1e2, 1e4, 1e8] {
        let params = BoundParams {
            varrho,
            ..Default::default()
        };
        let n = sample_complexity(&params, &inp, 0.5).unwrap().n_required;
        assert!(n > 0.0 && n < last);
        last = n;
    }
    assert!(last < 1e-2);
    let tight = BoundParams {
        varrho: 1e-9,
        ..Default::default()
    };
    assert!(matches!(
        sample_complexity(&tight, &inp, 0.5),
        Err(NappError::BoundUndefined(_))
    ));
}

#[test]
fn epsilon_dp_constant_has_factor_two() {
    let inp = inputs(Guarantee::Eps, 4, 100);
    let direct = (4.0 * (4.0f64 / 0.05).ln() / 0.5).powi(2);
    assert_relative_eq!(
        complexity_constant(&inp, 0.05).unwrap(),
        2.0 * direct,
        max_relative = 1e-14
    );
}

#[test]
fn realized_regularizer_regions() {
    let reg = RegularizerTarget::new(Penalty::lasso(), 1.0, 0.5, true).unwrap();
    let grid = [0.01, 0.1, 1.0, 1.9, 2.5, 5.0, 10.0];
    let moor = realized_regularizer(&reg, &grid, ProbeMode::Moor);
    let legacy = realized_regularizer(&reg, &grid, ProbeMode::Legacy);
    for (m, l) in moor.iter().zip(&legacy) {
        assert!(m.converged && l.converged);
        let th = m.theta;
        if th <= 2.0 {
            // weight Lambda / |theta| >= Lambda0
            assert_relative_eq!(m.realized, th, max_relative = 1e-12);
            assert_relative_eq!(m.realized, m.target, max_relative = 1e-12);
        } else {
            assert_relative_eq!(m.realized, 0.5 * th * th, max_relative = 1e-12);
            assert!(m.realized > m.target);
        }
        assert_relative_eq!(l.realized, th + 0.5 * th * th, max_relative = 1e-12);
        assert!(l.realized > m.realized);
    }
    let ridge_like = RegularizerTarget::new(Penalty::Ridge, 0.2, 0.5, true).unwrap();
    let pts = realized_regularizer(&ridge_like, &[1e-3], ProbeMode::Moor);
    assert_relative_eq!(pts[0].realized, 0.5 * 1e-6, max_relative = 1e-12);
    assert_relative_eq!(pts[0].modulus, 1.0);
}

#[test]
fn overlay_matches_analytic_curve() {
    let reg = RegularizerTarget::new(Penalty::lasso(), 1.0, 0.5, true).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for pt in realized_regularizer(&reg, &[0.2, 1.0, 3.0], ProbeMode::Moor) {
        let w = pt.modulus / 2.0;
        let (mean, se) = realized_overlay(w, pt.theta, 10_000, 0.25, 200, &mut rng);
        assert!(
            (mean - pt.realized).abs() <= 3.0 * se,
            "theta {}: {mean} +- {se} vs {}",
            pt.theta,
            pt.realized
        );
    }
}

proptest! {
    #[test]
    fn legacy_dominates_moor_dominates_target(
        lambda in 0.01f64..5.0,
        lambda0 in 0.01f64..5.0,
        theta in -20.0f64..20.0,
        gamma in 0.0f64..1.99,
    ) {
        let reg = RegularizerTarget::new(Penalty::Bridge { gamma }, lambda, lambda0, true).unwrap();
        let m = &realized_regularizer(&reg, &[theta], ProbeMode::Moor)[0];
        let l = &realized_regularizer(&reg, &[theta], ProbeMode::Legacy)[0];
        let tol = 1e-9 * m.target.abs().max(1.0);
        prop_assert!(l.realized >= m.realized - tol);
        if theta.abs() >= napp::noise::THETA_FLOOR {
            prop_assert!(m.realized >= m.target - tol);
        }
        prop_assert!(m.modulus >= 2.0 * lambda0 - 1e-12);
    }

    #[test]
    fn bounds_are_nonnegative(n in 1usize..10_000, p in 1usize..64, gap in 0.0f64..10.0, eps in 0.05f64..5.0) {
        let inp = RiskInputs { n, p, epsilon: eps, ..inputs(Guarantee::EpsDelta, p, n) };
        prop_assert!(excess_risk_bound(&inp, gap, 0.05).unwrap() >= 0.0);
        let inp = RiskInputs { guarantee: Guarantee::Eps, ..inp };
        prop_assert!(excess_risk_bound(&inp, gap, 0.05).unwrap() >= 0.0);
    }
}
