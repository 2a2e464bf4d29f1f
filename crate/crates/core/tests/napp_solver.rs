mod common;

use nalgebra::{DMatrix, DVector};
use napp::noise::AugmentedBlock;
use napp::solver::{minimize_augmented, sign_adjust, smoothed_change, zero_stabilize};
use napp::{
    certify_bounds, napp_fit, FitMode, LossFamily, NappError, OutcomeBounds, Penalty,
    PrivacyBudget, RegularizerTarget, SolverConfig,
};
use proptest::prelude::*;

fn zero_block(p: usize, n_e: usize, family: LossFamily) -> AugmentedBlock {
    AugmentedBlock::new(
        &vec![0.0; p],
        DMatrix::zeros(n_e, p),
        family.noise_pseudo_outcome(),
        vec![0.0; p],
    )
    .unwrap()
}

fn logistic_certs(d: &napp::Dataset) -> napp::BoundsCerts {
    certify_bounds(d, &OutcomeBounds::default()).unwrap()
}

fn linear_certs(d: &napp::Dataset) -> napp::BoundsCerts {
    certify_bounds(
        d,
        &OutcomeBounds {
            residual: Some(1.0),
            ..Default::default()
        },
    )
    .unwrap()
}

#[test]
fn zero_noise_block_gives_the_mle() {
    for family in LossFamily::ALL {
        let d = common::benchmark_data(family, 300, 21);
        let fit = minimize_augmented(
            &d,
            &zero_block(16, 10, family),
            &DVector::zeros(16),
            &SolverConfig::default(),
        )
        .unwrap();
        let oracle = common::irls(&d, 0.0);
        let theta: Vec<f64> = fit.theta.iter().copied().collect();
        assert!(
            common::l2(&theta, &oracle) <= 1e-6,
            "{family}: {}",
            common::l2(&theta, &oracle)
        );
        assert!(fit.converged);
    }
}

#[test]
fn start_at_optimum_returns_after_one_iteration() {
    let d = common::benchmark_data(LossFamily::Logistic, 300, 22);
    let opt = DVector::from_vec(common::irls(&d, 0.0));
    let fit = minimize_augmented(
        &d,
        &zero_block(16, 10, LossFamily::Logistic),
        &opt,
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(fit.iterations, 1);
    assert!((&fit.theta - &opt).norm() < 1e-9);
}

#[test]
fn too_few_rows_is_rejected() {
    let d = common::benchmark_data(LossFamily::Linear, 4, 1);
    let err = minimize_augmented(
        &d,
        &zero_block(16, 2, LossFamily::Linear),
        &DVector::zeros(16),
        &SolverConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, NappError::DimensionMismatch(_)));
}

#[test]
fn singular_hessian_is_reported() {
    let d = common::benchmark_data(LossFamily::Linear, 8, 1);
    let err = minimize_augmented(
        &d,
        &zero_block(16, 10, LossFamily::Linear),
        &DVector::zeros(16),
        &SolverConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, NappError::SingularHessian));
}

#[test]
fn nonprivate_ridge_matches_closed_form() {
    let d = common::benchmark_data(LossFamily::Linear, 200, 5);
    let reg = RegularizerTarget::new(Penalty::Ridge, 0.1, 0.1, true).unwrap();
    let fit = napp_fit(
        &d,
        &linear_certs(&d),
        &reg,
        &PrivacyBudget::non_private(),
        &SolverConfig::default(),
        5,
    )
    .unwrap();
    let oracle = common::ridge_closed_form(&d, 0.1);
    assert!(common::l2(&fit.theta_hat, &oracle) <= 1e-2);
}

#[test]
fn ridge_trace_settles_by_the_third_iteration() {
    let d = common::benchmark_data(LossFamily::Linear, 200, 6);
    let reg = RegularizerTarget::new(Penalty::Ridge, 0.1, 0.1, true).unwrap();
    let fit = napp_fit(
        &d,
        &linear_certs(&d),
        &reg,
        &PrivacyBudget::non_private(),
        &SolverConfig::default(),
        6,
    )
    .unwrap();
    let oracle = common::ridge_closed_form(&d, 0.1);
    for entry in &fit.trace[2..] {
        assert!(common::l2(&entry.theta, &oracle) <= 1e-2);
    }
}

#[test]
fn ridge_is_unaffected_by_moor_flag() {
    let d = common::benchmark_data(LossFamily::Linear, 200, 7);
    let certs = linear_certs(&d);
    let moor = RegularizerTarget::new(Penalty::Ridge, 0.1, 0.05, true).unwrap();
    let legacy = RegularizerTarget {
        moor: false,
        ..moor
    };
    let cfg = SolverConfig::default();
    let a = napp_fit(&d, &certs, &moor, &PrivacyBudget::non_private(), &cfg, 70).unwrap();
    let b = napp_fit(&d, &certs, &legacy, &PrivacyBudget::non_private(), &cfg, 71).unwrap();
    assert!(common::l2(&a.theta_hat, &b.theta_hat) <= 1e-2);
    let same = napp_fit(&d, &certs, &legacy, &PrivacyBudget::non_private(), &cfg, 70).unwrap();
    assert_eq!(same.theta_hat, a.theta_hat);
}

#[test]
fn nonprivate_lasso_matches_coordinate_descent() {
    let d = common::benchmark_data(LossFamily::Linear, 200, 8);
    let lambda = 0.5;
    let reg = RegularizerTarget::new(Penalty::lasso(), lambda, 0.1, true).unwrap();
    let fit = napp_fit(
        &d,
        &linear_certs(&d),
        &reg,
        &PrivacyBudget::non_private(),
        &SolverConfig::default(),
        8,
    )
    .unwrap();
    let oracle = common::cd_lasso(&d, 2.0 * lambda);
    assert!(
        common::l2(&fit.theta_hat, &oracle) <= 5e-2,
        "{}",
        common::l2(&fit.theta_hat, &oracle)
    );
}

#[test]
fn vs_plus_on_null_data_is_exactly_zero() {
    let d = common::null_data(LossFamily::Linear, 500, 9);
    let certs = linear_certs(&d);
    let budget = PrivacyBudget::new(1.0, 0.0, 0.5).unwrap();
    let reg = RegularizerTarget::new(
        Penalty::lasso(),
        50.0,
        budget.lambda0_floor(certs.zeta3),
        true,
    )
    .unwrap();
    let cfg = SolverConfig {
        mode: FitMode::VsPlus,
        ..Default::default()
    };
    let fit = napp_fit(&d, &certs, &reg, &budget, &cfg, 9).unwrap();
    assert!(
        fit.theta_hat.iter().all(|v| *v == 0.0),
        "{:?}",
        fit.theta_hat
    );
}

#[test]
fn fits_are_deterministic_per_seed() {
    let d = common::benchmark_data(LossFamily::Logistic, 200, 10);
    let certs = logistic_certs(&d);
    let budget = PrivacyBudget::new(2.0, 0.0, 0.5).unwrap();
    let reg = RegularizerTarget::new(
        Penalty::lasso(),
        1.0,
        budget.lambda0_floor(certs.zeta3),
        true,
    )
    .unwrap();
    let cfg = SolverConfig {
        n_e: 2000,
        t_max: 10,
        mode: FitMode::Vs,
        ..Default::default()
    };
    let a = napp_fit(&d, &certs, &reg, &budget, &cfg, 42).unwrap();
    let b = napp_fit(&d, &certs, &reg, &budget, &cfg, 42).unwrap();
    let c = napp_fit(&d, &certs, &reg, &budget, &cfg, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.theta_hat, c.theta_hat);
    assert_eq!(a.trace.len(), a.iterations_used);
}

#[test]
fn floor_is_enforced_for_private_fits() {
    let d = common::benchmark_data(LossFamily::Logistic, 100, 11);
    let certs = logistic_certs(&d);
    let budget = PrivacyBudget::new(1.0, 0.0, 0.5).unwrap();
    let reg = RegularizerTarget::new(
        Penalty::lasso(),
        1.0,
        0.5 * budget.lambda0_floor(certs.zeta3),
        true,
    )
    .unwrap();
    assert!(matches!(
        napp_fit(&d, &certs, &reg, &budget, &SolverConfig::default(), 1),
        Err(NappError::InvalidParameter(_))
    ));
    let odd = SolverConfig {
        n_e: 11,
        ..Default::default()
    };
    let ok_reg = RegularizerTarget {
        lambda0: budget.lambda0_floor(certs.zeta3),
        ..reg
    };
    assert!(matches!(
        napp_fit(&d, &certs, &ok_reg, &budget, &odd, 1),
        Err(NappError::OddNoiseRows(11))
    ));
}

#[test]
fn hitting_the_iteration_cap_is_not_an_error() {
    let d = common::benchmark_data(LossFamily::Linear, 100, 12);
    let reg = RegularizerTarget::new(Penalty::lasso(), 1.0, 0.1, true).unwrap();
    let cfg = SolverConfig {
        t_max: 2,
        n_e: 200,
        ..Default::default()
    };
    let fit = napp_fit(
        &d,
        &linear_certs(&d),
        &reg,
        &PrivacyBudget::non_private(),
        &cfg,
        1,
    )
    .unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations_used, 2);
}

#[test]
fn converged_trace_meets_the_smoothed_rule_and_floor() {
    let d = common::benchmark_data(LossFamily::Linear, 300, 13);
    let certs = linear_certs(&d);
    let budget = PrivacyBudget::new(1.0, 0.0, 0.5).unwrap();
    let lambda0 = budget.lambda0_floor(certs.zeta3);
    let reg = RegularizerTarget::new(Penalty::lasso(), 2.0, lambda0, true).unwrap();
    let cfg = SolverConfig::default();
    for seed in 0..5 {
        let fit = napp_fit(&d, &certs, &reg, &budget, &cfg, seed).unwrap();
        if fit.converged {
            let losses: Vec<f64> = fit.trace.iter().map(|e| e.loss).collect();
            assert!(smoothed_change(&losses, cfg.window).unwrap() < cfg.outer_tol);
        }
        let scale = fit.curvature_scale();
        for v in fit.last_schedule.iter().chain(&fit.final_schedule) {
            assert!(scale * v / 2.0 >= lambda0 * (1.0 - 1e-12));
        }
    }
}

#[test]
fn zero_stabilization_examples() {
    let alternating: Vec<Vec<f64>> = (0..6)
        .map(|t| vec![if t % 2 == 0 { 0.01 } else { -0.01 }, 0.5, 1e-5])
        .collect();
    assert_eq!(zero_stabilize(&alternating, 1e-4, 5), vec![0.0, 0.5, 0.0]);
    let early_flip = vec![
        vec![-1.0],
        vec![1.0],
        vec![1.0],
        vec![1.0],
        vec![1.0],
        vec![1.0],
    ];
    assert_eq!(zero_stabilize(&early_flip, 1e-4, 5), vec![1.0]);
}

#[test]
fn sign_rule_uses_only_previous_estimate() {
    assert_eq!(
        sign_adjust(&[1.0, 2.0, -3.0], &[-0.5, 0.0, -2.0]),
        vec![-1.0, 2.0, 3.0]
    );
}

proptest! {
    #[test]
    fn sign_adjust_preserves_magnitudes(e in prop::collection::vec(-5.0f64..5.0, 1..10), seed in any::<u64>()) {
        let prev: Vec<f64> = e.iter().enumerate().map(|(i, _)| if (seed >> (i % 64)) & 1 == 1 { -1.0 } else { 0.0 }).collect();
        let out = sign_adjust(&e, &prev);
        for (a, b) in out.iter().zip(&e) {
            prop_assert_eq!(a.abs(), b.abs());
        }
    }

    #[test]
    fn stabilized_coordinates_are_zero_or_last(rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..12)) {
        let out = zero_stabilize(&rows, 1e-4, 5);
        let last = rows.last().unwrap();
        for j in 0..3 {
            prop_assert!(out[j] == 0.0 || out[j] == last[j]);
        }
    }
}
