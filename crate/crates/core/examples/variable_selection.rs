//! Selection rates of the three NAPP modes on the logistic benchmark.

use napp::bench::metrics::selection_rates;
use napp::bench::{simulate_dataset, SimSpec};
use napp::{
    certify_bounds, napp_fit, FitMode, LossFamily, OutcomeBounds, Penalty, PrivacyBudget,
    RegularizerTarget, SolverConfig,
};

fn main() -> napp::Result<()> {
    let family = LossFamily::Logistic;
    let budget = PrivacyBudget::new(2.0, 0.0, 0.5)?;
    for mode in [FitMode::Erm, FitMode::Vs, FitMode::VsPlus] {
        let (mut tpr, mut fpr) = (0.0, 0.0);
        let reps = 10;
        for seed in 0..reps {
            let spec = SimSpec::benchmark(family, 1000, 100 + seed);
            let data = simulate_dataset(&spec)?;
            let certs = certify_bounds(&data, &OutcomeBounds::default())?;
            let reg = RegularizerTarget::new(
                Penalty::lasso(),
                5.0,
                budget.lambda0_floor(certs.zeta3),
                true,
            )?;
            let cfg = SolverConfig {
                mode,
                ..Default::default()
            };
            let fit = napp_fit(&data, &certs, &reg, &budget, &cfg, seed)?;
            let (t, f) = selection_rates(&fit.theta_hat, &spec.theta_true);
            tpr += t.unwrap_or(0.0);
            fpr += f.unwrap_or(0.0);
        }
        println!(
            "{mode:?}: mean TPR {:.2}, mean FPR {:.2}",
            tpr / reps as f64,
            fpr / reps as f64
        );
    }
    Ok(())
}
