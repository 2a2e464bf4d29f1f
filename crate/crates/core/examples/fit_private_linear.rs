//! Private lasso fit of a linear model on simulated data.

use napp::bench::{simulate_dataset, SimSpec};
use napp::{
    certify_bounds, napp_fit, FitMode, LossFamily, OutcomeBounds, Penalty, PrivacyBudget,
    RegularizerTarget, SolverConfig,
};

fn main() -> napp::Result<()> {
    let spec = SimSpec::benchmark(LossFamily::Linear, 1000, 7);
    let data = simulate_dataset(&spec)?;
    let certs = certify_bounds(
        &data,
        &OutcomeBounds {
            residual: Some(1.0),
            ..Default::default()
        },
    )?;

    let budget = PrivacyBudget::new(1.0, 0.0, 0.5)?;
    let lambda0 = budget.lambda0_floor(certs.zeta3);
    let reg = RegularizerTarget::new(Penalty::lasso(), 2.0, lambda0, true)?;
    let cfg = SolverConfig {
        mode: FitMode::Erm,
        ..Default::default()
    };
    let fit = napp_fit(&data, &certs, &reg, &budget, &cfg, 11)?;

    println!(
        "lambda0 floor {lambda0:.4}, converged {} after {} iterations",
        fit.converged, fit.iterations_used
    );
    println!("{:>4} {:>8} {:>8}", "j", "true", "fit");
    for (j, (t, f)) in spec.theta_true.iter().zip(&fit.theta_hat).enumerate() {
        println!("{j:>4} {t:>8.3} {f:>8.3}");
    }
    Ok(())
}
