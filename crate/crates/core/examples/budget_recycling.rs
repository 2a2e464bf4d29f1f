//! Retrieves the unspent budget of a private fit, then recycles it.

use napp::bench::{simulate_dataset, SimSpec};
use napp::budget::{recycle, RecycleChoice};
use napp::{
    certify_bounds, napp_fit, LossFamily, OutcomeBounds, Penalty, PrivacyBudget, RegularizerTarget,
    SolverConfig,
};

fn main() -> napp::Result<()> {
    let data = simulate_dataset(&SimSpec::benchmark(LossFamily::Linear, 500, 3))?;
    let certs = certify_bounds(
        &data,
        &OutcomeBounds {
            residual: Some(1.0),
            ..Default::default()
        },
    )?;
    let budget = PrivacyBudget::new(1.0, 0.0, 0.5)?;

    for lambda in [1.0, 5.0, 20.0] {
        let reg = RegularizerTarget::new(
            Penalty::lasso(),
            lambda,
            budget.lambda0_floor(certs.zeta3),
            true,
        )?;
        let fit = napp_fit(&data, &certs, &reg, &budget, &SolverConfig::default(), 5)?;
        if !fit.converged {
            println!("lambda {lambda}: fit did not converge, nothing retrieved");
            continue;
        }
        let ret = recycle(&fit, &data, &certs, RecycleChoice::Return)?;
        println!(
            "lambda {lambda}: returnable {:.4} ({:.0}% of the Jacobian share)",
            ret.delta_eps_cumulative,
            100.0 * ret.retrieved_portion
        );

        let rec = recycle(&fit, &data, &certs, RecycleChoice::Recycle)?;
        for (k, round) in rec.rounds.iter().enumerate() {
            println!(
                "  round {k}: +{:.4} eps, lambda0 {:.3} -> {:.3}, |e*| {:.2e} -> {:.2e}",
                round.delta_eps,
                round.lambda0_before,
                round.lambda0_after,
                round.e_star_norm_before,
                round.e_star_norm_after
            );
        }
        if let Some(w) = rec.warning {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
