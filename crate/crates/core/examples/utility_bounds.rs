//! Excess-risk bounds and sample complexity over a range of training sizes.

use napp::bounds::{excess_risk_bound, sample_complexity, BoundParams, Guarantee, RiskInputs};

fn main() -> napp::Result<()> {
    let base = RiskInputs {
        guarantee: Guarantee::Eps,
        p: 16,
        zeta1: 1.0,
        zeta2: 1.0,
        r: 0.5,
        epsilon: 1.0,
        delta: Some(1e-3),
        n: 500,
        n_e: 10_000,
        lpp0: 1.0,
        v_min: 1e-4,
    };
    println!("{:>8} {:>12} {:>12}", "n", "eps bound", "eps-delta");
    for n in [500, 1000, 5000, 10_000, 50_000] {
        let a = excess_risk_bound(&RiskInputs { n, ..base }, 0.1, 0.05)?;
        let b = excess_risk_bound(
            &RiskInputs {
                n,
                guarantee: Guarantee::EpsDelta,
                ..base
            },
            0.1,
            0.05,
        )?;
        println!("{n:>8} {a:>12.4} {b:>12.4}");
    }
    for varrho in [10.0, 100.0, 1000.0] {
        let sc = sample_complexity(
            &BoundParams {
                varrho,
                ..Default::default()
            },
            &base,
            0.5,
        )?;
        println!("excess risk below {varrho}: n > {:.0}", sc.n_required);
    }
    Ok(())
}
