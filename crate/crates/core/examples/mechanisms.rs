//! Draws from each DP mechanism and prints the mean norm and mean coordinate.

use napp::noise::{sample_mechanism, MechanismParams};
use napp::rng::StreamSeed;
use napp::Mechanism;

fn main() -> napp::Result<()> {
    let params = MechanismParams {
        p: 16,
        zeta12: 1.0,
        r_eps: 0.5,
        delta: 1e-3,
    };
    let draws = 2000;
    let laws = [
        (Mechanism::SphericalLaplace, None),
        (Mechanism::Gaussian, None),
        (Mechanism::TruncatedLaplace, Some(0.0)),
        (Mechanism::TruncatedGaussian, Some(0.0)),
    ];
    for (k, (mech, trunc)) in laws.into_iter().enumerate() {
        let mut rng = StreamSeed::new(42, k as u64).rng();
        let (mut norm, mut coord) = (0.0, 0.0);
        for _ in 0..draws {
            let b = sample_mechanism(mech, &params, trunc, &mut rng)?;
            norm += b.norm();
            coord += b.b.iter().sum::<f64>() / params.p as f64;
        }
        println!(
            "{mech:?}: mean |b| {:.2}, mean b_j {:+.3}",
            norm / draws as f64,
            coord / draws as f64
        );
    }
    Ok(())
}
