//! Target versus realized lasso penalty with and without the MOOR floor.

use napp::bounds::{realized_regularizer, ProbeMode};
use napp::{Penalty, RegularizerTarget};

fn main() -> napp::Result<()> {
    let reg = RegularizerTarget::new(Penalty::lasso(), 1.0, 0.5, true)?;
    let grid: Vec<f64> = (1..=12).map(|k| 0.5 * k as f64).collect();
    let moor = realized_regularizer(&reg, &grid, ProbeMode::Moor);
    let legacy = realized_regularizer(&reg, &grid, ProbeMode::Legacy);
    println!(
        "{:>6} {:>8} {:>8} {:>8}",
        "theta", "target", "moor", "legacy"
    );
    for (m, l) in moor.iter().zip(&legacy) {
        println!(
            "{:>6.2} {:>8.3} {:>8.3} {:>8.3}",
            m.theta, m.target, m.realized, l.realized
        );
    }
    Ok(())
}
