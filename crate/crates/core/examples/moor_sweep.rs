//! Small MOOR on/off sweep through the experiment runner.

use napp::bench::experiment::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
out_dir = "target/moor_sweep"
family = "linear"
n = 500
test_n = 2000
lambda_grid = [0.5, 2.0, 10.0]
epsilon_grid = [1.0]
repeats = 5
bounds = { residual = 1.0 }
methods = [
    { method = "napp-erm", moor = true },
    { method = "napp-erm", moor = false },
]
"#;

fn main() -> napp::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG)?;
    let out = run_experiment(&cfg, None, Some(1))?;
    for row in out.summary.iter().filter(|r| r.metric == "mse") {
        println!(
            "moor {:<5} lambda {:>5}: median mse {:.4} ({} fits)",
            row.moor, row.lambda, row.median, row.count
        );
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}
