//! Simulators, metrics, CSV ingestion and the experiment sweep runner.

pub mod experiment;
pub mod ingest;
pub mod lasso;
pub mod metrics;
pub mod sim;

pub use experiment::{
    run_experiment, summarize, ExperimentConfig, ExperimentOutput, Method, MethodSpec, MetricRow,
    SummaryRow,
};
pub use ingest::{ingest_csv, IngestReport, Schema};
pub use lasso::{lasso_glm, LassoFit};
pub use metrics::{l2_distance, prediction_error, roc_curve, selection_rates, RocPoint};
pub use sim::{benchmark_theta, simulate_dataset, SimConfig, SimSpec, TruncNormal};
