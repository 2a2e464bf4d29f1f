//! Differentially private GLM estimation by noise augmentation.
//!
//! A private fit appends `n_e` synthetic rows to the data and repeatedly
//! solves an unregularized GLM on the augmented set. The rows carry two
//! components: a fixed DP part `e*` that injects the objective perturbation
//! `b'theta`, and a fresh antithetic Gaussian part `e~(t)` whose variance is
//! chosen so that, to second order, the augmented loss equals the original
//! loss plus a weighted ridge term. Updating the weights from the previous
//! estimate turns that ridge term into lasso, bridge or elastic-net, and a
//! floor `lambda0` on the weights keeps the objective strongly convex.
//!
//! Modules:
//!
//! - [`glm`]: loss families, derivatives, bound certificates, row clipping.
//! - [`noise`]: DP mechanisms, DP rows, variance schedules, antithetic noise.
//! - [`solver`]: damped Newton inner fit and the outer noise-augmented loop.
//! - [`budget`]: retrievable budget and the return/recycle protocol.
//! - [`bounds`]: empirical-risk, excess-risk and sample-complexity calculators.
//! - [`bench`]: simulators, metrics, CSV ingestion and the experiment runner.

pub mod bench;
pub mod bounds;
pub mod budget;
pub mod error;
pub mod glm;
pub mod noise;
pub mod rng;
mod serde_ext;
pub mod solver;
pub mod stats;

pub use error::{NappError, Result};
pub use glm::{certify_bounds, BoundsCerts, Dataset, LossFamily, OutcomeBounds};
pub use noise::{Mechanism, Penalty, PrivacyBudget, RegularizerTarget};
pub use solver::{napp_fit, FitMode, FitResult, SolverConfig};
