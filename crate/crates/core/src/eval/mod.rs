//! Metrics, classical baselines, experiment scoring, ablation and reports.

pub mod ablation;
pub mod baselines;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use ablation::{run_ablation, train_variant, AblationConfig, Contender};
pub use baselines::{seasonal_naive, LinearAr};
pub use experiment::{horizon_samples, score, score_model, ExperimentData, Scored};
pub use metrics::{mae, rmse, Metrics};
pub use report::{render_csv, render_table, EvalReport, SeedRun};
