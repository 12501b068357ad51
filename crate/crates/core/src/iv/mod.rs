//! Kernel instrumental variable regression and its baselines.

use faer::MatRef;

use crate::error::Result;

pub mod baseline;
pub mod data;
pub mod kiv;
pub mod krr;
pub mod sieve;
pub mod tsls;
pub mod tuning;

pub use baseline::FittedBaseline;
pub use data::{SplitDataset, StageSample};
pub use kiv::{fit_kiv, fit_kiv_with, stage1_weights, KivFitReport, KivModel, Stage2System};
pub use krr::{cv2_tune_krr, cv2_tune_krr_refined, fit_krr, CvTuning, KrrModel};
pub use sieve::{design_bases, fit_sieve_iv};
pub use tsls::{fit_2sls, fit_ols, LinearModel};
pub use tuning::{stage1_loss, stage2_loss, tune, Tuned, TuningPolicy, TuningTrace};

/// Anything that evaluates a fitted structural function.
pub trait Predictor {
    /// One value per row of `points`.
    fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>>;
}
