use faer::MatRef;

use crate::error::Result;
use crate::iv::kiv::KivModel;
use crate::iv::krr::KrrModel;
use crate::iv::tsls::LinearModel;
use crate::iv::Predictor;

/// A fitted comparison estimator.
#[derive(Clone, Debug)]
pub enum FittedBaseline {
    KernelRidge(KrrModel),
    TwoSls(LinearModel),
    /// KIV over feature-map kernels.
    SieveIv(KivModel),
}

impl FittedBaseline {
    pub fn name(&self) -> &'static str {
        match self {
            FittedBaseline::KernelRidge(_) => "krr",
            FittedBaseline::TwoSls(_) => "twosls",
            FittedBaseline::SieveIv(_) => "sieve",
        }
    }
}

impl Predictor for FittedBaseline {
    fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        match self {
            FittedBaseline::KernelRidge(m) => m.predict(points),
            FittedBaseline::TwoSls(m) => m.predict(points),
            FittedBaseline::SieveIv(m) => m.predict(points),
        }
    }
}
