use serde::{Deserialize, Serialize};

use crate::designs::{DesignKind, DesignSpec};
use crate::error::{KivError, Result};
use crate::iv::TuningPolicy;

pub const DEFAULT_REPLICATIONS: usize = 40;
/// Lengthscale overrides of the robustness study.
pub const ROBUSTNESS_LENGTHSCALES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
pub const ROBUSTNESS_SAMPLE_SIZE: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Kiv,
    Krr,
    Twosls,
    Sieve,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [EstimatorKind::Kiv, EstimatorKind::Krr, EstimatorKind::Twosls, EstimatorKind::Sieve];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Kiv => "kiv",
            EstimatorKind::Krr => "krr",
            EstimatorKind::Twosls => "twosls",
            EstimatorKind::Sieve => "sieve",
        }
    }

    /// Result label; a lengthscale override applies to Gaussian input kernels
    /// only and is appended as `_ls<value>`.
    pub fn label(self, lengthscale: Option<f64>) -> String {
        match (self, lengthscale) {
            (EstimatorKind::Kiv | EstimatorKind::Krr, Some(l)) => format!("{}_ls{l:?}", self.name()),
            _ => self.name().to_string(),
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = KivError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| KivError::InvalidSpec(format!("unknown estimator {s:?}")))
    }
}

/// A benchmark sweep: every design template x estimator x sample size x
/// replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// `sample_size` and `seed` of each template are replaced per cell.
    pub designs: Vec<DesignSpec>,
    pub estimators: Vec<EstimatorKind>,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub tuning: TuningPolicy,
    /// Fixed lengthscale for every input dimension of `k_X`, replacing the
    /// median heuristic.
    pub lengthscale_override: Option<f64>,
    pub base_seed: u64,
    /// Worker threads; 0 means one per available core.
    pub jobs: usize,
}

impl RunConfig {
    pub fn new(designs: Vec<DesignSpec>, estimators: Vec<EstimatorKind>, sample_sizes: Vec<usize>) -> Self {
        RunConfig {
            designs,
            estimators,
            sample_sizes,
            replications: DEFAULT_REPLICATIONS,
            tuning: TuningPolicy::default_grid(),
            lengthscale_override: None,
            base_seed: 0,
            jobs: 0,
        }
    }

    pub fn single(kind: DesignKind, estimators: Vec<EstimatorKind>, sample_size: usize) -> Self {
        RunConfig::new(vec![DesignSpec::new(kind, sample_size, 0)], estimators, vec![sample_size])
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn with_tuning(mut self, tuning: TuningPolicy) -> Self {
        self.tuning = tuning;
        self
    }

    pub fn with_lengthscale(mut self, lengthscale: Option<f64>) -> Self {
        self.lengthscale_override = lengthscale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(KivError::InvalidSpec("replications must be >= 1".into()));
        }
        if self.designs.is_empty() || self.estimators.is_empty() || self.sample_sizes.is_empty() {
            return Err(KivError::InvalidSpec(
                "a sweep needs at least one design, estimator and sample size".into(),
            ));
        }
        if let Some(l) = self.lengthscale_override {
            if !(l.is_finite() && l > 0.0) {
                return Err(KivError::InvalidSpec(format!("lengthscale must be finite and > 0, got {l}")));
            }
        }
        for d in &self.designs {
            for &n in &self.sample_sizes {
                DesignSpec { sample_size: n, ..*d }.validate()?;
            }
        }
        self.tuning.validate()
    }
}

/// The lengthscale sensitivity study on the sigmoid design, KIV only.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessConfig {
    pub lengthscales: Vec<f64>,
    pub sample_size: usize,
    pub split_ratio: f64,
    pub replications: usize,
    pub tuning: TuningPolicy,
    pub base_seed: u64,
    pub jobs: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            lengthscales: ROBUSTNESS_LENGTHSCALES.to_vec(),
            sample_size: ROBUSTNESS_SAMPLE_SIZE,
            split_ratio: 0.5,
            replications: DEFAULT_REPLICATIONS,
            tuning: TuningPolicy::default_grid(),
            base_seed: 0,
            jobs: 0,
        }
    }
}

impl RobustnessConfig {
    /// One sweep per override plus one with the median heuristic.
    pub fn sweeps(&self) -> Vec<RunConfig> {
        let design = DesignSpec::new(DesignKind::Sigmoid, self.sample_size, 0).with_split_ratio(self.split_ratio);
        std::iter::once(None)
            .chain(self.lengthscales.iter().copied().map(Some))
            .map(|l| {
                RunConfig::new(vec![design], vec![EstimatorKind::Kiv], vec![self.sample_size])
                    .with_replications(self.replications)
                    .with_tuning(self.tuning.clone())
                    .with_seed(self.base_seed)
                    .with_jobs(self.jobs)
                    .with_lengthscale(l)
            })
            .collect()
    }
}
