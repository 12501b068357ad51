//! Simulation designs: confounded data-generating processes with known
//! structural functions, their evaluation grids, and the MSE metric.
//!
//! Randomness comes from ChaCha20 seeded with `seed_from_u64`. Separate
//! ChaCha streams are used for sampling and for the stage split, so the split
//! can change without perturbing the draws. Normals come from Box-Muller.

use faer::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KivError, Result};
use crate::linalg::DenseMatrix;

/// Recorded in result metadata so runs can be reproduced exactly.
pub const RNG_IDENTITY: &str = "rand_chacha 0.9 ChaCha20Rng::seed_from_u64; stream 0 sampling, stream 1 split, stream 2 cv folds; Box-Muller normals";

pub const SAMPLING_STREAM: u64 = 0;
pub const SPLIT_STREAM: u64 = 1;
pub const FOLD_STREAM: u64 = 2;

/// Confounding strengths used in the demand sweeps.
pub const DEMAND_RHOS: [f64; 5] = [0.9, 0.75, 0.5, 0.25, 0.1];
pub const DEFAULT_RHO: f64 = 0.5;

/// Floor applied before taking `log10` of an MSE.
pub const MSE_FLOOR: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Linear,
    Sigmoid,
    Demand,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Linear => "linear",
            DesignKind::Sigmoid => "sigmoid",
            DesignKind::Demand => "demand",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            DesignKind::Linear | DesignKind::Sigmoid => 1,
            DesignKind::Demand => 3,
        }
    }
}

impl std::fmt::Display for DesignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DesignKind {
    type Err = KivError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DesignKind::Linear),
            "sigmoid" => Ok(DesignKind::Sigmoid),
            "demand" => Ok(DesignKind::Demand),
            other => Err(KivError::InvalidSpec(format!("unknown design {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    /// Confounding strength; only read by the demand design.
    pub rho: f64,
    /// Total observations `n + m`.
    pub sample_size: usize,
    /// Fraction of observations assigned to stage 1.
    pub split_ratio: f64,
    pub seed: u64,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, sample_size: usize, seed: u64) -> Self {
        DesignSpec {
            kind,
            rho: DEFAULT_RHO,
            sample_size,
            split_ratio: 0.5,
            seed,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_split_ratio(mut self, ratio: f64) -> Self {
        self.split_ratio = ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_size < 8 {
            return Err(KivError::InvalidSpec(format!(
                "sample size {} is below the minimum of 8",
                self.sample_size
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(KivError::InvalidSpec(format!(
                "split ratio {} must lie in (0, 1)",
                self.split_ratio
            )));
        }
        if self.kind == DesignKind::Demand && !(0.0..1.0).contains(&self.rho) {
            return Err(KivError::InvalidSpec(format!("rho {} must lie in [0, 1)", self.rho)));
        }
        Ok(())
    }
}

/// Latent draws behind a sample, kept for audit.
#[derive(Clone, Debug, PartialEq)]
pub enum Confounders {
    /// Linear and sigmoid designs.
    Univariate { e: Vec<f64>, v: Vec<f64>, w: Vec<f64> },
    /// Demand design; `c` is also the instrument's first column.
    Demand { c: Vec<f64>, v: Vec<f64>, e: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct GeneratedSample {
    pub kind: DesignKind,
    /// Inputs, one row per observation (`P, T, S` for demand).
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    /// Instruments (`C, T, S` for demand).
    pub z: DenseMatrix,
    pub confounders: Confounders,
}

impl GeneratedSample {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct EvalGrid {
    pub points: DenseMatrix,
    pub truth: Vec<f64>,
}

impl EvalGrid {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Seasonal demand shape.
pub fn demand_psi(t: f64) -> f64 {
    2.0 * ((t - 5.0).powi(4) / 600.0 + (-4.0 * (t - 5.0).powi(2)).exp() + t / 10.0 - 2.0)
}

/// The structural function `h` of each design.
pub fn structural_h(kind: DesignKind, point: &[f64]) -> f64 {
    match kind {
        DesignKind::Linear => 4.0 * point[0] - 2.0,
        DesignKind::Sigmoid => {
            let x = point[0];
            let sign = if x > 0.5 {
                1.0
            } else if x < 0.5 {
                -1.0
            } else {
                0.0
            };
            (16.0 * x - 8.0).abs().ln_1p() * sign
        }
        DesignKind::Demand => {
            let (p, t, s) = (point[0], point[1], point[2]);
            100.0 + (10.0 + p) * s * demand_psi(t) - 2.0 * p
        }
    }
}

/// Box-Muller standard normals, consuming two uniforms per pair.
pub struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn new() -> Self {
        BoxMuller { spare: None }
    }

    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - rng.random::<f64>();
        let u2 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

impl Default for BoxMuller {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `sample_size` observations from the design.
pub fn sample_design(spec: &DesignSpec) -> Result<GeneratedSample> {
    spec.validate()?;
    let n = spec.sample_size;
    let mut rng = stream_rng(spec.seed, SAMPLING_STREAM);
    let mut normal = BoxMuller::new();
    match spec.kind {
        DesignKind::Linear | DesignKind::Sigmoid => {
            // Cholesky factor of [[1, 1/2, 0], [1/2, 1, 0], [0, 0, 1]].
            let l21 = 0.5;
            let l22 = 0.75f64.sqrt();
            let (mut e, mut v, mut w) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut x = Mat::zeros(n, 1);
            let mut z = Mat::zeros(n, 1);
            let mut y = vec![0.0; n];
            for i in 0..n {
                let g1 = normal.sample(&mut rng);
                let g2 = normal.sample(&mut rng);
                let g3 = normal.sample(&mut rng);
                e[i] = g1;
                v[i] = l21 * g1 + l22 * g2;
                w[i] = g3;
                let xi = normal_cdf((w[i] + v[i]) / std::f64::consts::SQRT_2);
                x[(i, 0)] = xi;
                z[(i, 0)] = normal_cdf(w[i]);
                y[i] = structural_h(spec.kind, &[xi]) + e[i];
            }
            Ok(GeneratedSample {
                kind: spec.kind,
                x,
                y,
                z,
                confounders: Confounders::Univariate { e, v, w },
            })
        }
        DesignKind::Demand => {
            let rho = spec.rho;
            let noise = (1.0 - rho * rho).sqrt();
            let (mut c, mut v, mut e) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
            let mut x = Mat::zeros(n, 3);
            let mut z = Mat::zeros(n, 3);
            let mut y = vec![0.0; n];
            for i in 0..n {
                let s = rng.random_range(1..=7u32) as f64;
                let t = 10.0 * rng.random::<f64>();
                c[i] = normal.sample(&mut rng);
                v[i] = normal.sample(&mut rng);
                let eps = normal.sample(&mut rng);
                e[i] = rho * v[i] + noise * eps;
                let p = 25.0 + (c[i] + 3.0) * demand_psi(t) + v[i];
                x[(i, 0)] = p;
                x[(i, 1)] = t;
                x[(i, 2)] = s;
                z[(i, 0)] = c[i];
                z[(i, 1)] = t;
                z[(i, 2)] = s;
                y[i] = structural_h(DesignKind::Demand, &[p, t, s]) + e[i];
            }
            Ok(GeneratedSample {
                kind: spec.kind,
                x,
                y,
                z,
                confounders: Confounders::Demand { c, v, e },
            })
        }
    }
}

/// Stage-1 size for a total and a ratio, keeping at least two points per
/// stage.
pub fn stage1_size(total: usize, ratio: f64) -> usize {
    ((total as f64 * ratio).round() as usize).clamp(2, total.saturating_sub(2).max(2))
}

/// Random disjoint (stage 1, stage 2) index sets covering `0..total`, each
/// sorted ascending.
pub fn split_indices(total: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if total < 4 {
        return Err(KivError::InvalidSpec(format!("cannot split {total} observations into two stages")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(KivError::InvalidSpec(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..total).collect();
    let mut rng = stream_rng(seed, SPLIT_STREAM);
    idx.shuffle(&mut rng);
    let n = stage1_size(total, ratio);
    let mut first = idx[..n].to_vec();
    let mut second = idx[n..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// Test inputs and true structural values for a design.
pub fn eval_grid(kind: DesignKind) -> EvalGrid {
    match kind {
        DesignKind::Linear | DesignKind::Sigmoid => {
            let xs = linspace(0.0, 1.0, 1000);
            let truth = xs.iter().map(|&x| structural_h(kind, &[x])).collect();
            EvalGrid {
                points: Mat::from_fn(xs.len(), 1, |i, _| xs[i]),
                truth,
            }
        }
        DesignKind::Demand => {
            let ps = linspace(2.5, 14.5, 20);
            let ts = linspace(0.0, 10.0, 20);
            let mut rows = Vec::with_capacity(2800);
            for &p in &ps {
                for &t in &ts {
                    for s in 1..=7 {
                        rows.push([p, t, s as f64]);
                    }
                }
            }
            let truth = rows.iter().map(|r| structural_h(kind, r)).collect();
            EvalGrid {
                points: Mat::from_fn(rows.len(), 3, |i, j| rows[i][j]),
                truth,
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MseReport {
    pub mse: f64,
    pub log10_mse: f64,
    /// The MSE was below [`MSE_FLOOR`] and was floored before the log.
    pub floored: bool,
}

pub fn mse_vs_truth(predictions: &[f64], grid: &EvalGrid) -> Result<MseReport> {
    if predictions.len() != grid.truth.len() {
        return Err(KivError::dims("mse_vs_truth", grid.truth.len(), predictions.len()));
    }
    if predictions.is_empty() {
        return Err(KivError::EmptyInput("mse_vs_truth"));
    }
    if predictions.iter().any(|p| !p.is_finite()) {
        return Err(KivError::NonFinite("predictions"));
    }
    let mse = predictions
        .iter()
        .zip(&grid.truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64;
    let floored = mse < MSE_FLOOR;
    Ok(MseReport {
        mse,
        log10_mse: mse.max(MSE_FLOOR).log10(),
        floored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn structural_values() {
        assert_eq!(structural_h(DesignKind::Linear, &[0.5]), 0.0);
        assert_eq!(structural_h(DesignKind::Sigmoid, &[0.5]), 0.0);
        assert_eq!(demand_psi(5.0), -1.0);
        assert_eq!(structural_h(DesignKind::Demand, &[10.0, 5.0, 1.0]), 60.0);
        assert!((structural_h(DesignKind::Sigmoid, &[1.0]) - 9f64.ln()).abs() < 1e-15);
        assert!((structural_h(DesignKind::Sigmoid, &[0.0]) + 9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn phi_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-15);
    }

    #[test]
    fn grids() {
        let g = eval_grid(DesignKind::Linear);
        assert_eq!(g.len(), 1000);
        assert_eq!(g.points[(0, 0)], 0.0);
        assert_eq!(g.points[(999, 0)], 1.0);
        let d = eval_grid(DesignKind::Demand);
        assert_eq!(d.len(), 2800);
        let ps: Vec<f64> = (0..d.len()).map(|i| d.points[(i, 0)]).collect();
        assert_eq!(ps.iter().cloned().fold(f64::INFINITY, f64::min), 2.5);
        assert_eq!(ps.iter().cloned().fold(f64::NEG_INFINITY, f64::max), 14.5);
        let mut ss: Vec<f64> = (0..d.len()).map(|i| d.points[(i, 2)]).collect();
        ss.dedup();
        ss.sort_by(f64::total_cmp);
        ss.dedup();
        assert_eq!(ss, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn mse_examples() {
        let g = eval_grid(DesignKind::Linear);
        let exact = mse_vs_truth(&g.truth, &g).unwrap();
        assert_eq!(exact.mse, 0.0);
        assert!(exact.floored);
        assert_eq!(exact.log10_mse, -300.0);
        let plus_one: Vec<f64> = g.truth.iter().map(|t| t + 1.0).collect();
        let r = mse_vs_truth(&plus_one, &g).unwrap();
        assert!((r.mse - 1.0).abs() < 1e-12 && r.log10_mse.abs() < 1e-12);
        let plus_tenth: Vec<f64> = g.truth.iter().map(|t| t + 0.1).collect();
        let r = mse_vs_truth(&plus_tenth, &g).unwrap();
        assert!((r.mse - 0.01).abs() < 1e-12 && (r.log10_mse + 2.0).abs() < 1e-9);
        assert!(mse_vs_truth(&[0.0], &g).is_err());
        let mut nan = g.truth.clone();
        nan[3] = f64::NAN;
        assert!(matches!(mse_vs_truth(&nan, &g), Err(KivError::NonFinite(_))));
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = DesignSpec::new(DesignKind::Demand, 200, 99).with_rho(0.25);
        let a = sample_design(&spec).unwrap();
        let b = sample_design(&spec).unwrap();
        assert_eq!(a.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
    }

    #[test]
    fn univariate_distribution() {
        let s = sample_design(&DesignSpec::new(DesignKind::Sigmoid, 100_000, 1)).unwrap();
        let Confounders::Univariate { e, v, w } = &s.confounders else { panic!() };
        assert!((corr(e, v) - 0.5).abs() < 0.01);
        assert!(mean(w).abs() < 0.01);
        let me = mean(e);
        let var_e = e.iter().map(|x| (x - me).powi(2)).sum::<f64>() / e.len() as f64;
        assert!((var_e - 1.0).abs() < 0.02);
        assert!(corr(e, w).abs() < 0.01);
        for i in 0..s.len() {
            assert!(s.x[(i, 0)] > 0.0 && s.x[(i, 0)] < 1.0);
            assert!(s.z[(i, 0)] > 0.0 && s.z[(i, 0)] < 1.0);
        }
    }

    #[test]
    fn demand_distribution() {
        let s = sample_design(&DesignSpec::new(DesignKind::Demand, 100_000, 2).with_rho(0.9)).unwrap();
        let Confounders::Demand { v, e, .. } = &s.confounders else { panic!() };
        assert!((corr(e, v) - 0.9).abs() < 0.01);
        let t: Vec<f64> = (0..s.len()).map(|i| s.x[(i, 1)]).collect();
        assert!((mean(&t) - 5.0).abs() < 0.05);
        assert!(t.iter().all(|t| (0.0..=10.0).contains(t)));
        for i in 0..s.len() {
            let sv = s.x[(i, 2)];
            assert!((1.0..=7.0).contains(&sv) && sv.fract() == 0.0);
            assert_eq!(s.x[(i, 1)], s.z[(i, 1)]);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(sample_design(&DesignSpec::new(DesignKind::Linear, 7, 0)).is_err());
        assert!(sample_design(&DesignSpec::new(DesignKind::Linear, 10, 0).with_split_ratio(1.0)).is_err());
        assert!(sample_design(&DesignSpec::new(DesignKind::Demand, 10, 0).with_rho(1.0)).is_err());
        // Rho is ignored outside the demand design.
        assert!(sample_design(&DesignSpec::new(DesignKind::Linear, 10, 0).with_rho(1.0)).is_ok());
    }

    #[test]
    fn split_is_a_partition() {
        for (total, ratio) in [(10, 0.5), (1000, 0.3), (9, 0.9)] {
            let (a, b) = split_indices(total, ratio, 5).unwrap();
            assert!(a.len() >= 2 && b.len() >= 2);
            let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..total).collect::<Vec<_>>());
        }
        assert_eq!(split_indices(1000, 0.3, 5).unwrap().0.len(), 300);
    }
}
