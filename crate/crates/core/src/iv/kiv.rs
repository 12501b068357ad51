//! Two-stage kernel instrumental variable regression.
//!
//! Stage 1 is a kernel ridge regression of the input features on the
//! instrument features (a conditional mean embedding), trained on the
//! stage-1 sample. Stage 2 regresses the stage-2 outputs on the embeddings of
//! the stage-2 instruments. The fitted structural function is
//! `h(x) = sum_i alpha_i k_X(x_i, x)` over the stage-1 inputs `x_i`, with
//!
//! ```text
//! W     = K_XX (K_ZZ + n lambda I)^{-1} K_ZZ~
//! alpha = (W W^T + m xi K_XX)^{-1} W y~
//! ```

use faer::MatRef;

use crate::error::{KivError, Result};
use crate::iv::data::SplitDataset;
use crate::iv::Predictor;
use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg::{column, ensure_finite, regularized_solve, spd_solve, DenseMatrix, SpdSolveReport};

/// How the stage-2 normal equations are solved.
///
/// Both produce a solution of `(W W^T + m xi K_XX) alpha = W y~`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Stage2System {
    /// `alpha = G (G^T K_XX G + m xi I)^{-1} y~` with
    /// `G = (K_ZZ + n lambda I)^{-1} K_ZZ~`. The `m x m` system is strictly
    /// positive definite for any `xi > 0`, even when `K_XX` is singular.
    #[default]
    Reduced,
    /// The `n x n` system as written, solved symmetrically with the jitter
    /// ladder. Poorly conditioned whenever `K_XX` is.
    Normal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KivFitReport {
    pub stage1: SpdSolveReport,
    pub stage2: SpdSolveReport,
}

impl KivFitReport {
    pub fn jittered(&self) -> bool {
        self.stage1.jittered() || self.stage2.jittered()
    }
}

/// A fitted KIV estimator.
#[derive(Clone, Debug)]
pub struct KivModel {
    /// Stage-1 inputs; the representer points of `h`.
    pub anchors: DenseMatrix,
    pub alpha: Vec<f64>,
    pub kernel_x: KernelSpec,
    pub kernel_z: KernelSpec,
    pub lambda: f64,
    pub xi: f64,
    pub fit_report: KivFitReport,
}

impl KivModel {
    /// `h(x)` at every row of `points`.
    pub fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        let k = gram_matrix(&self.kernel_x, points, self.anchors.as_ref())?;
        let h = &k * column(&self.alpha);
        Ok((0..h.nrows()).map(|i| h[(i, 0)]).collect())
    }

    /// Squared RKHS norm `alpha^T K_XX alpha` of the fitted function.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let k = gram_matrix(&self.kernel_x, self.anchors.as_ref(), self.anchors.as_ref())?;
        let a = column(&self.alpha);
        Ok((a.transpose() * &k * &a)[(0, 0)])
    }
}

impl Predictor for KivModel {
    fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        KivModel::predict(self, points)
    }
}

pub(crate) fn check_hyper(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KivError::InvalidSpec(format!("{name} must be finite and > 0, got {v}")))
    }
}

pub(crate) fn check_kernels(data: &SplitDataset, kernel_x: &KernelSpec, kernel_z: &KernelSpec) -> Result<()> {
    kernel_x.validate()?;
    kernel_z.validate()?;
    if kernel_x.input_dim() != data.input_dim() {
        return Err(KivError::dims("kernel_x dimension", data.input_dim(), kernel_x.input_dim()));
    }
    if kernel_z.input_dim() != data.instrument_dim() {
        return Err(KivError::dims("kernel_z dimension", data.instrument_dim(), kernel_z.input_dim()));
    }
    Ok(())
}

/// `(K_ZZ + n lambda I)^{-1} K_ZZ~`, the stage-1 embedding weights of the
/// stage-2 instruments (one column per stage-2 point).
pub fn stage1_weights(
    data: &SplitDataset,
    kernel_z: &KernelSpec,
    lambda: f64,
) -> Result<(DenseMatrix, SpdSolveReport)> {
    check_hyper("lambda", lambda)?;
    let z = data.stage1.z.as_ref();
    let k_zz = gram_matrix(kernel_z, z, z)?;
    let k_zzt = gram_matrix(kernel_z, z, data.stage2.z.as_ref())?;
    regularized_solve(k_zz.as_ref(), data.n() as f64 * lambda, k_zzt.as_ref())
}

/// Fits KIV with fixed regularization.
pub fn fit_kiv(
    data: &SplitDataset,
    kernel_x: &KernelSpec,
    kernel_z: &KernelSpec,
    lambda: f64,
    xi: f64,
) -> Result<KivModel> {
    fit_kiv_with(data, kernel_x, kernel_z, lambda, xi, Stage2System::default())
}

pub fn fit_kiv_with(
    data: &SplitDataset,
    kernel_x: &KernelSpec,
    kernel_z: &KernelSpec,
    lambda: f64,
    xi: f64,
    system: Stage2System,
) -> Result<KivModel> {
    check_kernels(data, kernel_x, kernel_z)?;
    check_hyper("lambda", lambda)?;
    check_hyper("xi", xi)?;
    let m = data.m() as f64;
    let x = data.stage1.x.as_ref();
    let k_xx = gram_matrix(kernel_x, x, x)?;
    let (gamma, stage1) = stage1_weights(data, kernel_z, lambda)?;
    let y = column(&data.stage2.y);

    let (alpha, stage2) = match system {
        Stage2System::Reduced => {
            let kg = &k_xx * &gamma;
            let mut reduced = gamma.transpose() * &kg;
            symmetrize_in_place(&mut reduced);
            let (v, report) = regularized_solve(reduced.as_ref(), m * xi, y.as_ref())?;
            (&gamma * &v, report)
        }
        Stage2System::Normal => {
            let w = &k_xx * &gamma;
            let mut lhs = &w * w.transpose() + (m * xi) * &k_xx;
            symmetrize_in_place(&mut lhs);
            let rhs = &w * &y;
            spd_solve(lhs.as_ref(), rhs.as_ref())?
        }
    };
    ensure_finite(alpha.as_ref(), "dual coefficients")?;

    Ok(KivModel {
        anchors: data.stage1.x.clone(),
        alpha: (0..alpha.nrows()).map(|i| alpha[(i, 0)]).collect(),
        kernel_x: kernel_x.clone(),
        kernel_z: kernel_z.clone(),
        lambda,
        xi,
        fit_report: KivFitReport { stage1, stage2 },
    })
}

pub(crate) fn symmetrize_in_place(a: &mut DenseMatrix) {
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::iv::data::StageSample;
    use crate::iv::krr::fit_krr;
    use crate::linalg::max_abs;
    use faer::Mat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn scalar_data(y_tilde: f64) -> SplitDataset {
        let s1 = StageSample::new(column(&[0.0]), vec![0.0], column(&[0.0])).unwrap();
        let s2 = StageSample::new(column(&[0.0]), vec![y_tilde], column(&[0.0])).unwrap();
        SplitDataset { stage1: s1, stage2: s2 }
    }

    pub(crate) fn random_data(n: usize, m: usize, seed: u64) -> SplitDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut stage = |k: usize| {
            let z: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x: Vec<f64> = z.iter().map(|z| z + 0.5 * rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|x| x.sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
            StageSample::new(column(&x), y, column(&z)).unwrap()
        };
        let s1 = stage(n);
        let s2 = stage(m);
        SplitDataset::new(s1, s2).unwrap()
    }

    fn unit() -> KernelSpec {
        KernelSpec::gaussian(vec![1.0]).unwrap()
    }

    #[test]
    fn scalar_hand_computation() {
        // Single observations bypass the n, m >= 2 constructor check.
        let data = scalar_data(2.0);
        let model = fit_kiv(&data, &unit(), &unit(), 1.0, 1.0).unwrap();
        assert!((model.alpha[0] - 0.8).abs() < 1e-15);
        let h = model.predict(column(&[0.0]).as_ref()).unwrap();
        assert!((h[0] - 0.8).abs() < 1e-15);
        let normal = fit_kiv_with(&data, &unit(), &unit(), 1.0, 1.0, Stage2System::Normal).unwrap();
        assert!((normal.alpha[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_outputs_give_zero_function() {
        let mut data = random_data(6, 5, 1);
        data.stage2.y = vec![0.0; 5];
        let model = fit_kiv(&data, &unit(), &unit(), 0.1, 0.1).unwrap();
        assert!(model.alpha.iter().all(|a| *a == 0.0));
        let h = model.predict(Mat::from_fn(7, 1, |i, _| i as f64 - 3.0).as_ref()).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn prediction_at_anchor_is_gram_column() {
        let data = random_data(6, 5, 2);
        let model = fit_kiv(&data, &unit(), &unit(), 0.1, 0.1).unwrap();
        let x = data.stage1.x.as_ref();
        let k = gram_matrix(&unit(), x, x).unwrap();
        let h = model.predict(x).unwrap();
        for j in 0..6 {
            let want: f64 = (0..6).map(|i| model.alpha[i] * k[(i, j)]).sum();
            assert!((h[j] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn reduced_and_normal_systems_agree() {
        let data = random_data(8, 7, 3);
        let a = fit_kiv_with(&data, &unit(), &unit(), 0.05, 0.02, Stage2System::Reduced).unwrap();
        let b = fit_kiv_with(&data, &unit(), &unit(), 0.05, 0.02, Stage2System::Normal).unwrap();
        let scale = a.alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.alpha.iter().zip(&b.alpha) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn krr_collapse() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        let data = SplitDataset::shared(column(&x), y.clone(), column(&x)).unwrap();
        let xi = 0.01;
        let kiv = fit_kiv(&data, &unit(), &unit(), 1e-10, xi).unwrap();
        let krr = fit_krr(column(&x).as_ref(), &y, &unit(), xi).unwrap();
        let grid = Mat::from_fn(100, 1, |i, _| -2.0 + 4.0 * i as f64 / 99.0);
        let a = kiv.predict(grid.as_ref()).unwrap();
        let b = krr.predict(grid.as_ref()).unwrap();
        let diff = a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-6, "max diff {diff}");
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let data = random_data(4, 4, 5);
        assert!(fit_kiv(&data, &unit(), &unit(), 0.0, 1.0).is_err());
        assert!(fit_kiv(&data, &unit(), &unit(), 1.0, f64::NAN).is_err());
        let two_d = KernelSpec::gaussian(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            fit_kiv(&data, &two_d, &unit(), 1.0, 1.0),
            Err(KivError::DimensionMismatch { .. })
        ));
        let model = fit_kiv(&data, &unit(), &unit(), 1.0, 1.0).unwrap();
        assert!(model.predict(Mat::<f64>::zeros(3, 2).as_ref()).is_err());
    }

    #[test]
    fn rkhs_norm_shrinks_with_xi() {
        let data = random_data(12, 12, 6);
        let mut prev = f64::INFINITY;
        let mut xi = 1e-6;
        while xi < 10.0 {
            let norm = fit_kiv(&data, &unit(), &unit(), 0.01, xi).unwrap().rkhs_norm_sq().unwrap();
            assert!(norm <= prev + 1e-12 * prev.abs().max(1.0));
            prev = norm;
            xi *= 2.0;
        }
    }

    #[test]
    fn deterministic_fit() {
        let data = random_data(20, 15, 7);
        let a = fit_kiv(&data, &unit(), &unit(), 0.01, 0.01).unwrap();
        let b = fit_kiv(&data, &unit(), &unit(), 0.01, 0.01).unwrap();
        assert_eq!(
            a.alpha.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.alpha.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(max_abs(a.anchors.as_ref()) > 0.0);
    }

    fn half() -> KernelSpec {
        KernelSpec::gaussian(vec![0.5]).unwrap()
    }

    fn normal_equations(
        data: &SplitDataset,
        kernel: &KernelSpec,
        lambda: f64,
        xi: f64,
    ) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
        let k = |a: MatRef<'_, f64>, b: MatRef<'_, f64>| gram_matrix(kernel, a, b).unwrap();
        let (n, m) = (data.n(), data.m());
        let k_xx = k(data.stage1.x.as_ref(), data.stage1.x.as_ref());
        let mut shifted = k(data.stage1.z.as_ref(), data.stage1.z.as_ref());
        for i in 0..n {
            shifted[(i, i)] += n as f64 * lambda;
        }
        let inv = crate::linalg::tests::gauss_jordan_inverse(&shifted);
        let w = &k_xx * inv * k(data.stage1.z.as_ref(), data.stage2.z.as_ref());
        let lhs = &w * w.transpose() + (m as f64 * xi) * &k_xx;
        let rhs = &w * column(&data.stage2.y);
        (lhs, rhs, w)
    }

    /// Random instance whose points sit one per cell of a uniform partition,
    /// so that Gram matrices stay well conditioned at lengthscale 1/2.
    pub(crate) fn stratified_data(n: usize, m: usize, seed: u64) -> SplitDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cells = |k: usize, rng: &mut ChaCha20Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..k).map(|i| 0.5 * (i as f64 + rng.random_range(0.3..0.7))).collect();
            rand::seq::SliceRandom::shuffle(v.as_mut_slice(), rng);
            v
        };
        let mut stage = |k: usize| {
            let x = cells(k, &mut rng);
            let z = cells(k, &mut rng);
            let y: Vec<f64> = x.iter().map(|x| x.sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
            StageSample::new(column(&x), y, column(&z)).unwrap()
        };
        let s1 = stage(n);
        let s2 = stage(m);
        SplitDataset::new(s1, s2).unwrap()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn matches_explicit_inverse_oracle(seed in 0u64..10_000, n in 2usize..9, m in 2usize..9) {
            let data = stratified_data(n, m, seed);
            let (lambda, xi) = (0.05, 0.01);
            let (lhs, rhs, _) = normal_equations(&data, &half(), lambda, xi);
            let oracle = crate::linalg::tests::gauss_jordan_inverse(&lhs) * &rhs;
            let model = fit_kiv(&data, &half(), &half(), lambda, xi).unwrap();
            let scale = max_abs(oracle.as_ref());
            for i in 0..n {
                proptest::prop_assert!((model.alpha[i] - oracle[(i, 0)]).abs() <= 1e-8 * scale);
            }
        }

        #[test]
        fn minimizes_stage2_objective(seed in 0u64..10_000, n in 2usize..13, m in 2usize..13) {
            // E(a) = (1/m) |y~ - W^T a|^2 + xi a^T K_XX a.
            let data = random_data(n, m, seed);
            let (lambda, xi) = (0.1, 0.05);
            let (_, _, w) = normal_equations(&data, &unit(), lambda, xi);
            let k_xx = gram_matrix(&unit(), data.stage1.x.as_ref(), data.stage1.x.as_ref()).unwrap();
            let objective = |a: &DenseMatrix| {
                let r = column(&data.stage2.y) - w.transpose() * a;
                (r.transpose() * &r)[(0, 0)] / m as f64 + xi * (a.transpose() * &k_xx * a)[(0, 0)]
            };
            let alpha = column(&fit_kiv(&data, &unit(), &unit(), lambda, xi).unwrap().alpha);
            let best = objective(&alpha);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let dir = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
                for sign in [-1e-3, 1e-3] {
                    let moved = &alpha + sign * &dir;
                    proptest::prop_assert!(objective(&moved) >= best - 1e-12);
                }
            }
        }
    }
}
