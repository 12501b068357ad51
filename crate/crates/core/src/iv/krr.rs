//! Kernel ridge regression baseline, ignoring the instrument.

use faer::{Mat, MatRef};
use rand::seq::SliceRandom;

use crate::designs::{stream_rng, FOLD_STREAM};
use crate::error::{KivError, Result};
use crate::iv::tuning::{argmin_prefer_larger, decade_refinement, validate_grid};
use crate::iv::Predictor;
use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg::{column, ensure_finite, regularized_solve, DenseMatrix, SpdSolveReport, SymmetricSpectrum};

#[derive(Clone, Debug)]
pub struct KrrModel {
    pub anchors: DenseMatrix,
    pub coef: Vec<f64>,
    pub kernel: KernelSpec,
    pub reg: f64,
    pub report: SpdSolveReport,
}

impl KrrModel {
    pub fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        let k = gram_matrix(&self.kernel, points, self.anchors.as_ref())?;
        let h = &k * column(&self.coef);
        Ok((0..h.nrows()).map(|i| h[(i, 0)]).collect())
    }
}

impl Predictor for KrrModel {
    fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        KrrModel::predict(self, points)
    }
}

fn check_xy(x: MatRef<'_, f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(KivError::EmptyInput("kernel ridge inputs"));
    }
    if x.nrows() != y.len() {
        return Err(KivError::dims("kernel ridge outputs", x.nrows(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(KivError::NonFinite("kernel ridge outputs"));
    }
    ensure_finite(x, "kernel ridge inputs")
}

/// Dual coefficients `(K_XX + reg * s * I)^{-1} y` for `s` samples.
pub fn fit_krr(x: MatRef<'_, f64>, y: &[f64], kernel: &KernelSpec, reg: f64) -> Result<KrrModel> {
    check_xy(x, y)?;
    if !(reg.is_finite() && reg > 0.0) {
        return Err(KivError::InvalidSpec(format!("reg must be finite and > 0, got {reg}")));
    }
    let k = gram_matrix(kernel, x, x)?;
    let (coef, report) = regularized_solve(k.as_ref(), reg * y.len() as f64, column(y).as_ref())?;
    Ok(KrrModel {
        anchors: x.to_owned(),
        coef: (0..coef.nrows()).map(|i| coef[(i, 0)]).collect(),
        kernel: kernel.clone(),
        reg,
        report,
    })
}

/// Outcome of two-fold cross-validation; `trace` holds `(reg, mean held-out
/// MSE)` for every evaluated value.
#[derive(Clone, Debug, PartialEq)]
pub struct CvTuning {
    pub reg: f64,
    pub trace: Vec<(f64, f64)>,
}

/// One train/held-out direction, diagonalized once so that every `reg` costs
/// only a matrix-vector product.
struct FoldPath {
    spectrum: SymmetricSpectrum,
    proj_y: Vec<f64>,
    heldout_basis: DenseMatrix,
    heldout_y: Vec<f64>,
    train_len: f64,
}

impl FoldPath {
    fn new(x: MatRef<'_, f64>, y: &[f64], kernel: &KernelSpec, train: &[usize], held: &[usize]) -> Result<Self> {
        let rows = |idx: &[usize]| Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
        let xt = rows(train);
        let xh = rows(held);
        let ktt = gram_matrix(kernel, xt.as_ref(), xt.as_ref())?;
        let kht = gram_matrix(kernel, xh.as_ref(), xt.as_ref())?;
        let spectrum = SymmetricSpectrum::new(ktt.as_ref())?;
        let yt = column(&train.iter().map(|&i| y[i]).collect::<Vec<_>>());
        let p = spectrum.project(yt.as_ref());
        let heldout_basis = &kht * &spectrum.vectors;
        Ok(FoldPath {
            proj_y: (0..p.nrows()).map(|i| p[(i, 0)]).collect(),
            heldout_basis,
            heldout_y: held.iter().map(|&i| y[i]).collect(),
            train_len: train.len() as f64,
            spectrum,
        })
    }

    fn heldout_mse(&self, reg: f64) -> f64 {
        let shift = reg * self.train_len;
        let c = Mat::from_fn(self.proj_y.len(), 1, |i, _| self.proj_y[i] / (self.spectrum.values[i] + shift));
        let pred = &self.heldout_basis * &c;
        self.heldout_y
            .iter()
            .enumerate()
            .map(|(i, y)| (y - pred[(i, 0)]).powi(2))
            .sum::<f64>()
            / self.heldout_y.len() as f64
    }
}

struct TwoFold {
    folds: [FoldPath; 2],
}

impl TwoFold {
    fn new(x: MatRef<'_, f64>, y: &[f64], kernel: &KernelSpec, seed: u64) -> Result<Self> {
        check_xy(x, y)?;
        if y.len() < 4 {
            return Err(KivError::InvalidSpec("two-fold cross-validation needs at least 4 samples".into()));
        }
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.shuffle(&mut stream_rng(seed, FOLD_STREAM));
        let half = y.len() / 2;
        let mut a = idx[..half].to_vec();
        let mut b = idx[half..].to_vec();
        a.sort_unstable();
        b.sort_unstable();
        Ok(TwoFold {
            folds: [FoldPath::new(x, y, kernel, &a, &b)?, FoldPath::new(x, y, kernel, &b, &a)?],
        })
    }

    fn evaluate(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&r| (r, 0.5 * (self.folds[0].heldout_mse(r) + self.folds[1].heldout_mse(r))))
            .collect()
    }
}

/// Picks the ridge penalty minimizing the average held-out MSE of two seeded
/// folds. Ties go to the larger penalty.
pub fn cv2_tune_krr(x: MatRef<'_, f64>, y: &[f64], kernel: &KernelSpec, grid: &[f64], seed: u64) -> Result<CvTuning> {
    validate_grid("krr grid", grid)?;
    let folds = TwoFold::new(x, y, kernel, seed)?;
    let trace = folds.evaluate(grid);
    Ok(CvTuning {
        reg: argmin_prefer_larger(&trace),
        trace,
    })
}

/// As [`cv2_tune_krr`], followed by one 10-point refinement over the decade
/// centred on the coarse winner.
pub fn cv2_tune_krr_refined(
    x: MatRef<'_, f64>,
    y: &[f64],
    kernel: &KernelSpec,
    grid: &[f64],
    seed: u64,
) -> Result<CvTuning> {
    validate_grid("krr grid", grid)?;
    let folds = TwoFold::new(x, y, kernel, seed)?;
    let mut trace = folds.evaluate(grid);
    let coarse = argmin_prefer_larger(&trace);
    trace.extend(folds.evaluate(&decade_refinement(coarse)));
    Ok(CvTuning {
        reg: argmin_prefer_larger(&trace),
        trace,
    })
}
