//! Causal validation of the two regularizers and the rate-based alternative.
//!
//! The stage-1 loss is evaluated on the stage-2 sample and the stage-2 loss on
//! the stage-1 sample. Grid searches diagonalize once per stage so that every
//! grid point costs at most a quadratic number of operations.

use faer::{Mat, MatRef};

use crate::error::{KivError, Result};
use crate::iv::data::SplitDataset;
use crate::iv::kiv::{check_hyper, check_kernels, fit_kiv, stage1_weights, symmetrize_in_place};
use crate::kernels::{gram_matrix, KernelSpec};
use crate::linalg::{column, quadratic_trace, DenseMatrix, SymmetricSpectrum};

pub const DEFAULT_GRID_POINTS: usize = 20;
pub const DEFAULT_GRID_MIN: f64 = 1e-10;
pub const DEFAULT_GRID_MAX: f64 = 1.0;
pub const REFINE_POINTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub enum TuningPolicy {
    GridSearch {
        lambda_grid: Vec<f64>,
        xi_grid: Vec<f64>,
        /// Adds a 10-point pass over the decade around each coarse winner.
        refine: bool,
    },
    TheoreticalRate { c1: f64, b: f64, c: f64 },
}

impl Default for TuningPolicy {
    fn default() -> Self {
        TuningPolicy::default_grid()
    }
}

impl TuningPolicy {
    /// 20 log-spaced values in `[1e-10, 1]` for both regularizers, refined.
    pub fn default_grid() -> Self {
        let g = log_grid(DEFAULT_GRID_MIN, DEFAULT_GRID_MAX, DEFAULT_GRID_POINTS);
        TuningPolicy::GridSearch {
            lambda_grid: g.clone(),
            xi_grid: g,
            refine: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TuningPolicy::GridSearch { lambda_grid, xi_grid, .. } => {
                validate_grid("lambda grid", lambda_grid)?;
                validate_grid("xi grid", xi_grid)
            }
            TuningPolicy::TheoreticalRate { c1, b, c } => {
                if !(*c1 > 1.0 && *c1 <= 2.0) {
                    return Err(KivError::InvalidSpec(format!("c1 must lie in (1, 2], got {c1}")));
                }
                if !(b.is_finite() && *b > 1.0) {
                    return Err(KivError::InvalidSpec(format!("b must be finite and > 1, got {b}")));
                }
                if !(*c > 1.0 && *c <= 2.0) {
                    return Err(KivError::InvalidSpec(format!("c must lie in (1, 2], got {c}")));
                }
                Ok(())
            }
        }
    }
}

/// `lambda = n^(-1/(c1+1))`, `xi = m^(-b/(b c+1))`.
pub fn rate_schedule(n: usize, m: usize, c1: f64, b: f64, c: f64) -> (f64, f64) {
    ((n as f64).powf(-1.0 / (c1 + 1.0)), (m as f64).powf(-b / (b * c + 1.0)))
}

/// `count` log-spaced values from `lo` to `hi`, endpoints included.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
            }
        })
        .collect()
}

/// The refinement grid: one decade centred (in log scale) on `centre`.
pub fn decade_refinement(centre: f64) -> Vec<f64> {
    let half = 10f64.sqrt();
    log_grid(centre / half, centre * half, REFINE_POINTS)
}

pub(crate) fn validate_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(KivError::InvalidSpec(format!("{name} is empty")));
    }
    if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(KivError::InvalidSpec(format!("{name} must be finite and > 0")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KivError::InvalidSpec(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// Argmin over `(value, loss)` pairs; equal losses resolve to the larger
/// value and NaN losses never win over finite ones.
pub(crate) fn argmin_prefer_larger(trace: &[(f64, f64)]) -> f64 {
    let key = |l: f64| if l.is_nan() { f64::INFINITY } else { l };
    let mut best = trace[0];
    for &(v, l) in &trace[1..] {
        let (lb, ll) = (key(best.1), key(l));
        if ll < lb || (ll == lb && v > best.0) {
            best = (v, l);
        }
    }
    best.0
}

/// Validation losses recorded during tuning, in evaluation order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TuningTrace {
    pub stage1: Vec<(f64, f64)>,
    pub stage2: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tuned {
    pub lambda: f64,
    pub xi: f64,
    pub trace: TuningTrace,
}

/// Out-of-sample embedding loss
/// `(1/m) tr[K_X~X~ - 2 K_X~X G + G^T K_XX G]` with `G` the stage-1 weights.
pub fn stage1_loss(data: &SplitDataset, kernel_x: &KernelSpec, kernel_z: &KernelSpec, lambda: f64) -> Result<f64> {
    check_kernels(data, kernel_x, kernel_z)?;
    let (gamma, _) = stage1_weights(data, kernel_z, lambda)?;
    let (x, xt) = (data.stage1.x.as_ref(), data.stage2.x.as_ref());
    let k_tt = gram_matrix(kernel_x, xt, xt)?;
    let k_tx = gram_matrix(kernel_x, xt, x)?;
    let k_xx = gram_matrix(kernel_x, x, x)?;
    Ok(quadratic_trace(k_tt.as_ref(), k_tx.as_ref(), gamma.as_ref(), k_xx.as_ref())? / data.m() as f64)
}

/// Mean squared error on the stage-1 pairs of the model fitted with
/// `(lambda, xi)`.
pub fn stage2_loss(
    data: &SplitDataset,
    kernel_x: &KernelSpec,
    kernel_z: &KernelSpec,
    lambda: f64,
    xi: f64,
) -> Result<f64> {
    let model = fit_kiv(data, kernel_x, kernel_z, lambda, xi)?;
    let pred = model.predict(data.stage1.x.as_ref())?;
    Ok(mean_sq_diff(&data.stage1.y, &pred))
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / a.len() as f64
}

/// Stage-1 loss as a function of `lambda` after one eigendecomposition of
/// `K_ZZ = U diag(s) U^T`.
///
/// With `A = U^T K_ZZ~`, `C = U^T K_XX~` and `d_i = 1/(s_i + n lambda)`:
/// `m L1 = tr K_X~X~ - 2 sum_i d_i sum_j A_ij C_ij + d^T ((U^T K_XX U) o (A A^T)) d`.
pub struct Stage1Path {
    spectrum: SymmetricSpectrum,
    projected: DenseMatrix,
    base: f64,
    cross: Vec<f64>,
    quad: DenseMatrix,
    n: f64,
    m: f64,
}

impl Stage1Path {
    pub fn new(data: &SplitDataset, kernel_x: &KernelSpec, kernel_z: &KernelSpec) -> Result<Self> {
        check_kernels(data, kernel_x, kernel_z)?;
        let (x, xt) = (data.stage1.x.as_ref(), data.stage2.x.as_ref());
        let (z, zt) = (data.stage1.z.as_ref(), data.stage2.z.as_ref());
        let spectrum = SymmetricSpectrum::new(gram_matrix(kernel_z, z, z)?.as_ref())?;
        let a = spectrum.project(gram_matrix(kernel_z, z, zt)?.as_ref());
        let c = spectrum.project(gram_matrix(kernel_x, x, xt)?.as_ref());
        let k_xx = gram_matrix(kernel_x, x, x)?;
        let u = &spectrum.vectors;
        let mm = u.transpose() * (&k_xx * u);
        let g = &a * a.transpose();
        let quad = Mat::from_fn(mm.nrows(), mm.ncols(), |i, j| 0.5 * (mm[(i, j)] + mm[(j, i)]) * g[(i, j)]);
        let cross = (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * c[(i, j)]).sum())
            .collect();
        let base = kernel_x.diagonal(xt)?.iter().sum();
        Ok(Stage1Path {
            spectrum,
            projected: a,
            base,
            cross,
            quad,
            n: data.n() as f64,
            m: data.m() as f64,
        })
    }

    fn inverse_shifted(&self, lambda: f64) -> Vec<f64> {
        self.spectrum.values.iter().map(|s| 1.0 / (s + self.n * lambda)).collect()
    }

    pub fn loss(&self, lambda: f64) -> f64 {
        let d = self.inverse_shifted(lambda);
        let cross: f64 = d.iter().zip(&self.cross).map(|(d, c)| d * c).sum();
        let dv = column(&d);
        let quad = (dv.transpose() * (&self.quad * &dv))[(0, 0)];
        (self.base - 2.0 * cross + quad) / self.m
    }

    /// Stage-1 weights `U diag(d) A` at `lambda`.
    pub fn weights(&self, lambda: f64) -> DenseMatrix {
        let mut p = self.projected.clone();
        self.spectrum.scale_rows(&mut p, self.n * lambda);
        &self.spectrum.vectors * &p
    }
}

/// Stage-2 loss as a function of `xi` for fixed stage-1 weights `G`.
///
/// With `G^T K_XX G = Q diag(s) Q^T`, the stage-1 predictions are
/// `K_XX G Q diag(1/(s + m xi)) Q^T y~`.
pub struct Stage2Path {
    basis: DenseMatrix,
    projected_y: Vec<f64>,
    values: Vec<f64>,
    targets: Vec<f64>,
    m: f64,
}

impl Stage2Path {
    pub fn new(data: &SplitDataset, kernel_x: &KernelSpec, weights: MatRef<'_, f64>) -> Result<Self> {
        let x = data.stage1.x.as_ref();
        let kg = gram_matrix(kernel_x, x, x)? * weights;
        let mut reduced = weights.transpose() * &kg;
        symmetrize_in_place(&mut reduced);
        let spectrum = SymmetricSpectrum::new(reduced.as_ref())?;
        let py = spectrum.project(column(&data.stage2.y).as_ref());
        Ok(Stage2Path {
            basis: &kg * &spectrum.vectors,
            projected_y: (0..py.nrows()).map(|i| py[(i, 0)]).collect(),
            values: spectrum.values,
            targets: data.stage1.y.clone(),
            m: data.m() as f64,
        })
    }

    pub fn loss(&self, xi: f64) -> f64 {
        let shift = self.m * xi;
        let v = Mat::from_fn(self.values.len(), 1, |i, _| self.projected_y[i] / (self.values[i] + shift));
        let pred = &self.basis * &v;
        let pred: Vec<f64> = (0..pred.nrows()).map(|i| pred[(i, 0)]).collect();
        mean_sq_diff(&self.targets, &pred)
    }
}

fn search(grid: &[f64], refine: bool, loss: impl Fn(f64) -> f64) -> (f64, Vec<(f64, f64)>) {
    let mut trace: Vec<(f64, f64)> = grid.iter().map(|&v| (v, loss(v))).collect();
    if refine {
        let coarse = argmin_prefer_larger(&trace);
        trace.extend(decade_refinement(coarse).into_iter().map(|v| (v, loss(v))));
    }
    (argmin_prefer_larger(&trace), trace)
}

/// Selects `(lambda, xi)`: sequential causal validation for grids, closed-form
/// rates otherwise. Rate choices are traced with their direct losses.
pub fn tune(data: &SplitDataset, kernel_x: &KernelSpec, kernel_z: &KernelSpec, policy: &TuningPolicy) -> Result<Tuned> {
    policy.validate()?;
    check_kernels(data, kernel_x, kernel_z)?;
    match policy {
        TuningPolicy::GridSearch { lambda_grid, xi_grid, refine } => {
            let path1 = Stage1Path::new(data, kernel_x, kernel_z)?;
            let (lambda, stage1) = search(lambda_grid, *refine, |l| path1.loss(l));
            let weights = path1.weights(lambda);
            drop(path1);
            let path2 = Stage2Path::new(data, kernel_x, weights.as_ref())?;
            let (xi, stage2) = search(xi_grid, *refine, |x| path2.loss(x));
            Ok(Tuned {
                lambda,
                xi,
                trace: TuningTrace { stage1, stage2 },
            })
        }
        TuningPolicy::TheoreticalRate { c1, b, c } => {
            let (lambda, xi) = rate_schedule(data.n(), data.m(), *c1, *b, *c);
            check_hyper("lambda", lambda)?;
            check_hyper("xi", xi)?;
            Ok(Tuned {
                lambda,
                xi,
                trace: TuningTrace {
                    stage1: vec![(lambda, stage1_loss(data, kernel_x, kernel_z, lambda)?)],
                    stage2: vec![(xi, stage2_loss(data, kernel_x, kernel_z, lambda, xi)?)],
                },
            })
        }
    }
}
