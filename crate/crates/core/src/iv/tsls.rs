//! Linear two-stage least squares and ordinary least squares.

use faer::{Mat, MatRef};

use crate::error::{KivError, Result};
use crate::iv::Predictor;
use crate::linalg::{column, ensure_finite, spd_solve, DenseMatrix};

/// An affine predictor `intercept + slopes . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.slopes.len() {
            return Err(KivError::dims("linear model inputs", self.slopes.len(), points.ncols()));
        }
        Ok((0..points.nrows())
            .map(|i| self.intercept + self.slopes.iter().enumerate().map(|(j, b)| b * points[(i, j)]).sum::<f64>())
            .collect())
    }
}

impl Predictor for LinearModel {
    fn predict(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        LinearModel::predict(self, points)
    }
}

fn with_intercept(a: MatRef<'_, f64>) -> DenseMatrix {
    Mat::from_fn(a.nrows(), a.ncols() + 1, |i, j| if j == 0 { 1.0 } else { a[(i, j - 1)] })
}

/// `(A^T A)^{-1} A^T B`; any need for jitter means the columns of `A` are
/// (numerically) dependent.
fn least_squares(a: MatRef<'_, f64>, b: MatRef<'_, f64>, what: &str) -> Result<DenseMatrix> {
    let gram = a.transpose() * a;
    let rhs = a.transpose() * b;
    match spd_solve(gram.as_ref(), rhs.as_ref()) {
        Ok((s, report)) if !report.jittered() => Ok(s),
        Ok(_) | Err(KivError::FactorizationFailure { .. }) => {
            Err(KivError::RankDeficient(format!("{what} has linearly dependent columns")))
        }
        Err(e) => Err(e),
    }
}

fn check(x: MatRef<'_, f64>, y: &[f64], z: Option<MatRef<'_, f64>>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(KivError::EmptyInput("linear regression inputs"));
    }
    if y.len() != x.nrows() {
        return Err(KivError::dims("linear regression outputs", x.nrows(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(KivError::NonFinite("linear regression outputs"));
    }
    ensure_finite(x, "linear regression inputs")?;
    if let Some(z) = z {
        if z.nrows() != x.nrows() {
            return Err(KivError::dims("instrument rows", x.nrows(), z.nrows()));
        }
        if z.ncols() == 0 {
            return Err(KivError::EmptyInput("instruments"));
        }
        ensure_finite(z, "instruments")?;
    }
    Ok(())
}

fn from_coefficients(beta: &DenseMatrix) -> LinearModel {
    LinearModel {
        intercept: beta[(0, 0)],
        slopes: (1..beta.nrows()).map(|i| beta[(i, 0)]).collect(),
    }
}

/// Regresses `[1, X]` on `[1, Z]`, then `y` on the fitted values.
pub fn fit_2sls(x: MatRef<'_, f64>, y: &[f64], z: MatRef<'_, f64>) -> Result<LinearModel> {
    check(x, y, Some(z))?;
    let x1 = with_intercept(x);
    let z1 = with_intercept(z);
    let first = least_squares(z1.as_ref(), x1.as_ref(), "[1, Z]")?;
    let fitted = &z1 * &first;
    let beta = least_squares(fitted.as_ref(), column(y).as_ref(), "projected [1, X]")?;
    Ok(from_coefficients(&beta))
}

pub fn fit_ols(x: MatRef<'_, f64>, y: &[f64]) -> Result<LinearModel> {
    check(x, y, None)?;
    let x1 = with_intercept(x);
    let beta = least_squares(x1.as_ref(), column(y).as_ref(), "[1, X]")?;
    Ok(from_coefficients(&beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{sample_design, DesignKind, DesignSpec};

    #[test]
    fn noiseless_line_is_exact() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| 4.0 * x - 2.0).collect();
        let m = fit_2sls(column(&xs).as_ref(), &y, column(&xs).as_ref()).unwrap();
        assert!((m.slopes[0] - 4.0).abs() < 1e-9);
        assert!((m.intercept + 2.0).abs() < 1e-9);
        let p = m.predict(column(&[0.5]).as_ref()).unwrap();
        assert!(p[0].abs() < 1e-9);
    }

    #[test]
    fn zero_outputs() {
        let xs = [0.1, 0.5, 0.7, 0.2];
        let zs = [0.3, 0.1, 0.9, 0.4];
        let m = fit_2sls(column(&xs).as_ref(), &[0.0; 4], column(&zs).as_ref()).unwrap();
        assert_eq!(m.intercept, 0.0);
        assert_eq!(m.slopes, vec![0.0]);
    }

    #[test]
    fn constant_instrument_is_rank_deficient() {
        let xs = [0.1, 0.5, 0.7, 0.2];
        let r = fit_2sls(column(&xs).as_ref(), &[1.0, 2.0, 3.0, 4.0], column(&[0.5; 4]).as_ref());
        assert!(matches!(r, Err(KivError::RankDeficient(_))));
        assert!(matches!(fit_ols(column(&[1.0; 4]).as_ref(), &[1.0, 2.0, 3.0, 4.0]), Err(KivError::RankDeficient(_))));
    }

    #[test]
    fn corrects_confounding_bias() {
        let s = sample_design(&DesignSpec::new(DesignKind::Linear, 10_000, 17)).unwrap();
        let iv = fit_2sls(s.x.as_ref(), &s.y, s.z.as_ref()).unwrap();
        let ols = fit_ols(s.x.as_ref(), &s.y).unwrap();
        assert!((iv.slopes[0] - 4.0).abs() < 0.3, "2sls slope {}", iv.slopes[0]);
        assert!((ols.slopes[0] - 4.0).abs() > 0.5, "ols slope {}", ols.slopes[0]);
    }
}
