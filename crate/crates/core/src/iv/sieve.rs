//! Regularized sieve IV: KIV over finite basis dictionaries.

use faer::MatRef;

use crate::designs::DesignKind;
use crate::error::{KivError, Result};
use crate::iv::data::SplitDataset;
use crate::iv::kiv::{fit_kiv, KivModel};
use crate::iv::tuning::{tune, TuningPolicy};
use crate::kernels::{BasisSpec, FeatureMap, KernelSpec};

pub const SIEVE_ORDER: usize = 4;
pub const SIEVE_INTERIOR_KNOTS: usize = 1;
/// Price range of the demand evaluation grid.
pub const DEMAND_PRICE_GRID: (f64, f64) = (2.5, 14.5);
pub const DEMAND_TIME_RANGE: (f64, f64) = (0.0, 10.0);
pub const DEMAND_SEGMENTS: [f64; 7] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];

/// Tunes and fits KIV with the feature-map kernels of the two bases.
pub fn fit_sieve_iv(
    data: &SplitDataset,
    basis_x: &FeatureMap,
    basis_z: &FeatureMap,
    policy: &TuningPolicy,
) -> Result<KivModel> {
    let kx = KernelSpec::FeatureMap(basis_x.clone());
    let kz = KernelSpec::FeatureMap(basis_z.clone());
    let tuned = tune(data, &kx, &kz, policy)?;
    fit_kiv(data, &kx, &kz, tuned.lambda, tuned.xi)
}

fn column_range(points: MatRef<'_, f64>, j: usize) -> (f64, f64) {
    (0..points.nrows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
        (lo.min(points[(i, j)]), hi.max(points[(i, j)]))
    })
}

fn spline(lo: f64, hi: f64) -> Result<BasisSpec> {
    BasisSpec::bspline_uniform(SIEVE_ORDER, lo, hi, SIEVE_INTERIOR_KNOTS)
}

/// Cubic B-splines with one interior knot on every continuous coordinate and
/// one-hot levels on the demand segment.
///
/// Unit-interval designs use `[0, 1]`. Demand price and cost use the
/// observed range, with price widened to cover the evaluation grid.
pub fn design_bases(kind: DesignKind, x: MatRef<'_, f64>, z: MatRef<'_, f64>) -> Result<(FeatureMap, FeatureMap)> {
    if x.ncols() != kind.input_dim() || z.ncols() != kind.input_dim() {
        return Err(KivError::dims("sieve design columns", kind.input_dim(), format!("{} and {}", x.ncols(), z.ncols())));
    }
    match kind {
        DesignKind::Linear | DesignKind::Sigmoid => {
            Ok((FeatureMap::new(vec![spline(0.0, 1.0)?])?, FeatureMap::new(vec![spline(0.0, 1.0)?])?))
        }
        DesignKind::Demand => {
            let (plo, phi) = column_range(x, 0);
            let (clo, chi) = column_range(z, 0);
            if !(chi > clo) {
                return Err(KivError::DegenerateInput("demand cost has no spread".into()));
            }
            let time = || spline(DEMAND_TIME_RANGE.0, DEMAND_TIME_RANGE.1);
            let segment = || BasisSpec::OneHot {
                levels: DEMAND_SEGMENTS.to_vec(),
            };
            let price = spline(plo.min(DEMAND_PRICE_GRID.0), phi.max(DEMAND_PRICE_GRID.1))?;
            let cost = spline(clo, chi)?;
            Ok((FeatureMap::new(vec![price, time()?, segment()])?, FeatureMap::new(vec![cost, time()?, segment()])?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{eval_grid, mse_vs_truth, sample_design, DesignSpec};
    use crate::iv::tsls::fit_2sls;
    use crate::linalg::column;

    #[test]
    fn linear_basis_limit_is_2sls() {
        let zs: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64 / 40.0).collect();
        let xs: Vec<f64> = zs.iter().enumerate().map(|(i, z)| z + 0.3 * z * z + 0.05 * ((i % 3) as f64)).collect();
        let y: Vec<f64> = xs.iter().map(|x| 4.0 * x - 2.0).collect();
        let data = SplitDataset::shared(column(&xs), y.clone(), column(&zs)).unwrap();
        let linear = FeatureMap::new(vec![BasisSpec::LinearWithIntercept]).unwrap();
        let policy = TuningPolicy::GridSearch {
            lambda_grid: vec![1e-12],
            xi_grid: vec![1e-12],
            refine: false,
        };
        let sieve = fit_sieve_iv(&data, &linear, &linear, &policy).unwrap();
        let tsls = fit_2sls(column(&xs).as_ref(), &y, column(&zs).as_ref()).unwrap();
        let grid = column(&(0..=20).map(|i| i as f64 / 20.0).collect::<Vec<_>>());
        let a = sieve.predict(grid.as_ref()).unwrap();
        let b = tsls.predict(grid.as_ref()).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-4, "{p} vs {q}");
        }
    }

    #[test]
    fn zero_outputs() {
        let s = sample_design(&DesignSpec::new(DesignKind::Sigmoid, 60, 2)).unwrap();
        let mut data = SplitDataset::from_sample(&s, 0.5, 2).unwrap();
        data.stage2.y.iter_mut().for_each(|y| *y = 0.0);
        let (bx, bz) = design_bases(DesignKind::Sigmoid, s.x.as_ref(), s.z.as_ref()).unwrap();
        let model = fit_sieve_iv(&data, &bx, &bz, &TuningPolicy::default_grid()).unwrap();
        assert!(model.predict(s.x.as_ref()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sigmoid_smoke() {
        let s = sample_design(&DesignSpec::new(DesignKind::Sigmoid, 1000, 8)).unwrap();
        let data = SplitDataset::from_sample(&s, 0.5, 8).unwrap();
        let (bx, bz) = design_bases(DesignKind::Sigmoid, s.x.as_ref(), s.z.as_ref()).unwrap();
        let model = fit_sieve_iv(&data, &bx, &bz, &TuningPolicy::default_grid()).unwrap();
        let grid = eval_grid(DesignKind::Sigmoid);
        let mse = mse_vs_truth(&model.predict(grid.points.as_ref()).unwrap(), &grid).unwrap();
        assert!(mse.mse.is_finite());
    }

    #[test]
    fn demand_bases_cover_grid() {
        let s = sample_design(&DesignSpec::new(DesignKind::Demand, 200, 4)).unwrap();
        let (bx, bz) = design_bases(DesignKind::Demand, s.x.as_ref(), s.z.as_ref()).unwrap();
        assert_eq!(bx.feature_count(), 5 * 5 * 7);
        assert_eq!(bz.feature_count(), 5 * 5 * 7);
        match &bx.dims[0] {
            BasisSpec::BSpline { lower, upper, .. } => assert!(*lower <= 2.5 && *upper >= 14.5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
