//! Kernels and Gram matrices.
//!
//! Two families are supported: the product Gaussian kernel with one
//! lengthscale per input dimension, and finite feature-map kernels
//! `k(a, b) = <f(a), f(b)>` whose feature map is a tensor product of
//! per-dimension bases (B-splines, affine, one-hot). The latter turn the KIV
//! machinery into a sieve estimator.

use faer::{Mat, MatRef};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{KivError, Result};
use crate::linalg::{ensure_finite, DenseMatrix};

/// Above this many points the median heuristic runs on a seeded subsample.
pub const MEDIAN_SAMPLE_CAP: usize = 2000;

/// Lengthscale used when a dimension has no spread.
pub const FALLBACK_LENGTHSCALE: f64 = 1.0;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `k(a, b) = prod_d exp(-(a_d - b_d)^2 / (2 l_d^2))`.
    Gaussian { lengthscales: Vec<f64> },
    /// `k(a, b) = <f(a), f(b)>` with `f` the tensor product of the bases.
    FeatureMap(FeatureMap),
}

impl KernelSpec {
    pub fn gaussian(lengthscales: Vec<f64>) -> Result<Self> {
        let spec = KernelSpec::Gaussian { lengthscales };
        spec.validate()?;
        Ok(spec)
    }

    /// Gaussian kernel with every lengthscale set by the median heuristic.
    /// Dimensions without spread fall back to [`FALLBACK_LENGTHSCALE`] and are
    /// reported in the returned choices.
    pub fn gaussian_median(points: MatRef<'_, f64>, seed: u64) -> Result<(Self, Vec<LengthscaleChoice>)> {
        let choices = (0..points.ncols())
            .map(|d| median_lengthscale(points, d, seed))
            .collect::<Result<Vec<_>>>()?;
        let spec = KernelSpec::gaussian(choices.iter().map(|c| c.value).collect())?;
        Ok((spec, choices))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian { lengthscales } => {
                if lengthscales.is_empty() {
                    return Err(KivError::InvalidSpec("no lengthscales".into()));
                }
                if let Some(l) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
                    return Err(KivError::InvalidSpec(format!("lengthscale {l} is not positive")));
                }
                Ok(())
            }
            KernelSpec::FeatureMap(map) => map.validate(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            KernelSpec::Gaussian { lengthscales } => lengthscales.len(),
            KernelSpec::FeatureMap(map) => map.dims.len(),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let pa = Mat::from_fn(1, a.len(), |_, j| a[j]);
        let pb = Mat::from_fn(1, b.len(), |_, j| b[j]);
        Ok(gram_matrix(self, pa.as_ref(), pb.as_ref())?[(0, 0)])
    }

    /// `k(x, x)` for every row.
    pub fn diagonal(&self, points: MatRef<'_, f64>) -> Result<Vec<f64>> {
        self.check_points(points, "kernel diagonal")?;
        match self {
            KernelSpec::Gaussian { .. } => Ok(vec![1.0; points.nrows()]),
            KernelSpec::FeatureMap(map) => {
                let f = map.features(points)?;
                Ok((0..f.nrows())
                    .map(|i| (0..f.ncols()).map(|j| f[(i, j)] * f[(i, j)]).sum())
                    .collect())
            }
        }
    }

    fn check_points(&self, points: MatRef<'_, f64>, context: &'static str) -> Result<()> {
        self.validate()?;
        if points.nrows() == 0 {
            return Err(KivError::EmptyInput(context));
        }
        if points.ncols() != self.input_dim() {
            return Err(KivError::dims(context, self.input_dim(), points.ncols()));
        }
        ensure_finite(points, context)
    }
}

/// A lengthscale chosen by the median heuristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LengthscaleChoice {
    pub dim: usize,
    pub value: f64,
    /// True when the dimension was degenerate and the fallback was used.
    pub fallback: bool,
}

/// Gram matrix `K[i, j] = k(a_i, b_j)` for point sets stored one point per row.
pub fn gram_matrix(spec: &KernelSpec, a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<DenseMatrix> {
    spec.check_points(a, "gram_matrix left points")?;
    spec.check_points(b, "gram_matrix right points")?;
    match spec {
        KernelSpec::Gaussian { lengthscales } => {
            let inv: Vec<f64> = lengthscales.iter().map(|l| 0.5 / (l * l)).collect();
            Ok(Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
                let mut s = 0.0;
                for (d, w) in inv.iter().enumerate() {
                    let t = a[(i, d)] - b[(j, d)];
                    s += t * t * w;
                }
                (-s).exp()
            }))
        }
        KernelSpec::FeatureMap(map) => {
            let fa = map.features(a)?;
            let fb = map.features(b)?;
            Ok(&fa * fb.transpose())
        }
    }
}

/// Median of all pairwise absolute distances along one dimension.
pub fn median_heuristic(points: MatRef<'_, f64>, dim: usize) -> Result<f64> {
    if dim >= points.ncols() {
        return Err(KivError::dims("median_heuristic", format!("dim < {}", points.ncols()), dim));
    }
    let values: Vec<f64> = (0..points.nrows()).map(|i| points[(i, dim)]).collect();
    median_pairwise(&values)
}

fn median_pairwise(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(KivError::DegenerateInput("median heuristic needs at least two points".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(KivError::NonFinite("median heuristic points"));
    }
    let n = values.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push((values[i] - values[j]).abs());
        }
    }
    let k = dists.len();
    let mid = k / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if k % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if median > 0.0 {
        Ok(median)
    } else {
        Err(KivError::DegenerateInput("all pairwise distances are zero".into()))
    }
}

/// Median-heuristic lengthscale for one dimension with the subsample cap and
/// the degenerate-dimension fallback applied.
pub fn median_lengthscale(points: MatRef<'_, f64>, dim: usize, seed: u64) -> Result<LengthscaleChoice> {
    if dim >= points.ncols() {
        return Err(KivError::dims("median_lengthscale", format!("dim < {}", points.ncols()), dim));
    }
    let n = points.nrows();
    let values: Vec<f64> = if n > MEDIAN_SAMPLE_CAP {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, n, MEDIAN_SAMPLE_CAP).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| points[(i, dim)]).collect()
    } else {
        (0..n).map(|i| points[(i, dim)]).collect()
    };
    match median_pairwise(&values) {
        Ok(value) => Ok(LengthscaleChoice { dim, value, fallback: false }),
        Err(KivError::DegenerateInput(_)) => Ok(LengthscaleChoice {
            dim,
            value: FALLBACK_LENGTHSCALE,
            fallback: true,
        }),
        Err(e) => Err(e),
    }
}

/// One-dimensional basis.
#[derive(Clone, Debug, PartialEq)]
pub enum BasisSpec {
    /// B-splines of the given order (degree + 1) on `[lower, upper]`, with the
    /// boundary knots repeated `order` times.
    BSpline {
        order: usize,
        lower: f64,
        upper: f64,
        interior_knots: Vec<f64>,
    },
    /// `(1, x)`.
    LinearWithIntercept,
    /// Indicator of the nearest level.
    OneHot { levels: Vec<f64> },
}

impl BasisSpec {
    /// B-spline basis with `n_interior` equally spaced interior knots.
    pub fn bspline_uniform(order: usize, lower: f64, upper: f64, n_interior: usize) -> Result<Self> {
        let step = (upper - lower) / (n_interior + 1) as f64;
        let spec = BasisSpec::BSpline {
            order,
            lower,
            upper,
            interior_knots: (1..=n_interior).map(|i| lower + step * i as f64).collect(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BasisSpec::BSpline { order, lower, upper, interior_knots } => {
                if *order < 1 {
                    return Err(KivError::InvalidSpec("B-spline order must be >= 1".into()));
                }
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(KivError::InvalidSpec(format!("bad B-spline range [{lower}, {upper}]")));
                }
                let mut prev = *lower;
                for &k in interior_knots {
                    if !(k > prev && k < *upper) {
                        return Err(KivError::InvalidSpec(format!(
                            "interior knot {k} not strictly increasing inside ({lower}, {upper})"
                        )));
                    }
                    prev = k;
                }
                Ok(())
            }
            BasisSpec::LinearWithIntercept => Ok(()),
            BasisSpec::OneHot { levels } => {
                if levels.is_empty() || levels.iter().any(|l| !l.is_finite()) {
                    return Err(KivError::InvalidSpec("one-hot levels must be finite and nonempty".into()));
                }
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BasisSpec::BSpline { order, interior_knots, .. } => order + interior_knots.len(),
            BasisSpec::LinearWithIntercept => 2,
            BasisSpec::OneHot { levels } => levels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        match self {
            BasisSpec::BSpline { .. } => bspline_basis(self, x),
            BasisSpec::LinearWithIntercept => Ok(vec![1.0, x]),
            BasisSpec::OneHot { levels } => {
                let nearest = levels
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
                    .map(|(i, _)| i)
                    .ok_or_else(|| KivError::InvalidSpec("empty one-hot levels".into()))?;
                let mut out = vec![0.0; levels.len()];
                out[nearest] = 1.0;
                Ok(out)
            }
        }
    }
}

/// All B-spline basis functions at `x` (clamped into the declared range),
/// by the Cox-de Boor triangle.
pub fn bspline_basis(spec: &BasisSpec, x: f64) -> Result<Vec<f64>> {
    let BasisSpec::BSpline { order, lower, upper, interior_knots } = spec else {
        return Err(KivError::InvalidSpec("bspline_basis needs a B-spline spec".into()));
    };
    spec.validate()?;
    if !x.is_finite() {
        return Err(KivError::NonFinite("B-spline argument"));
    }
    let order = *order;
    let x = x.clamp(*lower, *upper);
    let knots = clamped_knots(order, *lower, *upper, interior_knots);
    let n_basis = order + interior_knots.len();

    // Span index s with knots[s] <= x < knots[s + 1]; the right end belongs
    // to the last nonempty span.
    let s = if x >= *upper {
        n_basis - 1
    } else {
        (order - 1..n_basis).rev().find(|&s| knots[s] <= x).unwrap_or(order - 1)
    };

    // local[j] holds the value of basis function s - degree + j.
    let degree = order - 1;
    let mut local = vec![0.0; order];
    local[0] = 1.0;
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    for j in 1..=degree {
        left[j] = x - knots[s + 1 - j];
        right[j] = knots[s + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { local[r] / denom } else { 0.0 };
            local[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        local[j] = saved;
    }
    let mut out = vec![0.0; n_basis];
    for (j, v) in local.into_iter().enumerate() {
        out[s - degree + j] = v;
    }
    Ok(out)
}

pub(crate) fn clamped_knots(order: usize, lower: f64, upper: f64, interior: &[f64]) -> Vec<f64> {
    let mut knots = Vec::with_capacity(2 * order + interior.len());
    knots.extend(std::iter::repeat_n(lower, order));
    knots.extend_from_slice(interior);
    knots.extend(std::iter::repeat_n(upper, order));
    knots
}

/// Tensor product of one basis per input dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub dims: Vec<BasisSpec>,
}

impl FeatureMap {
    pub fn new(dims: Vec<BasisSpec>) -> Result<Self> {
        let map = FeatureMap { dims };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(KivError::InvalidSpec("feature map with no dimensions".into()));
        }
        self.dims.iter().try_for_each(BasisSpec::validate)
    }

    pub fn feature_count(&self) -> usize {
        self.dims.iter().map(BasisSpec::len).product()
    }

    /// Feature matrix, one row per point. The last dimension varies fastest.
    pub fn features(&self, points: MatRef<'_, f64>) -> Result<DenseMatrix> {
        if points.ncols() != self.dims.len() {
            return Err(KivError::dims("FeatureMap::features", self.dims.len(), points.ncols()));
        }
        let p = self.feature_count();
        let mut out = Mat::zeros(points.nrows(), p);
        for i in 0..points.nrows() {
            let mut row = vec![1.0];
            for (d, basis) in self.dims.iter().enumerate() {
                let b = basis.eval(points[(i, d)])?;
                row = row
                    .iter()
                    .flat_map(|r| b.iter().map(move |v| r * v))
                    .collect();
            }
            for (j, v) in row.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}
