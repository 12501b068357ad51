use faer::{Mat, MatRef};

use crate::designs::{split_indices, GeneratedSample};
use crate::error::{KivError, Result};
use crate::linalg::{ensure_finite, DenseMatrix};

/// Observations used by one stage.
#[derive(Clone, Debug)]
pub struct StageSample {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub z: DenseMatrix,
}

impl StageSample {
    pub fn new(x: DenseMatrix, y: Vec<f64>, z: DenseMatrix) -> Result<Self> {
        let s = StageSample { x, y, z };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.x.nrows() != n || self.z.nrows() != n {
            return Err(KivError::dims(
                "StageSample",
                format!("{n} rows in x and z"),
                format!("x {} rows, z {} rows", self.x.nrows(), self.z.nrows()),
            ));
        }
        if self.x.ncols() == 0 || self.z.ncols() == 0 {
            return Err(KivError::EmptyInput("stage sample with zero-width x or z"));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(KivError::NonFinite("stage outputs"));
        }
        ensure_finite(self.x.as_ref(), "stage inputs")?;
        ensure_finite(self.z.as_ref(), "stage instruments")
    }

    fn rows(x: MatRef<'_, f64>, idx: &[usize]) -> DenseMatrix {
        Mat::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
    }
}

/// Stage-1 sample `(X, Y, Z)` of size `n` and stage-2 sample
/// `(X~, Y~, Z~)` of size `m`.
#[derive(Clone, Debug)]
pub struct SplitDataset {
    pub stage1: StageSample,
    pub stage2: StageSample,
}

impl SplitDataset {
    pub fn new(stage1: StageSample, stage2: StageSample) -> Result<Self> {
        let d = SplitDataset { stage1, stage2 };
        d.validate()?;
        Ok(d)
    }

    /// Both stages see the same observations.
    pub fn shared(x: DenseMatrix, y: Vec<f64>, z: DenseMatrix) -> Result<Self> {
        let s = StageSample::new(x, y, z)?;
        SplitDataset::new(s.clone(), s)
    }

    /// Random disjoint split of a generated sample.
    pub fn from_sample(sample: &GeneratedSample, ratio: f64, seed: u64) -> Result<Self> {
        let (first, second) = split_indices(sample.len(), ratio, seed)?;
        let take = |idx: &[usize]| {
            StageSample::new(
                StageSample::rows(sample.x.as_ref(), idx),
                idx.iter().map(|&i| sample.y[i]).collect(),
                StageSample::rows(sample.z.as_ref(), idx),
            )
        };
        SplitDataset::new(take(&first)?, take(&second)?)
    }

    pub fn n(&self) -> usize {
        self.stage1.len()
    }

    pub fn m(&self) -> usize {
        self.stage2.len()
    }

    pub fn input_dim(&self) -> usize {
        self.stage1.x.ncols()
    }

    pub fn instrument_dim(&self) -> usize {
        self.stage1.z.ncols()
    }

    /// All inputs from both stages, stacked.
    pub fn all_x(&self) -> DenseMatrix {
        stack(self.stage1.x.as_ref(), self.stage2.x.as_ref())
    }

    pub fn all_z(&self) -> DenseMatrix {
        stack(self.stage1.z.as_ref(), self.stage2.z.as_ref())
    }

    fn validate(&self) -> Result<()> {
        if self.n() < 2 || self.m() < 2 {
            return Err(KivError::InvalidSpec(format!(
                "each stage needs at least two observations (n = {}, m = {})",
                self.n(),
                self.m()
            )));
        }
        if self.stage1.x.ncols() != self.stage2.x.ncols() {
            return Err(KivError::dims("SplitDataset inputs", self.stage1.x.ncols(), self.stage2.x.ncols()));
        }
        if self.stage1.z.ncols() != self.stage2.z.ncols() {
            return Err(KivError::dims("SplitDataset instruments", self.stage1.z.ncols(), self.stage2.z.ncols()));
        }
        Ok(())
    }
}

pub(crate) fn stack(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> DenseMatrix {
    let n = a.nrows();
    Mat::from_fn(n + b.nrows(), a.ncols(), |i, j| if i < n { a[(i, j)] } else { b[(i - n, j)] })
}
