//! Data-matrix containers, centering, and empirical covariance products.
//!
//! Matrices follow the features x samples convention: row = feature, column =
//! sample. Covariance products are unnormalized (`X X^T`, not divided by n);
//! every downstream correlation ratio is invariant to that scale.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg;

/// Threshold under which a feature row is treated as constant.
const CONSTANT_ROW_STD: f64 = 1e-12;

/// A features x samples matrix for one modality.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    values: Array2<f64>,
    centered: bool,
}

impl DataMatrix {
    /// Wraps a features x samples matrix. Requires at least one feature and
    /// two samples.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 1 {
            return Err(Error::dim("data matrix needs at least one feature row"));
        }
        if values.ncols() < 2 {
            return Err(Error::dim(format!(
                "data matrix needs at least two samples, got {}",
                values.ncols()
            )));
        }
        Ok(Self {
            values,
            centered: false,
        })
    }

    /// Wraps a matrix that is already centered (row means zero).
    pub fn new_centered(values: Array2<f64>) -> Result<Self> {
        let mut m = Self::new(values)?;
        m.centered = true;
        Ok(m)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn n_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Returns a copy with every feature row shifted to zero mean.
    pub fn centered(&self) -> DataMatrix {
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            let mean = row.mean().expect("non-empty row");
            row -= mean;
        }
        DataMatrix {
            values,
            centered: true,
        }
    }

    /// Per-feature mean vector (one entry per row).
    pub fn row_means(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .map(|r| r.mean().expect("non-empty row"))
            .collect()
    }

    /// Returns a copy with each row z-scored (zero mean, unit population
    /// standard deviation). Constant rows are mapped to all-zero rows so that
    /// degenerate features cannot abort a pipeline run.
    pub fn standardized(&self) -> DataMatrix {
        let n = self.n_samples() as f64;
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            let mean = row.mean().expect("non-empty row");
            row -= mean;
            let std = (row.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            if std > CONSTANT_ROW_STD {
                row /= std;
            } else {
                row.fill(0.0);
            }
        }
        DataMatrix {
            values,
            centered: true,
        }
    }

    /// Centers with externally supplied per-row means (training statistics
    /// applied to held-out data).
    pub fn centered_with_means(&self, means: &[f64]) -> Result<DataMatrix> {
        if means.len() != self.n_features() {
            return Err(Error::dim(format!(
                "expected {} row means, got {}",
                self.n_features(),
                means.len()
            )));
        }
        let mut values = self.values.clone();
        for (mut row, &m) in values.rows_mut().into_iter().zip(means) {
            row -= m;
        }
        Ok(DataMatrix {
            values,
            centered: true,
        })
    }

    /// Restricts to a subset of sample columns, keeping the centered flag off
    /// (subsetting invalidates row means).
    pub fn select_samples(&self, indices: &[usize]) -> Result<DataMatrix> {
        if indices.len() < 2 {
            return Err(Error::dim("sample subset needs at least two columns"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_samples()) {
            return Err(Error::dim(format!(
                "sample index {bad} out of range (n_samples = {})",
                self.n_samples()
            )));
        }
        let values = self.values.select(Axis(1), indices);
        Ok(DataMatrix {
            values,
            centered: false,
        })
    }
}

/// The empirical covariance products of a centered two-modality pair.
#[derive(Debug, Clone)]
pub struct CovarianceTriple {
    /// p x p product `X X^T`.
    pub cxx: Array2<f64>,
    /// q x q product `Y Y^T`.
    pub cyy: Array2<f64>,
    /// p x q product `X Y^T`.
    pub cxy: Array2<f64>,
}

impl CovarianceTriple {
    /// Validates symmetry and positive semi-definiteness of the auto terms.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("cxx", &self.cxx), ("cyy", &self.cyy)] {
            let asym = max_abs(&(m - &m.t()));
            if asym > 1e-10 {
                return Err(Error::domain(format!(
                    "{name} is not symmetric (max asymmetry {asym:.3e})"
                )));
            }
            let (vals, _) = linalg::sym_eigen(m.view())?;
            let largest = vals[vals.len() - 1].max(0.0);
            if vals[0] < -1e-8 * largest.max(1.0) {
                return Err(Error::domain(format!(
                    "{name} is not positive semi-definite (smallest eigenvalue {:.3e})",
                    vals[0]
                )));
            }
        }
        if self.cxy.nrows() != self.cxx.nrows() || self.cxy.ncols() != self.cyy.nrows() {
            return Err(Error::dim("cxy shape inconsistent with cxx/cyy"));
        }
        Ok(())
    }
}

/// Computes `(X X^T, Y Y^T, X Y^T)` for centered inputs with matching sample
/// counts.
pub fn covariance_triple(x: &DataMatrix, y: &DataMatrix) -> Result<CovarianceTriple> {
    if x.n_samples() != y.n_samples() {
        return Err(Error::dim(format!(
            "sample count mismatch: {} vs {}",
            x.n_samples(),
            y.n_samples()
        )));
    }
    if !x.is_centered() || !y.is_centered() {
        return Err(Error::Contract(
            "covariance_triple requires centered inputs".into(),
        ));
    }
    let xv = x.values();
    let yv = y.values();
    Ok(CovarianceTriple {
        cxx: xv.dot(&xv.t()),
        cyy: yv.dot(&yv.t()),
        cxy: xv.dot(&yv.t()),
    })
}

/// The whitened coupling matrix `(Cxx + rI)^{-1/2} Cxy (Cyy + rI)^{-1/2}`.
///
/// Inverse square roots go through the symmetric eigendecomposition with
/// eigenvalues clamped at the ridge floor; a non-positive-definite matrix
/// after the ridge raises a singularity error carrying the smallest
/// eigenvalue.
pub fn whitened_coupling(c: &CovarianceTriple, ridge: f64) -> Result<Array2<f64>> {
    let wx = linalg::inv_sqrt_spd(c.cxx.view(), ridge, "whitening Cxx")?;
    let wy = linalg::inv_sqrt_spd(c.cyy.view(), ridge, "whitening Cyy")?;
    Ok(wx.dot(&c.cxy).dot(&wy))
}

/// Default whitening ridge: `1e-6 * trace(Cxx)/p` whenever p >= n (the
/// covariance is then necessarily singular), zero otherwise.
pub fn default_ridge(cxx: &Array2<f64>, n_samples: usize) -> f64 {
    let p = cxx.nrows();
    if p >= n_samples {
        1e-6 * cxx.diag().sum() / p as f64
    } else {
        0.0
    }
}

pub(crate) fn max_abs(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
