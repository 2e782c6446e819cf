//! Classical canonical correlation analysis via SVD of the whitened coupling
//! matrix.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datamodel::{covariance_triple, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Variates with ell-2 norm below this are treated as degenerate.
const DEGENERATE_VARIATE_NORM: f64 = 1e-12;

/// Relative singular-value cutoff below which a pair is rank-deficient.
const RANK_TOL: f64 = 1e-10;

/// Per-pair status flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairFlag {
    Ok,
    /// Alternating solver hit its iteration cap before the tolerance.
    NotConverged,
    /// The pair carries no signal (rank deficiency or collapsed direction).
    Degenerate,
}

/// One pair of canonical weight vectors with its achieved correlation.
#[derive(Debug, Clone)]
pub struct CanonicalPair {
    /// Weight vector for the first modality, unit ell-2 norm.
    pub u: Array1<f64>,
    /// Weight vector for the second modality, unit ell-2 norm.
    pub v: Array1<f64>,
    /// Pearson correlation of the variates `u^T X` and `v^T Y`.
    pub rho: f64,
    /// Zero-based iteration index the pair was found at.
    pub iteration: usize,
    pub flag: PairFlag,
}

/// Fits the top-k canonical pairs.
///
/// Whitened singular vectors are mapped back through `(Cxx + rI)^{-1/2}`,
/// rescaled to unit ell-2 norm (deflation assumes unit-norm weights), and
/// sign-fixed so the largest-magnitude entry of `u` is positive. Pairs beyond
/// the numerical rank of the coupling matrix come back with `rho = 0` and the
/// `Degenerate` flag rather than being dropped.
pub fn cca_fit(x: &DataMatrix, y: &DataMatrix, k: usize, ridge: f64) -> Result<Vec<CanonicalPair>> {
    let max_k = x.n_features().min(y.n_features());
    if k < 1 || k > max_k {
        return Err(Error::domain(format!(
            "k = {k} outside [1, {max_k}] for p = {}, q = {}",
            x.n_features(),
            y.n_features()
        )));
    }
    let triple = covariance_triple(x, y)?;
    let wx = linalg::inv_sqrt_spd(triple.cxx.view(), ridge, "whitening Cxx")?;
    let wy = linalg::inv_sqrt_spd(triple.cyy.view(), ridge, "whitening Cyy")?;
    let coupling = wx.dot(&triple.cxy).dot(&wy);
    let (bu, s, bvt) = linalg::svd(coupling.view())?;

    let mut pairs = Vec::with_capacity(k);
    for j in 0..k {
        let u_w = bu.column(j);
        let v_w = bvt.row(j);
        let mut u = wx.dot(&u_w);
        let mut v = wy.dot(&v_w);
        normalize_pair_sign(&mut u, &mut v);
        let degenerate = s[j] < RANK_TOL * s[0].max(1e-300);
        let rho = if degenerate {
            0.0
        } else {
            canonical_correlation(u.view(), v.view(), x, y)
        };
        pairs.push(CanonicalPair {
            u,
            v,
            rho,
            iteration: j,
            flag: if degenerate {
                PairFlag::Degenerate
            } else {
                PairFlag::Ok
            },
        });
    }
    Ok(pairs)
}

/// Pearson correlation of the canonical variates `u^T X` and `v^T Y`.
///
/// Returns 0 when either variate has ell-2 norm below 1e-12.
pub fn canonical_correlation(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    x: &DataMatrix,
    y: &DataMatrix,
) -> f64 {
    let a = x.values().t().dot(&u);
    let b = y.values().t().dot(&v);
    pearson(a.view(), b.view())
}

/// Pearson correlation with the degenerate-variate rule.
pub(crate) fn pearson(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let norm_a = a.dot(&a).sqrt();
    let norm_b = b.dot(&b).sqrt();
    if norm_a < DEGENERATE_VARIATE_NORM || norm_b < DEGENERATE_VARIATE_NORM {
        return 0.0;
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let ac = a.mapv(|v| v - ma);
    let bc = b.mapv(|v| v - mb);
    let sa = ac.dot(&ac).sqrt();
    let sb = bc.dot(&bc).sqrt();
    if sa < DEGENERATE_VARIATE_NORM || sb < DEGENERATE_VARIATE_NORM {
        return 0.0;
    }
    ac.dot(&bc) / (sa * sb)
}

/// Rescales `(u, v)` to unit ell-2 norm and flips both so the
/// largest-magnitude entry of `u` is positive.
pub(crate) fn normalize_pair_sign(u: &mut Array1<f64>, v: &mut Array1<f64>) {
    let nu = u.dot(u).sqrt();
    if nu > 0.0 {
        *u /= nu;
    }
    let nv = v.dot(v).sqrt();
    if nv > 0.0 {
        *v /= nv;
    }
    let mut idx = 0;
    let mut best = 0.0;
    for (i, &val) in u.iter().enumerate() {
        if val.abs() > best {
            best = val.abs();
            idx = i;
        }
    }
    if u[idx] < 0.0 {
        u.mapv_inplace(|x| -x);
        v.mapv_inplace(|x| -x);
    }
}

/// Leading singular triplet of a cross matrix (dense SVD).
pub(crate) fn leading_singular_triplet(
    c: ArrayView2<f64>,
) -> Result<(Array1<f64>, f64, Array1<f64>)> {
    let (u, s, vt) = linalg::svd(c)?;
    Ok((u.column(0).to_owned(), s[0], vt.row(0).to_owned()))
}
