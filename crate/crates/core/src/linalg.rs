//! Dense decompositions used by the CCA machinery.
//!
//! Thin wrappers over `linfa-linalg` (pure-Rust, so results are reproducible
//! run to run) that fix the ordering conventions the rest of the crate relies
//! on: eigenvalues ascending, singular values descending.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use linfa_linalg::cholesky::SolveC;
use linfa_linalg::svd::SVD;

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Cyclic Jacobi rotations rather than tridiagonal QR: the QR route in the
/// available pure-Rust backends leaves residuals near sqrt(eps) * |M| on
/// close eigenvalue pairs, which is not good enough for the whitening paths
/// that divide by sqrt of near-zero eigenvalues. Jacobi costs more but its
/// residuals and eigenvector orthogonality stay at machine precision.
pub fn sym_eigen(m: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::dim(format!(
            "sym_eigen expects a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let mut a = m.to_owned();
    let mut vecs = Array2::<f64>::eye(n);
    let frob = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frob > 0.0 {
        let tol = 1e-15 * frob;
        const MAX_SWEEPS: usize = 64;
        for _ in 0..MAX_SWEEPS {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[[i, j]] * a[[i, j]];
                }
            }
            if (2.0 * off).sqrt() <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    jacobi_rotate(&mut a, &mut vecs, p, q);
                }
            }
        }
    }
    let vals = a.diag().to_owned();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[x].total_cmp(&vals[y]));
    let sorted_vals = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let sorted_vecs = reorder_columns(&vecs, &order);
    Ok((sorted_vals, sorted_vecs))
}

/// One Jacobi rotation zeroing the (p, q) entry of `a`, accumulated into
/// `vecs`. Uses the standard stable tangent formula.
fn jacobi_rotate(a: &mut Array2<f64>, vecs: &mut Array2<f64>, p: usize, q: usize) {
    let apq = a[[p, q]];
    if apq.abs() < f64::MIN_POSITIVE {
        return;
    }
    let app = a[[p, p]];
    let aqq = a[[q, q]];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta >= 0.0 {
        1.0 / (theta + (1.0 + theta * theta).sqrt())
    } else {
        -1.0 / (-theta + (1.0 + theta * theta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let tau = s / (1.0 + c);
    let n = a.nrows();

    a[[p, p]] = app - t * apq;
    a[[q, q]] = aqq + t * apq;
    a[[p, q]] = 0.0;
    a[[q, p]] = 0.0;
    for i in 0..n {
        if i != p && i != q {
            let aip = a[[i, p]];
            let aiq = a[[i, q]];
            a[[i, p]] = aip - s * (aiq + tau * aip);
            a[[i, q]] = aiq + s * (aip - tau * aiq);
            a[[p, i]] = a[[i, p]];
            a[[q, i]] = a[[i, q]];
        }
    }
    for i in 0..n {
        let vip = vecs[[i, p]];
        let viq = vecs[[i, q]];
        vecs[[i, p]] = vip - s * (viq + tau * vip);
        vecs[[i, q]] = viq + s * (vip - tau * viq);
    }
}

/// Full SVD with singular values sorted descending.
///
/// Returns (U, s, Vt) with U: m x r, s: r, Vt: r x n where r = min(m, n).
pub fn svd(m: ArrayView2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = m
        .to_owned()
        .svd(true, true)
        .map_err(|e| Error::Degenerate(format!("svd failed: {e}")))?;
    let u = u.expect("requested U");
    let vt = vt.expect("requested Vt");
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let sorted_s = Array1::from_iter(order.iter().map(|&i| s[i]));
    let sorted_u = reorder_columns(&u, &order);
    let sorted_vt = reorder_rows(&vt, &order);
    Ok((sorted_u, sorted_s, sorted_vt))
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    a.to_owned()
        .solvec(&b.to_owned())
        .map_err(|e| Error::Degenerate(format!("spd solve failed: {e}")))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inv_spd(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    solve_spd(a, Array2::eye(n).view())
}

/// `(m + ridge I)^{-1/2}` through the symmetric eigendecomposition.
///
/// Eigenvalues below the ridge floor are clamped up to it; a non-positive
/// smallest eigenvalue after the ridge is a singularity error.
pub fn inv_sqrt_spd(m: ArrayView2<f64>, ridge: f64, context: &str) -> Result<Array2<f64>> {
    sym_pow(m, ridge, -0.5, context)
}

/// `(m + ridge I)^{1/2}` companion of [`inv_sqrt_spd`].
pub fn sqrt_spd(m: ArrayView2<f64>, ridge: f64, context: &str) -> Result<Array2<f64>> {
    sym_pow(m, ridge, 0.5, context)
}

fn sym_pow(m: ArrayView2<f64>, ridge: f64, power: f64, context: &str) -> Result<Array2<f64>> {
    if ridge < 0.0 {
        return Err(Error::domain(format!("{context}: ridge must be >= 0")));
    }
    let shifted = m.to_owned() + Array2::<f64>::eye(m.nrows()) * ridge;
    let (vals, vecs) = sym_eigen(shifted.view())?;
    let smallest = vals[0];
    if smallest <= 0.0 {
        return Err(Error::Singular {
            context: context.to_string(),
            smallest_eigenvalue: smallest,
        });
    }
    let powered = vals.mapv(|v| v.max(ridge).powf(power));
    // Q diag(lambda^p) Q^T
    let scaled = &vecs * &powered.view().insert_axis(Axis(0));
    Ok(scaled.dot(&vecs.t()))
}

/// Inverse of a small general square matrix by Gauss-Jordan elimination with
/// partial pivoting. Fails on (near-)singular input.
pub fn inv_general(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::dim("inv_general expects a square matrix"));
    }
    let scale = a.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut work = a.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| work[[r1, col]].abs().total_cmp(&work[[r2, col]].abs()))
            .expect("non-empty range");
        if work[[pivot_row, col]].abs() < 1e-12 * scale {
            return Err(Error::domain(format!(
                "matrix is singular (pivot {:.3e} in column {col})",
                work[[pivot_row, col]]
            )));
        }
        if pivot_row != col {
            for j in 0..n {
                work.swap([pivot_row, j], [col, j]);
                inv.swap([pivot_row, j], [col, j]);
            }
        }
        let pivot = work[[col, col]];
        for j in 0..n {
            work[[col, j]] /= pivot;
            inv[[col, j]] /= pivot;
        }
        for row in 0..n {
            if row != col {
                let factor = work[[row, col]];
                if factor != 0.0 {
                    for j in 0..n {
                        work[[row, j]] -= factor * work[[col, j]];
                        inv[[row, j]] -= factor * inv[[col, j]];
                    }
                }
            }
        }
    }
    Ok(inv)
}

fn reorder_columns(m: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let cols: Vec<_> = order.iter().map(|&i| m.column(i)).collect();
    ndarray::stack(Axis(1), &cols).expect("consistent column shapes")
}

fn reorder_rows(m: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let rows: Vec<_> = order.iter().map(|&i| m.row(i)).collect();
    ndarray::stack(Axis(0), &rows).expect("consistent row shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn eigen_sorted_ascending_and_reconstructs() {
        let m = array![[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let (vals, vecs) = sym_eigen(m.view()).unwrap();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        let recon = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        assert_abs_diff_eq!(recon, m, epsilon = 1e-10);
    }

    #[test]
    fn svd_sorted_descending_and_reconstructs() {
        let m = array![[3.0, 1.0, 0.5], [1.0, 2.0, 0.2]];
        let (u, s, vt) = svd(m.view()).unwrap();
        assert!(s[0] >= s[1]);
        let recon = u.dot(&Array2::from_diag(&s)).dot(&vt);
        assert_abs_diff_eq!(recon, m, epsilon = 1e-10);
    }

    #[test]
    fn inv_sqrt_of_identity_scaling() {
        let m = Array2::<f64>::eye(3) * 4.0;
        let r = inv_sqrt_spd(m.view(), 0.0, "test").unwrap();
        assert_abs_diff_eq!(r, Array2::eye(3) * 0.5, epsilon = 1e-12);
    }

    #[test]
    fn inv_sqrt_rejects_indefinite() {
        let m = array![[1.0, 0.0], [0.0, -2.0]];
        let err = inv_sqrt_spd(m.view(), 0.0, "test").unwrap_err();
        match err {
            Error::Singular {
                smallest_eigenvalue,
                ..
            } => assert!(smallest_eigenvalue < 0.0),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn inv_sqrt_matches_explicit_oracle() {
        // Oracle: build M = Q diag(d) Q^T from a known rotation, compare against
        // Q diag(1/sqrt(d)) Q^T computed by hand.
        let theta: f64 = 0.7;
        let q = array![[theta.cos(), -theta.sin()], [theta.sin(), theta.cos()]];
        let d = array![2.0, 5.0];
        let m = q.dot(&Array2::from_diag(&d)).dot(&q.t());
        let expect = q
            .dot(&Array2::from_diag(&d.mapv(|v: f64| v.powf(-0.5))))
            .dot(&q.t());
        let got = inv_sqrt_spd(m.view(), 0.0, "oracle").unwrap();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
    }

    #[test]
    fn eigen_residuals_stay_at_machine_precision() {
        // covariance-like matrix with one near-zero eigenvalue: the QR-based
        // backends leave ~1e-6 residuals here, Jacobi must stay at eps level
        use crate::rng::SeededRng;
        let mut rng = SeededRng::new(77);
        let x = Array2::from_shape_fn((20, 200), |_| rng.normal());
        let u0 = {
            let v = ndarray::Array1::from_shape_fn(20, |_| rng.normal());
            let n = v.dot(&v).sqrt();
            v / n
        };
        let proj = x.clone() - u0.clone().insert_axis(ndarray::Axis(1)).dot(
            &u0.dot(&x).insert_axis(ndarray::Axis(0)),
        );
        let m = proj.dot(&proj.t()) + &(Array2::<f64>::eye(20) * 1.86e-4);
        let (vals, vecs) = sym_eigen(m.view()).unwrap();
        let norm_m = m.iter().map(|v| v * v).sum::<f64>().sqrt();
        for i in 0..20 {
            let q = vecs.column(i);
            let r = m.dot(&q) - &(vals[i] * &q.to_owned());
            let res = r.dot(&r).sqrt();
            assert!(
                res < 1e-12 * norm_m,
                "residual {res:.3e} at eigenvalue {:.3e}",
                vals[i]
            );
        }
        let gram = vecs.t().dot(&vecs) - Array2::<f64>::eye(20);
        let ortho = gram.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        assert!(ortho < 1e-13, "orthogonality defect {ortho:.3e}");
    }

    #[test]
    fn solve_spd_roundtrip() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let b = array![[1.0], [2.0]];
        let x = solve_spd(a.view(), b.view()).unwrap();
        assert_abs_diff_eq!(a.dot(&x), b, epsilon = 1e-12);
    }
}
