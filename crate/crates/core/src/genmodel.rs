//! The probabilistic two-modality generative model and its estimators.
//!
//! The model: a shared latent `z ~ N(0, I_d)` drives both observations,
//! `x = Wx z + eps_x` and `y = Wy z + eps_y` with isotropic noise. Closed-form
//! posterior means exist per modality, for any convex mixing of the two, and
//! for the joint conditional; the joint one dominates every mixing in
//! conditional mean squared error. CCA yields maximum-likelihood estimates of
//! the model parameters, which is what ties the embedding pipeline to this
//! model.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::cca::CanonicalPair;
use crate::datamodel::{CovarianceTriple, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::SeededRng;

/// Correlations at or above `1 - CORRELATION_CEILING_GAP` make the joint
/// posterior block matrix singular.
const CORRELATION_CEILING_GAP: f64 = 1e-10;

/// Generative model parameters.
#[derive(Debug, Clone)]
pub struct ModelParams {
    wx: Array2<f64>,
    wy: Array2<f64>,
    sigma_x: f64,
    sigma_y: f64,
}

impl ModelParams {
    /// Requires matching latent dimensions (>= 1) and strictly positive noise
    /// levels. Experiments use d < min(p, q); that regime is not enforced
    /// here so that degenerate single-feature setups remain constructible.
    pub fn new(wx: Array2<f64>, wy: Array2<f64>, sigma_x: f64, sigma_y: f64) -> Result<Self> {
        if wx.ncols() != wy.ncols() {
            return Err(Error::dim(format!(
                "latent dimension mismatch: wx has {}, wy has {}",
                wx.ncols(),
                wy.ncols()
            )));
        }
        if wx.ncols() < 1 {
            return Err(Error::domain("latent dimension must be >= 1"));
        }
        if !(sigma_x > 0.0) || !(sigma_y > 0.0) {
            return Err(Error::domain("noise levels must be strictly positive"));
        }
        Ok(Self {
            wx,
            wy,
            sigma_x,
            sigma_y,
        })
    }

    pub fn wx(&self) -> ArrayView2<'_, f64> {
        self.wx.view()
    }

    pub fn wy(&self) -> ArrayView2<'_, f64> {
        self.wy.view()
    }

    pub fn sigma_x(&self) -> f64 {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> f64 {
        self.sigma_y
    }

    pub fn latent_dim(&self) -> usize {
        self.wx.ncols()
    }

    pub fn dim_x(&self) -> usize {
        self.wx.nrows()
    }

    pub fn dim_y(&self) -> usize {
        self.wy.nrows()
    }
}

/// Which observation a posterior estimator conditions on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosteriorKind {
    SingleX,
    SingleY,
    /// Convex mixing of the two single-modality estimators.
    Mixed {
        beta: f64,
    },
    Joint,
}

/// A linear posterior-mean estimator `z_hat = G * observation`.
#[derive(Debug, Clone)]
pub struct PosteriorEstimator {
    /// d x m with m = p (single x), q (single y), or p + q (mixed / joint).
    pub g: Array2<f64>,
    pub kind: PosteriorKind,
}

impl PosteriorEstimator {
    pub fn apply(&self, observation: ArrayView1<f64>) -> Array1<f64> {
        self.g.dot(&observation)
    }
}

/// Which modality a single-modality estimator belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    X,
    Y,
}

/// Samples `n` draws from the model: latent columns first, then the noise for
/// x, then for y, all from one seeded stream, so outputs are bit-reproducible.
pub fn sample_dataset(
    params: &ModelParams,
    n: usize,
    seed: u64,
) -> Result<(Array2<f64>, DataMatrix, DataMatrix)> {
    if n < 2 {
        return Err(Error::domain("need n >= 2 samples"));
    }
    let d = params.latent_dim();
    let (p, q) = (params.dim_x(), params.dim_y());
    let mut rng = SeededRng::new(seed);
    let mut z = Array2::zeros((d, n));
    for i in 0..n {
        for r in 0..d {
            z[[r, i]] = rng.normal();
        }
    }
    let mut x = params.wx.dot(&z);
    for i in 0..n {
        for r in 0..p {
            x[[r, i]] += params.sigma_x * rng.normal();
        }
    }
    let mut y = params.wy.dot(&z);
    for i in 0..n {
        for r in 0..q {
            y[[r, i]] += params.sigma_y * rng.normal();
        }
    }
    Ok((z, DataMatrix::new(x)?, DataMatrix::new(y)?))
}

/// Single-modality posterior mean: `G = (W' W / sigma^2 + I)^{-1} W' / sigma^2`.
pub fn posterior_single(
    w: ArrayView2<f64>,
    sigma: f64,
    modality: Modality,
) -> Result<PosteriorEstimator> {
    if !(sigma > 0.0) {
        return Err(Error::domain("sigma must be strictly positive"));
    }
    let d = w.ncols();
    let precision = 1.0 / (sigma * sigma);
    let m = w.t().dot(&w) * precision + Array2::<f64>::eye(d);
    let rhs = w.t().to_owned() * precision;
    let g = linalg::solve_spd(m.view(), rhs.view())?;
    Ok(PosteriorEstimator {
        g,
        kind: match modality {
            Modality::X => PosteriorKind::SingleX,
            Modality::Y => PosteriorKind::SingleY,
        },
    })
}

/// Convex mixing of the single-modality estimators: the block matrix
/// `[beta Gx | (1 - beta) Gy]` acting on the stacked observation.
pub fn posterior_mixed(
    gx: &PosteriorEstimator,
    gy: &PosteriorEstimator,
    beta: f64,
) -> Result<PosteriorEstimator> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta = {beta} outside [0, 1]")));
    }
    if gx.kind != PosteriorKind::SingleX || gy.kind != PosteriorKind::SingleY {
        return Err(Error::Contract(
            "posterior_mixed expects a single-x and a single-y estimator".into(),
        ));
    }
    if gx.g.nrows() != gy.g.nrows() {
        return Err(Error::dim("latent dimension mismatch between estimators"));
    }
    let (d, p) = gx.g.dim();
    let q = gy.g.ncols();
    let mut g = Array2::zeros((d, p + q));
    g.slice_mut(s![.., ..p]).assign(&(&gx.g * beta));
    g.slice_mut(s![.., p..]).assign(&(&gy.g * (1.0 - beta)));
    Ok(PosteriorEstimator {
        g,
        kind: PosteriorKind::Mixed { beta },
    })
}

/// Joint posterior mean conditioning on both modalities: the single-modality
/// formula with stacked `W = [Wx; Wy]` and block-diagonal noise.
pub fn posterior_joint(params: &ModelParams) -> Result<PosteriorEstimator> {
    let d = params.latent_dim();
    let (p, q) = (params.dim_x(), params.dim_y());
    let px = 1.0 / (params.sigma_x * params.sigma_x);
    let py = 1.0 / (params.sigma_y * params.sigma_y);
    let m = params.wx.t().dot(&params.wx) * px
        + &(params.wy.t().dot(&params.wy) * py)
        + &Array2::<f64>::eye(d);
    let mut rhs = Array2::zeros((d, p + q));
    rhs.slice_mut(s![.., ..p])
        .assign(&(params.wx.t().to_owned() * px));
    rhs.slice_mut(s![.., p..])
        .assign(&(params.wy.t().to_owned() * py));
    let g = linalg::solve_spd(m.view(), rhs.view())?;
    Ok(PosteriorEstimator {
        g,
        kind: PosteriorKind::Joint,
    })
}

/// Closed-form conditional mean squared error of a linear estimator at a
/// fixed latent `z`:
/// `e = |(G W - I) z|^2 + trace(G Psi G')`.
pub fn estimation_error(
    est: &PosteriorEstimator,
    params: &ModelParams,
    z: ArrayView1<f64>,
) -> Result<f64> {
    let d = params.latent_dim();
    let (p, q) = (params.dim_x(), params.dim_y());
    if z.len() != d || est.g.nrows() != d {
        return Err(Error::dim("latent dimension mismatch"));
    }
    // lift to a d x (p+q) block acting on the stacked observation
    let g = match est.kind {
        PosteriorKind::SingleX => {
            if est.g.ncols() != p {
                return Err(Error::dim("single-x estimator width must be p"));
            }
            let mut g = Array2::zeros((d, p + q));
            g.slice_mut(s![.., ..p]).assign(&est.g);
            g
        }
        PosteriorKind::SingleY => {
            if est.g.ncols() != q {
                return Err(Error::dim("single-y estimator width must be q"));
            }
            let mut g = Array2::zeros((d, p + q));
            g.slice_mut(s![.., p..]).assign(&est.g);
            g
        }
        PosteriorKind::Mixed { .. } | PosteriorKind::Joint => {
            if est.g.ncols() != p + q {
                return Err(Error::dim("stacked estimator width must be p + q"));
            }
            est.g.clone()
        }
    };
    let w = stacked_w(params);
    let k = g.dot(&w) - Array2::<f64>::eye(d);
    let bias = k.dot(&z);
    let var_x: f64 = g.slice(s![.., ..p]).iter().map(|v| v * v).sum();
    let var_y: f64 = g.slice(s![.., p..]).iter().map(|v| v * v).sum();
    Ok(bias.dot(&bias)
        + params.sigma_x * params.sigma_x * var_x
        + params.sigma_y * params.sigma_y * var_y)
}

/// Maximum-likelihood parameter estimate recovered from CCA output.
#[derive(Debug, Clone)]
pub struct MLEstimate {
    pub wx_hat: Array2<f64>,
    pub wy_hat: Array2<f64>,
    pub mx: Array2<f64>,
    pub my: Array2<f64>,
    /// First d canonical correlations, clamped into [0, 1 - 1e-10].
    pub p_diag: Array1<f64>,
}

impl MLEstimate {
    /// Checks the factorization constraint `Mx My' = diag(p)`.
    pub fn validate(&self) -> Result<()> {
        let product = self.mx.dot(&self.my.t());
        let d = self.p_diag.len();
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { self.p_diag[i] } else { 0.0 };
                if (product[[i, j]] - expect).abs() > 1e-8 {
                    return Err(Error::domain(format!(
                        "Mx My' deviates from diag(p) at ({i}, {j}): {:.3e}",
                        (product[[i, j]] - expect).abs()
                    )));
                }
            }
        }
        if self.p_diag.iter().any(|&r| !(0.0..=1.0 + 1e-8).contains(&r)) {
            return Err(Error::domain("canonical correlations outside [0, 1]"));
        }
        Ok(())
    }
}

/// Recovers the ML combination matrices from canonical pairs:
/// `Wx_hat = Cxx U Mx`, `Wy_hat = Cyy V My` with `Mx My' = diag(p)`.
///
/// The pairs' unit-norm weights are rescaled to the variate-variance-1
/// convention the estimator formulas are stated in. `mx_choice = None` uses
/// the symmetric split `Mx = My = diag(p)^{1/2}`.
pub fn mle_from_cca(
    c: &CovarianceTriple,
    pairs: &[CanonicalPair],
    mx_choice: Option<Array2<f64>>,
) -> Result<MLEstimate> {
    if pairs.is_empty() {
        return Err(Error::domain("need at least one canonical pair"));
    }
    let d = pairs.len();
    let p = c.cxx.nrows();
    let q = c.cyy.nrows();
    let mut u_mat = Array2::zeros((p, d));
    let mut v_mat = Array2::zeros((q, d));
    let mut rhos = Array1::zeros(d);
    for (j, pair) in pairs.iter().enumerate() {
        if pair.rho.abs() > 1.0 + 1e-8 {
            return Err(Error::domain(format!(
                "canonical correlation {} outside [-1, 1]",
                pair.rho
            )));
        }
        let su = pair.u.dot(&c.cxx.dot(&pair.u)).sqrt();
        let sv = pair.v.dot(&c.cyy.dot(&pair.v)).sqrt();
        if su < 1e-12 || sv < 1e-12 {
            return Err(Error::Degenerate(format!(
                "pair {j} has zero variate variance"
            )));
        }
        u_mat.column_mut(j).assign(&(&pair.u / su));
        v_mat.column_mut(j).assign(&(&pair.v / sv));
        rhos[j] = pair.rho.clamp(0.0, 1.0 - CORRELATION_CEILING_GAP);
    }
    let (mx, my) = match mx_choice {
        None => {
            let half = Array2::from_diag(&rhos.mapv(f64::sqrt));
            (half.clone(), half)
        }
        Some(mx) => {
            if mx.nrows() != d || mx.ncols() != d {
                return Err(Error::dim(format!("mx_choice must be {d} x {d}")));
            }
            // My = diag(p) Mx^{-T}
            let mx_inv = linalg::inv_general(mx.view())?;
            let my = Array2::from_diag(&rhos).dot(&mx_inv.t());
            (mx, my)
        }
    };
    Ok(MLEstimate {
        wx_hat: c.cxx.dot(&u_mat).dot(&mx),
        wy_hat: c.cyy.dot(&v_mat).dot(&my),
        mx,
        my,
        p_diag: rhos,
    })
}

/// Joint posterior mean expressed through CCA embeddings:
/// `[Mx; My]' [[I, P], [P, I]]^{-1} [emb_x; emb_y]`.
///
/// The block inverse is formed per coordinate through `D = (I - P^2)^{-1}`;
/// any correlation above `1 - 1e-10` makes the block matrix numerically
/// singular and is an error.
pub fn posterior_from_embeddings(
    emb_x: ArrayView1<f64>,
    emb_y: ArrayView1<f64>,
    m: &MLEstimate,
) -> Result<Array1<f64>> {
    let d = m.p_diag.len();
    if emb_x.len() != d || emb_y.len() != d {
        return Err(Error::dim(format!("embeddings must have length {d}")));
    }
    if let Some(&rho) = m
        .p_diag
        .iter()
        .find(|&&r| r > 1.0 - CORRELATION_CEILING_GAP)
    {
        return Err(Error::Singular {
            context: format!("canonical correlation {rho} too close to 1"),
            smallest_eigenvalue: 1.0 - rho,
        });
    }
    let mut a = Array1::zeros(d);
    let mut b = Array1::zeros(d);
    for i in 0..d {
        let rho = m.p_diag[i];
        let denom = 1.0 - rho * rho;
        a[i] = (emb_x[i] - rho * emb_y[i]) / denom;
        b[i] = (emb_y[i] - rho * emb_x[i]) / denom;
    }
    Ok(m.mx.t().dot(&a) + &m.my.t().dot(&b))
}

/// Stacks `Wx` over `Wy`.
pub fn stacked_w(params: &ModelParams) -> Array2<f64> {
    let (p, q, d) = (params.dim_x(), params.dim_y(), params.latent_dim());
    let mut w = Array2::zeros((p + q, d));
    w.slice_mut(s![..p, ..]).assign(&params.wx);
    w.slice_mut(s![p.., ..]).assign(&params.wy);
    w
}

/// Random valid model parameters for property tests and the acceptance suite.
pub fn random_params(
    p: usize,
    q: usize,
    d: usize,
    sigma_range: (f64, f64),
    rng: &mut SeededRng,
) -> ModelParams {
    let wx = Array2::from_shape_fn((p, d), |_| rng.normal());
    let wy = Array2::from_shape_fn((q, d), |_| rng.normal());
    let (lo, hi) = sigma_range;
    let sigma_x = lo + (hi - lo) * rng.uniform();
    let sigma_y = lo + (hi - lo) * rng.uniform();
    ModelParams::new(wx, wy, sigma_x, sigma_y).expect("valid random params")
}

/// Draws one observation pair `(x, y)` at a fixed latent `z`.
pub fn sample_observation(
    params: &ModelParams,
    z: ArrayView1<f64>,
    rng: &mut SeededRng,
) -> Array1<f64> {
    let (p, q) = (params.dim_x(), params.dim_y());
    let mut obs = Array1::zeros(p + q);
    let mean_x = params.wx.dot(&z);
    for r in 0..p {
        obs[r] = mean_x[r] + params.sigma_x * rng.normal();
    }
    let mean_y = params.wy.dot(&z);
    for r in 0..q {
        obs[p + r] = mean_y[r] + params.sigma_y * rng.normal();
    }
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cca::cca_fit;
    use crate::datamodel::covariance_triple;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};

    #[test]
    fn posterior_single_scalar_case() {
        let w = array![[1.0]];
        let est = posterior_single(w.view(), 1.0, Modality::X).unwrap();
        assert_abs_diff_eq!(est.g[[0, 0]], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn posterior_single_zero_coupling_collapses_to_prior() {
        let w = Array2::<f64>::zeros((4, 2));
        let est = posterior_single(w.view(), 0.7, Modality::X).unwrap();
        assert!(est.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn posterior_single_noiseless_limit_is_transpose() {
        // orthonormal columns
        let w = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let est = posterior_single(w.view(), 1e-6, Modality::X).unwrap();
        let diff = &est.g - &w.t();
        let max = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-6, "max deviation {max}");
    }

    #[test]
    fn posterior_mixed_endpoints_and_midpoint() {
        let mut rng = SeededRng::new(70);
        let params = random_params(4, 3, 2, (0.5, 1.0), &mut rng);
        let gx = posterior_single(params.wx(), params.sigma_x(), Modality::X).unwrap();
        let gy = posterior_single(params.wy(), params.sigma_y(), Modality::Y).unwrap();
        let obs = Array1::from_shape_fn(7, |_| rng.normal());
        let x_part = obs.slice(s![..4]).to_owned();
        let y_part = obs.slice(s![4..]).to_owned();

        let at = |beta: f64| posterior_mixed(&gx, &gy, beta).unwrap().apply(obs.view());
        assert_abs_diff_eq!(at(1.0), gx.g.dot(&x_part), epsilon = 1e-12);
        assert_abs_diff_eq!(at(0.0), gy.g.dot(&y_part), epsilon = 1e-12);
        let mid = at(0.5);
        let avg = (gx.g.dot(&x_part) + gy.g.dot(&y_part)) / 2.0;
        assert_abs_diff_eq!(mid, avg, epsilon = 1e-12);

        assert!(matches!(
            posterior_mixed(&gx, &gy, 1.2),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn posterior_joint_uninformative_modality() {
        let mut rng = SeededRng::new(71);
        let wx = Array2::from_shape_fn((4, 2), |_| rng.normal());
        let wy = Array2::<f64>::zeros((3, 2));
        let params = ModelParams::new(wx.clone(), wy, 0.8, 0.9).unwrap();
        let joint = posterior_joint(&params).unwrap();
        let single = posterior_single(wx.view(), 0.8, Modality::X).unwrap();
        let x_block = joint.g.slice(s![.., ..4]);
        let y_block = joint.g.slice(s![.., 4..]);
        assert_abs_diff_eq!(x_block.to_owned(), single.g, epsilon = 1e-12);
        assert!(y_block.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn posterior_joint_symmetric_doubled_precision() {
        // sigma_x = sigma_y and Wx = Wy: both blocks equal
        // (2 W'W / sigma^2 + I)^{-1} W' / sigma^2
        let mut rng = SeededRng::new(72);
        let w = Array2::from_shape_fn((3, 2), |_| rng.normal());
        let sigma = 0.6;
        let params = ModelParams::new(w.clone(), w.clone(), sigma, sigma).unwrap();
        let joint = posterior_joint(&params).unwrap();
        let precision = 1.0 / (sigma * sigma);
        let m = w.t().dot(&w) * (2.0 * precision) + Array2::<f64>::eye(2);
        let expect = linalg::solve_spd(m.view(), (w.t().to_owned() * precision).view()).unwrap();
        assert_abs_diff_eq!(
            joint.g.slice(s![.., ..3]).to_owned(),
            expect,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            joint.g.slice(s![.., 3..]).to_owned(),
            expect,
            epsilon = 1e-10
        );
    }

    #[test]
    fn posterior_joint_scalar_thirds() {
        let params = ModelParams::new(array![[1.0]], array![[1.0]], 1.0, 1.0).unwrap();
        let joint = posterior_joint(&params).unwrap();
        assert_abs_diff_eq!(joint.g[[0, 0]], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(joint.g[[0, 1]], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn estimation_error_zero_estimator() {
        let mut rng = SeededRng::new(73);
        let params = random_params(3, 4, 2, (0.5, 1.0), &mut rng);
        let est = PosteriorEstimator {
            g: Array2::zeros((2, 7)),
            kind: PosteriorKind::Joint,
        };
        let z = array![1.0, -2.0];
        let e = estimation_error(&est, &params, z.view()).unwrap();
        assert_abs_diff_eq!(e, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn estimation_error_unbiased_estimator_leaves_trace_term() {
        // square invertible Wx, G = [Wx^{-1} | 0] gives GW = I
        let wx = array![[2.0, 0.5], [0.1, 1.5]];
        let wy = Array2::<f64>::zeros((3, 2));
        let sigma_x = 0.7;
        let params = ModelParams::new(wx.clone(), wy, sigma_x, 1.0).unwrap();
        let wx_inv = linalg::inv_general(wx.view()).unwrap();
        let est = PosteriorEstimator {
            g: wx_inv.clone(),
            kind: PosteriorKind::SingleX,
        };
        let z = array![0.3, -0.4];
        let e = estimation_error(&est, &params, z.view()).unwrap();
        let trace: f64 = wx_inv.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(e, sigma_x * sigma_x * trace, epsilon = 1e-12);
    }

    #[test]
    fn estimation_error_matches_monte_carlo() {
        let mut rng = SeededRng::new(74);
        let params = random_params(4, 3, 2, (0.3, 0.8), &mut rng);
        let joint = posterior_joint(&params).unwrap();
        let z = array![0.7, -1.1];
        let closed = estimation_error(&joint, &params, z.view()).unwrap();

        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let obs = sample_observation(&params, z.view(), &mut rng);
            let err = joint.apply(obs.view()) - &z;
            let sq = err.dot(&err);
            sum += sq;
            sumsq += sq * sq;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - closed).abs() < 3.0 * se,
            "MC {mean} vs closed form {closed} (3 se = {})",
            3.0 * se
        );
    }

    #[test]
    fn joint_dominates_mixed_for_random_models() {
        // closed-form error comparison across the beta grid
        let mut rng = SeededRng::new(75);
        for trial in 0..10 {
            let d = 1 + (trial % 5);
            let p = d + 1 + rng.index(20 - d);
            let q = d + 1 + rng.index(20 - d);
            let params = random_params(p, q, d, (0.05, 1.0), &mut rng);
            let gx = posterior_single(params.wx(), params.sigma_x(), Modality::X).unwrap();
            let gy = posterior_single(params.wy(), params.sigma_y(), Modality::Y).unwrap();
            let joint = posterior_joint(&params).unwrap();
            for _ in 0..3 {
                let z = Array1::from_shape_fn(d, |_| rng.normal());
                let e_joint = estimation_error(&joint, &params, z.view()).unwrap();
                for step in 0..=10 {
                    let beta = step as f64 / 10.0;
                    let mixed = posterior_mixed(&gx, &gy, beta).unwrap();
                    let e_mixed = estimation_error(&mixed, &params, z.view()).unwrap();
                    assert!(
                        e_mixed >= e_joint - 1e-9,
                        "dominance violated at beta = {beta}: {e_mixed} < {e_joint}"
                    );
                }
            }
        }
    }

    #[test]
    fn joint_bias_matrix_matches_closed_form_and_is_negative_definite() {
        let mut rng = SeededRng::new(76);
        let params = random_params(5, 4, 3, (0.2, 0.9), &mut rng);
        let joint = posterior_joint(&params).unwrap();
        let w = stacked_w(&params);
        let k = joint.g.dot(&w) - Array2::<f64>::eye(3);

        // K = -(W' Psi^{-1} W + I)^{-1}
        let px = 1.0 / (params.sigma_x() * params.sigma_x());
        let py = 1.0 / (params.sigma_y() * params.sigma_y());
        let info = params.wx().t().dot(&params.wx()) * px
            + &(params.wy().t().dot(&params.wy()) * py)
            + &Array2::<f64>::eye(3);
        let expect = -linalg::inv_spd(info.view()).unwrap();
        assert_abs_diff_eq!(k, expect, epsilon = 1e-9);

        let sym = (&k + &k.t()) / 2.0;
        let (vals, _) = linalg::sym_eigen(sym.view()).unwrap();
        assert!(vals.iter().all(|&v| v < 0.0), "eigenvalues {vals:?}");
    }

    #[test]
    fn mle_default_split_satisfies_constraint() {
        let mut rng = SeededRng::new(77);
        let params = random_params(6, 5, 2, (0.3, 0.6), &mut rng);
        let (_, x, y) = sample_dataset(&params, 300, 42).unwrap();
        let (x, y) = (x.centered(), y.centered());
        let triple = covariance_triple(&x, &y).unwrap();
        let pairs = cca_fit(&x, &y, 2, 0.0).unwrap();
        let est = mle_from_cca(&triple, &pairs, None).unwrap();
        est.validate().unwrap();
    }

    #[test]
    fn mle_recovers_column_space_of_true_weights() {
        let mut rng = SeededRng::new(78);
        let params = random_params(10, 10, 2, (0.3, 0.3), &mut rng);
        let (_, x, y) = sample_dataset(&params, 5000, 7).unwrap();
        let (x, y) = (x.centered(), y.centered());
        let triple = covariance_triple(&x, &y).unwrap();
        let pairs = cca_fit(&x, &y, 2, 0.0).unwrap();
        let est = mle_from_cca(&triple, &pairs, None).unwrap();

        // principal-angle oracle: orthonormalize both column spaces by
        // Gram-Schmidt, largest principal angle from the SVD of Qa' Qb
        let orth = |m: &Array2<f64>| {
            let mut cols: Vec<Array1<f64>> = Vec::new();
            for j in 0..m.ncols() {
                let mut c = m.column(j).to_owned();
                for b in &cols {
                    let coef = b.dot(&c);
                    c = &c - &(coef * b);
                }
                let norm = c.dot(&c).sqrt();
                cols.push(c / norm);
            }
            let mut q = Array2::zeros((m.nrows(), cols.len()));
            for (j, c) in cols.iter().enumerate() {
                q.column_mut(j).assign(c);
            }
            q
        };
        let qa = orth(&est.wx_hat);
        let qb = orth(&params.wx().to_owned());
        let (_, s, _) = linalg::svd(qa.t().dot(&qb).view()).unwrap();
        let worst_angle = s[s.len() - 1].clamp(-1.0, 1.0).acos().to_degrees();
        assert!(worst_angle < 5.0, "subspace angle {worst_angle} degrees");
    }

    #[test]
    fn mle_rejects_empty_and_singular_choices() {
        let mut rng = SeededRng::new(79);
        let params = random_params(4, 4, 2, (0.3, 0.6), &mut rng);
        let (_, x, y) = sample_dataset(&params, 100, 3).unwrap();
        let (x, y) = (x.centered(), y.centered());
        let triple = covariance_triple(&x, &y).unwrap();
        assert!(mle_from_cca(&triple, &[], None).is_err());
        let pairs = cca_fit(&x, &y, 2, 0.0).unwrap();
        let singular = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(
            mle_from_cca(&triple, &pairs, Some(singular)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn embedding_posterior_with_zero_correlations() {
        let est = MLEstimate {
            wx_hat: Array2::zeros((3, 2)),
            wy_hat: Array2::zeros((3, 2)),
            mx: array![[1.0, 0.2], [0.0, 0.8]],
            my: array![[0.5, 0.0], [0.3, 1.1]],
            p_diag: array![0.0, 0.0],
        };
        let ex = array![0.4, -0.6];
        let ey = array![1.0, 0.5];
        let got = posterior_from_embeddings(ex.view(), ey.view(), &est).unwrap();
        let expect = est.mx.t().dot(&ex) + &est.my.t().dot(&ey);
        assert_abs_diff_eq!(got, expect, epsilon = 1e-14);

        let zero = Array1::zeros(2);
        let at_zero = posterior_from_embeddings(zero.view(), zero.view(), &est).unwrap();
        assert!(at_zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_posterior_rejects_unit_correlation() {
        let est = MLEstimate {
            wx_hat: Array2::zeros((2, 1)),
            wy_hat: Array2::zeros((2, 1)),
            mx: array![[1.0]],
            my: array![[1.0]],
            p_diag: array![1.0],
        };
        let e = array![0.5];
        assert!(matches!(
            posterior_from_embeddings(e.view(), e.view(), &est),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn embedding_posterior_matches_direct_inverse_oracle() {
        // full-rank 3+3 instance: the embedding form must equal
        // What' [[Cxx, Cxy], [Cyx, Cyy]]^{-1} [x; y]
        let mut rng = SeededRng::new(80);
        let params = random_params(3, 3, 2, (0.4, 0.7), &mut rng);
        let (_, x, y) = sample_dataset(&params, 400, 11).unwrap();
        let (x, y) = (x.centered(), y.centered());
        let triple = covariance_triple(&x, &y).unwrap();
        let pairs = cca_fit(&x, &y, 2, 0.0).unwrap();
        let est = mle_from_cca(&triple, &pairs, None).unwrap();

        let obs_x = Array1::from_shape_fn(3, |_| rng.normal());
        let obs_y = Array1::from_shape_fn(3, |_| rng.normal());

        // variate-normalized weights reproduce the embeddings U'x, V'y
        let mut emb_x = Array1::zeros(2);
        let mut emb_y = Array1::zeros(2);
        for j in 0..2 {
            let su = pairs[j].u.dot(&triple.cxx.dot(&pairs[j].u)).sqrt();
            let sv = pairs[j].v.dot(&triple.cyy.dot(&pairs[j].v)).sqrt();
            emb_x[j] = pairs[j].u.dot(&obs_x) / su;
            emb_y[j] = pairs[j].v.dot(&obs_y) / sv;
        }
        let got = posterior_from_embeddings(emb_x.view(), emb_y.view(), &est).unwrap();

        // direct-inverse route
        let mut joint_cov = Array2::zeros((6, 6));
        joint_cov.slice_mut(s![..3, ..3]).assign(&triple.cxx);
        joint_cov.slice_mut(s![..3, 3..]).assign(&triple.cxy);
        joint_cov.slice_mut(s![3.., ..3]).assign(&triple.cxy.t());
        joint_cov.slice_mut(s![3.., 3..]).assign(&triple.cyy);
        let mut w_hat = Array2::zeros((6, 2));
        w_hat.slice_mut(s![..3, ..]).assign(&est.wx_hat);
        w_hat.slice_mut(s![3.., ..]).assign(&est.wy_hat);
        let mut obs = Array1::zeros(6);
        obs.slice_mut(s![..3]).assign(&obs_x);
        obs.slice_mut(s![3..]).assign(&obs_y);
        let solved =
            linalg::solve_spd(joint_cov.view(), obs.insert_axis(Axis(1)).view()).unwrap();
        let oracle = w_hat.t().dot(&solved.column(0));
        assert_abs_diff_eq!(got, oracle, epsilon = 1e-6);
    }

    #[test]
    fn sampling_noiseless_limit() {
        let mut rng = SeededRng::new(81);
        let wx = Array2::from_shape_fn((4, 2), |_| rng.normal());
        let wy = Array2::from_shape_fn((3, 2), |_| rng.normal());
        let params = ModelParams::new(wx.clone(), wy, 1e-12, 1e-12).unwrap();
        let (z, x, _) = sample_dataset(&params, 50, 5).unwrap();
        let expect = wx.dot(&z);
        let diff = &x.values().to_owned() - &expect;
        let max = diff.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-9);
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut rng = SeededRng::new(82);
        let params = random_params(3, 4, 2, (0.2, 0.8), &mut rng);
        let (z1, x1, y1) = sample_dataset(&params, 20, 99).unwrap();
        let (z2, x2, y2) = sample_dataset(&params, 20, 99).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(x1.values(), x2.values());
        assert_eq!(y1.values(), y2.values());
    }

    #[test]
    fn sampling_covariance_law_of_large_numbers() {
        // Wx = I (p = d): cov(x) = I (1 + sigma^2)
        let d = 3;
        let sigma = 0.5;
        let params = ModelParams::new(
            Array2::eye(d),
            Array2::from_shape_fn((4, d), |_| 0.3),
            sigma,
            sigma,
        )
        .unwrap();
        let n = 10_000;
        let (_, x, _) = sample_dataset(&params, n, 17).unwrap();
        let xc = x.centered();
        let cov = xc.values().dot(&xc.values().t()) / n as f64;
        let expect = 1.0 + sigma * sigma;
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { expect } else { 0.0 };
                assert!(
                    (cov[[i, j]] - target).abs() < 0.05 * expect,
                    "cov[{i},{j}] = {} vs {target}",
                    cov[[i, j]]
                );
            }
        }
    }
}
