//! Matrix deflation schemes for stacking single canonical pairs into
//! multi-dimensional embeddings.
//!
//! Four schemes are provided. Hotelling deflation (plain and normalized)
//! subtracts a rank-1 component from the cross matrix; projected deflation
//! projects the data matrices orthogonal to the weights just found; and
//! orthogonalized projected deflation projects orthogonal to the running
//! orthonormal basis of all weights found so far, which is what forces later
//! weights into genuinely new subspaces when the solver is penalized.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::cca::{self, CanonicalPair, PairFlag};
use crate::datamodel::{covariance_triple, DataMatrix};
use crate::error::{Error, Result};
use crate::linalg;
use crate::pcca::{self, GraphSpec, PenaltyConfig};

const UNIT_NORM_TOL: f64 = 1e-8;
const DEGENERATE_RESIDUAL: f64 = 1e-8;
const DEGENERATE_DIRECTION: f64 = 1e-12;

/// The deflation scheme applied between solver calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeflationScheme {
    /// Hotelling deflation of the cross matrix.
    Hd,
    /// Normalized Hotelling deflation (Frobenius projection form).
    Nhd,
    /// Projected deflation of the data matrices.
    Pd,
    /// Orthogonalized projected deflation of the data matrices.
    Opd,
}

impl std::str::FromStr for DeflationScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hd" => Ok(Self::Hd),
            "nhd" => Ok(Self::Nhd),
            "pd" => Ok(Self::Pd),
            "opd" => Ok(Self::Opd),
            other => Err(Error::Config(format!("unknown deflation scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for DeflationScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Hd => "hd",
            Self::Nhd => "nhd",
            Self::Pd => "pd",
            Self::Opd => "opd",
        };
        f.write_str(s)
    }
}

/// The single-pair solver driven by the deflation loop.
#[derive(Debug, Clone)]
pub enum PairSolver {
    /// Classical CCA; `ridge = None` resolves to `1e-6 * trace(Cxx)/p` inside
    /// the deflation loop (projected data matrices are always rank deficient,
    /// so the loop needs a strictly positive ridge).
    Cca { ridge: Option<f64> },
    Scca(PenaltyConfig),
    GnScca {
        cfg: PenaltyConfig,
        graph_x: GraphSpec,
        graph_y: GraphSpec,
    },
}

impl PairSolver {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Cca { .. } => "cca",
            Self::Scca(_) => "scca",
            Self::GnScca { .. } => "gnscca",
        }
    }
}

/// Why a deflation run returned fewer columns than requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopReason {
    /// Zero-based iteration that failed.
    pub iteration: usize,
    pub message: String,
}

/// Stacked canonical weights `U` (p x k) and `V` (q x k) with per-iteration
/// diagnostics.
#[derive(Debug, Clone)]
pub struct EmbeddingBasis {
    pub u_mat: Array2<f64>,
    pub v_mat: Array2<f64>,
    /// Correlation of each pair's variates on the original (undeflated) data.
    pub rhos: Vec<f64>,
    pub flags: Vec<PairFlag>,
    pub scheme: DeflationScheme,
    /// Set when the loop stopped before reaching the requested k.
    pub stopped_early: Option<StopReason>,
}

impl EmbeddingBasis {
    pub fn k(&self) -> usize {
        self.u_mat.ncols()
    }

    /// Embeds samples: returns `(U^T X, V^T Y)`, each k x n.
    pub fn embed(&self, x: &DataMatrix, y: &DataMatrix) -> (Array2<f64>, Array2<f64>) {
        (
            self.u_mat.t().dot(&x.values()),
            self.v_mat.t().dot(&y.values()),
        )
    }
}

/// Per-iteration state recorded for the property suite and the orthogonality
/// metric.
#[derive(Debug, Clone, Default)]
pub struct DeflationTrace {
    /// Post-deflation cross matrix after each completed iteration. For PD/OPD
    /// this is `X_j Y_j^T`; for HD/NHD with a pCCA solver it is the deflated
    /// cross matrix itself; for HD/NHD with classical CCA it is the data-space
    /// image of the deflated whitened matrix.
    pub cross: Vec<Array2<f64>>,
    /// Post-deflation data matrices for PD/OPD.
    pub data: Vec<(Array2<f64>, Array2<f64>)>,
}

/// One Hotelling deflation step: `C - (u^T C v) u v^T`.
pub fn hotelling_step(c: &Array2<f64>, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Array2<f64> {
    let coeff = u.dot(&c.dot(&v));
    c - &(coeff * outer(u, v))
}

/// Normalized Hotelling step: removes the Frobenius projection of `C` onto
/// the `u v^T` direction, `C - (<C, uv^T>_F / |uv^T|_F^2) uv^T`.
///
/// Invariant to rescaling of `u` or `v`; identical to [`hotelling_step`] when
/// `u` and `v` are unit-norm singular vectors of `C`.
pub fn normalized_hotelling_step(
    c: &Array2<f64>,
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
) -> Result<Array2<f64>> {
    let norm = u.dot(&u).sqrt() * v.dot(&v).sqrt();
    if norm < DEGENERATE_DIRECTION {
        return Err(Error::Degenerate(
            "normalized Hotelling step on a zero direction".into(),
        ));
    }
    // <C, uv^T>_F = u^T C v, |uv^T|_F = |u| |v|
    let coeff = u.dot(&c.dot(&v)) / (norm * norm);
    Ok(c - &(coeff * outer(u, v)))
}

/// Projected deflation: `X' = (I - u u^T) X`, `Y' = (I - v v^T) Y`.
///
/// Requires unit ell-2 weights (within 1e-8); deflating with a non-unit
/// vector would leave a residual component behind.
pub fn projected_step(
    x: &Array2<f64>,
    y: &Array2<f64>,
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    require_unit_norm("projected_step", "u", u)?;
    require_unit_norm("projected_step", "v", v)?;
    Ok((project_out(x, u), project_out(y, v)))
}

/// Running state of orthogonalized projected deflation: current data matrices
/// plus the orthonormal bases `R`, `S` of the weights seen so far.
#[derive(Debug, Clone)]
pub struct OpdState {
    pub x_cur: Array2<f64>,
    pub y_cur: Array2<f64>,
    /// p x j orthonormal basis of span(u_1 .. u_j).
    pub r_basis: Array2<f64>,
    /// q x j orthonormal basis of span(v_1 .. v_j).
    pub s_basis: Array2<f64>,
    pub iteration: usize,
}

impl OpdState {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Self {
        let p = x.nrows();
        let q = y.nrows();
        Self {
            x_cur: x,
            y_cur: y,
            r_basis: Array2::zeros((p, 0)),
            s_basis: Array2::zeros((q, 0)),
            iteration: 0,
        }
    }

    /// One OPD step: extract the components of `(u, v)` orthogonal to the
    /// running bases, extend the bases, and project the data matrices.
    ///
    /// A residual below 1e-8 in either modality is a degeneracy: the state is
    /// left untouched and the caller is expected to stop the loop.
    pub fn step(&mut self, u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<()> {
        require_unit_norm("OPD step", "u", u)?;
        require_unit_norm("OPD step", "v", v)?;
        let r = match residual_direction(&self.r_basis, u) {
            Some(r) => r,
            None => {
                return Err(Error::Degenerate(format!(
                    "u at iteration {} lies in the span of previous weights",
                    self.iteration
                )))
            }
        };
        let s = match residual_direction(&self.s_basis, v) {
            Some(s) => s,
            None => {
                return Err(Error::Degenerate(format!(
                    "v at iteration {} lies in the span of previous weights",
                    self.iteration
                )))
            }
        };
        self.x_cur = project_out(&self.x_cur, r.view());
        self.y_cur = project_out(&self.y_cur, s.view());
        self.r_basis = append_column(&self.r_basis, &r);
        self.s_basis = append_column(&self.s_basis, &s);
        self.iteration += 1;
        Ok(())
    }
}

/// `w - B (B^T w)`, normalized; `None` when the residual collapses. An empty
/// basis returns `w` unchanged (the first deflation direction is the weight
/// itself).
fn residual_direction(basis: &Array2<f64>, w: ArrayView1<f64>) -> Option<Array1<f64>> {
    if basis.ncols() == 0 {
        return Some(w.to_owned());
    }
    let coeffs = basis.t().dot(&w);
    let residual = &w - &basis.dot(&coeffs);
    let norm = residual.dot(&residual).sqrt();
    if norm < DEGENERATE_RESIDUAL {
        return None;
    }
    Some(residual / norm)
}

fn require_unit_norm(op: &str, name: &str, w: ArrayView1<f64>) -> Result<()> {
    let norm = w.dot(&w).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::Contract(format!(
            "{op} requires unit-norm {name}, got |{name}| = {norm}"
        )));
    }
    Ok(())
}

fn project_out(m: &Array2<f64>, w: ArrayView1<f64>) -> Array2<f64> {
    // (I - w w^T) M as a rank-1 update
    let proj = w.dot(m);
    m - &outer(w, proj.view())
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.to_owned().dot(&b2.to_owned())
}

fn append_column(m: &Array2<f64>, col: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((m.nrows(), m.ncols() + 1));
    out.slice_mut(ndarray::s![.., ..m.ncols()]).assign(m);
    out.column_mut(m.ncols()).assign(col);
    out
}

/// Runs the iterative deflation loop of up to `k` solver calls.
pub fn generate_embeddings(
    x: &DataMatrix,
    y: &DataMatrix,
    solver: &PairSolver,
    scheme: DeflationScheme,
    k: usize,
) -> Result<EmbeddingBasis> {
    generate_embeddings_traced(x, y, solver, scheme, k).map(|(basis, _)| basis)
}

/// As [`generate_embeddings`], also returning the per-iteration deflation
/// trace needed by the orthogonality diagnostics.
///
/// Iteration j fits a pair on the current deflated state (HD/NHD fit on the
/// deflated cross matrix, PD/OPD on the deflated data matrices), re-normalizes
/// the weights, records the pair with its correlation on the original data,
/// and deflates. A solver failure or degeneracy at the first iteration is an
/// error; later on it truncates the basis and records the stop reason.
pub fn generate_embeddings_traced(
    x: &DataMatrix,
    y: &DataMatrix,
    solver: &PairSolver,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    if k < 1 {
        return Err(Error::domain("k must be >= 1"));
    }
    if !x.is_centered() || !y.is_centered() {
        return Err(Error::Contract(
            "generate_embeddings requires centered data".into(),
        ));
    }
    if x.n_samples() != y.n_samples() {
        return Err(Error::dim(format!(
            "sample count mismatch: {} vs {}",
            x.n_samples(),
            y.n_samples()
        )));
    }
    match scheme {
        DeflationScheme::Hd | DeflationScheme::Nhd => match solver {
            PairSolver::Cca { ridge } => hotelling_loop_cca(x, y, *ridge, scheme, k),
            _ => hotelling_loop_pcca(x, y, solver, scheme, k),
        },
        DeflationScheme::Pd | DeflationScheme::Opd => projected_loop(x, y, solver, scheme, k),
    }
}

struct BasisAccumulator {
    us: Vec<Array1<f64>>,
    vs: Vec<Array1<f64>>,
    rhos: Vec<f64>,
    flags: Vec<PairFlag>,
    scheme: DeflationScheme,
    stopped_early: Option<StopReason>,
}

impl BasisAccumulator {
    fn new(scheme: DeflationScheme) -> Self {
        Self {
            us: Vec::new(),
            vs: Vec::new(),
            rhos: Vec::new(),
            flags: Vec::new(),
            scheme,
            stopped_early: None,
        }
    }

    fn push(&mut self, u: Array1<f64>, v: Array1<f64>, rho: f64, flag: PairFlag) {
        self.us.push(u);
        self.vs.push(v);
        self.rhos.push(rho);
        self.flags.push(flag);
    }

    fn stop(&mut self, iteration: usize, message: impl Into<String>) {
        self.stopped_early = Some(StopReason {
            iteration,
            message: message.into(),
        });
    }

    fn finish(self, p: usize, q: usize) -> Result<EmbeddingBasis> {
        if self.us.is_empty() {
            return Err(Error::Degenerate(
                "deflation produced no usable canonical pair".into(),
            ));
        }
        let k = self.us.len();
        let mut u_mat = Array2::zeros((p, k));
        let mut v_mat = Array2::zeros((q, k));
        for (j, (u, v)) in self.us.iter().zip(&self.vs).enumerate() {
            u_mat.column_mut(j).assign(u);
            v_mat.column_mut(j).assign(v);
        }
        Ok(EmbeddingBasis {
            u_mat,
            v_mat,
            rhos: self.rhos,
            flags: self.flags,
            scheme: self.scheme,
            stopped_early: self.stopped_early,
        })
    }
}

/// HD/NHD with classical CCA deflates the whitened coupling matrix; the trace
/// records its data-space image so the orthogonality diagnostics see weights
/// and matrices in the same coordinates.
fn hotelling_loop_cca(
    x: &DataMatrix,
    y: &DataMatrix,
    ridge: Option<f64>,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    let triple = covariance_triple(x, y)?;
    let r = ridge.unwrap_or_else(|| loop_ridge(&triple.cxx));
    let sx_inv = linalg::inv_sqrt_spd(triple.cxx.view(), r, "whitening Cxx")?;
    let sy_inv = linalg::inv_sqrt_spd(triple.cyy.view(), r, "whitening Cyy")?;
    let sx = linalg::sqrt_spd(triple.cxx.view(), r, "whitening Cxx")?;
    let sy = linalg::sqrt_spd(triple.cyy.view(), r, "whitening Cyy")?;
    let mut coupling = sx_inv.dot(&triple.cxy).dot(&sy_inv);
    let sigma_floor = {
        let (_, s, _) = linalg::svd(coupling.view())?;
        1e-10 * s[0].max(1e-300)
    };

    let mut acc = BasisAccumulator::new(scheme);
    let mut trace = DeflationTrace::default();
    for j in 0..k {
        let (u_w, sigma, v_w) = cca::leading_singular_triplet(coupling.view())?;
        if sigma < sigma_floor {
            if j == 0 {
                return Err(Error::Degenerate(
                    "coupling matrix has no leading singular value".into(),
                ));
            }
            acc.stop(j, format!("rank exhausted (sigma = {sigma:.3e})"));
            break;
        }
        let mut u = sx_inv.dot(&u_w);
        let mut v = sy_inv.dot(&v_w);
        cca::normalize_pair_sign(&mut u, &mut v);
        let rho = cca::canonical_correlation(u.view(), v.view(), x, y);
        acc.push(u, v, rho, PairFlag::Ok);

        coupling = match scheme {
            DeflationScheme::Hd => hotelling_step(&coupling, u_w.view(), v_w.view()),
            DeflationScheme::Nhd => normalized_hotelling_step(&coupling, u_w.view(), v_w.view())?,
            _ => unreachable!(),
        };
        trace.cross.push(sx.dot(&coupling).dot(&sy));
    }
    Ok((acc.finish(x.n_features(), y.n_features())?, trace))
}

/// HD/NHD with a penalized solver deflates the raw cross matrix (the
/// identity-auto-covariance approximation the penalized problems are posed
/// under).
fn hotelling_loop_pcca(
    x: &DataMatrix,
    y: &DataMatrix,
    solver: &PairSolver,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    let mut cross = x.values().dot(&y.values().t());
    let mut acc = BasisAccumulator::new(scheme);
    let mut trace = DeflationTrace::default();
    for j in 0..k {
        let solved = match solver {
            PairSolver::Scca(cfg) => pcca::scca_core(cross.view(), cfg),
            PairSolver::GnScca {
                cfg,
                graph_x,
                graph_y,
            } => pcca::gnscca_core(cross.view(), graph_x, graph_y, cfg),
            PairSolver::Cca { .. } => unreachable!(),
        };
        let (mut u, mut v, solve_trace) = match solved {
            Ok(out) => out,
            Err(e) if j > 0 => {
                acc.stop(j, format!("{} failed: {e}", solver.name()));
                break;
            }
            Err(e) => return Err(e),
        };
        cca::normalize_pair_sign(&mut u, &mut v);
        let rho = cca::canonical_correlation(u.view(), v.view(), x, y);
        let flag = if solve_trace.converged {
            PairFlag::Ok
        } else {
            PairFlag::NotConverged
        };
        acc.push(u.clone(), v.clone(), rho, flag);

        cross = match scheme {
            DeflationScheme::Hd => hotelling_step(&cross, u.view(), v.view()),
            DeflationScheme::Nhd => normalized_hotelling_step(&cross, u.view(), v.view())?,
            _ => unreachable!(),
        };
        trace.cross.push(cross.clone());
    }
    Ok((acc.finish(x.n_features(), y.n_features())?, trace))
}

fn projected_loop(
    x: &DataMatrix,
    y: &DataMatrix,
    solver: &PairSolver,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    match solver {
        PairSolver::Cca { ridge } => projected_loop_cca(x, y, *ridge, scheme, k),
        _ => projected_loop_pcca(x, y, solver, scheme, k),
    }
}

/// PD/OPD with classical CCA runs on the whitened data matrices, where the
/// canonical weights are orthonormal and projecting a weight out is exactly
/// equivalent to Hotelling deflation of the coupling matrix. Deflating the
/// raw data instead provably shifts later correlations (the restriction
/// `c` orthogonal to the unit-normalized weight is not the CCA orthogonality
/// constraint), so the equivalence with the simultaneous fit would be lost.
/// Recorded weights and trace matrices are mapped back to data space.
fn projected_loop_cca(
    x: &DataMatrix,
    y: &DataMatrix,
    ridge: Option<f64>,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    let triple = covariance_triple(x, y)?;
    let r = ridge.unwrap_or_else(|| loop_ridge(&triple.cxx));
    let sx_inv = linalg::inv_sqrt_spd(triple.cxx.view(), r, "whitening Cxx")?;
    let sy_inv = linalg::inv_sqrt_spd(triple.cyy.view(), r, "whitening Cyy")?;
    let sx = linalg::sqrt_spd(triple.cxx.view(), r, "whitening Cxx")?;
    let sy = linalg::sqrt_spd(triple.cyy.view(), r, "whitening Cyy")?;
    let mut opd = OpdState::new(sx_inv.dot(&x.values()), sy_inv.dot(&y.values()));
    let sigma_floor = {
        let coupling = opd.x_cur.dot(&opd.y_cur.t());
        let (_, s, _) = linalg::svd(coupling.view())?;
        1e-10 * s[0].max(1e-300)
    };

    let mut acc = BasisAccumulator::new(scheme);
    let mut trace = DeflationTrace::default();
    for j in 0..k {
        let coupling = opd.x_cur.dot(&opd.y_cur.t());
        let (u_w, sigma, v_w) = cca::leading_singular_triplet(coupling.view())?;
        if sigma < sigma_floor {
            if j == 0 {
                return Err(Error::Degenerate(
                    "coupling matrix has no leading singular value".into(),
                ));
            }
            acc.stop(j, format!("rank exhausted (sigma = {sigma:.3e})"));
            break;
        }
        let mut u = sx_inv.dot(&u_w);
        let mut v = sy_inv.dot(&v_w);
        cca::normalize_pair_sign(&mut u, &mut v);
        let rho = cca::canonical_correlation(u.view(), v.view(), x, y);

        match scheme {
            DeflationScheme::Pd => {
                let (nx, ny) = projected_step(&opd.x_cur, &opd.y_cur, u_w.view(), v_w.view())?;
                opd.x_cur = nx;
                opd.y_cur = ny;
            }
            DeflationScheme::Opd => {
                if let Err(e) = opd.step(u_w.view(), v_w.view()) {
                    match e {
                        Error::Degenerate(msg) => {
                            if j == 0 {
                                return Err(Error::Degenerate(msg));
                            }
                            acc.stop(j, msg);
                            break;
                        }
                        other => return Err(other),
                    }
                }
            }
            _ => unreachable!(),
        }
        acc.push(u, v, rho, PairFlag::Ok);
        let x_data = sx.dot(&opd.x_cur);
        let y_data = sy.dot(&opd.y_cur);
        trace.cross.push(x_data.dot(&y_data.t()));
        trace.data.push((x_data, y_data));
    }
    Ok((acc.finish(x.n_features(), y.n_features())?, trace))
}

/// PD/OPD with penalized solvers runs on the raw data matrices: the
/// penalized problems already treat the auto-covariances as identity, so the
/// data coordinates are the coordinates their unit-norm weights live in.
fn projected_loop_pcca(
    x: &DataMatrix,
    y: &DataMatrix,
    solver: &PairSolver,
    scheme: DeflationScheme,
    k: usize,
) -> Result<(EmbeddingBasis, DeflationTrace)> {
    let mut acc = BasisAccumulator::new(scheme);
    let mut trace = DeflationTrace::default();
    let mut opd = OpdState::new(x.values().to_owned(), y.values().to_owned());
    for j in 0..k {
        let x_cur = DataMatrix::new_centered(opd.x_cur.clone())?;
        let y_cur = DataMatrix::new_centered(opd.y_cur.clone())?;
        let solved = match solver {
            PairSolver::Scca(cfg) => pcca::scca_fit_pair(&x_cur, &y_cur, cfg),
            PairSolver::GnScca {
                cfg,
                graph_x,
                graph_y,
            } => pcca::gnscca_fit_pair(&x_cur, &y_cur, graph_x, graph_y, cfg),
            PairSolver::Cca { .. } => unreachable!(),
        };
        let pair = match solved {
            Ok(pair) => pair,
            Err(e) if j > 0 => {
                acc.stop(j, format!("{} failed: {e}", solver.name()));
                break;
            }
            Err(e) => return Err(e),
        };
        let mut u = pair.u;
        let mut v = pair.v;
        cca::normalize_pair_sign(&mut u, &mut v);
        let rho = cca::canonical_correlation(u.view(), v.view(), x, y);

        match scheme {
            DeflationScheme::Pd => {
                let (nx, ny) = projected_step(&opd.x_cur, &opd.y_cur, u.view(), v.view())?;
                opd.x_cur = nx;
                opd.y_cur = ny;
            }
            DeflationScheme::Opd => {
                if let Err(e) = opd.step(u.view(), v.view()) {
                    match e {
                        Error::Degenerate(msg) => {
                            if j == 0 {
                                return Err(Error::Degenerate(msg));
                            }
                            acc.stop(j, msg);
                            break;
                        }
                        other => return Err(other),
                    }
                }
            }
            _ => unreachable!(),
        }
        acc.push(u, v, rho, pair.flag);
        trace.cross.push(opd.x_cur.dot(&opd.y_cur.t()));
        trace.data.push((opd.x_cur.clone(), opd.y_cur.clone()));
    }
    Ok((acc.finish(x.n_features(), y.n_features())?, trace))
}

/// Ridge used inside deflation loops: always strictly positive because
/// projected data matrices are rank deficient by construction.
fn loop_ridge(cxx: &Array2<f64>) -> f64 {
    1e-6 * cxx.diag().sum().max(1e-12) / cxx.nrows() as f64
}
