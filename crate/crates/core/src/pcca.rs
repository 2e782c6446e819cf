//! Penalized CCA solvers for the high-dimensional low-sample regime.
//!
//! Both solvers treat the auto-correlation matrices as identity and work on
//! the raw cross-product matrix `Cxy = X Y^T`:
//!
//! * SCCA: alternating soft-thresholding with ell-1 budget constraints on the
//!   weights, the budget enforced by bisection on the threshold.
//! * GN-SCCA: alternating graph-net updates where each half-step minimizes
//!   `-u^T Cxy v + lambda_l1 |u|_1 + (lambda_graph/2) u^T L u + (1/2) |u|_2^2`
//!   by cyclic coordinate descent and is then rescaled to the unit sphere.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::cca::{canonical_correlation, leading_singular_triplet, normalize_pair_sign};
use crate::cca::{CanonicalPair, PairFlag};
use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};

const BISECTION_STEPS: usize = 50;
const ZERO_CROSS_TOL: f64 = 1e-14;
const MAX_CD_SWEEPS: usize = 10_000;

/// Penalty settings for SCCA (ell-1 budgets) and GN-SCCA (graph-net weights).
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// ell-1 budget for `u`; feasible range [1, sqrt(p)] for unit-ell-2 vectors.
    pub c1: f64,
    /// ell-1 budget for `v`; feasible range [1, sqrt(q)].
    pub c2: f64,
    pub lambda_graph_u: f64,
    pub lambda_graph_v: f64,
    pub lambda_l1_u: f64,
    pub lambda_l1_v: f64,
    /// Convergence tolerance on the objective change per outer iteration.
    pub tol: f64,
    /// Outer iteration cap.
    pub max_iter: usize,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            c1: 2.0,
            c2: 2.0,
            lambda_graph_u: 0.0,
            lambda_graph_v: 0.0,
            lambda_l1_u: 0.0,
            lambda_l1_v: 0.0,
            tol: 1e-6,
            max_iter: 100,
        }
    }
}

impl PenaltyConfig {
    fn validate_common(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::domain("tol must be > 0"));
        }
        if self.max_iter < 1 {
            return Err(Error::domain("max_iter must be >= 1"));
        }
        Ok(())
    }

    /// Checks the ell-1 budgets against the feasibility range for p / q
    /// features.
    pub fn validate_budgets(&self, p: usize, q: usize) -> Result<()> {
        self.validate_common()?;
        let (pmax, qmax) = ((p as f64).sqrt(), (q as f64).sqrt());
        if !(1.0..=pmax + 1e-12).contains(&self.c1) {
            return Err(Error::domain(format!(
                "c1 = {} outside feasible range [1, sqrt({p})]",
                self.c1
            )));
        }
        if !(1.0..=qmax + 1e-12).contains(&self.c2) {
            return Err(Error::domain(format!(
                "c2 = {} outside feasible range [1, sqrt({q})]",
                self.c2
            )));
        }
        Ok(())
    }

    fn validate_graph(&self) -> Result<()> {
        self.validate_common()?;
        for (name, v) in [
            ("lambda_graph_u", self.lambda_graph_u),
            ("lambda_graph_v", self.lambda_graph_v),
            ("lambda_l1_u", self.lambda_l1_u),
            ("lambda_l1_v", self.lambda_l1_v),
        ] {
            if v < 0.0 {
                return Err(Error::domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// An undirected weighted graph over the features of one modality, with its
/// combinatorial Laplacian `L = D - A`.
#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub n_nodes: usize,
    /// Edges as (i, j, weight) with i < j, no self-loops, weight >= 0.
    pub edges: Vec<(usize, usize, f64)>,
    pub laplacian: Array2<f64>,
}

impl GraphSpec {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut canonical = Vec::with_capacity(edges.len());
        for (i, j, w) in edges {
            if i == j {
                return Err(Error::domain(format!("self-loop on node {i}")));
            }
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::domain(format!(
                    "edge ({i}, {j}) out of range for {n_nodes} nodes"
                )));
            }
            if w < 0.0 {
                return Err(Error::domain(format!(
                    "edge ({i}, {j}) has negative weight {w}"
                )));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::domain(format!("duplicate edge ({i}, {j})")));
            }
            canonical.push((key.0, key.1, w));
        }
        let mut laplacian = Array2::zeros((n_nodes, n_nodes));
        for &(i, j, w) in &canonical {
            laplacian[[i, j]] -= w;
            laplacian[[j, i]] -= w;
            laplacian[[i, i]] += w;
            laplacian[[j, j]] += w;
        }
        Ok(Self {
            n_nodes,
            edges: canonical,
            laplacian,
        })
    }

    /// Checks the Laplacian row-sum invariant.
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.laplacian.rows().into_iter().enumerate() {
            if row.sum().abs() > 1e-10 {
                return Err(Error::domain(format!(
                    "laplacian row {i} sums to {:.3e}",
                    row.sum()
                )));
            }
        }
        Ok(())
    }
}

/// `sign(x) * max(|x| - lam, 0)`.
pub fn soft_threshold(x: f64, lam: f64) -> f64 {
    debug_assert!(lam >= 0.0);
    x.signum() * (x.abs() - lam).max(0.0)
}

/// Diagnostics of one alternating solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    /// Objective value after each outer iteration.
    pub objectives: Vec<f64>,
    /// Final soft-threshold levels chosen by the budget bisection (SCCA only).
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub converged: bool,
}

/// Fits the first SCCA pair on centered data. See [`scca_fit_pair_detailed`].
pub fn scca_fit_pair(x: &DataMatrix, y: &DataMatrix, cfg: &PenaltyConfig) -> Result<CanonicalPair> {
    scca_fit_pair_detailed(x, y, cfg).map(|(pair, _)| pair)
}

/// Fits the first SCCA pair and returns the solver trace alongside.
///
/// Alternates `u <- normalize(soft_threshold(Cxy v, lambda_u))` with
/// `lambda_u` the smallest value (possibly zero) bringing `|u|_1` within the
/// budget, and the symmetric `v` step, until the objective change drops below
/// `tol` or `max_iter` is hit (the pair is then flagged `NotConverged`).
pub fn scca_fit_pair_detailed(
    x: &DataMatrix,
    y: &DataMatrix,
    cfg: &PenaltyConfig,
) -> Result<(CanonicalPair, SolveTrace)> {
    require_centered(x, y)?;
    cfg.validate_budgets(x.n_features(), y.n_features())?;
    let cxy = x.values().dot(&y.values().t());
    let (mut u, mut v, trace) = scca_core(cxy.view(), cfg)?;
    normalize_pair_sign(&mut u, &mut v);
    let rho = canonical_correlation(u.view(), v.view(), x, y);
    Ok((
        CanonicalPair {
            u,
            v,
            rho,
            iteration: 0,
            flag: if trace.converged {
                PairFlag::Ok
            } else {
                PairFlag::NotConverged
            },
        },
        trace,
    ))
}

/// SCCA alternation on a raw cross matrix (used directly by the Hotelling
/// deflation loop, where only the deflated cross matrix exists).
pub(crate) fn scca_core(
    cxy: ArrayView2<f64>,
    cfg: &PenaltyConfig,
) -> Result<(Array1<f64>, Array1<f64>, SolveTrace)> {
    if crate::datamodel::max_abs(&cxy.to_owned()) < ZERO_CROSS_TOL {
        return Err(Error::Degenerate("cross matrix is numerically zero".into()));
    }
    let (_, _, v0) = leading_singular_triplet(cxy)?;
    let mut v = v0;
    let mut u;
    let mut objectives = Vec::new();
    let (mut lambda_u, mut lambda_v) = (0.0, 0.0);
    let mut prev_obj = f64::NEG_INFINITY;
    let mut converged = false;
    let mut u_out = Array1::zeros(cxy.nrows());
    for _ in 0..cfg.max_iter {
        let a = cxy.dot(&v);
        let (u_new, lu) = l1_budget_direction(a.view(), cfg.c1)?;
        u = u_new;
        lambda_u = lu;
        let b = cxy.t().dot(&u);
        let (v_new, lv) = l1_budget_direction(b.view(), cfg.c2)?;
        v = v_new;
        lambda_v = lv;
        let obj = u.dot(&cxy.dot(&v));
        objectives.push(obj);
        u_out = u;
        if (obj - prev_obj).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    Ok((
        u_out,
        v,
        SolveTrace {
            objectives,
            lambda_u,
            lambda_v,
            converged,
        },
    ))
}

/// Maximizer of `u^T a` over the set `{ |u|_2 <= 1, |u|_1 <= c }`.
///
/// Returns the unit direction together with the soft-threshold level found by
/// bisection over [0, max|a_i|]; the level is zero whenever the plain
/// normalized vector already satisfies the budget.
fn l1_budget_direction(a: ArrayView1<f64>, budget: f64) -> Result<(Array1<f64>, f64)> {
    let amax = a.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if amax < ZERO_CROSS_TOL {
        return Err(Error::Degenerate(
            "alternating step hit a zero gradient direction".into(),
        ));
    }
    let normalized = normalize_l2(&a.to_owned());
    if l1_norm(&normalized) <= budget + 1e-12 {
        return Ok((normalized, 0.0));
    }
    let (mut lo, mut hi) = (0.0_f64, amax);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let s = a.mapv(|x| soft_threshold(x, mid));
        let norm = s.dot(&s).sqrt();
        if norm < ZERO_CROSS_TOL {
            hi = mid;
            continue;
        }
        if l1_norm(&s) / norm > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = a.mapv(|x| soft_threshold(x, hi));
    if s.dot(&s).sqrt() < ZERO_CROSS_TOL {
        // Tied maxima can make the exact budget unreachable; fall back to a
        // single spike, which is always feasible since budgets are >= 1.
        let mut spike = Array1::zeros(a.len());
        let idx = a
            .iter()
            .enumerate()
            .max_by(|(_, x), (_, y)| x.abs().total_cmp(&y.abs()))
            .map(|(i, _)| i)
            .expect("non-empty");
        spike[idx] = a[idx].signum();
        return Ok((spike, hi));
    }
    Ok((normalize_l2(&s), hi))
}

/// Fits the first GN-SCCA pair on centered data. See
/// [`gnscca_fit_pair_detailed`].
pub fn gnscca_fit_pair(
    x: &DataMatrix,
    y: &DataMatrix,
    gu: &GraphSpec,
    gv: &GraphSpec,
    cfg: &PenaltyConfig,
) -> Result<CanonicalPair> {
    gnscca_fit_pair_detailed(x, y, gu, gv, cfg).map(|(pair, _)| pair)
}

/// Fits the first GN-SCCA pair and returns the solver trace alongside.
pub fn gnscca_fit_pair_detailed(
    x: &DataMatrix,
    y: &DataMatrix,
    gu: &GraphSpec,
    gv: &GraphSpec,
    cfg: &PenaltyConfig,
) -> Result<(CanonicalPair, SolveTrace)> {
    require_centered(x, y)?;
    if gu.n_nodes != x.n_features() || gv.n_nodes != y.n_features() {
        return Err(Error::dim(format!(
            "graph node counts ({}, {}) must equal feature counts ({}, {})",
            gu.n_nodes,
            gv.n_nodes,
            x.n_features(),
            y.n_features()
        )));
    }
    cfg.validate_graph()?;
    let cxy = x.values().dot(&y.values().t());
    let (mut u, mut v, trace) = gnscca_core(cxy.view(), gu, gv, cfg)?;
    normalize_pair_sign(&mut u, &mut v);
    let rho = canonical_correlation(u.view(), v.view(), x, y);
    Ok((
        CanonicalPair {
            u,
            v,
            rho,
            iteration: 0,
            flag: if trace.converged {
                PairFlag::Ok
            } else {
                PairFlag::NotConverged
            },
        },
        trace,
    ))
}

pub(crate) fn gnscca_core(
    cxy: ArrayView2<f64>,
    gu: &GraphSpec,
    gv: &GraphSpec,
    cfg: &PenaltyConfig,
) -> Result<(Array1<f64>, Array1<f64>, SolveTrace)> {
    if crate::datamodel::max_abs(&cxy.to_owned()) < ZERO_CROSS_TOL {
        return Err(Error::Degenerate("cross matrix is numerically zero".into()));
    }
    let (_, _, v0) = leading_singular_triplet(cxy)?;
    let mut v = v0;
    let mut u = Array1::zeros(cxy.nrows());
    let mut objectives = Vec::new();
    let mut prev_obj = f64::NEG_INFINITY;
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let a = cxy.dot(&v);
        graphnet_coordinate_descent(
            &mut u,
            a.view(),
            &gu.laplacian,
            cfg.lambda_graph_u,
            cfg.lambda_l1_u,
            cfg.tol,
        );
        if !normalize_l2_inplace(&mut u) {
            return Err(Error::Degenerate(
                "u collapsed to zero (l1 penalty too strong)".into(),
            ));
        }
        let b = cxy.t().dot(&u);
        graphnet_coordinate_descent(
            &mut v,
            b.view(),
            &gv.laplacian,
            cfg.lambda_graph_v,
            cfg.lambda_l1_v,
            cfg.tol,
        );
        if !normalize_l2_inplace(&mut v) {
            return Err(Error::Degenerate(
                "v collapsed to zero (l1 penalty too strong)".into(),
            ));
        }
        let obj = graphnet_objective(&u, &v, cxy, gu, gv, cfg);
        objectives.push(obj);
        if (obj - prev_obj).abs() < cfg.tol {
            converged = true;
            break;
        }
        prev_obj = obj;
    }
    Ok((
        u,
        v,
        SolveTrace {
            objectives,
            lambda_u: cfg.lambda_l1_u,
            lambda_v: cfg.lambda_l1_v,
            converged,
        },
    ))
}

/// The graph-net value `u^T Cxy v` minus all active penalties, evaluated at
/// the unit-rescaled iterates.
fn graphnet_objective(
    u: &Array1<f64>,
    v: &Array1<f64>,
    cxy: ArrayView2<f64>,
    gu: &GraphSpec,
    gv: &GraphSpec,
    cfg: &PenaltyConfig,
) -> f64 {
    u.dot(&cxy.dot(v))
        - cfg.lambda_l1_u * l1_norm(u)
        - 0.5 * cfg.lambda_graph_u * u.dot(&gu.laplacian.dot(u))
        - cfg.lambda_l1_v * l1_norm(v)
        - 0.5 * cfg.lambda_graph_v * v.dot(&gv.laplacian.dot(v))
}

/// Cyclic coordinate descent for
/// `min_u -a^T u + lambda_l1 |u|_1 + (lambda_g/2) u^T L u + (1/2)|u|_2^2`.
///
/// Coordinates are visited in fixed ascending order; sweeps stop when the
/// largest coordinate change falls below `tol`. The ridge term makes the
/// problem 1-strongly convex, so this terminates quickly.
fn graphnet_coordinate_descent(
    u: &mut Array1<f64>,
    a: ArrayView1<f64>,
    laplacian: &Array2<f64>,
    lambda_g: f64,
    lambda_l1: f64,
    tol: f64,
) {
    let n = u.len();
    for _ in 0..MAX_CD_SWEEPS {
        let mut max_delta = 0.0_f64;
        for i in 0..n {
            let row = laplacian.row(i);
            let mut off_diag = 0.0;
            for j in 0..n {
                if j != i {
                    off_diag += row[j] * u[j];
                }
            }
            let target = a[i] - lambda_g * off_diag;
            let new = soft_threshold(target, lambda_l1) / (1.0 + lambda_g * row[i]);
            max_delta = max_delta.max((new - u[i]).abs());
            u[i] = new;
        }
        if max_delta < tol {
            break;
        }
    }
}

/// Builds a feature graph by thresholding absolute pairwise Pearson
/// correlations of the rows of `x`.
pub fn graph_from_covariance(x: &DataMatrix, threshold: f64) -> Result<GraphSpec> {
    if !x.is_centered() {
        return Err(Error::Contract(
            "graph_from_covariance requires centered input".into(),
        ));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::domain(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let p = x.n_features();
    let values = x.values();
    let norms: Vec<f64> = (0..p)
        .map(|i| values.row(i).dot(&values.row(i)).sqrt())
        .collect();
    let mut edges = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if norms[i] < ZERO_CROSS_TOL || norms[j] < ZERO_CROSS_TOL {
                continue;
            }
            let w = (values.row(i).dot(&values.row(j)) / (norms[i] * norms[j])).abs();
            if w >= threshold {
                edges.push((i, j, w));
            }
        }
    }
    GraphSpec::new(p, edges)
}

fn require_centered(x: &DataMatrix, y: &DataMatrix) -> Result<()> {
    if !x.is_centered() || !y.is_centered() {
        return Err(Error::Contract("pCCA solvers require centered data".into()));
    }
    if x.n_samples() != y.n_samples() {
        return Err(Error::dim(format!(
            "sample count mismatch: {} vs {}",
            x.n_samples(),
            y.n_samples()
        )));
    }
    Ok(())
}

fn l1_norm(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn normalize_l2(v: &Array1<f64>) -> Array1<f64> {
    let n = v.dot(v).sqrt();
    v / n
}

fn normalize_l2_inplace(v: &mut Array1<f64>) -> bool {
    let n = v.dot(v).sqrt();
    if n < ZERO_CROSS_TOL {
        return false;
    }
    *v /= n;
    true
}
