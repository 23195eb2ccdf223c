//! Explicit-projection reference implementations.
//!
//! Everything here forms the `n x n` projection matrices literally and
//! evaluates the quadratic forms directly. It is `O(n^2)` in memory and only
//! meant for checking the factorized fast path on small instances, so every
//! entry point refuses matrices larger than [`ORACLE_MAX_DIM`].

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Edge, GroupData, GroupDataset};
use crate::error::{JttError, Result};
use crate::linalg;

pub const ORACLE_MAX_DIM: usize = 200;

fn guard(dim: usize) -> Result<()> {
    if dim > ORACLE_MAX_DIM {
        return Err(JttError::OracleGuard {
            dim,
            limit: ORACLE_MAX_DIM,
        });
    }
    Ok(())
}

fn gram_inverse(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    x.tr_mul(x).try_inverse().ok_or_else(|| JttError::RankDeficient {
        context: "oracle gram matrix".into(),
        rank: linalg::numeric_rank(x),
        p: x.ncols(),
    })
}

/// `P = X (X'X)^{-1} X'`.
pub fn projection(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    guard(x.nrows())?;
    Ok(x * gram_inverse(x)? * x.transpose())
}

/// `y'(I - P)y` with the projection formed explicitly.
pub fn residual_quadratic_form(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    let proj = projection(x)?;
    let resid = y - proj * y;
    Ok(y.dot(&resid))
}

/// Explicit per-group and per-edge projection matrices.
#[derive(Debug, Clone)]
pub struct ProjectionCache {
    pub groups: Vec<DMatrix<f64>>,
}

impl ProjectionCache {
    pub fn new(d: &GroupDataset) -> Result<Self> {
        let groups = d.groups().iter().map(|g| projection(&g.x)).collect::<Result<_>>()?;
        Ok(ProjectionCache { groups })
    }

    /// `P_kl` of the stacked design of `edge`.
    pub fn pair(&self, d: &GroupDataset, edge: Edge) -> Result<DMatrix<f64>> {
        let (x, _) = stacked(d, edge);
        projection(&x)
    }
}

fn stacked(d: &GroupDataset, edge: Edge) -> (DMatrix<f64>, DVector<f64>) {
    let (gk, gl) = (d.group(edge.k), d.group(edge.l));
    (linalg::vstack(&[&gk.x, &gl.x]), linalg::vconcat(&[&gk.y, &gl.y]))
}

fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows() + b.nrows();
    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

/// `diag(P_k, P_l) - P_kl`, of order `n_k + n_l`.
pub fn u_coefficient_matrix(d: &GroupDataset, edge: Edge) -> Result<DMatrix<f64>> {
    let (x, _) = stacked(d, edge);
    guard(x.nrows())?;
    let pk = projection(&d.group(edge.k).x)?;
    let pl = projection(&d.group(edge.l).x)?;
    Ok(block_diag(&pk, &pl) - projection(&x)?)
}

/// `u_kl = y_kl' {diag(P_k, P_l) - P_kl} y_kl / sigma^2`.
pub fn u_statistic(d: &GroupDataset, edge: Edge, sigma2: f64) -> Result<f64> {
    let (_, y) = stacked(d, edge);
    let a = u_coefficient_matrix(d, edge)?;
    Ok(y.dot(&(a * &y)) / sigma2)
}

/// Block-diagonal `diag(I - P_1, ..., I - P_m)` of order `n`.
pub fn v_coefficient_matrix(d: &GroupDataset) -> Result<DMatrix<f64>> {
    let n = d.dims().n;
    guard(n)?;
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for g in d.groups() {
        let block = DMatrix::identity(g.n(), g.n()) - projection(&g.x)?;
        out.view_mut((at, at), (g.n(), g.n())).copy_from(&block);
        at += g.n();
    }
    Ok(out)
}

/// The `u` coefficient matrix embedded in the full `n x n` response space.
pub fn u_coefficient_matrix_full(d: &GroupDataset, edge: Edge) -> Result<DMatrix<f64>> {
    let n = d.dims().n;
    guard(n)?;
    let offsets: Vec<usize> = d
        .groups()
        .iter()
        .scan(0, |acc, g| {
            let start = *acc;
            *acc += g.n();
            Some(start)
        })
        .collect();
    let a = u_coefficient_matrix(d, edge)?;
    let (nk, nl) = (d.group(edge.k).n(), d.group(edge.l).n());
    let (ok, ol) = (offsets[edge.k - 1], offsets[edge.l - 1]);
    let mut out = DMatrix::zeros(n, n);
    let map = |i: usize| if i < nk { ok + i } else { ol + i - nk };
    for i in 0..nk + nl {
        for j in 0..nk + nl {
            out[(map(i), map(j))] = a[(i, j)];
        }
    }
    Ok(out)
}

/// `v = sum_j y_j'(I - P_j)y_j / sigma^2`.
pub fn v_statistic(d: &GroupDataset, sigma2: f64) -> Result<f64> {
    let mut total = 0.0;
    for g in d.groups() {
        total += residual_quadratic_form(&g.x, &g.y)?;
    }
    Ok(total / sigma2)
}

pub fn explicit_joint_rss(gk: &GroupData, gl: &GroupData) -> Result<f64> {
    let x = linalg::vstack(&[&gk.x, &gl.x]);
    let y = linalg::vconcat(&[&gk.y, &gl.y]);
    residual_quadratic_form(&x, &y)
}

/// `s^2 = sum_j y_j'(I - P_j)y_j / N`.
pub fn explicit_pooled_variance(d: &GroupDataset) -> Result<f64> {
    Ok(v_statistic(d, 1.0)? / d.dims().resid_df_f64())
}

/// Base criterion evaluated literally.
pub fn brute_force_gcp_base(d: &GroupDataset, alpha: f64) -> Result<f64> {
    let s2 = explicit_pooled_variance(d)?;
    let dims = d.dims();
    Ok(v_statistic(d, 1.0)? / s2 + alpha * (dims.m * dims.p) as f64)
}

/// Merged-pair criterion evaluated literally: pooled residual of the pair
/// plus the residuals of every group outside the pair.
pub fn brute_force_gcp_candidate(d: &GroupDataset, edge: Edge, alpha: f64) -> Result<f64> {
    let s2 = explicit_pooled_variance(d)?;
    let dims = d.dims();
    let (x, y) = stacked(d, edge);
    let mut rss = residual_quadratic_form(&x, &y)?;
    for g in d.groups() {
        if g.index != edge.k && g.index != edge.l {
            rss += residual_quadratic_form(&g.x, &g.y)?;
        }
    }
    Ok(rss / s2 + alpha * ((dims.m - 1) * dims.p) as f64)
}

pub fn brute_force_edge_difference(d: &GroupDataset, edge: Edge, alpha: f64) -> Result<f64> {
    Ok(brute_force_gcp_candidate(d, edge, alpha)? - brute_force_gcp_base(d, alpha)?)
}

/// MC_p from the fitted residual and `tr H(lam)` with explicit inverses.
pub fn direct_mcp(x: &DMatrix<f64>, y: &DVector<f64>, anchor: &DVector<f64>, lambda: f64) -> Result<f64> {
    let (n, p) = x.shape();
    guard(n)?;
    let gram = x.tr_mul(x);
    let ols = gram_inverse(x)? * x.tr_mul(y);
    let s2 = (y - x * &ols).norm_squared() / (n - p) as f64;
    let reg = (&gram + DMatrix::identity(p, p) * lambda)
        .try_inverse()
        .ok_or_else(|| JttError::InvalidArgument("singular ridge system".into()))?;
    let xi = &reg * (x.tr_mul(y) + anchor * lambda);
    let trace = (&reg * &gram).trace();
    let df = (n - p) as f64;
    Ok((y - x * xi).norm_squared() / s2 + 2.0 * df / (df - 2.0) * trace)
}

/// `delta = eta'(I - P_kl)eta / sigma^2` for stacked group means.
pub fn explicit_noncentrality(
    xk: &DMatrix<f64>,
    xl: &DMatrix<f64>,
    mean_k: &DVector<f64>,
    mean_l: &DVector<f64>,
    sigma2: f64,
) -> Result<f64> {
    let x = linalg::vstack(&[xk, xl]);
    let eta = linalg::vconcat(&[mean_k, mean_l]);
    Ok(residual_quadratic_form(&x, &eta)? / sigma2)
}
