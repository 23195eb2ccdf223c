//! Generalized C_p edge scoring and edge selection.
//!
//! For an edge `(k, l)` the GC_p difference between the merged-pair model and
//! the base model reduces to
//!
//! ```text
//! GC_p^(kl)(a) - GC_p^(0)(a) = (joint_rss - rss_k - rss_l) / s^2 - a p
//! ```
//!
//! so the edge is kept iff the scaled RSS increment does not exceed `a p`.
//! The increment is computed from the cached triangular factors of the two
//! groups: stacking `[R_k; R_l]` and `[Q_k'y_k; Q_l'y_l]` gives a `2p x p`
//! least-squares problem whose residual is exactly the increment, so nesting
//! (`joint_rss >= rss_k + rss_l`) holds by construction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{validate_dataset, Dims, Edge, GraphSpec, GroupData, GroupDataset};
use crate::error::{JttError, Result};
use crate::linalg::{self, least_squares};

/// Group-wise OLS fit with its cached triangular factor.
#[derive(Debug, Clone)]
pub struct GroupFit {
    pub beta_hat: DVector<f64>,
    pub rss: f64,
    r: DMatrix<f64>,
    qty: DVector<f64>,
}

impl GroupFit {
    /// `joint_rss - rss_self - rss_other` for the pooled fit of both groups.
    pub fn pair_rss_increment(&self, other: &GroupFit) -> f64 {
        let r = linalg::vstack(&[&self.r, &other.r]);
        let qty = linalg::vconcat(&[&self.qty, &other.qty]);
        // [R_k; R_l] always has full column rank when each block does.
        least_squares(&r, &qty).map_or(0.0, |ls| ls.rss)
    }

    /// `tr((X'X)^{-1}) = ||R^{-1}||_F^2`.
    pub fn inverse_gram_trace(&self) -> f64 {
        let p = self.r.ncols();
        self.r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .map_or(f64::INFINITY, |ri| ri.norm_squared())
    }
}

pub fn group_ols(g: &GroupData) -> Result<GroupFit> {
    let ls = least_squares(&g.x, &g.y).ok_or_else(|| rank_error(format!("group {}", g.name), &g.x))?;
    Ok(GroupFit {
        beta_hat: ls.coef,
        rss: ls.rss,
        r: ls.r,
        qty: ls.qty,
    })
}

/// RSS of the OLS fit on the vertically stacked pair, refactorized from scratch.
pub fn joint_rss(gk: &GroupData, gl: &GroupData) -> Result<f64> {
    if gk.p() != gl.p() {
        return Err(JttError::ColumnMismatch {
            group: gl.name.clone(),
            expected: gk.p(),
            found: gl.p(),
        });
    }
    let x = linalg::vstack(&[&gk.x, &gl.x]);
    let y = linalg::vconcat(&[&gk.y, &gl.y]);
    least_squares(&x, &y)
        .map(|ls| ls.rss)
        .ok_or_else(|| rank_error(format!("pair ({}, {})", gk.name, gl.name), &x))
}

/// `s^2 = sum_j rss_j / N`.
pub fn pooled_variance(fits: &[GroupFit], dims: &Dims) -> Result<f64> {
    if dims.resid_df <= 0 {
        return Err(JttError::Dimensions(format!(
            "residual degrees of freedom N = {} must be positive",
            dims.resid_df
        )));
    }
    let s2 = fits.iter().map(|f| f.rss).sum::<f64>() / dims.resid_df_f64();
    if !(s2 > 0.0) || !s2.is_finite() {
        return Err(JttError::DegenerateVariance);
    }
    Ok(s2)
}

/// Base-model criterion `N + a m p` (the scaled RSS term is identically `N`).
pub fn gcp_base(alpha: f64, dims: &Dims) -> f64 {
    dims.resid_df_f64() + alpha * (dims.m * dims.p) as f64
}

/// Criterion of the model that merges `edge`, for fits indexed by vertex - 1.
pub fn gcp_candidate(edge: Edge, alpha: f64, fits: &[GroupFit], s2: f64, dims: &Dims) -> f64 {
    let inc = fits[edge.k - 1].pair_rss_increment(&fits[edge.l - 1]);
    dims.resid_df_f64() + inc / s2 + alpha * ((dims.m - 1) * dims.p) as f64
}

/// Score of a single edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub k: usize,
    pub l: usize,
    #[serde(skip)]
    pub joint_rss: f64,
    pub delta_stat: f64,
    pub gcp_diff: f64,
    pub selected: bool,
}

impl EdgeScore {
    pub fn edge(&self) -> Edge {
        Edge { k: self.k, l: self.l }
    }
}

pub fn gcp_edge_difference(edge: Edge, alpha: f64, fits: &[GroupFit], s2: f64) -> EdgeScore {
    let (fk, fl) = (&fits[edge.k - 1], &fits[edge.l - 1]);
    let inc = fk.pair_rss_increment(fl);
    let delta_stat = inc / s2;
    let p = fk.beta_hat.len() as f64;
    let gcp_diff = delta_stat - alpha * p;
    EdgeScore {
        k: edge.k,
        l: edge.l,
        joint_rss: fk.rss + fl.rss + inc,
        delta_stat,
        gcp_diff,
        // ties select, matching the non-strict comparison of the criteria
        selected: gcp_diff <= 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Hat,
    Check,
    Explicit,
}

/// Penalty strength `alpha`, its offset `alpha - N/(N-2)` and the
/// standardizing constant `B` (only defined for the `Hat` rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub kind: PenaltyKind,
    pub alpha: f64,
    pub beta_offset: Option<f64>,
    pub b: Option<f64>,
}

impl PenaltyParams {
    pub fn explicit(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(JttError::InvalidArgument(format!(
                "alpha must be positive and finite, got {alpha}"
            )));
        }
        Ok(PenaltyParams {
            kind: PenaltyKind::Explicit,
            alpha,
            beta_offset: None,
            b: None,
        })
    }
}

/// Standardizing constant `B = N sqrt(N + p - 2) / ((N - 2) sqrt(N - 4))`.
pub fn standardizing_constant(resid_df: f64, p: usize) -> f64 {
    let n = resid_df;
    n * (n + p as f64 - 2.0).sqrt() / ((n - 2.0) * (n - 4.0).sqrt())
}

fn check_common(p: usize, m: usize, n0: usize) -> Result<()> {
    if p < 1 || m < 2 || n0 < 2 {
        return Err(JttError::InvalidArgument(format!(
            "penalty needs p >= 1, m >= 2, n0 >= 2 (got p = {p}, m = {m}, n0 = {n0})"
        )));
    }
    Ok(())
}

/// `alpha_hat = N/(N-2) + B m^(1/4) ln(n0) / sqrt(p)`.
pub fn alpha_hat(resid_df: i64, p: usize, m: usize, n0: usize) -> Result<PenaltyParams> {
    check_common(p, m, n0)?;
    if resid_df <= 4 {
        return Err(JttError::Dimensions(format!("N-4>0 violated (N = {resid_df})")));
    }
    let n = resid_df as f64;
    let b = standardizing_constant(n, p);
    let beta = b * (m as f64).powf(0.25) * (n0 as f64).ln() / (p as f64).sqrt();
    Ok(PenaltyParams {
        kind: PenaltyKind::Hat,
        alpha: n / (n - 2.0) + beta,
        beta_offset: Some(beta),
        b: Some(b),
    })
}

/// `alpha_check = 2 + m^(1/4) ln(n0) / sqrt(p)`.
pub fn alpha_check(p: usize, m: usize, n0: usize) -> Result<PenaltyParams> {
    check_common(p, m, n0)?;
    Ok(PenaltyParams {
        kind: PenaltyKind::Check,
        alpha: check_formula(p, m, (n0 as f64).ln()),
        beta_offset: None,
        b: None,
    })
}

fn check_formula(p: usize, m: usize, ln_n0: f64) -> f64 {
    2.0 + (m as f64).powf(0.25) * ln_n0 / (p as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub alpha: f64,
    pub s2: f64,
    pub edges: Vec<EdgeScore>,
}

impl SelectionResult {
    pub fn selected(&self) -> Vec<Edge> {
        self.edges.iter().filter(|e| e.selected).map(EdgeScore::edge).collect()
    }
}

/// Fits every group once. Fits are indexed by vertex - 1.
pub fn fit_groups(d: &GroupDataset) -> Result<Vec<GroupFit>> {
    d.groups().par_iter().map(group_ols).collect()
}

/// Scores every edge of `g` and keeps those whose merged criterion is not larger.
pub fn select_edges(d: &GroupDataset, g: &GraphSpec, params: &PenaltyParams) -> Result<SelectionResult> {
    validate_dataset(d).into_result()?;
    let fits = fit_groups(d)?;
    select_edges_with_fits(d, g, params, &fits)
}

pub(crate) fn select_edges_with_fits(
    d: &GroupDataset,
    g: &GraphSpec,
    params: &PenaltyParams,
    fits: &[GroupFit],
) -> Result<SelectionResult> {
    if g.m() != d.dims().m {
        return Err(JttError::Dimensions(format!(
            "graph has {} vertices but dataset has {} groups",
            g.m(),
            d.dims().m
        )));
    }
    let s2 = pooled_variance(fits, &d.dims())?;
    let edges = g
        .edges()
        .par_iter()
        .map(|&e| gcp_edge_difference(e, params.alpha, fits, s2))
        .collect();
    Ok(SelectionResult {
        alpha: params.alpha,
        s2,
        edges,
    })
}

fn rank_error(context: String, x: &DMatrix<f64>) -> JttError {
    JttError::RankDeficient {
        context,
        rank: linalg::numeric_rank(x),
        p: x.ncols(),
    }
}
