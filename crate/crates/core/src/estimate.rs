//! Post-selection estimation and the end-to-end fit.
//!
//! JTT1 is plain least squares on each estimated cluster. JTT2 shrinks each
//! cluster's estimate toward `b_i`, the inverse-distance weighted average of
//! the least-squares estimates of the clusters adjacent to it in the induced
//! cluster graph, with the ridge parameter chosen per cluster by minimizing
//! the modified C_p criterion
//!
//! ```text
//! MC_p(lam) = (n - p) + sum_j (lam/(d_j+lam))^2 (z_j - sqrt(d_j) (V'b)_j)^2 / s^2
//!           + 2 (n - p)/(n - p - 2) * (p - sum_j lam/(d_j+lam))
//! ```
//!
//! where `X = U diag(sqrt d) V'` and `z = U'y`. Everything is evaluated in the
//! spectral basis so no matrix is inverted per trial `lam`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{validate_dataset, GraphSpec, GroupDataset};
use crate::error::{JttError, Result};
use crate::gcp::{self, PenaltyParams, SelectionResult};
use crate::linalg;
use crate::partition::{connected_components, derive_cluster_edges, ClusterAssignment, ClusterGraph};

/// Number of points of the coarse geometric grid in the ridge search.
pub const LAMBDA_GRID_POINTS: usize = 81;
/// The grid spans `[LAMBDA_SPAN^-1 * d_min, LAMBDA_SPAN * d_max]`.
pub const LAMBDA_SPAN: f64 = 1e8;

/// Stacked data of one estimated cluster together with its thin SVD.
#[derive(Debug, Clone)]
pub struct ClusterDesign {
    pub index: usize,
    pub members: Vec<usize>,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub u: DMatrix<f64>,
    /// Squared singular values, descending.
    pub d: DVector<f64>,
    pub v: DMatrix<f64>,
    pub z: DVector<f64>,
    /// `||y - X xi_ols||^2`.
    pub rss0: f64,
}

impl ClusterDesign {
    /// Stacks the groups listed in `members` (1-based vertex ids).
    pub fn new(index: usize, data: &GroupDataset, members: &[usize]) -> Result<Self> {
        let xs: Vec<_> = members.iter().map(|&v| &data.group(v).x).collect();
        let ys: Vec<_> = members.iter().map(|&v| &data.group(v).y).collect();
        let mut cd = Self::from_parts(index, linalg::vstack(&xs), linalg::vconcat(&ys))?;
        cd.members = members.to_vec();
        Ok(cd)
    }

    pub fn from_parts(index: usize, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        let rank_err = |rank| JttError::RankDeficient {
            context: format!("cluster {index}"),
            rank,
            p,
        };
        if n < p {
            return Err(rank_err(n));
        }
        let svd = x.clone().svd(true, true);
        let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
            return Err(JttError::Dimensions(format!("cluster {index}: SVD failed")));
        };
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sv = DVector::from_iterator(p, order.iter().map(|&j| svd.singular_values[j]));
        let tol = linalg::rank_tolerance(n, p) * sv[0];
        if !(sv[0] > 0.0) || sv[p - 1] <= tol {
            return Err(rank_err(sv.iter().filter(|&&s| s > tol).count()));
        }
        let u = DMatrix::from_fn(n, p, |r, c| u[(r, order[c])]);
        let v = DMatrix::from_fn(p, p, |r, c| v_t[(order[c], r)]);
        let d = sv.map(|s| s * s);
        let z = u.tr_mul(&y);
        let xi = &v * DVector::from_fn(p, |j, _| z[j] / sv[j]);
        let rss0 = (&y - &x * xi).norm_squared();
        Ok(ClusterDesign {
            index,
            members: Vec::new(),
            y,
            x,
            u,
            d,
            v,
            z,
            rss0,
        })
    }

    pub fn n_tilde(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `s_i^2 = rss0 / (n - p)`; `None` when the cluster has no residual degrees of freedom.
    pub fn s2(&self) -> Option<f64> {
        let df = self.n_tilde() - self.p();
        (df > 0).then(|| self.rss0 / df as f64)
    }

    /// `r = D^{-1/2} V' b`.
    pub fn anchor_coordinates(&self, anchor: &DVector<f64>) -> DVector<f64> {
        let vb = self.v.tr_mul(anchor);
        DVector::from_fn(self.p(), |j, _| vb[j] / self.d[j].sqrt())
    }
}

/// `(X'X)^{-1} X'y = V diag(1/sqrt d) z`.
pub fn cluster_ols(cd: &ClusterDesign) -> DVector<f64> {
    let t = DVector::from_fn(cd.p(), |j, _| cd.z[j] / cd.d[j].sqrt());
    &cd.v * t
}

/// Inverse-distance weight, with the distance clamped away from zero.
pub fn edge_weight(xi_k: &DVector<f64>, xi_l: &DVector<f64>) -> f64 {
    let eps = 1e-12 * (1.0 + xi_k.norm() + xi_l.norm());
    1.0 / (xi_k - xi_l).norm().max(eps)
}

/// Weighted average of the OLS estimates of the clusters adjacent to the
/// 1-based cluster `i`; `None` for an isolated cluster.
pub fn weighted_anchor(i: usize, xi_ols: &[DVector<f64>], f: &ClusterGraph) -> Option<DVector<f64>> {
    let own = &xi_ols[i - 1];
    let mut total = 0.0;
    let mut acc = DVector::zeros(own.len());
    for l in f.neighbours(i) {
        let other = &xi_ols[l - 1];
        let w = edge_weight(own, other);
        acc.axpy(w, other, 1.0);
        total += w;
    }
    (total > 0.0).then(|| acc / total)
}

/// `(X'X + lam I)^{-1} (X'y + lam b)` evaluated spectrally; `lam = inf` returns `b`.
pub fn ridge_to_anchor(cd: &ClusterDesign, anchor: &DVector<f64>, lambda: f64) -> DVector<f64> {
    if lambda.is_infinite() {
        return anchor.clone();
    }
    let vb = cd.v.tr_mul(anchor);
    let t = DVector::from_fn(cd.p(), |j, _| {
        let d = cd.d[j];
        (d.sqrt() * cd.z[j] + lambda * vb[j]) / (d + lambda)
    });
    &cd.v * t
}

/// Precomputed spectral terms of MC_p for one cluster and anchor.
#[derive(Debug, Clone)]
pub struct McpTerms {
    d: DVector<f64>,
    shift_sq: DVector<f64>,
    s2: f64,
    resid_df: f64,
    trace_factor: f64,
}

impl McpTerms {
    pub fn new(cd: &ClusterDesign, anchor: &DVector<f64>) -> Result<Self> {
        let df = cd.n_tilde() as f64 - cd.p() as f64;
        let s2 = cd.s2().unwrap_or(0.0);
        if df - 2.0 <= 0.0 || !(s2 > 0.0) {
            return Err(JttError::InvalidArgument(format!(
                "MC_p undefined for cluster {}: n - p - 2 = {} and s^2 = {s2}",
                cd.index,
                df - 2.0
            )));
        }
        let r = cd.anchor_coordinates(anchor);
        let shift_sq = DVector::from_fn(cd.p(), |j, _| (cd.z[j] - cd.d[j] * r[j]).powi(2));
        Ok(McpTerms {
            d: cd.d.clone(),
            shift_sq,
            s2,
            resid_df: df,
            trace_factor: 2.0 * df / (df - 2.0),
        })
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let mut fit = 0.0;
        let mut shrink = 0.0;
        for (d, sq) in self.d.iter().zip(self.shift_sq.iter()) {
            let ratio = if lambda.is_infinite() {
                1.0
            } else {
                lambda / (d + lambda)
            };
            fit += ratio * ratio * sq;
            shrink += ratio;
        }
        self.resid_df + fit / self.s2 + self.trace_factor * (self.d.len() as f64 - shrink)
    }
}

/// MC_p in its spectral form.
pub fn mcp_criterion(cd: &ClusterDesign, anchor: &DVector<f64>, lambda: f64) -> Result<f64> {
    Ok(McpTerms::new(cd, anchor)?.eval(lambda))
}

/// Outcome of the per-cluster ridge search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub mcp: f64,
    /// Set when MC_p is undefined (`n - p - 2 <= 0`) and OLS was kept.
    pub undefined: bool,
}

/// Minimizes MC_p over `lam >= 0`: coarse geometric grid, golden-section
/// refinement in `log lam` around the best grid point, then comparison with
/// the `lam -> 0` boundary (OLS), which wins ties.
pub fn optimize_lambda(cd: &ClusterDesign, anchor: &DVector<f64>) -> LambdaChoice {
    let terms = match McpTerms::new(cd, anchor) {
        Ok(t) => t,
        Err(e) => {
            log::warn!("{e}; keeping least squares");
            return LambdaChoice {
                lambda: 0.0,
                mcp: f64::NAN,
                undefined: true,
            };
        }
    };
    let (lo, hi) = lambda_range(cd);
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    let step = (log_hi - log_lo) / (LAMBDA_GRID_POINTS - 1) as f64;
    let f = |t: f64| terms.eval(t.exp());

    let mut best = (0usize, f64::INFINITY);
    for i in 0..LAMBDA_GRID_POINTS {
        let v = f(log_lo + step * i as f64);
        if v < best.1 {
            best = (i, v);
        }
    }
    let a = log_lo + step * best.0.saturating_sub(1) as f64;
    let b = log_lo + step * (best.0 + 1).min(LAMBDA_GRID_POINTS - 1) as f64;
    let (t_ref, f_ref) = golden_section(&f, a, b, 1e-10, 200);
    let (t_best, f_best) = if f_ref < best.1 {
        (t_ref, f_ref)
    } else {
        (log_lo + step * best.0 as f64, best.1)
    };

    let f0 = terms.eval(0.0);
    if f0 <= f_best {
        LambdaChoice {
            lambda: 0.0,
            mcp: f0,
            undefined: false,
        }
    } else {
        LambdaChoice {
            lambda: t_best.exp(),
            mcp: f_best,
            undefined: false,
        }
    }
}

/// Search interval for the ridge parameter of a cluster.
pub fn lambda_range(cd: &ClusterDesign) -> (f64, f64) {
    let d_min = cd.d[cd.p() - 1];
    let d_max = cd.d[0];
    (d_min / LAMBDA_SPAN, d_max * LAMBDA_SPAN)
}

/// Golden-section minimization of a unimodal-on-bracket function.
fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum AlphaMode {
    Hat,
    Check,
    Explicit(f64),
}

impl AlphaMode {
    pub fn penalty(&self, data: &GroupDataset) -> Result<PenaltyParams> {
        let dims = data.dims();
        match *self {
            AlphaMode::Hat => gcp::alpha_hat(dims.resid_df, dims.p, dims.m, dims.n0),
            AlphaMode::Check => gcp::alpha_check(dims.p, dims.m, dims.n0),
            AlphaMode::Explicit(a) => PenaltyParams::explicit(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Jtt1,
    Jtt2,
    Both,
}

impl Variant {
    pub fn penalized(self) -> bool {
        matches!(self, Variant::Jtt2 | Variant::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterEstimate {
    pub cluster: usize,
    pub members: Vec<usize>,
    pub xi_ols: Vec<f64>,
    pub anchor: Option<Vec<f64>>,
    /// `D^{-1/2} V' b`, present iff the anchor is.
    #[serde(skip)]
    pub r: Option<Vec<f64>>,
    pub lambda_hat: f64,
    pub xi_pen: Vec<f64>,
    #[serde(skip)]
    pub mcp_undefined: bool,
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Timings {
    pub selection: f64,
    pub cluster_ols: f64,
    pub penalized: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub penalty: PenaltyParams,
    pub selection: SelectionResult,
    pub assignment: ClusterAssignment,
    pub cluster_graph: ClusterGraph,
    pub per_cluster: Vec<ClusterEstimate>,
    pub beta_jtt1: Vec<DVector<f64>>,
    pub beta_jtt2: Option<Vec<DVector<f64>>>,
    pub timings: Timings,
}

#[derive(Serialize)]
struct PerGroupBeta {
    jtt1: Vec<Vec<f64>>,
    jtt2: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    alpha: f64,
    clusters: &'a [Vec<usize>],
    per_cluster: &'a [ClusterEstimate],
    per_group_beta: PerGroupBeta,
}

impl FitResult {
    pub fn alpha(&self) -> f64 {
        self.penalty.alpha
    }

    /// `{alpha, clusters, per_cluster, per_group_beta: {jtt1, jtt2}}`.
    pub fn to_json(&self) -> String {
        let rows = |b: &[DVector<f64>]| b.iter().map(|v| v.as_slice().to_vec()).collect();
        let report = FitReport {
            alpha: self.penalty.alpha,
            clusters: self.assignment.clusters(),
            per_cluster: &self.per_cluster,
            per_group_beta: PerGroupBeta {
                jtt1: rows(&self.beta_jtt1),
                jtt2: self.beta_jtt2.as_deref().map(rows),
            },
        };
        serde_json::to_string_pretty(&report).expect("fit report is serializable")
    }
}

/// Cluster-wise estimates for a given partition. Phase one fits every
/// cluster by least squares; phase two (JTT2) builds anchors from the
/// phase-one estimates and tunes the ridge parameter per cluster.
pub fn estimate_clusters(
    data: &GroupDataset,
    graph: &GraphSpec,
    assignment: &ClusterAssignment,
    variant: Variant,
    timings: &mut Timings,
) -> Result<(ClusterGraph, Vec<ClusterEstimate>)> {
    let start = Instant::now();
    let cluster_graph = derive_cluster_edges(graph, assignment);
    let designs = (1..=assignment.m_hat())
        .into_par_iter()
        .map(|i| ClusterDesign::new(i, data, assignment.members(i)))
        .collect::<Result<Vec<_>>>()?;
    let xi_ols: Vec<DVector<f64>> = designs.par_iter().map(cluster_ols).collect();
    timings.cluster_ols = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let estimates = designs
        .par_iter()
        .zip(xi_ols.par_iter())
        .map(|(cd, xi)| {
            let mut est = ClusterEstimate {
                cluster: cd.index,
                members: cd.members.clone(),
                xi_ols: xi.as_slice().to_vec(),
                anchor: None,
                r: None,
                lambda_hat: 0.0,
                xi_pen: xi.as_slice().to_vec(),
                mcp_undefined: false,
            };
            if !variant.penalized() {
                return est;
            }
            if let Some(b) = weighted_anchor(cd.index, &xi_ols, &cluster_graph) {
                let choice = optimize_lambda(cd, &b);
                est.mcp_undefined = choice.undefined;
                est.lambda_hat = choice.lambda;
                if choice.lambda > 0.0 {
                    est.xi_pen = ridge_to_anchor(cd, &b, choice.lambda).as_slice().to_vec();
                }
                est.r = Some(cd.anchor_coordinates(&b).as_slice().to_vec());
                est.anchor = Some(b.as_slice().to_vec());
            }
            est
        })
        .collect();
    timings.penalized = if variant.penalized() {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok((cluster_graph, estimates))
}

/// Full pipeline: edge selection, clustering, cluster estimates and the
/// per-group coefficients they imply.
pub fn fit_jtt(data: &GroupDataset, graph: &GraphSpec, mode: AlphaMode, variant: Variant) -> Result<FitResult> {
    validate_dataset(data).into_result()?;
    let mut timings = Timings::default();
    let start = Instant::now();
    let penalty = mode.penalty(data)?;
    let fits = gcp::fit_groups(data)?;
    let selection = gcp::select_edges_with_fits(data, graph, &penalty, &fits)?;
    let assignment = connected_components(data.dims().m, &selection.selected());
    timings.selection = start.elapsed().as_secs_f64();

    let (cluster_graph, per_cluster) = estimate_clusters(data, graph, &assignment, variant, &mut timings)?;
    let expand = |pick: fn(&ClusterEstimate) -> &[f64]| -> Vec<DVector<f64>> {
        (1..=data.dims().m)
            .map(|v| DVector::from_column_slice(pick(&per_cluster[assignment.cluster_of(v) - 1])))
            .collect()
    };
    let beta_jtt1 = expand(|c| &c.xi_ols);
    let beta_jtt2 = variant.penalized().then(|| expand(|c| &c.xi_pen));
    Ok(FitResult {
        penalty,
        selection,
        assignment,
        cluster_graph,
        per_cluster,
        beta_jtt1,
        beta_jtt2,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design(rows: usize, cols: usize, vals: &[f64], y: &[f64]) -> ClusterDesign {
        ClusterDesign::from_parts(
            1,
            DMatrix::from_row_slice(rows, cols, vals),
            DVector::from_column_slice(y),
        )
        .unwrap()
    }

    #[test]
    fn svd_factors_reconstruct_design() {
        let cd = design(4, 2, &[1.0, 0.3, 1.0, -1.2, 1.0, 2.0, 1.0, 0.7], &[1.0, 2.0, 0.5, -1.0]);
        let rebuilt = &cd.u * DMatrix::from_diagonal(&cd.d.map(f64::sqrt)) * cd.v.transpose();
        assert_relative_eq!(rebuilt, cd.x, epsilon = 1e-12);
        assert!(cd.d[0] >= cd.d[1] && cd.d[1] > 0.0);
    }

    #[test]
    fn ridge_hand_example() {
        let cd = design(2, 1, &[1.0, 1.0], &[2.0, 4.0]);
        let xi = ridge_to_anchor(&cd, &DVector::zeros(1), 2.0);
        assert_relative_eq!(xi[0], 1.5, epsilon = 1e-14);
        assert_relative_eq!(cluster_ols(&cd)[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(ridge_to_anchor(&cd, &DVector::zeros(1), 0.0)[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn ridge_limit_is_anchor() {
        let cd = design(4, 2, &[1.0, 0.3, 1.0, -1.2, 1.0, 2.0, 1.0, 0.7], &[1.0, 2.0, 0.5, -1.0]);
        let b = DVector::from_vec(vec![5.0, -3.0]);
        let xi = ridge_to_anchor(&cd, &b, 1e12);
        assert!((xi - &b).norm() <= 1e-6 * b.norm());
        assert_eq!(ridge_to_anchor(&cd, &b, f64::INFINITY), b);
    }

    #[test]
    fn weights() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert_relative_eq!(edge_weight(&a, &b), 1.0 / 2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(
            edge_weight(&(&a * 2.0), &(&b * 2.0)),
            0.5 / 2f64.sqrt(),
            epsilon = 1e-14
        );
        let w = edge_weight(&a, &a);
        assert!(w.is_finite());
        assert_relative_eq!(w, 1.0 / (1e-12 * 3.0), max_relative = 1e-12);
    }

    #[test]
    fn anchors() {
        use crate::dataset::Edge;
        let xi = vec![
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![0.0, 2.0]),
            DVector::from_vec(vec![9.0, 9.0]),
        ];
        let f = ClusterGraph {
            f_edges: vec![Edge { k: 1, l: 2 }, Edge { k: 1, l: 3 }],
        };
        assert_eq!(weighted_anchor(1, &xi, &f).unwrap(), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(weighted_anchor(2, &xi, &f).unwrap(), xi[0]);
        assert!(weighted_anchor(4, &xi, &f).is_none());
    }

    #[test]
    fn mcp_boundaries() {
        let x: Vec<f64> = (0..24)
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0 + f64::from(i % 3 == 0))
            .collect();
        let y: Vec<f64> = (0..8).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let cd = design(8, 3, &x, &y);
        let b = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let (n, p) = (8.0, 3.0);
        let at0 = mcp_criterion(&cd, &b, 0.0).unwrap();
        assert_relative_eq!(at0, n - p + 2.0 * p * (n - p) / (n - p - 2.0), epsilon = 1e-12);
        let s2 = cd.s2().unwrap();
        let at_inf = mcp_criterion(&cd, &b, f64::INFINITY).unwrap();
        let far = (&cd.y - &cd.x * &b).norm_squared() / s2;
        assert_relative_eq!(at_inf, far, max_relative = 1e-12);
    }

    #[test]
    fn mcp_undefined_without_residual_df() {
        let cd = design(4, 2, &[1.0, 0.3, 1.0, -1.2, 1.0, 2.0, 1.0, 0.7], &[1.0, 2.0, 0.5, -1.0]);
        assert!(mcp_criterion(&cd, &DVector::zeros(2), 1.0).is_err());
        let c = optimize_lambda(&cd, &DVector::zeros(2));
        assert!(c.undefined && c.lambda == 0.0);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let (t, v) = golden_section(&|t: f64| (t - 1.25).powi(2) + 3.0, -4.0, 6.0, 1e-12, 500);
        assert!((t - 1.25).abs() < 1e-6);
        assert_relative_eq!(v, 3.0, epsilon = 1e-10);
    }
}
