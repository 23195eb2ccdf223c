//! Synthetic benchmark: data generation, noncentrality diagnostics and the
//! Monte Carlo harness.
//!
//! Groups of equal size `n0` carry designs `X_j = (1, Z_j Psi(rho)^{1/2})`
//! with `Z_j` uniform on `(-1, 1)` and `Psi(rho)_{ij} = rho^{|i-j|}`. Groups
//! in true cluster `i` share the coefficient vector `nu * i * 1_p`, where `nu`
//! is calibrated so the signal-to-noise ratio over adjacent true clusters
//! hits a target.
//!
//! Randomness is keyed on the iteration seed (`base_seed + iteration`) and
//! on a per-group ChaCha stream, so results do not depend on how iterations
//! are scheduled across workers.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{complete_graph, Edge, GraphSpec, GroupData, GroupDataset};
use crate::error::{JttError, Result};
use crate::estimate::{fit_jtt, AlphaMode, Variant};
use crate::gcp::{self, joint_rss};
use crate::linalg;
use crate::partition::{derive_cluster_edges, ClusterAssignment};

const MAX_DESIGN_RETRIES: u64 = 16;

/// `Psi(rho)` and its symmetric square root.
#[derive(Debug, Clone)]
pub struct PsiMatrix {
    pub matrix: DMatrix<f64>,
    pub sqrt: DMatrix<f64>,
}

pub fn psi_matrix(rho: f64, dim: usize) -> Result<PsiMatrix> {
    if !(rho.abs() < 1.0) || dim == 0 {
        return Err(JttError::InvalidArgument(format!(
            "psi matrix needs |rho| < 1 and dim >= 1 (rho = {rho}, dim = {dim})"
        )));
    }
    let matrix = DMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32));
    let eig = SymmetricEigen::new(matrix.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let sqrt = &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose();
    Ok(PsiMatrix { matrix, sqrt })
}

/// Contiguous blocks of near-equal size; the lowest-indexed blocks take the remainder.
pub fn make_true_clusters(m: usize, ratio: f64) -> Result<Vec<Vec<usize>>> {
    let raw = ratio * m as f64;
    let m_star = raw.round();
    if !(ratio > 0.0 && ratio <= 1.0) || (raw - m_star).abs() > 1e-9 || m_star < 1.0 {
        return Err(JttError::NonIntegralClusters { ratio, m });
    }
    let m_star = m_star as usize;
    let (base, extra) = (m / m_star, m % m_star);
    let mut next = 1;
    Ok((0..m_star)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let block: Vec<usize> = (next..next + size).collect();
            next += size;
            block
        })
        .collect())
}

/// `1' Psi 1`.
fn psi_total(psi: &DMatrix<f64>) -> f64 {
    psi.sum()
}

/// `nu` such that the SNR over `f_star` equals `target` with cluster
/// coefficients `nu * i * 1_p`:
/// `SNR(nu) = nu^2 S_idx S_psi / (3 (p-1) #F*)`.
pub fn calibrate_nu(f_star: &[Edge], p: usize, rho: f64, target_snr: f64) -> Result<f64> {
    if f_star.is_empty() {
        return Err(JttError::InvalidArgument("SNR needs at least two true clusters".into()));
    }
    if p < 2 || !(target_snr > 0.0) {
        return Err(JttError::InvalidArgument(format!(
            "SNR needs p >= 2 and a positive target (p = {p})"
        )));
    }
    let s_psi = psi_total(&psi_matrix(rho, p - 1)?.matrix);
    let s_idx: f64 = f_star.iter().map(|e| ((e.l - e.k) as f64).powi(2)).sum();
    Ok((target_snr * 3.0 * (p - 1) as f64 * f_star.len() as f64 / (s_idx * s_psi)).sqrt())
}

/// SNR evaluated directly from cluster coefficient vectors (intercept dropped).
pub fn snr_direct(xi: &[DVector<f64>], f_star: &[Edge], psi: &DMatrix<f64>, sigma2: f64) -> f64 {
    let p = xi[0].len();
    let total: f64 = f_star
        .iter()
        .map(|e| {
            let theta = (&xi[e.k - 1] - &xi[e.l - 1]).rows(1, p - 1).into_owned();
            theta.dot(&(psi * &theta))
        })
        .sum();
    total / (3.0 * (p - 1) as f64 * f_star.len() as f64 * sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub m: usize,
    pub p: usize,
    pub n0: usize,
    /// `m* / m`; ignored when `partition` is given.
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<usize>>>,
    pub snr: f64,
    pub rho: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Multiplies the unit-variance noise; 0 gives noise-free responses.
    #[serde(default = "one")]
    pub noise_scale: f64,
    /// Thread count; results do not depend on it, so it is not serialized.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

fn one() -> f64 {
    1.0
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            m: 20,
            p: 20,
            n0: 200,
            ratio: 0.3,
            partition: None,
            snr: 3.0,
            rho: 0.5,
            iterations: 100,
            seed: 1,
            noise_scale: 1.0,
            workers: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(JttError::InvalidArgument(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2, got {}", self.m));
        }
        if self.p < 2 {
            return bad(format!(
                "p must be at least 2 (intercept plus covariates), got {}",
                self.p
            ));
        }
        if self.n0 < self.p {
            return bad(format!("n0 = {} must be at least p = {}", self.n0, self.p));
        }
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("worker count must be at least 1".into());
        }
        if !(self.snr > 0.0) || !(self.rho.abs() < 1.0) || !(self.noise_scale >= 0.0) {
            return bad("snr must be positive, |rho| < 1 and noise_scale >= 0".into());
        }
        self.true_clusters().map(|_| ())
    }

    pub fn true_clusters(&self) -> Result<Vec<Vec<usize>>> {
        match &self.partition {
            Some(sets) => ClusterAssignment::from_clusters(self.m, sets.clone())
                .map(|a| a.clusters().to_vec())
                .ok_or_else(|| JttError::InvalidArgument("partition does not cover 1..=m exactly once".into())),
            None => make_true_clusters(self.m, self.ratio),
        }
    }
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub m_star: usize,
    pub clusters: Vec<Vec<usize>>,
    /// Edges of the complete graph joining two groups of the same true cluster.
    pub true_edges: Vec<Edge>,
    /// Edges between true clusters.
    pub f_star: Vec<Edge>,
    pub nu: f64,
    pub sigma2: f64,
    /// `xi*_i`, one per true cluster.
    pub xi: Vec<Vec<f64>>,
    /// `beta*_j`, one per group.
    pub beta: Vec<Vec<f64>>,
}

impl TrueModel {
    pub fn from_config(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let clusters = cfg.true_clusters()?;
        let truth = ClusterAssignment::from_clusters(cfg.m, clusters.clone())
            .ok_or_else(|| JttError::InvalidArgument("invalid true partition".into()))?;
        let graph = complete_graph(cfg.m)?;
        let f_star = derive_cluster_edges(&graph, &truth).f_edges;
        let nu = calibrate_nu(&f_star, cfg.p, cfg.rho, cfg.snr)?;
        let xi: Vec<Vec<f64>> = (1..=clusters.len()).map(|i| vec![nu * i as f64; cfg.p]).collect();
        let beta = (1..=cfg.m).map(|v| xi[truth.cluster_of(v) - 1].clone()).collect();
        let true_edges = graph
            .edges()
            .iter()
            .copied()
            .filter(|e| truth.cluster_of(e.k) == truth.cluster_of(e.l))
            .collect();
        Ok(TrueModel {
            m_star: clusters.len(),
            clusters,
            true_edges,
            f_star,
            nu,
            sigma2: 1.0,
            xi,
            beta,
        })
    }

    pub fn beta_of(&self, vertex: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.beta[vertex - 1])
    }

    pub fn is_true_edge(&self, e: Edge) -> bool {
        self.true_edges.binary_search(&e).is_ok()
    }

    /// Builds a model for arbitrary per-group coefficients; groups with
    /// identical coefficients form one true cluster.
    pub fn from_coefficients(beta: Vec<Vec<f64>>, sigma2: f64) -> Self {
        let mut xi: Vec<Vec<f64>> = Vec::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for (j, b) in beta.iter().enumerate() {
            match xi.iter().position(|x| x == b) {
                Some(i) => clusters[i].push(j + 1),
                None => {
                    xi.push(b.clone());
                    clusters.push(vec![j + 1]);
                }
            }
        }
        let m = beta.len();
        let truth = ClusterAssignment::from_clusters(m, clusters.clone()).expect("clusters cover all groups");
        let mut true_edges = Vec::new();
        let mut f_star = std::collections::BTreeSet::new();
        for k in 1..=m {
            for l in k + 1..=m {
                let (ck, cl) = (truth.cluster_of(k), truth.cluster_of(l));
                if ck == cl {
                    true_edges.push(Edge { k, l });
                } else {
                    f_star.insert(Edge {
                        k: ck.min(cl),
                        l: ck.max(cl),
                    });
                }
            }
        }
        TrueModel {
            m_star: clusters.len(),
            clusters,
            true_edges,
            f_star: f_star.into_iter().collect(),
            nu: f64::NAN,
            sigma2,
            xi,
            beta,
        }
    }
}

fn group_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one replication. Designs use stream `2(j-1)` (shifted per retry),
/// noise uses stream `2(j-1)+1` of the iteration seed.
pub fn generate_dataset(cfg: &SimulationConfig, iteration_seed: u64) -> Result<(GroupDataset, TrueModel)> {
    let truth = TrueModel::from_config(cfg)?;
    let psi = psi_matrix(cfg.rho, cfg.p - 1)?;
    let groups = (1..=cfg.m)
        .map(|j| {
            let x = draw_design(cfg, &psi.sqrt, iteration_seed, j)?;
            let mut rng = group_rng(iteration_seed, 2 * (j as u64 - 1) + 1);
            let mean = &x * truth.beta_of(j);
            let y = DVector::from_fn(cfg.n0, |r, _| {
                let e: f64 = rng.sample(StandardNormal);
                mean[r] + cfg.noise_scale * e
            });
            GroupData::new(j, format!("g{j}"), y, x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((GroupDataset::new(groups)?, truth))
}

fn draw_design(cfg: &SimulationConfig, psi_sqrt: &DMatrix<f64>, seed: u64, j: usize) -> Result<DMatrix<f64>> {
    for attempt in 0..MAX_DESIGN_RETRIES {
        let stream = 2 * (j as u64 - 1) + attempt * 2 * cfg.m as u64;
        let mut rng = group_rng(seed, stream);
        let z = DMatrix::from_fn(cfg.n0, cfg.p - 1, |_, _| rng.random_range(-1.0..1.0));
        let cov = z * psi_sqrt;
        let x = DMatrix::from_fn(cfg.n0, cfg.p, |r, c| if c == 0 { 1.0 } else { cov[(r, c - 1)] });
        if linalg::numeric_rank(&x) == cfg.p {
            return Ok(x);
        }
    }
    Err(JttError::RankDeficient {
        context: format!("generated design of group {j}"),
        rank: 0,
        p: cfg.p,
    })
}

/// `delta_kl = eta'(I - P_kl)eta / sigma*^2`, from the joint RSS of the noiseless means.
pub fn noncentrality(d: &GroupDataset, truth: &TrueModel, edge: Edge) -> Result<f64> {
    let mean = |v: usize| {
        let g = d.group(v);
        GroupData::new(v, g.name.clone(), &g.x * truth.beta_of(v), g.x.clone())
    };
    Ok(joint_rss(&mean(edge.k)?, &mean(edge.l)?)? / truth.sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoncentralityRow {
    pub k: usize,
    pub l: usize,
    pub true_edge: bool,
    pub delta: f64,
    /// Smallest eigenvalue of `M_k (M_k + M_l)^{-1} M_l`.
    pub lambda_min: f64,
    /// `||beta*_k - beta*_l||^2`.
    pub gamma_sq: f64,
    /// `lambda_min * gamma_sq / sigma*^2`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoncentralityReport {
    pub rows: Vec<NoncentralityRow>,
    /// Minimum of `delta` over edges outside the true edge set.
    pub delta_min: Option<f64>,
    /// Whether `delta >= bound` (up to `1e-8 delta`) on every non-true edge.
    pub bound_holds: bool,
}

/// Noncentrality of every edge of `g` with the eigenvalue lower bound.
pub fn check_delta_min(d: &GroupDataset, truth: &TrueModel, g: &GraphSpec) -> Result<NoncentralityReport> {
    let grams: Vec<DMatrix<f64>> = d.groups().iter().map(|gr| gr.x.tr_mul(&gr.x)).collect();
    let rows = g
        .edges()
        .par_iter()
        .map(|&e| {
            let delta = noncentrality(d, truth, e)?;
            let (mk, ml) = (&grams[e.k - 1], &grams[e.l - 1]);
            let sum_inv = (mk + ml).try_inverse().ok_or_else(|| JttError::RankDeficient {
                context: format!("gram sum of edge ({}, {})", e.k, e.l),
                rank: 0,
                p: mk.ncols(),
            })?;
            let a = mk * sum_inv * ml;
            let a_sym = (&a + a.transpose()) * 0.5;
            let lambda_min = SymmetricEigen::new(a_sym).eigenvalues.min();
            let gamma_sq = (truth.beta_of(e.k) - truth.beta_of(e.l)).norm_squared();
            Ok(NoncentralityRow {
                k: e.k,
                l: e.l,
                true_edge: truth.is_true_edge(e),
                delta,
                lambda_min,
                gamma_sq,
                bound: lambda_min * gamma_sq / truth.sigma2,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let off: Vec<&NoncentralityRow> = rows.iter().filter(|r| !r.true_edge).collect();
    let delta_min = off.iter().map(|r| r.delta).min_by(f64::total_cmp);
    let bound_holds = off.iter().all(|r| r.delta - r.bound >= -1e-8 * r.delta.abs());
    Ok(NoncentralityReport {
        rows,
        delta_min,
        bound_holds,
    })
}

/// Group-wise OLS benchmark: `(m p / n, sum_j tr(M_j^{-1}) / (m p))`.
pub fn theoretical_baseline_mse(d: &GroupDataset) -> Result<(f64, f64)> {
    let dims = d.dims();
    let mp = (dims.m * dims.p) as f64;
    let fits = gcp::fit_groups(d)?;
    let trace: f64 = fits.iter().map(|f| f.inverse_gram_trace()).sum();
    Ok((mp / dims.n as f64, trace / mp))
}

/// Squared-error totals of one coefficient set against the truth.
fn errors(d: &GroupDataset, truth: &TrueModel, beta: &[DVector<f64>]) -> (f64, f64) {
    let dims = d.dims();
    let (mut fitted, mut coef) = (0.0, 0.0);
    for g in d.groups() {
        let diff = truth.beta_of(g.index) - &beta[g.index - 1];
        fitted += (&g.x * &diff).norm_squared();
        coef += diff.norm_squared();
    }
    (fitted / dims.n as f64, coef / (dims.m * dims.p) as f64)
}

/// Per-replication outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seed: u64,
    pub m_hat: usize,
    pub exact: bool,
    pub mse_f_jtt1: f64,
    pub mse_f_jtt2: f64,
    pub mse_c_jtt1: f64,
    pub mse_c_jtt2: f64,
    pub mse_f_ols: f64,
    pub mse_c_ols: f64,
    pub baseline_c: f64,
    #[serde(skip)]
    pub runtime_jtt1: f64,
    #[serde(skip)]
    pub runtime_jtt2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationFailure {
    pub iteration: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub mse_f: f64,
    pub mse_c: f64,
    pub rmse_f: f64,
    pub rmse_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Baseline {
    pub mse_f_theory: f64,
    pub mse_c_theory: f64,
    pub mse_f_empirical: f64,
    pub mse_c_empirical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub mean_jtt1_s: f64,
    pub mean_jtt2_s: f64,
    pub max_jtt2_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub m_star: usize,
    pub nu: f64,
    pub alpha: f64,
    pub completed: usize,
    /// Percentage of replications recovering the true partition exactly.
    pub accuracy: f64,
    pub mean_m_hat: f64,
    pub under_split: usize,
    pub over_split: usize,
    pub jtt1: MethodMetrics,
    pub jtt2: MethodMetrics,
    pub baseline: Baseline,
    pub failures: Vec<IterationFailure>,
    pub iterations: Vec<IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingStats>,
}

impl SimulationReport {
    /// Binomial standard error of the accuracy, in percent.
    pub fn accuracy_se(&self) -> f64 {
        let p = self.accuracy / 100.0;
        100.0 * (p * (1.0 - p) / self.completed.max(1) as f64).sqrt()
    }

    /// Pretty JSON; wall-clock timing is dropped unless requested so that
    /// reports are reproducible byte for byte.
    pub fn to_json(&self, include_timing: bool) -> String {
        let mut r = self.clone();
        if !include_timing {
            r.timing = None;
        }
        serde_json::to_string_pretty(&r).expect("report is serializable")
    }

    pub const TABLE_HEADER: &'static str = "m,n0,p,ratio,method,accuracy,rmse_f,rmse_c,runtime_s";

    /// Table rows (with header), one per estimator.
    pub fn table_csv(&self) -> String {
        let c = &self.config;
        let ratio = self.m_star as f64 / c.m as f64;
        let t = self.timing.unwrap_or(TimingStats {
            mean_jtt1_s: f64::NAN,
            mean_jtt2_s: f64::NAN,
            max_jtt2_s: f64::NAN,
            total_s: f64::NAN,
        });
        let row = |name: &str, mm: &MethodMetrics, rt: f64| {
            format!(
                "{},{},{},{},{},{:.1},{:.1},{:.1},{:.4}\n",
                c.m, c.n0, c.p, ratio, name, self.accuracy, mm.rmse_f, mm.rmse_c, rt
            )
        };
        let mut out = format!("{}\n", Self::TABLE_HEADER);
        out.push_str(&row("JTT1", &self.jtt1, t.mean_jtt1_s));
        out.push_str(&row("JTT2", &self.jtt2, t.mean_jtt2_s));
        out
    }
}

fn run_iteration(cfg: &SimulationConfig, graph: &GraphSpec, iteration: usize) -> Result<IterationRecord> {
    let seed = cfg.seed.wrapping_add(iteration as u64);
    let (data, truth) = generate_dataset(cfg, seed)?;
    let fit = fit_jtt(&data, graph, AlphaMode::Hat, Variant::Both)?;
    let exact = fit.assignment.clusters() == truth.clusters.as_slice();
    let (mse_f_jtt1, mse_c_jtt1) = errors(&data, &truth, &fit.beta_jtt1);
    let jtt2 = fit.beta_jtt2.as_deref().unwrap_or(&fit.beta_jtt1);
    let (mse_f_jtt2, mse_c_jtt2) = errors(&data, &truth, jtt2);
    let ols: Vec<DVector<f64>> = gcp::fit_groups(&data)?.into_iter().map(|f| f.beta_hat).collect();
    let (mse_f_ols, mse_c_ols) = errors(&data, &truth, &ols);
    let (_, baseline_c) = theoretical_baseline_mse(&data)?;
    let t = fit.timings;
    Ok(IterationRecord {
        iteration,
        seed,
        m_hat: fit.assignment.m_hat(),
        exact,
        mse_f_jtt1,
        mse_f_jtt2,
        mse_c_jtt1,
        mse_c_jtt2,
        mse_f_ols,
        mse_c_ols,
        baseline_c,
        runtime_jtt1: t.selection + t.cluster_ols,
        runtime_jtt2: t.selection + t.cluster_ols + t.penalized,
    })
}

/// Runs `cfg.iterations` independent replications (seeds `seed + i`) and
/// aggregates them in iteration order.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<SimulationReport> {
    let truth = TrueModel::from_config(cfg)?;
    let graph = complete_graph(cfg.m)?;
    let n = cfg.m * cfg.n0;
    let alpha = gcp::alpha_hat(n as i64 - (cfg.m * cfg.p) as i64, cfg.p, cfg.m, cfg.n0)?.alpha;

    let start = Instant::now();
    let work = || -> Vec<std::result::Result<IterationRecord, IterationFailure>> {
        (0..cfg.iterations)
            .into_par_iter()
            .map(|i| {
                run_iteration(cfg, &graph, i).map_err(|e| IterationFailure {
                    iteration: i,
                    seed: cfg.seed.wrapping_add(i as u64),
                    error: e.to_string(),
                })
            })
            .collect()
    };
    let outcomes = match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| JttError::InvalidArgument(format!("cannot build worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    let total_s = start.elapsed().as_secs_f64();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => {
                log::warn!("iteration {} failed: {}", f.iteration, f.error);
                failures.push(f);
            }
        }
    }
    let completed = records.len();
    let mean = |f: fn(&IterationRecord) -> f64| -> f64 { records.iter().map(f).sum::<f64>() / completed as f64 };
    let baseline = Baseline {
        mse_f_theory: (cfg.p as f64) / cfg.n0 as f64,
        mse_c_theory: mean(|r| r.baseline_c),
        mse_f_empirical: mean(|r| r.mse_f_ols),
        mse_c_empirical: mean(|r| r.mse_c_ols),
    };
    let metrics = |mse_f: f64, mse_c: f64| MethodMetrics {
        mse_f,
        mse_c,
        rmse_f: 100.0 * mse_f / baseline.mse_f_theory,
        rmse_c: 100.0 * mse_c / baseline.mse_c_theory,
    };
    let exact = records.iter().filter(|r| r.exact).count();
    let timing = TimingStats {
        mean_jtt1_s: mean(|r| r.runtime_jtt1),
        mean_jtt2_s: mean(|r| r.runtime_jtt2),
        max_jtt2_s: records.iter().map(|r| r.runtime_jtt2).fold(0.0, f64::max),
        total_s,
    };
    Ok(SimulationReport {
        config: cfg.clone(),
        m_star: truth.m_star,
        nu: truth.nu,
        alpha,
        completed,
        accuracy: 100.0 * exact as f64 / completed.max(1) as f64,
        mean_m_hat: mean(|r| r.m_hat as f64),
        under_split: records.iter().filter(|r| r.m_hat < truth.m_star).count(),
        over_split: records.iter().filter(|r| r.m_hat > truth.m_star).count(),
        jtt1: metrics(mean(|r| r.mse_f_jtt1), mean(|r| r.mse_c_jtt1)),
        jtt2: metrics(mean(|r| r.mse_f_jtt2), mean(|r| r.mse_c_jtt2)),
        baseline,
        failures,
        iterations: records,
        timing: Some(timing),
    })
}
