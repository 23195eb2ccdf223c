//! Join-two-together (JTT) clustering of group-wise linear regression models.
//!
//! Every edge `(k, l)` of a relationship graph over `m` regression groups is
//! scored by comparing a generalized C_p criterion for the model where all
//! groups have their own coefficients against the model in which groups `k`
//! and `l` share one coefficient vector. Edges whose merged model is not
//! worse are kept, and the connected components of the kept edges are the
//! clusters. After clustering, coefficients are re-estimated either by
//! cluster-wise least squares (JTT1) or by ridge shrinkage toward a weighted
//! average of neighbouring clusters with the shrinkage chosen per cluster by
//! a modified C_p criterion (JTT2).
//!
//! The crate also contains the Monte Carlo harness used to benchmark
//! clustering accuracy and relative MSE, and a slow explicit-projection
//! reference implementation ([`oracle`]) used by the test suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod estimate;
pub mod gcp;
mod linalg;
pub mod oracle;
pub mod partition;
pub mod simulate;

pub use dataset::{
    complete_graph, load_dataset, load_graph, validate_dataset, Dims, Edge, GraphSpec, GroupData, GroupDataset,
    ValidationReport,
};
pub use error::{JttError, Result};
pub use estimate::{fit_jtt, AlphaMode, ClusterDesign, ClusterEstimate, FitResult, Variant};
pub use gcp::{alpha_check, alpha_hat, group_ols, select_edges, EdgeScore, GroupFit, PenaltyParams, SelectionResult};
pub use partition::{connected_components, derive_cluster_edges, ClusterAssignment, ClusterGraph};
pub use simulate::{generate_dataset, run_monte_carlo, SimulationConfig, SimulationReport, TrueModel};
