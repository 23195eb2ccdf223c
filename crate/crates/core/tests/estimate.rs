mod common;

use approx::assert_relative_eq;
use common::{instance, normal_vector, relative_error, rng};
use jtt_core::estimate::{
    cluster_ols, lambda_range, mcp_criterion, optimize_lambda, ridge_to_anchor, weighted_anchor, ClusterDesign,
};
use jtt_core::gcp::group_ols;
use jtt_core::oracle::direct_mcp;
use jtt_core::{complete_graph, fit_jtt, AlphaMode, ClusterGraph, Edge, GroupData, GroupDataset, Variant};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_cluster(r: &mut impl Rng, n: usize, p: usize) -> (ClusterDesign, DVector<f64>) {
    let x = common::design(r, n, p);
    let truth = normal_vector(r, p);
    let y = &x * &truth + normal_vector(r, n);
    let cd = ClusterDesign::from_parts(1, x, y).unwrap();
    let b = &truth + normal_vector(r, p) * r.random_range(0.05..2.0);
    (cd, b)
}

#[test]
fn singleton_cluster_matches_group_ols() {
    let mut r = rng(31);
    let d = instance(&mut r, 3, 4, (10, 20), 1.0, |_| DVector::from_element(4, 1.0));
    for j in 1..=3 {
        let cd = ClusterDesign::new(j, &d, &[j]).unwrap();
        let ols = group_ols(d.group(j)).unwrap().beta_hat;
        assert!((cluster_ols(&cd) - ols).amax() < 1e-10);
    }
}

#[test]
fn replicated_groups_give_the_group_estimate() {
    let mut r = rng(32);
    let x = common::design(&mut r, 9, 3);
    let y = normal_vector(&mut r, 9);
    let groups = vec![
        GroupData::new(1, "a", y.clone(), x.clone()).unwrap(),
        GroupData::new(2, "b", y, x).unwrap(),
    ];
    let d = GroupDataset::new(groups).unwrap();
    let cd = ClusterDesign::new(1, &d, &[1, 2]).unwrap();
    let ols = group_ols(d.group(1)).unwrap().beta_hat;
    assert!((cluster_ols(&cd) - ols).amax() < 1e-10);
}

#[test]
fn stacked_cluster_matches_normal_equations() {
    let mut r = rng(33);
    for _ in 0..20 {
        let (cd, _) = random_cluster(&mut r, 25, 4);
        let normal = cd.x.tr_mul(&cd.x).try_inverse().unwrap() * cd.x.tr_mul(&cd.y);
        assert!((cluster_ols(&cd) - &normal).amax() <= 1e-9 * (1.0 + normal.amax()));
        assert!((&cd.u * DMatrix::from_diagonal(&cd.d.map(f64::sqrt)) * cd.v.transpose() - &cd.x).amax() < 1e-8);
    }
}

#[test]
fn ridge_matches_regularized_normal_equations() {
    let mut r = rng(34);
    for _ in 0..20 {
        let (cd, b) = random_cluster(&mut r, 20, 3);
        for lam in [0.01, 1.0, 37.0] {
            let p = cd.p();
            let lhs = cd.x.tr_mul(&cd.x) + DMatrix::identity(p, p) * lam;
            let expected = lhs.try_inverse().unwrap() * (cd.x.tr_mul(&cd.y) + &b * lam);
            assert!((ridge_to_anchor(&cd, &b, lam) - expected).amax() < 1e-9);
        }
    }
}

#[test]
fn ridge_path_stays_between_ols_and_anchor_in_rotated_basis() {
    let mut r = rng(35);
    let (cd, b) = random_cluster(&mut r, 30, 4);
    let ols = cd.v.tr_mul(&cluster_ols(&cd));
    let anchor = cd.v.tr_mul(&b);
    let mut prev = ols.clone();
    for k in -6..=6 {
        let lam = 10f64.powi(k);
        let t = cd.v.tr_mul(&ridge_to_anchor(&cd, &b, lam));
        for j in 0..cd.p() {
            let (lo, hi) = (ols[j].min(anchor[j]), ols[j].max(anchor[j]));
            assert!(t[j] >= lo - 1e-10 && t[j] <= hi + 1e-10);
            assert!((t[j] - anchor[j]).abs() <= (prev[j] - anchor[j]).abs() + 1e-10);
        }
        prev = t;
    }
}

#[test]
fn trace_of_hat_matrix_decreases() {
    let mut r = rng(36);
    let (cd, _) = random_cluster(&mut r, 30, 5);
    let trace = |lam: f64| cd.d.iter().map(|d| d / (d + lam)).sum::<f64>();
    assert_relative_eq!(trace(0.0), 5.0);
    let mut prev = trace(0.0);
    for k in -8..=12 {
        let t = trace(10f64.powi(k));
        assert!(t < prev);
        prev = t;
    }
    assert!(prev < 1e-6);
}

#[test]
fn mcp_forms_agree() {
    let mut r = rng(37);
    for _ in 0..20 {
        let n = r.random_range(10..40);
        let p = r.random_range(1..=5).min(n - 5);
        let (cd, b) = random_cluster(&mut r, n, p);
        for k in 0..20 {
            let lam = 10f64.powf(-4.0 + 0.4 * k as f64);
            let spectral = mcp_criterion(&cd, &b, lam).unwrap();
            let direct = direct_mcp(&cd.x, &cd.y, &b, lam).unwrap();
            assert!(relative_error(spectral, direct) <= 1e-8, "{spectral} vs {direct}");
        }
    }
}

fn dense_grid_min(cd: &ClusterDesign, b: &DVector<f64>) -> f64 {
    let (lo, hi) = lambda_range(cd);
    let steps = 10_000;
    let mut best = direct_mcp(&cd.x, &cd.y, b, 0.0).unwrap();
    for i in 0..steps {
        let lam = (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (steps - 1) as f64).exp();
        best = best.min(direct_mcp(&cd.x, &cd.y, b, lam).unwrap());
    }
    best
}

#[test]
fn anchor_at_least_squares_pushes_lambda_up() {
    let mut r = rng(38);
    let (cd, _) = random_cluster(&mut r, 30, 3);
    let ols = cluster_ols(&cd);
    let mut prev = f64::INFINITY;
    for k in -4..=8 {
        let v = mcp_criterion(&cd, &ols, 10f64.powi(k)).unwrap();
        assert!(v < prev);
        prev = v;
    }
    let choice = optimize_lambda(&cd, &ols);
    assert!(choice.lambda >= lambda_range(&cd).1 * 0.99);
    assert!(choice.mcp <= dense_grid_min(&cd, &ols) * 1.01);
}

#[test]
fn distant_anchor_keeps_lambda_small() {
    let mut r = rng(39);
    let (cd, _) = random_cluster(&mut r, 200, 3);
    let b = DVector::from_element(3, 1e4);
    let choice = optimize_lambda(&cd, &b);
    assert!(choice.lambda <= 1e-3 * cd.d[cd.p() - 1], "lambda {}", choice.lambda);
    assert!(choice.mcp <= dense_grid_min(&cd, &b) * 1.01);
}

#[test]
fn weighted_anchor_midpoint() {
    let xi = vec![
        DVector::from_vec(vec![0.0, 0.0]),
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![-1.0, 2.0]),
    ];
    let f = ClusterGraph {
        f_edges: vec![Edge { k: 1, l: 2 }, Edge { k: 1, l: 3 }, Edge { k: 2, l: 3 }],
    };
    let b = weighted_anchor(3, &xi, &f).unwrap();
    // distances sqrt(5) and sqrt(8) from cluster 3
    let (w1, w2) = (1.0 / 5f64.sqrt(), 1.0 / 8f64.sqrt());
    let expected = (&xi[0] * w1 + &xi[1] * w2) / (w1 + w2);
    assert_relative_eq!(b, expected, epsilon = 1e-14);
}

#[test]
fn near_noise_free_two_clusters_are_recovered() {
    let mut r = rng(40);
    let a = DVector::from_vec(vec![1.0, 2.0, -1.0]);
    let b = DVector::from_vec(vec![-3.0, 0.5, 4.0]);
    let d = instance(&mut r, 6, 3, (30, 30), 1e-12, |j| {
        if j <= 3 {
            a.clone()
        } else {
            b.clone()
        }
    });
    let g = complete_graph(6).unwrap();
    let fit = fit_jtt(&d, &g, AlphaMode::Hat, Variant::Both).unwrap();
    assert_eq!(fit.assignment.clusters(), [vec![1, 2, 3], vec![4, 5, 6]]);
    for j in 1..=6 {
        let truth = if j <= 3 { &a } else { &b };
        assert!((&fit.beta_jtt1[j - 1] - truth).amax() < 1e-8);
    }
}

#[test]
fn empty_selection_uses_group_ols_and_anchors_everywhere() {
    let mut r = rng(41);
    let d = instance(&mut r, 4, 2, (20, 20), 1.0, |j| DVector::from_element(2, j as f64));
    let g = complete_graph(4).unwrap();
    let fit = fit_jtt(&d, &g, AlphaMode::Explicit(1e-12), Variant::Both).unwrap();
    assert_eq!(fit.assignment.m_hat(), 4);
    for j in 1..=4 {
        let ols = group_ols(d.group(j)).unwrap().beta_hat;
        assert!((&fit.beta_jtt1[j - 1] - ols).amax() < 1e-10);
    }
    assert!(fit.per_cluster.iter().all(|c| c.anchor.is_some()));
}

#[test]
fn variants_coincide_where_lambda_is_zero() {
    let mut r = rng(42);
    for _ in 0..5 {
        let d = instance(&mut r, 6, 3, (12, 30), 1.0, |j| {
            DVector::from_element(3, (j % 3) as f64)
        });
        let g = complete_graph(6).unwrap();
        let fit = fit_jtt(&d, &g, AlphaMode::Hat, Variant::Both).unwrap();
        let jtt2 = fit.beta_jtt2.as_ref().unwrap();
        for c in &fit.per_cluster {
            assert!(c.lambda_hat >= 0.0);
            assert!(c.lambda_hat == 0.0 || c.anchor.is_some());
            for &v in &c.members {
                assert_eq!(fit.beta_jtt1[v - 1].as_slice(), c.xi_ols.as_slice());
                assert_eq!(jtt2[v - 1].as_slice(), c.xi_pen.as_slice());
            }
            if c.lambda_hat == 0.0 {
                assert_eq!(c.xi_pen, c.xi_ols);
            }
        }
    }
}

#[test]
fn isolated_cluster_keeps_least_squares() {
    let mut r = rng(43);
    let d = instance(&mut r, 3, 2, (20, 20), 1.0, |j| DVector::from_element(2, j as f64));
    let g = jtt_core::GraphSpec::new(3, [(1, 2)]).unwrap();
    let fit = fit_jtt(&d, &g, AlphaMode::Explicit(1e-12), Variant::Jtt2).unwrap();
    let third = &fit.per_cluster[2];
    assert!(third.anchor.is_none());
    assert_eq!(third.lambda_hat, 0.0);
    assert_eq!(third.xi_pen, third.xi_ols);
}

#[test]
fn fit_result_json_schema() {
    let mut r = rng(44);
    let d = instance(&mut r, 4, 2, (20, 20), 1.0, |j| {
        DVector::from_element(2, (j / 3) as f64)
    });
    let fit = fit_jtt(&d, &complete_graph(4).unwrap(), AlphaMode::Check, Variant::Jtt1).unwrap();
    let v: serde_json::Value = serde_json::from_str(&fit.to_json()).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["alpha", "clusters", "per_cluster", "per_group_beta"]);
    assert!(v["per_group_beta"]["jtt2"].is_null());
    assert_eq!(v["per_group_beta"]["jtt1"].as_array().unwrap().len(), 4);
    for key in ["xi_ols", "lambda_hat", "xi_pen"] {
        assert!(v["per_cluster"][0].get(key).is_some());
    }
}
