//! Clusters from selected edges: connected components and the induced
//! cluster-level graph.
//!
//! Clusters are numbered `1..=m_hat` in ascending order of their smallest
//! member vertex, so the labelling depends only on the vertex sets and not
//! on the order in which edges were merged.

use serde::{Deserialize, Serialize};

use crate::dataset::{Edge, GraphSpec};

/// Disjoint-set forest over `0..n` with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Returns `true` if the two elements were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Partition of the vertices `1..=m` into clusters `1..=m_hat`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    clusters: Vec<Vec<usize>>,
    #[serde(skip)]
    labels: Vec<usize>,
}

impl ClusterAssignment {
    /// Builds an assignment from explicit vertex sets covering `1..=m` exactly once.
    pub fn from_clusters(m: usize, sets: Vec<Vec<usize>>) -> Option<Self> {
        let mut labels = vec![0usize; m];
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return None;
            }
            for &v in set {
                if v == 0 || v > m || labels[v - 1] != 0 {
                    return None;
                }
                labels[v - 1] = i + 1;
            }
        }
        if labels.contains(&0) {
            return None;
        }
        Some(Self::canonical(&labels))
    }

    /// Relabels arbitrary per-vertex tags into smallest-member order.
    fn canonical(tags: &[usize]) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        let mut labels = Vec::with_capacity(tags.len());
        for (v, tag) in tags.iter().enumerate() {
            let next = clusters.len();
            let c = *remap.entry(*tag).or_insert(next);
            if c == next {
                clusters.push(Vec::new());
            }
            clusters[c].push(v + 1);
            labels.push(c + 1);
        }
        ClusterAssignment { clusters, labels }
    }

    pub fn m_hat(&self) -> usize {
        self.clusters.len()
    }

    /// Member vertices of every cluster, each sorted ascending.
    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    /// Members of the 1-based cluster `i`.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.clusters[i - 1]
    }

    /// 1-based cluster containing the 1-based `vertex`.
    pub fn cluster_of(&self, vertex: usize) -> usize {
        self.labels[vertex - 1]
    }

    pub fn m(&self) -> usize {
        self.labels.len()
    }

    /// Rebuilds the vertex map after deserialization.
    pub fn reindex(&mut self) {
        let m = self.clusters.iter().map(Vec::len).sum();
        let mut labels = vec![0; m];
        for (i, set) in self.clusters.iter().enumerate() {
            for &v in set {
                labels[v - 1] = i + 1;
            }
        }
        self.labels = labels;
    }
}

pub fn connected_components(m: usize, selected: &[Edge]) -> ClusterAssignment {
    let mut uf = UnionFind::new(m);
    for e in selected {
        uf.union(e.k - 1, e.l - 1);
    }
    let roots: Vec<usize> = (0..m).map(|v| uf.find(v)).collect();
    ClusterAssignment::canonical(&roots)
}

/// Cluster-level edge set induced by the original graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterGraph {
    pub f_edges: Vec<Edge>,
}

impl ClusterGraph {
    /// Clusters adjacent to cluster `i`.
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.f_edges.iter().filter_map(move |e| {
            if e.k == i {
                Some(e.l)
            } else if e.l == i {
                Some(e.k)
            } else {
                None
            }
        })
    }
}

pub fn derive_cluster_edges(g: &GraphSpec, a: &ClusterAssignment) -> ClusterGraph {
    let mut set = std::collections::BTreeSet::new();
    for e in g.edges() {
        let (ci, cj) = (a.cluster_of(e.k), a.cluster_of(e.l));
        if ci != cj {
            set.insert(Edge {
                k: ci.min(cj),
                l: ci.max(cj),
            });
        }
    }
    ClusterGraph {
        f_edges: set.into_iter().collect(),
    }
}
