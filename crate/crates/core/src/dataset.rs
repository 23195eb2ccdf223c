//! Group-wise regression data and the relationship graph over groups.
//!
//! Vertex ids are 1-based everywhere, including every serialized format.
//!
//! Two on-disk layouts are accepted by [`load_dataset`]:
//!
//! * a JSON manifest, either
//!   `{"add_intercept": true, "groups": [{"name": "A", "path": "a.csv"}, ...]}`
//!   where each group CSV has a header row, the response in the first column
//!   and design columns after it, or
//!   `{"add_intercept": true, "long_csv": "data.csv"}`;
//! * a long CSV (`group,y,x1,...,xk`, header required) given directly.
//!
//! Relative paths in a manifest resolve against the manifest's directory.
//! With `add_intercept` a column of ones is prepended to every design.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{JttError, Result};
use crate::linalg;

/// An undirected edge `(k, l)` with `1 <= k < l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub k: usize,
    pub l: usize,
}

impl Edge {
    /// Normalizes the pair so that `k < l`; rejects self-loops and vertex 0.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a == b {
            return Err(JttError::SelfLoop(a));
        }
        let (k, l) = if a < b { (a, b) } else { (b, a) };
        if k == 0 {
            return Err(JttError::VertexOutOfRange { vertex: 0, m: l });
        }
        Ok(Edge { k, l })
    }
}

/// One regression group: response `y` (length `n_j`) and design `x` (`n_j x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    pub index: usize,
    pub name: String,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl GroupData {
    pub fn new(index: usize, name: impl Into<String>, y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let name = name.into();
        if y.is_empty() {
            return Err(JttError::EmptyGroup(name));
        }
        if y.len() != x.nrows() {
            return Err(JttError::Dimensions(format!(
                "group {name}: response has {} rows but design has {}",
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(JttError::Dimensions(format!("group {name}: design has no columns")));
        }
        Ok(GroupData { index, name, y, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Global dimensions: `m` groups, `p` coefficients, `n` total observations,
/// `resid_df = N = n - m p` and `n0 = min_j n_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub resid_df: i64,
    pub n0: usize,
}

impl Dims {
    pub fn resid_df_f64(&self) -> f64 {
        self.resid_df as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDataset {
    groups: Vec<GroupData>,
    dims: Dims,
}

impl GroupDataset {
    /// Builds a dataset; groups are re-indexed `1..=m` in the given order.
    pub fn new(mut groups: Vec<GroupData>) -> Result<Self> {
        let first = groups
            .first()
            .ok_or_else(|| JttError::Dimensions("dataset has no groups".into()))?;
        let p = first.p();
        for g in &groups {
            if g.p() != p {
                return Err(JttError::ColumnMismatch {
                    group: g.name.clone(),
                    expected: p,
                    found: g.p(),
                });
            }
        }
        for (i, g) in groups.iter_mut().enumerate() {
            g.index = i + 1;
        }
        let m = groups.len();
        let n: usize = groups.iter().map(GroupData::n).sum();
        let n0 = groups.iter().map(GroupData::n).min().unwrap_or(0);
        let dims = Dims {
            m,
            p,
            n,
            resid_df: n as i64 - (m * p) as i64,
            n0,
        };
        Ok(GroupDataset { groups, dims })
    }

    pub fn groups(&self) -> &[GroupData] {
        &self.groups
    }

    /// Group by 1-based vertex id.
    pub fn group(&self, vertex: usize) -> &GroupData {
        &self.groups[vertex - 1]
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Same designs with every response replaced by `f(index, y)`.
    pub fn map_responses(&self, mut f: impl FnMut(usize, &DVector<f64>) -> DVector<f64>) -> Self {
        let groups = self
            .groups
            .iter()
            .map(|g| GroupData {
                y: f(g.index, &g.y),
                ..g.clone()
            })
            .collect();
        GroupDataset {
            groups,
            dims: self.dims,
        }
    }

    /// Canonical long-format CSV: header `group,y,x1..xp`, one row per observation.
    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("group,y");
        for c in 1..=self.dims.p {
            let _ = write!(out, ",x{c}");
        }
        out.push('\n');
        for g in &self.groups {
            for r in 0..g.n() {
                let _ = write!(out, "{},{}", g.name, g.y[r]);
                for c in 0..g.p() {
                    let _ = write!(out, ",{}", g.x[(r, c)]);
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Per-group outcome of [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCheck {
    pub index: usize,
    pub name: String,
    pub n: usize,
    pub rank: usize,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub groups: Vec<GroupCheck>,
    pub dims: Dims,
    pub problems: Vec<String>,
    pub passed: bool,
}

impl ValidationReport {
    /// Turns a failing report into an error naming the first problem.
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(JttError::Dimensions(self.problems.join("; ")))
        }
    }
}

/// Checks `m >= 2`, `n_j >= p`, full column rank of every design and `N - 4 > 0`.
pub fn validate_dataset(d: &GroupDataset) -> ValidationReport {
    let dims = d.dims();
    let mut problems = Vec::new();
    if dims.m < 2 {
        problems.push(format!("m >= 2 violated (m = {})", dims.m));
    }
    let groups: Vec<GroupCheck> = d
        .groups()
        .iter()
        .map(|g| {
            let rank = linalg::numeric_rank(&g.x);
            let ok = g.n() >= g.p() && rank == g.p();
            if g.n() < g.p() {
                problems.push(format!("group {} has n_j = {} < p = {}", g.name, g.n(), g.p()));
            } else if rank < g.p() {
                problems.push(format!(
                    "group {} is rank deficient (rank {} < p = {})",
                    g.name,
                    rank,
                    g.p()
                ));
            }
            GroupCheck {
                index: g.index,
                name: g.name.clone(),
                n: g.n(),
                rank,
                ok,
            }
        })
        .collect();
    if dims.resid_df - 4 <= 0 {
        problems.push(format!("N-4>0 violated (N = {})", dims.resid_df));
    }
    ValidationReport {
        passed: problems.is_empty(),
        groups,
        dims,
        problems,
    }
}

/// Vertex count plus a sorted, duplicate-free edge list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    m: usize,
    edges: Vec<Edge>,
}

impl GraphSpec {
    /// Normalizes every pair to `k < l`, deduplicates and sorts lexicographically.
    pub fn new(m: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            let e = Edge::new(a, b)?;
            if e.l > m {
                return Err(JttError::VertexOutOfRange { vertex: e.l, m });
            }
            set.insert(e);
        }
        Ok(GraphSpec {
            m,
            edges: set.into_iter().collect(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn q(&self) -> usize {
        self.edges.len()
    }

    /// Headerless `k,l` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{},{}", e.k, e.l);
        }
        out
    }
}

/// All pairs `(k, l)`, `k < l`, in lexicographic order.
pub fn complete_graph(m: usize) -> Result<GraphSpec> {
    if m < 2 {
        return Err(JttError::InvalidArgument(format!(
            "complete graph needs m >= 2, got {m}"
        )));
    }
    let edges = (1..=m).flat_map(|k| (k + 1..=m).map(move |l| Edge { k, l })).collect();
    Ok(GraphSpec { m, edges })
}

/// Reads a headerless CSV of vertex pairs.
pub fn load_graph(path: &Path, m: usize) -> Result<GraphSpec> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut pairs = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() != 2 {
            return Err(JttError::Dimensions(format!(
                "{}:{}: expected 2 columns, found {}",
                path.display(),
                row + 1,
                rec.len()
            )));
        }
        let parse = |c: usize| -> Result<usize> {
            rec[c].parse::<usize>().map_err(|_| JttError::NonNumeric {
                location: format!("{}:{}:{}", path.display(), row + 1, c + 1),
                value: rec[c].to_string(),
            })
        };
        pairs.push((parse(0)?, parse(1)?));
    }
    GraphSpec::new(m, pairs)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    add_intercept: bool,
    #[serde(default)]
    groups: Vec<ManifestGroup>,
    long_csv: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
struct ManifestGroup {
    name: String,
    path: PathBuf,
}

/// Loads a dataset from a JSON manifest (`.json`) or a long CSV (anything else).
pub fn load_dataset(path: &Path) -> Result<GroupDataset> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if !is_json {
        return load_long_csv(path, false);
    }
    let text = read_text(path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|source| JttError::Manifest {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    match (&manifest.long_csv, manifest.groups.is_empty()) {
        (Some(long), true) => load_long_csv(&base.join(long), manifest.add_intercept),
        (None, false) => {
            let groups = manifest
                .groups
                .iter()
                .enumerate()
                .map(|(i, g)| load_group_csv(i + 1, &g.name, &base.join(&g.path), manifest.add_intercept))
                .collect::<Result<Vec<_>>>()?;
            GroupDataset::new(groups)
        }
        _ => Err(JttError::InvalidArgument(format!(
            "{}: manifest must list either `groups` or `long_csv`",
            path.display()
        ))),
    }
}

fn load_group_csv(index: usize, name: &str, path: &Path, add_intercept: bool) -> Result<GroupData> {
    let rows = read_numeric_rows(path, 0)?;
    let (y, x) = rows_to_design(name, rows.into_iter().map(|(_, r)| r).collect(), add_intercept)?;
    GroupData::new(index, name, y, x)
}

fn load_long_csv(path: &Path, add_intercept: bool) -> Result<GroupDataset> {
    let rows = read_numeric_rows(path, 1)?;
    let mut order: Vec<String> = Vec::new();
    let mut buckets: Vec<Vec<Vec<f64>>> = Vec::new();
    for (label, values) in rows {
        let label = label.unwrap_or_default();
        let slot = match order.iter().position(|g| *g == label) {
            Some(i) => i,
            None => {
                order.push(label);
                buckets.push(Vec::new());
                order.len() - 1
            }
        };
        buckets[slot].push(values);
    }
    let groups = order
        .into_iter()
        .zip(buckets)
        .enumerate()
        .map(|(i, (name, rows))| {
            let (y, x) = rows_to_design(&name, rows, add_intercept)?;
            GroupData::new(i + 1, name, y, x)
        })
        .collect::<Result<Vec<_>>>()?;
    GroupDataset::new(groups)
}

/// Reads a headed CSV; the first `label_cols` (0 or 1) columns are kept as text.
fn read_numeric_rows(path: &Path, label_cols: usize) -> Result<Vec<(Option<String>, Vec<f64>)>> {
    if !path.exists() {
        return Err(JttError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let label = (label_cols == 1).then(|| rec.get(0).unwrap_or_default().to_string());
        let values = rec
            .iter()
            .enumerate()
            .skip(label_cols)
            .map(|(c, cell)| {
                cell.parse::<f64>().map_err(|_| JttError::NonNumeric {
                    location: format!("{}:{}:{}", path.display(), row + 2, c + 1),
                    value: cell.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push((label, values));
    }
    Ok(out)
}

fn rows_to_design(name: &str, rows: Vec<Vec<f64>>, add_intercept: bool) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if rows.is_empty() {
        return Err(JttError::EmptyGroup(name.to_string()));
    }
    let width = rows[0].len();
    if width < 2 && !(add_intercept && width == 1) {
        return Err(JttError::Dimensions(format!(
            "group {name}: need a response and at least one design column"
        )));
    }
    let offset = usize::from(add_intercept);
    let p = width - 1 + offset;
    let n = rows.len();
    let y = DVector::from_iterator(n, rows.iter().map(|r| r[0]));
    let x = DMatrix::from_fn(n, p, |r, c| {
        if add_intercept && c == 0 {
            1.0
        } else {
            rows[r][c + 1 - offset]
        }
    });
    Ok((y, x))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| JttError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_error(path: &Path, source: csv::Error) -> JttError {
    if let csv::ErrorKind::Io(_) = source.kind() {
        let csv::ErrorKind::Io(io) = source.into_kind() else {
            unreachable!()
        };
        return JttError::Io {
            path: path.to_path_buf(),
            source: io,
        };
    }
    JttError::Csv {
        path: path.to_path_buf(),
        source,
    }
}
