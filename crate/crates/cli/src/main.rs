//! `jtt`: fit grouped regressions by edge selection, run the simulation
//! benchmark, and inspect noncentrality diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use jtt_core::simulate::{check_delta_min, generate_dataset, NoncentralityReport};
use jtt_core::{
    complete_graph, fit_jtt, load_dataset, load_graph, run_monte_carlo, AlphaMode, FitResult, GraphSpec, GroupDataset,
    SimulationConfig, TrueModel, Variant,
};

#[derive(Debug, Parser)]
#[command(
    name = "jtt",
    version,
    about = "Join-two-together clustering of grouped linear regressions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select edges, cluster the groups and estimate cluster coefficients.
    Fit(FitArgs),
    /// Run the Monte Carlo benchmark.
    Simulate(SimulateArgs),
    /// Report noncentrality parameters for a simulated or supplied instance.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AlphaArg(AlphaMode);

impl FromStr for AlphaArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hat" | "auto-hat" => Ok(AlphaArg(AlphaMode::Hat)),
            "check" | "auto-check" => Ok(AlphaArg(AlphaMode::Check)),
            other => match other.parse::<f64>() {
                Ok(a) if a > 0.0 && a.is_finite() => Ok(AlphaArg(AlphaMode::Explicit(a))),
                Ok(a) => Err(format!("alpha must be a positive finite number, got {a}")),
                Err(_) => Err(format!("expected `hat`, `check` or a positive number, got {other:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Jtt1,
    Jtt2,
    Both,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Jtt1 => Variant::Jtt1,
            VariantArg::Jtt2 => Variant::Jtt2,
            VariantArg::Both => Variant::Both,
        }
    }
}

#[derive(Debug, Args)]
struct WorkerArgs {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "JTT_WORKERS", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset: a JSON manifest or a long CSV (`group,y,x1,...`).
    #[arg(long)]
    data: PathBuf,
    /// Headerless CSV of vertex pairs; the complete graph when omitted.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// `hat`, `check` or an explicit positive value.
    #[arg(long, default_value = "hat")]
    alpha: AlphaArg,
    #[arg(long, value_enum, default_value_t = VariantArg::Both)]
    variant: VariantArg,
    /// Output JSON path; a `<stem>_clusters.csv` summary is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 20)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 200)]
    n0: usize,
    /// Number of true clusters divided by m.
    #[arg(long, default_value_t = 0.3)]
    ratio: f64,
    #[arg(long, default_value_t = 3.0)]
    snr: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SimArgs {
    fn config(&self, iterations: usize, workers: Option<u32>) -> SimulationConfig {
        SimulationConfig {
            m: self.m,
            p: self.p,
            n0: self.n0,
            ratio: self.ratio,
            partition: None,
            snr: self.snr,
            rho: self.rho,
            iterations,
            seed: self.seed,
            noise_scale: 1.0,
            workers: workers.map(|w| w as usize),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    /// Include wall-clock statistics in the JSON report.
    #[arg(long)]
    timing: bool,
    /// Output JSON path; a `<stem>_table.csv` is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Supplied dataset; requires `--truth`. A simulated instance otherwise.
    #[arg(long, requires = "truth")]
    data: Option<PathBuf>,
    /// JSON `{"beta": [[...], ...], "sigma2": 1.0}` with one row per group.
    #[arg(long, requires = "data")]
    truth: Option<PathBuf>,
    #[arg(long)]
    edges: Option<PathBuf>,
    #[command(flatten)]
    sim: SimArgs,
    /// Simulate noise-free responses.
    #[arg(long)]
    noise_free: bool,
    /// Output JSON path; a `<stem>_delta.csv` table is written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    workers: WorkerArgs,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TruthFile {
    beta: Vec<Vec<f64>>,
    #[serde(default = "unit")]
    sigma2: f64,
}

fn unit() -> f64 {
    1.0
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn init_workers(w: &WorkerArgs) -> Result<()> {
    if let Some(n) = w.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("cannot configure worker pool")?;
    }
    Ok(())
}

fn load_edges(path: Option<&Path>, m: usize) -> Result<GraphSpec> {
    Ok(match path {
        Some(p) => {
            if !p.exists() {
                bail!("edge file not found: {}", p.display());
            }
            load_graph(p, m)?
        }
        None => complete_graph(m)?,
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_{suffix}.csv"))
}

/// Writes every file or none.
fn write_outputs(files: &[(PathBuf, String)]) -> Result<()> {
    for (i, (path, text)) in files.iter().enumerate() {
        if let Err(e) = fs::write(path, text) {
            for (done, _) in &files[..i] {
                let _ = fs::remove_file(done);
            }
            return Err(e).with_context(|| format!("cannot write {}", path.display()));
        }
    }
    Ok(())
}

fn emit(out: Option<&Path>, json: String, suffix: &str, table: String) -> Result<()> {
    match out {
        Some(path) => write_outputs(&[(path.to_path_buf(), json + "\n"), (sibling(path, suffix), table)]),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cluster_csv(fit: &FitResult) -> String {
    let mut out = String::from("cluster,size,members,lambda_hat\n");
    for c in &fit.per_cluster {
        let members: Vec<String> = c.members.iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.cluster,
            c.members.len(),
            members.join(" "),
            c.lambda_hat
        ));
    }
    out
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    init_workers(&a.workers)?;
    if !a.data.exists() {
        bail!("data file not found: {}", a.data.display());
    }
    let data = load_dataset(&a.data)?;
    let graph = load_edges(a.edges.as_deref(), data.dims().m)?;
    let fit = fit_jtt(&data, &graph, a.alpha.0, a.variant.into())?;
    log::info!("alpha = {}, {} clusters", fit.alpha(), fit.assignment.m_hat());
    emit(a.out.as_deref(), fit.to_json(), "clusters", cluster_csv(&fit))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = a.sim.config(a.iters as usize, a.workers.workers);
    cfg.validate()?;
    let report = run_monte_carlo(&cfg)?;
    if !report.failures.is_empty() {
        log::warn!("{} of {} iterations failed", report.failures.len(), cfg.iterations);
    }
    emit(a.out.as_deref(), report.to_json(a.timing), "table", report.table_csv())
}

fn delta_csv(r: &NoncentralityReport) -> String {
    let mut out = String::from("k,l,true_edge,delta,lambda_min,gamma_sq,bound\n");
    for row in &r.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.k, row.l, row.true_edge, row.delta, row.lambda_min, row.gamma_sq, row.bound
        ));
    }
    out
}

fn supplied_instance(data: &Path, truth: &Path) -> Result<(GroupDataset, TrueModel)> {
    let d = load_dataset(data)?;
    let text = fs::read_to_string(truth).with_context(|| format!("cannot read {}", truth.display()))?;
    let t: TruthFile =
        serde_json::from_str(&text).with_context(|| format!("malformed truth file {}", truth.display()))?;
    let dims = d.dims();
    if t.beta.len() != dims.m || t.beta.iter().any(|b| b.len() != dims.p) {
        bail!(
            "truth file {} must hold {} coefficient rows of length {}",
            truth.display(),
            dims.m,
            dims.p
        );
    }
    if !(t.sigma2 > 0.0) {
        bail!("sigma2 must be positive");
    }
    Ok((d, TrueModel::from_coefficients(t.beta, t.sigma2)))
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<()> {
    init_workers(&a.workers)?;
    let (data, truth) = match (&a.data, &a.truth) {
        (Some(d), Some(t)) => supplied_instance(d, t)?,
        _ => {
            let mut cfg = a.sim.config(1, None);
            if a.noise_free {
                cfg.noise_scale = 0.0;
            }
            generate_dataset(&cfg, cfg.seed)?
        }
    };
    let graph = load_edges(a.edges.as_deref(), data.dims().m)?;
    let report = check_delta_min(&data, &truth, &graph)?;
    let json = serde_json::to_string_pretty(&report)?;
    emit(a.out.as_deref(), json, "delta", delta_csv(&report))
}
