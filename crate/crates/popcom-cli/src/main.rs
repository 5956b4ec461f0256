//! Command-line driver: load or generate attributed citation networks, fit
//! the community model, sweep kernel parameters, and write machine-readable
//! reports.

mod config;
mod report;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use popcom::kernel::{KernelKind, KernelParams};
use popcom::network::load_linqs;

use config::{load_generate_spec, parse_sweep};
use report::DatasetSummary;
use runner::{run_generate, run_single, run_sweep, sample_dataset, FitInputs, FitParams};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Rbf,
    Linear,
}

#[derive(Parser, Debug)]
#[command(
    name = "popcom",
    about = "Popularity-aware community detection on attributed directed networks",
    after_help = "Modes:\n  \
      --content/--cites            fit a citation dataset\n  \
      --generate cfg.json          write a sampled dataset (content/cites/truth files)\n  \
      --generate cfg.json --k K    fit the sampled network instead of writing it\n  \
      add --sweep to either fit mode to grid one kernel parameter"
)]
struct Cli {
    /// Content table: `<id> <attr..> <label>` per line
    #[arg(long, requires = "cites")]
    content: Option<PathBuf>,
    /// Cites edge list: `<cited_id> <citing_id>` per line
    #[arg(long, requires = "content")]
    cites: Option<PathBuf>,
    /// Synthetic dataset config (JSON); see the README for the schema
    #[arg(long, conflicts_with_all = ["content", "cites"])]
    generate: Option<PathBuf>,
    /// Number of communities; defaults to the number of label classes
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value_t = KernelArg::Rbf)]
    kernel: KernelArg,
    /// Kernel output scale
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    /// RBF squared bandwidth
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Diagonal noise added to the kernel
    #[arg(long, default_value_t = 1e-5)]
    jitter: f64,
    /// Popularity prior shape
    #[arg(long, default_value_t = 1e-3)]
    a: f64,
    /// Popularity prior rate
    #[arg(long, default_value_t = 1e-3)]
    b: f64,
    /// Stop when the bound changes less than this between iterations
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Freeze every popularity at 1 (content-only ablation)
    #[arg(long)]
    fixed_popularity: bool,
    /// Sweep one kernel parameter: `theta=0.5,1,2` or `sigma2=1,5,10`
    #[arg(long)]
    sweep: Option<String>,
    /// Output directory
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Include the soft membership matrix in report JSON
    #[arg(long)]
    emit_gamma: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({
                "error": { "message": format!("{e:#}") }
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let kernel = KernelParams {
        kind: match cli.kernel {
            KernelArg::Rbf => KernelKind::Rbf,
            KernelArg::Linear => KernelKind::Linear,
        },
        theta: cli.theta,
        sigma2: cli.sigma2,
        jitter: cli.jitter,
    };

    let (inputs, mode, generate_path) = match (&cli.content, &cli.cites, &cli.generate) {
        (Some(content), Some(cites), None) => {
            let ds = load_linqs(content, cites)
                .with_context(|| "loading dataset".to_string())?;
            let dataset = DatasetSummary {
                nodes: ds.network.node_count(),
                links: ds.network.link_count(),
                attrs: ds.content.attr_count(),
                label_classes: ds.network.label_classes(),
                dropped_cites: Some(ds.dropped_cites),
            };
            (
                FitInputs {
                    network: ds.network,
                    content: ds.content,
                    dataset,
                },
                "dataset",
                None,
            )
        }
        (None, None, Some(path)) => {
            let spec = load_generate_spec(path)?;
            if cli.k.is_none() && cli.sweep.is_none() {
                return run_generate(&spec, &cli.out);
            }
            let (network, content, _) = sample_dataset(&spec)?;
            let dataset = DatasetSummary {
                nodes: network.node_count(),
                links: network.link_count(),
                attrs: content.attr_count(),
                label_classes: network.label_classes(),
                dropped_cites: None,
            };
            (
                FitInputs {
                    network,
                    content,
                    dataset,
                },
                "synthetic",
                Some(path.display().to_string()),
            )
        }
        _ => bail!("pass either --content with --cites, or --generate (see --help)"),
    };

    let k = match cli.k {
        Some(k) if k >= 1 => k,
        Some(k) => bail!("--k must be at least 1, got {k}"),
        None => inputs
            .dataset
            .label_classes
            .context("no labels in the dataset; pass --k")?,
    };

    let params = FitParams {
        k,
        kernel,
        prior_shape: cli.a,
        prior_rate: cli.b,
        tol: cli.tol,
        max_iters: cli.max_iters,
        seed: cli.seed,
        fixed_popularity: cli.fixed_popularity,
    };
    let mut resolved = params.resolved(mode);
    resolved.content = cli.content.as_ref().map(|p| p.display().to_string());
    resolved.cites = cli.cites.as_ref().map(|p| p.display().to_string());
    resolved.generate = generate_path;

    match &cli.sweep {
        Some(text) => {
            let sweep = parse_sweep(text)?;
            run_sweep(&inputs, &params, &sweep, resolved, cli.emit_gamma, &cli.out)
        }
        None => run_single(&inputs, &params, resolved, cli.emit_gamma, &cli.out),
    }
}
