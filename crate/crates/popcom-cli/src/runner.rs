use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};

use popcom::inference::{fit, hard_assignment, FitConfig, InitScheme};
use popcom::kernel::{build_covariance, KernelParams};
use popcom::metrics::{modularity, nmi, pwf, Partition};
use popcom::network::{save_linqs, ContentMatrix, Network};
use popcom::sampler::{make_separable_content, sample_network};

use crate::config::{derive_seed, GenerateSpec, SweepSpec};
use crate::report::{
    write_report, write_sweep, write_trace, DatasetSummary, FitSummary, MetricsSummary,
    ResolvedConfig, RunReport, SweepRow,
};

/// Inputs common to single runs and sweep points.
pub struct FitInputs {
    pub network: Network,
    pub content: ContentMatrix,
    pub dataset: DatasetSummary,
}

pub struct FitParams {
    pub k: usize,
    pub kernel: KernelParams,
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub fixed_popularity: bool,
}

impl FitParams {
    fn fit_config(&self) -> FitConfig {
        FitConfig {
            communities: self.k,
            prior_shape: self.prior_shape,
            prior_rate: self.prior_rate,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            fixed_popularity: self.fixed_popularity,
            init: InitScheme::ContentClusters,
        }
    }

    pub fn resolved(&self, mode: &str) -> ResolvedConfig {
        ResolvedConfig {
            mode: mode.to_string(),
            content: None,
            cites: None,
            generate: None,
            k: self.k,
            kernel: self.kernel,
            prior_shape: self.prior_shape,
            prior_rate: self.prior_rate,
            tol: self.tol,
            max_iters: self.max_iters,
            seed: self.seed,
            fixed_popularity: self.fixed_popularity,
        }
    }
}

pub struct SingleOutcome {
    pub report: RunReport,
    pub trace: Vec<f64>,
}

/// Fit once and assemble the report (no files written).
pub fn run_fit(inputs: &FitInputs, params: &FitParams, emit_gamma: bool) -> Result<SingleOutcome> {
    let start = Instant::now();
    let kernel = build_covariance(&inputs.content, &params.kernel)?;
    let mut warnings = Vec::new();
    if kernel.floored_eigenvalues() > 0 {
        warnings.push(format!(
            "{} eigenvalues floored at the jitter level",
            kernel.floored_eigenvalues()
        ));
    }
    let result = fit(&inputs.network, &inputs.content, &kernel, &params.fit_config())?;
    if result.guard_trips > 0 {
        warnings.push(format!(
            "exp overflow guard tripped {} times",
            result.guard_trips
        ));
    }
    if !result.converged {
        warnings.push(format!(
            "stopped at max_iters={} before the bound change fell below tol",
            params.max_iters
        ));
    }
    if let Some(dropped) = inputs.dataset.dropped_cites {
        if dropped > 0 {
            warnings.push(format!("{dropped} cites lines referenced unknown ids"));
        }
    }

    let predicted = hard_assignment(&result.memberships);
    let (nmi_score, pwf_score) = match inputs.network.labels() {
        Some(labels) => {
            let truth = Partition::from_labels(labels);
            (
                Some(nmi(&truth, &predicted)?),
                Some(pwf(&truth, &predicted)?),
            )
        }
        None => (None, None),
    };
    let modu = if inputs.network.link_count() > 0 {
        Some(modularity(&inputs.network, &predicted)?)
    } else {
        warnings.push("no links; modularity undefined".to_string());
        None
    };

    let gamma = emit_gamma.then(|| {
        (0..result.memberships.nrows())
            .map(|i| result.memberships.row(i).iter().copied().collect())
            .collect()
    });
    let report = RunReport {
        config: params.resolved("unset"),
        dataset: inputs.dataset.clone(),
        fit: FitSummary {
            iterations: result.iterations,
            converged: result.converged,
            final_bound: *result.bound_trace.last().expect("nonempty trace"),
            guard_trips: result.guard_trips,
        },
        metrics: MetricsSummary {
            nmi: nmi_score,
            pwf: pwf_score,
            modularity: modu,
        },
        assignment: predicted.assignment().to_vec(),
        gamma,
        warnings,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(SingleOutcome {
        trace: result.bound_trace,
        report,
    })
}

/// Single run: report JSON plus the bound trace CSV.
pub fn run_single(
    inputs: &FitInputs,
    params: &FitParams,
    config: ResolvedConfig,
    emit_gamma: bool,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut outcome = run_fit(inputs, params, emit_gamma)?;
    outcome.report.config = config;
    write_report(&outcome.report, &out_dir.join("report.json"))?;
    write_trace(&outcome.trace, &out_dir.join("bound_trace.csv"))?;
    Ok(())
}

/// Sweep: one fit per value with a derived seed, a summary CSV, and a
/// self-contained report per point. Failed points are recorded and the
/// sweep continues; the error is surfaced after the CSV is complete.
pub fn run_sweep(
    inputs: &FitInputs,
    base: &FitParams,
    sweep: &SweepSpec,
    config: ResolvedConfig,
    emit_gamma: bool,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (i, &value) in sweep.values.iter().enumerate() {
        let params = FitParams {
            kernel: sweep.param.apply(&base.kernel, value),
            seed: derive_seed(base.seed, i as u64),
            k: base.k,
            prior_shape: base.prior_shape,
            prior_rate: base.prior_rate,
            tol: base.tol,
            max_iters: base.max_iters,
            fixed_popularity: base.fixed_popularity,
        };
        match run_fit(inputs, &params, emit_gamma) {
            Ok(mut outcome) => {
                let mut point_config = config.clone();
                point_config.kernel = params.kernel;
                point_config.seed = params.seed;
                outcome.report.config = point_config;
                write_report(
                    &outcome.report,
                    &out_dir.join(format!("sweep_point_{i}.json")),
                )?;
                write_trace(
                    &outcome.trace,
                    &out_dir.join(format!("sweep_point_{i}_trace.csv")),
                )?;
                rows.push(SweepRow {
                    value,
                    nmi: outcome.report.metrics.nmi,
                    pwf: outcome.report.metrics.pwf,
                    modularity: outcome.report.metrics.modularity,
                    final_bound: Some(outcome.report.fit.final_bound),
                    status: "ok".to_string(),
                });
            }
            Err(e) => {
                failures += 1;
                rows.push(SweepRow {
                    value,
                    nmi: None,
                    pwf: None,
                    modularity: None,
                    final_bound: None,
                    status: format!("error: {e}"),
                });
            }
        }
    }
    write_sweep(&rows, &out_dir.join(format!("sweep_{}.csv", sweep.param.name())))?;
    if failures > 0 {
        bail!("{failures} of {} sweep points failed", sweep.values.len());
    }
    Ok(())
}

/// Emit a sampled dataset as a content/cites file pair plus the latent
/// truth as JSON.
pub fn run_generate(spec: &GenerateSpec, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;
    let (network, content, truth) = sample_dataset(spec)?;
    save_linqs(
        &network,
        &content,
        &out_dir.join("synthetic.content"),
        &out_dir.join("synthetic.cites"),
    )?;

    #[derive(serde::Serialize)]
    struct TruthFile<'a> {
        spec: &'a GenerateSpec,
        labels: Vec<usize>,
        popularity: Vec<f64>,
        memberships: Vec<Vec<f64>>,
        link_indicators: &'a [usize],
    }
    let truth_file = TruthFile {
        spec,
        labels: truth.labels(),
        popularity: truth.popularity.iter().copied().collect(),
        memberships: (0..truth.memberships.nrows())
            .map(|i| truth.memberships.row(i).iter().copied().collect())
            .collect(),
        link_indicators: &truth.indicators,
    };
    let file = std::fs::File::create(out_dir.join("synthetic_truth.json"))?;
    let mut out = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &truth_file)?;
    std::io::Write::write_all(&mut out, b"\n")?;
    Ok(())
}

/// Sample a network and its content from a generate spec.
pub fn sample_dataset(
    spec: &GenerateSpec,
) -> Result<(Network, ContentMatrix, popcom::sampler::LatentTruth)> {
    let (content, _) = make_separable_content(
        spec.model.nodes,
        spec.model.communities,
        spec.content.attrs,
        spec.content.separation,
        spec.content.seed,
    )?;
    let (network, truth) = sample_network(&spec.model, &content)?;
    Ok((network, content, truth))
}
