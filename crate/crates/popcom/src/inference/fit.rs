//! The variational EM driver: coordinate-ascent sweeps over the auxiliary
//! scalars, the link responsibilities, the popularity posterior, and the
//! per-community activation posteriors, monitored by the lower bound until
//! its change falls below the tolerance.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::network::{in_link_index, ContentMatrix, Network};
use crate::parallel;

use super::bound::lower_bound;
use super::init::initial_means;
use super::newton::update_mean;
use super::state::{
    ActivationPosterior, FitConfig, FitResult, FitState, LinkAssignments, PopularityModel,
    GUARD_TRIP_LIMIT,
};
use super::updates::{
    compute_stats, extract_memberships, update_assignments, update_popularity, update_scalars,
};
use super::variance::update_variance;

/// One named coordinate update inside an iteration, reported to monitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStep {
    Scalars,
    Assignments,
    Popularity,
    Mean(usize),
    Variance(usize),
}

/// Fit the model. Deterministic given the config seed and inputs.
pub fn fit(
    network: &Network,
    content: &ContentMatrix,
    kernel: &KernelModel,
    cfg: &FitConfig,
) -> Result<FitResult> {
    fit_inner(network, content, kernel, cfg, None)
}

/// Fit while reporting the lower bound after every coordinate update. The
/// per-community solves run sequentially in this mode so each reported
/// value reflects exactly one update.
pub fn fit_monitored(
    network: &Network,
    content: &ContentMatrix,
    kernel: &KernelModel,
    cfg: &FitConfig,
    monitor: &mut dyn FnMut(UpdateStep, f64),
) -> Result<FitResult> {
    fit_inner(network, content, kernel, cfg, Some(monitor))
}

fn fit_inner(
    network: &Network,
    content: &ContentMatrix,
    kernel: &KernelModel,
    cfg: &FitConfig,
    mut monitor: Option<&mut dyn FnMut(UpdateStep, f64)>,
) -> Result<FitResult> {
    cfg.validate()?;
    let n = network.node_count();
    if kernel.node_count() != n || content.node_count() != n {
        return Err(Error::Input(format!(
            "sizes disagree: network {n}, kernel {}, content {}",
            kernel.node_count(),
            content.node_count()
        )));
    }
    let k = cfg.communities;
    let in_index = in_link_index(network);
    let mut trips = 0u64;

    // --- initial state
    let means = initial_means(content, k, cfg.seed, cfg.init);
    let pullbacks: Vec<DVector<f64>> =
        parallel::map_indexed(k, |c| kernel.prior_solve(&means[c]));
    let prior_diag = kernel.diag_in_eigenbasis(kernel.eigenvalues());
    let activations = ActivationPosterior {
        means,
        eig_vars: vec![kernel.eigenvalues().clone(); k],
        diag_vars: vec![prior_diag; k],
        pullbacks,
    };
    let assignments = LinkAssignments::uniform(network.link_count(), k);
    let popularity = if cfg.fixed_popularity {
        PopularityModel::Fixed
    } else {
        // seed the posterior with one exact update under unit popularity
        let (scalars0, t) = update_scalars(&PopularityModel::Fixed, &activations)?;
        trips += t;
        let (posterior, t) = update_popularity(
            network,
            &in_index,
            &assignments,
            &activations,
            &scalars0,
            cfg,
        )?;
        trips += t;
        PopularityModel::Learned(posterior)
    };
    let (scalars, t) = update_scalars(&popularity, &activations)?;
    trips += t;
    let mut state = FitState {
        popularity,
        assignments,
        activations,
        scalars,
    };

    let mut bound_prev = lower_bound(network, &state, kernel, cfg)?;
    let mut trace = vec![bound_prev];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iters {
        iterations = iter;

        let (scalars, t) = update_scalars(&state.popularity, &state.activations)?;
        trips += t;
        state.scalars = scalars;
        report(&mut monitor, UpdateStep::Scalars, network, &state, kernel, cfg)?;

        let (assignments, t) =
            update_assignments(network, &state.popularity, &state.activations, &state.scalars)?;
        trips += t;
        state.assignments = assignments;
        report(&mut monitor, UpdateStep::Assignments, network, &state, kernel, cfg)?;

        if !cfg.fixed_popularity {
            let (posterior, t) = update_popularity(
                network,
                &in_index,
                &state.assignments,
                &state.activations,
                &state.scalars,
                cfg,
            )?;
            trips += t;
            state.popularity = PopularityModel::Learned(posterior);
            report(&mut monitor, UpdateStep::Popularity, network, &state, kernel, cfg)?;
        }

        let stats = compute_stats(
            network,
            &in_index,
            &state.assignments,
            &state.popularity,
            &state.scalars,
            &state.activations,
        );

        if monitor.is_some() {
            // sequential per community so every reported bound isolates one update
            for c in 0..k {
                let solve = update_mean(
                    kernel,
                    &stats[c].link_mass,
                    &stats[c].exp_weight,
                    &stats[c].diag_var,
                    Some((&state.activations.means[c], &state.activations.pullbacks[c])),
                )?;
                trips += solve.guard_trips;
                state.activations.means[c] = solve.mean;
                state.activations.pullbacks[c] = solve.pullback;
                report(&mut monitor, UpdateStep::Mean(c), network, &state, kernel, cfg)?;

                let solve = update_variance(
                    kernel,
                    &stats[c].exp_weight,
                    &state.activations.means[c],
                    Some(&state.activations.eig_vars[c]),
                )?;
                trips += solve.guard_trips;
                state.activations.eig_vars[c] = solve.eig_vars;
                state.activations.diag_vars[c] = solve.diag_vars;
                report(&mut monitor, UpdateStep::Variance(c), network, &state, kernel, cfg)?;
            }
        } else {
            let solves: Vec<Result<_>> = parallel::map_indexed(k, |c| {
                let mean_solve = update_mean(
                    kernel,
                    &stats[c].link_mass,
                    &stats[c].exp_weight,
                    &stats[c].diag_var,
                    Some((&state.activations.means[c], &state.activations.pullbacks[c])),
                )?;
                let var_solve = update_variance(
                    kernel,
                    &stats[c].exp_weight,
                    &mean_solve.mean,
                    Some(&state.activations.eig_vars[c]),
                )?;
                Ok((mean_solve, var_solve))
            });
            for (c, solve) in solves.into_iter().enumerate() {
                let (mean_solve, var_solve) = solve.map_err(|e| match e {
                    Error::Numerical { context, message } => Error::Numerical {
                        context,
                        message: format!("community {c}, iteration {iter}: {message}"),
                    },
                    other => other,
                })?;
                trips += mean_solve.guard_trips + var_solve.guard_trips;
                state.activations.means[c] = mean_solve.mean;
                state.activations.pullbacks[c] = mean_solve.pullback;
                state.activations.eig_vars[c] = var_solve.eig_vars;
                state.activations.diag_vars[c] = var_solve.diag_vars;
            }
        }

        if trips > GUARD_TRIP_LIMIT {
            return Err(Error::numerical(
                "fit",
                format!("overflow guard tripped {trips} times by iteration {iter}"),
            ));
        }

        let bound = lower_bound(network, &state, kernel, cfg).map_err(|e| match e {
            Error::Numerical { context, message } => Error::Numerical {
                context,
                message: format!("iteration {iter}: {message}"),
            },
            other => other,
        })?;
        trace.push(bound);
        if (bound - bound_prev).abs() < cfg.tol {
            converged = true;
            bound_prev = bound;
            break;
        }
        bound_prev = bound;
    }
    let _ = bound_prev;

    let memberships = extract_memberships(&state.activations);
    Ok(FitResult {
        memberships,
        state,
        bound_trace: trace,
        iterations,
        converged,
        guard_trips: trips,
    })
}

fn report(
    monitor: &mut Option<&mut dyn FnMut(UpdateStep, f64)>,
    step: UpdateStep,
    network: &Network,
    state: &FitState,
    kernel: &KernelModel,
    cfg: &FitConfig,
) -> Result<()> {
    if let Some(mon) = monitor.as_deref_mut() {
        let b = lower_bound(network, state, kernel, cfg)?;
        mon(step, b);
    }
    Ok(())
}
