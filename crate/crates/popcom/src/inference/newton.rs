//! Newton solver for a community's activation mean.
//!
//! Maximizes the concave objective
//! `link_mass . m - qhat . exp(m) - 0.5 * m' C^{-1} m` where
//! `qhat = exp_weight * exp(diag_var / 2)`. Each step works through the
//! well-conditioned system `B = I + W^{1/2} C W^{1/2}` so the prior inverse
//! is never formed; the solver carries the pullback `u = C^{-1} m` along
//! with the mean, which also yields the quadratic form as `m . u`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::parallel;

use super::state::guarded_exp;

pub(crate) const MAX_NEWTON_ITERS: usize = 50;
pub(crate) const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone)]
pub struct MeanSolve {
    pub mean: DVector<f64>,
    /// Prior-inverse image of the mean (`mean = C * pullback`).
    pub pullback: DVector<f64>,
    pub iterations: usize,
    pub guard_trips: u64,
}

fn objective(
    link_mass: &DVector<f64>,
    qhat: &DVector<f64>,
    mean: &DVector<f64>,
    pullback: &DVector<f64>,
    trips: &mut u64,
) -> f64 {
    let mut value = 0.0;
    for i in 0..mean.len() {
        value += link_mass[i] * mean[i] - qhat[i] * guarded_exp(mean[i], trips);
    }
    value - 0.5 * mean.dot(pullback)
}

/// Solve for the activation mean of one community, warm-startable with a
/// previous `(mean, pullback)` pair. Converged when the gradient norm falls
/// below `1e-6 * max(1, |link_mass|)`.
pub fn update_mean(
    kernel: &KernelModel,
    link_mass: &DVector<f64>,
    exp_weight: &DVector<f64>,
    diag_var: &DVector<f64>,
    warm: Option<(&DVector<f64>, &DVector<f64>)>,
) -> Result<MeanSolve> {
    let n = kernel.node_count();
    if link_mass.len() != n || exp_weight.len() != n || diag_var.len() != n {
        return Err(Error::Input("statistic length mismatch".into()));
    }
    if exp_weight.iter().any(|q| !(*q >= 0.0)) {
        return Err(Error::Input("exp weights must be nonnegative".into()));
    }
    let mut trips = 0u64;
    let qhat =
        DVector::from_fn(n, |i, _| exp_weight[i] * guarded_exp(0.5 * diag_var[i], &mut trips));

    let (mut mean, mut pullback) = match warm {
        Some((m, u)) => (m.clone(), u.clone()),
        None => (DVector::zeros(n), DVector::zeros(n)),
    };
    let gradient_tol = 1e-6 * link_mass.norm().max(1.0);
    let mut value = objective(link_mass, &qhat, &mean, &pullback, &mut trips);
    let covariance = kernel.covariance();

    for iter in 0..MAX_NEWTON_ITERS {
        let exp_mean = mean.map(|m| guarded_exp(m, &mut trips));
        let gradient = DVector::from_fn(n, |i, _| {
            link_mass[i] - qhat[i] * exp_mean[i] - pullback[i]
        });
        if gradient.norm() <= gradient_tol {
            return Ok(MeanSolve {
                mean,
                pullback,
                iterations: iter,
                guard_trips: trips,
            });
        }

        let weights = DVector::from_fn(n, |i, _| qhat[i] * exp_mean[i]);
        let sqrt_w = weights.map(f64::sqrt);

        let mut data = vec![0.0f64; n * n];
        parallel::for_each_chunk_mut(&mut data, n, |col, out| {
            let c_col = covariance.column(col);
            let wc = sqrt_w[col];
            for (row, slot) in out.iter_mut().enumerate() {
                *slot = sqrt_w[row] * c_col[row] * wc;
            }
            out[col] += 1.0;
        });
        let damped = DMatrix::from_vec(n, n, data);
        let chol = damped.cholesky().ok_or_else(|| {
            Error::numerical("update_mean", "damped system is not positive definite")
        })?;

        // full Newton target expressed through the pullback
        let rhs = DVector::from_fn(n, |i, _| {
            weights[i] * mean[i] + link_mass[i] - qhat[i] * exp_mean[i]
        });
        let c_rhs = covariance * &rhs;
        let scaled = DVector::from_fn(n, |i, _| sqrt_w[i] * c_rhs[i]);
        let solved = chol.solve(&scaled);
        let pullback_target = DVector::from_fn(n, |i, _| rhs[i] - sqrt_w[i] * solved[i]);
        let mean_target = covariance * &pullback_target;

        // backtrack toward the Newton target until the objective does not
        // decrease; the (mean, pullback) pair stays linearly consistent
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_BACKTRACKS {
            let mean_t = &mean + (&mean_target - &mean) * alpha;
            let pullback_t = &pullback + (&pullback_target - &pullback) * alpha;
            let value_t = objective(link_mass, &qhat, &mean_t, &pullback_t, &mut trips);
            if value_t.is_finite() && value_t >= value {
                mean = mean_t;
                pullback = pullback_t;
                value = value_t;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // no float-representable ascent left in this direction
            break;
        }
    }

    let exp_mean = mean.map(|m| guarded_exp(m, &mut trips));
    let gradient = DVector::from_fn(n, |i, _| {
        link_mass[i] - qhat[i] * exp_mean[i] - pullback[i]
    });
    if gradient.norm() <= gradient_tol {
        Ok(MeanSolve {
            mean,
            pullback,
            iterations: MAX_NEWTON_ITERS,
            guard_trips: trips,
        })
    } else {
        Err(Error::numerical(
            "update_mean",
            format!(
                "no convergence after {MAX_NEWTON_ITERS} iterations \
                 (gradient norm {:.3e}, tolerance {:.3e})",
                gradient.norm(),
                gradient_tol
            ),
        ))
    }
}
