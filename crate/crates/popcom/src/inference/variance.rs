//! Solver for a community's covariance, restricted to the prior eigenbasis.
//!
//! With the covariance constrained to share the prior's eigenvectors, only
//! the per-direction weights remain. The objective
//! `-qtilde . exp(s/2) + 0.5 * sum(log lambda - lambda / prior)` couples the
//! weights through the diagonal `s = Vsq * lambda`, so each pass freezes the
//! diagonal, solves every coordinate's stationarity exactly
//! (`lambda_j = 1 / (1/prior_j + a_j)`), and backtracks the vector step on
//! the exact objective. A fixed point of the pass is a stationary point of
//! the coupled problem.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::KernelModel;

use super::state::guarded_exp;

pub(crate) const MAX_VARIANCE_PASSES: usize = 100;
pub(crate) const MAX_BACKTRACKS: usize = 30;

/// Stationarity residual at which a pass is considered converged.
const RESIDUAL_TOL: f64 = 1e-9;
/// Residual accepted when float arithmetic cannot improve the objective.
const RESIDUAL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct VarianceSolve {
    /// Posterior weights on the prior eigen-directions, all positive.
    pub eig_vars: DVector<f64>,
    /// Marginal variances implied by the weights.
    pub diag_vars: DVector<f64>,
    pub passes: usize,
    pub guard_trips: u64,
}

fn objective(
    kernel: &KernelModel,
    qtilde: &DVector<f64>,
    eig_vars: &DVector<f64>,
    trips: &mut u64,
) -> f64 {
    let diag = kernel.diag_in_eigenbasis(eig_vars);
    let prior = kernel.eigenvalues();
    let mut value = 0.0;
    for i in 0..diag.len() {
        value -= qtilde[i] * guarded_exp(0.5 * diag[i], trips);
    }
    for j in 0..eig_vars.len() {
        value += 0.5 * (eig_vars[j].ln() - eig_vars[j] / prior[j]);
    }
    value
}

/// Exact line maximization of the objective along `direction` from the
/// current weights. The directional derivative needs only
/// `<rates(alpha), Vsq * direction>` plus prior terms, so each evaluation
/// is O(n) once the smeared direction is computed. Returns the step, with
/// positivity of the weights preserved.
#[allow(clippy::too_many_arguments)]
fn line_maximize(
    kernel: &KernelModel,
    qtilde: &DVector<f64>,
    prior: &DVector<f64>,
    eig_vars: &DVector<f64>,
    direction: &DVector<f64>,
    diag: &DVector<f64>,
    trips: &mut u64,
) -> f64 {
    let n = eig_vars.len();
    let smeared = kernel.eigvec_sq() * direction;
    // largest step keeping every weight positive (the target itself is
    // positive, so alpha = 1 is always admissible)
    let mut alpha_max = 8.0f64;
    for j in 0..n {
        if direction[j] < 0.0 {
            alpha_max = alpha_max.min(-0.999_999 * eig_vars[j] / direction[j]);
        }
    }
    alpha_max = alpha_max.max(1.0);

    let slope = |alpha: f64, trips: &mut u64| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let r = qtilde[i] * guarded_exp(0.5 * (diag[i] + alpha * smeared[i]), trips);
            acc -= r * smeared[i];
        }
        for j in 0..n {
            acc += direction[j] * (1.0 / (eig_vars[j] + alpha * direction[j]) - 1.0 / prior[j]);
        }
        0.5 * acc
    };

    if slope(alpha_max, trips) >= 0.0 {
        return alpha_max;
    }
    let (mut lo, mut hi) = (0.0f64, alpha_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if slope(mid, trips) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * alpha_max {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maximize the objective over a multiplicative rescaling of the current
/// weights: `phi(c) = -sum_i qtilde_i e^{c s_i / 2} + 0.5 (n ln c - c T)`
/// with `T = sum_j lambda_j / prior_j`, strictly concave in `c`. Solved by
/// Newton with bisection safeguards on `phi'`.
fn best_rescale(
    kernel: &KernelModel,
    qtilde: &DVector<f64>,
    eig_vars: &DVector<f64>,
    prior: &DVector<f64>,
    trips: &mut u64,
) -> Option<f64> {
    let n = eig_vars.len() as f64;
    let diag = kernel.diag_in_eigenbasis(eig_vars);
    let trace: f64 = eig_vars
        .iter()
        .zip(prior.iter())
        .map(|(l, s)| l / s)
        .sum();
    let slope = |c: f64, trips: &mut u64| -> f64 {
        let mut acc = 0.0;
        for i in 0..diag.len() {
            acc -= 0.5 * qtilde[i] * diag[i] * guarded_exp(0.5 * c * diag[i], trips);
        }
        acc + 0.5 * (n / c - trace)
    };
    // phi'(c) is strictly decreasing; bracket a sign change around 1
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    if slope(1.0, trips) > 0.0 {
        for _ in 0..60 {
            hi *= 2.0;
            if slope(hi, trips) <= 0.0 {
                break;
            }
            lo = hi;
        }
        if slope(hi, trips) > 0.0 {
            return None;
        }
    } else {
        for _ in 0..60 {
            lo *= 0.5;
            if slope(lo, trips) >= 0.0 {
                break;
            }
            hi = lo;
        }
        if slope(lo, trips) < 0.0 {
            return None;
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..80 {
        let s = slope(c, trips);
        if s > 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        c = 0.5 * (lo + hi);
        if hi - lo < 1e-12 * c {
            break;
        }
    }
    if c.is_finite() && c > 0.0 {
        Some(c)
    } else {
        None
    }
}

/// Scale-free stationarity residual: `|lambda_j * (1/prior_j + a_j) - 1|`
/// maximized over coordinates, together with its argmax.
fn residual(
    prior: &DVector<f64>,
    coupling: &DVector<f64>,
    eig_vars: &DVector<f64>,
) -> (f64, usize) {
    let mut worst = 0.0;
    let mut arg = 0;
    for j in 0..eig_vars.len() {
        let r = (eig_vars[j] * (1.0 / prior[j] + coupling[j]) - 1.0).abs();
        if r > worst {
            worst = r;
            arg = j;
        }
    }
    (worst, arg)
}

/// Solve for one community's eigenbasis variance weights given the
/// exp-weight statistic and the current mean. Defaults to starting from the
/// prior weights.
pub fn update_variance(
    kernel: &KernelModel,
    exp_weight: &DVector<f64>,
    mean: &DVector<f64>,
    init: Option<&DVector<f64>>,
) -> Result<VarianceSolve> {
    let n = kernel.node_count();
    if exp_weight.len() != n || mean.len() != n {
        return Err(Error::Input("statistic length mismatch".into()));
    }
    let mut trips = 0u64;
    let qtilde = DVector::from_fn(n, |i, _| exp_weight[i] * guarded_exp(mean[i], &mut trips));
    if qtilde.iter().any(|q| !(*q >= 0.0) || !q.is_finite()) {
        return Err(Error::Input("exp weights must be nonnegative".into()));
    }

    let prior = kernel.eigenvalues();
    let mut eig_vars = match init {
        Some(l) => {
            if l.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Input("initial weights must be positive".into()));
            }
            l.clone()
        }
        None => prior.clone(),
    };
    let mut value = objective(kernel, &qtilde, &eig_vars, &mut trips);

    for pass in 1..=MAX_VARIANCE_PASSES {
        let diag = kernel.diag_in_eigenbasis(&eig_vars);
        let rates = DVector::from_fn(n, |i, _| qtilde[i] * guarded_exp(0.5 * diag[i], &mut trips));
        // coupling a_j = sum_i rates_i * Vsq_ij
        let coupling = kernel.eigvec_sq().tr_mul(&rates);
        let (res, _) = residual(prior, &coupling, &eig_vars);
        if res <= RESIDUAL_TOL {
            return Ok(VarianceSolve {
                diag_vars: kernel.diag_in_eigenbasis(&eig_vars),
                eig_vars,
                passes: pass - 1,
                guard_trips: trips,
            });
        }

        // coordinate-exact solve of the frozen-diagonal stationarity; the
        // target is strictly inside (0, prior] and the move toward it is an
        // ascent direction, maximized exactly along the line
        let target = DVector::from_fn(n, |j, _| 1.0 / (1.0 / prior[j] + coupling[j]));
        let direction = &target - &eig_vars;
        let alpha = line_maximize(
            kernel, &qtilde, prior, &eig_vars, &direction, &diag, &mut trips,
        );
        let mut accepted = false;
        let mut step = alpha;
        for _ in 0..=MAX_BACKTRACKS {
            if step <= 0.0 {
                break;
            }
            let probe = &eig_vars + &direction * step;
            let value_t = objective(kernel, &qtilde, &probe, &mut trips);
            if value_t.is_finite() && value_t >= value {
                eig_vars = probe;
                value = value_t;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        // the diagonal map averages (the squared-eigenvector matrix is
        // doubly stochastic), so the uniform direction converges slowly;
        // an exact scalar rescale removes it at O(n) per slope evaluation
        if let Some(scale) = best_rescale(kernel, &qtilde, &eig_vars, prior, &mut trips) {
            let probe = &eig_vars * scale;
            let value_t = objective(kernel, &qtilde, &probe, &mut trips);
            if value_t.is_finite() && value_t > value {
                eig_vars = probe;
                value = value_t;
            }
        }
    }

    let diag = kernel.diag_in_eigenbasis(&eig_vars);
    let rates = DVector::from_fn(n, |i, _| qtilde[i] * guarded_exp(0.5 * diag[i], &mut trips));
    let coupling = kernel.eigvec_sq().tr_mul(&rates);
    let (res, arg) = residual(prior, &coupling, &eig_vars);
    if res <= RESIDUAL_FLOOR {
        Ok(VarianceSolve {
            diag_vars: diag,
            eig_vars,
            passes: MAX_VARIANCE_PASSES,
            guard_trips: trips,
        })
    } else {
        Err(Error::numerical(
            "update_variance",
            format!(
                "no convergence after {MAX_VARIANCE_PASSES} passes \
                 (residual {res:.3e} at coordinate {arg})"
            ),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_covariance, KernelParams};
    use crate::network::ContentMatrix;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn small_kernel(n: usize, seed: u64) -> KernelModel {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let content = ContentMatrix::from_columns(3, &cols).unwrap();
        build_covariance(&content, &KernelParams::default()).unwrap()
    }

    #[test]
    fn zero_weight_returns_prior() {
        let kernel = small_kernel(6, 2);
        let solve = update_variance(&kernel, &DVector::zeros(6), &DVector::zeros(6), None)
            .unwrap();
        assert!((&solve.eig_vars - kernel.eigenvalues()).amax() < 1e-9);
    }

    #[test]
    fn scalar_case_matches_bisection() {
        // n=1, prior 1, eigenvector 1: maximize -qt e^{l/2} + (ln l - l)/2.
        // Stationarity: -qt e^{l/2} / 2 + 1/(2l) - 1/2 = 0.
        let content = ContentMatrix::from_columns(1, &[vec![0.0]]).unwrap();
        let kernel = build_covariance(
            &content,
            &KernelParams {
                theta: 1.0,
                sigma2: 1.0,
                jitter: 0.0,
                ..Default::default()
            },
        )
        .unwrap();
        let bisect = |qt: f64| -> f64 {
            let g = |l: f64| -0.5 * qt * (0.5 * l).exp() + 0.5 / l - 0.5;
            let (mut lo, mut hi) = (1e-12, 50.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for qt in [1.0, 2.0, 0.5, 5.0] {
            let solve = update_variance(
                &kernel,
                &DVector::from_vec(vec![qt]),
                &DVector::zeros(1),
                None,
            )
            .unwrap();
            let oracle = bisect(qt);
            assert!(
                (solve.eig_vars[0] - oracle).abs() < 1e-6,
                "qt={qt}: {} vs {oracle}",
                solve.eig_vars[0]
            );
        }
    }

    #[test]
    fn solution_beats_random_perturbations() {
        let n = 5;
        let kernel = small_kernel(n, 7);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(19);
        let exp_weight = DVector::from_fn(n, |_, _| rng.gen_range(0.1..1.5));
        let mean = DVector::from_fn(n, |_, _| rng.gen_range(-0.5..0.5));
        let solve = update_variance(&kernel, &exp_weight, &mean, None).unwrap();

        let mut trips = 0;
        let qtilde = DVector::from_fn(n, |i, _| exp_weight[i] * mean[i].exp());
        let at_solution = objective(&kernel, &qtilde, &solve.eig_vars, &mut trips);
        for _ in 0..10_000 {
            let probe = DVector::from_fn(n, |j, _| {
                (solve.eig_vars[j] * (1.0 + rng.gen_range(-1e-3..1e-3))).max(1e-12)
            });
            let v = objective(&kernel, &qtilde, &probe, &mut trips);
            assert!(v <= at_solution + 1e-12, "{v} beats {at_solution}");
        }
    }

    #[test]
    fn weights_stay_in_zero_prior_interval() {
        let n = 8;
        let kernel = small_kernel(n, 20);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
        let exp_weight = DVector::from_fn(n, |_, _| rng.gen_range(0.0..2.0));
        let mean = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let solve = update_variance(&kernel, &exp_weight, &mean, None).unwrap();
        for j in 0..n {
            assert!(solve.eig_vars[j] > 0.0);
            assert!(solve.eig_vars[j] <= kernel.eigenvalues()[j] + 1e-12);
        }
        // cached diagonal consistent with the weights
        let diag = kernel.diag_in_eigenbasis(&solve.eig_vars);
        assert!((&diag - &solve.diag_vars).amax() < 1e-12);
    }
}
