//! The evidence lower bound monitored by the fit, assembled from the
//! link-model surrogate, the indicator entropy, and the Gamma and Gaussian
//! prior/entropy terms evaluated in the shared eigenbasis.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::kernel::KernelModel;
use crate::network::Network;

use super::state::{FitConfig, FitState, PopularityModel};

/// The bound split into its four independent pieces.
#[derive(Debug, Clone, Copy)]
pub struct BoundBreakdown {
    /// Expected link-model surrogate over all link slots.
    pub link: f64,
    /// Entropy of the per-link community responsibilities.
    pub assignment_entropy: f64,
    /// Gamma prior cross-entropy minus posterior entropy (zero when
    /// popularity is fixed).
    pub popularity: f64,
    /// Gaussian prior cross-entropy minus posterior entropy, per community.
    pub activation: f64,
}

impl BoundBreakdown {
    pub fn total(&self) -> f64 {
        self.link + self.assignment_entropy + self.popularity + self.activation
    }
}

pub fn lower_bound_breakdown(
    network: &Network,
    state: &FitState,
    kernel: &KernelModel,
    cfg: &FitConfig,
) -> Result<BoundBreakdown> {
    let n = network.node_count();
    let k = state.assignments.communities();
    let (ee, _) = state.activations.exp_moments();
    let scalars = &state.scalars;

    // community target masses under the current posteriors
    let mut weighted = vec![0.0f64; k];
    for (c, w) in weighted.iter_mut().enumerate() {
        for j in 0..n {
            *w += state.popularity.mean(j) * ee[(j, c)];
        }
    }
    let softmax: Vec<f64> = (0..n).map(|i| ee.row(i).sum()).collect();

    let mut link = 0.0;
    let mut entropy = 0.0;
    for (l, (i, j)) in network.links().enumerate() {
        let row = state.assignments.row(l);
        let source_part =
            2.0 - softmax[i] / scalars.softmax_mass[i] - scalars.softmax_mass[i].ln();
        for (c, &p) in row.iter().enumerate() {
            if p > 0.0 {
                link += p
                    * (state.popularity.mean_log(j)
                        + state.activations.means[c][j]
                        + state.activations.means[c][i]
                        + source_part
                        - weighted[c] / scalars.target_mass[c]
                        - scalars.target_mass[c].ln());
                entropy -= p * p.ln();
            }
        }
    }

    let popularity = match &state.popularity {
        PopularityModel::Fixed => 0.0,
        PopularityModel::Learned(g) => {
            let (a, b) = (cfg.prior_shape, cfg.prior_rate);
            let prior_const = a * b.ln() - ln_gamma(a);
            let mut acc = 0.0;
            for j in 0..n {
                let cross = prior_const + (a - 1.0) * g.mean_log()[j] - b * g.mean()[j];
                let own = g.shape()[j] * g.rate()[j].ln() - ln_gamma(g.shape()[j])
                    + (g.shape()[j] - 1.0) * g.mean_log()[j]
                    - g.rate()[j] * g.mean()[j];
                acc += cross - own;
            }
            acc
        }
    };

    let prior_ev = kernel.eigenvalues();
    let mut activation = 0.0;
    for c in 0..k {
        let lv = &state.activations.eig_vars[c];
        let mut log_ratio = 0.0;
        let mut trace = 0.0;
        for j in 0..n {
            log_ratio += lv[j].ln() - prior_ev[j].ln();
            trace += lv[j] / prior_ev[j];
        }
        let quad = kernel.prior_quadratic(&state.activations.means[c]);
        activation += 0.5 * (log_ratio + n as f64 - trace - quad);
    }

    let breakdown = BoundBreakdown {
        link,
        assignment_entropy: entropy,
        popularity,
        activation,
    };
    if !breakdown.total().is_finite() {
        return Err(Error::numerical(
            "lower_bound",
            format!(
                "non-finite bound: link {:.3e}, entropy {:.3e}, popularity {:.3e}, \
                 activation {:.3e}",
                breakdown.link,
                breakdown.assignment_entropy,
                breakdown.popularity,
                breakdown.activation
            ),
        ));
    }
    Ok(breakdown)
}

/// The scalar bound value; see `lower_bound_breakdown` for the pieces.
pub fn lower_bound(
    network: &Network,
    state: &FitState,
    kernel: &KernelModel,
    cfg: &FitConfig,
) -> Result<f64> {
    Ok(lower_bound_breakdown(network, state, kernel, cfg)?.total())
}
