//! Variational EM inference: coordinate-ascent updates for the popularity,
//! indicator, and activation posteriors plus the auxiliary bound scalars,
//! with soft memberships extracted from the moderated activation means.

mod bound;
mod fit;
mod init;
mod newton;
mod state;
mod updates;
mod variance;

pub use bound::{lower_bound, lower_bound_breakdown, BoundBreakdown};
pub use fit::{fit, fit_monitored, UpdateStep};
pub use newton::{update_mean, MeanSolve};
pub use state::{
    ActivationPosterior, FitConfig, FitResult, FitState, GammaPosterior, InitScheme,
    LinkAssignments, PopularityModel, VariationalScalars,
};
pub use updates::{
    compute_stats, extract_memberships, hard_assignment, moderation_factor, update_assignments,
    update_popularity, update_scalars, CommunityStats,
};
pub use variance::{update_variance, VarianceSolve};
