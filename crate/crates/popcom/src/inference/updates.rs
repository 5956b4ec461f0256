//! Closed-form coordinate updates: the auxiliary scalars, the per-link
//! community responsibilities, the popularity posterior, and the sufficient
//! statistics feeding the activation solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::metrics::Partition;
use crate::network::{InLinkIndex, Network};
use crate::parallel;

use super::state::{
    ActivationPosterior, FitConfig, GammaPosterior, LinkAssignments, PopularityModel,
    VariationalScalars,
};

/// Optimal auxiliary scalars given the current posteriors: community target
/// mass and per-node softmax mass. After this update the corresponding
/// bound terms collapse to their tight values.
pub fn update_scalars(
    popularity: &PopularityModel,
    activations: &ActivationPosterior,
) -> Result<(VariationalScalars, u64)> {
    let (ee, trips) = activations.exp_moments();
    let n = ee.nrows();
    let k = ee.ncols();
    let mut target_mass = DVector::zeros(k);
    for c in 0..k {
        let mut acc = 0.0;
        for j in 0..n {
            acc += popularity.mean(j) * ee[(j, c)];
        }
        target_mass[c] = acc;
    }
    let softmax_mass = DVector::from_fn(n, |i, _| ee.row(i).sum());
    if target_mass.iter().any(|v| !(v.is_finite() && *v > 0.0))
        || softmax_mass.iter().any(|v| !(v.is_finite() && *v > 0.0))
    {
        return Err(Error::numerical(
            "update_scalars",
            "auxiliary scalars must be positive and finite",
        ));
    }
    Ok((VariationalScalars { target_mass, softmax_mass }, trips))
}

/// Per-link community responsibilities: an activation affinity between the
/// link's endpoints penalized by the community's normalized target mass,
/// softmax-normalized per link with max-subtraction.
pub fn update_assignments(
    network: &Network,
    popularity: &PopularityModel,
    activations: &ActivationPosterior,
    scalars: &VariationalScalars,
) -> Result<(LinkAssignments, u64)> {
    let k = activations.communities();
    let n = network.node_count();
    let links = network.link_count();
    let (ee, trips) = activations.exp_moments();

    // community-level part of the logit, shared by every link
    let mut base = vec![0.0f64; k];
    for (c, b) in base.iter_mut().enumerate() {
        let mut weighted = 0.0;
        for j in 0..n {
            weighted += popularity.mean(j) * ee[(j, c)];
        }
        *b = -weighted / scalars.target_mass[c] - scalars.target_mass[c].ln();
    }

    let mut out = LinkAssignments::uniform(links, k);
    let means = &activations.means;
    let sources: Vec<u32> = (0..links).map(|l| network.link_source(l) as u32).collect();
    let targets: Vec<u32> = (0..links).map(|l| network.link_target(l) as u32).collect();
    let failed = std::sync::atomic::AtomicUsize::new(usize::MAX);
    parallel::for_each_chunk_mut(out.probs_mut(), k, |link, row| {
        let i = sources[link] as usize;
        let j = targets[link] as usize;
        let mut max_logit = f64::NEG_INFINITY;
        for c in 0..k {
            let logit = means[c][j] + means[c][i] + base[c];
            row[c] = logit;
            if logit > max_logit {
                max_logit = logit;
            }
        }
        if !max_logit.is_finite() {
            failed.store(link, std::sync::atomic::Ordering::SeqCst);
            return;
        }
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max_logit).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    });
    let bad = failed.load(std::sync::atomic::Ordering::SeqCst);
    if bad != usize::MAX {
        return Err(Error::numerical(
            "update_assignments",
            format!("non-finite responsibilities for link {bad}"),
        ));
    }
    Ok((out, trips))
}

/// Popularity posterior: the shape accumulates each node's expected in-link
/// responsibility mass, the rate accumulates the community link masses
/// weighted by the node's activation moment over the target-mass scalars.
pub fn update_popularity(
    network: &Network,
    in_index: &InLinkIndex,
    assignments: &LinkAssignments,
    activations: &ActivationPosterior,
    scalars: &VariationalScalars,
    cfg: &FitConfig,
) -> Result<(GammaPosterior, u64)> {
    let n = network.node_count();
    let k = assignments.communities();
    let (ee, trips) = activations.exp_moments();
    let mass = assignments.community_mass();

    let mut shape = DVector::from_element(n, cfg.prior_shape);
    for j in 0..n {
        for &(src, slot) in in_index.sources(j) {
            let link = network.link_id(src as usize, slot as usize);
            shape[j] += assignments.row(link).iter().sum::<f64>();
        }
    }
    let mut rate = DVector::from_element(n, cfg.prior_rate);
    for j in 0..n {
        for c in 0..k {
            rate[j] += mass[c] * ee[(j, c)] / scalars.target_mass[c];
        }
    }
    Ok((GammaPosterior::new(shape, rate)?, trips))
}

/// Per-community sufficient statistics for the activation solvers.
#[derive(Debug, Clone)]
pub struct CommunityStats {
    /// Expected responsibility mass of link endpoints at each node: in-link
    /// mass plus out-link mass for this community.
    pub link_mass: DVector<f64>,
    /// Coefficient of E[exp y] in the bound: community link mass scaled by
    /// the node's popularity over the target-mass scalar, plus the node's
    /// out-degree over its softmax-mass scalar.
    pub exp_weight: DVector<f64>,
    /// Current marginal variances (cached covariance diagonal).
    pub diag_var: DVector<f64>,
}

pub fn compute_stats(
    network: &Network,
    in_index: &InLinkIndex,
    assignments: &LinkAssignments,
    popularity: &PopularityModel,
    scalars: &VariationalScalars,
    activations: &ActivationPosterior,
) -> Vec<CommunityStats> {
    let n = network.node_count();
    let k = assignments.communities();
    let mass = assignments.community_mass();

    let mut stats: Vec<CommunityStats> = (0..k)
        .map(|c| CommunityStats {
            link_mass: DVector::zeros(n),
            exp_weight: DVector::zeros(n),
            diag_var: activations.diag_vars[c].clone(),
        })
        .collect();

    for i in 0..n {
        // out-links of i and in-links of i both contribute responsibility
        for slot in 0..network.out_degree(i) {
            let row = assignments.row(network.link_id(i, slot));
            for (c, p) in row.iter().enumerate() {
                stats[c].link_mass[i] += p;
            }
        }
        for &(src, slot) in in_index.sources(i) {
            let row = assignments.row(network.link_id(src as usize, slot as usize));
            for (c, p) in row.iter().enumerate() {
                stats[c].link_mass[i] += p;
            }
        }
        let out_deg = network.out_degree(i) as f64;
        for (c, stat) in stats.iter_mut().enumerate() {
            stat.exp_weight[i] = mass[c] * popularity.mean(i) / scalars.target_mass[c]
                + out_deg / scalars.softmax_mass[i];
        }
    }
    stats
}

/// The closed-form correction for integrating a softmax against Gaussian
/// marginals: shrink each mean by `1/sqrt(1 + pi * variance / 8)`.
#[inline]
pub fn moderation_factor(variance: f64) -> f64 {
    1.0 / (1.0 + std::f64::consts::PI * variance / 8.0).sqrt()
}

/// Soft community memberships from the activation posterior: softmax of
/// the variance-moderated means, computed with max-subtraction.
pub fn extract_memberships(activations: &ActivationPosterior) -> DMatrix<f64> {
    let n = activations.node_count();
    let k = activations.communities();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut max_logit = f64::NEG_INFINITY;
        for c in 0..k {
            let logit =
                moderation_factor(activations.diag_vars[c][i]) * activations.means[c][i];
            out[(i, c)] = logit;
            max_logit = max_logit.max(logit);
        }
        let mut total = 0.0;
        for c in 0..k {
            let e = (out[(i, c)] - max_logit).exp();
            out[(i, c)] = e;
            total += e;
        }
        for c in 0..k {
            out[(i, c)] /= total;
        }
    }
    out
}

/// Hard assignment: per-node argmax of the membership rows, ties broken by
/// the lowest community index.
pub fn hard_assignment(memberships: &DMatrix<f64>) -> Partition {
    let n = memberships.nrows();
    let k = memberships.ncols().max(1);
    let labels: Vec<usize> = (0..n)
        .map(|i| {
            let row = memberships.row(i);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect();
    Partition::new(labels, k).expect("argmax indices are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::in_link_index;

    fn flat_activations(n: usize, k: usize) -> ActivationPosterior {
        ActivationPosterior {
            means: vec![DVector::zeros(n); k],
            eig_vars: vec![DVector::from_element(n, 1.0); k],
            diag_vars: vec![DVector::zeros(n); k],
            pullbacks: vec![DVector::zeros(n); k],
        }
    }

    #[test]
    fn scalars_under_flat_state() {
        // all means 0, variances 0, popularity 1: target mass n, softmax mass k
        let n = 6;
        let k = 3;
        let act = flat_activations(n, k);
        let (s, trips) = update_scalars(&PopularityModel::Fixed, &act).unwrap();
        assert_eq!(trips, 0);
        for c in 0..k {
            assert!((s.target_mass[c] - n as f64).abs() < 1e-12);
        }
        for i in 0..n {
            assert!((s.softmax_mass[i] - k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn scalars_single_node_direct() {
        // one node, one community, mean 1, variance 0, popularity 2:
        // target mass 2e, softmax mass e
        let mut act = flat_activations(1, 1);
        act.means[0][0] = 1.0;
        let pop = PopularityModel::Learned(
            GammaPosterior::new(DVector::from_vec(vec![4.0]), DVector::from_vec(vec![2.0]))
                .unwrap(),
        );
        let (s, _) = update_scalars(&pop, &act).unwrap();
        assert!((s.target_mass[0] - 2.0 * 1.0f64.exp()).abs() < 1e-12);
        assert!((s.softmax_mass[0] - 1.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn assignments_single_community_all_one() {
        let net = Network::from_links(3, [(0, 1), (1, 2), (2, 0)]).unwrap();
        let act = flat_activations(3, 1);
        let (s, _) = update_scalars(&PopularityModel::Fixed, &act).unwrap();
        let (a, _) = update_assignments(&net, &PopularityModel::Fixed, &act, &s).unwrap();
        for l in 0..3 {
            assert_eq!(a.row(l), &[1.0]);
        }
    }

    #[test]
    fn assignments_symmetric_inputs_uniform() {
        let net = Network::from_links(4, [(0, 1), (2, 3), (3, 0)]).unwrap();
        let act = flat_activations(4, 3);
        let (s, _) = update_scalars(&PopularityModel::Fixed, &act).unwrap();
        let (a, _) = update_assignments(&net, &PopularityModel::Fixed, &act, &s).unwrap();
        for l in 0..3 {
            for &p in a.row(l) {
                assert!((p - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        assert!(a.worst_normalization() < 1e-12);
    }

    #[test]
    fn assignments_match_direct_formula() {
        // 3 nodes, 2 communities, hand-set means and scalars
        let net = Network::from_links(3, [(0, 1), (2, 0)]).unwrap();
        let mut act = flat_activations(3, 2);
        act.means[0] = DVector::from_vec(vec![0.3, -0.2, 0.9]);
        act.means[1] = DVector::from_vec(vec![-0.5, 0.8, 0.1]);
        let pop = PopularityModel::Learned(
            GammaPosterior::new(
                DVector::from_vec(vec![2.0, 1.0, 3.0]),
                DVector::from_vec(vec![1.0, 1.0, 2.0]),
            )
            .unwrap(),
        );
        let scalars = VariationalScalars {
            target_mass: DVector::from_vec(vec![4.0, 7.0]),
            softmax_mass: DVector::from_vec(vec![2.0, 2.0, 2.0]),
        };
        let (a, _) = update_assignments(&net, &pop, &act, &scalars).unwrap();
        let (ee, _) = act.exp_moments();
        for (l, (i, j)) in net.links().enumerate() {
            let mut logits = [0.0f64; 2];
            for c in 0..2 {
                let weighted: f64 = (0..3).map(|jj| pop.mean(jj) * ee[(jj, c)]).sum();
                logits[c] = act.means[c][j] + act.means[c][i]
                    - weighted / scalars.target_mass[c]
                    - scalars.target_mass[c].ln();
            }
            let norm = logits[0].exp() + logits[1].exp();
            for c in 0..2 {
                assert!(
                    (a.row(l)[c] - logits[c].exp() / norm).abs() < 1e-12,
                    "link {l} community {c}"
                );
            }
        }
    }

    #[test]
    fn popularity_shape_counts_in_links() {
        // star: everyone links the hub; shape(hub) = prior + n - 1
        let n = 5;
        let net = Network::from_links(n, (1..n).map(|i| (i, 0usize))).unwrap();
        let idx = in_link_index(&net);
        let act = flat_activations(n, 2);
        let (s, _) = update_scalars(&PopularityModel::Fixed, &act).unwrap();
        let assignments = LinkAssignments::uniform(net.link_count(), 2);
        let cfg = FitConfig::new(2);
        let (g, _) = update_popularity(&net, &idx, &assignments, &act, &s, &cfg).unwrap();
        assert!((g.shape()[0] - (cfg.prior_shape + (n - 1) as f64)).abs() < 1e-12);
        for j in 1..n {
            assert!((g.shape()[j] - cfg.prior_shape).abs() < 1e-15, "leaf {j}");
        }
        // every node has the same rate under the flat state:
        // prior + sum_k mass_k * 1 / n
        let expect_rate = cfg.prior_rate + (n - 1) as f64 / n as f64;
        for j in 0..n {
            assert!((g.rate()[j] - expect_rate).abs() < 1e-12);
        }
    }

    #[test]
    fn popularity_shape_mass_totals_link_count() {
        // the shape increments sum to the number of links
        let mut state = 41u64;
        let mut next = |m: usize| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as usize) % m
        };
        let n = 9;
        let links: Vec<(usize, usize)> = (0..23).map(|_| (next(n), next(n))).collect();
        let net = Network::from_links(n, links).unwrap();
        let idx = in_link_index(&net);
        let mut act = flat_activations(n, 3);
        for c in 0..3 {
            act.means[c] = DVector::from_fn(n, |i, _| ((i * c) as f64 * 0.2).cos() * 0.4);
        }
        let pop = PopularityModel::Fixed;
        let (s, _) = update_scalars(&pop, &act).unwrap();
        let (a, _) = update_assignments(&net, &pop, &act, &s).unwrap();
        let cfg = FitConfig::new(3);
        let (g, _) = update_popularity(&net, &idx, &a, &act, &s, &cfg).unwrap();
        let total: f64 = (0..n).map(|j| g.shape()[j] - cfg.prior_shape).sum();
        assert!(
            (total - net.link_count() as f64).abs() < 1e-8,
            "shape mass {total} vs {} links",
            net.link_count()
        );
    }

    #[test]
    fn stats_isolated_node_and_single_community() {
        // node 3 is isolated; K=1 link mass is indegree + outdegree
        let net = Network::from_links(4, [(0, 1), (1, 0), (0, 2)]).unwrap();
        let idx = in_link_index(&net);
        let act = flat_activations(4, 1);
        let (s, _) = update_scalars(&PopularityModel::Fixed, &act).unwrap();
        let a = LinkAssignments::uniform(3, 1);
        let stats = compute_stats(&net, &idx, &a, &PopularityModel::Fixed, &s, &act);
        assert_eq!(stats.len(), 1);
        let expect_mass = [3.0, 2.0, 1.0, 0.0]; // deg_in + deg_out
        for i in 0..4 {
            assert!((stats[0].link_mass[i] - expect_mass[i]).abs() < 1e-12);
        }
        // isolated node: exp weight is only the popularity part
        let expect_iso = 3.0 * 1.0 / s.target_mass[0];
        assert!((stats[0].exp_weight[3] - expect_iso).abs() < 1e-12);
    }

    #[test]
    fn stats_match_bruteforce_accumulation() {
        let mut state = 5u64;
        let mut next = |m: usize| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as usize) % m
        };
        let n = 7;
        let k = 3;
        let links: Vec<(usize, usize)> = (0..15).map(|_| (next(n), next(n))).collect();
        let net = Network::from_links(n, links).unwrap();
        let idx = in_link_index(&net);
        let mut act = flat_activations(n, k);
        for c in 0..k {
            act.means[c] = DVector::from_fn(n, |i, _| ((i + c) as f64 * 0.37).sin() * 0.5);
        }
        let pop = PopularityModel::Learned(
            GammaPosterior::new(
                DVector::from_fn(n, |i, _| 1.0 + i as f64),
                DVector::from_element(n, 2.0),
            )
            .unwrap(),
        );
        let (s, _) = update_scalars(&pop, &act).unwrap();
        let (a, _) = update_assignments(&net, &pop, &act, &s).unwrap();
        let stats = compute_stats(&net, &idx, &a, &pop, &s, &act);

        // brute force over every (link, community)
        let mass = a.community_mass();
        for c in 0..k {
            for i in 0..n {
                let mut expect = 0.0;
                for (l, (src, tgt)) in net.links().enumerate() {
                    if src == i {
                        expect += a.row(l)[c];
                    }
                    if tgt == i {
                        expect += a.row(l)[c];
                    }
                }
                assert!(
                    (stats[c].link_mass[i] - expect).abs() < 1e-10,
                    "link mass ({c}, {i})"
                );
                let expect_w = mass[c] * pop.mean(i) / s.target_mass[c]
                    + net.out_degree(i) as f64 / s.softmax_mass[i];
                assert!((stats[c].exp_weight[i] - expect_w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn memberships_zero_variance_is_plain_softmax() {
        let mut act = flat_activations(2, 3);
        act.means[0] = DVector::from_vec(vec![1.0, 0.0]);
        act.means[1] = DVector::from_vec(vec![2.0, 0.0]);
        act.means[2] = DVector::from_vec(vec![0.5, 0.0]);
        let g = extract_memberships(&act);
        let total = 1.0f64.exp() + 2.0f64.exp() + 0.5f64.exp();
        assert!((g[(0, 0)] - 1.0f64.exp() / total).abs() < 1e-12);
        assert!((g[(0, 1)] - 2.0f64.exp() / total).abs() < 1e-12);
        // equal means: uniform regardless of variances
        for c in 0..3 {
            assert!((g[(1, c)] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn memberships_equal_means_uniform_despite_variance() {
        let mut act = flat_activations(1, 2);
        act.means[0][0] = 0.7;
        act.means[1][0] = 0.7;
        act.diag_vars[0][0] = 3.0;
        act.diag_vars[1][0] = 3.0;
        let g = extract_memberships(&act);
        assert!((g[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hard_assignment_argmax_and_ties() {
        let g = DMatrix::from_row_slice(3, 3, &[
            0.2, 0.7, 0.1, //
            1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, //
            0.4, 0.4, 0.2,
        ]);
        let p = hard_assignment(&g);
        assert_eq!(p.assignment(), &[1, 0, 0]);
    }

    #[test]
    fn hard_assignment_scale_invariant() {
        // multiplying a row's unnormalized weights by a constant cannot
        // change the argmax
        let g = DMatrix::from_row_slice(1, 3, &[0.1, 0.5, 0.4]);
        let scaled = &g * 7.3;
        assert_eq!(
            hard_assignment(&g).assignment(),
            hard_assignment(&scaled).assignment()
        );
    }
}
