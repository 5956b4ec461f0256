//! Shared fixtures and independent oracles for the integration suites.

#![allow(dead_code)]

use nalgebra::DVector;
use popcom::inference::*;
use popcom::kernel::{build_covariance, KernelModel, KernelParams};
use popcom::metrics::Partition;
use popcom::network::{ContentMatrix, Network};
use popcom::sampler::{
    make_separable_content, sample_network, GenerativeConfig, LatentTruth, OutDegree,
};

/// Golden-section maximization of a unimodal function on [lo, hi].
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..vals.len()).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && vals[idx[j + 1]] == vals[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                ranks[k] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs);
    let ry = rank(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx).powi(2);
        dy += (ry[i] - my).powi(2);
    }
    num / (dx * dy).sqrt()
}

pub fn balanced_truth(truth: &LatentTruth, k: usize, min_share: f64) -> bool {
    let labels = truth.labels();
    let n = labels.len() as f64;
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    counts.iter().all(|&c| c as f64 / n >= min_share)
}

pub struct SyntheticCase {
    pub network: Network,
    pub content: ContentMatrix,
    pub kernel: KernelModel,
    pub truth: Partition,
    pub fit_seed: u64,
}

pub const FAMILY_NODES: usize = 150;
pub const FAMILY_COMMUNITIES: usize = 3;
pub const FAMILY_KERNEL: KernelParams = KernelParams {
    kind: popcom::kernel::KernelKind::Rbf,
    theta: 16.0,
    sigma2: 60.0,
    jitter: 1e-5,
};

/// The frozen self-consistency family: separable content, heavy-tailed
/// popularity, generator seeds walked until every true community holds at
/// least 15% of the nodes (a content cluster occasionally collapses onto
/// another community's activation draw, which leaves nothing to recover).
pub fn selfconsistency_family(cases: usize) -> Vec<SyntheticCase> {
    let mut out = Vec::with_capacity(cases);
    let mut gen_seed = 0u64;
    for i in 0..cases as u64 {
        let (content, _) =
            make_separable_content(FAMILY_NODES, FAMILY_COMMUNITIES, 4, 12.0, 100 + i).unwrap();
        let (network, truth) = loop {
            gen_seed += 1;
            let gen = GenerativeConfig {
                nodes: FAMILY_NODES,
                communities: FAMILY_COMMUNITIES,
                popularity_shape: 0.25,
                popularity_rate: 0.25,
                out_degree: OutDegree::Constant(24),
                kernel: FAMILY_KERNEL,
                seed: gen_seed,
                exclude_self_links: false,
            };
            let (network, truth) = sample_network(&gen, &content).unwrap();
            if balanced_truth(&truth, FAMILY_COMMUNITIES, 0.15) {
                break (network, truth);
            }
        };
        let kernel = build_covariance(&content, &FAMILY_KERNEL).unwrap();
        out.push(SyntheticCase {
            network,
            truth: Partition::from_labels(&truth.labels()),
            content,
            kernel,
            fit_seed: i,
        });
    }
    out
}

pub fn family_fit_config(seed: u64, fixed_popularity: bool) -> FitConfig {
    let mut cfg = FitConfig::new(FAMILY_COMMUNITIES);
    cfg.max_iters = 300;
    cfg.tol = 1e-6;
    cfg.seed = seed;
    cfg.fixed_popularity = fixed_popularity;
    cfg
}

/// A small random state for factor-exactness fixtures: everything mutually
/// consistent (scalars and responsibilities refreshed from the posteriors).
pub fn small_fixture_state(
    network: &Network,
    kernel: &KernelModel,
    communities: usize,
    cfg: &FitConfig,
    seed: u64,
) -> FitState {
    use rand::Rng;
    use rand::SeedableRng;
    let n = network.node_count();
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(seed);
    let means: Vec<DVector<f64>> = (0..communities)
        .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-0.8..0.8)))
        .collect();
    let pullbacks: Vec<DVector<f64>> = means.iter().map(|m| kernel.prior_solve(m)).collect();
    let eig_vars: Vec<DVector<f64>> = (0..communities)
        .map(|_| kernel.eigenvalues().map(|s| s * rng.gen_range(0.4..1.0)))
        .collect();
    let diag_vars: Vec<DVector<f64>> = eig_vars
        .iter()
        .map(|l| kernel.diag_in_eigenbasis(l))
        .collect();
    let activations = ActivationPosterior {
        means,
        eig_vars,
        diag_vars,
        pullbacks,
    };
    let popularity = PopularityModel::Learned(
        GammaPosterior::new(
            DVector::from_fn(n, |_, _| rng.gen_range(0.5..3.0)),
            DVector::from_fn(n, |_, _| rng.gen_range(0.5..3.0)),
        )
        .unwrap(),
    );
    let (scalars, _) = update_scalars(&popularity, &activations).unwrap();
    let (assignments, _) =
        update_assignments(network, &popularity, &activations, &scalars).unwrap();
    let _ = cfg;
    FitState {
        popularity,
        assignments,
        activations,
        scalars,
    }
}
