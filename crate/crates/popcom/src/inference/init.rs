//! Seeded initialization for the activation means: cluster the content
//! columns and map the labels through small random logits.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::network::ContentMatrix;
use crate::parallel;

use super::state::InitScheme;

const LLOYD_ITERS: usize = 20;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Standard k-means++ seeding plus Lloyd iterations over content columns.
pub(crate) fn kmeans_labels(content: &ContentMatrix, k: usize, seed: u64) -> Vec<usize> {
    let n = content.node_count();
    let d = content.attr_count();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    if k <= 1 || n <= k {
        return (0..n).map(|i| i % k.max(1)).collect();
    }

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(content.column(rng.gen_range(0..n)).to_vec());
    let mut best_dist: Vec<f64> = (0..n)
        .map(|i| sq_dist(content.column(i), &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = best_dist.iter().sum();
        let next = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut u = rng.gen_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in best_dist.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centers.push(content.column(next).to_vec());
        for i in 0..n {
            best_dist[i] = best_dist[i].min(sq_dist(content.column(i), centers.last().unwrap()));
        }
    }

    let mut labels = vec![0usize; n];
    for _ in 0..LLOYD_ITERS {
        let assigned = parallel::map_indexed(n, |i| {
            let col = content.column(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let dist = sq_dist(col, center);
                if dist < best_d {
                    best_d = dist;
                    best = c;
                }
            }
            best
        });
        let changed = assigned != labels;
        labels = assigned;
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0f64; d]; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (t, v) in content.column(i).iter().enumerate() {
                sums[l][t] += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for t in 0..d {
                    centers[c][t] = sums[c][t] / counts[c] as f64;
                }
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

/// Initial activation means: cluster indicator plus small random logits,
/// rescaled so no entry exceeds 1 in magnitude.
pub(crate) fn initial_means(
    content: &ContentMatrix,
    k: usize,
    seed: u64,
    scheme: InitScheme,
) -> Vec<DVector<f64>> {
    let n = content.node_count();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let labels = match scheme {
        InitScheme::ContentClusters => Some(kmeans_labels(content, k, seed)),
        InitScheme::RandomLogits => None,
    };
    let mut means: Vec<DVector<f64>> = (0..k).map(|_| DVector::zeros(n)).collect();
    let mut max_abs = 0.0f64;
    for i in 0..n {
        for (c, m) in means.iter_mut().enumerate() {
            let mut v = rng.gen_range(-0.25..0.25);
            if labels.as_ref().is_some_and(|l| l[i] == c) {
                v += 1.0;
            }
            m[i] = v;
            max_abs = max_abs.max(v.abs());
        }
    }
    if max_abs > 1.0 {
        for m in &mut means {
            *m /= max_abs;
        }
    }
    means
}
