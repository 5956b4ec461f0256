//! Synthetic attributed networks drawn from the model's own generative
//! process: per-node popularity from a Gamma prior, per-community activation
//! vectors from the shared Gaussian-process prior, softmax memberships, and
//! links whose targets are chosen by popularity-weighted community affinity.
//!
//! Used both as a dataset generator and as the ground-truth oracle for
//! inference tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_covariance, KernelParams};
use crate::network::{ContentMatrix, Network};

/// Out-degree specification: one constant for every node, or per-node counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OutDegree {
    Constant(usize),
    PerNode(Vec<usize>),
}

impl OutDegree {
    fn resolve(&self, n: usize) -> Result<Vec<usize>> {
        match self {
            OutDegree::Constant(c) => Ok(vec![*c; n]),
            OutDegree::PerNode(v) => {
                if v.len() != n {
                    return Err(Error::Input(format!(
                        "{} out-degrees for {} nodes",
                        v.len(),
                        n
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeConfig {
    pub nodes: usize,
    pub communities: usize,
    /// Shape of the popularity Gamma prior.
    #[serde(default = "one")]
    pub popularity_shape: f64,
    /// Rate of the popularity Gamma prior (mean popularity = shape / rate).
    #[serde(default = "one")]
    pub popularity_rate: f64,
    #[serde(default = "default_out_degree")]
    pub out_degree: OutDegree,
    #[serde(default)]
    pub kernel: KernelParams,
    #[serde(default)]
    pub seed: u64,
    /// Self-links are produced by the model unless explicitly excluded.
    #[serde(default)]
    pub exclude_self_links: bool,
}

fn one() -> f64 {
    1.0
}

fn default_out_degree() -> OutDegree {
    OutDegree::Constant(5)
}

impl GenerativeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::Input("need at least 2 nodes".into()));
        }
        if self.communities < 1 {
            return Err(Error::Input("need at least 1 community".into()));
        }
        if !(self.popularity_shape > 0.0 && self.popularity_rate > 0.0) {
            return Err(Error::Input(
                "popularity shape and rate must be positive".into(),
            ));
        }
        self.kernel.validate()
    }
}

/// The latent variables behind one sampled network.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTruth {
    /// Per-node popularity, strictly positive.
    pub popularity: DVector<f64>,
    /// Activation values, one row per node and one column per community.
    pub activations: DMatrix<f64>,
    /// Softmax memberships per node (rows sum to 1).
    pub memberships: DMatrix<f64>,
    /// The community indicator drawn for each link slot, in global slot order.
    pub indicators: Vec<usize>,
}

impl LatentTruth {
    /// Hard community of each node: the argmax of its membership row.
    pub fn labels(&self) -> Vec<usize> {
        (0..self.memberships.nrows())
            .map(|i| {
                let row = self.memberships.row(i);
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }
}

/// Probability that a link carrying community `community` ends at node
/// `target`: the target's popularity-weighted activation mass over the
/// total. Values over all targets sum to 1.
pub fn link_probability(
    target: usize,
    community: usize,
    popularity: &DVector<f64>,
    activations: &DMatrix<f64>,
) -> Result<f64> {
    let n = popularity.len();
    if target >= n || community >= activations.ncols() || activations.nrows() != n {
        return Err(Error::Input("index out of range".into()));
    }
    if popularity.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Input("popularity must be strictly positive".into()));
    }
    let col = activations.column(community);
    let max_y = col.max();
    let mut total = 0.0;
    for j in 0..n {
        total += popularity[j] * (col[j] - max_y).exp();
    }
    if !(total > 0.0) {
        return Err(Error::Input("degenerate target distribution".into()));
    }
    Ok(popularity[target] * (col[target] - max_y).exp() / total)
}

/// Draw a network (and its latent truth) from the generative process.
/// Deterministic given the seed. The returned network carries the truth's
/// hard communities as labels.
pub fn sample_network(
    config: &GenerativeConfig,
    content: &ContentMatrix,
) -> Result<(Network, LatentTruth)> {
    config.validate()?;
    let n = config.nodes;
    let k = config.communities;
    if content.node_count() != n {
        return Err(Error::Input(format!(
            "content has {} columns for {} nodes",
            content.node_count(),
            n
        )));
    }
    let out_degrees = config.out_degree.resolve(n)?;
    let kernel = build_covariance(content, &config.kernel)?;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(config.seed);

    let gamma = Gamma::new(config.popularity_shape, 1.0 / config.popularity_rate)
        .map_err(|e| Error::Input(format!("bad gamma parameters: {e}")))?;
    let popularity = DVector::from_fn(n, |_, _| gamma.sample(&mut rng));

    // activation vectors through the prior eigenbasis
    let mut activations = DMatrix::zeros(n, k);
    let sqrt_ev: DVector<f64> = kernel.eigenvalues().map(|s| s.sqrt());
    for c in 0..k {
        let noise = DVector::from_fn(n, |i, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_ev[i]
        });
        let y = kernel.eigenvectors() * noise;
        activations.set_column(c, &y);
    }

    let mut memberships = DMatrix::zeros(n, k);
    for i in 0..n {
        let row = activations.row(i);
        let max_y = row.max();
        let mut total = 0.0;
        for c in 0..k {
            let e = (row[c] - max_y).exp();
            memberships[(i, c)] = e;
            total += e;
        }
        for c in 0..k {
            memberships[(i, c)] /= total;
        }
    }

    // cumulative target weights per community, max-shifted for stability
    let mut target_cdf: Vec<Vec<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let col = activations.column(c);
        let max_y = col.max();
        let mut acc = 0.0;
        let cdf = (0..n)
            .map(|j| {
                acc += popularity[j] * (col[j] - max_y).exp();
                acc
            })
            .collect();
        target_cdf.push(cdf);
    }

    let mut links = Vec::new();
    let mut indicators = Vec::new();
    for i in 0..n {
        for _ in 0..out_degrees[i] {
            // community indicator for this link slot
            let u: f64 = rng.gen();
            let row = memberships.row(i);
            let mut z = k - 1;
            let mut acc = 0.0;
            for c in 0..k {
                acc += row[c];
                if u < acc {
                    z = c;
                    break;
                }
            }
            let cdf = &target_cdf[z];
            let total = *cdf.last().expect("nonempty cdf");
            let mut attempts = 0;
            let target = loop {
                let u: f64 = rng.gen_range(0.0..total);
                let j = cdf.partition_point(|&c| c <= u).min(n - 1);
                if !(config.exclude_self_links && j == i) {
                    break j;
                }
                attempts += 1;
                if attempts > 1_000_000 {
                    return Err(Error::numerical(
                        "sample_network",
                        format!("could not draw a non-self target for node {i}"),
                    ));
                }
            };
            links.push((i, target));
            indicators.push(z);
        }
    }

    let truth = LatentTruth {
        popularity,
        activations,
        memberships,
        indicators,
    };
    let labels = truth.labels();
    let names = (0..k).map(|c| format!("c{c}")).collect();
    let network = Network::from_links(n, links)?.with_labels(labels, names)?;
    Ok((network, truth))
}

/// Generate content with `k` planted clusters whose pairwise center
/// distance is `separation` in units of the within-cluster standard
/// deviation. Zero separation gives i.i.d. content. Returns the content
/// and the planted class of each node.
pub fn make_separable_content(
    n: usize,
    k: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<(ContentMatrix, Vec<usize>)> {
    if n < k {
        return Err(Error::Input(format!("n={n} smaller than k={k}")));
    }
    if d < k {
        return Err(Error::Input(format!("d={d} smaller than k={k}")));
    }
    if !(separation >= 0.0) {
        return Err(Error::Input("separation must be >= 0".into()));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let offset = separation / std::f64::consts::SQRT_2;
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let columns: Vec<Vec<f64>> = labels
        .iter()
        .map(|&label| {
            (0..d)
                .map(|t| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    if t == label {
                        offset + noise
                    } else {
                        noise
                    }
                })
                .collect()
        })
        .collect();
    Ok((ContentMatrix::from_columns(d, &columns)?, labels))
}
