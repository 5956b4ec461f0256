//! Partition-quality metrics: normalized mutual information, pairwise
//! F-measure, and Newman modularity.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::network::Network;

/// A hard assignment of every node to one of `k` communities. Communities
/// may be empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&c| c >= k) {
            return Err(Error::Input(format!(
                "community index {bad} out of range for k={k}"
            )));
        }
        Ok(Partition { assignment, k })
    }

    /// Build from labels, sizing `k` to the largest index present.
    pub fn from_labels(labels: &[usize]) -> Self {
        let k = labels.iter().copied().max().map_or(1, |m| m + 1);
        Partition {
            assignment: labels.to_vec(),
            k,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn community_count(&self) -> usize {
        self.k
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }
}

fn contingency(a: &Partition, b: &Partition) -> Vec<Vec<usize>> {
    let mut table = vec![vec![0usize; b.k]; a.k];
    for (&x, &y) in a.assignment.iter().zip(&b.assignment) {
        table[x][y] += 1;
    }
    table
}

fn entropy(sizes: &[usize], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information between two partitions of the same nodes,
/// normalized by the larger of the two partition entropies. Natural logs
/// throughout; `0 log 0` terms are zero. When both partitions are trivial
/// (single community, zero entropy) the value is defined as 0.
pub fn nmi(truth: &Partition, predicted: &Partition) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::Input(format!(
            "partition sizes differ: {} vs {}",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Input("empty partitions".into()));
    }
    let n = truth.len() as f64;
    let table = contingency(truth, predicted);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..predicted.k)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let h_truth = entropy(&row_sums, n);
    let h_pred = entropy(&col_sums, n);
    let denom = h_truth.max(h_pred);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (row_sums[i] as f64 / n * (col_sums[j] as f64 / n))).ln();
            }
        }
    }
    Ok(mi / denom)
}

fn pairs(c: usize) -> u64 {
    let c = c as u64;
    c * c.saturating_sub(1) / 2
}

/// Pairwise F-measure over unordered distinct node pairs: precision and
/// recall of "same community" pair predictions against "same label" pairs,
/// combined harmonically. Computed from the contingency table, not by pair
/// enumeration. An empty pair set on either side yields 0.
pub fn pwf(truth: &Partition, predicted: &Partition) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::Input(format!(
            "partition sizes differ: {} vs {}",
            truth.len(),
            predicted.len()
        )));
    }
    let table = contingency(truth, predicted);
    let row_sums: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..predicted.k)
        .map(|j| table.iter().map(|r| r[j]).sum())
        .collect();
    let same_truth: u64 = row_sums.iter().map(|&c| pairs(c)).sum();
    let same_pred: u64 = col_sums.iter().map(|&c| pairs(c)).sum();
    let same_both: u64 = table
        .iter()
        .flat_map(|r| r.iter())
        .map(|&c| pairs(c))
        .sum();
    let precision = if same_pred == 0 {
        0.0
    } else {
        same_both as f64 / same_pred as f64
    };
    let recall = if same_truth == 0 {
        0.0
    } else {
        same_both as f64 / same_truth as f64
    };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Newman modularity of a partition against the symmetrized simple graph of
/// the network (directed links made undirected, duplicates collapsed,
/// self-links kept). Errors when the network has no links.
pub fn modularity(network: &Network, predicted: &Partition) -> Result<f64> {
    if predicted.len() != network.node_count() {
        return Err(Error::Input(format!(
            "partition covers {} nodes, network has {}",
            predicted.len(),
            network.node_count()
        )));
    }
    if network.link_count() == 0 {
        return Err(Error::Input(
            "modularity is undefined for a network with no links".into(),
        ));
    }
    let mut edges: HashSet<(usize, usize)> = HashSet::new();
    for (src, tgt) in network.links() {
        let (a, b) = if src <= tgt { (src, tgt) } else { (tgt, src) };
        edges.insert((a, b));
    }
    let k = predicted.k;
    let assign = predicted.assignment();
    // within[c]: ordered-pair weight inside community c; degree[c]: total
    // ordered-pair weight incident to community c
    let mut within = vec![0.0f64; k];
    let mut degree = vec![0.0f64; k];
    let mut total = 0.0f64;
    for &(a, b) in &edges {
        let w = if a == b { 1.0 } else { 2.0 };
        total += w;
        degree[assign[a]] += 1.0;
        degree[assign[b]] += 1.0;
        if a == b {
            degree[assign[a]] -= 1.0; // self-link counts once
        }
        if assign[a] == assign[b] {
            within[assign[a]] += w;
        }
    }
    let mut q = 0.0;
    for c in 0..k {
        q += within[c] / total - (degree[c] / total).powi(2);
    }
    Ok(q)
}
