//! Attributed directed networks and the two-file citation dataset format
//! (a content table with per-node attributes and labels, plus a cites edge
//! list) used by the Cora and Citeseer corpora.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A directed network over dense node indices, with links stored as a
/// multiset: self-links and duplicates are kept as distinct link slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    out_offsets: Vec<usize>,
    out_targets: Vec<u32>,
    link_sources: Vec<u32>,
    labels: Option<Vec<usize>>,
    label_names: Vec<String>,
    ids: Vec<String>,
}

impl Network {
    /// Build a network from `(source, target)` pairs. Link order is
    /// preserved per source node (insertion order within each out-list).
    pub fn from_links<I>(n: usize, links: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut per_node: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (src, tgt) in links {
            if src >= n || tgt >= n {
                return Err(Error::Input(format!(
                    "link ({src}, {tgt}) out of range for {n} nodes"
                )));
            }
            per_node[src].push(tgt as u32);
        }
        let mut out_offsets = Vec::with_capacity(n + 1);
        let mut out_targets = Vec::new();
        let mut link_sources = Vec::new();
        out_offsets.push(0);
        for (src, targets) in per_node.iter().enumerate() {
            out_targets.extend_from_slice(targets);
            link_sources.extend(std::iter::repeat_n(src as u32, targets.len()));
            out_offsets.push(out_targets.len());
        }
        Ok(Network {
            n,
            out_offsets,
            out_targets,
            link_sources,
            labels: None,
            label_names: Vec::new(),
            ids: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>, label_names: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Input(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::Input(format!("label index {bad} has no name")));
        }
        self.labels = Some(labels);
        self.label_names = label_names;
        Ok(self)
    }

    pub fn with_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.n {
            return Err(Error::Input(format!(
                "{} ids for {} nodes",
                ids.len(),
                self.n
            )));
        }
        self.ids = ids;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Total number of link slots across all nodes.
    pub fn link_count(&self) -> usize {
        self.out_targets.len()
    }

    /// Targets of the links leaving `i`, in slot order.
    pub fn out_links(&self, i: usize) -> &[u32] {
        &self.out_targets[self.out_offsets[i]..self.out_offsets[i + 1]]
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_offsets[i + 1] - self.out_offsets[i]
    }

    /// Global slot index of the `slot`-th link of node `i`.
    pub fn link_id(&self, i: usize, slot: usize) -> usize {
        self.out_offsets[i] + slot
    }

    pub fn link_source(&self, link: usize) -> usize {
        self.link_sources[link] as usize
    }

    pub fn link_target(&self, link: usize) -> usize {
        self.out_targets[link] as usize
    }

    /// Iterate `(source, target)` over all link slots in global order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.link_sources
            .iter()
            .zip(self.out_targets.iter())
            .map(|(&s, &t)| (s as usize, t as usize))
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Number of distinct label classes, when labels are present.
    pub fn label_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|_| self.label_names.len())
    }

    /// External identifiers, indexed by internal node index.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Index from each node `j` to the `(source, slot)` pairs of links targeting
/// it. Consistent with the out-lists: total indexed pairs equal the link
/// count.
#[derive(Debug, Clone)]
pub struct InLinkIndex {
    per_node: Vec<Vec<(u32, u32)>>,
}

impl InLinkIndex {
    /// In-links of node `j` as `(source, slot)` pairs.
    pub fn sources(&self, j: usize) -> &[(u32, u32)] {
        &self.per_node[j]
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.per_node[j].len()
    }

    pub fn total(&self) -> usize {
        self.per_node.iter().map(Vec::len).sum()
    }
}

pub fn in_link_index(network: &Network) -> InLinkIndex {
    let mut per_node: Vec<Vec<(u32, u32)>> = vec![Vec::new(); network.node_count()];
    for i in 0..network.node_count() {
        for (slot, &tgt) in network.out_links(i).iter().enumerate() {
            per_node[tgt as usize].push((i as u32, slot as u32));
        }
    }
    InLinkIndex { per_node }
}

/// Dense attribute matrix with one column per node.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentMatrix {
    d: usize,
    n: usize,
    values: Vec<f64>, // column-major, d * n
}

impl ContentMatrix {
    pub fn from_columns(d: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut values = Vec::with_capacity(d * columns.len());
        for (i, col) in columns.iter().enumerate() {
            if col.len() != d {
                return Err(Error::Input(format!(
                    "content column {i} has {} attributes, expected {d}",
                    col.len()
                )));
            }
            values.extend_from_slice(col);
        }
        Ok(ContentMatrix {
            d,
            n: columns.len(),
            values,
        })
    }

    pub fn attr_count(&self) -> usize {
        self.d
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Content vector of node `i`.
    pub fn column(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Result of loading a content/cites file pair.
#[derive(Debug)]
pub struct LinqsDataset {
    pub network: Network,
    pub content: ContentMatrix,
    /// Cites lines referencing an id absent from the content file. Such
    /// lines are dropped rather than creating phantom nodes, so the content
    /// matrix and the network stay aligned.
    pub dropped_cites: usize,
}

/// Load a citation dataset from its content table and cites edge list.
///
/// Content lines are `<id> <attr_1> .. <attr_d> <label>`, cites lines are
/// `<cited_id> <citing_id>`; both tab- or space-separated. Links are
/// oriented citing -> cited, node indices follow content-file order, and
/// labels are mapped to dense class indices in order of first appearance.
pub fn load_linqs(content_path: &Path, cites_path: &Path) -> Result<LinqsDataset> {
    let (columns, labels, label_names, ids) = read_content(content_path)?;
    let d = columns.first().map_or(0, Vec::len);
    let n = columns.len();
    if n == 0 {
        return Err(Error::Format {
            path: content_path.to_path_buf(),
            message: "content file has no records".into(),
        });
    }
    let content = ContentMatrix::from_columns(d, &columns)?;

    let id_index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut links = Vec::new();
    let mut dropped = 0usize;
    let file = File::open(cites_path).map_err(|e| annotate_io(e, cites_path))?;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| annotate_io(e, cites_path))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (cited, citing) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    path: cites_path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("expected `<cited_id> <citing_id>`, got {line:?}"),
                })
            }
        };
        match (id_index.get(cited), id_index.get(citing)) {
            (Some(&tgt), Some(&src)) => links.push((src, tgt)),
            _ => dropped += 1,
        }
    }

    let network = Network::from_links(n, links)?
        .with_labels(labels, label_names)?
        .with_ids(ids)?;
    Ok(LinqsDataset {
        network,
        content,
        dropped_cites: dropped,
    })
}

type ContentRecords = (Vec<Vec<f64>>, Vec<usize>, Vec<String>, Vec<String>);

fn read_content(path: &Path) -> Result<ContentRecords> {
    let file = File::open(path).map_err(|e| annotate_io(e, path))?;
    let mut columns = Vec::new();
    let mut labels = Vec::new();
    let mut label_names: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut ids = Vec::new();
    let mut d: Option<usize> = None;

    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| annotate_io(e, path))?;
        if line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: "expected `<id> <attrs..> <label>`".into(),
            });
        }
        let attrs = &tokens[1..tokens.len() - 1];
        match d {
            None => d = Some(attrs.len()),
            Some(d) if d != attrs.len() => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "line {}: {} attributes, expected {} from the first record",
                        lineno + 1,
                        attrs.len(),
                        d
                    ),
                })
            }
            _ => {}
        }
        let mut col = Vec::with_capacity(attrs.len());
        for tok in attrs {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("bad attribute value {tok:?}"),
            })?;
            col.push(v);
        }
        let label = tokens[tokens.len() - 1].to_string();
        let next = label_names.len();
        let idx = *label_index.entry(label.clone()).or_insert_with(|| {
            label_names.push(label);
            next
        });
        labels.push(idx);
        ids.push(tokens[0].to_string());
        columns.push(col);
    }
    Ok((columns, labels, label_names, ids))
}

/// Write a network and its content back out in the two-file citation
/// format. Reloading the pair yields an identical network (up to external
/// id strings, which are preserved as-is).
pub fn save_linqs(
    network: &Network,
    content: &ContentMatrix,
    content_path: &Path,
    cites_path: &Path,
) -> Result<()> {
    if content.node_count() != network.node_count() {
        return Err(Error::Input(format!(
            "content has {} columns for {} nodes",
            content.node_count(),
            network.node_count()
        )));
    }
    let mut out = BufWriter::new(File::create(content_path)?);
    for i in 0..network.node_count() {
        write!(out, "{}", network.ids()[i])?;
        for v in content.column(i) {
            write!(out, "\t{v}")?;
        }
        let label = match (network.labels(), network.label_names()) {
            (Some(labels), names) if !names.is_empty() => names[labels[i]].as_str(),
            _ => "unlabeled",
        };
        writeln!(out, "\t{label}")?;
    }
    out.flush()?;

    let mut out = BufWriter::new(File::create(cites_path)?);
    for (src, tgt) in network.links() {
        writeln!(out, "{}\t{}", network.ids()[tgt], network.ids()[src])?;
    }
    out.flush()?;
    Ok(())
}

fn annotate_io(e: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", PathBuf::from(path).display()),
    ))
}
