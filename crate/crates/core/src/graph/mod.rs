//! Edge-attributed graphs and their structural transforms.

mod incidence;
mod line_graph;
mod sampling;

pub use incidence::{incidence, IncidenceMatrix};
pub use line_graph::{line_graph, EdgeOrigin, LineGraph};
pub use sampling::{sample_subgraph, NeighborSampler, SubEdge, Subgraph};

use crate::error::{BianError, Result};
use crate::tensor::Tensor;

/// Number of mutually exclusive edge types.
pub const EDGE_TYPES: usize = 11;

/// Per-node class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Normal,
    Fraud,
    /// Registered-but-inactive users kept for connectivity; code 2 or 3.
    Background(u8),
    Unlabeled,
}

impl Label {
    pub fn code(self) -> i8 {
        match self {
            Label::Normal => 0,
            Label::Fraud => 1,
            Label::Background(k) => k as i8,
            Label::Unlabeled => -1,
        }
    }

    pub fn from_code(code: i8) -> Option<Label> {
        match code {
            0 => Some(Label::Normal),
            1 => Some(Label::Fraud),
            2 | 3 => Some(Label::Background(code as u8)),
            -1 => Some(Label::Unlabeled),
            _ => None,
        }
    }

    /// `Some(0.0 | 1.0)` for the two supervised classes.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Normal => Some(0.0),
            Label::Fraud => Some(1.0),
            _ => None,
        }
    }
}

/// Train/valid/test node masks; pairwise disjoint.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Masks {
    pub train: Vec<bool>,
    pub valid: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(n: usize) -> Self {
        Masks { train: vec![false; n], valid: vec![false; n], test: vec![false; n] }
    }

    pub fn nodes(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
    }
}

/// `G = (V, E, X_V, T_E)` with labels and split masks.
///
/// Edges are ordered pairs `(u, v)`; edge `j` owns row `j` of every edge
/// attribute. Timestamps are held twice: raw (as stored on disk) and
/// rescaled to `[0, 1]` over the observed window, which is what the model
/// reads.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeAttributedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    node_attrs: Tensor,
    raw_timestamps: Option<Vec<f64>>,
    timestamps: Option<Vec<f64>>,
    edge_types: Option<Vec<u8>>,
    labels: Vec<Label>,
    masks: Masks,
}

impl EdgeAttributedGraph {
    /// Unlabeled graph with no edge attributes and empty masks.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, node_attrs: Tensor) -> Result<Self> {
        let g = EdgeAttributedGraph {
            n,
            edges,
            node_attrs,
            raw_timestamps: None,
            timestamps: None,
            edge_types: None,
            labels: vec![Label::Unlabeled; n],
            masks: Masks::empty(n),
        };
        g.validate()?;
        Ok(g)
    }

    /// Attaches raw timestamps and rescales them to `[0, 1]`.
    pub fn with_timestamps(mut self, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != self.edges.len() {
            return Err(BianError::Graph(format!("{} timestamps for {} edges", raw.len(), self.edges.len())));
        }
        if let Some((j, t)) = raw.iter().enumerate().find(|(_, t)| !t.is_finite() || **t < 0.0) {
            return Err(BianError::Graph(format!("edge {j} has invalid timestamp {t}")));
        }
        self.timestamps = Some(normalize_times(&raw));
        self.raw_timestamps = Some(raw);
        Ok(self)
    }

    pub fn with_edge_types(mut self, types: Vec<u8>) -> Result<Self> {
        if types.len() != self.edges.len() {
            return Err(BianError::Graph(format!("{} edge types for {} edges", types.len(), self.edges.len())));
        }
        if let Some((j, t)) = types.iter().enumerate().find(|(_, &t)| t as usize >= EDGE_TYPES) {
            return Err(BianError::Graph(format!("edge {j} has type {t} outside [0, {EDGE_TYPES})")));
        }
        self.edge_types = Some(types);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<Label>, masks: Masks) -> Result<Self> {
        self.labels = labels;
        self.masks = masks;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.node_attrs.rows() != n {
            return Err(BianError::Graph(format!(
                "node attribute matrix has {} rows for {n} nodes",
                self.node_attrs.rows()
            )));
        }
        for (j, &(u, v)) in self.edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(BianError::Graph(format!("edge {j} = ({u}, {v}) out of range for {n} nodes")));
            }
        }
        if self.labels.len() != n {
            return Err(BianError::Graph(format!("{} labels for {n} nodes", self.labels.len())));
        }
        let m = &self.masks;
        if m.train.len() != n || m.valid.len() != n || m.test.len() != n {
            return Err(BianError::Graph("mask length differs from node count".into()));
        }
        for i in 0..n {
            let count = m.train[i] as u8 + m.valid[i] as u8 + m.test[i] as u8;
            if count > 1 {
                return Err(BianError::Graph(format!("node {i} is in more than one split")));
            }
            if count == 1 && self.labels[i].target().is_none() {
                return Err(BianError::Graph(format!("node {i} is in a split but has label {:?}", self.labels[i])));
            }
        }
        if !self.node_attrs.all_finite() {
            return Err(BianError::NonFinite("node attributes".into()));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_attrs(&self) -> &Tensor {
        &self.node_attrs
    }

    pub fn node_attr_dim(&self) -> usize {
        self.node_attrs.cols()
    }

    /// Timestamps rescaled to `[0, 1]`.
    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    pub fn raw_timestamps(&self) -> Option<&[f64]> {
        self.raw_timestamps.as_deref()
    }

    /// `(t_min, t_max)` of the raw timestamps.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let raw = self.raw_timestamps.as_ref()?;
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (!raw.is_empty()).then_some((lo, hi))
    }

    /// Adds `c` to every model-facing (normalized) timestamp; raw values are
    /// untouched.
    pub fn shift_timestamps(&mut self, c: f64) {
        if let Some(ts) = self.timestamps.as_mut() {
            for t in ts {
                *t += c;
            }
        }
    }

    pub fn edge_types(&self) -> Option<&[u8]> {
        self.edge_types.as_deref()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// `T_E`: normalized timestamp (when present) followed by the one-hot
    /// edge type (when present).
    pub fn edge_attr_matrix(&self) -> Tensor {
        let has_t = self.timestamps.is_some() as usize;
        let has_k = if self.edge_types.is_some() { EDGE_TYPES } else { 0 };
        let mut t = Tensor::zeros(self.edges.len(), has_t + has_k);
        for j in 0..self.edges.len() {
            let row = t.row_mut(j);
            if let Some(ts) = &self.timestamps {
                row[0] = ts[j];
            }
            if let Some(ks) = &self.edge_types {
                row[has_t + ks[j] as usize] = 1.0;
            }
        }
        t
    }
}

pub(crate) fn normalize_times(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    raw.iter().map(|&t| if span > 0.0 { (t - lo) / span } else { 0.0 }).collect()
}

/// Relabels nodes and edges: old node `i` becomes `node_perm[i]`, old edge
/// `j` becomes `edge_perm[j]`. Every attribute moves with its owner.
pub fn permute(g: &EdgeAttributedGraph, node_perm: &[usize], edge_perm: &[usize]) -> Result<EdgeAttributedGraph> {
    check_bijection(node_perm, g.n, "node")?;
    check_bijection(edge_perm, g.edges.len(), "edge")?;

    let mut edges = vec![(0, 0); g.edges.len()];
    for (j, &(u, v)) in g.edges.iter().enumerate() {
        edges[edge_perm[j]] = (node_perm[u], node_perm[v]);
    }
    let mut attrs = Tensor::zeros(g.n, g.node_attrs.cols());
    let mut labels = vec![Label::Unlabeled; g.n];
    let mut masks = Masks::empty(g.n);
    for (i, &k) in node_perm.iter().enumerate() {
        attrs.row_mut(k).copy_from_slice(g.node_attrs.row(i));
        labels[k] = g.labels[i];
        masks.train[k] = g.masks.train[i];
        masks.valid[k] = g.masks.valid[i];
        masks.test[k] = g.masks.test[i];
    }
    let move_edges = |xs: &Vec<f64>| {
        let mut out = vec![0.0; xs.len()];
        for (j, &x) in xs.iter().enumerate() {
            out[edge_perm[j]] = x;
        }
        out
    };
    Ok(EdgeAttributedGraph {
        n: g.n,
        edges,
        node_attrs: attrs,
        raw_timestamps: g.raw_timestamps.as_ref().map(move_edges),
        timestamps: g.timestamps.as_ref().map(move_edges),
        edge_types: g.edge_types.as_ref().map(|ks| {
            let mut out = vec![0u8; ks.len()];
            for (j, &k) in ks.iter().enumerate() {
                out[edge_perm[j]] = k;
            }
            out
        }),
        labels,
        masks,
    })
}

fn check_bijection(perm: &[usize], size: usize, what: &str) -> Result<()> {
    if perm.len() != size {
        return Err(BianError::Permutation(format!(
            "{what} permutation has length {} but {size} items exist",
            perm.len()
        )));
    }
    let mut seen = vec![false; size];
    for &p in perm {
        if p >= size || std::mem::replace(&mut seen[p], true) {
            return Err(BianError::Permutation(format!("{what} permutation is not a bijection")));
        }
    }
    Ok(())
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Attention neighborhoods as `(target, source)` pairs grouped by target.
///
/// Targets appear in order; pairs for target `i` occupy
/// `offsets[i]..offsets[i + 1]`. With self-inclusion the self pair comes
/// first, then neighbors in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhood {
    pub offsets: Vec<usize>,
    pub dst: Vec<usize>,
    pub src: Vec<usize>,
}

impl Neighborhood {
    /// `adjacency[i]` lists the neighbors of `i`; self entries are ignored.
    pub fn from_adjacency(adjacency: &[Vec<usize>], include_self: bool) -> Self {
        let mut offsets = Vec::with_capacity(adjacency.len() + 1);
        let mut dst = Vec::new();
        let mut src = Vec::new();
        offsets.push(0);
        for (i, nbrs) in adjacency.iter().enumerate() {
            if include_self {
                dst.push(i);
                src.push(i);
            }
            for &j in nbrs {
                if j != i {
                    dst.push(i);
                    src.push(j);
                }
            }
            offsets.push(dst.len());
        }
        Neighborhood { offsets, dst, src }
    }

    pub fn num_targets(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_pairs(&self) -> usize {
        self.dst.len()
    }

    /// Drops pairs `(i, j)` with `times[j] > times[i]`. Self pairs always
    /// survive.
    pub fn causal(&self, times: &[f64]) -> Neighborhood {
        let mut offsets = Vec::with_capacity(self.offsets.len());
        let mut dst = Vec::new();
        let mut src = Vec::new();
        offsets.push(0);
        for w in self.offsets.windows(2) {
            for p in w[0]..w[1] {
                let (i, j) = (self.dst[p], self.src[p]);
                if i == j || times[j] <= times[i] {
                    dst.push(i);
                    src.push(j);
                }
            }
            offsets.push(dst.len());
        }
        Neighborhood { offsets, dst, src }
    }
}

/// Undirected, deduplicated neighbor lists over `n` nodes; self-loops are
/// dropped.
pub fn undirected_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    adj
}
