use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{undirected_adjacency, EdgeAttributedGraph, IncidenceMatrix, LineGraph, Neighborhood};
use crate::error::{BianError, Result};

/// An edge of a sampled subgraph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SubEdge {
    /// Edge id in the full graph.
    pub id: usize,
    /// Local endpoints.
    pub u: usize,
    pub v: usize,
    /// True when the node that pulled this edge in is its source.
    pub outward: bool,
}

/// Mini-batch subgraph around a set of seed nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgraph {
    pub seeds: Vec<usize>,
    /// Local index of each seed, aligned with `seeds`.
    pub seed_local: Vec<usize>,
    /// Global node ids; the local id of a node is its position.
    pub nodes: Vec<usize>,
    pub edges: Vec<SubEdge>,
    local: HashMap<usize, usize>,
}

impl Subgraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.local.get(&global).copied()
    }

    pub fn local_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|e| (e.u, e.v)).collect()
    }

    pub fn edge_ids(&self) -> Vec<usize> {
        self.edges.iter().map(|e| e.id).collect()
    }

    pub fn incidence(&self) -> IncidenceMatrix {
        IncidenceMatrix::from_edges(self.nodes.len(), &self.local_edges())
    }

    pub fn line_graph(&self) -> LineGraph {
        LineGraph::from_edges(self.nodes.len(), &self.local_edges(), &self.edge_ids())
    }

    /// Attention neighborhoods on the node graph (undirected).
    pub fn node_neighborhood(&self, include_self: bool) -> Neighborhood {
        let adj = undirected_adjacency(self.nodes.len(), &self.local_edges());
        Neighborhood::from_adjacency(&adj, include_self)
    }
}

/// Layer-wise neighbor sampler over a fixed graph. Both in- and out-edges
/// count as incident.
pub struct NeighborSampler<'g> {
    graph: &'g EdgeAttributedGraph,
    incidence: IncidenceMatrix,
}

impl<'g> NeighborSampler<'g> {
    pub fn new(graph: &'g EdgeAttributedGraph) -> Self {
        NeighborSampler { graph, incidence: super::incidence(graph) }
    }

    pub fn graph(&self) -> &EdgeAttributedGraph {
        self.graph
    }

    /// Breadth-wise expansion from `seeds`: at every hop each frontier node
    /// keeps up to `fanout` of its incident edges, drawn without
    /// replacement. Deterministic in `rng_seed`.
    pub fn sample(&self, seeds: &[usize], fanout: usize, hops: usize, rng_seed: u64) -> Result<Subgraph> {
        if fanout == 0 || hops == 0 {
            return Err(BianError::Config("fanout and hops must be at least 1".into()));
        }
        if seeds.is_empty() {
            return Err(BianError::Config("no seed nodes".into()));
        }
        let n = self.graph.num_nodes();
        if let Some(&bad) = seeds.iter().find(|&&s| s >= n) {
            return Err(BianError::NodeOutOfRange { id: bad, n });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut nodes = Vec::new();
        let mut local = HashMap::new();
        let seed_local: Vec<usize> = seeds.iter().map(|&s| add_node(&mut local, &mut nodes, s).0).collect();

        let mut frontier: Vec<usize> = nodes.clone();
        let mut edges: Vec<SubEdge> = Vec::new();
        let mut taken = HashSet::new();
        let all_edges = self.graph.edges();
        for _ in 0..hops {
            let mut next = Vec::new();
            for &x in &frontier {
                let inc = self.incidence.incident(x);
                let chosen: Vec<usize> = if inc.len() <= fanout {
                    inc.to_vec()
                } else {
                    let mut pick = rand::seq::index::sample(&mut rng, inc.len(), fanout).into_vec();
                    pick.sort_unstable();
                    pick.into_iter().map(|i| inc[i]).collect()
                };
                for e in chosen {
                    if !taken.insert(e) {
                        continue;
                    }
                    let (gu, gv) = all_edges[e];
                    let other = if gu == x { gv } else { gu };
                    let (_, fresh) = add_node(&mut local, &mut nodes, other);
                    if fresh {
                        next.push(other);
                    }
                    edges.push(SubEdge { id: e, u: local[&gu], v: local[&gv], outward: gu == x });
                }
            }
            frontier = next;
        }
        Ok(Subgraph { seeds: seeds.to_vec(), seed_local, nodes, edges, local })
    }
}

fn add_node(local: &mut HashMap<usize, usize>, nodes: &mut Vec<usize>, g: usize) -> (usize, bool) {
    match local.get(&g) {
        Some(&l) => (l, false),
        None => {
            local.insert(g, nodes.len());
            nodes.push(g);
            (nodes.len() - 1, true)
        }
    }
}

pub fn sample_subgraph(
    g: &EdgeAttributedGraph,
    seeds: &[usize],
    fanout: usize,
    hops: usize,
    rng_seed: u64,
) -> Result<Subgraph> {
    NeighborSampler::new(g).sample(seeds, fanout, hops, rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn graph(n: usize, edges: Vec<(usize, usize)>) -> EdgeAttributedGraph {
        EdgeAttributedGraph::new(n, edges, Tensor::zeros(n, 1)).unwrap()
    }

    #[test]
    fn isolated_seed() {
        let g = graph(3, vec![(1, 2)]);
        let s = sample_subgraph(&g, &[0], 10, 2, 0).unwrap();
        assert_eq!(s.nodes, vec![0]);
        assert!(s.edges.is_empty());
    }

    #[test]
    fn fanout_not_binding_takes_all() {
        let g = graph(4, vec![(0, 1), (2, 0), (0, 3)]);
        let s = sample_subgraph(&g, &[0], 10, 1, 0).unwrap();
        assert_eq!(s.edge_ids(), vec![0, 1, 2]);
        let outward: Vec<bool> = s.edges.iter().map(|e| e.outward).collect();
        assert_eq!(outward, vec![true, false, true]);
    }

    #[test]
    fn out_of_range_seed() {
        let g = graph(3, vec![(1, 2)]);
        assert!(matches!(sample_subgraph(&g, &[3], 10, 2, 0), Err(BianError::NodeOutOfRange { id: 3, n: 3 })));
        assert!(sample_subgraph(&g, &[0], 0, 2, 0).is_err());
        assert!(sample_subgraph(&g, &[], 1, 2, 0).is_err());
    }

    #[test]
    fn self_loop_edge_in_subgraph() {
        let g = graph(2, vec![(0, 0), (0, 1)]);
        let s = sample_subgraph(&g, &[0], 10, 2, 0).unwrap();
        assert_eq!(s.num_edges(), 2);
        assert_eq!((s.edges[0].u, s.edges[0].v), (0, 0));
    }

    #[test]
    fn fanout_limits_star() {
        let edges = (1..30).map(|i| (0, i)).collect();
        let g = graph(30, edges);
        let s = sample_subgraph(&g, &[0], 5, 2, 11).unwrap();
        assert_eq!(s.num_edges(), 5);
        assert_eq!(s.num_nodes(), 6);
        for e in &s.edges {
            assert!(s.nodes[e.u] == 0 || s.nodes[e.v] == 0);
        }
    }
}
