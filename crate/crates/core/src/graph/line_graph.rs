use super::{EdgeAttributedGraph, IncidenceMatrix, Neighborhood};
use crate::tensor::Tensor;

/// Where a line-graph vertex came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeOrigin {
    pub edge_id: usize,
    pub u: usize,
    pub v: usize,
}

/// Edge-dominated graph `L(G)`: one vertex per source edge, adjacent when
/// the two edges share at least one endpoint. Adjacency ignores edge
/// direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LineGraph {
    /// Unordered vertex pairs `(j, k)` with `j < k`, sorted.
    pub edges: Vec<(usize, usize)>,
    pub origin: Vec<EdgeOrigin>,
    /// Rows of `T_E` for each vertex, when built from a full graph.
    pub vertex_attrs: Option<Tensor>,
    adjacency: Vec<Vec<usize>>,
}

impl LineGraph {
    /// Builds the line graph of `edges` over `n` nodes; vertex `j` records
    /// `ids[j]` as its original edge id.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], ids: &[usize]) -> Self {
        assert_eq!(edges.len(), ids.len());
        let h = IncidenceMatrix::from_edges(n, edges);
        let mut adjacency = vec![Vec::new(); edges.len()];
        for inc in h.rows() {
            for (a, &j) in inc.iter().enumerate() {
                for &k in &inc[a + 1..] {
                    adjacency[j].push(k);
                    adjacency[k].push(j);
                }
            }
        }
        let mut pairs = Vec::new();
        for (j, adj) in adjacency.iter_mut().enumerate() {
            adj.sort_unstable();
            // Parallel edges share both endpoints and are listed twice.
            adj.dedup();
            pairs.extend(adj.iter().filter(|&&k| k > j).map(|&k| (j, k)));
        }
        let origin = edges.iter().zip(ids).map(|(&(u, v), &edge_id)| EdgeOrigin { edge_id, u, v }).collect();
        LineGraph { edges: pairs, origin, vertex_attrs: None, adjacency }
    }

    pub fn num_vertices(&self) -> usize {
        self.origin.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted neighbors of vertex `j`.
    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.adjacency[j]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn neighborhood(&self, include_self: bool) -> Neighborhood {
        Neighborhood::from_adjacency(&self.adjacency, include_self)
    }
}

pub fn line_graph(g: &EdgeAttributedGraph) -> LineGraph {
    let ids: Vec<usize> = (0..g.num_edges()).collect();
    let mut lg = LineGraph::from_edges(g.num_nodes(), g.edges(), &ids);
    lg.vertex_attrs = Some(g.edge_attr_matrix());
    lg
}
