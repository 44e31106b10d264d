use super::EdgeAttributedGraph;
use crate::tensor::Tensor;

/// Sparse node×edge incidence structure `H` with its degree vector `D_n`.
///
/// `h(v, e) = 1` iff `v` is an endpoint of `e`. A self-loop contributes a
/// single one to its column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceMatrix {
    m: usize,
    incident: Vec<Vec<usize>>,
}

impl IncidenceMatrix {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut incident = vec![Vec::new(); n];
        for (j, &(u, v)) in edges.iter().enumerate() {
            incident[u].push(j);
            if v != u {
                incident[v].push(j);
            }
        }
        // Edge ids are pushed in increasing order, so each list is sorted.
        IncidenceMatrix { m: edges.len(), incident }
    }

    pub fn num_nodes(&self) -> usize {
        self.incident.len()
    }

    pub fn num_edges(&self) -> usize {
        self.m
    }

    /// Sorted ids of the edges incident to `v`.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.incident
    }

    pub fn get(&self, v: usize, e: usize) -> bool {
        self.incident[v].binary_search(&e).is_ok()
    }

    /// `D_n[i] = Σ_ε H[i, ε]`.
    pub fn degrees(&self) -> Vec<usize> {
        self.incident.iter().map(Vec::len).collect()
    }

    pub fn to_dense(&self) -> Tensor {
        let mut h = Tensor::zeros(self.incident.len(), self.m);
        for (v, es) in self.incident.iter().enumerate() {
            for &e in es {
                h.set(v, e, 1.0);
            }
        }
        h
    }
}

pub fn incidence(g: &EdgeAttributedGraph) -> IncidenceMatrix {
    IncidenceMatrix::from_edges(g.num_nodes(), g.edges())
}
