//! Independent reference implementations used by the integration and
//! acceptance tests. Everything here is written from the definitions with
//! dense loops and no shared code paths beyond plain data types.

#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bian::graph::{EdgeAttributedGraph, Label, EDGE_TYPES};

pub type Dense = Vec<Vec<f64>>;

pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, max_m: usize) -> Vec<(usize, usize)> {
    let m = rng.random_range(0..=max_m);
    (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect()
}

pub fn random_dense(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Dense {
    (0..r).map(|_| (0..c).map(|_| rng.random_range(-1.5..1.5)).collect()).collect()
}

/// `(n, edges)` with `1 ≤ n ≤ max_n` and up to `max_m` edges, self-loops and
/// parallel edges allowed.
pub fn graph_strategy(max_n: usize, max_m: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_n).prop_flat_map(move |n| (Just(n), prop::collection::vec((0..n, 0..n), 0..=max_m)))
}

/// `H[v][e] = 1` iff `v ∈ {u_e, w_e}`.
pub fn brute_incidence(n: usize, edges: &[(usize, usize)]) -> Dense {
    (0..n).map(|v| edges.iter().map(|&(a, b)| if v == a || v == b { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn brute_degrees(h: &Dense) -> Vec<f64> {
    h.iter().map(|row| row.iter().sum()).collect()
}

/// Line-graph edges `(j, k)`, `j < k`, whenever the endpoint sets of
/// edges `j` and `k` intersect.
pub fn brute_line_graph(edges: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..edges.len() {
        for k in j + 1..edges.len() {
            let a: BTreeSet<usize> = [edges[j].0, edges[j].1].into();
            let b: BTreeSet<usize> = [edges[k].0, edges[k].1].into();
            if !a.is_disjoint(&b) {
                out.push((j, k));
            }
        }
    }
    out
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// `a · b` where `b` has `cols` columns (needed when `b` has no rows).
pub fn matmul(a: &Dense, b: &Dense, cols: usize) -> Dense {
    let inner = b.len();
    a.iter().map(|row| (0..cols).map(|c| (0..inner).map(|k| row[k] * b[k][c]).sum()).collect()).collect()
}

/// `ELU(D⁻¹ H Z W)` by explicit matrix products; zero-degree rows stay 0.
pub fn dense_etnconv(h: &Dense, z: &Dense, w: &Dense) -> Dense {
    let hz = matmul(h, z, w.len());
    let deg = brute_degrees(h);
    let scaled: Dense =
        hz.iter().zip(&deg).map(|(row, &d)| row.iter().map(|x| if d == 0.0 { 0.0 } else { x / d }).collect()).collect();
    matmul(&scaled, w, w.first().map_or(0, Vec::len))
        .into_iter()
        .map(|row| row.into_iter().map(elu).collect())
        .collect()
}

fn ascending_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Full `n × n` masked softmax attention. `allowed[i][j]` marks the
/// admissible pairs; masked logits are `−∞`. Reductions add terms in
/// ascending order. Returns `(β, outputs)`.
pub fn dense_attention(q: &Dense, k: &Dense, v: &Dense, allowed: &[Vec<bool>], scale: f64) -> (Dense, Dense) {
    let n = q.len();
    let mut beta = vec![vec![0.0; n]; n];
    for i in 0..n {
        let logits: Vec<f64> = (0..n)
            .map(|j| {
                if allowed[i][j] {
                    scale * q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum::<f64>()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let z = ascending_sum(e.iter().copied().filter(|&x| x != 0.0).collect());
        for j in 0..n {
            beta[i][j] = e[j] / z;
        }
    }
    let f = v.first().map_or(0, Vec::len);
    let out = (0..n)
        .map(|i| {
            (0..f)
                .map(|c| {
                    let terms = (0..n).filter(|&j| allowed[i][j]).map(|j| beta[i][j] * v[j][c]).collect();
                    elu(ascending_sum(terms))
                })
                .collect()
        })
        .collect();
    (beta, out)
}

/// Neighbor mask with self-inclusion, optionally causal in `times`.
pub fn allowed_pairs(adj: &[Vec<usize>], times: Option<&[f64]>) -> Vec<Vec<bool>> {
    let n = adj.len();
    let mut a = vec![vec![false; n]; n];
    for i in 0..n {
        a[i][i] = true;
        for &j in &adj[i] {
            a[i][j] = times.is_none_or(|t| t[j] <= t[i]);
        }
    }
    a
}

/// AUROC by enumerating every positive/negative pair.
pub fn pair_count_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut ties, mut p, mut n) = (0u64, 0u64, 0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            if scores[i] > scores[j] {
                wins += 1;
            } else if scores[i] == scores[j] {
                ties += 1;
            }
        }
    }
    (2 * wins + ties) as f64 / (2 * p * n) as f64
}

/// Per-node mean histograms of out-edge and in-edge types (22 features).
pub fn type_histograms(g: &EdgeAttributedGraph) -> Dense {
    let types = g.edge_types().expect("edge types");
    let mut feats = vec![vec![0.0; 2 * EDGE_TYPES]; g.num_nodes()];
    let mut out_deg = vec![0.0; g.num_nodes()];
    let mut in_deg = vec![0.0; g.num_nodes()];
    for (j, &(u, v)) in g.edges().iter().enumerate() {
        feats[u][types[j] as usize] += 1.0;
        out_deg[u] += 1.0;
        feats[v][EDGE_TYPES + types[j] as usize] += 1.0;
        in_deg[v] += 1.0;
    }
    for (i, f) in feats.iter_mut().enumerate() {
        for t in 0..EDGE_TYPES {
            if out_deg[i] > 0.0 {
                f[t] /= out_deg[i];
            }
            if in_deg[i] > 0.0 {
                f[EDGE_TYPES + t] /= in_deg[i];
            }
        }
    }
    feats
}

/// Logistic regression trained by full-batch gradient descent on the
/// training mask, scored by pair-counting AUROC on the test mask.
pub fn logistic_probe(g: &EdgeAttributedGraph, feats: &Dense) -> f64 {
    let labels = g.labels();
    let pick = |mask: &[bool]| -> Vec<usize> {
        (0..g.num_nodes()).filter(|&i| mask[i] && labels[i].target().is_some()).collect()
    };
    let train = pick(&g.masks().train);
    let test = pick(&g.masks().test);
    let y = |i: usize| if labels[i] == Label::Fraud { 1.0 } else { 0.0 };
    let d = feats[0].len();
    let pos = train.iter().filter(|&&i| y(i) == 1.0).count() as f64;
    let neg = train.len() as f64 - pos;
    let (wp, wn) = (0.5 / pos, 0.5 / neg);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..2000 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for &i in &train {
            let z: f64 = b + w.iter().zip(&feats[i]).map(|(a, x)| a * x).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let weight = if y(i) == 1.0 { wp } else { wn };
            let r = weight * (p - y(i));
            for k in 0..d {
                gw[k] += r * feats[i][k];
            }
            gb += r;
        }
        for k in 0..d {
            w[k] -= 2.0 * gw[k];
        }
        b -= 2.0 * gb;
    }
    let scores: Vec<f64> = test.iter().map(|&i| b + w.iter().zip(&feats[i]).map(|(a, x)| a * x).sum::<f64>()).collect();
    let truth: Vec<bool> = test.iter().map(|&i| y(i) == 1.0).collect();
    pair_count_auroc(&scores, &truth)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
