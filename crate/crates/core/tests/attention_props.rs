#![allow(clippy::needless_range_loop)]

mod common;

use bian::attention::{
    fuse, gat_forward, tgat_forward, time_conditioned_forward, AttentionOutput, AttentionWeights, FusionMode,
    TemporalWeights,
};
use bian::graph::{undirected_adjacency, LineGraph, Neighborhood};
use bian::tensor::{Tape, Tensor};
use common::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn tensor(d: &Dense, cols: usize) -> Tensor {
    Tensor::new(d.len(), cols, d.iter().flatten().copied().collect()).unwrap()
}

fn rows(t: &Tensor) -> Dense {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

struct Case {
    edges: Vec<(usize, usize)>,
    n: usize,
    h: Dense,
    wq: Dense,
    wk: Dense,
    wv: Dense,
}

const F_IN: usize = 3;
const D_ATTN: usize = 4;
const F_OUT: usize = 2;

fn case(rng: &mut rand_chacha::ChaCha8Rng) -> Case {
    let n = rng.random_range(1..=8);
    Case {
        edges: random_edges(rng, n, 12),
        n,
        h: random_dense(rng, n, F_IN),
        wq: random_dense(rng, F_IN, D_ATTN),
        wk: random_dense(rng, F_IN, D_ATTN),
        wv: random_dense(rng, F_IN, F_OUT),
    }
}

fn run_plain(c: &Case, h: &Dense, adj: &[Vec<usize>], times: Option<&[f64]>) -> (Tensor, Vec<f64>, Neighborhood) {
    let nb = Neighborhood::from_adjacency(adj, true);
    let mut tape = Tape::new();
    let hv = tape.constant(tensor(h, F_IN));
    let w = AttentionWeights {
        wq: tape.constant(tensor(&c.wq, D_ATTN)),
        wk: tape.constant(tensor(&c.wk, D_ATTN)),
        wv: tape.constant(tensor(&c.wv, F_OUT)),
    };
    let AttentionOutput { out, weights, pairs } = match times {
        None => gat_forward(&mut tape, &nb, hv, &w).unwrap(),
        Some(t) => time_conditioned_forward(&mut tape, &nb, hv, t, &w).unwrap(),
    };
    (tape.value(out).clone(), tape.value(weights).data().to_vec(), pairs)
}

fn dense_beta(weights: &[f64], pairs: &Neighborhood, n: usize) -> Dense {
    let mut b = vec![vec![0.0; n]; n];
    for p in 0..pairs.num_pairs() {
        b[pairs.dst[p]][pairs.src[p]] = weights[p];
    }
    b
}

#[test]
fn plain_and_time_conditioned_match_dense_oracle() {
    let mut rng = seeded(11);
    for _ in 0..200 {
        let c = case(&mut rng);
        let adj = undirected_adjacency(c.n, &c.edges);
        let times: Vec<f64> = (0..c.n).map(|_| rng.random_range(0..4) as f64 / 3.0).collect();
        let q = matmul(&c.h, &c.wq, D_ATTN);
        let k = matmul(&c.h, &c.wk, D_ATTN);
        let v = matmul(&c.h, &c.wv, F_OUT);
        let scale = 1.0 / (D_ATTN as f64).sqrt();
        for t in [None, Some(times.as_slice())] {
            let (out, w, pairs) = run_plain(&c, &c.h, &adj, t);
            let allowed = allowed_pairs(&adj, t);
            let (beta, want) = dense_attention(&q, &k, &v, &allowed, scale);
            let got_beta = dense_beta(&w, &pairs, c.n);
            for i in 0..c.n {
                for j in 0..c.n {
                    assert!((got_beta[i][j] - beta[i][j]).abs() <= 1e-12);
                }
                for f in 0..F_OUT {
                    assert!((out.get(i, f) - want[i][f]).abs() <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn weights_are_distributions_with_causal_zeros() {
    let mut rng = seeded(12);
    for _ in 0..200 {
        let c = case(&mut rng);
        let adj = undirected_adjacency(c.n, &c.edges);
        let times: Vec<f64> = (0..c.n).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, w, pairs) = run_plain(&c, &c.h, &adj, Some(&times));
        let beta = dense_beta(&w, &pairs, c.n);
        for i in 0..c.n {
            let s: f64 = beta[i].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            for j in 0..c.n {
                if times[j] > times[i] {
                    assert_eq!(beta[i][j], 0.0);
                }
            }
        }
    }
}

#[test]
fn relabeling_permutes_outputs_exactly() {
    let mut rng = seeded(13);
    for _ in 0..50 {
        let c = case(&mut rng);
        let times: Vec<f64> = (0..c.n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut perm: Vec<usize> = (0..c.n).collect();
        perm.shuffle(&mut rng);
        let edges2: Vec<(usize, usize)> = c.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        let mut h2 = vec![Vec::new(); c.n];
        let mut t2 = vec![0.0; c.n];
        for i in 0..c.n {
            h2[perm[i]] = c.h[i].clone();
            t2[perm[i]] = times[i];
        }
        let adj = undirected_adjacency(c.n, &c.edges);
        let adj2 = undirected_adjacency(c.n, &edges2);
        for (ta, tb) in [(None, None), (Some(times.as_slice()), Some(t2.as_slice()))] {
            let (a, wa, pa) = run_plain(&c, &c.h, &adj, ta);
            let (b, wb, pb) = run_plain(&c, &h2, &adj2, tb);
            let (ba, bb) = (dense_beta(&wa, &pa, c.n), dense_beta(&wb, &pb, c.n));
            for i in 0..c.n {
                assert_eq!(a.row(i), b.row(perm[i]));
                for j in 0..c.n {
                    assert_eq!(ba[i][j], bb[perm[i]][perm[j]]);
                }
            }
        }
    }
}

fn temporal(rng: &mut rand_chacha::ChaCha8Rng, d: usize) -> (Dense, Dense, Dense, Vec<f64>) {
    let q = random_dense(rng, d, 2);
    let k = random_dense(rng, d, 2);
    let wv = random_dense(rng, F_IN + 2 * d, F_OUT);
    let freqs = (0..d).map(|_| 10f64.powf(rng.random_range(0.0..2.0))).collect();
    (q, k, wv, freqs)
}

fn run_tgat(
    nb: &Neighborhood,
    h: &Dense,
    times: &[f64],
    (q, k, wv, freqs): &(Dense, Dense, Dense, Vec<f64>),
) -> (Tensor, Vec<f64>, Neighborhood) {
    let mut tape = Tape::new();
    let hv = tape.constant(tensor(h, F_IN));
    let w = TemporalWeights {
        q_coeffs: tape.constant(tensor(q, 2)),
        k_coeffs: tape.constant(tensor(k, 2)),
        wv: tape.constant(tensor(wv, F_OUT)),
        freqs: tape.constant(Tensor::row_vector(freqs.clone())),
    };
    let o = tgat_forward(&mut tape, nb, hv, times, &w).unwrap();
    (tape.value(o.out).clone(), tape.value(o.weights).data().to_vec(), o.pairs)
}

#[test]
fn temporal_attention_is_shift_invariant() {
    let mut rng = seeded(14);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let edges = random_edges(&mut rng, n, 10);
        let m = edges.len();
        if m == 0 {
            continue;
        }
        let nb = LineGraph::from_edges(n, &edges, &(0..m).collect::<Vec<_>>()).neighborhood(true);
        let h = random_dense(&mut rng, m, F_IN);
        let p = temporal(&mut rng, 3);
        let times: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let c = rng.random_range(-1.0..1.0);
        let shifted: Vec<f64> = times.iter().map(|t| t + c).collect();
        let (a, wa, pa) = run_tgat(&nb, &h, &times, &p);
        let (b, wb, pb) = run_tgat(&nb, &h, &shifted, &p);
        assert_eq!(pa, pb);
        worst = worst.max(a.max_abs_diff(&b));
        for (x, y) in wa.iter().zip(&wb) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst <= 1e-9, "max change under shift {worst:e}");
}

#[test]
fn equal_timestamps_mask_nothing() {
    let mut rng = seeded(15);
    for _ in 0..50 {
        let n = rng.random_range(2..=6);
        let edges = random_edges(&mut rng, n, 10);
        let m = edges.len();
        if m == 0 {
            continue;
        }
        let nb = LineGraph::from_edges(n, &edges, &(0..m).collect::<Vec<_>>()).neighborhood(true);
        let h = random_dense(&mut rng, m, F_IN);
        let p = temporal(&mut rng, 2);
        let (_, w, pairs) = run_tgat(&nb, &h, &vec![0.25; m], &p);
        assert_eq!(pairs, nb);
        // Identical queries and keys give uniform weights.
        for win in nb.offsets.windows(2) {
            let share = 1.0 / (win[1] - win[0]) as f64;
            for x in &w[win[0]..win[1]] {
                assert!((x - share).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn two_row_fusion_by_hand() {
    let zn = [[1.0, 0.0], [0.5, -1.0]];
    let ze = [[0.0, 2.0], [1.0, 1.0]];
    for mode in [FusionMode::AttnNodeQuery, FusionMode::AttnEdgeQuery, FusionMode::Concat] {
        let mut tape = Tape::new();
        let n = tape.constant(Tensor::from_rows(&zn));
        let e = tape.constant(Tensor::from_rows(&ze));
        let out = fuse(&mut tape, n, e, mode, None).unwrap();
        let got = rows(tape.value(out));
        for i in 0..2 {
            let want: Vec<f64> = match mode {
                FusionMode::Concat => vec![ze[i][0], ze[i][1], zn[i][0], zn[i][1]],
                _ => {
                    let q = if mode == FusionMode::AttnNodeQuery { zn[i] } else { ze[i] };
                    let dot = |a: [f64; 2], b: [f64; 2]| (a[0] * b[0] + a[1] * b[1]) / 2f64.sqrt();
                    let (se, sn) = (dot(q, ze[i]), dot(q, zn[i]));
                    let (ae, an) = (se.exp() / (se.exp() + sn.exp()), sn.exp() / (se.exp() + sn.exp()));
                    vec![ae * ze[i][0] + an * zn[i][0], ae * ze[i][1] + an * zn[i][1]]
                }
            };
            assert_eq!(got[i].len(), want.len());
            for (g, w) in got[i].iter().zip(&want) {
                assert!((g - w).abs() <= 1e-12, "{mode}: {g} vs {w}");
            }
        }
    }
}
