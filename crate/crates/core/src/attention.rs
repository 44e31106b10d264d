//! Learnable layers: scaled dot-product attention over sparse neighborhoods
//! (plain, temporal and time-conditioned), edge-to-node convolution, and
//! fusion of node and edge-aggregated embeddings.
//!
//! Weights are applied on the right (`h · W`), so a projection from `F_in`
//! to `F_out` features has shape `F_in × F_out`.

use std::fmt;
use std::str::FromStr;

use crate::error::{BianError, Result};
use crate::graph::{IncidenceMatrix, Neighborhood};
use crate::tensor::{Tape, Var};

/// Projections of a plain or time-conditioned attention layer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    /// `F_in × d_attn`
    pub wq: Var,
    /// `F_in × d_attn`
    pub wk: Var,
    /// `F_in × F_out`
    pub wv: Var,
}

/// Projections of a temporal attention layer.
///
/// Queries and keys are `φ(t)` passed through per-frequency rotation-scaling
/// blocks (`d × 2` coefficient tables), which keeps every score a function of
/// the time span alone. Values see the source features concatenated with
/// `φ(tᵢ − tⱼ)`, so `wv` is `(F_in + 2d) × F_out`.
#[derive(Clone, Copy, Debug)]
pub struct TemporalWeights {
    pub q_coeffs: Var,
    pub k_coeffs: Var,
    pub wv: Var,
    /// `1 × d` frequency row.
    pub freqs: Var,
}

/// Layer output plus the attention weights `β'` it used.
#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub out: Var,
    /// `P×1`, aligned with `pairs`.
    pub weights: Var,
    pub pairs: Neighborhood,
}

pub fn gat_forward(tape: &mut Tape, nb: &Neighborhood, h: Var, w: &AttentionWeights) -> Result<AttentionOutput> {
    check_rows(tape, h, nb)?;
    attend(tape, nb.clone(), h, w)
}

/// Attribute-driven attention restricted to neighbors whose timestamp does
/// not exceed the target's.
pub fn time_conditioned_forward(
    tape: &mut Tape,
    nb: &Neighborhood,
    h: Var,
    times: &[f64],
    w: &AttentionWeights,
) -> Result<AttentionOutput> {
    check_rows(tape, h, nb)?;
    check_times(times, nb)?;
    attend(tape, nb.causal(times), h, w)
}

fn attend(tape: &mut Tape, pairs: Neighborhood, h: Var, w: &AttentionWeights) -> Result<AttentionOutput> {
    let q = tape.matmul(h, w.wq)?;
    let k = tape.matmul(h, w.wk)?;
    let d_attn = tape.shape(q).1;
    let scores = tape.pair_dot(q, k, &pairs.dst, &pairs.src, 1.0 / (d_attn as f64).sqrt())?;
    let beta = tape.segment_softmax(scores, &pairs.offsets)?;
    let v = tape.matmul(h, w.wv)?;
    let agg = tape.pair_aggregate(beta, v, &pairs.src, &pairs.dst, pairs.num_targets())?;
    let out = tape.elu(agg);
    Ok(AttentionOutput { out, weights: beta, pairs })
}

/// Temporal attention: `β'ᵢⱼ = softmax_j(Qᵢ·Kⱼ/√(2d) + Mᵢⱼ)` with
/// `Q = rot_q(φ(tᵢ))`, `K = rot_k(φ(tⱼ))` and `M` the causal mask
/// (`−∞` when `tⱼ > tᵢ`).
pub fn tgat_forward(
    tape: &mut Tape,
    nb: &Neighborhood,
    h: Var,
    times: &[f64],
    w: &TemporalWeights,
) -> Result<AttentionOutput> {
    check_rows(tape, h, nb)?;
    check_times(times, nb)?;
    let pairs = nb.causal(times);
    let phi = tape.sincos_encode(w.freqs, times)?;
    let q = tape.freq_rotate(phi, w.q_coeffs)?;
    let k = tape.freq_rotate(phi, w.k_coeffs)?;
    let dim = tape.shape(phi).1;
    let scores = tape.pair_dot(q, k, &pairs.dst, &pairs.src, 1.0 / (dim as f64).sqrt())?;
    let beta = tape.segment_softmax(scores, &pairs.offsets)?;

    let spans: Vec<f64> = pairs.dst.iter().zip(&pairs.src).map(|(&i, &j)| times[i] - times[j]).collect();
    let hs = tape.gather_rows(h, &pairs.src)?;
    let rel = tape.sincos_encode(w.freqs, &spans)?;
    let joined = tape.concat_cols(&[hs, rel])?;
    let v = tape.matmul(joined, w.wv)?;
    let ids: Vec<usize> = (0..pairs.num_pairs()).collect();
    let agg = tape.pair_aggregate(beta, v, &ids, &pairs.dst, pairs.num_targets())?;
    let out = tape.elu(agg);
    Ok(AttentionOutput { out, weights: beta, pairs })
}

fn check_rows(tape: &Tape, h: Var, nb: &Neighborhood) -> Result<()> {
    let rows = tape.shape(h).0;
    if rows != nb.num_targets() {
        return Err(BianError::shape("attention input", tape.shape(h), (nb.num_targets(), 0)));
    }
    Ok(())
}

fn check_times(times: &[f64], nb: &Neighborhood) -> Result<()> {
    if times.len() != nb.num_targets() {
        return Err(BianError::shape("attention timestamps", (times.len(), 1), (nb.num_targets(), 1)));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(BianError::NonFinite("attention timestamps".into()));
    }
    Ok(())
}

/// Edge-to-node convolution `σ(D_n⁻¹ H Z_e W)` with `σ = ELU`.
///
/// Row `i` is the mean of `(Z_e W)[e]` over edges incident to `i`; nodes
/// with no incident edge get a zero row.
pub fn etnconv(tape: &mut Tape, h: &IncidenceMatrix, z_e: Var, w: Var) -> Result<Var> {
    if tape.shape(z_e).0 != h.num_edges() {
        return Err(BianError::shape("etnconv", tape.shape(z_e), (h.num_edges(), 0)));
    }
    let zw = tape.matmul(z_e, w)?;
    let merged = tape.segment_mean(zw, h.rows())?;
    Ok(tape.elu(merged))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FusionMode {
    /// `[Z_e-merged | Z_n]`
    Concat,
    /// Query from the edge-aggregated embedding.
    AttnEdgeQuery,
    /// Query from the node embedding.
    #[default]
    AttnNodeQuery,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Concat => "concat",
            FusionMode::AttnEdgeQuery => "attn_edge_query",
            FusionMode::AttnNodeQuery => "attn_node_query",
        })
    }
}

impl FromStr for FusionMode {
    type Err = BianError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionMode::Concat),
            "attn_edge_query" => Ok(FusionMode::AttnEdgeQuery),
            "attn_node_query" => Ok(FusionMode::AttnNodeQuery),
            other => Err(BianError::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Merges `Z_n` and `Z_e-merged`.
///
/// In the attention modes each node attends over its own two views only:
/// with `(n', e')` the (optionally projected) rows and `q` the query view,
/// `out = softmax([q·e', q·n']/√d)·[e'; n']`.
pub fn fuse(tape: &mut Tape, z_n: Var, z_em: Var, mode: FusionMode, projections: Option<(Var, Var)>) -> Result<Var> {
    if tape.shape(z_n).0 != tape.shape(z_em).0 {
        return Err(BianError::shape("fuse", tape.shape(z_n), tape.shape(z_em)));
    }
    if mode == FusionMode::Concat {
        return tape.concat_cols(&[z_em, z_n]);
    }
    let (node, edge) = match projections {
        Some((pn, pe)) => (tape.matmul(z_n, pn)?, tape.matmul(z_em, pe)?),
        None => (z_n, z_em),
    };
    if tape.shape(node) != tape.shape(edge) {
        return Err(BianError::shape("fuse (attention needs a common width)", tape.shape(node), tape.shape(edge)));
    }
    let d = tape.shape(node).1;
    let query = match mode {
        FusionMode::AttnNodeQuery => node,
        _ => edge,
    };
    let s_edge = tape.row_dot(query, edge)?;
    let s_node = tape.row_dot(query, node)?;
    let scores = tape.concat_cols(&[s_edge, s_node])?;
    let scores = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let a = tape.row_softmax(scores, None)?.out;
    let a_edge = tape.select_col(a, 0)?;
    let a_node = tape.select_col(a, 1)?;
    let pe = tape.mul_col(a_edge, edge)?;
    let pn = tape.mul_col(a_node, node)?;
    tape.add(pe, pn)
}
