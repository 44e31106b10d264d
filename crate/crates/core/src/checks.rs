//! Self-checks shared by the command line and the test suites: a small
//! fixture graph, finite-difference gradient checks of every layer and of
//! the end-to-end loss, and randomized trials of the temporal identity.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    etnconv, fuse, gat_forward, tgat_forward, time_conditioned_forward, AttentionWeights, FusionMode, TemporalWeights,
};
use crate::error::Result;
use crate::graph::{incidence, line_graph, sample_subgraph, EdgeAttributedGraph, Label, Masks};
use crate::model::{loss, BianModel, Bound, EdgeMode, ModelConfig};
use crate::temporal::{verify_lemma, FreqInit, TemporalEncoderParams};
use crate::tensor::{grad_check, Tape, Tensor, Var};

/// Relative-error ceiling for the gradient suite.
pub const GRAD_TOLERANCE: f64 = 1e-4;
/// Ceiling for the temporal identity and shift invariance.
pub const LEMMA_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.value <= self.threshold
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<28} {:.3e} (limit {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Six nodes, eight edges (one self-loop, one parallel pair), one isolated
/// background node, all edge attributes present.
pub fn fixture() -> EdgeAttributedGraph {
    let attrs = Tensor::new(6, 3, (0..18).map(|i| ((i * 7 % 11) as f64 - 5.0) / 4.0).collect()).expect("6×3");
    let edges = vec![(0, 1), (1, 2), (2, 0), (3, 2), (3, 4), (1, 3), (4, 1), (3, 3)];
    let labels = vec![Label::Fraud, Label::Normal, Label::Normal, Label::Fraud, Label::Normal, Label::Background(2)];
    let masks = Masks {
        train: vec![true, true, true, true, false, false],
        valid: vec![false, false, false, false, true, false],
        test: vec![false; 6],
    };
    EdgeAttributedGraph::new(6, edges, attrs)
        .and_then(|g| g.with_timestamps(vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]))
        .and_then(|g| g.with_edge_types(vec![0, 6, 9, 3, 10, 2, 7, 5]))
        .and_then(|g| g.with_labels(labels, masks))
        .expect("fixture is valid")
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    let data = (0..r * c).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor::new(r, c, data).expect("length matches")
}

/// Reduces `out` to a scalar against fixed random weights so that no
/// gradient component cancels by symmetry.
fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(random(&mut rng, r, c, 1.0));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

/// Finite-difference checks of every layer and of the full training loss
/// in each edge mode.
pub fn gradient_suite() -> Result<Vec<CheckResult>> {
    let g = fixture();
    let lg = line_graph(&g);
    let nb = lg.neighborhood(true);
    let h_inc = incidence(&g);
    let m = g.num_edges();
    let times: Vec<f64> = g.timestamps().expect("fixture has timestamps").to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    let mut record =
        |name: &str, value: f64| out.push(CheckResult { name: name.into(), value, threshold: GRAD_TOLERANCE });

    let (f_in, d_attn, f_out) = (3, 4, 3);
    let attn_params = vec![
        random(&mut rng, m, f_in, 1.0),
        random(&mut rng, f_in, d_attn, 1.0),
        random(&mut rng, f_in, d_attn, 1.0),
        random(&mut rng, f_in, f_out, 1.0),
    ];
    record(
        "gat",
        grad_check(&attn_params, |t, v| {
            let w = AttentionWeights { wq: v[1], wk: v[2], wv: v[3] };
            let o = gat_forward(t, &nb, v[0], &w)?;
            project(t, o.out, 1)
        })?,
    );
    record(
        "time_conditioned",
        grad_check(&attn_params, |t, v| {
            let w = AttentionWeights { wq: v[1], wk: v[2], wv: v[3] };
            let o = time_conditioned_forward(t, &nb, v[0], &times, &w)?;
            project(t, o.out, 2)
        })?,
    );

    let d = 2;
    let tgat_params = vec![
        random(&mut rng, m, f_in, 1.0),
        random(&mut rng, d, 2, 1.0),
        random(&mut rng, d, 2, 1.0),
        random(&mut rng, f_in + 2 * d, f_out, 1.0),
        Tensor::row_vector(vec![0.7, 3.1]),
    ];
    record(
        "tgat",
        grad_check(&tgat_params, |t, v| {
            let w = TemporalWeights { q_coeffs: v[1], k_coeffs: v[2], wv: v[3], freqs: v[4] };
            let o = tgat_forward(t, &nb, v[0], &times, &w)?;
            project(t, o.out, 3)
        })?,
    );

    record(
        "temporal_encoding",
        grad_check(&[Tensor::row_vector(vec![0.4, 2.0, 11.0])], |t, v| {
            let phi = t.sincos_encode(v[0], &times)?;
            project(t, phi, 4)
        })?,
    );

    let etn_params = vec![random(&mut rng, m, 4, 1.0), random(&mut rng, 4, 3, 1.0)];
    record(
        "etnconv",
        grad_check(&etn_params, |t, v| {
            let z = etnconv(t, &h_inc, v[0], v[1])?;
            project(t, z, 5)
        })?,
    );

    let n = g.num_nodes();
    let fuse_params = vec![
        random(&mut rng, n, 4, 1.0),
        random(&mut rng, n, 3, 1.0),
        random(&mut rng, 4, 4, 1.0),
        random(&mut rng, 3, 4, 1.0),
    ];
    for mode in [FusionMode::Concat, FusionMode::AttnNodeQuery, FusionMode::AttnEdgeQuery] {
        let e = grad_check(&fuse_params, |t, v| {
            let proj = (mode != FusionMode::Concat).then_some((v[2], v[3]));
            let z = fuse(t, v[0], v[1], mode, proj)?;
            project(t, z, 6)
        })?;
        record(&format!("fusion_{mode}"), e);
    }

    for mode in [EdgeMode::Timestamp, EdgeMode::EdgeAttr, EdgeMode::TimeConditioned] {
        record(&format!("end_to_end_{mode}"), end_to_end(&g, mode)?);
    }
    Ok(out)
}

/// Gradient check of the weighted loss over every model parameter.
pub fn end_to_end(g: &EdgeAttributedGraph, mode: EdgeMode) -> Result<f64> {
    let cfg = ModelConfig { hidden: 4, time_freqs: 2, edge_mode: mode, rng_seed: 3, ..ModelConfig::default() };
    let model = BianModel::new(cfg, g.node_attr_dim())?;
    let seeds = [0, 1, 2, 3, 4, 5];
    let sub = sample_subgraph(g, &seeds, 10, 2, 0)?;
    let labels: Vec<Label> = seeds.iter().map(|&i| g.labels()[i]).collect();
    let names: Vec<String> = model.params().keys().cloned().collect();
    let values: Vec<Tensor> = model.params().values().cloned().collect();
    grad_check(&values, |t, v| {
        let bound: Bound = names.iter().cloned().zip(v.iter().copied()).collect();
        let logits = model.forward(t, &bound, &sub, g)?;
        loss(t, logits, &labels, 3.0)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaReport {
    pub trials: usize,
    /// Largest `|φ(tᵢ)·φ(tⱼ) − (1/d)Σcos(wₖτ)|`.
    pub max_residual: f64,
    /// Largest change of any temporal attention weight under a global
    /// timestamp shift.
    pub max_shift_delta: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.max_residual <= LEMMA_TOLERANCE && self.max_shift_delta <= LEMMA_TOLERANCE
    }
}

/// Randomized trials of the span identity (times in `[0, 1]`, `d ≤ 8`,
/// frequencies `10^U(0, 4)`) and of the shift invariance of temporal
/// attention weights on random small line graphs.
pub fn lemma_suite(trials: usize, seed: u64) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_residual: f64 = 0.0;
    let mut max_shift_delta: f64 = 0.0;
    for trial in 0..trials {
        let d = rng.random_range(1..=8);
        let p = TemporalEncoderParams::new(d, FreqInit::Random, rng.random())?;
        let (ti, tj) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        max_residual = max_residual.max(verify_lemma(ti, tj, &p)?);

        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=8);
        let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let times: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
        let shift = rng.random_range(-1.0..1.0);
        let shifted: Vec<f64> = times.iter().map(|t| t + shift).collect();
        let ids: Vec<usize> = (0..m).collect();
        let nb = crate::graph::LineGraph::from_edges(n, &edges, &ids).neighborhood(true);
        let h = random(&mut rng, m, 2, 1.0);
        let q = random(&mut rng, d, 2, 1.0);
        let k = random(&mut rng, d, 2, 1.0);
        let wv = random(&mut rng, 2 + 2 * d, 2, 1.0);
        let beta = |ts: &[f64]| -> Result<Vec<f64>> {
            let mut tape = Tape::new();
            let w = TemporalWeights {
                q_coeffs: tape.constant(q.clone()),
                k_coeffs: tape.constant(k.clone()),
                wv: tape.constant(wv.clone()),
                freqs: tape.constant(p.freq_tensor()),
            };
            let hv = tape.constant(h.clone());
            let o = tgat_forward(&mut tape, &nb, hv, ts, &w)?;
            Ok(tape.value(o.weights).data().to_vec())
        };
        let (a, b) = (beta(&times)?, beta(&shifted)?);
        debug_assert_eq!(a.len(), b.len(), "trial {trial}");
        for (x, y) in a.iter().zip(&b) {
            max_shift_delta = max_shift_delta.max((x - y).abs());
        }
    }
    Ok(LemmaReport { trials, max_residual, max_shift_delta })
}
