//! Sinusoidal temporal encoding and the cross-correlation identity behind
//! temporal attention scores.
//!
//! `φ_d(t) = √(1/d)·[cos(w₁t), sin(w₁t), …, cos(w_d t), sin(w_d t)]` is a unit
//! vector for every `t`, and `φ(tᵢ)·φ(tⱼ) = (1/d)·Σₖ cos(wₖ(tᵢ − tⱼ))`, so plain
//! inner products of encodings only see the time span `τ = tᵢ − tⱼ`.
//! [`expand_score`] generalizes this to arbitrary query/key projections and
//! reports how much of the resulting score is *not* a function of `τ`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BianError, Result};
use crate::tensor::Tensor;

/// Largest base-10 exponent of the frequency ladder.
pub const FREQ_DECADES: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum FreqInit {
    /// Geometric ladder `wₖ = 10^{4(k−1)/d}`.
    #[default]
    LogLadder,
    /// `wₖ = 10^{U(0, 4)}`, seeded.
    Random,
}

impl fmt::Display for FreqInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreqInit::LogLadder => "t2v",
            FreqInit::Random => "random",
        })
    }
}

impl FromStr for FreqInit {
    type Err = BianError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2v" | "log_ladder" => Ok(FreqInit::LogLadder),
            "random" => Ok(FreqInit::Random),
            other => Err(BianError::Config(format!("unknown freq_init {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemporalEncoderParams {
    pub freqs: Vec<f64>,
    pub init: FreqInit,
}

impl TemporalEncoderParams {
    pub fn new(d: usize, init: FreqInit, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(BianError::Config("temporal encoder needs d >= 1".into()));
        }
        let freqs = match init {
            FreqInit::LogLadder => (0..d).map(|k| 10f64.powf(FREQ_DECADES * k as f64 / d as f64)).collect(),
            FreqInit::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..d).map(|_| 10f64.powf(rng.random_range(0.0..FREQ_DECADES))).collect()
            }
        };
        Ok(TemporalEncoderParams { freqs, init })
    }

    pub fn with_freqs(freqs: Vec<f64>) -> Result<Self> {
        if freqs.is_empty() || freqs.iter().any(|w| !w.is_finite()) {
            return Err(BianError::Config("frequencies must be finite and non-empty".into()));
        }
        Ok(TemporalEncoderParams { freqs, init: FreqInit::LogLadder })
    }

    pub fn d(&self) -> usize {
        self.freqs.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.freqs.len()
    }

    pub fn freq_tensor(&self) -> Tensor {
        Tensor::row_vector(self.freqs.clone())
    }
}

/// Encodes each timestamp as one `2d`-wide row.
pub fn encode(times: &[f64], freqs: &[f64]) -> Result<Tensor> {
    if freqs.is_empty() {
        return Err(BianError::Config("no frequencies".into()));
    }
    let d = freqs.len();
    let amp = (1.0 / d as f64).sqrt();
    let mut out = Tensor::zeros(times.len(), 2 * d);
    for (r, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(BianError::NonFinite(format!("timestamp {t}")));
        }
        let row = out.row_mut(r);
        for (k, &w) in freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            row[2 * k] = amp * c;
            row[2 * k + 1] = amp * s;
        }
    }
    Ok(out)
}

/// `|φ(tᵢ)·φ(tⱼ) − (1/d)·Σₖ cos(wₖ(tᵢ − tⱼ))|`.
pub fn verify_lemma(ti: f64, tj: f64, p: &TemporalEncoderParams) -> Result<f64> {
    let phi = encode(&[ti, tj], &p.freqs)?;
    let direct: f64 = phi.row(0).iter().zip(phi.row(1)).map(|(a, b)| a * b).sum();
    let tau = ti - tj;
    let d = p.d() as f64;
    let closed: f64 = p.freqs.iter().map(|w| (w * tau).cos()).sum::<f64>() / d;
    Ok((direct - closed).abs())
}

/// One frequency pair `(k, l)` of the product-to-sum expansion of
/// `(W_Q φ(tᵢ))·(W_K φ(tⱼ))`, with `α = wₖtᵢ` and `β = w_l tⱼ`:
/// `cos_diff·cos(α−β) + sin_diff·sin(α−β) + cos_sum·cos(α+β) + sin_sum·sin(α+β)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionTerm {
    pub k: usize,
    pub l: usize,
    pub cos_diff: f64,
    pub sin_diff: f64,
    pub cos_sum: f64,
    pub sin_sum: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreExpansion {
    /// `(W_Q φ(tᵢ))·(W_K φ(tⱼ))` evaluated directly.
    pub direct: f64,
    /// The same score re-assembled from `terms`.
    pub expanded: f64,
    /// `|direct − expanded|`.
    pub residual: f64,
    /// Total coefficient magnitude on terms whose argument is not a multiple
    /// of `τ` (sum-frequency terms and cross-frequency difference terms).
    /// Zero iff the score is a function of `τ` alone for all `tᵢ, tⱼ`.
    pub non_span_mass: f64,
    pub terms: Vec<ExpansionTerm>,
}

/// Expands the unnormalized temporal attention score for projections
/// `W_Q, W_K` (each `r × 2d`, applied as `W φ`).
pub fn expand_score(wq: &Tensor, wk: &Tensor, ti: f64, tj: f64, p: &TemporalEncoderParams) -> Result<ScoreExpansion> {
    let d = p.d();
    if wq.cols() != 2 * d || wk.cols() != 2 * d || wq.rows() != wk.rows() {
        return Err(BianError::shape("expand_score", wq.shape(), wk.shape()));
    }
    let phi = encode(&[ti, tj], &p.freqs)?;
    let q = wq.matmul(&row_as_column(&phi, 0))?;
    let k = wk.matmul(&row_as_column(&phi, 1))?;
    let direct: f64 = q.data().iter().zip(k.data()).map(|(a, b)| a * b).sum();

    // A = W_Qᵀ W_K couples component a of φ(tᵢ) with component b of φ(tⱼ).
    let a = wq.transpose().matmul(wk)?;
    let inv_d = 1.0 / d as f64;
    let mut terms = Vec::with_capacity(d * d);
    let mut expanded = 0.0;
    let mut non_span = 0.0;
    for kk in 0..d {
        for ll in 0..d {
            let cc = a.get(2 * kk, 2 * ll);
            let cs = a.get(2 * kk, 2 * ll + 1);
            let sc = a.get(2 * kk + 1, 2 * ll);
            let ss = a.get(2 * kk + 1, 2 * ll + 1);
            let t = ExpansionTerm {
                k: kk,
                l: ll,
                cos_diff: 0.5 * inv_d * (cc + ss),
                sin_diff: 0.5 * inv_d * (sc - cs),
                cos_sum: 0.5 * inv_d * (cc - ss),
                sin_sum: 0.5 * inv_d * (cs + sc),
            };
            let (alpha, beta) = (p.freqs[kk] * ti, p.freqs[ll] * tj);
            expanded += t.cos_diff * (alpha - beta).cos()
                + t.sin_diff * (alpha - beta).sin()
                + t.cos_sum * (alpha + beta).cos()
                + t.sin_sum * (alpha + beta).sin();
            non_span += t.cos_sum.abs() + t.sin_sum.abs();
            if p.freqs[kk] != p.freqs[ll] {
                non_span += t.cos_diff.abs() + t.sin_diff.abs();
            }
            terms.push(t);
        }
    }
    Ok(ScoreExpansion { direct, expanded, residual: (direct - expanded).abs(), non_span_mass: non_span, terms })
}

/// Dense `2d × 2d` matrix of the per-frequency rotation-scaling blocks
/// `[[a, −b], [b, a]]` used by temporal attention projections.
pub fn rotation_blocks(coeffs: &Tensor) -> Tensor {
    let d = coeffs.rows();
    let mut m = Tensor::zeros(2 * d, 2 * d);
    for k in 0..d {
        let (a, b) = (coeffs.get(k, 0), coeffs.get(k, 1));
        m.set(2 * k, 2 * k, a);
        m.set(2 * k, 2 * k + 1, -b);
        m.set(2 * k + 1, 2 * k, b);
        m.set(2 * k + 1, 2 * k + 1, a);
    }
    m
}

fn row_as_column(t: &Tensor, r: usize) -> Tensor {
    Tensor::column(t.row(r).to_vec())
}
