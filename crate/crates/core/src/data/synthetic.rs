//! Behavior-driven synthetic fraud graphs.
//!
//! Every node emits one edge to a uniformly chosen other node, and
//! `extra_edge_ratio · n` further random edges are added, for a mean degree
//! near 2.2. Fraud status is Bernoulli(`fraud_rate`). The signal lives in
//! three places, each with its own strength knob:
//!
//! * edge types: an edge whose source is fraud takes, with probability `s`,
//!   a type from the outgoing fraud block `6..=8`; otherwise, if its target
//!   is fraud, it takes with probability `s` a type from the incoming block
//!   `9..=10`. All other draws are uniform over the normal block `0..=5`.
//!   The fraud-incident type distribution therefore sits at total-variation
//!   distance `s` from the normal one.
//! * timestamps: each fraud node owns a burst center; with probability `s`
//!   an edge touching it lands within a narrow window around that center.
//!   Everything else is uniform over the horizon.
//! * node attributes: standard normal noise plus `s_v · label` on every
//!   coordinate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{BianError, Result};
use crate::graph::{EdgeAttributedGraph, Label, Masks};
use crate::tensor::Tensor;

pub const NORMAL_TYPES: std::ops::Range<u8> = 0..6;
pub const FRAUD_OUT_TYPES: std::ops::Range<u8> = 6..9;
pub const FRAUD_IN_TYPES: std::ops::Range<u8> = 9..11;

/// Burst width as a fraction of the horizon.
const BURST_WIDTH: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub fraud_rate: f64,
    pub d_v: usize,
    /// Time horizon in days.
    pub horizon: f64,
    /// Behavior-signal strength.
    pub s: f64,
    /// Node-signal strength.
    pub s_v: f64,
    pub extra_edge_ratio: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 5000,
            fraud_rate: 0.05,
            d_v: 17,
            horizon: 821.0,
            s: 0.9,
            s_v: 0.0,
            extra_edge_ratio: 0.1,
            rng_seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BianError::Config(m));
        if self.n < 2 {
            return bad(format!("n = {} (need at least 2 nodes)", self.n));
        }
        if !(self.fraud_rate > 0.0 && self.fraud_rate < 1.0) {
            return bad(format!("fraud_rate = {} outside (0, 1)", self.fraud_rate));
        }
        for (name, v) in [("s", self.s), ("s_v", self.s_v)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if self.d_v == 0 {
            return bad("d_v must be at least 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon = {}", self.horizon));
        }
        if !(self.extra_edge_ratio.is_finite() && self.extra_edge_ratio >= 0.0) {
            return bad(format!("extra_edge_ratio = {}", self.extra_edge_ratio));
        }
        Ok(())
    }

    /// Parses `key=value` pairs separated by commas, e.g.
    /// `n=5000,fraud_rate=0.05,s=0.9,s_v=0,seed=7`. Unlisted keys keep their
    /// defaults.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let mut cfg = SyntheticConfig::default();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) =
                part.split_once('=').ok_or_else(|| BianError::Config(format!("expected key=value, got {part:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| BianError::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "n" => self.n = num(key, value)?,
            "fraud_rate" => self.fraud_rate = num(key, value)?,
            "d_v" => self.d_v = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "s" => self.s = num(key, value)?,
            "s_v" => self.s_v = num(key, value)?,
            "extra_edge_ratio" => self.extra_edge_ratio = num(key, value)?,
            "seed" | "rng_seed" => self.rng_seed = num(key, value)?,
            other => return Err(BianError::Config(format!("unknown synthetic key {other:?}"))),
        }
        Ok(())
    }

    pub fn to_spec(&self) -> String {
        format!(
            "n={},fraud_rate={},d_v={},horizon={},s={},s_v={},extra_edge_ratio={},seed={}",
            self.n, self.fraud_rate, self.d_v, self.horizon, self.s, self.s_v, self.extra_edge_ratio, self.rng_seed
        )
    }
}

pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<EdgeAttributedGraph> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let fraud: Vec<bool> = (0..n).map(|_| rng.random_bool(cfg.fraud_rate)).collect();
    let n_fraud = fraud.iter().filter(|&&f| f).count();
    if n_fraud == 0 || n_fraud == n {
        return Err(BianError::Config(format!("infeasible synthetic config: {n_fraud} fraud nodes out of {n}")));
    }

    let mut edges = Vec::new();
    for u in 0..n {
        edges.push((u, other_node(&mut rng, n, u)));
    }
    let extra = (cfg.extra_edge_ratio * n as f64).round() as usize;
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        edges.push((u, other_node(&mut rng, n, u)));
    }

    let centers: Vec<f64> = (0..n).map(|i| if fraud[i] { rng.random_range(0.0..cfg.horizon) } else { 0.0 }).collect();
    let jitter = Normal::new(0.0, BURST_WIDTH * cfg.horizon).expect("positive width");
    let mut types = Vec::with_capacity(edges.len());
    let mut times = Vec::with_capacity(edges.len());
    for &(u, v) in &edges {
        let ty = if fraud[u] && rng.random_bool(cfg.s) {
            rng.random_range(FRAUD_OUT_TYPES)
        } else if fraud[v] && !fraud[u] && rng.random_bool(cfg.s) {
            rng.random_range(FRAUD_IN_TYPES)
        } else {
            rng.random_range(NORMAL_TYPES)
        };
        types.push(ty);
        let owner = if fraud[u] {
            Some(u)
        } else if fraud[v] {
            Some(v)
        } else {
            None
        };
        let t = match owner {
            Some(f) if rng.random_bool(cfg.s) => (centers[f] + jitter.sample(&mut rng)).clamp(0.0, cfg.horizon),
            _ => rng.random_range(0.0..cfg.horizon),
        };
        times.push(t);
    }

    let mut attrs = Vec::with_capacity(n * cfg.d_v);
    for &f in &fraud {
        let shift = if f { cfg.s_v } else { 0.0 };
        for _ in 0..cfg.d_v {
            let z: f64 = StandardNormal.sample(&mut rng);
            attrs.push(z + shift);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = n * 6 / 10;
    let n_valid = n * 2 / 10;
    let mut masks = Masks::empty(n);
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_train {
            masks.train[i] = true;
        } else if rank < n_train + n_valid {
            masks.valid[i] = true;
        } else {
            masks.test[i] = true;
        }
    }

    let labels = fraud.iter().map(|&f| if f { Label::Fraud } else { Label::Normal }).collect();
    EdgeAttributedGraph::new(n, edges, Tensor::new(n, cfg.d_v, attrs)?)?
        .with_timestamps(times)?
        .with_edge_types(types)?
        .with_labels(labels, masks)
}

fn other_node(rng: &mut ChaCha8Rng, n: usize, u: usize) -> usize {
    let v = rng.random_range(0..n - 1);
    if v >= u {
        v + 1
    } else {
        v
    }
}
