//! The full classifier: node branch, edge branch on the line graph,
//! edge-to-node convolution, fusion and a linear head.

mod checkpoint;
mod config;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CKPT_MAGIC, CKPT_VERSION,
};
pub use config::{EdgeMode, ModelConfig, Variant, MAX_AUTO_POS_WEIGHT};
pub use train::{auto_pos_weight, fit, loss, predict, Adam, EpochMetrics, TrainedModel};

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    etnconv, fuse, gat_forward, tgat_forward, time_conditioned_forward, AttentionWeights, FusionMode, TemporalWeights,
};
use crate::error::{BianError, Result};
use crate::graph::{EdgeAttributedGraph, Subgraph, EDGE_TYPES};
use crate::temporal::TemporalEncoderParams;
use crate::tensor::{Tape, Tensor, Var};

/// Uniform Glorot initialization, `U(−a, a)` with `a = √(6/(rows+cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng_seed: u64) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let data = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::new(rows, cols, data).expect("length matches shape")
}

/// Named parameter tensors, iterated in name order.
pub type ParamStore = BTreeMap<String, Tensor>;

/// Tape handles for every parameter of one forward pass.
pub type Bound = BTreeMap<String, Var>;

pub const FREQS: &str = "time.freqs";

/// Vertex feature width of the edge branch's first layer.
pub fn edge_input_width(mode: EdgeMode, time_freqs: usize) -> usize {
    match mode {
        EdgeMode::Timestamp => 1,
        EdgeMode::EdgeAttr => EDGE_TYPES + 1,
        EdgeMode::TimeConditioned => 2 * time_freqs + EDGE_TYPES + 1,
    }
}

fn uses_node_branch(cfg: &ModelConfig) -> bool {
    cfg.variant != Variant::EdgeOnly
}

fn uses_edge_branch(cfg: &ModelConfig) -> bool {
    cfg.variant != Variant::NodeOnly
}

fn uses_time(cfg: &ModelConfig) -> bool {
    uses_edge_branch(cfg) && cfg.edge_mode != EdgeMode::EdgeAttr
}

fn uses_types(cfg: &ModelConfig) -> bool {
    uses_edge_branch(cfg) && cfg.edge_mode != EdgeMode::Timestamp
}

/// Parameter names and shapes, in initialization order.
pub fn param_shapes(cfg: &ModelConfig, node_dim: usize) -> Vec<(String, usize, usize)> {
    let h = cfg.hidden;
    let d = cfg.time_freqs;
    let mut out = Vec::new();
    if uses_node_branch(cfg) {
        for i in 0..cfg.layers {
            let f_in = if i == 0 { node_dim } else { h };
            for w in ["wq", "wk", "wv"] {
                out.push((format!("node.{i}.{w}"), f_in, h));
            }
        }
    }
    if uses_edge_branch(cfg) {
        if uses_time(cfg) {
            out.push((FREQS.to_string(), 1, d));
        }
        for i in 0..cfg.edge_layers {
            let f_in = if i == 0 { edge_input_width(cfg.edge_mode, d) } else { h };
            if cfg.edge_mode == EdgeMode::Timestamp {
                out.push((format!("edge.{i}.q_coeffs"), d, 2));
                out.push((format!("edge.{i}.k_coeffs"), d, 2));
                out.push((format!("edge.{i}.wv"), f_in + 2 * d, h));
            } else {
                for w in ["wq", "wk", "wv"] {
                    out.push((format!("edge.{i}.{w}"), f_in, h));
                }
            }
        }
        out.push(("etn.w".to_string(), h, h));
    }
    let fused = if cfg.variant == Variant::Full && cfg.fusion == FusionMode::Concat { 2 * h } else { h };
    if cfg.variant == Variant::Full && cfg.fusion != FusionMode::Concat {
        out.push(("fusion.proj_node".to_string(), h, h));
        out.push(("fusion.proj_edge".to_string(), h, h));
    }
    out.push(("head.w".to_string(), fused, 1));
    out.push(("head.b".to_string(), 1, 1));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct BianModel {
    config: ModelConfig,
    node_dim: usize,
    params: ParamStore,
}

impl BianModel {
    /// Fresh model. Weights are Glorot-initialized from per-tensor seeds
    /// drawn off `config.rng_seed`; frequencies follow `config.freq_init`
    /// and the head bias starts at zero.
    pub fn new(config: ModelConfig, node_dim: usize) -> Result<Self> {
        config.validate()?;
        if node_dim == 0 {
            return Err(BianError::Config("node attribute width must be positive".into()));
        }
        let mut master = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut params = ParamStore::new();
        for (name, r, c) in param_shapes(&config, node_dim) {
            let seed = master.next_u64();
            let t = if name == FREQS {
                TemporalEncoderParams::new(c, config.freq_init, seed)?.freq_tensor()
            } else if name == "head.b" {
                Tensor::zeros(r, c)
            } else {
                glorot_init(r, c, seed)
            };
            params.insert(name, t);
        }
        Ok(BianModel { config, node_dim, params })
    }

    /// Reassembles a model, checking that `params` has exactly the expected
    /// names and shapes.
    pub fn from_parts(config: ModelConfig, node_dim: usize, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let expected = param_shapes(&config, node_dim);
        if expected.len() != params.len() {
            return Err(BianError::Checkpoint(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, r, c) in expected {
            match params.get(&name) {
                None => return Err(BianError::Checkpoint(format!("missing parameter {name}"))),
                Some(t) if t.shape() != (r, c) => {
                    return Err(BianError::Checkpoint(format!(
                        "parameter {name} has shape {:?}, expected {:?}",
                        t.shape(),
                        (r, c)
                    )))
                }
                Some(t) if !t.all_finite() => {
                    return Err(BianError::Checkpoint(format!("parameter {name} is not finite")))
                }
                _ => {}
            }
        }
        Ok(BianModel { config, node_dim, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_weights(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Whether `name` receives gradient updates.
    pub fn is_trainable(&self, name: &str) -> bool {
        !(name == FREQS && self.config.freeze_frequencies)
    }

    /// Records every parameter on `tape`; trainable ones require gradients.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        self.params
            .iter()
            .map(|(name, t)| {
                let v = tape.leaf(t.clone(), self.is_trainable(name));
                (name.clone(), v)
            })
            .collect()
    }

    /// Checks that `g` carries what this configuration reads.
    pub fn check_graph(&self, g: &EdgeAttributedGraph) -> Result<()> {
        if g.node_attr_dim() != self.node_dim {
            return Err(BianError::Config(format!(
                "model expects {} node attributes, graph has {}",
                self.node_dim,
                g.node_attr_dim()
            )));
        }
        if uses_time(&self.config) && g.timestamps().is_none() {
            return Err(BianError::Config(format!("edge_mode {} needs edge timestamps", self.config.edge_mode)));
        }
        if uses_types(&self.config) && g.edge_types().is_none() {
            return Err(BianError::Config(format!("edge_mode {} needs edge types", self.config.edge_mode)));
        }
        Ok(())
    }

    /// One logit per seed of `sub`, as a `#seeds × 1` column.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, sub: &Subgraph, g: &EdgeAttributedGraph) -> Result<Var> {
        self.check_graph(g)?;
        let p = |name: &str| -> Result<Var> {
            bound.get(name).copied().ok_or_else(|| BianError::Config(format!("unbound parameter {name}")))
        };
        let cfg = &self.config;

        let z_n = if uses_node_branch(cfg) {
            let x = gather_node_attrs(g, &sub.nodes);
            let mut h = tape.constant(x);
            let nb = sub.node_neighborhood(true);
            for i in 0..cfg.layers {
                let w = AttentionWeights {
                    wq: p(&format!("node.{i}.wq"))?,
                    wk: p(&format!("node.{i}.wk"))?,
                    wv: p(&format!("node.{i}.wv"))?,
                };
                h = gat_forward(tape, &nb, h, &w)?.out;
            }
            Some(h)
        } else {
            None
        };

        let z_em = if uses_edge_branch(cfg) {
            let lg = sub.line_graph();
            let nb = lg.neighborhood(true);
            let times: Vec<f64> = match g.timestamps() {
                Some(ts) if uses_time(cfg) => sub.edges.iter().map(|e| ts[e.id]).collect(),
                _ => Vec::new(),
            };
            let freqs = if uses_time(cfg) { Some(p(FREQS)?) } else { None };
            let mut h = self.edge_features(tape, sub, g, &times, freqs)?;
            for i in 0..cfg.edge_layers {
                h = match cfg.edge_mode {
                    EdgeMode::Timestamp => {
                        let w = TemporalWeights {
                            q_coeffs: p(&format!("edge.{i}.q_coeffs"))?,
                            k_coeffs: p(&format!("edge.{i}.k_coeffs"))?,
                            wv: p(&format!("edge.{i}.wv"))?,
                            freqs: freqs.expect("timestamp mode binds frequencies"),
                        };
                        tgat_forward(tape, &nb, h, &times, &w)?.out
                    }
                    mode => {
                        let w = AttentionWeights {
                            wq: p(&format!("edge.{i}.wq"))?,
                            wk: p(&format!("edge.{i}.wk"))?,
                            wv: p(&format!("edge.{i}.wv"))?,
                        };
                        if mode == EdgeMode::TimeConditioned {
                            time_conditioned_forward(tape, &nb, h, &times, &w)?.out
                        } else {
                            gat_forward(tape, &nb, h, &w)?.out
                        }
                    }
                };
            }
            Some(etnconv(tape, &sub.incidence(), h, p("etn.w")?)?)
        } else {
            None
        };

        let z = match (z_n, z_em) {
            (Some(zn), Some(zem)) => {
                let proj = if cfg.fusion == FusionMode::Concat {
                    None
                } else {
                    Some((p("fusion.proj_node")?, p("fusion.proj_edge")?))
                };
                fuse(tape, zn, zem, cfg.fusion, proj)?
            }
            (Some(z), None) | (None, Some(z)) => z,
            (None, None) => unreachable!("every variant keeps a branch"),
        };
        let seeds = tape.gather_rows(z, &sub.seed_local)?;
        let logits = tape.matmul(seeds, p("head.w")?)?;
        tape.add_row(logits, p("head.b")?)
    }

    fn edge_features(
        &self,
        tape: &mut Tape,
        sub: &Subgraph,
        g: &EdgeAttributedGraph,
        times: &[f64],
        freqs: Option<Var>,
    ) -> Result<Var> {
        let m = sub.num_edges();
        let direction = Tensor::column(sub.edges.iter().map(|e| if e.outward { 1.0 } else { 0.0 }).collect());
        let mut parts = Vec::new();
        if self.config.edge_mode == EdgeMode::TimeConditioned {
            parts.push(tape.sincos_encode(freqs.expect("time mode binds frequencies"), times)?);
        }
        if let (true, Some(types)) = (uses_types(&self.config), g.edge_types()) {
            let mut onehot = Tensor::zeros(m, EDGE_TYPES);
            for (r, e) in sub.edges.iter().enumerate() {
                onehot.set(r, types[e.id] as usize, 1.0);
            }
            parts.push(tape.constant(onehot));
        }
        parts.push(tape.constant(direction));
        if parts.len() == 1 {
            Ok(parts[0])
        } else {
            tape.concat_cols(&parts)
        }
    }

    /// Logits for the seeds of `sub` under the current parameters.
    pub fn logits(&self, sub: &Subgraph, g: &EdgeAttributedGraph) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound: Bound = self.params.iter().map(|(n, t)| (n.clone(), tape.constant(t.clone()))).collect();
        let out = self.forward(&mut tape, &bound, sub, g)?;
        Ok(tape.value(out).data().to_vec())
    }
}

fn gather_node_attrs(g: &EdgeAttributedGraph, nodes: &[usize]) -> Tensor {
    let x = g.node_attrs();
    let mut out = Tensor::zeros(nodes.len(), x.cols());
    for (r, &v) in nodes.iter().enumerate() {
        out.row_mut(r).copy_from_slice(x.row(v));
    }
    out
}
