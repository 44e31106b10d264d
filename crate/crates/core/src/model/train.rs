use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BianModel, ParamStore, MAX_AUTO_POS_WEIGHT};
use crate::error::{BianError, Result};
use crate::graph::{EdgeAttributedGraph, Label, Masks, NeighborSampler};
use crate::metrics::auroc;
use crate::tensor::{Tape, Tensor, Var};

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

/// Weighted binary cross-entropy on logits, averaged over the supervised
/// entries of the batch. Fraud rows carry `pos_weight`, normal rows weight
/// one, and every other label weight zero.
pub fn loss(tape: &mut Tape, logits: Var, labels: &[Label], pos_weight: f64) -> Result<Var> {
    let mut targets = Vec::with_capacity(labels.len());
    let mut weights = Vec::with_capacity(labels.len());
    let mut supervised = 0usize;
    for l in labels {
        let (y, w) = match l {
            Label::Fraud => (1.0, pos_weight),
            Label::Normal => (0.0, 1.0),
            _ => (0.0, 0.0),
        };
        if l.target().is_some() {
            supervised += 1;
        }
        targets.push(y);
        weights.push(w);
    }
    tape.bce_with_logits(logits, &targets, &weights, supervised as f64)
}

/// `min(50, 1 / fraud rate)` over the supervised nodes of `mask`, or `None`
/// without any fraud node.
pub fn auto_pos_weight(labels: &[Label], mask: &[bool]) -> Option<f64> {
    let (mut pos, mut total) = (0usize, 0usize);
    for (l, _) in labels.iter().zip(mask).filter(|(_, &m)| m) {
        match l {
            Label::Fraud => {
                pos += 1;
                total += 1
            }
            Label::Normal => total += 1,
            _ => {}
        }
    }
    (pos > 0).then(|| (total as f64 / pos as f64).min(MAX_AUTO_POS_WEIGHT))
}

/// Adam with optional L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u32,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, t: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Updates every parameter that has an entry in `grads`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Tensor>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.rows(), p.cols()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(p.rows(), p.cols()));
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                let gi = g.data()[i] + self.weight_decay * pd[i];
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gi;
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean batch loss, measured before each update.
    pub train_loss: f64,
    /// `None` when the validation split lacks one of the two classes.
    pub valid_auroc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    /// Parameters from the epoch with the best validation AUROC (the last
    /// epoch when validation is unavailable).
    pub model: BianModel,
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub pos_weight: f64,
}

/// Mini-batch training with Adam. Seeds are the supervised training nodes,
/// reshuffled every epoch; each batch trains on its own sampled subgraph.
pub fn fit(model: BianModel, g: &EdgeAttributedGraph) -> Result<TrainedModel> {
    model.check_graph(g)?;
    g.validate()?;
    let cfg = model.config().clone();
    let masks = g.masks();
    let labels = g.labels();
    let mut train: Vec<usize> = supervised(labels, &masks.train);
    if train.is_empty() {
        return Err(BianError::Training("no labeled training nodes".into()));
    }
    let pos_weight = match cfg.pos_class_weight {
        Some(w) => w,
        None => auto_pos_weight(labels, &masks.train).unwrap_or(1.0),
    };
    let valid = supervised(labels, &masks.valid);
    let valid_truth: Vec<bool> = valid.iter().map(|&i| labels[i] == Label::Fraud).collect();

    let sampler = NeighborSampler::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(TRAIN_STREAM);
    let mut adam = Adam::new(cfg.lr, cfg.weight_decay);
    let mut current = model;
    let mut best: Option<(f64, usize, BianModel)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in train.chunks(cfg.batch_size) {
            let sub = sampler.sample(chunk, cfg.fanout, cfg.hops, rng.next_u64())?;
            let mut tape = Tape::new();
            let bound = current.bind(&mut tape);
            let logits = current.forward(&mut tape, &bound, &sub, g)?;
            let batch_labels: Vec<Label> = chunk.iter().map(|&i| labels[i]).collect();
            let l = loss(&mut tape, logits, &batch_labels, pos_weight)?;
            let value = tape.value(l).data()[0];
            if !value.is_finite() {
                return Err(BianError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            total += value;
            batches += 1;
            tape.backward(l)?;
            let grads: BTreeMap<String, Tensor> = bound
                .iter()
                .filter(|(name, _)| current.is_trainable(name))
                .map(|(name, &v)| {
                    let shape = tape.shape(v);
                    let grad = tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1));
                    (name.clone(), grad)
                })
                .collect();
            adam.step(current.params_mut(), &grads);
        }
        let valid_auroc = if valid.is_empty() {
            None
        } else {
            let scores = predict(&current, g, &valid)?;
            auroc(&scores, &valid_truth).ok()
        };
        history.push(EpochMetrics { epoch, train_loss: total / batches as f64, valid_auroc });
        if let Some(a) = valid_auroc {
            if best.as_ref().is_none_or(|(b, _, _)| a > *b) {
                best = Some((a, epoch, current.clone()));
            }
        }
    }

    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, Some(e)),
        None => (current, None),
    };
    Ok(TrainedModel { model, history, best_epoch, pos_weight })
}

/// Logits for `nodes`, evaluated in batches of `batch_size` seeds. Subgraph
/// sampling is seeded from the model's `rng_seed`, so the output is a pure
/// function of the model, the graph and the node list.
pub fn predict(model: &BianModel, g: &EdgeAttributedGraph, nodes: &[usize]) -> Result<Vec<f64>> {
    model.check_graph(g)?;
    let cfg = model.config();
    let sampler = NeighborSampler::new(g);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    rng.set_stream(EVAL_STREAM);
    let mut out = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(cfg.batch_size) {
        let sub = sampler.sample(chunk, cfg.fanout, cfg.hops, rng.next_u64())?;
        out.extend(model.logits(&sub, g)?);
    }
    Ok(out)
}

fn supervised(labels: &[Label], mask: &[bool]) -> Vec<usize> {
    Masks::nodes(mask).into_iter().filter(|&i| labels[i].target().is_some()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::model::Variant;

    fn ln2() -> f64 {
        std::f64::consts::LN_2
    }

    fn eval_loss(logits: &[f64], labels: &[Label], w: f64) -> Result<f64> {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::column(logits.to_vec()));
        let l = loss(&mut tape, z, labels, w)?;
        Ok(tape.value(l).data()[0])
    }

    #[test]
    fn loss_examples() {
        assert!((eval_loss(&[0.0], &[Label::Fraud], 1.0).unwrap() - ln2()).abs() < 1e-15);
        assert!(eval_loss(&[40.0, -40.0], &[Label::Fraud, Label::Normal], 1.0).unwrap() < 1e-15);
        let pair = eval_loss(&[0.0, 0.0], &[Label::Fraud, Label::Normal], 2.0).unwrap();
        assert!((pair - (2.0 * ln2() + ln2()) / 2.0).abs() < 1e-15);
        assert!(eval_loss(&[], &[], 1.0).is_err());
        assert!(eval_loss(&[0.3], &[Label::Unlabeled], 1.0).is_err());
    }

    #[test]
    fn unsupervised_labels_do_not_move_the_loss() {
        let z = [0.3, -1.2, 2.0, 0.7];
        let a = eval_loss(&z, &[Label::Fraud, Label::Normal, Label::Background(2), Label::Unlabeled], 3.0).unwrap();
        let b = eval_loss(&z, &[Label::Fraud, Label::Normal, Label::Unlabeled, Label::Background(3)], 3.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn auto_weight_is_capped() {
        let mut labels = vec![Label::Normal; 200];
        labels[0] = Label::Fraud;
        let all = vec![true; 200];
        assert_eq!(auto_pos_weight(&labels, &all), Some(50.0));
        labels[1] = Label::Fraud;
        labels[2] = Label::Fraud;
        labels[3] = Label::Fraud;
        assert_eq!(auto_pos_weight(&labels, &all), Some(50.0));
        assert_eq!(auto_pos_weight(&labels[..10], &all[..10]), Some(2.5));
        assert_eq!(auto_pos_weight(&labels[4..], &all[4..]), None);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut params = ParamStore::new();
        params.insert("w".into(), Tensor::from_rows(&[[1.0, -1.0]]));
        let mut grads = BTreeMap::new();
        grads.insert("w".into(), Tensor::from_rows(&[[0.5, -3.0]]));
        let mut adam = Adam::new(0.1, 0.0);
        adam.step(&mut params, &grads);
        let w = params["w"].data();
        assert!((w[0] - 0.9).abs() < 1e-7);
        assert!((w[1] + 0.9).abs() < 1e-7);
    }

    fn separable_node() -> EdgeAttributedGraph {
        use crate::graph::Masks;
        let attrs = Tensor::from_rows(&[[1.0], [0.0]]);
        EdgeAttributedGraph::new(2, vec![(0, 1)], attrs)
            .unwrap()
            .with_timestamps(vec![1.0])
            .unwrap()
            .with_edge_types(vec![4])
            .unwrap()
            .with_labels(
                vec![Label::Fraud, Label::Normal],
                Masks { train: vec![true, false], valid: vec![false, false], test: vec![false, false] },
            )
            .unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let g = separable_node();
        let cfg = ModelConfig { hidden: 4, time_freqs: 2, lr: 0.0, epochs: 3, ..ModelConfig::default() };
        let model = BianModel::new(cfg, 1).unwrap();
        let trained = fit(model.clone(), &g).unwrap();
        assert_eq!(trained.model.params(), model.params());
    }

    #[test]
    fn separable_node_loss_decreases() {
        let g = separable_node();
        let cfg = ModelConfig { hidden: 4, time_freqs: 2, epochs: 10, lr: 1e-2, ..ModelConfig::default() };
        let trained = fit(BianModel::new(cfg, 1).unwrap(), &g).unwrap();
        let losses: Vec<f64> = trained.history.iter().map(|h| h.train_loss).collect();
        assert_eq!(losses.len(), 10);
        assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    }

    #[test]
    fn no_training_nodes_is_an_error() {
        let g = separable_node();
        let g = g.clone().with_labels(g.labels().to_vec(), crate::graph::Masks::empty(2)).unwrap();
        let model = BianModel::new(ModelConfig { variant: Variant::NodeOnly, ..ModelConfig::default() }, 1).unwrap();
        assert!(matches!(fit(model, &g), Err(BianError::Training(_))));
    }
}
