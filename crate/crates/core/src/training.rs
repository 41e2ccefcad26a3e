//! Desk-scale training: weighted BCE on target and corrupted facts, exact
//! reverse-mode gradients through max-k-sum layers, Adam with clamping,
//! threshold selection and evaluation metrics.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datalog::{Atom, Dataset, Name, Signature};
use crate::encoder::{encode_with_constants, ColoredGraph, EncodeError};
use crate::gnn::{Activation, AggBudget, Layer, Matrix, MaxSumGnn, MessageDirection};
use crate::kgdata::{epoch_split, sample_negatives, NegativeSamplerConfig};
use crate::rng::{derive_seed, substream};
use crate::scoring::{Dense, ScoringFunction, ScoringKind, ScoringParams};
use crate::transform::{Model, ModelError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became {loss} at epoch {epoch} ({targets} targets, {negatives} negatives, max |param| {max_param})")]
    NanLoss { epoch: usize, loss: f64, targets: usize, negatives: usize, max_param: f64 },
    #[error("{0}")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub positive_loss_weight: f64,
    pub negatives_per_positive: usize,
    pub clamp_nonnegative: bool,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl TrainConfig {
    /// Defaults for a clamped (monotonic) or unclamped run.
    pub fn new(epochs: usize, clamp_nonnegative: bool, seed: u64) -> Self {
        TrainConfig {
            epochs,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            positive_loss_weight: if clamp_nonnegative { 50.0 } else { 1.0 },
            negatives_per_positive: 10,
            clamp_nonnegative,
            holdout_fraction: 0.1,
            seed,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative");
        }
        if !(self.positive_loss_weight > 0.0) {
            return bad("positive_loss_weight must be positive");
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return bad("holdout_fraction must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam moments must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

fn log_sigmoid(s: f64) -> f64 {
    // log σ(s) = -log(1 + e^{-s})
    if s >= 0.0 {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// Mean of -[pw·y·log σ(s) + (1-y)·log(1-σ(s))].
pub fn bce_logits_loss(scores: &[f64], labels: &[f64], positive_weight: f64) -> f64 {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return 0.0;
    }
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| -(positive_weight * y * log_sigmoid(s) + (1.0 - y) * log_sigmoid(-s)))
        .sum();
    total / scores.len() as f64
}

/// d loss / d s_i for `bce_logits_loss`.
pub fn bce_logits_grad(scores: &[f64], labels: &[f64], positive_weight: f64) -> Vec<f64> {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (positive_weight * y * (sigmoid(s) - 1.0) + (1.0 - y) * sigmoid(s)) / n)
        .collect()
}

/// Every trainable parameter of the model in a fixed order, with whether the
/// monotonic restriction constrains it. GNN biases are unconstrained.
pub fn for_each_param_mut(m: &mut Model, mut f: impl FnMut(&mut f64, bool)) {
    for l in m.gnn.layers.iter_mut() {
        l.a.data.iter_mut().for_each(|x| f(x, true));
        for b in l.b.iter_mut() {
            b.data.iter_mut().for_each(|x| f(x, true));
        }
        l.bias.iter_mut().for_each(|x| f(x, false));
    }
    m.scoring.for_each_param_mut(f);
}

pub fn params(m: &Model) -> Vec<f64> {
    let mut m = m.clone();
    let mut out = Vec::new();
    for_each_param_mut(&mut m, |x, _| out.push(*x));
    out
}

pub fn set_params(m: &mut Model, values: &[f64]) {
    let mut it = values.iter();
    for_each_param_mut(m, |x, _| *x = *it.next().expect("parameter count"));
    assert!(it.next().is_none(), "parameter count");
}

fn zeroed(m: &Model) -> Model {
    let mut g = m.clone();
    for_each_param_mut(&mut g, |x, _| *x = 0.0);
    g
}

/// One training batch: an input graph and labelled candidate facts.
#[derive(Debug, Clone)]
pub struct Batch {
    pub graph: ColoredGraph,
    /// (relation index, head vertex, tail vertex, label in {0, 1})
    pub examples: Vec<(usize, usize, usize, f64)>,
}

impl Batch {
    /// Encodes `input` (with the model's universal unary on every vertex) and
    /// resolves the labelled facts against it.
    pub fn new(m: &Model, input: &Dataset, positives: &[Atom], negatives: &[Atom]) -> Result<Self, TrainError> {
        let extra: Vec<Name> = positives.iter().chain(negatives).flat_map(|a| a.terms.iter().cloned()).collect();
        let mut graph = encode_with_constants(&m.prepare(input), &m.signature, &extra)?;
        if let Some(u) = m.universal_unary {
            for l in graph.labels.iter_mut() {
                l[u] = 1.0;
            }
        }
        let mut examples = Vec::with_capacity(positives.len() + negatives.len());
        for (facts, y) in [(positives, 1.0), (negatives, 0.0)] {
            for a in facts {
                let rel =
                    m.signature.binary_index(&a.pred).ok_or_else(|| EncodeError::UnknownPredicate(a.to_string()))?;
                let h = graph.vertex(&a.terms[0]).unwrap();
                let t = graph.vertex(&a.terms[1]).unwrap();
                examples.push((rel, h, t, y));
            }
        }
        Ok(Batch { graph, examples })
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(|e| e.3).collect()
    }
}

/// Scores of the batch examples.
pub fn batch_scores(m: &Model, batch: &Batch) -> Result<Vec<f64>, TrainError> {
    let out = m.gnn.forward(&batch.graph).map_err(ModelError::from)?.layers.pop().unwrap();
    Ok(batch.examples.iter().map(|&(r, h, t, _)| m.scoring.score_unchecked(r, &out[h], &out[t])).collect())
}

pub fn batch_loss(m: &Model, batch: &Batch, positive_weight: f64) -> Result<f64, TrainError> {
    Ok(bce_logits_loss(&batch_scores(m, batch)?, &batch.labels(), positive_weight))
}

/// Loss and its gradient, returned as a model-shaped buffer. Max-k-sum
/// routes gradient to the selected neighbours only; ReLU'(0) = 0.
pub fn loss_and_grad(m: &Model, batch: &Batch, positive_weight: f64) -> Result<(f64, Model), TrainError> {
    let cache = m.gnn.forward_cached(&batch.graph).map_err(ModelError::from)?;
    let out = cache.trace.last();
    let scores: Vec<f64> =
        batch.examples.iter().map(|&(r, h, t, _)| m.scoring.score_unchecked(r, &out[h], &out[t])).collect();
    let labels = batch.labels();
    let loss = bce_logits_loss(&scores, &labels, positive_weight);
    let ds = bce_logits_grad(&scores, &labels, positive_weight);

    let mut grad = zeroed(m);
    let n = batch.graph.len();
    let mut dx: Vec<Vec<f64>> = vec![vec![0.0; m.gnn.output_dim()]; n];
    for (&(r, h, t, _), &g) in batch.examples.iter().zip(&ds) {
        if g == 0.0 {
            continue;
        }
        let mut dh = vec![0.0; m.scoring.dim];
        let mut dt = vec![0.0; m.scoring.dim];
        m.scoring.backward(r, &out[h], &out[t], g, &mut grad.scoring, &mut dh, &mut dt);
        dx[h].iter_mut().zip(&dh).for_each(|(a, b)| *a += b);
        dx[t].iter_mut().zip(&dt).for_each(|(a, b)| *a += b);
    }

    for (l, layer) in m.gnn.layers.iter().enumerate().rev() {
        let input = &cache.trace.layers[l];
        let gl = &mut grad.gnn.layers[l];
        let mut down = vec![vec![0.0; layer.in_dim()]; n];
        for v in 0..n {
            let dz: Vec<f64> =
                dx[v].iter().zip(&cache.pre[l][v]).map(|(&d, &z)| d * layer.activation.derivative(z)).collect();
            if dz.iter().all(|&d| d == 0.0) {
                continue;
            }
            outer_add(&mut gl.a, &dz, &input[v]);
            gl.bias.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            layer.a.mul_t_add(&dz, &mut down[v]);
            for (c, b) in layer.b.iter().enumerate() {
                outer_add(&mut gl.b[c], &dz, &cache.agg[l][c][v]);
                let mut dagg = vec![0.0; layer.in_dim()];
                b.mul_t_add(&dz, &mut dagg);
                for (j, &d) in dagg.iter().enumerate() {
                    if d != 0.0 {
                        for &u in &cache.selected[l][c][v][j] {
                            down[u][j] += d;
                        }
                    }
                }
            }
        }
        dx = down;
    }
    Ok((loss, grad))
}

fn outer_add(m: &mut Matrix, a: &[f64], b: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            m.data[i * m.cols + j] += ai * bj;
        }
    }
}

/// Adam with L2 weight decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Sets every negative constrained parameter to 0.
pub fn clamp_nonnegative(m: &mut Model) {
    for_each_param_mut(m, |x, constrained| {
        if constrained && *x < 0.0 {
            *x = 0.0;
        }
    });
}

/// Shape of a randomly initialised model.
#[derive(Debug, Clone, PartialEq)]
pub struct InitSpec {
    /// Hidden and output dimensions δ_1..δ_L (δ_0 comes from the signature).
    pub dims: Vec<usize>,
    pub budgets: Vec<AggBudget>,
    pub direction: MessageDirection,
    pub scoring: ScoringKind,
    pub nonnegative: bool,
    pub universal_unary: Option<usize>,
}

/// Non-negative draws are uniform on [0, 2/n], n the number of terms the
/// parameter is summed over, so activations and scores keep an O(1) mean;
/// signed draws are uniform on ±1/√n.
fn uniform(rng: &mut impl Rng, fan_in: usize, nonnegative: bool) -> f64 {
    let n = fan_in.max(1) as f64;
    if nonnegative {
        rng.gen_range(0.0..2.0 / n)
    } else {
        let b = 1.0 / n.sqrt();
        rng.gen_range(-b..b)
    }
}

fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize, nonnegative: bool) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for x in m.data.iter_mut() {
        *x = uniform(rng, fan_in, nonnegative);
    }
    m
}

fn random_vec(rng: &mut impl Rng, n: usize, fan_in: usize, nonnegative: bool) -> Vec<f64> {
    (0..n).map(|_| uniform(rng, fan_in, nonnegative)).collect()
}

pub fn random_model(sig: &Signature, spec: &InitSpec, seed: u64) -> Result<Model, ModelError> {
    let mut rng = substream(seed, "init");
    let nn = spec.nonnegative;
    let mut layers = Vec::new();
    let mut din = sig.delta();
    for (i, &dout) in spec.dims.iter().enumerate() {
        // A x plus one B_c agg_c per colour
        let fan_in = din * (1 + sig.colors());
        layers.push(Layer {
            a: random_matrix(&mut rng, dout, din, fan_in, nn),
            b: (0..sig.colors()).map(|_| random_matrix(&mut rng, dout, din, fan_in, nn)).collect(),
            bias: vec![0.0; dout],
            activation: Activation::Relu,
            budget: spec.budgets.get(i).copied().unwrap_or(AggBudget::MAX),
        });
        din = dout;
    }
    let gnn = MaxSumGnn::new(layers, spec.direction)?;
    let d = din;
    let nrel = sig.colors();
    let params = match spec.scoring {
        ScoringKind::Rescal => {
            ScoringParams::Rescal { relations: (0..nrel).map(|_| random_matrix(&mut rng, d, d, d * d, nn)).collect() }
        }
        ScoringKind::Distmult => {
            ScoringParams::Distmult { relations: (0..nrel).map(|_| random_vec(&mut rng, d, d, nn)).collect() }
        }
        ScoringKind::Tucker => ScoringParams::Tucker {
            rel_dim: d,
            core: random_vec(&mut rng, d * d * d, d * d * d, nn),
            relations: (0..nrel).map(|_| random_vec(&mut rng, d, 1, nn)).collect(),
        },
        ScoringKind::Nam => ScoringParams::Nam {
            relations: (0..nrel).map(|_| random_vec(&mut rng, d, 1, nn)).collect(),
            layers: [(2 * d, d), (d, d), (d, d)]
                .into_iter()
                .map(|(i, o)| Dense { w: random_matrix(&mut rng, o, i, i, nn), bias: vec![0.0; o] })
                .collect(),
        },
    };
    let scoring = ScoringFunction { dim: d, threshold: 0.0, params };
    let mut m = Model::new(sig.clone(), gnn, scoring)?;
    m.universal_unary = spec.universal_unary;
    m.check()?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct EpochReport {
    pub epoch: usize,
    pub loss: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub losses: Vec<f64>,
}

/// Full-batch training on `train`. Each epoch holds out a fresh fraction of
/// the binary facts as targets, corrupts their predicates for negatives,
/// takes one Adam step and clamps when configured. `on_epoch` sees the
/// model after each step.
pub fn train(
    init: Model,
    train_facts: &Dataset,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochReport, &Model),
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    if train_facts.binary_facts().count() < 2 {
        return Err(TrainError::Empty("training set needs at least two binary facts".into()));
    }
    let mut m = init;
    if cfg.clamp_nonnegative {
        clamp_nonnegative(&mut m);
    }
    let mut p = params(&m);
    let mut adam = Adam::new(p.len(), cfg);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let neg_cfg = NegativeSamplerConfig {
        negatives_per_positive: cfg.negatives_per_positive,
        filter_against: train_facts.clone(),
    };
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let split_seed = derive_seed(cfg.seed, &format!("epoch_split/{epoch}"));
        let (input, targets) = epoch_split(train_facts, cfg.holdout_fraction, split_seed);
        let negatives =
            sample_negatives(&targets, &m.signature, &neg_cfg, derive_seed(cfg.seed, &format!("negatives/{epoch}")));
        let batch = Batch::new(&m, &input, &targets, &negatives)?;
        let (loss, grad) = loss_and_grad(&m, &batch, cfg.positive_loss_weight)?;
        if !loss.is_finite() {
            return Err(TrainError::NanLoss {
                epoch,
                loss,
                targets: targets.len(),
                negatives: negatives.len(),
                max_param: p.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            });
        }
        adam.step(&mut p, &params(&grad));
        set_params(&mut m, &p);
        if cfg.clamp_nonnegative {
            clamp_nonnegative(&mut m);
            p = params(&m);
        }
        losses.push(loss);
        on_epoch(&EpochReport { epoch, loss, elapsed: start.elapsed() }, &m);
    }
    Ok(TrainOutput { model: m, losses })
}

/// Scores of `facts` with `input` as the model input.
pub fn score_facts(m: &Model, input: &Dataset, facts: &[Atom]) -> Result<Vec<f64>, TrainError> {
    let batch = Batch::new(m, input, facts, &[])?;
    batch_scores(m, &batch)
}

/// The candidate score with the best accuracy when predicting s ≥ t;
/// ties go to the largest candidate. Returns (threshold, accuracy).
pub fn select_threshold_from_scores(pos: &[f64], neg: &[f64]) -> (f64, f64) {
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    assert!(!all.is_empty(), "threshold selection needs scores");
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = all.len() as f64;
    // Walk candidates from the largest down; at candidate t every score ≥ t
    // is predicted positive.
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best = (f64::NAN, -1.0);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tn = neg.len() - fp;
        let acc = (tp + tn) as f64 / n;
        if acc > best.1 {
            best = (t, acc);
        }
    }
    best
}

pub fn select_threshold(m: &Model, input: &Dataset, pos: &[Atom], neg: &[Atom]) -> Result<f64, TrainError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(TrainError::Empty("threshold selection needs validation positives and negatives".into()));
    }
    let ps = score_facts(m, input, pos)?;
    let ns = score_facts(m, input, neg)?;
    Ok(select_threshold_from_scores(&ps, &ns).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auprc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_epoch_loss: Option<f64>,
}

/// Average precision: Σ_n (R_n - R_{n-1}) P_n over distinct score cut-offs.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> f64 {
    if pos.is_empty() {
        return 0.0;
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos.len() as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn metrics_from_scores(pos: &[f64], neg: &[f64], threshold: f64) -> Metrics {
    let tp = pos.iter().filter(|&&s| s >= threshold).count() as f64;
    let fp = neg.iter().filter(|&&s| s >= threshold).count() as f64;
    let fneg = pos.len() as f64 - tp;
    let tn = neg.len() as f64 - fp;
    let total = tp + fp + fneg + tn;
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Metrics {
        accuracy: if total > 0.0 { (tp + tn) / total } else { 0.0 },
        precision,
        recall,
        f1,
        auprc: average_precision(pos, neg),
        final_epoch_loss: None,
    }
}

/// Metrics at the model threshold.
pub fn evaluate(m: &Model, input: &Dataset, pos: &[Atom], neg: &[Atom]) -> Result<Metrics, TrainError> {
    let ps = score_facts(m, input, pos)?;
    let ns = score_facts(m, input, neg)?;
    Ok(metrics_from_scores(&ps, &ns, m.scoring.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!((bce_logits_loss(&[0.0], &[1.0], 1.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_logits_loss(&[0.0], &[1.0], 50.0) - 50.0 * 2f64.ln()).abs() < 1e-10);
        let tiny = bce_logits_loss(&[30.0], &[1.0], 1.0);
        assert!(tiny.is_finite() && tiny < 1e-12);
        assert!(bce_logits_loss(&[-800.0], &[0.0], 1.0).abs() < 1e-12);
        assert!((bce_logits_loss(&[800.0], &[0.0], 1.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn positive_weight_splits_terms() {
        let s = [0.3, -1.2, 2.0, 0.0];
        let y = [1.0, 0.0, 1.0, 0.0];
        let pos = bce_logits_loss(&[0.3, 2.0], &[1.0, 1.0], 1.0) * 2.0;
        let neg = bce_logits_loss(&[-1.2, 0.0], &[0.0, 0.0], 1.0) * 2.0;
        let full = bce_logits_loss(&s, &y, 50.0) * 4.0;
        assert!((full - (50.0 * pos + neg)).abs() < 1e-9);
    }

    #[test]
    fn threshold_selection() {
        assert_eq!(select_threshold_from_scores(&[0.9], &[0.1]), (0.9, 1.0));
        let (t, acc) = select_threshold_from_scores(&[0.8, 0.7], &[0.2, 0.1]);
        assert!(t > 0.2 && t <= 0.8);
        assert_eq!(acc, 1.0);
        // one candidate: everything predicted positive
        let (t, acc) = select_threshold_from_scores(&[0.5], &[0.5, 0.5]);
        assert_eq!(t, 0.5);
        assert!((acc - 1.0 / 3.0).abs() < 1e-12);
        // ties in accuracy go to the largest threshold
        let (t, _) = select_threshold_from_scores(&[0.9, 0.3], &[0.5]);
        assert_eq!(t, 0.9);
    }

    #[test]
    fn metric_conventions() {
        let m = metrics_from_scores(&[0.9, 0.8], &[0.1, 0.2], 0.5);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1, m.auprc), (1.0, 1.0, 1.0, 1.0, 1.0));
        let z = metrics_from_scores(&[0.1], &[0.2], 0.9);
        assert_eq!((z.precision, z.recall), (0.0, 0.0));
        let ap = average_precision(&[0.9, 0.5], &[0.7]);
        assert!((ap - (0.5 * 1.0 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::new(1, false, 0) };
        let mut p = vec![1.0, -1.0];
        let mut a = Adam::new(2, &cfg);
        a.step(&mut p, &[2.0, -0.5]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }
}
