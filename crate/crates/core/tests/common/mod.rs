#![allow(dead_code)]

use kgmono::datalog::{Atom, Dataset, Signature};
use kgmono::gnn::{AggBudget, MessageDirection};
use kgmono::scoring::ScoringKind;
use kgmono::training::{batch_loss, for_each_param_mut, params, random_model, set_params, Batch, InitSpec};
use kgmono::transform::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KINDS: [ScoringKind; 4] = [ScoringKind::Rescal, ScoringKind::Distmult, ScoringKind::Tucker, ScoringKind::Nam];
pub const BILINEAR: [ScoringKind; 3] = [ScoringKind::Rescal, ScoringKind::Distmult, ScoringKind::Tucker];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn signature(unary: usize, binary: usize) -> Signature {
    let u: Vec<String> = (1..=unary).map(|i| format!("U{i}")).collect();
    let b: Vec<String> = (1..=binary).map(|i| format!("P{i}")).collect();
    Signature::new(&u, &b).unwrap()
}

#[derive(Debug, Clone)]
pub struct Shape {
    pub dims: Vec<usize>,
    pub budget: AggBudget,
    pub kind: ScoringKind,
    pub direction: MessageDirection,
}

/// Parameter distribution for random monotonic models.
#[derive(Debug, Clone, Copy)]
pub struct ParamDist {
    pub zero_prob: f64,
    pub weight: (f64, f64),
    pub bias: (f64, f64),
    pub threshold: (f64, f64),
    /// Round every parameter and the threshold to a multiple of this step.
    pub grid: Option<f64>,
}

impl Default for ParamDist {
    fn default() -> Self {
        ParamDist { zero_prob: 0.35, weight: (0.0, 1.0), bias: (-1.0, 0.5), threshold: (0.05, 1.5), grid: None }
    }
}

pub fn monotone_model(rng: &mut ChaCha8Rng, sig: &Signature, shape: &Shape) -> Model {
    monotone_model_with(rng, sig, shape, ParamDist::default())
}

pub fn monotone_model_with(rng: &mut ChaCha8Rng, sig: &Signature, shape: &Shape, dist: ParamDist) -> Model {
    let spec = InitSpec {
        dims: shape.dims.clone(),
        budgets: vec![shape.budget; shape.dims.len()],
        direction: shape.direction,
        scoring: shape.kind,
        nonnegative: true,
        universal_unary: None,
    };
    let snap = |x: f64| match dist.grid {
        Some(g) => (x / g).round() * g,
        None => x,
    };
    let mut m = random_model(sig, &spec, rng.gen()).unwrap();
    for_each_param_mut(&mut m, |x, constrained| {
        *x = if constrained {
            if rng.gen_bool(dist.zero_prob) {
                0.0
            } else {
                snap(rng.gen_range(dist.weight.0..dist.weight.1)).max(0.0)
            }
        } else {
            snap(rng.gen_range(dist.bias.0..dist.bias.1))
        };
    });
    m.scoring.threshold = snap(rng.gen_range(dist.threshold.0..dist.threshold.1));
    assert!(m.monotonicity_report().is_empty());
    m
}

/// A random shape with up to `max_layers` layers of width up to `max_dim`.
pub fn random_shape(
    rng: &mut ChaCha8Rng,
    max_layers: usize,
    max_dim: usize,
    kind: ScoringKind,
    budget: AggBudget,
) -> Shape {
    let layers = rng.gen_range(1..=max_layers);
    Shape {
        dims: (0..layers).map(|_| rng.gen_range(1..=max_dim)).collect(),
        budget,
        kind,
        direction: if rng.gen_bool(0.5) { MessageDirection::AgainstEdges } else { MessageDirection::AlongEdges },
    }
}

pub fn constant(i: usize) -> String {
    format!("c{i}")
}

/// Each possible fact over `n` constants is present with probability `p`.
pub fn random_dataset(rng: &mut ChaCha8Rng, sig: &Signature, n: usize, p: f64) -> Dataset {
    let mut d = Dataset::new();
    for i in 0..n {
        for u in &sig.unary {
            if rng.gen_bool(p) {
                d.insert(Atom::unary(u, &constant(i)));
            }
        }
        for j in 0..n {
            for r in &sig.binary {
                if rng.gen_bool(p) {
                    d.insert(Atom::binary(r, &constant(i), &constant(j)));
                }
            }
        }
    }
    d
}

/// Adds random facts to `d` over the same constants plus `extra` new ones.
pub fn random_superset(rng: &mut ChaCha8Rng, sig: &Signature, d: &Dataset, n: usize, extra: usize, p: f64) -> Dataset {
    d.union(&random_dataset(rng, sig, n + extra, p))
}

/// True when no ReLU pre-activation is within `eps` of 0 and no max-k
/// selection has two distinct values within `eps` at its cut-off, so the
/// loss is differentiable in a neighbourhood of the parameters.
pub fn smooth_at(m: &Model, batch: &Batch, eps: f64) -> bool {
    let cache = m.gnn.forward_cached(&batch.graph).unwrap();
    if cache.pre.iter().flatten().flatten().any(|z| z.abs() < eps) {
        return false;
    }
    for (l, layer) in m.gnn.layers.iter().enumerate() {
        let prev = &cache.trace.layers[l];
        for c in 0..layer.b.len() {
            for v in 0..batch.graph.len() {
                let nbrs = batch.graph.neighbors(c, v, m.gnn.direction);
                for j in 0..layer.in_dim() {
                    let mut vals: Vec<f64> = nbrs.iter().map(|&u| prev[u][j]).collect();
                    vals.sort_by(|a, b| b.total_cmp(a));
                    let k = layer.budget.take(vals.len());
                    if k > 0 && k < vals.len() {
                        let gap = vals[k - 1] - vals[k];
                        if gap > 0.0 && gap < eps {
                            return false;
                        }
                    }
                }
            }
        }
    }
    true
}

pub const H: f64 = 1e-5;
pub const REL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
pub const FLOOR: f64 = 1e-6;

pub fn random_batch(rng: &mut ChaCha8Rng, m: &Model) -> Batch {
    let sig = &m.signature;
    let n = rng.gen_range(3..=5);
    let c = |i: usize| format!("c{i}");
    let mut input = Dataset::new();
    for i in 0..n {
        for u in &sig.unary {
            if rng.gen_bool(0.5) {
                input.insert(Atom::unary(u, &c(i)));
            }
        }
        for j in 0..n {
            for r in &sig.binary {
                if rng.gen_bool(0.3) {
                    input.insert(Atom::binary(r, &c(i), &c(j)));
                }
            }
        }
    }
    let mut facts = |k: usize| -> Vec<Atom> {
        (0..k)
            .map(|_| {
                let r = &sig.binary[rng.gen_range(0..sig.binary.len())];
                Atom::binary(r, &c(rng.gen_range(0..n)), &c(rng.gen_range(0..n)))
            })
            .collect()
    };
    let pos = facts(3);
    let neg = facts(4);
    Batch::new(m, &input, &pos, &neg).unwrap()
}

pub fn tiny_model(rng: &mut ChaCha8Rng, kind: ScoringKind, budget: AggBudget) -> Model {
    let sig = signature(2, 2);
    let layers = rng.gen_range(1..=2);
    let spec = InitSpec {
        dims: (0..layers).map(|_| rng.gen_range(2..=3)).collect(),
        budgets: vec![budget; layers],
        direction: MessageDirection::AlongEdges,
        scoring: kind,
        nonnegative: false,
        universal_unary: None,
    };
    let mut m = random_model(&sig, &spec, rng.gen()).unwrap();
    for_each_param_mut(&mut m, |x, _| *x = rng.gen_range(-1.0..1.0));
    m
}

pub fn numeric_grad(m: &Model, batch: &Batch, pw: f64) -> Vec<f64> {
    let base = params(m);
    let mut out = Vec::with_capacity(base.len());
    let mut probe = m.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        set_params(&mut probe, &p);
        let up = batch_loss(&probe, batch, pw).unwrap();
        p[i] = base[i] - H;
        set_params(&mut probe, &p);
        let down = batch_loss(&probe, batch, pw).unwrap();
        out.push((up - down) / (2.0 * H));
    }
    out
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}
