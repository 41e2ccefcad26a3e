//! Aggregation capacities of max-sum GNNs paired with non-negative bilinear
//! scoring functions, and the capacity-restricted GNN.
//!
//! The least non-zero label values are taken from a truncated superset of
//! the value sets X_{ℓ,i}: every value a label index can take that is at
//! most a per-index bound M_{ℓ,i}, plus a lower bound on the least value
//! above it. Bounds are chosen top-down so that the least non-zero value of
//! every layer is covered. Label indices are treated as independent, which
//! only enlarges the sets, so every ε is a lower bound and every capacity an
//! upper bound of the exact one.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::gnn::{Activation, AggBudget, MaxSumGnn};
use crate::scoring::{BilinearView, ScoringError};

/// Default limit on the size of one truncated value set.
pub const DEFAULT_SET_CAP: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CapacityError {
    #[error("layer {0}: capacities need ReLU activations")]
    Activation(usize),
    #[error("layer {layer}: negative weight; capacities need a monotonic GNN")]
    NotMonotonic { layer: usize },
    #[error("scoring matrix of relation {0} has a negative entry")]
    NegativeScoring(usize),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error("layer {0}: value set exceeded the cap and the aggregation budget is infinite")]
    Infeasible(usize),
}

/// What is known about the least non-zero element of X_{ℓ,i}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MinNonzero {
    /// X_{ℓ,i} = {0}.
    Zero,
    /// A positive lower bound.
    AtLeast(f64),
    /// The value set grew past the cap.
    Unknown,
}

impl MinNonzero {
    fn merge(self, other: MinNonzero) -> MinNonzero {
        use MinNonzero::*;
        match (self, other) {
            (Unknown, _) | (_, Unknown) => Unknown,
            (Zero, x) | (x, Zero) => x,
            (AtLeast(a), AtLeast(b)) => AtLeast(a.min(b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueBounds {
    /// `layers[ℓ][i]` for ℓ = 0..=L.
    pub layers: Vec<Vec<MinNonzero>>,
}

impl ValueBounds {
    /// Least non-zero element of the union over indices at layer ℓ.
    pub fn union(&self, layer: usize) -> MinNonzero {
        self.layers[layer].iter().fold(MinNonzero::Zero, |a, &b| a.merge(b))
    }
}

/// Sorted values; all but possibly the last are at most the set's bound.
type Truncated = Vec<f64>;

fn normalize(v: &mut Vec<f64>) {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
}

/// Deduplicates `v` once it holds more than 2·cap raw values; false when
/// the distinct values still exceed the cap.
fn within_cap(v: &mut Vec<f64>, cap: usize) -> bool {
    if v.len() > 2 * cap {
        normalize(v);
    }
    v.len() <= 2 * cap
}

/// Sums of up to k elements of `set`, keeping sums <= `bound` and the least
/// sum above it.
fn aggregate(set: &[f64], k: AggBudget, bound: f64, cap: usize) -> Option<Truncated> {
    let positive: Vec<f64> = set.iter().copied().filter(|&x| x > 0.0).collect();
    let mut kept = vec![0.0];
    let mut frontier = vec![0.0];
    let mut above = f64::INFINITY;
    let rounds = match k {
        AggBudget::Finite(k) => k,
        AggBudget::Infinite => u64::MAX,
    };
    let mut r = 0;
    while r < rounds && !frontier.is_empty() {
        let mut next = Vec::new();
        for &p in &frontier {
            for &x in &positive {
                let s = p + x;
                if s > bound {
                    above = above.min(s);
                } else {
                    next.push(s);
                }
            }
            if !within_cap(&mut next, cap) {
                return None;
            }
        }
        normalize(&mut next);
        // Only sums not already present can lead anywhere new.
        next.retain(|s| kept.binary_search_by(|k| k.partial_cmp(s).unwrap()).is_err());
        kept.extend(next.iter().copied());
        normalize(&mut kept);
        if kept.len() > cap {
            return None;
        }
        frontier = next;
        r += 1;
    }
    if above.is_finite() {
        kept.push(above);
    }
    Some(kept)
}

/// Truncated value sets for all layers with top-down bounds M.
fn value_sets(g: &MaxSumGnn, cap: usize) -> Vec<Vec<Option<Truncated>>> {
    let l_count = g.num_layers();
    let dims = g.dims();
    // Bounds M_{ℓ,i}, top-down from M_L = 0.
    let mut m: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    for l in (1..=l_count).rev() {
        let layer = &g.layers[l - 1];
        for j in 0..dims[l - 1] {
            let mut best: f64 = 0.0;
            for i in 0..dims[l] {
                let slack = m[l][i] - layer.bias[i];
                let weights = std::iter::once(layer.a.get(i, j)).chain(layer.b.iter().map(|b| b.get(i, j)));
                for w in weights.filter(|&w| w > 0.0) {
                    best = best.max(slack / w);
                }
            }
            m[l - 1][j] = best;
        }
    }
    let mut sets: Vec<Vec<Option<Truncated>>> = vec![vec![Some(vec![0.0, 1.0]); dims[0]]];
    for l in 1..=l_count {
        let layer = &g.layers[l - 1];
        let prev = &sets[l - 1];
        let mut cur = Vec::with_capacity(dims[l]);
        for i in 0..dims[l] {
            let bias = layer.bias[i];
            let t = m[l][i] - bias;
            let mut terms: Vec<(f64, Option<Truncated>)> = Vec::new();
            for (j, set) in prev.iter().enumerate() {
                let w = layer.a.get(i, j);
                if w > 0.0 {
                    terms.push((w, set.clone()));
                }
                for b in &layer.b {
                    let w = b.get(i, j);
                    if w > 0.0 {
                        let agg = set.as_ref().and_then(|s| aggregate(s, layer.budget, t / w * (1.0 + 1e-12), cap));
                        terms.push((w, agg));
                    }
                }
            }
            cur.push(combine(bias, t, &terms, cap));
        }
        sets.push(cur);
    }
    sets
}

/// ReLU(bias + Σ w·x) over one element x per term, truncated at bias + t.
fn combine(bias: f64, t: f64, terms: &[(f64, Option<Truncated>)], cap: usize) -> Option<Truncated> {
    if t < 0.0 {
        // Even the empty sum exceeds the bound; bias is the least value.
        return Some(vec![bias.max(0.0)]);
    }
    let mut partial = vec![0.0];
    let mut above = f64::INFINITY;
    for (w, set) in terms {
        let set = set.as_ref()?;
        let mut next = Vec::new();
        for &p in &partial {
            for &x in set {
                let s = p + w * x;
                if s > t {
                    above = above.min(s);
                    // Sets are sorted: later elements only give larger sums.
                    break;
                }
                next.push(s);
            }
            if !within_cap(&mut next, cap) {
                return None;
            }
        }
        normalize(&mut next);
        if next.len() > cap {
            return None;
        }
        partial = next;
    }
    let mut out: Vec<f64> = partial.iter().map(|&p| (bias + p).max(0.0)).collect();
    if above.is_finite() {
        out.push((bias + above).max(0.0));
    }
    normalize(&mut out);
    Some(out)
}

fn check_gnn(g: &MaxSumGnn) -> Result<(), CapacityError> {
    for (i, l) in g.layers.iter().enumerate() {
        if l.activation != Activation::Relu {
            return Err(CapacityError::Activation(i + 1));
        }
        let neg = |m: &crate::gnn::Matrix| m.data.iter().any(|&x| x < 0.0 || x.is_nan());
        if neg(&l.a) || l.b.iter().any(neg) {
            return Err(CapacityError::NotMonotonic { layer: i + 1 });
        }
    }
    Ok(())
}

/// Lower bounds on the least non-zero element of every X_{ℓ,i}.
pub fn min_nonzero_bounds(g: &MaxSumGnn) -> Result<ValueBounds, CapacityError> {
    min_nonzero_bounds_with_cap(g, DEFAULT_SET_CAP)
}

pub fn min_nonzero_bounds_with_cap(g: &MaxSumGnn, cap: usize) -> Result<ValueBounds, CapacityError> {
    check_gnn(g)?;
    let sets = value_sets(g, cap);
    let layers = sets
        .iter()
        .map(|row| {
            row.iter()
                .map(|s| match s {
                    None => MinNonzero::Unknown,
                    Some(v) => match v.iter().copied().find(|&x| x > 0.0) {
                        None => MinNonzero::Zero,
                        Some(x) => MinNonzero::AtLeast(x),
                    },
                })
                .collect()
        })
        .collect();
    Ok(ValueBounds { layers })
}

/// Least natural n >= 1 with n·w·ε >= t_f. The second component is false
/// when t_f <= 0, where 0 would satisfy the inequality and 1 is used instead.
pub fn alpha_for(w: f64, eps: f64, t_f: f64) -> (u64, bool) {
    if t_f <= 0.0 {
        return (1, false);
    }
    let mut n = (t_f / (w * eps)).ceil().max(1.0) as u64;
    while (n as f64) * w * eps < t_f {
        n += 1;
    }
    while n > 1 && ((n - 1) as f64) * w * eps >= t_f {
        n -= 1;
    }
    (n, true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCapacity {
    pub layer: usize,
    /// α_ℓ.
    pub alpha: f64,
    /// Least non-zero weight of A_ℓ and all B_ℓ^c; None when all are zero.
    pub w: Option<f64>,
    /// Least non-zero element of the layer ℓ-1 value sets.
    pub epsilon: MinNonzero,
    pub beta: f64,
    pub b: f64,
    pub capacity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityResult {
    pub alpha: f64,
    pub alpha_r: Vec<u64>,
    /// Indexed by layer - 1.
    pub layers: Vec<LayerCapacity>,
    pub max_capacity: u64,
    pub bounds: ValueBounds,
    pub warnings: Vec<String>,
}

impl CapacityResult {
    pub fn capacities(&self) -> Vec<u64> {
        self.layers.iter().map(|l| l.capacity).collect()
    }
}

impl fmt::Display for CapacityResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "alpha = {}", self.alpha)?;
        for (r, a) in self.alpha_r.iter().enumerate() {
            writeln!(f, "alpha_R[{r}] = {a}")?;
        }
        writeln!(f, "layer\talpha\tw\tepsilon\tbeta\tb\tC")?;
        for l in &self.layers {
            let w = l.w.map_or("-".to_string(), |w| w.to_string());
            let e = match l.epsilon {
                MinNonzero::Zero => "{0}".to_string(),
                MinNonzero::AtLeast(x) => x.to_string(),
                MinNonzero::Unknown => "?".to_string(),
            };
            writeln!(f, "{}\t{}\t{}\t{}\t{}\t{}\t{}", l.layer, l.alpha, w, e, l.beta, l.b, l.capacity)?;
        }
        writeln!(f, "C = {}", self.max_capacity)?;
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// α and α_R from the layer-L bounds.
pub fn compute_alpha(
    bounds: &ValueBounds,
    f: &BilinearView,
    t_f: f64,
) -> Result<(f64, Vec<u64>, Vec<String>), CapacityError> {
    let eps = bounds.union(bounds.layers.len() - 1);
    let mut alpha_r = Vec::with_capacity(f.relations.len());
    let mut warnings = Vec::new();
    for (r, m) in f.relations.iter().enumerate() {
        if m.data.iter().any(|&x| x < 0.0) {
            return Err(CapacityError::NegativeScoring(r));
        }
        let a = match (m.min_positive(), eps) {
            (None, _) | (_, MinNonzero::Zero) => 1,
            (Some(_), MinNonzero::Unknown) => return Err(CapacityError::Infeasible(bounds.layers.len() - 1)),
            (Some(w), MinNonzero::AtLeast(e)) => {
                let (a, ok) = alpha_for(w, e, t_f);
                if !ok {
                    warnings.push(format!(
                        "relation {r}: threshold {t_f} <= 0 makes every natural satisfy the alpha bound; using 1"
                    ));
                }
                a
            }
        };
        alpha_r.push(a);
    }
    let alpha = alpha_r.iter().copied().max().unwrap_or(1) as f64;
    Ok((alpha, alpha_r, warnings))
}

pub fn compute_capacities(g: &MaxSumGnn, f: &BilinearView, t_f: f64) -> Result<CapacityResult, CapacityError> {
    compute_capacities_with_cap(g, f, t_f, DEFAULT_SET_CAP)
}

pub fn compute_capacities_with_cap(
    g: &MaxSumGnn,
    f: &BilinearView,
    t_f: f64,
    cap: usize,
) -> Result<CapacityResult, CapacityError> {
    let bounds = min_nonzero_bounds_with_cap(g, cap)?;
    capacities_from_bounds(g, f, t_f, bounds)
}

/// Runs the capacity algorithm top-down from layer L with given bounds.
pub fn capacities_from_bounds(
    g: &MaxSumGnn,
    f: &BilinearView,
    t_f: f64,
    bounds: ValueBounds,
) -> Result<CapacityResult, CapacityError> {
    check_gnn(g)?;
    let l_count = g.num_layers();
    let (alpha, alpha_r, warnings) = match compute_alpha(&bounds, f, t_f) {
        Err(CapacityError::Infeasible(_)) => return keep_finite_budgets(g, bounds),
        other => other?,
    };
    let mut layers: Vec<LayerCapacity> = Vec::with_capacity(l_count);
    let mut a = alpha;
    let mut stopped = false;
    for l in (1..=l_count).rev() {
        let layer = &g.layers[l - 1];
        let eps = bounds.union(l - 1);
        let w = layer.min_positive_weight();
        if stopped || w.is_none() || eps == MinNonzero::Zero {
            stopped = true;
            layers.push(LayerCapacity { layer: l, alpha: a, w, epsilon: eps, beta: 0.0, b: 0.0, capacity: 0 });
            continue;
        }
        let w = w.unwrap();
        let beta = if a > 0.0 { a.ceil() } else { 0.0 };
        let b = layer.bias.iter().copied().fold(f64::INFINITY, f64::min);
        let capacity = match eps {
            MinNonzero::AtLeast(e) => {
                let raw = ((beta - b) / (w * e)).ceil().max(0.0);
                match layer.budget {
                    AggBudget::Finite(k) => (k as f64).min(raw) as u64,
                    AggBudget::Infinite => {
                        if raw >= u64::MAX as f64 {
                            return Err(CapacityError::Infeasible(l));
                        }
                        raw as u64
                    }
                }
            }
            _ => match layer.budget {
                AggBudget::Finite(k) => k,
                AggBudget::Infinite => return Err(CapacityError::Infeasible(l)),
            },
        };
        layers.push(LayerCapacity { layer: l, alpha: a, w: Some(w), epsilon: eps, beta, b, capacity });
        a = (beta - b) / w;
    }
    layers.reverse();
    let max_capacity = layers.iter().map(|l| l.capacity).max().unwrap_or(0);
    Ok(CapacityResult { alpha, alpha_r, layers, max_capacity, bounds, warnings })
}

/// Fallback when ε at layer L is unknown: α cannot be computed, so every
/// finite budget is kept as its own capacity.
fn keep_finite_budgets(g: &MaxSumGnn, bounds: ValueBounds) -> Result<CapacityResult, CapacityError> {
    let mut layers = Vec::new();
    for (i, l) in g.layers.iter().enumerate() {
        let AggBudget::Finite(k) = l.budget else {
            return Err(CapacityError::Infeasible(i + 1));
        };
        layers.push(LayerCapacity {
            layer: i + 1,
            alpha: f64::NAN,
            w: l.min_positive_weight(),
            epsilon: bounds.union(i),
            beta: f64::NAN,
            b: f64::NAN,
            capacity: k,
        });
    }
    let max_capacity = layers.iter().map(|l| l.capacity).max().unwrap_or(0);
    Ok(CapacityResult {
        alpha: f64::NAN,
        alpha_r: Vec::new(),
        layers,
        max_capacity,
        bounds,
        warnings: vec!["value set cap exceeded at the last layer; budgets kept".into()],
    })
}

/// The GNN with every budget k_ℓ replaced by C_ℓ.
pub fn restrict_gnn(g: &MaxSumGnn, caps: &CapacityResult) -> MaxSumGnn {
    let budgets: Vec<AggBudget> = caps.capacities().into_iter().map(AggBudget::Finite).collect();
    g.with_budgets(&budgets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{Layer, Matrix, MessageDirection};

    fn one_layer(a: f64, b: f64, bias: f64, budget: AggBudget) -> MaxSumGnn {
        let layer = Layer {
            a: Matrix::from_rows(&[vec![a]]),
            b: vec![Matrix::from_rows(&[vec![b]])],
            bias: vec![bias],
            activation: Activation::Relu,
            budget,
        };
        MaxSumGnn::new(vec![layer], MessageDirection::AgainstEdges).unwrap()
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha_for(2.0, 1.0, 5.0), (3, true));
        assert_eq!(alpha_for(2.0, 1.0, 2.0), (1, true));
        assert_eq!(alpha_for(2.0, 1.0, 0.5), (1, true));
        assert_eq!(alpha_for(2.0, 1.0, -1.0), (1, false));
    }

    #[test]
    fn layer_zero_and_simple_bound() {
        let g = one_layer(2.0, 0.0, 0.0, AggBudget::SUM);
        let b = min_nonzero_bounds(&g).unwrap();
        assert_eq!(b.layers[0], vec![MinNonzero::AtLeast(1.0)]);
        match b.layers[1][0] {
            MinNonzero::AtLeast(x) => assert!((x - 2.0).abs() < 1e-6 && x <= 2.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_zero_is_marker() {
        let g = one_layer(0.0, 0.0, 0.0, AggBudget::SUM);
        let b = min_nonzero_bounds(&g).unwrap();
        assert_eq!(b.layers[1][0], MinNonzero::Zero);
        let view = BilinearView { relations: vec![Matrix::identity(1)] };
        let c = compute_capacities(&g, &view, 1.0).unwrap();
        assert_eq!(c.capacities(), vec![0]);
    }

    #[test]
    fn negative_bias_finds_small_values() {
        // ReLU(-0.5 + sum of neighbours): least positive value is 0.5.
        let g = one_layer(0.0, 1.0, -0.5, AggBudget::SUM);
        let b = min_nonzero_bounds(&g).unwrap();
        match b.layers[1][0] {
            MinNonzero::AtLeast(x) => assert!(x <= 0.5 && x > 0.49),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sum_capacity_matches_hand_count() {
        // v = ReLU(sum of neighbours); M = (1); t_f = 3 => alpha = 3, beta = 3,
        // C = ceil(3 / (1 * 1)) = 3.
        let g = one_layer(0.0, 1.0, 0.0, AggBudget::SUM);
        let view = BilinearView { relations: vec![Matrix::identity(1)] };
        let c = compute_capacities(&g, &view, 3.0).unwrap();
        assert_eq!(c.alpha_r, vec![3]);
        assert_eq!(c.capacities(), vec![3]);
        let max = compute_capacities(&g.with_budgets(&[AggBudget::MAX]), &view, 3.0).unwrap();
        assert_eq!(max.capacities(), vec![1]);
    }

    #[test]
    fn non_relu_rejected() {
        let mut g = one_layer(1.0, 1.0, 0.0, AggBudget::SUM);
        g.layers[0].activation = Activation::Identity;
        assert_eq!(min_nonzero_bounds(&g), Err(CapacityError::Activation(1)));
    }
}
