//! Max-sum GNNs: parameters, forward evaluation and the monotonicity check.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::ColoredGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("layer {layer}: {msg}")]
    Shape { layer: usize, msg: String },
    #[error("graph labels have dimension {found}, the GNN expects {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("graph has {found} colours, the GNN expects {expected}")]
    Colors { expected: usize, found: usize },
    #[error("a GNN needs at least one layer")]
    NoLayers,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.concat() }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// out += self * x
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o += acc;
        }
    }

    /// out += self^T * y
    pub fn mul_t_add(&self, y: &[f64], out: &mut [f64]) {
        for (r, &yr) in y.iter().enumerate().take(self.rows) {
            if yr == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    /// Least strictly positive entry.
    pub fn min_positive(&self) -> Option<f64> {
        min_positive(&self.data)
    }
}

pub(crate) fn min_positive(xs: &[f64]) -> Option<f64> {
    xs.iter().copied().filter(|&x| x > 0.0).fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    /// Not monotonic in the required sense (its range is all of R); only for
    /// unconstrained experiments.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative used in backpropagation; ReLU uses 0 at 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn is_monotone_nonnegative(self) -> bool {
        matches!(self, Activation::Relu)
    }
}

/// Aggregation budget k: a natural number or the unbounded sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub enum AggBudget {
    Finite(u64),
    Infinite,
}

impl AggBudget {
    pub const MAX: AggBudget = AggBudget::Finite(1);
    pub const SUM: AggBudget = AggBudget::Infinite;

    pub fn take(self, n: usize) -> usize {
        match self {
            AggBudget::Finite(k) => (k as usize).min(n),
            AggBudget::Infinite => n,
        }
    }

    pub fn min(self, other: AggBudget) -> AggBudget {
        match (self, other) {
            (AggBudget::Infinite, x) | (x, AggBudget::Infinite) => x,
            (AggBudget::Finite(a), AggBudget::Finite(b)) => AggBudget::Finite(a.min(b)),
        }
    }
}

impl fmt::Display for AggBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggBudget::Finite(k) => write!(f, "{k}"),
            AggBudget::Infinite => write!(f, "inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetRepr {
    Num(u64),
    Text(String),
}

impl TryFrom<BudgetRepr> for AggBudget {
    type Error = String;
    fn try_from(r: BudgetRepr) -> Result<Self, String> {
        match r {
            BudgetRepr::Num(k) => Ok(AggBudget::Finite(k)),
            BudgetRepr::Text(s) if s == "inf" => Ok(AggBudget::Infinite),
            BudgetRepr::Text(s) => Err(format!("aggregation budget must be a natural number or \"inf\", got {s:?}")),
        }
    }
}

impl From<AggBudget> for BudgetRepr {
    fn from(b: AggBudget) -> Self {
        match b {
            AggBudget::Finite(k) => BudgetRepr::Num(k),
            AggBudget::Infinite => BudgetRepr::Text("inf".into()),
        }
    }
}

/// Which edges feed a vertex's aggregation. `AgainstEdges`: v aggregates over
/// u with (v,u) in E^c. `AlongEdges`: over u with (u,v) in E^c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageDirection {
    #[default]
    AgainstEdges,
    AlongEdges,
}

/// Sum of the min(k, |S|) largest values. Values are added in descending
/// order so the result depends only on the multiset.
pub fn max_k_sum(values: &[f64], k: AggBudget) -> f64 {
    let mut buf = values.to_vec();
    max_k_sum_in_place(&mut buf, k)
}

pub(crate) fn max_k_sum_in_place(buf: &mut [f64], k: AggBudget) -> f64 {
    let take = k.take(buf.len());
    match take {
        0 => 0.0,
        1 => buf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        _ => {
            buf.sort_unstable_by(|a, b| b.total_cmp(a));
            buf[..take].iter().sum()
        }
    }
}

/// Indices of the min(k, n) largest values, ties broken toward the lower
/// index (callers pass values in ascending vertex-id order).
pub fn top_k_indices(values: &[f64], k: AggBudget) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k.take(values.len()));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub a: Matrix,
    pub b: Vec<Matrix>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub budget: AggBudget,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.a.rows
    }

    pub fn in_dim(&self) -> usize {
        self.a.cols
    }

    /// Least strictly positive entry of A and every B^c.
    pub fn min_positive_weight(&self) -> Option<f64> {
        std::iter::once(&self.a)
            .chain(&self.b)
            .filter_map(Matrix::min_positive)
            .fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
    }

    pub fn weights_all_zero(&self) -> bool {
        self.a.is_zero() && self.b.iter().all(Matrix::is_zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxSumGnn {
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub direction: MessageDirection,
}

/// Vertex labels after each layer; `layers[0]` is the input labelling.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl LayerTrace {
    pub fn last(&self) -> &[Vec<f64>] {
        self.layers.last().unwrap()
    }
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub trace: LayerTrace,
    /// `pre[l][v]`: pre-activation of layer l+1 at vertex v.
    pub pre: Vec<Vec<Vec<f64>>>,
    /// `agg[l][c][v]`: aggregated input of layer l+1.
    pub agg: Vec<Vec<Vec<Vec<f64>>>>,
    /// `selected[l][c][v][j]`: neighbours contributing to component j.
    pub selected: Vec<Vec<Vec<Vec<Vec<usize>>>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeWeight { layer: usize, matrix: String, row: usize, col: usize, value: f64 },
    Activation { layer: usize, activation: Activation },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeWeight { layer, matrix, row, col, value } => {
                write!(f, "layer {layer}: {matrix}[{row},{col}] = {value} < 0")
            }
            Violation::Activation { layer, activation } => {
                write!(f, "layer {layer}: activation {activation:?} is not monotone with non-negative range")
            }
        }
    }
}

impl MaxSumGnn {
    pub fn new(layers: Vec<Layer>, direction: MessageDirection) -> Result<Self, GnnError> {
        let g = MaxSumGnn { layers, direction };
        g.check_shapes()?;
        Ok(g)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// δ_0, ..., δ_L.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim()];
        d.extend(self.layers.iter().map(Layer::out_dim));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn colors(&self) -> usize {
        self.layers[0].b.len()
    }

    /// True when every budget is at most 1, i.e. a max GNN.
    pub fn is_max(&self) -> bool {
        self.layers.iter().all(|l| matches!(l.budget, AggBudget::Finite(k) if k <= 1))
    }

    pub fn check_shapes(&self) -> Result<(), GnnError> {
        if self.layers.is_empty() {
            return Err(GnnError::NoLayers);
        }
        let colors = self.layers[0].b.len();
        let mut prev = self.layers[0].in_dim();
        for (i, l) in self.layers.iter().enumerate() {
            let layer = i + 1;
            let shape_err = |msg: String| GnnError::Shape { layer, msg };
            if l.a.data.len() != l.a.rows * l.a.cols {
                return Err(shape_err("A data length does not match rows*cols".into()));
            }
            if l.a.cols != prev {
                return Err(shape_err(format!("A has {} columns, expected {prev}", l.a.cols)));
            }
            if l.b.len() != colors {
                return Err(shape_err(format!("{} B matrices, expected {colors}", l.b.len())));
            }
            for (c, b) in l.b.iter().enumerate() {
                if b.rows != l.a.rows || b.cols != prev || b.data.len() != b.rows * b.cols {
                    return Err(shape_err(format!("B[{c}] has the wrong shape")));
                }
            }
            if l.bias.len() != l.a.rows {
                return Err(shape_err(format!("bias has length {}, expected {}", l.bias.len(), l.a.rows)));
            }
            prev = l.a.rows;
        }
        Ok(())
    }

    fn check_graph(&self, g: &ColoredGraph) -> Result<(), GnnError> {
        if g.delta() != self.input_dim() {
            return Err(GnnError::InputDim { expected: self.input_dim(), found: g.delta() });
        }
        if g.colors() != self.colors() {
            return Err(GnnError::Colors { expected: self.colors(), found: g.colors() });
        }
        Ok(())
    }

    pub fn forward(&self, g: &ColoredGraph) -> Result<LayerTrace, GnnError> {
        self.check_graph(g)?;
        let n = g.len();
        let mut layers = vec![g.labels.clone()];
        let mut buf = Vec::new();
        for layer in &self.layers {
            let prev = layers.last().unwrap();
            let din = layer.in_dim();
            let mut next = Vec::with_capacity(n);
            let mut agg = vec![0.0; din];
            for v in 0..n {
                let mut z = layer.bias.clone();
                layer.a.mul_add(&prev[v], &mut z);
                for (c, b) in layer.b.iter().enumerate() {
                    let nbrs = g.neighbors(c, v, self.direction);
                    if nbrs.is_empty() || layer.budget == AggBudget::Finite(0) {
                        continue;
                    }
                    for (j, a) in agg.iter_mut().enumerate() {
                        buf.clear();
                        buf.extend(nbrs.iter().map(|&u| prev[u][j]));
                        *a = max_k_sum_in_place(&mut buf, layer.budget);
                    }
                    b.mul_add(&agg, &mut z);
                }
                for zi in z.iter_mut() {
                    *zi = layer.activation.apply(*zi);
                }
                next.push(z);
            }
            layers.push(next);
        }
        Ok(LayerTrace { layers })
    }

    /// Forward pass that also records pre-activations, aggregates and the
    /// neighbours selected by each max-k-sum (ties toward lower vertex id).
    pub fn forward_cached(&self, g: &ColoredGraph) -> Result<ForwardCache, GnnError> {
        self.check_graph(g)?;
        let n = g.len();
        let mut trace = vec![g.labels.clone()];
        let mut pre_all = Vec::new();
        let mut agg_all = Vec::new();
        let mut sel_all = Vec::new();
        for layer in &self.layers {
            let prev = trace.last().unwrap();
            let din = layer.in_dim();
            let colors = layer.b.len();
            let mut pre = Vec::with_capacity(n);
            let mut out = Vec::with_capacity(n);
            let mut agg = vec![vec![vec![0.0; din]; n]; colors];
            let mut sel = vec![vec![vec![Vec::new(); din]; n]; colors];
            for v in 0..n {
                let mut z = layer.bias.clone();
                layer.a.mul_add(&prev[v], &mut z);
                for c in 0..colors {
                    let nbrs = g.neighbors(c, v, self.direction);
                    for j in 0..din {
                        let vals: Vec<f64> = nbrs.iter().map(|&u| prev[u][j]).collect();
                        let picked: Vec<usize> =
                            top_k_indices(&vals, layer.budget).into_iter().map(|i| nbrs[i]).collect();
                        let mut chosen: Vec<f64> = picked.iter().map(|&u| prev[u][j]).collect();
                        agg[c][v][j] = max_k_sum_in_place(&mut chosen, AggBudget::Infinite);
                        sel[c][v][j] = picked;
                    }
                    layer.b[c].mul_add(&agg[c][v], &mut z);
                }
                out.push(z.iter().map(|&zi| layer.activation.apply(zi)).collect());
                pre.push(z);
            }
            trace.push(out);
            pre_all.push(pre);
            agg_all.push(agg);
            sel_all.push(sel);
        }
        Ok(ForwardCache { trace: LayerTrace { layers: trace }, pre: pre_all, agg: agg_all, selected: sel_all })
    }

    /// Every negative weight and every activation that is not monotone with
    /// non-negative range. Empty iff the GNN is monotonic.
    pub fn validate_monotonic(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let layer = i + 1;
            let mats = std::iter::once(("A".to_string(), &l.a))
                .chain(l.b.iter().enumerate().map(|(c, b)| (format!("B[{c}]"), b)));
            for (label, m) in mats {
                for r in 0..m.rows {
                    for c in 0..m.cols {
                        let value = m.get(r, c);
                        if value < 0.0 || value.is_nan() {
                            out.push(Violation::NegativeWeight { layer, matrix: label.clone(), row: r, col: c, value });
                        }
                    }
                }
            }
            if !l.activation.is_monotone_nonnegative() {
                out.push(Violation::Activation { layer, activation: l.activation });
            }
        }
        out
    }

    /// Same parameters with every budget replaced.
    pub fn with_budgets(&self, budgets: &[AggBudget]) -> MaxSumGnn {
        let mut g = self.clone();
        for (l, &k) in g.layers.iter_mut().zip(budgets) {
            l.budget = k;
        }
        g
    }
}
