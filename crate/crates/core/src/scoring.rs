//! Scoring functions RESCAL, DistMult, TuckER and NAM, their monotonicity
//! check, and the bilinear view of the first three.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::Matrix;
use crate::rng::substream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("relation index {0} out of range")]
    UnknownRelation(usize),
    #[error("embedding has dimension {found}, expected {expected}")]
    Dim { expected: usize, found: usize },
    #[error("NAM is not a bilinear scoring function")]
    NotBilinear,
    #[error("malformed scoring parameters: {0}")]
    Shape(String),
}

/// One NAM feed-forward layer; always followed by ReLU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScoringParams {
    /// f = h^T M_R t
    Rescal { relations: Vec<Matrix> },
    /// f = sum_i h_i d_R[i] t_i
    Distmult { relations: Vec<Vec<f64>> },
    /// f = sum W[i,j,k] h_i r_R[j] t_k; `core` is indexed (i*rel_dim + j)*dim + k.
    Tucker { rel_dim: usize, core: Vec<f64>, relations: Vec<Vec<f64>> },
    /// f = t . N(h, r_R), N = three ReLU layers on concat(h, r_R).
    Nam { relations: Vec<Vec<f64>>, layers: Vec<Dense> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringFunction {
    pub dim: usize,
    pub threshold: f64,
    #[serde(flatten)]
    pub params: ScoringParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringKind {
    Rescal,
    Distmult,
    Tucker,
    Nam,
}

impl fmt::Display for ScoringKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScoringKind::Rescal => "rescal",
            ScoringKind::Distmult => "distmult",
            ScoringKind::Tucker => "tucker",
            ScoringKind::Nam => "nam",
        };
        f.write_str(s)
    }
}

/// A negative constrained parameter or a non-conforming non-linearity.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringViolation {
    pub location: String,
    pub value: f64,
}

impl fmt::Display for ScoringViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} < 0", self.location, self.value)
    }
}

/// Per-relation matrices M_R with f(R,h,t) = h^T M_R t.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearView {
    pub relations: Vec<Matrix>,
}

impl BilinearView {
    pub fn score(&self, rel: usize, h: &[f64], t: &[f64]) -> f64 {
        bilinear(&self.relations[rel], h, t)
    }
}

fn bilinear(m: &Matrix, h: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, &hi) in h.iter().enumerate() {
        let mut row = 0.0;
        for (w, tk) in m.row(i).iter().zip(t) {
            row += w * tk;
        }
        s += hi * row;
    }
    s
}

/// Activations of the NAM network, kept for backpropagation.
struct NamTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    out: Vec<f64>,
}

fn nam_forward(layers: &[Dense], h: &[f64], r: &[f64]) -> NamTrace {
    let mut x: Vec<f64> = h.iter().chain(r).copied().collect();
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    for l in layers {
        let mut z = l.bias.clone();
        l.w.mul_add(&x, &mut z);
        inputs.push(x);
        x = z.iter().map(|&v| v.max(0.0)).collect();
        pre.push(z);
    }
    NamTrace { inputs, pre, out: x }
}

impl ScoringFunction {
    pub fn kind(&self) -> ScoringKind {
        match self.params {
            ScoringParams::Rescal { .. } => ScoringKind::Rescal,
            ScoringParams::Distmult { .. } => ScoringKind::Distmult,
            ScoringParams::Tucker { .. } => ScoringKind::Tucker,
            ScoringParams::Nam { .. } => ScoringKind::Nam,
        }
    }

    pub fn num_relations(&self) -> usize {
        match &self.params {
            ScoringParams::Rescal { relations } => relations.len(),
            ScoringParams::Distmult { relations } => relations.len(),
            ScoringParams::Tucker { relations, .. } => relations.len(),
            ScoringParams::Nam { relations, .. } => relations.len(),
        }
    }

    pub fn check_shapes(&self) -> Result<(), ScoringError> {
        let d = self.dim;
        let bad = |m: String| Err(ScoringError::Shape(m));
        match &self.params {
            ScoringParams::Rescal { relations } => {
                for (r, m) in relations.iter().enumerate() {
                    if m.rows != d || m.cols != d || m.data.len() != d * d {
                        return bad(format!("RESCAL matrix {r} is not {d}x{d}"));
                    }
                }
            }
            ScoringParams::Distmult { relations } => {
                if let Some(r) = relations.iter().position(|v| v.len() != d) {
                    return bad(format!("DistMult diagonal {r} does not have length {d}"));
                }
            }
            ScoringParams::Tucker { rel_dim, core, relations } => {
                if core.len() != d * rel_dim * d {
                    return bad(format!("TuckER core has {} entries, expected {}", core.len(), d * rel_dim * d));
                }
                if let Some(r) = relations.iter().position(|v| v.len() != *rel_dim) {
                    return bad(format!("TuckER relation {r} does not have length {rel_dim}"));
                }
            }
            ScoringParams::Nam { relations, layers } => {
                if let Some(r) = relations.iter().position(|v| v.len() != d) {
                    return bad(format!("NAM relation {r} does not have length {d}"));
                }
                let want = [(d, 2 * d), (d, d), (d, d)];
                if layers.len() != 3 {
                    return bad(format!("NAM needs 3 layers, found {}", layers.len()));
                }
                for (i, (l, &(rows, cols))) in layers.iter().zip(&want).enumerate() {
                    if l.w.rows != rows || l.w.cols != cols || l.bias.len() != rows || l.w.data.len() != rows * cols {
                        return bad(format!("NAM layer {i} must be {rows}x{cols}"));
                    }
                }
            }
        }
        if self.threshold.is_nan() {
            return bad("threshold is NaN".into());
        }
        Ok(())
    }

    /// f(R, h, t) for relation index `rel`.
    pub fn score(&self, rel: usize, h: &[f64], t: &[f64]) -> Result<f64, ScoringError> {
        if rel >= self.num_relations() {
            return Err(ScoringError::UnknownRelation(rel));
        }
        for v in [h, t] {
            if v.len() != self.dim {
                return Err(ScoringError::Dim { expected: self.dim, found: v.len() });
            }
        }
        Ok(self.score_unchecked(rel, h, t))
    }

    pub fn score_unchecked(&self, rel: usize, h: &[f64], t: &[f64]) -> f64 {
        match &self.params {
            ScoringParams::Rescal { relations } => bilinear(&relations[rel], h, t),
            ScoringParams::Distmult { relations } => {
                relations[rel].iter().zip(h).zip(t).map(|((d, hi), ti)| hi * d * ti).sum()
            }
            ScoringParams::Tucker { rel_dim, core, relations } => {
                let d = self.dim;
                let r = &relations[rel];
                let mut s = 0.0;
                for (i, &hi) in h.iter().enumerate() {
                    for (j, &rj) in r.iter().enumerate() {
                        let base = (i * rel_dim + j) * d;
                        let mut inner = 0.0;
                        for (k, &tk) in t.iter().enumerate() {
                            inner += core[base + k] * tk;
                        }
                        s += hi * rj * inner;
                    }
                }
                s
            }
            ScoringParams::Nam { relations, layers } => {
                let tr = nam_forward(layers, h, &relations[rel]);
                tr.out.iter().zip(t).map(|(n, ti)| n * ti).sum()
            }
        }
    }

    /// Negative constrained parameters. NAM biases are unconstrained.
    pub fn validate_monotonic(&self) -> Vec<ScoringViolation> {
        let mut out = Vec::new();
        let mut check = |location: String, value: f64| {
            if value < 0.0 || value.is_nan() {
                out.push(ScoringViolation { location, value });
            }
        };
        match &self.params {
            ScoringParams::Rescal { relations } => {
                for (r, m) in relations.iter().enumerate() {
                    for i in 0..m.rows {
                        for k in 0..m.cols {
                            check(format!("M[{r}][{i},{k}]"), m.get(i, k));
                        }
                    }
                }
            }
            ScoringParams::Distmult { relations } => {
                for (r, v) in relations.iter().enumerate() {
                    for (i, &x) in v.iter().enumerate() {
                        check(format!("diag[{r}][{i}]"), x);
                    }
                }
            }
            ScoringParams::Tucker { core, relations, .. } => {
                for (i, &x) in core.iter().enumerate() {
                    check(format!("W[{i}]"), x);
                }
                for (r, v) in relations.iter().enumerate() {
                    for (j, &x) in v.iter().enumerate() {
                        check(format!("r[{r}][{j}]"), x);
                    }
                }
            }
            ScoringParams::Nam { relations, layers } => {
                for (r, v) in relations.iter().enumerate() {
                    for (j, &x) in v.iter().enumerate() {
                        check(format!("r[{r}][{j}]"), x);
                    }
                }
                for (l, dense) in layers.iter().enumerate() {
                    for i in 0..dense.w.rows {
                        for k in 0..dense.w.cols {
                            check(format!("layer[{l}].W[{i},{k}]"), dense.w.get(i, k));
                        }
                    }
                }
            }
        }
        out
    }

    /// M_R per relation. TuckER contracts M_R[i,k] = sum_j W[i,j,k] r_R[j].
    pub fn to_bilinear(&self) -> Result<BilinearView, ScoringError> {
        let d = self.dim;
        let relations = match &self.params {
            ScoringParams::Rescal { relations } => relations.clone(),
            ScoringParams::Distmult { relations } => relations
                .iter()
                .map(|diag| {
                    let mut m = Matrix::zeros(d, d);
                    for (i, &x) in diag.iter().enumerate() {
                        m.set(i, i, x);
                    }
                    m
                })
                .collect(),
            ScoringParams::Tucker { rel_dim, core, relations } => relations
                .iter()
                .map(|r| {
                    let mut m = Matrix::zeros(d, d);
                    for i in 0..d {
                        for k in 0..d {
                            let mut s = 0.0;
                            for (j, &rj) in r.iter().enumerate() {
                                s += core[(i * rel_dim + j) * d + k] * rj;
                            }
                            m.set(i, k, s);
                        }
                    }
                    m
                })
                .collect(),
            ScoringParams::Nam { .. } => return Err(ScoringError::NotBilinear),
        };
        Ok(BilinearView { relations })
    }

    /// Random check of f(R,h,t) <= f(R,h',t') for 0 <= h <= h', 0 <= t <= t'.
    /// Returns the first violating (relation, h, t, h', t').
    pub fn monotone_check(&self, trials: usize, seed: u64) -> Result<(), MonotoneWitness> {
        let mut rng = substream(seed, "scoring_monotone_check");
        let n = self.num_relations();
        if n == 0 {
            return Ok(());
        }
        for _ in 0..trials {
            let rel = rng.gen_range(0..n);
            let h: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(0.0..2.0)).collect();
            let t: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(0.0..2.0)).collect();
            let bump = |v: &[f64], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                v.iter().map(|&x| if rng.gen_bool(0.5) { x + rng.gen_range(0.0..2.0) } else { x }).collect()
            };
            let h2 = bump(&h, &mut rng);
            let t2 = bump(&t, &mut rng);
            let lo = self.score_unchecked(rel, &h, &t);
            let hi = self.score_unchecked(rel, &h2, &t2);
            if lo > hi {
                return Err(MonotoneWitness { relation: rel, h, t, h_up: h2, t_up: t2, low: lo, high: hi });
            }
        }
        Ok(())
    }

    /// Applies `f` to every trainable parameter with a flag telling whether
    /// the monotonic restriction constrains it to be non-negative.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64, bool)) {
        match &mut self.params {
            ScoringParams::Rescal { relations } => {
                relations.iter_mut().flat_map(|m| m.data.iter_mut()).for_each(|x| f(x, true))
            }
            ScoringParams::Distmult { relations } => relations.iter_mut().flatten().for_each(|x| f(x, true)),
            ScoringParams::Tucker { core, relations, .. } => {
                core.iter_mut().for_each(|x| f(x, true));
                relations.iter_mut().flatten().for_each(|x| f(x, true));
            }
            ScoringParams::Nam { relations, layers } => {
                relations.iter_mut().flatten().for_each(|x| f(x, true));
                for l in layers.iter_mut() {
                    l.w.data.iter_mut().for_each(|x| f(x, true));
                    l.bias.iter_mut().for_each(|x| f(x, false));
                }
            }
        }
    }

    /// Accumulates g * d f(rel,h,t) into `grad` (same shape as self), `dh`, `dt`.
    pub fn backward(
        &self,
        rel: usize,
        h: &[f64],
        t: &[f64],
        g: f64,
        grad: &mut ScoringFunction,
        dh: &mut [f64],
        dt: &mut [f64],
    ) {
        let d = self.dim;
        match (&self.params, &mut grad.params) {
            (ScoringParams::Rescal { relations }, ScoringParams::Rescal { relations: gr }) => {
                let m = &relations[rel];
                let gm = &mut gr[rel];
                for i in 0..d {
                    for k in 0..d {
                        let w = m.get(i, k);
                        gm.data[i * d + k] += g * h[i] * t[k];
                        dh[i] += g * w * t[k];
                        dt[k] += g * w * h[i];
                    }
                }
            }
            (ScoringParams::Distmult { relations }, ScoringParams::Distmult { relations: gr }) => {
                let diag = &relations[rel];
                for i in 0..d {
                    gr[rel][i] += g * h[i] * t[i];
                    dh[i] += g * diag[i] * t[i];
                    dt[i] += g * diag[i] * h[i];
                }
            }
            (
                ScoringParams::Tucker { rel_dim, core, relations },
                ScoringParams::Tucker { core: gcore, relations: gr, .. },
            ) => {
                let r = &relations[rel];
                for i in 0..d {
                    for (j, &rj) in r.iter().enumerate() {
                        let base = (i * *rel_dim + j) * d;
                        for k in 0..d {
                            let w = core[base + k];
                            gcore[base + k] += g * h[i] * rj * t[k];
                            gr[rel][j] += g * w * h[i] * t[k];
                            dh[i] += g * w * rj * t[k];
                            dt[k] += g * w * h[i] * rj;
                        }
                    }
                }
            }
            (ScoringParams::Nam { relations, layers }, ScoringParams::Nam { relations: gr, layers: gl }) => {
                let tr = nam_forward(layers, h, &relations[rel]);
                for k in 0..d {
                    dt[k] += g * tr.out[k];
                }
                // d score / d out = g * t
                let mut upstream: Vec<f64> = t.iter().map(|&x| g * x).collect();
                for l in (0..layers.len()).rev() {
                    let dz: Vec<f64> =
                        upstream.iter().zip(&tr.pre[l]).map(|(&u, &z)| if z > 0.0 { u } else { 0.0 }).collect();
                    let input = &tr.inputs[l];
                    let w = &layers[l].w;
                    for (i, &dzi) in dz.iter().enumerate() {
                        gl[l].bias[i] += dzi;
                        if dzi == 0.0 {
                            continue;
                        }
                        for (k, &xk) in input.iter().enumerate() {
                            gl[l].w.data[i * w.cols + k] += dzi * xk;
                        }
                    }
                    let mut down = vec![0.0; w.cols];
                    w.mul_t_add(&dz, &mut down);
                    upstream = down;
                }
                for i in 0..d {
                    dh[i] += upstream[i];
                    gr[rel][i] += upstream[d + i];
                }
            }
            _ => panic!("gradient buffer has a different scoring kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneWitness {
    pub relation: usize,
    pub h: Vec<f64>,
    pub t: Vec<f64>,
    pub h_up: Vec<f64>,
    pub t_up: Vec<f64>,
    pub low: f64,
    pub high: f64,
}
