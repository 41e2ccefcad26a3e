//! Canonical dataset encoding as a vertex-labelled, edge-coloured graph, and
//! threshold decoding of final vertex labels.

use thiserror::Error;

use crate::datalog::{Atom, Dataset, Name, Signature};
use crate::gnn::MessageDirection;
use crate::scoring::{ScoringError, ScoringFunction};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("fact `{0}` uses a predicate outside the signature")]
    UnknownPredicate(String),
    #[error("edge ({0},{1}) refers to a missing vertex")]
    BadEdge(usize, usize),
    #[error("vertex {vertex} has a label of length {found}, expected {expected}")]
    LabelDim { vertex: usize, expected: usize, found: usize },
    #[error("constant `{0}` has no vertex")]
    UnknownConstant(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

/// Vertices carry real label vectors; each colour has a set of ordered edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoredGraph {
    pub names: Vec<Name>,
    pub labels: Vec<Vec<f64>>,
    /// Per colour, sorted and deduplicated.
    pub edges: Vec<Vec<(usize, usize)>>,
    out_adj: Vec<Vec<Vec<usize>>>,
    in_adj: Vec<Vec<Vec<usize>>>,
    delta: usize,
}

impl ColoredGraph {
    pub fn new(names: Vec<Name>, labels: Vec<Vec<f64>>, edges: Vec<Vec<(usize, usize)>>) -> Result<Self, EncodeError> {
        let delta = labels.first().map_or(0, Vec::len);
        Self::with_delta(names, labels, edges, delta)
    }

    /// Like `new`, but fixes the label dimension so empty graphs keep it.
    pub fn with_delta(
        names: Vec<Name>,
        labels: Vec<Vec<f64>>,
        mut edges: Vec<Vec<(usize, usize)>>,
        delta: usize,
    ) -> Result<Self, EncodeError> {
        let n = names.len();
        assert_eq!(labels.len(), n, "one label per vertex");
        for (v, l) in labels.iter().enumerate() {
            if l.len() != delta {
                return Err(EncodeError::LabelDim { vertex: v, expected: delta, found: l.len() });
            }
        }
        let colors = edges.len();
        let mut out_adj = vec![vec![Vec::new(); n]; colors];
        let mut in_adj = vec![vec![Vec::new(); n]; colors];
        for (c, es) in edges.iter_mut().enumerate() {
            es.sort_unstable();
            es.dedup();
            for &(u, v) in es.iter() {
                if u >= n || v >= n {
                    return Err(EncodeError::BadEdge(u, v));
                }
                out_adj[c][u].push(v);
                in_adj[c][v].push(u);
            }
        }
        for adj in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            for l in adj.iter_mut() {
                l.sort_unstable();
            }
        }
        Ok(ColoredGraph { names, labels, edges, out_adj, in_adj, delta })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn colors(&self) -> usize {
        self.edges.len()
    }

    /// Vertices whose labels feed `v` under colour `c`, in ascending id order.
    #[inline]
    pub fn neighbors(&self, c: usize, v: usize, dir: MessageDirection) -> &[usize] {
        match dir {
            MessageDirection::AgainstEdges => &self.out_adj[c][v],
            MessageDirection::AlongEdges => &self.in_adj[c][v],
        }
    }

    pub fn vertex(&self, constant: &str) -> Option<usize> {
        self.names.binary_search_by(|n| (**n).cmp(constant)).ok()
    }
}

/// enc(D): one vertex per constant (ids by sorted name), one c-edge per fact
/// R^c(a,b), label[a][p] = 1 iff U_p(a) is in D.
pub fn encode(d: &Dataset, sig: &Signature) -> Result<ColoredGraph, EncodeError> {
    encode_with_constants(d, sig, &[])
}

/// `encode` over con(D) plus `extra` constants (isolated, unlabelled unless
/// D says otherwise).
pub fn encode_with_constants(d: &Dataset, sig: &Signature, extra: &[Name]) -> Result<ColoredGraph, EncodeError> {
    let mut names = d.constants();
    names.extend(extra.iter().cloned());
    names.sort();
    names.dedup();
    let id = |c: &Name| names.binary_search(c).unwrap();
    let delta = sig.unary.len();
    let mut labels = vec![vec![0.0; delta]; names.len()];
    let mut edges = vec![Vec::new(); sig.binary.len()];
    for f in d.iter() {
        match f.terms.len() {
            1 => {
                let p = sig.unary_index(&f.pred).ok_or_else(|| EncodeError::UnknownPredicate(f.to_string()))?;
                labels[id(&f.terms[0])][p] = 1.0;
            }
            2 => {
                let c = sig.binary_index(&f.pred).ok_or_else(|| EncodeError::UnknownPredicate(f.to_string()))?;
                edges[c].push((id(&f.terms[0]), id(&f.terms[1])));
            }
            _ => return Err(EncodeError::UnknownPredicate(f.to_string())),
        }
    }
    ColoredGraph::with_delta(names, labels, edges, delta)
}

/// dec_f: keeps R^c(a,b) when f(R^c, v_a, v_b) >= t_f. Without candidates every
/// ordered pair, including a = b, is scored.
pub fn decode(
    labels: &[Vec<f64>],
    f: &ScoringFunction,
    constants: &[Name],
    relations: &[Name],
    candidates: Option<&[(usize, usize)]>,
) -> Result<Dataset, EncodeError> {
    let n = constants.len();
    let mut out = Dataset::new();
    let mut emit = |a: usize, b: usize| -> Result<(), EncodeError> {
        for (c, rel) in relations.iter().enumerate() {
            if f.score(c, &labels[a], &labels[b])? >= f.threshold {
                out.insert(Atom { pred: rel.clone(), terms: vec![constants[a].clone(), constants[b].clone()] });
            }
        }
        Ok(())
    };
    match candidates {
        Some(pairs) => {
            for &(a, b) in pairs {
                emit(a, b)?;
            }
        }
        None => {
            for a in 0..n {
                for b in 0..n {
                    emit(a, b)?;
                }
            }
        }
    }
    Ok(out)
}
