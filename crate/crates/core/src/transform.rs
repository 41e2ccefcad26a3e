//! The model pair (GNN, scoring function) and the dataset transformation it
//! induces: encode, run the GNN, decode by threshold.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datalog::{Atom, Dataset, Name, Signature};
use crate::encoder::{decode, encode, ColoredGraph, EncodeError};
use crate::gnn::{GnnError, MaxSumGnn};
use crate::rng::sha256_hex;
use crate::scoring::{ScoringError, ScoringFunction};

/// Above this many constants `apply_model` requires explicit candidates.
pub const ALL_PAIRS_LIMIT: usize = 512;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("scoring dimension {scoring} differs from GNN output dimension {gnn}")]
    OutputDim { gnn: usize, scoring: usize },
    #[error("signature has {sig} unary predicates but the GNN expects {gnn} input features")]
    InputDim { gnn: usize, sig: usize },
    #[error("signature has {sig} binary predicates but the model has {gnn} colours and {scoring} scored relations")]
    Colors { gnn: usize, scoring: usize, sig: usize },
    #[error("universal unary index {0} is outside the signature")]
    UniversalUnary(usize),
    #[error("{0} constants exceed the all-pairs limit; pass candidate pairs")]
    TooManyConstants(usize),
    #[error("model is not monotonic: {0}")]
    NotMonotonic(String),
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub signature: Signature,
    pub gnn: MaxSumGnn,
    pub scoring: ScoringFunction,
    /// Unary predicate asserted for every constant before encoding (the
    /// dummy predicate of signatures without unary predicates).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub universal_unary: Option<usize>,
}

impl Model {
    pub fn new(signature: Signature, gnn: MaxSumGnn, scoring: ScoringFunction) -> Result<Self, ModelError> {
        let m = Model { signature, gnn, scoring, universal_unary: None };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        self.gnn.check_shapes()?;
        self.scoring.check_shapes()?;
        if self.scoring.dim != self.gnn.output_dim() {
            return Err(ModelError::OutputDim { gnn: self.gnn.output_dim(), scoring: self.scoring.dim });
        }
        if self.signature.delta() != self.gnn.input_dim() {
            return Err(ModelError::InputDim { gnn: self.gnn.input_dim(), sig: self.signature.delta() });
        }
        let sig = self.signature.colors();
        if self.gnn.colors() != sig || self.scoring.num_relations() != sig {
            return Err(ModelError::Colors { gnn: self.gnn.colors(), scoring: self.scoring.num_relations(), sig });
        }
        if let Some(u) = self.universal_unary {
            if u >= self.signature.delta() {
                return Err(ModelError::UniversalUnary(u));
            }
        }
        Ok(())
    }

    /// All monotonicity violations of both components, rendered.
    pub fn monotonicity_report(&self) -> Vec<String> {
        let mut out: Vec<String> = self.gnn.validate_monotonic().iter().map(|v| format!("gnn {v}")).collect();
        out.extend(self.scoring.validate_monotonic().iter().map(|v| format!("scoring {v}")));
        out
    }

    pub fn require_monotonic(&self) -> Result<(), ModelError> {
        let report = self.monotonicity_report();
        if report.is_empty() {
            Ok(())
        } else {
            Err(ModelError::NotMonotonic(report.join("; ")))
        }
    }

    /// Adds the universal unary fact for every constant, if configured.
    pub fn prepare(&self, d: &Dataset) -> Dataset {
        let Some(u) = self.universal_unary else {
            return d.clone();
        };
        let pred = self.signature.unary[u].clone();
        let mut out = d.clone();
        for c in d.constants() {
            out.insert(Atom { pred: pred.clone(), terms: vec![c] });
        }
        out
    }

    /// Final-layer labels for `g`, applying the universal unary to every vertex.
    pub fn embed_graph(&self, g: &ColoredGraph) -> Result<Vec<Vec<f64>>, ModelError> {
        let mut trace = match self.universal_unary {
            Some(u) => {
                let mut g = g.clone();
                for l in g.labels.iter_mut() {
                    l[u] = 1.0;
                }
                self.gnn.forward(&g)?
            }
            None => self.gnn.forward(g)?,
        };
        Ok(trace.layers.pop().unwrap())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// sha256 of the JSON rendering.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let err = |msg: String| ModelError::File { path: path.display().to_string(), msg };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let m = Model::from_json(&text).map_err(|e| err(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json() + "\n")
            .map_err(|e| ModelError::File { path: path.display().to_string(), msg: e.to_string() })
    }
}

/// T_{N,f}(D). Candidates are pairs of constant names; without them every
/// ordered pair of con(D) is scored (at most `ALL_PAIRS_LIMIT` constants).
pub fn apply_model(m: &Model, d: &Dataset, candidates: Option<&[(Name, Name)]>) -> Result<Dataset, ModelError> {
    let d = m.prepare(d);
    let g = encode(&d, &m.signature)?;
    if candidates.is_none() && g.len() > ALL_PAIRS_LIMIT {
        return Err(ModelError::TooManyConstants(g.len()));
    }
    let labels = m.gnn.forward(&g)?.layers.pop().unwrap();
    let ids = match candidates {
        None => None,
        Some(pairs) => {
            let mut ids = Vec::with_capacity(pairs.len());
            for (a, b) in pairs {
                let va = g.vertex(a).ok_or_else(|| EncodeError::UnknownConstant(a.to_string()))?;
                let vb = g.vertex(b).ok_or_else(|| EncodeError::UnknownConstant(b.to_string()))?;
                ids.push((va, vb));
            }
            Some(ids)
        }
    };
    Ok(decode(&labels, &m.scoring, &g.names, &m.signature.binary, ids.as_deref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{Activation, AggBudget, Layer, Matrix, MessageDirection};
    use crate::scoring::ScoringParams;

    fn zero_model(threshold: f64) -> Model {
        let sig = Signature::new(&["U"], &["R"]).unwrap();
        let layer = Layer {
            a: Matrix::zeros(1, 1),
            b: vec![Matrix::zeros(1, 1)],
            bias: vec![0.0],
            activation: Activation::Relu,
            budget: AggBudget::MAX,
        };
        let gnn = MaxSumGnn::new(vec![layer], MessageDirection::AgainstEdges).unwrap();
        let scoring =
            ScoringFunction { dim: 1, threshold, params: ScoringParams::Distmult { relations: vec![vec![0.0]] } };
        Model::new(sig, gnn, scoring).unwrap()
    }

    #[test]
    fn empty_and_zero_models() {
        let m = zero_model(0.5);
        assert!(apply_model(&m, &Dataset::new(), None).unwrap().is_empty());
        let d = Dataset::from_facts([Atom::binary("R", "a", "b")]);
        assert!(apply_model(&m, &d, None).unwrap().is_empty());
        // score 0 >= t_f = 0 holds for every ordered pair
        assert_eq!(apply_model(&zero_model(0.0), &d, None).unwrap().len(), 4);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = zero_model(0.1 + 0.2);
        m.gnn.layers[0].bias[0] = 1.0 / 3.0;
        m.gnn.layers[0].budget = AggBudget::Infinite;
        let back = Model::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.hash(), m.hash());
        assert!(m.to_json().contains("\"inf\""));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut m = zero_model(0.0);
        m.scoring.dim = 2;
        assert!(matches!(m.check(), Err(ModelError::OutputDim { .. }) | Err(ModelError::Scoring(_))));
    }

    #[test]
    fn candidates_by_name() {
        let m = zero_model(0.0);
        let d = Dataset::from_facts([Atom::binary("R", "a", "b")]);
        let pairs = [(crate::datalog::name("b"), crate::datalog::name("a"))];
        let out = apply_model(&m, &d, Some(&pairs)).unwrap();
        assert_eq!(out, Dataset::from_facts([Atom::binary("R", "b", "a")]));
        let bad = [(crate::datalog::name("z"), crate::datalog::name("a"))];
        assert!(apply_model(&m, &d, Some(&bad)).is_err());
    }
}
