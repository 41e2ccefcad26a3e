//! Triple files, dummy unary predicate, rule injection, predicate-corruption
//! negatives and per-epoch holdout splits.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::datalog::{apply_program, name, Atom, Dataset, Name, Program, Signature};
use crate::rng::{derive_seed, substream};

pub const DUMMY_UNARY: &str = "Dummy";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    MalformedRow { path: String, line: usize, found: usize },
    #[error("{path}:{line}: relation `{relation}` is not in the signature")]
    UnknownRelation { path: String, line: usize, relation: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses head/relation/tail TSV text. With `sig = None` every relation is
/// accepted.
pub fn parse_triples(text: &str, origin: &str, sig: Option<&Signature>) -> Result<Dataset, DataError> {
    let mut d = Dataset::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 || fields.iter().any(|f| f.is_empty()) {
            return Err(DataError::MalformedRow {
                path: origin.to_string(),
                line: i + 1,
                found: fields.iter().filter(|f| !f.is_empty()).count(),
            });
        }
        if let Some(sig) = sig {
            if sig.binary_index(fields[1]).is_none() {
                return Err(DataError::UnknownRelation {
                    path: origin.to_string(),
                    line: i + 1,
                    relation: fields[1].to_string(),
                });
            }
        }
        d.insert(Atom::binary(fields[1], fields[0], fields[2]));
    }
    Ok(d)
}

pub fn load_triples(path: &Path, sig: Option<&Signature>) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })?;
    parse_triples(&text, &path.display().to_string(), sig)
}

/// Renders binary facts as TSV rows; unary facts are skipped.
pub fn triples_to_string(d: &Dataset) -> String {
    let mut out = String::new();
    for f in d.binary_facts() {
        out.push_str(&format!("{}\t{}\t{}\n", f.terms[0], f.pred, f.terms[1]));
    }
    out
}

/// Signature of every predicate mentioned in `sets`, sorted by name.
pub fn infer_signature<'a, I: IntoIterator<Item = &'a Dataset>>(sets: I) -> Signature {
    let mut binary: Vec<Name> = Vec::new();
    let mut unary: Vec<Name> = Vec::new();
    for d in sets {
        for f in d.iter() {
            let list = if f.terms.len() == 2 { &mut binary } else { &mut unary };
            if !list.contains(&f.pred) {
                list.push(f.pred.clone());
            }
        }
    }
    binary.sort();
    unary.sort();
    Signature { unary, binary }
}

/// Adds the `Dummy` unary predicate when the signature has no unary
/// predicate, and asserts it for every constant.
pub fn add_dummy_unary(d: &Dataset, sig: &Signature) -> (Dataset, Signature) {
    let mut sig = sig.clone();
    if sig.unary.is_empty() {
        sig.unary.push(name(DUMMY_UNARY));
    }
    let mut out = d.clone();
    if sig.unary.iter().any(|u| &**u == DUMMY_UNARY) {
        for c in d.constants() {
            out.insert(Atom { pred: name(DUMMY_UNARY), terms: vec![c] });
        }
    }
    (out, sig)
}

/// Least fixpoint of D ∪ T_P(D).
pub fn inject_rules(d: &Dataset, p: &Program) -> Dataset {
    let mut cur = d.clone();
    loop {
        let derived = apply_program(p, &cur);
        let before = cur.len();
        cur.facts.extend(derived.facts);
        if cur.len() == before {
            return cur;
        }
    }
}

#[derive(Debug, Clone)]
pub struct NegativeSamplerConfig {
    pub negatives_per_positive: usize,
    pub filter_against: Dataset,
}

impl Default for NegativeSamplerConfig {
    fn default() -> Self {
        NegativeSamplerConfig { negatives_per_positive: 10, filter_against: Dataset::new() }
    }
}

/// Predicate corruption: for each positive R(a,b), draws R'(a,b) with R' != R
/// uniformly, `negatives_per_positive` times with replacement, then removes
/// duplicates, positives and filtered facts.
pub fn sample_negatives(positives: &[Atom], sig: &Signature, cfg: &NegativeSamplerConfig, seed: u64) -> Vec<Atom> {
    let mut rng = substream(seed, "negatives");
    let pos: BTreeSet<&Atom> = positives.iter().collect();
    let mut seen: BTreeSet<Atom> = BTreeSet::new();
    let mut out = Vec::new();
    for p in positives {
        let pool: Vec<&Name> = sig.binary.iter().filter(|r| **r != p.pred).collect();
        if pool.is_empty() {
            continue;
        }
        for _ in 0..cfg.negatives_per_positive {
            let r = pool[rng.gen_range(0..pool.len())];
            let cand = Atom { pred: r.clone(), terms: p.terms.clone() };
            if pos.contains(&cand) || cfg.filter_against.contains(&cand) || seen.contains(&cand) {
                continue;
            }
            seen.insert(cand.clone());
            out.push(cand);
        }
    }
    out
}

/// Moves round(fraction * #binary facts) binary facts to the target set.
/// Unary facts always stay in the input.
pub fn epoch_split(train: &Dataset, holdout_fraction: f64, seed: u64) -> (Dataset, Vec<Atom>) {
    assert!(holdout_fraction > 0.0 && holdout_fraction < 1.0);
    let mut binary: Vec<&Atom> = train.binary_facts().collect();
    let k = (holdout_fraction * binary.len() as f64).round() as usize;
    let mut rng = substream(seed, "epoch_split");
    binary.shuffle(&mut rng);
    let mut targets: Vec<Atom> = binary[..k].iter().map(|&a| a.clone()).collect();
    targets.sort();
    let mut input = train.clone();
    for t in &targets {
        input.facts.remove(t);
    }
    (input, targets)
}

/// Train/valid/test split of a benchmark directory.
#[derive(Debug, Clone)]
pub struct Split {
    pub signature: Signature,
    pub train: Dataset,
    pub valid_positives: Vec<Atom>,
    pub valid_negatives: Vec<Atom>,
    pub test_positives: Vec<Atom>,
    pub test_negatives: Vec<Atom>,
}

impl Split {
    /// Fills missing negatives by predicate corruption filtered against every
    /// known positive.
    pub fn fill_negatives(&mut self, negatives_per_positive: usize, seed: u64) {
        let mut known = self.train.clone();
        known.facts.extend(self.valid_positives.iter().cloned());
        known.facts.extend(self.test_positives.iter().cloned());
        let cfg = NegativeSamplerConfig { negatives_per_positive, filter_against: known };
        if self.valid_negatives.is_empty() {
            self.valid_negatives =
                sample_negatives(&self.valid_positives, &self.signature, &cfg, derive_seed(seed, "valid_negatives"));
        }
        if self.test_negatives.is_empty() {
            self.test_negatives =
                sample_negatives(&self.test_positives, &self.signature, &cfg, derive_seed(seed, "test_negatives"));
        }
    }
}

fn split_file(dir: &Path, file: &str) -> PathBuf {
    dir.join(file)
}

/// Loads `train.txt`, `valid.txt`, `test.txt` and the optional
/// `valid_negatives.txt` / `test_negatives.txt`. The signature is inferred
/// from all files; missing negatives stay empty.
pub fn load_split(dir: &Path) -> Result<Split, DataError> {
    let train = load_triples(&split_file(dir, "train.txt"), None)?;
    let valid = load_triples(&split_file(dir, "valid.txt"), None)?;
    let test = load_triples(&split_file(dir, "test.txt"), None)?;
    let optional = |f: &str| -> Result<Dataset, DataError> {
        let p = split_file(dir, f);
        if p.exists() {
            load_triples(&p, None)
        } else {
            Ok(Dataset::new())
        }
    };
    let valid_neg = optional("valid_negatives.txt")?;
    let test_neg = optional("test_negatives.txt")?;
    let signature = infer_signature([&train, &valid, &test, &valid_neg, &test_neg]);
    Ok(Split {
        signature,
        train,
        valid_positives: valid.facts.into_iter().collect(),
        valid_negatives: valid_neg.facts.into_iter().collect(),
        test_positives: test.facts.into_iter().collect(),
        test_negatives: test_neg.facts.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_program;

    #[test]
    fn parses_rows() {
        let d = parse_triples("a\tR\tb\nb\tS\tc\n", "t", None).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.contains(&Atom::binary("R", "a", "b")));
        assert!(parse_triples("", "t", None).unwrap().is_empty());
        let err = parse_triples("a\tR\n", "t", None).unwrap_err();
        assert!(matches!(err, DataError::MalformedRow { line: 1, .. }));
    }

    #[test]
    fn dummy_is_idempotent() {
        let sig = Signature::new::<&str>(&[], &["R"]).unwrap();
        let d = Dataset::from_facts([Atom::binary("R", "a", "b")]);
        let (d1, s1) = add_dummy_unary(&d, &sig);
        assert_eq!(d1.len(), 3);
        assert_eq!(s1.unary.len(), 1);
        let (d2, s2) = add_dummy_unary(&d1, &s1);
        assert_eq!((d1, s1), (d2, s2));
        let (e, se) = add_dummy_unary(&Dataset::new(), &sig);
        assert!(e.is_empty());
        assert_eq!(&*se.unary[0], DUMMY_UNARY);
    }

    #[test]
    fn injection_reaches_fixpoint() {
        let sig = Signature::new::<&str>(&[], &["R", "S", "T"]).unwrap();
        let p = parse_program("R(x,y) -> S(x,y)\nS(x,y) -> T(x,y)\n", &sig).unwrap();
        let d = Dataset::from_facts([Atom::binary("R", "a", "b")]);
        let out = inject_rules(&d, &p);
        assert_eq!(out.len(), 3);
        assert!(out.contains(&Atom::binary("T", "a", "b")));
        assert_eq!(inject_rules(&out, &p), out);
    }

    #[test]
    fn negatives_exhausted_by_filter() {
        let sig = Signature::new::<&str>(&[], &["R", "S"]).unwrap();
        let cfg = NegativeSamplerConfig {
            negatives_per_positive: 10,
            filter_against: Dataset::from_facts([Atom::binary("S", "a", "b")]),
        };
        assert!(sample_negatives(&[Atom::binary("R", "a", "b")], &sig, &cfg, 3).is_empty());
    }

    #[test]
    fn epoch_split_sizes() {
        let d: Dataset =
            (0..100).map(|i| Atom::binary("R", &format!("c{i}"), "z")).chain([Atom::unary("U", "z")]).collect();
        let (input, targets) = epoch_split(&d, 0.1, 5);
        assert_eq!(targets.len(), 10);
        assert_eq!(input.len(), 91);
        assert!(input.contains(&Atom::unary("U", "z")));
        assert_eq!(epoch_split(&d, 0.1, 5).1, targets);
    }
}
