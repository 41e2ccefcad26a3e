//! Exact soundness check of a rule against a monotonic model, rules derived
//! through captured patterns, and pattern conformance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::datalog::{name, Atom, Dataset, Literal, Name, Rule, Signature, Substitution};
use crate::encoder::ColoredGraph;
use crate::gnn::MessageDirection;
use crate::scoring::{ScoringFunction, ScoringParams};
use crate::transform::{Model, ModelError};

#[derive(Debug, Error)]
pub enum SoundnessError {
    #[error("rule head `{0}` is not a binary atom of the signature")]
    Head(String),
    #[error("predicate `{0}` is not in the signature")]
    UnknownPredicate(String),
    #[error("inequality `{0} != {0}` can never hold")]
    IdenticalInequality(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Capture(String),
}

/// One canonical dataset D_μ with the head fact Hμ that must be derived.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckInstance {
    pub substitution: Substitution,
    pub dataset: Dataset,
    pub head: Atom,
}

impl fmt::Display for CheckInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub: Vec<String> = self.substitution.iter().map(|(k, v)| format!("{k}->{v}")).collect();
        let facts: Vec<String> = self.dataset.iter().map(Atom::to_string).collect();
        write!(f, "{{{}}} D={{{}}} head={}", sub.join(","), facts.join(","), self.head)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Sound,
    Unsound { witness: CheckInstance, score: f64 },
}

impl Verdict {
    pub fn is_sound(&self) -> bool {
        matches!(self, Verdict::Sound)
    }
}

#[derive(Debug, Clone, Copy)]
enum Pred {
    Unary(usize),
    Binary(usize),
}

/// A rule with predicates and variables resolved to indices.
#[derive(Debug, Clone)]
struct Compiled {
    vars: Vec<Name>,
    atoms: Vec<(Pred, Vec<usize>)>,
    neqs: Vec<(usize, usize)>,
    head: (usize, usize, usize),
    unbound: Vec<usize>,
}

impl Compiled {
    fn new(r: &Rule, sig: &Signature) -> Result<Self, SoundnessError> {
        let vars = r.variables();
        let idx = |v: &Name| vars.iter().position(|w| w == v).unwrap();
        let mut atoms = Vec::new();
        for a in r.body_atoms() {
            let pred = match a.terms.len() {
                1 => sig.unary_index(&a.pred).map(Pred::Unary),
                2 => sig.binary_index(&a.pred).map(Pred::Binary),
                _ => None,
            }
            .ok_or_else(|| SoundnessError::UnknownPredicate(a.pred.to_string()))?;
            atoms.push((pred, a.terms.iter().map(idx).collect::<Vec<usize>>()));
        }
        let mut neqs = Vec::new();
        for (x, y) in r.inequalities() {
            if x == y {
                return Err(SoundnessError::IdenticalInequality(x.to_string()));
            }
            neqs.push((idx(x), idx(y)));
        }
        let h = &r.head;
        let hp = match (h.terms.len(), sig.binary_index(&h.pred)) {
            (2, Some(c)) => c,
            _ => return Err(SoundnessError::Head(h.to_string())),
        };
        let bound: BTreeSet<usize> = atoms.iter().flat_map(|(_, t)| t.iter().copied()).collect();
        let unbound = (0..vars.len()).filter(|v| !bound.contains(v)).collect();
        Ok(Compiled { head: (hp, idx(&h.terms[0]), idx(&h.terms[1])), vars, atoms, neqs, unbound })
    }

    /// Restricted-growth strings over the variables that respect every
    /// inequality, in lexicographic order.
    fn partitions(&self) -> Vec<Vec<usize>> {
        let n = self.vars.len();
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(n);
        self.grow(&mut cur, 0, &mut out);
        out
    }

    fn grow(&self, cur: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<usize>>) {
        let i = cur.len();
        if i == self.vars.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks {
            let ok = self.neqs.iter().all(|&(x, y)| {
                let other = if x == i {
                    y
                } else if y == i {
                    x
                } else {
                    return true;
                };
                other >= i || cur[other] != b
            });
            if ok {
                cur.push(b);
                self.grow(cur, blocks.max(b + 1), out);
                cur.pop();
            }
        }
    }

    fn finest(&self) -> Vec<usize> {
        (0..self.vars.len()).collect()
    }

    /// Name of each block: `a_` followed by its first variable.
    fn block_names(&self, part: &[usize]) -> Vec<Name> {
        let k = part.iter().max().map_or(0, |m| m + 1);
        (0..k)
            .map(|b| {
                let first = part.iter().position(|&p| p == b).unwrap();
                name(&format!("a_{}", self.vars[first]))
            })
            .collect()
    }

    fn instance(&self, part: &[usize], sig: &Signature, dir: MessageDirection) -> CheckInstance {
        let blocks = self.block_names(part);
        let c = |v: usize| blocks[part[v]].clone();
        let substitution: Substitution = self.vars.iter().enumerate().map(|(i, v)| (v.clone(), c(i))).collect();
        let mut dataset = Dataset::new();
        for (p, terms) in &self.atoms {
            let pred = match *p {
                Pred::Unary(u) => sig.unary[u].clone(),
                Pred::Binary(b) => sig.binary[b].clone(),
            };
            dataset.insert(Atom { pred, terms: terms.iter().map(|&v| c(v)).collect() });
        }
        for &v in &self.unbound {
            let aux = name(&format!("b_{}", self.vars[v]));
            let terms = match dir {
                MessageDirection::AgainstEdges => vec![aux, c(v)],
                MessageDirection::AlongEdges => vec![c(v), aux],
            };
            dataset.insert(Atom { pred: sig.binary[0].clone(), terms });
        }
        let (hp, hx, hy) = self.head;
        CheckInstance { substitution, dataset, head: Atom { pred: sig.binary[hp].clone(), terms: vec![c(hx), c(hy)] } }
    }

    /// Builds the encoding of D_μ directly. Vertex ids are blocks first,
    /// then one auxiliary vertex per unbound variable; names are unused.
    fn graph(&self, part: &[usize], m: &Model) -> ColoredGraph {
        let k = part.iter().max().map_or(0, |m| m + 1);
        let n = k + self.unbound.len();
        let delta = m.signature.delta();
        let mut labels = vec![vec![0.0; delta]; n];
        let mut edges = vec![Vec::new(); m.signature.colors()];
        for (p, t) in &self.atoms {
            match *p {
                Pred::Unary(u) => labels[part[t[0]]][u] = 1.0,
                Pred::Binary(b) => edges[b].push((part[t[0]], part[t[1]])),
            }
        }
        for (i, &v) in self.unbound.iter().enumerate() {
            let aux = k + i;
            edges[0].push(match m.gnn.direction {
                MessageDirection::AgainstEdges => (aux, part[v]),
                MessageDirection::AlongEdges => (part[v], aux),
            });
        }
        if let Some(u) = m.universal_unary {
            for l in labels.iter_mut() {
                l[u] = 1.0;
            }
        }
        let names = vec![name(""); n];
        ColoredGraph::with_delta(names, labels, edges, delta).expect("well-formed instance graph")
    }
}

/// Every substitution of the rule's variables into {a_x} that satisfies the
/// inequalities, before partition deduplication (n^n for n variables without
/// inequalities). Exponential; meant for small rules.
pub fn raw_substitutions(r: &Rule) -> Vec<Substitution> {
    let vars = r.variables();
    let n = vars.len();
    let consts: Vec<Name> = vars.iter().map(|v| name(&format!("a_{v}"))).collect();
    let neqs: Vec<(usize, usize)> = r
        .inequalities()
        .map(|(x, y)| (vars.iter().position(|v| v == x).unwrap(), vars.iter().position(|v| v == y).unwrap()))
        .collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; n];
    loop {
        if neqs.iter().all(|&(x, y)| choice[x] != choice[y]) {
            out.push(vars.iter().cloned().zip(choice.iter().map(|&c| consts[c].clone())).collect());
        }
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < n {
                break;
            }
            choice[i] = 0;
        }
    }
}

/// One instance per variable partition that respects the inequalities, in
/// restricted-growth order.
pub fn enumerate_check_instances(
    r: &Rule,
    sig: &Signature,
    direction: MessageDirection,
) -> Result<Vec<CheckInstance>, SoundnessError> {
    let c = Compiled::new(r, sig)?;
    Ok(c.partitions().iter().map(|p| c.instance(p, sig, direction)).collect())
}

/// Decides soundness of rules for one validated model.
pub struct Checker<'m> {
    model: &'m Model,
    max_fast_path: bool,
}

impl<'m> Checker<'m> {
    pub fn new(model: &'m Model) -> Result<Self, SoundnessError> {
        model.check()?;
        model.require_monotonic()?;
        Ok(Checker { model, max_fast_path: model.gnn.is_max() })
    }

    /// Always enumerates every partition, even for max GNNs.
    pub fn exhaustive(mut self) -> Self {
        self.max_fast_path = false;
        self
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    /// For max GNNs only the finest partition is checked: every other D_μ is
    /// a homomorphic image of it, and max aggregation never decreases along
    /// a homomorphism.
    pub fn check(&self, r: &Rule) -> Result<Verdict, SoundnessError> {
        let m = self.model;
        let c = Compiled::new(r, &m.signature)?;
        let parts = if self.max_fast_path { vec![c.finest()] } else { c.partitions() };
        let (hp, hx, hy) = c.head;
        for part in &parts {
            let g = c.graph(part, m);
            let labels = m.gnn.forward(&g).map_err(ModelError::from)?.layers.pop().unwrap();
            let score = m.scoring.score_unchecked(hp, &labels[part[hx]], &labels[part[hy]]);
            if score < m.scoring.threshold {
                return Ok(Verdict::Unsound { witness: c.instance(part, &m.signature, m.gnn.direction), score });
            }
        }
        Ok(Verdict::Sound)
    }
}

pub fn check_soundness(m: &Model, r: &Rule) -> Result<Verdict, SoundnessError> {
    Checker::new(m)?.check(r)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let p = self.parent[x];
        if p == x {
            return x;
        }
        let r = self.find(p);
        self.parent[x] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Given sound rules A_i -> B_i and a captured rule B_1, ..., B_n -> H,
/// returns A_1, ..., A_n -> H with the B_i unified against the captured body.
/// Whether the scoring function captures the pattern is the caller's premise.
pub fn derive_from_capture(sound_rules: &[Rule], captured: &Rule) -> Result<Rule, SoundnessError> {
    let err = |m: String| Err(SoundnessError::Capture(m));
    if captured.has_inequalities() {
        return err("captured rule must be inequality-free".into());
    }
    let body: Vec<&Atom> = captured.body_atoms().collect();
    if body.is_empty() {
        return err("captured rule has an empty body; patterns must be safe".into());
    }
    if body.len() != sound_rules.len() {
        return err(format!("{} sound rules for {} captured body atoms", sound_rules.len(), body.len()));
    }
    // Variable slots: captured variables first, then each sound rule renamed apart.
    let mut slots: Vec<(Name, bool)> = captured.variables().into_iter().map(|v| (v, true)).collect();
    let captured_slot = |v: &Name, slots: &[(Name, bool)]| slots.iter().position(|(w, c)| *c && w == v).unwrap();
    let mut offsets = Vec::new();
    for (i, s) in sound_rules.iter().enumerate() {
        if s.has_inequalities() {
            return err(format!("sound rule {} has inequalities", i + 1));
        }
        if s.head.pred != body[i].pred || s.head.terms.len() != body[i].terms.len() {
            return err(format!("head `{}` does not match captured body atom `{}`", s.head, body[i]));
        }
        offsets.push((slots.len(), s.variables()));
        for v in s.variables() {
            slots.push((v, false));
        }
    }
    let mut uf = UnionFind { parent: (0..slots.len()).collect() };
    for (i, s) in sound_rules.iter().enumerate() {
        let (off, vars) = &offsets[i];
        for (t, b) in s.head.terms.iter().zip(&body[i].terms) {
            let a = off + vars.iter().position(|v| v == t).unwrap();
            uf.union(a, captured_slot(b, &slots));
        }
    }
    // Name each class: a captured variable if it has one, else the first
    // original name not already taken.
    let mut class_name: BTreeMap<usize, Name> = BTreeMap::new();
    let mut used: BTreeSet<Name> = BTreeSet::new();
    for i in 0..slots.len() {
        if slots[i].1 {
            if let std::collections::btree_map::Entry::Vacant(e) = class_name.entry(uf.find(i)) {
                e.insert(slots[i].0.clone());
                used.insert(slots[i].0.clone());
            }
        }
    }
    for i in 0..slots.len() {
        let r = uf.find(i);
        if class_name.contains_key(&r) {
            continue;
        }
        let base = slots[i].0.clone();
        let mut cand = base.clone();
        let mut k = 1;
        while used.contains(&cand) {
            cand = name(&format!("{base}{k}"));
            k += 1;
        }
        used.insert(cand.clone());
        class_name.insert(r, cand);
    }
    let mut rename = |slot: usize| class_name[&uf.find(slot)].clone();
    let mut new_body: Vec<Literal> = Vec::new();
    for (i, s) in sound_rules.iter().enumerate() {
        let (off, vars) = &offsets[i];
        for a in s.body_atoms() {
            let atom = Atom {
                pred: a.pred.clone(),
                terms: a.terms.iter().map(|t| rename(off + vars.iter().position(|v| v == t).unwrap())).collect(),
            };
            let lit = Literal::Atom(atom);
            if !new_body.contains(&lit) {
                new_body.push(lit);
            }
        }
    }
    let head = Atom {
        pred: captured.head.pred.clone(),
        terms: captured.head.terms.iter().map(|t| rename(captured_slot(t, &slots))).collect(),
    };
    Ok(Rule::new(new_body, head))
}

/// Rule patterns over meta predicates `M1`, `M2`, ...
pub mod patterns {
    use crate::datalog::{parse_rule_unchecked, Rule};

    fn p(s: &str) -> Rule {
        parse_rule_unchecked(s).expect("pattern parses")
    }

    pub fn hierarchy() -> Rule {
        p("M1(x,y) -> M2(x,y)")
    }

    pub fn symmetry() -> Rule {
        p("M1(x,y) -> M1(y,x)")
    }

    pub fn inversion() -> Rule {
        p("M1(x,y) -> M2(y,x)")
    }

    pub fn composition() -> Rule {
        p("M1(x,z), M2(z,y) -> M3(x,y)")
    }

    pub fn intersection() -> Rule {
        p("M1(x,y), M2(x,y) -> M3(x,y)")
    }
}

/// True iff `r` is obtained from `pattern` by renaming variables and replacing
/// distinct meta predicates by distinct predicates. Body order is ignored.
pub fn conforms_to_pattern(r: &Rule, pattern: &Rule) -> bool {
    if r.body.len() != pattern.body.len() {
        return false;
    }
    let mut order: Vec<usize> = (0..r.body.len()).collect();
    let mut state = Alignment::default();
    if !state.literal(&Literal::Atom(pattern.head.clone()), &Literal::Atom(r.head.clone())) {
        return false;
    }
    permute_align(&pattern.body, &r.body, &mut order, 0, &state)
}

#[derive(Clone, Default)]
struct Alignment {
    preds: BTreeMap<Name, Name>,
    preds_back: BTreeMap<Name, Name>,
    vars: BTreeMap<Name, Name>,
    vars_back: BTreeMap<Name, Name>,
}

impl Alignment {
    fn bind(fwd: &mut BTreeMap<Name, Name>, back: &mut BTreeMap<Name, Name>, a: &Name, b: &Name) -> bool {
        match (fwd.get(a), back.get(b)) {
            (Some(x), Some(y)) => x == b && y == a,
            (None, None) => {
                fwd.insert(a.clone(), b.clone());
                back.insert(b.clone(), a.clone());
                true
            }
            _ => false,
        }
    }

    fn literal(&mut self, p: &Literal, r: &Literal) -> bool {
        match (p, r) {
            (Literal::Atom(pa), Literal::Atom(ra)) => {
                pa.terms.len() == ra.terms.len()
                    && Self::bind(&mut self.preds, &mut self.preds_back, &pa.pred, &ra.pred)
                    && pa
                        .terms
                        .iter()
                        .zip(&ra.terms)
                        .all(|(a, b)| Self::bind(&mut self.vars, &mut self.vars_back, a, b))
            }
            (Literal::Neq(a1, b1), Literal::Neq(a2, b2)) => {
                Self::bind(&mut self.vars, &mut self.vars_back, a1, a2)
                    && Self::bind(&mut self.vars, &mut self.vars_back, b1, b2)
            }
            _ => false,
        }
    }
}

fn permute_align(pattern: &[Literal], body: &[Literal], order: &mut Vec<usize>, i: usize, state: &Alignment) -> bool {
    if i == order.len() {
        return true;
    }
    for j in i..order.len() {
        order.swap(i, j);
        let mut s = state.clone();
        if s.literal(&pattern[i], &body[order[i]]) && permute_align(pattern, body, order, i + 1, &s) {
            return true;
        }
        order.swap(i, j);
    }
    false
}

/// Whether f(R,h,t) = f(R,t,h) holds for every relation and all embeddings:
/// always for DistMult, and for bilinear functions with symmetric M_R.
pub fn captures_symmetry(f: &ScoringFunction) -> bool {
    if matches!(f.params, ScoringParams::Distmult { .. }) {
        return true;
    }
    match f.to_bilinear() {
        Ok(b) => b.relations.iter().all(|m| (0..m.rows).all(|i| (0..m.cols).all(|k| m.get(i, k) == m.get(k, i)))),
        Err(_) => false,
    }
}
