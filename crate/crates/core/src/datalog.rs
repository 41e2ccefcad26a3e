//! Datalog with body inequalities: signatures, facts, rules, single-step
//! evaluation, theta-subsumption and the rule text grammar.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interned predicate, variable or constant name.
pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DatalogError {
    #[error("duplicate predicate name `{0}`")]
    DuplicatePredicate(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{pred}` has arity {expected}, got {found} terms")]
    ArityMismatch { pred: String, expected: usize, found: usize },
    #[error("inequality `{0} != {0}` mentions the same term twice")]
    IdenticalInequality(String),
    #[error("constant `{0}` is not allowed in a rule")]
    ConstantInRule(String),
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<DatalogError>,
    },
}

/// Ordered unary and binary predicate lists. Index `p` of `unary` is U_p,
/// index `c` of `binary` is the edge colour c.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub unary: Vec<Name>,
    pub binary: Vec<Name>,
}

impl Signature {
    pub fn new<S: AsRef<str>>(unary: &[S], binary: &[S]) -> Result<Self, DatalogError> {
        let sig = Signature {
            unary: unary.iter().map(|s| name(s.as_ref())).collect(),
            binary: binary.iter().map(|s| name(s.as_ref())).collect(),
        };
        sig.check_unique()?;
        Ok(sig)
    }

    pub fn check_unique(&self) -> Result<(), DatalogError> {
        let mut seen = BTreeSet::new();
        for n in self.unary.iter().chain(&self.binary) {
            if !seen.insert(n.clone()) {
                return Err(DatalogError::DuplicatePredicate(n.to_string()));
            }
        }
        Ok(())
    }

    pub fn unary_index(&self, pred: &str) -> Option<usize> {
        self.unary.iter().position(|p| &**p == pred)
    }

    pub fn binary_index(&self, pred: &str) -> Option<usize> {
        self.binary.iter().position(|p| &**p == pred)
    }

    pub fn arity(&self, pred: &str) -> Option<usize> {
        if self.unary_index(pred).is_some() {
            Some(1)
        } else if self.binary_index(pred).is_some() {
            Some(2)
        } else {
            None
        }
    }

    pub fn delta(&self) -> usize {
        self.unary.len()
    }

    pub fn colors(&self) -> usize {
        self.binary.len()
    }
}

/// A predicate applied to terms. In a rule the terms are variables; in a
/// dataset they are constants.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: Name,
    pub terms: Vec<Name>,
}

impl Atom {
    pub fn new(pred: &str, terms: &[&str]) -> Self {
        Atom { pred: name(pred), terms: terms.iter().map(|t| name(t)).collect() }
    }

    pub fn unary(pred: &str, a: &str) -> Self {
        Atom::new(pred, &[a])
    }

    pub fn binary(pred: &str, a: &str, b: &str) -> Self {
        Atom::new(pred, &[a, b])
    }

    fn check(&self, sig: &Signature) -> Result<(), DatalogError> {
        let expected = sig.arity(&self.pred).ok_or_else(|| DatalogError::UnknownPredicate(self.pred.to_string()))?;
        if expected != self.terms.len() {
            return Err(DatalogError::ArityMismatch { pred: self.pred.to_string(), expected, found: self.terms.len() });
        }
        Ok(())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Atom(Atom),
    Neq(Name, Name),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom(a) => write!(f, "{a}"),
            Literal::Neq(x, y) => write!(f, "{x} != {y}"),
        }
    }
}

/// A constant-free rule `body -> head`. Unsafe rules are allowed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rule {
    pub body: Vec<Literal>,
    pub head: Atom,
}

impl Rule {
    pub fn new(body: Vec<Literal>, head: Atom) -> Self {
        Rule { body, head }
    }

    pub fn body_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.body.iter().filter_map(|l| match l {
            Literal::Atom(a) => Some(a),
            Literal::Neq(..) => None,
        })
    }

    pub fn inequalities(&self) -> impl Iterator<Item = (&Name, &Name)> {
        self.body.iter().filter_map(|l| match l {
            Literal::Neq(x, y) => Some((x, y)),
            Literal::Atom(_) => None,
        })
    }

    pub fn has_inequalities(&self) -> bool {
        self.inequalities().next().is_some()
    }

    /// Variables in order of first appearance: body atoms, inequalities, head.
    pub fn variables(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        let mut push = |v: &Name| {
            if !out.contains(v) {
                out.push(v.clone());
            }
        };
        for a in self.body_atoms() {
            a.terms.iter().for_each(&mut push);
        }
        for (x, y) in self.inequalities() {
            push(x);
            push(y);
        }
        self.head.terms.iter().for_each(&mut push);
        out
    }

    /// Variables that occur in no body atom (head-only or inequality-only).
    pub fn unbound_variables(&self) -> Vec<Name> {
        let bound: BTreeSet<&Name> = self.body_atoms().flat_map(|a| a.terms.iter()).collect();
        self.variables().into_iter().filter(|v| !bound.contains(v)).collect()
    }

    pub fn validate(&self, sig: &Signature) -> Result<(), DatalogError> {
        for l in &self.body {
            match l {
                Literal::Atom(a) => a.check(sig)?,
                Literal::Neq(x, y) if x == y => return Err(DatalogError::IdenticalInequality(x.to_string())),
                Literal::Neq(..) => {}
            }
        }
        self.head.check(sig)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.body.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}")?;
        }
        if self.body.is_empty() {
            write!(f, "-> {}", self.head)
        } else {
            write!(f, " -> {}", self.head)
        }
    }
}

/// A finite set of rules, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Program {
    pub rules: Vec<Rule>,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Self {
        Program { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// A finite set of ground facts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Dataset {
    pub facts: BTreeSet<Atom>,
}

impl Dataset {
    pub fn new() -> Self {
        Dataset::default()
    }

    pub fn from_facts<I: IntoIterator<Item = Atom>>(facts: I) -> Self {
        Dataset { facts: facts.into_iter().collect() }
    }

    pub fn insert(&mut self, fact: Atom) -> bool {
        self.facts.insert(fact)
    }

    pub fn contains(&self, fact: &Atom) -> bool {
        self.facts.contains(fact)
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter()
    }

    /// con(D), sorted by name.
    pub fn constants(&self) -> Vec<Name> {
        let set: BTreeSet<&Name> = self.facts.iter().flat_map(|f| f.terms.iter()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn binary_facts(&self) -> impl Iterator<Item = &Atom> {
        self.facts.iter().filter(|f| f.terms.len() == 2)
    }

    pub fn union(&self, other: &Dataset) -> Dataset {
        Dataset { facts: self.facts.union(&other.facts).cloned().collect() }
    }

    pub fn is_subset(&self, other: &Dataset) -> bool {
        self.facts.is_subset(&other.facts)
    }

    /// Applies a constant renaming; constants missing from `map` are kept.
    pub fn rename(&self, map: &BTreeMap<Name, Name>) -> Dataset {
        Dataset::from_facts(self.facts.iter().map(|f| Atom {
            pred: f.pred.clone(),
            terms: f.terms.iter().map(|t| map.get(t).cloned().unwrap_or_else(|| t.clone())).collect(),
        }))
    }
}

impl FromIterator<Atom> for Dataset {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        Dataset::from_facts(iter)
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in &self.facts {
            writeln!(f, "{fact}")?;
        }
        Ok(())
    }
}

/// Variable to constant map.
pub type Substitution = BTreeMap<Name, Name>;

pub fn substitute(atom: &Atom, s: &Substitution) -> Atom {
    Atom {
        pred: atom.pred.clone(),
        terms: atom.terms.iter().map(|t| s.get(t).cloned().unwrap_or_else(|| t.clone())).collect(),
    }
}

struct Index<'a> {
    by_pred: HashMap<&'a str, Vec<&'a Atom>>,
}

impl<'a> Index<'a> {
    fn new(d: &'a Dataset) -> Self {
        let mut by_pred: HashMap<&str, Vec<&Atom>> = HashMap::new();
        for f in &d.facts {
            by_pred.entry(&f.pred).or_default().push(f);
        }
        Index { by_pred }
    }

    fn facts(&self, pred: &str) -> &[&'a Atom] {
        self.by_pred.get(pred).map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// T_r(D): one application of `r` to `d`. Variables not bound by a body atom
/// range over con(D).
pub fn apply_rule(r: &Rule, d: &Dataset) -> Dataset {
    let mut out = Dataset::new();
    apply_rule_into(r, &Index::new(d), &d.constants(), &mut out);
    out
}

/// T_P(D): union of T_r(D) over the rules of `p`.
pub fn apply_program(p: &Program, d: &Dataset) -> Dataset {
    let index = Index::new(d);
    let constants = d.constants();
    let mut out = Dataset::new();
    for r in &p.rules {
        apply_rule_into(r, &index, &constants, &mut out);
    }
    out
}

fn apply_rule_into(r: &Rule, index: &Index<'_>, constants: &[Name], out: &mut Dataset) {
    let vars = r.variables();
    let var_id = |v: &Name| vars.iter().position(|w| w == v).unwrap();
    let atoms: Vec<(&str, Vec<usize>)> =
        r.body_atoms().map(|a| (&*a.pred, a.terms.iter().map(var_id).collect())).collect();
    let neqs: Vec<(usize, usize)> = r.inequalities().map(|(x, y)| (var_id(x), var_id(y))).collect();
    let head: Vec<usize> = r.head.terms.iter().map(var_id).collect();

    // Greedy join order: prefer atoms sharing variables with earlier ones,
    // then smaller relations.
    let mut order: Vec<usize> = Vec::new();
    let mut bound = vec![false; vars.len()];
    let mut remaining: Vec<usize> = (0..atoms.len()).collect();
    while !remaining.is_empty() {
        let (pos, _) = remaining
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                let shared = atoms[i].1.iter().filter(|&&v| bound[v]).count();
                (pos, (std::cmp::Reverse(shared), index.facts(atoms[i].0).len()))
            })
            .min_by_key(|(_, key)| *key)
            .unwrap();
        let i = remaining.remove(pos);
        for &v in &atoms[i].1 {
            bound[v] = true;
        }
        order.push(i);
    }
    let free: Vec<usize> = (0..vars.len()).filter(|&v| !bound[v]).collect();

    let ctx = Join {
        atoms: &atoms,
        order: &order,
        neqs: &neqs,
        free: &free,
        head: &head,
        head_pred: &r.head.pred,
        index,
        constants,
    };
    let mut binding: Vec<Option<Name>> = vec![None; vars.len()];
    ctx.atoms_step(0, &mut binding, out);
}

struct Join<'a, 'b> {
    atoms: &'a [(&'a str, Vec<usize>)],
    order: &'a [usize],
    neqs: &'a [(usize, usize)],
    free: &'a [usize],
    head: &'a [usize],
    head_pred: &'a Name,
    index: &'a Index<'b>,
    constants: &'a [Name],
}

impl Join<'_, '_> {
    fn neqs_ok(&self, binding: &[Option<Name>]) -> bool {
        self.neqs.iter().all(|&(x, y)| match (&binding[x], &binding[y]) {
            (Some(a), Some(b)) => a != b,
            _ => true,
        })
    }

    fn atoms_step(&self, k: usize, binding: &mut Vec<Option<Name>>, out: &mut Dataset) {
        if k == self.order.len() {
            self.free_step(0, binding, out);
            return;
        }
        let (pred, vars) = &self.atoms[self.order[k]];
        for fact in self.index.facts(pred) {
            if fact.terms.len() != vars.len() {
                continue;
            }
            let mut newly = Vec::new();
            let mut ok = true;
            for (&v, c) in vars.iter().zip(&fact.terms) {
                match &binding[v] {
                    Some(b) if b != c => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        binding[v] = Some(c.clone());
                        newly.push(v);
                    }
                }
            }
            if ok && self.neqs_ok(binding) {
                self.atoms_step(k + 1, binding, out);
            }
            for v in newly {
                binding[v] = None;
            }
        }
    }

    fn free_step(&self, k: usize, binding: &mut Vec<Option<Name>>, out: &mut Dataset) {
        if k == self.free.len() {
            out.insert(Atom {
                pred: self.head_pred.clone(),
                terms: self.head.iter().map(|&v| binding[v].clone().unwrap()).collect(),
            });
            return;
        }
        let v = self.free[k];
        for c in self.constants {
            binding[v] = Some(c.clone());
            if self.neqs_ok(binding) {
                self.free_step(k + 1, binding, out);
            }
        }
        binding[v] = None;
    }
}

/// Theta-subsumption: some variable map sends `general`'s head onto
/// `specific`'s head and every body literal of `general` into the body of
/// `specific`. Inequalities match in either orientation.
pub fn subsumes(general: &Rule, specific: &Rule) -> bool {
    if general.head.pred != specific.head.pred || general.head.terms.len() != specific.head.terms.len() {
        return false;
    }
    let mut theta: BTreeMap<Name, Name> = BTreeMap::new();
    for (g, s) in general.head.terms.iter().zip(&specific.head.terms) {
        match theta.get(g) {
            Some(t) if t != s => return false,
            Some(_) => {}
            None => {
                theta.insert(g.clone(), s.clone());
            }
        }
    }
    // Most constrained literals first: atoms before inequalities.
    let mut lits: Vec<&Literal> = general.body.iter().collect();
    lits.sort_by_key(|l| matches!(l, Literal::Neq(..)));
    match_literals(&lits, &specific.body, &mut theta)
}

fn match_literals(lits: &[&Literal], target: &[Literal], theta: &mut BTreeMap<Name, Name>) -> bool {
    let Some((first, rest)) = lits.split_first() else {
        return true;
    };
    for cand in target {
        let pairs: Vec<Vec<(&Name, &Name)>> = match (first, cand) {
            (Literal::Atom(a), Literal::Atom(b)) if a.pred == b.pred && a.terms.len() == b.terms.len() => {
                vec![a.terms.iter().zip(&b.terms).collect()]
            }
            (Literal::Neq(x, y), Literal::Neq(u, v)) => vec![vec![(x, u), (y, v)], vec![(x, v), (y, u)]],
            _ => continue,
        };
        for pairing in pairs {
            let mut added = Vec::new();
            let mut ok = true;
            for (g, s) in pairing {
                match theta.get(g) {
                    Some(t) if t != s => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        theta.insert(g.clone(), s.clone());
                        added.push(g.clone());
                    }
                }
            }
            if ok && match_literals(rest, target, theta) {
                return true;
            }
            for g in added {
                theta.remove(&g);
            }
        }
    }
    false
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Arrow,
    Neq,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, DatalogError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((col, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((col, Tok::RParen));
                i += 1;
            }
            ',' => {
                out.push((col, Tok::Comma));
                i += 1;
            }
            '-' if chars.get(i + 1) == Some(&'>') => {
                out.push((col, Tok::Arrow));
                i += 2;
            }
            '!' if chars.get(i + 1) == Some(&'=') => {
                out.push((col, Tok::Neq));
                i += 2;
            }
            c if c.is_alphanumeric() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push((col, Tok::Ident(chars[start..i].iter().collect())));
            }
            other => return Err(DatalogError::Syntax { col, msg: format!("unexpected character `{other}`") }),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|(c, _)| *c).unwrap_or(self.end_col)
    }

    fn err<T>(&self, msg: &str) -> Result<T, DatalogError> {
        Err(DatalogError::Syntax { col: self.col(), msg: msg.to_string() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), DatalogError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&format!("expected {what}"))
        }
    }

    fn ident(&mut self) -> Result<String, DatalogError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn term(&mut self) -> Result<Name, DatalogError> {
        let s = self.ident()?;
        if s.starts_with(|c: char| c.is_lowercase()) {
            Ok(name(&s))
        } else {
            Err(DatalogError::ConstantInRule(s))
        }
    }

    fn atom_after_pred(&mut self, pred: String) -> Result<Atom, DatalogError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut terms = vec![self.term()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            terms.push(self.term()?);
        }
        self.expect(Tok::RParen, "`)`")?;
        Ok(Atom { pred: name(&pred), terms })
    }

    fn literal(&mut self) -> Result<Literal, DatalogError> {
        let first = self.ident()?;
        if self.peek() == Some(&Tok::LParen) {
            return Ok(Literal::Atom(self.atom_after_pred(first)?));
        }
        if !first.starts_with(|c: char| c.is_lowercase()) {
            return Err(DatalogError::ConstantInRule(first));
        }
        self.expect(Tok::Neq, "`(` or `!=`")?;
        let second = self.term()?;
        Ok(Literal::Neq(name(&first), second))
    }

    fn rule(&mut self) -> Result<Rule, DatalogError> {
        let mut body = Vec::new();
        if self.peek() != Some(&Tok::Arrow) {
            body.push(self.literal()?);
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                body.push(self.literal()?);
            }
        }
        self.expect(Tok::Arrow, "`->`")?;
        let pred = self.ident()?;
        let head = self.atom_after_pred(pred)?;
        if self.pos != self.toks.len() {
            return self.err("trailing input after head atom");
        }
        Ok(Rule { body, head })
    }
}

/// Parses `[literal ("," literal)*] "->" atom` and checks it against `sig`.
pub fn parse_rule(text: &str, sig: &Signature) -> Result<Rule, DatalogError> {
    let rule = parse_rule_unchecked(text)?;
    rule.validate(sig)?;
    Ok(rule)
}

/// Parses a rule without a signature (predicates and arities unchecked).
pub fn parse_rule_unchecked(text: &str) -> Result<Rule, DatalogError> {
    let mut p = Parser { toks: tokenize(text)?, pos: 0, end_col: text.chars().count() + 1 };
    let rule = p.rule()?;
    for (x, y) in rule.inequalities() {
        if x == y {
            return Err(DatalogError::IdenticalInequality(x.to_string()));
        }
    }
    Ok(rule)
}

/// Parses a program file: one rule per line, `#` starts a comment.
pub fn parse_program(text: &str, sig: &Signature) -> Result<Program, DatalogError> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let rule = parse_rule(line, sig).map_err(|e| DatalogError::AtLine { line: i + 1, source: Box::new(e) })?;
        rules.push(rule);
    }
    Ok(Program { rules })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Signature {
        Signature::new(&["U1"], &["P1", "P2", "R", "S"]).unwrap()
    }

    #[test]
    fn parses_worked_rule() {
        let r = parse_rule("P1(x,y), U1(x) -> P2(x,y)", &sig()).unwrap();
        assert_eq!(r.body.len(), 2);
        assert_eq!(r.head, Atom::binary("P2", "x", "y"));
        assert_eq!(r.to_string(), "P1(x,y), U1(x) -> P2(x,y)");
    }

    #[test]
    fn parses_empty_body() {
        let r = parse_rule("-> R(x,y)", &sig()).unwrap();
        assert!(r.body.is_empty());
        assert_eq!(r.to_string(), "-> R(x,y)");
    }

    #[test]
    fn rejects_bad_rules() {
        let s = sig();
        assert!(matches!(parse_rule("R(x,y), x != x -> S(x,y)", &s), Err(DatalogError::IdenticalInequality(_))));
        assert!(matches!(parse_rule("Q(x,y) -> S(x,y)", &s), Err(DatalogError::UnknownPredicate(_))));
        assert!(matches!(parse_rule("R(x) -> S(x,y)", &s), Err(DatalogError::ArityMismatch { .. })));
        assert!(matches!(parse_rule("R(x,Bob) -> S(x,y)", &s), Err(DatalogError::ConstantInRule(_))));
        assert!(matches!(parse_rule("R(x,y) S(x,y)", &s), Err(DatalogError::Syntax { .. })));
    }

    #[test]
    fn apply_rule_examples() {
        let s = sig();
        let r = parse_rule("P1(x,y), U1(x) -> P2(x,y)", &s).unwrap();
        let d = Dataset::from_facts([Atom::unary("U1", "a"), Atom::binary("P1", "a", "b")]);
        assert_eq!(apply_rule(&r, &d), Dataset::from_facts([Atom::binary("P2", "a", "b")]));
        assert!(apply_rule(&r, &Dataset::new()).is_empty());

        let r = parse_rule("R(x,y), x != y -> S(x,y)", &s).unwrap();
        let d = Dataset::from_facts([Atom::binary("R", "a", "a"), Atom::binary("R", "a", "b")]);
        assert_eq!(apply_rule(&r, &d), Dataset::from_facts([Atom::binary("S", "a", "b")]));
    }

    #[test]
    fn unsafe_head_ranges_over_constants() {
        let r = parse_rule("U1(x) -> R(x,y)", &sig()).unwrap();
        let d = Dataset::from_facts([Atom::unary("U1", "a"), Atom::binary("S", "b", "c")]);
        let out = apply_rule(&r, &d);
        assert_eq!(out.len(), 3);
        assert!(out.contains(&Atom::binary("R", "a", "a")));
        assert!(out.contains(&Atom::binary("R", "a", "c")));
    }

    #[test]
    fn subsumption_examples() {
        let s = Signature::new(&["U"], &["R1", "R2", "R3", "P1", "P2"]).unwrap();
        let g = parse_rule("R1(x,z1), R2(z2,y) -> R3(x,y)", &s).unwrap();
        let sp = parse_rule("R1(x,z), R2(z,y) -> R3(x,y)", &s).unwrap();
        assert!(subsumes(&g, &sp));
        assert!(!subsumes(&sp, &g));
        assert!(subsumes(&g, &g));
        let a = parse_rule("P1(x,y) -> P2(x,y)", &s).unwrap();
        let b = parse_rule("P1(y,x) -> P2(x,y)", &s).unwrap();
        assert!(!subsumes(&a, &b));
        let n1 = parse_rule("R1(x,y), x != y -> R3(x,y)", &s).unwrap();
        let n2 = parse_rule("R1(x,y), y != x -> R3(x,y)", &s).unwrap();
        assert!(subsumes(&n1, &n2));
    }

    #[test]
    fn program_file_comments() {
        let text = "# header\nR(x,y) -> S(x,y)  # trailing\n\n-> R(x,y)\n";
        let p = parse_program(text, &sig()).unwrap();
        assert_eq!(p.len(), 2);
        let bad = parse_program("R(x,y) -> S(x,y)\nR(x -> S(x,y)\n", &sig());
        assert!(matches!(bad, Err(DatalogError::AtLine { line: 2, .. })));
    }
}
