//! Rule spaces (flat bodies of one or two atoms, bounded tree-like rules),
//! sound-rule mining with subsumption pruning, and equivalent programs.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::capacity::{compute_capacities, CapacityError, CapacityResult};
use crate::datalog::{name, subsumes, Atom, Literal, Name, Program, Rule, Signature};
use crate::gnn::MessageDirection;
use crate::soundness::{Checker, SoundnessError};
use crate::transform::{Model, ModelError};

/// Default limit on the number of rules in a space.
pub const DEFAULT_SPACE_CAP: u64 = 10_000_000;

const CHUNK: usize = 256;

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("rule space has {size} rules, above the cap of {cap}")]
    SpaceTooLarge { size: u64, cap: u64 },
    #[error(
        "max-sum aggregation needs a bilinear scoring function for a finite equivalent program; {0} is not bilinear"
    )]
    NotBilinear(String),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Soundness(#[from] SoundnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Flat rules

/// Which flat bodies are enumerated.
///
/// `Published`: head R(x,y); body atoms are binary, over x, y and up to two
/// fresh variables named by first appearance; no atom repeats a variable;
/// every fresh variable is linked to x or y through body atoms; the single
/// body R'(x,y) is left out; bodies are ordered, so A,B and B,A are distinct.
/// This gives 5n² one-atom and 68n³ two-atom rules for n binary predicates.
///
/// `Full`: unary and binary atoms over the same variables, self-loops and
/// R'(x,y) allowed, fresh variables linked to x or y, no repeated atom,
/// deduplicated up to renaming of fresh variables and reordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatConvention {
    Published,
    Full,
}

/// A body shape: variable patterns per atom. Variables 0 = x, 1 = y, 2.. fresh.
type Shape = Vec<Vec<usize>>;

const FLAT_VARS: [&str; 4] = ["x", "y", "z", "w"];

fn reaches_head(shape: &Shape) -> bool {
    let vars: BTreeSet<usize> = shape.iter().flatten().copied().collect();
    let mut seen: BTreeSet<usize> = [0, 1].into_iter().collect();
    loop {
        let before = seen.len();
        for a in shape {
            if a.iter().any(|v| seen.contains(v)) {
                seen.extend(a.iter().copied());
            }
        }
        if seen.len() == before {
            break;
        }
    }
    vars.is_subset(&seen)
}

/// Renames fresh variables by first appearance.
fn first_appearance(shape: &Shape) -> Shape {
    let mut map: BTreeMap<usize, usize> = BTreeMap::new();
    shape
        .iter()
        .map(|a| {
            a.iter()
                .map(|&v| {
                    if v < 2 {
                        v
                    } else {
                        let next = 2 + map.len();
                        *map.entry(v).or_insert(next)
                    }
                })
                .collect()
        })
        .collect()
}

/// Binary-atom shapes of the published convention, sorted.
pub fn published_shapes(body_atoms: usize) -> Vec<Vec<(usize, usize)>> {
    let pats: Vec<Vec<usize>> = (0..4).flat_map(|a| (0..4).map(move |b| vec![a, b])).collect();
    let mut out: BTreeSet<Shape> = BTreeSet::new();
    let mut idx = vec![0usize; body_atoms];
    loop {
        let shape: Shape = idx.iter().map(|&i| pats[i].clone()).collect();
        let ok =
            shape.iter().all(|a| a[0] != a[1]) && reaches_head(&shape) && !(body_atoms == 1 && shape[0] == vec![0, 1]);
        if ok {
            out.insert(first_appearance(&shape));
        }
        let mut i = body_atoms;
        loop {
            if i == 0 {
                return out.into_iter().map(|s| s.iter().map(|a| (a[0], a[1])).collect()).collect();
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < pats.len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Lazy stream of flat rules under the published convention: shapes in
/// sorted order, then body predicates, then the head predicate.
pub struct PublishedRules<'s> {
    sig: &'s Signature,
    shapes: Vec<Vec<(usize, usize)>>,
    shape: usize,
    /// Body predicate indices followed by the head predicate index.
    preds: Vec<usize>,
    done: bool,
}

impl<'s> PublishedRules<'s> {
    pub fn new(sig: &'s Signature, body_atoms: usize) -> Self {
        let n = sig.binary.len();
        PublishedRules {
            sig,
            shapes: published_shapes(body_atoms),
            shape: 0,
            preds: vec![0; body_atoms + 1],
            done: n == 0,
        }
    }

    /// Number of rules in the stream without enumerating it.
    pub fn len(&self) -> u64 {
        let n = self.sig.binary.len() as u64;
        self.shapes.len() as u64 * n.pow(self.preds.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Iterator for PublishedRules<'_> {
    type Item = Rule;

    fn next(&mut self) -> Option<Rule> {
        if self.done || self.shape >= self.shapes.len() {
            return None;
        }
        let shape = &self.shapes[self.shape];
        let k = shape.len();
        let var = |v: usize| name(FLAT_VARS[v]);
        let body = shape
            .iter()
            .zip(&self.preds)
            .map(|(&(a, b), &p)| Literal::Atom(Atom { pred: self.sig.binary[p].clone(), terms: vec![var(a), var(b)] }))
            .collect();
        let head = Atom { pred: self.sig.binary[self.preds[k]].clone(), terms: vec![var(0), var(1)] };
        let n = self.sig.binary.len();
        let mut i = self.preds.len();
        loop {
            if i == 0 {
                self.shape += 1;
                break;
            }
            i -= 1;
            self.preds[i] += 1;
            if self.preds[i] < n {
                break;
            }
            self.preds[i] = 0;
        }
        Some(Rule::new(body, head))
    }
}

/// Least renaming of non-head variables (over `fresh` names) with the body
/// sorted and duplicate literals removed.
pub fn canonical_form(r: &Rule, fresh: &[&str]) -> Rule {
    let head_vars: BTreeSet<&Name> = r.head.terms.iter().collect();
    let others: Vec<Name> = r.variables().into_iter().filter(|v| !head_vars.contains(v)).collect();
    assert!(others.len() <= fresh.len(), "not enough fresh names");
    let mut perm: Vec<usize> = (0..others.len()).collect();
    let mut best: Option<Rule> = None;
    loop {
        let map: BTreeMap<&Name, Name> = others.iter().zip(&perm).map(|(v, &i)| (v, name(fresh[i]))).collect();
        let ren = |t: &Name| map.get(t).cloned().unwrap_or_else(|| t.clone());
        let mut body: Vec<Literal> = r
            .body
            .iter()
            .map(|l| match l {
                Literal::Atom(a) => {
                    Literal::Atom(Atom { pred: a.pred.clone(), terms: a.terms.iter().map(ren).collect() })
                }
                Literal::Neq(x, y) => {
                    let (x, y) = (ren(x), ren(y));
                    if x <= y {
                        Literal::Neq(x, y)
                    } else {
                        Literal::Neq(y, x)
                    }
                }
            })
            .collect();
        body.sort();
        body.dedup();
        let cand = Rule::new(body, Atom { pred: r.head.pred.clone(), terms: r.head.terms.iter().map(ren).collect() });
        if best.as_ref().is_none_or(|b| cand < *b) {
            best = Some(cand);
        }
        if !next_permutation(&mut perm) {
            return best.unwrap();
        }
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// The `Full` flat space, materialised. `skip_unary` removes one unary
/// predicate (e.g. the universal one) from body atoms.
pub fn full_flat_rules(sig: &Signature, max_body_atoms: usize, skip_unary: Option<usize>) -> Vec<Rule> {
    let unary: Vec<usize> = (0..sig.unary.len()).filter(|&u| Some(u) != skip_unary).collect();
    let mut seen: HashSet<Rule> = HashSet::new();
    let mut out = Vec::new();
    for k in 0..=max_body_atoms {
        // Atom templates: (None, [v]) unary slot or (Some(()), [a,b]) binary slot.
        let mut templates: Vec<(bool, Vec<usize>)> = Vec::new();
        for v in 0..(2 + k) {
            templates.push((false, vec![v]));
        }
        for a in 0..(2 + k) {
            for b in 0..(2 + k) {
                templates.push((true, vec![a, b]));
            }
        }
        let mut idx = vec![0usize; k];
        'shapes: loop {
            let shape: Vec<&(bool, Vec<usize>)> = idx.iter().map(|&i| &templates[i]).collect();
            let pats: Shape = shape.iter().map(|(_, v)| v.clone()).collect();
            if pats == first_appearance(&pats) && reaches_head(&pats) {
                let slots: Vec<usize> =
                    shape.iter().map(|(bin, _)| if *bin { sig.binary.len() } else { unary.len() }).collect();
                if slots.iter().all(|&s| s > 0) {
                    let mut preds = vec![0usize; k + 1];
                    loop {
                        let body: Vec<Literal> = shape
                            .iter()
                            .zip(&preds)
                            .map(|((bin, vars), &p)| {
                                let pred = if *bin { sig.binary[p].clone() } else { sig.unary[unary[p]].clone() };
                                Literal::Atom(Atom { pred, terms: vars.iter().map(|&v| name(FLAT_VARS[v])).collect() })
                            })
                            .collect();
                        let distinct: BTreeSet<&Literal> = body.iter().collect();
                        if distinct.len() == body.len() {
                            let head = Atom::binary(&sig.binary[preds[k]], "x", "y");
                            let c = canonical_form(&Rule::new(body, head), &FLAT_VARS[2..]);
                            if seen.insert(c.clone()) {
                                out.push(c);
                            }
                        }
                        let mut i = k + 1;
                        let done = loop {
                            if i == 0 {
                                break true;
                            }
                            i -= 1;
                            preds[i] += 1;
                            let lim = if i == k { sig.binary.len() } else { slots[i] };
                            if preds[i] < lim {
                                break false;
                            }
                            preds[i] = 0;
                        };
                        if done {
                            break;
                        }
                    }
                }
            }
            let mut i = k;
            loop {
                if i == 0 {
                    break 'shapes;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < templates.len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }
    out
}

/// Flat rules with bodies of exactly `body_atoms` atoms (Published) or up to
/// `body_atoms` atoms (Full).
pub fn enumerate_flat_rules(sig: &Signature, body_atoms: usize, conv: FlatConvention) -> Vec<Rule> {
    match conv {
        FlatConvention::Published => PublishedRules::new(sig, body_atoms).collect(),
        FlatConvention::Full => full_flat_rules(sig, body_atoms, None),
    }
}

// ---------------------------------------------------------------------------
// Tree-like rules

/// Depth and fan-out bounds: a variable at depth i has at most o·(p - i)
/// children and depth at most p.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeBudget {
    pub p: usize,
    pub o: usize,
    pub allow_inequalities: bool,
}

/// A tree-like formula for a root variable: unary atoms on the root and a
/// collection of blocks. Canonical when blocks and children are sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tree {
    pub unary: Vec<usize>,
    pub blocks: Vec<Block>,
}

/// ⋀ R(x, y_i) ∧ φ_i with pairwise y_i ≉ y_j, for one colour R.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    pub color: usize,
    pub children: Vec<Tree>,
}

impl Tree {
    pub fn atoms(&self) -> usize {
        self.unary.len()
            + self.blocks.iter().map(|b| b.children.iter().map(|c| 1 + c.atoms()).sum::<usize>()).sum::<usize>()
    }

    pub fn fan_out(&self) -> usize {
        self.blocks.iter().map(|b| b.children.len()).sum()
    }
}

/// Whether `a` maps into `b` root to root, preserving atoms and the
/// distinctness of siblings within a block.
pub fn tree_hom(a: &Tree, b: &Tree) -> bool {
    if !a.unary.iter().all(|u| b.unary.contains(u)) {
        return false;
    }
    a.blocks.iter().all(|blk| block_into_tree(blk, b))
}

/// A block of `a` maps into some block of `b` (injectively when it has more
/// than one child).
fn block_into_tree(blk: &Block, b: &Tree) -> bool {
    b.blocks.iter().any(|target| block_hom(blk, target))
}

fn block_hom(blk: &Block, target: &Block) -> bool {
    if blk.color != target.color || blk.children.len() > target.children.len() {
        return false;
    }
    if blk.children.len() == 1 {
        return target.children.iter().any(|t| tree_hom(&blk.children[0], t));
    }
    let mut used = vec![false; target.children.len()];
    injective(&blk.children, &target.children, &mut used)
}

fn injective(src: &[Tree], dst: &[Tree], used: &mut [bool]) -> bool {
    let Some((first, rest)) = src.split_first() else {
        return true;
    };
    for j in 0..dst.len() {
        if !used[j] && tree_hom(first, &dst[j]) {
            used[j] = true;
            if injective(rest, dst, used) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeMode {
    /// Every formula up to reordering.
    Full,
    /// Only formulas where no block maps into another block; every formula
    /// of the full space is equivalent to one of these within the budget.
    Reduced,
}

struct Gen<'a> {
    budget: TreeBudget,
    unary: &'a [usize],
    colors: usize,
    mode: TreeMode,
    cap: u64,
}

impl Gen<'_> {
    fn unary_sets(&self) -> Vec<Vec<usize>> {
        let n = self.unary.len();
        (0u64..(1 << n)).map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| self.unary[i]).collect()).collect()
    }

    fn too_large(&self, size: u64) -> ExtractionError {
        ExtractionError::SpaceTooLarge { size, cap: self.cap }
    }

    /// Trees whose root sits `remaining` levels above the depth bound.
    fn trees(&self, remaining: usize) -> Result<Vec<Tree>, ExtractionError> {
        let unary_sets = self.unary_sets();
        let fan = self.budget.o * remaining;
        if remaining == 0 || fan == 0 || self.colors == 0 {
            return Ok(unary_sets.into_iter().map(|unary| Tree { unary, blocks: vec![] }).collect());
        }
        let sub = self.trees(remaining - 1)?;
        let max_block = if self.budget.allow_inequalities { fan } else { 1 };
        let mut blocks: Vec<Block> = Vec::new();
        for color in 0..self.colors {
            for size in 1..=max_block {
                for children in multisets(sub.len(), size) {
                    blocks.push(Block { color, children: children.into_iter().map(|i| sub[i].clone()).collect() });
                    if blocks.len() as u64 > self.cap {
                        return Err(self.too_large(blocks.len() as u64));
                    }
                }
            }
        }
        let mut structures: Vec<Vec<usize>> = Vec::new();
        let mut cur = Vec::new();
        self.collect(&blocks, 0, fan, &mut cur, &mut structures)?;
        let total = structures.len() as u64 * unary_sets.len() as u64;
        if total > self.cap {
            return Err(self.too_large(total));
        }
        let mut out = Vec::with_capacity(total as usize);
        for unary in &unary_sets {
            for s in &structures {
                out.push(Tree { unary: unary.clone(), blocks: s.iter().map(|&i| blocks[i].clone()).collect() });
            }
        }
        Ok(out)
    }

    /// Block combinations with total fan-out at most `left`: multisets in
    /// full mode, antichains under block homomorphism in reduced mode.
    fn collect(
        &self,
        blocks: &[Block],
        start: usize,
        left: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> Result<(), ExtractionError> {
        out.push(cur.clone());
        if out.len() as u64 > self.cap {
            return Err(self.too_large(out.len() as u64));
        }
        for i in start..blocks.len() {
            let size = blocks[i].children.len();
            if size > left {
                continue;
            }
            if self.mode == TreeMode::Reduced
                && cur.iter().any(|&j| block_hom(&blocks[i], &blocks[j]) || block_hom(&blocks[j], &blocks[i]))
            {
                continue;
            }
            cur.push(i);
            let next = if self.mode == TreeMode::Full { i } else { i + 1 };
            self.collect(blocks, next, left - size, cur, out)?;
            cur.pop();
        }
        Ok(())
    }
}

/// Non-decreasing index sequences of length k over 0..n.
fn multisets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(n, k, i, cur, out);
            cur.pop();
        }
    }
    go(n, k, 0, &mut cur, &mut out);
    out
}

/// The (p, o)-tree-like formulas for one root variable.
pub fn enumerate_trees(
    budget: TreeBudget,
    unary: &[usize],
    colors: usize,
    mode: TreeMode,
    cap: u64,
) -> Result<Vec<Tree>, ExtractionError> {
    let g = Gen { budget, unary, colors, mode, cap };
    let mut trees = g.trees(budget.p)?;
    trees.sort_by_key(|t| (t.atoms(), t.clone()));
    Ok(trees)
}

/// Writes the atoms of `t` rooted at variable `root`.
fn tree_literals(
    t: &Tree,
    root: &Name,
    sig: &Signature,
    dir: MessageDirection,
    counter: &mut usize,
    out: &mut Vec<Literal>,
) {
    for &u in &t.unary {
        out.push(Literal::Atom(Atom { pred: sig.unary[u].clone(), terms: vec![root.clone()] }));
    }
    for b in &t.blocks {
        let mut vars = Vec::new();
        for child in &b.children {
            *counter += 1;
            let v = name(&format!("z{counter}"));
            let terms = match dir {
                MessageDirection::AgainstEdges => vec![root.clone(), v.clone()],
                MessageDirection::AlongEdges => vec![v.clone(), root.clone()],
            };
            out.push(Literal::Atom(Atom { pred: sig.binary[b.color].clone(), terms }));
            tree_literals(child, &v, sig, dir, counter, out);
            vars.push(v);
        }
        for i in 0..vars.len() {
            for j in i + 1..vars.len() {
                out.push(Literal::Neq(vars[i].clone(), vars[j].clone()));
            }
        }
    }
}

/// φ_x ∧ φ_y → R(x, y) with fresh variables z1, z2, ... in depth-first order.
pub fn tree_rule(tx: &Tree, ty: &Tree, head: usize, sig: &Signature, dir: MessageDirection) -> Rule {
    let (x, y) = (name("x"), name("y"));
    let mut body = Vec::new();
    let mut counter = 0;
    tree_literals(tx, &x, sig, dir, &mut counter, &mut body);
    tree_literals(ty, &y, sig, dir, &mut counter, &mut body);
    Rule::new(body, Atom { pred: sig.binary[head].clone(), terms: vec![x, y] })
}

/// A tree-like rule space: the same tree list for x and y, every head.
pub struct TreeSpace {
    pub budget: TreeBudget,
    pub trees: Vec<Tree>,
    pub heads: usize,
    pub direction: MessageDirection,
    /// (x tree, y tree, head) in order of increasing size.
    pub order: Vec<(u32, u32, u32)>,
}

impl TreeSpace {
    pub fn new(
        budget: TreeBudget,
        sig: &Signature,
        skip_unary: Option<usize>,
        direction: MessageDirection,
        mode: TreeMode,
        cap: u64,
    ) -> Result<Self, ExtractionError> {
        let unary: Vec<usize> = (0..sig.unary.len()).filter(|&u| Some(u) != skip_unary).collect();
        let trees = enumerate_trees(budget, &unary, sig.binary.len(), mode, cap)?;
        let heads = sig.binary.len();
        let size = trees.len() as u64 * trees.len() as u64 * heads as u64;
        if size > cap {
            return Err(ExtractionError::SpaceTooLarge { size, cap });
        }
        let mut order: Vec<(u32, u32, u32)> = Vec::with_capacity(size as usize);
        for i in 0..trees.len() {
            for j in 0..trees.len() {
                for h in 0..heads {
                    order.push((i as u32, j as u32, h as u32));
                }
            }
        }
        order.sort_by_key(|&(i, j, h)| (trees[i as usize].atoms() + trees[j as usize].atoms(), i, j, h));
        Ok(TreeSpace { budget, trees, heads, direction, order })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn rule(&self, idx: usize, sig: &Signature) -> Rule {
        let (i, j, h) = self.order[idx];
        tree_rule(&self.trees[i as usize], &self.trees[j as usize], h as usize, sig, self.direction)
    }

    pub fn rules(&self, sig: &Signature) -> Vec<Rule> {
        (0..self.len()).map(|i| self.rule(i, sig)).collect()
    }
}

/// Every (p, o)-tree-like rule over `sig` up to variable renaming.
pub fn enumerate_treelike(
    budget: TreeBudget,
    sig: &Signature,
    direction: MessageDirection,
    cap: u64,
) -> Result<Vec<Rule>, ExtractionError> {
    Ok(TreeSpace::new(budget, sig, None, direction, TreeMode::Full, cap)?.rules(sig))
}

/// Structural check that `r` is a (p, o)-tree-like rule for the given
/// message direction, independent of the generator.
pub fn is_treelike(r: &Rule, budget: TreeBudget, dir: MessageDirection) -> bool {
    let (x, y) = match r.head.terms.as_slice() {
        [x, y] if x != y => (x.clone(), y.clone()),
        _ => return false,
    };
    // parent -> [(colour predicate, child)]
    let mut children: BTreeMap<Name, Vec<(Name, Name)>> = BTreeMap::new();
    let mut parent: BTreeMap<Name, Name> = BTreeMap::new();
    for a in r.body_atoms() {
        if a.terms.len() == 2 {
            let (p, c) = match dir {
                MessageDirection::AgainstEdges => (a.terms[0].clone(), a.terms[1].clone()),
                MessageDirection::AlongEdges => (a.terms[1].clone(), a.terms[0].clone()),
            };
            if c == x || c == y || parent.insert(c.clone(), p.clone()).is_some() {
                return false;
            }
            children.entry(p).or_default().push((a.pred.clone(), c));
        }
    }
    // Depth from a root; every variable must reach x or y.
    let mut depth: BTreeMap<Name, usize> = BTreeMap::new();
    for v in r.variables() {
        let mut d = 0;
        let mut cur = v.clone();
        while let Some(p) = parent.get(&cur) {
            d += 1;
            cur = p.clone();
            if d > parent.len() {
                return false;
            }
        }
        if cur != x && cur != y {
            return false;
        }
        depth.insert(v, d);
    }
    for (v, kids) in &children {
        let d = depth[v];
        if d > budget.p || kids.len() > budget.o * (budget.p - d) {
            return false;
        }
    }
    if depth.values().any(|&d| d > budget.p) {
        return false;
    }
    // Inequalities: only between siblings of one colour, forming cliques.
    let neqs: BTreeSet<(Name, Name)> =
        r.inequalities().map(|(a, b)| if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) }).collect();
    if !budget.allow_inequalities && !neqs.is_empty() {
        return false;
    }
    let edge_color = |v: &Name| -> Option<(Name, Name)> {
        let p = parent.get(v)?;
        let c = children[p].iter().find(|(_, c)| c == v)?.0.clone();
        Some((p.clone(), c))
    };
    for (a, b) in &neqs {
        match (edge_color(a), edge_color(b)) {
            (Some(ea), Some(eb)) if ea == eb => {}
            _ => return false,
        }
    }
    let linked = |a: &Name, b: &Name| {
        let k = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        neqs.contains(&k)
    };
    let vars: Vec<Name> = neqs.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
    for a in &vars {
        for b in &vars {
            for c in &vars {
                if a != b && b != c && a != c && linked(a, b) && linked(b, c) && !linked(a, c) {
                    return false;
                }
            }
        }
    }
    true
}

// ---------------------------------------------------------------------------
// Mining

#[derive(Debug, Clone, PartialEq)]
pub struct MiningResult {
    pub program: Program,
    /// Rules whose soundness was decided.
    pub checked: usize,
    pub sound: usize,
    /// Rules skipped because a mined rule subsumes them.
    pub pruned: usize,
}

impl MiningResult {
    pub fn header(&self, model_hash: &str, space: &str) -> String {
        format!(
            "# model {model_hash} space {space} checked {} sound {} pruned {}",
            self.checked, self.sound, self.pruned
        )
    }
}

/// Cheap necessary condition for `g` subsuming `s`.
fn may_subsume(g: &Rule, s: &Rule, s_preds: &BTreeSet<Name>) -> bool {
    g.head.pred == s.head.pred && g.body_atoms().all(|a| s_preds.contains(&a.pred))
}

fn subsumed_by_any(r: &Rule, mined: &[Rule]) -> bool {
    let preds: BTreeSet<Name> = r.body_atoms().map(|a| a.pred.clone()).collect();
    mined.iter().any(|g| may_subsume(g, r, &preds) && subsumes(g, r))
}

/// Sound rules of `space`, in space order. With `prune`, a rule subsumed by
/// an earlier sound rule is skipped and left out. Chunks are checked in
/// parallel on the current rayon pool; the result does not depend on the
/// number of workers.
pub fn mine_sound_rules(
    checker: &Checker<'_>,
    space: usize,
    rule_at: &(dyn Fn(usize) -> Rule + Sync),
    prune: bool,
) -> Result<MiningResult, ExtractionError> {
    let mut mined: Vec<Rule> = Vec::new();
    let mut checked = 0;
    let mut pruned = 0;
    let mut start = 0;
    while start < space {
        let end = (start + CHUNK).min(space);
        let snapshot = &mined;
        let verdicts: Vec<(Rule, Option<bool>)> = (start..end)
            .into_par_iter()
            .map(|i| {
                let r = rule_at(i);
                if prune && subsumed_by_any(&r, snapshot) {
                    return Ok((r, None));
                }
                let v = checker.check(&r)?;
                Ok((r, Some(v.is_sound())))
            })
            .collect::<Result<_, SoundnessError>>()?;
        let before = mined.len();
        for (r, verdict) in verdicts {
            let Some(sound) = verdict else {
                pruned += 1;
                continue;
            };
            if prune && subsumed_by_any(&r, &mined[before..]) {
                pruned += 1;
                continue;
            }
            checked += 1;
            if sound {
                mined.push(r);
            }
        }
        start = end;
    }
    let sound = mined.len();
    Ok(MiningResult { program: Program::new(mined), checked, sound, pruned })
}

/// Mines a materialised rule list.
pub fn mine_rules(checker: &Checker<'_>, rules: &[Rule], prune: bool) -> Result<MiningResult, ExtractionError> {
    mine_sound_rules(checker, rules.len(), &|i| rules[i].clone(), prune)
}

/// Drops every rule subsumed by another rule of the program (keeping the
/// first of mutually subsuming rules).
pub fn minimize_program(p: &Program) -> Program {
    let rules = &p.rules;
    let keep: Vec<bool> = (0..rules.len())
        .into_par_iter()
        .map(|i| {
            let preds: BTreeSet<Name> = rules[i].body_atoms().map(|a| a.pred.clone()).collect();
            !rules.iter().enumerate().any(|(j, g)| {
                j != i
                    && may_subsume(g, &rules[i], &preds)
                    && subsumes(g, &rules[i])
                    && (j < i || !subsumes(&rules[i], g))
            })
        })
        .collect();
    Program::new(rules.iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r.clone()).collect())
}

// ---------------------------------------------------------------------------
// Equivalent programs

#[derive(Debug, Clone)]
pub struct EquivalentProgram {
    pub program: Program,
    pub budget: TreeBudget,
    pub space_size: usize,
    pub mining: MiningResult,
    pub capacities: Option<CapacityResult>,
}

impl EquivalentProgram {
    pub fn space_description(&self) -> String {
        format!(
            "treelike p={} o={} inequalities={} size={}",
            self.budget.p, self.budget.o, self.budget.allow_inequalities, self.space_size
        )
    }
}

/// Tree-like program equivalent to the model: for max GNNs, the sound
/// inequality-free (L, |Col|·δ_N)-tree-like rules; otherwise, for bilinear
/// scoring, the sound (L, |Col|·δ_N·C)-tree-like rules with inequalities.
/// Rules subsumed by other sound rules are left out.
pub fn equivalent_program(m: &Model, cap: u64) -> Result<EquivalentProgram, ExtractionError> {
    let checker = Checker::new(m)?;
    let g = &m.gnn;
    let delta_n = g.dims().into_iter().max().unwrap_or(0);
    let colors = m.signature.colors();
    let (budget, capacities) = if g.is_max() {
        (TreeBudget { p: g.num_layers(), o: colors * delta_n, allow_inequalities: false }, None)
    } else {
        let view = m.scoring.to_bilinear().map_err(|_| ExtractionError::NotBilinear(m.scoring.kind().to_string()))?;
        let caps = compute_capacities(g, &view, m.scoring.threshold)?;
        let c = caps.max_capacity as usize;
        (TreeBudget { p: g.num_layers(), o: colors * delta_n * c, allow_inequalities: true }, Some(caps))
    };
    let space = TreeSpace::new(budget, &m.signature, m.universal_unary, g.direction, TreeMode::Reduced, cap)?;
    let sig = &m.signature;
    let mining = mine_sound_rules(&checker, space.len(), &|i| space.rule(i, sig), true)?;
    let program = minimize_program(&mining.program);
    Ok(EquivalentProgram { program, budget, space_size: space.len(), mining, capacities })
}

impl fmt::Display for TreeBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={} o={} inequalities={}", self.p, self.o, self.allow_inequalities)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::parse_rule;

    fn sig(n: usize) -> Signature {
        let names: Vec<String> = (0..n).map(|i| format!("R{i}")).collect();
        Signature::new::<String>(&[], &names).unwrap()
    }

    #[test]
    fn published_shape_counts() {
        assert_eq!(published_shapes(1).len(), 5);
        assert_eq!(published_shapes(2).len(), 68);
    }

    #[test]
    fn published_stream_matches_len() {
        let s = sig(3);
        let it = PublishedRules::new(&s, 2);
        assert_eq!(it.len(), 68 * 27);
        let rules: Vec<Rule> = it.collect();
        assert_eq!(rules.len(), 68 * 27);
        let distinct: HashSet<&Rule> = rules.iter().collect();
        assert_eq!(distinct.len(), rules.len());
    }

    #[test]
    fn full_space_is_duplicate_free() {
        let s = Signature::new(&["U"], &["R"]).unwrap();
        let rules = full_flat_rules(&s, 1, None);
        assert!(!rules.is_empty());
        for (i, a) in rules.iter().enumerate() {
            for b in &rules[i + 1..] {
                assert!(!(subsumes(a, b) && subsumes(b, a) && a.body.len() == b.body.len()), "{a} ~ {b}");
            }
        }
        assert!(rules.iter().any(|r| r.to_string() == "R(x,y) -> R(x,y)"));
        assert!(rules.iter().any(|r| r.to_string() == "-> R(x,y)"));
    }

    #[test]
    fn treelike_minimal_signature() {
        let s = Signature::new(&["U"], &["R"]).unwrap();
        let b = TreeBudget { p: 1, o: 1, allow_inequalities: false };
        let trees = enumerate_trees(b, &[0], 1, TreeMode::Full, DEFAULT_SPACE_CAP).unwrap();
        assert_eq!(trees.len(), 6);
        let rules = enumerate_treelike(b, &s, MessageDirection::AgainstEdges, DEFAULT_SPACE_CAP).unwrap();
        assert_eq!(rules.len(), 36);
        assert!(rules.iter().all(|r| is_treelike(r, b, MessageDirection::AgainstEdges)));
    }

    #[test]
    fn depth_zero_has_no_binary_atoms() {
        let s = Signature::new(&["U"], &["R"]).unwrap();
        let b = TreeBudget { p: 0, o: 3, allow_inequalities: true };
        let rules = enumerate_treelike(b, &s, MessageDirection::AgainstEdges, DEFAULT_SPACE_CAP).unwrap();
        assert_eq!(rules.len(), 4);
        assert!(rules.iter().all(|r| r.body_atoms().all(|a| a.terms.len() == 1)));
    }

    #[test]
    fn validator_rejects_non_trees() {
        let s = Signature::new(&["U"], &["R", "S"]).unwrap();
        let b = TreeBudget { p: 2, o: 2, allow_inequalities: true };
        let d = MessageDirection::AgainstEdges;
        let ok = |t: &str| is_treelike(&parse_rule(t, &s).unwrap(), b, d);
        assert!(ok("R(x,z), S(z,w), U(w) -> R(x,y)"));
        assert!(ok("R(x,z), R(x,w), z != w -> S(x,y)"));
        assert!(!ok("R(x,z), R(z,y) -> R(x,y)"));
        assert!(!ok("R(x,z), S(x,w), z != w -> S(x,y)"));
        assert!(!ok("R(x,x) -> R(x,y)"));
        assert!(ok("R(y,z) -> R(x,y)"));
        assert!(!ok("R(x,z), R(w,z) -> R(x,y)"));
    }

    #[test]
    fn reduced_trees_are_antichains() {
        let b = TreeBudget { p: 1, o: 4, allow_inequalities: false };
        let full = enumerate_trees(b, &[0, 1], 2, TreeMode::Full, DEFAULT_SPACE_CAP).unwrap();
        let reduced = enumerate_trees(b, &[0, 1], 2, TreeMode::Reduced, DEFAULT_SPACE_CAP).unwrap();
        assert_eq!(reduced.len(), 144);
        assert!(reduced.len() < full.len());
        // Every full tree is hom-equivalent to some reduced tree.
        for t in &full {
            assert!(reduced.iter().any(|r| tree_hom(t, r) && tree_hom(r, t)));
        }
    }

    #[test]
    fn canonical_form_merges_renamings() {
        let s = sig(2);
        let a = parse_rule("R0(x,z), R1(w,y) -> R0(x,y)", &s).unwrap();
        let b = parse_rule("R1(z,y), R0(x,w) -> R0(x,y)", &s).unwrap();
        assert_eq!(canonical_form(&a, &["z", "w"]), canonical_form(&b, &["z", "w"]));
    }

    #[test]
    fn space_cap_enforced() {
        let s = sig(2);
        let b = TreeBudget { p: 2, o: 2, allow_inequalities: true };
        assert!(matches!(
            TreeSpace::new(b, &s, None, MessageDirection::AgainstEdges, TreeMode::Full, 1000),
            Err(ExtractionError::SpaceTooLarge { .. })
        ));
    }
}
