//! Satisfiability of `A ∧ B` by depth-first case splitting over disjunctions
//! with an incremental simplex underneath.
//!
//! Refutations come back as a [`ProofTree`]: splits over disjunctions whose
//! leaves carry Farkas certificates. A split whose chosen branch turned out to
//! be irrelevant for the refutation below it is skipped, so every node of the
//! returned tree is needed.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::encoder::PartitionedSystem;
use crate::error::{Error, Result};
use crate::formula::{Assignment, Atom, Formula, LinearTerm, Rel};
use crate::rational::int;
use crate::simplex::{lp_check, AtomId, FarkasCertificate, LpResult, Simplex};

/// Which side of an interpolation query an atom or disjunction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// Wall-clock budget for solver calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Budget {
    deadline: Option<Instant>,
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget { deadline: None }
    }

    pub fn from_duration(d: Duration) -> Self {
        Budget {
            deadline: Instant::now().checked_add(d),
        }
    }

    pub fn seconds(s: f64) -> Self {
        Self::from_duration(Duration::from_secs_f64(s.max(0.0)))
    }

    /// The tighter of two budgets.
    pub fn min(self, other: Budget) -> Budget {
        let deadline = match (self.deadline, other.deadline) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Budget { deadline }
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedAtom {
    pub atom: Atom,
    pub side: Side,
    /// Index of the A-part conjunct the atom belongs to.
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisjunctionInfo {
    pub side: Side,
    pub label: Option<usize>,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProofTree {
    /// Infeasible branch; `support` lists the atoms the certificate uses.
    Leaf {
        certificate: FarkasCertificate,
        support: Vec<AtomId>,
    },
    /// One child per disjunct of `disjunction`.
    Split {
        disjunction: usize,
        side: Side,
        children: Vec<ProofTree>,
    },
}

impl ProofTree {
    pub fn leaves(&self) -> Vec<&FarkasCertificate> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a FarkasCertificate>) {
        match self {
            ProofTree::Leaf { certificate, .. } => out.push(certificate),
            ProofTree::Split { children, .. } => {
                children.iter().for_each(|c| c.collect_leaves(out))
            }
        }
    }

    pub fn split_count(&self) -> usize {
        match self {
            ProofTree::Leaf { .. } => 0,
            ProofTree::Split { children, .. } => {
                1 + children.iter().map(ProofTree::split_count).sum::<usize>()
            }
        }
    }
}

/// A refutation together with the atoms and disjunctions it refers to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnsatProof {
    pub atoms: BTreeMap<AtomId, TrackedAtom>,
    pub disjunctions: BTreeMap<usize, DisjunctionInfo>,
    /// Atoms of each disjunct, per disjunction (top-level atoms only; nested
    /// disjunctions are listed in `nested`).
    pub branches: BTreeMap<usize, Vec<Vec<AtomId>>>,
    pub nested: BTreeMap<usize, Vec<Vec<usize>>>,
    /// Atoms asserted unconditionally.
    pub roots: Vec<AtomId>,
    pub tree: ProofTree,
    pub a_vars: BTreeSet<String>,
    pub b_vars: BTreeSet<String>,
}

impl UnsatProof {
    pub fn shared_vars(&self) -> BTreeSet<String> {
        self.a_vars.intersection(&self.b_vars).cloned().collect()
    }

    /// Labels of A-conjuncts used by some leaf certificate or A-side split.
    pub fn core_labels(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_core(&self.tree, &mut out);
        out
    }

    fn collect_core(&self, node: &ProofTree, out: &mut BTreeSet<usize>) {
        match node {
            ProofTree::Leaf { support, .. } => {
                for id in support {
                    let t = &self.atoms[id];
                    if let (Side::A, Some(l)) = (t.side, t.label) {
                        out.insert(l);
                    }
                }
            }
            ProofTree::Split {
                disjunction,
                children,
                ..
            } => {
                let info = &self.disjunctions[disjunction];
                if let (Side::A, Some(l)) = (info.side, info.label) {
                    out.insert(l);
                }
                children.iter().for_each(|c| self.collect_core(c, out));
            }
        }
    }

    pub fn atom_list(&self) -> Vec<(AtomId, Atom)> {
        self.atoms.iter().map(|(id, t)| (*id, t.atom.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Sat(Assignment),
    Unsat(Box<UnsatProof>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub lp_calls: u64,
    pub splits: u64,
    pub pivots: u64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveResult {
    pub outcome: Outcome,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self.outcome, Outcome::Unsat(_))
    }

    pub fn model(&self) -> Option<&Assignment> {
        match &self.outcome {
            Outcome::Sat(m) => Some(m),
            Outcome::Unsat(_) => None,
        }
    }

    pub fn proof(&self) -> Option<&UnsatProof> {
        match &self.outcome {
            Outcome::Unsat(p) => Some(p),
            Outcome::Sat(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
enum Item {
    Atom(TrackedAtom),
    Disj {
        side: Side,
        label: Option<usize>,
        branches: Vec<Vec<usize>>,
    },
}

enum NodeResult {
    Sat(Assignment),
    Unsat(ProofTree, BTreeSet<usize>),
}

struct Search<'a> {
    items: Vec<Item>,
    simplex: Simplex,
    budget: &'a Budget,
    stats: SolveStats,
    full: Formula,
    options: SolveOptions,
    /// Atoms asserted on the current branch, roots first.
    path: Vec<usize>,
}

impl Search<'_> {
    fn flatten(&mut self, f: &Formula, side: Side, label: Option<usize>) -> Vec<usize> {
        match f {
            Formula::True => Vec::new(),
            Formula::False => {
                let falsum = Atom::new(LinearTerm::new(), Rel::Le, int(-1));
                vec![self.push(Item::Atom(TrackedAtom {
                    atom: falsum,
                    side,
                    label,
                }))]
            }
            Formula::Atom(a) => vec![self.push(Item::Atom(TrackedAtom {
                atom: a.clone(),
                side,
                label,
            }))],
            Formula::And(cs) => cs
                .iter()
                .flat_map(|c| self.flatten(c, side, label))
                .collect(),
            Formula::Or(cs) => {
                let id = self.items.len();
                self.items.push(Item::Disj {
                    side,
                    label,
                    branches: Vec::new(),
                });
                let branches = cs.iter().map(|c| self.flatten(c, side, label)).collect();
                if let Item::Disj { branches: b, .. } = &mut self.items[id] {
                    *b = branches;
                }
                vec![id]
            }
        }
    }

    fn push(&mut self, item: Item) -> usize {
        self.items.push(item);
        self.items.len() - 1
    }

    fn is_disj(&self, id: usize) -> bool {
        matches!(self.items[id], Item::Disj { .. })
    }

    fn satisfied(&self, id: usize) -> bool {
        match &self.items[id] {
            Item::Atom(t) => self.simplex.atom_holds(&t.atom).unwrap_or(false),
            Item::Disj { branches, .. } => branches
                .iter()
                .any(|b| b.iter().all(|&i| self.satisfied(i))),
        }
    }

    /// Retries the leaf without each A-atom of its certificate in turn and
    /// keeps any certificate that avoids it.
    fn refine(&mut self, mut cert: FarkasCertificate) -> FarkasCertificate {
        if !self.options.minimize_a_support {
            return cert;
        }
        let mut dropped = BTreeSet::new();
        let mut tried = BTreeSet::new();
        loop {
            let next = cert.multipliers.keys().copied().find(|id| {
                !tried.contains(id) && matches!(&self.items[*id], Item::Atom(t) if t.side == Side::A)
            });
            let Some(id) = next else { return cert };
            tried.insert(id);
            let trial: Vec<(AtomId, Atom)> = self
                .path
                .iter()
                .filter(|&&i| i != id && !dropped.contains(&i))
                .filter_map(|&i| match &self.items[i] {
                    Item::Atom(t) => Some((i, t.atom.clone())),
                    Item::Disj { .. } => None,
                })
                .collect();
            self.stats.lp_calls += 1;
            if let LpResult::Infeasible(c) = lp_check(&trial) {
                dropped.insert(id);
                cert = c;
            }
        }
    }

    fn leaf(cert: FarkasCertificate) -> NodeResult {
        let support: Vec<AtomId> = cert.multipliers.keys().copied().collect();
        let deps = support.iter().copied().collect();
        NodeResult::Unsat(
            ProofTree::Leaf {
                certificate: cert,
                support,
            },
            deps,
        )
    }

    fn node(&mut self, pending: &[usize]) -> Result<NodeResult> {
        if self.budget.expired() {
            return Err(Error::Timeout);
        }
        self.stats.lp_calls += 1;
        if let Err(cert) = self.simplex.check() {
            return Ok(Self::leaf(self.refine(cert)));
        }
        let Some(pos) = pending.iter().position(|&d| !self.satisfied(d)) else {
            let full = &self.full;
            let model = self
                .simplex
                .model_where(|m| full.eval(m).unwrap_or(false))
                .expect("a delta-satisfying assignment has a rational instance");
            return Ok(NodeResult::Sat(model));
        };
        let d = pending[pos];
        let (side, branches) = match &self.items[d] {
            Item::Disj { side, branches, .. } => (*side, branches.clone()),
            Item::Atom(_) => unreachable!("pending holds disjunctions only"),
        };
        self.stats.splits += 1;
        let mut children = Vec::with_capacity(branches.len());
        let mut deps: BTreeSet<usize> = [d].into();
        for branch in &branches {
            self.simplex.push();
            let result = self.enter_branch(pending, pos, branch);
            self.simplex.pop();
            match result? {
                NodeResult::Sat(m) => return Ok(NodeResult::Sat(m)),
                NodeResult::Unsat(tree, child_deps) => {
                    if branch.iter().all(|i| !child_deps.contains(i)) {
                        return Ok(NodeResult::Unsat(tree, child_deps));
                    }
                    deps.extend(child_deps.into_iter().filter(|i| !branch.contains(i)));
                    children.push(tree);
                }
            }
        }
        Ok(NodeResult::Unsat(
            ProofTree::Split {
                disjunction: d,
                side,
                children,
            },
            deps,
        ))
    }

    fn enter_branch(&mut self, pending: &[usize], pos: usize, branch: &[usize]) -> Result<NodeResult> {
        let mut next: Vec<usize> = pending[..pos].to_vec();
        next.extend_from_slice(&pending[pos + 1..]);
        let depth = self.path.len();
        let result = self.assert_branch(branch, &mut next);
        let result = match result {
            Some(leaf) => Ok(leaf),
            None => self.node(&next),
        };
        self.path.truncate(depth);
        result
    }

    fn assert_branch(&mut self, branch: &[usize], next: &mut Vec<usize>) -> Option<NodeResult> {
        for &i in branch {
            if self.is_disj(i) {
                next.push(i);
            } else {
                self.path.push(i);
                if let Err(cert) = self.simplex.assert_atom(i) {
                    return Some(Self::leaf(self.refine(cert)));
                }
            }
        }
        None
    }
}

/// Decides `A ∧ B`; refutations are returned as proof trees.
/// Tuning knobs for [`solve_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveOptions {
    /// Shrink the A-side support of every leaf certificate. Costs extra LP
    /// checks but yields smaller cores.
    pub minimize_a_support: bool,
}

pub fn solve(sys: &PartitionedSystem, budget: &Budget) -> Result<SolveResult> {
    solve_with(sys, budget, SolveOptions::default())
}

pub fn solve_with(sys: &PartitionedSystem, budget: &Budget, options: SolveOptions) -> Result<SolveResult> {
    let start = Instant::now();
    let mut search = Search {
        items: Vec::new(),
        simplex: Simplex::new(),
        budget,
        stats: SolveStats::default(),
        full: Formula::and(sys.a_part.iter().cloned().chain([sys.b_part.clone()])),
        options,
        path: Vec::new(),
    };
    let mut all_vars: BTreeSet<String> = sys.a_vars();
    all_vars.extend(sys.b_vars());
    search.simplex.declare_vars(all_vars.iter());

    let b_top = search.flatten(&sys.b_part, Side::B, None);
    let mut a_top = Vec::new();
    for (label, c) in sys.a_part.iter().enumerate() {
        a_top.extend(search.flatten(c, Side::A, Some(label)));
    }
    for (id, item) in search.items.iter().enumerate() {
        if let Item::Atom(t) = item {
            search.simplex.register(id, &t.atom);
        }
    }
    let top: Vec<usize> = b_top.into_iter().chain(a_top).collect();
    let mut pending = Vec::new();
    let mut roots = Vec::new();
    let mut early = None;
    for &i in &top {
        if search.is_disj(i) {
            pending.push(i);
        } else {
            roots.push(i);
            if early.is_none() {
                search.path.push(i);
                if let Err(cert) = search.simplex.assert_atom(i) {
                    early = Some(cert);
                }
            }
        }
    }
    let result = match early {
        Some(cert) => {
            let cert = search.refine(cert);
            Search::leaf(cert)
        }
        None => search.node(&pending)?,
    };
    let mut stats = search.stats;
    stats.pivots = search.simplex.stats.pivots;
    stats.elapsed = start.elapsed();
    let outcome = match result {
        NodeResult::Sat(m) => Outcome::Sat(m),
        NodeResult::Unsat(tree, _) => {
            let mut atoms = BTreeMap::new();
            let mut disjunctions = BTreeMap::new();
            let mut branches = BTreeMap::new();
            let mut nested = BTreeMap::new();
            for (id, item) in search.items.iter().enumerate() {
                match item {
                    Item::Atom(t) => {
                        atoms.insert(id, t.clone());
                    }
                    Item::Disj {
                        side,
                        label,
                        branches: bs,
                    } => {
                        disjunctions.insert(
                            id,
                            DisjunctionInfo {
                                side: *side,
                                label: *label,
                                arity: bs.len(),
                            },
                        );
                        let split = |want_disj: bool| -> Vec<Vec<usize>> {
                            bs.iter()
                                .map(|b| {
                                    b.iter()
                                        .copied()
                                        .filter(|&i| search.is_disj(i) == want_disj)
                                        .collect()
                                })
                                .collect()
                        };
                        branches.insert(id, split(false));
                        nested.insert(id, split(true));
                    }
                }
            }
            Outcome::Unsat(Box::new(UnsatProof {
                atoms,
                disjunctions,
                branches,
                nested,
                roots,
                tree,
                a_vars: sys.a_vars(),
                b_vars: sys.b_vars(),
            }))
        }
    };
    Ok(SolveResult { outcome, stats })
}

/// Satisfiability of a single formula; returns a model when satisfiable.
pub fn check_sat(f: &Formula, budget: &Budget) -> Result<Option<Assignment>> {
    let sys = PartitionedSystem::from_conjuncts(Vec::new(), f.clone());
    Ok(solve(&sys, budget)?.model().cloned())
}

/// `true` when `premise ⟹ conclusion` (under `context`) is valid.
pub fn implies(premise: &Formula, conclusion: &Formula, context: &Formula, budget: &Budget) -> Result<bool> {
    let query = Formula::and([premise.clone(), context.clone(), conclusion.negate()]);
    Ok(check_sat(&query, budget)?.is_none())
}
