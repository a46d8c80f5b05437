//! Craig interpolants from case-split refutations.
//!
//! Leaves are interpolated at the arithmetic level from their Farkas
//! certificates (single-sum, decomposed, factor-weighted and dual variants);
//! splits are combined propositionally: a split over a B-side disjunction
//! conjoins the children, a split over an A-side disjunction disjoins them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};

use crate::encoder::PartitionedSystem;
use crate::error::{Error, Result};
use crate::formula::{Atom, Formula, LinearTerm, Rel};
use crate::rational::{format_rational, parse_rational, ratio, Rational};
use crate::search::{solve, Budget, ProofTree, Side, SolveStats, TrackedAtom, UnsatProof};
use crate::simplex::{orientation, AtomId, FarkasCertificate};

/// Arithmetic interpolation system used at proof leaves.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Theory {
    /// Decomposed Farkas: one inequality per independent group of A-rows.
    Decomposed,
    /// Farkas: the weighted sum of the A-rows.
    Farkas,
    /// Bound moved a fraction `q` of the way from Farkas to its dual.
    Factor(Rational),
    /// Dual Farkas: the negated weighted sum of the B-rows.
    DualFarkas,
    /// Dual decomposed Farkas: negated decomposition of the B-rows.
    DualDecomposed,
}

impl Theory {
    /// The system that, with A and B swapped and the result negated, gives `self`.
    pub fn dual(&self) -> Theory {
        match self {
            Theory::Decomposed => Theory::DualDecomposed,
            Theory::Farkas => Theory::DualFarkas,
            Theory::Factor(q) => Theory::Factor(Rational::one() - q),
            Theory::DualFarkas => Theory::Farkas,
            Theory::DualDecomposed => Theory::Decomposed,
        }
    }
}

/// Propositional combination over splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Propositional {
    McMillan,
    /// Dual: negated McMillan of the swapped query.
    McMillanDual,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ItpAlgo {
    pub theory: Theory,
    pub propositional: Propositional,
}

impl ItpAlgo {
    pub fn new(theory: Theory, propositional: Propositional) -> Result<Self> {
        if let Theory::Factor(q) = &theory {
            if q < &Rational::zero() || q > &Rational::one() {
                return Err(Error::Interpolation(format!(
                    "factor {} outside [0, 1]",
                    format_rational(q)
                )));
            }
        }
        Ok(ItpAlgo {
            theory,
            propositional,
        })
    }

    pub fn stronger() -> Self {
        ItpAlgo {
            theory: Theory::Decomposed,
            propositional: Propositional::McMillan,
        }
    }

    pub fn strong() -> Self {
        ItpAlgo {
            theory: Theory::Farkas,
            propositional: Propositional::McMillan,
        }
    }

    pub fn mid() -> Self {
        Self::factor(ratio(1, 2))
    }

    pub fn factor(q: Rational) -> Self {
        ItpAlgo {
            theory: Theory::Factor(q),
            propositional: Propositional::McMillan,
        }
    }

    pub fn weak() -> Self {
        ItpAlgo {
            theory: Theory::DualFarkas,
            propositional: Propositional::McMillan,
        }
    }

    pub fn weaker() -> Self {
        ItpAlgo {
            theory: Theory::DualDecomposed,
            propositional: Propositional::McMillanDual,
        }
    }

    pub fn presets() -> [(&'static str, ItpAlgo); 5] {
        [
            ("stronger", Self::stronger()),
            ("strong", Self::strong()),
            ("mid", Self::mid()),
            ("weak", Self::weak()),
            ("weaker", Self::weaker()),
        ]
    }
}

impl FromStr for ItpAlgo {
    type Err = Error;

    /// `stronger | strong | mid | weak | weaker | factor:<q>`
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stronger" => Ok(Self::stronger()),
            "strong" => Ok(Self::strong()),
            "mid" => Ok(Self::mid()),
            "weak" => Ok(Self::weak()),
            "weaker" => Ok(Self::weaker()),
            other => match other.strip_prefix("factor:") {
                Some(q) => ItpAlgo::new(Theory::Factor(parse_rational(q)?), Propositional::McMillan),
                None => Err(Error::Interpolation(format!("unknown interpolation preset {other:?}"))),
            },
        }
    }
}

impl fmt::Display for ItpAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, algo) in Self::presets() {
            if &algo == self {
                return write!(f, "{name}");
            }
        }
        match (&self.theory, self.propositional) {
            (Theory::Factor(q), Propositional::McMillan) => write!(f, "factor:{}", format_rational(q)),
            (t, p) => write!(f, "{t:?}/{p:?}"),
        }
    }
}

struct SideSum {
    term: LinearTerm,
    constant: Rational,
    strict: bool,
}

fn side_sum<'a, I>(rows: I) -> SideSum
where
    I: IntoIterator<Item = (&'a Atom, &'a Rational)>,
{
    let mut term = LinearTerm::new();
    let mut constant = Rational::zero();
    let mut strict = false;
    for (atom, m) in rows {
        if m.is_zero() {
            continue;
        }
        let k = m * orientation(atom.rel());
        term.add_scaled(atom.term(), &k);
        constant += atom.constant() * &k;
        strict |= atom.rel().is_strict();
    }
    SideSum {
        term,
        constant,
        strict,
    }
}

fn sum_atom(s: &SideSum) -> Formula {
    let rel = if s.strict { Rel::Lt } else { Rel::Le };
    Formula::atom(s.term.clone(), rel, s.constant.clone())
}

/// Multiplier-bearing rows of one side, validated against the tagging.
fn rows_of<'a>(
    cert: &'a FarkasCertificate,
    atoms: &'a BTreeMap<AtomId, TrackedAtom>,
    side: Side,
) -> Result<Vec<(AtomId, &'a Atom, &'a Rational)>> {
    let mut out = Vec::new();
    for (id, m) in &cert.multipliers {
        let t = atoms
            .get(id)
            .ok_or_else(|| Error::Interpolation(format!("certificate refers to unknown atom {id}")))?;
        if t.side == side {
            out.push((*id, &t.atom, m));
        }
    }
    Ok(out)
}

fn check_vocabulary(f: &Formula, shared: &BTreeSet<String>) -> Result<()> {
    match f.vars().into_iter().find(|v| !shared.contains(v)) {
        Some(v) => Err(Error::Interpolation(format!(
            "certificate and side tags disagree: {v} is not shared"
        ))),
        None => Ok(()),
    }
}

/// Decomposes the weighted rows of one side into groups whose sums mention
/// only shared variables. Groups are the connected components of rows linked
/// through local variables; a local variable fixed by an equality `k·v = c`
/// does not link rows, instead each group cancels its `v` coefficient with a
/// share of that equality. Groups made only of equalities yield equalities.
fn decompose(rows: &[(AtomId, &Atom, &Rational)], shared: &BTreeSet<String>) -> Option<Formula> {
    let local = |v: &String| !shared.contains(v);
    let mut absorber: BTreeMap<&String, usize> = BTreeMap::new();
    for (i, (_, atom, _)) in rows.iter().enumerate() {
        if atom.rel() == Rel::Eq && atom.term().len() == 1 {
            let v = atom.term().vars().next().unwrap();
            if local(v) {
                absorber.entry(v).or_insert(i);
            }
        }
    }
    let primaries: BTreeSet<usize> = absorber.values().copied().collect();
    let members: Vec<usize> = (0..rows.len()).filter(|i| !primaries.contains(i)).collect();

    let mut parent: Vec<usize> = (0..rows.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let n = p[c];
            p[c] = r;
            c = n;
        }
        r
    }
    let mut owner: BTreeMap<&String, usize> = BTreeMap::new();
    for &i in &members {
        for v in rows[i].1.term().vars() {
            if local(v) && !absorber.contains_key(v) {
                match owner.get(v) {
                    Some(&j) => {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        parent[a] = b;
                    }
                    None => {
                        owner.insert(v, i);
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in &members {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    let mut parts = Vec::new();
    for group in groups.values() {
        let mut sum = side_sum(group.iter().map(|&i| (rows[i].1, rows[i].2)));
        let all_eq = group.iter().all(|&i| rows[i].1.rel() == Rel::Eq);
        for (v, &p) in &absorber {
            let alpha = sum.term.coeff(v);
            if alpha.is_zero() {
                continue;
            }
            let abs_atom = rows[p].1;
            let k = abs_atom.term().coeff(v);
            let share = -alpha / k;
            sum.term.add_scaled(abs_atom.term(), &share);
            sum.constant += abs_atom.constant() * &share;
        }
        if sum.term.vars().any(local) {
            return None;
        }
        parts.push(if all_eq {
            Formula::atom(sum.term, Rel::Eq, sum.constant)
        } else {
            sum_atom(&sum)
        });
    }
    Some(Formula::and(parts))
}

/// Interpolant of one leaf with `a_role` playing the A side.
pub fn theory_itp(
    cert: &FarkasCertificate,
    atoms: &BTreeMap<AtomId, TrackedAtom>,
    shared: &BTreeSet<String>,
    theory: &Theory,
    a_role: Side,
) -> Result<Formula> {
    let a_rows = rows_of(cert, atoms, a_role)?;
    let b_rows = rows_of(cert, atoms, a_role.other())?;
    let a_sum = side_sum(a_rows.iter().map(|(_, a, m)| (*a, *m)));
    let b_sum = side_sum(b_rows.iter().map(|(_, a, m)| (*a, *m)));
    // contradiction 0 <= total with total < 0 (or = 0 and strict)
    let total = &a_sum.constant + &b_sum.constant;
    let farkas = || sum_atom(&a_sum);
    let dual = || sum_atom(&b_sum).negate();
    let f = match theory {
        Theory::Farkas => farkas(),
        Theory::DualFarkas => dual(),
        Theory::Factor(q) if q.is_zero() => farkas(),
        Theory::Factor(q) if q.is_one() => dual(),
        Theory::Factor(q) => {
            let strict = total.is_zero() && a_sum.strict;
            let rel = if strict { Rel::Lt } else { Rel::Le };
            Formula::atom(a_sum.term.clone(), rel, &a_sum.constant - q * &total)
        }
        Theory::Decomposed => decompose(&a_rows, shared).unwrap_or_else(farkas),
        Theory::DualDecomposed => decompose(&b_rows, shared)
            .map(|f| f.negate())
            .unwrap_or_else(dual),
    };
    check_vocabulary(&f, shared)?;
    Ok(f)
}

/// Propositional combination of leaf interpolants over the proof tree.
pub fn combine(proof: &UnsatProof, algo: &ItpAlgo) -> Result<Formula> {
    let shared = proof.shared_vars();
    match algo.propositional {
        Propositional::McMillan => combine_node(proof, &proof.tree, &shared, &algo.theory, Side::A),
        Propositional::McMillanDual => {
            let swapped = combine_node(proof, &proof.tree, &shared, &algo.theory.dual(), Side::B)?;
            Ok(swapped.negate())
        }
    }
}

fn combine_node(
    proof: &UnsatProof,
    node: &ProofTree,
    shared: &BTreeSet<String>,
    theory: &Theory,
    a_role: Side,
) -> Result<Formula> {
    match node {
        ProofTree::Leaf { certificate, .. } => theory_itp(certificate, &proof.atoms, shared, theory, a_role),
        ProofTree::Split { side, children, .. } => {
            let parts = children
                .iter()
                .map(|c| combine_node(proof, c, shared, theory, a_role))
                .collect::<Result<Vec<_>>>()?;
            Ok(if *side == a_role {
                Formula::or(parts)
            } else {
                Formula::and(parts)
            })
        }
    }
}

/// An interpolant together with the statistics of the refutation behind it.
#[derive(Debug, Clone)]
pub struct Interpolant {
    pub formula: Formula,
    pub stats: SolveStats,
}

/// Refutes `a ∧ b` and interpolates the refutation.
pub fn interpolate(a: &Formula, b: &Formula, algo: &ItpAlgo, budget: &Budget) -> Result<Interpolant> {
    interpolate_system(&PartitionedSystem::new(a, b.clone()), algo, budget)
}

pub fn interpolate_system(sys: &PartitionedSystem, algo: &ItpAlgo, budget: &Budget) -> Result<Interpolant> {
    let result = solve(sys, budget)?;
    let proof = result.proof().ok_or(Error::Sat)?;
    Ok(Interpolant {
        formula: combine(proof, algo)?,
        stats: result.stats,
    })
}
