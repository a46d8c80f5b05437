//! Exact general simplex over delta-rationals with Farkas certificates.
//!
//! Every atom `t rel c` is turned into a bound on a single column: either an
//! original variable (when `t = k·v`) or a slack column standing for the
//! normalized term. Slack columns are shared by proportional terms. Bounds can
//! be pushed and popped, the tableau and assignment survive backtracking, and a
//! conflict is explained by the violated row, which yields the multipliers of
//! the certificate directly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::formula::{Assignment, Atom, LinearTerm, Rel};
use crate::rational::Rational;

pub type AtomId = usize;

/// `real + delta·ε` for a positive infinitesimal `ε`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeltaRational {
    pub real: Rational,
    pub delta: Rational,
}

impl DeltaRational {
    pub fn zero() -> Self {
        DeltaRational {
            real: Rational::zero(),
            delta: Rational::zero(),
        }
    }

    pub fn new(real: Rational, delta: Rational) -> Self {
        DeltaRational { real, delta }
    }

    pub fn from_real(real: Rational) -> Self {
        DeltaRational {
            real,
            delta: Rational::zero(),
        }
    }

    fn add_scaled(&mut self, other: &DeltaRational, k: &Rational) {
        self.real += &other.real * k;
        self.delta += &other.delta * k;
    }

    fn sub(&self, other: &DeltaRational) -> DeltaRational {
        DeltaRational {
            real: &self.real - &other.real,
            delta: &self.delta - &other.delta,
        }
    }

    fn scale(&self, k: &Rational) -> DeltaRational {
        DeltaRational {
            real: &self.real * k,
            delta: &self.delta * k,
        }
    }

    pub fn instantiate(&self, eps: &Rational) -> Rational {
        &self.real + &self.delta * eps
    }
}

impl fmt::Display for DeltaRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}δ", self.real, self.delta)
    }
}

/// Nonnegative combination of asserted atoms summing to `0 <= b` (or `0 < b`)
/// with `b` making the combination false.
///
/// Atoms are oriented as `t <= c` / `t < c` (for `>=`/`>` the negated form
/// `-t <= -c`). Equalities take a multiplier of either sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FarkasCertificate {
    pub multipliers: BTreeMap<AtomId, Rational>,
    pub constant: Rational,
    pub strict: bool,
}

/// Sign with which an atom enters the `≤` orientation of its certificate row.
pub(crate) fn orientation(rel: Rel) -> Rational {
    match rel {
        Rel::Ge | Rel::Gt => -Rational::one(),
        _ => Rational::one(),
    }
}

impl FarkasCertificate {
    /// Weighted sum of the oriented atoms: `(coefficients, constant, strict)`.
    pub fn combine<'a, F>(&self, lookup: F) -> Option<(LinearTerm, Rational, bool)>
    where
        F: Fn(AtomId) -> Option<&'a Atom>,
    {
        combine_atoms(self.multipliers.iter().map(|(id, m)| (lookup(*id), m)))
    }
}

pub(crate) fn combine_atoms<'a, 'b, I>(items: I) -> Option<(LinearTerm, Rational, bool)>
where
    I: IntoIterator<Item = (Option<&'a Atom>, &'b Rational)>,
{
    let mut term = LinearTerm::new();
    let mut constant = Rational::zero();
    let mut strict = false;
    for (atom, m) in items {
        let atom = atom?;
        if m.is_zero() {
            continue;
        }
        if atom.rel() != Rel::Eq && m.is_negative() {
            return None;
        }
        let k = m * orientation(atom.rel());
        term.add_scaled(atom.term(), &k);
        constant += atom.constant() * &k;
        strict |= atom.rel().is_strict();
    }
    Some((term, constant, strict))
}

/// Checks a certificate against the atoms it refers to by exact arithmetic.
pub fn certify(cert: &FarkasCertificate, atoms: &[(AtomId, Atom)]) -> bool {
    let table: HashMap<AtomId, &Atom> = atoms.iter().map(|(id, a)| (*id, a)).collect();
    let Some((term, constant, strict)) = cert.combine(|id| table.get(&id).copied()) else {
        return false;
    };
    if !term.is_empty() || constant != cert.constant || strict != cert.strict {
        return false;
    }
    constant.is_negative() || (constant.is_zero() && strict)
}

#[derive(Debug, Clone)]
pub enum LpResult {
    Feasible(Assignment),
    Infeasible(FarkasCertificate),
}

/// One-shot feasibility check of a conjunction of atoms.
pub fn lp_check(atoms: &[(AtomId, Atom)]) -> LpResult {
    let mut s = Simplex::new();
    for (id, a) in atoms {
        s.register(*id, a);
    }
    for (id, _) in atoms {
        if let Err(cert) = s.assert_atom(*id) {
            return LpResult::Infeasible(cert);
        }
    }
    match s.check() {
        Ok(()) => LpResult::Feasible(s.model(atoms.iter().map(|(_, a)| a))),
        Err(cert) => LpResult::Infeasible(cert),
    }
}

#[derive(Debug, Clone)]
struct Bound {
    value: DeltaRational,
    atom: AtomId,
}

/// How an atom constrains its column: `column = term / scale`.
#[derive(Debug, Clone)]
struct AtomBinding {
    atom: Atom,
    column: Option<usize>,
    scale: Rational,
}

#[derive(Debug, Clone)]
enum TrailEntry {
    Lower(usize, Option<Bound>),
    Upper(usize, Option<Bound>),
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SimplexStats {
    pub checks: u64,
    pub pivots: u64,
}

/// Incremental simplex over a growing set of registered atoms.
#[derive(Debug, Clone, Default)]
pub struct Simplex {
    var_index: HashMap<String, usize>,
    var_names: Vec<String>,
    slack_index: HashMap<LinearTerm, usize>,
    /// Dense rows over all columns, indexed by row number.
    rows: Vec<Vec<Rational>>,
    /// Basic column of each row.
    row_basic: Vec<usize>,
    /// Row of a basic column.
    basic_row: Vec<Option<usize>>,
    value: Vec<DeltaRational>,
    lower: Vec<Option<Bound>>,
    upper: Vec<Option<Bound>>,
    atoms: HashMap<AtomId, AtomBinding>,
    trail: Vec<TrailEntry>,
    marks: Vec<usize>,
    pub stats: SimplexStats,
}

impl Simplex {
    pub fn new() -> Self {
        Self::default()
    }

    fn columns(&self) -> usize {
        self.value.len()
    }

    fn new_column(&mut self) -> usize {
        let c = self.columns();
        self.value.push(DeltaRational::zero());
        self.lower.push(None);
        self.upper.push(None);
        self.basic_row.push(None);
        for row in &mut self.rows {
            row.push(Rational::zero());
        }
        c
    }

    fn var_column(&mut self, name: &str) -> usize {
        if let Some(&c) = self.var_index.get(name) {
            return c;
        }
        let c = self.new_column();
        self.var_index.insert(name.to_string(), c);
        self.var_names.push(name.to_string());
        c
    }

    /// Declares variables up front so column order does not depend on the
    /// order in which atoms arrive.
    pub fn declare_vars<'a, I: IntoIterator<Item = &'a String>>(&mut self, vars: I) {
        for v in vars {
            self.var_column(v);
        }
    }

    /// Registers an atom without asserting it.
    pub fn register(&mut self, id: AtomId, atom: &Atom) {
        if self.atoms.contains_key(&id) {
            return;
        }
        let term = atom.term();
        let binding = if term.is_empty() {
            AtomBinding {
                atom: atom.clone(),
                column: None,
                scale: Rational::one(),
            }
        } else if term.len() == 1 {
            let (v, k) = term.iter().next().unwrap();
            let (v, k) = (v.clone(), k.clone());
            let column = self.var_column(&v);
            AtomBinding {
                atom: atom.clone(),
                column: Some(column),
                scale: k,
            }
        } else {
            let lead = term.iter().next().unwrap().1.clone();
            let key = term.scaled(&lead.recip());
            let column = match self.slack_index.get(&key) {
                Some(&c) => c,
                None => self.new_slack(key),
            };
            AtomBinding {
                atom: atom.clone(),
                column: Some(column),
                scale: lead,
            }
        };
        self.atoms.insert(id, binding);
    }

    fn new_slack(&mut self, key: LinearTerm) -> usize {
        for v in key.vars() {
            self.var_column(v);
        }
        let slack = self.new_column();
        let mut row = vec![Rational::zero(); self.columns()];
        let mut value = DeltaRational::zero();
        for (v, c) in key.iter() {
            let col = self.var_index[v];
            match self.basic_row[col] {
                // substitute basic variables by their rows
                Some(r) => {
                    for (j, a) in self.rows[r].iter().enumerate() {
                        if !a.is_zero() {
                            row[j] += c * a;
                        }
                    }
                }
                None => row[col] += c,
            }
            value.add_scaled(&self.value[col], c);
        }
        let r = self.rows.len();
        self.rows.push(row);
        self.row_basic.push(slack);
        self.basic_row[slack] = Some(r);
        self.value[slack] = value;
        self.slack_index.insert(key, slack);
        slack
    }

    pub fn push(&mut self) {
        self.marks.push(self.trail.len());
    }

    pub fn pop(&mut self) {
        let mark = self.marks.pop().expect("pop without push");
        while self.trail.len() > mark {
            match self.trail.pop().unwrap() {
                TrailEntry::Lower(c, b) => self.lower[c] = b,
                TrailEntry::Upper(c, b) => self.upper[c] = b,
            }
        }
    }

    /// Tightens the bounds implied by a registered atom. A direct clash with an
    /// existing bound is reported immediately.
    pub fn assert_atom(&mut self, id: AtomId) -> Result<(), FarkasCertificate> {
        let binding = self.atoms.get(&id).expect("atom must be registered").clone();
        let Some(column) = binding.column else {
            return if binding.atom.constant_value() == Some(true) {
                Ok(())
            } else {
                let atom = &binding.atom;
                let m = if atom.rel() == Rel::Eq && atom.constant().is_positive() {
                    -Rational::one()
                } else {
                    Rational::one()
                };
                Err(self.certificate(&[(id, m)]))
            };
        };
        // column = term / scale, so `term rel c` becomes `column rel' c / scale`
        let bound = binding.atom.constant() / &binding.scale;
        let rel = if binding.scale.is_negative() {
            binding.atom.rel().mirrored()
        } else {
            binding.atom.rel()
        };
        let eps = |d: i64| DeltaRational::new(bound.clone(), Rational::from_integer(d.into()));
        match rel {
            Rel::Le => self.set_upper(column, eps(0), id)?,
            Rel::Lt => self.set_upper(column, eps(-1), id)?,
            Rel::Ge => self.set_lower(column, eps(0), id)?,
            Rel::Gt => self.set_lower(column, eps(1), id)?,
            Rel::Eq => {
                self.set_upper(column, eps(0), id)?;
                self.set_lower(column, eps(0), id)?;
            }
        }
        Ok(())
    }

    fn set_upper(&mut self, c: usize, v: DeltaRational, id: AtomId) -> Result<(), FarkasCertificate> {
        if let Some(u) = &self.upper[c] {
            if u.value <= v {
                return Ok(());
            }
        }
        if let Some(l) = &self.lower[c] {
            if v < l.value {
                let mut mult = Vec::new();
                self.bound_multipliers(true, &Rational::one(), id, &mut mult);
                self.bound_multipliers(false, &Rational::one(), l.atom, &mut mult);
                return Err(self.certificate(&mult));
            }
        }
        let old = self.upper[c].replace(Bound { value: v, atom: id });
        self.trail.push(TrailEntry::Upper(c, old));
        if self.basic_row[c].is_none() && self.value[c] > self.upper[c].as_ref().unwrap().value {
            let target = self.upper[c].as_ref().unwrap().value.clone();
            self.update_nonbasic(c, target);
        }
        Ok(())
    }

    fn set_lower(&mut self, c: usize, v: DeltaRational, id: AtomId) -> Result<(), FarkasCertificate> {
        if let Some(l) = &self.lower[c] {
            if l.value >= v {
                return Ok(());
            }
        }
        if let Some(u) = &self.upper[c] {
            if v > u.value {
                let mut mult = Vec::new();
                self.bound_multipliers(false, &Rational::one(), id, &mut mult);
                self.bound_multipliers(true, &Rational::one(), u.atom, &mut mult);
                return Err(self.certificate(&mult));
            }
        }
        let old = self.lower[c].replace(Bound { value: v, atom: id });
        self.trail.push(TrailEntry::Lower(c, old));
        if self.basic_row[c].is_none() && self.value[c] < self.lower[c].as_ref().unwrap().value {
            let target = self.lower[c].as_ref().unwrap().value.clone();
            self.update_nonbasic(c, target);
        }
        Ok(())
    }

    fn update_nonbasic(&mut self, c: usize, target: DeltaRational) {
        let diff = target.sub(&self.value[c]);
        for (r, row) in self.rows.iter().enumerate() {
            let a = &row[c];
            if !a.is_zero() {
                let b = self.row_basic[r];
                self.value[b].add_scaled(&diff, a);
            }
        }
        self.value[c] = target;
    }

    /// Multiplier contributed to the atom behind a bound. An upper bound
    /// `col <= u` weighted by `mu` adds `mu·(col - u) <= 0`; with
    /// `col = term / scale` this is `(mu / scale)·(term - c) <= 0`.
    fn bound_multipliers(
        &self,
        upper: bool,
        mu: &Rational,
        id: AtomId,
        out: &mut Vec<(AtomId, Rational)>,
    ) {
        let binding = &self.atoms[&id];
        let mut sigma = mu / &binding.scale;
        if !upper {
            sigma = -sigma;
        }
        // sigma weights `term - c <= 0`; orient it to the atom's own direction
        let m = sigma * orientation(binding.atom.rel());
        out.push((id, m));
    }

    fn certificate(&self, mult: &[(AtomId, Rational)]) -> FarkasCertificate {
        let mut multipliers: BTreeMap<AtomId, Rational> = BTreeMap::new();
        for (id, m) in mult {
            let e = multipliers.entry(*id).or_insert_with(Rational::zero);
            *e += m;
        }
        multipliers.retain(|_, m| !m.is_zero());
        let (_, constant, strict) = combine_atoms(
            multipliers
                .iter()
                .map(|(id, m)| (Some(&self.atoms[id].atom), m)),
        )
        .expect("multipliers are sign-correct by construction");
        FarkasCertificate {
            multipliers,
            constant,
            strict,
        }
    }

    fn violated(&self, c: usize) -> Option<bool> {
        if let Some(l) = &self.lower[c] {
            if self.value[c] < l.value {
                return Some(true);
            }
        }
        if let Some(u) = &self.upper[c] {
            if self.value[c] > u.value {
                return Some(false);
            }
        }
        None
    }

    fn can_increase(&self, c: usize) -> bool {
        self.upper[c].as_ref().is_none_or(|u| self.value[c] < u.value)
    }

    fn can_decrease(&self, c: usize) -> bool {
        self.lower[c].as_ref().is_none_or(|l| self.value[c] > l.value)
    }

    /// Restores feasibility of all bounds or explains why that is impossible.
    /// Bland's rule on column indices guarantees termination.
    pub fn check(&mut self) -> Result<(), FarkasCertificate> {
        self.stats.checks += 1;
        loop {
            let mut pick: Option<(usize, usize, bool)> = None;
            for (r, &b) in self.row_basic.iter().enumerate() {
                if let Some(below) = self.violated(b) {
                    if pick.is_none_or(|(_, pb, _)| b < pb) {
                        pick = Some((r, b, below));
                    }
                }
            }
            let Some((r, basic, below)) = pick else {
                return Ok(());
            };
            let row = &self.rows[r];
            let mut entering = None;
            for (j, a) in row.iter().enumerate() {
                if a.is_zero() || j == basic {
                    continue;
                }
                let ok = if below == a.is_positive() {
                    self.can_increase(j)
                } else {
                    self.can_decrease(j)
                };
                if ok {
                    entering = Some(j);
                    break;
                }
            }
            let Some(entering) = entering else {
                return Err(self.row_conflict(r, basic, below));
            };
            let target = if below {
                self.lower[basic].as_ref().unwrap().value.clone()
            } else {
                self.upper[basic].as_ref().unwrap().value.clone()
            };
            self.pivot_and_update(r, basic, entering, target);
        }
    }

    fn row_conflict(&self, r: usize, basic: usize, below: bool) -> FarkasCertificate {
        // basic = Σ a_j x_j; below its lower bound with every x_j stuck at the
        // bound that maximizes the row (or minimizes, symmetrically)
        let mut mult = Vec::new();
        let bb = if below { &self.lower[basic] } else { &self.upper[basic] };
        self.bound_multipliers(!below,
            &Rational::one(),
            bb.as_ref().unwrap().atom,
            &mut mult,
        );
        for (j, a) in self.rows[r].iter().enumerate() {
            if a.is_zero() || j == basic {
                continue;
            }
            let use_upper = below == a.is_positive();
            let b = if use_upper { &self.upper[j] } else { &self.lower[j] };
            self.bound_multipliers(use_upper, &a.abs(), b.as_ref().unwrap().atom, &mut mult);
        }
        self.certificate(&mult)
    }

    fn pivot_and_update(&mut self, r: usize, basic: usize, entering: usize, target: DeltaRational) {
        self.stats.pivots += 1;
        let a = self.rows[r][entering].clone();
        let theta = target.sub(&self.value[basic]).scale(&a.recip());
        self.value[basic] = target;
        self.value[entering].add_scaled(&theta, &Rational::one());
        for (k, row) in self.rows.iter().enumerate() {
            if k == r {
                continue;
            }
            let c = &row[entering];
            if !c.is_zero() {
                let b = self.row_basic[k];
                self.value[b].add_scaled(&theta, c);
            }
        }
        // rewrite row r as: entering = (basic - Σ_{j≠entering} a_j x_j) / a
        let inv = a.recip();
        let mut new_row: Vec<Rational> = self.rows[r]
            .iter()
            .map(|v| if v.is_zero() { Rational::zero() } else { -(v * &inv) })
            .collect();
        new_row[entering] = Rational::zero();
        new_row[basic] = inv;
        for k in 0..self.rows.len() {
            if k == r {
                continue;
            }
            let c = self.rows[k][entering].clone();
            if c.is_zero() {
                continue;
            }
            let row = &mut self.rows[k];
            row[entering] = Rational::zero();
            for (j, v) in new_row.iter().enumerate() {
                if !v.is_zero() {
                    row[j] += &c * v;
                }
            }
        }
        self.rows[r] = new_row;
        self.row_basic[r] = entering;
        self.basic_row[entering] = Some(r);
        self.basic_row[basic] = None;
    }

    /// Current delta-valued assignment of a named variable.
    pub fn delta_value(&self, var: &str) -> Option<&DeltaRational> {
        self.var_index.get(var).map(|&c| &self.value[c])
    }

    /// Delta-semantics truth of an atom under the current assignment.
    pub fn atom_holds(&self, atom: &Atom) -> Option<bool> {
        let mut acc = DeltaRational::zero();
        for (v, c) in atom.term().iter() {
            acc.add_scaled(self.delta_value(v)?, c);
        }
        let rhs = DeltaRational::from_real(atom.constant().clone());
        Some(match atom.rel() {
            Rel::Le => acc <= rhs,
            Rel::Lt => acc < rhs,
            Rel::Eq => acc == rhs,
            Rel::Ge => acc >= rhs,
            Rel::Gt => acc > rhs,
        })
    }

    /// Rational assignment for all original variables using the largest
    /// `δ = 1/2^k` (`k <= 64`) that satisfies every given atom.
    pub fn model<'a, I: IntoIterator<Item = &'a Atom>>(&self, atoms: I) -> Assignment {
        let atoms: Vec<&Atom> = atoms.into_iter().collect();
        self.model_where(|m| atoms.iter().all(|a| a.holds(m).unwrap_or(false)))
            .expect("a consistent finite system admits a positive delta")
    }

    /// Like [`Simplex::model`] with an arbitrary acceptance test.
    pub fn model_where<F: Fn(&Assignment) -> bool>(&self, accept: F) -> Option<Assignment> {
        let mut eps = Rational::one();
        let half = Rational::new(1.into(), 2.into());
        for _ in 0..=64 {
            let m: Assignment = self
                .var_names
                .iter()
                .map(|v| (v.clone(), self.value[self.var_index[v]].instantiate(&eps)))
                .collect();
            if accept(&m) {
                return Some(m);
            }
            eps *= &half;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{linear, Formula};
    use crate::rational::{int, ratio};

    fn atom(f: Formula) -> Atom {
        match f {
            Formula::Atom(a) => a,
            other => panic!("not an atom: {other}"),
        }
    }

    fn sys(fs: Vec<Formula>) -> Vec<(AtomId, Atom)> {
        fs.into_iter().map(atom).enumerate().collect()
    }

    #[test]
    fn textbook_farkas() {
        let atoms = sys(vec![
            linear(&[("x", 1)], Rel::Ge, int(1)),
            linear(&[("x", 1)], Rel::Le, int(0)),
        ]);
        let LpResult::Infeasible(cert) = lp_check(&atoms) else {
            panic!("expected infeasible")
        };
        assert_eq!(cert.multipliers, [(0, int(1)), (1, int(1))].into());
        assert_eq!(cert.constant, int(-1));
        assert!(!cert.strict);
        assert!(certify(&cert, &atoms));
        let mut negated = cert.clone();
        negated.multipliers.insert(0, int(-1));
        assert!(!certify(&negated, &atoms));
    }

    #[test]
    fn strict_model_instantiates_delta() {
        let atoms = sys(vec![linear(&[("x", 1)], Rel::Gt, int(0))]);
        let LpResult::Feasible(m) = lp_check(&atoms) else {
            panic!()
        };
        assert!(m["x"] > int(0));
        let atoms = sys(vec![
            linear(&[("x", 1)], Rel::Gt, int(0)),
            linear(&[("x", 1)], Rel::Lt, int(0)),
        ]);
        let LpResult::Infeasible(cert) = lp_check(&atoms) else {
            panic!()
        };
        assert!(cert.strict && cert.constant.is_zero());
        assert!(certify(&cert, &atoms));
    }

    #[test]
    fn certificate_over_feasible_system_fails() {
        let atoms = sys(vec![
            linear(&[("x", 1)], Rel::Ge, int(0)),
            linear(&[("x", 1)], Rel::Le, int(1)),
        ]);
        let cert = FarkasCertificate {
            multipliers: [(0, int(1)), (1, int(1))].into(),
            constant: int(1),
            strict: false,
        };
        assert!(!certify(&cert, &atoms));
        let forged = FarkasCertificate {
            constant: int(-1),
            ..cert
        };
        assert!(!certify(&forged, &atoms));
    }

    #[test]
    fn toy_rows_with_inactive_phases() {
        // y11 = 2x1 + x3, y12 = -x1 + x2 - x3, both ReLUs forced inactive,
        // and the sample (1,1,3)
        let atoms = sys(vec![
            linear(&[("y11", 1), ("x1", -2), ("x3", -1)], Rel::Eq, int(0)),
            linear(&[("y12", 1), ("x1", 1), ("x2", -1), ("x3", 1)], Rel::Eq, int(0)),
            linear(&[("y11", 1)], Rel::Le, int(0)),
            linear(&[("y12", 1)], Rel::Le, int(0)),
            linear(&[("x1", 1)], Rel::Eq, int(1)),
            linear(&[("x2", 1)], Rel::Eq, int(1)),
            linear(&[("x3", 1)], Rel::Eq, int(3)),
        ]);
        let LpResult::Infeasible(cert) = lp_check(&atoms) else {
            panic!()
        };
        assert!(certify(&cert, &atoms));
        assert!(cert.multipliers.contains_key(&2));
    }

    #[test]
    fn multi_row_system() {
        // x + y >= 2, x - y >= 0, x <= 1/2 is infeasible (needs x >= 1)
        let atoms = sys(vec![
            linear(&[("x", 1), ("y", 1)], Rel::Ge, int(2)),
            linear(&[("x", 1), ("y", -1)], Rel::Ge, int(0)),
            linear(&[("x", 1)], Rel::Le, ratio(1, 2)),
        ]);
        let LpResult::Infeasible(cert) = lp_check(&atoms) else {
            panic!()
        };
        assert!(certify(&cert, &atoms));
        let atoms = sys(vec![
            linear(&[("x", 1), ("y", 1)], Rel::Ge, int(2)),
            linear(&[("x", 1), ("y", -1)], Rel::Gt, int(0)),
            linear(&[("x", 1)], Rel::Le, int(3)),
        ]);
        let LpResult::Feasible(m) = lp_check(&atoms) else {
            panic!()
        };
        for (_, a) in &atoms {
            assert!(a.holds(&m).unwrap());
        }
    }

    #[test]
    fn push_pop_restores_bounds() {
        let a0 = atom(linear(&[("x", 1), ("y", 1)], Rel::Le, int(1)));
        let a1 = atom(linear(&[("x", 1)], Rel::Ge, int(1)));
        let a2 = atom(linear(&[("y", 1)], Rel::Ge, int(1)));
        let mut s = Simplex::new();
        for (i, a) in [&a0, &a1, &a2].into_iter().enumerate() {
            s.register(i, a);
        }
        s.assert_atom(0).unwrap();
        s.assert_atom(1).unwrap();
        assert!(s.check().is_ok());
        s.push();
        let conflict = s.assert_atom(2).and_then(|_| s.check());
        assert!(conflict.is_err());
        s.pop();
        assert!(s.check().is_ok());
    }

    #[test]
    fn constant_atoms() {
        let falsum = Atom::new(LinearTerm::new(), Rel::Le, int(-1));
        let atoms = vec![(7, falsum)];
        let LpResult::Infeasible(cert) = lp_check(&atoms) else {
            panic!()
        };
        assert!(certify(&cert, &atoms));
    }

    use proptest::prelude::*;

    fn arb_system() -> impl Strategy<Value = Vec<(AtomId, Atom)>> {
        let atom = (prop::collection::vec(-3i64..=3, 3), 0usize..5, -6i64..=6).prop_map(
            |(cs, r, k)| {
                let rel = [Rel::Le, Rel::Lt, Rel::Eq, Rel::Ge, Rel::Gt][r];
                let t = LinearTerm::from_pairs(
                    ["a", "b", "c"].iter().zip(cs).map(|(v, c)| (v.to_string(), int(c))),
                );
                Atom::new(t, rel, ratio(k, 2))
            },
        );
        prop::collection::vec(atom, 1..7).prop_map(|v| v.into_iter().enumerate().collect())
    }

    proptest! {
        #[test]
        fn results_are_sound(atoms in arb_system()) {
            match lp_check(&atoms) {
                LpResult::Feasible(mut m) => {
                    for v in ["a", "b", "c"] {
                        m.entry(v.to_string()).or_insert_with(Rational::zero);
                    }
                    for (_, a) in &atoms {
                        prop_assert!(a.holds(&m).unwrap(), "{} violated", a);
                    }
                }
                LpResult::Infeasible(cert) => prop_assert!(certify(&cert, &atoms)),
            }
        }
    }
}
