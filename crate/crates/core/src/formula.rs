//! Quantifier-free linear real arithmetic formulas over named variables.
//!
//! Atoms are kept in a canonical form: variables sorted by name and the
//! coefficients scaled to coprime integers with a positive leading
//! coefficient (mirroring the relation when the scale is negative). The
//! constant stays rational, so `2x >= 1` is stored as is while `-4x <= -2`
//! becomes the same atom. Formulas built through [`Formula::and`] / [`Formula::or`] are flat,
//! contain no `True`/`False` below the root, and every And/Or has at least two
//! children.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::model::Point;
use crate::rational::{format_rational, parse_rational, Rational};

pub type Assignment = BTreeMap<String, Rational>;

/// Sparse linear combination of variables; zero coefficients are never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearTerm(BTreeMap<String, Rational>);

impl LinearTerm {
    pub fn new() -> Self {
        LinearTerm(BTreeMap::new())
    }

    pub fn var(name: impl Into<String>) -> Self {
        Self::from_pairs([(name.into(), Rational::one())])
    }

    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Rational)>,
        S: Into<String>,
    {
        let mut t = LinearTerm::new();
        for (v, c) in pairs {
            t.add(v.into(), &c);
        }
        t
    }

    pub fn add(&mut self, var: String, coeff: &Rational) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.0.entry(var);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    /// `self += k * other`
    pub fn add_scaled(&mut self, other: &LinearTerm, k: &Rational) {
        if k.is_zero() {
            return;
        }
        for (v, c) in &other.0 {
            self.add(v.clone(), &(c * k));
        }
    }

    pub fn scaled(&self, k: &Rational) -> LinearTerm {
        let mut t = LinearTerm::new();
        t.add_scaled(self, k);
        t
    }

    pub fn coeff(&self, var: &str) -> Rational {
        self.0.get(var).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Rational)> {
        self.0.iter()
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<Rational> {
        let mut acc = Rational::zero();
        for (v, c) in &self.0 {
            let x = assignment
                .get(v)
                .ok_or_else(|| Error::UnknownVariable(v.clone()))?;
            acc += c * x;
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Le,
    Lt,
    Eq,
    Ge,
    Gt,
}

impl Rel {
    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            Rel::Le => lhs <= rhs,
            Rel::Lt => lhs < rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
        }
    }

    /// Relation obtained after multiplying both sides by a negative number.
    pub fn mirrored(self) -> Rel {
        match self {
            Rel::Le => Rel::Ge,
            Rel::Lt => Rel::Gt,
            Rel::Eq => Rel::Eq,
            Rel::Ge => Rel::Le,
            Rel::Gt => Rel::Lt,
        }
    }

    pub fn is_strict(self) -> bool {
        matches!(self, Rel::Lt | Rel::Gt)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Le => "<=",
            Rel::Lt => "<",
            Rel::Eq => "=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    fn from_symbol(s: &str) -> Option<Rel> {
        Some(match s {
            "<=" => Rel::Le,
            "<" => Rel::Lt,
            "=" => Rel::Eq,
            ">=" => Rel::Ge,
            ">" => Rel::Gt,
            _ => return None,
        })
    }
}

/// `term rel constant` in canonical scale.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    term: LinearTerm,
    rel: Rel,
    constant: Rational,
}

impl Atom {
    pub fn new(term: LinearTerm, rel: Rel, constant: Rational) -> Self {
        let mut factor = primitive_factor(&term);
        // the first variable always gets a positive coefficient
        let rel = match term.iter().next() {
            Some((_, lead)) if lead.is_negative() => {
                factor = -factor;
                rel.mirrored()
            }
            _ => rel,
        };
        if factor.is_one() {
            return Atom {
                term,
                rel,
                constant,
            };
        }
        Atom {
            term: term.scaled(&factor),
            rel,
            constant: constant * factor,
        }
    }

    pub fn term(&self) -> &LinearTerm {
        &self.term
    }

    pub fn rel(&self) -> Rel {
        self.rel
    }

    pub fn constant(&self) -> &Rational {
        &self.constant
    }

    /// Truth value of an atom without variables.
    pub fn constant_value(&self) -> Option<bool> {
        self.term
            .is_empty()
            .then(|| self.rel.holds(&Rational::zero(), &self.constant))
    }

    pub fn holds(&self, assignment: &Assignment) -> Result<bool> {
        Ok(self.rel.holds(&self.term.eval(assignment)?, &self.constant))
    }

    pub fn negate(&self) -> Formula {
        let flip = |rel| Formula::Atom(Atom::new(self.term.clone(), rel, self.constant.clone()));
        match self.rel {
            Rel::Le => flip(Rel::Gt),
            Rel::Lt => flip(Rel::Ge),
            Rel::Ge => flip(Rel::Lt),
            Rel::Gt => flip(Rel::Le),
            Rel::Eq => Formula::Or(vec![flip(Rel::Lt), flip(Rel::Gt)]),
        }
    }

    fn substitute(&self, assignment: &Assignment) -> Formula {
        let mut term = LinearTerm::new();
        let mut constant = self.constant.clone();
        for (v, c) in self.term.iter() {
            match assignment.get(v) {
                Some(x) => constant -= c * x,
                None => term.add(v.clone(), c),
            }
        }
        Formula::atom(term, self.rel, constant)
    }
}

/// Positive factor turning the coefficients into coprime integers.
fn primitive_factor(term: &LinearTerm) -> Rational {
    let mut lcm = BigInt::one();
    for (_, c) in term.iter() {
        lcm = lcm.lcm(c.denom());
    }
    let mut gcd = BigInt::zero();
    for (_, c) in term.iter() {
        let scaled = c.numer() * (&lcm / c.denom());
        gcd = gcd.gcd(&scaled);
    }
    if gcd.is_zero() {
        return Rational::one();
    }
    Rational::new(lcm, gcd.abs())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    And(Vec<Formula>),
    Or(Vec<Formula>),
}

impl Formula {
    /// Builds an atom, folding variable-free atoms to `True`/`False`.
    pub fn atom(term: LinearTerm, rel: Rel, constant: Rational) -> Formula {
        let a = Atom::new(term, rel, constant);
        match a.constant_value() {
            Some(true) => Formula::True,
            Some(false) => Formula::False,
            None => Formula::Atom(a),
        }
    }

    /// `var rel constant`
    pub fn var_cmp(var: &str, rel: Rel, constant: Rational) -> Formula {
        Formula::atom(LinearTerm::var(var), rel, constant)
    }

    pub fn and<I: IntoIterator<Item = Formula>>(children: I) -> Formula {
        let mut out: Vec<Formula> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in children {
            match c {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => {
                    for g in inner {
                        if seen.insert(g.clone()) {
                            out.push(g);
                        }
                    }
                }
                other => {
                    if seen.insert(other.clone()) {
                        out.push(other);
                    }
                }
            }
        }
        drop_weaker_bounds(&mut out);
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or<I: IntoIterator<Item = Formula>>(children: I) -> Formula {
        let mut out: Vec<Formula> = Vec::new();
        let mut seen = BTreeSet::new();
        for c in children {
            match c {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => {
                    for g in inner {
                        if seen.insert(g.clone()) {
                            out.push(g);
                        }
                    }
                }
                other => {
                    if seen.insert(other.clone()) {
                        out.push(other);
                    }
                }
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    /// Top-level conjuncts; `True` has none.
    pub fn conjuncts(&self) -> Vec<Formula> {
        match self {
            Formula::True => Vec::new(),
            Formula::And(cs) => cs.clone(),
            other => vec![other.clone()],
        }
    }

    pub fn eval(&self, assignment: &Assignment) -> Result<bool> {
        Ok(match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.holds(assignment)?,
            Formula::And(cs) => {
                for c in cs {
                    if !c.eval(assignment)? {
                        return Ok(false);
                    }
                }
                true
            }
            Formula::Or(cs) => {
                for c in cs {
                    if c.eval(assignment)? {
                        return Ok(true);
                    }
                }
                false
            }
        })
    }

    /// Evaluates at a point whose coordinates are named by `names`.
    pub fn eval_point(&self, p: &Point, names: &[String]) -> Result<bool> {
        if p.len() != names.len() {
            return Err(Error::Length {
                expected: names.len(),
                got: p.len(),
            });
        }
        self.eval(&point_assignment(p, names))
    }

    pub fn substitute(&self, assignment: &Assignment) -> Formula {
        if assignment.is_empty() {
            return self.clone();
        }
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(a) => a.substitute(assignment),
            Formula::And(cs) => Formula::and(cs.iter().map(|c| c.substitute(assignment))),
            Formula::Or(cs) => Formula::or(cs.iter().map(|c| c.substitute(assignment))),
        }
    }

    pub fn negate(&self) -> Formula {
        match self {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Atom(a) => a.negate(),
            Formula::And(cs) => Formula::or(cs.iter().map(Formula::negate)),
            Formula::Or(cs) => Formula::and(cs.iter().map(Formula::negate)),
        }
    }

    /// Number of atom leaves.
    pub fn count_terms(&self) -> usize {
        match self {
            Formula::True | Formula::False => 0,
            Formula::Atom(_) => 1,
            Formula::And(cs) | Formula::Or(cs) => cs.iter().map(Formula::count_terms).sum(),
        }
    }

    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => out.extend(a.term.vars().cloned()),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_vars(out)),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a Atom>) {
        match self {
            Formula::Atom(a) => out.push(a),
            Formula::And(cs) | Formula::Or(cs) => cs.iter().for_each(|c| c.collect_atoms(out)),
            _ => {}
        }
    }

    pub fn is_conjunction_of_atoms(&self) -> bool {
        self.conjuncts().iter().all(|c| matches!(c, Formula::Atom(_)))
    }

    pub fn parse(text: &str) -> Result<Formula> {
        let mut p = Parser::new(text);
        let f = p.formula()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(f)
    }
}

/// Among conjoined atoms over the same term, keeps only the tightest upper
/// and the tightest lower bound.
fn drop_weaker_bounds(conjuncts: &mut Vec<Formula>) {
    let upper = |r: Rel| matches!(r, Rel::Le | Rel::Lt);
    let tighter = |a: &Atom, b: &Atom| -> bool {
        let by_constant = if upper(a.rel) { a.constant < b.constant } else { a.constant > b.constant };
        by_constant || (a.constant == b.constant && a.rel.is_strict() && !b.rel.is_strict())
    };
    let mut best: BTreeMap<(&LinearTerm, bool), usize> = BTreeMap::new();
    for (i, c) in conjuncts.iter().enumerate() {
        if let Formula::Atom(a) = c {
            if a.rel == Rel::Eq {
                continue;
            }
            let slot = best.entry((&a.term, upper(a.rel))).or_insert(i);
            if let Formula::Atom(held) = &conjuncts[*slot] {
                if tighter(a, held) {
                    *slot = i;
                }
            }
        }
    }
    let keep: BTreeSet<usize> = best.values().copied().collect();
    let mut i = 0;
    conjuncts.retain(|c| {
        let kept = !matches!(c, Formula::Atom(a) if a.rel != Rel::Eq) || keep.contains(&i);
        i += 1;
        kept
    });
}

pub fn point_assignment(p: &Point, names: &[String]) -> Assignment {
    names.iter().cloned().zip(p.values().iter().cloned()).collect()
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} (+", self.rel.symbol())?;
        for (v, c) in self.term.iter() {
            if c.is_one() {
                write!(f, " {v}")?;
            } else {
                write!(f, " (* {} {v})", format_rational(c))?;
            }
        }
        write!(f, ") {})", format_rational(&self.constant))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::And(cs) | Formula::Or(cs) => {
                let op = if matches!(self, Formula::And(_)) { "and" } else { "or" };
                write!(f, "({op}")?;
                for c in cs {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Formula> {
        Formula::parse(s)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, pos: 0 }
    }

    fn error(&self, message: &str) -> Error {
        Error::Syntax {
            pos: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, ch: char) -> Result<()> {
        match self.peek() {
            Some(c) if c == ch => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error(&format!("expected '{ch}'"))),
            None => Err(self.error(&format!("unexpected end of input, expected '{ch}'"))),
        }
    }

    fn symbol(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            return Err(if self.pos >= self.src.len() {
                self.error("unexpected end of input")
            } else {
                self.error("expected a symbol")
            });
        }
        Ok(&self.src[start..self.pos])
    }

    fn number(&mut self) -> Result<Rational> {
        let start = self.pos;
        let s = self.symbol()?;
        parse_rational(s).map_err(|_| Error::Syntax {
            pos: start,
            message: format!("invalid rational {s:?}"),
        })
    }

    fn formula(&mut self) -> Result<Formula> {
        match self.peek() {
            Some('(') => {}
            Some(_) => {
                let start = self.pos;
                return match self.symbol()? {
                    "true" => Ok(Formula::True),
                    "false" => Ok(Formula::False),
                    other => Err(Error::Syntax {
                        pos: start,
                        message: format!("unexpected symbol {other:?}"),
                    }),
                };
            }
            None => return Err(self.error("unexpected end of input")),
        }
        self.expect('(')?;
        let head_pos = self.pos;
        let head = self.symbol()?;
        let f = match head {
            "and" | "or" => {
                let mut children = Vec::new();
                while self.peek() != Some(')') {
                    if self.peek().is_none() {
                        return Err(self.error("unexpected end of input, expected ')'"));
                    }
                    children.push(self.formula()?);
                }
                if head == "and" {
                    Formula::and(children)
                } else {
                    Formula::or(children)
                }
            }
            rel => {
                let rel = Rel::from_symbol(rel).ok_or_else(|| Error::Syntax {
                    pos: head_pos,
                    message: format!("unknown operator {rel:?}"),
                })?;
                let term = self.sum()?;
                let constant = self.number()?;
                Formula::atom(term, rel, constant)
            }
        };
        self.expect(')')?;
        Ok(f)
    }

    fn sum(&mut self) -> Result<LinearTerm> {
        let mut term = LinearTerm::new();
        if self.peek() != Some('(') {
            let v = self.symbol()?;
            term.add(v.to_string(), &Rational::one());
            return Ok(term);
        }
        let save = self.pos;
        self.expect('(')?;
        match self.symbol()? {
            "+" => {
                while self.peek() != Some(')') {
                    if self.peek().is_none() {
                        return Err(self.error("unexpected end of input, expected ')'"));
                    }
                    let (v, c) = self.item()?;
                    term.add(v, &c);
                }
                self.expect(')')?;
            }
            "*" => {
                self.pos = save;
                let (v, c) = self.item()?;
                term.add(v, &c);
            }
            other => return Err(self.error(&format!("expected '+' or '*', found {other:?}"))),
        }
        Ok(term)
    }

    fn item(&mut self) -> Result<(String, Rational)> {
        if self.peek() == Some('(') {
            self.expect('(')?;
            let op = self.symbol()?;
            if op != "*" {
                return Err(self.error("expected '*'"));
            }
            let c = self.number()?;
            let v = self.symbol()?.to_string();
            self.expect(')')?;
            Ok((v, c))
        } else {
            Ok((self.symbol()?.to_string(), Rational::one()))
        }
    }
}

/// Builds `sum_i coeff_i * var_i rel constant` from integer data; handy in tests.
pub fn linear(pairs: &[(&str, i64)], rel: Rel, constant: Rational) -> Formula {
    Formula::atom(
        LinearTerm::from_pairs(pairs.iter().map(|(v, c)| (v.to_string(), crate::rational::int(*c)))),
        rel,
        constant,
    )
}
