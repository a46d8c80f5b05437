//! Explanation strategies and their composition into pipelines.
//!
//! Every strategy maps a valid explanation (or a sample) to a valid
//! explanation: Generalize (`G`) interpolates, Reduce (`R`, `Rmin`) drops
//! conjuncts, Capture (`C`) interpolates over a subset of features, Abductive
//! (`A`) frees features one at a time and Interval (`I`) widens the remaining
//! equalities into boxes.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use num_traits::Zero;

use crate::encoder::{build_psi, encode_domains, encode_sample, partition_sample, PartitionedSystem};
use crate::error::{Error, Result};
use crate::formula::{Assignment, Atom, Formula, LinearTerm, Rel};
use crate::interpolation::{interpolate_system, ItpAlgo};
use crate::model::{Network, Point};
use crate::rational::{format_rational, int, parse_rational, Rational};
use crate::search::{solve, solve_with, Budget, SolveOptions, SolveResult};

/// One pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stage {
    Generalize(ItpAlgo),
    Reduce,
    ReduceMin,
    /// Interpolation preset and the 0-based indices of the selected features.
    Capture(ItpAlgo, Vec<usize>),
    Abductive,
    Interval(u32),
}

impl Stage {
    /// Stages that start from the sample rather than from an explanation.
    pub fn needs_sample(&self) -> bool {
        matches!(self, Stage::Capture(..) | Stage::Abductive)
    }

    pub fn descriptor(&self, names: &[String]) -> String {
        match self {
            Stage::Generalize(algo) => format!("G:{algo}"),
            Stage::Reduce => "R".into(),
            Stage::ReduceMin => "Rmin".into(),
            Stage::Capture(algo, feats) => {
                let feats: Vec<&str> = feats.iter().map(|&i| names[i].as_str()).collect();
                format!("C:{algo}:{}", feats.join(","))
            }
            Stage::Abductive => "A".into(),
            Stage::Interval(n) => format!("I:{n}"),
        }
    }
}

/// A parsed pipeline descriptor such as `A;I:8;G:weak`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipeline {
    stages: Vec<Stage>,
    names: Vec<String>,
}

impl Pipeline {
    /// Parses a `;`-separated descriptor. Features in `C:<preset>:<feats>` are
    /// given by name (`x2`) or 1-based index (`2`). `mid_factor` replaces the
    /// factor used by the `mid` preset.
    pub fn parse(text: &str, names: &[String], mid_factor: Option<&Rational>) -> Result<Pipeline> {
        let preset = |s: &str| -> Result<ItpAlgo> {
            match (s, mid_factor) {
                ("mid", Some(q)) => Ok(ItpAlgo::factor(q.clone())),
                _ => s.parse::<ItpAlgo>().map_err(|e| Error::Pipeline(e.to_string())),
            }
        };
        let mut stages = Vec::new();
        for (pos, raw) in text.split(';').enumerate() {
            let part = raw.trim();
            let (head, rest) = match part.split_once(':') {
                Some((h, r)) => (h, Some(r)),
                None => (part, None),
            };
            let stage = match (head, rest) {
                ("G", Some(p)) => Stage::Generalize(preset(p)?),
                ("R", None) => Stage::Reduce,
                ("Rmin", None) => Stage::ReduceMin,
                ("A", None) => Stage::Abductive,
                ("I", Some(n)) => Stage::Interval(
                    n.parse()
                        .map_err(|_| Error::Pipeline(format!("invalid attempt count {n:?}")))?,
                ),
                ("C", Some(r)) => {
                    let (p, feats) = r
                        .rsplit_once(':')
                        .ok_or_else(|| Error::Pipeline(format!("stage {part:?} lists no features")))?;
                    Stage::Capture(preset(p)?, parse_features(feats, names)?)
                }
                _ => return Err(Error::Pipeline(format!("unknown stage {part:?}"))),
            };
            if stage.needs_sample() && pos > 0 {
                return Err(Error::Pipeline(format!("stage {part:?} must come first")));
            }
            stages.push(stage);
        }
        Ok(Pipeline {
            stages,
            names: names.to_vec(),
        })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.stages.iter().map(|s| s.descriptor(&self.names)).collect();
        write!(f, "{}", parts.join(";"))
    }
}

fn parse_features(text: &str, names: &[String]) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for f in text.split(',').map(str::trim) {
        let idx = match names.iter().position(|n| n == f) {
            Some(i) => i,
            None => match f.parse::<usize>() {
                Ok(i) if (1..=names.len()).contains(&i) => i - 1,
                _ => return Err(Error::Pipeline(format!("unknown feature {f:?}"))),
            },
        };
        out.insert(idx);
    }
    if out.is_empty() {
        return Err(Error::Pipeline("capture needs at least one feature".into()));
    }
    Ok(out.into_iter().collect())
}

/// Cost of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMetrics {
    pub stage: String,
    pub elapsed: Duration,
    pub solver_calls: u64,
    pub timed_out: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub terms: usize,
    pub stages: Vec<StageMetrics>,
    /// Fraction of features not fixed by the explanation, once measured.
    pub relaxed: Option<Rational>,
}

impl Metrics {
    pub fn solver_calls(&self) -> u64 {
        self.stages.iter().map(|s| s.solver_calls).sum()
    }

    pub fn elapsed(&self) -> Duration {
        self.stages.iter().map(|s| s.elapsed).sum()
    }

    pub fn timed_out(&self) -> bool {
        self.stages.iter().any(|s| s.timed_out)
    }
}

/// A formula over the features that implies the target class.
///
/// Values are only created through [`Engine`], which refutes
/// `formula ∧ ψ(target_class)` before handing one out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Explanation {
    formula: Formula,
    target_class: usize,
    sample: Option<Point>,
    pipeline: Vec<Stage>,
    pub metrics: Metrics,
}

impl Explanation {
    pub fn formula(&self) -> &Formula {
        &self.formula
    }

    pub fn target_class(&self) -> usize {
        self.target_class
    }

    pub fn sample(&self) -> Option<&Point> {
        self.sample.as_ref()
    }

    pub fn pipeline(&self) -> &[Stage] {
        &self.pipeline
    }

    pub fn descriptor(&self, names: &[String]) -> String {
        let parts: Vec<String> = self.pipeline.iter().map(|s| s.descriptor(names)).collect();
        parts.join(";")
    }
}

/// Network, cached encodings and search settings shared by all strategies.
#[derive(Debug, Clone)]
pub struct Engine {
    net: Network,
    names: Vec<String>,
    psi: Vec<Formula>,
    domains: Formula,
    order: Vec<usize>,
    stage_timeout: Option<Duration>,
}

impl Engine {
    pub fn new(net: Network) -> Result<Engine> {
        let psi = (0..net.classes().len())
            .map(|c| build_psi(&net, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            names: net.feature_names(),
            domains: encode_domains(&net),
            order: (0..net.input_count()).collect(),
            psi,
            net,
            stage_timeout: None,
        })
    }

    /// Feature traversal order for `A`, `Rmin` and `I` (0-based indices).
    pub fn with_order(mut self, order: Vec<usize>) -> Result<Engine> {
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != (0..self.net.input_count()).collect::<Vec<_>>() {
            return Err(Error::Pipeline(format!(
                "order must be a permutation of the {} features",
                self.net.input_count()
            )));
        }
        self.order = order;
        Ok(self)
    }

    pub fn with_stage_timeout(mut self, timeout: Option<Duration>) -> Engine {
        self.stage_timeout = timeout;
        self
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `ψ(class)`: network, domains and "not `class`".
    pub fn psi(&self, class: usize) -> Result<&Formula> {
        self.psi
            .get(class)
            .ok_or_else(|| Error::UnknownClass(class.to_string()))
    }

    /// The domain box `ψ_D`.
    pub fn domains(&self) -> &Formula {
        &self.domains
    }

    fn stage_budget(&self, budget: &Budget) -> Budget {
        match self.stage_timeout {
            Some(d) => budget.min(Budget::from_duration(d)),
            None => *budget,
        }
    }

    /// Refutes `formula ∧ ψ(class)`; a satisfying point is reported in the error.
    pub fn certify(&self, formula: &Formula, class: usize, budget: &Budget) -> Result<()> {
        if let Some(v) = formula.vars().into_iter().find(|v| !self.names.contains(v)) {
            return Err(Error::Invalid(format!("{v} is not a feature variable")));
        }
        let sys = PartitionedSystem::from_conjuncts(Vec::new(), Formula::and([formula.clone(), self.psi(class)?.clone()]));
        match solve(&sys, budget)?.model() {
            None => Ok(()),
            Some(m) => Err(Error::Invalid(format!(
                "counterexample {}",
                self.describe_point(&self.point_of(m))
            ))),
        }
    }

    /// The feature part of a model, unmentioned features read as 0.
    pub fn point_of(&self, m: &Assignment) -> Point {
        Point::new(
            self.names
                .iter()
                .map(|n| m.get(n).cloned().unwrap_or_else(Rational::zero))
                .collect(),
        )
    }

    pub fn describe_point(&self, p: &Point) -> String {
        let parts: Vec<String> = p.values().iter().map(format_rational).collect();
        format!("({})", parts.join(", "))
    }

    /// Certifies an arbitrary formula as an explanation of `class`.
    pub fn explanation(
        &self,
        formula: Formula,
        class: usize,
        sample: Option<Point>,
        budget: &Budget,
    ) -> Result<Explanation> {
        self.certify(&formula, class, budget)?;
        Ok(Explanation {
            metrics: Metrics {
                terms: formula.count_terms(),
                ..Metrics::default()
            },
            formula,
            target_class: class,
            sample,
            pipeline: Vec::new(),
        })
    }

    /// The sample formula `φ_s` as an explanation of the sample's class.
    pub fn sample_explanation(&self, s: &Point, budget: &Budget) -> Result<Explanation> {
        let class = self.net.classify(s)?;
        let formula = encode_sample(s, &self.names)?;
        self.explanation(formula, class, Some(s.clone()), budget)
    }

    fn check_class(&self, s: &Point, class: usize) -> Result<()> {
        let actual = self.net.classify(s)?;
        if actual != class {
            return Err(Error::Misclassified {
                expected: self.net.class_name(class).to_string(),
                actual: self.net.class_name(actual).to_string(),
            });
        }
        Ok(())
    }

    fn refuted(&self, conjuncts: Vec<Formula>, class: usize, budget: &Budget) -> Result<SolveResult> {
        let sys = PartitionedSystem::from_conjuncts(conjuncts, self.psi(class)?.clone());
        solve(&sys, budget)
    }

    /// `G`: interpolates `start ∧ ψ`.
    pub fn generalize(&self, start: &Explanation, algo: &ItpAlgo, budget: &Budget) -> Result<Explanation> {
        let stage = Stage::Generalize(algo.clone());
        self.staged(Some(start), stage, start.target_class, start.sample.clone(), budget, |b| {
            let sys = PartitionedSystem::for_class(&self.net, &start.formula, start.target_class)?;
            Ok((interpolate_system(&sys, algo, b)?.formula, 1))
        })
    }

    /// `R`: keeps the conjuncts used by one refutation.
    pub fn reduce(&self, e: &Explanation, budget: &Budget) -> Result<Explanation> {
        self.staged(Some(e), Stage::Reduce, e.target_class, e.sample.clone(), budget, |b| {
            let conjuncts = e.formula.conjuncts();
            let sys = PartitionedSystem::from_conjuncts(conjuncts.clone(), self.psi(e.target_class)?.clone());
            let options = SolveOptions {
                minimize_a_support: true,
            };
            let result = solve_with(&sys, b, options)?;
            let proof = result.proof().ok_or(Error::Sat)?;
            let core = proof.core_labels();
            let kept = conjuncts
                .into_iter()
                .enumerate()
                .filter(|(i, _)| core.contains(i))
                .map(|(_, c)| c);
            Ok((Formula::and(kept), 1))
        })
    }

    /// `Rmin`: deletion loop over the conjuncts in feature order.
    pub fn reduce_min(&self, e: &Explanation, budget: &Budget) -> Result<Explanation> {
        self.staged(Some(e), Stage::ReduceMin, e.target_class, e.sample.clone(), budget, |b| {
            let conjuncts = self.ordered(e.formula.conjuncts());
            self.deletion_loop(conjuncts, e.target_class, b)
        })
    }

    /// `A`: frees the sample's features one at a time.
    pub fn abductive(&self, s: &Point, class: usize, budget: &Budget) -> Result<Explanation> {
        self.check_class(s, class)?;
        self.staged(None, Stage::Abductive, class, Some(s.clone()), budget, |b| {
            let sample = encode_sample(s, &self.names)?;
            self.deletion_loop(self.ordered(sample.conjuncts()), class, b)
        })
    }

    /// Drops each conjunct in turn, keeping the drop when the rest still
    /// refutes `ψ`. One solve per conjunct.
    fn deletion_loop(&self, mut kept: Vec<Formula>, class: usize, budget: &Budget) -> Result<(Formula, u64)> {
        let mut calls = 0;
        let mut i = 0;
        let total = kept.len();
        for _ in 0..total {
            let mut trial = kept.clone();
            trial.remove(i);
            calls += 1;
            if self.refuted(trial.clone(), class, budget)?.is_unsat() {
                kept = trial;
            } else {
                i += 1;
            }
        }
        Ok((Formula::and(kept), calls))
    }

    /// Stable sort of conjuncts by the traversal rank of their first feature.
    fn ordered(&self, conjuncts: Vec<Formula>) -> Vec<Formula> {
        let rank = |c: &Formula| {
            c.vars()
                .iter()
                .filter_map(|v| self.names.iter().position(|n| n == v))
                .map(|i| self.order.iter().position(|&o| o == i).unwrap_or(usize::MAX))
                .min()
                .unwrap_or(usize::MAX)
        };
        let mut keyed: Vec<(usize, Formula)> = conjuncts.into_iter().map(|c| (rank(&c), c)).collect();
        keyed.sort_by_key(|(r, _)| *r);
        keyed.into_iter().map(|(_, c)| c).collect()
    }

    /// `C`: interpolates the selected features of the sample against the
    /// fixed rest and `ψ`, then conjoins the fixed rest.
    pub fn capture(
        &self,
        s: &Point,
        class: usize,
        selected: &[usize],
        algo: &ItpAlgo,
        budget: &Budget,
    ) -> Result<Explanation> {
        self.check_class(s, class)?;
        let stage = Stage::Capture(algo.clone(), selected.to_vec());
        self.staged(None, stage, class, Some(s.clone()), budget, |b| {
            let sample = encode_sample(s, &self.names)?;
            let chosen: BTreeSet<String> = selected
                .iter()
                .map(|&i| {
                    self.names
                        .get(i)
                        .cloned()
                        .ok_or_else(|| Error::Partition(format!("feature index {i} out of range")))
                })
                .collect::<Result<_>>()?;
            let (phi_a, phi_b) = partition_sample(&sample, &chosen, &self.names)?;
            let b_part = Formula::and([phi_b.clone(), self.psi(class)?.clone()]);
            let sys = PartitionedSystem::new(&phi_a, b_part);
            let itp = interpolate_system(&sys, algo, b)?.formula;
            Ok((Formula::and([itp, phi_b]), 1))
        })
    }

    /// `I`: widens each `x_i = v` into `lo ≤ x_i ≤ hi` by binary search
    /// towards the domain bounds, lower bound first.
    pub fn interval(&self, e: &Explanation, attempts: u32, budget: &Budget) -> Result<Explanation> {
        self.staged(Some(e), Stage::Interval(attempts), e.target_class, e.sample.clone(), budget, |b| {
            let mut boxes: Vec<Option<(Rational, Rational)>> = vec![None; self.names.len()];
            for c in e.formula.conjuncts() {
                let (i, v) = self.feature_equality(&c).ok_or_else(|| {
                    Error::Pipeline(format!("interval expects feature equalities, found {c}"))
                })?;
                boxes[i] = Some((v.clone(), v));
            }
            let mut calls = 0;
            for &i in &self.order {
                if boxes[i].is_none() {
                    continue;
                }
                let domain = &self.net.domains()[i];
                for lower in [true, false] {
                    let mut limit = if lower { domain.lower.clone() } else { domain.upper.clone() };
                    for _ in 0..attempts {
                        let (lo, hi) = boxes[i].clone().unwrap();
                        let valid = if lower { lo.clone() } else { hi.clone() };
                        if valid == limit {
                            break;
                        }
                        let mid = (&valid + &limit) / int(2);
                        let mut trial = boxes.clone();
                        trial[i] = Some(if lower { (mid.clone(), hi) } else { (lo, mid.clone()) });
                        calls += 1;
                        if self.refuted(self.box_conjuncts(&trial), e.target_class, b)?.is_unsat() {
                            boxes = trial;
                        } else {
                            limit = mid;
                        }
                    }
                }
            }
            Ok((Formula::and(self.box_conjuncts(&boxes)), calls))
        })
    }

    fn feature_equality(&self, c: &Formula) -> Option<(usize, Rational)> {
        let Formula::Atom(a) = c else { return None };
        if a.rel() != Rel::Eq || a.term().len() != 1 {
            return None;
        }
        let (v, k) = a.term().iter().next()?;
        let i = self.names.iter().position(|n| n == v)?;
        Some((i, a.constant() / k))
    }

    fn box_conjuncts(&self, boxes: &[Option<(Rational, Rational)>]) -> Vec<Formula> {
        let mut out = Vec::new();
        for (i, b) in boxes.iter().enumerate() {
            if let Some((lo, hi)) = b {
                let x = &self.names[i];
                out.push(Formula::Atom(Atom::new(LinearTerm::var(x), Rel::Ge, lo.clone())));
                out.push(Formula::Atom(Atom::new(LinearTerm::var(x), Rel::Le, hi.clone())));
            }
        }
        out
    }

    /// Runs one stage body, certifies its result and records metrics. A
    /// timeout hands back the input explanation with the stage flagged.
    fn staged<F>(
        &self,
        input: Option<&Explanation>,
        stage: Stage,
        class: usize,
        sample: Option<Point>,
        budget: &Budget,
        body: F,
    ) -> Result<Explanation>
    where
        F: FnOnce(&Budget) -> Result<(Formula, u64)>,
    {
        let b = self.stage_budget(budget);
        let started = Instant::now();
        let outcome = body(&b).and_then(|(f, calls)| {
            self.certify(&f, class, &b)?;
            Ok((f, calls))
        });
        let descriptor = stage.descriptor(&self.names);
        let (formula, calls, timed_out) = match outcome {
            Ok((f, calls)) => (f, calls, false),
            Err(Error::Timeout) => match input {
                Some(e) => (e.formula.clone(), 0, true),
                None => return Err(Error::Timeout),
            },
            Err(e) => return Err(e),
        };
        let mut pipeline = input.map(|e| e.pipeline.clone()).unwrap_or_default();
        pipeline.push(stage);
        let mut stages = input.map(|e| e.metrics.stages.clone()).unwrap_or_default();
        stages.push(StageMetrics {
            stage: descriptor,
            elapsed: started.elapsed(),
            solver_calls: calls,
            timed_out,
        });
        Ok(Explanation {
            metrics: Metrics {
                terms: formula.count_terms(),
                stages,
                relaxed: None,
            },
            formula,
            target_class: class,
            sample,
            pipeline,
        })
    }

    /// Applies `pipeline` to sample `s`, explaining its predicted class.
    /// Stages other than `A` and `C` start from `φ_s`.
    pub fn run(&self, pipeline: &Pipeline, s: &Point, budget: &Budget) -> Result<Explanation> {
        let class = self.net.classify(s)?;
        let (first, rest) = pipeline
            .stages
            .split_first()
            .ok_or_else(|| Error::Pipeline("empty pipeline".into()))?;
        let start = match first {
            Stage::Abductive => self.abductive(s, class, budget)?,
            Stage::Capture(algo, feats) => self.capture(s, class, feats, algo, budget)?,
            other => {
                let e = self.sample_explanation(s, budget)?;
                self.apply(other, &e, budget)?
            }
        };
        rest.iter().try_fold(start, |e, stage| self.apply(stage, &e, budget))
    }

    /// Applies `pipeline` to an existing explanation.
    pub fn run_from(&self, pipeline: &Pipeline, start: Explanation, budget: &Budget) -> Result<Explanation> {
        pipeline
            .stages
            .iter()
            .try_fold(start, |e, stage| self.apply(stage, &e, budget))
    }

    fn apply(&self, stage: &Stage, e: &Explanation, budget: &Budget) -> Result<Explanation> {
        match stage {
            Stage::Generalize(algo) => self.generalize(e, algo, budget),
            Stage::Reduce => self.reduce(e, budget),
            Stage::ReduceMin => self.reduce_min(e, budget),
            Stage::Interval(n) => self.interval(e, *n, budget),
            Stage::Abductive | Stage::Capture(..) => {
                let s = e
                    .sample
                    .as_ref()
                    .ok_or_else(|| Error::Pipeline("stage needs an origin sample".into()))?;
                match stage {
                    Stage::Abductive => self.abductive(s, e.target_class, budget),
                    Stage::Capture(algo, feats) => self.capture(s, e.target_class, feats, algo, budget),
                    _ => unreachable!(),
                }
            }
        }
    }
}

/// Parses a comma-separated traversal order of feature names or 1-based indices.
pub fn parse_order(text: &str, names: &[String]) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .map(|f| match names.iter().position(|n| n == f) {
            Some(i) => Ok(i),
            None => match f.parse::<usize>() {
                Ok(i) if (1..=names.len()).contains(&i) => Ok(i - 1),
                _ => Err(Error::Pipeline(format!("unknown feature {f:?} in order"))),
            },
        })
        .collect()
}

/// Parses the `--preset-factor` value.
pub fn parse_factor(text: &str) -> Result<Rational> {
    let q = parse_rational(text)?;
    if q < Rational::zero() || q > int(1) {
        return Err(Error::Pipeline(format!("factor {text} outside [0, 1]")));
    }
    Ok(q)
}
