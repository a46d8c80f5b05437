//! Comparing explanations and measuring their impact spaces.

use std::fmt;

use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::formula::{point_assignment, Assignment, Formula, Rel};
use crate::model::{Domain, Point};
use crate::rational::{format_rational, int, to_f64, Rational};
use crate::search::{check_sat, Budget};
use crate::strategies::Explanation;

/// Set relation between two impact spaces (inside the domain box).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Superset,
    Equal,
    Subset,
    Incomparable,
}

impl Relation {
    pub const ALL: [Relation; 4] = [Relation::Superset, Relation::Equal, Relation::Subset, Relation::Incomparable];

    pub fn inverse(self) -> Relation {
        match self {
            Relation::Subset => Relation::Superset,
            Relation::Superset => Relation::Subset,
            other => other,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Superset => "⊃",
            Relation::Equal => "=",
            Relation::Subset => "⊂",
            Relation::Incomparable => "NC",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonResult {
    pub relation: Relation,
    /// A point of the first space outside the second.
    pub only_first: Option<Point>,
    /// A point of the second space outside the first.
    pub only_second: Option<Point>,
}

/// Full feature point from a model, taking unmentioned features from `fixed`.
fn point_from(model: &Assignment, names: &[String], fixed: Option<&Assignment>) -> Point {
    Point::new(
        names
            .iter()
            .map(|n| {
                model
                    .get(n)
                    .or_else(|| fixed.and_then(|f| f.get(n)))
                    .cloned()
                    .unwrap_or_else(Rational::zero)
            })
            .collect(),
    )
}

/// Decides the relation of `e1` and `e2` within `domains`, optionally on the
/// slice given by `fixed`. Each direction costs one solve.
pub fn compare(
    e1: &Formula,
    e2: &Formula,
    domains: &Formula,
    names: &[String],
    fixed: Option<&Assignment>,
    budget: &Budget,
) -> Result<ComparisonResult> {
    let restrict = |f: &Formula| match fixed {
        Some(a) => f.substitute(a),
        None => f.clone(),
    };
    let (f1, f2, d) = (restrict(e1), restrict(e2), restrict(domains));
    let outside = |a: &Formula, b: &Formula| -> Result<Option<Point>> {
        let query = Formula::and([a.clone(), d.clone(), b.negate()]);
        Ok(check_sat(&query, budget)?.map(|m| point_from(&m, names, fixed)))
    };
    let only_first = outside(&f1, &f2)?;
    let only_second = outside(&f2, &f1)?;
    let relation = match (&only_first, &only_second) {
        (None, None) => Relation::Equal,
        (None, Some(_)) => Relation::Subset,
        (Some(_), None) => Relation::Superset,
        (Some(_), Some(_)) => Relation::Incomparable,
    };
    Ok(ComparisonResult {
        relation,
        only_first,
        only_second,
    })
}

/// Same as [`compare`] for two explanations of the same class.
pub fn compare_explanations(
    e1: &Explanation,
    e2: &Explanation,
    domains: &Formula,
    names: &[String],
    fixed: Option<&Assignment>,
    budget: &Budget,
) -> Result<ComparisonResult> {
    if e1.target_class() != e2.target_class() {
        return Err(Error::Context(format!(
            "explanations target different classes ({} and {})",
            e1.target_class(),
            e2.target_class()
        )));
    }
    compare(e1.formula(), e2.formula(), domains, names, fixed, budget)
}

/// Fraction of features that can leave their sample value inside `e`.
pub fn relaxed_fraction(
    e: &Formula,
    s: &Point,
    domains: &Formula,
    names: &[String],
    budget: &Budget,
) -> Result<Rational> {
    if s.len() != names.len() {
        return Err(Error::Length {
            expected: names.len(),
            got: s.len(),
        });
    }
    let mut free = 0i64;
    for (x, v) in names.iter().zip(s.values()) {
        let moved = Formula::or([
            Formula::var_cmp(x, Rel::Lt, v.clone()),
            Formula::var_cmp(x, Rel::Gt, v.clone()),
        ]);
        if check_sat(&Formula::and([e.clone(), domains.clone(), moved]), budget)?.is_some() {
            free += 1;
        }
    }
    Ok(Rational::new(free.into(), (names.len() as i64).into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Projection,
    Slice,
}

impl GridMode {
    pub fn name(self) -> &'static str {
        match self {
            GridMode::Projection => "projection",
            GridMode::Slice => "slice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    In,
    Out,
    /// The solver ran out of budget on this cell.
    Unknown,
}

impl Cell {
    pub fn symbol(self) -> char {
        match self {
            Cell::In => '1',
            Cell::Out => '0',
            Cell::Unknown => '?',
        }
    }
}

/// Membership of an impact space on a regular grid over two features.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub x: usize,
    pub y: usize,
    pub x_name: String,
    pub y_name: String,
    pub mode: GridMode,
    pub x_values: Vec<Rational>,
    pub y_values: Vec<Rational>,
    /// `cells[i][j]` is the cell at `(x_values[i], y_values[j])`.
    pub cells: Vec<Vec<Cell>>,
    /// Sample supplying the other features in slice mode.
    pub fixed: Option<Point>,
}

impl Grid {
    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().flatten().filter(|&&c| c == cell).count()
    }

    pub fn cell_at(&self, u: &Rational, v: &Rational) -> Option<Cell> {
        let i = self.x_values.iter().position(|x| x == u)?;
        let j = self.y_values.iter().position(|y| y == v)?;
        Some(self.cells[i][j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("x={},y={},mode={}\n", self.x_name, self.y_name, self.mode.name());
        for (u, row) in self.x_values.iter().zip(&self.cells) {
            for (v, c) in self.y_values.iter().zip(row) {
                out.push_str(&format!("{},{},{}\n", format_rational(u), format_rational(v), c.symbol()));
            }
        }
        out
    }
}

/// `resolution` evenly spaced values from `L` to `U`.
pub fn axis_values(d: &Domain, resolution: usize) -> Vec<Rational> {
    let steps = int(resolution as i64 - 1);
    (0..resolution)
        .map(|k| &d.lower + (&d.upper - &d.lower) * int(k as i64) / &steps)
        .collect()
}

fn check_pair(pair: (usize, usize), names: &[String], resolution: usize) -> Result<()> {
    let (a, b) = pair;
    if a == b || a >= names.len() || b >= names.len() {
        return Err(Error::Argument(format!(
            "need two distinct features out of {}, got indices {a} and {b}",
            names.len()
        )));
    }
    if resolution < 2 {
        return Err(Error::Argument("grid resolution must be at least 2".into()));
    }
    Ok(())
}

/// Projection: a cell is in when some completion of it satisfies
/// `e ∧ domains`. One solve per cell; cells run in parallel.
pub fn project_grid(
    e: &Formula,
    domains: &Formula,
    feature_domains: &[Domain],
    names: &[String],
    pair: (usize, usize),
    resolution: usize,
    budget: &Budget,
) -> Result<Grid> {
    check_pair(pair, names, resolution)?;
    let (a, b) = pair;
    let xs = axis_values(&feature_domains[a], resolution);
    let ys = axis_values(&feature_domains[b], resolution);
    let base = Formula::and([e.clone(), domains.clone()]);
    let cells: Vec<Cell> = (0..xs.len() * ys.len())
        .into_par_iter()
        .map(|k| {
            let (u, v) = (&xs[k / ys.len()], &ys[k % ys.len()]);
            let query = Formula::and([
                base.clone(),
                Formula::var_cmp(&names[a], Rel::Eq, u.clone()),
                Formula::var_cmp(&names[b], Rel::Eq, v.clone()),
            ]);
            match check_sat(&query, budget) {
                Ok(Some(m)) => {
                    // the witness must satisfy the formula on its own
                    let full: Assignment = names
                        .iter()
                        .map(|n| (n.clone(), m.get(n).cloned().unwrap_or_else(Rational::zero)))
                        .collect();
                    match base.eval(&full) {
                        Ok(true) => Ok(Cell::In),
                        _ => Err(Error::Invalid(format!("projection witness fails at ({}, {})", format_rational(u), format_rational(v)))),
                    }
                }
                Ok(None) => Ok(Cell::Out),
                Err(Error::Timeout) => Ok(Cell::Unknown),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(Grid {
        x: a,
        y: b,
        x_name: names[a].clone(),
        y_name: names[b].clone(),
        mode: GridMode::Projection,
        cells: cells.chunks(ys.len()).map(|c| c.to_vec()).collect(),
        x_values: xs,
        y_values: ys,
        fixed: None,
    })
}

/// Slice: fixes every other feature at the sample's value and evaluates.
pub fn slice_grid(
    e: &Formula,
    feature_domains: &[Domain],
    names: &[String],
    pair: (usize, usize),
    s: &Point,
    resolution: usize,
) -> Result<Grid> {
    check_pair(pair, names, resolution)?;
    let (a, b) = pair;
    let mut point = point_assignment(s, names);
    let xs = axis_values(&feature_domains[a], resolution);
    let ys = axis_values(&feature_domains[b], resolution);
    let mut cells = Vec::with_capacity(xs.len());
    for u in &xs {
        let mut row = Vec::with_capacity(ys.len());
        for v in &ys {
            point.insert(names[a].clone(), u.clone());
            point.insert(names[b].clone(), v.clone());
            row.push(if e.eval(&point)? { Cell::In } else { Cell::Out });
        }
        cells.push(row);
    }
    Ok(Grid {
        x: a,
        y: b,
        x_name: names[a].clone(),
        y_name: names[b].clone(),
        mode: GridMode::Slice,
        x_values: xs,
        y_values: ys,
        cells,
        fixed: Some(s.clone()),
    })
}

/// Per-pipeline averages of the metrics of a batch of explanations.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub pipeline: String,
    pub count: usize,
    /// Average relaxed fraction over the explanations where it was measured.
    pub relaxed: Option<f64>,
    pub terms: f64,
    pub time_s: f64,
    pub solver_calls: f64,
}

/// The metrics of one explanation as they enter a report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub pipeline: String,
    pub relaxed: Option<Rational>,
    pub terms: usize,
    pub time_s: f64,
    pub solver_calls: u64,
}

impl RunRecord {
    pub fn of(e: &Explanation, names: &[String]) -> RunRecord {
        RunRecord {
            pipeline: e.descriptor(names),
            relaxed: e.metrics.relaxed.clone(),
            terms: e.metrics.terms,
            time_s: e.metrics.elapsed().as_secs_f64(),
            solver_calls: e.metrics.solver_calls(),
        }
    }
}

/// Groups by pipeline descriptor in order of first appearance.
pub fn aggregate(records: &[RunRecord]) -> Vec<ReportRow> {
    let mut groups: Vec<(String, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        match groups.iter_mut().find(|(k, _)| *k == r.pipeline) {
            Some((_, list)) => list.push(r),
            None => groups.push((r.pipeline.clone(), vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|(pipeline, list)| {
            let n = list.len() as f64;
            let relaxed: Vec<f64> = list.iter().filter_map(|r| r.relaxed.as_ref()).map(to_f64).collect();
            ReportRow {
                pipeline,
                count: list.len(),
                relaxed: (!relaxed.is_empty()).then(|| relaxed.iter().sum::<f64>() / relaxed.len() as f64),
                terms: list.iter().map(|r| r.terms as f64).sum::<f64>() / n,
                time_s: list.iter().map(|r| r.time_s).sum::<f64>() / n,
                solver_calls: list.iter().map(|r| r.solver_calls as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["pipeline", "relaxed", "terms", "time_s", "solver_calls"])?;
    for r in rows {
        w.write_record([
            r.pipeline.clone(),
            r.relaxed.map(|x| format!("{x:.4}")).unwrap_or_default(),
            format!("{:.4}", r.terms),
            format!("{:.6}", r.time_s),
            format!("{:.4}", r.solver_calls),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode_domains;
    use crate::formula::linear;
    use crate::model::tests::toy;
    use crate::rational::ratio;
    use crate::strategies::{Engine, Pipeline};

    fn phi1() -> Formula {
        linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Ge, int(3))
    }

    fn phi1_star() -> Formula {
        linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Gt, int(0))
    }

    fn setup() -> (Formula, Vec<String>, Vec<Domain>) {
        let net = toy();
        (encode_domains(&net), net.feature_names(), net.domains().to_vec())
    }

    #[test]
    fn phi1_is_inside_phi1_star() {
        let (d, names, _) = setup();
        let u = Budget::unlimited();
        let r = compare(&phi1(), &phi1_star(), &d, &names, None, &u).unwrap();
        assert_eq!(r.relation, Relation::Subset);
        let w = r.only_second.unwrap();
        assert!(phi1_star().eval_point(&w, &names).unwrap());
        assert!(!phi1().eval_point(&w, &names).unwrap());
        let back = compare(&phi1_star(), &phi1(), &d, &names, None, &u).unwrap();
        assert_eq!(back.relation, Relation::Superset);
        assert_eq!(compare(&phi1(), &phi1(), &d, &names, None, &u).unwrap().relation, Relation::Equal);
    }

    #[test]
    fn incomparable_pair_has_witnesses_both_ways() {
        let (d, names, _) = setup();
        let other = Formula::var_cmp("x1", Rel::Ge, int(2));
        let r = compare(&phi1_star(), &other, &d, &names, None, &Budget::unlimited()).unwrap();
        assert_eq!(r.relation, Relation::Incomparable);
        let (p, q) = (r.only_first.unwrap(), r.only_second.unwrap());
        assert!(phi1_star().eval_point(&p, &names).unwrap() && !other.eval_point(&p, &names).unwrap());
        assert!(other.eval_point(&q, &names).unwrap() && !phi1_star().eval_point(&q, &names).unwrap());
    }

    #[test]
    fn slice_comparison_fills_fixed_features() {
        let (d, names, _) = setup();
        let fixed: Assignment = [("x3".to_string(), int(3))].into();
        let r = compare(&phi1(), &phi1_star(), &d, &names, Some(&fixed), &Budget::unlimited()).unwrap();
        assert_eq!(r.relation, Relation::Subset);
        assert_eq!(r.only_second.unwrap().values()[2], int(3));
    }

    #[test]
    fn relaxed_fractions() {
        let (d, names, _) = setup();
        let s = Point::from_ints(&[1, 1, 3]);
        let u = Budget::unlimited();
        let phi_s = crate::encoder::encode_sample(&s, &names).unwrap();
        assert_eq!(relaxed_fraction(&phi_s, &s, &d, &names, &u).unwrap(), int(0));
        assert_eq!(relaxed_fraction(&phi1_star(), &s, &d, &names, &u).unwrap(), int(1));
        let a = Formula::and([Formula::var_cmp("x2", Rel::Eq, int(1)), Formula::var_cmp("x3", Rel::Eq, int(3))]);
        assert_eq!(relaxed_fraction(&a, &s, &d, &names, &u).unwrap(), ratio(1, 3));
    }

    #[test]
    fn projection_of_phi1() {
        let (d, names, doms) = setup();
        let g = project_grid(&phi1(), &d, &doms, &names, (0, 1), 5, &Budget::unlimited()).unwrap();
        assert_eq!(g.cell_at(&int(0), &int(4)), Some(Cell::Out));
        assert_eq!(g.cell_at(&int(4), &int(0)), Some(Cell::In));
        let all = project_grid(&Formula::True, &d, &doms, &names, (0, 1), 5, &Budget::unlimited()).unwrap();
        assert_eq!(all.count(Cell::In), 25);
        let none = Formula::var_cmp("x3", Rel::Eq, int(9));
        let g = project_grid(&none, &d, &doms, &names, (0, 1), 3, &Budget::unlimited()).unwrap();
        assert_eq!(g.count(Cell::Out), 9);
        assert!(project_grid(&phi1(), &d, &doms, &names, (1, 1), 5, &Budget::unlimited()).is_err());
    }

    #[test]
    fn expired_projection_is_unknown() {
        let (d, names, doms) = setup();
        let g = project_grid(&phi1(), &d, &doms, &names, (0, 1), 2, &Budget::from_duration(Default::default())).unwrap();
        assert_eq!(g.count(Cell::Unknown), 4);
        assert!(g.to_csv().contains(",?\n"));
    }

    #[test]
    fn slice_of_sample_is_one_cell() {
        let (_, names, doms) = setup();
        let s = Point::from_ints(&[1, 1, 3]);
        let phi_s = crate::encoder::encode_sample(&s, &names).unwrap();
        let g = slice_grid(&phi_s, &doms, &names, (0, 1), &s, 5).unwrap();
        assert_eq!(g.count(Cell::In), 1);
        assert_eq!(g.cell_at(&int(1), &int(1)), Some(Cell::In));
        let csv = g.to_csv();
        assert!(csv.starts_with("x=x1,y=x2,mode=slice\n0,0,0\n"));
        assert_eq!(csv.lines().count(), 26);
    }

    #[test]
    fn report_averages() {
        let eng = Engine::new(toy()).unwrap();
        let names = eng.feature_names().to_vec();
        let u = Budget::unlimited();
        let p = Pipeline::parse("G:weak", &names, None).unwrap();
        let a = Pipeline::parse("A", &names, None).unwrap();
        let runs = [
            eng.run(&p, &Point::from_ints(&[1, 1, 3]), &u).unwrap(),
            eng.run(&a, &Point::from_ints(&[1, 1, 3]), &u).unwrap(),
            eng.run(&a, &Point::from_ints(&[2, 1, 3]), &u).unwrap(),
        ];
        let records: Vec<RunRecord> = runs.iter().map(|e| RunRecord::of(e, &names)).collect();
        let rows = aggregate(&records);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].pipeline.as_str(), rows[0].solver_calls), ("G:weak", 1.0));
        assert_eq!((rows[1].count, rows[1].solver_calls), (2, 3.0));
        let csv = report_csv(&rows).unwrap();
        assert!(csv.starts_with("pipeline,relaxed,terms,time_s,solver_calls\n"));
        assert_eq!(report_csv(&[]).unwrap().lines().count(), 1);
    }
}
