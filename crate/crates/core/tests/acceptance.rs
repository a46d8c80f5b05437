//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{point, q, random_net, random_sample, rng, toy, RawNet, Q};
use spex_core::analysis::{compare, relaxed_fraction, slice_grid, Relation};
use spex_core::encoder::{build_psi, encode_sample, PartitionedSystem};
use spex_core::formula::{linear, Assignment};
use spex_core::interpolation::{interpolate_system, theory_itp, ItpAlgo, Theory};
use spex_core::search::{check_sat, implies, solve, Budget, Side};
use spex_core::strategies::{Engine, Explanation, Pipeline};
use spex_core::{Formula, Point, Rel};

const INSTANCES: usize = 200;
const CAPTURE_INSTANCES: usize = 20;
const PRESETS: [&str; 5] = ["stronger", "strong", "mid", "weak", "weaker"];

const LIMIT_FORWARD: Duration = Duration::from_millis(1);
const LIMIT_SOLVE: Duration = Duration::from_millis(100);
const LIMIT_KNOWN: Duration = Duration::from_secs(1);
const LIMIT_CRAIG: Duration = Duration::from_secs(300);
const STRONGER_FIXED_MIN: f64 = 0.95;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn u() -> Budget {
    Budget::unlimited()
}

fn int(v: i64) -> Q {
    q(v, 1)
}

/// One random instance: network, sample and everything derived from it
/// in the Craig-contract run.
struct Instance {
    engine: Engine,
    sample: Point,
    class: usize,
    phi_s: Formula,
    /// Interpolants of `φ_s` vs `ψ`, one per preset in `PRESETS` order.
    itps: Vec<Formula>,
}

fn corpus() -> Vec<(RawNet, Vec<Q>)> {
    (0..INSTANCES)
        .map(|i| {
            let mut r = rng(1000 + i as u64);
            let raw = random_net(&mut r);
            let s = random_sample(&mut r, &raw);
            (raw, s)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let net = toy();
    let p = Point::from_ints(&[1, 1, 3]);
    let mut times = Vec::new();
    let mut out = Vec::new();
    for _ in 0..11 {
        let t = Instant::now();
        out = net.forward(&p).map_err(|e| e.to_string())?;
        times.push(t.elapsed());
    }
    times.sort();
    let median = times[times.len() / 2];
    ensure(out == vec![int(5), int(-5)], || format!("outputs {out:?}"))?;
    let class = net.classify(&p).map_err(|e| e.to_string())?;
    ensure(net.class_name(class) == "c1", || format!("class {class}"))?;
    ensure(median < LIMIT_FORWARD, || format!("median forward time {median:?}"))?;
    Ok(format!("outputs (5, -5), class c1, median {median:?} < {LIMIT_FORWARD:?}"))
}

fn criterion_2() -> Outcome {
    let net = toy();
    let psi = build_psi(&net, 0).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let sat = check_sat(&psi, &u()).map_err(|e| e.to_string())?;
    let t_sat = t.elapsed();
    let witness = sat.ok_or("ψ(toy, c1) is unsatisfiable")?;
    let names = net.feature_names();
    let p = Point::new(names.iter().map(|n| witness[n].clone()).collect());
    ensure(common::RawNet::toy().classify(p.values()) == 1, || "ψ model is not a c2 point".into())?;

    let phi_s = encode_sample(&Point::from_ints(&[1, 1, 3]), &names).map_err(|e| e.to_string())?;
    let sys = PartitionedSystem::for_class(&net, &phi_s, 0).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let r = solve(&sys, &u()).map_err(|e| e.to_string())?;
    let t_unsat = t.elapsed();
    ensure(r.is_unsat(), || "φ_s ∧ ψ is satisfiable".into())?;
    ensure(t_sat < LIMIT_SOLVE && t_unsat < LIMIT_SOLVE, || {
        format!("solve times {t_sat:?} / {t_unsat:?}")
    })?;
    Ok(format!("ψ Sat in {t_sat:?}, φ_s ∧ ψ Unsat in {t_unsat:?} (limit {LIMIT_SOLVE:?})"))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let engine = Engine::new(toy()).map_err(|e| e.to_string())?;
    let names = engine.feature_names().to_vec();
    let phi1 = linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Ge, int(3));
    let phi1_star = linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Gt, int(0));
    engine.certify(&phi1, 0, &u()).map_err(|e| format!("φ₁: {e}"))?;
    engine.certify(&phi1_star, 0, &u()).map_err(|e| format!("φ₁*: {e}"))?;
    let r = compare(&phi1, &phi1_star, engine.domains(), &names, None, &u()).map_err(|e| e.to_string())?;
    ensure(r.relation == Relation::Subset, || format!("relation {}", r.relation))?;
    let w = r.only_second.clone().ok_or("no witness for φ₁* \\ φ₁")?;
    ensure(
        phi1_star.eval_point(&w, &names).unwrap() && !phi1.eval_point(&w, &names).unwrap(),
        || "witness does not separate".into(),
    )?;

    // φ₂ for class c2 is not valid: a counterexample sits near the origin
    let phi2 = Formula::atom(
        spex_core::LinearTerm::from_pairs([("x1", q(1, 1)), ("x2", q(-2, 3)), ("x3", q(5, 6))]),
        Rel::Lt,
        q(1, 384),
    );
    ensure(engine.certify(&phi2, 1, &u()).is_err(), || "φ₂ unexpectedly valid".into())?;
    let near = Formula::and(names.iter().map(|n| Formula::var_cmp(n, Rel::Le, q(1, 100))));
    let psi2 = engine.psi(1).unwrap().clone();
    let m = check_sat(&Formula::and([phi2.clone(), psi2, near]), &u())
        .map_err(|e| e.to_string())?
        .ok_or("no counterexample near the origin")?;
    let cx = engine.point_of(&m);
    let oracle = RawNet::toy();
    ensure(phi2.eval_point(&cx, &names).unwrap() && oracle.classify(cx.values()) == 0, || {
        format!("bad counterexample {}", engine.describe_point(&cx))
    })?;
    let probe = Point::new(vec![q(1, 1000), q(0, 1), q(0, 1)]);
    ensure(phi2.eval_point(&probe, &names).unwrap() && oracle.classify(probe.values()) == 0, || {
        "(1/1000, 0, 0) is not a counterexample".into()
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < LIMIT_KNOWN, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "φ₁, φ₁* valid; φ₁ ⊂ φ₁* (witness {}); φ₂ fails with {} and at (1/1000, 0, 0); {elapsed:?}",
        engine.describe_point(&w),
        engine.describe_point(&cx)
    ))
}

fn build_instances(corpus: &[(RawNet, Vec<Q>)]) -> Result<(Vec<Instance>, Duration, usize), String> {
    let start = Instant::now();
    let mut out = Vec::new();
    let mut checks = 0;
    for (idx, (raw, s)) in corpus.iter().enumerate() {
        let net = raw.network();
        let engine = Engine::new(net.clone()).map_err(|e| e.to_string())?;
        let names = engine.feature_names().to_vec();
        let sample = point(s);
        let class = net.classify(&sample).map_err(|e| e.to_string())?;
        ensure(class == raw.classify(s), || format!("instance {idx}: classifier disagrees with oracle"))?;
        let phi_s = encode_sample(&sample, &names).map_err(|e| e.to_string())?;
        let sys = PartitionedSystem::for_class(&net, &phi_s, class).map_err(|e| e.to_string())?;
        let psi = engine.psi(class).unwrap().clone();
        let coarse = raw.grid(&q(1, 1));
        let mut itps = Vec::new();
        for name in PRESETS {
            let algo: ItpAlgo = name.parse().unwrap();
            let i = interpolate_system(&sys, &algo, &u())
                .map_err(|e| format!("instance {idx} {name}: {e}"))?
                .formula;
            let a = implies(&phi_s, &i, &Formula::True, &u()).map_err(|e| e.to_string())?;
            let b = check_sat(&Formula::and([i.clone(), psi.clone()]), &u())
                .map_err(|e| e.to_string())?
                .is_none();
            let c = i.vars().iter().all(|v| names.contains(v));
            ensure(a && b && c, || {
                format!("instance {idx} {name}: start⟹I {a}, I∧ψ unsat {b}, vocabulary {c}: {i}")
            })?;
            // independent oracle on the integer grid of the domain
            for p in &coarse {
                if i.eval_point(&point(p), &names).unwrap() {
                    ensure(raw.classify(p) == class, || format!("instance {idx} {name}: oracle violation"))?;
                }
            }
            checks += 1;
            itps.push(i);
        }
        out.push(Instance {
            engine,
            sample,
            class,
            phi_s,
            itps,
        });
    }
    Ok((out, start.elapsed(), checks))
}

fn criterion_4(result: &Result<(Vec<Instance>, Duration, usize), String>) -> Outcome {
    let (instances, elapsed, checks) = result.as_ref().map_err(|e| e.clone())?;
    ensure(instances.len() >= INSTANCES, || format!("only {} instances", instances.len()))?;
    ensure(*elapsed < LIMIT_CRAIG, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} instances × {} presets = {checks} interpolants pass (a) (b) (c) and the grid oracle in {elapsed:?}",
        instances.len(),
        PRESETS.len()
    ))
}

fn criterion_5(instances: &[Instance]) -> Outcome {
    let chain = [
        Theory::Decomposed,
        Theory::Farkas,
        Theory::Factor(q(1, 4)),
        Theory::Factor(q(3, 4)),
        Theory::DualFarkas,
        Theory::DualDecomposed,
    ];
    let mut leaves = 0;
    let mut queries = 0;
    for (idx, inst) in instances.iter().enumerate() {
        let sys = PartitionedSystem::for_class(inst.engine.network(), &inst.phi_s, inst.class).unwrap();
        let r = solve(&sys, &u()).map_err(|e| e.to_string())?;
        let proof = r.proof().ok_or("refutation expected")?;
        let shared = proof.shared_vars();
        for cert in proof.tree.leaves() {
            leaves += 1;
            let itps = chain
                .iter()
                .map(|t| theory_itp(cert, &proof.atoms, &shared, t, Side::A))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("instance {idx}: {e}"))?;
            for (k, w) in itps.windows(2).enumerate() {
                queries += 1;
                let ok = implies(&w[0], &w[1], &Formula::True, &u()).map_err(|e| e.to_string())?;
                ensure(ok, || format!("instance {idx}: {:?} ⇏ {:?}: {} vs {}", chain[k], chain[k + 1], w[0], w[1]))?;
            }
        }
    }
    Ok(format!("{leaves} leaf certificates, {queries} implication queries Unsat"))
}

fn criterion_6(instances: &[Instance]) -> Outcome {
    let mut fixed = 0;
    let mut chain_pairs = 0;
    for (idx, inst) in instances.iter().enumerate() {
        let names = inst.engine.feature_names();
        let d = inst.engine.domains();
        let relaxed = inst.itps[..4]
            .iter()
            .map(|f| relaxed_fraction(f, &inst.sample, d, names, &u()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        if relaxed[0] == q(0, 1) {
            fixed += 1;
        }
        for k in 0..3 {
            if implies(&inst.itps[k], &inst.itps[k + 1], d, &u()).map_err(|e| e.to_string())? {
                chain_pairs += 1;
                ensure(relaxed[k] <= relaxed[k + 1], || {
                    format!("instance {idx}: relaxed {} > {} along {} ⟹ {}", relaxed[k], relaxed[k + 1], PRESETS[k], PRESETS[k + 1])
                })?;
            }
        }
    }
    let share = fixed as f64 / instances.len() as f64;
    ensure(share >= STRONGER_FIXED_MIN, || {
        format!("stronger fixes every feature on only {:.1}% of instances", 100.0 * share)
    })?;
    Ok(format!(
        "monotone on {chain_pairs} implied preset pairs; stronger relaxed = 0 on {:.1}% (≥ {:.0}%)",
        100.0 * share,
        100.0 * STRONGER_FIXED_MIN
    ))
}

fn criterion_7(instances: &[Instance]) -> Outcome {
    let mut runs = 0;
    for (idx, inst) in instances.iter().enumerate() {
        let names = inst.engine.feature_names();
        for name in PRESETS {
            let p = Pipeline::parse(&format!("G:{name}"), names, None).unwrap();
            let e = inst.engine.run(&p, &inst.sample, &u()).map_err(|e| e.to_string())?;
            ensure(e.metrics.solver_calls() == 1, || {
                format!("instance {idx} G:{name} used {} calls", e.metrics.solver_calls())
            })?;
            runs += 1;
        }
        let p = Pipeline::parse("A", names, None).unwrap();
        let e = inst.engine.run(&p, &inst.sample, &u()).map_err(|e| e.to_string())?;
        ensure(e.metrics.solver_calls() == names.len() as u64, || {
            format!("instance {idx} A used {} calls for {} features", e.metrics.solver_calls(), names.len())
        })?;
        runs += 1;
    }
    Ok(format!("{runs} runs: G always 1 solve, A always m solves"))
}

fn irreducible(engine: &Engine, e: &Explanation) -> Result<bool, String> {
    let conj = e.formula().conjuncts();
    for k in 0..conj.len() {
        let mut rest = conj.clone();
        rest.remove(k);
        if engine.certify(&Formula::and(rest), e.target_class(), &u()).is_ok() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn criterion_8(instances: &[Instance]) -> Outcome {
    let mut checked = 0;
    for (idx, inst) in instances.iter().enumerate() {
        let eng = &inst.engine;
        let a = eng.abductive(&inst.sample, inst.class, &u()).map_err(|e| e.to_string())?;
        let start = eng.sample_explanation(&inst.sample, &u()).map_err(|e| e.to_string())?;
        let r = eng.reduce_min(&start, &u()).map_err(|e| e.to_string())?;
        for (what, e) in [("A", &a), ("Rmin", &r)] {
            ensure(irreducible(eng, e)?, || format!("instance {idx}: {what} output {} is reducible", e.formula()))?;
            checked += 1;
        }
        ensure(a.formula() == r.formula(), || format!("instance {idx}: A and Rmin∘φ_s differ"))?;
    }
    let eng = Engine::new(toy()).unwrap();
    let a = eng.abductive(&Point::from_ints(&[1, 1, 3]), 0, &u()).map_err(|e| e.to_string())?;
    let expected = Formula::and([Formula::var_cmp("x2", Rel::Eq, int(1)), Formula::var_cmp("x3", Rel::Eq, int(3))]);
    ensure(a.formula() == &expected, || format!("toy A(1,1,3) = {}", a.formula()))?;
    Ok(format!("{checked} A/Rmin outputs irreducible; toy A(1,1,3) = (x2 = 1 ∧ x3 = 3)"))
}

/// Explanations on the toy network: the known φ₁ and φ₁*, every strategy on
/// (1,1,3), and G/A/Rmin/pipelines on every integer sample.
fn toy_explanations() -> Result<Vec<(String, Formula, usize)>, String> {
    let eng = Engine::new(toy()).unwrap();
    let names = eng.feature_names().to_vec();
    let mut out = vec![
        ("φ₁".to_string(), linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Ge, int(3)), 0),
        ("φ₁*".to_string(), linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Gt, int(0)), 0),
    ];
    let mut descriptors: Vec<String> = PRESETS.iter().map(|p| format!("G:{p}")).collect();
    descriptors.extend(
        ["A", "R", "Rmin", "A;I:8", "A;I:8;G:weak", "C:weak:x1,x2", "C:stronger:x2,x3;Rmin", "G:strong;R"]
            .map(String::from),
    );
    let pipelines: Vec<Pipeline> = descriptors
        .iter()
        .map(|d| Pipeline::parse(d, &names, None).unwrap())
        .collect();
    for s in RawNet::toy().grid(&q(1, 1)) {
        let p = point(&s);
        for (d, pl) in descriptors.iter().zip(&pipelines) {
            let e = eng.run(pl, &p, &u()).map_err(|e| format!("{d} at {}: {e}", eng.describe_point(&p)))?;
            out.push((format!("{d}@{}", eng.describe_point(&p)), e.formula().clone(), e.target_class()));
        }
    }
    Ok(out)
}

fn criterion_9() -> Outcome {
    let oracle = RawNet::toy();
    let names = toy().feature_names();
    let grid: Vec<(Point, usize)> = oracle
        .grid(&q(1, 4))
        .into_iter()
        .map(|p| {
            let c = oracle.classify(&p);
            (point(&p), c)
        })
        .collect();
    let expls = toy_explanations()?;
    let mut members = 0usize;
    for (name, f, class) in &expls {
        for (p, c) in &grid {
            if f.eval_point(p, &names).unwrap() {
                members += 1;
                ensure(c == class, || format!("{name}: grid point {p:?} classified {c}"))?;
            }
        }
    }
    Ok(format!(
        "{} toy explanations × {} grid points: {members} memberships, 0 violations",
        expls.len(),
        grid.len()
    ))
}

fn criterion_10() -> Outcome {
    let mut cells = 0;
    for i in 0..CAPTURE_INSTANCES {
        let mut r = rng(5000 + i as u64);
        let raw = random_net(&mut r);
        let s = random_sample(&mut r, &raw);
        let a = rand::Rng::gen_range(&mut r, 0..raw.inputs);
        let b = (a + 1 + rand::Rng::gen_range(&mut r, 0..raw.inputs - 1)) % raw.inputs;
        let preset = PRESETS[i % PRESETS.len()];
        let algo: ItpAlgo = preset.parse().unwrap();
        let net = raw.network();
        let eng = Engine::new(net.clone()).unwrap();
        let names = eng.feature_names().to_vec();
        let sample = point(&s);
        let class = net.classify(&sample).unwrap();
        let start = eng.sample_explanation(&sample, &u()).map_err(|e| e.to_string())?;
        let g = eng.generalize(&start, &algo, &u()).map_err(|e| e.to_string())?;
        let c = eng.capture(&sample, class, &[a.min(b), a.max(b)], &algo, &u()).map_err(|e| e.to_string())?;
        let res = 17;
        let gs = slice_grid(g.formula(), net.domains(), &names, (a, b), &sample, res).map_err(|e| e.to_string())?;
        let cs = slice_grid(c.formula(), net.domains(), &names, (a, b), &sample, res).map_err(|e| e.to_string())?;
        ensure(gs.cells == cs.cells, || {
            format!("instance {i} ({preset}, pair {a},{b}): slices differ\nG: {}\nC: {}", g.formula(), c.formula())
        })?;
        cells += res * res;
    }
    // substitution example: x3 := 1
    let g = Formula::and([
        linear(&[("x1", 2), ("x3", 1)], Rel::Ge, int(7)),
        linear(&[("x1", 1), ("x2", -1), ("x3", 1)], Rel::Ge, int(2)),
    ]);
    let fixed: Assignment = [("x3".to_string(), int(1))].into();
    let sliced = g.substitute(&fixed);
    let expected = Formula::and([
        linear(&[("x1", 1)], Rel::Ge, int(3)),
        linear(&[("x1", 1), ("x2", -1)], Rel::Ge, int(1)),
    ]);
    ensure(sliced == expected, || format!("substitution gave {sliced}"))?;
    Ok(format!("{CAPTURE_INSTANCES} instances, {cells} slice cells identical; substitution gives {sliced}"))
}

fn criterion_11() -> Outcome {
    let eng = Engine::new(toy()).unwrap();
    let s = Point::from_ints(&[1, 1, 3]);
    let phi_s = eng.sample_explanation(&s, &u()).map_err(|e| e.to_string())?;
    let a = eng.abductive(&s, 0, &u()).map_err(|e| e.to_string())?;
    let i = eng.interval(&a, 8, &u()).map_err(|e| e.to_string())?;
    let g = eng.generalize(&i, &ItpAlgo::weak(), &u()).map_err(|e| e.to_string())?;
    let chain = [phi_s.formula(), a.formula(), i.formula(), g.formula()];
    for w in chain.windows(2) {
        let ok = implies(w[0], w[1], &Formula::True, &u()).map_err(|e| e.to_string())?;
        ensure(ok, || format!("{} ⇏ {}", w[0], w[1]))?;
    }
    let extra = check_sat(&Formula::and([g.formula().clone(), eng.domains().clone(), i.formula().negate()]), &u())
        .map_err(|e| e.to_string())?
        .ok_or("G stage did not enlarge the space")?;
    let names = eng.feature_names();
    let w = eng.point_of(&extra);
    ensure(
        g.formula().eval_point(&w, names).unwrap() && !i.formula().eval_point(&w, names).unwrap(),
        || "strictness witness does not separate".into(),
    )?;
    let p = Pipeline::parse("A;I:8;G:weak", names, None).unwrap();
    let run = eng.run(&p, &s, &u()).map_err(|e| e.to_string())?;
    ensure(run.formula() == g.formula(), || "pipeline run differs from staged run".into())?;
    Ok(format!(
        "φ_s ⟹ A ⟹ I∘A ⟹ G∘I∘A; G adds {} ; final {}",
        eng.describe_point(&w),
        g.formula()
    ))
}

fn run(n: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = t.elapsed();
    match outcome {
        Ok(detail) => {
            println!("criterion {n:>2} {name}: PASS [{elapsed:.2?}] {detail}");
            true
        }
        Err(detail) => {
            println!("criterion {n:>2} {name}: FAIL [{elapsed:.2?}] {detail}");
            false
        }
    }
}

fn main() {
    let mut ok = true;
    ok &= run(1, "example regression", criterion_1);
    ok &= run(2, "construction soundness", criterion_2);
    ok &= run(3, "known explanations", criterion_3);
    let corpus = corpus();
    let built = build_instances(&corpus);
    ok &= run(4, "Craig contract", || criterion_4(&built));
    let instances: &[Instance] = built.as_ref().map(|b| b.0.as_slice()).unwrap_or(&[]);
    let needs = |f: fn(&[Instance]) -> Outcome| {
        move || {
            if instances.is_empty() {
                Err("no instances (criterion 4 failed)".to_string())
            } else {
                f(instances)
            }
        }
    };
    ok &= run(5, "strength chain", needs(criterion_5));
    ok &= run(6, "relaxed trend", needs(criterion_6));
    ok &= run(7, "query counts", needs(criterion_7));
    ok &= run(8, "irreducibility", needs(criterion_8));
    ok &= run(9, "grid oracle", criterion_9);
    ok &= run(10, "capture/slice equivalence", criterion_10);
    ok &= run(11, "pipeline monotonicity", criterion_11);
    if ok {
        println!("acceptance: all criteria PASS");
    } else {
        println!("acceptance: FAILURES");
        std::process::exit(1);
    }
}
