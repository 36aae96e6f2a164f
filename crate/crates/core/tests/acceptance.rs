//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use probfl::bench::{ablation_configs, bundled_programs, run_benchmark, seed_corpus};
use probfl::corpus;
use probfl::ddg::{build_ddg, build_ddg_with, DdgOptions, DepGraph};
use probfl::inference::{
    exact_marginals, factor_to_child_raw, factor_to_parent_raw, factor_to_var_naive_raw,
    run_lbp, InferenceConfig, InferenceMode, Lbp, Message,
};
use probfl::minilang::{parse, Program, StmtId, StmtTag};
use probfl::model::{build_net, cond_test_fixture, FaultNet, ModelParams, VarKind};
use probfl::pipeline::{localize, reduced_traces, RunConfig};
use probfl::ranking::{sbfl_report, SbflFormula};
use probfl::reduction::{compress_loops, compress_loops_counted};
use probfl::tracer::{
    profile, trace, Trace, TraceEvent, TestStatus, TraceOptions, ValueId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {:.2}s, limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64())
    })
}

fn worked_example_posteriors() -> Check {
    let start = Instant::now();
    let (net, [s3, s4, s6]) = cond_test_fixture();
    let m = run_lbp(&net, &InferenceConfig::default()).map_err(|e| e.to_string())?;
    let got = [m.p_faulty(s3), m.p_faulty(s4), m.p_faulty(s6)];
    for (g, want) in got.iter().zip([0.707, 0.270, 0.223]) {
        ensure((g - want).abs() <= 0.005, || format!("posterior {g:.4}, expected {want}"))?;
    }
    ensure(got[0] > got[1] && got[1] > got[2], || format!("order of {got:?}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "S3 {:.4}, S4 {:.4}, S6 {:.4}, ranking [S3, S4, S6]",
        got[0], got[1], got[2]
    ))
}

fn conditional_end_to_end() -> Check {
    let start = Instant::now();
    let p = Program::parse(corpus::COND_TEST, "cond_test.mi").map_err(|e| e.to_string())?;
    let l = localize(&p, &RunConfig::default()).map_err(|e| e.to_string())?;
    let top = l.report.order()[0];
    let line = p.stmt(top).map(|s| s.line);
    ensure(line == Some(3), || format!("top statement at line {line:?}"))?;
    let prof = profile(&p).map_err(|e| e.to_string())?;
    for f in [SbflFormula::Ochiai, SbflFormula::DStar] {
        let r = sbfl_report(&prof, &p, f);
        let first = r.entries[0].fault_probability;
        ensure(r.entries.iter().all(|e| e.fault_probability == first), || {
            format!("{f:?} scores differ: {:?}", r.entries)
        })?;
        ensure(r.entries.iter().all(|e| e.average_rank == 2.0), || {
            format!("{f:?} average ranks are not a three-way tie")
        })?;
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!(
        "top-1 is line 3 (p = {:.4}); Ochiai and DStar tie all {} statements",
        l.report.entries[0].fault_probability,
        l.report.entries.len()
    ))
}

fn optimized_messages_match_naive() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut raw_err, mut norm_err) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let degree = rng.gen_range(1..=12);
        let f = common::random_factor(&mut rng, degree);
        let inbox: Vec<Message> = (0..degree).map(|_| common::random_message(&mut rng)).collect();
        for target in 0..degree {
            let naive = factor_to_var_naive_raw(&f, target, &inbox, 20).map_err(|e| e.to_string())?;
            let fast = if target == 0 {
                factor_to_child_raw(f.p0, inbox[1..].iter().copied())
            } else {
                let others: f64 = (1..degree).filter(|&k| k != target).map(|k| inbox[k].t).product();
                factor_to_parent_raw(f.p0, inbox[0], others)
            };
            raw_err = raw_err.max(naive.max_diff(fast));
            norm_err = norm_err.max(naive.normalized().max_diff(fast.normalized()));
        }
    }
    ensure(raw_err <= 1e-9 && norm_err <= 1e-9, || {
        format!("max error {raw_err:.3e} raw, {norm_err:.3e} normalized")
    })?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "1000 factors, max error {raw_err:.1e} raw, {norm_err:.1e} normalized"
    ))
}

fn tree_lbp_is_exact() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut nets = 0;
    let mut resampled = 0;
    while nets < 100 {
        let size = rng.gen_range(5..=30);
        let net = common::random_tree_net(&mut rng, size);
        let exact = match exact_marginals(&net, 30) {
            Ok(m) => m,
            Err(_) => {
                resampled += 1;
                continue;
            }
        };
        let lbp = run_lbp(&net, &InferenceConfig::default()).map_err(|e| e.to_string())?;
        ensure(lbp.converged, || format!("no convergence on tree net {nets}"))?;
        for (a, b) in lbp.posteriors.iter().zip(&exact.posteriors) {
            worst = worst.max(a.max_diff(*b));
        }
        nets += 1;
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:.3e}"))?;
    Ok(format!(
        "100 tree nets, max deviation {worst:.1e} ({resampled} impossible draws resampled)"
    ))
}

fn corpus_nets(programs: &[Program]) -> Result<Vec<(String, FaultNet)>, String> {
    let mut out = Vec::new();
    for p in programs {
        let (_, net) = common::corpus_net(p);
        out.push((p.source_path.clone(), net));
    }
    for case in seed_corpus(&bundled_programs().map_err(|e| e.to_string())?, 2, 0)
        .map_err(|e| e.to_string())?
    {
        let cfg = RunConfig::default();
        let prof = profile(&case.mutant).map_err(|e| e.to_string())?;
        let (traces, _) = reduced_traces(&case.mutant, &prof, &cfg).map_err(|e| e.to_string())?;
        let ddg = build_ddg(&case.mutant, &traces).map_err(|e| e.to_string())?;
        let net = build_net(&ddg, &case.mutant, &ModelParams::default()).map_err(|e| e.to_string())?;
        out.push((case.id(), net));
    }
    Ok(out)
}

fn all_programs() -> Result<Vec<Program>, String> {
    corpus::PROGRAMS
        .iter()
        .map(|(name, src)| Program::parse(src, name).map_err(|e| e.to_string()))
        .collect()
}

fn prior_fixed_point() -> Check {
    let nets = corpus_nets(&all_programs()?)?;
    let mut worst = 0.0f64;
    let mut stmts = 0;
    for (name, net) in &nets {
        let m = run_lbp(&net.without_evidence(), &InferenceConfig::default())
            .map_err(|e| format!("{name}: {e}"))?;
        for (i, v) in net.variables.iter().enumerate() {
            if matches!(v.kind, VarKind::Statement(_)) {
                worst = worst.max((m.p_faulty(i) - 0.5).abs());
                stmts += 1;
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:.3e}"))?;
    Ok(format!(
        "{} nets, {stmts} statement posteriors, max deviation {worst:.1e}",
        nets.len()
    ))
}

const LOOP_SHAPE: &str = "\
fn f(c) {
    while (c) {
        let a = 1;
        let b = 2;
        let d = 3;
    }
}
";

/// Crafted programs whose tests run loops of several shapes.
const LOOP_CORPUS: &[&str] = &[
    "\
fn acc(xs) {
    let s = 0;
    let i = 0;
    while (i < len(xs)) {
        s = s + xs[i];
        xs[i] = s;
        i = i + 1;
    }
    return s;
}
fn test_acc() {
    let a = [1, 1, 1, 1, 1, 1];
    assert(acc(a) == 6);
}
",
    "\
fn grid(n) {
    let total = 0;
    let i = 0;
    while (i < n) {
        let j = 0;
        while (j < n) {
            total = total + 1;
            j = j + 1;
        }
        i = i + 1;
    }
    return total;
}
fn test_grid() {
    assert(grid(5) == 25);
}
",
    "\
fn inc(x) {
    return x + 1;
}
fn count(n) {
    let k = 0;
    while (k < n) {
        k = inc(k);
    }
    return k;
}
fn test_count() {
    assert(count(7) == 7);
}
",
    "\
fn classify(xs) {
    let evens = 0;
    let i = 0;
    while (i < len(xs)) {
        if (xs[i] % 2 == 0) {
            evens = evens + 1;
        } else {
            evens = evens + 0;
        }
        i = i + 1;
    }
    return evens;
}
fn test_classify() {
    assert(classify([2, 4, 6, 1, 3, 5, 8, 8]) == 5);
}
",
    "\
fn guarded(n) {
    let i = 0;
    let hits = 0;
    while (i < n) {
        try {
            if (i == 3) {
                throw 9;
            }
            hits = hits + 1;
        } catch (e) {
            hits = hits - e;
        }
        i = i + 1;
    }
    return hits;
}
fn test_guarded() {
    assert(guarded(6) == -4);
}
",
];

fn loop_compression() -> Check {
    let p = parse(LOOP_SHAPE).map_err(|e| e.to_string())?;
    let (w, a, b, d) = (0u32, 1, 2, 3);
    let mut seq = Vec::new();
    for _ in 0..100 {
        seq.extend([w, a, b]);
    }
    seq.extend([w, a, d]);
    for _ in 0..100 {
        seq.extend([w, a, b]);
    }
    seq.push(w);
    let synthetic = Trace {
        test: "t".into(),
        status: TestStatus::Pass,
        events: seq
            .iter()
            .enumerate()
            .map(|(i, &s)| TraceEvent::Exec {
                stmt: StmtId(s),
                reads: Vec::new(),
                write: ValueId(i as u32),
            })
            .collect(),
        inputs: Vec::new(),
        next_value: seq.len() as u32,
        oversized: false,
    };
    let (out, _) = compress_loops_counted(&synthetic, &p).map_err(|e| e.to_string())?;
    let letters: String = out
        .events
        .iter()
        .map(|e| e.stmt())
        .filter(|&s| p.stmt(s).is_some_and(|i| i.tag != StmtTag::While))
        .map(|s| ['W', 'a', 'b', 'd'][s.index()])
        .collect();
    ensure(letters == "abadab", || format!("compressed to {letters}"))?;

    let mut traces = 0;
    for src in LOOP_CORPUS {
        let p = parse(src).map_err(|e| e.to_string())?;
        for t in common::trace_all(&p) {
            let c = compress_loops(&t, &p).map_err(|e| e.to_string())?;
            ensure(c.len() < t.len(), || format!("{}: nothing compressed", t.test))?;
            let before = build_ddg(&p, std::slice::from_ref(&t)).map_err(|e| e.to_string())?;
            let after = build_ddg(&p, std::slice::from_ref(&c)).map_err(|e| e.to_string())?;
            ensure(before.projected_edges() == after.projected_edges(), || {
                format!("{}: projected edges changed", t.test)
            })?;
            let again = compress_loops(&c, &p).map_err(|e| e.to_string())?;
            ensure(again == c, || format!("{}: second pass changed the trace", t.test))?;
            traces += 1;
        }
    }
    Ok(format!(
        "(ab)^100 ad (ab)^100 -> {letters}; {traces} loop traces keep projected edges and are fixed points"
    ))
}

fn ddg_size(g: &DepGraph) -> usize {
    g.node_count() + g.edge_count()
}

/// Fastest observed time of one LBP iteration over the net.
fn iteration_time(net: &FaultNet) -> Result<f64, String> {
    let mut lbp = Lbp::new(net, &InferenceConfig::default()).map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let start = Instant::now();
        for _ in 0..4 {
            lbp.step().map_err(|e| e.to_string())?;
        }
        best = best.min(start.elapsed().as_secs_f64() / 4.0);
    }
    Ok(best)
}

fn scalability() -> Check {
    let mut sizes = Vec::new();
    let mut times = Vec::new();
    for n in [20_000, 40_000] {
        let p = common::counting_program(n);
        let t = trace(&p, "test_sum", &["sum"], TraceOptions::default()).map_err(|e| e.to_string())?;
        let g = build_ddg(&p, &[t]).map_err(|e| e.to_string())?;
        let net = build_net(&g, &p, &ModelParams::default()).map_err(|e| e.to_string())?;
        sizes.push(ddg_size(&g) as f64);
        times.push(iteration_time(&net)?);
    }
    let size_ratio = sizes[1] / sizes[0];
    let time_ratio = times[1] / times[0];
    ensure((1.8..=2.2).contains(&size_ratio), || format!("size ratio {size_ratio:.3}"))?;
    ensure(time_ratio <= 2.5, || format!("iteration time ratio {time_ratio:.3}"))?;
    Ok(format!(
        "doubling the trace: graph size x{size_ratio:.3}, iteration time x{time_ratio:.3}"
    ))
}

fn benchmark_direction() -> Check {
    let start = Instant::now();
    let programs = bundled_programs().map_err(|e| e.to_string())?;
    let cases = seed_corpus(&programs, usize::MAX, 0).map_err(|e| e.to_string())?;
    let sources: BTreeSet<&str> = cases.iter().map(|c| c.program.as_str()).collect();
    ensure(cases.len() >= 30 && sources.len() >= 5, || {
        format!("{} mutants over {} programs", cases.len(), sources.len())
    })?;
    let results = run_benchmark(&cases, &[("default".to_string(), RunConfig::default())]);
    let (_, s) = &results.summary()[0];
    let hits = |h: &probfl::bench::HitCounts| h.get(&5).copied().unwrap_or(0);
    let (p, o, d) = (hits(&s.probabilistic), hits(&s.ochiai), hits(&s.dstar));
    ensure(s.failures == 0, || format!("{} cases failed to localize", s.failures))?;
    ensure(p >= o && p >= d, || {
        format!("top-5 probabilistic {p}, Ochiai {o}, DStar {d} over {} mutants", s.cases)
    })?;
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{} mutants over {} programs: top-5 probabilistic {p}, Ochiai {o}, DStar {d} ({:.0}s)",
        s.cases,
        sources.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn determinism() -> Check {
    let programs = bundled_programs().map_err(|e| e.to_string())?;
    let configs = ablation_configs(&RunConfig::default());
    let run = || -> Result<(Vec<u8>, String), String> {
        let cases = seed_corpus(&programs, 3, 11).map_err(|e| e.to_string())?;
        let r = run_benchmark(&cases, &configs);
        let mut buf = Vec::new();
        r.write_jsonl(&mut buf).map_err(|e| e.to_string())?;
        Ok((buf, r.render_summary()))
    };
    let first = run()?;
    let second = run()?;
    ensure(first == second, || "result files differ between runs".into())?;
    Ok(format!(
        "two runs over {} configurations wrote identical results ({} bytes)",
        configs.len(),
        first.0.len()
    ))
}

/// Values reachable backwards from `v` through data and control parents.
fn ancestors(g: &DepGraph, v: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        for p in g.values[x].value_parents() {
            if seen.insert(p) {
                stack.push(p);
            }
        }
    }
    seen
}

fn ablation_sanity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut nets = corpus_nets(&all_programs()?)?;
    for i in 0..20 {
        nets.push((format!("random {i}"), common::random_loopy_net(&mut rng, 6, 40)));
    }
    let naive = InferenceConfig {
        mode: InferenceMode::Naive,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (name, net) in nets.iter().filter(|(_, n)| n.max_degree() <= 20) {
        let a = run_lbp(net, &InferenceConfig::default()).map_err(|e| format!("{name}: {e}"))?;
        let b = run_lbp(net, &naive).map_err(|e| format!("{name}: {e}"))?;
        for (x, y) in a.posteriors.iter().zip(&b.posteriors) {
            worst = worst.max(x.max_diff(*y));
        }
        compared += 1;
    }
    ensure(worst <= 1e-9, || format!("naive and optimized differ by {worst:.3e}"))?;

    let p = Program::parse(corpus::DRIVER, "driver.mi").map_err(|e| e.to_string())?;
    let t = trace(&p, "test_driver", &["callback"], TraceOptions::default()).map_err(|e| e.to_string())?;
    let on = build_ddg(&p, std::slice::from_ref(&t)).map_err(|e| e.to_string())?;
    let off = build_ddg_with(
        &p,
        &[t],
        DdgOptions {
            virtual_call_edges: false,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let callback: BTreeSet<StmtId> = p
        .function("callback")
        .map(|f| f.body.iter().map(|s| s.id).collect())
        .unwrap_or_default();
    let summary = p.function("test_driver").map(|f| f.body[0].id);
    let linked = |g: &DepGraph| {
        g.values.iter().enumerate().any(|(i, v)| {
            v.stmt.is_some_and(|s| callback.contains(&s))
                && ancestors(g, i).iter().any(|&a| g.values[a].stmt == summary)
        })
    };
    ensure(off.edge_count() < on.edge_count(), || {
        format!("edges {} without virtual edges, {} with", off.edge_count(), on.edge_count())
    })?;
    ensure(linked(&on) && !linked(&off), || {
        "callback dependence on the call site did not change".into()
    })?;
    Ok(format!(
        "{compared} nets, naive vs optimized max difference {worst:.1e}; driver edges {} -> {}",
        on.edge_count(),
        off.edge_count()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("worked-example posteriors", worked_example_posteriors),
        ("conditional fault end to end", conditional_end_to_end),
        ("optimized factor messages", optimized_messages_match_naive),
        ("exact marginals on trees", tree_lbp_is_exact),
        ("prior fixed point", prior_fixed_point),
        ("loop compression", loop_compression),
        ("linear scaling", scalability),
        ("seeded-fault benchmark", benchmark_direction),
        ("deterministic benchmark", determinism),
        ("ablation sanity", ablation_sanity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{secs:.2}s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} [{secs:.2}s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
