use super::*;
use crate::corpus;
use crate::inference::{run_lbp, InferenceConfig};
use crate::minilang::parse;
use crate::ddg::build_ddg;
use crate::model::{build_net, ModelParams};
use crate::tracer::{profile, trace, TraceOptions};

fn three_fn_program() -> Program {
    parse(
        "fn f(a) {\n  let x = a + 1;\n  return x;\n}\nfn g(a) {\n  return a;\n}\nfn h(a) {\n  return a * 2;\n}\nfn test_t() {\n  assert(f(1) == 2);\n}\n",
    )
    .unwrap()
}

fn scores(p: &Program, values: &[f64]) -> BTreeMap<StmtId, f64> {
    p.candidates().into_iter().zip(values.iter().copied()).collect()
}

#[test]
fn worked_example_order() {
    let p = parse(corpus::COND_TEST).unwrap();
    let traces: Vec<_> = ["test_pass", "test_fail"]
        .iter()
        .map(|t| trace(&p, t, &["foo"], TraceOptions::default()).unwrap())
        .collect();
    let g = build_ddg(&p, &traces).unwrap();
    let net = build_net(&g, &p, &ModelParams::default()).unwrap();
    let m = run_lbp(&net, &InferenceConfig::default()).unwrap();
    let r = rank(&m, &net, &p);
    let lines: Vec<u32> = r.entries.iter().map(|e| e.line).collect();
    assert_eq!(lines, vec![3, 4, 6]);
    assert!(r.entries.iter().all(|e| e.executed));
    assert!(r.meta.converged);
}

#[test]
fn ties_follow_statement_order() {
    let p = three_fn_program();
    let n = p.candidates().len();
    let r = order_scores(&scores(&p, &vec![0.3; n]), &p);
    assert_eq!(r.order(), p.candidates());
    assert!(r.entries.iter().all(|e| e.average_rank == (n + 1) as f64 / 2.0));
}

#[test]
fn single_high_statement_ranks_first() {
    let p = three_fn_program();
    let c = p.candidates();
    let mut v = vec![0.1; c.len()];
    v[2] = 0.9;
    let r = order_scores(&scores(&p, &v), &p);
    assert_eq!(r.entries[0].stmt, c[2]);
    assert_eq!(r.entries[0].rank, 1);
}

#[test]
fn unexecuted_statements_form_the_tail() {
    let p = three_fn_program();
    let c = p.candidates();
    let r = order_scores(&scores(&p, &[0.2, 0.4]), &p);
    assert_eq!(r.entries.len(), c.len());
    assert_eq!(r.order()[..2], [c[1], c[0]]);
    assert!(r.entries[2..].iter().all(|e| !e.executed && e.fault_probability == 0.0));
    assert_eq!(r.order()[2..], c[2..]);
}

#[test]
fn sbfl_formula_arithmetic() {
    use SbflFormula::*;
    assert_eq!(sbfl_formula(Ochiai, 1.0, 0.0, 1.0), 1.0);
    assert_eq!(sbfl_formula(DStar, 1.0, 0.0, 1.0), f64::INFINITY);
    assert_eq!(sbfl_formula(Ochiai, 0.0, 3.0, 1.0), 0.0);
    assert_eq!(sbfl_formula(DStar, 0.0, 3.0, 1.0), 0.0);
    assert!((sbfl_formula(Ochiai, 1.0, 1.0, 1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    assert_eq!(sbfl_formula(DStar, 1.0, 1.0, 1.0), 1.0);
    assert_eq!(sbfl_formula(Ochiai, 0.0, 0.0, 0.0), 0.0);
}

#[test]
fn sbfl_on_conditional_example() {
    let p = parse(corpus::COND_TEST).unwrap();
    let prof = profile(&p).unwrap();
    let och = sbfl_scores(&prof, &p, SbflFormula::Ochiai);
    // Both tests cover every statement of foo, so coverage cannot separate them.
    assert_eq!(och.len(), 3);
    assert!(och.values().all(|&s| (s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15));
    let r = sbfl_report(&prof, &p, SbflFormula::DStar);
    assert_eq!(r.order(), p.candidates());
    assert!(r.entries.iter().all(|e| e.dstar == Some(1.0)));
}

#[test]
fn topk_hits() {
    let p = parse(&format!(
        "fn f(a) {{\n{}  return a;\n}}\nfn test_t() {{ assert(f(1) == 1); }}\n",
        "  a = a + 0;\n".repeat(11)
    ))
    .unwrap();
    let c = p.candidates();
    let r = order_scores(&scores(&p, &(0..c.len()).map(|i| 1.0 - i as f64 * 0.01).collect::<Vec<_>>()), &p);
    let gt = |ranks: &[usize]| ranks.iter().map(|&k| r.entries[k - 1].stmt).collect::<BTreeSet<_>>();
    let hits = |t: TopK| t.hits.values().copied().collect::<Vec<bool>>();
    assert_eq!(hits(topk_eval(&r, &gt(&[1]), &DEFAULT_KS).unwrap()), [true; 4]);
    assert_eq!(
        hits(topk_eval(&r, &gt(&[7]), &DEFAULT_KS).unwrap()),
        [false, false, false, true]
    );
    let t = topk_eval(&r, &gt(&[4, 9]), &DEFAULT_KS).unwrap();
    assert_eq!(t.best_rank, 4);
    assert_eq!(hits(t), [false, false, true, true]);
    assert_eq!(
        topk_eval(&r, &BTreeSet::new(), &DEFAULT_KS),
        Err(RankingError::EmptyGroundTruth)
    );
}

#[test]
fn method_aggregation() {
    let p = three_fn_program();
    // f owns two statements, g and h one each.
    let r = order_scores(&scores(&p, &[0.9, 0.1, 0.5, 0.5]), &p);
    let m = method_level(&r);
    let names: Vec<&str> = m.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["f", "g", "h"]);
    assert_eq!(m[0].1, 0.9);

    let single = parse("fn only(a) { return a; }\nfn test_t() { assert(only(1) == 1); }").unwrap();
    let r = order_scores(&scores(&single, &[0.4]), &single);
    assert_eq!(method_level(&r)[0].0, "only");
}

#[test]
fn combine_scores_by_rank() {
    let p = three_fn_program();
    let r = order_scores(&scores(&p, &[0.4, 0.3, 0.2, 0.1]), &p);
    let s: Vec<f64> = export_combine_scores(&r).into_iter().map(|(_, x)| x).collect();
    assert_eq!(s, [1.0, 0.75, 0.5, 0.25]);
    let single = parse("fn only(a) { return a; }").unwrap();
    let r = order_scores(&scores(&single, &[0.4]), &single);
    assert_eq!(export_combine_scores(&r), vec![(single.candidates()[0], 1.0)]);
}

#[test]
fn report_writers() {
    let p = parse(corpus::COND_TEST).unwrap();
    let prof = profile(&p).unwrap();
    let r = sbfl_report(&prof, &p, SbflFormula::Ochiai);
    let mut buf = Vec::new();
    write_report_jsonl(&r, &p, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 3);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["rank"], 1);
    assert!(first["location"].as_str().unwrap().ends_with(":3"));
    let table = render_table(&r, &p);
    assert_eq!(table.lines().count(), 5);
}
