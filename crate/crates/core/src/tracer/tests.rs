use super::*;
use crate::corpus;
use crate::minilang::parse;

fn ev_kinds(t: &Trace) -> Vec<&'static str> {
    t.events.iter().map(TraceEvent::kind_name).collect()
}

fn lines(p: &Program, t: &Trace) -> Vec<u32> {
    t.events
        .iter()
        .map(|e| p.stmt(e.stmt()).unwrap().line)
        .collect()
}

#[test]
fn profile_of_cond_test() {
    let p = parse(corpus::COND_TEST).unwrap();
    let prof = profile(&p).unwrap();
    let pass = prof.get("test_pass").unwrap();
    let fail = prof.get("test_fail").unwrap();
    assert_eq!(pass.status, TestStatus::Pass);
    assert_eq!(fail.status, TestStatus::Fail(FailReason::Assertion));
    let names = |t: &TestCoverage| t.functions.iter().cloned().collect::<Vec<_>>();
    assert_eq!(names(pass), vec!["foo", "test_pass"]);
    assert_eq!(names(fail), vec!["foo", "test_fail"]);
    assert_eq!((prof.failing(), prof.passing()), (1, 1));
}

#[test]
fn constant_assertion_covers_only_itself() {
    let p = parse("fn helper() { return 1; }\nfn test_t() { assert(true); }").unwrap();
    let prof = profile(&p).unwrap();
    let t = prof.get("test_t").unwrap();
    assert_eq!(t.status, TestStatus::Pass);
    assert_eq!(t.functions.iter().collect::<Vec<_>>(), vec!["test_t"]);
}

#[test]
fn infinite_loop_times_out() {
    let src = "fn spin() { let i = 0; while (true) { i = i + 1; } }\nfn test_t() { spin(); }";
    let p = parse(src).unwrap();
    let prof = profile(&p).unwrap();
    let t = prof.get("test_t").unwrap();
    assert_eq!(t.status, TestStatus::Fail(FailReason::Timeout));
    assert!(t.functions.contains("spin"));
    let tr = trace(&p, "test_t", &["spin"], TraceOptions::default()).unwrap();
    assert_eq!(tr.status, TestStatus::Fail(FailReason::Timeout));
    // Budget counts statements and calls, so the trace stops short of it.
    assert!(tr.len() < DEFAULT_STEP_BUDGET as usize);
    assert!(tr.len() > 100_000);
}

#[test]
fn no_tests_is_an_error() {
    let p = parse("fn f() { return 1; }").unwrap();
    assert!(matches!(profile(&p), Err(TraceError::NoTests)));
}

#[test]
fn failing_cond_trace_matches_worked_example() {
    let p = parse(corpus::COND_TEST).unwrap();
    let t = trace(&p, "test_fail", &["foo"], TraceOptions::default()).unwrap();
    assert_eq!(
        ev_kinds(&t),
        vec!["enter", "exec", "exec", "exec", "exit", "assert"]
    );
    assert_eq!(lines(&p, &t), vec![12, 3, 4, 6, 12, 12]);
    let v = ValueId;
    assert_eq!(t.inputs, vec![v(0)]);
    assert_eq!(t.events[1].reads(), vec![v(0)]);
    assert_eq!(t.events[1].writes(), vec![v(1)]);
    assert_eq!(t.events[2].reads(), vec![v(0)]);
    assert_eq!(t.events[2].writes(), vec![v(2)]);
    assert_eq!(t.events[3].reads(), vec![v(2)]);
    assert_eq!(t.events[3].writes(), vec![v(3)]);
    assert_eq!(
        t.events[5],
        TraceEvent::AssertOutcome {
            stmt: t.events[5].stmt(),
            value: v(3),
            outcome: false
        }
    );
}

#[test]
fn untraced_callee_collapses_to_summary() {
    let p = parse(corpus::COND_TEST).unwrap();
    let none: [&str; 0] = [];
    let t = trace(&p, "test_fail", &none, TraceOptions::default()).unwrap();
    assert_eq!(ev_kinds(&t), vec!["summary", "assert"]);
    assert_eq!(t.events[0].reads(), vec![ValueId(0)]);
    assert_eq!(t.events[0].writes(), vec![ValueId(1)]);
    assert_eq!(t.events[1].reads(), vec![ValueId(1)]);
}

#[test]
fn traced_callback_nests_inside_untraced_driver() {
    let p = parse(corpus::DRIVER).unwrap();
    let t = trace(&p, "test_driver", &["callback"], TraceOptions::default()).unwrap();
    assert_eq!(
        ev_kinds(&t),
        vec!["enter-summary", "enter", "exec", "exit", "summary", "exec", "assert"]
    );
    let cb = p.function_index("callback").unwrap() as FnIdx;
    let drv = p.function_index("driver").unwrap() as FnIdx;
    match &t.events[1] {
        TraceEvent::CallEnter {
            callee,
            args,
            params,
            ..
        } => {
            assert_eq!(*callee, cb);
            assert!(args.is_empty());
            assert_eq!(params.len(), 1);
        }
        other => panic!("unexpected {other:?}"),
    }
    match &t.events[4] {
        TraceEvent::CallSummary { callee, reads, .. } => {
            assert_eq!(*callee, drv);
            assert_eq!(reads, &t.inputs);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(t.status, TestStatus::Pass);
}

#[test]
fn array_writes_chain_versions() {
    let src = "fn f(xs) { xs[0] = 5; return xs[0] + xs[1]; }\nfn test_t() { let a = [1, 2]; assert(f(a) == 7); }";
    let p = parse(src).unwrap();
    let t = trace(&p, "test_t", &["f"], TraceOptions::default()).unwrap();
    assert_eq!(t.status, TestStatus::Pass);
    // let a, enter, index assign, return, exit, assert exec, outcome
    let ver0 = t.events[0].writes()[0];
    let ver1 = t.events[2].writes()[0];
    assert_eq!(t.events[2].reads(), vec![ver0]);
    assert_eq!(t.events[3].reads(), vec![ver1, ver1]);
}

#[test]
fn caught_exception_records_unwinding() {
    let src = "fn g(a) { return 10 / a; }\nfn f(a) { let r = 0; try { r = g(a); } catch (e) { r = e; } return r; }\nfn test_t() { assert(f(0) == 1001); }";
    let p = parse(src).unwrap();
    let t = trace(&p, "test_t", &["f", "g"], TraceOptions::default()).unwrap();
    assert_eq!(t.status, TestStatus::Pass);
    let catch = t
        .events
        .iter()
        .find_map(|e| match e {
            TraceEvent::ExceptionCatch {
                thrown, unwound, ..
            } => Some((*thrown, *unwound)),
            _ => None,
        })
        .unwrap();
    assert_eq!(catch.1, 1);
    let thrower = t
        .events
        .iter()
        .find(|e| e.writes().contains(&catch.0.unwrap()))
        .unwrap();
    assert_eq!(p.stmt(thrower.stmt()).unwrap().line, 1);
}

#[test]
fn uncaught_exception_is_failure_evidence() {
    let src = "fn g(a) { return 10 / a; }\nfn test_t() { assert(g(0) == 1); }";
    let p = parse(src).unwrap();
    let t = trace(&p, "test_t", &["g"], TraceOptions::default()).unwrap();
    assert_eq!(t.status, TestStatus::Fail(FailReason::Exception));
    match t.events.last().unwrap() {
        TraceEvent::AssertOutcome { value, outcome, .. } => {
            assert!(!outcome);
            let producer = t.events.iter().find(|e| e.writes().contains(value)).unwrap();
            assert_eq!(p.stmt(producer.stmt()).unwrap().line, 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn trace_file_round_trips() {
    let p = parse(corpus::DRIVER).unwrap();
    let t = trace(&p, "test_driver", &["callback"], TraceOptions::default()).unwrap();
    let mut buf = Vec::new();
    write_trace(&t, &p, &mut buf).unwrap();
    let back = read_trace(&p, &mut buf.as_slice()).unwrap();
    assert_eq!(back, t);
    let mut again = Vec::new();
    write_trace(&back, &p, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn statuses_agree_between_modes() {
    for src in corpus::PROGRAMS.iter().map(|(_, s)| *s) {
        let p = parse(src).unwrap();
        let prof = profile(&p).unwrap();
        let all: Vec<&str> = p.functions.iter().map(|f| f.name.as_str()).collect();
        for tc in &prof.tests {
            let t = trace(&p, &tc.test, &all, TraceOptions::default()).unwrap();
            assert_eq!(t.status, tc.status, "{}", tc.test);
            for e in &t.events {
                if let TraceEvent::Exec { stmt, .. } = e {
                    assert!(tc.statements.contains(stmt));
                }
            }
        }
    }
}
