//! Bundled MiniImp programs used by tests, benchmarks and examples.

pub const COND_TEST: &str = include_str!("../corpus/cond_test.mi");
pub const DRIVER: &str = include_str!("../corpus/driver.mi");

pub const SORTING: &str = include_str!("../corpus/bench/sorting.mi");
pub const DIGITS: &str = include_str!("../corpus/bench/digits.mi");
pub const INTERVAL: &str = include_str!("../corpus/bench/interval.mi");
pub const STACK_MACHINE: &str = include_str!("../corpus/bench/stack_machine.mi");
pub const RECURRENCE: &str = include_str!("../corpus/bench/recurrence.mi");

/// Manifest of the benchmark programs, relative to `corpus/bench`.
pub const BENCH_MANIFEST: &str = include_str!("../corpus/bench/manifest.json");

/// Benchmark programs as `(file name, source)`.
pub const BENCH_PROGRAMS: &[(&str, &str)] = &[
    ("sorting.mi", SORTING),
    ("digits.mi", DIGITS),
    ("interval.mi", INTERVAL),
    ("stack_machine.mi", STACK_MACHINE),
    ("recurrence.mi", RECURRENCE),
];

/// Every bundled program as `(file name, source)`.
pub const PROGRAMS: &[(&str, &str)] = &[
    ("cond_test.mi", COND_TEST),
    ("driver.mi", DRIVER),
    ("sorting.mi", SORTING),
    ("digits.mi", DIGITS),
    ("interval.mi", INTERVAL),
    ("stack_machine.mi", STACK_MACHINE),
    ("recurrence.mi", RECURRENCE),
];
