use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use probfl::bench::{
    ablation_configs, bundled_programs, load_manifest, run_benchmark, seed_corpus, sweep_configs,
    BenchError, BenchResults, SWEEP_LOW, SWEEP_MODERATE,
};
use probfl::inference::{InferenceMode, DEFAULT_EXACT_CAP};
use probfl::minilang::Program;
use probfl::pipeline::{localize, PipelineError, RunConfig};
use probfl::ranking::{
    render_table, sbfl_report, write_combine_scores, write_report_jsonl, SbflFormula, DEFAULT_KS,
};
use probfl::tracer::{profile_with, trace, write_trace, TraceOptions};

/// Exit status for runs without a failing test.
const EXIT_NO_FAILING: u8 = 2;
/// Exit status for unparsable programs.
const EXIT_SYNTAX: u8 = 3;

#[derive(Parser)]
#[command(
    name = "probfl",
    version,
    about = "Probabilistic fault localization for MiniImp programs",
    after_help = "Defaults marked \"method default\" are the settings the localization method \
                  prescribes; \"implementation choice\" marks values this tool picked where the \
                  method leaves them open."
)]
struct Cli {
    /// Worker threads for tracing and benchmark cases (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the statements of a program by fault probability
    Localize {
        program: PathBuf,
        #[command(flatten)]
        opts: ModelOpts,
        /// Directory for report files
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record the coverage profile, or the value-level trace of one test
    Trace {
        program: PathBuf,
        /// Test to trace; without it the coverage profile is written
        #[arg(long)]
        test: Option<String>,
        /// Functions to trace besides the test (default: every function)
        #[arg(long, value_delimiter = ',')]
        functions: Option<Vec<String>>,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank statements with a spectrum-based formula
    Sbfl {
        program: PathBuf,
        #[arg(long, value_enum, default_value_t = Formula::Ochiai)]
        formula: Formula,
        /// Directory for report files
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize seeded mutants of a corpus and compare with the baselines
    Bench {
        #[command(flatten)]
        corpus: CorpusOpts,
        #[command(flatten)]
        opts: ModelOpts,
        /// Also run one configuration per disabled feature
        #[arg(long)]
        ablations: bool,
        /// Directory for results.jsonl, summary.txt and timings.tsv
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark over a grid of the two propagation constants
    Sweep {
        #[command(flatten)]
        corpus: CorpusOpts,
        #[command(flatten)]
        opts: ModelOpts,
        /// Directory for results.jsonl and sweep.txt
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Formula {
    Ochiai,
    Dstar,
}

#[derive(Args)]
struct CorpusOpts {
    /// Corpus manifest (default: the bundled corpus)
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Mutants drawn from each program (0 = every viable mutant)
    #[arg(long, default_value_t = 8)]
    per_program: usize,
    /// Seed for mutant selection [implementation choice]
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ModelOpts {
    /// Propagation constant of boolean-valued statements [method default]
    #[arg(long, default_value_t = 0.5)]
    p0_moderate: f64,
    /// Propagation constant of all other statements [method default]
    #[arg(long, default_value_t = 0.01)]
    p0_low: f64,
    /// Give returns and throws the constant of their expression's class
    /// instead of the low one [implementation choice: off]
    #[arg(long)]
    moderate_returns: bool,
    /// Prior probability that a statement is correct [method default]
    #[arg(long, default_value_t = 0.5)]
    prior: f64,
    /// Passing tests kept by test reduction [method default]
    #[arg(long, default_value_t = 50)]
    max_passing_tests: usize,
    /// Event count above which a trace is folded [method default]
    #[arg(long, default_value_t = 1_200_000)]
    trace_limit: usize,
    /// Total events admitted into the model [method default]
    #[arg(long, default_value_t = 1_000_000)]
    model_limit: usize,
    /// Belief-propagation iteration cap [implementation choice]
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Convergence threshold on message change [implementation choice]
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    /// Compute factor messages by enumeration
    #[arg(long, conflicts_with = "exact")]
    naive_inference: bool,
    /// Exact posteriors by enumeration (small models only) [cap: implementation choice]
    #[arg(long)]
    exact: bool,
    /// Free-variable cap of --exact [implementation choice]
    #[arg(long, default_value_t = DEFAULT_EXACT_CAP)]
    exact_cap: usize,
    #[arg(long)]
    no_loop_compression: bool,
    #[arg(long)]
    no_adaptive_folding: bool,
    #[arg(long)]
    no_virtual_call_edges: bool,
    #[arg(long)]
    no_exception_control: bool,
    #[arg(long)]
    no_test_reduction: bool,
}

impl ModelOpts {
    fn config(&self) -> RunConfig {
        let mut c = RunConfig::default();
        c.model.p0_moderate = self.p0_moderate;
        c.model.p0_low = self.p0_low;
        c.model.statement_prior = self.prior;
        c.model.moderate_returns = self.moderate_returns;
        c.reduction.max_passing_tests = self.max_passing_tests;
        c.reduction.trace_limit = self.trace_limit;
        c.reduction.model_limit = self.model_limit;
        c.reduction.loop_compression = !self.no_loop_compression;
        c.reduction.adaptive_folding = !self.no_adaptive_folding;
        c.reduction.test_reduction = !self.no_test_reduction;
        c.ddg.virtual_call_edges = !self.no_virtual_call_edges;
        c.ddg.exception_control = !self.no_exception_control;
        c.inference.max_iterations = self.max_iters;
        c.inference.convergence_eps = self.eps;
        c.inference.exact_cap = self.exact_cap;
        c.inference.mode = if self.exact {
            InferenceMode::Exact
        } else if self.naive_inference {
            InferenceMode::Naive
        } else {
            InferenceMode::Optimized
        };
        c
    }
}

/// Failure with a dedicated exit status.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
        {
            log::warn!("thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Exit>() {
                Some(Exit(code, _)) => ExitCode::from(*code),
                None => ExitCode::from(1),
            }
        }
    }
}

fn load_program(path: &Path) -> Result<Program> {
    let src =
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Program::parse(&src, &path.display().to_string())
        .map_err(|e| Exit(EXIT_SYNTAX, format!("{}: {e}", path.display())).into())
}

fn pipeline_error(e: PipelineError) -> anyhow::Error {
    match e {
        PipelineError::NoFailingTests => Exit(EXIT_NO_FAILING, "no failing tests".into()).into(),
        e => e.into(),
    }
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Localize { program, opts, out } => cmd_localize(&program, &opts, out.as_deref()),
        Command::Trace {
            program,
            test,
            functions,
            out,
        } => cmd_trace(&program, test.as_deref(), functions, out.as_deref()),
        Command::Sbfl {
            program,
            formula,
            out,
        } => cmd_sbfl(&program, formula, out.as_deref()),
        Command::Bench {
            corpus,
            opts,
            ablations,
            out,
        } => {
            let base = opts.config();
            let configs = if ablations {
                ablation_configs(&base)
            } else {
                vec![("default".to_string(), base)]
            };
            let results = bench(&corpus, &configs)?;
            let summary = results.render_summary();
            print!("{summary}");
            if let Some(dir) = out {
                let mut buf = Vec::new();
                results.write_jsonl(&mut buf)?;
                write_file(&dir, "results.jsonl", &buf)?;
                write_file(&dir, "summary.txt", summary.as_bytes())?;
                let mut t = Vec::new();
                results.write_timings(&mut t)?;
                write_file(&dir, "timings.tsv", &t)?;
            }
            Ok(())
        }
        Command::Sweep { corpus, opts, out } => {
            let configs = sweep_configs(&opts.config(), &SWEEP_MODERATE, &SWEEP_LOW);
            let results = bench(&corpus, &configs)?;
            let table = sweep_table(&results);
            print!("{table}");
            if let Some(dir) = out {
                let mut buf = Vec::new();
                results.write_jsonl(&mut buf)?;
                write_file(&dir, "results.jsonl", &buf)?;
                write_file(&dir, "sweep.txt", table.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn cmd_localize(path: &Path, opts: &ModelOpts, out: Option<&Path>) -> Result<()> {
    let program = load_program(path)?;
    let cfg = opts.config();
    let l = localize(&program, &cfg).map_err(pipeline_error)?;
    let table = render_table(&l.report, &program);
    print!("{table}");
    let t = l.timings;
    log::info!(
        "profiling {:.3}s, tracing {:.3}s, modeling {:.3}s",
        t.profiling.as_secs_f64(),
        t.tracing.as_secs_f64(),
        t.modeling.as_secs_f64()
    );
    if let Some(dir) = out {
        let mut buf = Vec::new();
        write_report_jsonl(&l.report, &program, &mut buf)?;
        write_file(dir, "report.jsonl", &buf)?;
        write_file(dir, "report.txt", table.as_bytes())?;
        let mut c = Vec::new();
        write_combine_scores(&l.report, &mut c)?;
        write_file(dir, "combine.tsv", &c)?;
        write_file(dir, "reduction.txt", l.log.to_string().as_bytes())?;
        let timing = format!(
            "profiling\t{:.6}\ntracing\t{:.6}\nmodeling\t{:.6}\n",
            t.profiling.as_secs_f64(),
            t.tracing.as_secs_f64(),
            t.modeling.as_secs_f64()
        );
        write_file(dir, "timings.tsv", timing.as_bytes())?;
    }
    Ok(())
}

fn cmd_trace(
    path: &Path,
    test: Option<&str>,
    functions: Option<Vec<String>>,
    out: Option<&Path>,
) -> Result<()> {
    let program = load_program(path)?;
    let mut buf = Vec::new();
    match test {
        None => {
            let prof = profile_with(&program, probfl::tracer::DEFAULT_STEP_BUDGET)?;
            prof.write_jsonl(&mut buf)?;
        }
        Some(test) => {
            let functions = functions.unwrap_or_else(|| {
                program
                    .functions
                    .iter()
                    .filter(|f| !f.is_test())
                    .map(|f| f.name.clone())
                    .collect()
            });
            let t = trace(&program, test, &functions, TraceOptions::default())?;
            write_trace(&t, &program, &mut buf)?;
        }
    }
    match out {
        Some(p) => fs::write(p, &buf).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().write_all(&buf)?),
    }
}

fn cmd_sbfl(path: &Path, formula: Formula, out: Option<&Path>) -> Result<()> {
    let program = load_program(path)?;
    let prof = profile_with(&program, probfl::tracer::DEFAULT_STEP_BUDGET)?;
    if prof.failing() == 0 {
        return Err(Exit(EXIT_NO_FAILING, "no failing tests".into()).into());
    }
    let f = match formula {
        Formula::Ochiai => SbflFormula::Ochiai,
        Formula::Dstar => SbflFormula::DStar,
    };
    let report = sbfl_report(&prof, &program, f);
    let table = render_table(&report, &program);
    print!("{table}");
    if let Some(dir) = out {
        let mut buf = Vec::new();
        write_report_jsonl(&report, &program, &mut buf)?;
        write_file(dir, "report.jsonl", &buf)?;
        write_file(dir, "report.txt", table.as_bytes())?;
    }
    Ok(())
}

fn bench(corpus: &CorpusOpts, configs: &[(String, RunConfig)]) -> Result<BenchResults> {
    let programs = match &corpus.manifest {
        Some(m) => {
            let text =
                fs::read_to_string(m).with_context(|| format!("reading {}", m.display()))?;
            let dir = m.parent().unwrap_or(Path::new("."));
            load_manifest(&text, dir)
        }
        None => bundled_programs(),
    }
    .map_err(bench_error)?;
    let per_program = match corpus.per_program {
        0 => usize::MAX,
        n => n,
    };
    let cases = seed_corpus(&programs, per_program, corpus.seed).map_err(bench_error)?;
    log::info!("{} cases, {} configurations", cases.len(), configs.len());
    Ok(run_benchmark(&cases, configs))
}

fn bench_error(e: BenchError) -> anyhow::Error {
    match e {
        BenchError::Syntax { .. } => Exit(EXIT_SYNTAX, e.to_string()).into(),
        e => e.into(),
    }
}

/// One row per configuration with the probabilistic ranking's hit counts.
fn sweep_table(results: &BenchResults) -> String {
    let mut out = format!("{:<28} {:>6}", "config", "cases");
    for k in DEFAULT_KS {
        out.push_str(&format!(" {:>7}", format!("top-{k}")));
    }
    out.push('\n');
    for (config, s) in results.summary() {
        out.push_str(&format!("{config:<28} {:>6}", s.cases));
        for k in DEFAULT_KS {
            out.push_str(&format!(" {:>7}", s.probabilistic.get(&k).copied().unwrap_or(0)));
        }
        out.push('\n');
    }
    out
}
