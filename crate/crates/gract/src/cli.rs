//! The `gract` command line.

use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use gract_core::ast::{Configuration, Program};
use gract_core::explorer::{
    check_subject_reduction, expand, explore_with, helpful_run, ExploreOptions, Exploration, Verdict,
};
use gract_core::grades::ActorContext;
use gract_core::parser::{parse_actor_context, parse_program};
use gract_core::semantics::{run, FifoScheduler, RandomScheduler, RunStatus, Trace};
use gract_core::typing::{check_program, Checker, Hints, ProgramReport};
use rayon::prelude::*;
use serde_json::json;

use crate::json;
use crate::script::{parse_script, ScriptScheduler};

pub mod exit {
    pub const OK: i32 = 0;
    pub const TYPE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const IO: i32 = 3;
    pub const STUCK: i32 = 4;
    pub const SUBJECT_REDUCTION: i32 = 5;
    pub const NOT_FAIR: i32 = 6;
}

#[derive(Parser, Debug)]
#[command(name = "gract", version, about = "Check, run and explore resource-aware active-object programs")]
pub struct Cli {
    /// Machine-readable output (JSON, or JSON lines for traces).
    #[arg(long, global = true)]
    pub json: bool,
    /// Print only the final result.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Type-check a program and its initial configuration.
    Check {
        file: PathBuf,
        /// Replace the initial actor context, e.g. `Barista: CleanCup^0`.
        #[arg(long)]
        init: Option<String>,
    },
    /// Execute one run and print its trace.
    Run {
        file: PathBuf,
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = Strategy::Random)]
        strategy: Strategy,
        /// Follow a `rule actor` script instead of a strategy.
        #[arg(long, conflicts_with = "strategy")]
        script: Option<PathBuf>,
        /// Run even if the program does not typecheck.
        #[arg(long = "unsafe")]
        unsafe_: bool,
    },
    /// Explore the reachable state space and report a termination verdict.
    Explore {
        file: PathBuf,
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 500)]
        depth: usize,
        #[arg(long, default_value_t = 200_000)]
        states: usize,
        /// Calls into recursive methods allowed along one path.
        #[arg(long, default_value_t = 2)]
        unfold: u32,
        /// Explore without typing states (no measure laws).
        #[arg(long = "unsafe")]
        unsafe_: bool,
        /// Worker threads; 1 explores sequentially.
        #[arg(long, short)]
        jobs: Option<usize>,
    },
    /// Check that typing is preserved along runs.
    Sr {
        file: PathBuf,
        #[arg(long)]
        init: Option<String>,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        /// Re-check a JSON-lines trace instead of generating runs.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Strategy {
    /// Uniform choice from a seeded stream.
    Random,
    /// Always the leftmost enabled process.
    Fifo,
    /// A successor of least measure at every step.
    Helpful,
}

/// A failure that ends the command with a given exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure { code, message: message.into() }
}

struct Out {
    json: bool,
    quiet: bool,
    color: bool,
}

impl Out {
    fn paint(&self, s: &str, ok: bool) -> String {
        if self.color {
            format!("\x1b[{}m{s}\x1b[0m", if ok { 32 } else { 31 })
        } else {
            s.to_string()
        }
    }
}

fn color_enabled() -> bool {
    match std::env::var("GRACT_COLOR").as_deref() {
        Ok("always") => true,
        Ok("never") => false,
        _ => std::io::stdout().is_terminal(),
    }
}

fn load(file: &Path, init: Option<&str>) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(file).map_err(|e| fail(exit::IO, format!("{}: {e}", file.display())))?;
    let prog = parse_program(&src).map_err(|e| fail(exit::PARSE, format!("{}:{e}", file.display())))?;
    match init {
        None => Ok(prog),
        Some(ctx) => {
            let ctx = parse_actor_context(ctx, &prog.grades).map_err(|e| fail(exit::PARSE, format!("--init: {e}")))?;
            Ok(prog.with_init(ctx))
        }
    }
}

fn require_typed(out: &Out, prog: &Program) -> Result<ProgramReport, Failure> {
    let report = check_program(prog);
    if report.ok() {
        return Ok(report);
    }
    if out.json {
        println!("{}", json::typing_report(&report));
    }
    let lines: Vec<String> = report.errors().iter().map(|e| format!("type error: {e}")).collect();
    Err(fail(exit::TYPE, lines.join("\n")))
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    let out = Out { json: cli.json, quiet: cli.quiet, color: color_enabled() };
    let result = match cli.cmd {
        Cmd::Check { file, init } => check(&out, &file, init.as_deref()),
        Cmd::Run { file, init, seed, steps, strategy, script, unsafe_ } => {
            run_cmd(&out, &file, init.as_deref(), seed, steps, strategy, script.as_deref(), unsafe_)
        }
        Cmd::Explore { file, init, depth, states, unfold, unsafe_, jobs } => {
            let opts = ExploreOptions { max_depth: depth, max_states: states, unfold, typed: !unsafe_ };
            explore_cmd(&out, &file, init.as_deref(), opts, jobs)
        }
        Cmd::Sr { file, init, runs, seed, steps, replay } => {
            sr_cmd(&out, &file, init.as_deref(), runs, seed, steps, replay.as_deref())
        }
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(code) => code,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("gract: {}", f.message);
            }
            f.code
        }
    }
}

fn check(out: &Out, file: &Path, init: Option<&str>) -> Result<i32, Failure> {
    let prog = load(file, init)?;
    let report = check_program(&prog);
    if out.json {
        println!("{}", json::typing_report(&report));
    } else {
        if !out.quiet {
            for m in &report.methods {
                let status = out.paint(if m.ok() { "ok" } else { "FAIL" }, m.ok());
                let measure = m.computed.as_ref().map_or("-".to_string(), |c| c.measure.to_string());
                println!("{}.{}  {status}  measure {measure}", m.actor, m.method);
                for e in &m.errors {
                    println!("  {e}");
                }
            }
            match &report.config {
                Ok(pt) => println!("init  {}  measure {}", out.paint("ok", true), pt.measure),
                Err(e) => println!("init  {}\n  {e}", out.paint("FAIL", false)),
            }
        }
        println!("{}", if report.ok() { out.paint("well-typed", true) } else { out.paint("ill-typed", false) });
    }
    Ok(if report.ok() { exit::OK } else { exit::TYPE })
}

/// Measures of successive configurations, as long as they typecheck.
fn measures<'a>(prog: &Program, configs: impl Iterator<Item = &'a Configuration>) -> Vec<Option<u64>> {
    let checker = Checker::new(prog);
    let mut hints = Hints::new();
    configs
        .map(|c| match checker.type_config(c, &ActorContext::new(), &hints) {
            Ok(pt) => {
                hints = pt.future_types();
                Some(pt.measure)
            }
            Err(_) => None,
        })
        .collect()
}

fn print_trace(out: &Out, prog: &Program, trace: &Trace, typed: bool) {
    let ms = if typed { measures(prog, trace.configs()) } else { vec![None; trace.steps.len() + 1] };
    if out.json {
        if !out.quiet {
            println!("{}", json::trace_line(0, Some("init"), None, ms[0], &trace.initial));
            for (i, s) in trace.steps.iter().enumerate() {
                println!("{}", json::trace_line(i + 1, Some(s.rule.as_str()), Some(s.label.to_string()), ms[i + 1], &s.next));
            }
        }
        println!("{}", json::status_line(&trace.status, trace.steps.len()));
        return;
    }
    if !out.quiet {
        let m = |i: usize| ms[i].map_or(String::new(), |n| format!("  [{n}]"));
        println!("   0  {}{}", trace.initial, m(0));
        for (i, s) in trace.steps.iter().enumerate() {
            println!("{:>4}  {:<6} {:<10} {}{}", i + 1, s.rule.as_str(), s.actor, s.label, m(i + 1));
            println!("      {}", s.next);
        }
    }
    match &trace.status {
        RunStatus::Terminated => println!("{} after {} steps", out.paint("terminated", true), trace.steps.len()),
        RunStatus::Stuck(why) => {
            println!("{} after {} steps", out.paint("stuck", false), trace.steps.len());
            for w in why {
                println!("  {w}");
            }
        }
        RunStatus::BoundExhausted => println!("step bound reached after {} steps", trace.steps.len()),
        RunStatus::Aborted => println!("stopped by the scheduler after {} steps", trace.steps.len()),
    }
}

fn status_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Terminated => exit::OK,
        RunStatus::Stuck(_) => exit::STUCK,
        RunStatus::BoundExhausted | RunStatus::Aborted => exit::NOT_FAIR,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_cmd(
    out: &Out,
    file: &Path,
    init: Option<&str>,
    seed: u64,
    steps: usize,
    strategy: Strategy,
    script: Option<&Path>,
    unsafe_: bool,
) -> Result<i32, Failure> {
    let prog = load(file, init)?;
    if !unsafe_ {
        require_typed(out, &prog)?;
    }
    let start = prog.initial_config();
    if let Some(path) = script {
        let text = std::fs::read_to_string(path).map_err(|e| fail(exit::IO, format!("{}: {e}", path.display())))?;
        let entries = parse_script(&text).map_err(|e| fail(exit::PARSE, format!("{}: {e}", path.display())))?;
        let mut sched = ScriptScheduler::new(entries);
        let bound = steps.min(sched.len());
        let trace = run(&prog, start, &mut sched, bound);
        print_trace(out, &prog, &trace, !unsafe_);
        if let Some(k) = sched.mismatch {
            return Err(fail(exit::NOT_FAIR, format!("script entry {} cannot fire", k + 1)));
        }
        // a fully replayed script is a success even if the run goes on
        return Ok(match trace.status {
            RunStatus::BoundExhausted if trace.steps.len() == sched.len() => exit::OK,
            ref s => status_code(s),
        });
    }
    let trace = match strategy {
        Strategy::Random => run(&prog, start, &mut RandomScheduler::new(seed), steps),
        Strategy::Fifo => run(&prog, start, &mut FifoScheduler, steps),
        Strategy::Helpful => {
            if unsafe_ {
                return Err(fail(exit::TYPE, "the helpful strategy needs measures; drop --unsafe"));
            }
            let h = helpful_run(&prog, &start, &Hints::new()).map_err(|e| fail(exit::NOT_FAIR, e.to_string()))?;
            let path: Vec<_> = h.steps.iter().map(|s| (s.rule, s.actor.clone())).collect();
            run(&prog, start, &mut ScriptScheduler::new(path), steps.min(h.steps.len()))
        }
    };
    print_trace(out, &prog, &trace, !unsafe_);
    Ok(status_code(&trace.status))
}

fn explore_cmd(out: &Out, file: &Path, init: Option<&str>, opts: ExploreOptions, jobs: Option<usize>) -> Result<i32, Failure> {
    let prog = load(file, init)?;
    if opts.typed {
        require_typed(out, &prog)?;
    }
    let t0 = Instant::now();
    let start = prog.initial_config();
    let ex = match jobs {
        Some(1) => gract_core::explorer::explore(&prog, &start, &opts),
        _ => {
            let mut pool = rayon::ThreadPoolBuilder::new();
            if let Some(n) = jobs {
                pool = pool.num_threads(n);
            }
            let pool = pool.build().map_err(|e| fail(exit::IO, e.to_string()))?;
            pool.install(|| {
                explore_with(&prog, &start, &opts, &|rec, layer| {
                    layer.par_iter().map(|j| expand(&prog, rec, &opts, j)).collect()
                })
            })
        }
    };
    let elapsed = t0.elapsed();
    if out.json {
        let mut v = json::verdict(&ex);
        if let Some(m) = v.as_object_mut() {
            m.insert("elapsedMs".into(), json!(elapsed.as_millis() as u64));
        }
        println!("{v}");
    } else {
        print_exploration(out, &ex, elapsed.as_secs_f64());
    }
    Ok(explore_code(&ex))
}

pub fn explore_code(ex: &Exploration) -> i32 {
    match ex.verdict {
        Verdict::FairTerminating if ex.violations.is_empty() => exit::OK,
        Verdict::FairTerminating => exit::SUBJECT_REDUCTION,
        Verdict::StuckFound { .. } => exit::STUCK,
        _ => exit::NOT_FAIR,
    }
}

fn print_exploration(out: &Out, ex: &Exploration, secs: f64) {
    let fair = matches!(ex.verdict, Verdict::FairTerminating);
    println!("verdict: {}", out.paint(ex.verdict.name(), fair && ex.violations.is_empty()));
    if out.quiet {
        return;
    }
    println!(
        "states {}  edges {}  max depth {}  terminated {}  pruned {}  ({secs:.2}s)",
        ex.states, ex.edges, ex.max_depth, ex.terminated_states, ex.pruned_edges
    );
    for v in ex.violations.iter().take(10) {
        println!("  law violation at state {}: {}", v.state, v.kind);
    }
    match &ex.verdict {
        Verdict::StuckFound { state, diagnosis, trace } => {
            println!("stuck after {} steps:", trace.len());
            for s in trace {
                println!("  {:<6} {:<10} {}", s.rule.as_str(), s.actor, s.label);
            }
            println!("  state: {state}");
            for d in diagnosis {
                println!("  {d}");
            }
        }
        Verdict::WeaklyTerminatingWitness { trace, trapped } => {
            println!("{} steps lead to a state that cannot terminate:", trace.len());
            println!("  {trapped}");
        }
        Verdict::Divergent { state } => println!("no run terminates, e.g. from {state}"),
        Verdict::BoundExhausted { depth_hit, states_hit } => {
            println!("bounds hit: depth {depth_hit}, states {states_hit}");
        }
        Verdict::FairTerminating => {}
    }
}

fn sr_cmd(
    out: &Out,
    file: &Path,
    init: Option<&str>,
    runs: usize,
    seed: u64,
    steps: usize,
    replay: Option<&Path>,
) -> Result<i32, Failure> {
    let prog = load(file, init)?;
    if let Some(path) = replay {
        let text = std::fs::read_to_string(path).map_err(|e| fail(exit::IO, format!("{}: {e}", path.display())))?;
        let configs = json::decode_trace(&prog, &text).map_err(|e| fail(exit::PARSE, format!("{}: {e}", path.display())))?;
        return Ok(match check_subject_reduction(&prog, &configs) {
            Ok(_) => {
                report_sr(out, 1, configs.len(), None);
                exit::OK
            }
            Err(v) => {
                report_sr(out, 1, configs.len(), Some((0, &v)));
                exit::SUBJECT_REDUCTION
            }
        });
    }
    require_typed(out, &prog)?;
    let mut checked = 0;
    for i in 0..runs {
        let t = run(&prog, prog.initial_config(), &mut RandomScheduler::new(seed.wrapping_add(i as u64)), steps);
        checked += t.steps.len() + 1;
        if let Err(v) = check_subject_reduction(&prog, t.configs()) {
            report_sr(out, i + 1, checked, Some((i, &v)));
            return Ok(exit::SUBJECT_REDUCTION);
        }
    }
    report_sr(out, runs, checked, None);
    Ok(exit::OK)
}

fn report_sr(out: &Out, runs: usize, configs: usize, violation: Option<(usize, &gract_core::explorer::SrViolation)>) {
    if out.json {
        let v = json::tagged(json!({
            "ok": violation.is_none(),
            "runs": runs,
            "configurations": configs,
            "violation": violation.map(|(r, v)| json::sr_violation(r, v)),
        }));
        println!("{v}");
        return;
    }
    match violation {
        None => println!("{}: {configs} configurations over {runs} runs", out.paint("subject reduction holds", true)),
        Some((run, v)) => {
            let origin = if runs == 1 && run == 0 { "the trace".to_string() } else { format!("run {run}") };
            println!("{} in {origin} at step {}: {}", out.paint("subject reduction violated", false), v.index, v.kind);
        }
    }
}
