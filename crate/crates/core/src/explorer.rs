//! Bounded state-space exploration, runtime subject-reduction checks and
//! measure-guided runs.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::ast::{Atom, CallMsg, Configuration, Expr, LocalEnv, Process, Program, Thread, Value, ValueExpr, independent};
use crate::grades::ActorContext;
use crate::name::Name;
use crate::semantics::{Label, Rule, StepResult, Stuck, awaited_future, diagnose, step_config_diag};
use crate::typing::{recursive_methods, Checker, Hints, Loc, ProcTyping, TypeError};

// ---------------------------------------------------------------------------
// Canonical forms

fn map_ve(ve: &ValueExpr, fut: &dyn Fn(&Name) -> Name, var: &dyn Fn(&Name) -> Name) -> ValueExpr {
    match ve {
        ValueExpr::GradedVar(x, g) => ValueExpr::GradedVar(var(x), g.clone()),
        ValueExpr::Var(x) => ValueExpr::Var(var(x)),
        ValueExpr::Val(v) => ValueExpr::Val(map_value(v, fut)),
    }
}

fn map_value(v: &Value, fut: &dyn Fn(&Name) -> Name) -> Value {
    match v {
        Value::Fut(f) => Value::Fut(fut(f)),
        other => other.clone(),
    }
}

// Generated variables are never rebound inside an expression, so a plain
// traversal is capture-free.
fn map_expr(e: &Expr, fut: &dyn Fn(&Name) -> Name, var: &dyn Fn(&Name) -> Name) -> Expr {
    let ves = |args: &[ValueExpr]| args.iter().map(|a| map_ve(a, fut, var)).collect();
    match e {
        Expr::Call { actor, method, args } => Expr::Call { actor: actor.clone(), method: method.clone(), args: ves(args) },
        Expr::Await(ve) => Expr::Await(map_ve(ve, fut, var)),
        Expr::Hold(g, r) => Expr::Hold(g.clone(), r.clone()),
        Expr::Release(g, ve) => Expr::Release(g.clone(), map_ve(ve, fut, var)),
        Expr::Op(op, args) => Expr::Op(op.clone(), ves(args)),
        Expr::Choice(e1, e2) => Expr::choice(map_expr(e1, fut, var), map_expr(e2, fut, var)),
        Expr::Return(ve) => Expr::Return(map_ve(ve, fut, var)),
        Expr::Let(x, e1, e2) => Expr::let_in(x.clone(), map_expr(e1, fut, var), map_expr(e2, fut, var)),
    }
}

fn map_thread(t: &Thread, fut: &dyn Fn(&Name) -> Name, var: &dyn Fn(&Name) -> Name) -> Thread {
    Thread {
        env: LocalEnv(t.env.iter().map(|(x, v)| (var(x), map_value(v, fut))).collect()),
        expr: map_expr(&t.expr, fut, var),
        future: fut(&t.future),
        actor: t.actor.clone(),
    }
}

fn map_atom(a: &Atom, fut: &dyn Fn(&Name) -> Name, var: &dyn Fn(&Name) -> Name) -> Atom {
    match a {
        Atom::Active(t) => Atom::Active(map_thread(t, fut, var)),
        Atom::Suspended(t) => Atom::Suspended(map_thread(t, fut, var)),
        Atom::Idle(a) => Atom::Idle(a.clone()),
        Atom::Call(m) => Atom::Call(CallMsg {
            future: fut(&m.future),
            actor: m.actor.clone(),
            method: m.method.clone(),
            args: m.args.iter().map(|v| map_value(v, fut)).collect(),
        }),
        Atom::Fulfilled(f, v) => Atom::Fulfilled(fut(f), map_value(v, fut)),
    }
}

fn future_occurrences(a: &Atom, out: &mut Vec<Name>) {
    let mut push = |f: &Name| {
        if !out.contains(f) {
            out.push(f.clone());
        }
    };
    match a {
        Atom::Active(t) | Atom::Suspended(t) => {
            push(&t.future);
            t.env.iter().filter_map(|(_, v)| v.future()).for_each(&mut push);
            let mut ves = Vec::new();
            t.expr.value_exprs(&mut ves);
            ves.iter().filter_map(|ve| match ve {
                ValueExpr::Val(Value::Fut(f)) => Some(f),
                _ => None,
            })
            .for_each(&mut push);
        }
        Atom::Call(m) => {
            push(&m.future);
            m.args.iter().filter_map(Value::future).for_each(&mut push);
        }
        Atom::Fulfilled(f, v) => {
            push(f);
            v.future().into_iter().for_each(&mut push);
        }
        Atom::Idle(_) => {}
    }
}

fn is_generated_var(x: &Name) -> bool {
    x.generated_index("y").is_some()
}

/// A configuration in normal form together with the future renaming that
/// produced it.
#[derive(Clone, Debug)]
pub struct Canonical {
    pub config: Configuration,
    pub futures: BTreeMap<Name, Name>,
}

/// Normal form modulo the precongruence: threads blocked on an await are
/// shown yielded, swap-independent atoms are ordered by a name-insensitive
/// key, and generated names are renumbered by first occurrence.
pub fn canonicalize(cfg: &Configuration) -> Canonical {
    let mut atoms: Vec<Atom> = Vec::with_capacity(cfg.process.0.len() + 1);
    for a in &cfg.process.0 {
        match a {
            Atom::Active(t) if awaited_future(&t.env, &t.expr).is_some() => {
                atoms.push(Atom::Idle(t.actor.clone()));
                atoms.push(Atom::Suspended(t.clone()));
            }
            other => atoms.push(other.clone()),
        }
    }

    let mask_f = |f: &Name| if f.generated_index("f").is_some() { Name::new("f#") } else { f.clone() };
    let mask_v = |x: &Name| if is_generated_var(x) { Name::new("y#") } else { x.clone() };
    let keys: Vec<String> = atoms.iter().map(|a| map_atom(a, &mask_f, &mask_v).to_string()).collect();

    // Smallest topological order of the dependency relation.
    let n = atoms.len();
    let mut indeg = alloc::vec![0usize; n];
    let mut succ = alloc::vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if !independent(&atoms[i], &atoms[j]) {
                succ[i].push(j);
                indeg[j] += 1;
            }
        }
    }
    let mut ready: BTreeSet<(&str, usize)> = (0..n).filter(|&i| indeg[i] == 0).map(|i| (keys[i].as_str(), i)).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(first) = ready.pop_first() {
        let i = first.1;
        order.push(i);
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                ready.insert((keys[j].as_str(), j));
            }
        }
    }
    let ordered: Vec<Atom> = order.into_iter().map(|i| atoms[i].clone()).collect();

    let mut occ = Vec::new();
    for a in &ordered {
        future_occurrences(a, &mut occ);
    }
    let futures: BTreeMap<Name, Name> =
        occ.iter().enumerate().map(|(i, f)| (f.clone(), Name::new(&format!("f#{i}")))).collect();
    let fut = |f: &Name| futures.get(f).cloned().unwrap_or_else(|| f.clone());

    let mut max_var = 0usize;
    let mut process = Vec::with_capacity(ordered.len());
    for a in &ordered {
        let vars: BTreeMap<Name, Name> = match a {
            Atom::Active(t) | Atom::Suspended(t) => t
                .env
                .iter()
                .map(|(x, _)| x)
                .filter(|x| is_generated_var(x))
                .enumerate()
                .map(|(i, x)| (x.clone(), Name::new(&format!("y#{i}"))))
                .collect(),
            _ => BTreeMap::new(),
        };
        max_var = max_var.max(vars.len());
        let var = |x: &Name| vars.get(x).cloned().unwrap_or_else(|| x.clone());
        process.push(map_atom(a, &fut, &var));
    }
    let fresh = futures.len().max(max_var) as u64;
    Canonical { config: Configuration { ctx: cfg.ctx.clone(), process: Process(process), fresh }, futures }
}

/// Hash key of a canonical configuration.
pub fn state_key(canonical: &Configuration) -> String {
    format!("{canonical}")
}

fn rename_hints(h: &Hints, map: &BTreeMap<Name, Name>) -> Hints {
    h.iter().map(|(f, t)| (map.get(f).cloned().unwrap_or_else(|| f.clone()), t.clone())).collect()
}

// ---------------------------------------------------------------------------
// Subject reduction

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SrViolationKind {
    IllTyped(TypeError),
    ConsumedChanged,
    ProducedChanged(Name),
    FreshNotMarked(Name),
    NotFresh(Name),
}

impl fmt::Display for SrViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SrViolationKind::IllTyped(e) if e.loc == Loc::Unknown => {
                write!(f, "configuration no longer typechecks: {}", e.kind)
            }
            SrViolationKind::IllTyped(e) => write!(f, "configuration no longer typechecks: {e}"),
            SrViolationKind::ConsumedChanged => f.write_str("consumed future context changed"),
            SrViolationKind::ProducedChanged(x) => write!(f, "type of unmarked future `{x}` changed"),
            SrViolationKind::FreshNotMarked(x) => write!(f, "new future `{x}` is not marked"),
            SrViolationKind::NotFresh(x) => write!(f, "future `{x}` reappeared"),
        }
    }
}

/// First configuration (by index, 0 being the initial one) at which typing
/// is not preserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrViolation {
    pub index: usize,
    pub kind: SrViolationKind,
    pub before: Option<ProcTyping>,
}

impl fmt::Display for SrViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {}", self.index, self.kind)
    }
}

/// Compares two successive typings.
pub fn sr_step_ok(prev: &ProcTyping, next: &ProcTyping, seen: &BTreeSet<Name>) -> Result<(), SrViolationKind> {
    if prev.consumed != next.consumed {
        return Err(SrViolationKind::ConsumedChanged);
    }
    for (f, (t, marked)) in &prev.produced {
        if *marked {
            continue;
        }
        match next.produced.get(f) {
            Some((t2, _)) if t2 == t => {}
            _ => return Err(SrViolationKind::ProducedChanged(f.clone())),
        }
    }
    for (f, (_, marked)) in &next.produced {
        if prev.produced.contains_key(f) {
            continue;
        }
        if seen.contains(f) {
            return Err(SrViolationKind::NotFresh(f.clone()));
        }
        if !marked {
            return Err(SrViolationKind::FreshNotMarked(f.clone()));
        }
    }
    Ok(())
}

/// Re-types every configuration of a run, threading future types forward.
pub fn check_subject_reduction<'a>(
    prog: &Program,
    configs: impl IntoIterator<Item = &'a Configuration>,
) -> Result<Vec<ProcTyping>, SrViolation> {
    let checker = Checker::new(prog);
    let mut out: Vec<ProcTyping> = Vec::new();
    let mut seen: BTreeSet<Name> = BTreeSet::new();
    for (i, cfg) in configs.into_iter().enumerate() {
        let hints = out.last().map(ProcTyping::future_types).unwrap_or_default();
        let pt = checker.type_config(cfg, &ActorContext::new(), &hints).map_err(|e| SrViolation {
            index: i,
            kind: SrViolationKind::IllTyped(e),
            before: out.last().cloned(),
        })?;
        if let Some(prev) = out.last() {
            sr_step_ok(prev, &pt, &seen).map_err(|kind| SrViolation { index: i, kind, before: Some(prev.clone()) })?;
        }
        seen.extend(pt.produced.keys().cloned());
        out.push(pt);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Measure-guided runs

#[derive(Clone, Debug)]
pub struct PathStep {
    pub rule: Rule,
    pub actor: Name,
    pub label: Label,
    pub config: Configuration,
    pub measure: Option<u64>,
}

impl PathStep {
    fn from_step(s: &StepResult, config: Configuration, measure: Option<u64>) -> Self {
        PathStep { rule: s.rule, actor: s.actor.clone(), label: s.label.clone(), config, measure }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HelpfulFailure {
    #[error("initial configuration is ill-typed: {0}")]
    IllTyped(TypeError),
    #[error("no successor decreases measure {measure} at step {step}")]
    NoDecrease { step: usize, measure: u64 },
    #[error("measure 0 reached at step {step} on a non-terminated configuration")]
    ZeroNotTerminated { step: usize },
}

#[derive(Clone, Debug)]
pub struct HelpfulRun {
    pub initial_measure: u64,
    pub steps: Vec<PathStep>,
}

/// Follows, from `cfg`, a successor of least measure as long as the
/// measure is positive.
pub fn helpful_run(prog: &Program, cfg: &Configuration, hints: &Hints) -> Result<HelpfulRun, HelpfulFailure> {
    let checker = Checker::new(prog);
    let pt = checker.type_config(cfg, &ActorContext::new(), hints).map_err(HelpfulFailure::IllTyped)?;
    let initial_measure = pt.measure;
    let mut cur = (cfg.clone(), pt);
    let mut steps = Vec::new();
    while cur.1.measure > 0 {
        let hints = cur.1.future_types();
        let best = step_config_diag(prog, &cur.0)
            .0
            .into_iter()
            .filter_map(|s| {
                let pt = checker.type_config(&s.next, &ActorContext::new(), &hints).ok()?;
                (pt.measure < cur.1.measure).then_some((s, pt))
            })
            .min_by_key(|(_, pt)| pt.measure);
        let Some((s, pt)) = best else {
            return Err(HelpfulFailure::NoDecrease { step: steps.len(), measure: cur.1.measure });
        };
        steps.push(PathStep::from_step(&s, s.next.clone(), Some(pt.measure)));
        cur = (s.next, pt);
    }
    if !cur.0.is_terminated() {
        return Err(HelpfulFailure::ZeroNotTerminated { step: steps.len() });
    }
    Ok(HelpfulRun { initial_measure, steps })
}

// ---------------------------------------------------------------------------
// Exploration

#[derive(Clone, Debug)]
pub struct ExploreOptions {
    pub max_depth: usize,
    pub max_states: usize,
    /// Calls into recursive methods allowed along a path.
    pub unfold: u32,
    /// Type every state and check the measure laws.
    pub typed: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { max_depth: 500, max_states: 200_000, unfold: 2, typed: true }
    }
}

/// A state handed to a worker.
#[derive(Clone, Debug)]
pub struct Job {
    pub config: Configuration,
    pub hints: Hints,
    pub unfolds: u32,
}

#[derive(Clone, Debug)]
pub struct Edge {
    pub rule: Rule,
    pub actor: Name,
    pub label: Label,
    pub child: Canonical,
    pub key: String,
    pub hints: Hints,
    pub measure: Option<u64>,
    pub type_error: Option<TypeError>,
    pub unfolds: u32,
    pub pruned: bool,
    /// For pruned edges: whether a measure-guided run from the child ends.
    pub certified: bool,
}

/// Everything a worker learns about one state.
#[derive(Clone, Debug)]
pub struct Expansion {
    pub terminated: bool,
    pub edges: Vec<Edge>,
    pub diagnosis: Vec<Stuck>,
}

fn is_recursive_call(rec: &BTreeSet<(Name, Name)>, l: &Label) -> bool {
    matches!(l, Label::Call(m) if rec.contains(&(m.actor.clone(), m.method.clone())))
}

/// Expands one state. Pure, so callers may run it on many states at once.
pub fn expand(prog: &Program, rec: &BTreeSet<(Name, Name)>, opts: &ExploreOptions, job: &Job) -> Expansion {
    let terminated = job.config.is_terminated();
    if terminated {
        return Expansion { terminated, edges: Vec::new(), diagnosis: Vec::new() };
    }
    let checker = Checker::new(prog);
    let (succ, _) = step_config_diag(prog, &job.config);
    let diagnosis = if succ.is_empty() { diagnose(prog, &job.config) } else { Vec::new() };
    let edges = succ
        .into_iter()
        .map(|s| {
            let unfolds = job.unfolds + u32::from(is_recursive_call(rec, &s.label));
            let pruned = unfolds > opts.unfold;
            let (measure, hints, type_error) = if opts.typed {
                match checker.type_config(&s.next, &ActorContext::new(), &job.hints) {
                    Ok(pt) => (Some(pt.measure), pt.future_types(), None),
                    Err(e) => (None, Hints::new(), Some(e)),
                }
            } else {
                (None, Hints::new(), None)
            };
            let certified = pruned && opts.typed && helpful_run(prog, &s.next, &job.hints).is_ok();
            let child = canonicalize(&s.next);
            let key = state_key(&child.config);
            let hints = rename_hints(&hints, &child.futures);
            Edge { rule: s.rule, actor: s.actor, label: s.label, child, key, hints, measure, type_error, unfolds, pruned, certified }
        })
        .collect();
    Expansion { terminated, edges, diagnosis }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LawViolationKind {
    IllTyped(TypeError),
    NoHelpfulSuccessor(u64),
    ZeroNotTerminated,
    TerminatedNonZero(u64),
}

impl fmt::Display for LawViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LawViolationKind::IllTyped(e) => write!(f, "ill-typed: {e}"),
            LawViolationKind::NoHelpfulSuccessor(n) => write!(f, "no successor below measure {n}"),
            LawViolationKind::ZeroNotTerminated => f.write_str("measure 0 on a live configuration"),
            LawViolationKind::TerminatedNonZero(n) => write!(f, "terminated with measure {n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LawViolation {
    pub state: usize,
    pub kind: LawViolationKind,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    /// Every reachable state can reach a terminated one.
    FairTerminating,
    /// Some run terminates but not every reachable state can finish.
    WeaklyTerminatingWitness { trace: Vec<PathStep>, trapped: Configuration },
    StuckFound { state: Configuration, diagnosis: Vec<Stuck>, trace: Vec<PathStep> },
    /// No reachable state leads to termination.
    Divergent { state: Configuration },
    BoundExhausted { depth_hit: bool, states_hit: bool },
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::FairTerminating => "FairTerminating",
            Verdict::WeaklyTerminatingWitness { .. } => "WeaklyTerminatingWitness",
            Verdict::StuckFound { .. } => "StuckFound",
            Verdict::Divergent { .. } => "Divergent",
            Verdict::BoundExhausted { .. } => "BoundExhausted",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Exploration {
    pub verdict: Verdict,
    pub states: usize,
    pub edges: usize,
    pub max_depth: usize,
    pub terminated_states: usize,
    pub pruned_edges: usize,
    pub measure_histogram: BTreeMap<u64, usize>,
    pub violations: Vec<LawViolation>,
}

struct Node {
    config: Configuration,
    hints: Hints,
    unfolds: u32,
    depth: usize,
    measure: Option<u64>,
    parent: Option<(usize, Rule, Name, Label)>,
    succ: Vec<(usize, Rule, Name, Label)>,
    terminated: bool,
    expanded: bool,
    exits: bool,
}

fn path_to(nodes: &[Node], mut i: usize) -> Vec<PathStep> {
    let mut out = Vec::new();
    while let Some((p, rule, actor, label)) = nodes[i].parent.clone() {
        out.push(PathStep { rule, actor, label, config: nodes[i].config.clone(), measure: nodes[i].measure });
        i = p;
    }
    out.reverse();
    out
}

/// Sequential exploration.
pub fn explore(prog: &Program, init: &Configuration, opts: &ExploreOptions) -> Exploration {
    explore_with(prog, init, opts, &|rec, jobs| jobs.iter().map(|j| expand(prog, rec, opts, j)).collect())
}

/// Breadth-first exploration; `layer` expands a frontier, in order.
pub fn explore_with(
    prog: &Program,
    init: &Configuration,
    opts: &ExploreOptions,
    layer: &dyn Fn(&BTreeSet<(Name, Name)>, &[Job]) -> Vec<Expansion>,
) -> Exploration {
    let rec = recursive_methods(prog);
    let checker = Checker::new(prog);
    let mut violations = Vec::new();
    let root = canonicalize(init);
    let root_typing = if opts.typed { Some(checker.type_config(&root.config, &ActorContext::new(), &Hints::new())) } else { None };
    let (measure, hints) = match root_typing {
        Some(Ok(pt)) => (Some(pt.measure), pt.future_types()),
        Some(Err(e)) => {
            violations.push(LawViolation { state: 0, kind: LawViolationKind::IllTyped(e) });
            (None, Hints::new())
        }
        None => (None, Hints::new()),
    };
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    index.insert(state_key(&root.config), 0);
    let mut nodes = alloc::vec![Node {
        config: root.config,
        hints,
        unfolds: 0,
        depth: 0,
        measure,
        parent: None,
        succ: Vec::new(),
        terminated: false,
        expanded: false,
        exits: false,
    }];
    let mut frontier = alloc::vec![0usize];
    let mut depth_hit = false;
    let mut states_hit = false;
    let mut pruned_edges = 0usize;
    let mut edges = 0usize;
    let mut stuck: Option<(usize, Vec<Stuck>)> = None;

    while !frontier.is_empty() && stuck.is_none() {
        let depth = nodes[frontier[0]].depth;
        if depth >= opts.max_depth {
            for &i in &frontier {
                if !nodes[i].config.is_terminated() {
                    depth_hit = true;
                }
                nodes[i].terminated = nodes[i].config.is_terminated();
            }
            break;
        }
        let jobs: Vec<Job> = frontier
            .iter()
            .map(|&i| Job { config: nodes[i].config.clone(), hints: nodes[i].hints.clone(), unfolds: nodes[i].unfolds })
            .collect();
        let results = layer(&rec, &jobs);
        let mut next = Vec::new();
        for (&i, ex) in frontier.iter().zip(results) {
            nodes[i].expanded = true;
            nodes[i].terminated = ex.terminated;
            if !ex.terminated && ex.edges.is_empty() {
                stuck = Some((i, ex.diagnosis));
                break;
            }
            let mut helpful = false;
            for e in ex.edges {
                edges += 1;
                if let Some(err) = &e.type_error {
                    violations.push(LawViolation { state: i, kind: LawViolationKind::IllTyped(err.clone()) });
                }
                if let (Some(n), Some(m)) = (nodes[i].measure, e.measure) {
                    helpful |= m < n;
                }
                if e.pruned {
                    pruned_edges += 1;
                    nodes[i].exits |= e.certified;
                    continue;
                }
                let j = match index.get(&e.key) {
                    Some(&j) => j,
                    None => {
                        if nodes.len() >= opts.max_states {
                            states_hit = true;
                            continue;
                        }
                        let j = nodes.len();
                        index.insert(e.key.clone(), j);
                        nodes.push(Node {
                            config: e.child.config,
                            hints: e.hints,
                            unfolds: e.unfolds,
                            depth: depth + 1,
                            measure: e.measure,
                            parent: Some((i, e.rule, e.actor.clone(), e.label.clone())),
                            succ: Vec::new(),
                            terminated: false,
                            expanded: false,
                            exits: false,
                        });
                        next.push(j);
                        j
                    }
                };
                nodes[i].succ.push((j, e.rule, e.actor, e.label));
            }
            if let Some(n) = nodes[i].measure {
                if n > 0 && !helpful {
                    violations.push(LawViolation { state: i, kind: LawViolationKind::NoHelpfulSuccessor(n) });
                }
            }
        }
        frontier = next;
    }

    let mut measure_histogram = BTreeMap::new();
    let mut terminated_states = 0;
    for (i, n) in nodes.iter().enumerate() {
        let term = n.config.is_terminated();
        terminated_states += usize::from(term);
        if let Some(m) = n.measure {
            *measure_histogram.entry(m).or_insert(0) += 1;
            if m == 0 && !term {
                violations.push(LawViolation { state: i, kind: LawViolationKind::ZeroNotTerminated });
            }
            if m > 0 && term {
                violations.push(LawViolation { state: i, kind: LawViolationKind::TerminatedNonZero(m) });
            }
        }
    }
    let max_depth = nodes.iter().map(|n| n.depth).max().unwrap_or(0);
    let states = nodes.len();
    let report = |verdict| Exploration {
        verdict,
        states,
        edges,
        max_depth,
        terminated_states,
        pruned_edges,
        measure_histogram: measure_histogram.clone(),
        violations: violations.clone(),
    };

    if let Some((i, diagnosis)) = stuck {
        return report(Verdict::StuckFound { state: nodes[i].config.clone(), diagnosis, trace: path_to(&nodes, i) });
    }
    if depth_hit || states_hit {
        return report(Verdict::BoundExhausted { depth_hit, states_hit });
    }

    // Backward reachability of termination.
    let mut preds = alloc::vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        for (j, ..) in &n.succ {
            preds[*j].push(i);
        }
    }
    let mut dist: Vec<Option<usize>> = alloc::vec![None; nodes.len()];
    let mut queue = VecDeque::new();
    for (i, n) in nodes.iter().enumerate() {
        if n.terminated || n.exits {
            dist[i] = Some(0);
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for &i in &preds[j] {
            if dist[i].is_none() {
                dist[i] = Some(dist[j].unwrap_or(0) + 1);
                queue.push_back(i);
            }
        }
    }
    match dist.iter().position(Option::is_none) {
        None => report(Verdict::FairTerminating),
        Some(bad) if dist[0].is_some() => {
            let mut trace = Vec::new();
            let mut i = 0;
            while let Some(d) = dist[i].filter(|&d| d > 0) {
                let (j, rule, actor, label) =
                    nodes[i].succ.iter().find(|e| dist[e.0] == Some(d - 1)).cloned().expect("distance decreases");
                trace.push(PathStep { rule, actor, label, config: nodes[j].config.clone(), measure: nodes[j].measure });
                i = j;
            }
            report(Verdict::WeaklyTerminatingWitness { trace, trapped: nodes[bad].config.clone() })
        }
        Some(bad) => report(Verdict::Divergent { state: nodes[bad].config.clone() }),
    }
}
