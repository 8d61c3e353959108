//! Labelled small-step semantics: value-expression evaluation, expression
//! steps, configuration steps (closed under a bounded family of
//! precongruence moves) and schedulers.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::ast::{independent, Atom, CallMsg, Configuration, Expr, LocalEnv, OpSig, Program, Thread, Type, Value, ValueExpr};
use crate::grades::{Grade, GradeInstance, GradeMonoid};
use crate::name::Name;

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Label {
    Hold(Name, Grade),
    Rls(Name, Grade),
    Call(CallMsg),
    Fut(Name, Value),
    Tau,
}

impl Label {
    pub fn is_input(&self) -> bool {
        matches!(self, Label::Hold(..) | Label::Fut(..))
    }

    pub fn is_output(&self) -> bool {
        matches!(self, Label::Rls(..) | Label::Call(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Hold(r, g) => write!(f, "{r}^{g}?"),
            Label::Rls(r, g) => write!(f, "{r}^{g}!"),
            Label::Call(m) => write!(f, "{}", Atom::Call(m.clone())),
            Label::Fut(fu, v) => write!(f, "{fu} <- {v}"),
            Label::Tau => f.write_str("tau"),
        }
    }
}

/// Why an expression or configuration cannot move.
#[derive(Clone, PartialEq, Eq, Debug, thiserror::Error)]
pub enum Stuck {
    #[error("variable `{0}` is unbound")]
    Unbound(Name),
    #[error("`{var}` holds {have} but {want} was requested")]
    InsufficientGrade { var: Name, have: Grade, want: Grade },
    #[error("resource variable `{0}` used without a grade")]
    UngradedResourceVar(Name),
    #[error("`{0}` does not hold a resource")]
    NotAResource(String),
    #[error("`{0}` does not hold a future")]
    NotAFuture(String),
    #[error("cannot release {want} from a resource graded {have}")]
    ReleaseTooLarge { have: Grade, want: Grade },
    #[error("primitive `{op}`: {detail}")]
    PrimOp { op: Name, detail: String },
    #[error("StuckAtHold({0}, {1}, {2})")]
    StuckAtHold(Name, Name, Grade),
    #[error("AwaitBlocked({0}, {1})")]
    AwaitBlocked(Name, Name),
    #[error("NoSuchMethod({0}, {1})")]
    NoSuchMethod(Name, Name),
}

/// vr-rs, vr-ft, vr-oth and v.
pub fn eval_value_expr(m: &GradeInstance, env: &LocalEnv, ve: &ValueExpr) -> Result<(LocalEnv, Value), Stuck> {
    match ve {
        ValueExpr::Val(v) => Ok((env.clone(), v.clone())),
        ValueExpr::GradedVar(x, g) => match env.get(x) {
            Some(Value::Res(r, h)) => {
                let rest = m
                    .minus(h, g)
                    .ok_or_else(|| Stuck::InsufficientGrade { var: x.clone(), have: h.clone(), want: g.clone() })?;
                let mut env2 = env.clone();
                env2.set(x, Value::Res(r.clone(), rest));
                Ok((env2, Value::Res(r.clone(), g.clone())))
            }
            Some(_) => Err(Stuck::NotAResource(format!("{x}"))),
            None => Err(Stuck::Unbound(x.clone())),
        },
        ValueExpr::Var(x) => match env.get(x) {
            Some(Value::Fut(f)) => {
                let f = f.clone();
                let mut env2 = env.clone();
                env2.remove(x);
                Ok((env2, Value::Fut(f)))
            }
            Some(Value::Res(..)) => Err(Stuck::UngradedResourceVar(x.clone())),
            Some(v) => Ok((env.clone(), v.clone())),
            None => Err(Stuck::Unbound(x.clone())),
        },
    }
}

fn eval_all(m: &GradeInstance, env: &LocalEnv, ves: &[ValueExpr]) -> Result<(LocalEnv, Vec<Value>), Stuck> {
    let mut env = env.clone();
    let mut out = Vec::with_capacity(ves.len());
    for ve in ves {
        let (e2, v) = eval_value_expr(m, &env, ve)?;
        env = e2;
        out.push(v);
    }
    Ok((env, out))
}

/// Resource-rewriting semantics derived from an operation's signature.
pub fn apply_primop(m: &GradeInstance, sig: &OpSig, args: &[Value]) -> Result<Value, Stuck> {
    let fail = |detail: String| Stuck::PrimOp { op: sig.name.clone(), detail };
    if sig.params.len() != args.len() {
        return Err(fail(format!("expects {} arguments, got {}", sig.params.len(), args.len())));
    }
    for ((x, t), v) in sig.params.iter().zip(args) {
        let ok = match (t, v) {
            (Type::Unit, Value::Unit) => true,
            (Type::Res(r, g), Value::Res(s, h)) => r == s && m.leq(g, h),
            _ => false,
        };
        if !ok {
            return Err(fail(format!("argument `{x}: {t}` cannot accept `{v}`")));
        }
    }
    match &sig.ret {
        Type::Unit => Ok(Value::Unit),
        Type::Res(r, g) => Ok(Value::Res(r.clone(), g.clone())),
        Type::Fut(..) => Err(fail(String::from("operations cannot return futures"))),
    }
}

/// One labelled expression step.
#[derive(Clone, Debug)]
pub struct ExprStep {
    pub rule: &'static str,
    pub label: Label,
    pub env: LocalEnv,
    pub expr: Expr,
}

/// The innermost reducible sub-expression (under let-bindings).
pub fn redex(e: &Expr) -> &Expr {
    match e {
        Expr::Let(_, e1, _) if !matches!(**e1, Expr::Return(_)) => redex(e1),
        _ => e,
    }
}

/// Future the thread is about to await, if its redex is an await.
pub fn awaited_future(env: &LocalEnv, e: &Expr) -> Option<Name> {
    match redex(e) {
        Expr::Await(ValueExpr::Val(Value::Fut(f))) => Some(f.clone()),
        Expr::Await(ValueExpr::Var(x)) => env.get(x).and_then(Value::future).cloned(),
        _ => None,
    }
}

/// Enumerates the labelled steps of `env |- e`. Input steps on futures are
/// produced only when `offered` supplies the future's value. An empty
/// result means the expression is blocked or is a bare `return`.
pub fn step_expr(
    prog: &Program,
    env: &LocalEnv,
    e: &Expr,
    fresh: &mut u64,
    offered: &dyn Fn(&Name) -> Option<Value>,
) -> Result<Vec<ExprStep>, Stuck> {
    let m = &prog.grades;
    let one = |rule, label, env, expr| Ok(alloc::vec![ExprStep { rule, label, env, expr }]);
    match e {
        Expr::Let(x, e1, e2) => {
            if let Expr::Return(ve) = &**e1 {
                let (mut env2, v) = eval_value_expr(m, env, ve)?;
                let y = Name::new(&format!("y#{fresh}"));
                *fresh += 1;
                env2.set(&y, v);
                let mut body = (**e2).clone();
                body.rename(x, &y);
                return one("e-let", Label::Tau, env2, body);
            }
            let inner = step_expr(prog, env, e1, fresh, offered)?;
            Ok(inner
                .into_iter()
                .map(|s| ExprStep { expr: Expr::let_in(x.clone(), s.expr, (**e2).clone()), ..s })
                .collect())
        }
        Expr::Call { actor, method, args } => {
            let (env2, vals) = eval_all(m, env, args)?;
            let f = Name::new(&format!("f#{fresh}"));
            *fresh += 1;
            let msg = CallMsg { future: f.clone(), actor: actor.clone(), method: method.clone(), args: vals };
            one("e-cl", Label::Call(msg), env2, Expr::Return(ValueExpr::Val(Value::Fut(f))))
        }
        Expr::Await(ve) => {
            let target = match ve {
                ValueExpr::Val(Value::Fut(f)) => f.clone(),
                ValueExpr::Var(x) => match env.get(x) {
                    Some(Value::Fut(f)) => f.clone(),
                    Some(_) => return Err(Stuck::NotAFuture(format!("{x}"))),
                    None => return Err(Stuck::Unbound(x.clone())),
                },
                other => return Err(Stuck::NotAFuture(format!("{other}"))),
            };
            let Some(v) = offered(&target) else { return Ok(Vec::new()) };
            let (env2, _) = eval_value_expr(m, env, ve)?;
            one("e-awt", Label::Fut(target, v.clone()), env2, Expr::Return(ValueExpr::Val(v)))
        }
        Expr::Hold(g, r) => one(
            "e-hld",
            Label::Hold(r.clone(), g.clone()),
            env.clone(),
            Expr::Return(ValueExpr::Val(Value::Res(r.clone(), g.clone()))),
        ),
        Expr::Release(g, ve) => {
            let (env2, v) = eval_value_expr(m, env, ve)?;
            match v {
                Value::Res(r, h) if m.leq(g, &h) => {
                    one("e-rls", Label::Rls(r, g.clone()), env2, Expr::Return(ValueExpr::Val(Value::Unit)))
                }
                Value::Res(_, h) => Err(Stuck::ReleaseTooLarge { have: h, want: g.clone() }),
                other => Err(Stuck::NotAResource(format!("{other}"))),
            }
        }
        Expr::Op(op, args) => {
            let sig = prog
                .op(op)
                .ok_or_else(|| Stuck::PrimOp { op: op.clone(), detail: String::from("no signature") })?;
            let (env2, vals) = eval_all(m, env, args)?;
            let v = apply_primop(m, sig, &vals)?;
            one("e-op", Label::Tau, env2, Expr::Return(ValueExpr::Val(v)))
        }
        Expr::Choice(e1, e2) => Ok(alloc::vec![
            ExprStep { rule: "e-ch-l", label: Label::Tau, env: env.clone(), expr: (**e1).clone() },
            ExprStep { rule: "e-ch-r", label: Label::Tau, env: env.clone(), expr: (**e2).clone() },
        ]),
        Expr::Return(_) => Ok(Vec::new()),
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub enum Rule {
    Spawn,
    Call,
    Silent,
    Hold,
    Rls,
    Return,
    Get,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Spawn => "spawn",
            Rule::Call => "call",
            Rule::Silent => "silent",
            Rule::Hold => "hold",
            Rule::Rls => "rls",
            Rule::Return => "return",
            Rule::Get => "get",
        }
    }

    pub fn parse(s: &str) -> Option<Rule> {
        Some(match s {
            "spawn" => Rule::Spawn,
            "call" => Rule::Call,
            "silent" => Rule::Silent,
            "hold" => Rule::Hold,
            "rls" => Rule::Rls,
            "return" => Rule::Return,
            "get" => Rule::Get,
            _ => return None,
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Precongruence moves applied before a rule.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Move {
    /// Thread producing the future was activated.
    Activate(Name, Name),
    /// Thread producing the future yielded.
    Yield(Name, Name),
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub rule: Rule,
    pub actor: Name,
    pub label: Label,
    pub expr_rule: Option<&'static str>,
    pub moves: Vec<Move>,
    pub next: Configuration,
}

/// Position of the fulfilled future `f` if it can be made adjacent to the
/// left of the thread at `ti`, with the reordered between-segment.
fn bring_left(atoms: &[Atom], fj: usize, ti: usize) -> Option<(Vec<Atom>, Vec<Atom>)> {
    if fj >= ti {
        return None;
    }
    let between = &atoms[fj + 1..ti];
    let mut after = alloc::vec![false; between.len()];
    for k in 0..between.len() {
        let dep_fut = !independent(&atoms[fj], &between[k]);
        let dep_prev = (0..k).any(|l| after[l] && !independent(&between[l], &between[k]));
        after[k] = dep_fut || dep_prev;
    }
    let mut before = alloc::vec![false; between.len()];
    for k in (0..between.len()).rev() {
        let dep_thr = !independent(&atoms[ti], &between[k]);
        let dep_next = (k + 1..between.len()).any(|l| before[l] && !independent(&between[l], &between[k]));
        before[k] = dep_thr || dep_next;
    }
    if (0..between.len()).any(|k| after[k] && before[k]) {
        return None;
    }
    let left = between.iter().zip(&after).filter(|(_, a)| !**a).map(|(x, _)| x.clone()).collect();
    let right = between.iter().zip(&after).filter(|(_, a)| **a).map(|(x, _)| x.clone()).collect();
    Some((left, right))
}

/// Base rule instances for the active thread at `ti`.
fn thread_steps(prog: &Program, cfg: &Configuration, ti: usize, moves: &[Move], out: &mut Vec<StepResult>, errs: &mut Vec<Stuck>) {
    let atoms = &cfg.process.0;
    let Atom::Active(t) = &atoms[ti] else { return };
    let m = &prog.grades;
    if let Expr::Return(ve) = &t.expr {
        match eval_value_expr(m, &t.env, ve) {
            Ok((_, v)) => {
                let mut next = cfg.clone();
                next.process.0[ti] = Atom::Fulfilled(t.future.clone(), v);
                next.process.0.insert(ti + 1, Atom::Idle(t.actor.clone()));
                out.push(StepResult {
                    rule: Rule::Return,
                    actor: t.actor.clone(),
                    label: Label::Tau,
                    expr_rule: None,
                    moves: moves.to_vec(),
                    next,
                });
            }
            Err(e) => errs.push(e),
        }
        return;
    }
    let offered = |f: &Name| {
        atoms[..ti].iter().find_map(|a| match a {
            Atom::Fulfilled(g, v) if g == f => Some(v.clone()),
            _ => None,
        })
    };
    let mut fresh = cfg.fresh;
    let steps = match step_expr(prog, &t.env, &t.expr, &mut fresh, &offered) {
        Ok(s) => s,
        Err(e) => {
            errs.push(e);
            return;
        }
    };
    if steps.is_empty() {
        if let Some(f) = awaited_future(&t.env, &t.expr) {
            errs.push(Stuck::AwaitBlocked(t.actor.clone(), f));
        }
    }
    for s in steps {
        let thread = Atom::Active(Thread { env: s.env, expr: s.expr, future: t.future.clone(), actor: t.actor.clone() });
        let mut next = cfg.clone();
        next.fresh = fresh;
        let rule = match &s.label {
            Label::Tau => {
                next.process.0[ti] = thread;
                Rule::Silent
            }
            Label::Call(msg) => {
                next.process.0[ti] = thread;
                next.process.0.insert(ti, Atom::Call(msg.clone()));
                Rule::Call
            }
            Label::Rls(r, g) => {
                let h = next.ctx.get(&t.actor, r);
                next.ctx.set(t.actor.clone(), r.clone(), m.plus(&h, g));
                next.process.0[ti] = thread;
                Rule::Rls
            }
            Label::Hold(r, g) => {
                let h = next.ctx.get(&t.actor, r);
                let Some(rest) = m.minus(&h, g) else {
                    errs.push(Stuck::StuckAtHold(t.actor.clone(), r.clone(), g.clone()));
                    continue;
                };
                next.ctx.set(t.actor.clone(), r.clone(), rest);
                next.process.0[ti] = thread;
                Rule::Hold
            }
            Label::Fut(f, _) => {
                let fj = atoms[..ti]
                    .iter()
                    .position(|a| matches!(a, Atom::Fulfilled(g, _) if g == f))
                    .expect("offered future is present");
                let Some((left, right)) = bring_left(atoms, fj, ti) else {
                    errs.push(Stuck::AwaitBlocked(t.actor.clone(), f.clone()));
                    continue;
                };
                let mut seq: Vec<Atom> = atoms[..fj].to_vec();
                seq.extend(left);
                seq.push(thread);
                seq.extend(right);
                seq.extend_from_slice(&atoms[ti + 1..]);
                next.process.0 = seq;
                Rule::Get
            }
        };
        out.push(StepResult {
            rule,
            actor: t.actor.clone(),
            label: s.label,
            expr_rule: Some(s.rule),
            moves: moves.to_vec(),
            next,
        });
    }
}

/// Spawns every message for `actor` when it is idle.
fn spawn_steps(prog: &Program, cfg: &Configuration, actor: &Name, moves: &[Move], out: &mut Vec<StepResult>, errs: &mut Vec<Stuck>) {
    let atoms = &cfg.process.0;
    let Some(ij) = atoms.iter().position(|a| matches!(a, Atom::Idle(b) if b == actor)) else { return };
    for (i, a) in atoms.iter().enumerate() {
        let Atom::Call(msg) = a else { continue };
        if &msg.actor != actor {
            continue;
        }
        let Some(method) = prog.method(&msg.actor, &msg.method) else {
            errs.push(Stuck::NoSuchMethod(msg.actor.clone(), msg.method.clone()));
            continue;
        };
        let env = LocalEnv(method.params.iter().map(|(x, _)| x.clone()).zip(msg.args.iter().cloned()).collect());
        let mut next = cfg.clone();
        next.process.0[i] = Atom::Active(Thread {
            env,
            expr: method.body.clone(),
            future: msg.future.clone(),
            actor: actor.clone(),
        });
        next.process.0.remove(ij);
        out.push(StepResult {
            rule: Rule::Spawn,
            actor: actor.clone(),
            label: Label::Tau,
            expr_rule: None,
            moves: moves.to_vec(),
            next,
        });
    }
}

fn activate(cfg: &Configuration, si: usize) -> Configuration {
    let mut next = cfg.clone();
    let Atom::Suspended(t) = &cfg.process.0[si] else { unreachable!("activation target is suspended") };
    next.process.0[si] = Atom::Active(t.clone());
    let ij = next
        .process
        .0
        .iter()
        .position(|a| matches!(a, Atom::Idle(b) if *b == t.actor))
        .expect("activation needs an idle actor");
    next.process.0.remove(ij);
    next
}

fn yield_thread(cfg: &Configuration, ti: usize) -> Configuration {
    let mut next = cfg.clone();
    let Atom::Active(t) = &cfg.process.0[ti] else { unreachable!("yield target is active") };
    next.process.0[ti] = Atom::Suspended(t.clone());
    next.process.0.insert(ti, Atom::Idle(t.actor.clone()));
    next
}

/// Runs every rule on an idle actor: spawns and activations.
fn idle_actor_steps(prog: &Program, cfg: &Configuration, actor: &Name, moves: &[Move], out: &mut Vec<StepResult>, errs: &mut Vec<Stuck>, skip: Option<&Name>) {
    spawn_steps(prog, cfg, actor, moves, out, errs);
    for (si, a) in cfg.process.0.iter().enumerate() {
        let Atom::Suspended(t) = a else { continue };
        if &t.actor != actor || Some(&t.future) == skip {
            continue;
        }
        let act = activate(cfg, si);
        let ti = si - usize::from(idle_before(cfg, actor, si));
        let mut mv = moves.to_vec();
        mv.push(Move::Activate(actor.clone(), t.future.clone()));
        thread_steps(prog, &act, ti, &mv, out, errs);
    }
}

fn idle_before(cfg: &Configuration, actor: &Name, si: usize) -> bool {
    cfg.process.0[..si].iter().any(|a| matches!(a, Atom::Idle(b) if b == actor))
}

/// Successors of a configuration together with the reasons threads could
/// not move.
pub fn step_config_diag(prog: &Program, cfg: &Configuration) -> (Vec<StepResult>, Vec<Stuck>) {
    let mut out = Vec::new();
    let mut errs = Vec::new();
    let mut seen_actors = BTreeSet::new();
    for (i, a) in cfg.process.0.iter().enumerate() {
        match a {
            Atom::Active(t) => {
                thread_steps(prog, cfg, i, &[], &mut out, &mut errs);
                if awaited_future(&t.env, &t.expr).is_some() {
                    let y = yield_thread(cfg, i);
                    let mv = [Move::Yield(t.actor.clone(), t.future.clone())];
                    let mut ignored = Vec::new();
                    idle_actor_steps(prog, &y, &t.actor, &mv, &mut out, &mut ignored, Some(&t.future));
                }
            }
            Atom::Idle(actor) if seen_actors.insert(actor.clone()) => {
                idle_actor_steps(prog, cfg, actor, &[], &mut out, &mut errs, None);
            }
            _ => {}
        }
    }
    (out, errs)
}

pub fn step_config(prog: &Program, cfg: &Configuration) -> Vec<StepResult> {
    step_config_diag(prog, cfg).0
}

/// Reasons a non-terminated configuration without successors is stuck.
pub fn diagnose(prog: &Program, cfg: &Configuration) -> Vec<Stuck> {
    let (succ, mut errs) = step_config_diag(prog, cfg);
    if !succ.is_empty() || cfg.is_terminated() {
        return Vec::new();
    }
    errs.sort_by_key(|e| match e {
        Stuck::StuckAtHold(..) => 0,
        Stuck::AwaitBlocked(..) => 2,
        _ => 1,
    });
    errs.dedup();
    errs
}

/// Chooses among successors; `None` aborts the run.
pub trait Scheduler {
    fn choose(&mut self, cfg: &Configuration, successors: &[StepResult]) -> Option<usize>;
}

/// Uniform choice from a seeded ChaCha stream.
pub struct RandomScheduler(ChaCha8Rng);

impl RandomScheduler {
    pub fn new(seed: u64) -> Self {
        RandomScheduler(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Scheduler for RandomScheduler {
    fn choose(&mut self, _: &Configuration, successors: &[StepResult]) -> Option<usize> {
        let n = successors.len() as u128;
        Some(((self.0.next_u64() as u128 * n) >> 64) as usize)
    }
}

/// Always the first enumerated successor (leftmost acting process).
pub struct FifoScheduler;

impl Scheduler for FifoScheduler {
    fn choose(&mut self, _: &Configuration, _: &[StepResult]) -> Option<usize> {
        Some(0)
    }
}

impl<F: FnMut(&Configuration, &[StepResult]) -> Option<usize>> Scheduler for F {
    fn choose(&mut self, cfg: &Configuration, successors: &[StepResult]) -> Option<usize> {
        self(cfg, successors)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunStatus {
    Terminated,
    Stuck(Vec<Stuck>),
    BoundExhausted,
    Aborted,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub initial: Configuration,
    pub steps: Vec<StepResult>,
    pub status: RunStatus,
}

impl Trace {
    pub fn last(&self) -> &Configuration {
        self.steps.last().map_or(&self.initial, |s| &s.next)
    }

    pub fn configs(&self) -> impl Iterator<Item = &Configuration> {
        core::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.next))
    }
}

pub fn run(prog: &Program, init: Configuration, sched: &mut dyn Scheduler, max_steps: usize) -> Trace {
    let mut cur = init.clone();
    let mut steps = Vec::new();
    loop {
        if cur.is_terminated() {
            return Trace { initial: init, steps, status: RunStatus::Terminated };
        }
        let (mut succ, _) = step_config_diag(prog, &cur);
        if succ.is_empty() {
            let why = diagnose(prog, &cur);
            return Trace { initial: init, steps, status: RunStatus::Stuck(why) };
        }
        if steps.len() >= max_steps {
            return Trace { initial: init, steps, status: RunStatus::BoundExhausted };
        }
        let Some(k) = sched.choose(&cur, &succ).filter(|&k| k < succ.len()) else {
            return Trace { initial: init, steps, status: RunStatus::Aborted };
        };
        let step = succ.swap_remove(k);
        cur = step.next.clone();
        steps.push(step);
    }
}
