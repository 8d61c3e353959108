//! Algorithmic graded type system with measures.
//!
//! The checker builds one canonical derivation per expression: variable
//! usage is inferred instead of guessing context splits, hold requires
//! exactly the requested grade, a let cancels the largest part of what its
//! body requires that its bound expression produces, and a choice weakens
//! its branches just enough to agree on their actor contexts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::ast::{Atom, Configuration, Expr, LocalEnv, Program, Span, Type, Value, ValueExpr};
use crate::grades::{ActorContext, Grade, GradeInstance, GradeMonoid};
use crate::name::Name;
use crate::semantics::Label;

/// A natural number or the unsolvable top used while probing recursion.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Measure {
    Fin(u64),
    Top,
}

impl Measure {
    pub fn add(self, other: Measure) -> Measure {
        match (self, other) {
            (Measure::Fin(a), Measure::Fin(b)) => a.checked_add(b).map_or(Measure::Top, Measure::Fin),
            _ => Measure::Top,
        }
    }

    pub fn fin(self) -> Option<u64> {
        match self {
            Measure::Fin(n) => Some(n),
            Measure::Top => None,
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Fin(n) => write!(f, "{n}"),
            Measure::Top => f.write_str("unbounded"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum TypeErrorKind {
    #[error("unknown variable `{0}`")]
    UnknownVariable(Name),
    #[error("unknown future `{0}`")]
    UnknownFuture(Name),
    #[error("`{var}` has type {have} but is used at grade {want}")]
    GradeTooSmall { var: String, have: Type, want: Grade },
    #[error("resource variable `{0}` is used without a grade")]
    UngradedResourceUse(Name),
    #[error("future `{0}` is not used exactly once")]
    NonLinearFuture(Name),
    #[error("`{var}: {ty}` is not discardable here")]
    NonDiscardableLeftover { var: Name, ty: Type },
    #[error("branches disagree: {0}")]
    BranchMismatch(String),
    #[error("unknown method `{0}.{1}`")]
    UnknownMethod(Name, Name),
    #[error("unknown primitive operation `{0}`")]
    UnknownOp(Name),
    #[error("`{callee}` expects {expected} arguments, got {found}")]
    ArityMismatch { callee: String, expected: usize, found: usize },
    #[error("expected {expected}, found {found}")]
    ArgumentMismatch { expected: Type, found: Type },
    #[error("await on a value of type {0}")]
    AwaitNonFuture(Type),
    #[error("release of a value of type {0}")]
    ReleaseNonResource(Type),
    #[error("future `{0}` is consumed before it is produced")]
    FutureConsumedBeforeProduced(Name),
    #[error("future `{0}` is produced twice")]
    DoubleProduce(Name),
    #[error("future `{0}` is consumed twice")]
    MarkedReuse(Name),
    #[error("{actor} needs {required} of {resource} but starts with {available}")]
    InsufficientInitialResources { actor: Name, resource: Name, required: Grade, available: Grade },
    #[error("computed measure {computed}, declared {declared}")]
    MeasureMismatch { computed: Measure, declared: u64 },
    #[error("computed contexts requires {req} produces {prod} are not a weakening of the declaration")]
    ContextMismatch { req: ActorContext, prod: ActorContext },
    #[error("body has type {computed}, declared {declared}")]
    ReturnTypeMismatch { computed: Type, declared: Type },
    #[error("recursive calls leave no finite measure")]
    UnsolvableRecursiveMeasure,
    #[error("measure is unbounded")]
    Unbounded,
}

impl TypeErrorKind {
    /// Stable identifier for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            TypeErrorKind::UnknownVariable(_) => "UnknownVariable",
            TypeErrorKind::UnknownFuture(_) => "UnknownFuture",
            TypeErrorKind::GradeTooSmall { .. } => "GradeTooSmall",
            TypeErrorKind::UngradedResourceUse(_) => "UngradedResourceUse",
            TypeErrorKind::NonLinearFuture(_) => "NonLinearFuture",
            TypeErrorKind::NonDiscardableLeftover { .. } => "NonDiscardableLeftover",
            TypeErrorKind::BranchMismatch(_) => "BranchMismatch",
            TypeErrorKind::UnknownMethod(..) => "UnknownMethod",
            TypeErrorKind::UnknownOp(_) => "UnknownOp",
            TypeErrorKind::ArityMismatch { .. } => "ArityMismatch",
            TypeErrorKind::ArgumentMismatch { .. } => "ArgumentMismatch",
            TypeErrorKind::AwaitNonFuture(_) => "AwaitNonFuture",
            TypeErrorKind::ReleaseNonResource(_) => "ReleaseNonResource",
            TypeErrorKind::FutureConsumedBeforeProduced(_) => "FutureConsumedBeforeProduced",
            TypeErrorKind::DoubleProduce(_) => "DoubleProduce",
            TypeErrorKind::MarkedReuse(_) => "MarkedReuse",
            TypeErrorKind::InsufficientInitialResources { .. } => "InsufficientInitialResources",
            TypeErrorKind::MeasureMismatch { .. } => "MeasureMismatch",
            TypeErrorKind::ContextMismatch { .. } => "ContextMismatch",
            TypeErrorKind::ReturnTypeMismatch { .. } => "ReturnTypeMismatch",
            TypeErrorKind::UnsolvableRecursiveMeasure => "UnsolvableRecursiveMeasure",
            TypeErrorKind::Unbounded => "Unbounded",
        }
    }
}

/// Where a type error was found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Loc {
    Method { actor: Name, method: Name, span: Span },
    Init(Span),
    Process(usize),
    Unknown,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Method { actor, method, span } => write!(f, "{span} ({actor}.{method})"),
            Loc::Init(span) => write!(f, "{span} (init)"),
            Loc::Process(i) => write!(f, "process #{i}"),
            Loc::Unknown => f.write_str("?"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{loc}: {kind}")]
pub struct TypeError {
    pub kind: TypeErrorKind,
    pub loc: Loc,
}

impl From<TypeErrorKind> for TypeError {
    fn from(kind: TypeErrorKind) -> Self {
        TypeError { kind, loc: Loc::Unknown }
    }
}

type TResult<T> = Result<T, TypeErrorKind>;

/// How much of a variable an expression consumes.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Use {
    /// Total grade drawn through graded occurrences.
    Res(Grade),
    /// Number of ungraded occurrences.
    Plain(u32),
}

pub type Gamma = BTreeMap<Name, Type>;
pub type Sigma = BTreeMap<Name, Type>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ExprTyping {
    pub ty: Type,
    pub req: ActorContext,
    pub prod: ActorContext,
    pub measure: Measure,
    pub usage: BTreeMap<Name, Use>,
    pub futures: BTreeSet<Name>,
    /// Whether some leaf of the derivation may discard extra context.
    pub absorbs: bool,
}

fn leaf(ty: Type, req: ActorContext, prod: ActorContext, n: u64, absorbs: bool) -> ExprTyping {
    ExprTyping {
        ty,
        req,
        prod,
        measure: Measure::Fin(n),
        usage: BTreeMap::new(),
        futures: BTreeSet::new(),
        absorbs,
    }
}

/// Whether a value of type `found` may stand where `expected` is required.
/// Literals may be used at any smaller grade.
pub fn fits(m: &GradeInstance, found: &Type, expected: &Type, literal: bool) -> bool {
    if found.normalized() == expected.normalized() {
        return true;
    }
    match (found, expected) {
        (Type::Res(r, h), Type::Res(s, g)) => literal && r == s && m.leq(g, h),
        _ => false,
    }
}

pub fn is_discardable_type(m: &GradeInstance, t: &Type) -> bool {
    match t {
        Type::Unit => true,
        Type::Res(_, g) => m.is_discardable(g),
        Type::Fut(..) => false,
    }
}

struct ValueTyping {
    ty: Type,
    literal: bool,
    usage: Option<(Name, Use)>,
    future: Option<Name>,
}

pub struct Checker<'p> {
    pub prog: &'p Program,
    /// Callees whose calls contribute an unbounded measure.
    pub unbounded: BTreeSet<(Name, Name)>,
}

impl<'p> Checker<'p> {
    pub fn new(prog: &'p Program) -> Self {
        Checker { prog, unbounded: BTreeSet::new() }
    }

    fn m(&self) -> &GradeInstance {
        &self.prog.grades
    }

    fn value_expr(&self, gamma: &Gamma, sigma: &Sigma, ve: &ValueExpr) -> TResult<ValueTyping> {
        match ve {
            ValueExpr::Val(Value::Unit) => Ok(ValueTyping { ty: Type::Unit, literal: true, usage: None, future: None }),
            ValueExpr::Val(Value::Res(r, h)) => {
                Ok(ValueTyping { ty: Type::Res(r.clone(), h.clone()), literal: true, usage: None, future: None })
            }
            ValueExpr::Val(Value::Fut(f)) => {
                let ty = sigma.get(f).cloned().ok_or_else(|| TypeErrorKind::UnknownFuture(f.clone()))?;
                Ok(ValueTyping { ty, literal: false, usage: None, future: Some(f.clone()) })
            }
            ValueExpr::GradedVar(x, g) => match gamma.get(x) {
                Some(Type::Res(r, h)) => {
                    if !self.m().leq(g, h) {
                        return Err(TypeErrorKind::GradeTooSmall {
                            var: format!("{x}"),
                            have: Type::Res(r.clone(), h.clone()),
                            want: g.clone(),
                        });
                    }
                    Ok(ValueTyping {
                        ty: Type::Res(r.clone(), g.clone()),
                        literal: false,
                        usage: Some((x.clone(), Use::Res(g.clone()))),
                        future: None,
                    })
                }
                Some(t) => Err(TypeErrorKind::GradeTooSmall { var: format!("{x}"), have: t.clone(), want: g.clone() }),
                None => Err(TypeErrorKind::UnknownVariable(x.clone())),
            },
            ValueExpr::Var(x) => match gamma.get(x) {
                Some(Type::Res(..)) => Err(TypeErrorKind::UngradedResourceUse(x.clone())),
                Some(t) => {
                    Ok(ValueTyping { ty: t.clone(), literal: false, usage: Some((x.clone(), Use::Plain(1))), future: None })
                }
                None => Err(TypeErrorKind::UnknownVariable(x.clone())),
            },
        }
    }

    /// Sums usages (the context sum) and joins future sets disjointly.
    fn merge(&self, into: &mut ExprTyping, usage: &BTreeMap<Name, Use>, futures: &BTreeSet<Name>) -> TResult<()> {
        for (x, u) in usage {
            let merged = match (into.usage.get(x), u) {
                (None, u) => u.clone(),
                (Some(Use::Res(a)), Use::Res(b)) => Use::Res(self.m().plus(a, b)),
                (Some(Use::Plain(a)), Use::Plain(b)) => Use::Plain(a + b),
                _ => return Err(TypeErrorKind::UngradedResourceUse(x.clone())),
            };
            into.usage.insert(x.clone(), merged);
        }
        for f in futures {
            if !into.futures.insert(f.clone()) {
                return Err(TypeErrorKind::NonLinearFuture(f.clone()));
            }
        }
        Ok(())
    }

    fn args(&self, gamma: &Gamma, sigma: &Sigma, acc: &mut ExprTyping, args: &[ValueExpr], params: &[Type]) -> TResult<()> {
        for (ve, expected) in args.iter().zip(params) {
            let vt = self.value_expr(gamma, sigma, ve)?;
            if !fits(self.m(), &vt.ty, expected, vt.literal) {
                return Err(TypeErrorKind::ArgumentMismatch { expected: expected.clone(), found: vt.ty });
            }
            let usage: BTreeMap<Name, Use> = vt.usage.into_iter().collect();
            let futs: BTreeSet<Name> = vt.future.into_iter().collect();
            self.merge(acc, &usage, &futs)?;
        }
        Ok(())
    }

    /// Checks that a binder of type `ty` is consumed consistently with its usage.
    pub fn check_binding(&self, x: &Name, ty: &Type, usage: Option<&Use>, absorbs: bool, need_absorb: bool) -> TResult<()> {
        let m = self.m();
        let leftover = || TypeErrorKind::NonDiscardableLeftover { var: x.clone(), ty: ty.clone() };
        match (ty, usage) {
            (Type::Fut(..), Some(Use::Plain(1))) => Ok(()),
            (Type::Fut(..), Some(_)) => Err(TypeErrorKind::NonLinearFuture(x.clone())),
            (Type::Fut(..), None) => Err(leftover()),
            (Type::Unit, Some(_)) => Ok(()),
            (Type::Unit, None) | (Type::Res(..), None) => {
                if is_discardable_type(m, ty) && (absorbs || !need_absorb) {
                    Ok(())
                } else {
                    Err(leftover())
                }
            }
            (Type::Res(r, h), Some(Use::Res(u))) => {
                let w = residual(m, h, u).ok_or_else(|| TypeErrorKind::GradeTooSmall {
                    var: format!("{x}"),
                    have: Type::Res(r.clone(), h.clone()),
                    want: u.clone(),
                })?;
                if w.is_zero() || m.is_discardable(&w) {
                    Ok(())
                } else {
                    Err(leftover())
                }
            }
            (Type::Res(..), Some(Use::Plain(_))) => Err(TypeErrorKind::UngradedResourceUse(x.clone())),
        }
    }

    fn mtype(&self, b: &Name, mname: &Name) -> TResult<&crate::ast::Method> {
        self.prog.method(b, mname).ok_or_else(|| TypeErrorKind::UnknownMethod(b.clone(), mname.clone()))
    }

    pub fn type_expr(&self, a: &Name, gamma: &Gamma, sigma: &Sigma, e: &Expr) -> TResult<ExprTyping> {
        let m = self.m();
        match e {
            Expr::Return(ve) => {
                let vt = self.value_expr(gamma, sigma, ve)?;
                let mut t = leaf(vt.ty, ActorContext::new(), ActorContext::new(), 0, true);
                t.usage.extend(vt.usage);
                t.futures.extend(vt.future);
                Ok(t)
            }
            Expr::Call { actor, method, args } => {
                let decl = self.mtype(actor, method)?;
                if decl.params.len() != args.len() {
                    return Err(TypeErrorKind::ArityMismatch {
                        callee: format!("{actor}.{method}"),
                        expected: decl.params.len(),
                        found: args.len(),
                    });
                }
                let k = if self.unbounded.contains(&(actor.clone(), method.clone())) {
                    Measure::Top
                } else {
                    Measure::Fin(decl.measure)
                };
                let mut t = leaf(
                    Type::fut(decl.ret.clone(), decl.produces.clone()),
                    decl.requires.normalized(),
                    ActorContext::new(),
                    0,
                    !args.is_empty(),
                );
                t.measure = k.add(Measure::Fin(3));
                let params: Vec<Type> = decl.params.iter().map(|(_, t)| t.clone()).collect();
                self.args(gamma, sigma, &mut t, args, &params)?;
                Ok(t)
            }
            Expr::Await(ve) => {
                let vt = self.value_expr(gamma, sigma, ve)?;
                let Type::Fut(inner, psi) = &vt.ty else { return Err(TypeErrorKind::AwaitNonFuture(vt.ty)) };
                let mut t = leaf((**inner).clone(), ActorContext::new(), psi.clone(), 1, true);
                t.usage.extend(vt.usage);
                t.futures.extend(vt.future);
                Ok(t)
            }
            Expr::Hold(g, r) => Ok(leaf(
                Type::Res(r.clone(), g.clone()),
                ActorContext::single(a.clone(), r.clone(), g.clone()).normalized(),
                ActorContext::new(),
                1,
                false,
            )),
            Expr::Release(g, ve) => {
                let vt = self.value_expr(gamma, sigma, ve)?;
                match &vt.ty {
                    Type::Res(r, h) if m.leq(g, h) => {
                        let mut t = leaf(
                            Type::Unit,
                            ActorContext::new(),
                            ActorContext::single(a.clone(), r.clone(), g.clone()).normalized(),
                            1,
                            true,
                        );
                        t.usage.extend(vt.usage);
                        t.futures.extend(vt.future);
                        Ok(t)
                    }
                    Type::Res(..) => Err(TypeErrorKind::GradeTooSmall {
                        var: format!("{ve}"),
                        have: vt.ty.clone(),
                        want: g.clone(),
                    }),
                    other => Err(TypeErrorKind::ReleaseNonResource(other.clone())),
                }
            }
            Expr::Op(op, args) => {
                let sig = self.prog.op(op).ok_or_else(|| TypeErrorKind::UnknownOp(op.clone()))?;
                if sig.params.len() != args.len() {
                    return Err(TypeErrorKind::ArityMismatch {
                        callee: format!("{op}"),
                        expected: sig.params.len(),
                        found: args.len(),
                    });
                }
                let mut t = leaf(sig.ret.clone(), ActorContext::new(), ActorContext::new(), 1, !args.is_empty());
                let params: Vec<Type> = sig.params.iter().map(|(_, t)| t.clone()).collect();
                self.args(gamma, sigma, &mut t, args, &params)?;
                Ok(t)
            }
            Expr::Choice(e1, e2) => {
                let t1 = self.type_expr(a, gamma, sigma, e1)?;
                let t2 = self.type_expr(a, gamma, sigma, e2)?;
                if t1.ty.normalized() != t2.ty.normalized() {
                    return Err(TypeErrorKind::BranchMismatch(format!("types {} and {}", t1.ty, t2.ty)));
                }
                if t1.usage != t2.usage || t1.futures != t2.futures {
                    return Err(TypeErrorKind::BranchMismatch(String::from("branches use different variables")));
                }
                let (theta1, _) = align_branches(m, (&t1.req, &t1.prod), (&t2.req, &t2.prod)).ok_or_else(|| {
                    TypeErrorKind::BranchMismatch(format!(
                        "contexts {} / {} and {} / {} admit no common weakening",
                        t1.req, t1.prod, t2.req, t2.prod
                    ))
                })?;
                Ok(ExprTyping {
                    ty: t1.ty,
                    req: t1.req.plus(m, &theta1).normalized(),
                    prod: t1.prod.plus(m, &theta1).normalized(),
                    measure: Measure::Fin(1).add(t1.measure.min(t2.measure)),
                    usage: t1.usage,
                    futures: t1.futures,
                    absorbs: t1.absorbs && t2.absorbs,
                })
            }
            Expr::Let(x, e1, e2) => {
                let t1 = self.type_expr(a, gamma, sigma, e1)?;
                let mut inner = gamma.clone();
                inner.insert(x.clone(), t1.ty.clone());
                let mut t2 = self.type_expr(a, &inner, sigma, e2)?;
                let xu = t2.usage.remove(x);
                self.check_binding(x, &t1.ty, xu.as_ref(), t2.absorbs, true)?;
                let (req, prod) = let_contexts(m, &t1, &t2);
                let mut t = ExprTyping {
                    ty: t2.ty.clone(),
                    req,
                    prod,
                    measure: Measure::Fin(1).add(t1.measure).add(t2.measure),
                    usage: t1.usage.clone(),
                    futures: t1.futures.clone(),
                    absorbs: t1.absorbs || t2.absorbs,
                };
                self.merge(&mut t, &t2.usage, &t2.futures)?;
                Ok(t)
            }
        }
    }

    /// Types a method body against its parameters.
    pub fn type_body(&self, a: &Name, params: &[(Name, Type)], body: &Expr) -> TResult<ExprTyping> {
        let gamma: Gamma = params.iter().cloned().collect();
        let t = self.type_expr(a, &gamma, &Sigma::new(), body)?;
        for (x, ty) in params {
            self.check_binding(x, ty, t.usage.get(x), t.absorbs, true)?;
        }
        Ok(t)
    }
}

/// Least `w` with `part + w = total`: zero when `part` already covers
/// `total`, otherwise the subtraction.
pub fn residual(m: &GradeInstance, total: &Grade, part: &Grade) -> Option<Grade> {
    if m.plus(part, &Grade::ZERO) == *total {
        return Some(Grade::ZERO);
    }
    m.minus(total, part).filter(|w| m.plus(part, w) == *total)
}

fn ctx_keys(cs: &[&ActorContext]) -> BTreeSet<(Name, Name)> {
    cs.iter().flat_map(|c| c.entries().map(|(a, r, _)| (a.clone(), r.clone()))).collect()
}

/// Pointwise [`residual`].
pub fn ctx_residual(m: &GradeInstance, total: &ActorContext, part: &ActorContext) -> Option<ActorContext> {
    let mut out = ActorContext::new();
    for (a, r) in ctx_keys(&[total, part]) {
        out.set(a.clone(), r.clone(), residual(m, &total.get(&a, &r), &part.get(&a, &r))?);
    }
    Some(out.normalized())
}

/// Internal cancellation of a let: the bound expression's production meets
/// the body's requirement.
fn let_contexts(m: &GradeInstance, t1: &ExprTyping, t2: &ExprTyping) -> (ActorContext, ActorContext) {
    let c = t1.prod.meet(m, &t2.req);
    let split = ctx_residual(m, &t1.prod, &c).zip(ctx_residual(m, &t2.req, &c));
    let (x, y) = split.unwrap_or_else(|| (t1.prod.clone(), t2.req.clone()));
    (t1.req.plus(m, &y).normalized(), x.plus(m, &t2.prod).normalized())
}

/// Finds per-resource weakenings `theta1, theta2` making both branches carry
/// the same required and produced contexts.
pub fn align_branches(
    m: &GradeInstance,
    (p1, q1): (&ActorContext, &ActorContext),
    (p2, q2): (&ActorContext, &ActorContext),
) -> Option<(ActorContext, ActorContext)> {
    let mut keys: BTreeSet<(Name, Name)> = BTreeSet::new();
    for c in [p1, q1, p2, q2] {
        keys.extend(c.entries().map(|(a, r, _)| (a.clone(), r.clone())));
    }
    let mut th1 = ActorContext::new();
    let mut th2 = ActorContext::new();
    for (a, r) in keys {
        let (x1, y1, x2, y2) = (p1.get(&a, &r), q1.get(&a, &r), p2.get(&a, &r), q2.get(&a, &r));
        let cands = |u: &Grade, v: &Grade, s: &Grade, t: &Grade| {
            let mut c = alloc::vec![Grade::ZERO];
            c.extend(m.minus(u, s));
            c.extend(m.minus(v, t));
            c.push(u.clone());
            c.push(v.clone());
            c.push(Grade::Inf);
            c.retain(|g| m.contains(g));
            c
        };
        let c1 = cands(&x2, &y2, &x1, &y1);
        let c2 = cands(&x1, &y1, &x2, &y2);
        let found = c1.iter().find_map(|t1| {
            c2.iter()
                .find(|t2| m.plus(&x1, t1) == m.plus(&x2, t2) && m.plus(&y1, t1) == m.plus(&y2, t2))
                .map(|t2| (t1.clone(), t2.clone()))
        })?;
        th1.set(a.clone(), r.clone(), found.0);
        th2.set(a, r, found.1);
    }
    Some((th1.normalized(), th2.normalized()))
}

/// Typing of a local environment: variable context and consumed futures.
pub fn type_local_env(env: &LocalEnv, sigma: &Sigma) -> TResult<(Gamma, BTreeSet<Name>)> {
    let mut gamma = Gamma::new();
    let mut used = BTreeSet::new();
    for (x, v) in env.iter() {
        let ty = match v {
            Value::Unit => Type::Unit,
            Value::Res(r, g) => Type::Res(r.clone(), g.clone()),
            Value::Fut(f) => {
                if !used.insert(f.clone()) {
                    return Err(TypeErrorKind::NonLinearFuture(f.clone()));
                }
                sigma.get(f).cloned().ok_or_else(|| TypeErrorKind::UnknownFuture(f.clone()))?
            }
        };
        gamma.insert(x.clone(), ty);
    }
    Ok((gamma, used))
}

/// Previously assigned future types, used to keep a thread's interface
/// stable across steps.
pub type Hints = BTreeMap<Name, Type>;

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProcTyping {
    pub req: ActorContext,
    /// Futures consumed from outside the process.
    pub consumed: Sigma,
    pub measure: u64,
    /// Produced futures with their types and marks.
    pub produced: BTreeMap<Name, (Type, bool)>,
    /// Measure of each atom, in order.
    pub atom_measures: Vec<u64>,
}

impl ProcTyping {
    pub fn future_types(&self) -> Hints {
        self.produced.iter().map(|(f, (t, _))| (f.clone(), t.clone())).collect()
    }
}

fn value_type(m: &GradeInstance, v: &Value, sigma: &Sigma) -> TResult<Type> {
    let _ = m;
    match v {
        Value::Unit => Ok(Type::Unit),
        Value::Res(r, g) => Ok(Type::Res(r.clone(), g.clone())),
        Value::Fut(f) => sigma.get(f).cloned().ok_or_else(|| TypeErrorKind::UnknownFuture(f.clone())),
    }
}

/// Weakens `(req, prod)` by the least `theta` with `prod + theta = target`.
fn weaken_to(m: &GradeInstance, req: &ActorContext, prod: &ActorContext, target: &ActorContext) -> Option<ActorContext> {
    let theta = ctx_residual(m, target, prod)?;
    Some(req.plus(m, &theta).normalized())
}

/// Whether some `theta` turns `(req, prod)` into exactly `(dreq, dprod)`.
pub fn weakens_to(
    m: &GradeInstance,
    (req, prod): (&ActorContext, &ActorContext),
    (dreq, dprod): (&ActorContext, &ActorContext),
) -> bool {
    ctx_keys(&[req, prod, dreq, dprod]).into_iter().all(|(a, r)| {
        let (p, q, dp, dq) = (req.get(&a, &r), prod.get(&a, &r), dreq.get(&a, &r), dprod.get(&a, &r));
        let mut cands = alloc::vec![Grade::ZERO];
        cands.extend(m.minus(&dp, &p));
        cands.extend(m.minus(&dq, &q));
        cands.iter().any(|t| m.plus(&p, t) == dp && m.plus(&q, t) == dq)
    })
}

impl<'p> Checker<'p> {
    fn atom(&self, atom: &Atom, sigma: &Sigma, hints: &Hints) -> TResult<(ActorContext, u64, Option<(Name, Type)>)> {
        let m = self.m();
        match atom {
            Atom::Idle(_) => Ok((ActorContext::new(), 0, None)),
            Atom::Fulfilled(f, v) => {
                let ty = value_type(m, v, sigma)?;
                let literal = !matches!(v, Value::Fut(_));
                match hints.get(f) {
                    Some(Type::Fut(th, psi)) if fits(m, &ty, th, literal) => {
                        Ok((psi.clone(), 0, Some((f.clone(), Type::fut((**th).clone(), psi.clone())))))
                    }
                    _ => Ok((ActorContext::new(), 0, Some((f.clone(), Type::fut(ty, ActorContext::new()))))),
                }
            }
            Atom::Call(msg) => {
                let decl = self.mtype(&msg.actor, &msg.method)?;
                if decl.params.len() != msg.args.len() {
                    return Err(TypeErrorKind::ArityMismatch {
                        callee: format!("{}.{}", msg.actor, msg.method),
                        expected: decl.params.len(),
                        found: msg.args.len(),
                    });
                }
                for ((_, expected), v) in decl.params.iter().zip(&msg.args) {
                    let ty = value_type(m, v, sigma)?;
                    if !fits(m, &ty, expected, !matches!(v, Value::Fut(_))) {
                        return Err(TypeErrorKind::ArgumentMismatch { expected: expected.clone(), found: ty });
                    }
                }
                let ty = Type::fut(decl.ret.clone(), decl.produces.clone());
                Ok((decl.requires.normalized(), decl.measure + 2, Some((msg.future.clone(), ty))))
            }
            Atom::Active(t) | Atom::Suspended(t) => {
                let (gamma, _) = type_local_env(&t.env, sigma)?;
                let et = self.type_expr(&t.actor, &gamma, sigma, &t.expr)?;
                for (x, ty) in &gamma {
                    self.check_binding(x, ty, et.usage.get(x), et.absorbs, false)?;
                }
                let n = et.measure.fin().ok_or(TypeErrorKind::Unbounded)?;
                let canonical = (et.req.clone(), Type::fut(et.ty.clone(), et.prod.clone()));
                let (req, ty) = match hints.get(&t.future) {
                    Some(Type::Fut(th, psi)) if fits(m, &et.ty, th, false) || fits(m, &et.ty, th, true) => {
                        match weaken_to(m, &et.req, &et.prod, psi) {
                            Some(req) => (req, Type::fut((**th).clone(), psi.clone())),
                            None => canonical,
                        }
                    }
                    _ => canonical,
                };
                Ok((req, n + 1, Some((t.future.clone(), ty))))
            }
        }
    }

    /// Types a process left to right; `ambient` lists futures available from
    /// outside.
    pub fn type_process(&self, atoms: &[Atom], ambient: &Sigma, hints: &Hints) -> Result<ProcTyping, TypeError> {
        let m = self.m();
        let all_produced: BTreeSet<&Name> = atoms.iter().filter_map(Atom::produced).collect();
        let mut avail = Sigma::new();
        let mut produced: BTreeMap<Name, (Type, bool)> = BTreeMap::new();
        let mut consumed = Sigma::new();
        let mut req = ActorContext::new();
        let mut measure = 0u64;
        let mut atom_measures = Vec::with_capacity(atoms.len());
        for (i, atom) in atoms.iter().enumerate() {
            let at = |kind: TypeErrorKind| TypeError { kind, loc: Loc::Process(i) };
            let mut local = Sigma::new();
            for f in atom.consumed() {
                if let Some(t) = avail.remove(&f) {
                    produced.get_mut(&f).expect("available futures are produced").1 = true;
                    local.insert(f, t);
                } else if produced.contains_key(&f) {
                    return Err(at(TypeErrorKind::MarkedReuse(f)));
                } else if all_produced.contains(&f) {
                    return Err(at(TypeErrorKind::FutureConsumedBeforeProduced(f)));
                } else if let Some(t) = ambient.get(&f) {
                    if consumed.insert(f.clone(), t.clone()).is_some() {
                        return Err(at(TypeErrorKind::MarkedReuse(f)));
                    }
                    local.insert(f, t.clone());
                } else {
                    return Err(at(TypeErrorKind::UnknownFuture(f)));
                }
            }
            let (r, n, out) = self.atom(atom, &local, hints).map_err(at)?;
            req = req.plus(m, &r);
            measure += n;
            atom_measures.push(n);
            if let Some((f, t)) = out {
                if produced.contains_key(&f) {
                    return Err(at(TypeErrorKind::DoubleProduce(f)));
                }
                produced.insert(f.clone(), (t.clone(), false));
                avail.insert(f, t);
            }
        }
        Ok(ProcTyping { req: req.normalized(), consumed, measure, produced, atom_measures })
    }

    /// Types a configuration with residual `theta`: the actor context must
    /// cover what the process requires plus the residual.
    pub fn type_config(&self, cfg: &Configuration, theta: &ActorContext, hints: &Hints) -> Result<ProcTyping, TypeError> {
        let m = self.m();
        let pt = self.type_process(&cfg.process.0, &Sigma::new(), hints)?;
        let need = pt.req.plus(m, theta);
        if let Some((actor, resource)) = need.first_not_leq(m, &cfg.ctx) {
            return Err(TypeError {
                kind: TypeErrorKind::InsufficientInitialResources {
                    required: need.get(&actor, &resource),
                    available: cfg.ctx.get(&actor, &resource),
                    actor,
                    resource,
                },
                loc: Loc::Unknown,
            });
        }
        Ok(pt)
    }
}

/// Typing of a label by the thread of actor `a` (used when checking
/// subject reduction).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LabelTyping {
    pub req: ActorContext,
    pub consumed: Sigma,
    pub produced: Sigma,
    pub released: ActorContext,
}

pub fn type_label(prog: &Program, a: &Name, l: &Label, sigma: &Sigma) -> TResult<LabelTyping> {
    let empty = LabelTyping {
        req: ActorContext::new(),
        consumed: Sigma::new(),
        produced: Sigma::new(),
        released: ActorContext::new(),
    };
    match l {
        Label::Tau => Ok(empty),
        Label::Rls(r, g) => Ok(LabelTyping { released: ActorContext::single(a.clone(), r.clone(), g.clone()), ..empty }),
        Label::Hold(r, g) => Ok(LabelTyping { req: ActorContext::single(a.clone(), r.clone(), g.clone()), ..empty }),
        Label::Call(msg) => {
            let decl = prog
                .method(&msg.actor, &msg.method)
                .ok_or_else(|| TypeErrorKind::UnknownMethod(msg.actor.clone(), msg.method.clone()))?;
            let consumed: Sigma = msg
                .args
                .iter()
                .filter_map(Value::future)
                .map(|f| sigma.get(f).map(|t| (f.clone(), t.clone())).ok_or_else(|| TypeErrorKind::UnknownFuture(f.clone())))
                .collect::<TResult<_>>()?;
            let mut produced = Sigma::new();
            produced.insert(msg.future.clone(), Type::fut(decl.ret.clone(), decl.produces.clone()));
            Ok(LabelTyping { req: decl.requires.clone(), consumed, produced, ..empty })
        }
        Label::Fut(f, v) => {
            let ty = value_type(&prog.grades, v, sigma)?;
            let (inner, psi) = match sigma.get(f) {
                Some(Type::Fut(t, psi)) => ((**t).clone(), psi.clone()),
                _ => (ty, ActorContext::new()),
            };
            let mut produced = Sigma::new();
            produced.insert(f.clone(), Type::fut(inner, psi.clone()));
            let consumed = v.future().and_then(|g| sigma.get(g).map(|t| (g.clone(), t.clone()))).into_iter().collect();
            Ok(LabelTyping { req: psi, consumed, produced, ..empty })
        }
    }
}

/// Computed signature of a method body.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ComputedSig {
    pub ty: Type,
    pub requires: ActorContext,
    pub produces: ActorContext,
    pub measure: Measure,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MethodReport {
    pub actor: Name,
    pub method: Name,
    pub computed: Option<ComputedSig>,
    pub errors: Vec<TypeError>,
}

impl MethodReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Methods that can reach themselves through calls.
fn call_graph(prog: &Program) -> BTreeMap<(Name, Name), BTreeSet<(Name, Name)>> {
    fn calls(e: &Expr, out: &mut BTreeSet<(Name, Name)>) {
        match e {
            Expr::Call { actor, method, .. } => {
                out.insert((actor.clone(), method.clone()));
            }
            Expr::Choice(e1, e2) | Expr::Let(_, e1, e2) => {
                calls(e1, out);
                calls(e2, out);
            }
            _ => {}
        }
    }
    let mut reach: BTreeMap<(Name, Name), BTreeSet<(Name, Name)>> = BTreeMap::new();
    for a in &prog.actors {
        for m in &a.methods {
            let mut out = BTreeSet::new();
            calls(&m.body, &mut out);
            reach.insert((a.name.clone(), m.name.clone()), out);
        }
    }
    loop {
        let mut changed = false;
        let keys: Vec<_> = reach.keys().cloned().collect();
        for k in keys {
            let direct: Vec<_> = reach[&k].iter().cloned().collect();
            for d in direct {
                let more: Vec<_> = reach.get(&d).map(|s| s.iter().cloned().collect()).unwrap_or_default();
                let set = reach.get_mut(&k).expect("key present");
                for x in more {
                    changed |= set.insert(x);
                }
            }
        }
        if !changed {
            return reach;
        }
    }
}

/// Methods on a call cycle.
pub fn recursive_methods(prog: &Program) -> BTreeSet<(Name, Name)> {
    call_graph(prog).into_iter().filter(|(k, r)| r.contains(k)).map(|(k, _)| k).collect()
}

/// Checks every method body against its declaration.
pub fn check_method_table(prog: &Program) -> Vec<MethodReport> {
    let m = &prog.grades;
    let graph = call_graph(prog);
    let mut reports = Vec::new();
    for a in &prog.actors {
        for decl in &a.methods {
            let key = (a.name.clone(), decl.name.clone());
            let loc = Loc::Method { actor: a.name.clone(), method: decl.name.clone(), span: decl.span };
            let mut errors = Vec::new();
            let err = |kind| TypeError { kind, loc: loc.clone() };

            let mut probe = Checker::new(prog);
            probe.unbounded =
                graph.iter().filter(|(k, r)| r.contains(&key) && graph[&key].contains(k)).map(|(k, _)| k.clone()).collect();
            if let Ok(t) = probe.type_body(&a.name, &decl.params, &decl.body) {
                if t.measure == Measure::Top {
                    errors.push(err(TypeErrorKind::UnsolvableRecursiveMeasure));
                }
            }

            let computed = match Checker::new(prog).type_body(&a.name, &decl.params, &decl.body) {
                Ok(t) => {
                    if errors.is_empty() && t.measure != Measure::Fin(decl.measure) {
                        errors.push(err(TypeErrorKind::MeasureMismatch { computed: t.measure, declared: decl.measure }));
                    }
                    if !fits(m, &t.ty, &decl.ret, false) {
                        errors.push(err(TypeErrorKind::ReturnTypeMismatch { computed: t.ty.clone(), declared: decl.ret.clone() }));
                    }
                    if !weakens_to(m, (&t.req, &t.prod), (&decl.requires, &decl.produces)) {
                        errors.push(err(TypeErrorKind::ContextMismatch { req: t.req.clone(), prod: t.prod.clone() }));
                    }
                    Some(ComputedSig { ty: t.ty, requires: t.req, produces: t.prod, measure: t.measure })
                }
                Err(kind) => {
                    errors.push(err(kind));
                    None
                }
            };
            reports.push(MethodReport { actor: a.name.clone(), method: decl.name.clone(), computed, errors });
        }
    }
    reports
}

/// Full program check: method table, then the initial configuration.
#[derive(Clone, Debug)]
pub struct ProgramReport {
    pub methods: Vec<MethodReport>,
    pub config: Result<ProcTyping, TypeError>,
}

impl ProgramReport {
    pub fn ok(&self) -> bool {
        self.methods.iter().all(MethodReport::ok) && self.config.is_ok()
    }

    pub fn errors(&self) -> Vec<TypeError> {
        let mut out: Vec<TypeError> = self.methods.iter().flat_map(|r| r.errors.iter().cloned()).collect();
        if let Err(e) = &self.config {
            out.push(e.clone());
        }
        out
    }
}

pub fn check_program(prog: &Program) -> ProgramReport {
    let methods = check_method_table(prog);
    let init = prog.initial_config();
    let config = Checker::new(prog).type_config(&init, &ActorContext::new(), &Hints::new()).map_err(|mut e| {
        e.loc = match e.loc {
            Loc::Process(i) if i < prog.starts.len() => Loc::Init(prog.starts[i].span),
            _ => Loc::Init(prog.init_span),
        };
        e
    });
    ProgramReport { methods, config }
}
