//! Abstract syntax: expressions, values, local environments, processes,
//! configurations and programs, plus the produced/consumed future sets.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::grades::{ActorContext, Grade, GradeInstance};
use crate::name::Name;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Value {
    Res(Name, Grade),
    Fut(Name),
    Unit,
}

impl Value {
    pub fn future(&self) -> Option<&Name> {
        match self {
            Value::Fut(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum ValueExpr {
    GradedVar(Name, Grade),
    Var(Name),
    Val(Value),
}

impl ValueExpr {
    pub fn var(&self) -> Option<&Name> {
        match self {
            ValueExpr::GradedVar(x, _) | ValueExpr::Var(x) => Some(x),
            ValueExpr::Val(_) => None,
        }
    }

    fn rename(&mut self, x: &Name, y: &Name) {
        match self {
            ValueExpr::GradedVar(z, _) | ValueExpr::Var(z) if z == x => *z = y.clone(),
            _ => {}
        }
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Expr {
    Call { actor: Name, method: Name, args: Vec<ValueExpr> },
    Await(ValueExpr),
    Hold(Grade, Name),
    Release(Grade, ValueExpr),
    Op(Name, Vec<ValueExpr>),
    Choice(Box<Expr>, Box<Expr>),
    Return(ValueExpr),
    Let(Name, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn let_in(x: Name, e1: Expr, e2: Expr) -> Expr {
        Expr::Let(x, Box::new(e1), Box::new(e2))
    }

    pub fn choice(e1: Expr, e2: Expr) -> Expr {
        Expr::Choice(Box::new(e1), Box::new(e2))
    }

    /// Renames free occurrences of `x` to `y`; `y` must not be bound inside.
    pub fn rename(&mut self, x: &Name, y: &Name) {
        match self {
            Expr::Call { args, .. } | Expr::Op(_, args) => args.iter_mut().for_each(|a| a.rename(x, y)),
            Expr::Await(ve) | Expr::Release(_, ve) | Expr::Return(ve) => ve.rename(x, y),
            Expr::Hold(..) => {}
            Expr::Choice(e1, e2) => {
                e1.rename(x, y);
                e2.rename(x, y);
            }
            Expr::Let(z, e1, e2) => {
                e1.rename(x, y);
                if z != x {
                    e2.rename(x, y);
                }
            }
        }
    }

    /// Visits every value expression, in evaluation order.
    pub fn value_exprs(&self, out: &mut Vec<ValueExpr>) {
        match self {
            Expr::Call { args, .. } | Expr::Op(_, args) => out.extend(args.iter().cloned()),
            Expr::Await(ve) | Expr::Release(_, ve) | Expr::Return(ve) => out.push(ve.clone()),
            Expr::Hold(..) => {}
            Expr::Choice(e1, e2) | Expr::Let(_, e1, e2) => {
                e1.value_exprs(out);
                e2.value_exprs(out);
            }
        }
    }

    /// Whether `x` occurs free.
    pub fn mentions(&self, x: &Name) -> bool {
        match self {
            Expr::Call { args, .. } | Expr::Op(_, args) => args.iter().any(|a| a.var() == Some(x)),
            Expr::Await(ve) | Expr::Release(_, ve) | Expr::Return(ve) => ve.var() == Some(x),
            Expr::Hold(..) => false,
            Expr::Choice(e1, e2) => e1.mentions(x) || e2.mentions(x),
            Expr::Let(z, e1, e2) => e1.mentions(x) || (z != x && e2.mentions(x)),
        }
    }

    /// Futures written literally in the expression.
    pub fn futures(&self) -> BTreeSet<Name> {
        let mut ves = Vec::new();
        self.value_exprs(&mut ves);
        ves.iter()
            .filter_map(|ve| match ve {
                ValueExpr::Val(Value::Fut(f)) => Some(f.clone()),
                _ => None,
            })
            .collect()
    }

    /// Number of AST nodes of each construct, keyed by a short tag.
    pub fn construct_counts(&self, out: &mut BTreeMap<&'static str, usize>) {
        let tag = match self {
            Expr::Call { .. } => "call",
            Expr::Await(_) => "await",
            Expr::Hold(..) => "hold",
            Expr::Release(..) => "release",
            Expr::Op(..) => "op",
            Expr::Choice(..) => "choice",
            Expr::Return(_) => "return",
            Expr::Let(..) => "let",
        };
        *out.entry(tag).or_default() += 1;
        if let Expr::Choice(e1, e2) | Expr::Let(_, e1, e2) = self {
            e1.construct_counts(out);
            e2.construct_counts(out);
        }
    }
}

/// Ordered variable bindings of a thread.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct LocalEnv(pub Vec<(Name, Value)>);

impl LocalEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, x: &Name) -> Option<&Value> {
        self.0.iter().find(|(y, _)| y == x).map(|(_, v)| v)
    }

    pub fn set(&mut self, x: &Name, v: Value) {
        match self.0.iter_mut().find(|(y, _)| y == x) {
            Some(slot) => slot.1 = v,
            None => self.0.push((x.clone(), v)),
        }
    }

    pub fn remove(&mut self, x: &Name) -> Option<Value> {
        let i = self.0.iter().position(|(y, _)| y == x)?;
        Some(self.0.remove(i).1)
    }

    pub fn futures(&self) -> BTreeSet<Name> {
        self.0.iter().filter_map(|(_, v)| v.future().cloned()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Value)> {
        self.0.iter()
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Thread {
    pub env: LocalEnv,
    pub expr: Expr,
    pub future: Name,
    pub actor: Name,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct CallMsg {
    pub future: Name,
    pub actor: Name,
    pub method: Name,
    pub args: Vec<Value>,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Atom {
    Active(Thread),
    Suspended(Thread),
    Idle(Name),
    Call(CallMsg),
    Fulfilled(Name, Value),
}

impl Atom {
    /// Future produced by this atom, if any.
    pub fn produced(&self) -> Option<&Name> {
        match self {
            Atom::Active(t) | Atom::Suspended(t) => Some(&t.future),
            Atom::Call(m) => Some(&m.future),
            Atom::Fulfilled(f, _) => Some(f),
            Atom::Idle(_) => None,
        }
    }

    pub fn consumed(&self) -> BTreeSet<Name> {
        match self {
            Atom::Active(t) | Atom::Suspended(t) => {
                let mut s = t.env.futures();
                s.extend(t.expr.futures());
                s
            }
            Atom::Call(m) => m.args.iter().filter_map(|v| v.future().cloned()).collect(),
            Atom::Fulfilled(_, v) => v.future().cloned().into_iter().collect(),
            Atom::Idle(_) => BTreeSet::new(),
        }
    }

    pub fn actor(&self) -> Option<&Name> {
        match self {
            Atom::Active(t) | Atom::Suspended(t) => Some(&t.actor),
            Atom::Idle(a) => Some(a),
            Atom::Call(m) => Some(&m.actor),
            Atom::Fulfilled(..) => None,
        }
    }
}

/// Flat parallel composition; the empty sequence is the inert process.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Process(pub Vec<Atom>);

impl Process {
    pub fn fp(&self) -> BTreeSet<Name> {
        self.0.iter().filter_map(|a| a.produced().cloned()).collect()
    }

    /// Consumed futures; composition removes what the left part produces.
    pub fn fr(&self) -> BTreeSet<Name> {
        let mut produced = BTreeSet::new();
        let mut consumed = BTreeSet::new();
        for a in &self.0 {
            consumed.extend(a.consumed().into_iter().filter(|f| !produced.contains(f)));
            if let Some(f) = a.produced() {
                produced.insert(f.clone());
            }
        }
        consumed
    }
}

/// Two atoms may trade places iff neither consumes what the other produces.
pub fn independent(p: &Atom, q: &Atom) -> bool {
    let pq = p.produced().is_none_or(|f| !q.consumed().contains(f));
    let qp = q.produced().is_none_or(|f| !p.consumed().contains(f));
    pq && qp
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Configuration {
    pub ctx: ActorContext,
    pub process: Process,
    /// Next index for generated names.
    pub fresh: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum WellFormedError {
    #[error("actor `{0}` has {1} active threads")]
    ManyActive(Name, usize),
    #[error("actor `{0}` is both idle and running")]
    IdleAndActive(Name),
    #[error("actor `{0}` is idle more than once")]
    ManyIdle(Name),
    #[error("actor `{0}` has suspended threads but is neither idle nor running")]
    Orphaned(Name),
    #[error("future `{0}` is produced more than once")]
    DuplicateFuture(Name),
}

impl Configuration {
    pub fn well_formed(&self) -> Result<(), Vec<WellFormedError>> {
        let mut active: BTreeMap<&Name, usize> = BTreeMap::new();
        let mut idle: BTreeMap<&Name, usize> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        let mut errors = Vec::new();
        for atom in &self.process.0 {
            match atom {
                Atom::Active(t) => *active.entry(&t.actor).or_default() += 1,
                Atom::Suspended(t) => {
                    active.entry(&t.actor).or_default();
                }
                Atom::Idle(a) => *idle.entry(a).or_default() += 1,
                _ => {}
            }
            if let Some(f) = atom.produced() {
                if !seen.insert(f) {
                    errors.push(WellFormedError::DuplicateFuture(f.clone()));
                }
            }
        }
        let mut actors: BTreeSet<&Name> = active.keys().copied().collect();
        actors.extend(idle.keys().copied());
        for a in actors {
            let act = active.get(a).copied().unwrap_or(0);
            let idl = idle.get(a).copied().unwrap_or(0);
            match (act, idl) {
                (1, 0) | (0, 1) => {}
                (0, 0) => errors.push(WellFormedError::Orphaned(a.clone())),
                (n, 0) => errors.push(WellFormedError::ManyActive(a.clone(), n)),
                (0, _) => errors.push(WellFormedError::ManyIdle(a.clone())),
                _ => errors.push(WellFormedError::IdleAndActive(a.clone())),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Only idle actors and fulfilled futures remain.
    pub fn is_terminated(&self) -> bool {
        self.process.0.iter().all(|a| matches!(a, Atom::Idle(_) | Atom::Fulfilled(..)))
    }

    pub fn fresh_future(&mut self) -> Name {
        let n = Name::new(&format!("f#{}", self.fresh));
        self.fresh += 1;
        n
    }

    pub fn fresh_var(&mut self) -> Name {
        let n = Name::new(&format!("y#{}", self.fresh));
        self.fresh += 1;
        n
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Type {
    Unit,
    Res(Name, Grade),
    Fut(Box<Type>, ActorContext),
}

impl Type {
    pub fn fut(t: Type, ctx: ActorContext) -> Type {
        Type::Fut(Box::new(t), ctx.normalized())
    }

    /// Drops zero entries from every nested context.
    pub fn normalized(&self) -> Type {
        match self {
            Type::Fut(t, c) => Type::fut(t.normalized(), c.clone()),
            t => t.clone(),
        }
    }
}

#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct OpSig {
    pub name: Name,
    pub params: Vec<(Name, Type)>,
    pub ret: Type,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Method {
    pub name: Name,
    pub params: Vec<(Name, Type)>,
    pub ret: Type,
    pub requires: ActorContext,
    pub produces: ActorContext,
    pub measure: u64,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ActorDecl {
    pub name: Name,
    pub methods: Vec<Method>,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StartMsg {
    pub actor: Name,
    pub method: Name,
    pub args: Vec<Value>,
    pub span: Span,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Program {
    pub grades: GradeInstance,
    pub ops: Vec<OpSig>,
    pub actors: Vec<ActorDecl>,
    pub init: ActorContext,
    pub init_span: Span,
    pub starts: Vec<StartMsg>,
}

impl Program {
    pub fn actor(&self, a: &Name) -> Option<&ActorDecl> {
        self.actors.iter().find(|d| &d.name == a)
    }

    pub fn method(&self, a: &Name, m: &Name) -> Option<&Method> {
        self.actor(a)?.methods.iter().find(|d| &d.name == m)
    }

    pub fn op(&self, name: &Name) -> Option<&OpSig> {
        self.ops.iter().find(|o| &o.name == name)
    }

    /// Start messages followed by every declared actor, idle.
    pub fn initial_config(&self) -> Configuration {
        let mut cfg = Configuration { ctx: self.init.clone(), process: Process::default(), fresh: 0 };
        for s in &self.starts {
            let f = cfg.fresh_future();
            cfg.process.0.push(Atom::Call(CallMsg {
                future: f,
                actor: s.actor.clone(),
                method: s.method.clone(),
                args: s.args.clone(),
            }));
        }
        for a in &self.actors {
            cfg.process.0.push(Atom::Idle(a.name.clone()));
        }
        cfg
    }

    /// Replaces the initial actor context (used to derive corpus variants).
    pub fn with_init(&self, init: ActorContext) -> Program {
        Program { init, ..self.clone() }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Res(r, g) => write!(f, "{r}^{g}"),
            Value::Fut(n) => write!(f, "{n}"),
            Value::Unit => f.write_str("unit"),
        }
    }
}

impl fmt::Display for ValueExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueExpr::GradedVar(x, g) => write!(f, "{x}^{g}"),
            ValueExpr::Var(x) => write!(f, "{x}"),
            ValueExpr::Val(v) => write!(f, "{v}"),
        }
    }
}

fn comma<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Call { actor, method, args } => {
                write!(f, "{actor}!{method}(")?;
                comma(f, args)?;
                f.write_str(")")
            }
            Expr::Await(ve) => write!(f, "{ve}?"),
            Expr::Hold(g, r) => write!(f, "hold {g} {r}"),
            Expr::Release(g, ve) => write!(f, "release {g} {ve}"),
            Expr::Op(op, args) => {
                write!(f, "{op}(")?;
                comma(f, args)?;
                f.write_str(")")
            }
            Expr::Choice(e1, e2) => write!(f, "({e1} (+) {e2})"),
            Expr::Return(ve) => write!(f, "return {ve}"),
            Expr::Let(x, e1, e2) if !e2.mentions(x) => {
                if matches!(**e1, Expr::Let(..)) {
                    write!(f, "({e1}); {e2}")
                } else {
                    write!(f, "{e1}; {e2}")
                }
            }
            Expr::Let(x, e1, e2) => write!(f, "let {x} = {e1} in {e2}"),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Unit => f.write_str("Unit"),
            Type::Res(r, g) => write!(f, "{r}^{g}"),
            Type::Fut(t, c) => write!(f, "Fut({t} | {c})"),
        }
    }
}

impl fmt::Display for LocalEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (x, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x} -> {v}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Active(t) => write!(f, "active[{}]{{{} |- {}}}^{}", t.actor, t.env, t.expr, t.future),
            Atom::Suspended(t) => write!(f, "suspended[{}]{{{} |- {}}}^{}", t.actor, t.env, t.expr, t.future),
            Atom::Idle(a) => write!(f, "idle[{a}]"),
            Atom::Call(m) => {
                write!(f, "{}!{}.{}(", m.future, m.actor, m.method)?;
                comma(f, &m.args)?;
                f.write_str(")")
            }
            Atom::Fulfilled(fu, v) => write!(f, "{fu} <- {v}"),
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("0");
        }
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} |- {}", self.ctx, self.process)
    }
}

fn params(f: &mut fmt::Formatter<'_>, ps: &[(Name, Type)]) -> fmt::Result {
    for (i, (x, t)) in ps.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}: {t}")?;
    }
    Ok(())
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.grades {
            GradeInstance::Level(l) => {
                f.write_str("grade level {")?;
                let mut items: Vec<String> = l.covering_pairs().iter().map(|(a, b)| format!("{a} <= {b}")).collect();
                for lv in l.levels() {
                    if !l.covering_pairs().iter().any(|(a, b)| a == lv || b == lv) {
                        items.push(format!("{lv}"));
                    }
                }
                writeln!(f, " {} }}", items.join(", "))?;
            }
            g => writeln!(f, "grade {}", g.keyword())?,
        }
        for op in &self.ops {
            write!(f, "\n{}(", op.name)?;
            params(f, &op.params)?;
            writeln!(f, "): {}", op.ret)?;
        }
        for a in &self.actors {
            writeln!(f, "\n{} {{", a.name)?;
            for m in &a.methods {
                write!(f, "  {}(", m.name)?;
                params(f, &m.params)?;
                writeln!(f, "): {}", m.ret)?;
                writeln!(f, "    requires {} produces {} measure {}", m.requires, m.produces, m.measure)?;
                writeln!(f, "  {{ {} }}", m.body)?;
            }
            writeln!(f, "}}")?;
        }
        writeln!(f, "\ninit {};", self.init)?;
        for s in &self.starts {
            write!(f, "start {}!{}(", s.actor, s.method)?;
            comma(f, &s.args)?;
            writeln!(f, ")")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(s: &str) -> Name {
        Name::new(s)
    }

    fn thread(env: LocalEnv, expr: Expr, fut: &str, actor: &str) -> Thread {
        Thread { env, expr, future: n(fut), actor: n(actor) }
    }

    #[test]
    fn fp_fr_examples() {
        let fulfilled = Atom::Fulfilled(n("f"), Value::Unit);
        assert_eq!(Process(alloc::vec![fulfilled.clone()]).fp(), [n("f")].into_iter().collect());
        assert!(Process::default().fp().is_empty());
        assert!(Process(alloc::vec![fulfilled.clone()]).fr().is_empty());

        let msg = Atom::Call(CallMsg { future: n("f"), actor: n("a"), method: n("m"), args: alloc::vec![] });
        let t = Atom::Active(thread(LocalEnv::new(), Expr::Return(ValueExpr::Val(Value::Unit)), "g", "b"));
        assert_eq!(Process(alloc::vec![msg, t]).fp(), [n("f"), n("g")].into_iter().collect());

        let mut env = LocalEnv::new();
        env.set(&n("y"), Value::Fut(n("f")));
        let waiting = Atom::Active(thread(env, Expr::Await(ValueExpr::Var(n("y"))), "g", "a"));
        assert_eq!(Process(alloc::vec![waiting.clone()]).fr(), [n("f")].into_iter().collect());
        assert!(Process(alloc::vec![fulfilled.clone(), waiting.clone()]).fr().is_empty());
        assert!(!independent(&fulfilled, &waiting));
    }

    #[test]
    fn well_formedness() {
        let t = |a: &str, f: &str| thread(LocalEnv::new(), Expr::Return(ValueExpr::Val(Value::Unit)), f, a);
        let cfg = |atoms| Configuration { ctx: ActorContext::new(), process: Process(atoms), fresh: 0 };
        assert!(cfg(alloc::vec![Atom::Active(t("a", "f")), Atom::Active(t("a", "g"))]).well_formed().is_err());
        assert!(cfg(alloc::vec![Atom::Idle(n("a")), Atom::Suspended(t("a", "f"))]).well_formed().is_ok());
        let dup = cfg(alloc::vec![Atom::Fulfilled(n("f"), Value::Unit), Atom::Fulfilled(n("f"), Value::Unit)]);
        assert_eq!(dup.well_formed(), Err(alloc::vec![WellFormedError::DuplicateFuture(n("f"))]));
    }

    #[test]
    fn rename_respects_shadowing() {
        let body = Expr::let_in(
            n("x"),
            Expr::Return(ValueExpr::Var(n("x"))),
            Expr::Return(ValueExpr::Var(n("x"))),
        );
        let mut e = body.clone();
        e.rename(&n("x"), &n("y#1"));
        assert_eq!(
            e,
            Expr::let_in(n("x"), Expr::Return(ValueExpr::Var(n("y#1"))), Expr::Return(ValueExpr::Var(n("x"))))
        );
    }
}
