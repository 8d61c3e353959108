// Brute-force declarative typing for a tiny universe: two actors (A runs
// the expressions, B serves calls), two resources, linearity grades.
//
// Derivations are enumerated rule by rule, with every typing-context split,
// every future-context split, every internal cancellation of a let and a
// weakening context added on both sides of every rule except let. Actor
// contexts are sums over four independent (actor, resource) slots and every
// rule constrains slots pointwise, so the (required, produced) pairs of a
// derivation family are kept as one 3x3 relation per slot.

use std::collections::HashMap;
use std::rc::Rc;

/// Linearity grades: 0, 1 and 2 for infinity.
pub type G = u8;
pub const INF: G = 2;

pub fn plus(a: G, b: G) -> G {
    match (a, b) {
        (0, x) | (x, 0) => x,
        _ => INF,
    }
}

pub fn leq(a: G, b: G) -> bool {
    a == b || b == INF
}

fn discardable(g: G) -> bool {
    leq(0, g)
}

pub const SLOTS: usize = 4;
pub const ACTORS: [&str; 2] = ["A", "B"];
pub const RESOURCES: [&str; 2] = ["R", "S"];

pub fn slot(actor: usize, res: usize) -> usize {
    actor * 2 + res
}

pub type Ctx = [G; SLOTS];

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Ty {
    Unit,
    Res(usize, G),
    Fut(Box<Ty>, Ctx),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Val {
    Unit,
    Lit(usize, G),
    Graded(&'static str, G),
    Var(&'static str),
    Fut(&'static str),
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Exp {
    Ret(Val),
    Hold(G, usize),
    Rls(G, Val),
    /// `mk(R^1): S^1`
    Mk(Val),
    /// `B!put(R^1)`: requires nothing, produces `B: R^1`, measure 2, returns Unit.
    Put(Val),
    /// `B!take()`: requires `B: R^1`, produces nothing, measure 1, returns `R^1`.
    Take,
    Await(Val),
    Let(&'static str, Box<Exp>, Box<Exp>),
    Ch(Box<Exp>, Box<Exp>),
}

/// Source text of the universe's program; the expressions run as actor A.
pub const PROGRAM: &str = "grade lin
mk(x: R^1): S^1
A {
  idle(): Unit requires produces measure 0 { return unit }
}
B {
  put(x: R^1): Unit requires produces B: R^1 measure 2 { release 1 x^1; return unit }
  take(): R^1 requires B: R^1 produces measure 1 { hold 1 R }
}
init A:;
start A!idle()
";

fn grade_src(g: G) -> &'static str {
    ["0", "1", "inf"][g as usize]
}

impl Val {
    pub fn src(&self) -> String {
        match self {
            Val::Unit => "unit".into(),
            Val::Lit(r, g) => format!("{}^{}", RESOURCES[*r], grade_src(*g)),
            Val::Graded(x, g) => format!("{x}^{}", grade_src(*g)),
            Val::Var(x) | Val::Fut(x) => x.to_string(),
        }
    }
}

impl Exp {
    pub fn src(&self) -> String {
        match self {
            Exp::Ret(v) => format!("return {}", v.src()),
            Exp::Hold(g, r) => format!("hold {} {}", grade_src(*g), RESOURCES[*r]),
            Exp::Rls(g, v) => format!("release {} {}", grade_src(*g), v.src()),
            Exp::Mk(v) => format!("mk({})", v.src()),
            Exp::Put(v) => format!("B!put({})", v.src()),
            Exp::Take => "B!take()".into(),
            Exp::Await(v) => format!("{}?", v.src()),
            Exp::Let(x, e1, e2) => format!("(let {x} = {} in {})", e1.src(), e2.src()),
            Exp::Ch(e1, e2) => format!("({} (+) {})", e1.src(), e2.src()),
        }
    }
}

/// Per-slot relation on grades: bit `3 * req + prod`.
pub type Rel = u16;
pub type Rels = [Rel; SLOTS];

fn bit(a: G, b: G) -> Rel {
    1 << (3 * a + b)
}

pub fn has(r: Rel, a: G, b: G) -> bool {
    r & bit(a, b) != 0
}

fn pairs(r: Rel) -> impl Iterator<Item = (G, G)> {
    (0..3).flat_map(move |a| (0..3).map(move |b| (a, b))).filter(move |&(a, b)| has(r, a, b))
}

/// Adds the same weakening grade to both sides.
fn weaken(r: Rel) -> Rel {
    let mut out = 0;
    for (a, b) in pairs(r) {
        for t in 0..3 {
            out |= bit(plus(a, t), plus(b, t));
        }
    }
    out
}

/// `(x + t, y + t)` for the given base pair per slot.
fn base(req: Ctx, prod: Ctx) -> Rels {
    std::array::from_fn(|s| weaken(bit(req[s], prod[s])))
}

#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Judgement {
    pub ty: Ty,
    pub measure: u32,
    pub rels: Rels,
}

impl Judgement {
    pub fn admits(&self, req: &Ctx, prod: &Ctx) -> bool {
        (0..SLOTS).all(|s| has(self.rels[s], req[s], prod[s]))
    }
}

pub type Env = Vec<(&'static str, Ty)>;

fn env_discardable(env: &[(&'static str, Ty)]) -> bool {
    env.iter().all(|(_, t)| match t {
        Ty::Unit => true,
        Ty::Res(_, g) => discardable(*g),
        Ty::Fut(..) => false,
    })
}

/// Ways to write `env` as a sum of two contexts.
fn splits(env: &[(&'static str, Ty)]) -> Vec<(Env, Env)> {
    let mut out = vec![(Env::new(), Env::new())];
    for (x, t) in env {
        let mut next = Vec::new();
        for (l, r) in &out {
            let mut push = |lt: Option<Ty>, rt: Option<Ty>| {
                let (mut l, mut r) = (l.clone(), r.clone());
                l.extend(lt.map(|t| (*x, t)));
                r.extend(rt.map(|t| (*x, t)));
                next.push((l, r));
            };
            push(Some(t.clone()), None);
            push(None, Some(t.clone()));
            match t {
                Ty::Unit => push(Some(Ty::Unit), Some(Ty::Unit)),
                Ty::Res(res, g) => {
                    for g1 in 0..3 {
                        for g2 in 0..3 {
                            if plus(g1, g2) == *g {
                                push(Some(Ty::Res(*res, g1)), Some(Ty::Res(*res, g2)));
                            }
                        }
                    }
                }
                Ty::Fut(..) => {}
            }
        }
        out = next;
    }
    out
}

#[derive(Default)]
pub struct Oracle {
    memo: HashMap<(Env, Env, Exp), Rc<Vec<Judgement>>>,
    compose: HashMap<(Rel, Rel), Rel>,
}

fn ctx1(s: usize, g: G) -> Ctx {
    let mut c = [0; SLOTS];
    c[s] = g;
    c
}

impl Oracle {
    /// Value-expression typing: the single used entry plus discardable rest.
    fn value(&self, gamma: &[(&'static str, Ty)], sigma: &[(&'static str, Ty)], v: &Val) -> Option<Ty> {
        let rest_of = |x: &str| -> Env { gamma.iter().filter(|(y, _)| *y != x).cloned().collect() };
        let found = |x: &str| gamma.iter().find(|(y, _)| *y == x).map(|(_, t)| t.clone());
        match v {
            Val::Fut(f) => match sigma {
                [(g, t)] if g == f && env_discardable(gamma) => Some(t.clone()),
                _ => None,
            },
            _ if !sigma.is_empty() => None,
            Val::Unit => env_discardable(gamma).then_some(Ty::Unit),
            Val::Lit(r, g) => env_discardable(gamma).then_some(Ty::Res(*r, *g)),
            Val::Graded(x, g) => match found(x)? {
                Ty::Res(r, h) if leq(*g, h) && env_discardable(&rest_of(x)) => Some(Ty::Res(r, *g)),
                _ => None,
            },
            Val::Var(x) => match found(x)? {
                Ty::Res(..) => None,
                t => env_discardable(&rest_of(x)).then_some(t),
            },
        }
    }

    fn compose(&mut self, r1: Rel, r2: Rel) -> Rel {
        if let Some(&r) = self.compose.get(&(r1, r2)) {
            return r;
        }
        // (p1 + p2, q1' + q2) where e1 : p1 -> c + q1', e2 : p2 + c -> q2
        let mut out = 0;
        for (p1, mid) in pairs(r1) {
            for c in 0..3 {
                for q1 in 0..3 {
                    if plus(c, q1) != mid {
                        continue;
                    }
                    for (need, q2) in pairs(r2) {
                        for p2 in 0..3 {
                            if plus(p2, c) == need {
                                out |= bit(plus(p1, p2), plus(q1, q2));
                            }
                        }
                    }
                }
            }
        }
        self.compose.insert((r1, r2), out);
        out
    }

    /// Like [`Oracle::derive`] but does not keep the result.
    pub fn derive_once(&mut self, gamma: &Env, sigma: &Env, e: &Exp) -> Rc<Vec<Judgement>> {
        let out = self.derive(gamma, sigma, e);
        self.memo.remove(&(gamma.clone(), sigma.clone(), e.clone()));
        out
    }

    pub fn derive(&mut self, gamma: &Env, sigma: &Env, e: &Exp) -> Rc<Vec<Judgement>> {
        let key = (gamma.clone(), sigma.clone(), e.clone());
        if let Some(r) = self.memo.get(&key) {
            return r.clone();
        }
        let mut out: Vec<Judgement> = Vec::new();
        let mut add = |j: Judgement| {
            if j.rels.iter().all(|&r| r != 0) && !out.contains(&j) {
                out.push(j);
            }
        };
        let zero = [0; SLOTS];
        let a = 0;
        match e {
            Exp::Ret(v) => {
                if let Some(ty) = self.value(gamma, sigma, v) {
                    add(Judgement { ty, measure: 0, rels: base(zero, zero) });
                }
            }
            Exp::Hold(g, r) => {
                if gamma.is_empty() && sigma.is_empty() {
                    let s = slot(a, *r);
                    let mut rels = base(zero, zero);
                    rels[s] = (0..3).filter(|&h| leq(*g, h)).map(|h| weaken(bit(h, 0))).fold(0, |x, y| x | y);
                    add(Judgement { ty: Ty::Res(*r, *g), measure: 1, rels });
                }
            }
            Exp::Rls(g, v) => {
                if let Some(Ty::Res(r, h)) = self.value(gamma, sigma, v) {
                    if leq(*g, h) {
                        add(Judgement { ty: Ty::Unit, measure: 1, rels: base(zero, ctx1(slot(a, r), *g)) });
                    }
                }
            }
            Exp::Mk(v) => {
                if self.value(gamma, sigma, v) == Some(Ty::Res(0, 1)) {
                    add(Judgement { ty: Ty::Res(1, 1), measure: 1, rels: base(zero, zero) });
                }
            }
            Exp::Put(v) => {
                if self.value(gamma, sigma, v) == Some(Ty::Res(0, 1)) {
                    let ty = Ty::Fut(Box::new(Ty::Unit), ctx1(slot(1, 0), 1));
                    add(Judgement { ty, measure: 2 + 3, rels: base(zero, zero) });
                }
            }
            Exp::Take => {
                if gamma.is_empty() && sigma.is_empty() {
                    let ty = Ty::Fut(Box::new(Ty::Res(0, 1)), zero);
                    add(Judgement { ty, measure: 1 + 3, rels: base(ctx1(slot(1, 0), 1), zero) });
                }
            }
            Exp::Await(v) => {
                if let Some(Ty::Fut(t, psi)) = self.value(gamma, sigma, v) {
                    add(Judgement { ty: *t, measure: 1, rels: base(zero, psi) });
                }
            }
            Exp::Ch(e1, e2) => {
                let j1 = self.derive(gamma, sigma, e1);
                let j2 = self.derive(gamma, sigma, e2);
                for a in j1.iter() {
                    for b in j2.iter().filter(|b| b.ty == a.ty) {
                        let rels = std::array::from_fn(|s| weaken(a.rels[s] & b.rels[s]));
                        for n in [a.measure, b.measure] {
                            add(Judgement { ty: a.ty.clone(), measure: 1 + n, rels });
                        }
                    }
                }
            }
            Exp::Let(x, e1, e2) => {
                for (g1, g2) in splits(gamma) {
                    for (s1, s2) in splits(sigma).into_iter().filter(|(l, r)| {
                        // futures split without sharing
                        l.iter().all(|(f, _)| !r.iter().any(|(h, _)| h == f))
                    }) {
                        let j1 = self.derive(&g1, &s1, e1);
                        for a in j1.iter() {
                            let mut inner = g2.clone();
                            inner.push((*x, a.ty.clone()));
                            inner.sort_by(|p, q| p.0.cmp(q.0));
                            let j2 = self.derive(&inner, &s2, e2);
                            for b in j2.iter() {
                                let rels = std::array::from_fn(|s| self.compose(a.rels[s], b.rels[s]));
                                add(Judgement { ty: b.ty.clone(), measure: 1 + a.measure + b.measure, rels });
                            }
                        }
                    }
                }
            }
        }
        let out = Rc::new(out);
        self.memo.insert(key, out.clone());
        out
    }
}

/// Leaves over the variables in scope, plus `f` when a future is ambient.
pub fn leaves(scope: &[&'static str], future: bool) -> Vec<Exp> {
    let r1 = Val::Lit(0, 1);
    let mut out = vec![
        Exp::Ret(Val::Unit),
        Exp::Ret(r1.clone()),
        Exp::Hold(1, 0),
        Exp::Hold(1, 1),
        Exp::Rls(1, r1.clone()),
        Exp::Mk(r1.clone()),
        Exp::Put(r1),
        Exp::Take,
    ];
    for &v in scope {
        out.extend([
            Exp::Ret(Val::Graded(v, 1)),
            Exp::Ret(Val::Var(v)),
            Exp::Rls(1, Val::Graded(v, 1)),
            Exp::Mk(Val::Graded(v, 1)),
            Exp::Put(Val::Graded(v, 1)),
            Exp::Await(Val::Var(v)),
        ]);
    }
    if future {
        out.extend([Exp::Await(Val::Fut("f")), Exp::Ret(Val::Fut("f"))]);
    }
    out
}

/// Expressions of depth at most `depth` (a leaf has depth 1). Let binders
/// are named after the depth of the let so no binder is ever shadowed.
pub fn universe(depth: usize, scope: &[&'static str], future: bool) -> Vec<Exp> {
    const BINDERS: [&str; 4] = ["", "", "y", "x"];
    let mut out = leaves(scope, future);
    if depth <= 1 {
        return out;
    }
    let lower = universe(depth - 1, scope, future);
    let x = BINDERS[depth.min(3)];
    let mut inner_scope = scope.to_vec();
    inner_scope.push(x);
    let body = universe(depth - 1, &inner_scope, future);
    for e1 in &lower {
        for e2 in &body {
            out.push(Exp::Let(x, Box::new(e1.clone()), Box::new(e2.clone())));
        }
        for e2 in &lower {
            out.push(Exp::Ch(Box::new(e1.clone()), Box::new(e2.clone())));
        }
    }
    out
}
