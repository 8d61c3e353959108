#[path = "support/corpus.rs"]
mod corpus;

use gract_core::ast::{Atom, Configuration, Expr, Value, ValueExpr};
use gract_core::grades::{ActorContext, Grade};
use gract_core::parser::parse_program;
use gract_core::semantics::{run, FifoScheduler, Label, RandomScheduler, Rule, RunStatus, StepResult, Stuck};
use gract_core::Name;
use std::collections::{BTreeMap, BTreeSet};

// (rule, actor) of each step of the reduction shown for the cafe example.
const FIG6: [(&str, &str); 15] = [
    ("spawn", "Customer"),
    ("call", "Customer"),
    ("spawn", "Barista"),
    ("silent", "Customer"),
    ("hold", "Barista"),
    ("silent", "Barista"),
    ("silent", "Barista"),
    ("silent", "Barista"),
    ("call", "Barista"),
    ("spawn", "Counter"),
    ("rls", "Counter"),
    ("silent", "Counter"),
    ("return", "Counter"),
    ("silent", "Barista"),
    ("get", "Barista"),
];

fn scripted<'a>(script: &'a [(&'a str, &'a str)]) -> impl FnMut(&Configuration, &[StepResult]) -> Option<usize> + 'a {
    let mut k = 0;
    move |_, succ| {
        let (rule, actor) = *script.get(k)?;
        k += 1;
        succ.iter().position(|s| s.rule == Rule::parse(rule).unwrap() && s.actor.as_str() == actor)
    }
}

#[test]
fn cafe_replays_the_example_reduction() {
    let p = parse_program(corpus::CAFE).unwrap();
    let t = run(&p, p.initial_config(), &mut scripted(&FIG6), FIG6.len());
    assert_eq!(t.steps.len(), FIG6.len(), "status {:?}", t.status);
    for (s, (rule, actor)) in t.steps.iter().zip(FIG6) {
        assert_eq!((s.rule.as_str(), s.actor.as_str()), (rule, actor));
    }
    let (b, cc, cn, cf) = (Name::new("Barista"), Name::new("CleanCup"), Name::new("Counter"), Name::new("Coffee"));
    let phi0 = ActorContext::single(b.clone(), cc.clone(), Grade::Nat(0));
    let mut phi1 = phi0.clone();
    phi1.set(cn, cf, Grade::Nat(1));
    assert_eq!(t.steps[4].next.ctx, phi0);
    assert_eq!(t.steps[4].label, Label::Hold(cc, Grade::Nat(1)));
    for s in &t.steps[5..10] {
        assert_eq!(s.next.ctx, phi0);
    }
    for s in &t.steps[10..] {
        assert_eq!(s.next.ctx, phi1);
    }
    // after the get the barista's thread holds no futures
    let last = t.last();
    assert!(last.process.0.iter().any(|a| matches!(a, Atom::Active(th) if th.actor == b && th.env.futures().is_empty())));
}

fn literal_totals(e: &Expr, out: &mut BTreeMap<Name, u64>) {
    let mut ves = Vec::new();
    e.value_exprs(&mut ves);
    for ve in ves {
        if let ValueExpr::Val(Value::Res(r, Grade::Nat(n))) = ve {
            *out.entry(r).or_insert(0) += n;
        }
    }
}

// Units of each resource held anywhere: actor contexts, environments,
// messages, fulfilled futures and values in transit inside expressions.
fn resource_totals(c: &Configuration) -> BTreeMap<Name, u64> {
    let mut out = BTreeMap::new();
    let value = |v: &Value, out: &mut BTreeMap<Name, u64>| {
        if let Value::Res(r, Grade::Nat(n)) = v {
            *out.entry(r.clone()).or_insert(0) += n;
        }
    };
    for (_, r, g) in c.ctx.entries() {
        value(&Value::Res(r.clone(), g.clone()), &mut out);
    }
    for a in &c.process.0 {
        match a {
            Atom::Active(t) | Atom::Suspended(t) => {
                t.env.iter().for_each(|(_, v)| value(v, &mut out));
                literal_totals(&t.expr, &mut out);
            }
            Atom::Call(m) => m.args.iter().for_each(|v| value(v, &mut out)),
            Atom::Fulfilled(_, v) => value(v, &mut out),
            Atom::Idle(_) => {}
        }
    }
    out
}

// Literals written in a method body enter the system when it is spawned.
fn spawned_literals(s: &StepResult) -> BTreeMap<Name, u64> {
    let mut out = BTreeMap::new();
    if s.rule == Rule::Spawn {
        for a in &s.next.process.0 {
            if let Atom::Active(t) = a {
                if t.actor == s.actor {
                    literal_totals(&t.expr, &mut out);
                }
            }
        }
    }
    out
}

#[test]
fn random_runs_stay_well_formed_and_conserve_resources() {
    let p = parse_program(corpus::CAFE).unwrap();
    for seed in 0..50 {
        let t = run(&p, p.initial_config(), &mut RandomScheduler::new(seed), 200);
        let mut prev = t.initial.clone();
        let mut read = BTreeSet::new();
        for s in &t.steps {
            s.next.well_formed().unwrap_or_else(|e| panic!("seed {seed}: {e:?}"));
            if s.expr_rule != Some("e-op") {
                let mut expect = resource_totals(&prev);
                for (r, n) in spawned_literals(s) {
                    *expect.entry(r).or_insert(0) += n;
                }
                let got = resource_totals(&s.next);
                expect.retain(|_, n| *n > 0);
                let got: BTreeMap<_, _> = got.into_iter().filter(|(_, n)| *n > 0).collect();
                assert_eq!(expect, got, "seed {seed} {} {:?}", s.rule, s.expr_rule);
            }
            if let Label::Fut(f, _) = &s.label {
                assert!(read.insert(f.clone()), "future {f} read twice");
            }
            prev = s.next.clone();
        }
        assert!(matches!(t.status, RunStatus::Terminated | RunStatus::BoundExhausted), "{:?}", t.status);
    }
}

#[test]
fn always_recursing_never_terminates() {
    let p = parse_program(corpus::CAFE).unwrap();
    let mut right = |_: &Configuration, succ: &[StepResult]| {
        Some(succ.iter().position(|s| s.expr_rule != Some("e-ch-l")).unwrap_or(0))
    };
    let t = run(&p, p.initial_config(), &mut right, 300);
    assert_eq!(t.status, RunStatus::BoundExhausted);
}

#[test]
fn terminated_configuration_has_empty_trace() {
    let p = parse_program(corpus::CAFE).unwrap();
    let done = Configuration {
        ctx: p.init.clone(),
        process: gract_core::ast::Process(vec![Atom::Idle("Barista".into()), Atom::Fulfilled("f#0".into(), Value::Unit)]),
        fresh: 1,
    };
    let t = run(&p, done, &mut FifoScheduler, 10);
    assert!(t.steps.is_empty());
    assert_eq!(t.status, RunStatus::Terminated);
}

#[test]
fn missing_cup_blocks_the_barista() {
    let p = parse_program(corpus::CAFE_NOCUP).unwrap();
    let t = run(&p, p.initial_config(), &mut FifoScheduler, 100);
    let RunStatus::Stuck(why) = &t.status else { panic!("{:?}", t.status) };
    assert_eq!(why[0], Stuck::StuckAtHold("Barista".into(), "CleanCup".into(), Grade::Nat(1)));
    assert_eq!(why[0].to_string(), "StuckAtHold(Barista, CleanCup, 1)");
}
