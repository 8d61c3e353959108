// Exhaustive law checker for grade monoids over a finite sample. Subtraction
// is checked against a brute-force supremum computed only from `plus` and
// `leq`.

use gract_core::grades::{Grade, GradeMonoid};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub law: &'static str,
    pub args: Vec<Grade>,
}

/// Greatest `z` in the sample with `g + z <= h`, if the feasible set has one.
pub fn minus_oracle<M: GradeMonoid + ?Sized>(m: &M, sample: &[Grade], h: &Grade, g: &Grade) -> Option<Grade> {
    let feasible: Vec<&Grade> = sample.iter().filter(|z| m.leq(&m.plus(g, z), h)).collect();
    feasible.iter().find(|z| feasible.iter().all(|w| m.leq(w, z))).map(|z| (*z).clone())
}

fn greatest_lower_bound<M: GradeMonoid + ?Sized>(m: &M, sample: &[Grade], g: &Grade, h: &Grade) -> Option<Grade> {
    let lower: Vec<&Grade> = sample.iter().filter(|z| m.leq(z, g) && m.leq(z, h)).collect();
    lower.iter().find(|z| lower.iter().all(|w| m.leq(w, z))).map(|z| (*z).clone())
}

/// Checks every law on `sample`; `skip` exempts known exceptions by law name
/// and arguments.
pub fn check_laws<M: GradeMonoid + ?Sized>(
    m: &M,
    sample: &[Grade],
    skip: &dyn Fn(&'static str, &[Grade]) -> bool,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let z = m.zero();
    let mut check = |law: &'static str, args: &[Grade], ok: bool| {
        if !ok && !skip(law, args) {
            out.push(Violation { law, args: args.to_vec() });
        }
    };
    for g in sample {
        check("neutral", &[g.clone()], m.plus(g, &z) == *g && m.plus(&z, g) == *g);
        check("reflexive", &[g.clone()], m.leq(g, g));
        check("zero-minimal", &[g.clone()], !m.leq(g, &z) || *g == z);
        check("minus-zero", &[g.clone()], m.minus(g, &z).as_ref() == Some(g));
        check("minus-self", &[g.clone()], m.minus(g, g).is_some_and(|d| m.leq(&z, &d)));
        check("meet-idempotent", &[g.clone()], m.meet(g, g) == *g);
        for h in sample {
            let gh = [g.clone(), h.clone()];
            check("commutative", &gh, m.plus(g, h) == m.plus(h, g));
            check("antisymmetric", &gh, !(m.leq(g, h) && m.leq(h, g)) || g == h);
            check("minus-sup", &gh, m.minus(h, g) == minus_oracle(m, sample, h, g));
            if m.leq(g, h) {
                check("minus-discardable", &gh, m.minus(h, g).is_some_and(|d| m.is_discardable(&d)));
            }
            let meet = m.meet(g, h);
            match greatest_lower_bound(m, sample, g, h) {
                Some(glb) => check("meet-glb", &gh, meet == glb),
                None => check("meet-fallback", &gh, meet == z),
            }
            for k in sample {
                let ghk = [g.clone(), h.clone(), k.clone()];
                check("associative", &ghk, m.plus(&m.plus(g, h), k) == m.plus(g, &m.plus(h, k)));
                check("transitive", &ghk, !(m.leq(g, h) && m.leq(h, k)) || m.leq(g, k));
                check("plus-monotone", &ghk, !m.leq(g, h) || m.leq(&m.plus(g, k), &m.plus(h, k)));
                // (g, h', h) in the order of the adjunction statement
                let (hp, hh) = (h, k);
                let lhs = m.leq(&m.plus(g, hp), hh);
                let rhs = m.minus(hh, g).is_some_and(|d| m.leq(hp, &d));
                check("adjunction", &ghk, lhs == rhs);
                // minus monotone and upward-closed in its first argument
                if m.leq(h, k) {
                    if let Some(a) = m.minus(h, g) {
                        check("minus-monotone", &ghk, m.minus(k, g).is_some_and(|b| m.leq(&a, &b)));
                    }
                }
                // antitone in the second argument
                if m.leq(g, h) {
                    if let Some(b) = m.minus(k, h) {
                        check("minus-antitone", &ghk, m.minus(k, g).is_some_and(|a| m.leq(&b, &a)));
                    }
                }
                // h - (g1 + g2) = (h - g1) - g2
                let lhs = m.minus(k, &m.plus(g, h));
                let rhs = m.minus(k, g).and_then(|d| m.minus(&d, h));
                if lhs.is_some() || rhs.is_some() {
                    check("minus-sum", &ghk, lhs == rhs);
                }
            }
        }
    }
    out
}
