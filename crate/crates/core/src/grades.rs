//! Subtractive grade monoids and their pointwise lifting to resource
//! environments and actor contexts.
//!
//! Every instance shares the [`Grade`] representation; zero is always
//! `Grade::Nat(0)`, including the implicit bottom of a level lattice.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::name::Name;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Grade {
    Nat(u64),
    Inf,
    Level(Name),
}

impl Grade {
    pub const ZERO: Grade = Grade::Nat(0);

    pub fn is_zero(&self) -> bool {
        matches!(self, Grade::Nat(0))
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grade::Nat(n) => write!(f, "{n}"),
            Grade::Inf => f.write_str("inf"),
            Grade::Level(l) => write!(f, "{l}"),
        }
    }
}

/// Ordered commutative monoid with a partial subtraction adjoint to `plus`.
pub trait GradeMonoid {
    fn zero(&self) -> Grade {
        Grade::ZERO
    }
    fn plus(&self, g: &Grade, h: &Grade) -> Grade;
    fn leq(&self, g: &Grade, h: &Grade) -> bool;
    /// `minus(h, g)`: the largest `h'` with `g + h' <= h`, if any.
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade>;
    /// Greatest lower bound, or zero when none exists.
    fn meet(&self, g: &Grade, h: &Grade) -> Grade;
    fn contains(&self, g: &Grade) -> bool;
    /// Finite carrier sample used by the law checks.
    fn sample(&self) -> Vec<Grade>;

    fn is_discardable(&self, g: &Grade) -> bool {
        self.leq(&self.zero(), g)
    }
}

fn nat_plus(g: &Grade, h: &Grade) -> Grade {
    match (g, h) {
        (Grade::Nat(a), Grade::Nat(b)) => a.checked_add(*b).map_or(Grade::Inf, Grade::Nat),
        _ => Grade::Inf,
    }
}

fn nat_leq(g: &Grade, h: &Grade) -> bool {
    match (g, h) {
        (_, Grade::Inf) => true,
        (Grade::Nat(a), Grade::Nat(b)) => a <= b,
        _ => false,
    }
}

fn nat_minus(h: &Grade, g: &Grade) -> Option<Grade> {
    match (h, g) {
        (Grade::Inf, _) => Some(Grade::Inf),
        (Grade::Nat(b), Grade::Nat(a)) if a <= b => Some(Grade::Nat(b - a)),
        _ => None,
    }
}

fn nat_sample() -> Vec<Grade> {
    let mut v: Vec<Grade> = (0..=8).map(Grade::Nat).collect();
    v.push(Grade::Inf);
    v
}

fn is_nat(g: &Grade) -> bool {
    matches!(g, Grade::Nat(_) | Grade::Inf)
}

/// Naturals with infinity ordered by equality.
#[derive(Clone, Copy, Debug, Default)]
pub struct NatExact;

impl GradeMonoid for NatExact {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        nat_plus(g, h)
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        g == h
    }
    // Under the equality order the adjoint of `x + _` is the ordinary
    // difference whenever it exists.
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        nat_minus(h, g)
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        if g == h {
            g.clone()
        } else {
            Grade::ZERO
        }
    }
    fn contains(&self, g: &Grade) -> bool {
        is_nat(g)
    }
    fn sample(&self) -> Vec<Grade> {
        nat_sample()
    }
}

/// Naturals with infinity under the usual order.
#[derive(Clone, Copy, Debug, Default)]
pub struct NatLeq;

impl GradeMonoid for NatLeq {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        nat_plus(g, h)
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        nat_leq(g, h)
    }
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        nat_minus(h, g)
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        if nat_leq(g, h) {
            g.clone()
        } else {
            h.clone()
        }
    }
    fn contains(&self, g: &Grade) -> bool {
        is_nat(g)
    }
    fn sample(&self) -> Vec<Grade> {
        nat_sample()
    }
}

fn three(g: &Grade) -> bool {
    matches!(g, Grade::Nat(0) | Grade::Nat(1) | Grade::Inf)
}

fn three_plus(g: &Grade, h: &Grade) -> Grade {
    match (g, h) {
        (Grade::Nat(0), x) | (x, Grade::Nat(0)) => x.clone(),
        _ => Grade::Inf,
    }
}

fn three_minus(h: &Grade, g: &Grade) -> Option<Grade> {
    match (h, g) {
        (x, Grade::Nat(0)) => Some(x.clone()),
        (Grade::Inf, _) => Some(Grade::Inf),
        (Grade::Nat(1), Grade::Nat(1)) => Some(Grade::ZERO),
        _ => None,
    }
}

fn three_sample() -> Vec<Grade> {
    alloc::vec![Grade::Nat(0), Grade::Nat(1), Grade::Inf]
}

/// Linearity grades `{0, 1, inf}` with `0 <= inf` and `1 <= inf`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Lin;

impl GradeMonoid for Lin {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        three_plus(g, h)
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        g == h || *h == Grade::Inf
    }
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        three_minus(h, g)
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        match (g, h) {
            _ if g == h => g.clone(),
            (x, Grade::Inf) | (Grade::Inf, x) => x.clone(),
            _ => Grade::ZERO,
        }
    }
    fn contains(&self, g: &Grade) -> bool {
        three(g)
    }
    fn sample(&self) -> Vec<Grade> {
        three_sample()
    }
}

/// Linearity grades extended with `0 <= 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Affine;

fn affine_rank(g: &Grade) -> u8 {
    match g {
        Grade::Nat(0) => 0,
        Grade::Nat(1) => 1,
        _ => 2,
    }
}

impl GradeMonoid for Affine {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        three_plus(g, h)
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        affine_rank(g) <= affine_rank(h)
    }
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        three_minus(h, g)
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        if affine_rank(g) <= affine_rank(h) {
            g.clone()
        } else {
            h.clone()
        }
    }
    fn contains(&self, g: &Grade) -> bool {
        three(g)
    }
    fn sample(&self) -> Vec<Grade> {
        three_sample()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LatticeError {
    #[error("`0` is the implicit bottom level and cannot be declared")]
    ReservedBottom,
    #[error("levels `{0}` and `{1}` are ordered both ways")]
    NotAntisymmetric(String, String),
    #[error("levels `{0}` and `{1}` have no least upper bound")]
    MissingJoin(String, String),
}

/// A finite join-semilattice of named levels with an implicit bottom `0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelLattice {
    // index 0 is the bottom
    names: Vec<Name>,
    le: Vec<Vec<bool>>,
    join: Vec<Vec<usize>>,
    meet: Vec<Vec<usize>>,
}

impl LevelLattice {
    pub fn new(levels: &[Name], order: &[(Name, Name)]) -> Result<Self, LatticeError> {
        let mut names = alloc::vec![Name::new("0")];
        for l in levels.iter().chain(order.iter().flat_map(|(a, b)| [a, b])) {
            if l.as_str() == "0" {
                return Err(LatticeError::ReservedBottom);
            }
            if !names.contains(l) {
                names.push(l.clone());
            }
        }
        let n = names.len();
        let idx = |x: &Name| names.iter().position(|y| y == x).expect("level collected above");
        let mut le = alloc::vec![alloc::vec![false; n]; n];
        for i in 0..n {
            le[i][i] = true;
            le[0][i] = true;
        }
        for (a, b) in order {
            le[idx(a)][idx(b)] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if le[i][k] && le[k][j] {
                        le[i][j] = true;
                    }
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if le[i][j] && le[j][i] {
                    return Err(LatticeError::NotAntisymmetric(names[i].to_string(), names[j].to_string()));
                }
            }
        }
        let mut join = alloc::vec![alloc::vec![0; n]; n];
        let mut meet = alloc::vec![alloc::vec![0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let ubs: Vec<usize> = (0..n).filter(|&k| le[i][k] && le[j][k]).collect();
                match ubs.iter().find(|&&k| ubs.iter().all(|&u| le[k][u])) {
                    Some(&k) => join[i][j] = k,
                    None => {
                        return Err(LatticeError::MissingJoin(names[i].to_string(), names[j].to_string()))
                    }
                }
                let lbs: Vec<usize> = (0..n).filter(|&k| le[k][i] && le[k][j]).collect();
                meet[i][j] = lbs.iter().copied().find(|&k| lbs.iter().all(|&l| le[l][k])).unwrap_or(0);
            }
        }
        Ok(LevelLattice { names, le, join, meet })
    }

    /// Declared levels, excluding the implicit bottom.
    pub fn levels(&self) -> &[Name] {
        &self.names[1..]
    }

    /// Pairs `(a, b)` with `a < b` whose order is not implied by transitivity.
    pub fn covering_pairs(&self) -> Vec<(Name, Name)> {
        let n = self.names.len();
        let mut out = Vec::new();
        for i in 1..n {
            for j in 1..n {
                if i != j && self.le[i][j] {
                    let between = (1..n).any(|k| k != i && k != j && self.le[i][k] && self.le[k][j]);
                    if !between {
                        out.push((self.names[i].clone(), self.names[j].clone()));
                    }
                }
            }
        }
        out
    }

    fn index(&self, g: &Grade) -> Option<usize> {
        match g {
            Grade::Nat(0) => Some(0),
            Grade::Level(l) => self.names.iter().skip(1).position(|x| x == l).map(|i| i + 1),
            _ => None,
        }
    }

    fn grade(&self, i: usize) -> Grade {
        if i == 0 {
            Grade::ZERO
        } else {
            Grade::Level(self.names[i].clone())
        }
    }

    pub fn level(&self, s: &str) -> Option<Grade> {
        if s == "0" {
            return Some(Grade::ZERO);
        }
        self.names.iter().skip(1).find(|n| n.as_str() == s).map(|n| Grade::Level(n.clone()))
    }
}

impl GradeMonoid for LevelLattice {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        match (self.index(g), self.index(h)) {
            (Some(i), Some(j)) => self.grade(self.join[i][j]),
            _ => panic!("grade outside the level lattice: {g} + {h}"),
        }
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        match (self.index(g), self.index(h)) {
            (Some(i), Some(j)) => self.le[i][j],
            _ => false,
        }
    }
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        self.leq(g, h).then(|| h.clone())
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        match (self.index(g), self.index(h)) {
            (Some(i), Some(j)) => self.grade(self.meet[i][j]),
            _ => Grade::ZERO,
        }
    }
    fn contains(&self, g: &Grade) -> bool {
        self.index(g).is_some()
    }
    fn sample(&self) -> Vec<Grade> {
        (0..self.names.len()).map(|i| self.grade(i)).collect()
    }
}

/// The grade monoid selected by a program header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GradeInstance {
    NatExact,
    NatLeq,
    Lin,
    Affine,
    Level(Arc<LevelLattice>),
}

impl GradeInstance {
    fn with<R>(&self, f: impl FnOnce(&dyn GradeMonoid) -> R) -> R {
        match self {
            GradeInstance::NatExact => f(&NatExact),
            GradeInstance::NatLeq => f(&NatLeq),
            GradeInstance::Lin => f(&Lin),
            GradeInstance::Affine => f(&Affine),
            GradeInstance::Level(l) => f(&**l),
        }
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            GradeInstance::NatExact => "natEq",
            GradeInstance::NatLeq => "natLeq",
            GradeInstance::Lin => "lin",
            GradeInstance::Affine => "affine",
            GradeInstance::Level(_) => "level",
        }
    }

    /// Reads a grade literal: digits, `inf`/`∞`, or a declared level name.
    pub fn parse_grade(&self, s: &str) -> Option<Grade> {
        let g = match self {
            GradeInstance::Level(l) => return l.level(s),
            _ if s == "inf" || s == "∞" => Grade::Inf,
            _ => Grade::Nat(s.parse().ok()?),
        };
        self.contains(&g).then_some(g)
    }
}

impl GradeMonoid for GradeInstance {
    fn plus(&self, g: &Grade, h: &Grade) -> Grade {
        self.with(|m| m.plus(g, h))
    }
    fn leq(&self, g: &Grade, h: &Grade) -> bool {
        self.with(|m| m.leq(g, h))
    }
    fn minus(&self, h: &Grade, g: &Grade) -> Option<Grade> {
        self.with(|m| m.minus(h, g))
    }
    fn meet(&self, g: &Grade, h: &Grade) -> Grade {
        self.with(|m| m.meet(g, h))
    }
    fn contains(&self, g: &Grade) -> bool {
        self.with(|m| m.contains(g))
    }
    fn sample(&self) -> Vec<Grade> {
        self.with(|m| m.sample())
    }
}

/// Resource name to grade; absent names have grade zero.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ResourceEnv(BTreeMap<Name, Grade>);

impl ResourceEnv {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, r: &Name) -> Grade {
        self.0.get(r).cloned().unwrap_or(Grade::ZERO)
    }

    pub fn set(&mut self, r: Name, g: Grade) {
        self.0.insert(r, g);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &Grade)> {
        self.0.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when every entry is zero.
    pub fn is_zero(&self) -> bool {
        self.0.values().all(Grade::is_zero)
    }

    pub fn normalized(&self) -> Self {
        ResourceEnv(self.0.iter().filter(|(_, g)| !g.is_zero()).map(|(r, g)| (r.clone(), g.clone())).collect())
    }

    fn keys_with<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = &'a Name> {
        let mut keys: Vec<&Name> = self.0.keys().chain(other.0.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
    }

    pub fn plus<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Self {
        ResourceEnv(self.keys_with(other).map(|r| (r.clone(), m.plus(&self.get(r), &other.get(r)))).collect())
    }

    pub fn leq<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> bool {
        self.keys_with(other).all(|r| m.leq(&self.get(r), &other.get(r)))
    }

    /// Pointwise `self - other`.
    pub fn minus<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Option<Self> {
        let mut out = BTreeMap::new();
        for r in self.keys_with(other) {
            out.insert(r.clone(), m.minus(&self.get(r), &other.get(r))?);
        }
        Some(ResourceEnv(out))
    }

    pub fn meet<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Self {
        ResourceEnv(self.keys_with(other).map(|r| (r.clone(), m.meet(&self.get(r), &other.get(r)))).collect())
    }

    /// First resource where `self <= other` fails.
    pub fn first_not_leq<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Option<Name> {
        self.keys_with(other).find(|r| !m.leq(&self.get(r), &other.get(r))).cloned()
    }
}

impl FromIterator<(Name, Grade)> for ResourceEnv {
    fn from_iter<I: IntoIterator<Item = (Name, Grade)>>(iter: I) -> Self {
        ResourceEnv(iter.into_iter().collect())
    }
}

impl fmt::Display for ResourceEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (r, g)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{r}^{g}")?;
        }
        Ok(())
    }
}

/// Actor name to resource environment; absent actors own nothing.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ActorContext(BTreeMap<Name, ResourceEnv>);

impl ActorContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(a: Name, r: Name, g: Grade) -> Self {
        let mut c = Self::new();
        c.set(a, r, g);
        c
    }

    pub fn env(&self, a: &Name) -> ResourceEnv {
        self.0.get(a).cloned().unwrap_or_default()
    }

    pub fn get(&self, a: &Name, r: &Name) -> Grade {
        self.0.get(a).map_or(Grade::ZERO, |e| e.get(r))
    }

    pub fn set(&mut self, a: Name, r: Name, g: Grade) {
        self.0.entry(a).or_default().set(r, g);
    }

    /// Registers an actor with an empty environment (kept by `Display`).
    pub fn touch(&mut self, a: Name) {
        self.0.entry(a).or_default();
    }

    pub fn actors(&self) -> impl Iterator<Item = (&Name, &ResourceEnv)> {
        self.0.iter()
    }

    /// All `(actor, resource, grade)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (&Name, &Name, &Grade)> {
        self.0.iter().flat_map(|(a, e)| e.iter().map(move |(r, g)| (a, r, g)))
    }

    pub fn is_zero(&self) -> bool {
        self.0.values().all(ResourceEnv::is_zero)
    }

    /// Drops zero entries and empty actors.
    pub fn normalized(&self) -> Self {
        ActorContext(
            self.0
                .iter()
                .map(|(a, e)| (a.clone(), e.normalized()))
                .filter(|(_, e)| !e.is_empty())
                .collect(),
        )
    }

    pub fn eq_norm(&self, other: &Self) -> bool {
        self.normalized() == other.normalized()
    }

    fn keys_with<'a>(&'a self, other: &'a Self) -> Vec<&'a Name> {
        let mut keys: Vec<&Name> = self.0.keys().chain(other.0.keys()).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn plus<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Self {
        ActorContext(
            self.keys_with(other).into_iter().map(|a| (a.clone(), self.env(a).plus(m, &other.env(a)))).collect(),
        )
    }

    pub fn leq<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> bool {
        self.keys_with(other).into_iter().all(|a| self.env(a).leq(m, &other.env(a)))
    }

    pub fn minus<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Option<Self> {
        let mut out = BTreeMap::new();
        for a in self.keys_with(other) {
            out.insert(a.clone(), self.env(a).minus(m, &other.env(a))?);
        }
        Some(ActorContext(out))
    }

    pub fn meet<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Self {
        ActorContext(
            self.keys_with(other).into_iter().map(|a| (a.clone(), self.env(a).meet(m, &other.env(a)))).collect(),
        )
    }

    /// First `(actor, resource)` where `self <= other` fails.
    pub fn first_not_leq<G: GradeMonoid + ?Sized>(&self, m: &G, other: &Self) -> Option<(Name, Name)> {
        self.keys_with(other)
            .into_iter()
            .find_map(|a| self.env(a).first_not_leq(m, &other.env(a)).map(|r| (a.clone(), r)))
    }
}

impl FromIterator<(Name, Name, Grade)> for ActorContext {
    fn from_iter<I: IntoIterator<Item = (Name, Name, Grade)>>(iter: I) -> Self {
        let mut c = ActorContext::new();
        for (a, r, g) in iter {
            c.set(a, r, g);
        }
        c
    }
}

impl fmt::Display for ActorContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (a, e) in &self.0 {
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{a}:")?;
            if !e.is_empty() {
                write!(f, " {e}")?;
            }
        }
        f.write_str("}")
    }
}
