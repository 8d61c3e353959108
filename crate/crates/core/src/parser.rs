//! Concrete syntax for `.gract` programs and for runtime expressions found
//! in traces.
//!
//! ```text
//! program  := "grade" gradeSpec (opSig | actorDecl)* initDecl
//! opSig    := ident "(" params ")" ":" type
//! actor    := ident "{" method* "}"
//! method   := ident "(" params ")" ":" type "requires" ctx "produces" ctx "measure" nat "{" expr "}"
//! initDecl := "init" ctx ";" ("start" ident "!" ident "(" values ")")+
//! ctx      := "{" items "}" | items          items := (ident ":" | ident "^" grade) ("," ...)*
//! expr     := "let" x "=" expr "in" expr | simple (";" expr)?
//! simple   := "return" ve | "hold" grade r | "release" grade ve | a "!" m "(" ves ")"
//!           | op "(" ves ")" | ve "?" | "(" expr ("(+)" | "⊕") expr ")" | "(" expr ")"
//! ve       := x "^" grade | x | "unit"
//! ```
//!
//! `x^g` is a graded variable when `x` is in scope and a resource literal
//! otherwise. In runtime mode an unbound bare identifier is a future.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::ast::{ActorDecl, Expr, Method, OpSig, Program, Span, StartMsg, Type, Value, ValueExpr};
use crate::grades::{ActorContext, Grade, GradeInstance, LevelLattice, ResourceEnv};
use crate::name::Name;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}{}", expected_suffix(.expected))]
pub struct ParseError {
    pub span: Span,
    pub message: String,
    pub expected: Vec<String>,
}

fn expected_suffix(expected: &[String]) -> String {
    if expected.is_empty() {
        String::new()
    } else {
        format!(" (expected {})", expected.join(" or "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Num(n) => format!("`{n}`"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

const KEYWORDS: &[&str] =
    &["grade", "let", "in", "return", "hold", "release", "unit", "requires", "produces", "measure", "init", "start"];

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    while i < chars.len() {
        let c = chars[i];
        let span = Span { line, col };
        let mut adv = |n: usize, i: &mut usize| {
            *i += n;
            col += n as u32;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            adv(1, &mut i);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '#' | '\'')) {
                i += 1;
            }
            col += (i - start) as u32;
            out.push((Tok::Ident(chars[start..i].iter().collect()), span));
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            col += (i - start) as u32;
            let text: String = chars[start..i].iter().collect();
            let n = text.parse().map_err(|_| ParseError {
                span,
                message: format!("number `{text}` is too large"),
                expected: Vec::new(),
            })?;
            out.push((Tok::Num(n), span));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
        let (tok, len) = if rest.starts_with("(+)") {
            (Tok::Sym("(+)"), 3)
        } else if rest.starts_with("<=") {
            (Tok::Sym("<="), 2)
        } else {
            match c {
                '⊕' => (Tok::Sym("(+)"), 1),
                '≤' => (Tok::Sym("<="), 1),
                '∞' => (Tok::Ident("inf".to_string()), 1),
                '{' => (Tok::Sym("{"), 1),
                '}' => (Tok::Sym("}"), 1),
                '(' => (Tok::Sym("("), 1),
                ')' => (Tok::Sym(")"), 1),
                ',' => (Tok::Sym(","), 1),
                ':' => (Tok::Sym(":"), 1),
                ';' => (Tok::Sym(";"), 1),
                '=' => (Tok::Sym("="), 1),
                '!' => (Tok::Sym("!"), 1),
                '?' => (Tok::Sym("?"), 1),
                '^' => (Tok::Sym("^"), 1),
                '|' => (Tok::Sym("|"), 1),
                _ => {
                    return Err(ParseError { span, message: format!("unexpected character `{c}`"), expected: Vec::new() })
                }
            }
        };
        out.push((tok, span));
        adv(len, &mut i);
    }
    out.push((Tok::Eof, Span { line, col }));
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Program,
    Runtime,
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    mode: Mode,
    grades: GradeInstance,
    scope: Vec<Name>,
    seq: u64,
    op_uses: Vec<(Name, usize, Span)>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str, mode: Mode, grades: GradeInstance) -> PResult<Self> {
        Ok(Parser { toks: lex(src)?, pos: 0, mode, grades, scope: Vec::new(), seq: 0, op_uses: Vec::new() })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn fail<T>(&self, expected: &[&str]) -> PResult<T> {
        Err(ParseError {
            span: self.span(),
            message: format!("unexpected {}", self.peek().describe()),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        })
    }

    fn error_at<T>(&self, span: Span, message: String) -> PResult<T> {
        Err(ParseError { span, message, expected: Vec::new() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(t) if *t == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(t) if t == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            let quoted = format!("`{s}`");
            self.fail(&[&quoted])
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            let quoted = format!("`{k}`");
            self.fail(&[&quoted])
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                if self.mode == Mode::Program && (s.contains('#') || s.starts_with('_')) {
                    let span = self.span();
                    return self.error_at(span, format!("`{s}`: `#` and a leading `_` are reserved for generated names"));
                }
                self.bump();
                Ok(Name::new(&s))
            }
            _ => self.fail(&["identifier"]),
        }
    }

    fn grade(&mut self) -> PResult<Grade> {
        let span = self.span();
        let text = match self.peek() {
            Tok::Num(n) => n.to_string(),
            Tok::Ident(s) => s.clone(),
            _ => return self.fail(&["grade"]),
        };
        self.bump();
        match self.grades.parse_grade(&text) {
            Some(g) => Ok(g),
            None => self.error_at(span, format!("`{text}` is not a grade of `{}`", self.grades.keyword())),
        }
    }

    fn nat(&mut self) -> PResult<u64> {
        match self.peek() {
            Tok::Num(n) => {
                let n = *n;
                self.bump();
                Ok(n)
            }
            _ => self.fail(&["natural number"]),
        }
    }

    fn grade_decl(&mut self) -> PResult<GradeInstance> {
        self.expect_kw("grade")?;
        let span = self.span();
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return self.fail(&["`natEq`", "`natLeq`", "`lin`", "`affine`", "`level`"]),
        };
        self.bump();
        Ok(match kw.as_str() {
            "natEq" => GradeInstance::NatExact,
            "natLeq" => GradeInstance::NatLeq,
            "lin" => GradeInstance::Lin,
            "affine" => GradeInstance::Affine,
            "level" => {
                self.expect_sym("{")?;
                let mut levels = Vec::new();
                let mut order = Vec::new();
                if !self.is_sym("}") {
                    loop {
                        let mut prev = self.ident()?;
                        levels.push(prev.clone());
                        while self.eat_sym("<=") {
                            let next = self.ident()?;
                            order.push((prev, next.clone()));
                            prev = next;
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                self.expect_sym("}")?;
                match LevelLattice::new(&levels, &order) {
                    Ok(l) => GradeInstance::Level(Arc::new(l)),
                    Err(e) => return self.error_at(span, e.to_string()),
                }
            }
            other => return self.error_at(span, format!("unknown grade instance `{other}`")),
        })
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.is_kw("Unit") {
            self.bump();
            return Ok(Type::Unit);
        }
        if self.is_kw("Fut") && matches!(self.peek_at(1), Tok::Sym("(")) {
            self.bump();
            self.bump();
            let t = self.ty()?;
            self.expect_sym("|")?;
            let c = self.actor_ctx()?;
            self.expect_sym(")")?;
            return Ok(Type::fut(t, c));
        }
        let r = self.ident()?;
        self.expect_sym("^")?;
        Ok(Type::Res(r, self.grade()?))
    }

    fn params(&mut self) -> PResult<Vec<(Name, Type)>> {
        self.expect_sym("(")?;
        let mut out: Vec<(Name, Type)> = Vec::new();
        if !self.is_sym(")") {
            loop {
                let span = self.span();
                let x = self.ident()?;
                if out.iter().any(|(y, _)| *y == x) {
                    return self.error_at(span, format!("duplicate parameter `{x}`"));
                }
                self.expect_sym(":")?;
                out.push((x, self.ty()?));
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    fn ctx_item_starts(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
            && matches!(self.peek_at(1), Tok::Sym(":") | Tok::Sym("^"))
    }

    fn actor_ctx(&mut self) -> PResult<ActorContext> {
        let braced = self.eat_sym("{");
        let mut ctx = ActorContext::new();
        let mut current: Option<Name> = None;
        let mut seen: BTreeMap<Name, ResourceEnv> = BTreeMap::new();
        if (braced && !self.is_sym("}")) || (!braced && self.ctx_item_starts()) {
            loop {
                let span = self.span();
                let name = self.ident()?;
                if self.eat_sym(":") {
                    if seen.contains_key(&name) {
                        return self.error_at(span, format!("actor `{name}` listed twice"));
                    }
                    seen.insert(name.clone(), ResourceEnv::new());
                    ctx.touch(name.clone());
                    current = Some(name);
                    if matches!(self.peek(), Tok::Ident(_)) && self.peek_at(1) == &Tok::Sym("^") {
                        continue;
                    }
                } else {
                    self.expect_sym("^")?;
                    let g = self.grade()?;
                    let Some(a) = current.clone() else {
                        return self.error_at(span, format!("resource `{name}` is not under an actor"));
                    };
                    let env = seen.get_mut(&a).expect("actor registered");
                    if env.iter().any(|(r, _)| *r == name) {
                        return self.error_at(span, format!("resource `{name}` listed twice for `{a}`"));
                    }
                    env.set(name.clone(), g.clone());
                    ctx.set(a, name, g);
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if braced {
            self.expect_sym("}")?;
        }
        Ok(ctx)
    }

    fn value_expr(&mut self) -> PResult<ValueExpr> {
        if self.is_kw("unit") {
            self.bump();
            return Ok(ValueExpr::Val(Value::Unit));
        }
        let x = self.ident()?;
        let bound = self.scope.contains(&x);
        if self.eat_sym("^") {
            let g = self.grade()?;
            return Ok(if bound { ValueExpr::GradedVar(x, g) } else { ValueExpr::Val(Value::Res(x, g)) });
        }
        Ok(if bound || self.mode == Mode::Program { ValueExpr::Var(x) } else { ValueExpr::Val(Value::Fut(x)) })
    }

    fn value_exprs(&mut self) -> PResult<Vec<ValueExpr>> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        if !self.is_sym(")") {
            loop {
                out.push(self.value_expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    fn expr(&mut self) -> PResult<Expr> {
        if self.is_kw("let") {
            self.bump();
            let x = self.ident()?;
            self.expect_sym("=")?;
            let e1 = self.expr()?;
            self.expect_kw("in")?;
            self.scope.push(x.clone());
            let e2 = self.expr();
            self.scope.pop();
            return Ok(Expr::let_in(x, e1, e2?));
        }
        let e1 = self.simple()?;
        if self.eat_sym(";") {
            let x = Name::new(&format!("_{}", self.seq));
            self.seq += 1;
            let e2 = self.expr()?;
            return Ok(Expr::let_in(x, e1, e2));
        }
        Ok(e1)
    }

    fn simple(&mut self) -> PResult<Expr> {
        if self.is_kw("return") {
            self.bump();
            return Ok(Expr::Return(self.value_expr()?));
        }
        if self.is_kw("hold") {
            self.bump();
            let g = self.grade()?;
            return Ok(Expr::Hold(g, self.ident()?));
        }
        if self.is_kw("release") {
            self.bump();
            let g = self.grade()?;
            return Ok(Expr::Release(g, self.value_expr()?));
        }
        if self.eat_sym("(") {
            let e1 = self.expr()?;
            if self.eat_sym("(+)") {
                let e2 = self.expr()?;
                self.expect_sym(")")?;
                return Ok(Expr::choice(e1, e2));
            }
            if self.eat_sym(")") {
                return Ok(e1);
            }
            return self.fail(&["`(+)`", "`)`"]);
        }
        if let Tok::Ident(_) = self.peek() {
            if self.peek_at(1) == &Tok::Sym("!") {
                let actor = self.ident()?;
                self.bump();
                let method = self.ident()?;
                let args = self.value_exprs()?;
                return Ok(Expr::Call { actor, method, args });
            }
            if self.peek_at(1) == &Tok::Sym("(") && !self.is_kw("unit") {
                let span = self.span();
                let op = self.ident()?;
                let args = self.value_exprs()?;
                self.op_uses.push((op.clone(), args.len(), span));
                return Ok(Expr::Op(op, args));
            }
            let ve = self.value_expr()?;
            self.expect_sym("?")?;
            return Ok(Expr::Await(ve));
        }
        self.fail(&["expression"])
    }

    fn method(&mut self) -> PResult<Method> {
        let span = self.span();
        let name = self.ident()?;
        let params = self.params()?;
        self.expect_sym(":")?;
        let ret = self.ty()?;
        self.expect_kw("requires")?;
        let requires = self.actor_ctx()?;
        self.expect_kw("produces")?;
        let produces = self.actor_ctx()?;
        self.expect_kw("measure")?;
        let measure = self.nat()?;
        self.expect_sym("{")?;
        self.scope = params.iter().map(|(x, _)| x.clone()).collect();
        let body = self.expr()?;
        self.scope.clear();
        self.expect_sym("}")?;
        Ok(Method { name, params, ret, requires, produces, measure, body, span })
    }

    fn program(&mut self) -> PResult<Program> {
        self.grades = self.grade_decl()?;
        let mut ops: Vec<OpSig> = Vec::new();
        let mut actors: Vec<ActorDecl> = Vec::new();
        while !self.is_kw("init") {
            let span = self.span();
            if matches!(self.peek_at(1), Tok::Sym("(")) {
                let name = self.ident()?;
                if ops.iter().any(|o| o.name == name) {
                    return self.error_at(span, format!("duplicate operation `{name}`"));
                }
                let params = self.params()?;
                self.expect_sym(":")?;
                let ret = self.ty()?;
                ops.push(OpSig { name, params, ret });
            } else if matches!(self.peek_at(1), Tok::Sym("{")) {
                let name = self.ident()?;
                if actors.iter().any(|a| a.name == name) {
                    return self.error_at(span, format!("duplicate actor `{name}`"));
                }
                self.bump();
                let mut methods: Vec<Method> = Vec::new();
                while !self.eat_sym("}") {
                    let m = self.method()?;
                    if methods.iter().any(|n| n.name == m.name) {
                        return self.error_at(m.span, format!("duplicate method `{}.{}`", name, m.name));
                    }
                    methods.push(m);
                }
                actors.push(ActorDecl { name, methods, span });
            } else {
                return self.fail(&["operation signature", "actor declaration", "`init`"]);
            }
        }
        let init_span = self.span();
        self.bump();
        let init = self.actor_ctx()?;
        self.expect_sym(";")?;
        let mut starts = Vec::new();
        loop {
            let span = self.span();
            self.expect_kw("start")?;
            let actor = self.ident()?;
            self.expect_sym("!")?;
            let method = self.ident()?;
            let mut args = Vec::new();
            for ve in self.value_exprs()? {
                match ve {
                    ValueExpr::Val(v @ (Value::Unit | Value::Res(..))) => args.push(v),
                    other => return self.error_at(span, format!("start argument `{other}` is not a value")),
                }
            }
            starts.push(StartMsg { actor, method, args, span });
            if !self.is_kw("start") {
                break;
            }
        }
        if self.peek() != &Tok::Eof {
            return self.fail(&["`start`", "end of input"]);
        }
        for (op, arity, span) in &self.op_uses {
            if let Some(sig) = ops.iter().find(|o| &o.name == op) {
                if sig.params.len() != *arity {
                    return self.error_at(
                        *span,
                        format!("`{op}` takes {} arguments but {arity} were given", sig.params.len()),
                    );
                }
            }
        }
        Ok(Program { grades: self.grades.clone(), ops, actors, init, init_span, starts })
    }

    fn finish(&self) -> PResult<()> {
        if self.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.fail(&["end of input"])
        }
    }
}

pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    Parser::new(src, Mode::Program, GradeInstance::NatLeq)?.program()
}

/// Parses a runtime expression; names in `scope` are variables, other bare
/// identifiers are futures.
pub fn parse_runtime_expr(src: &str, grades: &GradeInstance, scope: &[Name]) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src, Mode::Runtime, grades.clone())?;
    p.scope = scope.to_vec();
    p.seq = u64::MAX / 2;
    let e = p.expr()?;
    p.finish()?;
    Ok(e)
}

/// Parses a runtime value: `unit`, `R^g` or a future name.
pub fn parse_runtime_value(src: &str, grades: &GradeInstance) -> Result<Value, ParseError> {
    let mut p = Parser::new(src, Mode::Runtime, grades.clone())?;
    let ve = p.value_expr()?;
    p.finish()?;
    match ve {
        ValueExpr::Val(v) => Ok(v),
        other => Err(ParseError { span: Span::default(), message: format!("`{other}` is not a value"), expected: Vec::new() }),
    }
}

pub fn parse_type(src: &str, grades: &GradeInstance) -> Result<Type, ParseError> {
    let mut p = Parser::new(src, Mode::Runtime, grades.clone())?;
    let t = p.ty()?;
    p.finish()?;
    Ok(t)
}

pub fn parse_actor_context(src: &str, grades: &GradeInstance) -> Result<ActorContext, ParseError> {
    let mut p = Parser::new(src, Mode::Runtime, grades.clone())?;
    let c = p.actor_ctx()?;
    p.finish()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seq_desugars_to_let() {
        let p = parse_program(
            "grade lin\nA { m(): Unit requires {} produces {} measure 0 { hold 1 R; return unit } }\ninit {};\nstart A!m()",
        )
        .unwrap();
        match &p.actors[0].methods[0].body {
            Expr::Let(x, e1, e2) => {
                assert!(x.as_str().starts_with('_'));
                assert_eq!(**e1, Expr::Hold(Grade::Nat(1), Name::new("R")));
                assert_eq!(**e2, Expr::Return(ValueExpr::Val(Value::Unit)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_actor_parses() {
        let p = parse_program("grade lin\ninit ;\nstart A!m()").unwrap();
        assert!(p.actors.is_empty());
        assert_eq!(p.starts.len(), 1);
    }

    #[test]
    fn errors_are_located() {
        let e = parse_program("grade banana\ninit ;\nstart A!m()").unwrap_err();
        assert_eq!(e.span, Span { line: 1, col: 7 });
        assert!(e.message.contains("unknown grade instance"));

        let e = parse_program("grade lin\nA { m(): Unit requires produces measure 0 { return unit }\n m(): Unit requires produces measure 0 { return unit } }\ninit ;\nstart A!m()").unwrap_err();
        assert!(e.message.contains("duplicate method"), "{e}");

        let e = parse_program("grade lin\nf(x: R^1): Unit\nA { m(): Unit requires produces measure 0 { f(R^1, R^1); return unit } }\ninit ;\nstart A!m()").unwrap_err();
        assert!(e.message.contains("takes 1 arguments"), "{e}");

        let e = parse_program("grade lin\ninit ;\nstart A!m(").unwrap_err();
        assert_eq!(e.span.line, 3);
        assert!(!e.expected.is_empty());
    }

    #[test]
    fn graded_names_resolve_by_scope() {
        let p = parse_program(
            "grade natLeq\nA { m(x: R^2): Unit requires produces measure 0 { release 1 x^1; release 1 R^1; return unit } }\ninit ;\nstart A!m(R^2)",
        )
        .unwrap();
        let mut ves = Vec::new();
        p.actors[0].methods[0].body.value_exprs(&mut ves);
        assert_eq!(ves[0], ValueExpr::GradedVar(Name::new("x"), Grade::Nat(1)));
        assert_eq!(ves[1], ValueExpr::Val(Value::Res(Name::new("R"), Grade::Nat(1))));
    }

    #[test]
    fn runtime_mode_reads_futures() {
        let e = parse_runtime_expr("let y#3 = f#1? in return y#3", &GradeInstance::Lin, &[]).unwrap();
        assert_eq!(
            e,
            Expr::let_in(
                Name::new("y#3"),
                Expr::Await(ValueExpr::Val(Value::Fut(Name::new("f#1")))),
                Expr::Return(ValueExpr::Var(Name::new("y#3")))
            )
        );
    }

    #[test]
    fn level_header() {
        let p = parse_program("grade level { priv <= pub }\ninit {A: Secret^pub};\nstart A!m()").unwrap();
        assert_eq!(p.init.get(&Name::new("A"), &Name::new("Secret")), Grade::Level(Name::new("pub")));
    }
}
