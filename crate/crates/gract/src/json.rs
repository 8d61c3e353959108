//! JSON encodings of configurations, traces, typing reports and verdicts,
//! all tagged with `"schema": "gract/1"`.

use gract_core::ast::{Atom, CallMsg, Configuration, LocalEnv, Process, Program, Thread, Value};
use gract_core::explorer::{Exploration, PathStep, SrViolation, Verdict};
use gract_core::grades::ActorContext;
use gract_core::parser::{parse_runtime_expr, parse_runtime_value};
use gract_core::semantics::{RunStatus, Stuck};
use gract_core::typing::{ProgramReport, TypeError};
use gract_core::Name;
use serde_json::{json, Map, Value as Json};

pub const SCHEMA: &str = "gract/1";

pub fn tagged(mut v: Json) -> Json {
    if let Json::Object(map) = &mut v {
        let mut out = Map::new();
        out.insert("schema".into(), SCHEMA.into());
        out.append(map);
        return Json::Object(out);
    }
    v
}

pub fn actors(ctx: &ActorContext) -> Json {
    let mut out = Map::new();
    for (a, env) in ctx.actors() {
        let res: Map<String, Json> = env.iter().map(|(r, g)| (r.to_string(), Json::String(g.to_string()))).collect();
        out.insert(a.to_string(), Json::Object(res));
    }
    Json::Object(out)
}

fn thread(kind: &str, t: &Thread) -> Json {
    let env: Map<String, Json> = t.env.iter().map(|(x, v)| (x.to_string(), Json::String(v.to_string()))).collect();
    json!({ "kind": kind, "actor": t.actor.as_str(), "future": t.future.as_str(), "env": env, "expr": t.expr.to_string() })
}

pub fn atom(a: &Atom) -> Json {
    match a {
        Atom::Active(t) => thread("active", t),
        Atom::Suspended(t) => thread("suspended", t),
        Atom::Idle(a) => json!({ "kind": "idle", "actor": a.as_str() }),
        Atom::Call(m) => json!({
            "kind": "call",
            "future": m.future.as_str(),
            "actor": m.actor.as_str(),
            "method": m.method.as_str(),
            "args": m.args.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
        }),
        Atom::Fulfilled(f, v) => json!({ "kind": "fulfilled", "future": f.as_str(), "value": v.to_string() }),
    }
}

pub fn config(c: &Configuration) -> Json {
    json!({ "actors": actors(&c.ctx), "processes": c.process.0.iter().map(atom).collect::<Vec<_>>() })
}

pub fn trace_line(step: usize, rule: Option<&str>, label: Option<String>, measure: Option<u64>, c: &Configuration) -> Json {
    let mut m = Map::new();
    m.insert("step".into(), step.into());
    m.insert("rule".into(), rule.map_or(Json::Null, Json::from));
    m.insert("label".into(), label.map_or(Json::Null, Json::from));
    if let Some(n) = measure {
        m.insert("measure".into(), n.into());
    }
    m.insert("config".into(), config(c));
    tagged(Json::Object(m))
}

pub fn stuck(s: &Stuck) -> Json {
    Json::String(s.to_string())
}

pub fn status_line(status: &RunStatus, steps: usize) -> Json {
    let (name, diagnosis) = match status {
        RunStatus::Terminated => ("terminated", Vec::new()),
        RunStatus::Stuck(why) => ("stuck", why.iter().map(stuck).collect()),
        RunStatus::BoundExhausted => ("boundExhausted", Vec::new()),
        RunStatus::Aborted => ("aborted", Vec::new()),
    };
    tagged(json!({ "status": name, "steps": steps, "diagnosis": diagnosis }))
}

pub fn type_error(e: &TypeError) -> Json {
    json!({ "code": e.kind.code(), "loc": e.loc.to_string(), "detail": e.kind.to_string() })
}

pub fn typing_report(r: &ProgramReport) -> Json {
    let methods: Vec<Json> = r
        .methods
        .iter()
        .map(|m| {
            json!({
                "actor": m.actor.as_str(),
                "method": m.method.as_str(),
                "ok": m.ok(),
                "computed": m.computed.as_ref().map(|c| json!({
                    "type": c.ty.to_string(),
                    "requires": c.requires.to_string(),
                    "produces": c.produces.to_string(),
                    "measure": c.measure.fin(),
                })),
                "errors": m.errors.iter().map(type_error).collect::<Vec<_>>(),
            })
        })
        .collect();
    let config = match &r.config {
        Ok(pt) => json!({ "ok": true, "measure": pt.measure, "requires": pt.req.to_string() }),
        Err(e) => json!({ "ok": false, "error": type_error(e) }),
    };
    tagged(json!({
        "ok": r.ok(),
        "methodReports": methods,
        "configReport": config,
        "errors": r.errors().iter().map(type_error).collect::<Vec<_>>(),
    }))
}

fn path(steps: &[PathStep]) -> Json {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut line = trace_line(i + 1, Some(s.rule.as_str()), Some(s.label.to_string()), s.measure, &s.config);
            line.as_object_mut().map(|m| m.remove("schema"));
            line
        })
        .collect()
}

pub fn verdict(ex: &Exploration) -> Json {
    let hist: Map<String, Json> = ex.measure_histogram.iter().map(|(k, v)| (k.to_string(), Json::from(*v))).collect();
    let mut m = Map::new();
    m.insert("verdict".into(), ex.verdict.name().into());
    m.insert("statesVisited".into(), ex.states.into());
    m.insert("edges".into(), ex.edges.into());
    m.insert("maxDepth".into(), ex.max_depth.into());
    m.insert("terminatedStates".into(), ex.terminated_states.into());
    m.insert("prunedEdges".into(), ex.pruned_edges.into());
    m.insert("measureHistogram".into(), Json::Object(hist));
    m.insert(
        "lawViolations".into(),
        ex.violations.iter().map(|v| json!({ "state": v.state, "detail": v.kind.to_string() })).collect(),
    );
    match &ex.verdict {
        Verdict::WeaklyTerminatingWitness { trace, trapped } => {
            m.insert("witnessTrace".into(), path(trace));
            m.insert("trappedState".into(), config(trapped));
        }
        Verdict::StuckFound { state, diagnosis, trace } => {
            m.insert("stuckState".into(), config(state));
            m.insert("diagnosis".into(), diagnosis.iter().map(stuck).collect());
            m.insert("witnessTrace".into(), path(trace));
        }
        Verdict::Divergent { state } => {
            m.insert("trappedState".into(), config(state));
        }
        Verdict::BoundExhausted { depth_hit, states_hit } => {
            m.insert("depthBoundHit".into(), (*depth_hit).into());
            m.insert("stateBoundHit".into(), (*states_hit).into());
        }
        Verdict::FairTerminating => {}
    }
    tagged(Json::Object(m))
}

pub fn sr_violation(run: usize, v: &SrViolation) -> Json {
    json!({
        "run": run,
        "step": v.index,
        "detail": v.kind.to_string(),
        "before": v.before.as_ref().map(|p| json!({ "requires": p.req.to_string(), "measure": p.measure })),
    })
}

// ---------------------------------------------------------------------------
// Decoding

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("line {line}: {message}")]
    Bad { line: usize, message: String },
    #[error("line {line}: invalid JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
}

fn field<'a>(v: &'a Json, key: &str) -> Result<&'a str, String> {
    v.get(key).and_then(Json::as_str).ok_or_else(|| format!("missing string field `{key}`"))
}

fn value(p: &Program, s: &str) -> Result<Value, String> {
    parse_runtime_value(s, &p.grades).map_err(|e| format!("value `{s}`: {e}"))
}

fn decode_thread(p: &Program, v: &Json) -> Result<Thread, String> {
    let env_obj = v.get("env").and_then(Json::as_object).ok_or("missing object field `env`")?;
    let mut env = LocalEnv::new();
    for (x, val) in env_obj {
        let s = val.as_str().ok_or("environment values are strings")?;
        env.set(&Name::new(x), value(p, s)?);
    }
    let scope: Vec<Name> = env.iter().map(|(x, _)| x.clone()).collect();
    let src = field(v, "expr")?;
    let expr = parse_runtime_expr(src, &p.grades, &scope).map_err(|e| format!("expression `{src}`: {e}"))?;
    Ok(Thread { env, expr, future: field(v, "future")?.into(), actor: field(v, "actor")?.into() })
}

fn decode_atom(p: &Program, v: &Json) -> Result<Atom, String> {
    Ok(match field(v, "kind")? {
        "active" => Atom::Active(decode_thread(p, v)?),
        "suspended" => Atom::Suspended(decode_thread(p, v)?),
        "idle" => Atom::Idle(field(v, "actor")?.into()),
        "call" => Atom::Call(CallMsg {
            future: field(v, "future")?.into(),
            actor: field(v, "actor")?.into(),
            method: field(v, "method")?.into(),
            args: v
                .get("args")
                .and_then(Json::as_array)
                .ok_or("missing array field `args`")?
                .iter()
                .map(|a| a.as_str().ok_or_else(|| "arguments are strings".to_string()).and_then(|s| value(p, s)))
                .collect::<Result<_, _>>()?,
        }),
        "fulfilled" => Atom::Fulfilled(field(v, "future")?.into(), value(p, field(v, "value")?)?),
        other => return Err(format!("unknown process kind `{other}`")),
    })
}

fn max_generated(c: &Configuration) -> u64 {
    let mut max = 0;
    let mut see = |n: &Name| {
        for prefix in ["f", "y"] {
            if let Some(i) = n.generated_index(prefix) {
                max = max.max(i + 1);
            }
        }
    };
    for a in &c.process.0 {
        if let Some(f) = a.produced() {
            see(f);
        }
        for f in a.consumed() {
            see(&f);
        }
        if let Atom::Active(t) | Atom::Suspended(t) = a {
            t.env.iter().for_each(|(x, _)| see(x));
        }
    }
    max
}

pub fn decode_config(p: &Program, v: &Json) -> Result<Configuration, String> {
    let actors = v.get("actors").and_then(Json::as_object).ok_or("missing object field `actors`")?;
    let mut ctx = ActorContext::new();
    for (a, res) in actors {
        ctx.touch(Name::new(a));
        for (r, g) in res.as_object().ok_or("resource environments are objects")? {
            let g = g.as_str().ok_or("grades are strings")?;
            let g = p.grades.parse_grade(g).ok_or_else(|| format!("`{g}` is not a {} grade", p.grades.keyword()))?;
            ctx.set(Name::new(a), Name::new(r), g);
        }
    }
    let atoms = v
        .get("processes")
        .and_then(Json::as_array)
        .ok_or("missing array field `processes`")?
        .iter()
        .map(|a| decode_atom(p, a))
        .collect::<Result<Vec<_>, _>>()?;
    let mut c = Configuration { ctx, process: Process(atoms), fresh: 0 };
    c.fresh = max_generated(&c);
    Ok(c)
}

/// Configurations of a JSONL trace, in step order; non-step lines are
/// skipped.
pub fn decode_trace(p: &Program, text: &str) -> Result<Vec<Configuration>, DecodeError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: Json = serde_json::from_str(line).map_err(|source| DecodeError::Json { line: line_no, source })?;
        let Some(cfg) = v.get("config") else { continue };
        out.push(decode_config(p, cfg).map_err(|message| DecodeError::Bad { line: line_no, message })?);
    }
    Ok(out)
}
