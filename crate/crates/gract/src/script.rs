//! Scheduling scripts: one `rule actor` pair per line, `#` starts a comment.
//!
//! ```text
//! # first two steps of the cafe run
//! spawn Customer
//! call  Customer
//! ```

use gract_core::ast::Configuration;
use gract_core::semantics::{Rule, Scheduler, StepResult};
use gract_core::Name;

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

pub fn parse_script(text: &str) -> Result<Vec<(Rule, Name)>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ScriptError { line: i + 1, message };
        let mut words = line.split_whitespace();
        let (Some(rule), Some(actor), None) = (words.next(), words.next(), words.next()) else {
            return Err(err(format!("expected `rule actor`, found `{line}`")));
        };
        let rule = Rule::parse(rule).ok_or_else(|| err(format!("unknown rule `{rule}`")))?;
        out.push((rule, Name::new(actor)));
    }
    Ok(out)
}

/// Picks the successor named by the next script entry; stops the run when
/// the script is exhausted or names a step that cannot fire.
pub struct ScriptScheduler {
    script: Vec<(Rule, Name)>,
    next: usize,
    /// Index of the entry that did not match any successor.
    pub mismatch: Option<usize>,
}

impl ScriptScheduler {
    pub fn new(script: Vec<(Rule, Name)>) -> Self {
        ScriptScheduler { script, next: 0, mismatch: None }
    }

    pub fn len(&self) -> usize {
        self.script.len()
    }

    pub fn is_empty(&self) -> bool {
        self.script.is_empty()
    }
}

impl Scheduler for ScriptScheduler {
    fn choose(&mut self, _: &Configuration, successors: &[StepResult]) -> Option<usize> {
        let (rule, actor) = self.script.get(self.next)?;
        let k = successors.iter().position(|s| s.rule == *rule && &s.actor == actor);
        if k.is_none() {
            self.mismatch = Some(self.next);
        }
        self.next += 1;
        k
    }
}
