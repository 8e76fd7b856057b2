//! Line-oriented model configuration.
//!
//! ```text
//! CONSTANT N = 3
//! CONSTANT Procs = {p1, p2}
//! INIT Init
//! NEXT Next
//! INVARIANT Inv
//! CONSTRAINT Small
//! ACTION_CONSTRAINT Monotone
//! OVERRIDE Slow <- Fast
//! TERMINAL Done
//! ```

use std::fmt::Write;
use std::sync::Arc;

use crate::kernel::{parse_value, render_value, Value};

use super::ParseError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelConfig {
    pub constants: Vec<(Arc<str>, Value)>,
    pub init: Option<Arc<str>>,
    pub next: Option<Arc<str>>,
    pub invariants: Vec<Arc<str>>,
    pub constraints: Vec<Arc<str>>,
    pub action_constraints: Vec<Arc<str>>,
    /// (overridden, replacement)
    pub overrides: Vec<(Arc<str>, Arc<str>)>,
    /// States satisfying this predicate are not deadlocks when they have no
    /// successors.
    pub terminal: Option<Arc<str>>,
}

impl ModelConfig {
    pub fn constant(&self, name: &str) -> Option<&Value> {
        self.constants.iter().find(|(n, _)| &**n == name).map(|(_, v)| v)
    }
}

pub fn parse_config(text: &str) -> Result<ModelConfig, ParseError> {
    let mut cfg = ModelConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i as u32 + 1;
        let line = match raw.find("\\*") {
            Some(c) => &raw[..c],
            None => raw,
        };
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let indent = (line.len() - line.trim_start().len()) as u32;
        let line = line.trim();
        let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let rest_col = indent + keyword.len() as u32 + 2;
        let err = |msg: String| ParseError::at(line_no, indent + 1, msg);
        let name = |s: &str| -> Result<Arc<str>, ParseError> {
            if is_identifier(s) {
                Ok(Arc::from(s))
            } else {
                Err(ParseError::at(line_no, rest_col, format!("expected a name after {keyword}, found `{s}`")))
            }
        };
        match keyword {
            "CONSTANT" | "CONSTANTS" => {
                let (n, v) = rest
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected `CONSTANT <name> = <value>`, found `{line}`")))?;
                let n = name(n.trim())?;
                if cfg.constant(&n).is_some() {
                    return Err(err(format!("constant `{n}` is bound twice")));
                }
                let value = parse_constant_value(v.trim()).map_err(|m| {
                    ParseError::at(line_no, rest_col, format!("malformed value for constant `{n}`: {m}"))
                })?;
                cfg.constants.push((n, value));
            }
            "INIT" | "NEXT" => {
                let slot = if keyword == "INIT" { &mut cfg.init } else { &mut cfg.next };
                if slot.is_some() {
                    return Err(err(format!("duplicate {keyword}")));
                }
                *slot = Some(name(rest)?);
            }
            "TERMINAL" => {
                if cfg.terminal.is_some() {
                    return Err(err("duplicate TERMINAL".into()));
                }
                cfg.terminal = Some(name(rest)?);
            }
            "INVARIANT" | "INVARIANTS" => cfg.invariants.push(name(rest)?),
            "CONSTRAINT" | "CONSTRAINTS" => cfg.constraints.push(name(rest)?),
            "ACTION_CONSTRAINT" | "ACTION_CONSTRAINTS" => cfg.action_constraints.push(name(rest)?),
            "OVERRIDE" => {
                let (a, b) = rest
                    .split_once("<-")
                    .ok_or_else(|| err(format!("expected `OVERRIDE <name> <- <name>`, found `{line}`")))?;
                cfg.overrides.push((name(a.trim())?, name(b.trim())?));
            }
            other => return Err(err(format!("unknown keyword `{other}`"))),
        }
    }
    Ok(cfg)
}

/// A constant value in value syntax, or a set of bare model-value names,
/// which become strings.
fn parse_constant_value(text: &str) -> Result<Value, String> {
    match parse_value(text) {
        Ok(v) => Ok(v),
        Err(e) => {
            let inner = text.strip_prefix('{').and_then(|t| t.strip_suffix('}'));
            if let Some(inner) = inner {
                let names: Vec<&str> = inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
                if !names.is_empty() && names.iter().all(|n| is_identifier(n)) {
                    return Ok(Value::set_from(names.into_iter().map(Value::str)));
                }
            }
            Err(e.to_string())
        }
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(s, "TRUE" | "FALSE")
}

pub fn render_config(cfg: &ModelConfig) -> String {
    let mut s = String::new();
    for (n, v) in &cfg.constants {
        let _ = writeln!(s, "CONSTANT {n} = {}", render_value(v));
    }
    if let Some(i) = &cfg.init {
        let _ = writeln!(s, "INIT {i}");
    }
    if let Some(n) = &cfg.next {
        let _ = writeln!(s, "NEXT {n}");
    }
    for i in &cfg.invariants {
        let _ = writeln!(s, "INVARIANT {i}");
    }
    for c in &cfg.constraints {
        let _ = writeln!(s, "CONSTRAINT {c}");
    }
    for c in &cfg.action_constraints {
        let _ = writeln!(s, "ACTION_CONSTRAINT {c}");
    }
    for (a, b) in &cfg.overrides {
        let _ = writeln!(s, "OVERRIDE {a} <- {b}");
    }
    if let Some(t) = &cfg.terminal {
        let _ = writeln!(s, "TERMINAL {t}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_directive() {
        let cfg = parse_config(
            "\\* model\nCONSTANT N = 3\nCONSTANT Procs = {p1, p2}\r\nINIT Init\nNEXT Next\nINVARIANT Inv\nINVARIANT TypeOK\n\
             CONSTRAINT Small  \\* bound\nACTION_CONSTRAINT Mono\nOVERRIDE Slow <- Fast\nTERMINAL Done\n",
        )
        .unwrap();
        assert_eq!(cfg.constant("N"), Some(&Value::int(3)));
        assert_eq!(cfg.constant("Procs"), Some(&Value::set_from([Value::str("p1"), Value::str("p2")])));
        assert_eq!(cfg.init.as_deref(), Some("Init"));
        assert_eq!(cfg.next.as_deref(), Some("Next"));
        assert_eq!(cfg.invariants.len(), 2);
        assert_eq!(cfg.constraints[0].as_ref(), "Small");
        assert_eq!(cfg.action_constraints[0].as_ref(), "Mono");
        assert_eq!(cfg.overrides, vec![(Arc::from("Slow"), Arc::from("Fast"))]);
        assert_eq!(cfg.terminal.as_deref(), Some("Done"));
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse_config("INIT A\nPROPERTY Live\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("unknown keyword"));
        assert!(parse_config("INIT A\nINIT B\n").unwrap_err().message.contains("duplicate INIT"));
        assert!(parse_config("NEXT A\nNEXT B\n").is_err());
        assert!(parse_config("CONSTANT N = {1,\n").is_err());
        assert!(parse_config("CONSTANT N = (1 :>").unwrap_err().message.contains("malformed"));
        assert!(parse_config("CONSTANT N = 1\nCONSTANT N = 2").is_err());
        assert!(parse_config("OVERRIDE A B").is_err());
    }
}
