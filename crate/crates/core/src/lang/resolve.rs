use std::collections::HashMap;
use std::sync::Arc;

use crate::kernel::Value;

use super::ast::*;
use super::config::ModelConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("constant `{0}` is not bound by the configuration")]
    UnboundConstant(String),
    #[error("configuration binds `{0}`, which is not a declared constant")]
    UnknownConstant(String),
    #[error("configuration has no {0} directive")]
    Missing(&'static str),
    #[error("`{0}` is not defined in the module")]
    Undefined(String),
    #[error("`{name}` takes {arity} argument(s); configured {role} definitions must take none")]
    NotNullary { name: String, role: &'static str, arity: usize },
    #[error("cannot override `{name}` ({expected} parameter(s)) with `{replacement}` ({found} parameter(s))")]
    OverrideArity { name: String, replacement: String, expected: usize, found: usize },
    #[error("level error: `{name}` is configured as {role} but uses primed variables or UNCHANGED")]
    Level { name: String, role: &'static str },
    #[error("next-state relation: {0}")]
    BadNext(String),
}

/// A named disjunct of the next-state relation, or the `Init` pseudo-action.
#[derive(Clone, Debug)]
pub struct Action {
    pub name: Arc<str>,
    pub range: SourceRange,
    /// Bounded existentials distributed out of the next-state relation.
    pub params: Vec<Binding>,
    pub body: Expr,
}

/// A module bound to a model: constants substituted, overrides applied and
/// the next-state relation split into actions.
#[derive(Clone, Debug)]
pub struct CheckUnit {
    pub module: SpecModule,
    pub config: ModelConfig,
    pub constants: HashMap<Arc<str>, Value>,
    pub(crate) def_index: HashMap<Arc<str>, usize>,
    /// Variable names sorted; a variable's position is its state slot.
    pub(crate) sorted_vars: Vec<Arc<str>>,
    pub(crate) var_slot: HashMap<Arc<str>, usize>,
    /// `actions[0]` is always the `Init` pseudo-action.
    pub actions: Vec<Action>,
    action_level: Vec<bool>,
}

impl CheckUnit {
    pub fn definition(&self, name: &str) -> Option<&Definition> {
        self.def_index.get(name).map(|&i| &self.module.definitions[i])
    }

    pub(crate) fn def_at(&self, i: usize) -> &Definition {
        &self.module.definitions[i]
    }

    /// Variables in declaration order.
    pub fn variables(&self) -> &[Arc<str>] {
        &self.module.variables
    }

    pub fn sorted_variables(&self) -> &[Arc<str>] {
        &self.sorted_vars
    }

    pub fn action_names(&self) -> Vec<&str> {
        self.actions.iter().map(|a| &*a.name).collect()
    }

    pub fn action(&self, name: &str) -> Option<(usize, &Action)> {
        self.actions.iter().enumerate().find(|(_, a)| &*a.name == name)
    }

    pub fn is_action_level(&self, def: &str) -> bool {
        self.def_index.get(def).is_some_and(|&i| self.action_level[i])
    }
}

pub fn resolve(module: &SpecModule, config: &ModelConfig) -> Result<CheckUnit, ResolveError> {
    let mut module = module.clone();
    let mut constants = HashMap::new();
    for (name, value) in &config.constants {
        if !module.constants.contains(name) {
            return Err(ResolveError::UnknownConstant(name.to_string()));
        }
        constants.insert(name.clone(), value.clone());
    }
    if let Some(c) = module.constants.iter().find(|c| !constants.contains_key(*c)) {
        return Err(ResolveError::UnboundConstant(c.to_string()));
    }

    let def_index: HashMap<Arc<str>, usize> =
        module.definitions.iter().enumerate().map(|(i, d)| (d.name.clone(), i)).collect();
    let lookup = |n: &str| def_index.get(n).copied().ok_or_else(|| ResolveError::Undefined(n.to_string()));

    for (target, replacement) in &config.overrides {
        let (ti, ri) = (lookup(target)?, lookup(replacement)?);
        let (t, r) = (&module.definitions[ti], &module.definitions[ri]);
        if t.params.len() != r.params.len() {
            return Err(ResolveError::OverrideArity {
                name: target.to_string(),
                replacement: replacement.to_string(),
                expected: t.params.len(),
                found: r.params.len(),
            });
        }
        let (params, body) = (r.params.clone(), r.body.clone());
        let t = &mut module.definitions[ti];
        t.params = params;
        t.body = body;
    }

    let action_level = action_levels(&module, &def_index);

    let init_name = config.init.as_ref().ok_or(ResolveError::Missing("INIT"))?;
    let next_name = config.next.as_ref().ok_or(ResolveError::Missing("NEXT"))?;
    let nullary = |name: &Arc<str>, role: &'static str, state_level: bool| -> Result<usize, ResolveError> {
        let i = lookup(name)?;
        let d = &module.definitions[i];
        if !d.params.is_empty() {
            return Err(ResolveError::NotNullary { name: name.to_string(), role, arity: d.params.len() });
        }
        if state_level && action_level[i] {
            return Err(ResolveError::Level { name: name.to_string(), role });
        }
        Ok(i)
    };
    let init_i = nullary(init_name, "INIT", true)?;
    let next_i = nullary(next_name, "NEXT", false)?;
    for n in &config.invariants {
        nullary(n, "INVARIANT", true)?;
    }
    for n in &config.constraints {
        nullary(n, "CONSTRAINT", true)?;
    }
    for n in &config.action_constraints {
        nullary(n, "ACTION_CONSTRAINT", false)?;
    }
    if let Some(t) = &config.terminal {
        nullary(t, "TERMINAL", true)?;
    }

    let init = &module.definitions[init_i];
    let mut actions = vec![Action {
        name: Arc::from("Init"),
        range: init.body.range.clone(),
        params: Vec::new(),
        body: init.body.clone(),
    }];
    let mut flat = Flatten { module: &module, def_index: &def_index, action_level: &action_level, anon: 0, out: Vec::new() };
    flat.walk(&module.definitions[next_i].body, &[])?;
    let mut seen: HashMap<Arc<str>, usize> = HashMap::new();
    seen.insert(Arc::from("Init"), 1);
    for mut a in flat.out {
        let n = seen.entry(a.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            a.name = Arc::from(format!("{}#{}", a.name, n));
        }
        actions.push(a);
    }
    if actions.len() == 1 {
        return Err(ResolveError::BadNext("no actions".into()));
    }

    let mut sorted_vars = module.variables.clone();
    sorted_vars.sort();
    let var_slot = sorted_vars.iter().enumerate().map(|(i, v)| (v.clone(), i)).collect();

    Ok(CheckUnit {
        module,
        config: config.clone(),
        constants,
        def_index,
        sorted_vars,
        var_slot,
        actions,
        action_level,
    })
}

/// For each definition, whether primes or UNCHANGED are reachable from its
/// body.
fn action_levels(m: &SpecModule, index: &HashMap<Arc<str>, usize>) -> Vec<bool> {
    let direct: Vec<bool> = m.definitions.iter().map(|d| d.body.contains_prime()).collect();
    let calls: Vec<Vec<usize>> = m
        .definitions
        .iter()
        .map(|d| {
            let mut v = Vec::new();
            d.body.walk(&mut |e| {
                if let ExprKind::Ident(n) | ExprKind::Call(n, _) = &e.kind {
                    if let Some(&j) = index.get(n) {
                        v.push(j);
                    }
                }
            });
            v
        })
        .collect();
    let mut level = direct;
    // definitions are acyclic, so this reaches a fixpoint in at most n rounds
    loop {
        let mut changed = false;
        for i in 0..level.len() {
            if !level[i] && calls[i].iter().any(|&j| level[j]) {
                level[i] = true;
                changed = true;
            }
        }
        if !changed {
            return level;
        }
    }
}

struct Flatten<'a> {
    module: &'a SpecModule,
    def_index: &'a HashMap<Arc<str>, usize>,
    action_level: &'a [bool],
    anon: usize,
    out: Vec<Action>,
}

impl Flatten<'_> {
    fn walk(&mut self, e: &Expr, params: &[Binding]) -> Result<(), ResolveError> {
        match &e.kind {
            ExprKind::Or(items) => {
                for item in items {
                    self.walk(item, params)?;
                }
                Ok(())
            }
            ExprKind::Exists(bs, body) => {
                let mut ps = params.to_vec();
                ps.extend(bs.iter().cloned());
                self.walk(body, &ps)
            }
            ExprKind::Call(name, _) | ExprKind::Ident(name) if self.def_index.contains_key(name) => {
                let i = self.def_index[name];
                if !self.action_level[i] {
                    return Err(ResolveError::BadNext(format!(
                        "disjunct `{name}` at {} does not mention primed variables",
                        e.range
                    )));
                }
                let d = &self.module.definitions[i];
                self.out.push(Action { name: name.clone(), range: d.body.range.clone(), params: params.to_vec(), body: e.clone() });
                Ok(())
            }
            _ => {
                self.anon += 1;
                let reaches_prime = e.contains_prime() || {
                    let mut any = false;
                    e.walk(&mut |x| {
                        if let ExprKind::Ident(n) | ExprKind::Call(n, _) = &x.kind {
                            if let Some(&j) = self.def_index.get(n) {
                                any |= self.action_level[j];
                            }
                        }
                    });
                    any
                };
                if !reaches_prime {
                    return Err(ResolveError::BadNext(format!(
                        "disjunct at {} is neither an action call nor an action-level expression",
                        e.range
                    )));
                }
                self.out.push(Action {
                    name: Arc::from(format!("NextDisjunct{}", self.anon)),
                    range: e.range.clone(),
                    params: params.to_vec(),
                    body: e.clone(),
                });
                Ok(())
            }
        }
    }
}
