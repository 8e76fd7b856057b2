//! Recursive-descent / Pratt parser for the module language.
//!
//! Bulleted `/\` and `\/` lists follow the usual alignment rule: a list
//! started by a bullet at column c ends at the first later token whose
//! column is <= c, unless that token is another bullet of the same kind at
//! exactly column c.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use super::ast::*;
use super::lexer::{lex, Tok, Token};
use super::ParseError;

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    module: Arc<str>,
    next_id: u32,
    fences: Vec<u32>,
    last_end: (u32, u32),
}

static EOF: Tok = Tok::Eof;

impl Parser {
    fn new(src: &str, module: Arc<str>, first_id: u32) -> Result<Self, ParseError> {
        Ok(Parser { toks: lex(src)?, pos: 0, module, next_id: first_id, fences: Vec::new(), last_end: (1, 1) })
    }

    fn fenced(&self, t: &Token) -> bool {
        matches!(self.fences.last(), Some(&f) if f > 0 && t.col <= f)
    }

    fn peek(&self) -> &Tok {
        let t = &self.toks[self.pos];
        if self.fenced(t) {
            &EOF
        } else {
            &t.tok
        }
    }

    fn peek_at(&self, k: usize) -> &Tok {
        match self.toks.get(self.pos + k) {
            Some(t) if !self.fenced(t) => &t.tok,
            _ => &EOF,
        }
    }

    fn tok(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
            self.last_end = (t.end_line, t.end_col);
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err_here(&self, msg: impl Into<String>) -> ParseError {
        let t = self.tok();
        ParseError::at(t.line, t.col, msg)
    }

    fn expect(&mut self, s: &str) -> Result<Token, ParseError> {
        if self.is_sym(s) {
            Ok(self.bump())
        } else {
            Err(self.err_here(format!("expected `{s}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<Arc<str>, ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(name)
            }
            other => Err(self.err_here(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn mk(&mut self, start: (u32, u32), kind: ExprKind) -> Expr {
        let id = ExprId(self.next_id);
        self.next_id += 1;
        Expr { id, range: SourceRange::new(self.module.clone(), start, self.last_end), kind }
    }

    fn start(&self) -> (u32, u32) {
        let t = self.tok();
        (t.line, t.col)
    }

    fn with_fence<T>(&mut self, col: u32, f: impl FnOnce(&mut Self) -> T) -> T {
        self.fences.push(col);
        let r = f(self);
        self.fences.pop();
        r
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.expr_bp(0)
    }

    fn expr_bp(&mut self, min_bp: u8) -> Result<Expr, ParseError> {
        let start = self.start();
        let mut lhs = self.prefix()?;
        loop {
            // postfix operators bind tightest
            if self.is_sym("'") {
                self.bump();
                lhs = self.mk(start, ExprKind::Prime(Box::new(lhs)));
                continue;
            }
            if self.is_sym("[") {
                self.bump();
                let args = self.unfenced(|p| p.comma_list("]"))?;
                lhs = self.mk(start, ExprKind::Apply(Box::new(lhs), args));
                continue;
            }
            if self.is_sym(".") {
                self.bump();
                let field = self.ident()?;
                lhs = self.mk(start, ExprKind::Field(Box::new(lhs), field));
                continue;
            }
            let Some((op, lbp, rbp)) = infix_op(self.peek()) else { break };
            if lbp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr_bp(rbp)?;
            lhs = match op {
                Infix::And | Infix::Or => {
                    let is_and = matches!(op, Infix::And);
                    let mut items = match lhs.kind {
                        ExprKind::And(v) if is_and => v,
                        ExprKind::Or(v) if !is_and => v,
                        _ => vec![lhs],
                    };
                    items.push(rhs);
                    self.mk(start, if is_and { ExprKind::And(items) } else { ExprKind::Or(items) })
                }
                Infix::Bin(b) => self.mk(start, ExprKind::Binary(b, Box::new(lhs), Box::new(rhs))),
            };
        }
        Ok(lhs)
    }

    fn unfenced<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        self.with_fence(0, f)
    }

    fn comma_list(&mut self, close: &str) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        loop {
            items.push(self.expr()?);
            if self.eat(close) {
                return Ok(items);
            }
            self.expect(",")?;
        }
    }

    fn bindings(&mut self) -> Result<Vec<Binding>, ParseError> {
        let mut out = Vec::new();
        loop {
            let mut names = vec![self.ident()?];
            while self.eat(",") {
                names.push(self.ident()?);
            }
            self.expect("\\in")?;
            let domain = self.expr()?;
            out.push(Binding { names, domain });
            if !(self.is_sym(",") && matches!(self.peek_at(1), Tok::Ident(_))) {
                return Ok(out);
            }
            self.bump();
        }
    }

    fn junction(&mut self, bullet: &'static str) -> Result<Expr, ParseError> {
        let start = self.start();
        let col = self.tok().col;
        let mut items = Vec::new();
        loop {
            self.bump();
            let item = self.with_fence(col, |p| p.expr())?;
            items.push(item);
            let t = self.tok();
            let same_bullet = matches!(&t.tok, Tok::Sym(s) if *s == bullet) && t.col == col;
            if !same_bullet || self.fenced(t) {
                break;
            }
        }
        if items.len() == 1 {
            let only = items.pop().unwrap();
            return Ok(only);
        }
        Ok(self.mk(start, if bullet == "/\\" { ExprKind::And(items) } else { ExprKind::Or(items) }))
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        let start = self.start();
        let tok = self.peek().clone();
        match tok {
            Tok::Int(n) => {
                self.bump();
                Ok(self.mk(start, ExprKind::Int(n)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(self.mk(start, ExprKind::Str(s)))
            }
            Tok::Ident(name) => {
                self.bump();
                if self.is_sym("(") && self.tok().line == start.0 {
                    self.bump();
                    let args = self.unfenced(|p| p.comma_list(")"))?;
                    Ok(self.mk(start, ExprKind::Call(name, args)))
                } else {
                    Ok(self.mk(start, ExprKind::Ident(name)))
                }
            }
            Tok::Sym(s) => match s {
                "TRUE" | "FALSE" => {
                    self.bump();
                    Ok(self.mk(start, ExprKind::Bool(s == "TRUE")))
                }
                "/\\" | "\\/" => self.junction(s),
                "(" => {
                    self.bump();
                    let e = self.unfenced(|p| {
                        let e = p.expr()?;
                        p.expect(")")?;
                        Ok::<_, ParseError>(e)
                    })?;
                    Ok(e)
                }
                "~" => {
                    self.bump();
                    let e = self.expr_bp(9)?;
                    Ok(self.mk(start, ExprKind::Not(Box::new(e))))
                }
                "-" => {
                    self.bump();
                    let e = self.expr_bp(23)?;
                    Ok(self.mk(start, ExprKind::Neg(Box::new(e))))
                }
                "SUBSET" | "UNION" | "DOMAIN" => {
                    self.bump();
                    let e = Box::new(self.expr_bp(15)?);
                    let kind = match s {
                        "SUBSET" => ExprKind::Subset(e),
                        "UNION" => ExprKind::Union(e),
                        _ => ExprKind::Domain(e),
                    };
                    Ok(self.mk(start, kind))
                }
                "UNCHANGED" => {
                    self.bump();
                    let e = self.expr_bp(25)?;
                    Ok(self.mk(start, ExprKind::Unchanged(Box::new(e))))
                }
                "IF" => {
                    self.bump();
                    let c = self.expr()?;
                    self.expect("THEN")?;
                    let t = self.expr()?;
                    self.expect("ELSE")?;
                    let e = self.expr()?;
                    Ok(self.mk(start, ExprKind::If(Box::new(c), Box::new(t), Box::new(e))))
                }
                "\\A" | "\\E" => {
                    self.bump();
                    let bs = self.bindings()?;
                    self.expect(":")?;
                    let body = Box::new(self.expr()?);
                    Ok(self.mk(start, if s == "\\A" { ExprKind::Forall(bs, body) } else { ExprKind::Exists(bs, body) }))
                }
                "CHOOSE" => {
                    self.bump();
                    let x = self.ident()?;
                    self.expect("\\in")?;
                    let d = self.expr()?;
                    self.expect(":")?;
                    let p = self.expr()?;
                    Ok(self.mk(start, ExprKind::Choose(x, Box::new(d), Box::new(p))))
                }
                "@" => {
                    self.bump();
                    Ok(self.mk(start, ExprKind::At))
                }
                "<<" => {
                    self.bump();
                    let items = self.unfenced(|p| p.comma_list(">>"))?;
                    Ok(self.mk(start, ExprKind::Tuple(items)))
                }
                "{" => {
                    self.bump();
                    self.unfenced(|p| p.brace(start))
                }
                "[" => {
                    self.bump();
                    self.unfenced(|p| p.bracket(start))
                }
                _ => Err(self.err_here(format!("unexpected {}", describe(&tok)))),
            },
            other => Err(self.err_here(format!("expected an expression, found {}", describe(&other)))),
        }
    }

    fn brace(&mut self, start: (u32, u32)) -> Result<Expr, ParseError> {
        if self.eat("}") {
            return Ok(self.mk(start, ExprKind::SetEnum(vec![])));
        }
        let first = self.expr()?;
        if self.eat(":") {
            if let ExprKind::Binary(BinOp::In, lhs, dom) = &first.kind {
                if let ExprKind::Ident(x) = &lhs.kind {
                    let (x, dom) = (x.clone(), dom.clone());
                    let pred = self.expr()?;
                    self.expect("}")?;
                    return Ok(self.mk(start, ExprKind::SetFilter(x, dom, Box::new(pred))));
                }
            }
            let bs = self.bindings()?;
            self.expect("}")?;
            return Ok(self.mk(start, ExprKind::SetMap(Box::new(first), bs)));
        }
        let mut items = vec![first];
        while self.eat(",") {
            items.push(self.expr()?);
        }
        self.expect("}")?;
        Ok(self.mk(start, ExprKind::SetEnum(items)))
    }

    fn looks_like_bindings(&self) -> bool {
        let mut k = 0;
        loop {
            if !matches!(self.peek_at(k), Tok::Ident(_)) {
                return false;
            }
            match self.peek_at(k + 1) {
                Tok::Sym("\\in") => return true,
                Tok::Sym(",") => k += 2,
                _ => return false,
            }
        }
    }

    fn bracket(&mut self, start: (u32, u32)) -> Result<Expr, ParseError> {
        if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Sym("|->")) {
            let mut fields = Vec::new();
            loop {
                let name = self.ident()?;
                self.expect("|->")?;
                fields.push((name, self.expr()?));
                if self.eat("]") {
                    break;
                }
                self.expect(",")?;
            }
            return Ok(self.mk(start, ExprKind::Record(fields)));
        }
        if self.looks_like_bindings() {
            let bs = self.bindings()?;
            self.expect("|->")?;
            let body = self.expr()?;
            self.expect("]")?;
            return Ok(self.mk(start, ExprKind::FnCons(bs, Box::new(body))));
        }
        let f = self.expr()?;
        if self.eat("->") {
            let t = self.expr()?;
            self.expect("]")?;
            return Ok(self.mk(start, ExprKind::Binary(BinOp::FnSet, Box::new(f), Box::new(t))));
        }
        self.expect("EXCEPT")?;
        let mut updates = Vec::new();
        loop {
            self.expect("!")?;
            let mut path = Vec::new();
            loop {
                if self.is_sym("[") {
                    let ks = self.start();
                    self.bump();
                    let mut keys = self.comma_list("]")?;
                    if keys.len() == 1 {
                        path.push(keys.pop().unwrap());
                    } else {
                        path.push(self.mk(ks, ExprKind::Tuple(keys)));
                    }
                } else if self.eat(".") {
                    let fs = self.start();
                    let name = self.ident()?;
                    path.push(self.mk(fs, ExprKind::Str(name)));
                } else {
                    break;
                }
            }
            if path.is_empty() {
                return Err(self.err_here("expected `[` or `.` after `!`"));
            }
            self.expect("=")?;
            let rhs = self.expr()?;
            updates.push((path, rhs));
            if self.eat("]") {
                break;
            }
            self.expect(",")?;
        }
        Ok(self.mk(start, ExprKind::Except(Box::new(f), updates)))
    }

    fn module(&mut self) -> Result<SpecModule, ParseError> {
        if matches!(self.peek(), Tok::Eof) {
            return Err(ParseError::at(1, 1, "empty module"));
        }
        if !matches!(self.peek(), Tok::Dashes) {
            return Err(self.err_here("expected module header `---- MODULE Name ----`"));
        }
        self.bump();
        self.expect("MODULE")?;
        let name = self.ident()?;
        self.module = name.clone();
        if matches!(self.peek(), Tok::Dashes) {
            self.bump();
        }
        let mut constants = Vec::new();
        let mut variables = Vec::new();
        let mut definitions: Vec<Definition> = Vec::new();
        loop {
            match self.peek().clone() {
                Tok::ModuleEnd | Tok::Eof => break,
                Tok::Dashes => {
                    self.bump();
                }
                Tok::Sym("CONSTANT" | "CONSTANTS") => {
                    self.bump();
                    constants.extend(self.name_list()?);
                }
                Tok::Sym("VARIABLE" | "VARIABLES") => {
                    self.bump();
                    variables.extend(self.name_list()?);
                }
                Tok::Ident(_) => definitions.push(self.definition()?),
                other => return Err(self.err_here(format!("unexpected {} at top level", describe(&other)))),
            }
        }
        Ok(SpecModule {
            name,
            constants,
            variables,
            definitions,
            source: Arc::from(""),
            expr_count: self.next_id,
        })
    }

    fn name_list(&mut self) -> Result<Vec<Arc<str>>, ParseError> {
        let mut names = vec![self.ident()?];
        while self.eat(",") {
            names.push(self.ident()?);
        }
        Ok(names)
    }

    fn definition(&mut self) -> Result<Definition, ParseError> {
        let start = self.start();
        let col = self.tok().col;
        let name = self.ident()?;
        let mut params = Vec::new();
        if self.eat("(") {
            params = self.name_list()?;
            self.expect(")")?;
        }
        self.expect("==")?;
        let body = self.with_fence(col, |p| p.expr())?;
        let range = SourceRange::new(self.module.clone(), start, self.last_end);
        Ok(Definition { name, params, body, range })
    }
}

enum Infix {
    And,
    Or,
    Bin(BinOp),
}

fn infix_op(t: &Tok) -> Option<(Infix, u8, u8)> {
    let Tok::Sym(s) = t else { return None };
    use BinOp::*;
    Some(match *s {
        "=>" => (Infix::Bin(Implies), 2, 2),
        "<=>" => (Infix::Bin(Equiv), 3, 4),
        "\\/" => (Infix::Or, 5, 6),
        "/\\" => (Infix::And, 7, 8),
        "=" => (Infix::Bin(Eq), 11, 12),
        "#" => (Infix::Bin(Neq), 11, 12),
        "<" => (Infix::Bin(Lt), 11, 12),
        "<=" => (Infix::Bin(Le), 11, 12),
        ">" => (Infix::Bin(Gt), 11, 12),
        ">=" => (Infix::Bin(Ge), 11, 12),
        "\\in" => (Infix::Bin(In), 11, 12),
        "\\notin" => (Infix::Bin(NotIn), 11, 12),
        "\\subseteq" => (Infix::Bin(Subseteq), 11, 12),
        "\\cup" => (Infix::Bin(Cup), 13, 14),
        "\\cap" => (Infix::Bin(Cap), 13, 14),
        "\\" => (Infix::Bin(SetMinus), 13, 14),
        ".." => (Infix::Bin(Range), 15, 16),
        "+" => (Infix::Bin(Add), 17, 18),
        "-" => (Infix::Bin(Sub), 17, 18),
        "%" => (Infix::Bin(Mod), 19, 20),
        "*" => (Infix::Bin(Mul), 21, 22),
        "\\div" => (Infix::Bin(Div), 21, 22),
        _ => return None,
    })
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(n) => format!("identifier `{n}`"),
        Tok::Int(n) => format!("number `{n}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Dashes => "`----`".into(),
        Tok::ModuleEnd => "`====`".into(),
        Tok::Eof => "end of input".into(),
    }
}

/// Parses a whole module and checks identifier scoping.
pub fn parse_module(src: &str) -> Result<SpecModule, ParseError> {
    let mut p = Parser::new(src, Arc::from("?"), 0)?;
    let mut m = p.module()?;
    m.source = Arc::from(src);
    check_module(&m)?;
    Ok(m)
}

/// Parses a standalone expression attributed to `module`; ids start at
/// `first_id` so they do not collide with the module's own.
pub fn parse_expr(src: &str, module: &str, first_id: u32) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src, Arc::from(module), first_id)?;
    if matches!(p.peek(), Tok::Eof) {
        return Err(ParseError::at(1, 1, "empty expression"));
    }
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(p.err_here(format!("unexpected {} after expression", describe(p.peek()))));
    }
    Ok(e)
}

fn check_module(m: &SpecModule) -> Result<(), ParseError> {
    let mut defs: HashMap<&str, usize> = HashMap::new();
    let mut globals: HashSet<&str> = HashSet::new();
    for n in m.constants.iter().chain(&m.variables) {
        if !globals.insert(n) {
            return Err(ParseError::at(1, 1, format!("duplicate declaration of `{n}`")));
        }
    }
    for d in &m.definitions {
        if globals.contains(&*d.name) || defs.insert(&d.name, d.params.len()).is_some() {
            return Err(ParseError::at(d.range.begin_line, d.range.begin_col, format!("duplicate definition of `{}`", d.name)));
        }
    }
    let scope = Scope { module: m, defs: &defs };
    for d in &m.definitions {
        let mut bound: Vec<Arc<str>> = d.params.clone();
        scope.check(&d.body, &mut bound)?;
    }
    check_no_recursion(m)?;
    Ok(())
}

pub(crate) struct Scope<'a> {
    pub module: &'a SpecModule,
    pub defs: &'a HashMap<&'a str, usize>,
}

impl Scope<'_> {
    pub(crate) fn check(&self, e: &Expr, bound: &mut Vec<Arc<str>>) -> Result<(), ParseError> {
        let unknown = |name: &str| {
            ParseError::at(e.range.begin_line, e.range.begin_col, format!("unknown identifier `{name}`"))
        };
        match &e.kind {
            ExprKind::Ident(n) => {
                let known = bound.iter().any(|b| b == n)
                    || self.module.constants.contains(n)
                    || self.module.variables.contains(n)
                    || BUILTIN_CONSTANTS.contains(&&**n)
                    || self.defs.get(&**n) == Some(&0);
                if !known {
                    if self.defs.contains_key(&**n) {
                        return Err(ParseError::at(
                            e.range.begin_line,
                            e.range.begin_col,
                            format!("operator `{n}` used without arguments"),
                        ));
                    }
                    return Err(unknown(n));
                }
                Ok(())
            }
            ExprKind::Call(n, args) => {
                let arity = self.defs.get(&**n).copied().or_else(|| builtin_arity(n)).ok_or_else(|| unknown(n))?;
                if arity != args.len() {
                    return Err(ParseError::at(
                        e.range.begin_line,
                        e.range.begin_col,
                        format!("`{n}` expects {arity} argument(s), got {}", args.len()),
                    ));
                }
                for a in args {
                    self.check(a, bound)?;
                }
                Ok(())
            }
            ExprKind::Forall(bs, body) | ExprKind::Exists(bs, body) | ExprKind::FnCons(bs, body) => {
                self.check_binder(bs, body, bound)
            }
            ExprKind::SetMap(body, bs) => self.check_binder(bs, body, bound),
            ExprKind::Choose(x, d, p) | ExprKind::SetFilter(x, d, p) => {
                self.check(d, bound)?;
                bound.push(x.clone());
                let r = self.check(p, bound);
                bound.pop();
                r
            }
            _ => {
                for c in e.children() {
                    self.check(c, bound)?;
                }
                Ok(())
            }
        }
    }

    fn check_binder(&self, bs: &[Binding], body: &Expr, bound: &mut Vec<Arc<str>>) -> Result<(), ParseError> {
        let depth = bound.len();
        for b in bs {
            self.check(&b.domain, bound)?;
            bound.extend(b.names.iter().cloned());
        }
        let r = self.check(body, bound);
        bound.truncate(depth);
        r
    }
}

fn check_no_recursion(m: &SpecModule) -> Result<(), ParseError> {
    let names: HashMap<&str, usize> = m.definitions.iter().enumerate().map(|(i, d)| (&*d.name, i)).collect();
    let deps: Vec<Vec<usize>> = m
        .definitions
        .iter()
        .map(|d| {
            let mut v = Vec::new();
            d.body.walk(&mut |e| match &e.kind {
                ExprKind::Ident(n) | ExprKind::Call(n, _) => {
                    if let Some(&j) = names.get(&**n) {
                        // a parameter or bound variable may shadow a definition name; treat as a
                        // dependency anyway, which can only over-report
                        v.push(j);
                    }
                }
                _ => {}
            });
            v
        })
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; deps.len()];
    fn visit(i: usize, deps: &[Vec<usize>], mark: &mut [u8]) -> Option<usize> {
        match mark[i] {
            1 => return Some(i),
            2 => return None,
            _ => {}
        }
        mark[i] = 1;
        for &j in &deps[i] {
            if let Some(c) = visit(j, deps, mark) {
                return Some(c);
            }
        }
        mark[i] = 2;
        None
    }
    for i in 0..deps.len() {
        if let Some(c) = visit(i, &deps, &mut mark) {
            let d = &m.definitions[c];
            return Err(ParseError::at(
                d.range.begin_line,
                d.range.begin_col,
                format!("recursive definition of `{}` is not supported", d.name),
            ));
        }
    }
    Ok(())
}
