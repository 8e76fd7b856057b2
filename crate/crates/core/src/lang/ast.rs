use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;

/// Position of an expression in its module source. Columns are 1-based,
/// the end position is inclusive.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SourceRange {
    pub module: Arc<str>,
    pub begin_line: u32,
    pub begin_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceRange {
    pub fn new(module: Arc<str>, begin: (u32, u32), end: (u32, u32)) -> Self {
        SourceRange { module, begin_line: begin.0, begin_col: begin.1, end_line: end.0, end_col: end.1 }
    }

    pub fn begin(&self) -> (u32, u32) {
        (self.begin_line, self.begin_col)
    }

    pub fn end(&self) -> (u32, u32) {
        (self.end_line, self.end_col)
    }

    /// Smallest range covering both.
    pub fn join(&self, other: &SourceRange) -> SourceRange {
        SourceRange {
            module: self.module.clone(),
            begin_line: self.begin().min(other.begin()).0,
            begin_col: self.begin().min(other.begin()).1,
            end_line: self.end().max(other.end()).0,
            end_col: self.end().max(other.end()).1,
        }
    }

    pub fn contains(&self, other: &SourceRange) -> bool {
        self.module == other.module && self.begin() <= other.begin() && other.end() <= self.end()
    }

    /// The text this range covers in `source`.
    pub fn slice<'a>(&self, source: &'a str) -> Option<&'a str> {
        let start = offset_of(source, self.begin_line, self.begin_col)?;
        let end_start = offset_of(source, self.end_line, self.end_col)?;
        let end = end_start + source[end_start..].chars().next()?.len_utf8();
        source.get(start..end)
    }

    /// Parses `line L, col C to line L2, col C2 of module M`.
    pub fn parse_tlc(text: &str) -> Option<SourceRange> {
        let rest = text.trim().strip_prefix("line ")?;
        let (bl, rest) = rest.split_once(", col ")?;
        let (bc, rest) = rest.split_once(" to line ")?;
        let (el, rest) = rest.split_once(", col ")?;
        let (ec, module) = rest.split_once(" of module ")?;
        Some(SourceRange {
            module: Arc::from(module.trim()),
            begin_line: bl.trim().parse().ok()?,
            begin_col: bc.trim().parse().ok()?,
            end_line: el.trim().parse().ok()?,
            end_col: ec.trim().parse().ok()?,
        })
    }
}

fn offset_of(source: &str, line: u32, col: u32) -> Option<usize> {
    let mut off = 0;
    for (i, l) in source.split_inclusive('\n').enumerate() {
        if i + 1 == line as usize {
            let (idx, _) = l.char_indices().nth(col as usize - 1)?;
            return Some(off + idx);
        }
        off += l.len();
    }
    None
}

impl fmt::Display for SourceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, col {} to line {}, col {} of module {}",
            self.begin_line, self.begin_col, self.end_line, self.end_col, self.module
        )
    }
}

impl fmt::Debug for SourceRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}-{}:{}", self.module, self.begin_line, self.begin_col, self.end_line, self.end_col)
    }
}

/// Dense per-module expression identifier, used as the profiler key.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExprId(pub u32);

#[derive(Clone, Debug)]
pub struct Expr {
    pub id: ExprId,
    pub range: SourceRange,
    pub kind: ExprKind,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Eq,
    Neq,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Subseteq,
    Implies,
    Equiv,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Range,
    Cup,
    Cap,
    SetMinus,
    FnSet,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "=",
            BinOp::Neq => "#",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "\\in",
            BinOp::NotIn => "\\notin",
            BinOp::Subseteq => "\\subseteq",
            BinOp::Implies => "=>",
            BinOp::Equiv => "<=>",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "\\div",
            BinOp::Mod => "%",
            BinOp::Range => "..",
            BinOp::Cup => "\\cup",
            BinOp::Cap => "\\cap",
            BinOp::SetMinus => "\\",
            BinOp::FnSet => "->",
        }
    }
}

/// `x, y \in S`
#[derive(Clone, Debug)]
pub struct Binding {
    pub names: Vec<Arc<str>>,
    pub domain: Expr,
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Bool(bool),
    Int(BigInt),
    Str(Arc<str>),
    Ident(Arc<str>),
    /// Operator application `Op(a, b)`, including builtins like `Len`.
    Call(Arc<str>, Vec<Expr>),
    /// Function application `f[a]`; `f[a, b]` applies to a tuple.
    Apply(Box<Expr>, Vec<Expr>),
    Field(Box<Expr>, Arc<str>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Forall(Vec<Binding>, Box<Expr>),
    Exists(Vec<Binding>, Box<Expr>),
    Choose(Arc<str>, Box<Expr>, Box<Expr>),
    SetEnum(Vec<Expr>),
    SetFilter(Arc<str>, Box<Expr>, Box<Expr>),
    SetMap(Box<Expr>, Vec<Binding>),
    Subset(Box<Expr>),
    Union(Box<Expr>),
    Domain(Box<Expr>),
    FnCons(Vec<Binding>, Box<Expr>),
    /// `[f EXCEPT ![a][b] = e, ...]`
    Except(Box<Expr>, Vec<(Vec<Expr>, Expr)>),
    /// `@` inside an EXCEPT right-hand side.
    At,
    Record(Vec<(Arc<str>, Expr)>),
    Tuple(Vec<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    Prime(Box<Expr>),
    Unchanged(Box<Expr>),
}

impl Expr {
    /// Direct children in source order.
    pub fn children(&self) -> Vec<&Expr> {
        use ExprKind::*;
        match &self.kind {
            Bool(_) | Int(_) | Str(_) | Ident(_) | At => vec![],
            Call(_, args) | SetEnum(args) | And(args) | Or(args) | Tuple(args) => args.iter().collect(),
            Apply(f, args) => std::iter::once(&**f).chain(args.iter()).collect(),
            Field(e, _) | Not(e) | Neg(e) | Subset(e) | Union(e) | Domain(e) | Prime(e) | Unchanged(e) => vec![e],
            Binary(_, a, b) => vec![a, b],
            Forall(bs, body) | Exists(bs, body) | FnCons(bs, body) => {
                bs.iter().map(|b| &b.domain).chain(std::iter::once(&**body)).collect()
            }
            SetMap(body, bs) => std::iter::once(&**body).chain(bs.iter().map(|b| &b.domain)).collect(),
            Choose(_, d, p) | SetFilter(_, d, p) => vec![d, p],
            Except(f, ups) => {
                let mut v = vec![&**f];
                for (path, rhs) in ups {
                    v.extend(path.iter());
                    v.push(rhs);
                }
                v
            }
            Record(fields) => fields.iter().map(|(_, e)| e).collect(),
            If(c, t, e) => vec![c, t, e],
        }
    }

    /// Visits this expression and all descendants, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    /// Structural equality ignoring ids and source ranges.
    pub fn same_shape(&self, other: &Expr) -> bool {
        use ExprKind::*;
        let kinds_match = match (&self.kind, &other.kind) {
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (Str(a), Str(b)) | (Ident(a), Ident(b)) => a == b,
            (Call(a, _), Call(b, _)) => a == b,
            (Field(_, a), Field(_, b)) => a == b,
            (Binary(a, ..), Binary(b, ..)) => a == b,
            (Forall(a, _), Forall(b, _)) | (Exists(a, _), Exists(b, _)) | (FnCons(a, _), FnCons(b, _)) => {
                binder_names_match(a, b)
            }
            (SetMap(_, a), SetMap(_, b)) => binder_names_match(a, b),
            (Choose(a, ..), Choose(b, ..)) | (SetFilter(a, ..), SetFilter(b, ..)) => a == b,
            (Except(_, a), Except(_, b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0.len() == y.0.len())
            }
            (Record(a), Record(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        };
        if !kinds_match {
            return false;
        }
        let (ca, cb) = (self.children(), other.children());
        ca.len() == cb.len() && ca.iter().zip(cb).all(|(a, b)| a.same_shape(b))
    }

    pub fn contains_prime(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e.kind, ExprKind::Prime(_) | ExprKind::Unchanged(_)) {
                found = true;
            }
        });
        found
    }
}

fn binder_names_match(a: &[Binding], b: &[Binding]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.names == y.names)
}

#[derive(Clone, Debug)]
pub struct Definition {
    pub name: Arc<str>,
    pub params: Vec<Arc<str>>,
    pub body: Expr,
    /// Range of the whole `Name(params) == body` text.
    pub range: SourceRange,
}

#[derive(Clone, Debug)]
pub struct SpecModule {
    pub name: Arc<str>,
    pub constants: Vec<Arc<str>>,
    pub variables: Vec<Arc<str>>,
    pub definitions: Vec<Definition>,
    pub source: Arc<str>,
    /// One past the largest `ExprId` handed out.
    pub expr_count: u32,
}

impl SpecModule {
    pub fn definition(&self, name: &str) -> Option<&Definition> {
        self.definitions.iter().find(|d| &*d.name == name)
    }

    /// Every expression node in every definition, keyed by id.
    pub fn expr_ranges(&self) -> Vec<(ExprId, SourceRange)> {
        let mut out = Vec::new();
        for d in &self.definitions {
            d.body.walk(&mut |e| out.push((e.id, e.range.clone())));
        }
        out
    }
}

/// Operators evaluated natively rather than defined in a module.
pub const BUILTIN_OPERATORS: &[(&str, usize)] =
    &[("Len", 1), ("Append", 2), ("Head", 1), ("Tail", 1), ("Cardinality", 1), ("SubSeq", 3)];

pub const BUILTIN_CONSTANTS: &[&str] = &["BOOLEAN"];

pub fn builtin_arity(name: &str) -> Option<usize> {
    BUILTIN_OPERATORS.iter().find(|(n, _)| *n == name).map(|(_, a)| *a)
}
