//! Renders ASTs back to source. Output is fully parenthesized and single
//! line per definition, so it re-parses to the same tree regardless of
//! layout rules.

use std::fmt::Write;

use crate::kernel::write_quoted;

use super::ast::*;

pub fn render_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn join(out: &mut String, items: &[Expr], sep: &str) {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        write_expr(out, e);
    }
}

fn write_bindings(out: &mut String, bs: &[Binding]) {
    for (i, b) in bs.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&b.names.join(", "));
        out.push_str(" \\in ");
        write_expr(out, &b.domain);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Str(s) => {
            let _ = write_quoted(out, s);
        }
        ExprKind::Ident(n) => out.push_str(n),
        ExprKind::Call(n, args) => {
            out.push_str(n);
            out.push('(');
            join(out, args, ", ");
            out.push(')');
        }
        ExprKind::Apply(f, args) => {
            out.push('(');
            write_expr(out, f);
            out.push_str(")[");
            join(out, args, ", ");
            out.push(']');
        }
        ExprKind::Field(r, name) => {
            out.push('(');
            write_expr(out, r);
            out.push_str(").");
            out.push_str(name);
        }
        ExprKind::Binary(BinOp::FnSet, a, b) => {
            out.push('[');
            write_expr(out, a);
            out.push_str(" -> ");
            write_expr(out, b);
            out.push(']');
        }
        ExprKind::Binary(op, a, b) => {
            out.push('(');
            write_expr(out, a);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, b);
            out.push(')');
        }
        ExprKind::Not(a) => {
            out.push_str("(~");
            write_expr(out, a);
            out.push(')');
        }
        ExprKind::Neg(a) => {
            out.push_str("(-");
            write_expr(out, a);
            out.push(')');
        }
        ExprKind::And(items) | ExprKind::Or(items) => {
            let sep = if matches!(e.kind, ExprKind::And(_)) { " /\\ " } else { " \\/ " };
            out.push('(');
            join(out, items, sep);
            out.push(')');
        }
        ExprKind::Forall(bs, body) | ExprKind::Exists(bs, body) => {
            out.push_str(if matches!(e.kind, ExprKind::Forall(..)) { "(\\A " } else { "(\\E " });
            write_bindings(out, bs);
            out.push_str(" : ");
            write_expr(out, body);
            out.push(')');
        }
        ExprKind::Choose(x, d, p) => {
            let _ = write!(out, "(CHOOSE {x} \\in ");
            write_expr(out, d);
            out.push_str(" : ");
            write_expr(out, p);
            out.push(')');
        }
        ExprKind::SetEnum(items) => {
            out.push('{');
            join(out, items, ", ");
            out.push('}');
        }
        ExprKind::SetFilter(x, d, p) => {
            let _ = write!(out, "{{{x} \\in ");
            write_expr(out, d);
            out.push_str(" : ");
            write_expr(out, p);
            out.push('}');
        }
        ExprKind::SetMap(body, bs) => {
            out.push('{');
            write_expr(out, body);
            out.push_str(" : ");
            write_bindings(out, bs);
            out.push('}');
        }
        ExprKind::Subset(a) | ExprKind::Union(a) | ExprKind::Domain(a) | ExprKind::Unchanged(a) => {
            let kw = match e.kind {
                ExprKind::Subset(_) => "SUBSET",
                ExprKind::Union(_) => "UNION",
                ExprKind::Domain(_) => "DOMAIN",
                _ => "UNCHANGED",
            };
            let _ = write!(out, "({kw} ");
            write_expr(out, a);
            out.push(')');
        }
        ExprKind::FnCons(bs, body) => {
            out.push('[');
            write_bindings(out, bs);
            out.push_str(" |-> ");
            write_expr(out, body);
            out.push(']');
        }
        ExprKind::Except(f, ups) => {
            out.push('[');
            write_expr(out, f);
            out.push_str(" EXCEPT ");
            for (i, (path, rhs)) in ups.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push('!');
                for k in path {
                    out.push('[');
                    write_expr(out, k);
                    out.push(']');
                }
                out.push_str(" = ");
                write_expr(out, rhs);
            }
            out.push(']');
        }
        ExprKind::At => out.push('@'),
        ExprKind::Record(fields) => {
            out.push('[');
            for (i, (n, v)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{n} |-> ");
                write_expr(out, v);
            }
            out.push(']');
        }
        ExprKind::Tuple(items) => {
            out.push_str("<<");
            join(out, items, ", ");
            out.push_str(">>");
        }
        ExprKind::If(c, t, f) => {
            out.push_str("(IF ");
            write_expr(out, c);
            out.push_str(" THEN ");
            write_expr(out, t);
            out.push_str(" ELSE ");
            write_expr(out, f);
            out.push(')');
        }
        ExprKind::Prime(a) => {
            out.push('(');
            write_expr(out, a);
            out.push_str(")'");
        }
    }
}

pub fn render_module(m: &SpecModule) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "---- MODULE {} ----", m.name);
    if !m.constants.is_empty() {
        let _ = writeln!(s, "CONSTANTS {}", m.constants.join(", "));
    }
    if !m.variables.is_empty() {
        let _ = writeln!(s, "VARIABLES {}", m.variables.join(", "));
    }
    for d in &m.definitions {
        s.push_str(&d.name);
        if !d.params.is_empty() {
            let _ = write!(s, "({})", d.params.join(", "));
        }
        s.push_str(" == ");
        write_expr(&mut s, &d.body);
        s.push('\n');
    }
    s.push_str("====\n");
    s
}
