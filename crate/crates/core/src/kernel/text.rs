//! TLC value syntax: `TRUE`, `-3`, `"s"`, `{a, b}`, `(d1 :> v1 @@ d2 :> v2)`,
//! `<<a, b>>`.

use std::fmt::{self, Write};

use num_bigint::BigInt;

use super::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, col {col}: {message}")]
pub struct ValueSyntaxError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

pub fn render_value(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v).expect("writing to a String cannot fail");
    s
}

pub(crate) fn write_value<W: Write>(out: &mut W, v: &Value) -> fmt::Result {
    match v {
        Value::Bool(true) => out.write_str("TRUE"),
        Value::Bool(false) => out.write_str("FALSE"),
        Value::Int(n) => write!(out, "{n}"),
        Value::Str(s) => write_quoted(out, s),
        Value::Set(elems) => {
            out.write_char('{')?;
            for (i, e) in elems.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_value(out, e)?;
            }
            out.write_char('}')
        }
        Value::Fn(pairs) => {
            out.write_char('(')?;
            for (i, (k, val)) in pairs.iter().enumerate() {
                if i > 0 {
                    out.write_str(" @@ ")?;
                }
                write_value(out, k)?;
                out.write_str(" :> ")?;
                write_value(out, val)?;
            }
            out.write_char(')')
        }
        Value::Seq(elems) => {
            out.write_str("<<")?;
            for (i, e) in elems.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_value(out, e)?;
            }
            out.write_str(">>")
        }
    }
}

pub(crate) fn write_quoted<W: Write>(out: &mut W, s: &str) -> fmt::Result {
    out.write_char('"')?;
    for c in s.chars() {
        match c {
            '"' => out.write_str("\\\"")?,
            '\\' => out.write_str("\\\\")?,
            c => out.write_char(c)?,
        }
    }
    out.write_char('"')
}

pub fn parse_value(text: &str) -> Result<Value, ValueSyntaxError> {
    let mut p = ValueParser::new(text);
    p.skip_ws();
    let v = p.value()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("trailing input after value"));
    }
    Ok(v)
}

struct ValueParser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> ValueParser<'a> {
    fn new(text: &'a str) -> Self {
        ValueParser { src: text.as_bytes(), text, pos: 0 }
    }

    fn error(&self, message: impl Into<String>) -> ValueSyntaxError {
        let before = &self.text[..self.pos.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rfind('\n').map_or(before.chars().count(), |i| before[i + 1..].chars().count()) + 1;
        ValueSyntaxError { line, col, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn starts_with(&self, tok: &str) -> bool {
        self.src[self.pos..].starts_with(tok.as_bytes())
    }

    fn expect(&mut self, tok: &str) -> Result<(), ValueSyntaxError> {
        self.skip_ws();
        if self.starts_with(tok) {
            self.pos += tok.len();
            Ok(())
        } else {
            Err(self.error(format!("expected `{tok}`")))
        }
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.skip_ws();
        if self.starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Result<Value, ValueSyntaxError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'"') => self.string(),
            Some(b'{') => {
                self.pos += 1;
                let elems = self.list("}")?;
                Ok(Value::set_from(elems))
            }
            Some(b'<') if self.starts_with("<<") => {
                self.pos += 2;
                let elems = self.list(">>")?;
                Ok(Value::seq(elems))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut pairs = Vec::new();
                loop {
                    let k = self.value()?;
                    self.expect(":>")?;
                    let v = self.value()?;
                    pairs.push((k, v));
                    if self.eat(")") {
                        break;
                    }
                    self.expect("@@")?;
                }
                Ok(Value::fn_from(pairs))
            }
            Some(c) if c == b'-' || c.is_ascii_digit() => self.integer(),
            Some(_) if self.starts_with("TRUE") => {
                self.pos += 4;
                Ok(Value::Bool(true))
            }
            Some(_) if self.starts_with("FALSE") => {
                self.pos += 5;
                Ok(Value::Bool(false))
            }
            Some(_) => Err(self.error("expected a value")),
        }
    }

    fn list(&mut self, close: &str) -> Result<Vec<Value>, ValueSyntaxError> {
        let mut elems = Vec::new();
        if self.eat(close) {
            return Ok(elems);
        }
        loop {
            elems.push(self.value()?);
            if self.eat(close) {
                return Ok(elems);
            }
            self.expect(",")?;
        }
    }

    fn integer(&mut self) -> Result<Value, ValueSyntaxError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digits {
            return Err(self.error("expected digits"));
        }
        let n: BigInt = self.text[start..self.pos].parse().map_err(|_| self.error("bad integer"))?;
        Ok(Value::Int(n))
    }

    fn string(&mut self) -> Result<Value, ValueSyntaxError> {
        self.pos += 1;
        let mut s = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let mut chars = rest.chars();
            match chars.next() {
                None => return Err(self.error("unterminated string")),
                Some('"') => {
                    self.pos += 1;
                    return Ok(Value::str(s));
                }
                Some('\\') => match chars.next() {
                    Some(c @ ('"' | '\\')) => {
                        s.push(c);
                        self.pos += 2;
                    }
                    _ => {
                        // unknown escapes pass through verbatim
                        s.push('\\');
                        self.pos += 1;
                    }
                },
                Some(c) => {
                    s.push(c);
                    self.pos += c.len_utf8();
                }
            }
        }
    }
}
