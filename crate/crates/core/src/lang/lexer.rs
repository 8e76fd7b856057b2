use std::sync::Arc;

use num_bigint::BigInt;

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Ident(Arc<str>),
    Int(BigInt),
    Str(Arc<str>),
    /// Punctuation, operators and keywords, spelled canonically.
    Sym(&'static str),
    /// A run of four or more dashes, optionally with `MODULE Name` inside.
    Dashes,
    /// A run of four or more `=`.
    ModuleEnd,
    Eof,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

const KEYWORDS: &[&str] = &[
    "IF", "THEN", "ELSE", "SUBSET", "UNION", "DOMAIN", "EXCEPT", "UNCHANGED", "CHOOSE", "TRUE", "FALSE",
    "CONSTANT", "CONSTANTS", "VARIABLE", "VARIABLES", "MODULE", "LET", "IN",
];

/// Backslash operators, mapped to their canonical spelling.
const BACKSLASH_OPS: &[(&str, &str)] = &[
    ("in", "\\in"),
    ("notin", "\\notin"),
    ("subseteq", "\\subseteq"),
    ("cup", "\\cup"),
    ("union", "\\cup"),
    ("cap", "\\cap"),
    ("intersect", "\\cap"),
    ("div", "\\div"),
    ("land", "/\\"),
    ("lor", "\\/"),
    ("lnot", "~"),
    ("neg", "~"),
    ("A", "\\A"),
    ("E", "\\E"),
];

/// Longest-match punctuation, longest first.
const PUNCT: &[&str] = &[
    "<=>", "|->", "==", "=>", "=<", "<=", ">=", "/=", "/\\", "\\/", "<<", ">>", "..", "->", "::", "(", ")",
    "[", "]", "{", "}", ",", ":", "=", "#", "<", ">", "+", "-", "*", "%", "'", "!", "@", ".", "~",
];

pub(crate) fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer { chars: src.chars().collect(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia()?;
        let (line, col) = (lx.line, lx.col);
        let Some(c) = lx.peek(0) else {
            out.push(Token { tok: Tok::Eof, line, col, end_line: line, end_col: col });
            return Ok(out);
        };
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while let Some(c) = lx.peek(0).filter(|c| c.is_ascii_alphanumeric() || *c == '_') {
                s.push(c);
                lx.bump();
            }
            match KEYWORDS.iter().find(|k| **k == s) {
                Some(k) => Tok::Sym(k),
                None => Tok::Ident(Arc::from(s)),
            }
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while let Some(c) = lx.peek(0).filter(|c| c.is_ascii_digit()) {
                s.push(c);
                lx.bump();
            }
            Tok::Int(s.parse().expect("digits"))
        } else if c == '"' {
            lx.bump();
            let mut s = String::new();
            loop {
                match lx.peek(0) {
                    None | Some('\n') => return Err(ParseError::at(line, col, "unterminated string literal")),
                    Some('"') => {
                        lx.bump();
                        break;
                    }
                    Some('\\') if matches!(lx.peek(1), Some('"' | '\\')) => {
                        s.push(lx.peek(1).unwrap());
                        lx.bump();
                        lx.bump();
                    }
                    Some(c) => {
                        s.push(c);
                        lx.bump();
                    }
                }
            }
            Tok::Str(Arc::from(s))
        } else if c == '-' && lx.run_len('-') >= 4 {
            // `---- MODULE Name ----` header or a separator line.
            let n = lx.run_len('-');
            for _ in 0..n {
                lx.bump();
            }
            Tok::Dashes
        } else if c == '=' && lx.run_len('=') >= 4 {
            let n = lx.run_len('=');
            for _ in 0..n {
                lx.bump();
            }
            Tok::ModuleEnd
        } else if c == '\\' {
            if lx.peek(1) == Some('/') {
                lx.bump();
                lx.bump();
                Tok::Sym("\\/")
            } else {
                let mut word = String::new();
                let mut k = 1;
                while let Some(c) = lx.peek(k).filter(|c| c.is_ascii_alphabetic()) {
                    word.push(c);
                    k += 1;
                }
                if word.is_empty() {
                    lx.bump();
                    Tok::Sym("\\")
                } else if let Some((_, canon)) = BACKSLASH_OPS.iter().find(|(w, _)| *w == word) {
                    for _ in 0..k {
                        lx.bump();
                    }
                    Tok::Sym(canon)
                } else {
                    return Err(ParseError::at(line, col, format!("unknown operator `\\{word}`")));
                }
            }
        } else if let Some(p) = PUNCT.iter().find(|p| lx.starts_with(p)) {
            for _ in 0..p.chars().count() {
                lx.bump();
            }
            match *p {
                "/=" => Tok::Sym("#"),
                "=<" => Tok::Sym("<="),
                p => Tok::Sym(p),
            }
        } else {
            return Err(ParseError::at(line, col, format!("unexpected character `{c}`")));
        };
        let (end_line, end_col) = lx.prev();
        out.push(Token { tok, line, col, end_line, end_col });
    }
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.pos + k).copied()
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek(0) {
            self.pos += 1;
            if c == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.peek(i) == Some(c))
    }

    fn run_len(&self, c: char) -> usize {
        let mut n = 0;
        while self.peek(n) == Some(c) {
            n += 1;
        }
        n
    }

    fn skip_trivia(&mut self) -> Result<(), ParseError> {
        loop {
            match self.peek(0) {
                Some(c) if c.is_whitespace() => self.bump(),
                Some('\\') if self.peek(1) == Some('*') => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                Some('(') if self.peek(1) == Some('*') => {
                    let (line, col) = (self.line, self.col);
                    let mut depth = 0;
                    loop {
                        if self.starts_with("(*") {
                            depth += 1;
                            self.bump();
                            self.bump();
                        } else if self.starts_with("*)") {
                            depth -= 1;
                            self.bump();
                            self.bump();
                            if depth == 0 {
                                break;
                            }
                        } else if self.peek(0).is_none() {
                            return Err(ParseError::at(line, col, "unterminated comment"));
                        } else {
                            self.bump();
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }
}

impl Lexer {
    /// Position of the last consumed character, for inclusive token ends.
    fn prev(&self) -> (u32, u32) {
        // tokens never end with a newline, so the previous char is on this line
        (self.line, self.col - 1)
    }
}
