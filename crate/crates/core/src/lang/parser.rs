//! Concrete syntax.
//!
//! ```text
//! program   := stmts
//! stmts     := stmt ((NEWLINE | ';') stmt)*
//! stmt      := 'skip'
//!            | IDENT '=' 'sample' '(' expr ',' DIST '(' args ')' ')'
//!            | IDENT '=' expr
//!            | 'if' expr 'then' block ('else' block)?
//!            | 'while' expr 'do' block
//!            | '{' stmts '}' | '(' stmts ')'
//! block     := NEWLINE INDENT stmts DEDENT | '{' stmts '}' | stmts-on-one-line
//! expr      := or ('?' expr ':' expr)?
//! ```
//!
//! Operators by increasing precedence: `or`/`||`, `and`/`&&`, `not`/`!`,
//! comparisons, `+ -`, `* / %`, unary `-`, indexing `e[i]`. `#` starts a
//! comment. Inside parentheses and brackets newlines are ignored; inside
//! braces indentation is ignored.

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use super::ast::{Builtin, DistKind, Expr, Line, Program, Stmt, Var};
use super::value::Value;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Real(f64),
    Str(String),
    Sym(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: u32,
    col: u32,
}

const SYMBOLS: &[&str] = &[
    "==", "!=", "<=", ">=", "&&", "||", "+", "-", "*", "/", "%", "<", ">", "=", "!", "?", ":", ",", ";",
    "(", ")", "[", "]", "{", "}",
];

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out: Vec<Token> = Vec::new();
    let mut indents: Vec<usize> = vec![0];
    let mut group_depth = 0usize; // ( and [
    let mut brace_depth = 0usize;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;
    let mut at_line_start = true;

    let err = |line: u32, col: u32, m: String| ParseError { line, col, message: m };

    while i < chars.len() {
        if at_line_start && group_depth == 0 {
            // Measure indentation; skip blank and comment-only lines.
            let mut j = i;
            let mut width = 0usize;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                width += if chars[j] == '\t' { 4 } else { 1 };
                j += 1;
            }
            if j >= chars.len() {
                i = j;
                break;
            }
            if chars[j] == '\n' || chars[j] == '\r' || chars[j] == '#' {
                i = j;
                at_line_start = false;
                continue;
            }
            at_line_start = false;
            if brace_depth == 0 {
                let col = (j - line_start + 1) as u32;
                let top = *indents.last().unwrap();
                if width > top {
                    indents.push(width);
                    out.push(Token { tok: Tok::Indent, line, col });
                } else {
                    while width < *indents.last().unwrap() {
                        indents.pop();
                        out.push(Token { tok: Tok::Dedent, line, col });
                    }
                    if width != *indents.last().unwrap() {
                        return Err(err(line, col, "inconsistent indentation".into()));
                    }
                }
            }
            i = j;
            continue;
        }
        let c = chars[i];
        let col = (i - line_start + 1) as u32;
        if c != '\n' {
            at_line_start = false;
        }
        match c {
            '\n' => {
                if group_depth == 0 && !matches!(out.last(), Some(Token { tok: Tok::Newline, .. }) | None) {
                    out.push(Token { tok: Tok::Newline, line, col });
                }
                i += 1;
                line += 1;
                line_start = i;
                at_line_start = true;
            }
            ' ' | '\t' | '\r' => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&ch) = chars.get(i) else {
                        return Err(err(line, col, "unterminated string".into()));
                    };
                    i += 1;
                    match ch {
                        '"' => break,
                        '\n' => return Err(err(line, col, "unterminated string".into())),
                        '\\' => {
                            let Some(&e) = chars.get(i) else {
                                return Err(err(line, col, "unterminated string".into()));
                            };
                            i += 1;
                            match e {
                                'n' => s.push('\n'),
                                't' => s.push('\t'),
                                'r' => s.push('\r'),
                                '0' => s.push('\0'),
                                '\\' => s.push('\\'),
                                '"' => s.push('"'),
                                '\'' => s.push('\''),
                                'u' => {
                                    if chars.get(i) != Some(&'{') {
                                        return Err(err(line, col, "bad unicode escape".into()));
                                    }
                                    let start = i + 1;
                                    let end = (start..chars.len())
                                        .find(|&k| chars[k] == '}')
                                        .ok_or_else(|| err(line, col, "bad unicode escape".into()))?;
                                    let hex: String = chars[start..end].iter().collect();
                                    let ch = u32::from_str_radix(&hex, 16)
                                        .ok()
                                        .and_then(char::from_u32)
                                        .ok_or_else(|| err(line, col, "bad unicode escape".into()))?;
                                    s.push(ch);
                                    i = end + 1;
                                }
                                other => return Err(err(line, col, format!("unknown escape \\{other}"))),
                            }
                        }
                        _ => s.push(ch),
                    }
                }
                out.push(Token { tok: Tok::Str(s), line, col });
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let mut real = false;
                if i < chars.len() && chars[i] == '.' {
                    real = true;
                    i += 1;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        real = true;
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let tok = if real {
                    Tok::Real(text.parse().map_err(|_| err(line, col, format!("bad number {text}")))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| err(line, col, format!("integer out of range {text}")))?)
                };
                out.push(Token { tok, line, col });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                out.push(Token { tok: Tok::Ident(text), line, col });
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
                let sym = SYMBOLS
                    .iter()
                    .find(|s| rest.starts_with(**s))
                    .ok_or_else(|| err(line, col, format!("unexpected character {c:?}")))?;
                match *sym {
                    "(" | "[" => group_depth += 1,
                    ")" | "]" => group_depth = group_depth.saturating_sub(1),
                    "{" => brace_depth += 1,
                    "}" => brace_depth = brace_depth.saturating_sub(1),
                    _ => {}
                }
                i += sym.len();
                out.push(Token { tok: Tok::Sym(sym), line, col });
            }
        }
    }
    let col = (i - line_start + 1) as u32;
    if !matches!(out.last(), Some(Token { tok: Tok::Newline, .. }) | None) {
        out.push(Token { tok: Tok::Newline, line, col });
    }
    while indents.len() > 1 {
        indents.pop();
        out.push(Token { tok: Tok::Dedent, line, col });
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "if", "then", "else", "while", "do", "skip", "sample", "true", "false", "null", "and", "or", "not",
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    vars: Vec<Arc<str>>,
    slots: HashMap<Arc<str>, u32>,
}

/// What ends the statement list currently being parsed.
#[derive(Clone, Copy, PartialEq)]
enum Stop {
    Eof,
    Dedent,
    Brace,
    Paren,
    /// A one-line block: ends at a newline or `else`.
    Inline,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (u32, u32) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError { line, col, message: message.into() })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == s)
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected '{s}', found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, s: &str) -> Result<(), ParseError> {
        if self.is_kw(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected '{s}', found {}", describe(self.peek())))
        }
    }

    fn intern(&mut self, name: &str) -> Var {
        if let Some(&slot) = self.slots.get(name) {
            return Var { name: self.vars[slot as usize].clone(), slot };
        }
        let name: Arc<str> = Arc::from(name);
        let slot = self.vars.len() as u32;
        self.vars.push(name.clone());
        self.slots.insert(name.clone(), slot);
        Var { name, slot }
    }

    fn at_stop(&self, stop: Stop) -> bool {
        match (self.peek(), stop) {
            (Tok::Eof, _) => true,
            (Tok::Dedent, Stop::Dedent | Stop::Inline) => true,
            (Tok::Sym("}"), Stop::Brace | Stop::Inline) => true,
            (Tok::Sym(")"), Stop::Paren | Stop::Inline) => true,
            (Tok::Newline, Stop::Inline) => true,
            (Tok::Ident(k), Stop::Inline) if k == "else" => true,
            _ => false,
        }
    }

    fn stmts(&mut self, stop: Stop) -> Result<Stmt, ParseError> {
        let mut list = Vec::new();
        loop {
            while matches!(self.peek(), Tok::Newline if stop != Stop::Inline) || self.is_sym(";") {
                self.bump();
            }
            if self.at_stop(stop) {
                break;
            }
            list.push(self.stmt()?);
            let closed_block = self.pos > 0 && matches!(self.toks[self.pos - 1].tok, Tok::Dedent | Tok::Sym("}"));
            if !(closed_block || self.at_stop(stop) || matches!(self.peek(), Tok::Newline) || self.is_sym(";")) {
                return self.error(format!("expected end of statement, found {}", describe(self.peek())));
            }
        }
        Ok(Stmt::seq(list))
    }

    fn block(&mut self) -> Result<Stmt, ParseError> {
        if matches!(self.peek(), Tok::Newline) && matches!(self.peek_at(1), Tok::Indent) {
            self.bump();
            self.bump();
            let body = self.stmts(Stop::Dedent)?;
            if matches!(self.peek(), Tok::Dedent) {
                self.bump();
            }
            Ok(body)
        } else if self.is_sym("{") {
            self.bump();
            let body = self.stmts(Stop::Brace)?;
            self.expect_sym("}")?;
            Ok(body)
        } else if matches!(self.peek(), Tok::Newline | Tok::Eof) {
            self.error("expected an indented block")
        } else {
            self.stmts(Stop::Inline)
        }
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let line = Line(self.here().0);
        match self.peek().clone() {
            Tok::Ident(k) if k == "skip" => {
                self.bump();
                Ok(Stmt::Skip)
            }
            Tok::Ident(k) if k == "if" => {
                self.bump();
                let cond = self.expr()?;
                self.expect_kw("then")?;
                let then = self.block()?;
                if matches!(self.peek(), Tok::Newline) && matches!(self.peek_at(1), Tok::Ident(k) if k == "else") {
                    self.bump();
                }
                let els = if self.is_kw("else") {
                    self.bump();
                    self.block()?
                } else {
                    Stmt::Skip
                };
                Ok(Stmt::If { cond, then: Box::new(then), els: Box::new(els), line })
            }
            Tok::Ident(k) if k == "while" => {
                self.bump();
                let cond = self.expr()?;
                self.expect_kw("do")?;
                let body = self.block()?;
                Ok(Stmt::While { cond, body: Box::new(body), line })
            }
            Tok::Sym("{") => {
                self.bump();
                let s = self.stmts(Stop::Brace)?;
                self.expect_sym("}")?;
                Ok(s)
            }
            Tok::Sym("(") => {
                self.bump();
                let s = self.stmts(Stop::Paren)?;
                self.expect_sym(")")?;
                Ok(s)
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                self.expect_sym("=")?;
                let var = self.intern(&name);
                if self.is_kw("sample") {
                    self.bump();
                    self.expect_sym("(")?;
                    let addr = self.expr()?;
                    self.expect_sym(",")?;
                    let dname = match self.bump() {
                        Tok::Ident(d) => d,
                        other => return self.error(format!("expected distribution, found {}", describe(&other))),
                    };
                    let Some(dist) = DistKind::from_name(&dname) else {
                        return self.error(format!("unknown distribution '{dname}'"));
                    };
                    self.expect_sym("(")?;
                    let args = self.args(")")?;
                    if args.len() != dist.arity() {
                        return self.error(format!(
                            "{} takes {} argument(s), got {}",
                            dist.name(),
                            dist.arity(),
                            args.len()
                        ));
                    }
                    self.expect_sym(")")?;
                    Ok(Stmt::Sample { var, addr, dist, args, line })
                } else {
                    let expr = self.expr()?;
                    Ok(Stmt::Assign { var, expr, line })
                }
            }
            other => self.error(format!("expected a statement, found {}", describe(&other))),
        }
    }

    /// Comma-separated expressions up to and including `close`.
    fn args(&mut self, close: &str) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if self.is_sym(close) {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.is_sym(",") {
                self.bump();
                continue;
            }
            self.expect_sym(close)?;
            return Ok(args);
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let cond = self.or()?;
        if self.is_sym("?") {
            self.bump();
            let a = self.expr()?;
            self.expect_sym(":")?;
            let b = self.expr()?;
            return Ok(Expr::Call(Builtin::Ite, vec![cond, a, b]));
        }
        Ok(cond)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and()?;
        while self.is_kw("or") || self.is_sym("||") {
            self.bump();
            let rhs = self.and()?;
            lhs = Expr::Call(Builtin::Or, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not()?;
        while self.is_kw("and") || self.is_sym("&&") {
            self.bump();
            let rhs = self.not()?;
            lhs = Expr::Call(Builtin::And, vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.is_kw("not") || self.is_sym("!") {
            self.bump();
            let e = self.not()?;
            return Ok(Expr::Call(Builtin::Not, vec![e]));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Sym("==") => Builtin::Eq,
            Tok::Sym("!=") => Builtin::Ne,
            Tok::Sym("<") => Builtin::Lt,
            Tok::Sym("<=") => Builtin::Le,
            Tok::Sym(">") => Builtin::Gt,
            Tok::Sym(">=") => Builtin::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add()?;
        Ok(Expr::Call(op, vec![lhs, rhs]))
    }

    fn add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => Builtin::Add,
                Tok::Sym("-") => Builtin::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.mul()?;
            lhs = Expr::Call(op, vec![lhs, rhs]);
        }
    }

    fn mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => Builtin::Mul,
                Tok::Sym("/") => Builtin::Div,
                Tok::Sym("%") => Builtin::Mod,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Call(op, vec![lhs, rhs]);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.is_sym("-") {
            self.bump();
            // Fold negative numeric literals into constants.
            match self.peek().clone() {
                Tok::Int(i) if !self.postfix_follows() => {
                    self.bump();
                    return Ok(Expr::Const(Value::Int(-i)));
                }
                Tok::Real(r) if !self.postfix_follows() => {
                    self.bump();
                    return Ok(Expr::Const(Value::Real(-r)));
                }
                _ => {}
            }
            let e = self.unary()?;
            return Ok(Expr::Call(Builtin::Neg, vec![e]));
        }
        self.postfix()
    }

    fn postfix_follows(&self) -> bool {
        matches!(self.peek_at(1), Tok::Sym("["))
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        while self.is_sym("[") {
            self.bump();
            let idx = self.expr()?;
            self.expect_sym("]")?;
            e = Expr::Call(Builtin::Index, vec![e, idx]);
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Const(Value::Int(i)))
            }
            Tok::Real(r) => {
                self.bump();
                Ok(Expr::Const(Value::Real(r)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Const(Value::str(&s)))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Sym("[") => {
                self.bump();
                let elems = self.args("]")?;
                Ok(Expr::Call(Builtin::VecLit, elems))
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::Const(Value::Bool(true)))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::Const(Value::Bool(false)))
                }
                "null" => {
                    self.bump();
                    Ok(Expr::Const(Value::Null))
                }
                "sample" => self.error("sample may only appear as the right-hand side of an assignment"),
                k if KEYWORDS.contains(&k) => self.error(format!("unexpected keyword '{k}'")),
                _ if matches!(self.peek_at(1), Tok::Sym("(")) => {
                    let Some(b) = Builtin::from_name(&name) else {
                        return self.error(format!("unknown builtin '{name}'"));
                    };
                    self.bump();
                    self.bump();
                    let args = self.args(")")?;
                    if let Some(n) = b.arity() {
                        if args.len() != n {
                            return self.error(format!("{name} takes {n} argument(s), got {}", args.len()));
                        }
                    }
                    Ok(Expr::Call(b, args))
                }
                _ => {
                    self.bump();
                    Ok(Expr::Var(self.intern(&name)))
                }
            },
            other => self.error(format!("expected an expression, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Int(i) => format!("'{i}'"),
        Tok::Real(r) => format!("'{r}'"),
        Tok::Str(s) => format!("{s:?}"),
        Tok::Sym(s) => format!("'{s}'"),
        Tok::Newline => "end of line".into(),
        Tok::Indent => "indentation".into(),
        Tok::Dedent => "dedent".into(),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, vars: Vec::new(), slots: HashMap::new() };
    let body = p.stmts(Stop::Eof)?;
    if !matches!(p.peek(), Tok::Eof) {
        return p.error(format!("unexpected {}", describe(p.peek())));
    }
    Ok(Program { body, vars: p.vars })
}

/// Parses a standalone expression against a fresh variable table.
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0, vars: Vec::new(), slots: HashMap::new() };
    let e = p.expr()?;
    while matches!(p.peek(), Tok::Newline) {
        p.bump();
    }
    if !matches!(p.peek(), Tok::Eof) {
        return p.error(format!("unexpected {}", describe(p.peek())));
    }
    Ok(e)
}
