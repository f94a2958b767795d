//! Recursive-descent parser.
//!
//! Precedence from loosest to tightest: `+ -`, `* /`, unary `-`, `^`.
//! All binary operators are left-associative. The right operand of `^` is an
//! optionally negated atom that must fold to an integer constant.

use super::{Expression, Func};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("undeclared variable '{0}'")]
    UndeclaredVariable(String),
    #[error("exponent at byte {offset} is not a constant integer")]
    NonIntegerExponent { offset: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ParseError::Syntax {
                        offset: start,
                        message: format!("unexpected character '{}'", src[start..].chars().next().unwrap()),
                    })
                }
            };
            i += 1;
            out.push((start, tok));
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

struct Parser<'a, S> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    vars: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset: self.offset(), message: message.into() })
    }

    fn expr(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::add(&lhs, &rhs);
                }
                Tok::Op('-') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expression::sub(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expression, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::mul(&lhs, &rhs);
                }
                Tok::Op('/') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expression::div(&lhs, &rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expression, ParseError> {
        if self.peek() == &Tok::Op('-') {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expression::neg(&inner));
        }
        if self.peek() == &Tok::Op('+') {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expression, ParseError> {
        let mut base = self.atom()?;
        while self.peek() == &Tok::Op('^') {
            self.bump();
            let at = self.offset();
            let mut negate = false;
            while self.peek() == &Tok::Op('-') {
                self.bump();
                negate = !negate;
            }
            let mut e = self.atom()?;
            if negate {
                e = Expression::neg(&e);
            }
            let n = e
                .as_const()
                .filter(|v| v.fract() == 0.0 && v.abs() <= i32::MAX as f64)
                .ok_or(ParseError::NonIntegerExponent { offset: at })?;
            base = Expression::powi(&base, n as i32);
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expression, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expression::num(v)),
            Tok::LParen => {
                let e = self.expr()?;
                if self.peek() != &Tok::RParen {
                    return self.err("expected ')'");
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(f) = Func::from_name(&name) {
                    if self.peek() != &Tok::LParen {
                        return self.err(format!("expected '(' after {name}"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if self.peek() != &Tok::RParen {
                        return self.err("expected ')'");
                    }
                    self.bump();
                    return Ok(Expression::call(f, &arg));
                }
                match self.vars.iter().position(|v| v.as_ref() == name) {
                    Some(i) => Ok(Expression::var(i)),
                    None => Err(ParseError::UndeclaredVariable(name)),
                }
            }
            Tok::End => Err(ParseError::Syntax { offset: at, message: "unexpected end of input".into() }),
            t => Err(ParseError::Syntax { offset: at, message: format!("unexpected token {t:?}") }),
        }
    }
}

/// Parse `src` against the declared variable list. Variable `vars[i]` becomes
/// index `i` in the resulting tree.
pub fn parse<S: AsRef<str>>(src: &str, vars: &[S]) -> Result<Expression, ParseError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0, vars };
    let e = p.expr()?;
    if p.peek() != &Tok::End {
        return p.err("trailing input");
    }
    Ok(e)
}
