//! Recursive-descent parser for the expression grammar.
//!
//! Precedence, tightest first: `^` (right-associative, constant exponent),
//! unary `-`, `*` `/`, binary `+` `-`. Variables are `t`, `x1..xn`,
//! `y1..yn`; indices are checked against the model dimension at parse time.

use std::fmt;

use super::{Env, Expr, Func, PowExp};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse error at position {}: {}", self.pos, self.msg)
    }
}

impl std::error::Error for ParseError {}

/// Parse `src` over dimension `dim`. Round trip `parse(e.to_string())`
/// yields a structurally equal tree.
pub fn parse(src: &str, dim: usize) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
        dim,
    };
    p.skip_ws();
    let e = p.parse_add()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos, msg: msg.into() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn parse_add(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_mul()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = lhs + self.parse_mul()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = lhs - self.parse_mul()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_mul(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = lhs * self.parse_unary()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = lhs / self.parse_unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.parse_unary()?;
            return Ok(-inner);
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Expr, ParseError> {
        let base = self.parse_atom()?;
        self.skip_ws();
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp_pos = self.pos;
            let exp = self.parse_unary()?;
            if !exp.variables().is_empty() {
                return Err(ParseError {
                    pos: exp_pos,
                    msg: "exponent must be a constant".into(),
                });
            }
            let dummy = Env::new(0.0, Vec::new(), Vec::new());
            let value = exp.eval(&dummy).map_err(|e| ParseError {
                pos: exp_pos,
                msg: format!("invalid constant exponent: {e}"),
            })?;
            return Ok(base.pow(PowExp::Real(value)));
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.parse_add()?;
                if !self.eat(b')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.parse_number(),
            Some(c) if c.is_ascii_alphabetic() => self.parse_ident(),
            Some(c) => Err(self.err(format!("unexpected character `{}`", c as char))),
        }
    }

    fn parse_number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            // only treat as exponent when followed by digits or a sign
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let value: f64 = text.parse().map_err(|_| ParseError {
            pos: start,
            msg: format!("invalid numeric literal `{text}`"),
        })?;
        Ok(Expr::constant(value))
    }

    fn parse_ident(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric()) {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        self.skip_ws();
        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or(ParseError {
                pos: start,
                msg: format!("unknown function `{name}`"),
            })?;
            self.pos += 1;
            let arg = self.parse_add()?;
            if !self.eat(b')') {
                return Err(self.err("expected `)`"));
            }
            return Ok(Expr::apply(func, arg));
        }
        if name == "t" {
            return Ok(Expr::time());
        }
        let (head, digits) = name.split_at(1);
        if (head == "x" || head == "y") && !digits.is_empty() && digits.bytes().all(|c| c.is_ascii_digit()) {
            let index: usize = digits.parse().map_err(|_| ParseError {
                pos: start,
                msg: format!("invalid variable index `{name}`"),
            })?;
            if index == 0 || index > self.dim {
                return Err(ParseError {
                    pos: start,
                    msg: format!(
                        "variable index out of range: `{name}` (dimension is {})",
                        self.dim
                    ),
                });
            }
            return Ok(if head == "x" {
                Expr::spatial(index)
            } else {
                Expr::velocity(index)
            });
        }
        Err(ParseError {
            pos: start,
            msg: format!("unknown identifier `{name}`"),
        })
    }
}
