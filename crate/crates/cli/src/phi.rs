//! Expression language for test functions `φ(x)`.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | atom
//! atom   := number | 'x' | '(' expr ')'
//!         | 'abs' '(' expr ')' | 'min' '(' expr ',' expr ')' | 'max' '(' expr ',' expr ')'
//! number := digits ['.' digits] [('e' | 'E') ['+' | '-'] digits]  (or '.' digits ...)
//! ```
//!
//! Binary operators are left associative. A divisor must not mention `x`
//! and must evaluate to a finite nonzero constant, so every accepted
//! expression is total on the reals.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiExpr {
    Num(f64),
    X,
    Neg(Box<PhiExpr>),
    Bin(BinOp, Box<PhiExpr>, Box<PhiExpr>),
    Abs(Box<PhiExpr>),
    Min(Box<PhiExpr>, Box<PhiExpr>),
    Max(Box<PhiExpr>, Box<PhiExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: {message}")]
pub struct PhiSyntaxError {
    pub offset: usize,
    pub message: String,
}

impl PhiExpr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            PhiExpr::Num(v) => *v,
            PhiExpr::X => x,
            PhiExpr::Neg(e) => -e.eval(x),
            PhiExpr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            PhiExpr::Abs(e) => e.eval(x).abs(),
            PhiExpr::Min(a, b) => a.eval(x).min(b.eval(x)),
            PhiExpr::Max(a, b) => a.eval(x).max(b.eval(x)),
        }
    }

    pub fn mentions_x(&self) -> bool {
        match self {
            PhiExpr::Num(_) => false,
            PhiExpr::X => true,
            PhiExpr::Neg(e) | PhiExpr::Abs(e) => e.mentions_x(),
            PhiExpr::Bin(_, a, b) | PhiExpr::Min(a, b) | PhiExpr::Max(a, b) => {
                a.mentions_x() || b.mentions_x()
            }
        }
    }
}

/// Prints binary operations fully parenthesised; numbers use the shortest
/// representation that parses back to the same `f64`.
impl fmt::Display for PhiExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiExpr::Num(v) => write!(f, "{v:?}"),
            PhiExpr::X => f.write_str("x"),
            PhiExpr::Neg(e) => match **e {
                PhiExpr::Neg(_) => write!(f, "-({e})"),
                _ => write!(f, "-{e}"),
            },
            PhiExpr::Bin(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            PhiExpr::Abs(e) => write!(f, "abs({e})"),
            PhiExpr::Min(a, b) => write!(f, "min({a},{b})"),
            PhiExpr::Max(a, b) => write!(f, "max({a},{b})"),
        }
    }
}

pub fn parse_phi(text: &str) -> Result<PhiExpr, PhiSyntaxError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> PhiSyntaxError {
        self.error_at(self.pos, message)
    }

    fn error_at(&self, offset: usize, message: &str) -> PhiSyntaxError {
        PhiSyntaxError {
            offset,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), PhiSyntaxError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = PhiExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            let rhs = self.unary()?;
            if op == BinOp::Div {
                if rhs.mentions_x() {
                    return Err(self.error_at(start, "divisor must not depend on x"));
                }
                let d = rhs.eval(0.0);
                if d == 0.0 || !d.is_finite() {
                    return Err(self.error_at(start, "divisor must be a finite nonzero constant"));
                }
            }
            lhs = PhiExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(PhiExpr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input, expected an operand")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            Some(_) => Err(self.error("expected an operand")),
        }
    }

    fn number(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut n = digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            n += digits(self);
        }
        if n == 0 {
            return Err(self.error_at(start, "malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                return Err(self.error("malformed exponent"));
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let v: f64 = text
            .parse()
            .map_err(|_| self.error_at(start, "malformed number"))?;
        if !v.is_finite() {
            return Err(self.error_at(start, "number out of range"));
        }
        Ok(PhiExpr::Num(v))
    }

    fn word(&mut self) -> Result<PhiExpr, PhiSyntaxError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        match name {
            "x" => Ok(PhiExpr::X),
            "abs" => {
                self.expect(b'(')?;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(PhiExpr::Abs(Box::new(e)))
            }
            "min" | "max" => {
                self.expect(b'(')?;
                let a = Box::new(self.expr()?);
                self.expect(b',')?;
                let b = Box::new(self.expr()?);
                self.expect(b')')?;
                Ok(if name == "min" {
                    PhiExpr::Min(a, b)
                } else {
                    PhiExpr::Max(a, b)
                })
            }
            _ => Err(self.error_at(start, &format!("unknown identifier '{name}'"))),
        }
    }
}
