//! A small arithmetic language for user-defined kernels.
//!
//! Each matrix entry `P_ν(i, j)` is an expression over the current law:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | atom
//! atom    := NUMBER
//!          | 'nu' '(' INTEGER ')'              -- ν({k}), k counted from 1
//!          | ('min' | 'max') '(' expr ',' expr ')'
//!          | '(' expr ')'
//! ```
//!
//! Whitespace is ignored. A kernel file is a JSON document:
//!
//! ```json
//! { "space_size": 2, "label": "example",
//!   "entries": [["0.5*nu(2) + 0.25", "0.5*nu(1) + 0.25"],
//!               ["0.5*nu(2) + 0.25", "0.5*nu(1) + 0.25"]] }
//! ```

use serde::{Deserialize, Serialize};

use super::{default_resolution, validate, MeasureGrid, NonlinearKernel, TransitionMatrix};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based state index.
    Nu(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str, space_size: usize) -> Result<Self> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
            space_size,
        };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(e)
    }

    pub fn eval(&self, nu: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Nu(k) => nu[*k],
            Expr::Neg(a) => -a.eval(nu),
            Expr::Add(a, b) => a.eval(nu) + b.eval(nu),
            Expr::Sub(a, b) => a.eval(nu) - b.eval(nu),
            Expr::Mul(a, b) => a.eval(nu) * b.eval(nu),
            Expr::Min(a, b) => a.eval(nu).min(b.eval(nu)),
            Expr::Max(a, b) => a.eval(nu).max(b.eval(nu)),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    space_size: usize,
}

impl Parser<'_> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::Expression {
            position: self.pos,
            message: message.into(),
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number().map(Expr::Const),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let ident = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                match ident {
                    "nu" => {
                        self.expect(b'(')?;
                        self.skip_ws();
                        let at = self.pos;
                        let k = self.number()?;
                        if k.fract() != 0.0 || k < 1.0 || k > self.space_size as f64 {
                            self.pos = at;
                            return Err(self.error(format!(
                                "state index must be an integer in 1..={}",
                                self.space_size
                            )));
                        }
                        self.expect(b')')?;
                        Ok(Expr::Nu(k as usize - 1))
                    }
                    "min" | "max" => {
                        self.expect(b'(')?;
                        let a = self.expr()?;
                        self.expect(b',')?;
                        let b = self.expr()?;
                        self.expect(b')')?;
                        Ok(if ident == "min" {
                            Expr::Min(Box::new(a), Box::new(b))
                        } else {
                            Expr::Max(Box::new(a), Box::new(b))
                        })
                    }
                    _ => {
                        self.pos = start;
                        Err(self.error(format!("unknown identifier `{ident}`")))
                    }
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
        // optional exponent
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
        text.parse::<f64>().map_err(|_| {
            self.pos = start;
            self.error(format!("malformed number `{text}`"))
        })
    }
}

/// On-disk description of a custom kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomKernelSpec {
    pub space_size: usize,
    #[serde(default)]
    pub label: Option<String>,
    pub entries: Vec<Vec<String>>,
}

/// Parses every entry and rejects the kernel if any row fails validation on
/// the grid of the given resolution (default resolution when `None`).
pub fn load_custom_kernel(spec: &CustomKernelSpec, resolution: Option<usize>) -> Result<NonlinearKernel> {
    let n = spec.space_size;
    if n == 0 {
        return Err(invalid("space_size", "must be positive"));
    }
    if spec.entries.len() != n || spec.entries.iter().any(|r| r.len() != n) {
        return Err(invalid("entries", format!("expected a {n} × {n} array of expressions")));
    }
    let exprs = spec
        .entries
        .iter()
        .flatten()
        .map(|s| Expr::parse(s, n))
        .collect::<Result<Vec<_>>>()?;
    let label = spec.label.clone().unwrap_or_else(|| format!("custom(n={n})"));
    let kernel = NonlinearKernel::new(n, label, move |nu| {
        let p = nu.probs();
        TransitionMatrix {
            n,
            data: exprs.iter().map(|e| e.eval(p)).collect(),
        }
    });
    let grid = MeasureGrid::new(n, resolution.unwrap_or_else(|| default_resolution(n)))?;
    validate(&kernel, &grid)?;
    Ok(kernel)
}
