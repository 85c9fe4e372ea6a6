//! Scalar fields on the polytope (the weight `A`) and small polynomial and
//! symmetric-matrix helpers.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A field evaluable at every point of the closed polytope.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Total degree when the field is a polynomial; drives quadrature degree.
    fn polynomial_degree(&self) -> Option<usize> {
        None
    }
}

impl ScalarField for f64 {
    fn value(&self, _: &[f64]) -> f64 {
        *self
    }

    fn polynomial_degree(&self) -> Option<usize> {
        Some(0)
    }
}

/// Closure-backed field.
#[derive(Clone)]
pub struct FnField {
    f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    degree: Option<usize>,
}

impl FnField {
    pub fn new(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            degree: None,
        }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnField")
    }
}

impl ScalarField for FnField {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    fn polynomial_degree(&self) -> Option<usize> {
        self.degree
    }
}

/// Symmetric matrix of size 1 or 2, stored as `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Sym {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            a: 0.0,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn one_d(a: f64) -> Self {
        Self {
            dim: 1,
            a,
            b: 0.0,
            c: 0.0,
        }
    }

    pub fn two_d(a: f64, b: f64, c: f64) -> Self {
        Self { dim: 2, a, b, c }
    }

    pub fn det(&self) -> f64 {
        if self.dim == 1 {
            self.a
        } else {
            self.a * self.c - self.b * self.b
        }
    }

    pub fn trace(&self) -> f64 {
        if self.dim == 1 {
            self.a
        } else {
            self.a + self.c
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.a > 0.0 && self.det() > 0.0
    }

    pub fn inverse(&self) -> Option<Sym> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(if self.dim == 1 {
            Sym::one_d(1.0 / self.a)
        } else {
            Sym::two_d(self.c / d, -self.b / d, self.a / d)
        })
    }

    /// Frobenius product `sum_ij S_ij T_ij`.
    pub fn dot(&self, o: &Sym) -> f64 {
        if self.dim == 1 {
            self.a * o.a
        } else {
            self.a * o.a + 2.0 * self.b * o.b + self.c * o.c
        }
    }

    pub fn add(&self, o: &Sym) -> Sym {
        Sym {
            dim: self.dim,
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
        }
    }

    pub fn scale(&self, s: f64) -> Sym {
        Sym {
            dim: self.dim,
            a: self.a * s,
            b: self.b * s,
            c: self.c * s,
        }
    }

    /// `S T S` for symmetric `S`, `T`.
    pub fn sandwich(&self, t: &Sym) -> Sym {
        if self.dim == 1 {
            return Sym::one_d(self.a * t.a * self.a);
        }
        // (S T) then (S T) S
        let m11 = self.a * t.a + self.b * t.b;
        let m12 = self.a * t.b + self.b * t.c;
        let m21 = self.b * t.a + self.c * t.b;
        let m22 = self.b * t.b + self.c * t.c;
        Sym::two_d(
            m11 * self.a + m12 * self.b,
            m11 * self.b + m12 * self.c,
            m21 * self.b + m22 * self.c,
        )
    }
}

/// One term `coeff * x^i * y^j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub powers: [u32; 2],
    pub coeff: f64,
}

/// Polynomial in one or two variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub dim: usize,
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        p.add_term([0, 0], c);
        p
    }

    /// `c0 + sum c_i x_i`.
    pub fn affine(c0: f64, grad: &[f64]) -> Self {
        let mut p = Self::constant(grad.len(), c0);
        for (i, g) in grad.iter().enumerate() {
            let mut e = [0, 0];
            e[i] = 1;
            p.add_term(e, *g);
        }
        p
    }

    pub fn variable(dim: usize, i: usize) -> Self {
        let mut p = Self::zero(dim);
        let mut e = [0, 0];
        e[i] = 1;
        p.add_term(e, 1.0);
        p
    }

    pub fn add_term(&mut self, powers: [u32; 2], coeff: f64) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.powers == powers) {
            t.coeff += coeff;
        } else {
            self.terms.push(Monomial { powers, coeff });
        }
        self.terms.retain(|t| t.coeff != 0.0);
        self.terms.sort_by_key(|t| (t.powers[0] + t.powers[1], t.powers[1]));
    }

    pub fn add(&self, o: &Polynomial) -> Polynomial {
        let mut p = self.clone();
        for t in &o.terms {
            p.add_term(t.powers, t.coeff);
        }
        p
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial::zero(self.dim);
        for t in &self.terms {
            p.add_term(t.powers, t.coeff * s);
        }
        p
    }

    pub fn mul(&self, o: &Polynomial) -> Polynomial {
        let mut p = Polynomial::zero(self.dim.max(o.dim));
        for a in &self.terms {
            for b in &o.terms {
                p.add_term(
                    [a.powers[0] + b.powers[0], a.powers[1] + b.powers[1]],
                    a.coeff * b.coeff,
                );
            }
        }
        p
    }

    pub fn powi(&self, n: u32) -> Polynomial {
        let mut p = Polynomial::constant(self.dim, 1.0);
        for _ in 0..n {
            p = p.mul(self);
        }
        p
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|t| (t.powers[0] + t.powers[1]) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.dim);
        for t in &self.terms {
            let e = t.powers[var];
            if e > 0 {
                let mut powers = t.powers;
                powers[var] -= 1;
                p.add_term(powers, t.coeff * e as f64);
            }
        }
        p
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = if self.dim > 1 { x[1] } else { 0.0 };
        self.terms
            .iter()
            .map(|t| t.coeff * x[0].powi(t.powers[0] as i32) * y.powi(t.powers[1] as i32))
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.derivative(i).eval(x)).collect()
    }

    pub fn hessian(&self, x: &[f64]) -> Sym {
        let dx = self.derivative(0);
        if self.dim == 1 {
            return Sym::one_d(dx.derivative(0).eval(x));
        }
        let dy = self.derivative(1);
        Sym::two_d(
            dx.derivative(0).eval(x),
            dx.derivative(1).eval(x),
            dy.derivative(1).eval(x),
        )
    }

    /// Parses expressions such as `2 + 7*(x - 0.5)` or `4 - 3*x*y + y^2`.
    /// Variables are `x`, `y` (or `x1`, `x2`).
    pub fn parse(src: &str, dim: usize) -> Result<Polynomial> {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            dim,
        };
        let p = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Parse(format!("unexpected trailing input in {src:?}")));
        }
        Ok(p)
    }
}

impl ScalarField for Polynomial {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }

    fn polynomial_degree(&self) -> Option<usize> {
        Some(self.degree())
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let (sign, mag) = if t.coeff < 0.0 { ("-", -t.coeff) } else { ("+", t.coeff) };
            if i == 0 {
                if sign == "-" {
                    f.write_str("-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            write!(f, "{mag}")?;
            for (v, name) in [(0, "x"), (1, "y")] {
                match t.powers[v] {
                    0 => {}
                    1 => write!(f, "*{name}")?,
                    e => write!(f, "*{name}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Var(usize),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || chars[i] == '.'
                    || ((chars[i] == 'e' || chars[i] == 'E') && i + 1 < chars.len() && {
                        let n = chars[i + 1];
                        n.is_ascii_digit() || n == '-' || n == '+'
                    })
                    || ((chars[i] == '-' || chars[i] == '+')
                        && i > start
                        && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
            {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token::Num(
                s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))?,
            ));
        } else if c == 'x' || c == 'y' {
            if c == 'x' && i + 1 < chars.len() && (chars[i + 1] == '1' || chars[i + 1] == '2') {
                out.push(Token::Var(if chars[i + 1] == '1' { 0 } else { 1 }));
                i += 2;
            } else {
                out.push(Token::Var(if c == 'x' { 0 } else { 1 }));
                i += 1;
            }
        } else if "+-*^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let t = self.term()?;
            acc = if c == '+' { acc.add(&t) } else { acc.add(&t.scale(-1.0)) };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        while let Some(Token::Op('*')) = self.peek() {
            self.pos += 1;
            acc = acc.mul(&self.unary()?);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(self.unary()?.scale(-1.0))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Token::Num(n)) if n >= 0.0 && n.fract() == 0.0 && n <= 16.0 => {
                    self.pos += 1;
                    return Ok(base.powi(n as u32));
                }
                _ => return Err(Error::Parse("exponent must be a small non-negative integer".into())),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial> {
        match self.peek().cloned() {
            Some(Token::Num(n)) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.dim, n))
            }
            Some(Token::Var(v)) => {
                self.pos += 1;
                if v >= self.dim {
                    return Err(Error::Parse(format!(
                        "variable {} not available in dimension {}",
                        ["x", "y"][v],
                        self.dim
                    )));
                }
                Ok(Polynomial::variable(self.dim, v))
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Token::Op(')')) {
                    return Err(Error::Parse("missing ')'".into()));
                }
                self.pos += 1;
                Ok(e)
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_evaluate() {
        let p = Polynomial::parse("2 + 7*(x - 0.5)", 1).unwrap();
        assert_eq!(p.degree(), 1);
        assert!((p.eval(&[1.0]) - 5.5).abs() < 1e-15);
        let q = Polynomial::parse("4 - 3*x*y + y^2 - x1", 2).unwrap();
        assert!((q.eval(&[2.0, 3.0]) - (4.0 - 18.0 + 9.0 - 2.0)).abs() < 1e-14);
        let h = q.hessian(&[0.3, 0.1]);
        assert_eq!((h.a, h.b, h.c), (0.0, -3.0, 2.0));
        assert!(Polynomial::parse("2 + z", 1).is_err());
        assert!(Polynomial::parse("y", 1).is_err());
        assert!(Polynomial::parse("(x", 1).is_err());
        let e = Polynomial::parse("1.5e-3*x", 1).unwrap();
        assert!((e.eval(&[2.0]) - 3e-3).abs() < 1e-18);
    }

    #[test]
    fn display_round_trip() {
        let q = Polynomial::parse("4 - 3*x*y + 0.25*y^2", 2).unwrap();
        let back = Polynomial::parse(&q.to_string(), 2).unwrap();
        assert_eq!(q, back);
    }

    #[test]
    fn sym_inverse_and_sandwich() {
        let s = Sym::two_d(2.0, 1.0, 3.0);
        let i = s.inverse().unwrap();
        assert!((i.a - 0.6).abs() < 1e-15 && (i.b + 0.2).abs() < 1e-15);
        let t = Sym::two_d(1.0, 0.0, 0.0);
        let m = s.sandwich(&t);
        assert_eq!((m.a, m.b, m.c), (4.0, 2.0, 1.0));
    }
}
