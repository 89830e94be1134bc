//! A small arithmetic expression language for parametrisations and scalar factors.
//!
//! Grammar: numbers, `pi`, named variables, `+ - * / ^`, parentheses and the functions
//! `sin cos exp sqrt`. The exponent of `^` must be a constant. Expressions can be
//! differentiated symbolically.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, f64),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
    Sqrt(Arc<Expr>),
}

use Expr::*;

fn c(v: f64) -> Expr {
    Const(v)
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x + y),
        (Const(x), _) if *x == 0.0 => b,
        (_, Const(y)) if *y == 0.0 => a,
        _ => Add(Arc::new(a), Arc::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x - y),
        (_, Const(y)) if *y == 0.0 => a,
        (Const(x), _) if *x == 0.0 => neg(b),
        _ => Sub(Arc::new(a), Arc::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x * y),
        (Const(x), _) | (_, Const(x)) if *x == 0.0 => c(0.0),
        (Const(x), _) if *x == 1.0 => b,
        (_, Const(y)) if *y == 1.0 => a,
        _ => Mul(Arc::new(a), Arc::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Const(x), Const(y)) => c(x / y),
        (Const(x), _) if *x == 0.0 => c(0.0),
        (_, Const(y)) if *y == 1.0 => a,
        _ => Div(Arc::new(a), Arc::new(b)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Const(x) => c(-x),
        Neg(inner) => (*inner).clone(),
        _ => Neg(Arc::new(a)),
    }
}

fn pow(a: Expr, p: f64) -> Expr {
    match (&a, p) {
        (_, 0.0) => c(1.0),
        (_, 1.0) => a,
        (Const(x), p) => c(x.powf(p)),
        _ => Pow(Arc::new(a), p),
    }
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Const(v) => *v,
            Var(i) => vars[*i],
            Neg(a) => -a.eval(vars),
            Add(a, b) => a.eval(vars) + b.eval(vars),
            Sub(a, b) => a.eval(vars) - b.eval(vars),
            Mul(a, b) => a.eval(vars) * b.eval(vars),
            Div(a, b) => a.eval(vars) / b.eval(vars),
            Pow(a, p) => {
                let x = a.eval(vars);
                if p.fract() == 0.0 && p.abs() < 64.0 {
                    x.powi(*p as i32)
                } else {
                    x.powf(*p)
                }
            }
            Sin(a) => a.eval(vars).sin(),
            Cos(a) => a.eval(vars).cos(),
            Exp(a) => a.eval(vars).exp(),
            Sqrt(a) => a.eval(vars).sqrt(),
        }
    }

    /// Symbolic partial derivative with respect to variable `v`.
    pub fn diff(&self, v: usize) -> Expr {
        match self {
            Const(_) => c(0.0),
            Var(i) => c(if *i == v { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(v)),
            Add(a, b) => add(a.diff(v), b.diff(v)),
            Sub(a, b) => sub(a.diff(v), b.diff(v)),
            Mul(a, b) => add(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))),
            Div(a, b) => div(sub(mul(a.diff(v), (**b).clone()), mul((**a).clone(), b.diff(v))), pow((**b).clone(), 2.0)),
            Pow(a, p) => mul(mul(c(*p), pow((**a).clone(), p - 1.0)), a.diff(v)),
            Sin(a) => mul(Cos(a.clone()), a.diff(v)),
            Cos(a) => neg(mul(Sin(a.clone()), a.diff(v))),
            Exp(a) => mul(Exp(a.clone()), a.diff(v)),
            Sqrt(a) => div(a.diff(v), mul(c(2.0), Sqrt(a.clone()))),
        }
    }

    pub fn is_const(&self) -> Option<f64> {
        match self {
            Const(v) => Some(*v),
            _ => None,
        }
    }

    /// Whether the expression depends on variable `v`.
    pub fn uses(&self, v: usize) -> bool {
        match self {
            Const(_) => false,
            Var(i) => *i == v,
            Neg(a) | Pow(a, _) | Sin(a) | Cos(a) | Exp(a) | Sqrt(a) => a.uses(v),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => a.uses(v) || b.uses(v),
        }
    }
}

/// Parses `src`, resolving identifiers through `names` (alias lists per variable index).
pub fn parse(src: &str, names: &[&[&str]]) -> Result<Expr> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0, names, src };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Variable names for m parameters: `t1..tm` (and `t` when m = 1).
pub fn param_names(m: usize) -> Vec<Vec<String>> {
    (0..m)
        .map(|i| {
            let mut v = vec![format!("t{}", i + 1)];
            if m == 1 {
                v.push("t".into());
            }
            v
        })
        .collect()
}

/// Variable names for n coordinates: `x1..xn`, plus `x y z` for n <= 3.
pub fn coord_names(n: usize) -> Vec<Vec<String>> {
    (0..n)
        .map(|i| {
            let mut v = vec![format!("x{}", i + 1)];
            if n <= 3 {
                v.push(["x", "y", "z"][i].into());
            }
            v
        })
        .collect()
}

/// Parses with owned alias lists as produced by `param_names` / `coord_names`.
pub fn parse_with(src: &str, names: &[Vec<String>]) -> Result<Expr> {
    let refs: Vec<Vec<&str>> = names.iter().map(|v| v.iter().map(|s| s.as_str()).collect()).collect();
    let slices: Vec<&[&str]> = refs.iter().map(|v| v.as_slice()).collect();
    parse(src, &slices)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let save = i;
                i += 1;
                if i < chars.len() && (chars[i] == '+' || chars[i] == '-') {
                    i += 1;
                }
                if i < chars.len() && chars[i].is_ascii_digit() {
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::Expr(format!("bad number '{s}' in '{src}'")))?;
            out.push(Tok::Num(v));
        } else if ch.is_ascii_alphabetic() || ch == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^(),".contains(ch) {
            out.push(Tok::Op(ch));
            i += 1;
        } else {
            return Err(Error::Expr(format!("unexpected character '{ch}' in '{src}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Tok>,
    pos: usize,
    names: &'a [&'a [&'a str]],
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, what: &str) -> Error {
        Error::Expr(format!("{what} at token {} in '{}'", self.pos, self.src))
    }

    fn peek_op(&self, op: char) -> bool {
        matches!(self.tokens.get(self.pos), Some(Tok::Op(c)) if *c == op)
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{op}'")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.peek_op('+') {
                self.pos += 1;
                lhs = add(lhs, self.term()?);
            } else if self.peek_op('-') {
                self.pos += 1;
                lhs = sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.peek_op('*') {
                self.pos += 1;
                lhs = mul(lhs, self.unary()?);
            } else if self.peek_op('/') {
                self.pos += 1;
                lhs = div(lhs, self.unary()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op('-') {
            self.pos += 1;
            return Ok(neg(self.unary()?));
        }
        if self.peek_op('+') {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op('^') {
            self.pos += 1;
            let e = self.unary()?;
            let p = e.is_const().ok_or_else(|| self.err("exponent must be constant"))?;
            return Ok(pow(base, p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.tokens.get(self.pos).cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(c(v))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func: Option<fn(Arc<Expr>) -> Expr> = match name.as_str() {
                    "sin" => Some(Sin),
                    "cos" => Some(Cos),
                    "exp" => Some(Exp),
                    "sqrt" => Some(Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    if let Some(v) = arg.is_const() {
                        return Ok(c(f(Arc::new(c(v))).eval(&[])));
                    }
                    return Ok(f(Arc::new(arg)));
                }
                if name == "pi" {
                    return Ok(c(std::f64::consts::PI));
                }
                for (i, aliases) in self.names.iter().enumerate() {
                    if aliases.contains(&name.as_str()) {
                        return Ok(Var(i));
                    }
                }
                Err(self.err(&format!("unknown identifier '{name}'")))
            }
            _ => Err(self.err("expected a value")),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => write!(f, "{v}"),
            Var(i) => write!(f, "v{}", i + 1),
            Neg(a) => write!(f, "-({a})"),
            Add(a, b) => write!(f, "({a} + {b})"),
            Sub(a, b) => write!(f, "({a} - {b})"),
            Mul(a, b) => write!(f, "({a} * {b})"),
            Div(a, b) => write!(f, "({a} / {b})"),
            Pow(a, p) => write!(f, "({a})^{p}"),
            Sin(a) => write!(f, "sin({a})"),
            Cos(a) => write!(f, "cos({a})"),
            Exp(a) => write!(f, "exp({a})"),
            Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse_with(s, &param_names(2)).unwrap()
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(p("1 + 2*3^2").eval(&[]), 19.0);
        assert_eq!(p("-2^2").eval(&[]), -4.0);
        assert_eq!(p("(1+2)*3").eval(&[]), 9.0);
        assert_eq!(p("2e-1 * 10").eval(&[]), 2.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let e = p("0.2*sin(2*pi*t1)*cos(t2) + t1^3/(1+t2^2) + sqrt(2+t1) * exp(-t2)");
        let x = [0.3, 0.7];
        for v in 0..2 {
            let d = e.diff(v).eval(&x);
            let h = 1e-6;
            let mut a = x;
            let mut b = x;
            a[v] += h;
            b[v] -= h;
            let fd = (e.eval(&a) - e.eval(&b)) / (2.0 * h);
            assert!((d - fd).abs() < 1e-7, "{d} {fd}");
        }
    }

    #[test]
    fn unknown_identifier_is_an_error() {
        assert!(parse_with("q + 1", &param_names(1)).is_err());
        assert!(parse_with("t1 +", &param_names(1)).is_err());
        assert!(parse_with("t1 ^ t1", &param_names(1)).is_err());
    }

    #[test]
    fn aliases_resolve() {
        let e = parse_with("x + 2*y", &coord_names(2)).unwrap();
        assert_eq!(e.eval(&[1.0, 3.0]), 7.0);
        assert!(e.uses(1) && !e.diff(0).uses(0));
    }
}
