//! Small closed expression grammar for fields and right-hand sides.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?          exponent must fold to a constant
//! atom  := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var   := 'x0' .. 'x7' | 'x' | 'y' | 'u' | 'b0'
//! func  := 'sin' | 'cos' | 'exp' | 'log' | 'sqrt'
//! ```
//!
//! Coordinates are in `[0, 1)`; `x` and `y` alias `x0` and `x1`. `u` is
//! the unknown in monotone right-hand sides and `b0` is `log f(lambda[chi])`.

use std::fmt;

use crate::error::{LabError, Result};
use crate::field::{TorusField, TorusGrid};
use crate::solver::MonotoneRhs;

const MAX_COORD: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X(usize),
    U,
    B0,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Call(Func, Box<Expr>),
}

/// Values of the free variables.
#[derive(Clone, Copy, Debug)]
pub struct Env<'a> {
    pub x: &'a [f64],
    pub u: f64,
    pub b0: f64,
}

fn err(msg: impl Into<String>) -> LabError {
    LabError::Expression(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    let b = src.as_bytes();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_digit() || b[i] == b'.') {
                i += 1;
            }
            if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
                let mut j = i + 1;
                if j < b.len() && (b[j] == b'+' || b[j] == b'-') {
                    j += 1;
                }
                if j < b.len() && (b[j] as char).is_ascii_digit() {
                    i = j;
                    while i < b.len() && (b[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s = &src[st..i];
            out.push(Tok::Num(s.parse().map_err(|_| err(format!("bad number '{s}'")))?));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < b.len() && ((b[i] as char).is_ascii_alphanumeric() || b[i] == b'_') {
                i += 1;
            }
            out.push(Tok::Ident(src[st..i].to_string()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(err(format!("unexpected character '{c}' at {i}")));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let e = self.unary()?;
            let k = e.constant().ok_or_else(|| err("exponent must be a constant"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned().ok_or_else(|| err("unexpected end of expression"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(err("missing ')'"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "log" => Some(Func::Log),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat('(') {
                        return Err(err(format!("'{name}' needs an argument in parentheses")));
                    }
                    let a = self.expr()?;
                    if !self.eat(')') {
                        return Err(err("missing ')'"));
                    }
                    return Ok(Expr::Call(f, Box::new(a)));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(std::f64::consts::PI)),
                    "x" => Ok(Expr::Var(Var::X(0))),
                    "y" => Ok(Expr::Var(Var::X(1))),
                    "u" => Ok(Expr::Var(Var::U)),
                    "b0" => Ok(Expr::Var(Var::B0)),
                    s if s.starts_with('x') => match s[1..].parse::<usize>() {
                        Ok(k) if k < MAX_COORD => Ok(Expr::Var(Var::X(k))),
                        _ => Err(err(format!("unknown variable '{s}'"))),
                    },
                    s => Err(err(format!("unknown identifier '{s}'"))),
                }
            }
            Tok::Op(c) => Err(err(format!("unexpected '{c}'"))),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Expr::parse(s)
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser { toks: lex(src)?, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(err(format!("trailing input after token {}", p.pos)));
        }
        Ok(e)
    }

    /// Value if the expression has no free variables.
    pub fn constant(&self) -> Option<f64> {
        if self.any_var(&|_| true) {
            return None;
        }
        Some(self.eval(&Env { x: &[], u: 0.0, b0: 0.0 }))
    }

    fn any_var(&self, pred: &dyn Fn(Var) -> bool) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(v) => pred(*v),
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Call(_, a) => a.any_var(pred),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.any_var(pred) || b.any_var(pred),
        }
    }

    pub fn uses_u(&self) -> bool {
        self.any_var(&|v| v == Var::U)
    }

    pub fn uses_b0(&self) -> bool {
        self.any_var(&|v| v == Var::B0)
    }

    /// Largest coordinate index referenced plus one.
    pub fn coord_span(&self) -> usize {
        (0..MAX_COORD).rev().find(|&k| self.any_var(&|v| v == Var::X(k))).map_or(0, |k| k + 1)
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::X(k)) => env.x.get(*k).copied().unwrap_or(f64::NAN),
            Expr::Var(Var::U) => env.u,
            Expr::Var(Var::B0) => env.b0,
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, k) => {
                let v = a.eval(env);
                if k.fract() == 0.0 && k.abs() <= 64.0 {
                    v.powi(*k as i32)
                } else {
                    v.powf(*k)
                }
            }
            Expr::Call(f, a) => {
                let v = a.eval(env);
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Log => v.ln(),
                    Func::Sqrt => v.sqrt(),
                }
            }
        }
    }

    /// Symbolic derivative with constant folding.
    pub fn diff(&self, var: Var) -> Expr {
        use Expr::*;
        match self {
            Const(_) => Const(0.0),
            Var(v) => Const(if *v == var { 1.0 } else { 0.0 }),
            Neg(a) => neg(a.diff(var)),
            Add(a, b) => add(a.diff(var), b.diff(var)),
            Sub(a, b) => sub(a.diff(var), b.diff(var)),
            Mul(a, b) => add(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var))),
            Div(a, b) => {
                let num = sub(mul(a.diff(var), (**b).clone()), mul((**a).clone(), b.diff(var)));
                div(num, pow((**b).clone(), 2.0))
            }
            Pow(a, k) => mul(mul(Const(*k), pow((**a).clone(), k - 1.0)), a.diff(var)),
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Sin => Call(Func::Cos, Box::new(inner)),
                    Func::Cos => neg(Call(Func::Sin, Box::new(inner))),
                    Func::Exp => Call(Func::Exp, Box::new(inner)),
                    Func::Log => div(Const(1.0), inner),
                    Func::Sqrt => div(Const(0.5), Call(Func::Sqrt, Box::new(inner))),
                };
                mul(outer, a.diff(var))
            }
        }
    }

    /// Value, gradient and Hessian in the coordinates `x0..x{d-1}` by
    /// forward-mode differentiation; `u` and `b0` are read as zero.
    pub fn jet(&self, x: &[f64]) -> Jet {
        let d = x.len().min(MAX_COORD);
        self.jet_in(x, d)
    }

    fn jet_in(&self, x: &[f64], d: usize) -> Jet {
        match self {
            Expr::Const(c) => Jet::constant(*c),
            Expr::Var(Var::X(k)) => {
                let mut j = Jet::constant(x.get(*k).copied().unwrap_or(f64::NAN));
                if *k < d {
                    j.g[*k] = 1.0;
                }
                j
            }
            Expr::Var(_) => Jet::constant(0.0),
            Expr::Neg(a) => a.jet_in(x, d).scale(-1.0),
            Expr::Add(a, b) => a.jet_in(x, d).combine(&b.jet_in(x, d), 1.0),
            Expr::Sub(a, b) => a.jet_in(x, d).combine(&b.jet_in(x, d), -1.0),
            Expr::Mul(a, b) => a.jet_in(x, d).mul(&b.jet_in(x, d), d),
            Expr::Div(a, b) => {
                let bj = b.jet_in(x, d);
                let r = 1.0 / bj.v;
                a.jet_in(x, d).mul(&bj.chain(r, -r * r, 2.0 * r * r * r, d), d)
            }
            Expr::Pow(a, k) => {
                let aj = a.jet_in(x, d);
                let p = |e: f64| if e == 0.0 { 1.0 } else { aj.v.powf(e) };
                aj.chain(p(*k), k * p(k - 1.0), k * (k - 1.0) * p(k - 2.0), d)
            }
            Expr::Call(f, a) => {
                let aj = a.jet_in(x, d);
                let v = aj.v;
                let (f0, f1, f2) = match f {
                    Func::Sin => (v.sin(), v.cos(), -v.sin()),
                    Func::Cos => (v.cos(), -v.sin(), -v.cos()),
                    Func::Exp => (v.exp(), v.exp(), v.exp()),
                    Func::Log => (v.ln(), 1.0 / v, -1.0 / (v * v)),
                    Func::Sqrt => (v.sqrt(), 0.5 / v.sqrt(), -0.25 / (v * v.sqrt())),
                };
                aj.chain(f0, f1, f2, d)
            }
        }
    }

    /// Samples a field; `u` and `b0` must be absent unless `b0` is given.
    pub fn field(&self, grid: TorusGrid, b0: Option<&TorusField>) -> Result<TorusField> {
        if self.uses_u() {
            return Err(err("field expression may not reference u"));
        }
        self.check_coords(grid)?;
        if self.uses_b0() && b0.is_none() {
            return Err(err("b0 is not available here"));
        }
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.len() {
            let x = grid.position(i);
            let b = b0.map_or(0.0, |f| f.values[i]);
            values.push(self.eval(&Env { x: &x, u: 0.0, b0: b }));
        }
        TorusField::new(grid, values).map_err(|_| err("expression produced a non-finite value"))
    }

    pub fn check_coords(&self, grid: TorusGrid) -> Result<()> {
        if self.coord_span() > grid.dims() {
            return Err(err(format!("expression uses x{} but the torus has {} real coordinates", self.coord_span() - 1, grid.dims())));
        }
        Ok(())
    }
}

const PACKED: usize = MAX_COORD * (MAX_COORD + 1) / 2;

/// Second-order jet: value, gradient and packed upper-triangular Hessian.
#[derive(Clone, Copy, Debug)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; MAX_COORD],
    h: [f64; PACKED],
}

fn packed(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    a * MAX_COORD - a * (a + 1) / 2 + b
}

impl Jet {
    fn constant(v: f64) -> Self {
        Self { v, g: [0.0; MAX_COORD], h: [0.0; PACKED] }
    }

    /// Second derivative along axes `a` and `b`.
    pub fn hessian(&self, a: usize, b: usize) -> f64 {
        self.h[packed(a, b)]
    }

    fn scale(mut self, s: f64) -> Self {
        self.v *= s;
        self.g.iter_mut().for_each(|x| *x *= s);
        self.h.iter_mut().for_each(|x| *x *= s);
        self
    }

    fn combine(mut self, o: &Jet, s: f64) -> Self {
        self.v += s * o.v;
        self.g.iter_mut().zip(&o.g).for_each(|(x, y)| *x += s * y);
        self.h.iter_mut().zip(&o.h).for_each(|(x, y)| *x += s * y);
        self
    }

    fn mul(&self, o: &Jet, d: usize) -> Self {
        let mut r = Jet::constant(self.v * o.v);
        for a in 0..d {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
            for b in a..d {
                let p = packed(a, b);
                r.h[p] = self.h[p] * o.v + self.g[a] * o.g[b] + self.g[b] * o.g[a] + self.v * o.h[p];
            }
        }
        r
    }

    /// `f(self)` given `f`, `f'` and `f''` at the value.
    fn chain(&self, f0: f64, f1: f64, f2: f64, d: usize) -> Self {
        let mut r = Jet::constant(f0);
        for a in 0..d {
            r.g[a] = f1 * self.g[a];
            for b in a..d {
                let p = packed(a, b);
                r.h[p] = f1 * self.h[p] + f2 * self.g[a] * self.g[b];
            }
        }
        r
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
        (Expr::Const(z), e) | (e, Expr::Const(z)) if z == 0.0 => e,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x - y),
        (e, Expr::Const(z)) if z == 0.0 => e,
        (Expr::Const(z), e) if z == 0.0 => neg(e),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
        (Expr::Const(z), _) | (_, Expr::Const(z)) if z == 0.0 => Expr::Const(0.0),
        (Expr::Const(o), e) | (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Const(z), _) if z == 0.0 => Expr::Const(0.0),
        (e, Expr::Const(o)) if o == 1.0 => e,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow(a: Expr, k: f64) -> Expr {
    if k == 0.0 {
        return Expr::Const(1.0);
    }
    if k == 1.0 {
        return a;
    }
    match a {
        Expr::Const(c) => Expr::Const(c.powf(k)),
        a => Expr::Pow(Box::new(a), k),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(Var::X(k)) => write!(f, "x{k}"),
            Expr::Var(Var::U) => write!(f, "u"),
            Expr::Var(Var::B0) => write!(f, "b0"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, k) => write!(f, "({a} ^ {k})"),
            Expr::Call(func, a) => {
                let name = match func {
                    Func::Sin => "sin",
                    Func::Cos => "cos",
                    Func::Exp => "exp",
                    Func::Log => "log",
                    Func::Sqrt => "sqrt",
                };
                write!(f, "{name}({a})")
            }
        }
    }
}

/// `G(x, u)` given by an expression, with its symbolic `u`-derivative.
pub struct ExprRhs {
    g: Expr,
    du: Expr,
    grid: TorusGrid,
    b0: Vec<f64>,
}

impl ExprRhs {
    pub fn new(g: Expr, grid: TorusGrid, b0: Option<&TorusField>) -> Result<Self> {
        g.check_coords(grid)?;
        if g.uses_b0() && b0.is_none() {
            return Err(err("b0 is not available here"));
        }
        let du = g.diff(Var::U);
        let b0 = b0.map_or_else(|| vec![0.0; grid.len()], |f| f.values.clone());
        Ok(Self { g, du, grid, b0 })
    }

    pub fn derivative(&self) -> &Expr {
        &self.du
    }
}

impl MonotoneRhs for ExprRhs {
    fn eval(&self, idx: usize, u: f64) -> (f64, f64) {
        let mut x = [0.0; MAX_COORD];
        let dims = self.grid.dims();
        let mut c = [0usize; MAX_COORD];
        self.grid.coords(idx, &mut c[..dims]);
        let h = self.grid.h();
        for a in 0..dims {
            x[a] = c[a] as f64 * h;
        }
        let env = Env { x: &x[..dims], u, b0: self.b0[idx] };
        (self.g.eval(&env), self.du.eval(&env))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64], u: f64) -> f64 {
        Expr::parse(s).unwrap().eval(&Env { x, u, b0: 0.0 })
    }

    #[test]
    fn precedence_and_functions() {
        assert_eq!(ev("1 + 2 * 3 ^ 2", &[], 0.0), 19.0);
        assert_eq!(ev("-2 ^ 2", &[], 0.0), -4.0);
        assert_eq!(ev("2 ^ -1", &[], 0.0), 0.5);
        assert!((ev("cos(2*pi*x)", &[0.5], 0.0) + 1.0).abs() < 1e-15);
        assert_eq!(ev("x1 * u - y", &[0.0, 0.25], 4.0), 0.75);
        assert_eq!(ev("1e-2 * 3", &[], 0.0), 0.03);
    }

    #[test]
    fn errors() {
        for bad in ["1 +", "foo(1)", "x9", "2 ^ x", "(1", "1 $ 2", "sin 1"] {
            assert!(matches!(Expr::parse(bad), Err(LabError::Expression(_))), "{bad}");
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        let e = Expr::parse("u + 0.3*u^3 + sin(2*pi*x0)*exp(u/2) + log(2 + u) + sqrt(3 + u*u) / (1 + u^2)").unwrap();
        let d = e.diff(Var::U);
        for &u in &[-0.7, 0.1, 1.3] {
            let x = [0.3];
            let h = 1e-5;
            let fd = (e.eval(&Env { x: &x, u: u + h, b0: 0.0 }) - e.eval(&Env { x: &x, u: u - h, b0: 0.0 })) / (2.0 * h);
            let an = d.eval(&Env { x: &x, u, b0: 0.0 });
            assert!((fd - an).abs() < 1e-8 * (1.0 + an.abs()), "{fd} {an}");
        }
    }

    #[test]
    fn jet_matches_symbolic_derivatives() {
        let e = Expr::parse("sin(x0*x1)^3 / (2 + cos(x2)) + sqrt(1 + x0^2)*log(3 + x1) - exp(-x2*x0)").unwrap();
        let x = [0.3, -0.7, 1.1];
        let env = Env { x: &x, u: 0.0, b0: 0.0 };
        let j = e.jet(&x);
        assert!((j.v - e.eval(&env)).abs() < 1e-13);
        for a in 0..3 {
            let da = e.diff(Var::X(a));
            assert!((j.g[a] - da.eval(&env)).abs() < 1e-12);
            for b in 0..3 {
                let dab = da.diff(Var::X(b)).eval(&env);
                assert!((j.hessian(a, b) - dab).abs() < 1e-11, "{a} {b}");
            }
        }
    }

    #[test]
    fn display_round_trips() {
        let e = Expr::parse("-(x0 - 2) * cos(pi * y) / 3 + u ^ 2").unwrap();
        let back = Expr::parse(&e.to_string()).unwrap();
        let env = Env { x: &[0.2, 0.7], u: 0.4, b0: 0.0 };
        assert_eq!(e.eval(&env), back.eval(&env));
    }
}
