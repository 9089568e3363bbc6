//! Arithmetic expressions over named coordinates, with symbolic differentiation.
//!
//! Grammar (lowest to highest precedence): `+ -`, `* /`, unary `-`, right-associative
//! `^`, then numbers, names, calls `sin cos exp log sqrt` and parentheses.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Sub(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    Pow(Arc<Expr>, Arc<Expr>),
    Call(Func, Arc<Expr>),
}

/// A parse failure at a byte offset into the expression text.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.offset)
    }
}

impl std::error::Error for ParseError {}

/// Names visible to an expression: coordinate variables and numeric constants.
#[derive(Debug, Clone, Default)]
pub struct Scope {
    vars: Vec<String>,
    constants: BTreeMap<String, f64>,
}

impl Scope {
    pub fn new(vars: &[String]) -> Self {
        let mut constants = BTreeMap::new();
        constants.insert("pi".to_string(), std::f64::consts::PI);
        Self {
            vars: vars.to_vec(),
            constants,
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    fn lookup(&self, name: &str) -> Option<Expr> {
        if let Some(i) = self.vars.iter().position(|v| v == name) {
            return Some(Expr::Var(i));
        }
        self.constants.get(name).map(|c| Expr::Num(*c))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
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
            let v: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^(),".contains(c) {
            out.push((Tok::Op(c), i));
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or(c);
            return Err(ParseError {
                offset: i,
                message: format!("unexpected character `{ch}`"),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    scope: &'a Scope,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            let found = describe(self.peek());
            self.err(format!("expected `{c}`, found {found}"))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    lhs = Expr::Add(lhs.into(), self.term()?.into());
                }
                Tok::Op('-') => {
                    self.bump();
                    lhs = Expr::Sub(lhs.into(), self.term()?.into());
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    lhs = Expr::Mul(lhs.into(), self.unary()?.into());
                }
                Tok::Op('/') => {
                    self.bump();
                    lhs = Expr::Div(lhs.into(), self.unary()?.into());
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(self.unary()?.into()))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::Pow(base.into(), exp.into()));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let at = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    let Some(f) = Func::from_name(&name) else {
                        return Err(ParseError {
                            offset: at,
                            message: format!("unknown function `{name}`"),
                        });
                    };
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Call(f, arg.into()));
                }
                if Func::from_name(&name).is_some() {
                    return Err(ParseError {
                        offset: at,
                        message: format!("function `{name}` needs an argument in parentheses"),
                    });
                }
                self.scope.lookup(&name).ok_or_else(|| ParseError {
                    offset: at,
                    message: format!("unknown variable `{name}`"),
                })
            }
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            t => Err(ParseError {
                offset: at,
                message: format!("expected a value, found {}", describe(&t)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".to_string(),
    }
}

/// Parses one scalar expression.
pub fn parse(src: &str, scope: &Scope) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
        scope,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        let found = describe(p.peek());
        return p.err(format!("unexpected {found} after expression"));
    }
    Ok(simplify(&e))
}

/// Parses either a single expression or a parenthesised tuple `(a, b, ...)`; the
/// result always has at least one component.
pub fn parse_tuple(src: &str, scope: &Scope) -> Result<Vec<Expr>, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
        scope,
    };
    let tuple = *p.peek() == Tok::Op('(') && has_top_level_comma(&p.toks);
    if !tuple {
        return parse(src, scope).map(|e| vec![e]);
    }
    p.bump();
    let mut items = vec![simplify(&p.expr()?)];
    while *p.peek() == Tok::Op(',') {
        p.bump();
        items.push(simplify(&p.expr()?));
    }
    p.expect(')')?;
    if *p.peek() != Tok::End {
        let found = describe(p.peek());
        return p.err(format!("unexpected {found} after tuple"));
    }
    Ok(items)
}

fn has_top_level_comma(toks: &[(Tok, usize)]) -> bool {
    let mut depth = 0i32;
    for (t, _) in toks {
        match t {
            Tok::Op('(') => depth += 1,
            Tok::Op(')') => depth -= 1,
            Tok::Op(',') if depth == 1 => return true,
            _ => {}
        }
    }
    false
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match **b {
                    Expr::Num(c) if c.fract() == 0.0 && c.abs() <= 64.0 => base.powi(c as i32),
                    Expr::Num(c) if c == 0.5 => base.sqrt(),
                    _ => base.powf(b.eval(x)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(x)),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var(_) => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.is_constant(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.is_constant() && b.is_constant()
            }
        }
    }

    /// Whether any variable with index in `range` occurs.
    pub fn uses_vars(&self, range: std::ops::Range<usize>) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => range.contains(i),
            Expr::Neg(a) | Expr::Call(_, a) => a.uses_vars(range),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_vars(range.clone()) || b.uses_vars(range)
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `v`.
    pub fn diff(&self, v: usize) -> Expr {
        simplify(&self.diff_raw(v))
    }

    fn diff_raw(&self, v: usize) -> Expr {
        use Expr::*;
        let d = |e: &Arc<Expr>| Arc::new(e.diff_raw(v));
        match self {
            Num(_) => Num(0.0),
            Var(i) => Num(if *i == v { 1.0 } else { 0.0 }),
            Neg(a) => Neg(d(a)),
            Add(a, b) => Add(d(a), d(b)),
            Sub(a, b) => Sub(d(a), d(b)),
            Mul(a, b) => Add(Mul(d(a), b.clone()).into(), Mul(a.clone(), d(b)).into()),
            Div(a, b) => Div(
                Sub(Mul(d(a), b.clone()).into(), Mul(a.clone(), d(b)).into()).into(),
                Pow(b.clone(), Num(2.0).into()).into(),
            ),
            Pow(a, b) if b.is_constant() => {
                let c = b.eval(&[]);
                Mul(
                    Mul(Num(c).into(), Pow(a.clone(), Num(c - 1.0).into()).into()).into(),
                    d(a),
                )
            }
            Pow(a, b) => Mul(
                self.clone().into(),
                Add(
                    Mul(d(b), Call(Func::Log, a.clone()).into()).into(),
                    Div(Mul(b.clone(), d(a)).into(), a.clone()).into(),
                )
                .into(),
            ),
            Call(f, a) => {
                let outer = match f {
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => Neg(Call(Func::Sin, a.clone()).into()),
                    Func::Exp => self.clone(),
                    Func::Log => Div(Num(1.0).into(), a.clone()),
                    Func::Sqrt => Div(Num(0.5).into(), self.clone().into()),
                };
                Mul(outer.into(), d(a))
            }
        }
    }
}

/// Constant folding and removal of additive/multiplicative identities.
pub fn simplify(e: &Expr) -> Expr {
    use Expr::*;
    match e {
        Num(_) | Var(_) => e.clone(),
        Neg(a) => match simplify(a) {
            Num(v) => Num(-v),
            Neg(b) => (*b).clone(),
            s => Neg(s.into()),
        },
        Add(a, b) => match (simplify(a), simplify(b)) {
            (Num(x), Num(y)) => Num(x + y),
            (Num(z), s) | (s, Num(z)) if z == 0.0 => s,
            (s, Neg(t)) => Sub(s.into(), t),
            (s, t) => Add(s.into(), t.into()),
        },
        Sub(a, b) => match (simplify(a), simplify(b)) {
            (Num(x), Num(y)) => Num(x - y),
            (s, Num(z)) if z == 0.0 => s,
            (Num(z), s) if z == 0.0 => simplify(&Neg(s.into())),
            (s, t) => Sub(s.into(), t.into()),
        },
        Mul(a, b) => match (simplify(a), simplify(b)) {
            (Num(x), Num(y)) => Num(x * y),
            (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
            (Num(o), s) | (s, Num(o)) if o == 1.0 => s,
            (Num(m), s) | (s, Num(m)) if m == -1.0 => simplify(&Neg(s.into())),
            (s, t) => Mul(s.into(), t.into()),
        },
        Div(a, b) => match (simplify(a), simplify(b)) {
            (Num(x), Num(y)) => Num(x / y),
            (Num(z), _) if z == 0.0 => Num(0.0),
            (s, Num(o)) if o == 1.0 => s,
            (s, t) => Div(s.into(), t.into()),
        },
        Pow(a, b) => match (simplify(a), simplify(b)) {
            (Num(x), Num(y)) => Num(x.powf(y)),
            (_, Num(z)) if z == 0.0 => Num(1.0),
            (s, Num(o)) if o == 1.0 => s,
            (s, t) => Pow(s.into(), t.into()),
        },
        Call(f, a) => match simplify(a) {
            Num(v) => Num(f.apply(v)),
            s => Call(*f, s.into()),
        },
    }
}

/// Renders with explicit parentheses; used in diagnostics.
pub struct Display<'a> {
    pub expr: &'a Expr,
    pub vars: &'a [String],
}

impl<'a> fmt::Display for Display<'a> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sub = |e: &'a Expr| Display { expr: e, vars: self.vars };
        match self.expr {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "{}", self.vars.get(*i).map(String::as_str).unwrap_or("?")),
            Expr::Neg(a) => write!(f, "(-{})", sub(a)),
            Expr::Add(a, b) => write!(f, "({} + {})", sub(a), sub(b)),
            Expr::Sub(a, b) => write!(f, "({} - {})", sub(a), sub(b)),
            Expr::Mul(a, b) => write!(f, "({} * {})", sub(a), sub(b)),
            Expr::Div(a, b) => write!(f, "({} / {})", sub(a), sub(b)),
            Expr::Pow(a, b) => write!(f, "({} ^ {})", sub(a), sub(b)),
            Expr::Call(g, a) => write!(f, "{}({})", g.name(), sub(a)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> Scope {
        Scope::new(&["x".to_string(), "y".to_string()])
    }

    #[test]
    fn precedence() {
        let s = scope();
        let e = |t: &str| parse(t, &s).unwrap().eval(&[2.0, 3.0]);
        assert_eq!(e("1 + 2 * x"), 5.0);
        assert_eq!(e("-x^2"), -4.0);
        assert_eq!(e("2^3^2"), 512.0);
        assert_eq!(e("x / y / 2"), 1.0 / 3.0);
        assert_eq!(e("2^-1"), 0.5);
        assert_eq!(e("(x + y) * 2"), 10.0);
        assert_eq!(e("1.5e1 + 2E-1"), 15.2);
        assert!((e("sqrt(x) * exp(0) + log(1) + sin(pi)") - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tuples() {
        let s = scope();
        let v = parse_tuple("(-y, x)", &s).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].eval(&[1.0, 2.0]), -2.0);
        assert_eq!(parse_tuple("(x + y) * 2", &s).unwrap().len(), 1);
        assert_eq!(parse_tuple("((x), (y), 3)", &s).unwrap().len(), 3);
    }

    #[test]
    fn errors_carry_offsets() {
        let s = scope();
        let e = parse("x + tan(y)", &s).unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.message.contains("unknown function `tan`"));
        let e = parse("x + z", &s).unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.message.contains("unknown variable"));
        assert_eq!(parse("(x + 1", &s).unwrap_err().offset, 6);
        assert_eq!(parse("x $ 1", &s).unwrap_err().offset, 2);
        assert!(parse("x y", &s).is_err());
        assert!(parse("sin", &s).is_err());
    }

    #[test]
    fn derivatives() {
        let s = scope();
        let p = [0.7, -1.3];
        let cases = [
            ("x^2 * y", [2.0 * 0.7 * -1.3, 0.49]),
            ("sin(x * y)", [(-0.91f64).cos() * -1.3, (-0.91f64).cos() * 0.7]),
            ("exp(2 * x) / y", [2.0 * 1.4f64.exp() / -1.3, -(1.4f64.exp()) / 1.69]),
            ("sqrt(x + 1)", [0.5 / 1.7f64.sqrt(), 0.0]),
            ("log(x)", [1.0 / 0.7, 0.0]),
            ("x^y", [-1.3 * 0.7f64.powf(-2.3), 0.7f64.powf(-1.3) * 0.7f64.ln()]),
            ("cos(y)", [0.0, 1.3f64.sin()]),
        ];
        for (src, want) in cases {
            let e = parse(src, &s).unwrap();
            for (v, w) in want.iter().enumerate() {
                let got = e.diff(v).eval(&p);
                assert!((got - w).abs() < 1e-12, "{src} d{v}: {got} vs {w}");
            }
        }
        assert_eq!(parse("3 * y", &s).unwrap().diff(0), Expr::Num(0.0));
    }

    #[test]
    fn named_constants() {
        let s = scope().with_constant("k", 2.0);
        assert_eq!(parse("k * x", &s).unwrap().eval(&[3.0, 0.0]), 6.0);
        assert!(parse("k * x", &s).unwrap().diff(0).is_constant());
    }
}
