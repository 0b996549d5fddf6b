//! Expression trees for defining functions and branch guards.
//!
//! Grammar:
//!
//! ```text
//! expr  := term (('+'|'-') term)*
//! term  := unary (('*'|'/') unary)*
//! unary := ('-'|'+') unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | func '(' expr ')' | '(' expr ')'
//! guard := cmp ('&&' cmp)*
//! cmp   := expr ('<'|'<='|'>'|'>=') expr
//! ```
//!
//! Variables are `x`, `y`, `z` (aliases of `x1`, `x2`, `x3`) or `xN`. The
//! constants `pi` and `e` are predefined.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            "sqrt" => Func::Sqrt,
            "atan" => Func::Atan,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub lhs: Expr,
    pub op: CmpOp,
    pub rhs: Expr,
}

/// Conjunction of comparisons.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub clauses: Vec<Comparison>,
}

impl Guard {
    pub fn holds(&self, x: &[f64]) -> Result<bool> {
        for c in &self.clauses {
            let alg = F64Algebra { point: x };
            let l = eval(&c.lhs, &alg)?;
            let r = eval(&c.rhs, &alg)?;
            let ok = match c.op {
                CmpOp::Lt => l < r,
                CmpOp::Le => l <= r,
                CmpOp::Gt => l > r,
                CmpOp::Ge => l >= r,
            };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// The arithmetic an expression is evaluated in (plain reals or Taylor jets).
pub(crate) trait Algebra {
    type T: Clone;
    fn constant(&self, c: f64) -> Self::T;
    fn var(&self, i: usize) -> Result<Self::T>;
    fn neg(&self, a: &Self::T) -> Self::T;
    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn div(&self, a: &Self::T, b: &Self::T) -> Result<Self::T>;
    fn powi(&self, a: &Self::T, n: i32) -> Result<Self::T>;
    fn powf(&self, a: &Self::T, p: f64) -> Result<Self::T>;
    fn call(&self, f: Func, a: &Self::T) -> Result<Self::T>;
}

/// Smallest denominator magnitude accepted by division.
pub const MIN_DENOMINATOR: f64 = 1e-300;

pub(crate) struct F64Algebra<'a> {
    pub point: &'a [f64],
}

impl Algebra for F64Algebra<'_> {
    type T = f64;

    fn constant(&self, c: f64) -> f64 {
        c
    }

    fn var(&self, i: usize) -> Result<f64> {
        self.point
            .get(i)
            .copied()
            .ok_or(Error::DimensionMismatch {
                expected: i + 1,
                got: self.point.len(),
            })
    }

    fn neg(&self, a: &f64) -> f64 {
        -a
    }

    fn add(&self, a: &f64, b: &f64) -> f64 {
        a + b
    }

    fn sub(&self, a: &f64, b: &f64) -> f64 {
        a - b
    }

    fn mul(&self, a: &f64, b: &f64) -> f64 {
        a * b
    }

    fn div(&self, a: &f64, b: &f64) -> Result<f64> {
        if b.abs() < MIN_DENOMINATOR {
            return Err(Error::Singular(format!("division by {b:e}")));
        }
        Ok(a / b)
    }

    fn powi(&self, a: &f64, n: i32) -> Result<f64> {
        if n < 0 && a.abs() < MIN_DENOMINATOR {
            return Err(Error::Singular(format!("{a:e} raised to {n}")));
        }
        Ok(a.powi(n))
    }

    fn powf(&self, a: &f64, p: f64) -> Result<f64> {
        if *a <= 0.0 {
            return Err(Error::Singular(format!(
                "non-integer power {p} of non-positive base {a:e}"
            )));
        }
        Ok(a.powf(p))
    }

    fn call(&self, f: Func, a: &f64) -> Result<f64> {
        let a = *a;
        Ok(match f {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => {
                if a.cos().abs() < MIN_DENOMINATOR {
                    return Err(Error::Singular("tan at a pole".into()));
                }
                a.tan()
            }
            Func::Exp => a.exp(),
            Func::Log => {
                if a <= 0.0 {
                    return Err(Error::Singular(format!("log of {a:e}")));
                }
                a.ln()
            }
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(Error::Singular(format!("sqrt of {a:e}")));
                }
                a.sqrt()
            }
            Func::Atan => a.atan(),
            Func::Abs => a.abs(),
        })
    }
}

pub(crate) fn eval<A: Algebra>(e: &Expr, alg: &A) -> Result<A::T> {
    Ok(match e {
        Expr::Var(i) => alg.var(*i)?,
        Expr::Const(c) => alg.constant(*c),
        Expr::Neg(a) => alg.neg(&eval(a, alg)?),
        Expr::Add(a, b) => alg.add(&eval(a, alg)?, &eval(b, alg)?),
        Expr::Sub(a, b) => alg.sub(&eval(a, alg)?, &eval(b, alg)?),
        Expr::Mul(a, b) => alg.mul(&eval(a, alg)?, &eval(b, alg)?),
        Expr::Div(a, b) => alg.div(&eval(a, alg)?, &eval(b, alg)?)?,
        Expr::Pow(base, exponent) => {
            let b = eval(base, alg)?;
            match exponent.as_ref() {
                Expr::Const(p) if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 => {
                    alg.powi(&b, *p as i32)?
                }
                Expr::Const(p) => alg.powf(&b, *p)?,
                other => {
                    // general case b^g = exp(g log b)
                    let g = eval(other, alg)?;
                    let lb = alg.call(Func::Log, &b)?;
                    alg.call(Func::Exp, &alg.mul(&g, &lb))?
                }
            }
        }
        Expr::Call(f, a) => alg.call(*f, &eval(a, alg)?)?,
    })
}

impl Expr {
    /// Evaluates the expression at a point.
    pub fn eval_at(&self, x: &[f64]) -> Result<f64> {
        eval(self, &F64Algebra { point: x })
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) => None,
            Expr::Neg(a) | Expr::Call(_, a) => a.max_var(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => match (a.max_var(), b.max_var()) {
                (Some(p), Some(q)) => Some(p.max(q)),
                (p, q) => p.or(q),
            },
        }
    }

    fn fold(self) -> Expr {
        let folded = match self {
            Expr::Neg(a) => Expr::Neg(Box::new(a.fold())),
            Expr::Add(a, b) => Expr::Add(Box::new(a.fold()), Box::new(b.fold())),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.fold()), Box::new(b.fold())),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.fold()), Box::new(b.fold())),
            Expr::Div(a, b) => Expr::Div(Box::new(a.fold()), Box::new(b.fold())),
            Expr::Pow(a, b) => Expr::Pow(Box::new(a.fold()), Box::new(b.fold())),
            Expr::Call(f, a) => Expr::Call(f, Box::new(a.fold())),
            leaf => return leaf,
        };
        if folded.max_var().is_none() {
            if let Ok(v) = folded.eval_at(&[]) {
                if v.is_finite() {
                    return Expr::Const(v);
                }
            }
        }
        folded
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(&'static str),
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    const SYMBOLS: [&str; 13] = [
        "&&", "<=", ">=", "<", ">", "+", "-", "*", "/", "^", "(", ")", ",",
    ];
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut col) = (1usize, 1usize);
    let mut i = 0;
    'outer: while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        let (tl, tc) = (line, col);
        if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| Error::Syntax {
                line: tl,
                column: tc,
                message: format!("malformed number `{s}`"),
            })?;
            col += i - start;
            out.push(Token {
                tok: Tok::Num(v),
                line: tl,
                column: tc,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            col += i - start;
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                line: tl,
                column: tc,
            });
            continue;
        }
        for sym in SYMBOLS {
            let n = sym.len();
            if i + n <= chars.len() && chars[i..i + n].iter().copied().eq(sym.chars()) {
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line: tl,
                    column: tc,
                });
                i += n;
                col += n;
                continue 'outer;
            }
        }
        return Err(Error::Syntax {
            line: tl,
            column: tc,
            message: format!("unexpected character `{c}`"),
        });
    }
    out.push(Token {
        tok: Tok::End,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn at_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(t) if *t == s)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        let t = self.peek();
        Err(Error::Syntax {
            line: t.line,
            column: t.column,
            message: message.into(),
        })
    }

    fn expect(&mut self, s: &str) -> Result<()> {
        if self.at_sym(s) {
            self.bump();
            Ok(())
        } else {
            self.error(format!("expected `{s}`"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.at_sym("+") {
                self.bump();
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.at_sym("-") {
                self.bump();
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.at_sym("*") {
                self.bump();
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.at_sym("/") {
                self.bump();
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.at_sym("-") {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.at_sym("+") {
            self.bump();
            return self.unary();
        }
        let base = self.atom()?;
        if self.at_sym("^") {
            self.bump();
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(f) = Func::from_name(&name) {
                    if !self.at_sym("(") {
                        return self.error(format!("function `{name}` requires an argument"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    self.expect(")")?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.identifier(&name, t.line, t.column)
            }
            Tok::End => self.error("unexpected end of input"),
            Tok::Sym(s) => self.error(format!("unexpected `{s}`")),
        }
    }

    fn identifier(&self, name: &str, line: usize, column: usize) -> Result<Expr> {
        let index = match name {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "e" => return Ok(Expr::Const(std::f64::consts::E)),
            "x" => 1,
            "y" => 2,
            "z" => 3,
            _ => match name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                Some(k) if k >= 1 && !name[1..].starts_with('0') => k,
                _ => {
                    return Err(Error::UnknownIdentifier {
                        name: name.to_string(),
                        line,
                        column,
                    })
                }
            },
        };
        if index > self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: index,
            });
        }
        Ok(Expr::Var(index - 1))
    }

    fn comparison(&mut self) -> Result<Comparison> {
        let lhs = self.expr()?;
        let op = match &self.peek().tok {
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            _ => return self.error("expected a comparison operator"),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Comparison {
            lhs: lhs.fold(),
            op,
            rhs: rhs.fold(),
        })
    }

    fn finish(&self) -> Result<()> {
        if matches!(self.peek().tok, Tok::End) {
            Ok(())
        } else {
            self.error("trailing input")
        }
    }
}

/// Parses an arithmetic expression over `dim` variables.
pub fn parse_expr(text: &str, dim: usize) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim,
    };
    let e = p.expr()?;
    p.finish()?;
    Ok(e.fold())
}

/// Parses a guard: comparisons joined by `&&`.
pub fn parse_guard(text: &str, dim: usize) -> Result<Guard> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
        dim,
    };
    let mut clauses = vec![p.comparison()?];
    while p.at_sym("&&") {
        p.bump();
        clauses.push(p.comparison()?);
    }
    p.finish()?;
    Ok(Guard { clauses })
}
