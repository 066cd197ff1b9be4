//! Small arithmetic expression language for space-time coefficients.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          (right associative)
//! atom   := number | 'x' | 'y' | 'z' | 't' | 'pi' | 'e'
//!         | func '(' expr ')' | '(' expr ')'
//! func   := sin | cos | exp | tanh | log | sqrt
//! ```
//!
//! Expressions can be differentiated symbolically with respect to any of the
//! four variables; the result stays inside the same grammar, which is how
//! gradients, Laplacians and time derivatives of user coefficients are formed.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("expression error at byte {position}: {message} (in `{source_text}`)")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    Z,
    T,
}

impl Var {
    pub const SPATIAL: [Var; 3] = [Var::X, Var::Y, Var::Z];

    fn slot(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Z => 2,
            Var::T => 3,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::T => "t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "tanh" => Func::Tanh,
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
            Func::Tanh => "tanh",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Tanh => v.tanh(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, Expr),
    Func(Func, Expr),
}

/// Immutable expression tree with shared subtrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            text,
        };
        let expr = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(expr)
    }

    pub fn constant(value: f64) -> Expr {
        Expr(Arc::new(Node::Const(value)))
    }

    pub fn var(v: Var) -> Expr {
        Expr(Arc::new(Node::Var(v)))
    }

    pub fn x() -> Expr {
        Expr::var(Var::X)
    }

    pub fn y() -> Expr {
        Expr::var(Var::Y)
    }

    pub fn z() -> Expr {
        Expr::var(Var::Z)
    }

    pub fn t() -> Expr {
        Expr::var(Var::T)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    fn is_const(&self, value: f64) -> bool {
        self.as_constant() == Some(value)
    }

    /// Evaluates at `point = [x, y, z]` and time `t`.
    pub fn eval(&self, point: [f64; 3], t: f64) -> f64 {
        self.eval_slots(&[point[0], point[1], point[2], t])
    }

    fn eval_slots(&self, s: &[f64; 4]) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(v) => s[v.slot()],
            Node::Neg(a) => -a.eval_slots(s),
            Node::Add(a, b) => a.eval_slots(s) + b.eval_slots(s),
            Node::Sub(a, b) => a.eval_slots(s) - b.eval_slots(s),
            Node::Mul(a, b) => a.eval_slots(s) * b.eval_slots(s),
            Node::Div(a, b) => a.eval_slots(s) / b.eval_slots(s),
            Node::Pow(a, b) => {
                let base = a.eval_slots(s);
                match b.as_constant() {
                    Some(e) if e == e.trunc() && e.abs() <= 16.0 => base.powi(e as i32),
                    _ => base.powf(b.eval_slots(s)),
                }
            }
            Node::Func(f, a) => f.apply(a.eval_slots(s)),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match &*self.0 {
            Node::Const(_) => false,
            Node::Var(w) => *w == v,
            Node::Neg(a) | Node::Func(_, a) => a.depends_on(v),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    pub fn is_time_independent(&self) -> bool {
        !self.depends_on(Var::T)
    }

    /// Symbolic partial derivative.
    pub fn diff(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Expr::constant(0.0);
        }
        match &*self.0 {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(w) => Expr::constant(if *w == v { 1.0 } else { 0.0 }),
            Node::Neg(a) => -a.diff(v),
            Node::Add(a, b) => a.diff(v) + b.diff(v),
            Node::Sub(a, b) => a.diff(v) - b.diff(v),
            Node::Mul(a, b) => a.diff(v) * b.clone() + a.clone() * b.diff(v),
            Node::Div(a, b) => {
                (a.diff(v) * b.clone() - a.clone() * b.diff(v)) / b.clone().powf(2.0)
            }
            Node::Pow(a, b) => {
                if !b.depends_on(v) {
                    b.clone() * a.clone().pow(b.clone() - Expr::constant(1.0)) * a.diff(v)
                } else {
                    self.clone()
                        * (b.diff(v) * a.clone().apply(Func::Log)
                            + b.clone() * a.diff(v) / a.clone())
                }
            }
            Node::Func(f, a) => {
                let inner = a.diff(v);
                let outer = match f {
                    Func::Sin => a.clone().apply(Func::Cos),
                    Func::Cos => -a.clone().apply(Func::Sin),
                    Func::Exp => a.clone().apply(Func::Exp),
                    Func::Tanh => {
                        Expr::constant(1.0) - a.clone().apply(Func::Tanh).powf(2.0)
                    }
                    Func::Log => Expr::constant(1.0) / a.clone(),
                    Func::Sqrt => {
                        Expr::constant(0.5) / a.clone().apply(Func::Sqrt)
                    }
                };
                outer * inner
            }
        }
    }

    /// Spatial Laplacian over the first `dim` coordinates.
    pub fn laplacian(&self, dim: usize) -> Expr {
        Var::SPATIAL[..dim]
            .iter()
            .map(|&v| self.diff(v).diff(v))
            .fold(Expr::constant(0.0), |acc, e| acc + e)
    }

    pub fn apply(self, f: Func) -> Expr {
        if let Some(c) = self.as_constant() {
            return Expr::constant(f.apply(c));
        }
        Expr(Arc::new(Node::Func(f, self)))
    }

    pub fn sin(self) -> Expr {
        self.apply(Func::Sin)
    }

    pub fn cos(self) -> Expr {
        self.apply(Func::Cos)
    }

    pub fn exp(self) -> Expr {
        self.apply(Func::Exp)
    }

    pub fn pow(self, exponent: Expr) -> Expr {
        if exponent.is_const(1.0) {
            return self;
        }
        if exponent.is_const(0.0) {
            return Expr::constant(1.0);
        }
        if let (Some(a), Some(b)) = (self.as_constant(), exponent.as_constant()) {
            return Expr::constant(a.powf(b));
        }
        Expr(Arc::new(Node::Pow(self, exponent)))
    }

    pub fn powf(self, exponent: f64) -> Expr {
        self.pow(Expr::constant(exponent))
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_constant(), rhs.as_constant()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(0.0), _) => rhs,
            (_, Some(0.0)) => self,
            _ => Expr(Arc::new(Node::Add(self, rhs))),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_constant(), rhs.as_constant()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(0.0), _) => -rhs,
            (_, Some(0.0)) => self,
            _ => Expr(Arc::new(Node::Sub(self, rhs))),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_constant(), rhs.as_constant()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::constant(0.0),
            (Some(1.0), _) => rhs,
            (_, Some(1.0)) => self,
            _ => Expr(Arc::new(Node::Mul(self, rhs))),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match (self.as_constant(), rhs.as_constant()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(0.0), _) => Expr::constant(0.0),
            (_, Some(1.0)) => self,
            _ => Expr(Arc::new(Node::Div(self, rhs))),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Neg(self))),
        }
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Expr {
        Expr::constant(value)
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesised, re-parseable rendering.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{:?}", c)
                }
            }
            Node::Var(v) => f.write_str(v.name()),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
            Node::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = text.as_bytes();
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
            let literal = &text[start..i];
            let value = literal.parse::<f64>().map_err(|_| ParseError {
                position: start,
                message: format!("bad number `{literal}`"),
                source_text: text.to_string(),
            })?;
            out.push((start, Token::Num(value)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Token::Ident(text[start..i].to_string())));
        } else if "+-*/^".contains(c) {
            out.push((i, Token::Op(c)));
            i += 1;
        } else if c == '(' {
            out.push((i, Token::LParen));
            i += 1;
        } else if c == ')' {
            out.push((i, Token::RParen));
            i += 1;
        } else {
            return Err(ParseError {
                position: i,
                message: format!("unexpected character `{c}`"),
                source_text: text.to_string(),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    text: &'a str,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        let position = self
            .tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.text.len());
        ParseError {
            position,
            message: message.to_string(),
            source_text: self.text.to_string(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' { lhs + rhs } else { lhs - rhs };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek() {
            let op = *op;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' { lhs * rhs } else { lhs / rhs };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(base.pow(exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let token = self.peek().cloned();
        match token {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::constant(v))
            }
            Some(Token::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match name.as_str() {
                    "x" => Ok(Expr::x()),
                    "y" => Ok(Expr::y()),
                    "z" => Ok(Expr::z()),
                    "t" => Ok(Expr::t()),
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    "e" => Ok(Expr::constant(std::f64::consts::E)),
                    other => {
                        let func = Func::from_name(other).ok_or_else(|| {
                            self.pos -= 1;
                            self.error(&format!("unknown identifier `{other}`"))
                        })?;
                        if self.peek() != Some(&Token::LParen) {
                            return Err(self.error("expected `(` after function name"));
                        }
                        self.pos += 1;
                        let arg = self.expr()?;
                        self.expect_rparen()?;
                        Ok(arg.apply(func))
                    }
                }
            }
            _ => Err(self.error("expected a number, variable, function or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Token::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error("expected `)`"))
        }
    }
}
