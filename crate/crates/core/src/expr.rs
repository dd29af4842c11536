//! Arithmetic expressions over `x1`, `x2`, `r`, `phi` for problem configs.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (("+" | "-") term)*
//! term  := unary (("*" | "/") unary)*
//! unary := ("-" | "+") unary | power
//! power := atom ("^" unary)?
//! atom  := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Names: `x1`, `x2`, `r`, `phi`, `pi`. Functions: `sin`, `cos`, `tan`, `exp`,
//! `log`, `sqrt`, `abs`, `pow(a, b)`, `atan2(y, x)`.
//!
//! `phi` is the polar angle in `[-π/4, 7π/4)`. On domains that avoid the open
//! sector below the ray at `-π/4` this agrees with the `[0, 2π)` convention
//! while staying smooth across the positive `x1` axis.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown variable or constant `{0}`")]
    UnknownIdentifier(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("function `{name}` takes {expected} argument(s), got {got}")]
    WrongArity {
        name: String,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    X1,
    X2,
    R,
    Phi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Atan2,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Box<Node>),
    Call(Func, Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
}

/// A parsed expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Polar angle in `[-π/4, 7π/4)`.
pub fn polar_angle(x: Point) -> f64 {
    let phi = x[1].atan2(x[0]);
    if phi < -FRAC_PI_4 {
        phi + 2.0 * PI
    } else {
        phi
    }
}

struct Env {
    x: Point,
    r: f64,
    phi: f64,
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    pub fn constant(c: f64) -> Self {
        Self {
            root: Node::Const(c),
            source: format!("{c:?}"),
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        let env = Env {
            x,
            r: x[0].hypot(x[1]),
            phi: polar_angle(x),
        };
        eval(&self.root, &env)
    }

    /// The value if the expression does not depend on the point.
    pub fn as_constant(&self) -> Option<f64> {
        fn is_const(n: &Node) -> bool {
            match n {
                Node::Const(_) => true,
                Node::Var(_) => false,
                Node::Neg(a) | Node::Call(_, a) => is_const(a),
                Node::Bin(_, a, b) => is_const(a) && is_const(b),
            }
        }
        is_const(&self.root).then(|| self.eval([0.0, 0.0]))
    }
}

fn eval(n: &Node, env: &Env) -> f64 {
    match n {
        Node::Const(c) => *c,
        Node::Var(Var::X1) => env.x[0],
        Node::Var(Var::X2) => env.x[1],
        Node::Var(Var::R) => env.r,
        Node::Var(Var::Phi) => env.phi,
        Node::Neg(a) => -eval(a, env),
        Node::Call(f, a) => {
            let v = eval(a, env);
            match f {
                Func::Sin => v.sin(),
                Func::Cos => v.cos(),
                Func::Tan => v.tan(),
                Func::Exp => v.exp(),
                Func::Log => v.ln(),
                Func::Sqrt => v.sqrt(),
                Func::Abs => v.abs(),
            }
        }
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, env), eval(b, env));
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => a / b,
                BinOp::Pow => pow(a, b),
                BinOp::Atan2 => a.atan2(b),
            }
        }
    }
}

fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= 64.0 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.name(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.') {
            self.pos += 1;
        }
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
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse::<f64>().map(Node::Const).map_err(|_| ExprError::Parse {
            pos: start,
            msg: format!("invalid number `{text}`"),
        })
    }

    fn name(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
        if self.eat(b'(') {
            let mut args = vec![self.expr()?];
            while self.eat(b',') {
                args.push(self.expr()?);
            }
            if !self.eat(b')') {
                return Err(self.error("expected `)` after arguments"));
            }
            return call(name, args);
        }
        match name.as_str() {
            "x1" | "x" => Ok(Node::Var(Var::X1)),
            "x2" | "y" => Ok(Node::Var(Var::X2)),
            "r" => Ok(Node::Var(Var::R)),
            "phi" => Ok(Node::Var(Var::Phi)),
            "pi" => Ok(Node::Const(PI)),
            _ => Err(ExprError::UnknownIdentifier(name)),
        }
    }
}

fn call(name: String, mut args: Vec<Node>) -> Result<Node, ExprError> {
    let unary = match name.as_str() {
        "sin" => Some(Func::Sin),
        "cos" => Some(Func::Cos),
        "tan" => Some(Func::Tan),
        "exp" => Some(Func::Exp),
        "log" | "ln" => Some(Func::Log),
        "sqrt" => Some(Func::Sqrt),
        "abs" => Some(Func::Abs),
        _ => None,
    };
    let arity = |expected: usize, args: &Vec<Node>| {
        if args.len() == expected {
            Ok(())
        } else {
            Err(ExprError::WrongArity {
                name: name.clone(),
                expected,
                got: args.len(),
            })
        }
    };
    if let Some(f) = unary {
        arity(1, &args)?;
        return Ok(Node::Call(f, Box::new(args.pop().unwrap())));
    }
    let op = match name.as_str() {
        "pow" => BinOp::Pow,
        "atan2" => BinOp::Atan2,
        _ => return Err(ExprError::UnknownFunction(name)),
    };
    arity(2, &args)?;
    let b = args.pop().unwrap();
    let a = args.pop().unwrap();
    Ok(Node::Bin(op, Box::new(a), Box::new(b)))
}
