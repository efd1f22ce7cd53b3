//! A small arithmetic language for user-defined coefficients.
//!
//! Operators `+ - * / ^` and `∧` (also written `/\`, meaning min), functions
//! `exp log sin cos sqrt abs min1 min max`, variables `t`, `x` (= `x1`),
//! `x1`…`x9`, and `int(e)`, the integral of `e` against the frozen measure,
//! inside which `y` (= `y1`)…`y9` name the integration variable.

use crate::error::{Error, Result};
use crate::measures::SubProbMeasure;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min1,
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Min,
}

#[derive(Clone, Debug)]
enum Node {
    Num(f64),
    T,
    X(usize),
    Y(usize),
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    /// Index into the expression's integral table.
    Int(usize),
}

#[derive(Clone, Debug)]
struct Integral {
    body: Node,
    uses_x: bool,
    uses_t: bool,
}

/// A parsed expression.
#[derive(Clone, Debug)]
pub struct Expr {
    root: Node,
    integrals: Vec<Integral>,
    max_x: usize,
    source: String,
}

/// Values of integrals that do not depend on (t, x), computed once per
/// frozen measure.
#[derive(Clone, Debug, Default)]
pub struct FrozenIntegrals {
    values: Vec<Option<f64>>,
}

struct Parser<'a> {
    chars: Vec<(usize, char)>,
    pos: usize,
    integrals: Vec<Integral>,
    in_integral: bool,
    max_x: usize,
    src: &'a str,
}

fn err<T>(column: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Expression {
        column,
        message: message.into(),
    })
}

impl Parser<'_> {
    fn column(&self) -> usize {
        self.chars.get(self.pos).map(|c| c.0 + 1).unwrap_or(self.src.len() + 1)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| c.1)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_min(&mut self) -> bool {
        match self.peek() {
            Some('∧') => {
                self.pos += 1;
                true
            }
            Some('/') if self.chars.get(self.pos + 1).map(|c| c.1) == Some('\\') => {
                self.pos += 2;
                true
            }
            _ => false,
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.sum()?;
        while self.eat_min() {
            let rhs = self.sum()?;
            lhs = Node::Bin(BinOp::Min, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Some('+') => BinOp::Add,
                Some('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.product()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn product(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some('*') => BinOp::Mul,
                Some('/') if self.chars.get(self.pos + 1).map(|c| c.1) != Some('\\') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let col = self.column();
        match self.peek() {
            None => err(col, "unexpected end of expression"),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return err(self.column(), "expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len() {
                    let ch = self.chars[self.pos].1;
                    let prev = if self.pos > start { self.chars[self.pos - 1].1 } else { ' ' };
                    if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || ((ch == '-' || ch == '+') && (prev == 'e' || prev == 'E')) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let text: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                text.parse::<f64>()
                    .map(Node::Num)
                    .or_else(|_| err(col, format!("invalid number `{text}`")))
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self.pos < self.chars.len() && (self.chars[self.pos].1.is_alphanumeric() || self.chars[self.pos].1 == '_') {
                    self.pos += 1;
                }
                let name: String = self.chars[start..self.pos].iter().map(|c| c.1).collect();
                if self.peek() == Some('(') {
                    self.pos += 1;
                    return self.call(&name, col);
                }
                self.variable(&name, col)
            }
            Some(c) => err(col, format!("unexpected character `{c}`")),
        }
    }

    fn variable(&mut self, name: &str, col: usize) -> Result<Node> {
        let index = |rest: &str| -> Option<usize> {
            if rest.is_empty() {
                Some(0)
            } else {
                rest.parse::<usize>().ok().filter(|&k| (1..=9).contains(&k)).map(|k| k - 1)
            }
        };
        match name {
            "t" => Ok(Node::T),
            "pi" => Ok(Node::Num(std::f64::consts::PI)),
            _ if name.starts_with('x') => match index(&name[1..]) {
                Some(k) => {
                    self.max_x = self.max_x.max(k + 1);
                    Ok(Node::X(k))
                }
                None => err(col, format!("unknown variable `{name}`")),
            },
            _ if name.starts_with('y') => match index(&name[1..]) {
                Some(k) if self.in_integral => {
                    self.max_x = self.max_x.max(k + 1);
                    Ok(Node::Y(k))
                }
                Some(_) => err(col, "`y` may only appear inside int(…)"),
                None => err(col, format!("unknown variable `{name}`")),
            },
            _ => err(col, format!("unknown variable `{name}`")),
        }
    }

    fn call(&mut self, name: &str, col: usize) -> Result<Node> {
        if name == "int" {
            if self.in_integral {
                return err(col, "nested integrals are not supported");
            }
            self.in_integral = true;
            let body = self.expr()?;
            self.in_integral = false;
            if !self.eat(')') {
                return err(self.column(), "expected `)`");
            }
            let uses_x = mentions(&body, &|n| matches!(n, Node::X(_)));
            let uses_t = mentions(&body, &|n| matches!(n, Node::T));
            self.integrals.push(Integral { body, uses_x, uses_t });
            return Ok(Node::Int(self.integrals.len() - 1));
        }
        let (f, arity) = match name {
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "min1" => (Func::Min1, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return err(col, format!("unknown function `{name}`")),
        };
        let mut args = vec![self.expr()?];
        while self.eat(',') {
            args.push(self.expr()?);
        }
        if !self.eat(')') {
            return err(self.column(), "expected `)`");
        }
        if args.len() != arity {
            return err(col, format!("`{name}` takes {arity} argument(s)"));
        }
        Ok(Node::Call(f, args))
    }
}

fn mentions(n: &Node, pred: &dyn Fn(&Node) -> bool) -> bool {
    if pred(n) {
        return true;
    }
    match n {
        Node::Neg(a) => mentions(a, pred),
        Node::Bin(_, a, b) => mentions(a, pred) || mentions(b, pred),
        Node::Call(_, args) => args.iter().any(|a| mentions(a, pred)),
        _ => false,
    }
}

struct Ctx<'a> {
    t: f64,
    x: &'a [f64],
    y: &'a [f64],
}

fn eval(n: &Node, c: &Ctx, ints: &[f64]) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::T => c.t,
        Node::X(k) => c.x.get(*k).copied().unwrap_or(f64::NAN),
        Node::Y(k) => c.y.get(*k).copied().unwrap_or(f64::NAN),
        Node::Neg(a) => -eval(a, c, ints),
        Node::Bin(op, a, b) => {
            let (u, v) = (eval(a, c, ints), eval(b, c, ints));
            match op {
                BinOp::Add => u + v,
                BinOp::Sub => u - v,
                BinOp::Mul => u * v,
                BinOp::Div => u / v,
                BinOp::Pow => u.powf(v),
                BinOp::Min => u.min(v),
            }
        }
        Node::Call(f, args) => {
            let u = eval(&args[0], c, ints);
            match f {
                Func::Exp => u.exp(),
                Func::Log => u.ln(),
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Sqrt => u.sqrt(),
                Func::Abs => u.abs(),
                Func::Min1 => u.min(1.0),
                Func::Min => u.min(eval(&args[1], c, ints)),
                Func::Max => u.max(eval(&args[1], c, ints)),
            }
        }
        Node::Int(i) => ints[*i],
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser {
            chars: src.char_indices().collect(),
            pos: 0,
            integrals: Vec::new(),
            in_integral: false,
            max_x: 0,
            src,
        };
        let root = p.expr()?;
        if p.peek().is_some() {
            return err(p.column(), "unexpected trailing input");
        }
        Ok(Self {
            root,
            integrals: p.integrals,
            max_x: p.max_x,
            source: src.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Highest coordinate index referenced, 1-based.
    pub fn max_coordinate(&self) -> usize {
        self.max_x
    }

    pub fn has_integrals(&self) -> bool {
        !self.integrals.is_empty()
    }

    /// Precompute the integrals that depend on the measure only.
    pub fn freeze(&self, mu: &SubProbMeasure) -> FrozenIntegrals {
        let values = self
            .integrals
            .iter()
            .map(|ig| {
                if ig.uses_x || ig.uses_t {
                    None
                } else {
                    Some(integrate(&ig.body, mu, 0.0, &[]))
                }
            })
            .collect();
        FrozenIntegrals { values }
    }

    /// Evaluate at (t, x) against the frozen measure.
    pub fn eval(&self, t: f64, x: &[f64], mu: &SubProbMeasure, frozen: &FrozenIntegrals) -> f64 {
        let mut ints = [0.0f64; 8];
        let mut heap;
        let ints: &mut [f64] = if self.integrals.len() <= 8 {
            &mut ints[..self.integrals.len()]
        } else {
            heap = vec![0.0; self.integrals.len()];
            &mut heap
        };
        for (i, ig) in self.integrals.iter().enumerate() {
            ints[i] = match frozen.values.get(i).copied().flatten() {
                Some(v) => v,
                None => integrate(&ig.body, mu, t, x),
            };
        }
        eval(&self.root, &Ctx { t, x, y: &[] }, ints)
    }

    /// Evaluate an expression without integrals.
    pub fn eval_plain(&self, t: f64, x: &[f64]) -> f64 {
        eval(&self.root, &Ctx { t, x, y: &[] }, &[])
    }
}

fn integrate(body: &Node, mu: &SubProbMeasure, t: f64, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (_, y, w) in mu.interior() {
        acc += w * eval(body, &Ctx { t, x, y }, &[]);
    }
    acc
}
