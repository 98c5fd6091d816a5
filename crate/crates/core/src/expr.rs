//! Arithmetic expressions over the bundle coordinates `x`, `y`, `theta`.
//!
//! Expressions are immutable DAGs behind `Arc`, so cloning is cheap and
//! symbolic derivatives share untouched subtrees with their source. For hot
//! evaluation loops an expression is compiled into a [`Tape`], a flat
//! instruction list with common subexpressions merged.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{LabError, Result};

/// Coordinate variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    X,
    Y,
    Theta,
}

impl Var {
    pub const ALL: [Var; 3] = [Var::X, Var::Y, Var::Theta];

    pub fn index(self) -> usize {
        match self {
            Var::X => 0,
            Var::Y => 1,
            Var::Theta => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Theta => "theta",
        }
    }
}

/// Unary functions understood by the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sqrt => v.sqrt(),
            Func::Tanh => v.tanh(),
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    #[inline]
    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

#[derive(Debug)]
enum Node {
    Const(f64),
    Var(Var),
    Neg(Expr),
    Bin(BinOp, Expr, Expr),
    Func(Func, Expr),
}

/// Expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    fn raw(node: Node) -> Expr {
        Expr(Arc::new(node))
    }

    pub fn constant(v: f64) -> Expr {
        Expr::raw(Node::Const(v))
    }

    pub fn var(v: Var) -> Expr {
        Expr::raw(Node::Var(v))
    }

    pub fn x() -> Expr {
        Expr::var(Var::X)
    }

    pub fn y() -> Expr {
        Expr::var(Var::Y)
    }

    pub fn theta() -> Expr {
        Expr::var(Var::Theta)
    }

    /// Returns the value if this node is a literal constant.
    pub fn as_const(&self) -> Option<f64> {
        match &*self.0 {
            Node::Const(v) => Some(*v),
            _ => None,
        }
    }

    fn is_const(&self, v: f64) -> bool {
        self.as_const() == Some(v)
    }

    pub fn neg(&self) -> Expr {
        match &*self.0 {
            Node::Const(v) => Expr::constant(-v),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::raw(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(a), _) if a == 0.0 => other.clone(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => match &*other.0 {
                Node::Neg(inner) => self.sub(inner),
                _ => Expr::raw(Node::Bin(BinOp::Add, self.clone(), other.clone())),
            },
        }
    }

    pub fn sub(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(a), _) if a == 0.0 => other.neg(),
            (_, Some(b)) if b == 0.0 => self.clone(),
            _ => Expr::raw(Node::Bin(BinOp::Sub, self.clone(), other.clone())),
        }
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(a), _) if a == 0.0 => Expr::constant(0.0),
            (_, Some(b)) if b == 0.0 => Expr::constant(0.0),
            (Some(a), _) if a == 1.0 => other.clone(),
            (_, Some(b)) if b == 1.0 => self.clone(),
            (Some(a), _) if a == -1.0 => other.neg(),
            (_, Some(b)) if b == -1.0 => self.neg(),
            _ => Expr::raw(Node::Bin(BinOp::Mul, self.clone(), other.clone())),
        }
    }

    pub fn div(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(a), _) if a == 0.0 => Expr::constant(0.0),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::raw(Node::Bin(BinOp::Div, self.clone(), other.clone())),
        }
    }

    pub fn pow(&self, other: &Expr) -> Expr {
        match (self.as_const(), other.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a.powf(b)),
            (_, Some(b)) if b == 0.0 => Expr::constant(1.0),
            (_, Some(b)) if b == 1.0 => self.clone(),
            _ => Expr::raw(Node::Bin(BinOp::Pow, self.clone(), other.clone())),
        }
    }

    pub fn powi(&self, n: i32) -> Expr {
        self.pow(&Expr::constant(n as f64))
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::constant(c).mul(self)
    }

    pub fn apply(f: Func, arg: &Expr) -> Expr {
        match arg.as_const() {
            Some(v) => Expr::constant(f.apply(v)),
            None => Expr::raw(Node::Func(f, arg.clone())),
        }
    }

    pub fn sin(&self) -> Expr {
        Expr::apply(Func::Sin, self)
    }

    pub fn cos(&self) -> Expr {
        Expr::apply(Func::Cos, self)
    }

    pub fn exp(&self) -> Expr {
        Expr::apply(Func::Exp, self)
    }

    pub fn ln(&self) -> Expr {
        Expr::apply(Func::Log, self)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::apply(Func::Sqrt, self)
    }

    /// Evaluates by walking the tree. Prefer [`Expr::compile`] in loops.
    pub fn eval(&self, vars: [f64; 3]) -> f64 {
        match &*self.0 {
            Node::Const(v) => *v,
            Node::Var(v) => vars[v.index()],
            Node::Neg(a) => -a.eval(vars),
            Node::Bin(op, a, b) => op.apply(a.eval(vars), b.eval(vars)),
            Node::Func(f, a) => f.apply(a.eval(vars)),
        }
    }

    /// True if the expression mentions `v`.
    pub fn depends_on(&self, v: Var) -> bool {
        let mut seen = HashMap::new();
        self.depends_memo(v, &mut seen)
    }

    fn depends_memo(&self, v: Var, seen: &mut HashMap<usize, bool>) -> bool {
        let key = Arc::as_ptr(&self.0) as usize;
        if let Some(&d) = seen.get(&key) {
            return d;
        }
        let d = match &*self.0 {
            Node::Const(_) => false,
            Node::Var(w) => *w == v,
            Node::Neg(a) | Node::Func(_, a) => a.depends_memo(v, seen),
            Node::Bin(_, a, b) => a.depends_memo(v, seen) || b.depends_memo(v, seen),
        };
        seen.insert(key, d);
        d
    }

    /// Symbolic partial derivative.
    pub fn derivative(&self, v: Var) -> Expr {
        let mut memo = HashMap::new();
        self.diff_memo(v, &mut memo)
    }

    fn diff_memo(&self, v: Var, memo: &mut HashMap<usize, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0) as usize;
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let d = match &*self.0 {
            Node::Const(_) => Expr::constant(0.0),
            Node::Var(w) => Expr::constant(if *w == v { 1.0 } else { 0.0 }),
            Node::Neg(a) => a.diff_memo(v, memo).neg(),
            Node::Bin(op, a, b) => {
                let da = a.diff_memo(v, memo);
                let db = b.diff_memo(v, memo);
                match op {
                    BinOp::Add => da.add(&db),
                    BinOp::Sub => da.sub(&db),
                    BinOp::Mul => da.mul(b).add(&a.mul(&db)),
                    BinOp::Div => {
                        // (a' b - a b') / b^2
                        da.mul(b).sub(&a.mul(&db)).div(&b.mul(b))
                    }
                    BinOp::Pow => match b.as_const() {
                        Some(n) => Expr::constant(n).mul(&a.pow(&Expr::constant(n - 1.0))).mul(&da),
                        None => {
                            // a^b (b' ln a + b a'/a)
                            let inner = db.mul(&a.ln()).add(&b.mul(&da).div(a));
                            self.mul(&inner)
                        }
                    },
                }
            }
            Node::Func(f, a) => {
                let da = a.diff_memo(v, memo);
                if da.is_const(0.0) {
                    Expr::constant(0.0)
                } else {
                    let outer = match f {
                        Func::Sin => a.cos(),
                        Func::Cos => a.sin().neg(),
                        Func::Tan => {
                            let t = Expr::apply(Func::Tan, a);
                            Expr::constant(1.0).add(&t.mul(&t))
                        }
                        Func::Exp => self.clone(),
                        Func::Log => Expr::constant(1.0).div(a),
                        Func::Sqrt => Expr::constant(0.5).div(self),
                        Func::Tanh => Expr::constant(1.0).sub(&self.mul(self)),
                        Func::Abs => Expr::apply(Func::Sign, a),
                        Func::Sign => Expr::constant(0.0),
                    };
                    outer.mul(&da)
                }
            }
        };
        memo.insert(key, d.clone());
        d
    }

    /// Substitutes each variable by an expression.
    pub fn substitute(&self, subs: &[Expr; 3]) -> Expr {
        let mut memo = HashMap::new();
        self.subs_memo(subs, &mut memo)
    }

    fn subs_memo(&self, subs: &[Expr; 3], memo: &mut HashMap<usize, Expr>) -> Expr {
        let key = Arc::as_ptr(&self.0) as usize;
        if let Some(d) = memo.get(&key) {
            return d.clone();
        }
        let out = match &*self.0 {
            Node::Const(_) => self.clone(),
            Node::Var(v) => subs[v.index()].clone(),
            Node::Neg(a) => a.subs_memo(subs, memo).neg(),
            Node::Bin(op, a, b) => {
                let a = a.subs_memo(subs, memo);
                let b = b.subs_memo(subs, memo);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b),
                    BinOp::Pow => a.pow(&b),
                }
            }
            Node::Func(f, a) => Expr::apply(*f, &a.subs_memo(subs, memo)),
        };
        memo.insert(key, out.clone());
        out
    }

    /// Compiles into a flat instruction tape with merged common subexpressions.
    pub fn compile(&self) -> Tape {
        let mut builder = TapeBuilder::default();
        let out = builder.visit(self);
        Tape { ops: builder.ops, out }
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        self.compile().ops.len()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Node::Const(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Node::Var(v) => f.write_str(v.name()),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    Neg(u32),
    Bin(BinOp, u32, u32),
    Func(Func, u32),
}

#[derive(Hash, PartialEq, Eq)]
enum OpKey {
    Const(u64),
    Var(usize),
    Neg(u32),
    Bin(BinOp, u32, u32),
    Func(Func, u32),
}

#[derive(Default)]
struct TapeBuilder {
    ops: Vec<Op>,
    by_ptr: HashMap<usize, u32>,
    by_key: HashMap<OpKey, u32>,
}

impl TapeBuilder {
    fn visit(&mut self, e: &Expr) -> u32 {
        let ptr = Arc::as_ptr(&e.0) as usize;
        if let Some(&i) = self.by_ptr.get(&ptr) {
            return i;
        }
        let (op, key) = match &*e.0 {
            Node::Const(v) => (Op::Const(*v), OpKey::Const(v.to_bits())),
            Node::Var(v) => (Op::Var(v.index()), OpKey::Var(v.index())),
            Node::Neg(a) => {
                let a = self.visit(a);
                (Op::Neg(a), OpKey::Neg(a))
            }
            Node::Bin(op, a, b) => {
                let a = self.visit(a);
                let b = self.visit(b);
                (Op::Bin(*op, a, b), OpKey::Bin(*op, a, b))
            }
            Node::Func(func, a) => {
                let a = self.visit(a);
                (Op::Func(*func, a), OpKey::Func(*func, a))
            }
        };
        let idx = match self.by_key.get(&key) {
            Some(&i) => i,
            None => {
                let i = self.ops.len() as u32;
                self.ops.push(op);
                self.by_key.insert(key, i);
                i
            }
        };
        self.by_ptr.insert(ptr, idx);
        idx
    }
}

/// Compiled expression.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    out: u32,
}

thread_local! {
    static SCRATCH: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

impl Tape {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn eval(&self, vars: [f64; 3]) -> f64 {
        if let Some(Op::Const(v)) = self.ops.get(self.out as usize) {
            return *v;
        }
        SCRATCH.with(|cell| match cell.try_borrow_mut() {
            Ok(mut buf) => self.eval_into(vars, &mut buf),
            // re-entrant use from inside an evaluation; fall back to a fresh buffer
            Err(_) => self.eval_into(vars, &mut Vec::new()),
        })
    }

    fn eval_into(&self, vars: [f64; 3], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.reserve(self.ops.len());
        for op in &self.ops {
            let v = match *op {
                Op::Const(c) => c,
                Op::Var(i) => vars[i],
                Op::Neg(a) => -buf[a as usize],
                Op::Bin(op, a, b) => op.apply(buf[a as usize], buf[b as usize]),
                Op::Func(f, a) => f.apply(buf[a as usize]),
            };
            buf.push(v);
        }
        buf[self.out as usize]
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s.parse().map_err(|_| LabError::Parse {
                    offset: start,
                    message: format!("malformed number `{s}`"),
                })?;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push((Tok::Ident(text[start..i].to_string()), start));
                continue;
            }
            _ => {
                return Err(LabError::Parse {
                    offset: start,
                    message: format!("unexpected character `{}`", text[start..].chars().next().unwrap_or('?')),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    len: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(_, o)| *o).unwrap_or(self.len)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::raw(Node::Bin(op, lhs, rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::raw(Node::Bin(op, lhs, rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(Expr::raw(Node::Neg(self.unary()?)))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::raw(Node::Bin(BinOp::Pow, base, exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let offset = self.offset();
        let Some((tok, _)) = self.toks.get(self.pos).cloned() else {
            return Err(LabError::Parse {
                offset,
                message: "unexpected end of input".into(),
            });
        };
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::constant(v)),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::x()),
                "y" => Ok(Expr::y()),
                "theta" => Ok(Expr::theta()),
                "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                "e" => Ok(Expr::constant(std::f64::consts::E)),
                _ => {
                    let Some(func) = Func::from_name(&name) else {
                        return Err(LabError::UnknownIdentifier { name, offset });
                    };
                    if self.peek() != Some(&Tok::LParen) {
                        return Err(LabError::Parse {
                            offset: self.offset(),
                            message: format!("expected `(` after `{name}`"),
                        });
                    }
                    self.pos += 1;
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    Ok(Expr::raw(Node::Func(func, arg)))
                }
            },
            other => Err(LabError::Parse {
                offset,
                message: format!("unexpected token {other:?}"),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == Some(&Tok::RParen) {
            self.pos += 1;
            Ok(())
        } else {
            Err(LabError::Parse {
                offset: self.offset(),
                message: "expected `)`".into(),
            })
        }
    }
}

/// Parses an expression. `^` is right-associative and binds tightest, then
/// unary minus, then `*` `/`, then `+` `-`.
pub fn parse_expression(text: &str) -> Result<Expr> {
    if text.trim().is_empty() {
        return Err(LabError::Parse {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        len: text.len(),
    };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return Err(LabError::Parse {
            offset: p.offset(),
            message: "trailing input".into(),
        });
    }
    Ok(e)
}

impl std::str::FromStr for Expr {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Expr> {
        parse_expression(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ev(s: &str, x: f64, y: f64, t: f64) -> f64 {
        parse_expression(s).unwrap().eval([x, y, t])
    }

    #[test]
    fn spec_examples() {
        assert!((ev("sin(2*pi*x)", 0.25, 0.0, 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(ev("2+3*4", 0.0, 0.0, 0.0), 14.0);
        match parse_expression("siin(x)") {
            Err(LabError::UnknownIdentifier { name, offset }) => {
                assert_eq!(name, "siin");
                assert_eq!(offset, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("2^3^2", 0.0, 0.0, 0.0), 512.0);
        assert_eq!(ev("-2^2", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("2^-1", 0.0, 0.0, 0.0), 0.5);
        assert_eq!(ev("8/4/2", 0.0, 0.0, 0.0), 1.0);
        assert_eq!(ev("1-2-3", 0.0, 0.0, 0.0), -4.0);
        assert_eq!(ev("-x*y", 2.0, 3.0, 0.0), -6.0);
        assert_eq!(ev("(1+2)*3", 0.0, 0.0, 0.0), 9.0);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0, 0.0, 0.0), 150.2);
        assert!((ev("cos(theta)", 0.0, 0.0, PI) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        match parse_expression("1 + ") {
            Err(LabError::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        match parse_expression("(x + 1") {
            Err(LabError::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        match parse_expression("x $ y") {
            Err(LabError::Parse { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_expression("2 * foo"),
            Err(LabError::UnknownIdentifier { offset: 4, .. })
        ));
        assert!(parse_expression("   ").is_err());
    }

    #[test]
    fn derivatives_of_each_function_match_finite_differences() {
        let cases = [
            "sin(x*y)",
            "cos(x+theta)",
            "tan(0.3*x)",
            "exp(x*y)",
            "log(2+x)",
            "sqrt(3+y*x)",
            "tanh(x-y)",
            "abs(x-0.3)",
            "x^3*y",
            "x^y",
            "(x+1)/(y+2)",
            "-(x*theta)",
        ];
        let p = [0.7, 0.45, 1.1];
        for s in cases {
            let e = parse_expression(s).unwrap();
            for v in Var::ALL {
                let d = e.derivative(v).eval(p);
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[v.index()] += h;
                b[v.index()] -= h;
                let fd = (e.eval(a) - e.eval(b)) / (2.0 * h);
                let scale = d.abs().max(1.0);
                assert!((d - fd).abs() / scale < 1e-6, "{s} d/{:?}: {d} vs {fd}", v);
            }
        }
    }

    #[test]
    fn tape_matches_tree_and_merges_duplicates() {
        let e = parse_expression("exp(-x)*sin(theta) + exp(-x)*cos(theta)").unwrap();
        let tape = e.compile();
        let p = [0.3, 0.1, 0.9];
        assert_eq!(tape.eval(p), e.eval(p));
        // exp(-x) appears once on the tape
        let count = tape
            .ops
            .iter()
            .filter(|op| matches!(op, Op::Func(Func::Exp, _)))
            .count();
        assert_eq!(count, 1);
    }

    #[test]
    fn simplifying_constructors() {
        let x = Expr::x();
        assert!(x.mul(&Expr::constant(0.0)).is_const(0.0));
        assert_eq!(format!("{}", x.add(&Expr::constant(0.0))), "x");
        assert_eq!(format!("{}", x.neg().neg()), "x");
        assert!(Expr::constant(2.0).derivative(Var::X).is_const(0.0));
        assert!(!x.mul(&Expr::theta()).depends_on(Var::Y));
        assert!(x.mul(&Expr::theta()).depends_on(Var::Theta));
    }
}
