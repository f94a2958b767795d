//! Small expression language for smooth coordinate functions.
//!
//! Expressions are trees over `f64` literals, indexed variables, the four
//! arithmetic operators, integer powers, unary minus and the intrinsics
//! `sin cos tan exp log sqrt`. Variables are resolved to positions in a
//! declared variable list at parse time, so evaluation takes a plain slice.
//!
//! The smart constructors ([`Expression::add`], [`Expression::mul`], ...)
//! fold constants and drop neutral elements. No further algebraic
//! simplification is attempted; correctness is pointwise.

pub mod parser;

use std::fmt;
use std::sync::Arc;

pub use parser::{parse, ParseError};

/// Intrinsic function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub const ALL: [Func; 6] = [Func::Sin, Func::Cos, Func::Tan, Func::Exp, Func::Log, Func::Sqrt];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        match self {
            Func::Sin => Ok(v.sin()),
            Func::Cos => Ok(v.cos()),
            Func::Tan => Ok(v.tan()),
            Func::Exp => Ok(v.exp()),
            Func::Log if v <= 0.0 => Err(EvalError::Domain(format!("log of non-positive argument {v}"))),
            Func::Log => Ok(v.ln()),
            Func::Sqrt if v < 0.0 => Err(EvalError::Domain(format!("sqrt of negative argument {v}"))),
            Func::Sqrt => Ok(v.sqrt()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Add(Expression, Expression),
    Sub(Expression, Expression),
    Mul(Expression, Expression),
    Div(Expression, Expression),
    Pow(Expression, i32),
    Neg(Expression),
    Call(Func, Expression),
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, PartialEq)]
pub struct Expression(Arc<Node>);

/// Evaluation failure.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("variable index {index} out of range for {len} supplied values")]
    MissingVariable { index: usize, len: usize },
}

impl Expression {
    fn from_node(node: Node) -> Self {
        Expression(Arc::new(node))
    }

    pub fn num(v: f64) -> Self {
        Self::from_node(Node::Num(v))
    }

    pub fn zero() -> Self {
        Self::num(0.0)
    }

    pub fn one() -> Self {
        Self::num(1.0)
    }

    pub fn var(index: usize) -> Self {
        Self::from_node(Node::Var(index))
    }

    /// Literal value if the tree is a single constant.
    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn add(a: &Expression, b: &Expression) -> Expression {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::num(x + y),
            (Some(0.0), _) => b.clone(),
            (_, Some(0.0)) => a.clone(),
            _ => Self::from_node(Node::Add(a.clone(), b.clone())),
        }
    }

    pub fn sub(a: &Expression, b: &Expression) -> Expression {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::num(x - y),
            (_, Some(0.0)) => a.clone(),
            (Some(0.0), _) => Self::neg(b),
            _ => Self::from_node(Node::Sub(a.clone(), b.clone())),
        }
    }

    pub fn mul(a: &Expression, b: &Expression) -> Expression {
        if a.is_zero() || b.is_zero() {
            return Self::zero();
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Self::num(x * y),
            _ if a.is_one() => b.clone(),
            _ if b.is_one() => a.clone(),
            _ => Self::from_node(Node::Mul(a.clone(), b.clone())),
        }
    }

    pub fn div(a: &Expression, b: &Expression) -> Expression {
        if b.is_one() {
            return a.clone();
        }
        match (a.as_const(), b.as_const()) {
            (Some(x), _) if x == 0.0 && b.as_const() != Some(0.0) => Self::zero(),
            (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => Self::num(x / y),
            _ => Self::from_node(Node::Div(a.clone(), b.clone())),
        }
    }

    pub fn neg(a: &Expression) -> Expression {
        match &*a.0 {
            Node::Num(v) => Self::num(-v),
            Node::Neg(inner) => inner.clone(),
            _ => Self::from_node(Node::Neg(a.clone())),
        }
    }

    pub fn powi(a: &Expression, n: i32) -> Expression {
        if n == 0 {
            return Self::one();
        }
        if n == 1 {
            return a.clone();
        }
        if let Some(v) = a.as_const() {
            let r = v.powi(n);
            if r.is_finite() && !(v == 0.0 && n < 0) {
                return Self::num(r);
            }
        }
        Self::from_node(Node::Pow(a.clone(), n))
    }

    pub fn call(f: Func, a: &Expression) -> Expression {
        if let Some(v) = a.as_const() {
            if let Ok(r) = f.apply(v) {
                if r.is_finite() {
                    return Self::num(r);
                }
            }
        }
        Self::from_node(Node::Call(f, a.clone()))
    }

    /// Sum of an iterator of expressions (zero when empty).
    pub fn sum<I: IntoIterator<Item = Expression>>(terms: I) -> Expression {
        terms.into_iter().fold(Self::zero(), |acc, t| Self::add(&acc, &t))
    }

    pub fn scale(&self, c: f64) -> Expression {
        Self::mul(&Self::num(c), self)
    }

    /// Evaluate at `vals`, where `vals[i]` is the value of variable `i`.
    pub fn eval(&self, vals: &[f64]) -> Result<f64, EvalError> {
        let v = match &*self.0 {
            Node::Num(v) => *v,
            Node::Var(i) => *vals
                .get(*i)
                .ok_or(EvalError::MissingVariable { index: *i, len: vals.len() })?,
            Node::Add(a, b) => a.eval(vals)? + b.eval(vals)?,
            Node::Sub(a, b) => a.eval(vals)? - b.eval(vals)?,
            Node::Mul(a, b) => a.eval(vals)? * b.eval(vals)?,
            Node::Div(a, b) => {
                let num = a.eval(vals)?;
                let den = b.eval(vals)?;
                if den == 0.0 {
                    return Err(EvalError::Domain("division by zero".into()));
                }
                num / den
            }
            Node::Pow(a, n) => {
                let base = a.eval(vals)?;
                if base == 0.0 && *n < 0 {
                    return Err(EvalError::Domain("division by zero in negative power".into()));
                }
                base.powi(*n)
            }
            Node::Neg(a) => -a.eval(vals)?,
            Node::Call(f, a) => f.apply(a.eval(vals)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Domain(format!("non-finite result {v}")))
        }
    }

    /// Exact partial derivative with respect to variable `var`.
    pub fn diff(&self, var: usize) -> Expression {
        match &*self.0 {
            Node::Num(_) => Self::zero(),
            Node::Var(i) => {
                if *i == var {
                    Self::one()
                } else {
                    Self::zero()
                }
            }
            Node::Add(a, b) => Self::add(&a.diff(var), &b.diff(var)),
            Node::Sub(a, b) => Self::sub(&a.diff(var), &b.diff(var)),
            Node::Mul(a, b) => Self::add(&Self::mul(&a.diff(var), b), &Self::mul(a, &b.diff(var))),
            Node::Div(a, b) => {
                let da = a.diff(var);
                let db = b.diff(var);
                if db.is_zero() {
                    return Self::div(&da, b);
                }
                let num = Self::sub(&Self::mul(&da, b), &Self::mul(a, &db));
                Self::div(&num, &Self::powi(b, 2))
            }
            Node::Pow(a, n) => {
                let da = a.diff(var);
                let outer = Self::mul(&Self::num(*n as f64), &Self::powi(a, n - 1));
                Self::mul(&outer, &da)
            }
            Node::Neg(a) => Self::neg(&a.diff(var)),
            Node::Call(f, a) => {
                let da = a.diff(var);
                if da.is_zero() {
                    return Self::zero();
                }
                let outer = match f {
                    Func::Sin => Self::call(Func::Cos, a),
                    Func::Cos => Self::neg(&Self::call(Func::Sin, a)),
                    Func::Tan => Self::div(&Self::one(), &Self::powi(&Self::call(Func::Cos, a), 2)),
                    Func::Exp => self.clone(),
                    Func::Log => Self::div(&Self::one(), a),
                    Func::Sqrt => Self::div(&Self::one(), &Self::mul(&Self::num(2.0), self)),
                };
                Self::mul(&outer, &da)
            }
        }
    }

    /// Rename variables: variable `i` becomes variable `map(i)`.
    pub fn remap(&self, map: &dyn Fn(usize) -> usize) -> Expression {
        match &*self.0 {
            Node::Num(_) => self.clone(),
            Node::Var(i) => Self::var(map(*i)),
            Node::Add(a, b) => Self::add(&a.remap(map), &b.remap(map)),
            Node::Sub(a, b) => Self::sub(&a.remap(map), &b.remap(map)),
            Node::Mul(a, b) => Self::mul(&a.remap(map), &b.remap(map)),
            Node::Div(a, b) => Self::div(&a.remap(map), &b.remap(map)),
            Node::Pow(a, n) => Self::powi(&a.remap(map), *n),
            Node::Neg(a) => Self::neg(&a.remap(map)),
            Node::Call(f, a) => Self::call(*f, &a.remap(map)),
        }
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match &*self.0 {
            Node::Num(_) => None,
            Node::Var(i) => Some(*i),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
            Node::Pow(a, _) | Node::Neg(a) | Node::Call(_, a) => a.max_var(),
        }
    }

    /// Sorted, deduplicated variable indices appearing in the tree.
    pub fn free_vars(&self) -> Vec<usize> {
        fn walk(e: &Expression, out: &mut Vec<usize>) {
            match &*e.0 {
                Node::Num(_) => {}
                Node::Var(i) => out.push(*i),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Node::Pow(a, _) | Node::Neg(a) | Node::Call(_, a) => walk(a, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Canonical text form using the given variable names.
    pub fn to_source<S: AsRef<str>>(&self, names: &[S]) -> String {
        let mut out = String::new();
        self.write_prec(&mut out, names, 0);
        out
    }

    fn prec(&self) -> u8 {
        match &*self.0 {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Num(v) if v.is_sign_negative() => 3,
            Node::Pow(..) => 4,
            Node::Num(_) | Node::Var(_) | Node::Call(..) => 5,
        }
    }

    fn write_prec<S: AsRef<str>>(&self, out: &mut String, names: &[S], min: u8) {
        let paren = self.prec() < min;
        if paren {
            out.push('(');
        }
        match &*self.0 {
            Node::Num(v) => out.push_str(&format!("{v:?}")),
            Node::Var(i) => match names.get(*i) {
                Some(n) => out.push_str(n.as_ref()),
                None => out.push_str(&format!("${i}")),
            },
            Node::Add(a, b) => self.write_binary(out, names, a, " + ", b, 1),
            Node::Sub(a, b) => self.write_binary(out, names, a, " - ", b, 1),
            Node::Mul(a, b) => self.write_binary(out, names, a, " * ", b, 2),
            Node::Div(a, b) => self.write_binary(out, names, a, " / ", b, 2),
            Node::Neg(a) => {
                out.push('-');
                a.write_prec(out, names, 4);
            }
            Node::Pow(a, n) => {
                a.write_prec(out, names, 4);
                if *n < 0 {
                    out.push_str(&format!("^({n})"));
                } else {
                    out.push_str(&format!("^{n}"));
                }
            }
            Node::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write_prec(out, names, 0);
                out.push(')');
            }
        }
        if paren {
            out.push(')');
        }
    }

    fn write_binary<S: AsRef<str>>(
        &self,
        out: &mut String,
        names: &[S],
        a: &Expression,
        op: &str,
        b: &Expression,
        level: u8,
    ) {
        a.write_prec(out, names, level);
        out.push_str(op);
        b.write_prec(out, names, level + 1);
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: [&str; 0] = [];
        f.write_str(&self.to_source(&names))
    }
}

impl From<f64> for Expression {
    fn from(v: f64) -> Self {
        Expression::num(v)
    }
}

/// Central finite difference of an expression in one variable; test helper
/// shared by the differentiation checks.
pub fn central_difference(e: &Expression, at: &[f64], var: usize, h: f64) -> Result<f64, EvalError> {
    let mut p = at.to_vec();
    p[var] = at[var] + h;
    let fp = e.eval(&p)?;
    p[var] = at[var] - h;
    let fm = e.eval(&p)?;
    Ok((fp - fm) / (2.0 * h))
}
