//! Embedded expression language over the jet coordinates `t`, `x1..xn`,
//! `y1..yn` (with `y = dx/dt`): parsing, exact symbolic differentiation,
//! value-preserving simplification and numeric evaluation.
//!
//! Every geometric quantity in this crate (metrics, Christoffel symbols,
//! semisprays, the five KCC invariants) is an [`Expr`] tree or an array of
//! them. Trees are immutable and cheaply cloneable (`Arc`-shared), so
//! concurrent evaluation from many threads is safe by construction.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

mod parse;
pub use parse::{parse, ParseError};

/// A variable of the 1-jet chart: time, a spatial coordinate `x_i`, or a
/// jet velocity `y_i`. Indices are 1-based, matching the surface syntax.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    Time,
    Spatial(usize),
    Velocity(usize),
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Time => write!(f, "t"),
            VarId::Spatial(i) => write!(f, "x{i}"),
            VarId::Velocity(i) => write!(f, "y{i}"),
        }
    }
}

/// Unary functions available in the expression grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Atan,
    Sinh,
    Cosh,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "tan" => Some(Func::Tan),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            "sqrt" => Some(Func::Sqrt),
            "atan" => Some(Func::Atan),
            "sinh" => Some(Func::Sinh),
            "cosh" => Some(Func::Cosh),
            "tanh" => Some(Func::Tanh),
            _ => None,
        }
    }

    /// Numeric application with domain checking.
    pub fn apply_value(self, v: f64) -> Result<f64, EvalError> {
        let out = match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Log => {
                if v <= 0.0 {
                    return Err(EvalError::Domain { func: "log", arg: v });
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::Domain { func: "sqrt", arg: v });
                }
                v.sqrt()
            }
            Func::Atan => v.atan(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Tanh => v.tanh(),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

/// Exponent of a power node. Integer exponents evaluate by repeated
/// multiplication and differentiate without a positivity assumption on
/// the base; real exponents require a positive base at evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PowExp {
    Int(i32),
    Real(f64),
}

impl PowExp {
    fn value(self) -> f64 {
        match self {
            PowExp::Int(k) => k as f64,
            PowExp::Real(r) => r,
        }
    }
}

/// Evaluation point: values for `t`, `x1..xn`, `y1..yn`.
#[derive(Clone, Debug, PartialEq)]
pub struct Env {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Env {
    pub fn new(t: f64, x: Vec<f64>, y: Vec<f64>) -> Env {
        Env { t, x, y }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn get(&self, v: VarId) -> Result<f64, EvalError> {
        match v {
            VarId::Time => Ok(self.t),
            VarId::Spatial(i) => self
                .x
                .get(i.wrapping_sub(1))
                .copied()
                .ok_or(EvalError::IndexOutOfRange { var: v, dim: self.x.len() }),
            VarId::Velocity(i) => self
                .y
                .get(i.wrapping_sub(1))
                .copied()
                .ok_or(EvalError::IndexOutOfRange { var: v, dim: self.y.len() }),
        }
    }

    /// Copy of the environment with variable `v` offset by `delta`.
    pub fn nudged(&self, v: VarId, delta: f64) -> Result<Env, EvalError> {
        let mut out = self.clone();
        match v {
            VarId::Time => out.t += delta,
            VarId::Spatial(i) => {
                let slot = out
                    .x
                    .get_mut(i.wrapping_sub(1))
                    .ok_or(EvalError::IndexOutOfRange { var: v, dim: self.x.len() })?;
                *slot += delta;
            }
            VarId::Velocity(i) => {
                let slot = out
                    .y
                    .get_mut(i.wrapping_sub(1))
                    .ok_or(EvalError::IndexOutOfRange { var: v, dim: self.y.len() })?;
                *slot += delta;
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("domain error: {func}({arg})")]
    Domain { func: &'static str, arg: f64 },
    #[error("non-finite result")]
    NonFinite,
    #[error("variable {var} out of range for dimension {dim}")]
    IndexOutOfRange { var: VarId, dim: usize },
}

/// Immutable symbolic expression tree.
///
/// Division, `log` and `sqrt` domain violations surface only at
/// [`Expr::eval`], never at construction. Structurally equal trees evaluate
/// equal at every point.
#[derive(Clone, PartialEq)]
pub struct Expr {
    node: Arc<Node>,
}

#[derive(Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(VarId),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Pow(Expr, PowExp),
    Apply(Func, Expr),
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl Expr {
    fn wrap(node: Node) -> Expr {
        Expr { node: Arc::new(node) }
    }

    pub fn constant(c: f64) -> Expr {
        Expr::wrap(Node::Const(c))
    }

    pub fn var(v: VarId) -> Expr {
        Expr::wrap(Node::Var(v))
    }

    pub fn time() -> Expr {
        Expr::var(VarId::Time)
    }

    pub fn spatial(i: usize) -> Expr {
        Expr::var(VarId::Spatial(i))
    }

    pub fn velocity(i: usize) -> Expr {
        Expr::var(VarId::Velocity(i))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn apply(f: Func, arg: Expr) -> Expr {
        Expr::wrap(Node::Apply(f, arg))
    }

    /// Power with normalized exponent (integral reals become `Int`).
    pub fn pow(self, e: PowExp) -> Expr {
        let e = match e {
            PowExp::Real(r) if r.fract() == 0.0 && r.abs() <= i32::MAX as f64 => {
                PowExp::Int(r as i32)
            }
            other => other,
        };
        Expr::wrap(Node::Pow(self, e))
    }

    pub fn powi(self, k: i32) -> Expr {
        self.pow(PowExp::Int(k))
    }

    pub fn powf(self, r: f64) -> Expr {
        self.pow(PowExp::Real(r))
    }

    pub fn sin(self) -> Expr {
        Expr::apply(Func::Sin, self)
    }

    pub fn cos(self) -> Expr {
        Expr::apply(Func::Cos, self)
    }

    pub fn exp(self) -> Expr {
        Expr::apply(Func::Exp, self)
    }

    pub fn log(self) -> Expr {
        Expr::apply(Func::Log, self)
    }

    pub fn sqrt(self) -> Expr {
        Expr::apply(Func::Sqrt, self)
    }

    pub fn is_const(&self) -> Option<f64> {
        match &*self.node {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.is_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.is_const() == Some(1.0)
    }

    /// Exact recursive evaluation in floating point.
    pub fn eval(&self, env: &Env) -> Result<f64, EvalError> {
        let out = match &*self.node {
            Node::Const(c) => *c,
            Node::Var(v) => env.get(*v)?,
            Node::Add(a, b) => a.eval(env)? + b.eval(env)?,
            Node::Sub(a, b) => a.eval(env)? - b.eval(env)?,
            Node::Mul(a, b) => a.eval(env)? * b.eval(env)?,
            Node::Div(a, b) => {
                let denom = b.eval(env)?;
                if denom == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval(env)? / denom
            }
            Node::Neg(a) => -a.eval(env)?,
            Node::Pow(b, e) => {
                let base = b.eval(env)?;
                match e {
                    PowExp::Int(k) => {
                        if base == 0.0 && *k < 0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        base.powi(*k)
                    }
                    PowExp::Real(r) => {
                        if base <= 0.0 {
                            return Err(EvalError::Domain { func: "pow", arg: base });
                        }
                        base.powf(*r)
                    }
                }
            }
            Node::Apply(f, a) => f.apply_value(a.eval(env)?)?,
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Exact symbolic partial derivative with respect to `v`. Repeated
    /// application yields exact higher-order derivatives.
    pub fn diff(&self, v: VarId) -> Expr {
        match &*self.node {
            Node::Const(_) => Expr::zero(),
            Node::Var(w) => {
                if *w == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(a, b) => sadd(a.diff(v), b.diff(v)),
            Node::Sub(a, b) => ssub(a.diff(v), b.diff(v)),
            Node::Mul(a, b) => sadd(smul(a.diff(v), b.clone()), smul(a.clone(), b.diff(v))),
            Node::Div(a, b) => sdiv(
                ssub(smul(a.diff(v), b.clone()), smul(a.clone(), b.diff(v))),
                spow(b.clone(), PowExp::Int(2)),
            ),
            Node::Neg(a) => sneg(a.diff(v)),
            Node::Pow(b, e) => {
                let coeff = Expr::constant(e.value());
                let lowered = match e {
                    PowExp::Int(k) => spow(b.clone(), PowExp::Int(k - 1)),
                    PowExp::Real(r) => spow(b.clone(), PowExp::Real(r - 1.0)),
                };
                smul(smul(coeff, lowered), b.diff(v))
            }
            Node::Apply(f, a) => smul(func_derivative(*f, a), a.diff(v)),
        }
    }

    /// Value-preserving simplification: constant folding, 0/1 identities,
    /// `x - x -> 0`, double-negation collapse. No canonical form is
    /// guaranteed; the result is pointwise equal to the input.
    pub fn simplify(&self) -> Expr {
        match &*self.node {
            Node::Const(_) | Node::Var(_) => self.clone(),
            Node::Add(a, b) => sadd(a.simplify(), b.simplify()),
            Node::Sub(a, b) => ssub(a.simplify(), b.simplify()),
            Node::Mul(a, b) => smul(a.simplify(), b.simplify()),
            Node::Div(a, b) => sdiv(a.simplify(), b.simplify()),
            Node::Neg(a) => sneg(a.simplify()),
            Node::Pow(b, e) => spow(b.simplify(), *e),
            Node::Apply(f, a) => sapply(*f, a.simplify()),
        }
    }

    /// Replace variables by expressions. Variables for which `map` returns
    /// `None` are left untouched.
    pub fn substitute<F>(&self, map: &F) -> Expr
    where
        F: Fn(VarId) -> Option<Expr>,
    {
        match &*self.node {
            Node::Const(_) => self.clone(),
            Node::Var(v) => map(*v).unwrap_or_else(|| self.clone()),
            Node::Add(a, b) => Expr::wrap(Node::Add(a.substitute(map), b.substitute(map))),
            Node::Sub(a, b) => Expr::wrap(Node::Sub(a.substitute(map), b.substitute(map))),
            Node::Mul(a, b) => Expr::wrap(Node::Mul(a.substitute(map), b.substitute(map))),
            Node::Div(a, b) => Expr::wrap(Node::Div(a.substitute(map), b.substitute(map))),
            Node::Neg(a) => sneg(a.substitute(map)),
            Node::Pow(b, e) => Expr::wrap(Node::Pow(b.substitute(map), *e)),
            Node::Apply(f, a) => Expr::wrap(Node::Apply(*f, a.substitute(map))),
        }
    }

    /// Set of variables appearing structurally in the tree.
    pub fn variables(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match &*self.node {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(*v);
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Node::Neg(a) | Node::Pow(a, _) | Node::Apply(_, a) => a.collect_vars(out),
        }
    }

    pub fn depends_on_velocity(&self) -> bool {
        self.variables()
            .iter()
            .any(|v| matches!(v, VarId::Velocity(_)))
    }

    fn prec(&self) -> u8 {
        match &*self.node {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(..) => 3,
            Node::Pow(..) => 4,
            Node::Const(c) if *c < 0.0 => 0,
            Node::Const(_) | Node::Var(_) | Node::Apply(..) => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        let p = self.prec();
        let need_parens = p < min_prec;
        if need_parens {
            write!(f, "(")?;
        }
        match &*self.node {
            Node::Const(c) => write!(f, "{c}")?,
            Node::Var(v) => write!(f, "{v}")?,
            Node::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                b.fmt_prec(f, 2)?;
            }
            Node::Sub(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                b.fmt_prec(f, 2)?;
            }
            Node::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "*")?;
                b.fmt_prec(f, 3)?;
            }
            Node::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, "/")?;
                b.fmt_prec(f, 3)?;
            }
            Node::Neg(a) => {
                write!(f, "-")?;
                a.fmt_prec(f, 3)?;
            }
            Node::Pow(b, e) => {
                b.fmt_prec(f, 5)?;
                match e {
                    PowExp::Int(k) if *k < 0 => write!(f, "^({k})")?,
                    PowExp::Int(k) => write!(f, "^{k}")?,
                    PowExp::Real(r) if *r < 0.0 => write!(f, "^({r})")?,
                    PowExp::Real(r) => write!(f, "^{r}")?,
                }
            }
            Node::Apply(func, a) => {
                write!(f, "{}(", func.name())?;
                a.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
        }
        if need_parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// Prints in the grammar accepted by [`parse`]; `parse(print(e))` is
/// structurally equal to `e`.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::wrap(Node::Add(self, rhs))
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::wrap(Node::Sub(self, rhs))
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::wrap(Node::Mul(self, rhs))
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::wrap(Node::Div(self, rhs))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        // Negative literals stay literal so printed forms reparse to the
        // same tree.
        if let Some(c) = self.is_const() {
            return Expr::constant(-c);
        }
        Expr::wrap(Node::Neg(self))
    }
}

// Folding constructors shared by diff and simplify. Each returns a tree
// pointwise equal to the raw node it replaces.

fn sadd(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return b;
    }
    if b.is_zero() {
        return a;
    }
    if let (Some(ca), Some(cb)) = (a.is_const(), b.is_const()) {
        return Expr::constant(ca + cb);
    }
    Expr::wrap(Node::Add(a, b))
}

fn ssub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return sneg(b);
    }
    if a == b {
        return Expr::zero();
    }
    if let (Some(ca), Some(cb)) = (a.is_const(), b.is_const()) {
        return Expr::constant(ca - cb);
    }
    Expr::wrap(Node::Sub(a, b))
}

fn smul(a: Expr, b: Expr) -> Expr {
    if a.is_zero() || b.is_zero() {
        return Expr::zero();
    }
    if a.is_one() {
        return b;
    }
    if b.is_one() {
        return a;
    }
    if let (Some(ca), Some(cb)) = (a.is_const(), b.is_const()) {
        return Expr::constant(ca * cb);
    }
    // fold nested constant factors: c1*(c2*e) -> (c1*c2)*e
    if let Some(ca) = a.is_const() {
        if let Node::Mul(b1, b2) = &*b.node {
            if let Some(cb) = b1.is_const() {
                return smul(Expr::constant(ca * cb), b2.clone());
            }
        }
    }
    Expr::wrap(Node::Mul(a, b))
}

fn sdiv(a: Expr, b: Expr) -> Expr {
    if a.is_zero() {
        return Expr::zero();
    }
    if b.is_one() {
        return a;
    }
    if let (Some(ca), Some(cb)) = (a.is_const(), b.is_const()) {
        if cb != 0.0 {
            let q = ca / cb;
            if q.is_finite() {
                return Expr::constant(q);
            }
        }
    }
    Expr::wrap(Node::Div(a, b))
}

fn sneg(a: Expr) -> Expr {
    if let Some(c) = a.is_const() {
        return Expr::constant(-c);
    }
    if let Node::Neg(inner) = &*a.node {
        return inner.clone();
    }
    Expr::wrap(Node::Neg(a))
}

fn spow(b: Expr, e: PowExp) -> Expr {
    match e {
        PowExp::Int(0) => return Expr::one(),
        PowExp::Int(1) => return b,
        _ => {}
    }
    if let Some(c) = b.is_const() {
        let v = match e {
            PowExp::Int(k) => {
                if c == 0.0 && k < 0 {
                    f64::NAN
                } else {
                    c.powi(k)
                }
            }
            PowExp::Real(r) => {
                if c > 0.0 {
                    c.powf(r)
                } else {
                    f64::NAN
                }
            }
        };
        if v.is_finite() {
            return Expr::constant(v);
        }
    }
    b.pow(e)
}

fn sapply(f: Func, a: Expr) -> Expr {
    if let Some(c) = a.is_const() {
        if let Ok(v) = f.apply_value(c) {
            return Expr::constant(v);
        }
    }
    Expr::wrap(Node::Apply(f, a))
}

fn func_derivative(f: Func, a: &Expr) -> Expr {
    let a = a.clone();
    match f {
        Func::Sin => sapply(Func::Cos, a),
        Func::Cos => sneg(sapply(Func::Sin, a)),
        Func::Tan => sdiv(Expr::one(), spow(sapply(Func::Cos, a), PowExp::Int(2))),
        Func::Exp => sapply(Func::Exp, a),
        Func::Log => sdiv(Expr::one(), a),
        Func::Sqrt => sdiv(Expr::one(), smul(Expr::constant(2.0), sapply(Func::Sqrt, a))),
        Func::Atan => sdiv(
            Expr::one(),
            sadd(Expr::one(), spow(a, PowExp::Int(2))),
        ),
        Func::Sinh => sapply(Func::Cosh, a),
        Func::Cosh => sapply(Func::Sinh, a),
        Func::Tanh => sdiv(Expr::one(), spow(sapply(Func::Cosh, a), PowExp::Int(2))),
    }
}

/// Central finite difference `(e(env + h v) - e(env - h v)) / (2h)`, the
/// independent oracle for [`Expr::diff`].
pub fn fd_derivative(e: &Expr, v: VarId, env: &Env, h: f64) -> Result<f64, EvalError> {
    let plus = e.eval(&env.nudged(v, h)?)?;
    let minus = e.eval(&env.nudged(v, -h)?)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Default step `1e-5 * max(1, |v|)`: balances truncation against
/// round-off at first order.
pub fn default_fd_step(env: &Env, v: VarId) -> f64 {
    let scale = env.get(v).map(f64::abs).unwrap_or(0.0);
    1e-5 * scale.max(1.0)
}
