//! IEEE-double evaluation at points of the slit tangent bundle.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{CoordKind, Expr, ExprKind, Func};

/// A point `(x; y)` of the slit tangent bundle: `y != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum PointError {
    #[error("x and y must have equal length (got {x_len} and {y_len})")]
    MismatchedLengths { x_len: usize, y_len: usize },
    #[error("point lies on the zero section: all fiber coordinates vanish")]
    ZeroSection,
    #[error("coordinates must be finite")]
    NonFinite,
}

impl Point {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, PointError> {
        if x.len() != y.len() {
            return Err(PointError::MismatchedLengths { x_len: x.len(), y_len: y.len() });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(PointError::NonFinite);
        }
        if y.iter().all(|v| *v == 0.0) {
            return Err(PointError::ZeroSection);
        }
        Ok(Point { x, y })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Flat view in slot order `(x1..xn, y1..yn)`.
    pub fn slot(&self, slot: usize) -> f64 {
        if slot < self.dim() {
            self.x[slot]
        } else {
            self.y[slot - self.dim()]
        }
    }

    /// Copy with one slot shifted by `delta`. The result may leave the slit
    /// bundle; callers probing finite differences check validity themselves.
    pub fn nudged(&self, slot: usize, delta: f64) -> Point {
        let mut p = self.clone();
        if slot < p.dim() {
            p.x[slot] += delta;
        } else {
            let d = p.dim();
            p.y[slot - d] += delta;
        }
        p
    }
}

impl std::fmt::Display for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(x=")?;
        for (i, v) in self.x.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "; y=")?;
        for (i, v) in self.y.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("singular evaluation of `{subterm}` at {point}: {reason}")]
    Singular {
        subterm: Expr,
        point: Point,
        reason: String,
    },
    #[error("parameter `{name}` is not bound")]
    UnboundParameter { name: String },
    #[error("coordinate {coord} out of range for dimension {dim}")]
    CoordinateOutOfRange { coord: super::Coordinate, dim: usize },
}

/// Evaluate `e` at `p` with all parameters bound by `params`.
pub fn evaluate(e: &Expr, p: &Point, params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
    let mut ev = Evaluator { point: p, params, memo: HashMap::new() };
    ev.eval(e)
}

impl Expr {
    pub fn evaluate(&self, p: &Point, params: &BTreeMap<String, f64>) -> Result<f64, EvalError> {
        evaluate(self, p, params)
    }
}

struct Evaluator<'a> {
    point: &'a Point,
    params: &'a BTreeMap<String, f64>,
    memo: HashMap<usize, f64>,
}

impl<'a> Evaluator<'a> {
    fn singular(&self, subterm: &Expr, reason: impl Into<String>) -> EvalError {
        EvalError::Singular {
            subterm: subterm.clone(),
            point: self.point.clone(),
            reason: reason.into(),
        }
    }

    fn guard(&self, subterm: &Expr, value: f64) -> Result<f64, EvalError> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.singular(subterm, "non-finite result"))
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<f64, EvalError> {
        if let Some(hit) = self.memo.get(&e.ptr_id()) {
            return Ok(*hit);
        }
        let value = match e.kind() {
            ExprKind::Constant(c) => *c,
            ExprKind::Coord(c) => {
                if c.index > self.point.dim() {
                    return Err(EvalError::CoordinateOutOfRange { coord: *c, dim: self.point.dim() });
                }
                match c.kind {
                    CoordKind::Base => self.point.x()[c.index - 1],
                    CoordKind::Fiber => self.point.y()[c.index - 1],
                }
            }
            ExprKind::Param(name) => *self
                .params
                .get(name)
                .ok_or_else(|| EvalError::UnboundParameter { name: name.clone() })?,
            ExprKind::Sum(terms) => {
                let mut acc = 0.0;
                for t in terms {
                    acc += self.eval(t)?;
                }
                self.guard(e, acc)?
            }
            ExprKind::Product(factors) => {
                let mut acc = 1.0;
                for f in factors {
                    acc *= self.eval(f)?;
                }
                self.guard(e, acc)?
            }
            ExprKind::Quotient(num, den) => {
                let n = self.eval(num)?;
                let d = self.eval(den)?;
                if d == 0.0 {
                    return Err(self.singular(e, "division by zero"));
                }
                self.guard(e, n / d)?
            }
            ExprKind::Power(base, exp) => {
                let b = self.eval(base)?;
                let value = if let Some(k) = exp.as_integer() {
                    if b == 0.0 && k < 0 {
                        return Err(self.singular(e, "zero raised to a negative power"));
                    }
                    b.powi(k)
                } else {
                    if b < 0.0 {
                        return Err(self.singular(e, "negative base of a half-integer power"));
                    }
                    if b == 0.0 && exp.twice() < 0 {
                        return Err(self.singular(e, "zero raised to a negative power"));
                    }
                    b.powf(exp.value())
                };
                self.guard(e, value)?
            }
            ExprKind::Neg(inner) => -self.eval(inner)?,
            ExprKind::Call(func, arg) => {
                let a = self.eval(arg)?;
                let value = match func {
                    Func::Exp => a.exp(),
                    Func::Log => {
                        if a <= 0.0 {
                            return Err(self.singular(e, "logarithm of a non-positive value"));
                        }
                        a.ln()
                    }
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Abs => a.abs(),
                };
                self.guard(e, value)?
            }
        };
        self.memo.insert(e.ptr_id(), value);
        Ok(value)
    }
}
