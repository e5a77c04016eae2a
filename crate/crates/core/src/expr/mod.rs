//! Expression engine: immutable arithmetic expressions over chart coordinates
//! `x1..xn`, `y1..yn` and named parameters, with exact symbolic
//! differentiation, sound local simplification and IEEE evaluation.
//!
//! Expressions are hash-consed into a thread-local table, so structurally
//! equal subterms built on the same thread share storage. Iterated
//! differentiation of nested radicals produces heavily shared DAGs; the
//! interner keeps them from exploding into trees. Values are `Arc`-backed and
//! freely sendable between threads; the table itself is per-thread, so
//! construction is race-free by construction.

mod deriv;
mod display;
mod eval;
mod parse;
mod simplify;

pub use eval::{evaluate, EvalError, Point, PointError};
pub use parse::{parse, ParseError};

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Which leg of the induced chart a coordinate lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoordKind {
    /// Base coordinate `x^i`.
    Base,
    /// Fiber coordinate `y^i`.
    Fiber,
}

/// A chart coordinate on the tangent bundle, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coordinate {
    pub kind: CoordKind,
    pub index: usize,
}

impl Coordinate {
    pub fn base(index: usize) -> Self {
        assert!(index >= 1, "coordinate indices are 1-based");
        Coordinate { kind: CoordKind::Base, index }
    }

    pub fn fiber(index: usize) -> Self {
        assert!(index >= 1, "coordinate indices are 1-based");
        Coordinate { kind: CoordKind::Fiber, index }
    }

    /// Flat slot in the ordering `(x1..xn, y1..yn)`.
    pub fn slot(&self, dim: usize) -> usize {
        match self.kind {
            CoordKind::Base => self.index - 1,
            CoordKind::Fiber => dim + self.index - 1,
        }
    }

    /// Inverse of [`Coordinate::slot`].
    pub fn from_slot(slot: usize, dim: usize) -> Self {
        if slot < dim {
            Coordinate::base(slot + 1)
        } else {
            Coordinate::fiber(slot - dim + 1)
        }
    }
}

impl std::fmt::Display for Coordinate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            CoordKind::Base => write!(f, "x{}", self.index),
            CoordKind::Fiber => write!(f, "y{}", self.index),
        }
    }
}

/// Exponent of a power node: an integer or half-integer, stored as twice its
/// value. Restricting denominators to {1, 2} keeps every derivative in the
/// same family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exponent {
    twice: i32,
}

impl Exponent {
    pub fn integer(k: i32) -> Self {
        Exponent { twice: 2 * k }
    }

    /// The exponent `numerator / 2`.
    pub fn half(numerator: i32) -> Self {
        Exponent { twice: numerator }
    }

    pub fn value(&self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    pub fn twice(&self) -> i32 {
        self.twice
    }

    pub fn is_integer(&self) -> bool {
        self.twice % 2 == 0
    }

    pub fn as_integer(&self) -> Option<i32> {
        self.is_integer().then_some(self.twice / 2)
    }

    pub fn is_zero(&self) -> bool {
        self.twice == 0
    }

    pub fn is_one(&self) -> bool {
        self.twice == 2
    }

    pub fn minus_one(&self) -> Self {
        Exponent { twice: self.twice - 2 }
    }

    pub fn negate(&self) -> Self {
        Exponent { twice: -self.twice }
    }

    pub fn add(&self, other: &Exponent) -> Self {
        Exponent { twice: self.twice + other.twice }
    }

    /// Product of two exponents, `None` when it would leave the
    /// half-integer family (both factors proper halves).
    pub fn checked_mul(&self, other: &Exponent) -> Option<Self> {
        let prod = i64::from(self.twice) * i64::from(other.twice);
        if prod % 2 != 0 {
            return None;
        }
        i32::try_from(prod / 2).ok().map(|twice| Exponent { twice })
    }
}

/// Unary functions admitted by the grammar. `sqrt` is represented as a power
/// with exponent 1/2 so that the power rules cover its calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }
}

/// Expression node. Children are interned [`Expr`] handles.
#[derive(Debug, Clone)]
pub enum ExprKind {
    Constant(f64),
    Coord(Coordinate),
    Param(String),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Expr, Expr),
    Power(Expr, Exponent),
    Neg(Expr),
    Call(Func, Expr),
}

#[derive(Debug)]
struct ExprInner {
    kind: ExprKind,
    hash: u64,
}

/// An immutable, hash-consed expression.
#[derive(Debug, Clone)]
pub struct Expr(Arc<ExprInner>);

// The interner is per-thread: cloning an Expr across threads is safe (the
// payload is Arc'd and immutable), it merely stops deduplicating against
// nodes built elsewhere.
thread_local! {
    static INTERNER: RefCell<HashMap<u64, Vec<Expr>>> = RefCell::new(HashMap::new());
}

/// Soft cap on interned nodes; past this the table is dropped wholesale.
/// Deduplication is best-effort, correctness never depends on it.
const INTERNER_SOFT_CAP: usize = 4_000_000;

fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(0x100000001b3);
    }
    state
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;

fn hash_kind(kind: &ExprKind) -> u64 {
    let mut h = FNV_OFFSET;
    let tag: u8 = match kind {
        ExprKind::Constant(_) => 0,
        ExprKind::Coord(_) => 1,
        ExprKind::Param(_) => 2,
        ExprKind::Sum(_) => 3,
        ExprKind::Product(_) => 4,
        ExprKind::Quotient(..) => 5,
        ExprKind::Power(..) => 6,
        ExprKind::Neg(_) => 7,
        ExprKind::Call(..) => 8,
    };
    h = fnv1a(&[tag], h);
    match kind {
        ExprKind::Constant(c) => h = fnv1a(&c.to_bits().to_le_bytes(), h),
        ExprKind::Coord(c) => {
            h = fnv1a(&[matches!(c.kind, CoordKind::Fiber) as u8], h);
            h = fnv1a(&(c.index as u64).to_le_bytes(), h);
        }
        ExprKind::Param(name) => h = fnv1a(name.as_bytes(), h),
        ExprKind::Sum(children) | ExprKind::Product(children) => {
            for c in children {
                h = fnv1a(&c.hash_value().to_le_bytes(), h);
            }
        }
        ExprKind::Quotient(a, b) => {
            h = fnv1a(&a.hash_value().to_le_bytes(), h);
            h = fnv1a(&b.hash_value().to_le_bytes(), h);
        }
        ExprKind::Power(base, exp) => {
            h = fnv1a(&base.hash_value().to_le_bytes(), h);
            h = fnv1a(&exp.twice.to_le_bytes(), h);
        }
        ExprKind::Neg(a) => h = fnv1a(&a.hash_value().to_le_bytes(), h),
        ExprKind::Call(func, a) => {
            h = fnv1a(&[*func as u8], h);
            h = fnv1a(&a.hash_value().to_le_bytes(), h);
        }
    }
    h
}

/// Shallow equality used by the interner: payload equality plus pointer
/// equality of children (children built on this thread are already interned).
fn shallow_eq(a: &ExprKind, b: &ExprKind) -> bool {
    match (a, b) {
        (ExprKind::Constant(x), ExprKind::Constant(y)) => x.to_bits() == y.to_bits(),
        (ExprKind::Coord(x), ExprKind::Coord(y)) => x == y,
        (ExprKind::Param(x), ExprKind::Param(y)) => x == y,
        (ExprKind::Sum(xs), ExprKind::Sum(ys)) | (ExprKind::Product(xs), ExprKind::Product(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| Arc::ptr_eq(&x.0, &y.0))
        }
        (ExprKind::Quotient(xa, xb), ExprKind::Quotient(ya, yb)) => {
            Arc::ptr_eq(&xa.0, &ya.0) && Arc::ptr_eq(&xb.0, &yb.0)
        }
        (ExprKind::Power(xb, xe), ExprKind::Power(yb, ye)) => {
            xe == ye && Arc::ptr_eq(&xb.0, &yb.0)
        }
        (ExprKind::Neg(x), ExprKind::Neg(y)) => Arc::ptr_eq(&x.0, &y.0),
        (ExprKind::Call(xf, x), ExprKind::Call(yf, y)) => xf == yf && Arc::ptr_eq(&x.0, &y.0),
        _ => false,
    }
}

fn intern(kind: ExprKind) -> Expr {
    let hash = hash_kind(&kind);
    INTERNER.with(|table| {
        let mut table = table.borrow_mut();
        if table.len() > INTERNER_SOFT_CAP {
            table.clear();
        }
        let bucket = table.entry(hash).or_default();
        for e in bucket.iter() {
            if shallow_eq(&e.0.kind, &kind) {
                return e.clone();
            }
        }
        let e = Expr(Arc::new(ExprInner { kind, hash }));
        bucket.push(e.clone());
        e
    })
}

impl Expr {
    pub fn kind(&self) -> &ExprKind {
        &self.0.kind
    }

    fn hash_value(&self) -> u64 {
        self.0.hash
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(value: f64) -> Expr {
        assert!(value.is_finite(), "expression constants must be finite");
        // normalize -0.0 so hashing and equality see one zero
        let value = if value == 0.0 { 0.0 } else { value };
        intern(ExprKind::Constant(value))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn coord(c: Coordinate) -> Expr {
        intern(ExprKind::Coord(c))
    }

    pub fn base_coord(index: usize) -> Expr {
        Expr::coord(Coordinate::base(index))
    }

    pub fn fiber_coord(index: usize) -> Expr {
        Expr::coord(Coordinate::fiber(index))
    }

    pub fn param(name: impl Into<String>) -> Expr {
        intern(ExprKind::Param(name.into()))
    }

    /// Raw n-ary sum; no rewriting beyond unwrapping trivial arities.
    pub fn sum(terms: Vec<Expr>) -> Expr {
        match terms.len() {
            0 => Expr::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => intern(ExprKind::Sum(terms)),
        }
    }

    /// Raw n-ary product; no rewriting beyond unwrapping trivial arities.
    pub fn product(factors: Vec<Expr>) -> Expr {
        match factors.len() {
            0 => Expr::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => intern(ExprKind::Product(factors)),
        }
    }

    pub fn quotient(num: Expr, den: Expr) -> Expr {
        intern(ExprKind::Quotient(num, den))
    }

    pub fn power(base: Expr, exp: Exponent) -> Expr {
        intern(ExprKind::Power(base, exp))
    }

    pub fn sqrt(inner: Expr) -> Expr {
        Expr::power(inner, Exponent::half(1))
    }

    pub fn negate(inner: Expr) -> Expr {
        intern(ExprKind::Neg(inner))
    }

    pub fn call(func: Func, arg: Expr) -> Expr {
        intern(ExprKind::Call(func, arg))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind(), ExprKind::Constant(c) if *c == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self.kind(), ExprKind::Constant(c) if *c == 1.0)
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.kind() {
            ExprKind::Constant(c) => Some(*c),
            _ => None,
        }
    }

    /// True when the expression contains an `abs` node or a half-integer
    /// power, i.e. places where smoothness holds only on charts away from
    /// kinks and branch points.
    pub fn has_chart_restrictions(&self) -> bool {
        match self.kind() {
            ExprKind::Constant(_) | ExprKind::Coord(_) | ExprKind::Param(_) => false,
            ExprKind::Call(Func::Abs, _) => true,
            ExprKind::Call(_, a) | ExprKind::Neg(a) => a.has_chart_restrictions(),
            ExprKind::Power(b, exp) => !exp.is_integer() || b.has_chart_restrictions(),
            ExprKind::Sum(cs) | ExprKind::Product(cs) => {
                cs.iter().any(Expr::has_chart_restrictions)
            }
            ExprKind::Quotient(a, b) => {
                a.has_chart_restrictions() || b.has_chart_restrictions()
            }
        }
    }

    /// Total structural order: deterministic across runs, used for canonical
    /// term and factor ordering.
    pub fn structural_cmp(&self, other: &Expr) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        fn rank(kind: &ExprKind) -> u8 {
            match kind {
                ExprKind::Constant(_) => 0,
                ExprKind::Coord(_) => 1,
                ExprKind::Param(_) => 2,
                ExprKind::Power(..) => 3,
                ExprKind::Call(..) => 4,
                ExprKind::Product(_) => 5,
                ExprKind::Quotient(..) => 6,
                ExprKind::Sum(_) => 7,
                ExprKind::Neg(_) => 8,
            }
        }
        let (a, b) = (self.kind(), other.kind());
        rank(a).cmp(&rank(b)).then_with(|| match (a, b) {
            (ExprKind::Constant(x), ExprKind::Constant(y)) => x.total_cmp(y),
            (ExprKind::Coord(x), ExprKind::Coord(y)) => x.cmp(y),
            (ExprKind::Param(x), ExprKind::Param(y)) => x.cmp(y),
            (ExprKind::Power(xb, xe), ExprKind::Power(yb, ye)) => {
                xb.structural_cmp(yb).then(xe.twice.cmp(&ye.twice))
            }
            (ExprKind::Call(xf, x), ExprKind::Call(yf, y)) => {
                (*xf as u8).cmp(&(*yf as u8)).then_with(|| x.structural_cmp(y))
            }
            (ExprKind::Sum(xs), ExprKind::Sum(ys)) | (ExprKind::Product(xs), ExprKind::Product(ys)) => {
                xs.len().cmp(&ys.len()).then_with(|| {
                    xs.iter()
                        .zip(ys)
                        .map(|(x, y)| x.structural_cmp(y))
                        .find(|o| *o != Ordering::Equal)
                        .unwrap_or(Ordering::Equal)
                })
            }
            (ExprKind::Quotient(xa, xb), ExprKind::Quotient(ya, yb)) => {
                xa.structural_cmp(ya).then_with(|| xb.structural_cmp(yb))
            }
            (ExprKind::Neg(x), ExprKind::Neg(y)) => x.structural_cmp(y),
            _ => unreachable!("ranks matched distinct variants"),
        })
    }

}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        if self.0.hash != other.0.hash {
            return false;
        }
        match (self.kind(), other.kind()) {
            (ExprKind::Constant(x), ExprKind::Constant(y)) => x.to_bits() == y.to_bits(),
            (ExprKind::Coord(x), ExprKind::Coord(y)) => x == y,
            (ExprKind::Param(x), ExprKind::Param(y)) => x == y,
            (ExprKind::Sum(xs), ExprKind::Sum(ys))
            | (ExprKind::Product(xs), ExprKind::Product(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x == y)
            }
            (ExprKind::Quotient(xa, xb), ExprKind::Quotient(ya, yb)) => xa == ya && xb == yb,
            (ExprKind::Power(xb, xe), ExprKind::Power(yb, ye)) => xe == ye && xb == yb,
            (ExprKind::Neg(x), ExprKind::Neg(y)) => x == y,
            (ExprKind::Call(xf, x), ExprKind::Call(yf, y)) => xf == yf && x == y,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

macro_rules! expr_binop {
    ($trait:ident, $method:ident, $build:expr) => {
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $build;
                f(self.clone(), rhs.clone())
            }
        }
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $build;
                f(self, rhs)
            }
        }
    };
}

expr_binop!(Add, add, |a, b| Expr::sum(vec![a, b]));
expr_binop!(Sub, sub, |a, b| Expr::sum(vec![a, Expr::negate(b)]));
expr_binop!(Mul, mul, |a, b| Expr::product(vec![a, b]));
expr_binop!(Div, div, |a, b| Expr::quotient(a, b));

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::negate(self.clone())
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::negate(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expressions_are_send_and_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Expr>();
    }

    #[test]
    fn interner_shares_equal_nodes() {
        let a = Expr::fiber_coord(1) + Expr::fiber_coord(2);
        let b = Expr::fiber_coord(1) + Expr::fiber_coord(2);
        assert!(Arc::ptr_eq(&a.0, &b.0));
        assert_eq!(a, b);
    }

    #[test]
    fn negative_zero_normalized() {
        assert_eq!(Expr::constant(-0.0), Expr::constant(0.0));
    }

    #[test]
    fn structural_order_is_total_and_consistent() {
        let exprs = [
            Expr::constant(2.0),
            Expr::base_coord(1),
            Expr::fiber_coord(1),
            Expr::param("a"),
            Expr::fiber_coord(1) + Expr::fiber_coord(2),
        ];
        for (i, a) in exprs.iter().enumerate() {
            for (j, b) in exprs.iter().enumerate() {
                let ord = a.structural_cmp(b);
                assert_eq!(ord == Ordering::Equal, i == j);
                assert_eq!(ord.reverse(), b.structural_cmp(a));
            }
        }
    }

    #[test]
    fn exponent_arithmetic() {
        let half = Exponent::half(1);
        assert!(!half.is_integer());
        assert_eq!(half.value(), 0.5);
        assert_eq!(half.minus_one().value(), -0.5);
        assert_eq!(Exponent::integer(3).as_integer(), Some(3));
        assert_eq!(half.checked_mul(&Exponent::integer(2)), Some(Exponent::integer(1)));
        assert_eq!(half.checked_mul(&half), None);
    }
}
