//! Exact symbolic partial derivatives.
//!
//! Construction uses cheap inline short-circuits (0 + e, 0 * e, constant
//! folds) so that intermediate derivative trees of nested radicals stay
//! small, then the result is fully simplified. Derivatives of shared
//! subterms are memoized per call, preserving DAG sharing.

use std::collections::HashMap;

use super::{Coordinate, Expr, ExprKind, Func};

/// Exact partial derivative of `e` with respect to `v`, simplified.
///
/// `abs` differentiates to the sign-guarded form `arg*arg' / abs(arg)`,
/// which is valid away from the kink and raises a singular-evaluation error
/// exactly on it.
pub fn differentiate(e: &Expr, v: Coordinate) -> Expr {
    let mut d = Differentiator { var: v, memo: HashMap::new() };
    d.derive(e).simplified()
}

impl Expr {
    pub fn differentiate(&self, v: Coordinate) -> Expr {
        differentiate(self, v)
    }
}

struct Differentiator {
    var: Coordinate,
    memo: HashMap<usize, Expr>,
}

impl Differentiator {
    fn derive(&mut self, e: &Expr) -> Expr {
        if let Some(hit) = self.memo.get(&e.ptr_id()) {
            return hit.clone();
        }
        let result = match e.kind() {
            ExprKind::Constant(_) | ExprKind::Param(_) => Expr::zero(),
            ExprKind::Coord(c) => {
                if *c == self.var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            ExprKind::Sum(terms) => {
                let parts: Vec<Expr> = terms.iter().map(|t| self.derive(t)).collect();
                smart_sum(parts)
            }
            ExprKind::Product(factors) => {
                let derivs: Vec<Expr> = factors.iter().map(|f| self.derive(f)).collect();
                let mut terms = Vec::with_capacity(factors.len());
                for (i, df) in derivs.iter().enumerate() {
                    if df.is_zero() {
                        continue;
                    }
                    let mut fs: Vec<Expr> = Vec::with_capacity(factors.len());
                    for (j, f) in factors.iter().enumerate() {
                        fs.push(if i == j { df.clone() } else { f.clone() });
                    }
                    terms.push(smart_product(fs));
                }
                smart_sum(terms)
            }
            ExprKind::Quotient(num, den) => {
                let dnum = self.derive(num);
                let dden = self.derive(den);
                // (u/v)' = (u'v - uv') / v^2
                let lhs = smart_product(vec![dnum, den.clone()]);
                let rhs = smart_product(vec![num.clone(), dden]);
                let numerator = smart_sub(lhs, rhs);
                if numerator.is_zero() {
                    Expr::zero()
                } else {
                    Expr::quotient(numerator, Expr::power(den.clone(), super::Exponent::integer(2)))
                }
            }
            ExprKind::Power(base, exp) => {
                let dbase = self.derive(base);
                if dbase.is_zero() {
                    Expr::zero()
                } else {
                    // (u^p)' = p * u^(p-1) * u'
                    let down = exp.minus_one();
                    let scaled = if down.is_zero() {
                        Expr::constant(exp.value())
                    } else {
                        smart_product(vec![
                            Expr::constant(exp.value()),
                            Expr::power(base.clone(), down),
                        ])
                    };
                    smart_product(vec![scaled, dbase])
                }
            }
            ExprKind::Neg(inner) => {
                let di = self.derive(inner);
                if di.is_zero() {
                    Expr::zero()
                } else {
                    Expr::negate(di)
                }
            }
            ExprKind::Call(func, arg) => {
                let darg = self.derive(arg);
                if darg.is_zero() {
                    Expr::zero()
                } else {
                    match func {
                        Func::Exp => smart_product(vec![e.clone(), darg]),
                        Func::Log => Expr::quotient(darg, arg.clone()),
                        Func::Sin => smart_product(vec![Expr::call(Func::Cos, arg.clone()), darg]),
                        Func::Cos => Expr::negate(smart_product(vec![
                            Expr::call(Func::Sin, arg.clone()),
                            darg,
                        ])),
                        Func::Abs => Expr::quotient(
                            smart_product(vec![arg.clone(), darg]),
                            e.clone(),
                        ),
                    }
                }
            }
        };
        self.memo.insert(e.ptr_id(), result.clone());
        result
    }
}

fn smart_sum(terms: Vec<Expr>) -> Expr {
    let mut kept: Vec<Expr> = Vec::with_capacity(terms.len());
    let mut consts = 0.0;
    for t in terms {
        if t.is_zero() {
            continue;
        }
        match t.as_constant() {
            Some(c) => consts += c,
            None => kept.push(t),
        }
    }
    if consts != 0.0 {
        kept.push(Expr::constant(consts));
    }
    Expr::sum(kept)
}

fn smart_sub(a: Expr, b: Expr) -> Expr {
    if b.is_zero() {
        return a;
    }
    if a.is_zero() {
        return Expr::negate(b);
    }
    Expr::sum(vec![a, Expr::negate(b)])
}

fn smart_product(factors: Vec<Expr>) -> Expr {
    let mut kept: Vec<Expr> = Vec::with_capacity(factors.len());
    let mut consts = 1.0;
    for f in factors {
        if f.is_zero() {
            return Expr::zero();
        }
        match f.as_constant() {
            Some(c) => consts *= c,
            None => kept.push(f),
        }
    }
    if consts == 0.0 {
        return Expr::zero();
    }
    if consts != 1.0 {
        kept.insert(0, Expr::constant(consts));
    }
    Expr::product(kept)
}
