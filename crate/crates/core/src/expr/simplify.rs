//! Sound local simplification: constant folding, 0/1 identities, flattening
//! of nested sums/products, collection of numeric coefficients and of
//! repeated factors into powers. No factoring, no radical denesting; every
//! rewrite preserves the value at all points where the input is non-singular.
//!
//! Normal forms produced here:
//! - sums are flat, terms canonically ordered, like terms merged under a
//!   single numeric coefficient, no zero terms;
//! - products are flat, constant-free except for one leading coefficient,
//!   factors grouped into powers and canonically ordered;
//! - negative exponents are hoisted into a quotient `num / den` whose
//!   denominator carries no numeric coefficient;
//! - `Neg` never survives (it folds into the coefficient).

use std::collections::HashMap;

use super::{Expr, ExprKind, Exponent, Func};

/// Simplify an expression to its normal form. Idempotent: simplifying a
/// simplified expression returns a structurally equal one.
pub fn simplify(e: &Expr) -> Expr {
    Simplifier::default().run(e)
}

impl Expr {
    pub fn simplified(&self) -> Expr {
        simplify(self)
    }
}

#[derive(Default)]
struct Simplifier {
    memo: HashMap<usize, Expr>,
}

impl Simplifier {
    fn run(&mut self, e: &Expr) -> Expr {
        if let Some(hit) = self.memo.get(&e.ptr_id()) {
            return hit.clone();
        }
        let result = match e.kind() {
            ExprKind::Constant(_) | ExprKind::Coord(_) | ExprKind::Param(_) => e.clone(),
            ExprKind::Sum(terms) => {
                let simplified: Vec<Expr> = terms.iter().map(|t| self.run(t)).collect();
                normalize_sum(&simplified)
            }
            ExprKind::Product(factors) => {
                let parts: Vec<(Expr, Exponent)> = factors
                    .iter()
                    .map(|f| (self.run(f), Exponent::integer(1)))
                    .collect();
                normalize_product(parts)
            }
            ExprKind::Quotient(num, den) => {
                let num = self.run(num);
                let den = self.run(den);
                normalize_product(vec![
                    (num, Exponent::integer(1)),
                    (den, Exponent::integer(-1)),
                ])
            }
            ExprKind::Power(base, exp) => {
                let base = self.run(base);
                normalize_product(vec![(base, *exp)])
            }
            ExprKind::Neg(inner) => {
                let inner = self.run(inner);
                normalize_sum(&[scale_term(-1.0, &inner)])
            }
            ExprKind::Call(func, arg) => {
                let arg = self.run(arg);
                normalize_call(*func, arg)
            }
        };
        self.memo.insert(e.ptr_id(), result.clone());
        result
    }
}

/// Decompose `expr^outer` into primitive `(base, exponent)` factors and an
/// accumulated numeric coefficient. Only value-preserving splits are taken:
/// products and quotients distribute under integer exponents, nested powers
/// merge when the merged exponent keeps the original domain.
fn decompose_factor(
    expr: &Expr,
    outer: Exponent,
    coeff: &mut f64,
    out: &mut Vec<(Expr, Exponent)>,
) {
    if outer.is_zero() {
        return; // expr^0 == 1
    }
    match expr.kind() {
        ExprKind::Constant(c) => {
            if let Some(folded) = fold_pow(*c, outer) {
                *coeff *= folded;
            } else {
                out.push((expr.clone(), outer));
            }
        }
        ExprKind::Product(factors) if outer.is_integer() => {
            for f in factors {
                decompose_factor(f, outer, coeff, out);
            }
        }
        ExprKind::Quotient(num, den) if outer.is_integer() => {
            decompose_factor(num, outer, coeff, out);
            decompose_factor(den, outer.negate(), coeff, out);
        }
        ExprKind::Power(inner_base, inner_exp) => {
            if let Some(merged) = merge_exponents(inner_exp, &outer) {
                decompose_factor(inner_base, merged, coeff, out);
            } else {
                out.push((expr.clone(), outer));
            }
        }
        ExprKind::Neg(inner) => {
            // neg nodes reach here only from raw (unsimplified) input
            if let Some(k) = outer.as_integer() {
                if k.rem_euclid(2) == 1 {
                    *coeff = -*coeff;
                }
                decompose_factor(inner, outer, coeff, out);
            } else {
                out.push((expr.clone(), outer));
            }
        }
        _ => out.push((expr.clone(), outer)),
    }
}

/// `(base^inner)^outer -> base^(inner*outer)` when sound. Integer outer
/// exponents always merge; a square root absorbs only odd integer inner
/// exponents (an even one would silently drop the sign of the base).
fn merge_exponents(inner: &Exponent, outer: &Exponent) -> Option<Exponent> {
    let merged = inner.checked_mul(outer)?;
    if outer.is_integer() {
        return Some(merged);
    }
    match inner.as_integer() {
        Some(k) if k.rem_euclid(2) == 1 => Some(merged),
        _ => None,
    }
}

/// Constant power with a finite, real result.
fn fold_pow(base: f64, exp: Exponent) -> Option<f64> {
    let value = if exp.is_integer() {
        let k = exp.as_integer().unwrap();
        if base == 0.0 && k < 0 {
            return None;
        }
        base.powi(k)
    } else {
        if base < 0.0 || (base == 0.0 && exp.twice() < 0) {
            return None;
        }
        base.powf(exp.value())
    };
    value.is_finite().then_some(value)
}

/// Rebuild the normal form of a product given primitive factors.
fn normalize_product(parts: Vec<(Expr, Exponent)>) -> Expr {
    let mut coeff = 1.0;
    let mut factors: Vec<(Expr, Exponent)> = Vec::new();
    for (expr, exp) in parts {
        decompose_factor(&expr, exp, &mut coeff, &mut factors);
    }
    if coeff == 0.0 {
        return Expr::zero();
    }

    // group equal bases; sort first so grouping is order-independent
    factors.sort_by(|a, b| a.0.structural_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut grouped: Vec<(Expr, Exponent)> = Vec::with_capacity(factors.len());
    for (base, exp) in factors {
        match grouped.last_mut() {
            Some((prev, acc)) if *prev == base => *acc = acc.add(&exp),
            _ => grouped.push((base, exp)),
        }
    }
    grouped.retain(|(_, exp)| !exp.is_zero());

    // a grouped exponent may have become foldable (e.g. sqrt(2)*sqrt(2))
    let mut kept: Vec<(Expr, Exponent)> = Vec::with_capacity(grouped.len());
    let mut zero_denominator = false;
    for (base, exp) in grouped {
        if let Some(c) = base.as_constant() {
            if let Some(folded) = fold_pow(c, exp) {
                coeff *= folded;
                continue;
            }
            // a literal zero under a negative exponent makes the whole
            // product singular everywhere; absorb the denominator into a
            // bare zero so the form is a fixpoint
            if c == 0.0 && exp.twice() < 0 {
                zero_denominator = true;
                continue;
            }
        }
        kept.push((base, exp));
    }
    if coeff == 0.0 {
        return Expr::zero();
    }
    if zero_denominator {
        let numerator: Vec<Expr> = kept
            .into_iter()
            .filter(|(_, exp)| exp.twice() > 0)
            .map(|(base, exp)| apply_exponent(base, exp))
            .collect();
        return Expr::quotient(assemble_product(coeff, numerator), Expr::zero());
    }

    let mut numerator: Vec<Expr> = Vec::new();
    let mut denominator: Vec<Expr> = Vec::new();
    for (base, exp) in kept {
        if exp.twice() > 0 {
            numerator.push(apply_exponent(base, exp));
        } else {
            denominator.push(apply_exponent(base, exp.negate()));
        }
    }

    let num = assemble_product(coeff, numerator);
    if denominator.is_empty() {
        num
    } else {
        Expr::quotient(num, Expr::product(denominator))
    }
}

fn apply_exponent(base: Expr, exp: Exponent) -> Expr {
    if exp.is_one() {
        base
    } else {
        Expr::power(base, exp)
    }
}

fn assemble_product(coeff: f64, factors: Vec<Expr>) -> Expr {
    if factors.is_empty() {
        return Expr::constant(coeff);
    }
    if coeff == 1.0 {
        return Expr::product(factors);
    }
    // a numeric coefficient on a lone sum spreads over its terms
    if factors.len() == 1 {
        if let ExprKind::Sum(terms) = factors[0].kind() {
            return distribute_over_sum(coeff, terms);
        }
    }
    let mut all = Vec::with_capacity(factors.len() + 1);
    all.push(Expr::constant(coeff));
    all.extend(factors);
    Expr::product(all)
}

fn distribute_over_sum(coeff: f64, terms: &[Expr]) -> Expr {
    let mut scaled = Vec::with_capacity(terms.len());
    for t in terms {
        let (c, core) = term_parts(t);
        let s = scale_term(coeff * c, &core);
        if !s.is_zero() {
            scaled.push(s);
        }
    }
    Expr::sum(scaled)
}

/// Split a simplified term into `(numeric coefficient, core)`. The core of a
/// pure constant is 1.
fn term_parts(term: &Expr) -> (f64, Expr) {
    match term.kind() {
        ExprKind::Constant(c) => (*c, Expr::one()),
        ExprKind::Product(factors) => match factors[0].kind() {
            ExprKind::Constant(c) => (*c, Expr::product(factors[1..].to_vec())),
            _ => (1.0, term.clone()),
        },
        ExprKind::Quotient(num, den) => {
            let (c, num_core) = term_parts(num);
            (c, Expr::quotient(num_core, den.clone()))
        }
        _ => (1.0, term.clone()),
    }
}

/// Re-attach a coefficient to a term core, matching the product normal form.
fn scale_term(coeff: f64, core: &Expr) -> Expr {
    if coeff == 0.0 {
        return Expr::zero();
    }
    if core.is_one() {
        return Expr::constant(coeff);
    }
    match core.kind() {
        ExprKind::Constant(c) => Expr::constant(coeff * c),
        ExprKind::Product(factors) => {
            let (coeff, rest) = match factors[0].kind() {
                ExprKind::Constant(c) => (coeff * c, &factors[1..]),
                _ => (coeff, &factors[..]),
            };
            if coeff == 0.0 {
                return Expr::zero();
            }
            if coeff == 1.0 {
                return Expr::product(rest.to_vec());
            }
            let mut all = Vec::with_capacity(rest.len() + 1);
            all.push(Expr::constant(coeff));
            all.extend(rest.iter().cloned());
            Expr::product(all)
        }
        ExprKind::Quotient(num, den) => Expr::quotient(scale_term(coeff, num), den.clone()),
        _ => {
            if coeff == 1.0 {
                core.clone()
            } else {
                Expr::product(vec![Expr::constant(coeff), core.clone()])
            }
        }
    }
}

fn flatten_sum_into(e: &Expr, mult: f64, out: &mut Vec<(f64, Expr)>) {
    match e.kind() {
        ExprKind::Sum(terms) => {
            for t in terms {
                flatten_sum_into(t, mult, out);
            }
        }
        _ => {
            let (c, core) = term_parts(e);
            // a constant times a sum spreads over the terms so that
            // structurally equal parts can cancel
            if let ExprKind::Sum(parts) = core.kind() {
                for p in parts {
                    flatten_sum_into(p, mult * c, out);
                }
            } else {
                out.push((mult * c, core));
            }
        }
    }
}

fn normalize_sum(terms: &[Expr]) -> Expr {
    let mut flat: Vec<(f64, Expr)> = Vec::new();
    for t in terms {
        flatten_sum_into(t, 1.0, &mut flat);
    }
    flat.sort_by(|a, b| a.1.structural_cmp(&b.1));

    let mut merged: Vec<(f64, Expr)> = Vec::with_capacity(flat.len());
    for (c, core) in flat {
        match merged.last_mut() {
            Some((acc, prev)) if *prev == core => *acc += c,
            _ => merged.push((c, core)),
        }
    }

    let mut out: Vec<Expr> = Vec::with_capacity(merged.len());
    for (c, core) in merged {
        if c == 0.0 {
            continue;
        }
        out.push(scale_term(c, &core));
    }
    match out.len() {
        0 => Expr::zero(),
        1 => out.into_iter().next().unwrap(),
        _ => Expr::sum(out),
    }
}

fn normalize_call(func: Func, arg: Expr) -> Expr {
    if let Some(c) = arg.as_constant() {
        let value = match func {
            Func::Exp => c.exp(),
            Func::Log => {
                if c > 0.0 {
                    c.ln()
                } else {
                    f64::NAN
                }
            }
            Func::Sin => c.sin(),
            Func::Cos => c.cos(),
            Func::Abs => c.abs(),
        };
        if value.is_finite() {
            return Expr::constant(value);
        }
    }
    Expr::call(func, arg)
}
