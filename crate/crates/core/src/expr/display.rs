//! Precedence-aware printing. The output re-parses to a semantically equal
//! expression; powers with exponent 1/2 are printed back as `sqrt(...)`.

use std::fmt;

use super::{Expr, ExprKind, Exponent};

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self)
    }
}

fn is_atom(e: &Expr) -> bool {
    match e.kind() {
        ExprKind::Coord(_) | ExprKind::Param(_) | ExprKind::Call(..) => true,
        ExprKind::Constant(c) => *c >= 0.0,
        ExprKind::Power(_, exp) if *exp == Exponent::half(1) => true, // prints as sqrt(..)
        _ => false,
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.kind() {
        ExprKind::Constant(c) => write!(f, "{c}"),
        ExprKind::Coord(c) => write!(f, "{c}"),
        ExprKind::Param(name) => write!(f, "{name}"),
        ExprKind::Sum(terms) => {
            for (i, t) in terms.iter().enumerate() {
                if i == 0 {
                    write_term(f, t)?;
                } else {
                    let (negated, inner) = strip_sign(t);
                    write!(f, "{}", if negated { " - " } else { " + " })?;
                    if matches!(inner.kind(), ExprKind::Sum(_)) {
                        write!(f, "(")?;
                        write_expr(f, &inner)?;
                        write!(f, ")")?;
                    } else {
                        write_term(f, &inner)?;
                    }
                }
            }
            Ok(())
        }
        ExprKind::Product(_) | ExprKind::Quotient(..) => write_term(f, e),
        ExprKind::Power(base, exp) => write_power(f, base, exp),
        ExprKind::Neg(inner) => {
            write!(f, "-")?;
            write_grouped(f, inner, is_atom)
        }
        ExprKind::Call(func, arg) => write!(f, "{}({arg})", func.name()),
    }
}

/// Term sign extraction for sum printing: a term that is a negation or has a
/// negative leading coefficient prints after `-`.
fn strip_sign(t: &Expr) -> (bool, Expr) {
    match t.kind() {
        ExprKind::Neg(inner) => (true, inner.clone()),
        ExprKind::Constant(c) if *c < 0.0 => (true, Expr::constant(-c)),
        ExprKind::Product(fs) => {
            if let ExprKind::Constant(c) = fs[0].kind() {
                if *c < 0.0 {
                    let mut rest = fs.clone();
                    if *c == -1.0 && fs.len() > 1 {
                        rest.remove(0);
                    } else {
                        rest[0] = Expr::constant(-c);
                    }
                    return (true, Expr::product(rest));
                }
            }
            (false, t.clone())
        }
        ExprKind::Quotient(num, den) => {
            let (neg, stripped) = strip_sign(num);
            if neg {
                (true, Expr::quotient(stripped, den.clone()))
            } else {
                (false, t.clone())
            }
        }
        _ => (false, t.clone()),
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, e: &Expr) -> fmt::Result {
    match e.kind() {
        ExprKind::Product(factors) => {
            for (i, factor) in factors.iter().enumerate() {
                if i > 0 {
                    write!(f, "*")?;
                }
                // a non-leading quotient would re-associate: c*a/b reads as (c*a)/b
                let needs_parens = matches!(
                    factor.kind(),
                    ExprKind::Sum(_) | ExprKind::Neg(_)
                ) || (i > 0 && matches!(factor.kind(), ExprKind::Quotient(..)))
                    || (i > 0 && matches!(factor.kind(), ExprKind::Constant(c) if *c < 0.0));
                if needs_parens {
                    write!(f, "(")?;
                    write_expr(f, factor)?;
                    write!(f, ")")?;
                } else {
                    write_expr(f, factor)?;
                }
            }
            Ok(())
        }
        ExprKind::Quotient(num, den) => {
            write_grouped(f, num, |x| {
                !matches!(x.kind(), ExprKind::Sum(_) | ExprKind::Neg(_))
            })?;
            write!(f, "/")?;
            write_grouped(f, den, |x| {
                is_atom(x) || matches!(x.kind(), ExprKind::Power(..))
            })
        }
        _ => write_expr(f, e),
    }
}

fn write_grouped(
    f: &mut fmt::Formatter<'_>,
    e: &Expr,
    bare: impl Fn(&Expr) -> bool,
) -> fmt::Result {
    if bare(e) {
        write_expr(f, e)
    } else {
        write!(f, "(")?;
        write_expr(f, e)?;
        write!(f, ")")
    }
}

fn write_power(f: &mut fmt::Formatter<'_>, base: &Expr, exp: &Exponent) -> fmt::Result {
    if *exp == Exponent::half(1) {
        return write!(f, "sqrt({base})");
    }
    write_grouped(f, base, is_atom)?;
    match exp.as_integer() {
        Some(k) if k >= 0 => write!(f, "^{k}"),
        Some(k) => write!(f, "^({k})"),
        None => write!(f, "^({}/2)", exp.twice()),
    }
}

#[cfg(test)]
mod tests {
    use crate::expr::{evaluate, parse, Point};
    use std::collections::BTreeMap;

    fn roundtrip(src: &str) {
        let params: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let e = parse(src, 2, &params).unwrap();
        let printed = e.to_string();
        let back = parse(&printed, 2, &params).unwrap();
        let pvals: BTreeMap<String, f64> =
            [("a", 1.3), ("b", 0.7), ("c", 2.1)].map(|(k, v)| (k.to_string(), v)).into();
        for (x, y) in [([0.3, -0.2], [1.1, 0.8]), ([-0.5, 0.9], [0.6, 1.7])] {
            let p = Point::new(x.to_vec(), y.to_vec()).unwrap();
            let lhs = evaluate(&e, &p, &pvals).unwrap();
            let rhs = evaluate(&back, &p, &pvals).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()),
                "print/parse drifted for {src}: {printed}"
            );
        }
        // simplified forms round-trip too
        let s = e.simplified();
        let back = parse(&s.to_string(), 2, &params).unwrap();
        let p = Point::new(vec![0.3, -0.2], vec![1.1, 0.8]).unwrap();
        let lhs = evaluate(&s, &p, &pvals).unwrap();
        let rhs = evaluate(&back, &p, &pvals).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn print_parse_preserves_semantics() {
        for src in [
            "y1^2 + y2^2",
            "a*sqrt((y2/y1)^2 + b*(y2/y1) + c)",
            "-y1^2 - 2*y1*y2",
            "x1*x2/y1/y2",
            "(y1 + y2)^(-3/2)",
            "exp(2*x1)*(y1^2 + y2^2)",
            "abs(y2/y1) - sin(x1)*cos(x2)",
            "2/(3*y1) + y2^(5/2)",
        ] {
            roundtrip(src);
        }
    }

    #[test]
    fn negative_coefficients_print_with_minus() {
        let e = parse("y2 - 2*y1", 2, &[]).unwrap().simplified();
        assert_eq!(e.to_string(), "-2*y1 + y2");
    }

    #[test]
    fn sqrt_prints_as_sqrt() {
        let e = parse("sqrt(y1 + y2)", 2, &[]).unwrap();
        assert_eq!(e.to_string(), "sqrt(y1 + y2)");
    }
}
