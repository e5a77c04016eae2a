//! Shared fixtures and independent numeric oracles for the integration
//! suites. Everything here deliberately avoids the code paths under test:
//! finite differences stand in for symbolic derivatives, and the geodesic
//! spray of a metric is produced from Christoffel symbols computed straight
//! from the metric tensor.

#![allow(dead_code)]

use std::collections::BTreeMap;

use metrizer::expr::{evaluate, parse, Coordinate, Expr, Point};
use metrizer::operators::EnergyCandidate;
use metrizer::sample::{SampleConfig, SampleSet};
use metrizer::spraygeo::{Spray, SprayContext, VectorField};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn no_params() -> BTreeMap<String, f64> {
    BTreeMap::new()
}

pub fn pt(x: [f64; 2], y: [f64; 2]) -> Point {
    Point::new(x.to_vec(), y.to_vec()).unwrap()
}

// ---------------------------------------------------------------- fixtures

pub fn flat_spray() -> Spray {
    Spray::new(2, vec![Expr::zero(), Expr::zero()], no_params()).unwrap()
}

/// Spray of the square-root profile system
/// `f^1 = y1^2 * a * sqrt(t^2 + b t + c)`, `f^2 = y1 y2 * a * sqrt(...)`
/// with `t = y2/y1`.
pub fn sqrt_profile_spray(a: f64, b: f64, c: f64) -> Spray {
    let params: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let profile = "a*sqrt((y2/y1)^2 + b*(y2/y1) + c)";
    let f = vec![
        parse(&format!("y1^2*{profile}"), 2, &params).unwrap(),
        parse(&format!("y1*y2*{profile}"), 2, &params).unwrap(),
    ];
    let bind: BTreeMap<String, f64> =
        [("a".to_string(), a), ("b".to_string(), b), ("c".to_string(), c)].into();
    Spray::new(2, f, bind).unwrap()
}

/// Power-coefficient spray `f^1 = a y1^(2-t) y2^t`, `f^2 = b y1^(2-s) y2^s`.
pub fn power_spray(t: i32, s: i32, a: f64, b: f64) -> Spray {
    let params: Vec<String> = vec!["a".into(), "b".into()];
    let f = vec![
        parse(&format!("a*y1^({})*y2^({t})", 2 - t), 2, &params).unwrap(),
        parse(&format!("b*y1^({})*y2^({s})", 2 - s), 2, &params).unwrap(),
    ];
    let bind: BTreeMap<String, f64> = [("a".to_string(), a), ("b".to_string(), b)].into();
    Spray::new(2, f, bind).unwrap()
}

/// The rescaled system `f^1 = l1(x) f`, `f^2 = l2(x) f` with `l1 = 1`,
/// `l2 = x1` and `f = y1 sqrt(y1^2 + y2^2)`.
pub fn lifted_profile_spray() -> Spray {
    let f = vec![
        parse("y1*sqrt(y1^2 + y2^2)", 2, &[]).unwrap(),
        parse("x1*y1*sqrt(y1^2 + y2^2)", 2, &[]).unwrap(),
    ];
    Spray::new(2, f, no_params()).unwrap()
}

/// Geodesic spray of the metric `g = exp(2 x1) (dx1^2 + dx2^2)` built by the
/// Christoffel oracle, paired with its energy `E = exp(2 x1)(y1^2+y2^2)/2`.
pub fn exp_metric_fixture() -> (SprayContext, EnergyCandidate) {
    let g = vec![
        vec![
            parse("exp(2*x1)", 2, &[]).unwrap(),
            Expr::zero(),
        ],
        vec![
            Expr::zero(),
            parse("exp(2*x1)", 2, &[]).unwrap(),
        ],
    ];
    let spray = christoffel_spray(&g);
    let energy = EnergyCandidate::new(parse("0.5*exp(2*x1)*(y1^2 + y2^2)", 2, &[]).unwrap());
    (SprayContext::build(spray), energy)
}

/// Default sample set for a context, registering its derived expressions.
pub fn default_samples(ctx: &SprayContext) -> SampleSet {
    SampleSet::generate(
        ctx.dim(),
        &SampleConfig::default(),
        &ctx.registered_expressions(),
        ctx.params(),
    )
    .unwrap()
}

// ------------------------------------------------------ Christoffel oracle

/// Build the geodesic spray `f^i = -gamma^i_jk(x) y^j y^k` of a 2x2 metric
/// given symbolically, via
/// `gamma^i_jk = 1/2 g^il (dg_lj/dx^k + dg_lk/dx^j - dg_jk/dx^l)`.
/// This is the independent route against which the variational operators
/// are checked: a spray produced here must satisfy them exactly.
pub fn christoffel_spray(metric: &[Vec<Expr>]) -> Spray {
    let n = 2usize;
    // adjugate inverse of the 2x2 metric
    let det = (&(&metric[0][0] * &metric[1][1]) - &(&metric[0][1] * &metric[1][0])).simplified();
    let inv = [
        [
            Expr::quotient(metric[1][1].clone(), det.clone()).simplified(),
            Expr::quotient(Expr::negate(metric[0][1].clone()), det.clone()).simplified(),
        ],
        [
            Expr::quotient(Expr::negate(metric[1][0].clone()), det.clone()).simplified(),
            Expr::quotient(metric[0][0].clone(), det.clone()).simplified(),
        ],
    ];

    let dg = |l: usize, j: usize, k: usize| -> Expr {
        metric[l][j].differentiate(Coordinate::base(k + 1))
    };

    let mut coefficients = Vec::with_capacity(n);
    for i in 0..n {
        let mut terms = Vec::new();
        for j in 0..n {
            for k in 0..n {
                // gamma^i_jk
                let mut inner = Vec::new();
                for l in 0..n {
                    let sum = Expr::sum(vec![
                        dg(l, j, k),
                        dg(l, k, j),
                        Expr::negate(dg(j, k, l)),
                    ]);
                    inner.push(&inv[i][l] * &sum);
                }
                let gamma = (&Expr::constant(0.5) * &Expr::sum(inner)).simplified();
                terms.push(Expr::negate(
                    &(&gamma * &Expr::fiber_coord(j + 1)) * &Expr::fiber_coord(k + 1),
                ));
            }
        }
        coefficients.push(Expr::sum(terms).simplified());
    }
    Spray::new(n, coefficients, no_params()).unwrap()
}

// -------------------------------------------------- finite-difference oracles

/// Central finite difference of `e` along one flat slot.
pub fn fd_partial(
    e: &Expr,
    p: &Point,
    slot: usize,
    h: f64,
    params: &BTreeMap<String, f64>,
) -> Option<f64> {
    let plus = evaluate(e, &p.nudged(slot, h), params).ok()?;
    let minus = evaluate(e, &p.nudged(slot, -h), params).ok()?;
    Some((plus - minus) / (2.0 * h))
}

/// Finite-difference Lie bracket `[X, Y]^a = X^b dY^a - Y^b dX^a` with all
/// partial derivatives replaced by central differences.
pub fn fd_bracket(
    x: &VectorField,
    y: &VectorField,
    p: &Point,
    h: f64,
    params: &BTreeMap<String, f64>,
) -> Option<Vec<f64>> {
    let dim = x.dim();
    let xv = x.evaluate(p, params).ok()?;
    let yv = y.evaluate(p, params).ok()?;
    let mut out = vec![0.0; 2 * dim];
    for a in 0..2 * dim {
        let mut acc = 0.0;
        for b in 0..2 * dim {
            acc += xv[b] * fd_partial(y.component(a), p, b, h, params)?;
            acc -= yv[b] * fd_partial(x.component(a), p, b, h, params)?;
        }
        out[a] = acc;
    }
    Some(out)
}

// ------------------------------------------------------- random generators

/// Random polynomial in `(x1, x2, y1, y2)` with per-variable degree <= 2.
pub fn random_polynomial(rng: &mut ChaCha8Rng, monomials: usize) -> Expr {
    let mut terms = Vec::with_capacity(monomials);
    for _ in 0..monomials {
        let coeff = rng.random_range(-2.0..2.0);
        let mut factors = vec![Expr::constant(coeff)];
        for (kind, index) in [(0, 1), (0, 2), (1, 1), (1, 2)] {
            let degree: u32 = rng.random_range(0..=2);
            let base = if kind == 0 {
                Expr::base_coord(index)
            } else {
                Expr::fiber_coord(index)
            };
            for _ in 0..degree {
                factors.push(base.clone());
            }
        }
        terms.push(Expr::product(factors));
    }
    Expr::sum(terms).simplified()
}

/// Random polynomial vector field on TM (n = 2).
pub fn random_polynomial_field(rng: &mut ChaCha8Rng, monomials: usize) -> VectorField {
    VectorField::new((0..4).map(|_| random_polynomial(rng, monomials)).collect())
}

/// Random point in the default sampling box.
pub fn random_point(rng: &mut ChaCha8Rng) -> Point {
    let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let y = vec![rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)];
    Point::new(x, y).unwrap()
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
