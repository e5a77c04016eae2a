//! Geometry associated to a spray: nonlinear connection coefficients,
//! horizontal frame, curvature brackets, Berwald curvature and the canonical
//! vector fields.
//!
//! Conventions, for a spray `S = y^i d/dx^i + f^i(x,y) d/dy^i` with `f^i`
//! positive-homogeneous of degree 2 in `y`:
//!
//! ```text
//! G^i_j   = -1/2 df^i/dy^j          connection coefficients
//! G^i_jk  = dG^i_j/dy^k             their fiber derivatives
//! h_i     = d/dx^i - G^a_i d/dy^a   horizontal frame
//! B^l_ijk = -1/2 d^3 f^l / dy^i dy^j dy^k   Berwald curvature
//! C       = y^i d/dy^i              canonical (Liouville) field
//! ```
//!
//! All builders are pure and their outputs immutable, so evaluation across
//! sample points can proceed in parallel without coordination.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{evaluate, Coordinate, EvalError, Expr, Point};
use crate::sample::SampleSet;

#[derive(Debug, Error)]
pub enum SprayError {
    #[error("a spray needs dimension >= 2 (got {0})")]
    DimensionTooSmall(usize),
    #[error("expected {dim} coefficient expressions, got {got}")]
    WrongCoefficientCount { dim: usize, got: usize },
}

/// A spray: dimension `n >= 2` plus the `n` second-order coefficients `f^i`,
/// with default parameter bindings.
#[derive(Debug, Clone)]
pub struct Spray {
    dim: usize,
    coefficients: Vec<Expr>,
    params: BTreeMap<String, f64>,
}

impl Spray {
    pub fn new(
        dim: usize,
        coefficients: Vec<Expr>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self, SprayError> {
        if dim < 2 {
            return Err(SprayError::DimensionTooSmall(dim));
        }
        if coefficients.len() != dim {
            return Err(SprayError::WrongCoefficientCount { dim, got: coefficients.len() });
        }
        let coefficients = coefficients.iter().map(Expr::simplified).collect();
        Ok(Spray { dim, coefficients, params })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficients(&self) -> &[Expr] {
        &self.coefficients
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }
}

/// A vector field on the tangent bundle: `2n` components ordered
/// `(d/dx^1..d/dx^n, d/dy^1..d/dy^n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Expr>,
}

impl VectorField {
    pub fn new(components: Vec<Expr>) -> Self {
        assert!(
            components.len() >= 4 && components.len() % 2 == 0,
            "a vector field on TM has 2n >= 4 components"
        );
        VectorField { components }
    }

    pub fn dim(&self) -> usize {
        self.components.len() / 2
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, slot: usize) -> &Expr {
        &self.components[slot]
    }

    pub fn base_components(&self) -> &[Expr] {
        &self.components[..self.dim()]
    }

    pub fn fiber_components(&self) -> &[Expr] {
        &self.components[self.dim()..]
    }

    /// Evaluate all components at a point.
    pub fn evaluate(
        &self,
        p: &Point,
        params: &BTreeMap<String, f64>,
    ) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| evaluate(c, p, params)).collect()
    }

    /// Lie bracket `[X, Y]^a = X^b dY^a/du^b - Y^b dX^a/du^b` over the
    /// combined chart `u = (x, y)`, exact and simplified.
    pub fn lie_bracket(&self, other: &VectorField) -> VectorField {
        let dim = self.dim();
        assert_eq!(dim, other.dim(), "bracket of fields on different bundles");
        let mut components = Vec::with_capacity(2 * dim);
        for a in 0..2 * dim {
            let mut terms = Vec::new();
            for b in 0..2 * dim {
                let u_b = Coordinate::from_slot(b, dim);
                let dya = other.components[a].differentiate(u_b);
                if !dya.is_zero() && !self.components[b].is_zero() {
                    terms.push(&self.components[b] * &dya);
                }
                let dxa = self.components[a].differentiate(u_b);
                if !dxa.is_zero() && !other.components[b].is_zero() {
                    terms.push(Expr::negate(&other.components[b] * &dxa));
                }
            }
            components.push(Expr::sum(terms).simplified());
        }
        VectorField::new(components)
    }

    /// Scale by an expression factor (component-wise), simplified.
    pub fn scaled(&self, factor: &Expr) -> VectorField {
        VectorField::new(
            self.components.iter().map(|c| (factor * c).simplified()).collect(),
        )
    }
}

impl std::fmt::Display for VectorField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dim = self.dim();
        let mut wrote = false;
        for (slot, c) in self.components.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if wrote {
                write!(f, " + ")?;
            }
            let basis = Coordinate::from_slot(slot, dim);
            write!(f, "({c})*d/d{basis}")?;
            wrote = true;
        }
        if !wrote {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Connection coefficients `G^i_j` and their fiber derivatives `G^i_jk`.
#[derive(Debug, Clone)]
pub struct ConnectionData {
    dim: usize,
    gamma: Vec<Vec<Expr>>,
    gamma_deriv: Vec<Vec<Vec<Expr>>>,
}

impl ConnectionData {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `G^i_j`, indices 1-based.
    pub fn gamma(&self, i: usize, j: usize) -> &Expr {
        &self.gamma[i - 1][j - 1]
    }

    /// `G^i_jk`, indices 1-based.
    pub fn gamma_deriv(&self, i: usize, j: usize, k: usize) -> &Expr {
        &self.gamma_deriv[i - 1][j - 1][k - 1]
    }
}

/// Build the nonlinear connection of a spray.
pub fn connection(spray: &Spray) -> ConnectionData {
    let n = spray.dim();
    let minus_half = Expr::constant(-0.5);
    let mut gamma = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let df = spray.coefficients()[i].differentiate(Coordinate::fiber(j + 1));
            row.push((&minus_half * &df).simplified());
        }
        gamma.push(row);
    }
    let mut gamma_deriv = Vec::with_capacity(n);
    for i in 0..n {
        let mut plane = Vec::with_capacity(n);
        for j in 0..n {
            let mut row = Vec::with_capacity(n);
            for k in 0..n {
                row.push(gamma[i][j].differentiate(Coordinate::fiber(k + 1)));
            }
            plane.push(row);
        }
        gamma_deriv.push(plane);
    }
    ConnectionData { dim: n, gamma, gamma_deriv }
}

/// Horizontal frame `h_i = d/dx^i - G^a_i d/dy^a`.
pub fn horizontal_frame(conn: &ConnectionData) -> Vec<VectorField> {
    let n = conn.dim();
    (1..=n)
        .map(|i| {
            let mut components = vec![Expr::zero(); 2 * n];
            components[i - 1] = Expr::one();
            for alpha in 1..=n {
                components[n + alpha - 1] = Expr::negate(conn.gamma(alpha, i).clone()).simplified();
            }
            VectorField::new(components)
        })
        .collect()
}

/// Berwald curvature `B^l_ijk = -1/2 d^3 f^l / dy^i dy^j dy^k`, totally
/// symmetric in `(i, j, k)`.
#[derive(Debug, Clone)]
pub struct BerwaldCurvature {
    dim: usize,
    // canonical components for i <= j <= k, addressed through `component`
    table: BTreeMap<(usize, usize, usize), Vec<Expr>>,
}

impl BerwaldCurvature {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `B^l_ijk` for 1-based `l, i, j, k` (any order of `i, j, k`).
    pub fn component(&self, l: usize, i: usize, j: usize, k: usize) -> &Expr {
        let key = sorted_triple(i, j, k);
        &self.table[&key][l - 1]
    }

    /// The vertical field `B(., i, j, k)`; its image spans Im B.
    pub fn field(&self, i: usize, j: usize, k: usize) -> VectorField {
        let n = self.dim;
        let key = sorted_triple(i, j, k);
        let mut components = vec![Expr::zero(); 2 * n];
        for l in 0..n {
            components[n + l] = self.table[&key][l].clone();
        }
        VectorField::new(components)
    }

    /// One vertical field per canonical index triple `i <= j <= k`; by total
    /// symmetry these span the image of the curvature.
    pub fn image_fields(&self) -> Vec<VectorField> {
        self.table.keys().map(|&(i, j, k)| self.field(i, j, k)).collect()
    }

    /// True when every component is the literal zero expression.
    pub fn is_symbolically_zero(&self) -> bool {
        self.table.values().flatten().all(Expr::is_zero)
    }

    /// Largest `|B^l_ijk|` over canonical components at a point.
    pub fn max_abs_at(
        &self,
        p: &Point,
        params: &BTreeMap<String, f64>,
    ) -> Result<f64, EvalError> {
        let mut max = 0.0_f64;
        for exprs in self.table.values() {
            for e in exprs {
                max = max.max(evaluate(e, p, params)?.abs());
            }
        }
        Ok(max)
    }
}

fn sorted_triple(i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let mut t = [i, j, k];
    t.sort_unstable();
    (t[0], t[1], t[2])
}

/// Build the Berwald curvature from the connection derivatives:
/// `B^l_ijk = dG^l_ij / dy^k`.
pub fn berwald_curvature(conn: &ConnectionData) -> BerwaldCurvature {
    let n = conn.dim();
    let mut table = BTreeMap::new();
    for i in 1..=n {
        for j in i..=n {
            for k in j..=n {
                let components: Vec<Expr> = (1..=n)
                    .map(|l| conn.gamma_deriv(l, i, j).differentiate(Coordinate::fiber(k)))
                    .collect();
                table.insert((i, j, k), components);
            }
        }
    }
    BerwaldCurvature { dim: n, table }
}

/// Decide Berwald flatness: all components identically zero, or vanishing
/// below `tol` (absolute) at every sample. Quadratic sprays are symbolically
/// flat; non-polynomial ones that flatten only on the sampled chart are
/// caught numerically.
pub fn berwald_flat(
    curv: &BerwaldCurvature,
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<bool, EvalError> {
    if curv.is_symbolically_zero() {
        return Ok(true);
    }
    for p in samples.points() {
        if curv.max_abs_at(p, params)? > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Error)]
pub enum CurvatureError {
    #[error(
        "base component {slot} of [h_{i}, h_{j}] fails to vanish at {point} \
         (|value| = {value:.3e}); this signals an expression engine defect"
    )]
    NonVerticalBracket {
        i: usize,
        j: usize,
        slot: usize,
        value: f64,
        point: Point,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Curvature through the frame brackets: returns `[h_i, h_j]` for `i < j`.
/// Each bracket must be vertical; base components are checked to vanish at
/// the samples beyond `1e-10` as an internal consistency guard.
pub fn curvature_vectors(
    frame: &[VectorField],
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<VectorField>, CurvatureError> {
    let n = frame.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let bracket = frame[i].lie_bracket(&frame[j]);
            for (slot, c) in bracket.base_components().iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                for p in samples.points() {
                    let value = evaluate(c, p, params)?;
                    if value.abs() > 1e-10 {
                        return Err(CurvatureError::NonVerticalBracket {
                            i: i + 1,
                            j: j + 1,
                            slot,
                            value,
                            point: p.clone(),
                        });
                    }
                }
            }
            out.push(bracket);
        }
    }
    Ok(out)
}

/// The canonical (Liouville) field `C = y^i d/dy^i` and the spray field
/// `S = y^i d/dx^i + f^i d/dy^i`.
pub fn canonical_fields(spray: &Spray) -> (VectorField, VectorField) {
    let n = spray.dim();
    let mut c = vec![Expr::zero(); 2 * n];
    let mut s = vec![Expr::zero(); 2 * n];
    for i in 1..=n {
        c[n + i - 1] = Expr::fiber_coord(i);
        s[i - 1] = Expr::fiber_coord(i);
        s[n + i - 1] = spray.coefficients()[i - 1].clone();
    }
    (VectorField::new(c), VectorField::new(s))
}

/// Homogeneity validation: per-sample residual `max_i |y^j df^i/dy^j - 2 f^i|`
/// against the threshold `1e-9 * (1 + max_i |f^i|)`.
#[derive(Debug, Clone)]
pub struct HomogeneityReport {
    pub per_sample: Vec<Result<HomogeneitySample, String>>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct HomogeneitySample {
    pub residual: f64,
    pub scale: f64,
}

impl HomogeneityReport {
    pub fn max_residual(&self) -> f64 {
        self.per_sample
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(|s| s.residual)
            .fold(0.0, f64::max)
    }

    pub fn flagged_samples(&self) -> usize {
        self.per_sample.iter().filter(|r| r.is_err()).count()
    }
}

pub const HOMOGENEITY_REL_TOL: f64 = 1e-9;

/// Check Euler's degree-2 relation `y^j df^i/dy^j = 2 f^i` at the samples.
/// Singular evaluations flag the sample rather than abort.
pub fn validate_homogeneity(spray: &Spray, samples: &SampleSet) -> HomogeneityReport {
    let n = spray.dim();
    let residuals: Vec<Expr> = (0..n)
        .map(|i| {
            let f = &spray.coefficients()[i];
            let mut terms: Vec<Expr> = (1..=n)
                .map(|j| &Expr::fiber_coord(j) * &f.differentiate(Coordinate::fiber(j)))
                .collect();
            terms.push(Expr::negate(&Expr::constant(2.0) * f));
            Expr::sum(terms).simplified()
        })
        .collect();

    let mut per_sample = Vec::with_capacity(samples.points().len());
    let mut pass = true;
    for p in samples.points() {
        let outcome = (|| -> Result<HomogeneitySample, EvalError> {
            let mut residual = 0.0_f64;
            let mut fmax = 0.0_f64;
            for i in 0..n {
                residual = residual.max(evaluate(&residuals[i], p, spray.params())?.abs());
                fmax = fmax.max(evaluate(&spray.coefficients()[i], p, spray.params())?.abs());
            }
            Ok(HomogeneitySample { residual, scale: 1.0 + fmax })
        })();
        match outcome {
            Ok(s) => {
                if s.residual > HOMOGENEITY_REL_TOL * s.scale {
                    pass = false;
                }
                per_sample.push(Ok(s));
            }
            Err(e) => per_sample.push(Err(e.to_string())),
        }
    }
    HomogeneityReport { per_sample, pass }
}

/// Everything derived from one spray that the analysis pipeline consumes.
#[derive(Debug, Clone)]
pub struct SprayContext {
    pub spray: Spray,
    pub connection: ConnectionData,
    pub frame: Vec<VectorField>,
    pub berwald: BerwaldCurvature,
}

impl SprayContext {
    pub fn build(spray: Spray) -> Self {
        let connection = connection(&spray);
        let frame = horizontal_frame(&connection);
        let berwald = berwald_curvature(&connection);
        SprayContext { spray, connection, frame, berwald }
    }

    pub fn dim(&self) -> usize {
        self.spray.dim()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        self.spray.params()
    }

    /// Expressions whose evaluability sample generation must guarantee.
    pub fn registered_expressions(&self) -> Vec<Expr> {
        let n = self.dim();
        let mut out = self.spray.coefficients().to_vec();
        for i in 1..=n {
            for j in 1..=n {
                out.push(self.connection.gamma(i, j).clone());
                for k in j..=n {
                    out.push(self.connection.gamma_deriv(i, j, k).clone());
                }
            }
        }
        for field in self.berwald.image_fields() {
            out.extend(field.fiber_components().iter().cloned());
        }
        out
    }
}


#[cfg(test)]
mod tests {
    use super::testutil::power_spray;
    use super::*;
    use crate::expr::parse;
    use crate::sample::{SampleConfig, SampleSet};

    fn no_params() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn flat_spray() -> Spray {
        let f = vec![Expr::zero(), Expr::zero()];
        Spray::new(2, f, no_params()).unwrap()
    }

    fn samples_for(ctx: &SprayContext) -> SampleSet {
        SampleSet::generate(
            ctx.dim(),
            &SampleConfig::default(),
            &ctx.registered_expressions(),
            ctx.params(),
        )
        .unwrap()
    }

    fn pt(x: [f64; 2], y: [f64; 2]) -> Point {
        Point::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn flat_spray_has_zero_connection() {
        let conn = connection(&flat_spray());
        for i in 1..=2 {
            for j in 1..=2 {
                assert!(conn.gamma(i, j).is_zero());
                for k in 1..=2 {
                    assert!(conn.gamma_deriv(i, j, k).is_zero());
                }
            }
        }
    }

    #[test]
    fn power_spray_connection_matches_hand_differentiation() {
        // f^1 = a y1^(-1) y2^3 at t = 3: G^1_1 = a/2 * y1^(-2) y2^3
        let spray = power_spray(3, 3, 1.0, 1.0);
        let conn = connection(&spray);
        let expected = parse("0.5*a*y2^3/y1^2", 2, &["a".into()]).unwrap().simplified();
        assert_eq!(conn.gamma(1, 1), &expected);
    }

    #[test]
    fn quadratic_spray_connection_is_linear_in_y() {
        // f^i = -gamma^i_jk y^j y^k with constant symbols gives G^i_j = gamma^i_jk y^k
        let f = vec![
            parse("-(y1^2 + 2*y1*y2)", 2, &[]).unwrap(),
            parse("-(3*y2^2)", 2, &[]).unwrap(),
        ];
        let spray = Spray::new(2, f, no_params()).unwrap();
        let conn = connection(&spray);
        assert_eq!(conn.gamma(1, 1), &parse("y1 + y2", 2, &[]).unwrap().simplified());
        assert_eq!(conn.gamma(1, 2), &parse("y1", 2, &[]).unwrap().simplified());
        assert_eq!(conn.gamma(2, 2), &parse("3*y2", 2, &[]).unwrap().simplified());
    }

    #[test]
    fn horizontal_frame_structure() {
        let ctx = SprayContext::build(power_spray(3, 3, 1.0, 1.0));
        let frame = &ctx.frame;
        // base components are the Kronecker rows for any spray
        for (i, h) in frame.iter().enumerate() {
            for (slot, c) in h.base_components().iter().enumerate() {
                if slot == i {
                    assert!(c.is_one());
                } else {
                    assert!(c.is_zero());
                }
            }
        }
        // at (x=0,0; y=1,1) with a=b=1, t=s=3: G^a_1 = 1/2 so the fiber
        // components of h_1 are both -1/2
        let p = pt([0.0, 0.0], [1.0, 1.0]);
        let vals = frame[0].evaluate(&p, ctx.params()).unwrap();
        assert_eq!(&vals[..2], &[1.0, 0.0]);
        assert!((vals[2] + 0.5).abs() < 1e-14);
        assert!((vals[3] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn flat_frame_is_coordinate_frame() {
        let ctx = SprayContext::build(flat_spray());
        for (i, h) in ctx.frame.iter().enumerate() {
            for (slot, c) in h.components().iter().enumerate() {
                if slot == i {
                    assert!(c.is_one());
                } else {
                    assert!(c.is_zero());
                }
            }
        }
    }

    #[test]
    fn berwald_curvature_of_power_spray() {
        // t = 3: B^1_222 = -1/2 d^3(a y1^-1 y2^3)/dy2^3 = -3a/y1
        let spray = power_spray(3, 5, 2.0, 1.0);
        let ctx = SprayContext::build(spray);
        let expected = parse("-3*a/y1", 2, &["a".into()]).unwrap().simplified();
        assert_eq!(ctx.berwald.component(1, 2, 2, 2), &expected);
    }

    #[test]
    fn quadratic_sprays_are_berwald_flat() {
        let f = vec![
            parse("y2^2 - y1^2", 2, &[]).unwrap(),
            parse("-2*y1*y2", 2, &[]).unwrap(),
        ];
        let spray = Spray::new(2, f, no_params()).unwrap();
        let ctx = SprayContext::build(spray);
        assert!(ctx.berwald.is_symbolically_zero());
        let samples = samples_for(&ctx);
        assert!(berwald_flat(&ctx.berwald, &samples, ctx.params(), 1e-12).unwrap());
    }

    #[test]
    fn berwald_symmetry_in_lower_indices() {
        let ctx = SprayContext::build(power_spray(3, 4, 1.0, 2.0));
        let samples = samples_for(&ctx);
        for p in samples.points() {
            for l in 1..=2 {
                let b122 = evaluate(ctx.berwald.component(l, 1, 2, 2), p, ctx.params()).unwrap();
                let b212 = evaluate(ctx.berwald.component(l, 2, 1, 2), p, ctx.params()).unwrap();
                let b221 = evaluate(ctx.berwald.component(l, 2, 2, 1), p, ctx.params()).unwrap();
                assert_eq!(b122, b212);
                assert_eq!(b212, b221);
            }
        }
    }

    #[test]
    fn berwald_contracts_to_zero_with_y() {
        // y^i B^l_ijk = 0: the curvature of a degree-2 spray is degree -1
        let ctx = SprayContext::build(power_spray(3, 4, 1.0, 2.0));
        let samples = samples_for(&ctx);
        for p in samples.points() {
            for l in 1..=2 {
                for j in 1..=2 {
                    for k in 1..=2 {
                        let mut acc = 0.0;
                        for i in 1..=2 {
                            acc += p.y()[i - 1]
                                * evaluate(ctx.berwald.component(l, i, j, k), p, ctx.params())
                                    .unwrap();
                        }
                        assert!(acc.abs() < 1e-9, "contraction {acc} at {p}");
                    }
                }
            }
        }
    }

    #[test]
    fn flat_spray_brackets_vanish() {
        let ctx = SprayContext::build(flat_spray());
        let samples = samples_for(&ctx);
        let curv = curvature_vectors(&ctx.frame, &samples, ctx.params()).unwrap();
        assert_eq!(curv.len(), 1);
        assert!(curv[0].components().iter().all(Expr::is_zero));
    }

    #[test]
    fn canonical_fields_components() {
        let spray = flat_spray();
        let (c, s) = canonical_fields(&spray);
        assert!(c.component(0).is_zero());
        assert!(c.component(1).is_zero());
        assert_eq!(c.component(2), &Expr::fiber_coord(1));
        assert_eq!(c.component(3), &Expr::fiber_coord(2));
        assert_eq!(s.component(0), &Expr::fiber_coord(1));
        assert_eq!(s.component(1), &Expr::fiber_coord(2));
        assert!(s.component(2).is_zero());
        assert!(s.component(3).is_zero());
    }

    #[test]
    fn spray_field_is_horizontal() {
        // S - y^i h_i = 0 for any homogeneous spray
        let ctx = SprayContext::build(power_spray(3, 3, 1.0, 1.0));
        let (_, s) = canonical_fields(&ctx.spray);
        let samples = samples_for(&ctx);
        for p in samples.points() {
            let sv = s.evaluate(p, ctx.params()).unwrap();
            let h1 = ctx.frame[0].evaluate(p, ctx.params()).unwrap();
            let h2 = ctx.frame[1].evaluate(p, ctx.params()).unwrap();
            for slot in 0..4 {
                let combo = p.y()[0] * h1[slot] + p.y()[1] * h2[slot];
                assert!(
                    (sv[slot] - combo).abs() <= 1e-9 * (1.0 + combo.abs()),
                    "slot {slot}: {} vs {combo}",
                    sv[slot]
                );
            }
        }
    }

    #[test]
    fn homogeneity_of_fixtures() {
        let flat = SprayContext::build(flat_spray());
        let samples = samples_for(&flat);
        let report = validate_homogeneity(&flat.spray, &samples);
        assert!(report.pass);
        assert_eq!(report.max_residual(), 0.0);

        let power = SprayContext::build(power_spray(3, 4, 1.0, 1.0));
        let samples = samples_for(&power);
        let report = validate_homogeneity(&power.spray, &samples);
        assert!(report.pass);
        assert!(report.max_residual() <= 1e-12);
    }

    #[test]
    fn degree_three_coefficient_fails_validation() {
        // f^1 = y1^3: residual y^j df/dy^j - 2f = y1^3, so 1 at y=(1,0)
        let f = vec![parse("y1^3", 2, &[]).unwrap(), Expr::zero()];
        let spray = Spray::new(2, f, no_params()).unwrap();
        let points = vec![pt([0.0, 0.0], [1.0, 1e-6])];
        let samples = SampleSet::from_points(points, 0);
        let report = validate_homogeneity(&spray, &samples);
        assert!(!report.pass);
        assert!((report.max_residual() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn connection_gamma_is_degree_one_homogeneous() {
        let ctx = SprayContext::build(power_spray(3, 4, 1.0, 2.0));
        let samples = samples_for(&ctx);
        for i in 1..=2 {
            for j in 1..=2 {
                let g = ctx.connection.gamma(i, j);
                // y^k dG/dy^k - G = 0
                let mut resid = (1..=2)
                    .map(|k| &Expr::fiber_coord(k) * &g.differentiate(Coordinate::fiber(k)))
                    .collect::<Vec<_>>();
                resid.push(Expr::negate(g.clone()));
                let resid = Expr::sum(resid).simplified();
                for p in samples.points() {
                    let v = evaluate(&resid, p, ctx.params()).unwrap();
                    assert!(v.abs() <= 1e-10 * (1.0 + evaluate(g, p, ctx.params()).unwrap().abs()));
                }
            }
        }
    }

    #[test]
    fn gamma_deriv_contracts_back_to_gamma() {
        // y^k G^i_jk = G^i_j (Euler one degree down)
        let ctx = SprayContext::build(power_spray(3, 3, 1.0, 1.0));
        let samples = samples_for(&ctx);
        for p in samples.points() {
            for i in 1..=2 {
                for j in 1..=2 {
                    let mut acc = 0.0;
                    for k in 1..=2 {
                        acc += p.y()[k - 1]
                            * evaluate(ctx.connection.gamma_deriv(i, j, k), p, ctx.params())
                                .unwrap();
                    }
                    let g = evaluate(ctx.connection.gamma(i, j), p, ctx.params()).unwrap();
                    assert!((acc - g).abs() <= 1e-10 * (1.0 + g.abs()));
                }
            }
        }
    }
}
