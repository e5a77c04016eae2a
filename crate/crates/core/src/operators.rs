//! Residuals of the variational operators on candidate energy functions.
//!
//! For an energy candidate `E` over a spray with connection `G^i_j`, frame
//! `h_i` and Berwald curvature `B^l_ijk`, the evaluated families are:
//!
//! ```text
//! homogeneity       y^i dE/dy^i - 2E
//! euler_lagrange    w_i = y^j d2E/dx^j dy^i + f^j d2E/dy^j dy^i - dE/dx^i
//! horizontal        h_i(E) = dE/dx^i - G^a_i dE/dy^a
//! curvature         dE([h_i, h_j])            (bracket variant, i < j)
//!                   B^l_ijk dE/dy^l           (Berwald variant, i <= j <= k)
//! metric_compat     dg_jk/dx^i - G^l_i dg_jk/dy^l - G^l_ik g_lj - G^l_ij g_lk
//! ```
//!
//! where `g_jk = d2E/dy^j dy^k` is the fundamental tensor. The identity
//!
//! ```text
//! metric_compat(i,j,k) = d2(h_i E)/dy^j dy^k + B^l_ijk dE/dy^l
//! ```
//!
//! ties the third-order family to the reduced first-order system; its gap is
//! exposed by [`check_reduction_identity`] as a numeric self-check, since the
//! three terms are assembled through independent code paths.
//!
//! Residual norms are max-abs over components, with the relative scale
//! `1 + |E| + |grad E|` at the sample.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{evaluate, Coordinate, EvalError, Expr, Point};
use crate::sample::SampleSet;
use crate::spraygeo::SprayContext;

/// A candidate energy function, with an optional note restricting the chart
/// it is claimed on (kinks of `abs`, signs under roots, ...).
#[derive(Debug, Clone)]
pub struct EnergyCandidate {
    expr: Expr,
    domain_note: Option<String>,
}

impl EnergyCandidate {
    pub fn new(expr: Expr) -> Self {
        EnergyCandidate { expr: expr.simplified(), domain_note: None }
    }

    pub fn with_domain_note(expr: Expr, note: impl Into<String>) -> Self {
        EnergyCandidate { expr: expr.simplified(), domain_note: Some(note.into()) }
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn domain_note(&self) -> Option<&str> {
        self.domain_note.as_deref()
    }
}

/// Residual values of one operator family at one sample.
#[derive(Debug, Clone)]
pub struct ResidualRow {
    pub components: Vec<f64>,
    /// `1 + |E| + |grad E|` at the sample.
    pub scale: f64,
}

impl ResidualRow {
    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn rel(&self) -> f64 {
        self.max_abs() / self.scale
    }
}

/// Per-sample residuals of one operator family; singular evaluations flag
/// the sample instead of aborting the table.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub rows: Vec<Result<ResidualRow, String>>,
}

impl ResidualReport {
    pub fn max_rel(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(ResidualRow::rel)
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| r.as_ref().ok())
            .map(ResidualRow::max_abs)
            .fold(0.0, f64::max)
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(Result::is_ok)
    }

    pub fn flagged(&self) -> usize {
        self.rows.iter().filter(|r| r.is_err()).count()
    }
}

fn scale_exprs(energy: &EnergyCandidate, dim: usize) -> Vec<Expr> {
    let mut grad = Vec::with_capacity(2 * dim);
    for slot in 0..2 * dim {
        grad.push(energy.expr.differentiate(Coordinate::from_slot(slot, dim)));
    }
    grad
}

fn row_scale(
    energy: &EnergyCandidate,
    grad: &[Expr],
    p: &Point,
    params: &BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    let e = evaluate(&energy.expr, p, params)?;
    let mut norm2 = 0.0;
    for g in grad {
        let v = evaluate(g, p, params)?;
        norm2 += v * v;
    }
    Ok(1.0 + e.abs() + norm2.sqrt())
}

fn tabulate(
    components: &[Expr],
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let grad = scale_exprs(energy, ctx.dim());
    let rows = samples
        .points()
        .iter()
        .map(|p| {
            let row = (|| -> Result<ResidualRow, EvalError> {
                let mut values = Vec::with_capacity(components.len());
                for c in components {
                    values.push(evaluate(c, p, ctx.params())?);
                }
                Ok(ResidualRow { components: values, scale: row_scale(energy, &grad, p, ctx.params())? })
            })();
            row.map_err(|e| e.to_string())
        })
        .collect();
    ResidualReport { rows }
}

/// Degree-2 homogeneity residual `y^i dE/dy^i - 2E`.
pub fn residual_homogeneity(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let n = ctx.dim();
    let e = &energy.expr;
    let mut terms: Vec<Expr> = (1..=n)
        .map(|i| &Expr::fiber_coord(i) * &e.differentiate(Coordinate::fiber(i)))
        .collect();
    terms.push(Expr::negate(&Expr::constant(2.0) * e));
    let residual = Expr::sum(terms).simplified();
    tabulate(&[residual], energy, ctx, samples)
}

/// Euler-Lagrange residual components
/// `w_i = y^j d2E/dx^j dy^i + f^j d2E/dy^j dy^i - dE/dx^i`.
pub fn residual_euler_lagrange(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let n = ctx.dim();
    let e = &energy.expr;
    let components: Vec<Expr> = (1..=n)
        .map(|i| {
            let dei = e.differentiate(Coordinate::fiber(i));
            let mut terms = Vec::with_capacity(2 * n + 1);
            for j in 1..=n {
                terms.push(&Expr::fiber_coord(j) * &dei.differentiate(Coordinate::base(j)));
                terms.push(
                    &ctx.spray.coefficients()[j - 1] * &dei.differentiate(Coordinate::fiber(j)),
                );
            }
            terms.push(Expr::negate(e.differentiate(Coordinate::base(i))));
            Expr::sum(terms).simplified()
        })
        .collect();
    tabulate(&components, energy, ctx, samples)
}

/// Horizontal derivatives `h_i(E) = dE/dx^i - G^a_i dE/dy^a`.
pub fn residual_horizontal(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let components = horizontal_derivative_exprs(energy, ctx);
    tabulate(&components, energy, ctx, samples)
}

fn horizontal_derivative_exprs(energy: &EnergyCandidate, ctx: &SprayContext) -> Vec<Expr> {
    let n = ctx.dim();
    let e = &energy.expr;
    (1..=n)
        .map(|i| {
            let mut terms = vec![e.differentiate(Coordinate::base(i))];
            for alpha in 1..=n {
                terms.push(Expr::negate(
                    &ctx.connection.gamma(alpha, i).clone()
                        * &e.differentiate(Coordinate::fiber(alpha)),
                ));
            }
            Expr::sum(terms).simplified()
        })
        .collect()
}

/// Curvature compatibility residuals, both variants.
pub struct CurvatureResiduals {
    /// `dE([h_i, h_j])` for `i < j`.
    pub bracket: ResidualReport,
    /// `B^l_ijk dE/dy^l` for `i <= j <= k`.
    pub berwald: ResidualReport,
}

pub fn residual_curvature(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> CurvatureResiduals {
    let n = ctx.dim();
    let e = &energy.expr;
    let grad: Vec<Expr> = (0..2 * n)
        .map(|slot| e.differentiate(Coordinate::from_slot(slot, n)))
        .collect();

    let mut bracket_components = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let br = ctx.frame[i].lie_bracket(&ctx.frame[j]);
            let terms: Vec<Expr> = (0..2 * n)
                .filter(|slot| !br.component(*slot).is_zero())
                .map(|slot| br.component(slot) * &grad[slot])
                .collect();
            bracket_components.push(Expr::sum(terms).simplified());
        }
    }

    let mut berwald_components = Vec::new();
    for i in 1..=n {
        for j in i..=n {
            for k in j..=n {
                let terms: Vec<Expr> = (1..=n)
                    .map(|l| ctx.berwald.component(l, i, j, k) * &grad[n + l - 1])
                    .collect();
                berwald_components.push(Expr::sum(terms).simplified());
            }
        }
    }

    CurvatureResiduals {
        bracket: tabulate(&bracket_components, energy, ctx, samples),
        berwald: tabulate(&berwald_components, energy, ctx, samples),
    }
}

/// Index triples `(i, j, k)` with `j <= k` for the third-order family.
pub fn metric_compat_index_triples(n: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 1..=n {
        for j in 1..=n {
            for k in j..=n {
                out.push((i, j, k));
            }
        }
    }
    out
}

fn metric_compat_exprs(energy: &EnergyCandidate, ctx: &SprayContext) -> Vec<Expr> {
    let n = ctx.dim();
    let e = &energy.expr;
    // fundamental tensor entries g_jk = d2E/dy^j dy^k
    let mut g = vec![vec![Expr::zero(); n + 1]; n + 1];
    for j in 1..=n {
        for k in j..=n {
            let entry = e
                .differentiate(Coordinate::fiber(j))
                .differentiate(Coordinate::fiber(k));
            g[j][k] = entry.clone();
            g[k][j] = entry;
        }
    }
    metric_compat_index_triples(n)
        .into_iter()
        .map(|(i, j, k)| {
            let mut terms = vec![g[j][k].differentiate(Coordinate::base(i))];
            for l in 1..=n {
                terms.push(Expr::negate(
                    &ctx.connection.gamma(l, i).clone()
                        * &g[j][k].differentiate(Coordinate::fiber(l)),
                ));
                terms.push(Expr::negate(&ctx.connection.gamma_deriv(l, i, k).clone() * &g[l][j]));
                terms.push(Expr::negate(&ctx.connection.gamma_deriv(l, i, j).clone() * &g[l][k]));
            }
            Expr::sum(terms).simplified()
        })
        .collect()
}

/// Third-order metric-compatibility residuals
/// `dg_jk/dx^i - G^l_i dg_jk/dy^l - G^l_ik g_lj - G^l_ij g_lk`, indexed by
/// [`metric_compat_index_triples`].
pub fn residual_metric_compat(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let components = metric_compat_exprs(energy, ctx);
    tabulate(&components, energy, ctx, samples)
}

/// Gap of the third-order reduction identity
/// `metric_compat(i,j,k) - d2(h_i E)/dy^j dy^k - B^l_ijk dE/dy^l`,
/// which is zero for every smooth `E`. The relative scale is
/// `1 + max(|term|)` over the three assembled terms at the sample.
pub fn check_reduction_identity(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> ResidualReport {
    let n = ctx.dim();
    let e = &energy.expr;
    let pg = metric_compat_exprs(energy, ctx);
    let horizontal = horizontal_derivative_exprs(energy, ctx);
    let dye: Vec<Expr> = (1..=n).map(|l| e.differentiate(Coordinate::fiber(l))).collect();

    let mut middle = Vec::with_capacity(pg.len());
    let mut berwald_term = Vec::with_capacity(pg.len());
    for (i, j, k) in metric_compat_index_triples(n) {
        middle.push(
            horizontal[i - 1]
                .differentiate(Coordinate::fiber(j))
                .differentiate(Coordinate::fiber(k)),
        );
        let terms: Vec<Expr> = (1..=n)
            .map(|l| ctx.berwald.component(l, i, j, k) * &dye[l - 1])
            .collect();
        berwald_term.push(Expr::sum(terms).simplified());
    }

    let rows = samples
        .points()
        .iter()
        .map(|p| {
            let row = (|| -> Result<ResidualRow, EvalError> {
                let mut gaps = Vec::with_capacity(pg.len());
                let mut scale = 1.0_f64;
                for t in 0..pg.len() {
                    let a = evaluate(&pg[t], p, ctx.params())?;
                    let b = evaluate(&middle[t], p, ctx.params())?;
                    let c = evaluate(&berwald_term[t], p, ctx.params())?;
                    gaps.push(a - b - c);
                    scale = scale.max(1.0 + a.abs().max(b.abs()).max(c.abs()));
                }
                Ok(ResidualRow { components: gaps, scale })
            })();
            row.map_err(|err| err.to_string())
        })
        .collect();
    ResidualReport { rows }
}

/// The fundamental tensor `g_ij = d2E/dy^i dy^j` at a point, with its
/// eigenvalue range. Positive definiteness uses the `1e-10` floor on the
/// smallest eigenvalue.
#[derive(Debug, Clone)]
pub struct FundamentalTensor {
    pub matrix: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub positive_definite: bool,
}

pub const PD_EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub fn fundamental_tensor(
    energy: &EnergyCandidate,
    dim: usize,
    p: &Point,
    params: &BTreeMap<String, f64>,
) -> Result<FundamentalTensor, TensorError> {
    let e = &energy.expr;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 1..=dim {
        for j in i..=dim {
            let entry = e
                .differentiate(Coordinate::fiber(i))
                .differentiate(Coordinate::fiber(j));
            let v = evaluate(&entry, p, params)?;
            m[(i - 1, j - 1)] = v;
            m[(j - 1, i - 1)] = v;
        }
    }
    let eigen = m.clone().symmetric_eigen();
    let min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(FundamentalTensor {
        matrix: m,
        min_eigenvalue: min,
        max_eigenvalue: max,
        positive_definite: min > PD_EIGENVALUE_FLOOR,
    })
}

/// Fundamental tensor summary across a sample set.
#[derive(Debug, Clone)]
pub struct TensorSummary {
    pub per_sample: Vec<Result<(f64, f64), String>>,
    pub positive_definite_everywhere: bool,
}

pub fn tensor_summary(
    energy: &EnergyCandidate,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> TensorSummary {
    let mut per_sample = Vec::with_capacity(samples.len());
    let mut pd = true;
    for p in samples.points() {
        match fundamental_tensor(energy, ctx.dim(), p, ctx.params()) {
            Ok(t) => {
                pd &= t.positive_definite;
                per_sample.push(Ok((t.min_eigenvalue, t.max_eigenvalue)));
            }
            Err(e) => {
                pd = false;
                per_sample.push(Err(e.to_string()));
            }
        }
    }
    TensorSummary { per_sample, positive_definite_everywhere: pd }
}
