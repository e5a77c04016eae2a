//! Second-order jet constraint systems and the positive-definite
//! feasibility search.
//!
//! At a point `v` the 2-jet of a function `E` is flattened as
//! `(s, s_i, s_ib, s_ij, s_ijb, s_ibjb)` - value, base and fiber gradients,
//! then the three second-order blocks (base/base symmetric, base/fiber full,
//! fiber/fiber symmetric). The homogeneity equation, every span-reduced
//! generator of the distribution, and their first prolongations in all `2n`
//! coordinate directions each contribute one homogeneous linear row.
//!
//! A spray passes the local-existence criterion at `v` when this system
//! admits a solution whose fiber/fiber block is positive definite. The
//! search alternates projections between the null space of the row matrix
//! and the spectral cone `{fiber block >= ridge I}`; success certifies a
//! formal datum (re-verified independently), while exhaustion is reported as
//! "no PD datum found (search incomplete)" - never as a proof of
//! infeasibility.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::distribution::DistributionReport;
use crate::expr::{evaluate, Coordinate, EvalError, Point};
use crate::spraygeo::VectorField;

/// Index layout for flattened 2-jets at fixed dimension `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JetLayout {
    pub n: usize,
}

impl JetLayout {
    pub fn new(n: usize) -> Self {
        JetLayout { n }
    }

    /// Total coordinate count `1 + 2n + n(n+1)/2 + n^2 + n(n+1)/2`.
    pub fn flat_dim(&self) -> usize {
        let n = self.n;
        1 + 2 * n + n * (n + 1) / 2 + n * n + n * (n + 1) / 2
    }

    pub fn value(&self) -> usize {
        0
    }

    /// `s_i`, 0-based base index.
    pub fn base(&self, i: usize) -> usize {
        1 + i
    }

    /// `s_ib`, 0-based fiber index.
    pub fn fiber(&self, i: usize) -> usize {
        1 + self.n + i
    }

    /// First-order slot for a flat coordinate slot in `0..2n`.
    pub fn first(&self, slot: usize) -> usize {
        1 + slot
    }

    fn sym(n: usize, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * n - i * (i + 1) / 2 + j
    }

    /// `s_ij` (base/base, symmetric).
    pub fn base_base(&self, i: usize, j: usize) -> usize {
        1 + 2 * self.n + Self::sym(self.n, i, j)
    }

    /// `s_ijb` (base i, fiber j; full block).
    pub fn base_fiber(&self, i: usize, j: usize) -> usize {
        1 + 2 * self.n + self.n * (self.n + 1) / 2 + i * self.n + j
    }

    /// `s_ibjb` (fiber/fiber, symmetric).
    pub fn fiber_fiber(&self, i: usize, j: usize) -> usize {
        1 + 2 * self.n + self.n * (self.n + 1) / 2 + self.n * self.n + Self::sym(self.n, i, j)
    }

    /// Second-order slot for two flat coordinate slots in `0..2n`.
    pub fn second(&self, a: usize, b: usize) -> usize {
        let n = self.n;
        match (a < n, b < n) {
            (true, true) => self.base_base(a, b),
            (true, false) => self.base_fiber(a, b - n),
            (false, true) => self.base_fiber(b, a - n),
            (false, false) => self.fiber_fiber(a - n, b - n),
        }
    }
}

/// A flattened 2-jet.
#[derive(Debug, Clone)]
pub struct JetCoordinates {
    pub layout: JetLayout,
    pub data: DVector<f64>,
}

impl JetCoordinates {
    pub fn zeros(layout: JetLayout) -> Self {
        JetCoordinates { layout, data: DVector::zeros(layout.flat_dim()) }
    }

    /// The fiber/fiber block as a symmetric matrix.
    pub fn fiber_block(&self) -> DMatrix<f64> {
        let n = self.layout.n;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.data[self.layout.fiber_fiber(i, j)];
            }
        }
        m
    }

    pub fn min_fiber_eigenvalue(&self) -> f64 {
        self.fiber_block()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Where a row of the constraint system came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RowProvenance {
    /// The degree-2 homogeneity equation at the point.
    Homogeneity,
    /// Its prolongation in one coordinate direction (flat slot).
    HomogeneityProlonged { direction: usize },
    /// A span-reduced generator annihilating the first-order jet.
    Generator { index: usize },
    /// Its prolongation in one coordinate direction.
    GeneratorProlonged { index: usize, direction: usize },
}

/// The homogeneous linear system on 2-jets at one point.
#[derive(Debug, Clone)]
pub struct JetSystem {
    pub layout: JetLayout,
    pub point: Point,
    pub matrix: DMatrix<f64>,
    pub provenance: Vec<RowProvenance>,
    /// Indices into the report's generators that survived span reduction.
    pub generator_indices: Vec<usize>,
}

impl JetSystem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn residual(&self, jet: &JetCoordinates) -> f64 {
        (&self.matrix * &jet.data).amax()
    }
}

#[derive(Debug, Error)]
pub enum JetError {
    #[error("generator evaluation failed while assembling the jet system: {0}")]
    Eval(#[from] EvalError),
}

/// Assemble the jet constraint system at `v` from a saturated distribution.
///
/// Generators are span-reduced at `v` by greedy column pivoting first;
/// redundant rows would only slow the projection without changing the null
/// space. Row count is `(1 + 2n) * (1 + r)` with `r` selected generators.
pub fn assemble_jet_system(
    report: &DistributionReport,
    v: &Point,
    params: &BTreeMap<String, f64>,
) -> Result<JetSystem, JetError> {
    let n = report.dim();
    let layout = JetLayout::new(n);
    let generator_indices = span_reduce_at(&report.generators, v, params, report.rank_tol)?;

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut provenance: Vec<RowProvenance> = Vec::new();

    // homogeneity: y^i s_ib - 2 s = 0
    let mut row = DVector::zeros(layout.flat_dim());
    row[layout.value()] = -2.0;
    for i in 0..n {
        row[layout.fiber(i)] = v.y()[i];
    }
    rows.push(row);
    provenance.push(RowProvenance::Homogeneity);

    // its prolongations: d/du^b (y^i E_ib - 2E) = 0
    for b in 0..2 * n {
        let mut row = DVector::zeros(layout.flat_dim());
        for i in 0..n {
            row[layout.second(n + i, b)] += v.y()[i];
        }
        if b < n {
            row[layout.base(b)] += -2.0;
        } else {
            // the direction derivative also hits the explicit y factor
            row[layout.fiber(b - n)] += 1.0 - 2.0;
        }
        rows.push(row);
        provenance.push(RowProvenance::HomogeneityProlonged { direction: b });
    }

    // generators: W^a(v) s_a = 0, and prolongations
    // dW^a/du^b (v) s_a + W^a(v) s_ab = 0
    for &gi in &generator_indices {
        let gen = &report.generators[gi];
        let values = gen.evaluate(v, params)?;

        let mut row = DVector::zeros(layout.flat_dim());
        for (a, w) in values.iter().enumerate() {
            row[layout.first(a)] += w;
        }
        rows.push(row);
        provenance.push(RowProvenance::Generator { index: gi });

        for b in 0..2 * n {
            let direction = Coordinate::from_slot(b, n);
            let mut row = DVector::zeros(layout.flat_dim());
            for (a, w) in values.iter().enumerate() {
                let dw = gen.component(a).differentiate(direction);
                if !dw.is_zero() {
                    row[layout.first(a)] += evaluate(&dw, v, params)?;
                }
                row[layout.second(a, b)] += w;
            }
            rows.push(row);
            provenance.push(RowProvenance::GeneratorProlonged { index: gi, direction: b });
        }
    }

    let mut matrix = DMatrix::zeros(rows.len(), layout.flat_dim());
    for (r, row) in rows.iter().enumerate() {
        matrix.set_row(r, &row.transpose());
    }
    Ok(JetSystem { layout, point: v.clone(), matrix, provenance, generator_indices })
}

/// Greedy column-pivoted selection of a spanning generator subset at `v`.
fn span_reduce_at(
    generators: &[VectorField],
    v: &Point,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<Vec<usize>, EvalError> {
    let mut columns: Vec<DVector<f64>> = Vec::with_capacity(generators.len());
    for gen in generators {
        columns.push(DVector::from_vec(gen.evaluate(v, params)?));
    }
    let max_norm = columns.iter().map(DVector::norm).fold(0.0_f64, f64::max);
    if max_norm == 0.0 {
        return Ok(Vec::new());
    }

    let mut selected: Vec<usize> = Vec::new();
    let mut residuals = columns.clone();
    loop {
        let mut best = 0usize;
        let mut best_norm = 0.0_f64;
        for (i, r) in residuals.iter().enumerate() {
            let norm = r.norm();
            if norm > best_norm {
                best_norm = norm;
                best = i;
            }
        }
        if best_norm <= tol * max_norm {
            return Ok(selected);
        }
        let direction = residuals[best].normalize();
        selected.push(best);
        for r in residuals.iter_mut() {
            let coeff = direction.dot(r);
            *r -= &direction * coeff;
        }
        selected.sort_unstable();
    }
}

#[derive(Debug, Clone)]
pub struct PdSearchConfig {
    pub max_iters: usize,
    /// Eigenvalue floor certified for the fiber block.
    pub ridge: f64,
    /// Constraint residual bound for success.
    pub tol: f64,
}

impl Default for PdSearchConfig {
    fn default() -> Self {
        PdSearchConfig { max_iters: 10_000, ridge: 1e-6, tol: 1e-9 }
    }
}

/// Diagnostics of an exhausted search; explicitly not an infeasibility proof.
#[derive(Debug, Clone)]
pub struct PdDiagnostics {
    pub iterations: usize,
    pub best_constraint_residual: f64,
    pub best_min_eigenvalue: f64,
    /// Distance between the last cone and null-space iterates.
    pub final_gap: f64,
}

#[derive(Debug, Clone)]
pub enum PdSearchOutcome {
    Found(JetCoordinates),
    /// "no PD datum found (search incomplete)"
    NotFound(PdDiagnostics),
}

impl PdSearchOutcome {
    pub fn found(&self) -> bool {
        matches!(self, PdSearchOutcome::Found(_))
    }
}

const NULL_SPACE_CUTOFF: f64 = 1e-10;

/// Alternating projections between the null space of the constraint matrix
/// and the cone of jets whose fiber block has eigenvalues `>= ridge`.
///
/// The cone projection clips eigenvalues at `1.05 * ridge` so that iterates
/// approaching the cone from outside still clear the certified floor; the
/// returned jet is re-verified against both conditions before success is
/// claimed.
pub fn pd_feasibility(system: &JetSystem, config: &PdSearchConfig) -> PdSearchOutcome {
    let layout = system.layout;
    let n = layout.n;

    let null_basis = null_space_basis(&system.matrix);
    if null_basis.ncols() == 0 {
        return PdSearchOutcome::NotFound(PdDiagnostics {
            iterations: 0,
            best_constraint_residual: 0.0,
            best_min_eigenvalue: f64::NEG_INFINITY,
            final_gap: f64::INFINITY,
        });
    }

    let clip_level = config.ridge * 1.05;
    let mut z = JetCoordinates::zeros(layout);
    for i in 0..n {
        z.data[layout.fiber_fiber(i, i)] = 1.0;
    }

    let mut best_residual = f64::INFINITY;
    let mut best_min_eig = f64::NEG_INFINITY;
    let mut gap = f64::INFINITY;

    for iter in 0..config.max_iters {
        let cone = project_cone(&z, clip_level);
        let projected = &null_basis * (null_basis.transpose() * &cone.data);
        gap = (&projected - &cone.data).norm();
        z = JetCoordinates { layout, data: projected };

        let residual = system.residual(&z);
        let min_eig = z.min_fiber_eigenvalue();
        best_residual = best_residual.min(residual);
        best_min_eig = best_min_eig.max(min_eig);

        if residual <= config.tol && min_eig >= config.ridge {
            // independent re-verification before claiming success
            if verify_datum(system, &z, config).is_ok() {
                return PdSearchOutcome::Found(z);
            }
        }
        let _ = iter;
    }

    PdSearchOutcome::NotFound(PdDiagnostics {
        iterations: config.max_iters,
        best_constraint_residual: best_residual,
        best_min_eigenvalue: best_min_eig,
        final_gap: gap,
    })
}

#[derive(Debug, Error)]
pub enum DatumRejection {
    #[error("constraint residual {residual:.3e} exceeds {tol:.3e}")]
    Constraint { residual: f64, tol: f64 },
    #[error("fiber block minimum eigenvalue {min_eig:.3e} is below ridge {ridge:.3e}")]
    NotPositiveDefinite { min_eig: f64, ridge: f64 },
}

/// Recompute, from scratch, the two success conditions for a candidate jet.
pub fn verify_datum(
    system: &JetSystem,
    jet: &JetCoordinates,
    config: &PdSearchConfig,
) -> Result<(), DatumRejection> {
    let residual = system.residual(jet);
    if residual > config.tol {
        return Err(DatumRejection::Constraint { residual, tol: config.tol });
    }
    let min_eig = jet.min_fiber_eigenvalue();
    if min_eig < config.ridge {
        return Err(DatumRejection::NotPositiveDefinite { min_eig, ridge: config.ridge });
    }
    Ok(())
}

fn project_cone(z: &JetCoordinates, level: f64) -> JetCoordinates {
    let layout = z.layout;
    let n = layout.n;
    let block = z.fiber_block();
    let eigen = block.symmetric_eigen();
    let mut clipped = DMatrix::zeros(n, n);
    for (k, lambda) in eigen.eigenvalues.iter().enumerate() {
        let l = lambda.max(level);
        let v = eigen.eigenvectors.column(k);
        clipped += l * &v * v.transpose();
    }
    let mut out = z.clone();
    for i in 0..n {
        for j in i..n {
            out.data[layout.fiber_fiber(i, j)] = clipped[(i, j)];
        }
    }
    out
}

fn null_space_basis(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    // the row count (1 + 2n)(1 + r) with r >= n generators always reaches the
    // jet dimension (2n + 1)(n + 1), so the thin SVD carries every right
    // singular vector
    debug_assert!(matrix.nrows() >= matrix.ncols());
    let svd = matrix.clone().svd(false, true);
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = NULL_SPACE_CUTOFF * sigma_max.max(1.0);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(matrix.ncols(), keep.len());
    for (col, &i) in keep.iter().enumerate() {
        basis.set_column(col, &vt.row(i).transpose());
    }
    basis
}
