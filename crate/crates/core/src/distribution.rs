//! Lie-bracket saturation of generator sets, numeric rank at sample points,
//! membership queries, and the vertical-lift search.
//!
//! A distribution is represented by its generator fields. `saturate` closes a
//! seed set under brackets: it walks generator pairs in lexicographic order
//! and appends a bracket exactly when doing so raises the numeric rank at
//! some sample, so runs are deterministic given the seed order. Ranks come
//! from singular values of the evaluated generator matrix with a relative
//! cutoff; expressions are exact symbolic objects, so the only noise at the
//! samples is evaluation roundoff.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::expr::{EvalError, Expr, Point};
use crate::sample::SampleSet;
use crate::spraygeo::VectorField;

/// Lie bracket of two vector fields (delegates to [`VectorField::lie_bracket`]).
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> VectorField {
    x.lie_bracket(y)
}

/// Numeric rank of the evaluated generator matrix at `p`: the number of
/// singular values exceeding `tol * sigma_max` (zero matrix has rank 0).
pub fn numeric_rank(
    fields: &[VectorField],
    p: &Point,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<usize, EvalError> {
    if fields.is_empty() {
        return Ok(0);
    }
    let rows = 2 * fields[0].dim();
    let mut m = DMatrix::zeros(rows, fields.len());
    for (c, f) in fields.iter().enumerate() {
        let vals = f.evaluate(p, params)?;
        for (r, v) in vals.into_iter().enumerate() {
            m[(r, c)] = v;
        }
    }
    Ok(matrix_rank(&m, tol))
}

fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let sigma_max = sv.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > tol * sigma_max).count()
}

/// Orthonormal basis of the column span of `m` (columns with singular value
/// above `tol * sigma_max`).
fn column_span_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("requested U");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > tol * sigma_max)
        .map(|(i, _)| i)
        .collect();
    let mut basis = DMatrix::zeros(m.nrows(), keep.len());
    for (out_col, &i) in keep.iter().enumerate() {
        basis.set_column(out_col, &u.column(i));
    }
    basis
}

/// Relative distance from `v` to the span of the columns of `basis`
/// (orthonormal). The zero vector is in every span.
fn span_residual(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    if basis.ncols() == 0 {
        return 1.0;
    }
    let projected = basis * (basis.transpose() * v);
    (v - projected).norm() / norm
}

#[derive(Debug, Clone)]
pub struct SaturateConfig {
    /// Maximum bracket nesting depth measured from the seeds (depth 0).
    pub max_depth: usize,
    /// Relative singular value cutoff for rank decisions.
    pub rank_tol: f64,
}

impl Default for SaturateConfig {
    fn default() -> Self {
        SaturateConfig { max_depth: 4, rank_tol: 1e-8 }
    }
}

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("seed generator {index} is not evaluable at sample {sample}: {source}")]
    SeedNotEvaluable {
        index: usize,
        sample: usize,
        source: EvalError,
    },
    #[error("saturation needs at least one seed generator")]
    NoSeeds,
}

/// Result of saturating a generator set over a sample set.
#[derive(Debug, Clone)]
pub struct DistributionReport {
    pub generators: Vec<VectorField>,
    /// Bracket depth of each generator (seeds are 0).
    pub generator_depths: Vec<usize>,
    pub rank_per_sample: Vec<usize>,
    /// Common rank when every sample agrees; `None` means "varies".
    pub stable_rank: Option<usize>,
    pub bracket_depth_used: usize,
    /// False when the depth cap cut the closure short.
    pub saturated: bool,
    /// Per-sample relative residual of the canonical field against the span.
    pub c_membership: Vec<f64>,
    pub vertical_lift_witness: Option<VectorField>,
    pub rank_tol: f64,
    /// Brackets skipped because they failed to evaluate at some sample.
    pub skipped_singular_brackets: usize,
    /// Evaluated generator columns per sample (row-major 2n x generators).
    pub sample_matrices: Vec<DMatrix<f64>>,
}

impl DistributionReport {
    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    /// True when the canonical field lies in the span at every sample.
    pub fn contains_canonical(&self, tol: f64) -> bool {
        self.c_membership.iter().all(|r| *r <= tol)
    }

    pub fn min_c_membership(&self) -> f64 {
        self.c_membership.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Close `seeds` under Lie brackets over the samples.
///
/// Rounds process generator pairs `(i, j)`, `i < j`, in lexicographic order;
/// a bracket is appended exactly when it raises the rank at at least one
/// sample. Saturation stops when a full round adds nothing, when the rank
/// reaches `2n` at every sample, or at the depth cap (reported as
/// non-saturated). Brackets that fail to evaluate at a sample are skipped
/// and counted, never silently treated as zero.
pub fn saturate(
    seeds: &[VectorField],
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
    config: &SaturateConfig,
) -> Result<DistributionReport, DistributionError> {
    if seeds.is_empty() {
        return Err(DistributionError::NoSeeds);
    }
    let dim = seeds[0].dim();
    let rows = 2 * dim;
    let n_samples = samples.len();

    let mut generators: Vec<VectorField> = Vec::new();
    let mut depths: Vec<usize> = Vec::new();
    let mut matrices: Vec<DMatrix<f64>> = vec![DMatrix::zeros(rows, 0); n_samples];
    let mut ranks: Vec<usize> = vec![0; n_samples];

    let append = |field: VectorField,
                      depth: usize,
                      generators: &mut Vec<VectorField>,
                      depths: &mut Vec<usize>,
                      matrices: &mut Vec<DMatrix<f64>>,
                      ranks: &mut Vec<usize>,
                      columns: Vec<DVector<f64>>| {
        for (m, col) in matrices.iter_mut().zip(columns) {
            *m = append_column(m, &col);
        }
        for (rank, m) in ranks.iter_mut().zip(matrices.iter()) {
            *rank = matrix_rank(m, config.rank_tol);
        }
        generators.push(field);
        depths.push(depth);
    };

    for (index, seed) in seeds.iter().enumerate() {
        let mut columns = Vec::with_capacity(n_samples);
        for (sample, p) in samples.points().iter().enumerate() {
            let vals = seed
                .evaluate(p, params)
                .map_err(|source| DistributionError::SeedNotEvaluable { index, sample, source })?;
            columns.push(DVector::from_vec(vals));
        }
        append(
            seed.clone(),
            0,
            &mut generators,
            &mut depths,
            &mut matrices,
            &mut ranks,
            columns,
        );
    }

    let mut skipped_singular = 0usize;
    let mut processed: std::collections::HashSet<(usize, usize)> = Default::default();
    let mut depth_limited = false;

    loop {
        if ranks.iter().all(|r| *r == rows) {
            break;
        }
        let len = generators.len();
        let mut added = false;
        'pairs: for i in 0..len {
            for j in (i + 1)..len {
                if processed.contains(&(i, j)) {
                    continue;
                }
                processed.insert((i, j));
                let depth = depths[i].max(depths[j]) + 1;
                if depth > config.max_depth {
                    depth_limited = true;
                    continue;
                }
                let bracket = generators[i].lie_bracket(&generators[j]);
                let mut columns = Vec::with_capacity(n_samples);
                let mut singular = false;
                for p in samples.points() {
                    match bracket.evaluate(p, params) {
                        Ok(vals) => columns.push(DVector::from_vec(vals)),
                        Err(_) => {
                            singular = true;
                            break;
                        }
                    }
                }
                if singular {
                    skipped_singular += 1;
                    continue;
                }
                let raises = matrices.iter().zip(&columns).zip(&ranks).any(
                    |((m, col), rank)| {
                        let augmented = append_column(m, col);
                        matrix_rank(&augmented, config.rank_tol) > *rank
                    },
                );
                if raises {
                    append(
                        bracket,
                        depth,
                        &mut generators,
                        &mut depths,
                        &mut matrices,
                        &mut ranks,
                        columns,
                    );
                    added = true;
                    if ranks.iter().all(|r| *r == rows) {
                        break 'pairs;
                    }
                }
            }
        }
        if !added {
            break;
        }
    }

    let full = ranks.iter().all(|r| *r == rows);
    let stable_rank = if ranks.windows(2).all(|w| w[0] == w[1]) {
        Some(ranks[0])
    } else {
        None
    };

    // canonical field membership, sample by sample
    let canonical = canonical_field(dim);
    let mut c_membership = Vec::with_capacity(n_samples);
    for (p, m) in samples.points().iter().zip(&matrices) {
        let v = DVector::from_vec(
            canonical.evaluate(p, params).expect("canonical field is polynomial"),
        );
        let basis = column_span_basis(m, config.rank_tol);
        c_membership.push(span_residual(&basis, &v));
    }

    let bracket_depth_used = *depths.iter().max().unwrap_or(&0);
    Ok(DistributionReport {
        generators,
        generator_depths: depths,
        rank_per_sample: ranks,
        stable_rank,
        bracket_depth_used,
        saturated: full || !depth_limited,
        c_membership,
        vertical_lift_witness: None,
        rank_tol: config.rank_tol,
        skipped_singular_brackets: skipped_singular,
        sample_matrices: matrices,
    })
}

fn canonical_field(dim: usize) -> VectorField {
    let mut components = vec![Expr::zero(); 2 * dim];
    for i in 1..=dim {
        components[dim + i - 1] = Expr::fiber_coord(i);
    }
    VectorField::new(components)
}

fn append_column(m: &DMatrix<f64>, col: &DVector<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols() + 1);
    out.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
    out.set_column(m.ncols(), col);
    out
}

/// Per-sample relative least-squares residual of `field` against the span of
/// the report's generators. `field` counts as contained when every residual
/// is at most the caller's tolerance.
pub fn contains(
    field: &VectorField,
    report: &DistributionReport,
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(samples.len());
    for (p, m) in samples.points().iter().zip(&report.sample_matrices) {
        let v = DVector::from_vec(field.evaluate(p, params)?);
        let basis = column_span_basis(m, report.rank_tol);
        out.push(span_residual(&basis, &v));
    }
    Ok(out)
}

/// Search the vertical part of a saturated distribution for a vertical lift:
/// a nonzero field whose fiber components depend only on the base point.
///
/// Two stages. First, symbolic candidates: each vertical generator is
/// normalized by a pivot component bounded away from zero; if the normalized
/// components evaluate fiber-independently across every base group, they are
/// the lift (a nonvanishing scalar multiple of a generator stays in the
/// distribution). Second, a numeric fallback: at each base point the fiber
/// spans over the sampled fibers are intersected; a common direction,
/// consistent across bases, is returned as a constant witness. Absence of a
/// witness is a normal outcome.
pub fn vertical_lift_witness(
    report: &DistributionReport,
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<Option<VectorField>, EvalError> {
    let dim = report.dim();
    let verticals = vertical_generator_indices(report, samples, params)?;
    if verticals.is_empty() {
        return Ok(None);
    }

    // stage 1: scalar-normalized single generators
    for &gi in &verticals {
        let gen = &report.generators[gi];
        if let Some(witness) = normalized_generator_witness(gen, samples, params, tol)? {
            return Ok(Some(witness));
        }
    }

    // stage 2: fiberwise span intersection with per-fiber coefficients
    let mut directions: Vec<DVector<f64>> = Vec::new();
    for group in samples.base_groups() {
        if group.len() < 2 {
            return Ok(None);
        }
        let mut stacked = DMatrix::zeros(0, dim);
        for &pi in group {
            let p = &samples.points()[pi];
            let mut m = DMatrix::zeros(dim, verticals.len());
            for (c, &gi) in verticals.iter().enumerate() {
                let vals = report.generators[gi].evaluate(p, params)?;
                for r in 0..dim {
                    m[(r, c)] = vals[dim + r];
                }
            }
            let basis = column_span_basis(&m, report.rank_tol);
            // rows of (I - P) annihilate exactly the span
            let complement = DMatrix::identity(dim, dim) - &basis * basis.transpose();
            stacked = stack_rows(&stacked, &complement);
        }
        let svd = stacked.svd(false, true);
        let vt = svd.v_t.as_ref().expect("requested V^T");
        let (min_idx, min_sv) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
        if min_sv > tol.max(1e-7) {
            return Ok(None);
        }
        directions.push(vt.row(min_idx).transpose());
    }

    // the constant fallback only applies when all bases agree on a direction
    let first = &directions[0];
    for d in &directions[1..] {
        let aligned = first.dot(d).abs();
        if (aligned - 1.0).abs() > 1e-6 {
            return Ok(None);
        }
    }
    let mut components = vec![Expr::zero(); 2 * dim];
    // fix the overall sign by the largest entry for determinism
    let mut pivot = 0;
    for i in 0..dim {
        if first[i].abs() > first[pivot].abs() {
            pivot = i;
        }
    }
    let sign = if first[pivot] < 0.0 { -1.0 } else { 1.0 };
    for i in 0..dim {
        components[dim + i] = Expr::constant(sign * first[i]);
    }
    Ok(Some(VectorField::new(components)))
}

/// Generators whose base components vanish at every sample.
fn vertical_generator_indices(
    report: &DistributionReport,
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
) -> Result<Vec<usize>, EvalError> {
    let dim = report.dim();
    let mut out = Vec::new();
    'gens: for (gi, gen) in report.generators.iter().enumerate() {
        let mut fiber_scale = 0.0_f64;
        let mut base_max = 0.0_f64;
        for p in samples.points() {
            let vals = gen.evaluate(p, params)?;
            for (slot, v) in vals.iter().enumerate() {
                if slot < dim {
                    base_max = base_max.max(v.abs());
                } else {
                    fiber_scale = fiber_scale.max(v.abs());
                }
            }
        }
        if base_max > 1e-9 * (1.0 + fiber_scale) || fiber_scale == 0.0 {
            continue 'gens;
        }
        out.push(gi);
    }
    Ok(out)
}

/// Normalize a vertical generator by a pivot fiber component and test the
/// result for fiber independence over every base group.
fn normalized_generator_witness(
    gen: &VectorField,
    samples: &SampleSet,
    params: &BTreeMap<String, f64>,
    tol: f64,
) -> Result<Option<VectorField>, EvalError> {
    let dim = gen.dim();

    // candidate pivots ordered by how far they stay from zero
    let mut pivot_floor = vec![f64::INFINITY; dim];
    for p in samples.points() {
        let vals = gen.evaluate(p, params)?;
        for i in 0..dim {
            pivot_floor[i] = pivot_floor[i].min(vals[dim + i].abs());
        }
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|a, b| pivot_floor[*b].total_cmp(&pivot_floor[*a]));

    'pivots: for &pivot in &order {
        if pivot_floor[pivot] < 1e-8 {
            continue;
        }
        let pivot_expr = gen.component(dim + pivot);
        let mut components = vec![Expr::zero(); 2 * dim];
        for i in 0..dim {
            components[dim + i] =
                Expr::quotient(gen.component(dim + i).clone(), pivot_expr.clone()).simplified();
        }
        let candidate = VectorField::new(components);

        // fiber independence: per base group, each component agrees across fibers
        for group in samples.base_groups() {
            if group.len() < 2 {
                continue 'pivots;
            }
            let mut first: Option<Vec<f64>> = None;
            for &pi in group {
                let p = &samples.points()[pi];
                let vals = match candidate.evaluate(p, params) {
                    Ok(v) => v,
                    Err(_) => continue 'pivots,
                };
                match &first {
                    None => first = Some(vals),
                    Some(reference) => {
                        for i in 0..dim {
                            let a = reference[dim + i];
                            let b = vals[dim + i];
                            if (a - b).abs() > tol * (1.0 + a.abs()) {
                                continue 'pivots;
                            }
                        }
                    }
                }
            }
        }
        return Ok(Some(candidate));
    }
    Ok(None)
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), bottom.ncols());
    out.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    out
}
