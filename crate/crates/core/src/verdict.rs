//! Orchestration: run the obstruction tests and the jet feasibility search
//! over a spray and produce structured metrizability verdicts.
//!
//! Ordered test execution per question (holonomy distribution for the
//! Finsler question, its Berwald-curvature extension for the Landsberg one):
//! rank stability, canonical-field membership, full rank, vertical lift,
//! then - only when nothing obstructs - symbol dimensions and the
//! positive-definite jet search at each sampled base point.
//!
//! A positive outcome is always labeled `NecessaryConditionsPass`, never
//! "metrizable": the analytic continuation from a formal datum to an actual
//! metric needs analyticity and constant rank beyond what finitely many
//! samples can certify, and positive-definiteness is checked per base point
//! only.

use thiserror::Error;

use crate::distribution::{
    contains, saturate, vertical_lift_witness, DistributionError, DistributionReport,
    SaturateConfig,
};
use crate::expr::{EvalError, Point};
use crate::jets::{
    assemble_jet_system, pd_feasibility, JetError, PdSearchConfig, PdSearchOutcome,
};
use crate::operators::{residual_homogeneity, EnergyCandidate};
use crate::sample::SampleSet;
use crate::spraygeo::{
    berwald_flat, canonical_fields, curvature_vectors, validate_homogeneity, CurvatureError,
    HomogeneityReport, SprayContext,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Question {
    Finsler,
    Landsberg,
}

impl Question {
    pub fn label(&self) -> &'static str {
        match self {
            Question::Finsler => "finsler",
            Question::Landsberg => "landsberg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Obstructed,
    NecessaryConditionsPass,
    Inconclusive,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Obstructed => "obstructed",
            Outcome::NecessaryConditionsPass => "necessary-conditions-pass",
            Outcome::Inconclusive => "inconclusive",
        }
    }
}

/// An obstruction test that fired, with the mathematical rule it applied and
/// the numbers backing it.
#[derive(Debug, Clone)]
pub struct FiredTest {
    pub name: &'static str,
    pub statement: &'static str,
    pub evidence: String,
}

/// Symbol dimensions of the reduced first-order system at codimension `k`:
/// `dim g1 = k - 1`, `dim g2 = k (k - 1) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpencerDims {
    pub codim: usize,
    pub dim_g1: usize,
    pub dim_g2: usize,
}

/// The two symbol dimensions as functions of the codimension `k` of the
/// distribution in `T(TM)`; meaningful for `1 <= k <= n`.
pub fn spencer_dims(k: usize) -> (usize, usize) {
    (k.saturating_sub(1), k * k.saturating_sub(1) / 2)
}

/// Per-base-point result of the jet feasibility search.
#[derive(Debug, Clone)]
pub struct JetFeasibility {
    pub base_point: Point,
    pub found: bool,
    pub min_eigenvalue: f64,
    pub constraint_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub question: Question,
    pub outcome: Outcome,
    pub fired_tests: Vec<FiredTest>,
    pub spencer: Option<SpencerDims>,
    pub jet_results: Vec<JetFeasibility>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub saturate: SaturateConfig,
    /// Residual bound under which a field counts as a member of a span.
    pub membership_tol: f64,
    /// Fiber-independence tolerance for the vertical-lift search.
    pub witness_tol: f64,
    /// Absolute bound under which the Berwald curvature counts as flat.
    pub berwald_tol: f64,
    pub pd: PdSearchConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            saturate: SaturateConfig::default(),
            membership_tol: 1e-8,
            witness_tol: 1e-8,
            berwald_tol: 1e-12,
            pd: PdSearchConfig::default(),
        }
    }
}

/// Full pipeline output for one spray over one sample set.
#[derive(Debug)]
pub struct Analysis {
    pub homogeneity: HomogeneityReport,
    pub berwald_flat: bool,
    pub holonomy: DistributionReport,
    /// `None` when the Berwald curvature vanishes (the two distributions
    /// coincide and the holonomy report answers both questions).
    pub landsberg: Option<DistributionReport>,
    pub finsler: Verdict,
    pub landsberg_verdict: Verdict,
}

impl Analysis {
    /// The distribution report answering a question.
    pub fn report_for(&self, question: Question) -> &DistributionReport {
        match question {
            Question::Finsler => &self.holonomy,
            Question::Landsberg => self.landsberg.as_ref().unwrap_or(&self.holonomy),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(
        "spray fails degree-2 homogeneity validation (max residual {max:.3e}, \
         {flagged} flagged samples)"
    )]
    NotHomogeneous { max: f64, flagged: usize },
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Curvature(#[from] CurvatureError),
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Run the whole pipeline.
pub fn analyze(
    ctx: &SprayContext,
    samples: &SampleSet,
    config: &AnalysisConfig,
) -> Result<Analysis, AnalysisError> {
    let homogeneity = validate_homogeneity(&ctx.spray, samples);
    if !homogeneity.pass {
        return Err(AnalysisError::NotHomogeneous {
            max: homogeneity.max_residual(),
            flagged: homogeneity.flagged_samples(),
        });
    }

    // internal guard: frame brackets must be vertical
    curvature_vectors(&ctx.frame, samples, ctx.params())?;

    let flat = berwald_flat(&ctx.berwald, samples, ctx.params(), config.berwald_tol)?;

    let mut holonomy = saturate(&ctx.frame, samples, ctx.params(), &config.saturate)?;
    holonomy.vertical_lift_witness =
        vertical_lift_witness(&holonomy, samples, ctx.params(), config.witness_tol)?;

    let landsberg_report = if flat {
        None
    } else {
        let mut seeds = ctx.frame.clone();
        seeds.extend(ctx.berwald.image_fields());
        let mut report = saturate(&seeds, samples, ctx.params(), &config.saturate)?;
        report.vertical_lift_witness =
            vertical_lift_witness(&report, samples, ctx.params(), config.witness_tol)?;
        Some(report)
    };

    let finsler = judge(Question::Finsler, &holonomy, ctx, samples, config, &[])?;
    let landsberg_verdict = match &landsberg_report {
        None => {
            let note = vec![
                "Berwald curvature vanishes: the Landsberg and holonomy distributions \
                 coincide and the two questions have the same answer"
                    .to_string(),
            ];
            judge(Question::Landsberg, &holonomy, ctx, samples, config, &note)?
        }
        Some(report) => judge(Question::Landsberg, report, ctx, samples, config, &[])?,
    };

    Ok(Analysis {
        homogeneity,
        berwald_flat: flat,
        holonomy,
        landsberg: landsberg_report,
        finsler,
        landsberg_verdict,
    })
}

fn judge(
    question: Question,
    report: &DistributionReport,
    ctx: &SprayContext,
    samples: &SampleSet,
    config: &AnalysisConfig,
    extra_diagnostics: &[String],
) -> Result<Verdict, AnalysisError> {
    let n = ctx.dim();
    let mut verdict = Verdict {
        question,
        outcome: Outcome::Inconclusive,
        fired_tests: Vec::new(),
        spencer: None,
        jet_results: Vec::new(),
        diagnostics: extra_diagnostics.to_vec(),
    };

    let Some(rank) = report.stable_rank else {
        verdict.diagnostics.push(format!(
            "rank varies across samples ({:?}); the constant-rank hypothesis of the \
             local theory fails on this sample set",
            report.rank_per_sample
        ));
        return Ok(verdict);
    };

    // obstruction: the distribution fills the tangent space (checked first:
    // at full rank every field is trivially a member, so the membership test
    // below would fire vacuously)
    if rank == 2 * n {
        verdict.fired_tests.push(FiredTest {
            name: "full-rank",
            statement: "the distribution spans the full tangent space of TM, so any \
                        invariant energy function is locally constant and cannot be regular",
            evidence: format!(
                "stable rank {rank} = 2n at all {} samples (bracket depth {})",
                report.rank_per_sample.len(),
                report.bracket_depth_used
            ),
        });
        verdict.outcome = Outcome::Obstructed;
        return Ok(verdict);
    }

    // obstruction: the canonical field lies in the distribution
    if report.contains_canonical(config.membership_tol) {
        verdict.fired_tests.push(FiredTest {
            name: "canonical-field-membership",
            statement: "the canonical field lies in the distribution, so any invariant \
                        energy function vanishes identically and cannot be regular",
            evidence: format!(
                "max membership residual {:.3e} <= tol {:.3e} at all {} samples",
                report.c_membership.iter().cloned().fold(0.0, f64::max),
                config.membership_tol,
                report.c_membership.len()
            ),
        });
        verdict.outcome = Outcome::Obstructed;
        return Ok(verdict);
    }

    // obstruction: a vertical lift inside the distribution
    if let Some(witness) = &report.vertical_lift_witness {
        verdict.fired_tests.push(FiredTest {
            name: "vertical-lift",
            statement: "the distribution contains the vertical lift of a nonzero vector \
                        field, which forces a null direction of the fundamental tensor",
            evidence: format!("witness field {witness}"),
        });
        verdict.outcome = Outcome::Obstructed;
        return Ok(verdict);
    }

    if !report.saturated {
        verdict.diagnostics.push(format!(
            "bracket closure stopped at the depth cap ({}); absence of obstructions is \
             not conclusive",
            report.bracket_depth_used
        ));
        return Ok(verdict);
    }

    if report.min_c_membership() <= config.membership_tol {
        verdict.diagnostics.push(format!(
            "canonical-field membership is ambiguous: residuals range {:.3e}..{:.3e} \
             around tol {:.3e}",
            report.min_c_membership(),
            report.c_membership.iter().cloned().fold(0.0, f64::max),
            config.membership_tol
        ));
        return Ok(verdict);
    }

    // symbol dimensions at codimension k = 2n - rank
    let k = 2 * n - rank;
    if (1..=n).contains(&k) {
        let (g1, g2) = spencer_dims(k);
        verdict.spencer = Some(SpencerDims { codim: k, dim_g1: g1, dim_g2: g2 });
    } else {
        verdict.diagnostics.push(format!(
            "codimension {k} outside the admissible band 1..={n}; rank bookkeeping \
             is inconsistent with the membership tests"
        ));
        return Ok(verdict);
    }

    // jet feasibility at each sampled base point
    let mut all_found = true;
    for v in samples.base_representatives() {
        let system = assemble_jet_system(report, v, ctx.params())?;
        match pd_feasibility(&system, &config.pd) {
            PdSearchOutcome::Found(jet) => {
                verdict.jet_results.push(JetFeasibility {
                    base_point: v.clone(),
                    found: true,
                    min_eigenvalue: jet.min_fiber_eigenvalue(),
                    constraint_residual: system.residual(&jet),
                });
            }
            PdSearchOutcome::NotFound(diag) => {
                all_found = false;
                verdict.jet_results.push(JetFeasibility {
                    base_point: v.clone(),
                    found: false,
                    min_eigenvalue: diag.best_min_eigenvalue,
                    constraint_residual: diag.best_constraint_residual,
                });
                verdict.diagnostics.push(format!(
                    "no PD datum found (search incomplete) at {v}: best min eigenvalue \
                     {:.3e}, best constraint residual {:.3e}",
                    diag.best_min_eigenvalue, diag.best_constraint_residual
                ));
            }
        }
    }

    verdict.outcome = if all_found {
        verdict.diagnostics.push(
            "positive definite data certified at the sampled base points only; no global \
             convexity statement is implied"
                .to_string(),
        );
        Outcome::NecessaryConditionsPass
    } else {
        Outcome::Inconclusive
    };
    Ok(verdict)
}

/// Cross-check used by tests and reports: a spray endowed with a fixture
/// energy that satisfies the homogeneity equation to `tol` must never be
/// ruled out by this analysis.
pub fn consistent_with_energy(
    analysis: &Analysis,
    ctx: &SprayContext,
    energy: &EnergyCandidate,
    samples: &SampleSet,
    tol: f64,
) -> bool {
    let hom = residual_homogeneity(energy, ctx, samples);
    if !hom.all_ok() || hom.max_rel() > tol {
        return true; // fixture energy is not admissible, nothing to check
    }
    analysis.finsler.outcome != Outcome::Obstructed
}

/// Convenience: membership residuals of the holonomy generators against the
/// Landsberg report (the holonomy distribution embeds pointwise).
pub fn holonomy_within_landsberg(
    analysis: &Analysis,
    ctx: &SprayContext,
    samples: &SampleSet,
) -> Result<f64, EvalError> {
    let Some(landsberg) = &analysis.landsberg else {
        return Ok(0.0);
    };
    let mut worst = 0.0_f64;
    for gen in &analysis.holonomy.generators {
        let residuals = contains(gen, landsberg, samples, ctx.params())?;
        worst = worst.max(residuals.into_iter().fold(0.0, f64::max));
    }
    Ok(worst)
}

/// The canonical field of the context (handy for membership queries).
pub fn canonical_field(ctx: &SprayContext) -> crate::spraygeo::VectorField {
    canonical_fields(&ctx.spray).0
}
