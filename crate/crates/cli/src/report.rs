//! JSON report documents. Field order is fixed by struct declaration and
//! every map is ordered, so a report is byte-stable for a given spec and
//! seed.

use serde::Serialize;

use metrizer::distribution::DistributionReport;
use metrizer::operators::{ResidualReport, TensorSummary};
use metrizer::sample::SampleSet;
use metrizer::spraygeo::{HomogeneityReport, SprayContext};
use metrizer::verdict::{Analysis, JetFeasibility, Verdict};

use crate::spec::{config_hash, SpraySpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub spec: SpraySpec,
    /// Chart caveats, e.g. when expressions contain `abs` kinks.
    pub notes: Vec<String>,
    pub homogeneity: HomogeneityJson,
    pub berwald_flat: bool,
    pub holonomy: DistributionJson,
    /// Equals the holonomy summary when the Berwald curvature vanishes.
    pub landsberg: DistributionJson,
    pub landsberg_coincides_with_holonomy: bool,
    pub verdicts: VerdictsJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergyJson>,
}

#[derive(Debug, Serialize)]
pub struct VerdictsJson {
    pub finsler: VerdictJson,
    pub landsberg: VerdictJson,
}

#[derive(Debug, Serialize)]
pub struct HomogeneityJson {
    pub pass: bool,
    pub max_residual: f64,
    pub flagged_samples: usize,
    pub per_sample: Vec<SampleValueJson>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum SampleValueJson {
    Ok { residual: f64, scale: f64 },
    Singular { error: String },
}

impl HomogeneityJson {
    pub fn from_report(report: &HomogeneityReport) -> Self {
        HomogeneityJson {
            pass: report.pass,
            max_residual: report.max_residual(),
            flagged_samples: report.flagged_samples(),
            per_sample: report
                .per_sample
                .iter()
                .map(|r| match r {
                    Ok(s) => SampleValueJson::Ok { residual: s.residual, scale: s.scale },
                    Err(e) => SampleValueJson::Singular { error: e.clone() },
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DistributionJson {
    pub generator_count: usize,
    pub generators: Vec<String>,
    pub generator_depths: Vec<usize>,
    pub rank_per_sample: Vec<usize>,
    /// `null` encodes "varies".
    pub stable_rank: Option<usize>,
    pub bracket_depth_used: usize,
    pub saturated: bool,
    pub skipped_singular_brackets: usize,
    pub c_membership: Vec<f64>,
    pub vertical_lift_witness: Option<String>,
}

impl DistributionJson {
    pub fn from_report(report: &DistributionReport) -> Self {
        DistributionJson {
            generator_count: report.generators.len(),
            generators: report.generators.iter().map(|g| g.to_string()).collect(),
            generator_depths: report.generator_depths.clone(),
            rank_per_sample: report.rank_per_sample.clone(),
            stable_rank: report.stable_rank,
            bracket_depth_used: report.bracket_depth_used,
            saturated: report.saturated,
            skipped_singular_brackets: report.skipped_singular_brackets,
            c_membership: report.c_membership.clone(),
            vertical_lift_witness: report.vertical_lift_witness.as_ref().map(|w| w.to_string()),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerdictJson {
    pub question: &'static str,
    pub outcome: &'static str,
    pub fired_tests: Vec<FiredTestJson>,
    pub spencer: Option<SpencerJson>,
    pub jet_results: Vec<JetResultJson>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FiredTestJson {
    pub name: String,
    pub statement: String,
    pub evidence: String,
}

#[derive(Debug, Serialize)]
pub struct SpencerJson {
    pub codim: usize,
    pub dim_g1: usize,
    pub dim_g2: usize,
}

#[derive(Debug, Serialize)]
pub struct JetResultJson {
    pub base_point: String,
    pub found: bool,
    pub min_eigenvalue: f64,
    pub constraint_residual: f64,
}

impl VerdictJson {
    pub fn from_verdict(verdict: &Verdict) -> Self {
        VerdictJson {
            question: verdict.question.label(),
            outcome: verdict.outcome.label(),
            fired_tests: verdict
                .fired_tests
                .iter()
                .map(|t| FiredTestJson {
                    name: t.name.to_string(),
                    statement: t.statement.to_string(),
                    evidence: t.evidence.clone(),
                })
                .collect(),
            spencer: verdict.spencer.map(|s| SpencerJson {
                codim: s.codim,
                dim_g1: s.dim_g1,
                dim_g2: s.dim_g2,
            }),
            jet_results: verdict.jet_results.iter().map(JetResultJson::from).collect(),
            diagnostics: verdict.diagnostics.clone(),
        }
    }
}

impl From<&JetFeasibility> for JetResultJson {
    fn from(j: &JetFeasibility) -> Self {
        JetResultJson {
            base_point: j.base_point.to_string(),
            found: j.found,
            min_eigenvalue: j.min_eigenvalue,
            constraint_residual: j.constraint_residual,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct EnergyJson {
    pub expression: String,
    pub pass_threshold: f64,
    pub tables: TablesJson,
    pub fundamental_tensor: TensorJson,
}

#[derive(Debug, Serialize)]
pub struct TablesJson {
    pub homogeneity: TableJson,
    pub euler_lagrange: TableJson,
    pub horizontal: TableJson,
    pub curvature_bracket: TableJson,
    pub curvature_berwald: TableJson,
    pub metric_compat: TableJson,
    pub reduction_identity: TableJson,
}

#[derive(Debug, Serialize)]
pub struct TableJson {
    pub max_abs: f64,
    pub max_rel: f64,
    pub flagged_samples: usize,
    pub pass: bool,
    pub per_sample: Vec<TableRowJson>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum TableRowJson {
    Ok { max_abs: f64, scale: f64, rel: f64 },
    Singular { error: String },
}

impl TableJson {
    pub fn from_report(report: &ResidualReport, threshold: f64) -> Self {
        let per_sample = report
            .rows
            .iter()
            .map(|row| match row {
                Ok(r) => TableRowJson::Ok { max_abs: r.max_abs(), scale: r.scale, rel: r.rel() },
                Err(e) => TableRowJson::Singular { error: e.clone() },
            })
            .collect();
        TableJson {
            max_abs: report.max_abs(),
            max_rel: report.max_rel(),
            flagged_samples: report.flagged(),
            pass: report.all_ok() && report.max_rel() <= threshold,
            per_sample,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TensorJson {
    pub positive_definite_everywhere: bool,
    pub per_sample: Vec<TensorRowJson>,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum TensorRowJson {
    Ok { min_eigenvalue: f64, max_eigenvalue: f64 },
    Singular { error: String },
}

impl TensorJson {
    pub fn from_summary(summary: &TensorSummary) -> Self {
        TensorJson {
            positive_definite_everywhere: summary.positive_definite_everywhere,
            per_sample: summary
                .per_sample
                .iter()
                .map(|r| match r {
                    Ok((min, max)) => {
                        TensorRowJson::Ok { min_eigenvalue: *min, max_eigenvalue: *max }
                    }
                    Err(e) => TensorRowJson::Singular { error: e.clone() },
                })
                .collect(),
        }
    }
}

/// Chart caveats for the report header: smoothness of `abs` and of roots
/// holds only away from their kinks and branch points, and all samples are
/// drawn on such charts.
pub fn chart_notes(ctx: &SprayContext, energy: Option<&metrizer::operators::EnergyCandidate>) -> Vec<String> {
    let mut restricted = ctx
        .spray
        .coefficients()
        .iter()
        .any(metrizer::expr::Expr::has_chart_restrictions);
    if let Some(e) = energy {
        restricted |= e.expr().has_chart_restrictions();
    }
    if restricted {
        vec![
            "expressions involve abs or non-integer powers; every conclusion holds on \
             charts away from their kinks and branch points, where all samples were drawn"
                .to_string(),
        ]
    } else {
        Vec::new()
    }
}

pub fn analyze_report(
    spec: &SpraySpec,
    ctx: &SprayContext,
    analysis: &Analysis,
    energy_candidate: Option<&metrizer::operators::EnergyCandidate>,
    energy: Option<EnergyJson>,
) -> AnalyzeReport {
    let holonomy = DistributionJson::from_report(&analysis.holonomy);
    let landsberg = match &analysis.landsberg {
        Some(report) => DistributionJson::from_report(report),
        None => DistributionJson::from_report(&analysis.holonomy),
    };
    AnalyzeReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(spec),
        spec: spec.clone(),
        notes: chart_notes(ctx, energy_candidate),
        homogeneity: HomogeneityJson::from_report(&analysis.homogeneity),
        berwald_flat: analysis.berwald_flat,
        holonomy,
        landsberg,
        landsberg_coincides_with_holonomy: analysis.landsberg.is_none(),
        verdicts: VerdictsJson {
            finsler: VerdictJson::from_verdict(&analysis.finsler),
            landsberg: VerdictJson::from_verdict(&analysis.landsberg_verdict),
        },
        energy,
    }
}

pub fn energy_json(
    ctx: &SprayContext,
    energy: &metrizer::operators::EnergyCandidate,
    samples: &SampleSet,
    threshold: f64,
) -> EnergyJson {
    use metrizer::operators as ops;
    let curvature = ops::residual_curvature(energy, ctx, samples);
    EnergyJson {
        expression: energy.expr().to_string(),
        pass_threshold: threshold,
        tables: TablesJson {
            homogeneity: TableJson::from_report(
                &ops::residual_homogeneity(energy, ctx, samples),
                threshold,
            ),
            euler_lagrange: TableJson::from_report(
                &ops::residual_euler_lagrange(energy, ctx, samples),
                threshold,
            ),
            horizontal: TableJson::from_report(
                &ops::residual_horizontal(energy, ctx, samples),
                threshold,
            ),
            curvature_bracket: TableJson::from_report(&curvature.bracket, threshold),
            curvature_berwald: TableJson::from_report(&curvature.berwald, threshold),
            metric_compat: TableJson::from_report(
                &ops::residual_metric_compat(energy, ctx, samples),
                threshold,
            ),
            reduction_identity: TableJson::from_report(
                &ops::check_reduction_identity(energy, ctx, samples),
                threshold,
            ),
        },
        fundamental_tensor: TensorJson::from_summary(&ops::tensor_summary(energy, ctx, samples)),
    }
}

// ------------------------------- standalone documents for the subcommands

#[derive(Debug, Serialize)]
pub struct CheckEnergyReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub spec: SpraySpec,
    pub notes: Vec<String>,
    pub homogeneity: HomogeneityJson,
    pub energy: EnergyJson,
}

#[derive(Debug, Serialize)]
pub struct DistributionDump {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub spec: SpraySpec,
    pub which: String,
    pub berwald_flat: bool,
    pub distribution: DistributionJson,
}

#[derive(Debug, Serialize)]
pub struct JetReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub spec: SpraySpec,
    pub point: String,
    pub finsler: JetSearchJson,
    pub landsberg: JetSearchJson,
}

#[derive(Debug, Serialize)]
pub struct JetSearchJson {
    pub rows: usize,
    pub generators_used: usize,
    pub found: bool,
    pub min_eigenvalue: f64,
    pub constraint_residual: f64,
    /// Flattened jet coordinates when a datum was found.
    pub datum: Option<Vec<f64>>,
    pub note: String,
}
