//! Batch interface: read a spray specification, run the analysis, emit a
//! JSON report.
//!
//! Exit codes: 0 for any completed analysis (including obstructed verdicts),
//! 2 for specification errors, 3 when sampling cannot find nonsingular
//! points.

mod report;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use metrizer::jets::{assemble_jet_system, pd_feasibility, PdSearchOutcome};
use metrizer::verdict::{analyze, AnalysisError};

use report::{
    analyze_report, energy_json, AnalyzeReport, CheckEnergyReport, DistributionDump,
    DistributionJson, HomogeneityJson, JetReport, JetSearchJson, SCHEMA_VERSION,
};
use spec::{config_hash, LoadedSpec, SpraySpec};

#[derive(Parser)]
#[command(
    name = "metrizer",
    version,
    about = "Decide whether a spray can be the geodesic equation of a (Landsberg) Finsler metric"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full obstruction and feasibility pipeline.
    Analyze {
        /// Path to the JSON spray specification.
        spec: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the variational operators on the spec's energy function.
    CheckEnergy {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Saturate and dump one distribution with pretty-printed generators.
    Distribution {
        spec: PathBuf,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the jet system at a point and run the PD search.
    Jet {
        spec: PathBuf,
        /// Point written as "x1,..,xn;y1,..,yn".
        #[arg(long)]
        point: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Holonomy,
    Landsberg,
}

const EXIT_SPEC_ERROR: u8 = 2;
const EXIT_SAMPLING_EXHAUSTED: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { spec, out } => run_analyze(&spec, out.as_deref()),
        Command::CheckEnergy { spec, out } => run_check_energy(&spec, out.as_deref()),
        Command::Distribution { spec, which, out } => {
            run_distribution(&spec, which, out.as_deref())
        }
        Command::Jet { spec, point, out } => run_jet(&spec, &point, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn spec(message: impl Into<String>) -> Self {
        Failure { code: EXIT_SPEC_ERROR, message: message.into() }
    }
}

impl From<spec::SpecError> for Failure {
    fn from(e: spec::SpecError) -> Self {
        Failure::spec(e.to_string())
    }
}

impl From<metrizer::sample::SampleError> for Failure {
    fn from(e: metrizer::sample::SampleError) -> Self {
        Failure { code: EXIT_SAMPLING_EXHAUSTED, message: e.to_string() }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        match e {
            // a non-homogeneous spray is a bad specification
            AnalysisError::NotHomogeneous { .. } => Failure::spec(e.to_string()),
            other => Failure { code: 1, message: other.to_string() },
        }
    }
}

fn load(path: &std::path::Path) -> Result<LoadedSpec, Failure> {
    Ok(SpraySpec::from_path(path)?.load()?)
}

fn emit<T: serde::Serialize>(document: &T, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(document)
        .map_err(|e| Failure { code: 1, message: e.to_string() })?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure { code: 1, message: format!("cannot write report: {e}") }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_analyze(path: &std::path::Path, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let loaded = load(path)?;
    let samples = loaded.sample()?;
    let config = loaded.analysis_config();
    let analysis = analyze(&loaded.ctx, &samples, &config)?;
    let energy = loaded.energy.as_ref().map(|e| {
        energy_json(&loaded.ctx, e, &samples, loaded.spec.tolerances.residual)
    });
    let report: AnalyzeReport = analyze_report(
        &loaded.spec,
        &loaded.ctx,
        &analysis,
        loaded.energy.as_ref(),
        energy,
    );
    emit(&report, out)
}

fn run_check_energy(path: &std::path::Path, out: Option<&std::path::Path>) -> Result<(), Failure> {
    let loaded = load(path)?;
    let Some(energy) = loaded.energy.as_ref() else {
        return Err(Failure::spec("check-energy needs an `energy` entry in the spec"));
    };
    let samples = loaded.sample()?;
    let homogeneity =
        metrizer::spraygeo::validate_homogeneity(&loaded.ctx.spray, &samples);
    if !homogeneity.pass {
        return Err(Failure::spec(format!(
            "spray fails degree-2 homogeneity validation (max residual {:.3e})",
            homogeneity.max_residual()
        )));
    }
    let report = CheckEnergyReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&loaded.spec),
        spec: loaded.spec.clone(),
        notes: report::chart_notes(&loaded.ctx, Some(energy)),
        homogeneity: HomogeneityJson::from_report(&homogeneity),
        energy: energy_json(&loaded.ctx, energy, &samples, loaded.spec.tolerances.residual),
    };
    emit(&report, out)
}

fn run_distribution(
    path: &std::path::Path,
    which: Which,
    out: Option<&std::path::Path>,
) -> Result<(), Failure> {
    let loaded = load(path)?;
    let samples = loaded.sample()?;
    let config = loaded.analysis_config();
    let analysis = analyze(&loaded.ctx, &samples, &config)?;
    let (label, report) = match which {
        Which::Holonomy => ("holonomy", analysis.report_for(metrizer::verdict::Question::Finsler)),
        Which::Landsberg => (
            "landsberg",
            analysis.report_for(metrizer::verdict::Question::Landsberg),
        ),
    };
    let dump = DistributionDump {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&loaded.spec),
        spec: loaded.spec.clone(),
        which: label.to_string(),
        berwald_flat: analysis.berwald_flat,
        distribution: DistributionJson::from_report(report),
    };
    emit(&dump, out)
}

fn run_jet(
    path: &std::path::Path,
    point: &str,
    out: Option<&std::path::Path>,
) -> Result<(), Failure> {
    let loaded = load(path)?;
    let v = loaded.parse_point(point)?;
    let samples = loaded.sample()?;
    let config = loaded.analysis_config();
    let analysis = analyze(&loaded.ctx, &samples, &config)?;

    let search = |report: &metrizer::distribution::DistributionReport| -> Result<JetSearchJson, Failure> {
        let system = assemble_jet_system(report, &v, loaded.ctx.params())
            .map_err(|e| Failure { code: 1, message: e.to_string() })?;
        let outcome = pd_feasibility(&system, &config.pd);
        Ok(match outcome {
            PdSearchOutcome::Found(jet) => JetSearchJson {
                rows: system.rows(),
                generators_used: system.generator_indices.len(),
                found: true,
                min_eigenvalue: jet.min_fiber_eigenvalue(),
                constraint_residual: system.residual(&jet),
                datum: Some(jet.data.iter().cloned().collect()),
                note: "positive definite initial datum found".into(),
            },
            PdSearchOutcome::NotFound(diag) => JetSearchJson {
                rows: system.rows(),
                generators_used: system.generator_indices.len(),
                found: false,
                min_eigenvalue: diag.best_min_eigenvalue,
                constraint_residual: diag.best_constraint_residual,
                datum: None,
                note: "no PD datum found (search incomplete); this is not an \
                       infeasibility proof"
                    .into(),
            },
        })
    };

    let finsler = search(analysis.report_for(metrizer::verdict::Question::Finsler))?;
    let landsberg = search(analysis.report_for(metrizer::verdict::Question::Landsberg))?;
    let report = JetReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(&loaded.spec),
        spec: loaded.spec.clone(),
        point: v.to_string(),
        finsler,
        landsberg,
    };
    emit(&report, out)
}
