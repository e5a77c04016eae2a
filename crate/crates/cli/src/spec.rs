//! Spray specification documents: the JSON schema accepted by every
//! subcommand, its defaults, and the conversion into analyzer inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use metrizer::expr::{parse, Point};
use metrizer::operators::EnergyCandidate;
use metrizer::sample::{SampleBox, SampleConfig, SampleError, SampleSet};
use metrizer::spraygeo::{Spray, SprayContext};
use metrizer::verdict::AnalysisConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpraySpec {
    pub dim: usize,
    pub spray: Vec<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub samples: SamplesSpec,
    #[serde(default)]
    pub tolerances: TolerancesSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSpec {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, rename = "box")]
    pub bounds: BoxSpec,
    #[serde(default = "default_exclusion")]
    pub exclusion_radius: f64,
}

impl Default for SamplesSpec {
    fn default() -> Self {
        SamplesSpec {
            count: default_count(),
            seed: default_seed(),
            bounds: BoxSpec::default(),
            exclusion_radius: default_exclusion(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    #[serde(default = "default_x_range")]
    pub x: [f64; 2],
    #[serde(default = "default_y_range")]
    pub y: [f64; 2],
}

impl Default for BoxSpec {
    fn default() -> Self {
        BoxSpec { x: default_x_range(), y: default_y_range() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSpec {
    /// Relative singular-value cutoff for rank and membership decisions.
    #[serde(default = "default_rank_rel")]
    pub rank_rel: f64,
    /// Residual bound for jet constraints and energy residual pass marks.
    #[serde(default = "default_residual")]
    pub residual: f64,
    /// Eigenvalue floor certified by the positive-definite jet search.
    #[serde(default = "default_jet_ridge")]
    pub jet_ridge: f64,
}

impl Default for TolerancesSpec {
    fn default() -> Self {
        TolerancesSpec {
            rank_rel: default_rank_rel(),
            residual: default_residual(),
            jet_ridge: default_jet_ridge(),
        }
    }
}

fn default_count() -> usize {
    20
}
fn default_seed() -> u64 {
    42
}
fn default_exclusion() -> f64 {
    1e-3
}
fn default_x_range() -> [f64; 2] {
    [-1.0, 1.0]
}
fn default_y_range() -> [f64; 2] {
    [0.5, 2.0]
}
fn default_rank_rel() -> f64 {
    1e-8
}
fn default_residual() -> f64 {
    1e-9
}
fn default_jet_ridge() -> f64 {
    1e-6
}

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read spec: {0}")]
    Io(#[from] std::io::Error),
    #[error("spec is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("spec declares dim = {dim} but {got} spray expressions")]
    WrongArity { dim: usize, got: usize },
    #[error("spray expression {index}: {source}")]
    BadExpression {
        index: usize,
        source: metrizer::expr::ParseError,
    },
    #[error("energy expression: {0}")]
    BadEnergy(metrizer::expr::ParseError),
    #[error("{0}")]
    BadSpray(#[from] metrizer::spraygeo::SprayError),
    #[error("point must be written as \"x1,..,xn;y1,..,yn\" with {dim} entries per leg")]
    BadPoint { dim: usize },
    #[error("point is invalid: {0}")]
    InvalidPoint(#[from] metrizer::expr::PointError),
}

pub struct LoadedSpec {
    pub spec: SpraySpec,
    pub ctx: SprayContext,
    pub energy: Option<EnergyCandidate>,
}

impl SpraySpec {
    pub fn from_path(path: &std::path::Path) -> Result<SpraySpec, SpecError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load(self) -> Result<LoadedSpec, SpecError> {
        if self.spray.len() != self.dim {
            return Err(SpecError::WrongArity { dim: self.dim, got: self.spray.len() });
        }
        let names: Vec<String> = self.params.keys().cloned().collect();
        let mut coefficients = Vec::with_capacity(self.dim);
        for (index, src) in self.spray.iter().enumerate() {
            let expr = parse(src, self.dim, &names)
                .map_err(|source| SpecError::BadExpression { index, source })?;
            coefficients.push(expr);
        }
        let spray = Spray::new(self.dim, coefficients, self.params.clone())?;
        let energy = match &self.energy {
            None => None,
            Some(src) => Some(EnergyCandidate::new(
                parse(src, self.dim, &names).map_err(SpecError::BadEnergy)?,
            )),
        };
        Ok(LoadedSpec { ctx: SprayContext::build(spray), energy, spec: self })
    }
}

impl LoadedSpec {
    pub fn sample_config(&self) -> SampleConfig {
        let s = &self.spec.samples;
        SampleConfig {
            count: s.count,
            fibers_per_base: 4,
            seed: s.seed,
            bounds: SampleBox {
                x: (s.bounds.x[0], s.bounds.x[1]),
                y: (s.bounds.y[0], s.bounds.y[1]),
            },
            exclusion_radius: s.exclusion_radius,
            max_rejections: 1000,
        }
    }

    pub fn sample(&self) -> Result<SampleSet, SampleError> {
        let mut registered = self.ctx.registered_expressions();
        if let Some(energy) = &self.energy {
            registered.push(energy.expr().clone());
        }
        SampleSet::generate(
            self.ctx.dim(),
            &self.sample_config(),
            &registered,
            self.ctx.params(),
        )
    }

    pub fn analysis_config(&self) -> AnalysisConfig {
        let t = &self.spec.tolerances;
        let mut config = AnalysisConfig::default();
        config.saturate.rank_tol = t.rank_rel;
        config.membership_tol = t.rank_rel;
        config.witness_tol = t.rank_rel;
        config.pd.tol = t.residual;
        config.pd.ridge = t.jet_ridge;
        config
    }

    pub fn parse_point(&self, text: &str) -> Result<Point, SpecError> {
        let dim = self.ctx.dim();
        let mut legs = text.split(';');
        let (Some(xs), Some(ys), None) = (legs.next(), legs.next(), legs.next()) else {
            return Err(SpecError::BadPoint { dim });
        };
        let parse_leg = |leg: &str| -> Result<Vec<f64>, SpecError> {
            let vals: Result<Vec<f64>, _> =
                leg.split(',').map(|v| v.trim().parse::<f64>()).collect();
            vals.map_err(|_| SpecError::BadPoint { dim })
        };
        let x = parse_leg(xs)?;
        let y = parse_leg(ys)?;
        if x.len() != dim || y.len() != dim {
            return Err(SpecError::BadPoint { dim });
        }
        Ok(Point::new(x, y)?)
    }
}

/// FNV-1a hash of the canonical JSON serialization of the (default-filled)
/// spec; stable across runs so reports are byte-identical.
pub fn config_hash(spec: &SpraySpec) -> String {
    let canonical = serde_json::to_string(spec).expect("specs serialize");
    let mut h: u64 = 0xcbf29ce484222325;
    for b in canonical.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("fnv1a:{h:016x}")
}
