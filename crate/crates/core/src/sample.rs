//! Deterministic sample sets on the slit tangent bundle.
//!
//! Points are drawn from a seeded generator as base groups: a handful of
//! base points, each carrying several fiber points over it. The grouping is
//! what lets the vertical-lift search compare field values across fibers
//! over a fixed base. Candidate points are rejected unless every registered
//! expression evaluates without a singular error both at the point and at
//! axis nudges of size `exclusion_radius`, which keeps the set away from
//! singular loci by at least that margin.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{evaluate, Expr, Point};

#[derive(Debug, Clone)]
pub struct SampleBox {
    /// Common interval for every base coordinate.
    pub x: (f64, f64),
    /// Common interval for every fiber coordinate.
    pub y: (f64, f64),
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox { x: (-1.0, 1.0), y: (0.5, 2.0) }
    }
}

#[derive(Debug, Clone)]
pub struct SampleConfig {
    pub count: usize,
    pub fibers_per_base: usize,
    pub seed: u64,
    pub bounds: SampleBox,
    pub exclusion_radius: f64,
    pub max_rejections: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            count: 20,
            fibers_per_base: 4,
            seed: 42,
            bounds: SampleBox::default(),
            exclusion_radius: 1e-3,
            max_rejections: 1000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(
        "sampling exhausted after {rejections} rejections; the registered \
         expressions appear singular on most of the box"
    )]
    Exhausted { rejections: usize },
}

/// A frozen set of sample points plus their base grouping.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Vec<Point>,
    base_groups: Vec<Vec<usize>>,
    seed: u64,
}

impl SampleSet {
    /// Draw `config.count` points (grouped by base) rejecting any at which a
    /// registered expression is singular within `exclusion_radius`.
    pub fn generate(
        dim: usize,
        config: &SampleConfig,
        registered: &[Expr],
        params: &BTreeMap<String, f64>,
    ) -> Result<SampleSet, SampleError> {
        assert!(config.count > 0 && config.fibers_per_base > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut points = Vec::with_capacity(config.count);
        let mut base_groups = Vec::new();
        let mut rejections = 0usize;

        while points.len() < config.count {
            let x: Vec<f64> = (0..dim)
                .map(|_| rng.random_range(config.bounds.x.0..=config.bounds.x.1))
                .collect();
            let mut group = Vec::new();
            let want = config.fibers_per_base.min(config.count - points.len());
            while group.len() < want {
                let y: Vec<f64> = (0..dim)
                    .map(|_| rng.random_range(config.bounds.y.0..=config.bounds.y.1))
                    .collect();
                let candidate = match Point::new(x.clone(), y) {
                    Ok(p) => p,
                    Err(_) => {
                        rejections += 1;
                        if rejections > config.max_rejections {
                            return Err(SampleError::Exhausted { rejections });
                        }
                        continue;
                    }
                };
                if point_admissible(&candidate, registered, params, config.exclusion_radius) {
                    group.push(points.len());
                    points.push(candidate);
                } else {
                    rejections += 1;
                    if rejections > config.max_rejections {
                        return Err(SampleError::Exhausted { rejections });
                    }
                }
            }
            base_groups.push(group);
        }
        Ok(SampleSet { points, base_groups, seed: config.seed })
    }

    /// Wrap explicit points as one group per point.
    pub fn from_points(points: Vec<Point>, seed: u64) -> SampleSet {
        let base_groups = (0..points.len()).map(|i| vec![i]).collect();
        SampleSet { points, base_groups, seed }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Indices of the points over each distinct base point.
    pub fn base_groups(&self) -> &[Vec<usize>] {
        &self.base_groups
    }

    /// One representative point per base group.
    pub fn base_representatives(&self) -> impl Iterator<Item = &Point> {
        self.base_groups.iter().map(|g| &self.points[g[0]])
    }
}

fn point_admissible(
    p: &Point,
    registered: &[Expr],
    params: &BTreeMap<String, f64>,
    exclusion_radius: f64,
) -> bool {
    let dim = p.dim();
    for e in registered {
        if evaluate(e, p, params).is_err() {
            return false;
        }
        if exclusion_radius > 0.0 {
            for slot in 0..2 * dim {
                for delta in [exclusion_radius, -exclusion_radius] {
                    let q = p.nudged(slot, delta);
                    if q.y().iter().all(|v| *v == 0.0) {
                        return false;
                    }
                    if evaluate(e, &q, params).is_err() {
                        return false;
                    }
                }
            }
        }
    }
    true
}
