//! Space-filling initial design, candidate-cloud generation, and the
//! zero-penalty feasibility filter.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Archive, Bounds, ConstraintSet, Problem};
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of uniformly sampled global candidates per cloud.
    pub card_u: usize,
    /// Number of normally perturbed local candidates per cloud.
    pub card_n: usize,
    /// Standard deviations of the local perturbations as fractions of the
    /// smallest variable range.
    pub perturbation_rates: Vec<f64>,
    pub initial_design_size: usize,
    pub max_resample_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            card_u: 2000,
            card_n: 2000,
            perturbation_rates: vec![0.1, 0.01, 0.001],
            initial_design_size: 20,
            max_resample_attempts: 100,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.perturbation_rates.iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidConfig("perturbation rates must be strictly positive".into()));
        }
        if self.initial_design_size == 0 {
            return Err(Error::InvalidConfig("initial design size must be at least 1".into()));
        }
        if self.max_resample_attempts == 0 {
            return Err(Error::InvalidConfig("max resample attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// The candidate set for one infill step: global rows first, then local
/// rows grouped by perturbation rate.
#[derive(Debug, Clone, Default)]
pub struct CandidateCloud {
    pub global_points: Vec<Vec<f64>>,
    pub local_points: Vec<Vec<f64>>,
    /// Penalty per row over `global_points` then `local_points`; empty
    /// until computed.
    pub penalties: Vec<f64>,
    /// Zero-penalty rows; empty until the filter runs.
    pub feasible: Vec<Vec<f64>>,
}

impl CandidateCloud {
    pub fn len(&self) -> usize {
        self.global_points.len() + self.local_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.global_points.iter().chain(self.local_points.iter())
    }
}

/// Latin hypercube design: `n_points` rows inside the box with exactly one
/// point in each of the `n_points` equal-width strata of every dimension.
/// Per-dimension stratum permutations are independent and placement
/// within a stratum is uniform.
pub fn latin_hypercube(n_points: usize, bounds: &Bounds, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(n_points >= 1);
    let dim = bounds.dim();
    let mut points = vec![vec![0.0; dim]; n_points];
    let mut strata: Vec<usize> = (0..n_points).collect();
    for d in 0..dim {
        strata.shuffle(rng);
        let (lo, width) = (bounds.lower()[d], bounds.range(d) / n_points as f64);
        for (point, &s) in points.iter_mut().zip(&strata) {
            let u: f64 = rng.random_range(0.0..1.0);
            point[d] = lo + width * (s as f64 + u);
        }
    }
    points
}

/// Exactly `initial_design_size` feasible points, collected by drawing
/// LHS batches over the box and keeping the feasible rows until the quota
/// is met. Stratification holds per batch, not over the returned union.
pub fn feasible_initial_design(
    problem: &Problem,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, Error> {
    let quota = config.initial_design_size;
    let mut design: Vec<Vec<f64>> = Vec::with_capacity(quota);
    for _attempt in 0..config.max_resample_attempts {
        let batch = latin_hypercube(quota, &problem.bounds, rng);
        for x in batch {
            if problem.is_feasible(&x)? && !near_any(&x, &design, duplicate_tolerance(&problem.bounds)) {
                design.push(x);
                if design.len() == quota {
                    return Ok(design);
                }
            }
        }
    }
    Err(Error::InfeasibleRegion { needed: quota, attempts: config.max_resample_attempts })
}

fn duplicate_tolerance(bounds: &Bounds) -> f64 {
    Archive::for_bounds(bounds).duplicate_tolerance()
}

fn near_any(x: &[f64], rows: &[Vec<f64>], tol: f64) -> bool {
    rows.iter().any(|r| {
        x.iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < tol
    })
}

/// Generate the possibly-infeasible candidate cloud: `card_u` uniform
/// draws over the box plus `card_n` normal perturbations of the incumbent
/// best, split equally across the perturbation rates (remainder assigned
/// to the smallest rate). Out-of-box local rows are clipped onto the
/// boundary.
pub fn generate_candidates(
    best_x: &[f64],
    bounds: &Bounds,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> CandidateCloud {
    let dim = bounds.dim();
    debug_assert_eq!(best_x.len(), dim);

    let mut global_points = Vec::with_capacity(config.card_u);
    for _ in 0..config.card_u {
        let x = (0..dim)
            .map(|d| rng.random_range(bounds.lower()[d]..=bounds.upper()[d]))
            .collect();
        global_points.push(x);
    }

    let mut local_points = Vec::with_capacity(config.card_n);
    if config.card_n > 0 && !config.perturbation_rates.is_empty() {
        let rates = &config.perturbation_rates;
        let per_rate = config.card_n / rates.len();
        let remainder = config.card_n - per_rate * rates.len();
        let smallest = rates
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let min_range = bounds.min_range();
        for (i, &rate) in rates.iter().enumerate() {
            let count = per_rate + if i == smallest { remainder } else { 0 };
            let sigma = rate * min_range;
            for _ in 0..count {
                let mut x: Vec<f64> = best_x
                    .iter()
                    .map(|&c| c + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect();
                bounds.clip(&mut x);
                local_points.push(x);
            }
        }
    }

    CandidateCloud { global_points, local_points, penalties: Vec::new(), feasible: Vec::new() }
}

/// Penalty per row: the sum over constraints of the positive part of
/// `g_r`, zero exactly on the constraint-feasible set.
pub fn penalty_vector(points: &[Vec<f64>], constraints: &ConstraintSet) -> Vec<f64> {
    points.iter().map(|x| constraints.violation(x)).collect()
}

/// Keep the rows with penalty exactly zero, excluding near-duplicates of
/// archived points. `None` signals the caller to regenerate the cloud
/// (the feasible subset was empty or entirely archived already).
pub fn filter_feasible(
    cloud: &mut CandidateCloud,
    constraints: &ConstraintSet,
    archive: &Archive,
) -> Option<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = cloud.rows().cloned().collect();
    cloud.penalties = penalty_vector(&rows, constraints);
    let feasible: Vec<Vec<f64>> = rows
        .into_iter()
        .zip(&cloud.penalties)
        .filter(|(x, &j)| j == 0.0 && !archive.contains_near(x))
        .map(|(x, _)| x)
        .collect();
    cloud.feasible = feasible.clone();
    if feasible.is_empty() {
        None
    } else {
        Some(feasible)
    }
}

/// Candidate generation with the resampling rule: regenerate the cloud
/// until its feasible non-archived subset is nonempty, up to the attempt
/// budget.
pub fn feasible_candidates(
    best_x: &[f64],
    problem: &Problem,
    archive: &Archive,
    config: &SamplerConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Vec<f64>>, Error> {
    for _ in 0..config.max_resample_attempts {
        let mut cloud = generate_candidates(best_x, &problem.bounds, config, rng);
        if let Some(feasible) = filter_feasible(&mut cloud, &problem.constraints, archive) {
            return Ok(feasible);
        }
    }
    Err(Error::ResampleExhausted { attempts: config.max_resample_attempts })
}
