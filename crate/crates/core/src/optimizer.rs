//! The MSRS infill loop: score feasible candidates against the fitted
//! surrogate, evaluate one true point per iteration, refit, stop.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::domain::{Archive, EvaluatedPoint, PointSource, Problem, RunRecord, Termination};
use crate::error::Error;
use crate::sampling::{self, SamplerConfig};
use crate::surrogate::{self, KrigingConfig, KrigingModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Candidates are filtered to the exactly feasible subset; every true
    /// evaluation is feasible by construction.
    StrictFeasible,
    /// No constraint handling: the full cloud competes and infeasible
    /// evaluations receive the penalty sentinel (the SBO_P baseline).
    PenaltyBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsrsConfig {
    /// Response-vs-distance weights applied cyclically over iterations.
    pub weight_cycle: Vec<f64>,
    /// Maximum number of infill iterations.
    pub k_max: usize,
    /// Stop when |best_f - known_optimum| falls at or below this.
    pub absolute_tolerance: Option<f64>,
    /// Stop when the relative change of best_f between successive
    /// iterations falls at or below this (black-box stopping rule).
    pub relative_change_tolerance: Option<f64>,
    pub mode: Mode,
}

impl Default for MsrsConfig {
    fn default() -> Self {
        Self {
            weight_cycle: vec![0.3, 0.5, 0.8, 0.95, 1.0],
            k_max: 200,
            absolute_tolerance: None,
            relative_change_tolerance: None,
            mode: Mode::StrictFeasible,
        }
    }
}

impl MsrsConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.weight_cycle.is_empty() {
            return Err(Error::InvalidConfig("weight cycle must be nonempty".into()));
        }
        if self.weight_cycle.iter().any(|&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::InvalidConfig("weights must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Everything one `optimize` call needs besides the problem and seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SboConfig {
    pub sampler: SamplerConfig,
    pub kriging: KrigingConfig,
    pub msrs: MsrsConfig,
}

impl SboConfig {
    pub fn validate(&self) -> Result<(), Error> {
        self.sampler.validate()?;
        self.msrs.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgressRecord {
    pub iteration: usize,
    pub evaluations: usize,
    pub best_f: f64,
}

#[derive(Debug, ThisError)]
pub enum OptimizeError {
    #[error("initial design failed: {0}")]
    InitialDesign(#[source] Error),

    #[error("start point is not feasible and was rejected")]
    InfeasibleStart,

    #[error(transparent)]
    Config(Error),

    /// Failure mid-loop; the evaluations made so far are preserved.
    #[error("run aborted after {} evaluations: {source}", partial.evaluations_used)]
    Aborted {
        source: Error,
        partial: Box<RunRecord>,
    },
}

/// MSRS weighted score, lower is better. The response criterion is the
/// surrogate value min-max scaled to [0, 1] (constant vectors map to 0);
/// the distance criterion is `(d_max - d_i) / (d_max - d_min)` with `d_i`
/// the Euclidean distance to the nearest archive point.
pub fn msrs_score(
    candidates: &[Vec<f64>],
    surrogate_values: &[f64],
    archive: &Archive,
    weight: f64,
) -> Vec<f64> {
    assert!(!candidates.is_empty());
    assert_eq!(candidates.len(), surrogate_values.len());

    let (v_min, v_max) = min_max(surrogate_values);
    let v_span = v_max - v_min;

    let distances: Vec<f64> = candidates
        .iter()
        .map(|x| {
            archive
                .points()
                .iter()
                .map(|p| euclid(x, &p.x))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (d_min, d_max) = min_max(&distances);
    let d_span = d_max - d_min;

    surrogate_values
        .iter()
        .zip(&distances)
        .map(|(&v, &d)| {
            let vr = if v_span > 0.0 { (v - v_min) / v_span } else { 0.0 };
            let vd = if d_span > 0.0 { (d_max - d) / d_span } else { 0.0 };
            weight * vr + (1.0 - weight) * vd
        })
        .collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Index of the best candidate under the weight for iteration `k`: argmin
/// of the score, ties broken by smaller surrogate value, then by lowest
/// row index.
pub fn select_next(
    candidates: &[Vec<f64>],
    model: &KrigingModel,
    archive: &Archive,
    config: &MsrsConfig,
    iteration: usize,
) -> usize {
    let surrogate_values = model.predict_batch(candidates);
    let weight = config.weight_cycle[iteration % config.weight_cycle.len()];
    let scores = msrs_score(candidates, &surrogate_values, archive, weight);
    select_index(&scores, &surrogate_values)
}

pub(crate) fn select_index(scores: &[f64], surrogate_values: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best]
            || (scores[i] == scores[best] && surrogate_values[i] < surrogate_values[best])
        {
            best = i;
        }
    }
    best
}

/// Run one optimization realization.
pub fn optimize(problem: &Problem, config: &SboConfig, seed: u64) -> Result<RunRecord, OptimizeError> {
    optimize_with(problem, config, seed, None, &mut |_| {})
}

/// Run one realization with an optional feasible start point seeded into
/// the initial design and a per-iteration progress sink.
pub fn optimize_with(
    problem: &Problem,
    config: &SboConfig,
    seed: u64,
    start: Option<&[f64]>,
    progress: &mut dyn FnMut(ProgressRecord),
) -> Result<RunRecord, OptimizeError> {
    config.validate().map_err(OptimizeError::Config)?;
    let strict = config.msrs.mode == Mode::StrictFeasible;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut archive = Archive::for_bounds(&problem.bounds);

    let evaluate = |x: &[f64]| -> Result<f64, Error> {
        if strict {
            debug_assert!(problem.is_feasible(x).unwrap_or(false));
            problem.objective(x)
        } else {
            problem.penalized_objective(x)
        }
    };

    // Step 1: initial design (a supplied start counts toward the quota).
    let mut design: Vec<Vec<f64>> = Vec::new();
    if let Some(x0) = start {
        if !problem.is_feasible(x0).map_err(OptimizeError::InitialDesign)? {
            return Err(OptimizeError::InfeasibleStart);
        }
        design.push(x0.to_vec());
    }
    let quota = config.sampler.initial_design_size.saturating_sub(design.len());
    if quota > 0 {
        let batch_config = SamplerConfig { initial_design_size: quota, ..config.sampler.clone() };
        let sampled = if strict {
            sampling::feasible_initial_design(problem, &batch_config, &mut rng)
                .map_err(OptimizeError::InitialDesign)?
        } else {
            sampling::latin_hypercube(quota, &problem.bounds, &mut rng)
        };
        design.extend(sampled);
    }
    for x in design {
        let f = evaluate(&x).map_err(OptimizeError::InitialDesign)?;
        archive.push(EvaluatedPoint { x, f, iteration_index: 0, source: PointSource::InitialDesign });
    }

    let tol_met = |archive: &Archive| -> bool {
        match (config.msrs.absolute_tolerance, problem.known_optimum) {
            (Some(tol), Some(f_star)) => {
                archive.best_f().map(|f| (f - f_star).abs() <= tol).unwrap_or(false)
            }
            _ => false,
        }
    };

    // The initial design may already satisfy the tolerance.
    if tol_met(&archive) {
        return Ok(RunRecord::from_archive(archive, Termination::ToleranceMet, seed));
    }

    let mut warm_theta: Option<Vec<f64>> = None;
    let mut prev_best = archive.best_f().expect("initial design is nonempty");
    let mut termination = Termination::MaxIterations;

    for k in 0..config.msrs.k_max {
        // Step 2 / 3d: (re)fit the surrogate, warm-starting theta.
        let model = match surrogate::fit_with_start(&archive, &config.kriging, warm_theta.as_deref())
        {
            Ok(m) => m,
            Err(e) => return Err(abort(e, archive, seed)),
        };
        warm_theta = Some(model.theta().to_vec());

        // Step 3a: candidate cloud, filtered in strict mode.
        let best_x = archive.best_x().expect("archive nonempty").to_vec();
        let candidates = if strict {
            match sampling::feasible_candidates(&best_x, problem, &archive, &config.sampler, &mut rng)
            {
                Ok(c) => c,
                Err(e) => {
                    let record = RunRecord::from_archive(archive, Termination::ResampleExhausted, seed);
                    return Err(OptimizeError::Aborted { source: e, partial: Box::new(record) });
                }
            }
        } else {
            let cloud =
                sampling::generate_candidates(&best_x, &problem.bounds, &config.sampler, &mut rng);
            let rows: Vec<Vec<f64>> =
                cloud.rows().filter(|x| !archive.contains_near(x)).cloned().collect();
            if rows.is_empty() {
                let record = RunRecord::from_archive(archive, Termination::ResampleExhausted, seed);
                return Err(OptimizeError::Aborted {
                    source: Error::ResampleExhausted { attempts: 1 },
                    partial: Box::new(record),
                });
            }
            rows
        };

        // Step 3b: weighted score, one new true evaluation.
        let next = select_next(&candidates, &model, &archive, &config.msrs, k);
        let x_next = candidates[next].clone();
        let f_next = match evaluate(&x_next) {
            Ok(f) => f,
            Err(e) => return Err(abort(e, archive, seed)),
        };
        archive.push(EvaluatedPoint {
            x: x_next,
            f: f_next,
            iteration_index: k + 1,
            source: PointSource::Infill,
        });

        let best_f = archive.best_f().unwrap();
        progress(ProgressRecord { iteration: k, evaluations: archive.len(), best_f });

        // Step 3c: stopping rules.
        if tol_met(&archive) {
            termination = Termination::ToleranceMet;
            break;
        }
        if let Some(rtol) = config.msrs.relative_change_tolerance {
            let rel = (prev_best - best_f).abs() / prev_best.abs().max(f64::MIN_POSITIVE);
            if rel <= rtol {
                termination = Termination::RelativeChangeMet;
                break;
            }
        }
        prev_best = best_f;
    }

    Ok(RunRecord::from_archive(archive, termination, seed))
}

fn abort(source: Error, archive: Archive, seed: u64) -> OptimizeError {
    let record = RunRecord::from_archive(archive, Termination::MaxIterations, seed);
    OptimizeError::Aborted { source, partial: Box::new(record) }
}

/// Draw a uniformly random point from the feasible region by rejection
/// sampling; used by tests and the harness for fuzzed starts.
pub fn random_feasible_point(problem: &Problem, rng: &mut impl Rng) -> Option<Vec<f64>> {
    let b = &problem.bounds;
    for _ in 0..1_000_000 {
        let x: Vec<f64> =
            (0..b.dim()).map(|d| rng.random_range(b.lower()[d]..=b.upper()[d])).collect();
        if problem.is_feasible(&x).ok()? {
            return Some(x);
        }
    }
    None
}
