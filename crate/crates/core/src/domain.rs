//! Problem-definition and result types shared by every other module.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Scale factor for the archive duplicate tolerance relative to the
/// smallest variable range. Interpolating surrogates degenerate on
/// duplicate rows, so near-identical points are rejected at insertion.
const DUPLICATE_TOL_SCALE: f64 = 1e-12;

/// Box bounds of the search space, one `[lower, upper]` pair per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, Error> {
        if lower.is_empty() {
            return Err(Error::InvalidBounds("bounds must have at least one dimension".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), actual: upper.len() });
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !(l < u) {
                return Err(Error::InvalidBounds(format!(
                    "dimension {i}: lower {l} must be strictly below upper {u}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-half, half]^dim`.
    pub fn symmetric(half: f64, dim: usize) -> Result<Self, Error> {
        Self::new(vec![-half; dim], vec![half; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn range(&self, d: usize) -> f64 {
        self.upper[d] - self.lower[d]
    }

    /// Smallest variable range, `min(u - l)`.
    pub fn min_range(&self) -> f64 {
        (0..self.dim()).map(|d| self.range(d)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    /// Clip a point onto the box, componentwise.
    pub fn clip(&self, x: &mut [f64]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(l, u);
        }
    }
}

pub type ConstraintFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Ordered set of inequality constraints `g_r(x) <= 0`.
///
/// A point is constraint-feasible iff every `g_r` is non-positive;
/// boundary points are feasible.
#[derive(Clone, Default)]
pub struct ConstraintSet {
    funcs: Vec<ConstraintFn>,
}

impl ConstraintSet {
    pub fn new(funcs: Vec<ConstraintFn>) -> Self {
        Self { funcs }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn push(&mut self, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) {
        self.funcs.push(Arc::new(f));
    }

    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.funcs.iter().map(|g| g(x)).collect()
    }

    pub fn satisfied(&self, x: &[f64]) -> bool {
        self.funcs.iter().all(|g| g(x) <= 0.0)
    }

    /// Sum of positive parts of all constraint values, zero exactly on the
    /// constraint-feasible set.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.funcs.iter().map(|g| g(x).max(0.0)).sum()
    }
}

impl fmt::Debug for ConstraintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConstraintSet({} inequalities)", self.funcs.len())
    }
}

pub type ObjectiveFn = Arc<dyn Fn(&[f64]) -> Result<f64, Error> + Send + Sync>;

/// A constrained minimization problem over a box.
#[derive(Clone)]
pub struct Problem {
    pub bounds: Bounds,
    pub constraints: ConstraintSet,
    objective: ObjectiveFn,
    pub known_optimum: Option<f64>,
    pub penalty_value: f64,
    pub label: String,
}

impl Problem {
    pub fn new(
        label: impl Into<String>,
        bounds: Bounds,
        constraints: ConstraintSet,
        objective: ObjectiveFn,
    ) -> Self {
        Self {
            bounds,
            constraints,
            objective,
            known_optimum: None,
            penalty_value: 1e6,
            label: label.into(),
        }
    }

    /// Convenience constructor for objectives that cannot fail.
    pub fn from_fn(
        label: impl Into<String>,
        bounds: Bounds,
        constraints: ConstraintSet,
        objective: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(label, bounds, constraints, Arc::new(move |x| Ok(objective(x))))
    }

    pub fn with_known_optimum(mut self, f_star: f64) -> Self {
        self.known_optimum = Some(f_star);
        self
    }

    pub fn with_penalty_value(mut self, penalty: f64) -> Self {
        self.penalty_value = penalty;
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), Error> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }
        Ok(())
    }

    /// True iff `x` is inside the box and satisfies every inequality
    /// constraint (inclusive: boundary points are feasible).
    pub fn is_feasible(&self, x: &[f64]) -> Result<bool, Error> {
        self.check_dim(x)?;
        Ok(self.bounds.contains(x) && self.constraints.satisfied(x))
    }

    /// True objective value at `x`.
    pub fn objective(&self, x: &[f64]) -> Result<f64, Error> {
        self.check_dim(x)?;
        (self.objective)(x)
    }

    /// Objective with the penalty sentinel substituted on infeasible
    /// points. Used only by the penalty-baseline mode and landscape
    /// emission; the strict-feasibility path never sees the sentinel.
    pub fn penalized_objective(&self, x: &[f64]) -> Result<f64, Error> {
        if self.is_feasible(x)? {
            self.objective(x)
        } else {
            Ok(self.penalty_value)
        }
    }
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("constraints", &self.constraints.len())
            .field("known_optimum", &self.known_optimum)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSource {
    InitialDesign,
    Infill,
}

/// One true-objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedPoint {
    pub x: Vec<f64>,
    pub f: f64,
    pub iteration_index: usize,
    pub source: PointSource,
}

/// The evaluated-point set `M_k`: every true evaluation made so far plus
/// the index of the incumbent best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archive {
    points: Vec<EvaluatedPoint>,
    best_index: Option<usize>,
    duplicate_tolerance: f64,
}

impl Archive {
    pub fn new(duplicate_tolerance: f64) -> Self {
        Self { points: Vec::new(), best_index: None, duplicate_tolerance }
    }

    /// Archive with the duplicate tolerance tied to the box scale.
    pub fn for_bounds(bounds: &Bounds) -> Self {
        Self::new(DUPLICATE_TOL_SCALE * bounds.min_range())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[EvaluatedPoint] {
        &self.points
    }

    pub fn duplicate_tolerance(&self) -> f64 {
        self.duplicate_tolerance
    }

    /// True if `x` is within the duplicate tolerance (infinity norm) of an
    /// archived point.
    pub fn contains_near(&self, x: &[f64]) -> bool {
        self.points.iter().any(|p| inf_norm_dist(&p.x, x) < self.duplicate_tolerance)
    }

    /// Append a point unless it duplicates an archived one. Returns whether
    /// the point was inserted. The best index follows the minimum `f`,
    /// ties broken by earliest insertion.
    pub fn push(&mut self, point: EvaluatedPoint) -> bool {
        if self.contains_near(&point.x) {
            return false;
        }
        let better = match self.best_index {
            None => true,
            Some(b) => point.f < self.points[b].f,
        };
        self.points.push(point);
        if better {
            self.best_index = Some(self.points.len() - 1);
        }
        true
    }

    pub fn best(&self) -> Option<&EvaluatedPoint> {
        self.best_index.map(|i| &self.points[i])
    }

    pub fn best_f(&self) -> Option<f64> {
        self.best().map(|p| p.f)
    }

    pub fn best_x(&self) -> Option<&[f64]> {
        self.best().map(|p| p.x.as_slice())
    }
}

fn inf_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ToleranceMet,
    RelativeChangeMet,
    MaxIterations,
    ResampleExhausted,
}

/// Full record of one optimization realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub history: Archive,
    pub evaluations_used: usize,
    pub termination: Termination,
    pub seed: u64,
    pub best_x: Vec<f64>,
    pub best_f: f64,
}

impl RunRecord {
    pub fn from_archive(history: Archive, termination: Termination, seed: u64) -> Self {
        let best = history.best().expect("run record requires at least one evaluation");
        let (best_x, best_f) = (best.x.clone(), best.f);
        let evaluations_used = history.len();
        Self { history, evaluations_used, termination, seed, best_x, best_f }
    }
}
