//! Python bindings: problems, the optimizer, and the harness statistics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sbo_core::harness;
use sbo_core::optimizer::{self, MsrsConfig, SboConfig};
use sbo_core::problems::{self, FishKinematics, RastriginInstance};
use sbo_core::sampling;
use sbo_core::{Bounds, Mode, Problem as CoreProblem, RunRecord, Termination};

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "strict" => Ok(Mode::StrictFeasible),
        "penalty" => Ok(Mode::PenaltyBaseline),
        other => Err(PyValueError::new_err(format!(
            "unknown mode {other:?}; expected \"strict\" or \"penalty\""
        ))),
    }
}

/// A constrained minimization problem over a box.
#[pyclass(name = "Problem")]
struct PyProblem {
    inner: CoreProblem,
}

#[pymethods]
impl PyProblem {
    /// The constrained 2-D Rosenbrock problem (a = 0.35, b = 100).
    #[staticmethod]
    fn rosenbrock() -> Self {
        Self { inner: problems::rosenbrock_problem(Default::default(), None) }
    }

    /// A seeded shifted rotated Rastrigin instance with the shared
    /// constraint pair; optimum value -330.
    #[staticmethod]
    #[pyo3(signature = (seed=42))]
    fn rastrigin(seed: u64) -> Self {
        Self { inner: problems::rastrigin_problem(RastriginInstance::seeded(seed), None) }
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.label
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn known_optimum(&self) -> Option<f64> {
        self.inner.known_optimum
    }

    fn is_feasible(&self, x: Vec<f64>) -> PyResult<bool> {
        self.inner.is_feasible(&x).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&x).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn penalized_objective(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.penalized_objective(&x).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Problem({:?}, dim={})", self.inner.label, self.inner.dim())
    }
}

/// Result of one optimization realization.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    record: RunRecord,
}

#[pymethods]
impl PyRunResult {
    #[getter]
    fn best_x(&self) -> Vec<f64> {
        self.record.best_x.clone()
    }

    #[getter]
    fn best_f(&self) -> f64 {
        self.record.best_f
    }

    #[getter]
    fn evaluations_used(&self) -> usize {
        self.record.evaluations_used
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.record.seed
    }

    #[getter]
    fn termination(&self) -> &'static str {
        match self.record.termination {
            Termination::ToleranceMet => "tolerance_met",
            Termination::RelativeChangeMet => "relative_change_met",
            Termination::MaxIterations => "max_iterations",
            Termination::ResampleExhausted => "resample_exhausted",
        }
    }

    /// Evaluation history as (x, f) tuples in evaluation order.
    fn history(&self) -> Vec<(Vec<f64>, f64)> {
        self.record.history.points().iter().map(|p| (p.x.clone(), p.f)).collect()
    }

    /// The full record as a JSON string (identical to the CLI record field).
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.record).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(best_f={:.6e}, evaluations={}, termination={})",
            self.record.best_f,
            self.record.evaluations_used,
            self.termination()
        )
    }
}

/// Run one optimization realization.
#[pyfunction]
#[pyo3(signature = (problem, seed=0, mode="strict", k_max=200, absolute_tolerance=None, relative_change_tolerance=None, start=None))]
fn optimize(
    problem: &PyProblem,
    seed: u64,
    mode: &str,
    k_max: usize,
    absolute_tolerance: Option<f64>,
    relative_change_tolerance: Option<f64>,
    start: Option<Vec<f64>>,
) -> PyResult<PyRunResult> {
    let config = SboConfig {
        msrs: MsrsConfig {
            mode: parse_mode(mode)?,
            k_max,
            absolute_tolerance,
            relative_change_tolerance,
            ..Default::default()
        },
        ..Default::default()
    };
    let record =
        optimizer::optimize_with(&problem.inner, &config, seed, start.as_deref(), &mut |_| {})
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(PyRunResult { record })
}

/// Latin hypercube design: `n_points` rows in the box given by `lower`
/// and `upper`, one point per stratum in every dimension.
#[pyfunction]
fn latin_hypercube(
    n_points: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    use rand::SeedableRng;
    let bounds = Bounds::new(lower, upper).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Ok(sampling::latin_hypercube(n_points, &bounds, &mut rng))
}

/// Sample standard deviation and 95% margin of error `SD / sqrt(N) * 1.96`.
#[pyfunction]
fn margin_of_error(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    harness::margin_of_error(&samples).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Fish midline lateral displacement `y_c(p, t)` for amplitude
/// coefficients (x1, x2), L = 0.3 m, wavelength 1.1, frequency 1 Hz.
#[pyfunction]
fn fish_midline(x1: f64, x2: f64, p: f64, t: f64) -> f64 {
    problems::fish_midline(&FishKinematics::new(x1, x2), p, t)
}

#[pymodule]
fn sbo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(latin_hypercube, m)?)?;
    m.add_function(wrap_pyfunction!(margin_of_error, m)?)?;
    m.add_function(wrap_pyfunction!(fish_midline, m)?)?;
    Ok(())
}
