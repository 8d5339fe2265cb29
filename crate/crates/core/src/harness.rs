//! Repeated-realization benchmarking: run N independent seeds, aggregate
//! evaluation counts and final errors with 95% margins of error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Problem;
use crate::error::Error;
use crate::optimizer::{self, Mode, SboConfig};

/// 95% normal critical value used by the margin of error.
const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    /// |best_f - f*|
    Absolute,
    /// |best_f - f*| / |f*|
    Relative,
}

impl ErrorMetric {
    pub fn error(&self, best_f: f64, f_star: f64) -> f64 {
        let abs = (best_f - f_star).abs();
        match self {
            ErrorMetric::Absolute => abs,
            ErrorMetric::Relative => abs / f_star.abs().max(f64::MIN_POSITIVE),
        }
    }
}

/// Sample standard deviation (divisor N-1) and the 95% margin of error
/// `SD / sqrt(N) * 1.96`.
pub fn margin_of_error(samples: &[f64]) -> Result<(f64, f64), Error> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "margin of error requires at least 2 samples, got {n}"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let moe = sd / (n as f64).sqrt() * Z_95;
    Ok((sd, moe))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub mode: Mode,
    pub fevals_mean: f64,
    pub fevals_moe: f64,
    pub error_mean: f64,
    pub error_moe: f64,
    /// Fraction of realizations that completed without error.
    pub success_rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub realizations: usize,
    pub error_metric: ErrorMetric,
}

/// Run `n` independent realizations per mode with seeds
/// `base_seed .. base_seed + n` and aggregate. Failed realizations are
/// excluded from the aggregates and count against the success rate. Row
/// and aggregate ordering is deterministic regardless of worker
/// completion order.
pub fn run_benchmark(
    problem: &Problem,
    config: &SboConfig,
    modes: &[Mode],
    n: usize,
    base_seed: u64,
    error_metric: ErrorMetric,
    jobs: Option<usize>,
) -> Result<BenchmarkReport, Error> {
    if n < 2 {
        return Err(Error::InvalidConfig("benchmark requires N >= 2".into()));
    }
    let f_star = problem
        .known_optimum
        .ok_or_else(|| Error::InvalidConfig("benchmark requires a known optimum".into()))?;

    let pool = match jobs {
        Some(j) if j > 0 => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?,
        ),
        _ => None,
    };

    let mut rows = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mode_config = SboConfig {
            msrs: crate::optimizer::MsrsConfig { mode, ..config.msrs.clone() },
            ..config.clone()
        };
        let run = |seed: u64| optimizer::optimize(problem, &mode_config, seed).ok();
        let results: Vec<_> = match &pool {
            Some(p) => p.install(|| {
                (0..n).into_par_iter().map(|i| run(base_seed + i as u64)).collect()
            }),
            None => (0..n).into_par_iter().map(|i| run(base_seed + i as u64)).collect(),
        };

        let succeeded: Vec<_> = results.into_iter().flatten().collect();
        let success_rate = succeeded.len() as f64 / n as f64;
        let (fevals_mean, fevals_moe, error_mean, error_moe) = if succeeded.len() >= 2 {
            let fevals: Vec<f64> = succeeded.iter().map(|r| r.evaluations_used as f64).collect();
            let errors: Vec<f64> =
                succeeded.iter().map(|r| error_metric.error(r.best_f, f_star)).collect();
            let (_, fmoe) = margin_of_error(&fevals)?;
            let (_, emoe) = margin_of_error(&errors)?;
            (mean(&fevals), fmoe, mean(&errors), emoe)
        } else {
            (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
        };
        rows.push(BenchmarkRow {
            mode,
            fevals_mean,
            fevals_moe,
            error_mean,
            error_moe,
            success_rate,
            n,
        });
    }
    Ok(BenchmarkReport { rows, realizations: n, error_metric })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::StrictFeasible => "strict",
        Mode::PenaltyBaseline => "penalty",
    }
}

impl BenchmarkReport {
    /// CSV rendering at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mode,fevals_mean,fevals_moe,error_mean,error_moe,success_rate,N\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                mode_name(r.mode),
                r.fevals_mean,
                r.fevals_moe,
                r.error_mean,
                r.error_moe,
                r.success_rate,
                r.n
            ));
        }
        out
    }

    /// Aligned table with evaluation counts rounded to the nearest
    /// integer, in the layout of the published result tables.
    pub fn to_table(&self) -> String {
        let metric = match self.error_metric {
            ErrorMetric::Absolute => "Absolute Error",
            ErrorMetric::Relative => "Relative Error",
        };
        let mut out = format!(
            "{:<10} {:>12} {:>10} {:>16} {:>12} {:>9}\n",
            "Mode", "Evaluations", "Eval MOE", metric, "Error MOE", "Success"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>12} {:>10} {:>16} {:>12} {:>8.0}%\n",
                mode_name(r.mode),
                format!("{:.0}", r.fevals_mean),
                format!("{:.0}", r.fevals_moe),
                format!("{:.2e}", r.error_mean),
                format!("{:.2e}", r.error_moe),
                100.0 * r.success_rate
            ));
        }
        out
    }
}
