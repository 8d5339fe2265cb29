//! Ordinary kriging: Gaussian correlation, constant mean, hyperparameters
//! by maximizing the concentrated log-likelihood with a deterministic
//! coordinate pattern search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::domain::Archive;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingConfig {
    /// Correlation-parameter bounds in normalized coordinates.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Pattern-search start value when no warm start is available.
    pub theta_init: f64,
    /// Initial coordinate step of the pattern search.
    pub initial_step: f64,
    /// Step used when warm-starting from a previous fit.
    pub warm_start_step: f64,
    /// Multiplicative step shrink on a failed sweep.
    pub shrink: f64,
    /// Search stops once the step falls below this.
    pub min_step: f64,
    /// Diagonal regularization of the correlation matrix.
    pub nugget: f64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            theta_min: 1e-2,
            theta_max: 20.0,
            theta_init: 10.0,
            initial_step: 5.0,
            warm_start_step: 1.0,
            shrink: 0.5,
            min_step: 1e-3,
            nugget: 1e-10,
        }
    }
}

/// A fitted ordinary-kriging model in normalized coordinates.
#[derive(Debug, Clone)]
pub struct KrigingModel {
    design_norm: DMatrix<f64>,
    theta: Vec<f64>,
    mu: f64,
    sigma2: f64,
    /// R^{-1} (y - mu 1) against the factorized correlation matrix.
    alpha: DVector<f64>,
    x_shift: Vec<f64>,
    x_scale: Vec<f64>,
    y_shift: f64,
    y_scale: f64,
}

struct Normalized {
    design: DMatrix<f64>,
    responses: DVector<f64>,
    x_shift: Vec<f64>,
    x_scale: Vec<f64>,
    y_shift: f64,
    y_scale: f64,
}

fn normalize(archive: &Archive) -> Normalized {
    let m = archive.len();
    let n = archive.points()[0].x.len();
    let mut x_shift = vec![0.0; n];
    let mut x_scale = vec![1.0; n];
    for d in 0..n {
        let mean = archive.points().iter().map(|p| p.x[d]).sum::<f64>() / m as f64;
        let var = archive.points().iter().map(|p| (p.x[d] - mean).powi(2)).sum::<f64>()
            / (m as f64 - 1.0).max(1.0);
        x_shift[d] = mean;
        let sd = var.sqrt();
        x_scale[d] = if sd > 1e-300 { sd } else { 1.0 };
    }
    let y_mean = archive.points().iter().map(|p| p.f).sum::<f64>() / m as f64;
    let y_var = archive.points().iter().map(|p| (p.f - y_mean).powi(2)).sum::<f64>()
        / (m as f64 - 1.0).max(1.0);
    let y_sd = y_var.sqrt();
    let y_scale = if y_sd > 1e-300 { y_sd } else { 1.0 };

    let design = DMatrix::from_fn(m, n, |i, d| (archive.points()[i].x[d] - x_shift[d]) / x_scale[d]);
    let responses = DVector::from_fn(m, |i, _| (archive.points()[i].f - y_mean) / y_scale);
    Normalized { design, responses, x_shift, x_scale, y_shift: y_mean, y_scale }
}

/// Squared componentwise differences for every point pair, cached once per
/// fit so each likelihood evaluation only re-weights by theta.
fn pairwise_sq_diffs(design: &DMatrix<f64>) -> Vec<Vec<f64>> {
    let (m, n) = (design.nrows(), design.ncols());
    let mut out = vec![vec![0.0; n]; m * (m - 1) / 2];
    let mut k = 0;
    for i in 0..m {
        for j in (i + 1)..m {
            for d in 0..n {
                let delta = design[(i, d)] - design[(j, d)];
                out[k][d] = delta * delta;
            }
            k += 1;
        }
    }
    out
}

fn correlation_matrix(
    sq_diffs: &[Vec<f64>],
    m: usize,
    theta: &[f64],
    nugget: f64,
) -> DMatrix<f64> {
    let mut r = DMatrix::from_element(m, m, 0.0);
    let mut k = 0;
    for i in 0..m {
        r[(i, i)] = 1.0 + nugget;
        for j in (i + 1)..m {
            let exponent: f64 = sq_diffs[k].iter().zip(theta).map(|(&d2, &t)| t * d2).sum();
            let c = (-exponent).exp();
            r[(i, j)] = c;
            r[(j, i)] = c;
            k += 1;
        }
    }
    r
}

/// Ceiling on the nugget-induced training-point error in normalized
/// response units; keeps the fitted model an interpolator in practice.
const INTERP_TOL: f64 = 1e-8;

struct LikelihoodEval {
    nll: f64,
    mu: f64,
    sigma2: f64,
    chol: Cholesky<f64, Dyn>,
}

/// Concentrated negative log-likelihood of ordinary kriging: mu and
/// sigma2 are profiled out in closed form given theta.
fn evaluate_theta(
    sq_diffs: &[Vec<f64>],
    responses: &DVector<f64>,
    theta: &[f64],
    nugget: f64,
) -> Option<LikelihoodEval> {
    let m = responses.len();
    let r = correlation_matrix(sq_diffs, m, theta, nugget);
    let chol = Cholesky::new(r)?;
    let ones = DVector::from_element(m, 1.0);
    let rinv_ones = chol.solve(&ones);
    let rinv_y = chol.solve(responses);
    let denom = ones.dot(&rinv_ones);
    if denom <= 0.0 {
        return None;
    }
    let mu = ones.dot(&rinv_y) / denom;
    let resid = responses - &ones * mu;
    let rinv_resid = chol.solve(&resid);
    let sigma2 = (resid.dot(&rinv_resid) / m as f64).max(0.0);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|&l| 2.0 * l.ln()).sum();
    let mut nll = m as f64 * sigma2.max(1e-300).ln() + log_det;
    // The training-point prediction error is nugget * |R^-1 resid| per
    // point. Smooth responses pull the likelihood toward tiny theta where
    // that error explodes and the model stops interpolating; steer the
    // search away unless no theta in range avoids it (near-duplicate
    // archives), in which case the least-smoothing fit still wins.
    let smoothing = nugget * rinv_resid.amax();
    if smoothing > INTERP_TOL {
        nll += 1e6 * (1.0 + (smoothing / INTERP_TOL).ln());
    }
    if !nll.is_finite() {
        return None;
    }
    Some(LikelihoodEval { nll, mu, sigma2, chol })
}

/// Fit an ordinary-kriging model to the archive. Deterministic: identical
/// input yields identical theta, mu, sigma2.
pub fn fit(archive: &Archive, config: &KrigingConfig) -> Result<KrigingModel, Error> {
    fit_with_start(archive, config, None)
}

/// Fit with an optional warm-started theta (in normalized coordinates),
/// typically the previous iteration's optimum.
pub fn fit_with_start(
    archive: &Archive,
    config: &KrigingConfig,
    warm_theta: Option<&[f64]>,
) -> Result<KrigingModel, Error> {
    let m = archive.len();
    if m < 2 {
        return Err(Error::Fit(format!("need at least 2 points, archive has {m}")));
    }
    let n = archive.points()[0].x.len();
    let norm = normalize(archive);
    let sq_diffs = pairwise_sq_diffs(&norm.design);

    let clamp = |t: f64| t.clamp(config.theta_min, config.theta_max);
    let (mut theta, initial_step) = match warm_theta {
        Some(w) if w.len() == n => {
            (w.iter().map(|&t| clamp(t)).collect::<Vec<_>>(), config.warm_start_step)
        }
        _ => (vec![clamp(config.theta_init); n], config.initial_step),
    };

    let mut best = evaluate_theta(&sq_diffs, &norm.responses, &theta, config.nugget)
        .or_else(|| {
            // fall back to the configured start if the warm start is singular
            theta = vec![clamp(config.theta_init); n];
            evaluate_theta(&sq_diffs, &norm.responses, &theta, config.nugget)
        })
        .ok_or_else(|| fit_failure(&norm.design))?;

    // Coordinate pattern search, greedy accept, shrink on failed sweep.
    let mut step = initial_step;
    while step >= config.min_step {
        let mut improved = false;
        for d in 0..n {
            for dir in [1.0, -1.0] {
                let candidate = clamp(theta[d] + dir * step);
                if candidate == theta[d] {
                    continue;
                }
                let mut trial = theta.clone();
                trial[d] = candidate;
                if let Some(eval) =
                    evaluate_theta(&sq_diffs, &norm.responses, &trial, config.nugget)
                {
                    if eval.nll < best.nll {
                        theta = trial;
                        best = eval;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= config.shrink;
        }
    }

    let ones = DVector::from_element(m, 1.0);
    let resid = &norm.responses - &ones * best.mu;
    let mut alpha = best.chol.solve(&resid);
    // Two steps of iterative refinement. The correlation matrix is badly
    // conditioned whenever the likelihood favors a small theta, and the
    // training-point prediction error equals the solve residual, so this
    // is what keeps the model interpolating.
    let r_final = correlation_matrix(&sq_diffs, m, &theta, config.nugget);
    for _ in 0..2 {
        let residual = &resid - &r_final * &alpha;
        alpha += best.chol.solve(&residual);
    }

    Ok(KrigingModel {
        design_norm: norm.design,
        theta,
        mu: best.mu,
        sigma2: best.sigma2,
        alpha,
        x_shift: norm.x_shift,
        x_scale: norm.x_scale,
        y_shift: norm.y_shift,
        y_scale: norm.y_scale,
    })
}

fn fit_failure(design: &DMatrix<f64>) -> Error {
    // name the closest pair: the usual culprit for a singular correlation
    let m = design.nrows();
    let mut min_d = f64::INFINITY;
    let mut pair = (0, 0);
    for i in 0..m {
        for j in (i + 1)..m {
            let d: f64 = (design.row(i) - design.row(j)).iter().map(|v| v * v).sum();
            if d < min_d {
                min_d = d;
                pair = (i, j);
            }
        }
    }
    Error::Fit(format!(
        "correlation matrix singular despite nugget; nearest design pair is ({}, {}) at normalized distance {:.3e}",
        pair.0,
        pair.1,
        min_d.sqrt()
    ))
}

impl KrigingModel {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Predict the response at `x`: `mu + r(x)^T R^{-1} (y - mu 1)` in
    /// normalized space, de-normalized on return.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let n = self.x_shift.len();
        debug_assert_eq!(x.len(), n);
        let xn: Vec<f64> = (0..n).map(|d| (x[d] - self.x_shift[d]) / self.x_scale[d]).collect();
        let mut acc = 0.0;
        for i in 0..self.design_norm.nrows() {
            let mut exponent = 0.0;
            for d in 0..n {
                let delta = xn[d] - self.design_norm[(i, d)];
                exponent += self.theta[d] * delta * delta;
            }
            acc += (-exponent).exp() * self.alpha[i];
        }
        self.y_shift + self.y_scale * (self.mu + acc)
    }

    /// Batch prediction, elementwise identical to pointwise `predict`.
    pub fn predict_batch(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|x| self.predict(x)).collect()
    }

    /// Plain-text dump of the fitted parameters, for debugging.
    pub fn dump(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        writeln!(out, "ordinary kriging model").unwrap();
        writeln!(out, "points: {}", self.design_norm.nrows()).unwrap();
        writeln!(out, "theta: {:?}", self.theta).unwrap();
        writeln!(out, "mu: {}", self.mu).unwrap();
        writeln!(out, "sigma2: {}", self.sigma2).unwrap();
        writeln!(out, "input shift: {:?}", self.x_shift).unwrap();
        writeln!(out, "input scale: {:?}", self.x_scale).unwrap();
        writeln!(out, "output shift: {}", self.y_shift).unwrap();
        writeln!(out, "output scale: {}", self.y_scale).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{EvaluatedPoint, PointSource};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn archive_from(points: &[(Vec<f64>, f64)]) -> Archive {
        let mut archive = Archive::new(1e-12);
        for (i, (x, f)) in points.iter().enumerate() {
            archive.push(EvaluatedPoint {
                x: x.clone(),
                f: *f,
                iteration_index: i,
                source: PointSource::InitialDesign,
            });
        }
        archive
    }

    /// Brute-force dense-solve prediction used as the independent oracle.
    fn dense_predict(points: &[(Vec<f64>, f64)], theta: &[f64], nugget: f64, x: &[f64]) -> f64 {
        let m = points.len();
        let corr = |a: &[f64], b: &[f64]| {
            (-a.iter().zip(b).zip(theta).map(|((p, q), t)| t * (p - q) * (p - q)).sum::<f64>())
                .exp()
        };
        let mut r = DMatrix::from_fn(m, m, |i, j| corr(&points[i].0, &points[j].0));
        for i in 0..m {
            r[(i, i)] += nugget;
        }
        let y = DVector::from_fn(m, |i, _| points[i].1);
        let ones = DVector::from_element(m, 1.0);
        let rinv = r.try_inverse().unwrap();
        let mu = (ones.transpose() * &rinv * &y)[(0, 0)] / (ones.transpose() * &rinv * &ones)[(0, 0)];
        let alpha = &rinv * (y - &ones * mu);
        let rx = DVector::from_fn(m, |i, _| corr(&points[i].0, x));
        mu + rx.dot(&alpha)
    }

    #[test]
    fn constant_responses_reproduce_the_constant() {
        let archive = archive_from(&[(vec![0.0, 0.0], 3.5), (vec![0.5, 0.5], 3.5)]);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        for x in [[0.1, 0.9], [-0.4, 0.2], [0.0, 0.0]] {
            assert_abs_diff_eq!(model.predict(&x), 3.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn interpolates_training_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<(Vec<f64>, f64)> = (0..20)
            .map(|_| {
                let x: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let f = (0.35 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
                (x, f)
            })
            .collect();
        let archive = archive_from(&pts);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        for (x, f) in &pts {
            let scale = f.abs().max(1.0);
            assert!((model.predict(x) - f).abs() / scale <= 1e-6, "at {x:?}");
        }
    }

    #[test]
    fn symmetric_design_gives_symmetric_predictions() {
        let archive =
            archive_from(&[(vec![-1.0], 2.0), (vec![0.0], 0.5), (vec![1.0], 2.0)]);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        for t in [0.1, 0.35, 0.72, 0.99] {
            assert_abs_diff_eq!(model.predict(&[t]), model.predict(&[-t]), epsilon = 1e-10);
        }
    }

    #[test]
    fn matches_dense_solve_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|_| {
                let x: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                let f = x[0].sin() + x[1] * x[1];
                (x, f)
            })
            .collect();
        let archive = archive_from(&pts);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        // replay the fitted theta through the brute-force path in
        // normalized coordinates
        let norm_pts: Vec<(Vec<f64>, f64)> = pts
            .iter()
            .map(|(x, f)| {
                (
                    (0..2).map(|d| (x[d] - model.x_shift[d]) / model.x_scale[d]).collect(),
                    (f - model.y_shift) / model.y_scale,
                )
            })
            .collect();
        for _ in 0..20 {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let xn: Vec<f64> =
                (0..2).map(|d| (x[d] - model.x_shift[d]) / model.x_scale[d]).collect();
            let oracle = dense_predict(&norm_pts, model.theta(), 1e-10, &xn);
            let expected = model.y_shift + model.y_scale * oracle;
            assert_abs_diff_eq!(model.predict(&x), expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn far_field_prediction_tends_to_mean() {
        let archive = archive_from(&[(vec![0.0], 1.0), (vec![0.1], 2.0), (vec![-0.1], 3.0)]);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        let far = model.predict(&[1e6]);
        let prior_mean = model.y_shift + model.y_scale * model.mu;
        assert_abs_diff_eq!(far, prior_mean, epsilon = 1e-9);
    }

    #[test]
    fn batch_equals_pointwise() {
        let archive = archive_from(&[
            (vec![0.0, 0.0], 1.0),
            (vec![0.5, -0.5], 2.0),
            (vec![-0.3, 0.8], -1.0),
        ]);
        let model = fit(&archive, &KrigingConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let batch = model.predict_batch(&rows);
        for (row, &b) in rows.iter().zip(&batch) {
            assert!((model.predict(row) - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts: Vec<(Vec<f64>, f64)> = (0..15)
            .map(|_| {
                let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                (x.clone(), x[0] * x[0] + 3.0 * x[1])
            })
            .collect();
        let archive = archive_from(&pts);
        let a = fit(&archive, &KrigingConfig::default()).unwrap();
        let b = fit(&archive, &KrigingConfig::default()).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.mu, b.mu);
        assert_eq!(a.sigma2, b.sigma2);
    }

    #[test]
    fn prediction_invariant_under_box_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let pts: Vec<(Vec<f64>, f64)> = (0..12)
            .map(|_| {
                let x: Vec<f64> = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                (x.clone(), (x[0] + 0.3).powi(2) + x[1])
            })
            .collect();
        let scaled: Vec<(Vec<f64>, f64)> =
            pts.iter().map(|(x, f)| (vec![100.0 * x[0], 0.01 * x[1]], *f)).collect();
        let m1 = fit(&archive_from(&pts), &KrigingConfig::default()).unwrap();
        let m2 = fit(&archive_from(&scaled), &KrigingConfig::default()).unwrap();
        for _ in 0..20 {
            let x = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let xs = vec![100.0 * x[0], 0.01 * x[1]];
            assert_abs_diff_eq!(m1.predict(&x), m2.predict(&xs), epsilon = 1e-8);
        }
    }

    #[test]
    fn larger_nugget_does_not_improve_interpolation() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let pts: Vec<(Vec<f64>, f64)> = (0..10)
            .map(|_| {
                let x: Vec<f64> = vec![rng.random_range(-1.0..1.0)];
                (x.clone(), (3.0 * x[0]).sin())
            })
            .collect();
        let archive = archive_from(&pts);
        let small = fit(&archive, &KrigingConfig::default()).unwrap();
        let big = fit(&archive, &KrigingConfig { nugget: 1e-4, ..Default::default() }).unwrap();
        let max_err = |m: &KrigingModel| {
            pts.iter().map(|(x, f)| (m.predict(x) - f).abs()).fold(0.0, f64::max)
        };
        assert!(max_err(&small) <= max_err(&big) + 1e-12);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let archive = archive_from(&[(vec![0.0], 1.0)]);
        assert!(matches!(fit(&archive, &KrigingConfig::default()), Err(Error::Fit(_))));
    }

    #[test]
    fn duplicate_rows_named_in_fit_error() {
        // bypass the archive's duplicate rejection and disable the nugget
        // so the coincident pair breaks the factorization
        let mut archive = Archive::new(0.0);
        for (i, f) in [1.0, 2.0, 3.0].iter().enumerate() {
            archive.push(EvaluatedPoint {
                x: vec![0.25, -0.5],
                f: *f,
                iteration_index: i,
                source: PointSource::InitialDesign,
            });
        }
        let config = KrigingConfig { nugget: 0.0, ..Default::default() };
        match fit(&archive, &config) {
            Err(Error::Fit(msg)) => assert!(msg.contains("(0, 1)"), "message: {msg}"),
            other => panic!("expected fit error, got {other:?}"),
        }
    }
}
