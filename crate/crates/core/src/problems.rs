//! The bundled test problems: constrained Rosenbrock, shifted rotated
//! Rastrigin, and the fish-kinematics problem (constraints and midline
//! only; its objective comes from an external evaluator).

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Bounds, ConstraintSet, ObjectiveFn, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosenbrockParams {
    pub a: f64,
    pub b: f64,
}

impl Default for RosenbrockParams {
    fn default() -> Self {
        Self { a: 0.35, b: 100.0 }
    }
}

pub fn rosenbrock(x: &[f64], params: &RosenbrockParams) -> f64 {
    let (a, b) = (params.a, params.b);
    (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
}

/// The inequality pair shared by the Rosenbrock and Rastrigin problems:
/// `g1 = x2 + 2.5 x1^2 - 0.5` and `g2 = -x2 - x1 + 0.4`.
pub fn shared_constraints(x: &[f64]) -> [f64; 2] {
    [x[1] + 2.5 * x[0] * x[0] - 0.5, -x[1] - x[0] + 0.4]
}

fn shared_constraint_set() -> ConstraintSet {
    let mut set = ConstraintSet::empty();
    set.push(|x: &[f64]| x[1] + 2.5 * x[0] * x[0] - 0.5);
    set.push(|x: &[f64]| -x[1] - x[0] + 0.4);
    set
}

/// Default box for the two analytical problems; strictly contains the
/// feasible region of the shared constraint pair.
pub fn default_analytic_bounds() -> Bounds {
    Bounds::symmetric(1.0, 2).unwrap()
}

pub fn rosenbrock_problem(params: RosenbrockParams, bounds: Option<Bounds>) -> Problem {
    let bounds = bounds.unwrap_or_else(default_analytic_bounds);
    Problem::from_fn("rosenbrock", bounds, shared_constraint_set(), move |x| rosenbrock(x, &params))
        .with_known_optimum(0.0)
}

/// One concrete shifted rotated Rastrigin instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RastriginInstance {
    /// Shifted global optimum `o`.
    pub shift: Vec<f64>,
    /// Row-major 2x2 linear transformation with condition number 2.
    pub rotation: [[f64; 2]; 2],
    /// Adds +10 per dimension inside the sum (the CEC2005 convention),
    /// which puts the optimum at `bias` instead of `bias - 20`.
    pub cec_offset: bool,
    pub bias: f64,
}

impl RastriginInstance {
    /// Deterministic instance: rotation from the seed, shift drawn
    /// uniformly from the constrained feasible region by rejection.
    pub fn seeded(seed: u64) -> Self {
        let rotation = make_rotation_matrix(seed);
        let bounds = default_analytic_bounds();
        let constraints = shared_constraint_set();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let shift = loop {
            let x = [
                rng.random_range(bounds.lower()[0]..=bounds.upper()[0]),
                rng.random_range(bounds.lower()[1]..=bounds.upper()[1]),
            ];
            if constraints.satisfied(&x) {
                break x.to_vec();
            }
        };
        Self { shift, rotation, cec_offset: true, bias: -330.0 }
    }

    pub fn optimum_value(&self) -> f64 {
        if self.cec_offset {
            self.bias
        } else {
            self.bias - 10.0 * self.shift.len() as f64
        }
    }
}

pub fn rastrigin(x: &[f64], instance: &RastriginInstance) -> f64 {
    let m = &instance.rotation;
    let d0 = x[0] - instance.shift[0];
    let d1 = x[1] - instance.shift[1];
    // z = (x - o) M, row vector times matrix
    let z = [d0 * m[0][0] + d1 * m[1][0], d0 * m[0][1] + d1 * m[1][1]];
    let offset = if instance.cec_offset { 10.0 } else { 0.0 };
    z.iter().map(|&zi| zi * zi - 10.0 * (2.0 * PI * zi).cos() + offset).sum::<f64>() + instance.bias
}

/// Random 2x2 matrix with singular values {2, 1}: `Q1 diag(2,1) Q2` with
/// the orthogonal factors taken from QR of seeded standard-normal draws.
pub fn make_rotation_matrix(seed: u64) -> [[f64; 2]; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random_orthogonal = |rng: &mut ChaCha8Rng| {
        let a = DMatrix::<f64>::from_fn(2, 2, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let qr = a.qr();
        let mut q = qr.q();
        let r = qr.r();
        // fix signs so the factorization is unique
        for j in 0..2 {
            if r[(j, j)] < 0.0 {
                for i in 0..2 {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        q
    };
    let q1 = random_orthogonal(&mut rng);
    let q2 = random_orthogonal(&mut rng);
    let m = q1 * DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0])) * q2;
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

pub fn rastrigin_problem(instance: RastriginInstance, bounds: Option<Bounds>) -> Problem {
    let bounds = bounds.unwrap_or_else(default_analytic_bounds);
    let optimum = instance.optimum_value();
    Problem::from_fn("rastrigin", bounds, shared_constraint_set(), move |x| {
        rastrigin(x, &instance)
    })
    .with_known_optimum(optimum)
}

/// Midline undulation parameters of the fish problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FishKinematics {
    /// Linear amplitude coefficient.
    pub x1: f64,
    /// Quadratic amplitude coefficient.
    pub x2: f64,
    /// Body length in meters.
    pub length: f64,
    /// Body wavelength in body lengths.
    pub wavelength: f64,
    /// Tail-beat frequency in Hz.
    pub frequency: f64,
}

impl FishKinematics {
    pub fn new(x1: f64, x2: f64) -> Self {
        Self { x1, x2, length: 0.3, wavelength: 1.1, frequency: 1.0 }
    }
}

/// Swimming-mode constraints: `(0.4 x2 L + x1^2, |x2 + x1| - 0.1 L, x2)`.
pub fn fish_constraints(x: &[f64], length: f64) -> [f64; 3] {
    [0.4 * x[1] * length + x[0] * x[0], (x[1] + x[0]).abs() - 0.1 * length, x[1]]
}

fn fish_constraint_set(length: f64) -> ConstraintSet {
    let mut set = ConstraintSet::empty();
    set.push(move |x: &[f64]| 0.4 * x[1] * length + x[0] * x[0]);
    set.push(move |x: &[f64]| (x[1] + x[0]).abs() - 0.1 * length);
    set.push(|x: &[f64]| x[1]);
    set
}

/// Default box for the fish coefficients; contains the feasible region of
/// the swimming-mode constraints for L = 0.3.
pub fn default_fish_bounds() -> Bounds {
    Bounds::new(vec![-0.2, -0.25], vec![0.2, 0.0]).unwrap()
}

/// Fish problem with a caller-supplied objective (normally the external
/// evaluator bridge; the true objective requires a flow simulation).
pub fn fish_problem(objective: ObjectiveFn, bounds: Option<Bounds>) -> Problem {
    let bounds = bounds.unwrap_or_else(default_fish_bounds);
    Problem::new("fish", bounds, fish_constraint_set(0.3), objective)
}

/// Fish constraints with a placeholder zero objective, for feasibility
/// checks and landscape emission of the feasible region.
pub fn fish_constraint_problem(bounds: Option<Bounds>) -> Problem {
    let bounds = bounds.unwrap_or_else(default_fish_bounds);
    Problem::from_fn("fish", bounds, fish_constraint_set(0.3), |_| 0.0)
}

/// Center-line lateral displacement `y_c(p, t)`.
pub fn fish_midline(kin: &FishKinematics, p: f64, t: f64) -> f64 {
    let s = p / kin.length;
    let amplitude = kin.x1 * s + kin.x2 * s * s;
    amplitude * (2.0 * PI * (p / (kin.wavelength * kin.length) - kin.frequency * t)).sin()
}

/// Rectilinear-grid landscape over the box: one `x1,x2,f,feasible` row per
/// node, with the penalty value substituted on infeasible nodes.
pub fn landscape_csv(problem: &Problem, grid: usize) -> Result<String, crate::Error> {
    assert!(problem.dim() == 2, "landscape emission is defined for 2-D problems");
    assert!(grid >= 2);
    let b = &problem.bounds;
    let mut out = String::from("x1,x2,f,feasible\n");
    for i in 0..grid {
        let x1 = b.lower()[0] + b.range(0) * i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let x2 = b.lower()[1] + b.range(1) * j as f64 / (grid - 1) as f64;
            let x = [x1, x2];
            let feasible = problem.is_feasible(&x)?;
            let f = problem.penalized_objective(&x)?;
            writeln!(out, "{x1},{x2},{f},{}", u8::from(feasible)).unwrap();
        }
    }
    Ok(out)
}

/// Eleven midline snapshots at t = 0, T/10, ..., T, each a polyline of
/// `points_per_snapshot` nodes from head (p = 0) to tail (p = L).
pub fn kinematics_csv(kin: &FishKinematics, points_per_snapshot: usize) -> String {
    assert!(points_per_snapshot >= 2);
    let period = 1.0 / kin.frequency;
    let mut out = String::from("snapshot,t,p,y\n");
    for s in 0..=10 {
        let t = period * s as f64 / 10.0;
        for i in 0..points_per_snapshot {
            let p = kin.length * i as f64 / (points_per_snapshot - 1) as f64;
            // + 0.0 folds the head's negative zero into plain zero
            let y = fish_midline(kin, p, t) + 0.0;
            writeln!(out, "{s},{t},{p},{y}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rosenbrock_values() {
        let p = RosenbrockParams::default();
        // 0.35^2 rounds to 0.12249999999999998, so the minimum value is
        // zero only up to one squared ulp
        assert!(rosenbrock(&[0.35, 0.1225], &p).abs() < 1e-30);
        assert_abs_diff_eq!(rosenbrock(&[0.35, 0.0], &p), 1.500625, epsilon = 1e-15);
        assert_abs_diff_eq!(rosenbrock(&[0.0, 0.0], &p), 0.1225, epsilon = 1e-15);
    }

    #[test]
    fn rosenbrock_nonnegative_with_unique_zero() {
        let p = RosenbrockParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let f = rosenbrock(&x, &p);
            assert!(f >= 0.0);
            if f == 0.0 {
                assert_eq!(x, [0.35, 0.1225]);
            }
        }
    }

    #[test]
    fn shared_constraint_values() {
        let g = shared_constraints(&[0.2, 0.3]);
        assert_abs_diff_eq!(g[0], -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.1, epsilon = 1e-15);
        let g = shared_constraints(&[0.35, 0.1225]);
        assert_abs_diff_eq!(g[0], -0.07125, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.0725, epsilon = 1e-15);
        // boundary of g1 is feasible
        let g = shared_constraints(&[0.0, 0.5]);
        assert_eq!(g[0], 0.0);
        assert_abs_diff_eq!(g[1], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn feasible_interval_endpoints() {
        // The feasible set is {0.4 - x1 <= x2 <= 0.5 - 2.5 x1^2}, nonempty
        // where 2.5 x1^2 - x1 - 0.1 <= 0, i.e. x1 in [(1-sqrt(2))/5, (1+sqrt(2))/5].
        let lo = (1.0 - 2f64.sqrt()) / 5.0;
        let hi = (1.0 + 2f64.sqrt()) / 5.0;
        for x1 in [lo, hi] {
            let width = (0.5 - 2.5 * x1 * x1) - (0.4 - x1);
            assert_abs_diff_eq!(width, 0.0, epsilon = 1e-12);
        }
        let mid = (lo + hi) / 2.0;
        assert!((0.5 - 2.5 * mid * mid) - (0.4 - mid) > 0.0);
    }

    #[test]
    fn rastrigin_at_shift() {
        let inst = RastriginInstance::seeded(42);
        assert_abs_diff_eq!(rastrigin(&inst.shift.clone(), &inst), -330.0, epsilon = 1e-10);

        let literal = RastriginInstance { cec_offset: false, ..inst.clone() };
        assert_abs_diff_eq!(rastrigin(&literal.shift.clone(), &literal), -350.0, epsilon = 1e-10);
    }

    #[test]
    fn rastrigin_identity_hand_value() {
        let inst = RastriginInstance {
            shift: vec![0.0, 0.0],
            rotation: [[1.0, 0.0], [0.0, 1.0]],
            cec_offset: false,
            bias: -330.0,
        };
        assert_abs_diff_eq!(rastrigin(&[1.0, 1.0], &inst), -348.0, epsilon = 1e-10);
    }

    #[test]
    fn rastrigin_bounded_below_by_bias() {
        let inst = RastriginInstance::seeded(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert!(rastrigin(&x, &inst) >= inst.bias - 1e-9);
        }
    }

    #[test]
    fn rotation_matrix_condition_number() {
        for seed in [0u64, 1, 7, 42, 123_456] {
            let m = make_rotation_matrix(seed);
            let dm = DMatrix::from_row_slice(2, 2, &[m[0][0], m[0][1], m[1][0], m[1][1]]);
            let sv = dm.singular_values();
            let (smax, smin) = (sv.max(), sv.min());
            assert_abs_diff_eq!(smax / smin, 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(smin, 1.0, epsilon = 1e-10);
            assert_eq!(m, make_rotation_matrix(seed));
        }
    }

    #[test]
    fn rastrigin_even_under_rotation_negation() {
        // z^2 and cos are even, so negating M (with the shift at 0) leaves
        // the value unchanged.
        let base = RastriginInstance::seeded(11);
        let m = base.rotation;
        let inst = RastriginInstance { shift: vec![0.0, 0.0], ..base.clone() };
        let neg = RastriginInstance {
            rotation: [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]],
            ..inst.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            assert_abs_diff_eq!(rastrigin(&x, &inst), rastrigin(&x, &neg), epsilon = 1e-10);
        }
    }

    #[test]
    fn fish_constraint_values() {
        let g = fish_constraints(&[0.0, 0.0], 0.3);
        assert_eq!(g, [0.0, -0.03, 0.0]);
        let g = fish_constraints(&[0.05, -0.05], 0.3);
        assert_abs_diff_eq!(g[0], -0.0035, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.03, epsilon = 1e-15);
        assert_eq!(g[2], -0.05);
        let g = fish_constraints(&[0.1, -0.05], 0.3);
        assert_abs_diff_eq!(g[0], 0.004, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.02, epsilon = 1e-15);
    }

    #[test]
    fn midline_head_and_tail() {
        let kin = FishKinematics::new(0.1, -0.05);
        for t in [0.0, 0.13, 0.5, 0.99] {
            assert_eq!(fish_midline(&kin, 0.0, t), 0.0);
        }
        let tail = fish_midline(&kin, kin.length, 0.0);
        let expected = (kin.x1 + kin.x2) * (2.0 * PI / kin.wavelength).sin();
        assert_abs_diff_eq!(tail, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(tail, -0.027032, epsilon = 1e-6);
    }

    #[test]
    fn midline_periodic_in_time() {
        let kin = FishKinematics::new(0.07, -0.02);
        let period = 1.0 / kin.frequency;
        for i in 0..=20 {
            let p = kin.length * i as f64 / 20.0;
            for t in [0.0, 0.3, 0.77] {
                assert_abs_diff_eq!(
                    fish_midline(&kin, p, t),
                    fish_midline(&kin, p, t + period),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn kinematics_emission_shape() {
        let kin = FishKinematics::new(0.1, -0.05);
        let csv = kinematics_csv(&kin, 101);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "snapshot,t,p,y");
        assert_eq!(lines.len(), 1 + 11 * 101);
        // head pinned at zero in every snapshot
        for line in lines[1..].iter().filter(|l| l.split(',').nth(2) == Some("0")) {
            assert!(line.ends_with(",0"), "head row not pinned: {line}");
        }
    }

    #[test]
    fn landscape_emission_shape() {
        let p = rosenbrock_problem(Default::default(), None);
        let csv = landscape_csv(&p, 21).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x1,x2,f,feasible");
        assert_eq!(lines.len(), 1 + 21 * 21);
        let infeasible = lines[1..].iter().filter(|l| l.ends_with(",0")).count();
        // most of the [-1,1]^2 box violates the constraint pair
        assert!(infeasible > 300);
        for line in lines[1..].iter().filter(|l| l.ends_with(",0")) {
            assert_eq!(line.split(',').nth(2), Some("1000000"));
        }
    }
}
