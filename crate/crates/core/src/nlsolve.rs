//! Small dense root finder: Gauss–Newton steps safeguarded by
//! Levenberg–Marquardt damping.
//!
//! Every iteration first tries the undamped step `J δ = −r`. If it does not
//! reduce `‖r‖₂` (or `J` is singular) the damped normal equations
//! `(JᵀJ + μ·diag(JᵀJ)) δ = −Jᵀr` are solved, raising `μ` tenfold on each
//! rejection and lowering it tenfold on acceptance. Linear residual maps
//! therefore converge in a single accepted step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub tol_residual: f64,
    pub max_iter: usize,
    pub lm_damping_init: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol_residual: 1e-12,
            max_iter: 50,
            lm_damping_init: 1e-3,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.tol_residual > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol_residual));
        }
        if self.max_iter < 1 {
            return Err("max-iter must be at least 1".into());
        }
        if !(self.lm_damping_init > 0.0) {
            return Err("damping must be positive".into());
        }
        Ok(())
    }
}

/// A square system `r(x) = 0` with an analytic Jacobian.
pub trait LmProblem<const N: usize> {
    fn residual(&self, x: &[f64; N]) -> [f64; N];
    fn jacobian(&self, x: &[f64; N]) -> [[f64; N]; N];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solution<const N: usize> {
    pub x: [f64; N],
    /// Accepted steps.
    pub iterations: usize,
    /// `‖r(x)‖∞` at the returned point.
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no convergence after {iterations} iterations (|r| = {norm:e})")]
    MaxIterations {
        best: Vec<f64>,
        norm: f64,
        iterations: usize,
    },
    #[error("damped normal equations are singular (|r| = {norm:e})")]
    SingularNormalEquations { norm: f64 },
}

fn inf_norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().fold(0.0, |m, x| if x.abs() > m || x.is_nan() { x.abs() } else { m })
}

fn sq_norm<const N: usize>(v: &[f64; N]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular matrix.
pub fn solve_dense<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    let scale = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let tiny = scale * f64::EPSILON * N as f64;
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))
            .unwrap();
        if a[piv][col].abs() <= tiny {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..N {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut s = b[row];
        for k in row + 1..N {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn damped_step<const N: usize>(j: &[[f64; N]; N], r: &[f64; N], mu: f64) -> Option<[f64; N]> {
    let mut jtj = [[0.0; N]; N];
    let mut rhs = [0.0; N];
    for a in 0..N {
        for b in 0..N {
            jtj[a][b] = (0..N).map(|i| j[i][a] * j[i][b]).sum();
        }
        rhs[a] = -(0..N).map(|i| j[i][a] * r[i]).sum::<f64>();
    }
    for (a, row) in jtj.iter_mut().enumerate() {
        row[a] += mu * row[a];
    }
    solve_dense(jtj, rhs)
}

/// Drives `‖r(x)‖∞` below `settings.tol_residual` starting from `x0`.
pub fn lm_solve<const N: usize, P: LmProblem<N>>(
    problem: &P,
    x0: [f64; N],
    settings: &SolverSettings,
) -> Result<Solution<N>, SolveError> {
    let mut x = x0;
    let mut r = problem.residual(&x);
    let mut norm = inf_norm(&r);
    let mut cost = sq_norm(&r);
    let mut mu = settings.lm_damping_init;
    let mut accepted = 0;
    let mut evaluations = 0;

    while norm > settings.tol_residual {
        if accepted >= settings.max_iter || evaluations >= 4 * settings.max_iter {
            return Err(SolveError::MaxIterations {
                best: x.to_vec(),
                norm,
                iterations: accepted,
            });
        }
        let jac = problem.jacobian(&x);
        let neg_r = r.map(|v| -v);

        // undamped trial
        let mut step_taken = false;
        if let Some(dx) = solve_dense(jac, neg_r) {
            let trial: [f64; N] = std::array::from_fn(|i| x[i] + dx[i]);
            let rt = problem.residual(&trial);
            evaluations += 1;
            let ct = sq_norm(&rt);
            if ct < cost || inf_norm(&rt) <= settings.tol_residual {
                x = trial;
                r = rt;
                cost = ct;
                mu = (mu / 10.0).max(f64::MIN_POSITIVE);
                step_taken = true;
            }
        }

        // damped trials
        while !step_taken {
            if evaluations >= 4 * settings.max_iter {
                break;
            }
            let dx = damped_step(&jac, &r, mu)
                .ok_or(SolveError::SingularNormalEquations { norm })?;
            let trial: [f64; N] = std::array::from_fn(|i| x[i] + dx[i]);
            let rt = problem.residual(&trial);
            evaluations += 1;
            let ct = sq_norm(&rt);
            if ct < cost {
                x = trial;
                r = rt;
                cost = ct;
                mu = (mu / 10.0).max(f64::MIN_POSITIVE);
                step_taken = true;
            } else {
                mu *= 10.0;
                if !mu.is_finite() || dx.iter().all(|d| d.abs() <= f64::EPSILON * 1e-3) {
                    break;
                }
            }
        }
        if !step_taken {
            return Err(SolveError::MaxIterations {
                best: x.to_vec(),
                norm,
                iterations: accepted,
            });
        }
        accepted += 1;
        norm = inf_norm(&r);
    }
    Ok(Solution {
        x,
        iterations: accepted,
        norm,
    })
}
