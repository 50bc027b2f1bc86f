//! Dense nonlinear programming kernel.
//!
//! Problems have the canonical form
//!
//! ```text
//! min f(x)   s.t.   c_E(x) = 0,   c_I(x) <= 0,   lo <= x <= hi
//! ```
//!
//! and are solved by [`solve_nlp`], a primal-dual interior-point method with a
//! logarithmic barrier on bounds and slacks, an l1-merit line search and inertia
//! correction of the KKT matrix. Variables with `lo == hi` are eliminated.
//!
//! Multipliers follow the Lagrangian `f - λᵀc_E + μᵀc_I - z_lᵀ(x - lo) + z_uᵀ(x - hi)`,
//! so stationarity reads `∇f - J_Eᵀλ + J_Iᵀμ - z_l + z_u = 0` with `μ, z_l, z_u >= 0`.

mod ipm;
mod kkt;
pub(crate) mod ldl;

pub use ipm::solve_nlp;
pub use kkt::{check_kkt, KktReport};

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

/// Central-difference step used when callers have no better choice.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("inconsistent bounds on variable {index}: {lo} > {hi}")]
    Bounds { index: usize, lo: f64, hi: f64 },
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

/// A smooth nonlinear program with analytic first and second derivatives.
///
/// Jacobians and the Hessian are written into zeroed dense matrices of shape
/// `(n_eq, n)`, `(n_ineq, n)` and `(n, n)`; only the lower triangle of the Hessian is
/// read but filling both triangles is fine.
pub trait NlpProblem {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize {
        0
    }
    /// Per-variable `(lo, hi)`; infinite entries mean unbounded.
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn initial_point(&self) -> Vec<f64>;

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]);
    fn eq_jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>);

    fn ineq_constraints(&self, _x: &[f64], _out: &mut [f64]) {}
    fn ineq_jacobian(&self, _x: &[f64], _jac: &mut DMatrix<f64>) {}

    /// Hessian of `obj_factor·f + Σ eq_weights·c_E + Σ ineq_weights·c_I`.
    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_factor: f64,
        eq_weights: &[f64],
        ineq_weights: &[f64],
        hess: &mut DMatrix<f64>,
    );
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpOptions {
    /// Tolerance on the scaled KKT error and on the constraint violation.
    pub tol: f64,
    pub max_iters: usize,
    pub mu_init: f64,
    /// Relative push of the initial point away from its bounds.
    pub bound_push: f64,
    /// Relative relaxation of finite bounds; the returned point is projected back.
    pub bound_relax: f64,
    /// Objective is multiplied by `min(1, obj_scale_target / |∇f(x0)|∞)` internally.
    pub obj_scale_target: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        NlpOptions {
            tol: 1e-6,
            max_iters: 200,
            mu_init: 0.1,
            bound_push: 1e-2,
            bound_relax: 1e-10,
            obj_scale_target: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    IterLimit,
    Infeasible,
}

/// Multipliers in the sign convention of the module docs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Multipliers {
    pub eq: Vec<f64>,
    pub ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Multipliers {
    pub fn zeros(problem: &dyn NlpProblem) -> Self {
        let n = problem.n_vars();
        Multipliers {
            eq: vec![0.0; problem.n_eq()],
            ineq: vec![0.0; problem.n_ineq()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlpSolution {
    pub point: Vec<f64>,
    pub objective_value: f64,
    pub max_eq_violation: f64,
    pub max_ineq_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub multipliers: Multipliers,
}

/// Central-difference gradient with per-component step `h·(1 + |x_i|)`.
pub fn finite_diff_gradient<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let step = h * (1.0 + point[i].abs());
            x[i] = point[i] + step;
            let fp = f(&x);
            x[i] = point[i] - step;
            let fm = f(&x);
            x[i] = point[i];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Central-difference Jacobian of a vector function with `m` outputs.
pub fn finite_diff_jacobian<F>(f: F, m: usize, point: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = point.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut x = point.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..n {
        let step = h * (1.0 + point[j].abs());
        x[j] = point[j] + step;
        f(&x, &mut fp);
        x[j] = point[j] - step;
        f(&x, &mut fm);
        x[j] = point[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}
