use nalgebra::DMatrix;

use super::{Multipliers, NlpError, NlpProblem};

/// Infinity-norm residuals of the first-order optimality conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub bound_violation: f64,
    /// Most negative multiplier that must be nonnegative, as a positive number.
    pub dual_feasibility: f64,
    pub complementarity: f64,
    pub passed: bool,
}

/// Evaluates the KKT conditions at `point` independently of the solver.
pub fn check_kkt<P: NlpProblem + ?Sized>(
    problem: &P,
    point: &[f64],
    mult: &Multipliers,
    tol: f64,
) -> Result<KktReport, NlpError> {
    let n = problem.n_vars();
    let (me, mi) = (problem.n_eq(), problem.n_ineq());
    if point.len() != n
        || mult.eq.len() != me
        || mult.ineq.len() != mi
        || mult.lower.len() != n
        || mult.upper.len() != n
    {
        return Err(NlpError::Dimension(format!(
            "point/multipliers do not match a problem with {n} variables, {me} equalities, {mi} inequalities"
        )));
    }
    let (lo, hi) = problem.bounds();

    let mut grad = vec![0.0; n];
    problem.gradient(point, &mut grad);
    let mut je = DMatrix::zeros(me, n);
    problem.eq_jacobian(point, &mut je);
    let mut ji = DMatrix::zeros(mi, n);
    if mi > 0 {
        problem.ineq_jacobian(point, &mut ji);
    }
    let mut ce = vec![0.0; me];
    problem.eq_constraints(point, &mut ce);
    let mut ci = vec![0.0; mi];
    if mi > 0 {
        problem.ineq_constraints(point, &mut ci);
    }

    let mut stationarity: f64 = 0.0;
    for j in 0..n {
        let mut r = grad[j] - mult.lower[j] + mult.upper[j];
        for k in 0..me {
            r -= je[(k, j)] * mult.eq[k];
        }
        for k in 0..mi {
            r += ji[(k, j)] * mult.ineq[k];
        }
        stationarity = stationarity.max(r.abs());
    }

    let primal_eq = ce.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let primal_ineq = ci.iter().fold(0.0_f64, |m, c| m.max(*c));
    let mut bound_violation: f64 = 0.0;
    let mut complementarity: f64 = 0.0;
    for j in 0..n {
        bound_violation = bound_violation.max(lo[j] - point[j]).max(point[j] - hi[j]);
        if lo[j].is_finite() {
            complementarity = complementarity.max((mult.lower[j] * (point[j] - lo[j])).abs());
        } else {
            complementarity = complementarity.max(mult.lower[j].abs());
        }
        if hi[j].is_finite() {
            complementarity = complementarity.max((mult.upper[j] * (hi[j] - point[j])).abs());
        } else {
            complementarity = complementarity.max(mult.upper[j].abs());
        }
    }
    for k in 0..mi {
        complementarity = complementarity.max((mult.ineq[k] * ci[k]).abs());
    }
    let dual_feasibility = mult
        .ineq
        .iter()
        .chain(&mult.lower)
        .chain(&mult.upper)
        .fold(0.0_f64, |m, v| m.max(-v));

    let passed = stationarity <= tol
        && primal_eq <= tol
        && primal_ineq <= tol
        && bound_violation <= tol
        && dual_feasibility <= tol
        && complementarity <= tol;
    Ok(KktReport {
        stationarity,
        primal_eq,
        primal_ineq,
        bound_violation,
        dual_feasibility,
        complementarity,
        passed,
    })
}
