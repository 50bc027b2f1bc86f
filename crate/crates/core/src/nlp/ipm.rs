use log::debug;
use nalgebra::DMatrix;

use super::ldl::Ldl;
use super::{Multipliers, NlpError, NlpOptions, NlpProblem, NlpSolution, SolveStatus};

const KAPPA_EPS: f64 = 10.0;
const KAPPA_SIGMA: f64 = 1e10;
const ARMIJO_ETA: f64 = 1e-4;
const MIN_STEP: f64 = 1e-14;
const DELTA_W_START: f64 = 1e-8;
const DELTA_W_MAX: f64 = 1e40;
const RESTORATION_ITERS: usize = 100;

/// Internal variable vector `w = (free x, slacks)` with constraints
/// `C(w) = (c_E(x), c_I(x) + s)` and bounds on every component.
struct Evaluator<'a, P: NlpProblem + ?Sized> {
    problem: &'a P,
    n_eq: usize,
    n_ineq: usize,
    free: Vec<usize>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    obj_scale: f64,
    x: Vec<f64>,
    jac_eq: DMatrix<f64>,
    jac_ineq: DMatrix<f64>,
    hess: DMatrix<f64>,
}

impl<'a, P: NlpProblem + ?Sized> Evaluator<'a, P> {
    fn n(&self) -> usize {
        self.lo.len()
    }

    fn m(&self) -> usize {
        self.n_eq + self.n_ineq
    }

    fn n_free(&self) -> usize {
        self.free.len()
    }

    fn load(&mut self, w: &[f64]) {
        for (k, &i) in self.free.iter().enumerate() {
            self.x[i] = w[k];
        }
    }

    fn objective(&mut self, w: &[f64]) -> f64 {
        self.load(w);
        self.obj_scale * self.problem.objective(&self.x)
    }

    fn gradient(&mut self, w: &[f64]) -> Vec<f64> {
        self.load(w);
        let mut g = vec![0.0; self.x.len()];
        self.problem.gradient(&self.x, &mut g);
        let mut out = vec![0.0; self.n()];
        for (k, &i) in self.free.iter().enumerate() {
            out[k] = self.obj_scale * g[i];
        }
        out
    }

    fn constraints(&mut self, w: &[f64]) -> Vec<f64> {
        self.load(w);
        let mut c = vec![0.0; self.m()];
        self.problem.eq_constraints(&self.x, &mut c[..self.n_eq]);
        if self.n_ineq > 0 {
            self.problem.ineq_constraints(&self.x, &mut c[self.n_eq..]);
            let nf = self.n_free();
            for r in 0..self.n_ineq {
                c[self.n_eq + r] += w[nf + r];
            }
        }
        c
    }

    /// Row-major `m × n` Jacobian of `C`.
    fn jacobian(&mut self, w: &[f64]) -> Vec<f64> {
        self.load(w);
        let (n, nf) = (self.n(), self.n_free());
        let mut jac = vec![0.0; self.m() * n];
        self.jac_eq.fill(0.0);
        self.problem.eq_jacobian(&self.x, &mut self.jac_eq);
        for r in 0..self.n_eq {
            for (k, &i) in self.free.iter().enumerate() {
                jac[r * n + k] = self.jac_eq[(r, i)];
            }
        }
        if self.n_ineq > 0 {
            self.jac_ineq.fill(0.0);
            self.problem.ineq_jacobian(&self.x, &mut self.jac_ineq);
            for r in 0..self.n_ineq {
                let row = (self.n_eq + r) * n;
                for (k, &i) in self.free.iter().enumerate() {
                    jac[row + k] = self.jac_ineq[(r, i)];
                }
                jac[row + nf + r] = 1.0;
            }
        }
        jac
    }

    /// Row-major lower triangle of the Lagrangian Hessian in `w` space.
    fn hessian(&mut self, w: &[f64], y: &[f64]) -> Vec<f64> {
        self.load(w);
        let n = self.n();
        self.hess.fill(0.0);
        self.problem.lagrangian_hessian(
            &self.x,
            self.obj_scale,
            &y[..self.n_eq],
            &y[self.n_eq..],
            &mut self.hess,
        );
        let mut h = vec![0.0; n * n];
        for (a, &i) in self.free.iter().enumerate() {
            for (b, &j) in self.free.iter().enumerate().take(a + 1) {
                let v = if i >= j {
                    self.hess[(i, j)]
                } else {
                    self.hess[(j, i)]
                };
                h[a * n + b] = v;
            }
        }
        h
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Factored KKT matrix `[W + δw I, Jᵀ; J, -δc I]` in envelope-friendly ordering.
struct KktSystem {
    ldl: Ldl,
    pos: Vec<usize>,
    n: usize,
    m: usize,
    w_diag: Vec<f64>,
    hess: Vec<f64>,
    jac: Vec<f64>,
    delta_c: f64,
}

enum Factorization {
    Ok(KktSystem),
    WrongInertia,
    Singular,
}

/// Places each constraint row right after the last variable it touches.
fn kkt_order(n: usize, m: usize, jac: &[f64]) -> Vec<usize> {
    let mut after: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for r in 0..m {
        let row = &jac[r * n..(r + 1) * n];
        let slot = match row.iter().rposition(|&v| v != 0.0) {
            Some(v) => v + 1,
            None => 0,
        };
        after[slot].push(r);
    }
    let mut order = Vec::with_capacity(n + m);
    order.extend(after[0].iter().map(|&r| n + r));
    for v in 0..n {
        order.push(v);
        order.extend(after[v + 1].iter().map(|&r| n + r));
    }
    let mut pos = vec![0; n + m];
    for (p, &k) in order.iter().enumerate() {
        pos[k] = p;
    }
    pos
}

impl KktSystem {
    fn factor(
        hess: &[f64],
        sigma: &[f64],
        jac: &[f64],
        n: usize,
        m: usize,
        delta_w: f64,
        delta_c: f64,
    ) -> Factorization {
        let dim = n + m;
        let pos = kkt_order(n, m, jac);
        let mut a = vec![0.0; dim * dim];
        let mut put = |i: usize, j: usize, v: f64| {
            let (pi, pj) = (pos[i], pos[j]);
            let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
            a[r * dim + c] += v;
        };
        let mut w_diag = vec![0.0; n];
        for i in 0..n {
            for j in 0..i {
                let v = hess[i * n + j];
                if v != 0.0 {
                    put(i, j, v);
                }
            }
            w_diag[i] = hess[i * n + i] + sigma[i] + delta_w;
            put(i, i, w_diag[i]);
        }
        for r in 0..m {
            for v in 0..n {
                let val = jac[r * n + v];
                if val != 0.0 {
                    put(n + r, v, val);
                }
            }
            if delta_c != 0.0 {
                put(n + r, n + r, -delta_c);
            }
        }
        match Ldl::factor(a, dim, 1e-14) {
            Err(_) => Factorization::Singular,
            Ok((ldl, inertia)) => {
                if inertia.positive == n && inertia.negative == m {
                    Factorization::Ok(KktSystem {
                        ldl,
                        pos,
                        n,
                        m,
                        w_diag,
                        hess: hess.to_vec(),
                        jac: jac.to_vec(),
                        delta_c,
                    })
                } else {
                    Factorization::WrongInertia
                }
            }
        }
    }

    fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut out = vec![0.0; n + m];
        for i in 0..n {
            out[i] += self.w_diag[i] * v[i];
            for j in 0..i {
                let h = self.hess[i * n + j];
                if h != 0.0 {
                    out[i] += h * v[j];
                    out[j] += h * v[i];
                }
            }
        }
        for r in 0..m {
            let row = &self.jac[r * n..(r + 1) * n];
            let mut s = -self.delta_c * v[n + r];
            for j in 0..n {
                if row[j] != 0.0 {
                    s += row[j] * v[j];
                    out[j] += row[j] * v[n + r];
                }
            }
            out[n + r] = s;
        }
        out
    }

    fn solve_raw(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; rhs.len()];
        for (k, &v) in rhs.iter().enumerate() {
            b[self.pos[k]] = v;
        }
        self.ldl.solve_in_place(&mut b);
        (0..rhs.len()).map(|k| b[self.pos[k]]).collect()
    }

    /// Solve with two rounds of iterative refinement.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut sol = self.solve_raw(rhs);
        for _ in 0..2 {
            let kx = self.matvec(&sol);
            let resid: Vec<f64> = rhs.iter().zip(&kx).map(|(b, k)| b - k).collect();
            if inf_norm(&resid) <= 1e-15 * (1.0 + inf_norm(rhs)) {
                break;
            }
            let corr = self.solve_raw(&resid);
            for (s, c) in sol.iter_mut().zip(&corr) {
                *s += c;
            }
        }
        sol
    }
}

struct Iterate {
    w: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

fn barrier(w: &[f64], lo: &[f64], hi: &[f64]) -> Option<f64> {
    let mut b = 0.0;
    for i in 0..w.len() {
        if lo[i].is_finite() {
            let d = w[i] - lo[i];
            if d <= 0.0 {
                return None;
            }
            b += d.ln();
        }
        if hi[i].is_finite() {
            let d = hi[i] - w[i];
            if d <= 0.0 {
                return None;
            }
            b += d.ln();
        }
    }
    Some(b)
}

/// Largest step in `(0, 1]` keeping `w + α·dw` a fraction `tau` inside the bounds.
fn max_primal_step(w: &[f64], dw: &[f64], lo: &[f64], hi: &[f64], tau: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..w.len() {
        if dw[i] < 0.0 && lo[i].is_finite() {
            alpha = alpha.min(-tau * (w[i] - lo[i]) / dw[i]);
        }
        if dw[i] > 0.0 && hi[i].is_finite() {
            alpha = alpha.min(tau * (hi[i] - w[i]) / dw[i]);
        }
    }
    alpha
}

fn max_dual_step(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..z.len() {
        if dz[i] < 0.0 && z[i] > 0.0 {
            alpha = alpha.min(-tau * z[i] / dz[i]);
        }
    }
    alpha
}

/// Solves the problem from its own initial point (projected into the bounds).
pub fn solve_nlp<P: NlpProblem + ?Sized>(
    problem: &P,
    options: &NlpOptions,
) -> Result<NlpSolution, NlpError> {
    let n_x = problem.n_vars();
    let n_eq = problem.n_eq();
    let n_ineq = problem.n_ineq();
    let (lo_x, hi_x) = problem.bounds();
    let mut x0 = problem.initial_point();
    if lo_x.len() != n_x || hi_x.len() != n_x || x0.len() != n_x {
        return Err(NlpError::Dimension(format!(
            "expected {n_x} bounds and initial values, got {}/{}/{}",
            lo_x.len(),
            hi_x.len(),
            x0.len()
        )));
    }
    for i in 0..n_x {
        if lo_x[i] > hi_x[i] || lo_x[i].is_nan() || hi_x[i].is_nan() {
            return Err(NlpError::Bounds {
                index: i,
                lo: lo_x[i],
                hi: hi_x[i],
            });
        }
    }

    // eliminate fixed variables, push the rest inside their bounds
    let mut free = Vec::new();
    for i in 0..n_x {
        let (l, u) = (lo_x[i], hi_x[i]);
        if l.is_finite() && u - l <= 1e-14 * l.abs().max(1.0) {
            x0[i] = l;
            continue;
        }
        free.push(i);
        let push_l = if u.is_finite() {
            (options.bound_push * l.abs().max(1.0)).min(0.5 * options.bound_push.min(1.0) * (u - l))
        } else {
            options.bound_push * l.abs().max(1.0)
        };
        let push_u = if l.is_finite() {
            (options.bound_push * u.abs().max(1.0)).min(0.5 * options.bound_push.min(1.0) * (u - l))
        } else {
            options.bound_push * u.abs().max(1.0)
        };
        if l.is_finite() {
            x0[i] = x0[i].max(l + push_l);
        }
        if u.is_finite() {
            x0[i] = x0[i].min(u - push_u);
        }
    }

    let nf = free.len();
    let n = nf + n_ineq;
    let m = n_eq + n_ineq;
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for &i in &free {
        // slight relaxation keeps a strict interior when the feasible set has none
        lo.push(lo_x[i] - options.bound_relax * lo_x[i].abs().max(1.0));
        hi.push(hi_x[i] + options.bound_relax * hi_x[i].abs().max(1.0));
    }
    lo.extend(std::iter::repeat_n(0.0, n_ineq));
    hi.extend(std::iter::repeat_n(f64::INFINITY, n_ineq));

    let mut ev = Evaluator {
        problem,
        n_eq,
        n_ineq,
        free,
        lo,
        hi,
        obj_scale: 1.0,
        x: x0.clone(),
        jac_eq: DMatrix::zeros(n_eq, n_x),
        jac_ineq: DMatrix::zeros(n_ineq, n_x),
        hess: DMatrix::zeros(n_x, n_x),
    };

    let mut w: Vec<f64> = ev.free.iter().map(|&i| x0[i]).collect();
    if n_ineq > 0 {
        let mut ci = vec![0.0; n_ineq];
        problem.ineq_constraints(&x0, &mut ci);
        w.extend(ci.iter().map(|c| (-c).max(options.bound_push)));
    }
    let g0 = ev.gradient(&w);
    let gmax = inf_norm(&g0);
    ev.obj_scale = if gmax > options.obj_scale_target {
        options.obj_scale_target / gmax
    } else {
        1.0
    };

    let lo = ev.lo.clone();
    let hi = ev.hi.clone();
    let mut it = Iterate {
        zl: lo.iter().map(|l| if l.is_finite() { 1.0 } else { 0.0 }).collect(),
        zu: hi.iter().map(|u| if u.is_finite() { 1.0 } else { 0.0 }).collect(),
        y: vec![0.0; m],
        w,
    };

    let tol = options.tol;
    let mu_min = tol / 10.0;
    let mut mu = options.mu_init;
    let mut nu: f64 = 1.0;
    let mut delta_w_last: f64 = 0.0;
    let mut status = SolveStatus::IterLimit;
    let mut iterations = 0;

    loop {
        let grad = ev.gradient(&it.w);
        let cons = ev.constraints(&it.w);
        let jac = ev.jacobian(&it.w);

        // KKT error
        let mut r_d = grad.clone();
        for r in 0..m {
            let yr = it.y[r];
            if yr != 0.0 {
                for j in 0..n {
                    r_d[j] += jac[r * n + j] * yr;
                }
            }
        }
        for j in 0..n {
            r_d[j] += it.zu[j] - it.zl[j];
        }
        let z_sum = one_norm(&it.zl) + one_norm(&it.zu);
        let s_d = ((one_norm(&it.y) + z_sum) / ((m + 2 * n).max(1) as f64)).max(100.0) / 100.0;
        let s_c = (z_sum / ((2 * n).max(1) as f64)).max(100.0) / 100.0;
        let compl = |mu: f64| {
            let mut c: f64 = 0.0;
            for j in 0..n {
                if lo[j].is_finite() {
                    c = c.max(((it.w[j] - lo[j]) * it.zl[j] - mu).abs());
                }
                if hi[j].is_finite() {
                    c = c.max(((hi[j] - it.w[j]) * it.zu[j] - mu).abs());
                }
            }
            c
        };
        let dual_err = inf_norm(&r_d) / s_d;
        let primal_err = inf_norm(&cons);
        let err0 = dual_err.max(primal_err).max(compl(0.0) / s_c);
        debug!(
            "iter {iterations:3} f={:.10e} inf_pr={primal_err:.3e} inf_du={dual_err:.3e} mu={mu:.1e}",
            ev.objective(&it.w) / ev.obj_scale
        );
        if err0 <= tol {
            status = SolveStatus::Converged;
            break;
        }
        if iterations >= options.max_iters {
            break;
        }
        while mu > mu_min && dual_err.max(primal_err).max(compl(mu) / s_c) <= KAPPA_EPS * mu {
            mu = (mu / 10.0).max(mu_min);
        }
        iterations += 1;

        // Newton system
        let hess = ev.hessian(&it.w, &it.y);
        let mut sigma = vec![0.0; n];
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            let mut bgrad = grad[j];
            if lo[j].is_finite() {
                let d = it.w[j] - lo[j];
                sigma[j] += it.zl[j] / d;
                bgrad -= mu / d;
            }
            if hi[j].is_finite() {
                let d = hi[j] - it.w[j];
                sigma[j] += it.zu[j] / d;
                bgrad += mu / d;
            }
            rhs[j] = -bgrad;
        }
        for r in 0..m {
            for j in 0..n {
                rhs[j] -= jac[r * n + j] * it.y[r];
            }
            rhs[n + r] = -cons[r];
        }

        let mut delta_w = 0.0;
        let mut delta_c = 0.0;
        let kkt = loop {
            match KktSystem::factor(&hess, &sigma, &jac, n, m, delta_w, delta_c) {
                Factorization::Ok(k) => break Some(k),
                Factorization::Singular if delta_c == 0.0 && m > 0 => {
                    delta_c = 1e-8 * mu.powf(0.25);
                }
                _ => {
                    delta_w = if delta_w == 0.0 {
                        if delta_w_last == 0.0 {
                            DELTA_W_START
                        } else {
                            (delta_w_last / 3.0).max(DELTA_W_START)
                        }
                    } else {
                        delta_w * 10.0
                    };
                    if delta_w > DELTA_W_MAX {
                        break None;
                    }
                }
            }
        };
        let Some(kkt) = kkt else {
            debug!("inertia correction failed at iteration {iterations}; entering restoration");
            if !restore(&mut ev, &mut it, mu, tol) {
                status = SolveStatus::Infeasible;
                break;
            }
            nu = 1.0;
            continue;
        };
        if delta_w > 0.0 {
            delta_w_last = delta_w;
        }
        let sol = kkt.solve(&rhs);
        let (dw, dy) = sol.split_at(n);

        let mut barrier_grad = vec![0.0; n];
        for j in 0..n {
            barrier_grad[j] = -rhs[j];
            for r in 0..m {
                barrier_grad[j] -= jac[r * n + j] * it.y[r];
            }
        }
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        for j in 0..n {
            if lo[j].is_finite() {
                let d = it.w[j] - lo[j];
                dzl[j] = mu / d - it.zl[j] - it.zl[j] / d * dw[j];
            }
            if hi[j].is_finite() {
                let d = hi[j] - it.w[j];
                dzu[j] = mu / d - it.zu[j] + it.zu[j] / d * dw[j];
            }
        }
        let tau = (1.0 - mu).max(0.99);
        let alpha_max = max_primal_step(&it.w, dw, &lo, &hi, tau);
        let alpha_z = max_dual_step(&it.zl, &dzl, tau).min(max_dual_step(&it.zu, &dzu, tau));

        // penalty parameter of the l1 merit
        let c1 = one_norm(&cons);
        let grad_dw = dot(&barrier_grad, dw);
        let y_new = (0..m).fold(0.0_f64, |acc, r| acc.max((it.y[r] + dy[r]).abs()));
        if nu < 1.1 * y_new {
            nu = 1.1 * y_new + 1.0;
        }
        let merit = |ev: &mut Evaluator<P>, w: &[f64], mu: f64, nu: f64| -> f64 {
            match barrier(w, &lo, &hi) {
                None => f64::INFINITY,
                Some(b) => {
                    let f = ev.objective(w);
                    let c = ev.constraints(w);
                    f - mu * b + nu * one_norm(&c)
                }
            }
        };
        let phi0 = merit(&mut ev, &it.w, mu, nu);
        let slope = grad_dw - nu * c1;

        let tiny = dw
            .iter()
            .zip(&it.w)
            .all(|(d, w)| d.abs() <= 10.0 * f64::EPSILON * (1.0 + w.abs()));
        let mut alpha = alpha_max;
        let mut accepted: Option<Vec<f64>> = None;
        let mut step_alpha = alpha;
        if tiny {
            accepted = Some(it.w.iter().zip(dw).map(|(w, d)| w + alpha * d).collect());
        }
        let mut first = true;
        while accepted.is_none() && alpha >= MIN_STEP {
            let trial: Vec<f64> = it.w.iter().zip(dw).map(|(w, d)| w + alpha * d).collect();
            let phi = merit(&mut ev, &trial, mu, nu);
            if phi <= phi0 + ARMIJO_ETA * alpha * slope.min(0.0) {
                accepted = Some(trial);
                step_alpha = alpha;
                break;
            }
            if first {
                first = false;
                // second-order correction against the Maratos effect
                let c_trial = ev.constraints(&trial);
                if phi.is_finite() && one_norm(&c_trial) >= one_norm(&cons) * 0.0 {
                    let mut rhs_soc = vec![0.0; n + m];
                    for r in 0..m {
                        rhs_soc[n + r] = -c_trial[r];
                    }
                    let corr = kkt.solve(&rhs_soc);
                    let full: Vec<f64> = (0..n).map(|j| alpha * dw[j] + corr[j]).collect();
                    if max_primal_step(&it.w, &full, &lo, &hi, tau) >= 1.0 {
                        let trial_soc: Vec<f64> =
                            it.w.iter().zip(&full).map(|(w, d)| w + d).collect();
                        let phi_soc = merit(&mut ev, &trial_soc, mu, nu);
                        if phi_soc <= phi0 + ARMIJO_ETA * alpha * slope.min(0.0) {
                            accepted = Some(trial_soc);
                            step_alpha = alpha;
                            break;
                        }
                    }
                }
            }
            alpha *= 0.5;
        }

        match accepted {
            Some(new_w) => {
                it.w = new_w;
                for r in 0..m {
                    it.y[r] += step_alpha * dy[r];
                }
                for j in 0..n {
                    it.zl[j] += alpha_z * dzl[j];
                    it.zu[j] += alpha_z * dzu[j];
                }
            }
            None => {
                debug!("line search failed at iteration {iterations}; entering restoration");
                if !restore(&mut ev, &mut it, mu, tol) {
                    status = SolveStatus::Infeasible;
                    break;
                }
                nu = 1.0;
            }
        }

        // keep bound multipliers within a factor of the primal-dual centrality
        for j in 0..n {
            if lo[j].is_finite() {
                let d = it.w[j] - lo[j];
                it.zl[j] = it.zl[j].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
            if hi[j].is_finite() {
                let d = hi[j] - it.w[j];
                it.zu[j] = it.zu[j].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
        }
    }

    Ok(finish(&mut ev, &it, status, iterations))
}

/// Feasibility restoration: minimum-norm steps on the linearised constraints,
/// weighted by the primal barrier Hessian, with backtracking on `|C|₁`.
fn restore<P: NlpProblem + ?Sized>(
    ev: &mut Evaluator<P>,
    it: &mut Iterate,
    mu: f64,
    tol: f64,
) -> bool {
    let (n, m) = (ev.n(), ev.m());
    let lo = ev.lo.clone();
    let hi = ev.hi.clone();
    let start = one_norm(&ev.constraints(&it.w));
    if m == 0 {
        return false;
    }
    let zero_hess = vec![0.0; n * n];
    for _ in 0..RESTORATION_ITERS {
        let cons = ev.constraints(&it.w);
        let c1 = one_norm(&cons);
        if inf_norm(&cons) <= tol && c1 < start {
            break;
        }
        if c1 <= 0.5 * start {
            break;
        }
        let jac = ev.jacobian(&it.w);
        let mut sigma = vec![0.0; n];
        for j in 0..n {
            sigma[j] = 1e-4;
            if lo[j].is_finite() {
                sigma[j] += mu / (it.w[j] - lo[j]).powi(2);
            }
            if hi[j].is_finite() {
                sigma[j] += mu / (hi[j] - it.w[j]).powi(2);
            }
        }
        let mut rhs = vec![0.0; n + m];
        for r in 0..m {
            rhs[n + r] = -cons[r];
        }
        let kkt = match KktSystem::factor(&zero_hess, &sigma, &jac, n, m, 0.0, 1e-10) {
            Factorization::Ok(k) => k,
            _ => return false,
        };
        let sol = kkt.solve(&rhs);
        let dw = &sol[..n];
        let mut alpha = max_primal_step(&it.w, dw, &lo, &hi, 0.99);
        let mut moved = false;
        while alpha >= 1e-10 {
            let trial: Vec<f64> = it.w.iter().zip(dw).map(|(w, d)| w + alpha * d).collect();
            if one_norm(&ev.constraints(&trial)) < (1.0 - 1e-4 * alpha) * c1 {
                it.w = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            return false;
        }
    }
    let c_end = ev.constraints(&it.w);
    let ok = one_norm(&c_end) <= 0.5 * start || inf_norm(&c_end) <= tol;
    if ok {
        it.y.iter_mut().for_each(|y| *y = 0.0);
        for j in 0..n {
            if lo[j].is_finite() {
                it.zl[j] = mu / (it.w[j] - lo[j]);
            }
            if hi[j].is_finite() {
                it.zu[j] = mu / (hi[j] - it.w[j]);
            }
        }
    }
    ok
}

fn finish<P: NlpProblem + ?Sized>(
    ev: &mut Evaluator<P>,
    it: &Iterate,
    status: SolveStatus,
    iterations: usize,
) -> NlpSolution {
    ev.load(&it.w);
    let problem = ev.problem;
    let (lo_x, hi_x) = problem.bounds();
    let x: Vec<f64> = ev
        .x
        .iter()
        .enumerate()
        .map(|(i, v)| v.max(lo_x[i]).min(hi_x[i]))
        .collect();
    let n_x = x.len();
    let objective_value = problem.objective(&x);
    let mut ce = vec![0.0; ev.n_eq];
    problem.eq_constraints(&x, &mut ce);
    let mut ci = vec![0.0; ev.n_ineq];
    if ev.n_ineq > 0 {
        problem.ineq_constraints(&x, &mut ci);
    }
    let s = ev.obj_scale;
    let eq: Vec<f64> = it.y[..ev.n_eq].iter().map(|y| -y / s).collect();
    let ineq: Vec<f64> = it.y[ev.n_eq..].iter().map(|y| y / s).collect();
    let mut lower = vec![0.0; n_x];
    let mut upper = vec![0.0; n_x];
    let mut is_free = vec![false; n_x];
    for (k, &i) in ev.free.iter().enumerate() {
        lower[i] = it.zl[k] / s;
        upper[i] = it.zu[k] / s;
        is_free[i] = true;
    }
    if ev.free.len() < n_x {
        // fixed variables: bound multipliers absorb the stationarity residual
        let mut grad = vec![0.0; n_x];
        problem.gradient(&x, &mut grad);
        ev.jac_eq.fill(0.0);
        problem.eq_jacobian(&x, &mut ev.jac_eq);
        if ev.n_ineq > 0 {
            ev.jac_ineq.fill(0.0);
            problem.ineq_jacobian(&x, &mut ev.jac_ineq);
        }
        for i in (0..n_x).filter(|&i| !is_free[i]) {
            let mut r = grad[i];
            for (k, l) in eq.iter().enumerate() {
                r -= ev.jac_eq[(k, i)] * l;
            }
            for (k, u) in ineq.iter().enumerate() {
                r += ev.jac_ineq[(k, i)] * u;
            }
            lower[i] = r.max(0.0);
            upper[i] = (-r).max(0.0);
        }
    }
    NlpSolution {
        point: x,
        objective_value,
        max_eq_violation: inf_norm(&ce),
        max_ineq_violation: ci.iter().fold(0.0, |m: f64, c| m.max(*c)),
        iterations,
        status,
        multipliers: Multipliers {
            eq,
            ineq,
            lower,
            upper,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlp::check_kkt;

    /// min Σ (x_i - target_i)² + coupling·x0·x1 subject to optional constraints.
    struct Quadratic {
        target: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
        sum_to: Option<f64>,
        ineq_cap: Option<f64>,
    }

    impl Quadratic {
        fn new(target: Vec<f64>) -> Self {
            let n = target.len();
            Quadratic {
                target,
                lo: vec![f64::NEG_INFINITY; n],
                hi: vec![f64::INFINITY; n],
                sum_to: None,
                ineq_cap: None,
            }
        }
    }

    impl NlpProblem for Quadratic {
        fn n_vars(&self) -> usize {
            self.target.len()
        }
        fn n_eq(&self) -> usize {
            self.sum_to.is_some() as usize
        }
        fn n_ineq(&self) -> usize {
            self.ineq_cap.is_some() as usize
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (self.lo.clone(), self.hi.clone())
        }
        fn initial_point(&self) -> Vec<f64> {
            vec![0.0; self.target.len()]
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.target).map(|(x, t)| (x - t).powi(2)).sum()
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            for i in 0..x.len() {
                g[i] = 2.0 * (x[i] - self.target[i]);
            }
        }
        fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
            if let Some(s) = self.sum_to {
                out[0] = x.iter().sum::<f64>() - s;
            }
        }
        fn eq_jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
            if self.sum_to.is_some() {
                for j in 0..x.len() {
                    jac[(0, j)] = 1.0;
                }
            }
        }
        fn ineq_constraints(&self, x: &[f64], out: &mut [f64]) {
            if let Some(cap) = self.ineq_cap {
                out[0] = x[0] * x[0] - cap;
            }
        }
        fn ineq_jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
            if self.ineq_cap.is_some() {
                jac[(0, 0)] = 2.0 * x[0];
            }
        }
        fn lagrangian_hessian(
            &self,
            x: &[f64],
            obj_factor: f64,
            _eq: &[f64],
            ineq: &[f64],
            hess: &mut DMatrix<f64>,
        ) {
            for i in 0..x.len() {
                hess[(i, i)] = 2.0 * obj_factor;
            }
            if self.ineq_cap.is_some() {
                hess[(0, 0)] += 2.0 * ineq[0];
            }
        }
    }

    #[test]
    fn unconstrained_minimum() {
        let p = Quadratic::new(vec![3.0]);
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.point[0] - 3.0).abs() < 1e-8);
        assert!(s.objective_value.abs() < 1e-12);
    }

    #[test]
    fn equality_projection() {
        let mut p = Quadratic::new(vec![0.0, 0.0]);
        p.sum_to = Some(1.0);
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.point[0] - 0.5).abs() < 1e-8 && (s.point[1] - 0.5).abs() < 1e-8);
        assert!((s.objective_value - 0.5).abs() < 1e-8);
        assert!((s.multipliers.eq[0] - 1.0).abs() < 1e-6);
        let report = check_kkt(&p, &s.point, &s.multipliers, 1e-6).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn active_lower_bound() {
        let mut p = Quadratic::new(vec![0.0]);
        p.lo = vec![1.0];
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.point[0] - 1.0).abs() < 1e-6);
        assert!(s.point[0] >= 1.0);
        assert!((s.multipliers.lower[0] - 2.0).abs() < 1e-4);
    }

    #[test]
    fn active_nonlinear_inequality() {
        // min (x-2)² s.t. x² <= 1  →  x = 1, μ = 1
        let mut p = Quadratic::new(vec![2.0]);
        p.ineq_cap = Some(1.0);
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert!((s.point[0] - 1.0).abs() < 1e-6);
        assert!(s.max_ineq_violation <= 1e-6);
        assert!((s.multipliers.ineq[0] - 1.0).abs() < 1e-4);
        let report = check_kkt(&p, &s.point, &s.multipliers, 1e-5).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn fixed_variables_are_eliminated() {
        let mut p = Quadratic::new(vec![1.0, 2.0, 3.0]);
        p.lo[1] = 5.0;
        p.hi[1] = 5.0;
        p.sum_to = Some(10.0);
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Converged);
        assert_eq!(s.point[1], 5.0);
        // x0 + x2 = 5 with targets 1 and 3 → 1.5, 3.5
        assert!((s.point[0] - 1.5).abs() < 1e-7 && (s.point[2] - 3.5).abs() < 1e-7);
        let report = check_kkt(&p, &s.point, &s.multipliers, 1e-6).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn infeasible_bounds_are_rejected() {
        let mut p = Quadratic::new(vec![0.0]);
        p.lo = vec![2.0];
        p.hi = vec![1.0];
        assert!(matches!(
            solve_nlp(&p, &NlpOptions::default()),
            Err(NlpError::Bounds { index: 0, .. })
        ));
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        // x0 + x1 = 10 with both in [0, 1]
        let mut p = Quadratic::new(vec![0.0, 0.0]);
        p.lo = vec![0.0, 0.0];
        p.hi = vec![1.0, 1.0];
        p.sum_to = Some(10.0);
        let s = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_ne!(s.status, SolveStatus::Converged);
    }

    #[test]
    fn iteration_limit() {
        let mut p = Quadratic::new(vec![0.0, 0.0]);
        p.lo = vec![1.0, 1.0];
        let opts = NlpOptions {
            max_iters: 2,
            ..NlpOptions::default()
        };
        let s = solve_nlp(&p, &opts).unwrap();
        assert_eq!(s.status, SolveStatus::IterLimit);
        assert_eq!(s.iterations, 2);
    }

    #[test]
    fn deterministic() {
        let mut p = Quadratic::new(vec![0.3, -0.7, 2.0]);
        p.lo = vec![0.0, -0.5, f64::NEG_INFINITY];
        p.sum_to = Some(1.0);
        let a = solve_nlp(&p, &NlpOptions::default()).unwrap();
        let b = solve_nlp(&p, &NlpOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
