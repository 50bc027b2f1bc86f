use nalgebra::DMatrix;

use super::{AcopfError, MultiPeriodSpec};
use crate::case::PowerCase;
use crate::nlp::NlpProblem;

/// Value, gradient and Hessian of `a·Vi² + Vi·Vj·(c1·cos δ + c2·sin δ)` with
/// `δ = θi − θj`, in local variable order `(Vi, Vj, θi, θj)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FlowTerm {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

pub(crate) fn flow_term(a: f64, c1: f64, c2: f64, vi: f64, vj: f64, delta: f64) -> FlowTerm {
    let (s, c) = delta.sin_cos();
    let phi = c1 * c + c2 * s;
    let dphi = -c1 * s + c2 * c;
    let vv = vi * vj;
    let value = a * vi * vi + vv * phi;
    let grad = [2.0 * a * vi + vj * phi, vi * phi, vv * dphi, -vv * dphi];
    let hess = [
        [2.0 * a, phi, vj * dphi, -vj * dphi],
        [phi, 0.0, vi * dphi, -vi * dphi],
        [vj * dphi, vi * dphi, -vv * phi, vv * phi],
        [-vj * dphi, -vi * dphi, vv * phi, -vv * phi],
    ];
    FlowTerm { value, grad, hess }
}

/// `(a, c1, c2)` for active and reactive flow leaving the sending end.
pub(crate) fn active_coeffs(g: f64, b: f64) -> (f64, f64, f64) {
    (g, -g, -b)
}

pub(crate) fn reactive_coeffs(g: f64, b: f64) -> (f64, f64, f64) {
    (-b, b, -g)
}

/// Multi-period AC OPF in per-unit. Each period owns a contiguous block
/// `[V, θ, Pg, Qg, (p_ess, e) per active unit]`; constraint rows per period are
/// `[ΔP, ΔQ, energy recursion per active unit]`.
#[derive(Debug, Clone)]
pub struct MultiPeriodOpf<'a> {
    case: &'a PowerCase,
    spec: MultiPeriodSpec,
    n: usize,
    ng: usize,
    na: usize,
    block: usize,
    rows: usize,
    p_load: Vec<f64>,
    q_load: Vec<f64>,
    /// Sending-end bus, receiving-end bus, (g, b) for both directions of every line.
    arcs: Vec<(usize, usize, f64, f64)>,
}

impl<'a> MultiPeriodOpf<'a> {
    pub fn new(case: &'a PowerCase, spec: MultiPeriodSpec) -> Result<Self, AcopfError> {
        spec.check(case)?;
        for (index, g) in case.generators.iter().enumerate() {
            if g.p_min > g.p_max {
                return Err(AcopfError::GeneratorBounds { index });
            }
        }
        let n = case.n_buses();
        let ng = case.generators.len();
        let na = spec.active_ess.len();
        let mut p_load = vec![0.0; n];
        let mut q_load = vec![0.0; n];
        for l in &case.loads {
            p_load[l.bus] += l.p_load / case.base_mva;
            q_load[l.bus] += l.q_load / case.base_mva;
        }
        let mut arcs = Vec::with_capacity(2 * case.lines.len());
        for l in &case.lines {
            arcs.push((l.from_bus, l.to_bus, l.g, l.b));
            arcs.push((l.to_bus, l.from_bus, l.g, l.b));
        }
        Ok(MultiPeriodOpf {
            case,
            n,
            ng,
            na,
            block: 2 * n + 2 * ng + 2 * na,
            rows: 2 * n + na,
            p_load,
            q_load,
            arcs,
            spec,
        })
    }

    pub fn spec(&self) -> &MultiPeriodSpec {
        &self.spec
    }

    pub fn periods(&self) -> usize {
        self.spec.load_scale.len()
    }

    pub(crate) fn v(&self, t: usize, i: usize) -> usize {
        t * self.block + i
    }
    pub(crate) fn theta(&self, t: usize, i: usize) -> usize {
        t * self.block + self.n + i
    }
    pub(crate) fn pg(&self, t: usize, g: usize) -> usize {
        t * self.block + 2 * self.n + g
    }
    pub(crate) fn qg(&self, t: usize, g: usize) -> usize {
        t * self.block + 2 * self.n + self.ng + g
    }
    pub(crate) fn p_ess(&self, t: usize, k: usize) -> usize {
        t * self.block + 2 * self.n + 2 * self.ng + 2 * k
    }
    pub(crate) fn energy(&self, t: usize, k: usize) -> usize {
        self.p_ess(t, k) + 1
    }

    fn e_initial(&self, k: usize) -> f64 {
        self.case.ess_units[self.spec.active_ess[k]].e_initial / self.case.base_mva
    }

    fn arc_terms(&self, x: &[f64], t: usize, arc: usize) -> (FlowTerm, FlowTerm, [usize; 4]) {
        let (i, j, g, b) = self.arcs[arc];
        let idx = [self.v(t, i), self.v(t, j), self.theta(t, i), self.theta(t, j)];
        let (vi, vj) = (x[idx[0]], x[idx[1]]);
        let delta = x[idx[2]] - x[idx[3]];
        let (a, c1, c2) = active_coeffs(g, b);
        let p = flow_term(a, c1, c2, vi, vj, delta);
        let (a, c1, c2) = reactive_coeffs(g, b);
        let q = flow_term(a, c1, c2, vi, vj, delta);
        (p, q, idx)
    }
}

impl NlpProblem for MultiPeriodOpf<'_> {
    fn n_vars(&self) -> usize {
        self.block * self.periods()
    }

    fn n_eq(&self) -> usize {
        self.rows * self.periods()
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let nv = self.n_vars();
        let mut lo = vec![f64::NEG_INFINITY; nv];
        let mut hi = vec![f64::INFINITY; nv];
        let base = self.case.base_mva;
        let (v_lo, v_hi) = self.case.voltage_bounds;
        let slack = self.case.slack_index();
        for t in 0..self.periods() {
            for i in 0..self.n {
                let k = self.v(t, i);
                if i == slack {
                    lo[k] = self.case.slack_voltage;
                    hi[k] = self.case.slack_voltage;
                    lo[self.theta(t, i)] = 0.0;
                    hi[self.theta(t, i)] = 0.0;
                } else {
                    lo[k] = v_lo;
                    hi[k] = v_hi;
                }
            }
            for (gi, g) in self.case.generators.iter().enumerate() {
                let (p, q) = (self.pg(t, gi), self.qg(t, gi));
                if self.spec.disabled_gens[t].contains(&gi) {
                    lo[p] = 0.0;
                    hi[p] = 0.0;
                    lo[q] = 0.0;
                    hi[q] = 0.0;
                } else {
                    lo[p] = g.p_min / base;
                    hi[p] = g.p_max / base;
                    if let Some(qmin) = g.q_min {
                        lo[q] = qmin / base;
                    }
                    if let Some(qmax) = g.q_max {
                        hi[q] = qmax / base;
                    }
                }
            }
        }
        // storage bounds tightened to what is reachable from the initial energy
        let dt = self.spec.period_hours;
        for (k, &u) in self.spec.active_ess.iter().enumerate() {
            let ess = &self.case.ess_units[u];
            let (p_min, p_max) = (ess.p_min / base, ess.p_max / base);
            let (e_min, e_max) = (ess.e_min / base, ess.e_max / base);
            let (mut reach_lo, mut reach_hi) = (self.e_initial(k), self.e_initial(k));
            for t in 0..self.periods() {
                let p_lo = p_min.max((e_min - reach_hi) / dt);
                let p_hi = p_max.min((e_max - reach_lo) / dt).max(p_lo);
                reach_lo = e_min.max(reach_lo + p_lo * dt);
                reach_hi = e_max.min(reach_hi + p_hi * dt).max(reach_lo);
                lo[self.p_ess(t, k)] = p_lo;
                hi[self.p_ess(t, k)] = p_hi;
                lo[self.energy(t, k)] = reach_lo;
                hi[self.energy(t, k)] = reach_hi;
            }
        }
        (lo, hi)
    }

    /// Flat start: `V = 1` (slack at its setpoint), `θ = 0`, generation at mid-range.
    fn initial_point(&self) -> Vec<f64> {
        let (lo, hi) = self.bounds();
        let mut x = vec![0.0; self.n_vars()];
        let slack = self.case.slack_index();
        for t in 0..self.periods() {
            for i in 0..self.n {
                x[self.v(t, i)] = if i == slack {
                    self.case.slack_voltage
                } else {
                    1.0
                };
            }
            for g in 0..self.ng {
                for k in [self.pg(t, g), self.qg(t, g)] {
                    x[k] = if lo[k].is_finite() && hi[k].is_finite() {
                        0.5 * (lo[k] + hi[k])
                    } else {
                        0.0
                    };
                }
            }
            for k in 0..self.na {
                x[self.energy(t, k)] = self.e_initial(k);
            }
        }
        x
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let base = self.case.base_mva;
        let mut power = 0.0;
        let mut degradation = 0.0;
        for t in 0..self.periods() {
            for (gi, g) in self.case.generators.iter().enumerate() {
                power += g.cost(base * x[self.pg(t, gi)]);
            }
            for (k, &u) in self.spec.active_ess.iter().enumerate() {
                let p = base * x[self.p_ess(t, k)];
                degradation += self.case.ess_units[u].degradation_weight * p * p;
            }
        }
        self.spec.power_weight * power + self.spec.ess_weight * degradation
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let base = self.case.base_mva;
        for t in 0..self.periods() {
            for (gi, g) in self.case.generators.iter().enumerate() {
                let k = self.pg(t, gi);
                grad[k] =
                    self.spec.power_weight * base * (2.0 * g.cost_c2 * base * x[k] + g.cost_c1);
            }
            for (k, &u) in self.spec.active_ess.iter().enumerate() {
                let j = self.p_ess(t, k);
                let w = self.case.ess_units[u].degradation_weight;
                grad[j] = self.spec.ess_weight * 2.0 * w * base * base * x[j];
            }
        }
    }

    fn eq_constraints(&self, x: &[f64], out: &mut [f64]) {
        let (n, dt) = (self.n, self.spec.period_hours);
        for t in 0..self.periods() {
            let row = t * self.rows;
            let s = self.spec.load_scale[t];
            for i in 0..n {
                out[row + i] = s * self.p_load[i];
                out[row + n + i] = s * self.q_load[i];
            }
            for (gi, g) in self.case.generators.iter().enumerate() {
                out[row + g.bus] -= x[self.pg(t, gi)];
                out[row + n + g.bus] -= x[self.qg(t, gi)];
            }
            for (k, &u) in self.spec.active_ess.iter().enumerate() {
                out[row + self.case.ess_units[u].bus] += x[self.p_ess(t, k)];
                let prev = if t == 0 {
                    self.e_initial(k)
                } else {
                    x[self.energy(t - 1, k)]
                };
                out[row + 2 * n + k] = x[self.energy(t, k)] - prev - dt * x[self.p_ess(t, k)];
            }
            for arc in 0..self.arcs.len() {
                let i = self.arcs[arc].0;
                let (p, q, _) = self.arc_terms(x, t, arc);
                out[row + i] += p.value;
                out[row + n + i] += q.value;
            }
        }
    }

    fn eq_jacobian(&self, x: &[f64], jac: &mut DMatrix<f64>) {
        let (n, dt) = (self.n, self.spec.period_hours);
        for t in 0..self.periods() {
            let row = t * self.rows;
            for (gi, g) in self.case.generators.iter().enumerate() {
                jac[(row + g.bus, self.pg(t, gi))] = -1.0;
                jac[(row + n + g.bus, self.qg(t, gi))] = -1.0;
            }
            for (k, &u) in self.spec.active_ess.iter().enumerate() {
                jac[(row + self.case.ess_units[u].bus, self.p_ess(t, k))] = 1.0;
                let r = row + 2 * n + k;
                jac[(r, self.energy(t, k))] = 1.0;
                jac[(r, self.p_ess(t, k))] = -dt;
                if t > 0 {
                    jac[(r, self.energy(t - 1, k))] = -1.0;
                }
            }
            for arc in 0..self.arcs.len() {
                let i = self.arcs[arc].0;
                let (p, q, idx) = self.arc_terms(x, t, arc);
                for a in 0..4 {
                    jac[(row + i, idx[a])] += p.grad[a];
                    jac[(row + n + i, idx[a])] += q.grad[a];
                }
            }
        }
    }

    fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_factor: f64,
        eq_weights: &[f64],
        _ineq_weights: &[f64],
        hess: &mut DMatrix<f64>,
    ) {
        let base = self.case.base_mva;
        let n = self.n;
        for t in 0..self.periods() {
            for (gi, g) in self.case.generators.iter().enumerate() {
                let k = self.pg(t, gi);
                hess[(k, k)] += obj_factor * self.spec.power_weight * 2.0 * g.cost_c2 * base * base;
            }
            for (k, &u) in self.spec.active_ess.iter().enumerate() {
                let j = self.p_ess(t, k);
                let w = self.case.ess_units[u].degradation_weight;
                hess[(j, j)] += obj_factor * self.spec.ess_weight * 2.0 * w * base * base;
            }
            let row = t * self.rows;
            for arc in 0..self.arcs.len() {
                let i = self.arcs[arc].0;
                let (yp, yq) = (eq_weights[row + i], eq_weights[row + n + i]);
                if yp == 0.0 && yq == 0.0 {
                    continue;
                }
                let (p, q, idx) = self.arc_terms(x, t, arc);
                for a in 0..4 {
                    for b in 0..=a {
                        let v = yp * p.hess[a][b] + yq * q.hess[a][b];
                        let (r, c) = if idx[a] >= idx[b] {
                            (idx[a], idx[b])
                        } else {
                            (idx[b], idx[a])
                        };
                        hess[(r, c)] += v;
                    }
                }
            }
        }
    }
}
