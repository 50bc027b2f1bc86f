//! AC power-flow physics and (multi-period) optimal power flow.
//!
//! Quantities at the API boundary are in MW / MVAr / MWh; the assembled
//! [`NlpProblem`](crate::nlp::NlpProblem) works in per-unit on the case base.

mod problem;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

pub use problem::MultiPeriodOpf;

use crate::case::{Line, PowerCase, Scenario};
use crate::nlp::{solve_nlp, NlpError, NlpOptions, SolveStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcopfError {
    #[error("generator {index} has p_min > p_max")]
    GeneratorBounds { index: usize },
    #[error("invalid dispatch specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Solver(#[from] NlpError),
}

/// Per-bus voltage magnitudes (pu) and angles (rad).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkState {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl NetworkState {
    pub fn flat(n: usize) -> Self {
        NetworkState {
            v: vec![1.0; n],
            theta: vec![0.0; n],
        }
    }
}

/// Generator set-points in MW / MVAr and storage power in MW (positive = charging),
/// indexed like `PowerCase::generators` and `PowerCase::ess_units`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dispatch {
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
    pub p_ess: Vec<f64>,
}

impl Dispatch {
    pub fn zeros(case: &PowerCase) -> Self {
        Dispatch {
            p_gen: vec![0.0; case.generators.len()],
            q_gen: vec![0.0; case.generators.len()],
            p_ess: vec![0.0; case.ess_units.len()],
        }
    }
}

/// Residuals found by re-evaluating a result from scratch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Validation {
    /// Largest nodal mismatch, pu.
    pub max_mismatch: f64,
    /// Largest violation of any voltage, generator or storage bound (pu or MW/MWh).
    pub max_bound_violation: f64,
    /// Largest residual of the storage energy recursion, MWh.
    pub max_energy_residual: f64,
}

impl Validation {
    fn merge(self, other: Validation) -> Validation {
        Validation {
            max_mismatch: self.max_mismatch.max(other.max_mismatch),
            max_bound_violation: self.max_bound_violation.max(other.max_bound_violation),
            max_energy_residual: self.max_energy_residual.max(other.max_energy_residual),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchResult {
    pub dispatch: Vec<Dispatch>,
    pub states: Vec<NetworkState>,
    /// Energy of every storage unit at the end of each period, MWh.
    pub ess_energy: Vec<Vec<f64>>,
    /// Generation cost of each period, $/h.
    pub period_cost: Vec<f64>,
    /// Sum of `period_cost`.
    pub total_cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub validation: Validation,
}

impl DispatchResult {
    pub fn periods(&self) -> usize {
        self.dispatch.len()
    }

    /// Keeps periods `..from` of `self` and appends `tail`.
    pub fn splice(&self, tail: &DispatchResult, from: usize) -> DispatchResult {
        let mut out = DispatchResult {
            dispatch: self.dispatch[..from].to_vec(),
            states: self.states[..from].to_vec(),
            ess_energy: self.ess_energy[..from].to_vec(),
            period_cost: self.period_cost[..from].to_vec(),
            total_cost: 0.0,
            status: if self.status == SolveStatus::Converged {
                tail.status
            } else {
                self.status
            },
            iterations: self.iterations + tail.iterations,
            validation: self.validation.merge(tail.validation),
        };
        out.dispatch.extend(tail.dispatch.iter().cloned());
        out.states.extend(tail.states.iter().cloned());
        out.ess_energy.extend(tail.ess_energy.iter().cloned());
        out.period_cost.extend(tail.period_cost.iter().copied());
        out.total_cost = out.period_cost.iter().sum();
        out
    }
}

/// What to optimize over a horizon of `load_scale.len()` periods.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiPeriodSpec {
    pub load_scale: Vec<f64>,
    pub period_hours: f64,
    /// Indices into `PowerCase::ess_units` available in every period.
    pub active_ess: Vec<usize>,
    /// Generator indices forced to zero output, per period.
    pub disabled_gens: Vec<BTreeSet<usize>>,
    /// Weight of the generation cost.
    pub power_weight: f64,
    /// Weight of the storage degradation cost.
    pub ess_weight: f64,
}

impl MultiPeriodSpec {
    pub fn single(load_scale: f64) -> Self {
        MultiPeriodSpec {
            load_scale: vec![load_scale],
            period_hours: 1.0,
            active_ess: Vec::new(),
            disabled_gens: vec![BTreeSet::new()],
            power_weight: 1.0,
            ess_weight: 1.0,
        }
    }

    fn check(&self, case: &PowerCase) -> Result<(), AcopfError> {
        let t = self.load_scale.len();
        if t == 0 {
            return Err(AcopfError::Spec("empty horizon".into()));
        }
        if self.disabled_gens.len() != t {
            return Err(AcopfError::Spec(format!(
                "{} disabled-generator sets for {t} periods",
                self.disabled_gens.len()
            )));
        }
        if !(self.period_hours > 0.0) {
            return Err(AcopfError::Spec("period length must be positive".into()));
        }
        if let Some(&g) = self.disabled_gens.iter().flatten().find(|&&g| g >= case.generators.len()) {
            return Err(AcopfError::Spec(format!("no generator with index {g}")));
        }
        let mut seen = BTreeSet::new();
        for &e in &self.active_ess {
            if e >= case.ess_units.len() || !seen.insert(e) {
                return Err(AcopfError::Spec(format!("bad storage index {e}")));
            }
        }
        if self.load_scale.iter().any(|s| !s.is_finite()) {
            return Err(AcopfError::Spec("non-finite load scale".into()));
        }
        Ok(())
    }
}

/// Active and reactive flow leaving `line.from_bus`, pu.
pub fn branch_flows(state: &NetworkState, line: &Line) -> (f64, f64) {
    let (i, j) = (line.from_bus, line.to_bus);
    let (vi, vj) = (state.v[i], state.v[j]);
    let (s, c) = (state.theta[i] - state.theta[j]).sin_cos();
    let p = (vi * vi - vi * vj * c) * line.g - vi * vj * s * line.b;
    let q = (vi * vj * c - vi * vi) * line.b - vi * vj * s * line.g;
    (p, q)
}

/// Per-bus `(ΔP, ΔQ)` in pu: flows out, minus generation, plus scaled load and
/// storage charging.
pub fn nodal_mismatch(
    state: &NetworkState,
    dispatch: &Dispatch,
    case: &PowerCase,
    load_scale: f64,
) -> Vec<(f64, f64)> {
    let base = case.base_mva;
    let mut out = vec![(0.0, 0.0); case.n_buses()];
    for line in &case.lines {
        let (p, q) = branch_flows(state, line);
        out[line.from_bus].0 += p;
        out[line.from_bus].1 += q;
        let (p, q) = branch_flows(state, &line.reversed());
        out[line.to_bus].0 += p;
        out[line.to_bus].1 += q;
    }
    for (g, gen) in case.generators.iter().enumerate() {
        out[gen.bus].0 -= dispatch.p_gen[g] / base;
        out[gen.bus].1 -= dispatch.q_gen[g] / base;
    }
    for load in &case.loads {
        out[load.bus].0 += load_scale * load.p_load / base;
        out[load.bus].1 += load_scale * load.q_load / base;
    }
    for (e, ess) in case.ess_units.iter().enumerate() {
        out[ess.bus].0 += dispatch.p_ess[e] / base;
    }
    out
}

/// Total generation cost in $/h, constant terms included for every generator.
pub fn generation_cost(dispatch: &Dispatch, case: &PowerCase) -> f64 {
    case.generators
        .iter()
        .zip(&dispatch.p_gen)
        .map(|(g, &p)| g.cost(p))
        .sum()
}

pub fn assemble_opf(case: &PowerCase, load_scale: f64) -> Result<MultiPeriodOpf<'_>, AcopfError> {
    MultiPeriodOpf::new(case, MultiPeriodSpec::single(load_scale))
}

pub fn solve_opf(
    case: &PowerCase,
    load_scale: f64,
    options: &NlpOptions,
) -> Result<DispatchResult, AcopfError> {
    solve_multiperiod(case, MultiPeriodSpec::single(load_scale), options)
}

/// Multi-period problem for a whole scenario horizon with the given storage units
/// and per-period disabled generators.
pub fn assemble_multiperiod<'a>(
    case: &'a PowerCase,
    scenario: &Scenario,
    active_ess: &[usize],
    disabled_gens: Vec<BTreeSet<usize>>,
) -> Result<MultiPeriodOpf<'a>, AcopfError> {
    MultiPeriodOpf::new(
        case,
        MultiPeriodSpec {
            load_scale: scenario.load_scale.clone(),
            period_hours: scenario.period_hours,
            active_ess: active_ess.to_vec(),
            disabled_gens,
            power_weight: scenario.alphas.power,
            ess_weight: scenario.alphas.resilience,
        },
    )
}

pub fn solve_multiperiod(
    case: &PowerCase,
    spec: MultiPeriodSpec,
    options: &NlpOptions,
) -> Result<DispatchResult, AcopfError> {
    let problem = MultiPeriodOpf::new(case, spec)?;
    let solution = solve_nlp(&problem, options)?;
    let mut result = extract(&problem, &solution.point, case);
    result.status = solution.status;
    result.iterations = solution.iterations;
    result.validation = validate_dispatch(case, problem.spec(), &result);
    Ok(result)
}

fn extract(problem: &MultiPeriodOpf, x: &[f64], case: &PowerCase) -> DispatchResult {
    let base = case.base_mva;
    let spec = problem.spec();
    let n = case.n_buses();
    let periods = problem.periods();
    let mut energy: Vec<f64> = case.ess_units.iter().map(|e| e.e_initial).collect();
    let mut out = DispatchResult {
        dispatch: Vec::with_capacity(periods),
        states: Vec::with_capacity(periods),
        ess_energy: Vec::with_capacity(periods),
        period_cost: Vec::with_capacity(periods),
        total_cost: 0.0,
        status: SolveStatus::IterLimit,
        iterations: 0,
        validation: Validation::default(),
    };
    for t in 0..periods {
        let state = NetworkState {
            v: (0..n).map(|i| x[problem.v(t, i)]).collect(),
            theta: (0..n).map(|i| x[problem.theta(t, i)]).collect(),
        };
        let mut d = Dispatch::zeros(case);
        for g in 0..case.generators.len() {
            d.p_gen[g] = base * x[problem.pg(t, g)];
            d.q_gen[g] = base * x[problem.qg(t, g)];
        }
        for (k, &u) in spec.active_ess.iter().enumerate() {
            d.p_ess[u] = base * x[problem.p_ess(t, k)];
            // energy follows from the power trajectory
            energy[u] += d.p_ess[u] * spec.period_hours;
        }
        out.period_cost.push(generation_cost(&d, case));
        out.dispatch.push(d);
        out.states.push(state);
        out.ess_energy.push(energy.clone());
    }
    out.total_cost = out.period_cost.iter().sum();
    out
}

/// Re-checks a result against the physics and the bounds implied by `spec`,
/// without using the assembled problem.
pub fn validate_dispatch(case: &PowerCase, spec: &MultiPeriodSpec, result: &DispatchResult) -> Validation {
    let mut val = Validation::default();
    let (v_lo, v_hi) = case.voltage_bounds;
    let slack = case.slack_index();
    let mut prev: Vec<f64> = case.ess_units.iter().map(|e| e.e_initial).collect();
    for t in 0..result.periods() {
        let state = &result.states[t];
        let d = &result.dispatch[t];
        for (dp, dq) in nodal_mismatch(state, d, case, spec.load_scale[t]) {
            val.max_mismatch = val.max_mismatch.max(dp.abs()).max(dq.abs());
        }
        let mut viol: f64 = 0.0;
        for i in 0..case.n_buses() {
            if i == slack {
                viol = viol
                    .max((state.v[i] - case.slack_voltage).abs())
                    .max(state.theta[i].abs());
            } else {
                viol = viol.max(v_lo - state.v[i]).max(state.v[i] - v_hi);
            }
        }
        for (g, gen) in case.generators.iter().enumerate() {
            if spec.disabled_gens[t].contains(&g) {
                viol = viol.max(d.p_gen[g].abs()).max(d.q_gen[g].abs());
                continue;
            }
            viol = viol.max(gen.p_min - d.p_gen[g]).max(d.p_gen[g] - gen.p_max);
            if let Some(q) = gen.q_min {
                viol = viol.max(q - d.q_gen[g]);
            }
            if let Some(q) = gen.q_max {
                viol = viol.max(d.q_gen[g] - q);
            }
        }
        for (u, ess) in case.ess_units.iter().enumerate() {
            let e = result.ess_energy[t][u];
            if spec.active_ess.contains(&u) {
                viol = viol.max(ess.p_min - d.p_ess[u]).max(d.p_ess[u] - ess.p_max);
                viol = viol.max(ess.e_min - e).max(e - ess.e_max);
            } else {
                viol = viol.max(d.p_ess[u].abs());
            }
            let residual = e - prev[u] - d.p_ess[u] * spec.period_hours;
            val.max_energy_residual = val.max_energy_residual.max(residual.abs());
            prev[u] = e;
        }
        val.max_bound_violation = val.max_bound_violation.max(viol);
    }
    val
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::fixtures::two_bus;
    use crate::case::{parse_matpower_case, EssUnit};
    use crate::nlp::{finite_diff_gradient, finite_diff_jacobian, NlpProblem, DEFAULT_FD_STEP};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn case14() -> PowerCase {
        parse_matpower_case(include_str!("../../../../data/case14.m")).unwrap()
    }

    fn line(g: f64, b: f64) -> Line {
        Line {
            from_bus: 0,
            to_bus: 1,
            g,
            b,
        }
    }

    #[test]
    fn flat_state_carries_no_flow() {
        let s = NetworkState::flat(2);
        assert_eq!(branch_flows(&s, &line(1.0, -10.0)), (0.0, 0.0));
    }

    #[test]
    fn lossless_line_flow() {
        let s = NetworkState {
            v: vec![1.0, 1.0],
            theta: vec![0.1, 0.0],
        };
        let (p, q) = branch_flows(&s, &line(0.0, -10.0));
        assert!((p - 0.998334166).abs() < 1e-8, "{p}");
        assert!((q - 0.049958347).abs() < 1e-8, "{q}");
        let (pr, _) = branch_flows(&s, &line(0.0, -10.0).reversed());
        assert!((p + pr).abs() < 1e-12);
    }

    #[test]
    fn mismatch_of_bare_load() {
        let case = two_bus();
        let d = Dispatch::zeros(&case);
        let m = nodal_mismatch(&NetworkState::flat(2), &d, &case, 1.0);
        assert_eq!(m[0], (0.0, 0.0));
        assert!((m[1].0 - 0.5).abs() < 1e-15);
        let empty = PowerCase {
            loads: vec![],
            ..case.clone()
        };
        let m = nodal_mismatch(&NetworkState::flat(2), &d, &empty, 1.0);
        assert!(m.iter().all(|&(p, q)| p == 0.0 && q == 0.0));
    }

    #[test]
    fn generation_cost_examples() {
        let mut case = two_bus();
        case.generators[0].cost_c2 = 0.0430293;
        case.generators[0].cost_c0 = 0.0;
        let mut d = Dispatch::zeros(&case);
        d.p_gen[0] = 50.0;
        assert!((generation_cost(&d, &case) - 1107.5732500).abs() < 1e-9);
        case.generators[0].cost_c0 = 7.0;
        d.p_gen[0] = 0.0;
        assert_eq!(generation_cost(&d, &case), 7.0);
        case.generators[0].cost_c2 = 0.0;
        d.p_gen[0] = 30.0;
        let one = generation_cost(&d, &case) - 7.0;
        d.p_gen[0] = 60.0;
        assert!((generation_cost(&d, &case) - 7.0 - 2.0 * one).abs() < 1e-12);
    }

    #[test]
    fn two_bus_opf_serves_load() {
        let r = solve_opf(&two_bus(), 1.0, &NlpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert!((r.dispatch[0].p_gen[0] - 50.0).abs() < 1e-4);
        assert!(r.validation.max_mismatch <= 1e-6);
        assert!(r.validation.max_bound_violation <= 1e-8);
    }

    #[test]
    fn inverted_generator_bounds_are_rejected() {
        let mut case = two_bus();
        case.generators[0].p_min = 200.0;
        assert_eq!(
            assemble_opf(&case, 1.0).err(),
            Some(AcopfError::GeneratorBounds { index: 0 })
        );
    }

    #[test]
    fn case14_matches_reference() {
        let case = case14();
        let r = solve_opf(&case, 1.0, &NlpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        let reference = 8083.154219274715;
        assert!(
            (r.total_cost - reference).abs() / reference < 5e-3,
            "{}",
            r.total_cost
        );
        assert!(r.validation.max_mismatch <= 1e-6);
        assert!(r.validation.max_bound_violation <= 1e-8);
    }

    #[test]
    fn load_growth_never_lowers_cost() {
        let case = case14();
        let a = solve_opf(&case, 1.0, &NlpOptions::default()).unwrap();
        let b = solve_opf(&case, 1.05, &NlpOptions::default()).unwrap();
        assert_eq!(a.status, SolveStatus::Converged);
        assert_eq!(b.status, SolveStatus::Converged);
        assert!(b.total_cost >= a.total_cost);
    }

    #[test]
    fn tightened_voltage_band_is_infeasible() {
        let mut case = case14();
        case.voltage_bounds = (0.9999, 1.0001);
        case.slack_voltage = 1.0;
        let r = solve_opf(&case, 1.0, &NlpOptions::default()).unwrap();
        assert_ne!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn uncoupled_periods_are_separable() {
        let case = case14();
        let opts = NlpOptions::default();
        let spec = MultiPeriodSpec {
            load_scale: vec![1.0, 0.9],
            period_hours: 2.0,
            active_ess: vec![],
            disabled_gens: vec![BTreeSet::new(); 2],
            power_weight: 1.0,
            ess_weight: 1.0,
        };
        let joint = solve_multiperiod(&case, spec, &opts).unwrap();
        let a = solve_opf(&case, 1.0, &opts).unwrap();
        let b = solve_opf(&case, 0.9, &opts).unwrap();
        let sum = a.total_cost + b.total_cost;
        assert!((joint.total_cost - sum).abs() / sum < 1e-6);
    }

    fn with_storage(mut case: PowerCase, p_max: f64) -> PowerCase {
        let bus = case.bus_index(6).unwrap();
        case.ess_units.push(EssUnit {
            bus,
            p_min: -20.0,
            p_max,
            e_min: 0.0,
            e_max: 40.0,
            e_initial: 0.0,
            startup_cost: 0.0,
            degradation_weight: 0.01,
        });
        case
    }

    #[test]
    fn empty_storage_without_charging_stays_idle() {
        let case = with_storage(case14(), 0.0);
        let spec = MultiPeriodSpec {
            load_scale: vec![1.0, 1.0],
            period_hours: 2.0,
            active_ess: vec![0],
            disabled_gens: vec![BTreeSet::new(); 2],
            power_weight: 1.0,
            ess_weight: 1.0,
        };
        let r = solve_multiperiod(&case, spec, &NlpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        for t in 0..2 {
            assert!(r.dispatch[t].p_ess[0].abs() < 1e-6);
            assert!(r.ess_energy[t][0] >= -1e-8);
        }
        assert!(r.validation.max_energy_residual <= 1e-10);
    }

    #[test]
    fn disabled_generator_is_exactly_zero() {
        let case = case14();
        let g6 = case.generators_at(6)[0];
        let mut spec = MultiPeriodSpec::single(1.0);
        spec.disabled_gens[0].insert(g6);
        let r = solve_multiperiod(&case, spec, &NlpOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Converged);
        assert_eq!(r.dispatch[0].p_gen[g6], 0.0);
        assert_eq!(r.dispatch[0].q_gen[g6], 0.0);
    }

    /// Random point strictly inside the bounds, with free variables drawn from a box.
    fn random_point(p: &MultiPeriodOpf, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (lo, hi) = p.bounds();
        (0..p.n_vars())
            .map(|k| {
                let l = if lo[k].is_finite() { lo[k] } else { -1.0 };
                let h = if hi[k].is_finite() { hi[k] } else { 1.0 };
                if h > l {
                    rng.gen_range(l..h)
                } else {
                    l
                }
            })
            .collect()
    }

    fn rel_close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let case = with_storage(case14(), 20.0);
        let spec = MultiPeriodSpec {
            load_scale: vec![1.0, 1.1],
            period_hours: 2.0,
            active_ess: vec![0],
            disabled_gens: vec![BTreeSet::new(), BTreeSet::from([1])],
            power_weight: 1.5,
            ess_weight: 2.0,
        };
        let p = MultiPeriodOpf::new(&case, spec).unwrap();
        let (nv, me) = (p.n_vars(), p.n_eq());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = random_point(&p, &mut rng);
            let mut g = vec![0.0; nv];
            p.gradient(&x, &mut g);
            let fd = finite_diff_gradient(|z| p.objective(z), &x, DEFAULT_FD_STEP);
            for k in 0..nv {
                assert!(rel_close(g[k], fd[k]), "gradient {k}: {} vs {}", g[k], fd[k]);
            }
            let mut jac = DMatrix::zeros(me, nv);
            p.eq_jacobian(&x, &mut jac);
            let fdj = finite_diff_jacobian(|z, out| p.eq_constraints(z, out), me, &x, DEFAULT_FD_STEP);
            for r in 0..me {
                for c in 0..nv {
                    assert!(rel_close(jac[(r, c)], fdj[(r, c)]), "jacobian ({r},{c})");
                }
            }
            // Hessian of a random combination against differences of the gradient
            let y: Vec<f64> = (0..me).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sigma = rng.gen_range(0.1..2.0);
            let mut h = DMatrix::zeros(nv, nv);
            p.lagrangian_hessian(&x, sigma, &y, &[], &mut h);
            let lag_grad = |z: &[f64], out: &mut [f64]| {
                p.gradient(z, out);
                out.iter_mut().for_each(|v| *v *= sigma);
                let mut j = DMatrix::zeros(me, nv);
                p.eq_jacobian(z, &mut j);
                for c in 0..nv {
                    for r in 0..me {
                        out[c] += j[(r, c)] * y[r];
                    }
                }
            };
            let fdh = finite_diff_jacobian(lag_grad, nv, &x, DEFAULT_FD_STEP);
            for r in 0..nv {
                for c in 0..=r {
                    assert!(rel_close(h[(r, c)], fdh[(r, c)]), "hessian ({r},{c})");
                }
            }
        }
    }
}
