//! Bi-level resilient operation: isolate a compromised cyber node, reroute the
//! cyber tree through the cheapest neighboring replacement, then re-dispatch the
//! grid with the backup storage at the compromised bus.
//!
//! The two levels are solved in sequence. The topology comes first and the
//! dispatch is solved given it, so the combination is not guaranteed to be
//! jointly optimal.

use std::collections::BTreeSet;

use log::{debug, info};
use serde::Serialize;
use thiserror::Error;

use crate::acopf::{solve_multiperiod, AcopfError, DispatchResult, MultiPeriodSpec};
use crate::case::{EssUnit, PowerCase, Scenario, ScenarioError};
use crate::cyber::{build_topology_milp, solve_milp, CyberError, CyberGraph, TopologyProblem, TopologySolution};
use crate::nlp::{NlpOptions, SolveStatus};

#[derive(Debug, Error)]
pub enum ResilienceError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Cyber(#[from] CyberError),
    #[error(transparent)]
    Dispatch(#[from] AcopfError),
    #[error("no replacement candidates for cyber node {0}")]
    NoCandidates(u32),
    #[error("cyber layer unrecoverable: no candidate for node {0} can reconnect the critical nodes")]
    Unrecoverable(u32),
    #[error("{stage} dispatch did not converge ({status:?} after {iterations} iterations, max mismatch {mismatch:.3e} pu)")]
    NotConverged {
        stage: &'static str,
        status: SolveStatus,
        iterations: usize,
        mismatch: f64,
    },
}

/// A compromised node and the nodes that may take over its role.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighborhood {
    pub compromised: u32,
    pub candidates: BTreeSet<u32>,
}

/// Rerouted topology when candidate `candidate` replaces the compromised node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateEvaluation {
    pub candidate: u32,
    pub rerouted_topology: TopologySolution,
    /// `α1 · (tree cost + replacement cost)`.
    pub cyber_cost: f64,
    pub replacement: bool,
}

/// Outcome of one candidate as listed in the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRecord {
    pub candidate: u32,
    pub cyber_cost: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CostBreakdown {
    pub alpha_cyber: f64,
    pub alpha_power: f64,
    pub alpha_resilience: f64,
    /// Deployment cost of the tree in force at the end of the horizon.
    pub f_cyber: f64,
    /// Generation cost summed over the periods of the reported dispatch.
    pub f_power: f64,
    /// Replacement plus storage cost; zero without an attack.
    pub f_res: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(alphas: crate::case::Alphas, f_cyber: f64, f_power: f64, f_res: f64) -> Self {
        CostBreakdown {
            alpha_cyber: alphas.cyber,
            alpha_power: alphas.power,
            alpha_resilience: alphas.resilience,
            f_cyber,
            f_power,
            f_res,
            total: alphas.cyber * f_cyber + alphas.power * f_power + alphas.resilience * f_res,
        }
    }
}

/// Voltage magnitude of one bus per period, before and after mitigation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoltageTrace {
    pub bus: u32,
    pub baseline: Vec<f64>,
    pub attacked: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResilienceReport {
    /// Dispatch without the attack over the whole horizon.
    pub baseline: DispatchResult,
    /// Baseline before the attack period, re-optimized dispatch from it on.
    pub attacked: DispatchResult,
    pub attack_period: Option<usize>,
    pub compromised: Option<u32>,
    pub chosen_candidate: Option<u32>,
    /// Replacement flag x̃.
    pub replacement: bool,
    pub candidates: Vec<CandidateRecord>,
    pub pre_attack_topology: TopologySolution,
    pub post_attack_topology: TopologySolution,
    /// Storage units used as backup after the attack.
    pub backup_ess: Vec<usize>,
    /// Generators forced off from the attack period on.
    pub disabled_generators: Vec<usize>,
    pub costs: CostBreakdown,
    pub voltage_trace: Option<VoltageTrace>,
}

/// Replacement and storage cost of the backup:
/// `x̃ · (c̃' + startup + weight · Σ_t P_t²)` with `P` in MW.
pub fn resilience_cost(replacement: bool, p_ess_profile: &[f64], ess: &EssUnit, replacement_cost: f64) -> f64 {
    if !replacement {
        return 0.0;
    }
    let squares: f64 = p_ess_profile.iter().map(|p| p * p).sum();
    replacement_cost + ess.startup_cost + ess.degradation_weight * squares
}

/// Link neighbors of `compromised`, or the explicit list when one is given.
pub fn derive_neighborhood(
    graph: &CyberGraph,
    compromised: u32,
    explicit: Option<&[u32]>,
) -> Result<Neighborhood, ResilienceError> {
    if graph.node_position(compromised).is_none() {
        return Err(CyberError::Problem(format!("cyber node {compromised} is not in the graph")).into());
    }
    let candidates: BTreeSet<u32> = match explicit {
        Some(list) => list.iter().copied().filter(|&m| m != compromised).collect(),
        None => graph.neighbors(compromised).into_iter().collect(),
    };
    if candidates.is_empty() {
        return Err(ResilienceError::NoCandidates(compromised));
    }
    Ok(Neighborhood {
        compromised,
        candidates,
    })
}

/// Solves the topology with `compromised` removed and `m` taking its place among
/// the critical nodes.
pub fn evaluate_candidate(
    problem: &TopologyProblem,
    compromised: u32,
    m: u32,
    alpha_cyber: f64,
    replacement_cost: f64,
) -> Result<CandidateEvaluation, CyberError> {
    let graph = problem.graph.without_node(compromised);
    if graph.node_position(m).is_none() {
        return Err(CyberError::Problem(format!("candidate {m} is not in the isolated graph")));
    }
    let mut critical = problem.critical.clone();
    critical.remove(&compromised);
    critical.insert(m);
    let rerouted = TopologyProblem::new(graph, critical, problem.root)?;
    let topology = solve_milp(&build_topology_milp(&rerouted))?;
    let cyber_cost = alpha_cyber * (topology.total_cost + replacement_cost);
    Ok(CandidateEvaluation {
        candidate: m,
        rerouted_topology: topology,
        cyber_cost,
        replacement: true,
    })
}

/// Evaluates every candidate, concurrently when `parallel` is set. Results come
/// back in candidate order either way.
pub fn evaluate_candidates(
    problem: &TopologyProblem,
    neighborhood: &Neighborhood,
    scenario: &Scenario,
    parallel: bool,
) -> Vec<(u32, Result<CandidateEvaluation, CyberError>)> {
    let c = neighborhood.compromised;
    let eval = |m: u32| {
        evaluate_candidate(
            problem,
            c,
            m,
            scenario.alphas.cyber,
            scenario.cyber_costs.replacement_cost(m),
        )
    };
    if !parallel {
        return neighborhood.candidates.iter().map(|&m| (m, eval(m))).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = neighborhood
            .candidates
            .iter()
            .map(|&m| (m, s.spawn(move || eval(m))))
            .collect();
        handles
            .into_iter()
            .map(|(m, h)| (m, h.join().expect("candidate evaluation panicked")))
            .collect()
    })
}

/// Cheapest feasible candidate; ties go to the smaller node id.
pub fn select_candidate(
    results: &[(u32, Result<CandidateEvaluation, CyberError>)],
) -> Option<&CandidateEvaluation> {
    results
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .fold(None, |best: Option<&CandidateEvaluation>, e| match best {
            Some(b) if b.cyber_cost < e.cyber_cost => Some(b),
            Some(b) if b.cyber_cost == e.cyber_cost && b.candidate < e.candidate => Some(b),
            _ => Some(e),
        })
}

fn require_converged(stage: &'static str, r: &DispatchResult) -> Result<(), ResilienceError> {
    if r.status == SolveStatus::Converged {
        Ok(())
    } else {
        Err(ResilienceError::NotConverged {
            stage,
            status: r.status,
            iterations: r.iterations,
            mismatch: r.validation.max_mismatch,
        })
    }
}

fn baseline_spec(scenario: &Scenario) -> MultiPeriodSpec {
    MultiPeriodSpec {
        load_scale: scenario.load_scale.clone(),
        period_hours: scenario.period_hours,
        active_ess: Vec::new(),
        disabled_gens: vec![BTreeSet::new(); scenario.horizon],
        power_weight: scenario.alphas.power,
        ess_weight: scenario.alphas.resilience,
    }
}

/// Checks that the scenario fits the case and returns the initial topology problem.
pub fn check_inputs(case: &PowerCase, scenario: &Scenario) -> Result<TopologyProblem, ResilienceError> {
    scenario.validate()?;
    if let Some(&s) = scenario.load_scale.iter().find(|s| **s < 0.0) {
        return Err(ScenarioError::Invalid(format!("negative load scale {s}")).into());
    }
    let graph = CyberGraph::from_case(case, scenario)?;
    let problem = TopologyProblem::new(graph, scenario.critical_nodes.clone(), scenario.root_node)?;
    if let Some(a) = &scenario.attack {
        if case.bus_index(a.disabled_generator_bus).is_none() {
            return Err(ScenarioError::Invalid(format!(
                "attacked generator bus {} is not in the case",
                a.disabled_generator_bus
            ))
            .into());
        }
        if let Some(m) = a.candidates.iter().flatten().find(|&&m| problem.graph.node_position(m).is_none()) {
            return Err(ScenarioError::Invalid(format!("candidate {m} is not a cyber node")).into());
        }
    }
    Ok(problem)
}

/// Runs the whole study: initial topology, baseline dispatch and, when the
/// scenario has an attack, isolation, candidate selection and re-dispatch.
pub fn run_algorithm1(
    case: &PowerCase,
    scenario: &Scenario,
    options: &NlpOptions,
) -> Result<ResilienceReport, ResilienceError> {
    run_with(case, scenario, options, true)
}

/// [`run_algorithm1`] with candidate evaluation optionally kept on one thread.
pub fn run_with(
    case: &PowerCase,
    scenario: &Scenario,
    options: &NlpOptions,
    parallel: bool,
) -> Result<ResilienceReport, ResilienceError> {
    let problem = check_inputs(case, scenario)?;
    let pre = solve_milp(&build_topology_milp(&problem))?;
    info!(
        "initial topology: {} nodes, {} links, cost {}",
        pre.active_nodes.len(),
        pre.active_links.len(),
        pre.total_cost
    );

    let baseline = solve_multiperiod(case, baseline_spec(scenario), options)?;
    require_converged("baseline", &baseline)?;
    info!("baseline dispatch cost {}", baseline.total_cost);

    let Some(attack) = &scenario.attack else {
        let costs = CostBreakdown::new(scenario.alphas, pre.total_cost, baseline.total_cost, 0.0);
        return Ok(ResilienceReport {
            attacked: baseline.clone(),
            baseline,
            attack_period: None,
            compromised: None,
            chosen_candidate: None,
            replacement: false,
            candidates: Vec::new(),
            post_attack_topology: pre.clone(),
            pre_attack_topology: pre,
            backup_ess: Vec::new(),
            disabled_generators: Vec::new(),
            costs,
            voltage_trace: None,
        });
    };

    let c = attack.compromised_cyber_node;
    let neighborhood = derive_neighborhood(&problem.graph, c, attack.candidates.as_deref())?;
    let results = evaluate_candidates(&problem, &neighborhood, scenario, parallel);
    let candidates: Vec<CandidateRecord> = results
        .iter()
        .map(|(m, r)| match r {
            Ok(e) => CandidateRecord {
                candidate: *m,
                cyber_cost: Some(e.cyber_cost),
                error: None,
            },
            Err(err) => CandidateRecord {
                candidate: *m,
                cyber_cost: None,
                error: Some(err.to_string()),
            },
        })
        .collect();
    for rec in &candidates {
        debug!("candidate {}: {:?} {:?}", rec.candidate, rec.cyber_cost, rec.error);
    }
    let chosen = select_candidate(&results).ok_or(ResilienceError::Unrecoverable(c))?.clone();
    info!("replacement node {} (cyber cost {})", chosen.candidate, chosen.cyber_cost);

    let t0 = attack.attack_period;
    let tail_len = scenario.horizon - t0;
    let disabled: BTreeSet<usize> = case.generators_at(attack.disabled_generator_bus).into_iter().collect();
    let backup = case.ess_at(c);
    let tail_spec = MultiPeriodSpec {
        load_scale: scenario.load_scale[t0..].to_vec(),
        active_ess: backup.clone(),
        disabled_gens: vec![disabled.clone(); tail_len],
        ..baseline_spec(scenario)
    };
    let tail = solve_multiperiod(case, tail_spec, options)?;
    require_converged("post-attack", &tail)?;
    let attacked = baseline.splice(&tail, t0);

    let replacement_cost = scenario.cyber_costs.replacement_cost(chosen.candidate);
    let mut f_res = replacement_cost;
    for &u in &backup {
        let profile: Vec<f64> = attacked.dispatch.iter().map(|d| d.p_ess[u]).collect();
        f_res += resilience_cost(true, &profile, &case.ess_units[u], 0.0);
    }
    let costs = CostBreakdown::new(
        scenario.alphas,
        chosen.rerouted_topology.total_cost,
        attacked.total_cost,
        f_res,
    );
    let voltage_trace = case.bus_index(c).map(|b| VoltageTrace {
        bus: c,
        baseline: baseline.states.iter().map(|s| s.v[b]).collect(),
        attacked: attacked.states.iter().map(|s| s.v[b]).collect(),
    });

    Ok(ResilienceReport {
        baseline,
        attacked,
        attack_period: Some(t0),
        compromised: Some(c),
        chosen_candidate: Some(chosen.candidate),
        replacement: true,
        candidates,
        pre_attack_topology: pre,
        post_attack_topology: chosen.rerouted_topology,
        backup_ess: backup,
        disabled_generators: disabled.into_iter().collect(),
        costs,
        voltage_trace,
    })
}
