//! Result files. Floats are written in shortest round-trip form.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use cyphy::acopf::Validation;
use cyphy::cyber::CyberGraph;
use cyphy::resilience::{CandidateRecord, CostBreakdown, ResilienceReport, VoltageTrace};
use cyphy::{PowerCase, Scenario, SolveStatus, TopologySolution};

use crate::Mode;

#[derive(Serialize)]
struct DispatchRow {
    period: usize,
    generator: usize,
    p_mw: f64,
    q_mvar: f64,
}

#[derive(Serialize)]
struct EssRow {
    period: usize,
    bus: u32,
    p_mw: f64,
    e_mwh: f64,
}

#[derive(Serialize)]
struct VoltageRow {
    period: usize,
    bus: u32,
    v_pu: f64,
}

/// An active link oriented away from the root.
#[derive(Serialize)]
struct EdgeRow {
    from: u32,
    to: u32,
    cost: f64,
    flow: f64,
}

#[derive(Serialize)]
struct CaseCounts {
    buses: usize,
    lines: usize,
    generators: usize,
    ess: usize,
}

#[derive(Serialize)]
struct GeneratorRef {
    id: usize,
    bus: u32,
}

#[derive(Serialize)]
struct AttackSummary {
    period: usize,
    cyber_node: u32,
    generator_bus: u32,
}

#[derive(Serialize)]
struct TopologySummary {
    cost: f64,
    nodes: BTreeSet<u32>,
    links: BTreeSet<(u32, u32)>,
}

impl From<&TopologySolution> for TopologySummary {
    fn from(t: &TopologySolution) -> Self {
        TopologySummary {
            cost: t.total_cost,
            nodes: t.active_nodes.clone(),
            links: t.active_links.clone(),
        }
    }
}

#[derive(Serialize)]
struct Statuses {
    baseline: SolveStatus,
    attacked: SolveStatus,
}

#[derive(Serialize)]
struct Summary<'a> {
    mode: &'static str,
    periods: usize,
    period_hours: f64,
    case: CaseCounts,
    generators: Vec<GeneratorRef>,
    critical_nodes: &'a BTreeSet<u32>,
    root: u32,
    attack: Option<AttackSummary>,
    chosen_candidate: Option<u32>,
    replacement: bool,
    candidates: &'a [CandidateRecord],
    costs: CostBreakdown,
    baseline_generation_cost: f64,
    status: Statuses,
    iterations: usize,
    validation: Validation,
    topology_pre: TopologySummary,
    topology_post: Option<TopologySummary>,
    voltage_trace: &'a Option<VoltageTrace>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Writes `header` even when there are no rows.
fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn write_topology(path: &Path, graph: &CyberGraph, t: &TopologySolution) -> Result<()> {
    let rows = t.flows.iter().filter(|f| f.flow > 0.5).map(|f| {
        let l = graph.link_position(f.from, f.to).expect("flow on a candidate link");
        EdgeRow {
            from: f.from,
            to: f.to,
            cost: graph.link_cost[l],
            flow: f.flow,
        }
    });
    write_rows(path, &["from", "to", "cost", "flow"], rows)
}

pub fn write_all(
    out: &Path,
    mode: Mode,
    case: &PowerCase,
    scenario: &Scenario,
    graph: &CyberGraph,
    report: &ResilienceReport,
) -> Result<()> {
    let run = &report.attacked;
    let mut dispatch = Vec::new();
    let mut ess = Vec::new();
    let mut voltages = Vec::new();
    for t in 0..run.periods() {
        let d = &run.dispatch[t];
        for g in 0..case.generators.len() {
            dispatch.push(DispatchRow {
                period: t,
                generator: g + 1,
                p_mw: d.p_gen[g],
                q_mvar: d.q_gen[g],
            });
        }
        for (u, unit) in case.ess_units.iter().enumerate() {
            ess.push(EssRow {
                period: t,
                bus: case.bus_id(unit.bus),
                p_mw: d.p_ess[u],
                e_mwh: run.ess_energy[t][u],
            });
        }
        for (i, v) in run.states[t].v.iter().enumerate() {
            voltages.push(VoltageRow {
                period: t,
                bus: case.bus_id(i),
                v_pu: *v,
            });
        }
    }
    write_rows(&out.join("dispatch.csv"), &["period", "generator", "p_mw", "q_mvar"], dispatch)?;
    write_rows(&out.join("ess.csv"), &["period", "bus", "p_mw", "e_mwh"], ess)?;
    write_rows(&out.join("voltages.csv"), &["period", "bus", "v_pu"], voltages)?;
    write_topology(&out.join("topology_pre.csv"), graph, &report.pre_attack_topology)?;
    if let Some(c) = report.compromised {
        let post_graph = graph.without_node(c);
        write_topology(&out.join("topology_post.csv"), &post_graph, &report.post_attack_topology)?;
    }

    let summary = Summary {
        mode: mode.name(),
        periods: scenario.horizon,
        period_hours: scenario.period_hours,
        case: CaseCounts {
            buses: case.buses.len(),
            lines: case.lines.len(),
            generators: case.generators.len(),
            ess: case.ess_units.len(),
        },
        generators: case
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| GeneratorRef {
                id: g + 1,
                bus: case.bus_id(gen.bus),
            })
            .collect(),
        critical_nodes: &scenario.critical_nodes,
        root: scenario.root_node,
        attack: scenario.attack.as_ref().map(|a| AttackSummary {
            period: a.attack_period,
            cyber_node: a.compromised_cyber_node,
            generator_bus: a.disabled_generator_bus,
        }),
        chosen_candidate: report.chosen_candidate,
        replacement: report.replacement,
        candidates: &report.candidates,
        costs: report.costs,
        baseline_generation_cost: report.baseline.total_cost,
        status: Statuses {
            baseline: report.baseline.status,
            attacked: run.status,
        },
        iterations: run.iterations,
        validation: run.validation,
        topology_pre: (&report.pre_attack_topology).into(),
        topology_post: report.compromised.map(|_| (&report.post_attack_topology).into()),
        voltage_trace: &report.voltage_trace,
    };
    let path = out.join("summary.json");
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush().with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
