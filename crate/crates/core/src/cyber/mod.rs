//! Minimum-cost cyber topology: a node-weighted Steiner tree over candidate links,
//! modelled as a single-commodity flow MILP.

mod milp;
pub(crate) mod simplex;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

pub use milp::{build_topology_milp, solve_milp, MilpModel};

use crate::case::{PowerCase, Scenario};

/// Largest graph accepted by [`enumerate_oracle`].
pub const ORACLE_MAX_NODES: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CyberError {
    #[error("invalid cyber graph: {0}")]
    Graph(String),
    #[error("invalid topology problem: {0}")]
    Problem(String),
    #[error("critical nodes cannot be connected by the candidate links")]
    Infeasible,
    #[error("oracle limited to {ORACLE_MAX_NODES} nodes, graph has {0}")]
    TooLarge(usize),
}

/// Candidate cyber nodes and undirected links with deployment costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyberGraph {
    /// Sorted node ids.
    pub nodes: Vec<u32>,
    /// Links as `(a, b)` with `a < b`.
    pub links: Vec<(u32, u32)>,
    pub node_cost: Vec<f64>,
    pub link_cost: Vec<f64>,
}

pub(crate) fn norm(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl CyberGraph {
    pub fn new(
        nodes: Vec<u32>,
        node_cost: Vec<f64>,
        links: Vec<(u32, u32)>,
        link_cost: Vec<f64>,
    ) -> Result<Self, CyberError> {
        if nodes.len() != node_cost.len() || links.len() != link_cost.len() {
            return Err(CyberError::Graph("cost vectors do not match".into()));
        }
        let mut order: Vec<usize> = (0..nodes.len()).collect();
        order.sort_by_key(|&i| nodes[i]);
        let sorted: Vec<u32> = order.iter().map(|&i| nodes[i]).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CyberError::Graph("duplicate node".into()));
        }
        let node_cost: Vec<f64> = order.iter().map(|&i| node_cost[i]).collect();
        let mut seen = BTreeSet::new();
        let mut norm_links = Vec::with_capacity(links.len());
        for &(a, b) in &links {
            if a == b {
                return Err(CyberError::Graph(format!("self-loop at node {a}")));
            }
            if sorted.binary_search(&a).is_err() || sorted.binary_search(&b).is_err() {
                return Err(CyberError::Graph(format!("link {a}-{b} has an unknown endpoint")));
            }
            if !seen.insert(norm(a, b)) {
                return Err(CyberError::Graph(format!("duplicate link {a}-{b}")));
            }
            norm_links.push(norm(a, b));
        }
        if node_cost
            .iter()
            .chain(&link_cost)
            .any(|c| !(c.is_finite() && *c >= 0.0))
        {
            return Err(CyberError::Graph("costs must be finite and nonnegative".into()));
        }
        Ok(CyberGraph {
            nodes: sorted,
            links: norm_links,
            node_cost,
            link_cost,
        })
    }

    /// One node per bus (same id) and, unless the scenario lists links, one link per
    /// physical line with parallel lines merged.
    pub fn from_case(case: &PowerCase, scenario: &Scenario) -> Result<Self, CyberError> {
        let nodes: Vec<u32> = case.buses.iter().map(|b| b.id).collect();
        let links: Vec<(u32, u32)> = match &scenario.candidate_links {
            Some(l) => l.clone(),
            None => {
                let mut seen = BTreeSet::new();
                case.lines
                    .iter()
                    .map(|l| norm(case.bus_id(l.from_bus), case.bus_id(l.to_bus)))
                    .filter(|l| seen.insert(*l))
                    .collect()
            }
        };
        let costs = &scenario.cyber_costs;
        let node_cost = nodes.iter().map(|&n| costs.node_cost(n)).collect();
        let link_cost = links.iter().map(|&(a, b)| costs.link_cost(a, b)).collect();
        CyberGraph::new(nodes, node_cost, links, link_cost)
    }

    pub fn node_position(&self, id: u32) -> Option<usize> {
        self.nodes.binary_search(&id).ok()
    }

    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .links
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The graph with `id` and every link touching it removed.
    pub fn without_node(&self, id: u32) -> CyberGraph {
        let keep: Vec<usize> = (0..self.nodes.len()).filter(|&i| self.nodes[i] != id).collect();
        let keep_links: Vec<usize> = (0..self.links.len())
            .filter(|&l| self.links[l].0 != id && self.links[l].1 != id)
            .collect();
        CyberGraph {
            nodes: keep.iter().map(|&i| self.nodes[i]).collect(),
            node_cost: keep.iter().map(|&i| self.node_cost[i]).collect(),
            links: keep_links.iter().map(|&l| self.links[l]).collect(),
            link_cost: keep_links.iter().map(|&l| self.link_cost[l]).collect(),
        }
    }

    pub fn link_position(&self, a: u32, b: u32) -> Option<usize> {
        let key = norm(a, b);
        self.links.iter().position(|&l| l == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyProblem {
    pub graph: CyberGraph,
    pub critical: BTreeSet<u32>,
    pub root: u32,
}

impl TopologyProblem {
    pub fn new(graph: CyberGraph, critical: BTreeSet<u32>, root: u32) -> Result<Self, CyberError> {
        if !critical.contains(&root) {
            return Err(CyberError::Problem(format!("root {root} is not a critical node")));
        }
        if let Some(k) = critical.iter().find(|&&k| graph.node_position(k).is_none()) {
            return Err(CyberError::Problem(format!("critical node {k} is not in the graph")));
        }
        Ok(TopologyProblem {
            graph,
            critical,
            root,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopologyStatus {
    Optimal,
}

/// Flow on the directed arc `from → to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArcFlow {
    pub from: u32,
    pub to: u32,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologySolution {
    pub active_nodes: BTreeSet<u32>,
    pub active_links: BTreeSet<(u32, u32)>,
    /// Both directions of every candidate link, in link order.
    pub flows: Vec<ArcFlow>,
    pub total_cost: f64,
    pub status: TopologyStatus,
    /// Branch-and-bound nodes visited (zero for the oracle).
    pub explored: usize,
}

impl TopologySolution {
    /// Builds a solution from a spanning tree, with flows equal to subtree sizes
    /// when the tree is oriented away from the root.
    pub(crate) fn from_tree(
        problem: &TopologyProblem,
        active_nodes: BTreeSet<u32>,
        active_links: BTreeSet<(u32, u32)>,
        explored: usize,
    ) -> TopologySolution {
        let g = &problem.graph;
        let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for &(a, b) in &active_links {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        // iterative DFS from the root for parents and a post-order
        let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
        let mut order = vec![problem.root];
        let mut stack = vec![problem.root];
        let mut seen = BTreeSet::from([problem.root]);
        while let Some(u) = stack.pop() {
            for &v in adj.get(&u).map(|v| v.as_slice()).unwrap_or(&[]) {
                if seen.insert(v) {
                    parent.insert(v, u);
                    order.push(v);
                    stack.push(v);
                }
            }
        }
        let mut size: BTreeMap<u32, f64> = order.iter().map(|&u| (u, 1.0)).collect();
        for &u in order.iter().rev() {
            if let Some(&p) = parent.get(&u) {
                let s = size[&u];
                *size.get_mut(&p).unwrap() += s;
            }
        }
        let mut flows = Vec::with_capacity(2 * g.links.len());
        for &(a, b) in &g.links {
            let ab = if parent.get(&b) == Some(&a) { size[&b] } else { 0.0 };
            let ba = if parent.get(&a) == Some(&b) { size[&a] } else { 0.0 };
            flows.push(ArcFlow { from: a, to: b, flow: ab });
            flows.push(ArcFlow { from: b, to: a, flow: ba });
        }
        let total_cost = solution_cost(g, &active_nodes, &active_links);
        TopologySolution {
            active_nodes,
            active_links,
            flows,
            total_cost,
            status: TopologyStatus::Optimal,
            explored,
        }
    }
}

/// `Σ node costs + Σ link costs` over the active sets.
pub fn solution_cost(g: &CyberGraph, nodes: &BTreeSet<u32>, links: &BTreeSet<(u32, u32)>) -> f64 {
    let mut cost = 0.0;
    for (i, id) in g.nodes.iter().enumerate() {
        if nodes.contains(id) {
            cost += g.node_cost[i];
        }
    }
    for (l, link) in g.links.iter().enumerate() {
        if links.contains(link) {
            cost += g.link_cost[l];
        }
    }
    cost
}

pub(crate) struct UnionFind(Vec<usize>);

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Exhaustive search: every superset of the critical nodes, each priced by the
/// minimum spanning tree of its induced subgraph.
pub fn enumerate_oracle(problem: &TopologyProblem) -> Result<TopologySolution, CyberError> {
    let g = &problem.graph;
    let n = g.nodes.len();
    if n > ORACLE_MAX_NODES {
        return Err(CyberError::TooLarge(n));
    }
    let optional: Vec<usize> = (0..n)
        .filter(|&i| !problem.critical.contains(&g.nodes[i]))
        .collect();
    let mut by_cost: Vec<usize> = (0..g.links.len()).collect();
    by_cost.sort_by(|&a, &b| g.link_cost[a].total_cmp(&g.link_cost[b]).then(a.cmp(&b)));

    let mut best: Option<(f64, BTreeSet<u32>, BTreeSet<(u32, u32)>)> = None;
    for mask in 0u32..(1 << optional.len()) {
        let mut inside = vec![false; n];
        for i in 0..n {
            inside[i] = problem.critical.contains(&g.nodes[i]);
        }
        for (bit, &i) in optional.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                inside[i] = true;
            }
        }
        let count = inside.iter().filter(|&&b| b).count();
        let mut uf = UnionFind::new(n);
        let mut links = BTreeSet::new();
        let mut cost: f64 = (0..n).filter(|&i| inside[i]).map(|i| g.node_cost[i]).sum();
        for &l in &by_cost {
            let (a, b) = g.links[l];
            let (pa, pb) = (g.node_position(a).unwrap(), g.node_position(b).unwrap());
            if inside[pa] && inside[pb] && uf.union(pa, pb) {
                links.insert(g.links[l]);
                cost += g.link_cost[l];
            }
        }
        if links.len() + 1 != count {
            continue;
        }
        if best.as_ref().is_none_or(|b| cost < b.0 - 1e-12) {
            let nodes = (0..n).filter(|&i| inside[i]).map(|i| g.nodes[i]).collect();
            best = Some((cost, nodes, links));
        }
    }
    let (_, nodes, links) = best.ok_or(CyberError::Infeasible)?;
    Ok(TopologySolution::from_tree(problem, nodes, links, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeReport {
    pub passed: bool,
    pub failures: Vec<String>,
}

/// Independent structural check of a solution from any source.
pub fn verify_tree(solution: &TopologySolution, problem: &TopologyProblem) -> TreeReport {
    let g = &problem.graph;
    let mut failures = Vec::new();
    let nodes = &solution.active_nodes;
    let links = &solution.active_links;

    if let Some(k) = problem.critical.iter().find(|k| !nodes.contains(k)) {
        failures.push(format!("critical node {k} inactive"));
    }
    if let Some(n) = nodes.iter().find(|&&n| g.node_position(n).is_none()) {
        failures.push(format!("unknown node {n}"));
    }
    for &(a, b) in links {
        if g.link_position(a, b).is_none() {
            failures.push(format!("link {a}-{b} is not a candidate"));
        }
        if !nodes.contains(&a) || !nodes.contains(&b) {
            failures.push(format!("link {a}-{b}: endpoint inactive"));
        }
    }
    if links.len() + 1 != nodes.len() {
        failures.push(format!(
            "{} links for {} active nodes",
            links.len(),
            nodes.len()
        ));
    }
    let ids: Vec<u32> = nodes.iter().copied().collect();
    let mut uf = UnionFind::new(ids.len());
    let mut cyclic = false;
    for &(a, b) in links {
        if let (Ok(pa), Ok(pb)) = (ids.binary_search(&a), ids.binary_search(&b)) {
            if !uf.union(pa, pb) {
                cyclic = true;
            }
        }
    }
    if cyclic {
        failures.push("acyclic violated".into());
    }
    if !ids.is_empty() && (0..ids.len()).any(|i| uf.find(i) != uf.find(0)) {
        failures.push("active subgraph disconnected".into());
    }

    // flow conservation and capacity
    let big_m = g.nodes.len() as f64;
    let tol = 1e-6;
    let mut net: BTreeMap<u32, f64> = g.nodes.iter().map(|&n| (n, 0.0)).collect();
    if solution.flows.len() != 2 * g.links.len() {
        failures.push("flow vector does not cover every arc".into());
    }
    for f in &solution.flows {
        if f.flow < -tol {
            failures.push(format!("negative flow on {}->{}", f.from, f.to));
        }
        let active = links.contains(&norm(f.from, f.to));
        let cap = if active { big_m } else { 0.0 };
        if f.flow > cap + tol {
            failures.push(format!("flow on {}->{} exceeds M*y", f.from, f.to));
        }
        if f.to == problem.root && f.flow > tol {
            failures.push(format!("flow into root on {}->{}", f.from, f.to));
        }
        if let Some(v) = net.get_mut(&f.to) {
            *v += f.flow;
        }
        if let Some(v) = net.get_mut(&f.from) {
            *v -= f.flow;
        }
    }
    for (&n, &inflow) in &net {
        let expected = if n == problem.root {
            -(nodes.len() as f64 - 1.0)
        } else if nodes.contains(&n) {
            1.0
        } else {
            0.0
        };
        if (inflow - expected).abs() > tol {
            failures.push(format!("flow conservation violated at node {n}"));
        }
    }
    let cost = solution_cost(g, nodes, links);
    if (cost - solution.total_cost).abs() > 1e-9 * cost.abs().max(1.0) {
        failures.push("reported cost differs from active sets".into());
    }
    TreeReport {
        passed: failures.is_empty(),
        failures,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn graph(nodes: &[(u32, f64)], links: &[(u32, u32, f64)]) -> CyberGraph {
        CyberGraph::new(
            nodes.iter().map(|n| n.0).collect(),
            nodes.iter().map(|n| n.1).collect(),
            links.iter().map(|l| (l.0, l.1)).collect(),
            links.iter().map(|l| l.2).collect(),
        )
        .unwrap()
    }

    pub(crate) fn problem(g: CyberGraph, k: &[u32], root: u32) -> TopologyProblem {
        TopologyProblem::new(g, k.iter().copied().collect(), root).unwrap()
    }

    /// Triangle a=1, b=2, c=3 with a costly direct link 1-3.
    pub(crate) fn triangle() -> TopologyProblem {
        problem(
            graph(
                &[(1, 1.0), (2, 0.5), (3, 1.0)],
                &[(1, 3, 5.0), (1, 2, 2.0), (2, 3, 2.0)],
            ),
            &[1, 3],
            1,
        )
    }

    /// Random connected-or-not instance with `n` nodes, costs in `[0, 10]`.
    pub(crate) fn random_problem(rng: &mut ChaCha8Rng) -> TopologyProblem {
        let n = rng.gen_range(3..=8u32);
        let nodes: Vec<(u32, f64)> = (1..=n).map(|i| (i, rng.gen_range(0.0..=10.0))).collect();
        let mut links = Vec::new();
        for a in 1..=n {
            for b in a + 1..=n {
                if rng.gen_bool(0.45) {
                    links.push((a, b, rng.gen_range(0.0..=10.0)));
                }
            }
        }
        let k_size = rng.gen_range(2..=4usize.min(n as usize));
        let mut ids: Vec<u32> = (1..=n).collect();
        let mut k = Vec::new();
        for _ in 0..k_size {
            let i = rng.gen_range(0..ids.len());
            k.push(ids.remove(i));
        }
        let root = k[0];
        problem(graph(&nodes, &links), &k, root)
    }

    #[test]
    fn graph_validation() {
        let bad = |links: Vec<(u32, u32)>, costs: Vec<f64>| {
            CyberGraph::new(vec![1, 2], vec![0.0, 0.0], links, costs).is_err()
        };
        assert!(bad(vec![(1, 1)], vec![1.0]));
        assert!(bad(vec![(1, 2), (2, 1)], vec![1.0, 1.0]));
        assert!(bad(vec![(1, 3)], vec![1.0]));
        assert!(bad(vec![(1, 2)], vec![-1.0]));
        let g = CyberGraph::new(vec![2, 1], vec![5.0, 3.0], vec![(2, 1)], vec![1.0]).unwrap();
        assert_eq!(g.nodes, vec![1, 2]);
        assert_eq!(g.node_cost, vec![3.0, 5.0]);
        assert_eq!(g.links, vec![(1, 2)]);
    }

    #[test]
    fn problem_validation() {
        let g = graph(&[(1, 0.0), (2, 0.0)], &[(1, 2, 1.0)]);
        assert!(TopologyProblem::new(g.clone(), BTreeSet::from([2]), 1).is_err());
        assert!(TopologyProblem::new(g, BTreeSet::from([1, 7]), 1).is_err());
    }

    #[test]
    fn removal_and_neighbors() {
        let t = triangle();
        assert_eq!(t.graph.neighbors(2), vec![1, 3]);
        let g = t.graph.without_node(2);
        assert_eq!(g.nodes, vec![1, 3]);
        assert_eq!(g.links, vec![(1, 3)]);
        assert_eq!(g.link_cost, vec![5.0]);
    }

    #[test]
    fn oracle_small_cases() {
        let two = problem(graph(&[(1, 1.0), (2, 1.0)], &[(1, 2, 1.0)]), &[1, 2], 1);
        let s = enumerate_oracle(&two).unwrap();
        assert_eq!(s.total_cost, 3.0);
        assert!(verify_tree(&s, &two).passed);

        let s = enumerate_oracle(&triangle()).unwrap();
        assert!((s.total_cost - 6.5).abs() < 1e-12);
        assert_eq!(s.active_links, BTreeSet::from([(1, 2), (2, 3)]));

        let split = problem(graph(&[(1, 0.0), (2, 0.0), (3, 0.0)], &[(1, 2, 1.0)]), &[1, 3], 1);
        assert_eq!(enumerate_oracle(&split).err(), Some(CyberError::Infeasible));
    }

    #[test]
    fn oracle_size_guard() {
        let nodes: Vec<(u32, f64)> = (1..=13).map(|i| (i, 0.0)).collect();
        let p = problem(graph(&nodes, &[]), &[1], 1);
        assert_eq!(enumerate_oracle(&p).err(), Some(CyberError::TooLarge(13)));
    }

    #[test]
    fn mutations_are_caught() {
        let p = triangle();
        let good = enumerate_oracle(&p).unwrap();
        assert!(verify_tree(&good, &p).passed);

        let mut extra = good.clone();
        extra.active_links.insert((1, 3));
        extra.active_nodes.remove(&3);
        let r = verify_tree(&extra, &p);
        assert!(r.failures.iter().any(|f| f.contains("endpoint inactive")));

        let mut cycle = good.clone();
        cycle.active_links.insert((1, 3));
        let r = verify_tree(&cycle, &p);
        assert!(!r.passed);
        assert!(r.failures.iter().any(|f| f.contains("acyclic violated")));

        let mut leak = good.clone();
        leak.flows[0].flow += 1.0;
        assert!(!verify_tree(&leak, &p).passed);

        let mut missing = good;
        missing.active_nodes.remove(&3);
        assert!(!verify_tree(&missing, &p).passed);
    }

    #[test]
    fn oracle_trees_always_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_problem(&mut rng);
            if let Ok(s) = enumerate_oracle(&p) {
                let r = verify_tree(&s, &p);
                assert!(r.passed, "{:?}", r.failures);
            }
        }
    }
}

#[cfg(test)]
mod mirror_tests {
    use super::*;
    use crate::case::{parse_matpower_case, parse_scenario};

    const SETUP: &str = "[horizon]\nperiods = 1\nperiod_hours = 1\n[cyber]\ncritical_nodes = [1, 2, 3, 6, 8]\nroot = 1\n";

    fn g_neighbors_ok(g: &CyberGraph) -> bool {
        let n = g.neighbors(6);
        [11, 12, 13].iter().all(|k| n.contains(k))
    }

    #[test]
    fn case14_mirror_has_twenty_links() {
        let case = parse_matpower_case(include_str!("../../../../data/case14.m")).unwrap();
        let scenario = parse_scenario(SETUP).unwrap();
        let g = CyberGraph::from_case(&case, &scenario).unwrap();
        assert_eq!(g.nodes.len(), 14);
        assert_eq!(g.links.len(), 20);
        let p = TopologyProblem::new(g, scenario.critical_nodes.clone(), 1).unwrap();
        let m = build_topology_milp(&p);
        assert_eq!(m.binaries.iter().filter(|&&j| j >= m.n_nodes()).count(), 20);
        let s = solve_milp(&m).unwrap();
        assert!(verify_tree(&s, &p).passed);
        assert!(g_neighbors_ok(&p.graph));
        assert_eq!(enumerate_oracle(&p).err(), Some(CyberError::TooLarge(14)));
    }
}
