use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::simplex::{solve_lp, Lp, LpOutcome, Row, Sense};
use super::{CyberError, TopologyProblem, TopologySolution, UnionFind};

const INT_TOL: f64 = 1e-6;

/// Flow-based Steiner tree MILP.
///
/// Variables are laid out as `x` (one per node, graph order), `y` (one per
/// candidate link) and `h` (two arcs per link: `a → b` then `b → a`).
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub relaxation: Lp,
    /// Binary variables in branching order: links first, then nodes.
    pub binaries: Vec<usize>,
    pub big_m: f64,
    problem: TopologyProblem,
}

impl MilpModel {
    pub fn n_nodes(&self) -> usize {
        self.problem.graph.nodes.len()
    }

    pub fn n_links(&self) -> usize {
        self.problem.graph.links.len()
    }

    pub fn n_arcs(&self) -> usize {
        2 * self.n_links()
    }

    pub fn x(&self, node: usize) -> usize {
        node
    }

    pub fn y(&self, link: usize) -> usize {
        self.n_nodes() + link
    }

    pub fn h(&self, arc: usize) -> usize {
        self.n_nodes() + self.n_links() + arc
    }

    /// Node variables fixed to one.
    pub fn fixed_binaries(&self) -> usize {
        (0..self.n_nodes())
            .filter(|&i| self.relaxation.lo[self.x(i)] == 1.0)
            .count()
    }

    pub fn problem(&self) -> &TopologyProblem {
        &self.problem
    }
}

pub fn build_topology_milp(problem: &TopologyProblem) -> MilpModel {
    let g = &problem.graph;
    let (n, l) = (g.nodes.len(), g.links.len());
    let nv = n + l + 2 * l;
    let big_m = n as f64;
    let root = g.node_position(problem.root).expect("validated root");

    let mut c = vec![0.0; nv];
    let mut lo = vec![0.0; nv];
    let mut hi = vec![1.0; nv];
    c[..n].copy_from_slice(&g.node_cost);
    c[n..n + l].copy_from_slice(&g.link_cost);
    for (i, id) in g.nodes.iter().enumerate() {
        if problem.critical.contains(id) {
            lo[i] = 1.0;
        }
    }
    let arc = |k: usize| n + l + k;
    let mut arcs = Vec::with_capacity(2 * l);
    for (k, &(a, b)) in g.links.iter().enumerate() {
        let (pa, pb) = (g.node_position(a).unwrap(), g.node_position(b).unwrap());
        arcs.push((pa, pb, k));
        arcs.push((pb, pa, k));
    }
    for (k, &(_, to, _)) in arcs.iter().enumerate() {
        // the root has no inflow
        hi[arc(k)] = if to == root { 0.0 } else { f64::INFINITY };
    }

    let mut rows = Vec::new();
    // root outflow equals the number of other active nodes
    let mut coeffs: Vec<(usize, f64)> = arcs
        .iter()
        .enumerate()
        .filter(|(_, a)| a.0 == root)
        .map(|(k, _)| (arc(k), 1.0))
        .collect();
    coeffs.extend((0..n).map(|i| (i, -1.0)));
    rows.push(Row {
        coeffs,
        sense: Sense::Eq,
        rhs: -1.0,
    });
    // every other node consumes its activation
    for i in (0..n).filter(|&i| i != root) {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (k, &(from, to, _)) in arcs.iter().enumerate() {
            if to == i {
                coeffs.push((arc(k), 1.0));
            } else if from == i {
                coeffs.push((arc(k), -1.0));
            }
        }
        coeffs.push((i, -1.0));
        rows.push(Row {
            coeffs,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }
    for (k, &(_, _, link)) in arcs.iter().enumerate() {
        rows.push(Row {
            coeffs: vec![(arc(k), 1.0), (n + link, -big_m)],
            sense: Sense::Le,
            rhs: 0.0,
        });
    }
    for (k, &(a, b)) in g.links.iter().enumerate() {
        for end in [a, b] {
            rows.push(Row {
                coeffs: vec![(n + k, 1.0), (g.node_position(end).unwrap(), -1.0)],
                sense: Sense::Le,
                rhs: 0.0,
            });
        }
    }

    let mut binaries: Vec<usize> = (n..n + l).collect();
    binaries.extend((0..n).filter(|&i| lo[i] < 1.0));
    MilpModel {
        relaxation: Lp { c, lo, hi, rows },
        binaries,
        big_m,
        problem: problem.clone(),
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    lo: Vec<f64>,
    hi: Vec<f64>,
    incumbent: Option<(f64, Vec<bool>, Vec<f64>)>,
    explored: usize,
}

fn tol(cost: f64) -> f64 {
    1e-9 * cost.abs().max(1.0)
}

fn lex(a: &[bool], b: &[bool]) -> Ordering {
    a.iter().cmp(b.iter())
}

impl Search<'_> {
    fn prefix(&self, depth: usize) -> Vec<bool> {
        self.model.binaries[..depth]
            .iter()
            .map(|&j| self.lo[j] > 0.5)
            .collect()
    }

    /// Whether a subtree with lower bound `bound` and fixed prefix of length `depth`
    /// cannot contain a better solution (lower cost, or equal cost and larger
    /// binary vector).
    fn dominated(&self, bound: f64, depth: usize) -> bool {
        match &self.incumbent {
            None => false,
            Some((cost, vec, _)) => {
                if bound > cost + tol(*cost) {
                    return true;
                }
                bound >= cost - tol(*cost) && lex(&self.prefix(depth), &vec[..depth]) == Ordering::Less
            }
        }
    }

    fn offer(&mut self, x: &[f64]) {
        let vec: Vec<bool> = self.model.binaries.iter().map(|&j| x[j] > 0.5).collect();
        let cost: f64 = self
            .model
            .binaries
            .iter()
            .zip(&vec)
            .filter(|(_, &on)| on)
            .map(|(&j, _)| self.model.relaxation.c[j])
            .sum::<f64>()
            + self.fixed_node_cost();
        let better = match &self.incumbent {
            None => true,
            Some((c, v, _)) => cost < c - tol(*c) || (cost <= c + tol(*c) && lex(&vec, v) == Ordering::Greater),
        };
        if better {
            self.incumbent = Some((cost, vec, x.to_vec()));
        }
    }

    fn fixed_node_cost(&self) -> f64 {
        (0..self.model.n_nodes())
            .filter(|&i| self.model.relaxation.lo[i] == 1.0)
            .map(|i| self.model.relaxation.c[i])
            .sum()
    }

    fn explore(&mut self, depth: usize, parent: Option<&(Vec<f64>, f64)>) {
        if let Some((_, bound)) = parent {
            if self.dominated(*bound, depth) {
                return;
            }
        }
        let reuse = parent.filter(|(x, _)| {
            self.model.binaries[..depth]
                .iter()
                .all(|&j| (x[j] - self.lo[j]).abs() <= INT_TOL)
        });
        let node = match reuse {
            Some(p) => p.clone(),
            None => {
                self.explored += 1;
                let lp = Lp {
                    lo: self.lo.clone(),
                    hi: self.hi.clone(),
                    ..self.model.relaxation.clone()
                };
                match solve_lp(&lp) {
                    LpOutcome::Optimal { x, objective } => (x, objective),
                    _ => return,
                }
            }
        };
        if self.dominated(node.1, depth) {
            return;
        }
        let integral = self
            .model
            .binaries
            .iter()
            .all(|&j| (node.0[j] - node.0[j].round()).abs() <= INT_TOL);
        if integral {
            self.offer(&node.0);
        }
        if depth == self.model.binaries.len() {
            return;
        }
        let j = self.model.binaries[depth];
        for v in [1.0, 0.0] {
            self.lo[j] = v;
            self.hi[j] = v;
            self.explore(depth + 1, Some(&node));
        }
        self.lo[j] = 0.0;
        self.hi[j] = 1.0;
    }
}

/// Exact branch-and-bound: depth-first, binaries in fixed order, one-branch first.
/// Among equal-cost optima the largest binary vector (links first) is kept; the
/// result is then reduced to a spanning tree of its active links in index order.
pub fn solve_milp(model: &MilpModel) -> Result<TopologySolution, CyberError> {
    let mut search = Search {
        model,
        lo: model.relaxation.lo.clone(),
        hi: model.relaxation.hi.clone(),
        incumbent: None,
        explored: 0,
    };
    search.explore(0, None);
    let explored = search.explored;
    let (_, _, x) = search.incumbent.ok_or(CyberError::Infeasible)?;

    let problem = &model.problem;
    let g = &problem.graph;
    let active_nodes: BTreeSet<u32> = (0..g.nodes.len())
        .filter(|&i| x[model.x(i)] > 0.5)
        .map(|i| g.nodes[i])
        .collect();
    // zero-cost links may close cycles without changing the optimum
    let mut uf = UnionFind::new(g.nodes.len());
    let mut active_links = BTreeSet::new();
    for (k, &(a, b)) in g.links.iter().enumerate() {
        if x[model.y(k)] > 0.5 {
            let (pa, pb) = (g.node_position(a).unwrap(), g.node_position(b).unwrap());
            if uf.union(pa, pb) {
                active_links.insert((a, b));
            }
        }
    }
    Ok(TopologySolution::from_tree(
        problem,
        active_nodes,
        active_links,
        explored,
    ))
}
