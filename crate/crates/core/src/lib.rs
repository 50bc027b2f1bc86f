//! Cyber-physical co-optimization of grid-edge resources.
//!
//! The crate is organised bottom-up:
//!
//! - [`case`]: the power-system data model, MATPOWER case files and scenario files.
//! - [`nlp`]: a dense primal-dual interior-point solver for smooth nonlinear programs.
//! - [`acopf`]: AC power-flow physics and single/multi-period optimal power flow.
//! - [`cyber`]: the flow-based minimum-cost cyber topology (Steiner tree) MILP with its
//!   own simplex/branch-and-bound and an exhaustive oracle.
//! - [`resilience`]: the bi-level coordinator that isolates a compromised cyber node,
//!   reroutes the communication tree and re-dispatches the grid with a backup ESS.

pub mod acopf;
pub mod case;
pub mod cyber;
pub mod nlp;
pub mod resilience;

pub use acopf::{DispatchResult, NetworkState};
pub use case::{PowerCase, Scenario};
pub use cyber::{CyberGraph, TopologyProblem, TopologySolution};
pub use nlp::{NlpOptions, NlpProblem, NlpSolution, SolveStatus};
pub use resilience::{run_algorithm1, ResilienceReport};
