//! Data model for the cyber-physical test system.
//!
//! Bus references inside [`PowerCase`] (lines, generators, loads, storage) are dense
//! internal indices `0..n`. The external numbering used by case files and scenario
//! files lives in [`Bus::id`] and is resolved with [`PowerCase::bus_index`].

mod matpower;
mod scenario;

pub use matpower::{parse_matpower_case, parse_matpower_case_with_warnings, serialize_case};
pub use scenario::{parse_scenario, Alphas, AttackSpec, CyberCosts, Scenario, ScenarioError};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown bus {id} referenced by {context}")]
    UnknownBus { id: i64, context: String },
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("zero-impedance branch {from}-{to}")]
    ZeroImpedance { from: u32, to: u32 },
    #[error("missing table `mpc.{0}`")]
    MissingTable(&'static str),
    #[error("case has no buses")]
    Empty,
    #[error("case must have exactly one slack bus, found {0}")]
    SlackCount(usize),
    #[error("invalid case: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bus {
    /// External bus number as written in the case file.
    pub id: u32,
    pub is_slack: bool,
}

/// Series branch admittance in per-unit. Shunt charging is not modelled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Line {
    pub from_bus: usize,
    pub to_bus: usize,
    pub g: f64,
    pub b: f64,
}

impl Line {
    /// Series conductance/susceptance from resistance/reactance.
    pub fn from_impedance(from_bus: usize, to_bus: usize, r: f64, x: f64) -> Self {
        let z2 = r * r + x * x;
        Line {
            from_bus,
            to_bus,
            g: r / z2,
            b: -x / z2,
        }
    }

    /// Back-conversion `(r, x)` of the series admittance.
    pub fn impedance(&self) -> (f64, f64) {
        let y2 = self.g * self.g + self.b * self.b;
        (self.g / y2, -self.b / y2)
    }

    /// Same branch seen from the other end.
    pub fn reversed(&self) -> Self {
        Line {
            from_bus: self.to_bus,
            to_bus: self.from_bus,
            g: self.g,
            b: self.b,
        }
    }
}

/// Generator with quadratic cost `c2 P^2 + c1 P + c0` (P in MW, cost in $/h).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Reactive limits in MVAr; `None` leaves that side unbounded.
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub cost_c2: f64,
    pub cost_c1: f64,
    pub cost_c0: f64,
}

impl Generator {
    pub fn cost(&self, p_mw: f64) -> f64 {
        self.cost_c2 * p_mw * p_mw + self.cost_c1 * p_mw + self.cost_c0
    }
}

/// Constant-power load in MW / MVAr. Negative values are net injections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Load {
    pub bus: usize,
    pub p_load: f64,
    pub q_load: f64,
}

/// Energy storage unit. Power is positive when charging.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssUnit {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub e_initial: f64,
    /// One-off startup cost in $.
    pub startup_cost: f64,
    /// Degradation cost weight in $/MW^2, applied to the sum of squared power.
    pub degradation_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    pub loads: Vec<Load>,
    pub ess_units: Vec<EssUnit>,
    /// `(v_lo, v_hi)` in per-unit of nominal voltage.
    pub voltage_bounds: (f64, f64),
    /// Fixed voltage magnitude of the slack bus, per-unit.
    pub slack_voltage: f64,
}

impl PowerCase {
    /// Builds a case and checks every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        generators: Vec<Generator>,
        loads: Vec<Load>,
        ess_units: Vec<EssUnit>,
        voltage_bounds: (f64, f64),
        slack_voltage: f64,
    ) -> Result<Self, CaseError> {
        let case = PowerCase {
            base_mva,
            buses,
            lines,
            generators,
            loads,
            ess_units,
            voltage_bounds,
            slack_voltage,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let invalid = |msg: String| Err(CaseError::Invalid(msg));
        if self.buses.is_empty() {
            return Err(CaseError::Empty);
        }
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return invalid(format!("base MVA must be positive, got {}", self.base_mva));
        }
        let mut ids: Vec<u32> = self.buses.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(CaseError::DuplicateBus(w[0]));
        }
        let slacks = self.buses.iter().filter(|b| b.is_slack).count();
        if slacks != 1 {
            return Err(CaseError::SlackCount(slacks));
        }
        let (lo, hi) = self.voltage_bounds;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return invalid(format!("voltage bounds ({lo}, {hi}) must satisfy 0 < lo < hi"));
        }
        if !(self.slack_voltage > 0.0 && self.slack_voltage.is_finite()) {
            return invalid(format!("slack voltage {} must be positive", self.slack_voltage));
        }
        let n = self.buses.len();
        let check_bus = |bus: usize, what: &str| {
            if bus >= n {
                Err(CaseError::UnknownBus {
                    id: bus as i64,
                    context: what.to_string(),
                })
            } else {
                Ok(())
            }
        };
        for (k, l) in self.lines.iter().enumerate() {
            check_bus(l.from_bus, &format!("line {k}"))?;
            check_bus(l.to_bus, &format!("line {k}"))?;
            if l.from_bus == l.to_bus {
                return invalid(format!("line {k} is a self-loop"));
            }
            if !(l.g.is_finite() && l.b.is_finite()) || (l.g == 0.0 && l.b == 0.0) {
                return invalid(format!("line {k} has a non-finite or zero admittance"));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            check_bus(g.bus, &format!("generator {k}"))?;
            if !(g.p_min <= g.p_max) {
                return invalid(format!("generator {k}: p_min > p_max"));
            }
            if let (Some(qlo), Some(qhi)) = (g.q_min, g.q_max) {
                if !(qlo <= qhi) {
                    return invalid(format!("generator {k}: q_min > q_max"));
                }
            }
            if !(g.cost_c2 >= 0.0) {
                return invalid(format!("generator {k}: negative quadratic cost"));
            }
        }
        for (k, l) in self.loads.iter().enumerate() {
            check_bus(l.bus, &format!("load {k}"))?;
        }
        for (k, e) in self.ess_units.iter().enumerate() {
            check_bus(e.bus, &format!("ESS {k}"))?;
            if !(e.p_min <= 0.0 && 0.0 <= e.p_max) {
                return invalid(format!("ESS {k}: power range must contain zero"));
            }
            if !(e.e_min <= e.e_initial && e.e_initial <= e.e_max) {
                return invalid(format!("ESS {k}: initial energy outside [e_min, e_max]"));
            }
        }
        Ok(())
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.is_slack)
            .expect("validated case has a slack bus")
    }

    /// Internal index of an external bus number.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_id(&self, index: usize) -> u32 {
        self.buses[index].id
    }

    /// Indices of generators connected to the bus with external number `id`.
    pub fn generators_at(&self, id: u32) -> Vec<usize> {
        match self.bus_index(id) {
            Some(b) => (0..self.generators.len())
                .filter(|&g| self.generators[g].bus == b)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Indices of storage units connected to the bus with external number `id`.
    pub fn ess_at(&self, id: u32) -> Vec<usize> {
        match self.bus_index(id) {
            Some(b) => (0..self.ess_units.len())
                .filter(|&e| self.ess_units[e].bus == b)
                .collect(),
            None => Vec::new(),
        }
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::two_bus;
    use super::*;

    #[test]
    fn impedance_conversion() {
        let l = Line::from_impedance(0, 1, 0.0, 0.1);
        assert_eq!(l.g, 0.0);
        assert!((l.b + 10.0).abs() < 1e-12);
        let l = Line::from_impedance(0, 1, 0.03, 0.04);
        // |z|^2 = 0.0025
        assert!((l.g - 12.0).abs() < 1e-12);
        assert!((l.b + 16.0).abs() < 1e-12);
        let (r, x) = l.impedance();
        assert!((r - 0.03).abs() < 1e-15 && (x - 0.04).abs() < 1e-15);
    }

    #[test]
    fn empty_case_is_rejected() {
        let err = PowerCase::new(100.0, vec![], vec![], vec![], vec![], vec![], (0.9, 1.1), 1.0);
        assert_eq!(err.unwrap_err(), CaseError::Empty);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut c = two_bus();
        c.buses[1].id = 1;
        assert_eq!(c.validate(), Err(CaseError::DuplicateBus(1)));

        let mut c = two_bus();
        c.buses[1].is_slack = true;
        assert_eq!(c.validate(), Err(CaseError::SlackCount(2)));

        let mut c = two_bus();
        c.voltage_bounds = (1.1, 0.9);
        assert!(matches!(c.validate(), Err(CaseError::Invalid(_))));

        let mut c = two_bus();
        c.generators[0].bus = 7;
        assert!(matches!(c.validate(), Err(CaseError::UnknownBus { .. })));

        let mut c = two_bus();
        c.ess_units.push(EssUnit {
            bus: 0,
            p_min: 1.0,
            p_max: 2.0,
            e_min: 0.0,
            e_max: 1.0,
            e_initial: 0.5,
            startup_cost: 0.0,
            degradation_weight: 0.0,
        });
        assert!(matches!(c.validate(), Err(CaseError::Invalid(_))));
    }

    #[test]
    fn lookups_use_external_ids() {
        let c = two_bus();
        assert_eq!(c.bus_index(2), Some(1));
        assert_eq!(c.bus_index(9), None);
        assert_eq!(c.generators_at(1), vec![0]);
        assert!(c.generators_at(2).is_empty());
        assert_eq!(c.slack_index(), 0);
    }
}
