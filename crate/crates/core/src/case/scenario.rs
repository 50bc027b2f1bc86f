//! Scenario files: time horizon, cyber layer, costs, attack and balancing weights.
//!
//! The format is TOML with a fixed key set; unknown keys are rejected. See
//! `docs/scenario-format.md` for the full key list.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario syntax: {0}")]
    Syntax(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Balancing weights of the cyber, power and resilience objectives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Alphas {
    pub cyber: f64,
    pub power: f64,
    pub resilience: f64,
}

impl Default for Alphas {
    fn default() -> Self {
        Alphas {
            cyber: 1.0,
            power: 1.0,
            resilience: 1.0,
        }
    }
}

/// Cyber deployment costs: per node, per link and per replacement resource.
/// Entries missing from the maps fall back to the defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CyberCosts {
    pub node_default: f64,
    pub link_default: f64,
    pub replacement_default: f64,
    pub node: BTreeMap<u32, f64>,
    /// Keyed by the normalised pair `(min, max)`.
    pub link: BTreeMap<(u32, u32), f64>,
    pub replacement: BTreeMap<u32, f64>,
}

impl Default for CyberCosts {
    fn default() -> Self {
        CyberCosts {
            node_default: 1.0,
            link_default: 1.0,
            replacement_default: 1.0,
            node: BTreeMap::new(),
            link: BTreeMap::new(),
            replacement: BTreeMap::new(),
        }
    }
}

impl CyberCosts {
    pub fn node_cost(&self, node: u32) -> f64 {
        self.node.get(&node).copied().unwrap_or(self.node_default)
    }

    pub fn link_cost(&self, a: u32, b: u32) -> f64 {
        self.link
            .get(&(a.min(b), a.max(b)))
            .copied()
            .unwrap_or(self.link_default)
    }

    pub fn replacement_cost(&self, node: u32) -> f64 {
        self.replacement
            .get(&node)
            .copied()
            .unwrap_or(self.replacement_default)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackSpec {
    /// Zero-based period at which the attack strikes.
    pub attack_period: usize,
    pub compromised_cyber_node: u32,
    /// External bus number whose generators are knocked out.
    pub disabled_generator_bus: u32,
    /// Explicit replacement candidates; `None` uses the graph neighbourhood.
    pub candidates: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub horizon: usize,
    pub period_hours: f64,
    pub load_scale: Vec<f64>,
    pub critical_nodes: BTreeSet<u32>,
    pub root_node: u32,
    /// Explicit candidate links; `None` mirrors the physical line set.
    pub candidate_links: Option<Vec<(u32, u32)>>,
    pub attack: Option<AttackSpec>,
    pub alphas: Alphas,
    pub cyber_costs: CyberCosts,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    horizon: RawHorizon,
    cyber: RawCyber,
    #[serde(default)]
    costs: Option<RawCosts>,
    #[serde(default)]
    attack: Option<RawAttack>,
    #[serde(default)]
    alphas: Option<RawAlphas>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHorizon {
    periods: usize,
    period_hours: f64,
    load_scale: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCyber {
    critical_nodes: Vec<u32>,
    root: u32,
    links: Option<Vec<(u32, u32)>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCosts {
    node_default: Option<f64>,
    link_default: Option<f64>,
    replacement_default: Option<f64>,
    #[serde(default)]
    node: BTreeMap<String, f64>,
    #[serde(default)]
    link: Vec<(u32, u32, f64)>,
    #[serde(default)]
    replacement: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAttack {
    period: usize,
    cyber_node: u32,
    generator_bus: u32,
    candidates: Option<Vec<u32>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAlphas {
    cyber: Option<f64>,
    power: Option<f64>,
    resilience: Option<f64>,
}

fn node_map(raw: BTreeMap<String, f64>, what: &str) -> Result<BTreeMap<u32, f64>, ScenarioError> {
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|id| (id, v))
                .map_err(|_| ScenarioError::Invalid(format!("{what}: `{k}` is not a node id")))
        })
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| ScenarioError::Syntax(e.message().to_string()))?;

    let costs = match raw.costs {
        None => CyberCosts::default(),
        Some(c) => {
            let defaults = CyberCosts::default();
            let mut link = BTreeMap::new();
            for (a, b, cost) in c.link {
                if a == b {
                    return Err(ScenarioError::Invalid(format!("link cost for self-loop {a}-{b}")));
                }
                link.insert((a.min(b), a.max(b)), cost);
            }
            CyberCosts {
                node_default: c.node_default.unwrap_or(defaults.node_default),
                link_default: c.link_default.unwrap_or(defaults.link_default),
                replacement_default: c.replacement_default.unwrap_or(defaults.replacement_default),
                node: node_map(c.node, "costs.node")?,
                link,
                replacement: node_map(c.replacement, "costs.replacement")?,
            }
        }
    };

    let alphas = match raw.alphas {
        None => Alphas::default(),
        Some(a) => Alphas {
            cyber: a.cyber.unwrap_or(1.0),
            power: a.power.unwrap_or(1.0),
            resilience: a.resilience.unwrap_or(1.0),
        },
    };

    let load_scale = raw
        .horizon
        .load_scale
        .unwrap_or_else(|| vec![1.0; raw.horizon.periods]);

    let scenario = Scenario {
        horizon: raw.horizon.periods,
        period_hours: raw.horizon.period_hours,
        load_scale,
        critical_nodes: raw.cyber.critical_nodes.into_iter().collect(),
        root_node: raw.cyber.root,
        candidate_links: raw.cyber.links,
        attack: raw.attack.map(|a| AttackSpec {
            attack_period: a.period,
            compromised_cyber_node: a.cyber_node,
            disabled_generator_bus: a.generator_bus,
            candidates: a.candidates,
        }),
        alphas,
        cyber_costs: costs,
    };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.horizon == 0 {
            return invalid("horizon must have at least one period".into());
        }
        if !(self.period_hours > 0.0 && self.period_hours.is_finite()) {
            return invalid(format!("period_hours must be positive, got {}", self.period_hours));
        }
        if self.load_scale.len() != self.horizon {
            return invalid(format!(
                "load_scale has {} entries for {} periods",
                self.load_scale.len(),
                self.horizon
            ));
        }
        if self.load_scale.iter().any(|s| !s.is_finite()) {
            return invalid("load_scale entries must be finite".into());
        }
        if !self.critical_nodes.contains(&self.root_node) {
            return invalid(format!(
                "root node {} is not a critical node",
                self.root_node
            ));
        }
        let a = self.alphas;
        for (name, v) in [("cyber", a.cyber), ("power", a.power), ("resilience", a.resilience)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("alpha `{name}` must be positive, got {v}"));
            }
        }
        let c = &self.cyber_costs;
        let all_costs = [c.node_default, c.link_default, c.replacement_default]
            .into_iter()
            .chain(c.node.values().copied())
            .chain(c.link.values().copied())
            .chain(c.replacement.values().copied());
        for v in all_costs {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("cyber costs must be non-negative, got {v}"));
            }
        }
        if let Some(links) = &self.candidate_links {
            if let Some((a, b)) = links.iter().find(|(a, b)| a == b) {
                return invalid(format!("candidate link {a}-{b} is a self-loop"));
            }
        }
        if let Some(att) = &self.attack {
            if att.attack_period >= self.horizon {
                return invalid(format!(
                    "attack period {} outside horizon 0..{}",
                    att.attack_period, self.horizon
                ));
            }
            if !self.critical_nodes.contains(&att.compromised_cyber_node) {
                return invalid(format!(
                    "compromised node {} is not a critical node",
                    att.compromised_cyber_node
                ));
            }
            if att.compromised_cyber_node == self.root_node {
                return invalid("the root node cannot be the compromised node".into());
            }
            if let Some(c) = &att.candidates {
                if c.is_empty() || c.contains(&att.compromised_cyber_node) {
                    return invalid(
                        "candidates must be non-empty and exclude the compromised node".into(),
                    );
                }
            }
        }
        Ok(())
    }

    /// Copy of the scenario with the attack removed.
    pub fn without_attack(&self) -> Scenario {
        Scenario {
            attack: None,
            ..self.clone()
        }
    }
}
