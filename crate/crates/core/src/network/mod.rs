//! Radial distribution network model: topology, linearized branch-flow
//! solution, and per-bus tariffs from locational marginal prices.

mod dlmp;
mod flow;
pub mod lp;

pub use dlmp::{compute_dlmp, DlmpResult};
pub use flow::{solve_lindistflow, FlowSolution};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Supported network file schema version.
pub const NETWORK_SCHEMA: u32 = 1;

/// Default per-unit voltage band applied when a bus does not set one.
pub const DEFAULT_V_MIN: f64 = 0.95;
pub const DEFAULT_V_MAX: f64 = 1.05;

/// Default load power factor (generation and batteries run at unity).
pub const DEFAULT_LOAD_POWER_FACTOR: f64 = 0.95;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("network schema error: {0}")]
    Schema(String),
    #[error("network topology error: {0}")]
    Topology(String),
    #[error("bad snapshot: {0}")]
    Snapshot(String),
    #[error("power flow diverged: {0}")]
    Divergence(String),
    #[error("network constraints infeasible: {0}")]
    Infeasible(String),
    #[error("dual extraction failed: {0}")]
    Solver(String),
}

/// One bus and, unless it is the substation, the line connecting it to its
/// parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: usize,
    /// Absent exactly for the substation (bus 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<usize>,
    /// Resistance of the line from the parent (ohm).
    #[serde(default)]
    pub r_ohm: f64,
    /// Reactance of the line from the parent (ohm).
    #[serde(default)]
    pub x_ohm: f64,
    /// Apparent-power rating of the line from the parent (kVA); absent means
    /// unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_kva: Option<f64>,
    #[serde(default = "default_v_min")]
    pub v_min: f64,
    #[serde(default = "default_v_max")]
    pub v_max: f64,
}

fn default_v_min() -> f64 {
    DEFAULT_V_MIN
}

fn default_v_max() -> f64 {
    DEFAULT_V_MAX
}

impl BusSpec {
    pub fn limit(&self) -> f64 {
        self.limit_kva.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    schema: u32,
    base_voltage_kv: f64,
    base_power_kva: f64,
    #[serde(default = "default_load_pf")]
    load_power_factor: f64,
    buses: Vec<BusSpec>,
}

fn default_load_pf() -> f64 {
    DEFAULT_LOAD_POWER_FACTOR
}

/// A validated radial network: a tree of buses rooted at the substation
/// (bus 0), with bus ids dense in 0..n.
#[derive(Debug, Clone)]
pub struct RadialNetwork {
    buses: Vec<BusSpec>,
    base_voltage_kv: f64,
    base_power_kva: f64,
    load_power_factor: f64,
    /// Bus ids with every parent before its children; starts at the root.
    topo_order: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl RadialNetwork {
    pub fn new(
        mut buses: Vec<BusSpec>,
        base_voltage_kv: f64,
        base_power_kva: f64,
        load_power_factor: f64,
    ) -> Result<Self, NetworkError> {
        if buses.is_empty() {
            return Err(NetworkError::Schema("network has no buses".into()));
        }
        if !(base_voltage_kv > 0.0) || !(base_power_kva > 0.0) {
            return Err(NetworkError::Schema("base voltage and power must be > 0".into()));
        }
        if !(load_power_factor > 0.0 && load_power_factor <= 1.0) {
            return Err(NetworkError::Schema(format!(
                "load power factor must be in (0, 1], got {load_power_factor}"
            )));
        }
        buses.sort_by_key(|b| b.id);
        let n = buses.len();
        for (idx, bus) in buses.iter().enumerate() {
            if bus.id != idx {
                return Err(NetworkError::Schema(format!(
                    "bus ids must be dense 0..{n}, missing or duplicate id near {}",
                    bus.id
                )));
            }
        }

        let roots: Vec<usize> =
            buses.iter().filter(|b| b.parent_id.is_none()).map(|b| b.id).collect();
        if roots.len() != 1 {
            return Err(NetworkError::Topology(format!(
                "expected exactly one substation bus, found {} ({roots:?})",
                roots.len()
            )));
        }
        if roots[0] != 0 {
            return Err(NetworkError::Topology(format!(
                "substation must be bus 0, found {}",
                roots[0]
            )));
        }

        let mut children = vec![Vec::new(); n];
        for bus in &buses {
            if let Some(parent) = bus.parent_id {
                if parent >= n {
                    return Err(NetworkError::Topology(format!(
                        "bus {} references missing parent {parent}",
                        bus.id
                    )));
                }
                if parent == bus.id {
                    return Err(NetworkError::Topology(format!("bus {} is its own parent", bus.id)));
                }
                children[parent].push(bus.id);
            }
            if bus.id != 0 {
                if bus.r_ohm < 0.0 || bus.x_ohm < 0.0 {
                    return Err(NetworkError::Schema(format!(
                        "bus {}: line impedance must be >= 0",
                        bus.id
                    )));
                }
                if !(bus.limit() > 0.0) {
                    return Err(NetworkError::Schema(format!(
                        "bus {}: line limit must be > 0",
                        bus.id
                    )));
                }
                if !(bus.v_min > 0.0 && bus.v_min < bus.v_max) {
                    return Err(NetworkError::Schema(format!(
                        "bus {}: need 0 < v_min < v_max",
                        bus.id
                    )));
                }
            }
        }

        // Rooted traversal: reaching every bus exactly once rules out both
        // cycles and disconnected components.
        let mut topo_order = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        let mut seen = vec![false; n];
        while let Some(b) = stack.pop() {
            if seen[b] {
                return Err(NetworkError::Topology(format!("cycle detected through bus {b}")));
            }
            seen[b] = true;
            topo_order.push(b);
            for &c in &children[b] {
                stack.push(c);
            }
        }
        if topo_order.len() != n {
            let orphan = seen.iter().position(|s| !s).unwrap();
            return Err(NetworkError::Topology(format!(
                "bus {orphan} is not connected to the substation (cycle or orphan branch)"
            )));
        }

        Ok(Self {
            buses,
            base_voltage_kv,
            base_power_kva,
            load_power_factor,
            topo_order,
            children,
        })
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    /// Number of lines; one per non-substation bus.
    pub fn num_lines(&self) -> usize {
        self.buses.len() - 1
    }

    pub fn bus(&self, id: usize) -> &BusSpec {
        &self.buses[id]
    }

    pub fn buses(&self) -> &[BusSpec] {
        &self.buses
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.buses[id].parent_id
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Bus ids in parent-before-child order, starting at the substation.
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn base_power_kva(&self) -> f64 {
        self.base_power_kva
    }

    pub fn base_voltage_kv(&self) -> f64 {
        self.base_voltage_kv
    }

    pub fn load_power_factor(&self) -> f64 {
        self.load_power_factor
    }

    /// Base impedance in ohm: V^2 / S.
    pub fn base_impedance_ohm(&self) -> f64 {
        1000.0 * self.base_voltage_kv * self.base_voltage_kv / self.base_power_kva
    }

    /// Reactive/active ratio applied to consuming buses.
    pub fn load_tan_phi(&self) -> f64 {
        let pf = self.load_power_factor;
        (1.0 - pf * pf).sqrt() / pf
    }

    /// Line ids (= child bus ids) on the path root -> `bus`, root end first.
    pub fn path_from_root(&self, bus: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut b = bus;
        while let Some(p) = self.parent(b) {
            path.push(b);
            b = p;
        }
        path.reverse();
        path
    }

    pub fn is_valid_prosumer_bus(&self, id: usize) -> bool {
        id != 0 && id < self.buses.len()
    }

    pub fn to_file_model(&self) -> impl Serialize {
        NetworkFile {
            schema: NETWORK_SCHEMA,
            base_voltage_kv: self.base_voltage_kv,
            base_power_kva: self.base_power_kva,
            load_power_factor: self.load_power_factor,
            buses: self.buses.clone(),
        }
    }
}

/// Per-slot network input: net active injection per bus (kW, negative for
/// consumption; substation entry ignored) and the wholesale price used as
/// the substation's marginal energy cost.
#[derive(Debug, Clone, PartialEq)]
pub struct NetSnapshot {
    pub injections_kw: Vec<f64>,
    pub wholesale_price: f64,
}

impl NetSnapshot {
    pub fn validate(&self, net: &RadialNetwork) -> Result<(), NetworkError> {
        if self.injections_kw.len() != net.num_buses() {
            return Err(NetworkError::Snapshot(format!(
                "expected {} injections, got {}",
                net.num_buses(),
                self.injections_kw.len()
            )));
        }
        if let Some(v) = self.injections_kw.iter().find(|v| !v.is_finite()) {
            return Err(NetworkError::Snapshot(format!("non-finite injection {v}")));
        }
        if !self.wholesale_price.is_finite() {
            return Err(NetworkError::Snapshot("non-finite wholesale price".into()));
        }
        Ok(())
    }
}

/// Parse and validate a radial network JSON file.
pub fn parse_network(path: impl AsRef<Path>) -> Result<RadialNetwork, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_network_str(&text)
}

/// Parse a radial network from JSON text.
pub fn parse_network_str(text: &str) -> Result<RadialNetwork, NetworkError> {
    let file: NetworkFile =
        serde_json::from_str(text).map_err(|e| NetworkError::Schema(e.to_string()))?;
    if file.schema != NETWORK_SCHEMA {
        return Err(NetworkError::Schema(format!(
            "unsupported schema version {}, expected {NETWORK_SCHEMA}",
            file.schema
        )));
    }
    RadialNetwork::new(
        file.buses,
        file.base_voltage_kv,
        file.base_power_kva,
        file.load_power_factor,
    )
}
