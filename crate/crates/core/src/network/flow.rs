//! Linearized branch-flow (LinDistFlow) solution for radial feeders.
//!
//! Pass 0 accumulates lossless downstream flows and squared-voltage drops.
//! Losses are then evaluated at that operating point, and a single
//! fixed-point refinement folds them back into the flows and voltages.
//! By construction the substation import equals total withdrawal plus total
//! loss, so power balance closes exactly.

use super::{NetSnapshot, NetworkError, RadialNetwork};

/// Squared-voltage floor (0.5 pu) below which the linearization is treated
/// as diverged.
const W_FLOOR: f64 = 0.25;

/// Branch-flow solution. Line quantities are indexed by the line's child
/// bus id; the substation entry is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    /// Refined active flow out of each line's sending end (kW).
    pub line_flow_kw: Vec<f64>,
    /// Refined reactive flow (kvar).
    pub line_flow_kvar: Vec<f64>,
    /// Active loss per line (kW).
    pub line_loss_kw: Vec<f64>,
    /// Voltage magnitude per bus (per-unit; substation pinned to 1).
    pub voltage_pu: Vec<f64>,
    pub total_loss_kw: f64,
    /// Substation import (kW): total withdrawal plus total loss.
    pub import_kw: f64,
}

/// Operating-point quantities shared between the flow solution and the
/// tariff sensitivity computation.
#[derive(Debug, Clone)]
pub(crate) struct OperatingPoint {
    /// Active withdrawal per bus (kW; substation entry 0).
    pub withdrawals_kw: Vec<f64>,
    /// d(reactive withdrawal)/d(active withdrawal) per bus: the load
    /// tan(phi) for consuming buses, zero for net producers (unity-pf
    /// generation and batteries).
    pub kappa: Vec<f64>,
    /// Lossless active flow per line (per-unit).
    pub p0_pu: Vec<f64>,
    /// Lossless reactive flow per line (per-unit).
    pub q0_pu: Vec<f64>,
    /// Lossless squared voltage per bus (per-unit).
    pub w0: Vec<f64>,
    /// Current-squared proxy per line: (P^2 + Q^2) / w at the sending bus.
    pub ell: Vec<f64>,
    /// Active loss per line (kW).
    pub loss_p_kw: Vec<f64>,
    /// Reactive loss per line (kvar).
    pub loss_q_kw: Vec<f64>,
    /// Line resistance / reactance in per-unit, indexed by child bus.
    pub r_pu: Vec<f64>,
    pub x_pu: Vec<f64>,
}

pub(crate) fn operating_point(
    net: &RadialNetwork,
    snapshot: &NetSnapshot,
) -> Result<OperatingPoint, NetworkError> {
    snapshot.validate(net)?;
    let n = net.num_buses();
    let s_base = net.base_power_kva();
    let z_base = net.base_impedance_ohm();
    let tan_phi = net.load_tan_phi();

    let mut withdrawals_kw = vec![0.0; n];
    let mut kappa = vec![0.0; n];
    for id in 1..n {
        let wd = -snapshot.injections_kw[id];
        withdrawals_kw[id] = wd;
        kappa[id] = if wd > 0.0 { tan_phi } else { 0.0 };
    }

    let mut r_pu = vec![0.0; n];
    let mut x_pu = vec![0.0; n];
    for id in 1..n {
        r_pu[id] = net.bus(id).r_ohm / z_base;
        x_pu[id] = net.bus(id).x_ohm / z_base;
    }

    // Downstream-accumulated lossless flows (per-unit).
    let mut p0_pu = vec![0.0; n];
    let mut q0_pu = vec![0.0; n];
    for &id in net.topo_order().iter().rev() {
        if id == 0 {
            continue;
        }
        let mut p = withdrawals_kw[id] / s_base;
        let mut q = kappa[id] * withdrawals_kw[id] / s_base;
        for &c in net.children(id) {
            p += p0_pu[c];
            q += q0_pu[c];
        }
        p0_pu[id] = p;
        q0_pu[id] = q;
    }

    // Lossless squared-voltage profile.
    let mut w0 = vec![1.0; n];
    for &id in net.topo_order() {
        if id == 0 {
            continue;
        }
        let parent = net.parent(id).unwrap();
        w0[id] = w0[parent] - 2.0 * (r_pu[id] * p0_pu[id] + x_pu[id] * q0_pu[id]);
        if w0[id] < W_FLOOR {
            return Err(NetworkError::Divergence(format!(
                "squared voltage {} pu at bus {id} below floor",
                w0[id]
            )));
        }
    }

    // Losses at the lossless operating point, using the sending-end voltage.
    let mut ell = vec![0.0; n];
    let mut loss_p_kw = vec![0.0; n];
    let mut loss_q_kw = vec![0.0; n];
    for id in 1..n {
        let parent = net.parent(id).unwrap();
        ell[id] = (p0_pu[id] * p0_pu[id] + q0_pu[id] * q0_pu[id]) / w0[parent];
        loss_p_kw[id] = r_pu[id] * ell[id] * s_base;
        loss_q_kw[id] = x_pu[id] * ell[id] * s_base;
    }

    Ok(OperatingPoint {
        withdrawals_kw,
        kappa,
        p0_pu,
        q0_pu,
        w0,
        ell,
        loss_p_kw,
        loss_q_kw,
        r_pu,
        x_pu,
    })
}

/// Inclusive downstream loss sums: for each line, the loss on that line plus
/// every line strictly below it.
pub(crate) fn downstream_loss_sums(net: &RadialNetwork, per_line: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; net.num_buses()];
    for &id in net.topo_order().iter().rev() {
        if id == 0 {
            continue;
        }
        let mut sum = per_line[id];
        for &c in net.children(id) {
            sum += acc[c];
        }
        acc[id] = sum;
    }
    acc
}

/// Solve the linearized branch flow with one loss refinement pass.
pub fn solve_lindistflow(
    net: &RadialNetwork,
    snapshot: &NetSnapshot,
) -> Result<FlowSolution, NetworkError> {
    let op = operating_point(net, snapshot)?;
    Ok(refine(net, &op)?.0)
}

/// Refinement shared with the tariff computation; returns the solution and
/// the refined squared voltages.
pub(crate) fn refine(
    net: &RadialNetwork,
    op: &OperatingPoint,
) -> Result<(FlowSolution, Vec<f64>), NetworkError> {
    let n = net.num_buses();
    let s_base = net.base_power_kva();

    let loss_p_below = downstream_loss_sums(net, &op.loss_p_kw);
    let loss_q_below = downstream_loss_sums(net, &op.loss_q_kw);

    let mut line_flow_kw = vec![0.0; n];
    let mut line_flow_kvar = vec![0.0; n];
    for id in 1..n {
        line_flow_kw[id] = op.p0_pu[id] * s_base + loss_p_below[id];
        line_flow_kvar[id] = op.q0_pu[id] * s_base + loss_q_below[id];
    }

    let mut w1 = vec![1.0; n];
    for &id in net.topo_order() {
        if id == 0 {
            continue;
        }
        let parent = net.parent(id).unwrap();
        w1[id] = w1[parent]
            - 2.0 * (op.r_pu[id] * line_flow_kw[id] + op.x_pu[id] * line_flow_kvar[id]) / s_base;
        if w1[id] < W_FLOOR {
            return Err(NetworkError::Divergence(format!(
                "refined squared voltage {} pu at bus {id} below floor",
                w1[id]
            )));
        }
    }

    let total_loss_kw: f64 = op.loss_p_kw.iter().sum();
    let total_withdrawal: f64 = op.withdrawals_kw.iter().sum();
    let voltage_pu = w1.iter().map(|w| w.sqrt()).collect();

    Ok((
        FlowSolution {
            line_flow_kw,
            line_flow_kvar,
            line_loss_kw: op.loss_p_kw.clone(),
            voltage_pu,
            total_loss_kw,
            import_kw: total_withdrawal + total_loss_kw,
        },
        w1,
    ))
}
