//! Distribution locational marginal prices and network tariffs.
//!
//! The substation's marginal cost of energy is the wholesale price. Every
//! other bus's marginal cost adds the marginal line losses its withdrawal
//! causes plus congestion and voltage components when those limits bind.
//! The tariff for a bus is its marginal price minus the substation's, so it
//! isolates exactly the network part of the cost.
//!
//! Prices are the duals of the per-bus withdrawal equalities in a linear
//! program that minimizes the wholesale cost of the substation import
//! subject to the linearized branch-flow equations (losses entering as
//! affine functions of the withdrawals, linearized at the operating point),
//! line ratings, and voltage bands.

use super::flow::{operating_point, refine, OperatingPoint};
use super::lp::{LinearProgram, LpError, Relation};
use super::{FlowSolution, NetSnapshot, NetworkError, RadialNetwork};

const LIMIT_TOL: f64 = 1e-9;

/// Marginal prices, tariffs, and the underlying flow solution for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct DlmpResult {
    /// Marginal price per bus (GBP/kWh); the substation entry is the
    /// wholesale price itself.
    pub dlmp: Vec<f64>,
    /// Network tariff per bus: dlmp minus the wholesale price. Exactly zero
    /// at the substation.
    pub dnt: Vec<f64>,
    /// Refined active flow per line (kW), indexed by the line's child bus.
    pub line_flow_kw: Vec<f64>,
    /// Refined reactive flow per line (kvar).
    pub line_flow_kvar: Vec<f64>,
    /// Voltage magnitude per bus (per-unit).
    pub voltage_pu: Vec<f64>,
    pub total_loss_kw: f64,
    pub import_kw: f64,
}

/// Per-withdrawal sensitivities of losses and refined flows, evaluated at
/// the operating point.
struct Sensitivities {
    /// d(total active loss, kW) / d(withdrawal at bus n, kW).
    total_loss: Vec<f64>,
    /// d(refined active flow on line l) / d(withdrawal at n): `flow[l][n]`.
    flow_p: Vec<Vec<f64>>,
    /// Reactive counterpart.
    flow_q: Vec<Vec<f64>>,
}

fn sensitivities(net: &RadialNetwork, op: &OperatingPoint) -> Sensitivities {
    let n = net.num_buses();
    let s = net.base_power_kva();

    // in_sub[l][k]: line l lies on the path from the root to bus k, i.e.
    // bus k belongs to the subtree fed by line l.
    let paths: Vec<Vec<usize>> = (0..n).map(|b| net.path_from_root(b)).collect();
    let mut in_sub = vec![vec![false; n]; n];
    for k in 1..n {
        for &l in &paths[k] {
            in_sub[l][k] = true;
        }
    }

    // d(loss on line m)/d(withdrawal at bus k), active and reactive.
    let mut dloss_p = vec![vec![0.0; n]; n];
    let mut dloss_q = vec![vec![0.0; n]; n];
    for m in 1..n {
        let send = net.parent(m).unwrap();
        let w_s = op.w0[send];
        for k in 1..n {
            let ind = if in_sub[m][k] { 1.0 } else { 0.0 };
            // Sending-end squared voltage responds to every line on the
            // root->send path that also carries bus k's withdrawal.
            let mut dw_s = 0.0;
            for &line in &paths[send] {
                if in_sub[line][k] {
                    dw_s += op.r_pu[line] + op.kappa[k] * op.x_pu[line];
                }
            }
            dw_s *= -2.0 / s;
            let dell = (2.0 * op.p0_pu[m] * ind / s + 2.0 * op.q0_pu[m] * op.kappa[k] * ind / s
                - op.ell[m] * dw_s)
                / w_s;
            dloss_p[m][k] = s * op.r_pu[m] * dell;
            dloss_q[m][k] = s * op.x_pu[m] * dell;
        }
    }

    let mut total_loss = vec![0.0; n];
    for k in 1..n {
        total_loss[k] = (1..n).map(|m| dloss_p[m][k]).sum();
    }

    // Refined flow on line l = lossless subtree withdrawal + losses on the
    // line and everything below it.
    let mut flow_p = vec![vec![0.0; n]; n];
    let mut flow_q = vec![vec![0.0; n]; n];
    for l in 1..n {
        for k in 1..n {
            let ind = if in_sub[l][k] { 1.0 } else { 0.0 };
            let mut dp = ind;
            let mut dq = op.kappa[k] * ind;
            for m in 1..n {
                if in_sub[l][m] {
                    dp += dloss_p[m][k];
                    dq += dloss_q[m][k];
                }
            }
            flow_p[l][k] = dp;
            flow_q[l][k] = dq;
        }
    }

    Sensitivities { total_loss, flow_p, flow_q }
}

/// Compute per-bus marginal prices and network tariffs for one snapshot.
pub fn compute_dlmp(net: &RadialNetwork, snapshot: &NetSnapshot) -> Result<DlmpResult, NetworkError> {
    let op = operating_point(net, snapshot)?;
    let (flow, w1) = refine(net, &op)?;
    check_limits(net, &flow)?;

    let n = net.num_buses();
    let lambda0 = snapshot.wholesale_price;
    let sens = sensitivities(net, &op);

    // Variables: withdrawals (one per non-root bus), import, per-line active
    // and reactive flows, per-bus squared voltage.
    let nb = n - 1;
    let var_wd = |bus: usize| bus - 1;
    let var_import = nb;
    let var_f = |bus: usize| nb + 1 + (bus - 1);
    let var_q = |bus: usize| nb + 1 + nb + (bus - 1);
    let var_u = |bus: usize| nb + 1 + 2 * nb + (bus - 1);
    let num_vars = 4 * nb + 1;

    let mut lp = LinearProgram::new(num_vars);
    let mut objective = vec![0.0; num_vars];
    objective[var_import] = lambda0;
    lp.set_objective(objective);

    // Withdrawal pins; their duals are the marginal prices.
    let mut wd_rows = vec![usize::MAX; n];
    for bus in 1..n {
        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_wd(bus)] = 1.0;
        wd_rows[bus] = lp.add_constraint(coeffs, Relation::Eq, op.withdrawals_kw[bus]);
    }

    // Import balance: import = sum of withdrawals + affine loss model.
    {
        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_import] = 1.0;
        let mut rhs = flow.total_loss_kw;
        for bus in 1..n {
            coeffs[var_wd(bus)] = -(1.0 + sens.total_loss[bus]);
            rhs -= sens.total_loss[bus] * op.withdrawals_kw[bus];
        }
        lp.add_constraint(coeffs, Relation::Eq, rhs);
    }

    // Flow definitions, active and reactive.
    for line in 1..n {
        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_f(line)] = 1.0;
        let mut rhs = flow.line_flow_kw[line];
        for bus in 1..n {
            coeffs[var_wd(bus)] = -sens.flow_p[line][bus];
            rhs -= sens.flow_p[line][bus] * op.withdrawals_kw[bus];
        }
        lp.add_constraint(coeffs, Relation::Eq, rhs);

        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_q(line)] = 1.0;
        let mut rhs = flow.line_flow_kvar[line];
        for bus in 1..n {
            coeffs[var_wd(bus)] = -sens.flow_q[line][bus];
            rhs -= sens.flow_q[line][bus] * op.withdrawals_kw[bus];
        }
        lp.add_constraint(coeffs, Relation::Eq, rhs);
    }

    // Squared-voltage definitions along each bus's root path.
    let s_base = net.base_power_kva();
    for bus in 1..n {
        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_u(bus)] = 1.0;
        for &line in &net.path_from_root(bus) {
            coeffs[var_f(line)] += 2.0 * op.r_pu[line] / s_base;
            coeffs[var_q(line)] += 2.0 * op.x_pu[line] / s_base;
        }
        lp.add_constraint(coeffs, Relation::Eq, 1.0);
    }

    // Line ratings and voltage bands.
    for line in 1..n {
        let limit = net.bus(line).limit();
        if limit.is_finite() {
            let mut coeffs = vec![0.0; num_vars];
            coeffs[var_f(line)] = 1.0;
            lp.add_constraint(coeffs.clone(), Relation::Le, limit);
            lp.add_constraint(coeffs, Relation::Ge, -limit);
        }
    }
    for bus in 1..n {
        let spec = net.bus(bus);
        let mut coeffs = vec![0.0; num_vars];
        coeffs[var_u(bus)] = 1.0;
        lp.add_constraint(coeffs.clone(), Relation::Le, spec.v_max * spec.v_max);
        lp.add_constraint(coeffs, Relation::Ge, spec.v_min * spec.v_min);
    }

    let solution = lp.solve().map_err(|e| match e {
        LpError::Infeasible => NetworkError::Infeasible(
            "no import level satisfies the line and voltage limits".into(),
        ),
        other => NetworkError::Solver(other.to_string()),
    })?;

    let mut dlmp = vec![lambda0; n];
    let mut dnt = vec![0.0; n];
    for bus in 1..n {
        dlmp[bus] = solution.duals[wd_rows[bus]];
        dnt[bus] = dlmp[bus] - lambda0;
    }

    debug_assert!(w1.iter().all(|w| *w > 0.0));

    Ok(DlmpResult {
        dlmp,
        dnt,
        line_flow_kw: flow.line_flow_kw,
        line_flow_kvar: flow.line_flow_kvar,
        voltage_pu: flow.voltage_pu,
        total_loss_kw: flow.total_loss_kw,
        import_kw: flow.import_kw,
    })
}

fn check_limits(net: &RadialNetwork, flow: &FlowSolution) -> Result<(), NetworkError> {
    for line in 1..net.num_buses() {
        let limit = net.bus(line).limit();
        if flow.line_flow_kw[line].abs() > limit + LIMIT_TOL {
            return Err(NetworkError::Infeasible(format!(
                "line to bus {line} carries {:.6} kW, rating {limit} kVA",
                flow.line_flow_kw[line]
            )));
        }
    }
    for bus in 1..net.num_buses() {
        let spec = net.bus(bus);
        let v = flow.voltage_pu[bus];
        if v < spec.v_min - LIMIT_TOL || v > spec.v_max + LIMIT_TOL {
            return Err(NetworkError::Infeasible(format!(
                "bus {bus} voltage {v:.6} pu outside [{}, {}]",
                spec.v_min, spec.v_max
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{parse_network_str, solve_lindistflow};
    use approx::assert_abs_diff_eq;

    fn lossy_chain3() -> RadialNetwork {
        parse_network_str(
            r#"{
                "schema": 1,
                "base_voltage_kv": 0.4,
                "base_power_kva": 100.0,
                "buses": [
                    {"id": 0},
                    {"id": 1, "parent_id": 0, "r_ohm": 0.15, "x_ohm": 0.06, "v_min": 0.8, "v_max": 1.2},
                    {"id": 2, "parent_id": 1, "r_ohm": 0.12, "x_ohm": 0.05, "v_min": 0.8, "v_max": 1.2}
                ]
            }"#,
        )
        .unwrap()
    }

    /// Central finite difference of (wholesale price x import) with respect
    /// to one bus's demand, through the full flow solution.
    fn fd_price(net: &RadialNetwork, snapshot: &NetSnapshot, bus: usize) -> f64 {
        let eps = 1e-4;
        let mut up = snapshot.clone();
        up.injections_kw[bus] -= eps;
        let mut down = snapshot.clone();
        down.injections_kw[bus] += eps;
        let high = solve_lindistflow(net, &up).unwrap().import_kw;
        let low = solve_lindistflow(net, &down).unwrap().import_kw;
        snapshot.wholesale_price * (high - low) / (2.0 * eps)
    }

    #[test]
    fn zero_impedance_network_has_zero_tariffs() {
        let net = parse_network_str(
            r#"{
                "schema": 1,
                "base_voltage_kv": 0.4,
                "base_power_kva": 100.0,
                "buses": [
                    {"id": 0},
                    {"id": 1, "parent_id": 0},
                    {"id": 2, "parent_id": 1}
                ]
            }"#,
        )
        .unwrap();
        let snap = NetSnapshot { injections_kw: vec![0.0, -2.0, 1.0], wholesale_price: 0.05 };
        let res = compute_dlmp(&net, &snap).unwrap();
        assert_eq!(res.dnt, vec![0.0; 3]);
        assert_eq!(res.total_loss_kw, 0.0);
        assert_eq!(res.dlmp, vec![0.05; 3]);
    }

    #[test]
    fn substation_tariff_is_always_zero() {
        let net = lossy_chain3();
        let snap = NetSnapshot { injections_kw: vec![0.0, -3.0, -2.0], wholesale_price: 0.06 };
        let res = compute_dlmp(&net, &snap).unwrap();
        assert_eq!(res.dnt[0], 0.0);
        assert_eq!(res.dlmp[0], 0.06);
    }

    #[test]
    fn consuming_buses_pay_positive_tariffs_matching_finite_differences() {
        let net = lossy_chain3();
        let snap = NetSnapshot { injections_kw: vec![0.0, -3.0, -2.0], wholesale_price: 0.05 };
        let res = compute_dlmp(&net, &snap).unwrap();
        for bus in 1..3 {
            assert!(res.dnt[bus] > 0.0, "bus {bus} tariff {}", res.dnt[bus]);
            let fd = fd_price(&net, &snap, bus);
            assert_abs_diff_eq!(res.dlmp[bus], fd, epsilon = 1e-6 * snap.wholesale_price);
        }
        // Deeper bus pays more.
        assert!(res.dnt[2] > res.dnt[1]);
    }

    #[test]
    fn exporting_leaf_gets_negative_tariff() {
        let net = lossy_chain3();
        // Leaf exports enough to reverse both lines.
        let snap = NetSnapshot { injections_kw: vec![0.0, -0.5, 4.0], wholesale_price: 0.05 };
        let res = compute_dlmp(&net, &snap).unwrap();
        assert!(res.line_flow_kw[1] < 0.0, "root line should reverse");
        assert!(res.dnt[2] < 0.0, "exporter tariff {}", res.dnt[2]);
        let fd = fd_price(&net, &snap, 2);
        assert_abs_diff_eq!(res.dlmp[2], fd, epsilon = 1e-6 * snap.wholesale_price);
    }

    #[test]
    fn violated_line_limit_reports_infeasibility() {
        let net = parse_network_str(
            r#"{
                "schema": 1,
                "base_voltage_kv": 0.4,
                "base_power_kva": 100.0,
                "buses": [
                    {"id": 0},
                    {"id": 1, "parent_id": 0, "r_ohm": 0.05, "x_ohm": 0.02, "limit_kva": 3.0, "v_min": 0.8, "v_max": 1.2}
                ]
            }"#,
        )
        .unwrap();
        let snap = NetSnapshot { injections_kw: vec![0.0, -5.0], wholesale_price: 0.05 };
        match compute_dlmp(&net, &snap) {
            Err(NetworkError::Infeasible(msg)) => assert!(msg.contains("bus 1")),
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn scaling_impedances_to_zero_kills_tariffs() {
        let base = lossy_chain3();
        let snap = NetSnapshot { injections_kw: vec![0.0, -3.0, -2.0], wholesale_price: 0.05 };
        let lossy = compute_dlmp(&base, &snap).unwrap();
        assert!(lossy.dnt[2] > 0.0);

        let mut buses = base.buses().to_vec();
        for b in &mut buses {
            b.r_ohm = 0.0;
            b.x_ohm = 0.0;
        }
        let flat = RadialNetwork::new(buses, 0.4, 100.0, 0.95).unwrap();
        let res = compute_dlmp(&flat, &snap).unwrap();
        assert_eq!(res.dnt, vec![0.0; 3]);
        assert_eq!(res.total_loss_kw, 0.0);
    }
}
