//! Battery state-of-charge dynamics, action feasibility, wear cost, and net
//! power for a single prosumer.
//!
//! Sign convention throughout: positive battery power discharges (injects
//! toward the home/grid), negative charges. State of charge moves opposite
//! to power, scaled by a direction-dependent efficiency so that a full
//! charge/discharge cycle returns exactly the round-trip efficiency.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack for feasibility checks and state-of-charge clamping.
pub const SOC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProsumerError {
    #[error("invalid battery spec: {0}")]
    InvalidSpec(String),
    #[error("battery power {b_kw} kW outside feasible range [{lo}, {hi}] kW")]
    Infeasible { b_kw: f64, lo: f64, hi: f64 },
}

/// Battery parameters. `price_per_kwh`, `life_cycles`, and
/// `depth_of_discharge` only enter through the wear cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// Usable energy capacity (kWh).
    pub capacity_kwh: f64,
    /// Fraction in [0, 1]; state of charge may not fall below this.
    pub soc_min: f64,
    /// Fraction in [0, 1]; state of charge may not rise above this.
    pub soc_max: f64,
    /// Inverter charging limit (kW, negative).
    pub b_min_kw: f64,
    /// Inverter discharging limit (kW, positive).
    pub b_max_kw: f64,
    /// Round-trip efficiency in (0, 1].
    pub round_trip_efficiency: f64,
    /// Battery price per kWh of capacity (GBP/kWh).
    pub price_per_kwh: f64,
    /// Rated charge/discharge cycles at the given depth of discharge.
    pub life_cycles: f64,
    /// Depth of discharge the cycle rating refers to, in (0, 1].
    pub depth_of_discharge: f64,
}

impl BatterySpec {
    /// 13.5 kWh residential battery (Tesla Powerwall datasheet values) with
    /// a +-5 kW inverter.
    pub fn powerwall() -> Self {
        Self {
            capacity_kwh: 13.5,
            soc_min: 0.0,
            soc_max: 1.0,
            b_min_kw: -5.0,
            b_max_kw: 5.0,
            round_trip_efficiency: 0.925,
            price_per_kwh: 314.64,
            life_cycles: 5000.0,
            depth_of_discharge: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ProsumerError> {
        let err = |msg: String| Err(ProsumerError::InvalidSpec(msg));
        if !(self.capacity_kwh > 0.0) {
            return err(format!("capacity_kwh must be > 0, got {}", self.capacity_kwh));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return err(format!(
                "need 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                self.soc_min, self.soc_max
            ));
        }
        if !(self.b_min_kw < 0.0 && 0.0 < self.b_max_kw) {
            return err(format!(
                "inverter limits must straddle zero, got [{}, {}]",
                self.b_min_kw, self.b_max_kw
            ));
        }
        if !(self.round_trip_efficiency > 0.0 && self.round_trip_efficiency <= 1.0) {
            return err(format!(
                "round_trip_efficiency must be in (0, 1], got {}",
                self.round_trip_efficiency
            ));
        }
        if !(self.life_cycles > 0.0) {
            return err(format!("life_cycles must be > 0, got {}", self.life_cycles));
        }
        if !(self.depth_of_discharge > 0.0 && self.depth_of_discharge <= 1.0) {
            return err(format!(
                "depth_of_discharge must be in (0, 1], got {}",
                self.depth_of_discharge
            ));
        }
        if !(self.price_per_kwh >= 0.0) {
            return err(format!("price_per_kwh must be >= 0, got {}", self.price_per_kwh));
        }
        Ok(())
    }
}

/// Battery state: state of charge as a fraction of capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
}

/// One prosumer: a battery, a PV installation, and a connection point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsumerSpec {
    pub id: String,
    pub battery: BatterySpec,
    /// Installed PV capacity (kW); scales normalized synthetic solar shapes.
    pub pv_capacity_kw: f64,
    /// Network bus this prosumer is connected to (non-substation).
    pub bus_id: usize,
}

/// Direction-dependent efficiency factor applied to the state-of-charge
/// update: sqrt of the round-trip efficiency when charging (b < 0), its
/// reciprocal when discharging. Splitting the round trip symmetrically makes
/// the state of charge rise slower than energy drawn and fall faster than
/// energy delivered.
pub fn efficiency_for(b_kw: f64, spec: &BatterySpec) -> f64 {
    let sqrt_mu = spec.round_trip_efficiency.sqrt();
    if b_kw < 0.0 {
        sqrt_mu
    } else {
        1.0 / sqrt_mu
    }
}

/// Power range (lo, hi) in kW that keeps the state of charge inside
/// [soc_min, soc_max] over one slot and respects the inverter limits.
/// lo <= 0 <= hi whenever the state is within its limits.
pub fn feasible_action_bounds(
    state: &BatteryState,
    spec: &BatterySpec,
    dt_hours: f64,
) -> (f64, f64) {
    let sqrt_mu = spec.round_trip_efficiency.sqrt();
    let eta_dis = 1.0 / sqrt_mu;
    let eta_chg = sqrt_mu;
    let hi = spec
        .b_max_kw
        .min(spec.capacity_kwh * (state.soc - spec.soc_min) / (eta_dis * dt_hours));
    let lo = spec
        .b_min_kw
        .max(spec.capacity_kwh * (state.soc - spec.soc_max) / (eta_chg * dt_hours));
    (lo, hi)
}

/// Advance the state of charge one slot under battery power `b_kw`.
/// Rejects powers outside [`feasible_action_bounds`]; the resulting state is
/// clamped into [soc_min, soc_max] against floating-point drift.
pub fn step_soc(
    state: &BatteryState,
    b_kw: f64,
    spec: &BatterySpec,
    dt_hours: f64,
) -> Result<BatteryState, ProsumerError> {
    let (lo, hi) = feasible_action_bounds(state, spec, dt_hours);
    if b_kw < lo - SOC_TOLERANCE || b_kw > hi + SOC_TOLERANCE {
        return Err(ProsumerError::Infeasible { b_kw, lo, hi });
    }
    let eta = efficiency_for(b_kw, spec);
    let soc = state.soc - eta * b_kw * dt_hours / spec.capacity_kwh;
    Ok(BatteryState { soc: soc.clamp(spec.soc_min, spec.soc_max) })
}

/// Empirical per-kWh wear cost of cycling the battery.
pub fn wear_cost_per_kwh(spec: &BatterySpec) -> f64 {
    spec.price_per_kwh
        / (spec.life_cycles
            * 2.0
            * spec.depth_of_discharge
            * spec.capacity_kwh
            * spec.round_trip_efficiency.powi(2))
}

/// Net power drawn from the community: demand minus generation and battery
/// output. Non-negative means the prosumer buys this slot, negative sells.
pub fn net_power(demand_kw: f64, generation_kw: f64, battery_kw: f64) -> f64 {
    demand_kw - (generation_kw + battery_kw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DT: f64 = 0.5;

    fn lossless() -> BatterySpec {
        BatterySpec { round_trip_efficiency: 1.0, ..BatterySpec::powerwall() }
    }

    #[test]
    fn efficiency_is_unity_for_lossless_battery() {
        let spec = lossless();
        assert_eq!(efficiency_for(-1.0, &spec), 1.0);
        assert_eq!(efficiency_for(1.0, &spec), 1.0);
    }

    #[test]
    fn efficiency_splits_round_trip_symmetrically() {
        let spec = BatterySpec::powerwall();
        assert_abs_diff_eq!(efficiency_for(-2.0, &spec), 0.961769, epsilon = 1e-6);
        assert_abs_diff_eq!(efficiency_for(2.0, &spec), 1.039750, epsilon = 1e-6);
        assert_eq!(efficiency_for(-2.0, &spec), 0.925f64.sqrt());
        assert_eq!(efficiency_for(2.0, &spec), 1.0 / 0.925f64.sqrt());
    }

    #[test]
    fn bounds_cap_at_inverter_limit() {
        let spec = BatterySpec::powerwall();
        let (lo, hi) = feasible_action_bounds(&BatteryState { soc: 0.5 }, &spec, DT);
        // Energy-side discharge limit is 6.75 / (1.03975 * 0.5) = 12.984 kW,
        // so the 5 kW inverter binds.
        assert_eq!(hi, 5.0);
        assert_eq!(lo, -5.0);
        let energy_side = 13.5 * 0.5 / ((1.0 / 0.925f64.sqrt()) * DT);
        assert_abs_diff_eq!(energy_side, 12.984, epsilon = 1e-3);
    }

    #[test]
    fn empty_battery_cannot_discharge() {
        let spec = BatterySpec::powerwall();
        let (_, hi) = feasible_action_bounds(&BatteryState { soc: spec.soc_min }, &spec, DT);
        assert_eq!(hi, 0.0);
    }

    #[test]
    fn full_battery_cannot_charge() {
        let spec = BatterySpec::powerwall();
        let (lo, _) = feasible_action_bounds(&BatteryState { soc: spec.soc_max }, &spec, DT);
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn charging_raises_soc_by_derated_energy() {
        let spec = BatterySpec::powerwall();
        let next = step_soc(&BatteryState { soc: 0.5 }, -2.0, &spec, DT).unwrap();
        // 0.5 + sqrt(0.925) * 2 * 0.5 / 13.5
        assert_abs_diff_eq!(next.soc, 0.571242, epsilon = 1e-6);
        assert_abs_diff_eq!(next.soc, 0.5 + 0.925f64.sqrt() * 2.0 * 0.5 / 13.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_power_is_identity() {
        let spec = BatterySpec::powerwall();
        let next = step_soc(&BatteryState { soc: 0.42 }, 0.0, &spec, DT).unwrap();
        assert_eq!(next.soc, 0.42);
    }

    #[test]
    fn infeasible_power_is_rejected() {
        let spec = BatterySpec::powerwall();
        let state = BatteryState { soc: spec.soc_min };
        assert!(matches!(
            step_soc(&state, 1.0, &spec, DT),
            Err(ProsumerError::Infeasible { .. })
        ));
    }

    #[test]
    fn round_trip_delivers_round_trip_efficiency() {
        let spec = BatterySpec::powerwall();
        let mu = spec.round_trip_efficiency;
        let start = BatteryState { soc: 0.5 };
        let p = 2.0;
        let charged = step_soc(&start, -p, &spec, DT).unwrap();
        // Discharge power that returns exactly to the initial state over DT.
        let b_out = (charged.soc - start.soc) * spec.capacity_kwh * mu.sqrt() / DT;
        let back = step_soc(&charged, b_out, &spec, DT).unwrap();
        assert_abs_diff_eq!(back.soc, start.soc, epsilon = 1e-12);
        let delivered = b_out * DT;
        assert_abs_diff_eq!(delivered, mu * p * DT, epsilon = 1e-9);
    }

    #[test]
    fn wear_cost_matches_datasheet_battery() {
        let spec = BatterySpec::powerwall();
        let wear = wear_cost_per_kwh(&spec);
        assert_abs_diff_eq!(wear, 0.0027239, epsilon = 1e-6);
        assert_abs_diff_eq!(
            wear,
            314.64 / (5000.0 * 2.0 * 1.0 * 13.5 * 0.925 * 0.925),
            epsilon = 1e-15
        );
    }

    #[test]
    fn wear_cost_unit_denominator() {
        let spec = BatterySpec {
            capacity_kwh: 1.0,
            round_trip_efficiency: 1.0,
            price_per_kwh: 2.0,
            life_cycles: 1.0,
            depth_of_discharge: 1.0,
            ..BatterySpec::powerwall()
        };
        assert_eq!(wear_cost_per_kwh(&spec), 1.0);
    }

    #[test]
    fn wear_cost_halves_when_cycle_life_doubles() {
        let base = BatterySpec::powerwall();
        let doubled = BatterySpec { life_cycles: base.life_cycles * 2.0, ..base.clone() };
        assert_abs_diff_eq!(
            wear_cost_per_kwh(&doubled),
            wear_cost_per_kwh(&base) / 2.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn net_power_buyer_seller_examples() {
        assert_abs_diff_eq!(net_power(1.2, 0.8, 0.1), 0.3, epsilon = 1e-12);
        assert_eq!(net_power(0.7, 0.7, 0.0), 0.0);
        assert_eq!(net_power(0.5, 1.0, 0.5), -1.0);
    }

    #[test]
    fn soc_stays_in_limits_under_random_clipped_actions() {
        let spec = BatterySpec { soc_min: 0.1, soc_max: 0.9, ..BatterySpec::powerwall() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = BatteryState { soc: 0.5 };
        for _ in 0..10_000 {
            let raw = rng.random_range(-8.0..8.0);
            let (lo, hi) = feasible_action_bounds(&state, &spec, DT);
            let b = raw.clamp(lo, hi);
            state = step_soc(&state, b, &spec, DT).unwrap();
            assert!(state.soc >= spec.soc_min - SOC_TOLERANCE);
            assert!(state.soc <= spec.soc_max + SOC_TOLERANCE);
        }
    }

    proptest::proptest! {
        #[test]
        fn bounds_are_monotone_in_soc(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let spec = BatterySpec::powerwall();
            let (lo_a, hi_a) = feasible_action_bounds(&BatteryState { soc: a.min(b) }, &spec, DT);
            let (lo_b, hi_b) = feasible_action_bounds(&BatteryState { soc: a.max(b) }, &spec, DT);
            proptest::prop_assert!(hi_b >= hi_a);
            proptest::prop_assert!(lo_b >= lo_a);
        }
    }
}
