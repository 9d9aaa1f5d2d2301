//! Supply-to-demand-ratio market pricing.
//!
//! Each slot the platform computes one community-wide supply-to-demand
//! ratio and clears at a single pair of buying/selling prices bounded by
//! the energy service provider's import and export prices. A compensation
//! price keeps a buy/sell spread alive in oversupply so sellers still gain
//! from trading locally.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper clamp for the supply-to-demand ratio; also the value used when
/// demand is zero but supply is positive.
pub const SDR_CAP: f64 = 100.0;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("invalid price bounds: {0}")]
    InvalidBounds(String),
}

/// Price bounds for one slot: ESP import/export prices and the compensation
/// price that preserves the spread in oversupply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBounds {
    /// ESP import price (GBP/kWh).
    pub esp_import: f64,
    /// ESP export price (GBP/kWh).
    pub esp_export: f64,
    /// Compensation price in [0, esp_import - esp_export].
    pub compensation: f64,
}

impl PriceBounds {
    pub fn new(esp_import: f64, esp_export: f64, compensation: f64) -> Result<Self, PricingError> {
        let bounds = Self { esp_import, esp_export, compensation };
        bounds.validate()?;
        Ok(bounds)
    }

    /// Compensation defaults to the midpoint of its admissible range.
    pub fn with_default_compensation(
        esp_import: f64,
        esp_export: f64,
    ) -> Result<Self, PricingError> {
        Self::new(esp_import, esp_export, (esp_import - esp_export) / 2.0)
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.esp_export >= 0.0 && self.esp_import >= self.esp_export) {
            return Err(PricingError::InvalidBounds(format!(
                "need import >= export >= 0, got import {} export {}",
                self.esp_import, self.esp_export
            )));
        }
        if !(self.compensation >= 0.0
            && self.compensation <= self.esp_import - self.esp_export + 1e-15)
        {
            return Err(PricingError::InvalidBounds(format!(
                "compensation {} outside [0, {}]",
                self.compensation,
                self.esp_import - self.esp_export
            )));
        }
        Ok(())
    }
}

/// Cleared prices for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotPrices {
    pub sdr: f64,
    /// Price buyers pay (GBP/kWh).
    pub buy: f64,
    /// Price sellers receive (GBP/kWh).
    pub sell: f64,
}

/// Community supply-to-demand ratio: total adjusted supply (generation plus
/// battery output) over total demand, clamped to [0, SDR_CAP]. Zero demand
/// resolves to the cap when supply is positive and to 1 otherwise.
pub fn compute_sdr(supplies_kw: &[f64], demands_kw: &[f64]) -> f64 {
    assert_eq!(supplies_kw.len(), demands_kw.len(), "per-prosumer lists must match");
    assert!(!supplies_kw.is_empty(), "need at least one prosumer");
    let supply: f64 = supplies_kw.iter().sum();
    let demand: f64 = demands_kw.iter().sum();
    if demand <= 0.0 {
        if supply > 0.0 {
            SDR_CAP
        } else {
            1.0
        }
    } else {
        (supply / demand).clamp(0.0, SDR_CAP)
    }
}

/// Buying and selling prices as a function of the supply-to-demand ratio.
/// Both price curves are continuous at SDR = 1 and non-increasing in SDR.
pub fn compute_prices(sdr: f64, bounds: &PriceBounds) -> SlotPrices {
    let lb = bounds.esp_import;
    let ls = bounds.esp_export;
    let comp = bounds.compensation;
    let (sell, buy) = if sdr <= 1.0 {
        let denom = (lb - ls - comp) * sdr + ls + comp;
        let sell = if denom > 0.0 { (ls + comp) * lb / denom } else { lb };
        let buy = sell * sdr + lb * (1.0 - sdr);
        (sell, buy)
    } else {
        (ls + comp / sdr, ls + comp)
    };
    SlotPrices { sdr, buy, sell }
}
