//! Gas schedule and metering.
//!
//! Contract code charges one [`GasCharge`] per primitive storage or log
//! operation. The ledger charges [`GasCharge::TxBase`] once per transaction.
//! A failing call keeps whatever it charged before the failure; nothing
//! else is billed.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CodecError, Decoder, Encoder};

/// USD per gas unit, average market price observed on 2019-03-20.
/// Display only; nothing in the ledger depends on it.
pub const SNAPSHOT_USD_PER_GAS: f64 = 0.004e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GasCharge {
    TxBase,
    EventEmit,
    MapSearch,
    MapEntryCreate,
    MapEntryModify,
}

impl GasCharge {
    pub const ALL: [GasCharge; 5] = [
        GasCharge::TxBase,
        GasCharge::EventEmit,
        GasCharge::MapSearch,
        GasCharge::MapEntryCreate,
        GasCharge::MapEntryModify,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            GasCharge::TxBase => "tx_base",
            GasCharge::EventEmit => "event_emit",
            GasCharge::MapSearch => "map_search",
            GasCharge::MapEntryCreate => "map_entry_create",
            GasCharge::MapEntryModify => "map_entry_modify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GasConfigError {
    #[error("gas constant `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("reading gas schedule: {0}")]
    Io(String),
    #[error("parsing gas schedule: {0}")]
    Parse(String),
}

/// Gas units per primitive operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GasSchedule {
    pub tx_base: u64,
    pub event_emit: u64,
    pub map_search: u64,
    pub map_entry_create: u64,
    pub map_entry_modify: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            tx_base: 21_000,
            event_emit: 2_560,
            map_search: 1_033,
            map_entry_create: 45_938,
            map_entry_modify: 6_110,
        }
    }
}

impl GasSchedule {
    pub fn cost(&self, charge: GasCharge) -> u64 {
        match charge {
            GasCharge::TxBase => self.tx_base,
            GasCharge::EventEmit => self.event_emit,
            GasCharge::MapSearch => self.map_search,
            GasCharge::MapEntryCreate => self.map_entry_create,
            GasCharge::MapEntryModify => self.map_entry_modify,
        }
    }

    pub fn validate(&self) -> Result<(), GasConfigError> {
        for charge in GasCharge::ALL {
            if self.cost(charge) == 0 {
                return Err(GasConfigError::NonPositive(charge.label()));
            }
        }
        Ok(())
    }

    /// Parses a TOML override. Missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self, GasConfigError> {
        let schedule: GasSchedule =
            toml::from_str(text).map_err(|e| GasConfigError::Parse(e.to_string()))?;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn from_file(path: &Path) -> Result<Self, GasConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| GasConfigError::Io(e.to_string()))?;
        Self::from_toml(&text)
    }
}

impl Canonical for GasSchedule {
    fn encode(&self, enc: &mut Encoder) {
        for charge in GasCharge::ALL {
            enc.u64(self.cost(charge));
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            tx_base: dec.u64()?,
            event_emit: dec.u64()?,
            map_search: dec.u64()?,
            map_entry_create: dec.u64()?,
            map_entry_modify: dec.u64()?,
        })
    }
}

/// How many times each primitive was charged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct GasBreakdown {
    counts: [u32; 5],
}

impl GasBreakdown {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, charge: GasCharge, times: u32) -> Self {
        self.add(charge, times);
        self
    }

    pub fn add(&mut self, charge: GasCharge, times: u32) {
        self.counts[charge.index()] += times;
    }

    pub fn count(&self, charge: GasCharge) -> u32 {
        self.counts[charge.index()]
    }

    pub fn total(&self, schedule: &GasSchedule) -> u64 {
        GasCharge::ALL
            .iter()
            .map(|&c| u64::from(self.count(c)) * schedule.cost(c))
            .sum()
    }

    pub fn merge(&mut self, other: &GasBreakdown) {
        for c in GasCharge::ALL {
            self.add(c, other.count(c));
        }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&n| n == 0)
    }
}

impl fmt::Display for GasBreakdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in GasCharge::ALL {
            let n = self.count(c);
            if n == 0 {
                continue;
            }
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            if n == 1 {
                f.write_str(c.label())?;
            } else {
                write!(f, "{n}x{}", c.label())?;
            }
        }
        if first {
            f.write_str("-")?;
        }
        Ok(())
    }
}

impl Canonical for GasBreakdown {
    fn encode(&self, enc: &mut Encoder) {
        for n in self.counts {
            enc.u32(n);
        }
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let mut counts = [0u32; 5];
        for n in &mut counts {
            *n = dec.u32()?;
        }
        Ok(Self { counts })
    }
}

/// Accumulates charges against a schedule.
#[derive(Debug, Clone)]
pub struct GasMeter<'a> {
    schedule: &'a GasSchedule,
    breakdown: GasBreakdown,
}

impl<'a> GasMeter<'a> {
    pub fn new(schedule: &'a GasSchedule) -> Self {
        Self {
            schedule,
            breakdown: GasBreakdown::new(),
        }
    }

    pub fn charge(&mut self, charge: GasCharge) {
        self.breakdown.add(charge, 1);
    }

    pub fn used(&self) -> u64 {
        self.breakdown.total(self.schedule)
    }

    pub fn breakdown(&self) -> GasBreakdown {
        self.breakdown
    }

    pub fn schedule(&self) -> &GasSchedule {
        self.schedule
    }
}

/// Converts gas to currency at `price_per_gas`.
pub fn gas_to_currency(gas: u64, price_per_gas: f64) -> f64 {
    gas as f64 * price_per_gas
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_constants() {
        let s = GasSchedule::default();
        assert_eq!(s.event_emit, 2560);
        assert_eq!(s.map_search, 1033);
        assert_eq!(s.map_entry_create, 45938);
        assert_eq!(s.map_entry_modify, 6110);
        assert_eq!(s.tx_base, 21000);
        s.validate().unwrap();
    }

    #[test]
    fn zero_constant_rejected() {
        let s = GasSchedule {
            map_search: 0,
            ..GasSchedule::default()
        };
        assert_eq!(s.validate(), Err(GasConfigError::NonPositive("map_search")));
    }

    #[test]
    fn toml_override_keeps_unspecified_defaults() {
        let s = GasSchedule::from_toml("tx_base = 1000\nevent_emit = 7\n").unwrap();
        assert_eq!(s.tx_base, 1000);
        assert_eq!(s.event_emit, 7);
        assert_eq!(s.map_entry_create, 45938);
        assert!(GasSchedule::from_toml("tx_base = 0").is_err());
        assert!(GasSchedule::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn meter_totals_charges() {
        let schedule = GasSchedule::default();
        let mut meter = GasMeter::new(&schedule);
        meter.charge(GasCharge::TxBase);
        meter.charge(GasCharge::MapSearch);
        meter.charge(GasCharge::EventEmit);
        assert_eq!(meter.used(), 24_593);
        assert_eq!(
            meter.breakdown().to_string(),
            "tx_base + event_emit + map_search"
        );
    }

    #[test]
    fn currency_conversion_uses_snapshot_price() {
        let usd = gas_to_currency(24_593, SNAPSHOT_USD_PER_GAS);
        assert!((usd - 0.0098372).abs() < 1e-9);
    }
}
