//! Unit conversion table for trait records.
//!
//! Every unit belongs to one dimension and carries a rational factor to that
//! dimension's base unit: `base = value * mul / div`. Keeping the factor as a
//! ratio makes the simple conversions exact (`2 years` is `2 * 12` months,
//! `10 days` is `10 / 30.44` months, `500 g` is `500 / 1000` kg).

use thiserror::Error;

/// Days per month used for every day/month conversion.
pub const DAYS_PER_MONTH: f64 = 30.44;
const SECONDS_PER_MONTH: f64 = DAYS_PER_MONTH * 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    /// months
    Time,
    /// kg
    Mass,
    /// kg carbon per month
    CarbonRate,
    /// kg carbon per square metre per month
    AreaCarbonRate,
    /// joules per month
    Power,
    /// joules per month per kg body mass
    SpecificPower,
    /// dimensionless count
    Count,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unsupported unit conversion from `{unit}` to `{target}`")]
pub struct UnsupportedUnit {
    pub unit: String,
    pub target: String,
}

struct UnitDef {
    names: &'static [&'static str],
    dimension: Dimension,
    mul: f64,
    div: f64,
}

const UNITS: &[UnitDef] = &[
    UnitDef { names: &["months", "month", "mo"], dimension: Dimension::Time, mul: 1.0, div: 1.0 },
    UnitDef { names: &["years", "year", "yr", "y", "a"], dimension: Dimension::Time, mul: 12.0, div: 1.0 },
    UnitDef { names: &["days", "day", "d"], dimension: Dimension::Time, mul: 1.0, div: DAYS_PER_MONTH },
    UnitDef { names: &["weeks", "week", "wk"], dimension: Dimension::Time, mul: 7.0, div: DAYS_PER_MONTH },
    UnitDef { names: &["kg"], dimension: Dimension::Mass, mul: 1.0, div: 1.0 },
    UnitDef { names: &["g"], dimension: Dimension::Mass, mul: 1.0, div: 1000.0 },
    UnitDef { names: &["mg"], dimension: Dimension::Mass, mul: 1.0, div: 1.0e6 },
    UnitDef { names: &["lb", "lbs"], dimension: Dimension::Mass, mul: 0.45359237, div: 1.0 },
    UnitDef { names: &["kg/month"], dimension: Dimension::CarbonRate, mul: 1.0, div: 1.0 },
    UnitDef { names: &["g/month"], dimension: Dimension::CarbonRate, mul: 1.0, div: 1000.0 },
    UnitDef { names: &["kg/year"], dimension: Dimension::CarbonRate, mul: 1.0, div: 12.0 },
    UnitDef { names: &["g/day"], dimension: Dimension::CarbonRate, mul: DAYS_PER_MONTH, div: 1000.0 },
    UnitDef { names: &["kg/m2/month", "kg/m^2/month"], dimension: Dimension::AreaCarbonRate, mul: 1.0, div: 1.0 },
    UnitDef { names: &["g/m2/day", "g/m^2/day"], dimension: Dimension::AreaCarbonRate, mul: DAYS_PER_MONTH, div: 1000.0 },
    UnitDef { names: &["g/m2/year", "g/m^2/year"], dimension: Dimension::AreaCarbonRate, mul: 1.0, div: 12_000.0 },
    UnitDef { names: &["J/month"], dimension: Dimension::Power, mul: 1.0, div: 1.0 },
    UnitDef { names: &["W"], dimension: Dimension::Power, mul: SECONDS_PER_MONTH, div: 1.0 },
    UnitDef { names: &["mW"], dimension: Dimension::Power, mul: SECONDS_PER_MONTH, div: 1000.0 },
    UnitDef { names: &["kJ/day"], dimension: Dimension::Power, mul: DAYS_PER_MONTH * 1000.0, div: 1.0 },
    UnitDef { names: &["J/month/kg"], dimension: Dimension::SpecificPower, mul: 1.0, div: 1.0 },
    UnitDef { names: &["W/kg", "mW/g"], dimension: Dimension::SpecificPower, mul: SECONDS_PER_MONTH, div: 1.0 },
    UnitDef { names: &["count", "individuals", "1", "", "per year", "/year"], dimension: Dimension::Count, mul: 1.0, div: 1.0 },
];

fn lookup(unit: &str) -> Option<&'static UnitDef> {
    let unit = unit.trim();
    UNITS
        .iter()
        .find(|u| u.names.contains(&unit))
        .or_else(|| {
            let lower = unit.to_lowercase();
            UNITS.iter().find(|u| u.names.contains(&lower.as_str()))
        })
}

pub fn dimension_of(unit: &str) -> Option<Dimension> {
    lookup(unit).map(|u| u.dimension)
}

pub fn is_known_unit(unit: &str) -> bool {
    lookup(unit).is_some()
}

/// Converts `value` from `unit` to `target`; both must be in the table and
/// share a dimension.
pub fn normalize_unit(value: f64, unit: &str, target: &str) -> Result<f64, UnsupportedUnit> {
    let err = || UnsupportedUnit {
        unit: unit.to_string(),
        target: target.to_string(),
    };
    let from = lookup(unit).ok_or_else(err)?;
    let to = lookup(target).ok_or_else(err)?;
    if from.dimension != to.dimension {
        return Err(err());
    }
    if std::ptr::eq(from, to) {
        return Ok(value);
    }
    let base = value * from.mul / from.div;
    Ok(base * to.div / to.mul)
}
