use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use super::QuantityError;

/// Exponents over the seven SI base dimensions, in the order
/// length, mass, time, current, temperature, amount, luminosity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dimension(pub [i8; 7]);

impl Dimension {
    pub const NONE: Dimension = Dimension([0; 7]);

    pub const fn new(
        length: i8,
        mass: i8,
        time: i8,
        current: i8,
        temperature: i8,
        amount: i8,
        luminosity: i8,
    ) -> Self {
        Dimension([length, mass, time, current, temperature, amount, luminosity])
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SYMBOLS: [&str; 7] = ["L", "M", "T", "I", "Θ", "N", "J"];
        let mut first = true;
        for (sym, exp) in SYMBOLS.iter().zip(self.0) {
            if exp == 0 {
                continue;
            }
            if !first {
                f.write_str("·")?;
            }
            first = false;
            if exp == 1 {
                write!(f, "{sym}")?;
            } else {
                write!(f, "{sym}^{exp}")?;
            }
        }
        if first {
            f.write_str("1")?;
        }
        Ok(())
    }
}

/// A registered unit: a dimension plus the factor that takes a value in
/// this unit to the SI-coherent unit of the same dimension.
#[derive(Debug, Clone, Copy)]
pub struct Unit {
    name: &'static str,
    dimension: Dimension,
    scale: f64,
}

impl Unit {
    /// Looks a unit up in the registry by symbol or alias.
    pub fn parse(name: &str) -> Result<Unit, QuantityError> {
        registry().lookup(name)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_convertible_to(&self, other: &Unit) -> bool {
        self.dimension == other.dimension
    }

    /// Multiplicative factor taking values in `self` to values in `target`.
    pub fn factor_to(&self, target: &Unit) -> Result<f64, QuantityError> {
        if !self.is_convertible_to(target) {
            return Err(QuantityError::DimensionMismatch {
                name: String::new(),
                from: self.name.to_string(),
                to: target.name.to_string(),
            });
        }
        Ok(self.scale / target.scale)
    }

    pub fn dimensionless() -> Unit {
        Unit::parse("1").expect("dimensionless unit is registered")
    }
}

impl PartialEq for Unit {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for Unit {}

impl std::hash::Hash for Unit {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name.hash(state);
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

pub struct UnitRegistry {
    units: BTreeMap<&'static str, Unit>,
    aliases: BTreeMap<&'static str, &'static str>,
}

const LENGTH: Dimension = Dimension::new(1, 0, 0, 0, 0, 0, 0);
const AREA: Dimension = Dimension::new(2, 0, 0, 0, 0, 0, 0);
const MASS: Dimension = Dimension::new(0, 1, 0, 0, 0, 0, 0);
const TIME: Dimension = Dimension::new(0, 0, 1, 0, 0, 0, 0);
const TEMPERATURE: Dimension = Dimension::new(0, 0, 0, 0, 1, 0, 0);
const AMOUNT: Dimension = Dimension::new(0, 0, 0, 0, 0, 1, 0);
const ENERGY: Dimension = Dimension::new(2, 1, -2, 0, 0, 0, 0);
// Per-mole energies keep the amount exponent so they never silently
// convert to per-particle energies.
const MOLAR_ENERGY: Dimension = Dimension::new(2, 1, -2, 0, 0, -1, 0);
const PRESSURE: Dimension = Dimension::new(-1, 1, -2, 0, 0, 0, 0);
const DIFFUSIVITY: Dimension = Dimension::new(2, 0, -1, 0, 0, 0, 0);
const VELOCITY: Dimension = Dimension::new(1, 0, -1, 0, 0, 0, 0);
const DENSITY: Dimension = Dimension::new(-3, 1, 0, 0, 0, 0, 0);
const MOLAR_MASS: Dimension = Dimension::new(0, 1, 0, 0, 0, -1, 0);

const TABLE: &[(&str, Dimension, f64)] = &[
    ("1", Dimension::NONE, 1.0),
    ("m", LENGTH, 1.0),
    ("cm", LENGTH, 1e-2),
    ("nm", LENGTH, 1e-9),
    ("Å", LENGTH, 1e-10),
    ("pm", LENGTH, 1e-12),
    ("m^2", AREA, 1.0),
    ("nm^2", AREA, 1e-18),
    ("Å^2", AREA, 1e-20),
    ("kg", MASS, 1.0),
    ("g", MASS, 1e-3),
    ("amu", MASS, 1.660_539_066_60e-27),
    ("s", TIME, 1.0),
    ("ns", TIME, 1e-9),
    ("ps", TIME, 1e-12),
    ("fs", TIME, 1e-15),
    ("K", TEMPERATURE, 1.0),
    ("mol", AMOUNT, 1.0),
    ("J", ENERGY, 1.0),
    ("eV", ENERGY, 1.602_176_634e-19),
    ("J/mol", MOLAR_ENERGY, 1.0),
    ("kJ/mol", MOLAR_ENERGY, 1e3),
    ("kcal/mol", MOLAR_ENERGY, 4184.0),
    ("Pa", PRESSURE, 1.0),
    ("kPa", PRESSURE, 1e3),
    ("bar", PRESSURE, 1e5),
    ("atm", PRESSURE, 101_325.0),
    ("m^2/s", DIFFUSIVITY, 1.0),
    ("cm^2/s", DIFFUSIVITY, 1e-4),
    ("nm^2/ns", DIFFUSIVITY, 1e-9),
    ("Å^2/ps", DIFFUSIVITY, 1e-8),
    ("m/s", VELOCITY, 1.0),
    ("Å/ps", VELOCITY, 100.0),
    ("kg/m^3", DENSITY, 1.0),
    ("g/cm^3", DENSITY, 1e3),
    ("g/mol", MOLAR_MASS, 1e-3),
];

const ALIASES: &[(&str, &str)] = &[
    ("A", "Å"),
    ("angstrom", "Å"),
    ("A^2", "Å^2"),
    ("A^2/ps", "Å^2/ps"),
    ("A/ps", "Å/ps"),
    ("dimensionless", "1"),
];

impl UnitRegistry {
    fn build() -> Self {
        let mut units = BTreeMap::new();
        for &(name, dimension, scale) in TABLE {
            assert!(scale > 0.0, "unit {name} has non-positive scale");
            let prev = units.insert(name, Unit { name, dimension, scale });
            assert!(prev.is_none(), "duplicate unit {name}");
        }
        let aliases = ALIASES.iter().copied().collect();
        UnitRegistry { units, aliases }
    }

    pub fn lookup(&self, name: &str) -> Result<Unit, QuantityError> {
        let canonical = self.aliases.get(name).copied().unwrap_or(name);
        self.units
            .get(canonical)
            .copied()
            .ok_or_else(|| QuantityError::UnknownUnit(name.to_string()))
    }

    pub fn units(&self) -> impl Iterator<Item = Unit> + '_ {
        self.units.values().copied()
    }
}

/// The process-wide unit table. Initialized on first use, read-only after.
pub fn registry() -> &'static UnitRegistry {
    static REGISTRY: OnceLock<UnitRegistry> = OnceLock::new();
    REGISTRY.get_or_init(UnitRegistry::build)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_case_study_units() {
        for name in [
            "Å", "nm", "m", "fs", "ps", "s", "K", "amu", "kg", "mol", "eV", "kJ/mol", "kcal/mol",
            "bar", "Pa", "1", "m^2/s", "Å^2/ps",
        ] {
            Unit::parse(name).unwrap();
        }
        assert!(registry().units().count() >= 20);
    }

    #[test]
    fn aliases_resolve_to_canonical_symbol() {
        assert_eq!(Unit::parse("angstrom").unwrap().name(), "Å");
        assert_eq!(Unit::parse("A^2/ps").unwrap().name(), "Å^2/ps");
    }

    #[test]
    fn unknown_unit() {
        assert!(matches!(
            Unit::parse("furlong"),
            Err(QuantityError::UnknownUnit(_))
        ));
    }

    #[test]
    fn molar_energy_is_not_energy() {
        let ev = Unit::parse("eV").unwrap();
        let kj = Unit::parse("kJ/mol").unwrap();
        assert!(!ev.is_convertible_to(&kj));
    }

    #[test]
    fn dimension_display() {
        assert_eq!(DIFFUSIVITY.to_string(), "L^2·T^-1");
        assert_eq!(Dimension::NONE.to_string(), "1");
    }
}
