use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{QuantityError, Unit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservableKind {
    Scalar,
    Vector3,
    Series,
    Table,
}

impl ObservableKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObservableKind::Scalar => "scalar",
            ObservableKind::Vector3 => "vector3",
            ObservableKind::Series => "series",
            ObservableKind::Table => "table",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "scalar" => Some(ObservableKind::Scalar),
            "vector3" => Some(ObservableKind::Vector3),
            "series" => Some(ObservableKind::Series),
            "table" => Some(ObservableKind::Table),
            _ => None,
        }
    }
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row-major table of reals with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    data: Vec<f64>,
}

impl Table {
    pub fn new(columns: Vec<String>, data: Vec<f64>) -> Result<Self, QuantityError> {
        if columns.is_empty() {
            return Err(QuantityError::InvalidObservable(
                "table needs at least one column".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !is_token(c) {
                return Err(QuantityError::InvalidObservable(format!(
                    "bad column name {c:?}"
                )));
            }
            if !seen.insert(c.as_str()) {
                return Err(QuantityError::InvalidObservable(format!(
                    "duplicate column {c}"
                )));
            }
        }
        if !data.len().is_multiple_of(columns.len()) {
            return Err(QuantityError::InvalidObservable(format!(
                "{} cells do not fill rows of {} columns",
                data.len(),
                columns.len()
            )));
        }
        Ok(Table { columns, data })
    }

    pub fn from_rows(columns: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, QuantityError> {
        let width = columns.len();
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(QuantityError::InvalidObservable(format!(
                "row {bad} has {} cells, expected {width}",
                rows[bad].len()
            )));
        }
        Table::new(columns, rows.concat())
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.columns.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.columns.len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.columns.len())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn cells(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Scalar(f64),
    Vector3([f64; 3]),
    /// (index, value) pairs with strictly increasing indices.
    Series(Vec<(f64, f64)>),
    Table(Table),
}

impl Values {
    pub fn kind(&self) -> ObservableKind {
        match self {
            Values::Scalar(_) => ObservableKind::Scalar,
            Values::Vector3(_) => ObservableKind::Vector3,
            Values::Series(_) => ObservableKind::Series,
            Values::Table(_) => ObservableKind::Table,
        }
    }

    /// Applies `f` to every measured value; series indices are left alone.
    fn map(&self, f: impl Fn(f64) -> f64) -> Values {
        match self {
            Values::Scalar(v) => Values::Scalar(f(*v)),
            Values::Vector3(v) => Values::Vector3(v.map(&f)),
            Values::Series(s) => Values::Series(s.iter().map(|&(i, v)| (i, f(v))).collect()),
            Values::Table(t) => Values::Table(Table {
                columns: t.columns.clone(),
                data: t.data.iter().map(|&v| f(v)).collect(),
            }),
        }
    }

    fn all_numbers(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            Values::Scalar(v) => Box::new(std::iter::once(*v)),
            Values::Vector3(v) => Box::new(v.iter().copied()),
            Values::Series(s) => Box::new(s.iter().flat_map(|&(i, v)| [i, v])),
            Values::Table(t) => Box::new(t.data.iter().copied()),
        }
    }
}

/// A named physical quantity with a unit, validated at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    name: String,
    unit: Unit,
    values: Values,
}

impl Observable {
    pub fn new(name: impl Into<String>, unit: Unit, values: Values) -> Result<Self, QuantityError> {
        let name = name.into();
        if !is_token(&name) {
            return Err(QuantityError::InvalidObservable(format!(
                "observable name {name:?} must be a nonempty whitespace-free token"
            )));
        }
        if let Some(bad) = values.all_numbers().find(|v| !v.is_finite()) {
            return Err(QuantityError::InvalidObservable(format!(
                "{name}: non-finite value {bad}"
            )));
        }
        if let Values::Series(s) = &values {
            if s.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(QuantityError::InvalidObservable(format!(
                    "{name}: series indices must be strictly increasing"
                )));
            }
        }
        // -0.0 and 0.0 compare equal but print differently; fold them so
        // equal observables always have equal bytes.
        let values = values.map(|v| v + 0.0);
        let values = match values {
            Values::Series(s) => Values::Series(s.into_iter().map(|(i, v)| (i + 0.0, v)).collect()),
            other => other,
        };
        Ok(Observable { name, unit, values })
    }

    pub fn scalar(name: impl Into<String>, value: f64, unit: &str) -> Result<Self, QuantityError> {
        Observable::new(name, Unit::parse(unit)?, Values::Scalar(value))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn kind(&self) -> ObservableKind {
        self.values.kind()
    }

    pub fn values(&self) -> &Values {
        &self.values
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self.values {
            Values::Scalar(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_series(&self) -> Option<&[(f64, f64)]> {
        match &self.values {
            Values::Series(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_table(&self) -> Option<&Table> {
        match &self.values {
            Values::Table(t) => Some(t),
            _ => None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Result<Self, QuantityError> {
        let name = name.into();
        if !is_token(&name) {
            return Err(QuantityError::InvalidObservable(format!("bad name {name:?}")));
        }
        self.name = name;
        Ok(self)
    }
}

/// Converts an observable to `target`. Kind and name are preserved.
pub fn convert(q: &Observable, target: Unit) -> Result<Observable, QuantityError> {
    let factor = q
        .unit
        .factor_to(&target)
        .map_err(|_| QuantityError::DimensionMismatch {
            name: q.name.clone(),
            from: q.unit.name().to_string(),
            to: target.name().to_string(),
        })?;
    if q.unit == target {
        return Ok(q.clone());
    }
    Observable::new(q.name.clone(), target, q.values.map(|v| v * factor))
}

/// A set of observables plus ordered string metadata; the unit of
/// exchange between services and of storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    meta: Vec<(String, String)>,
    observables: BTreeMap<String, Observable>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets a metadata entry. Existing keys keep their position.
    pub fn set_meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> Result<(), QuantityError> {
        let key = key.into();
        if !is_token(&key) {
            return Err(QuantityError::InvalidObservable(format!("bad meta key {key:?}")));
        }
        let value = value.into();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key, value)),
        }
        Ok(())
    }

    pub fn with_meta(mut self, key: &str, value: &str) -> Result<Self, QuantityError> {
        self.set_meta(key, value)?;
        Ok(self)
    }

    pub fn meta(&self) -> &[(String, String)] {
        &self.meta
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn insert(&mut self, obs: Observable) -> Result<(), QuantityError> {
        if self.observables.contains_key(obs.name()) {
            return Err(QuantityError::DuplicateObservable(obs.name.clone()));
        }
        self.observables.insert(obs.name.clone(), obs);
        Ok(())
    }

    pub fn with(mut self, obs: Observable) -> Result<Self, QuantityError> {
        self.insert(obs)?;
        Ok(self)
    }

    /// Inserts or replaces; returns the replaced observable.
    pub fn upsert(&mut self, obs: Observable) -> Option<Observable> {
        self.observables.insert(obs.name.clone(), obs)
    }

    pub fn get(&self, name: &str) -> Option<&Observable> {
        self.observables.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Observable, QuantityError> {
        self.get(name)
            .ok_or_else(|| QuantityError::MissingObservable(name.to_string()))
    }

    /// Observables in lexicographic name order.
    pub fn observables(&self) -> impl Iterator<Item = &Observable> {
        self.observables.values()
    }

    pub fn len(&self) -> usize {
        self.observables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observables.is_empty()
    }
}

/// The observables (and target units) a consumer wants from a producer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionSpec {
    wanted: Vec<(String, Unit)>,
}

impl ExtractionSpec {
    pub fn new(wanted: Vec<(String, Unit)>) -> Result<Self, QuantityError> {
        let mut seen = BTreeSet::new();
        for (name, _) in &wanted {
            if !seen.insert(name.as_str()) {
                return Err(QuantityError::DuplicateObservable(name.clone()));
            }
        }
        Ok(ExtractionSpec { wanted })
    }

    /// Convenience constructor from (name, unit symbol) pairs.
    pub fn of(pairs: &[(&str, &str)]) -> Result<Self, QuantityError> {
        let wanted = pairs
            .iter()
            .map(|&(n, u)| Ok((n.to_string(), Unit::parse(u)?)))
            .collect::<Result<Vec<_>, QuantityError>>()?;
        ExtractionSpec::new(wanted)
    }

    pub fn wanted(&self) -> &[(String, Unit)] {
        &self.wanted
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.wanted.iter().map(|(n, _)| n.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.wanted.is_empty()
    }
}

/// Extracts the requested observables, converted to the requested units.
/// The result records the source dataset's content id as `derived-from`.
pub fn project(ds: &Dataset, spec: &ExtractionSpec) -> Result<Dataset, QuantityError> {
    let mut out = Dataset::new();
    for (name, unit) in &spec.wanted {
        let obs = ds.require(name)?;
        out.insert(convert(obs, *unit)?)?;
    }
    out.set_meta("derived-from", ds.content_id().as_str())?;
    Ok(out)
}

/// True for nonempty strings without whitespace or control characters.
pub(crate) fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || c.is_control())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(s: &str) -> Unit {
        Unit::parse(s).unwrap()
    }

    #[test]
    fn angstrom_to_nanometer() {
        let q = Observable::scalar("L", 5.0, "Å").unwrap();
        let c = convert(&q, u("nm")).unwrap();
        assert_eq!(c.name(), "L");
        assert_eq!(c.kind(), ObservableKind::Scalar);
        assert!((c.as_scalar().unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kcal_to_kj_per_mole() {
        let q = Observable::scalar("E", 1.0, "kcal/mol").unwrap();
        let c = convert(&q, u("kJ/mol")).unwrap();
        assert!((c.as_scalar().unwrap() - 4.184).abs() < 1e-12);
    }

    #[test]
    fn time_to_length_is_dimension_mismatch() {
        let q = Observable::scalar("t", 3.0, "s").unwrap();
        match convert(&q, u("m")) {
            Err(QuantityError::DimensionMismatch { name, .. }) => assert_eq!(name, "t"),
            other => panic!("expected mismatch, got {other:?}"),
        }
    }

    #[test]
    fn series_conversion_leaves_indices() {
        let q = Observable::new(
            "msd",
            u("Å^2"),
            Values::Series(vec![(0.0, 0.0), (1.0, 100.0)]),
        )
        .unwrap();
        let c = convert(&q, u("nm^2")).unwrap();
        let s = c.as_series().unwrap();
        assert_eq!(s[1].0, 1.0);
        assert!((s[1].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_bad_series() {
        assert!(Observable::scalar("x", f64::NAN, "1").is_err());
        assert!(Observable::scalar("x", f64::INFINITY, "1").is_err());
        let bad = Values::Series(vec![(1.0, 0.0), (1.0, 2.0)]);
        assert!(Observable::new("s", u("1"), bad).is_err());
        assert!(Observable::scalar("", 1.0, "1").is_err());
        assert!(Observable::scalar("a b", 1.0, "1").is_err());
    }

    #[test]
    fn table_shape_checked() {
        assert!(Table::from_rows(vec!["a".into(), "b".into()], &[vec![1.0]]).is_err());
        assert!(Table::new(vec!["a".into(), "a".into()], vec![]).is_err());
        let t = Table::from_rows(vec!["a".into(), "b".into()], &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column(1).collect::<Vec<_>>(), vec![2.0, 4.0]);
    }

    #[test]
    fn project_identity() {
        let ds = Dataset::new()
            .with(Observable::scalar("T", 300.0, "K").unwrap())
            .unwrap()
            .with(Observable::scalar("P", 1.0, "bar").unwrap())
            .unwrap();
        let p = project(&ds, &ExtractionSpec::of(&[("T", "K")]).unwrap()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.get("T").unwrap().as_scalar(), Some(300.0));
        assert_eq!(p.meta_value("derived-from"), Some(ds.content_id().as_str()));
    }

    #[test]
    fn project_converts() {
        let ds = Dataset::new()
            .with(Observable::scalar("L", 10.0, "Å").unwrap())
            .unwrap();
        let p = project(&ds, &ExtractionSpec::of(&[("L", "nm")]).unwrap()).unwrap();
        let l = p.get("L").unwrap();
        assert_eq!(l.unit().name(), "nm");
        assert!((l.as_scalar().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn project_missing_and_mismatch() {
        let ds = Dataset::new()
            .with(Observable::scalar("L", 10.0, "Å").unwrap())
            .unwrap();
        match project(&ds, &ExtractionSpec::of(&[("rho", "kg/m^3")]).unwrap()) {
            Err(QuantityError::MissingObservable(n)) => assert_eq!(n, "rho"),
            other => panic!("{other:?}"),
        }
        match project(&ds, &ExtractionSpec::of(&[("L", "ps")]).unwrap()) {
            Err(QuantityError::DimensionMismatch { name, .. }) => assert_eq!(name, "L"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn extraction_spec_names_unique() {
        assert!(ExtractionSpec::of(&[("a", "1"), ("a", "K")]).is_err());
    }

    #[test]
    fn meta_keeps_insertion_order_on_update() {
        let mut ds = Dataset::new();
        ds.set_meta("b", "1").unwrap();
        ds.set_meta("a", "2").unwrap();
        ds.set_meta("b", "3").unwrap();
        assert_eq!(
            ds.meta(),
            &[("b".to_string(), "3".to_string()), ("a".to_string(), "2".to_string())]
        );
    }
}
