//! Canonical text encoding of datasets.
//!
//! ```text
//! dataset-v1
//! counts <n-meta> <n-observables>
//! meta <key> <escaped value>
//! obs <name> <kind> <unit> <payload...>
//! ```
//!
//! Payloads: `scalar` one number; `vector3` three; `series` a count N then N
//! index/value pairs; `table` rows R, columns C, C column names, then R*C
//! cells row-major. Numbers are `{:.16e}` (17 significant digits), which
//! round-trips every finite f64. Observables appear in name order, meta in
//! insertion order. The decoder accepts only canonical input.

use std::fmt::{self, Write as _};

use sha2::{Digest, Sha256};

use super::dataset::{is_token, ObservableKind, Table};
use super::{Dataset, Observable, QuantityError, Unit, Values};

pub const HEADER: &str = "dataset-v1";

/// Hex-encoded SHA-256 of a dataset's canonical bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId(String);

impl ContentId {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        ContentId(hex::encode(Sha256::digest(bytes)))
    }

    /// Accepts a 64-character lowercase hex string.
    pub fn parse(s: &str) -> Option<Self> {
        (s.len() == 64 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')))
            .then(|| ContentId(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn short(&self) -> &str {
        &self.0[..12]
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn push_num(out: &mut String, v: f64) {
    out.push(' ');
    write!(out, "{v:.16e}").expect("writing to String");
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for c in value.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(value: &str) -> Option<String> {
    let mut out = String::with_capacity(value.len());
    let mut chars = value.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            't' => out.push('\t'),
            _ => return None,
        }
    }
    Some(out)
}

impl Dataset {
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        writeln!(out, "counts {} {}", self.meta().len(), self.len()).expect("String write");
        for (k, v) in self.meta() {
            writeln!(out, "meta {k} {}", escape(v)).expect("String write");
        }
        for obs in self.observables() {
            write!(out, "obs {} {} {}", obs.name(), obs.kind(), obs.unit().name())
                .expect("String write");
            match obs.values() {
                Values::Scalar(v) => push_num(&mut out, *v),
                Values::Vector3(v) => v.iter().for_each(|&x| push_num(&mut out, x)),
                Values::Series(s) => {
                    write!(out, " {}", s.len()).expect("String write");
                    for &(i, v) in s {
                        push_num(&mut out, i);
                        push_num(&mut out, v);
                    }
                }
                Values::Table(t) => {
                    write!(out, " {} {}", t.n_rows(), t.n_cols()).expect("String write");
                    for c in t.columns() {
                        out.push(' ');
                        out.push_str(c);
                    }
                    t.cells().iter().for_each(|&x| push_num(&mut out, x));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        self.to_canonical_string().into_bytes()
    }

    pub fn content_id(&self) -> ContentId {
        ContentId::of_bytes(&self.to_canonical_bytes())
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Dataset, QuantityError> {
        let text = std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("not UTF-8: {e}")))?;
        let ds = decode(text)?;
        // Anything that decodes but does not re-encode identically is
        // non-canonical (extra spaces, other number spellings, reordering).
        if ds.to_canonical_string() != text {
            let line = first_difference_line(text, &ds.to_canonical_string());
            return Err(parse_err(line, "non-canonical encoding".into()));
        }
        Ok(ds)
    }
}

fn first_difference_line(a: &str, b: &str) -> usize {
    a.lines()
        .zip(b.lines())
        .position(|(x, y)| x != y)
        .map(|i| i + 1)
        .unwrap_or_else(|| a.lines().count().min(b.lines().count()) + 1)
}

fn parse_err(line: usize, reason: String) -> QuantityError {
    QuantityError::Parse { line, reason }
}

struct Fields<'a> {
    line: usize,
    it: std::str::Split<'a, char>,
}

impl<'a> Fields<'a> {
    fn word(&mut self, what: &str) -> Result<&'a str, QuantityError> {
        self.it
            .next()
            .filter(|w| !w.is_empty())
            .ok_or_else(|| parse_err(self.line, format!("expected {what}")))
    }

    fn count(&mut self, what: &str) -> Result<usize, QuantityError> {
        let w = self.word(what)?;
        w.parse()
            .map_err(|_| parse_err(self.line, format!("bad {what} {w:?}")))
    }

    fn num(&mut self) -> Result<f64, QuantityError> {
        let w = self.word("number")?;
        let v: f64 = w
            .parse()
            .map_err(|_| parse_err(self.line, format!("bad number {w:?}")))?;
        Ok(v)
    }

    fn finish(&mut self) -> Result<(), QuantityError> {
        match self.it.next() {
            None => Ok(()),
            Some(extra) => Err(parse_err(self.line, format!("trailing field {extra:?}"))),
        }
    }
}

fn decode(text: &str) -> Result<Dataset, QuantityError> {
    let body = text
        .strip_suffix('\n')
        .ok_or_else(|| parse_err(0, "missing final newline".into()))?;
    let mut lines = body.split('\n').enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(parse_err(1, format!("expected header {HEADER:?}"))),
    }
    let (n_meta, n_obs) = match lines.next() {
        Some((no, l)) => {
            let mut f = Fields { line: no, it: l.split(' ') };
            if f.word("counts")? != "counts" {
                return Err(parse_err(no, "expected counts line".into()));
            }
            let m = f.count("meta count")?;
            let o = f.count("observable count")?;
            f.finish()?;
            (m, o)
        }
        None => return Err(parse_err(2, "missing counts line".into())),
    };

    let mut ds = Dataset::new();
    for _ in 0..n_meta {
        let (no, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "truncated: missing meta line".into()))?;
        let rest = l
            .strip_prefix("meta ")
            .ok_or_else(|| parse_err(no, "expected meta line".into()))?;
        let (key, value) = rest
            .split_once(' ')
            .ok_or_else(|| parse_err(no, "meta line needs key and value".into()))?;
        if !is_token(key) || ds.meta_value(key).is_some() {
            return Err(parse_err(no, format!("bad or repeated meta key {key:?}")));
        }
        let value = unescape(value).ok_or_else(|| parse_err(no, "bad escape in meta value".into()))?;
        ds.set_meta(key, value).map_err(|e| parse_err(no, e.to_string()))?;
    }
    for _ in 0..n_obs {
        let (no, l) = lines
            .next()
            .ok_or_else(|| parse_err(0, "truncated: missing obs line".into()))?;
        let obs = decode_obs(no, l)?;
        ds.insert(obs).map_err(|e| parse_err(no, e.to_string()))?;
    }
    if let Some((no, _)) = lines.next() {
        return Err(parse_err(no, "unexpected line after last observable".into()));
    }
    Ok(ds)
}

fn decode_obs(no: usize, line: &str) -> Result<Observable, QuantityError> {
    let mut f = Fields { line: no, it: line.split(' ') };
    if f.word("obs")? != "obs" {
        return Err(parse_err(no, "expected obs line".into()));
    }
    let name = f.word("name")?;
    let kind_word = f.word("kind")?;
    let kind = ObservableKind::parse(kind_word)
        .ok_or_else(|| parse_err(no, format!("unknown kind {kind_word:?}")))?;
    let unit_word = f.word("unit")?;
    let unit = Unit::parse(unit_word).map_err(|e| parse_err(no, e.to_string()))?;
    let values = match kind {
        ObservableKind::Scalar => Values::Scalar(f.num()?),
        ObservableKind::Vector3 => Values::Vector3([f.num()?, f.num()?, f.num()?]),
        ObservableKind::Series => {
            let n = f.count("series length")?;
            let mut s = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                s.push((f.num()?, f.num()?));
            }
            Values::Series(s)
        }
        ObservableKind::Table => {
            let rows = f.count("row count")?;
            let cols = f.count("column count")?;
            let columns = (0..cols)
                .map(|_| f.word("column name").map(str::to_string))
                .collect::<Result<Vec<_>, _>>()?;
            let cells = rows
                .checked_mul(cols)
                .ok_or_else(|| parse_err(no, "table too large".into()))?;
            let mut data = Vec::with_capacity(cells.min(1 << 24));
            for _ in 0..cells {
                data.push(f.num()?);
            }
            Values::Table(Table::new(columns, data).map_err(|e| parse_err(no, e.to_string()))?)
        }
    };
    f.finish()?;
    Observable::new(name, unit, values).map_err(|e| parse_err(no, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset::new()
            .with_meta("producer", "gulp 6.1")
            .unwrap()
            .with_meta("note", "two\nlines \\ here")
            .unwrap()
            .with(Observable::scalar("T", 300.0, "K").unwrap())
            .unwrap()
            .with(
                Observable::new(
                    "msd",
                    Unit::parse("Å^2").unwrap(),
                    Values::Series(vec![(0.0, 0.0), (1.0, 1.1), (2.5, -3.25e-7)]),
                )
                .unwrap(),
            )
            .unwrap()
            .with(
                Observable::new(
                    "sites",
                    Unit::parse("Å").unwrap(),
                    Values::Table(
                        Table::from_rows(vec!["x".into(), "y".into()], &[vec![0.1, 0.2], vec![1.0, 2.0]])
                            .unwrap(),
                    ),
                )
                .unwrap(),
            )
            .unwrap()
            .with(
                Observable::new("f", Unit::parse("1").unwrap(), Values::Vector3([1.0, -0.0, 1e300]))
                    .unwrap(),
            )
            .unwrap()
    }

    #[test]
    fn empty_dataset_is_two_line_header() {
        let text = Dataset::new().to_canonical_string();
        assert_eq!(text, "dataset-v1\ncounts 0 0\n");
        let back = Dataset::from_canonical_bytes(text.as_bytes()).unwrap();
        assert_eq!(back, Dataset::new());
    }

    #[test]
    fn round_trip_sample() {
        let ds = sample();
        let back = Dataset::from_canonical_bytes(&ds.to_canonical_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_id(), ds.content_id());
    }

    #[test]
    fn scalar_line_layout() {
        let ds = Dataset::new().with(Observable::scalar("T", 300.0, "K").unwrap()).unwrap();
        assert_eq!(
            ds.to_canonical_string(),
            "dataset-v1\ncounts 0 1\nobs T scalar K 3.0000000000000000e2\n"
        );
    }

    #[test]
    fn rejects_noncanonical_spellings() {
        let good = "dataset-v1\ncounts 0 1\nobs T scalar K 3.0000000000000000e2\n";
        assert!(Dataset::from_canonical_bytes(good.as_bytes()).is_ok());
        for bad in [
            "dataset-v1\ncounts 0 1\nobs T scalar K 300\n",
            "dataset-v1\ncounts 0 1\nobs T scalar K 3.0000000000000000e2 \n",
            "dataset-v1\ncounts 0 1\nobs T scalar K 3.0000000000000000e2",
            "dataset-v2\ncounts 0 1\nobs T scalar K 3.0000000000000000e2\n",
            "dataset-v1\ncounts 0 2\nobs T scalar K 3.0000000000000000e2\n",
            "dataset-v1\ncounts 0 1\nobs T scalar furlong 3.0000000000000000e2\n",
            "dataset-v1\ncounts 0 1\nobs T scalar K NaN\n",
        ] {
            assert!(
                matches!(Dataset::from_canonical_bytes(bad.as_bytes()), Err(QuantityError::Parse { .. })),
                "accepted {bad:?}"
            );
        }
    }

    #[test]
    fn parse_error_reports_line() {
        let bad = "dataset-v1\ncounts 0 2\nobs A scalar K 1.0000000000000000e0\nobs B scalar K oops\n";
        match Dataset::from_canonical_bytes(bad.as_bytes()) {
            Err(QuantityError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn observables_out_of_order_rejected() {
        let bad = "dataset-v1\ncounts 0 2\nobs B scalar K 1.0000000000000000e0\nobs A scalar K 1.0000000000000000e0\n";
        assert!(Dataset::from_canonical_bytes(bad.as_bytes()).is_err());
    }

    #[test]
    fn content_id_parse() {
        let id = sample().content_id();
        assert_eq!(ContentId::parse(id.as_str()), Some(id.clone()));
        assert!(ContentId::parse("xyz").is_none());
    }
}
