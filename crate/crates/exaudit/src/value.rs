//! Typed cell values and string interning.
//!
//! All text is interned once at load time so that joins and hashing work on
//! fixed-size handles instead of strings. Dates keep both a comparable
//! timestamp and the original lexeme: two rows join when their timestamps
//! agree, but rendered output always shows the value exactly as it appeared
//! in the source file.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// Handle to an interned string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym(pub u32);

/// Append-only string pool. Frozen together with the store it belongs to.
#[derive(Debug, Default, Clone)]
pub struct Interner {
    map: HashMap<String, Sym>,
    strings: Vec<String>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, s: &str) -> Sym {
        if let Some(&sym) = self.map.get(s) {
            return sym;
        }
        let sym = Sym(self.strings.len() as u32);
        self.strings.push(s.to_owned());
        self.map.insert(s.to_owned(), sym);
        sym
    }

    /// Look up a string without inserting it.
    pub fn get(&self, s: &str) -> Option<Sym> {
        self.map.get(s).copied()
    }

    pub fn resolve(&self, sym: Sym) -> &str {
        &self.strings[sym.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Declared type of a column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Text,
    Integer,
    Date,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Text => "text",
            ValueKind::Integer => "integer",
            ValueKind::Date => "date",
        }
    }

    pub fn parse_kind(s: &str) -> Option<ValueKind> {
        match s {
            "text" => Some(ValueKind::Text),
            "integer" => Some(ValueKind::Integer),
            "date" => Some(ValueKind::Date),
            _ => None,
        }
    }
}

/// A date cell: comparable timestamp plus the raw lexeme for display.
#[derive(Debug, Clone, Copy)]
pub struct DateVal {
    /// Seconds since the Unix epoch; date-only lexemes are taken at midnight.
    pub ts: i64,
    /// The source text, e.g. `1/1/2010`, rendered back verbatim.
    pub raw: Sym,
}

impl PartialEq for DateVal {
    fn eq(&self, other: &Self) -> bool {
        self.ts == other.ts
    }
}

impl Eq for DateVal {}

impl Hash for DateVal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.ts.hash(state);
    }
}

/// A single cell. Equality and hashing ignore presentation: dates compare by
/// timestamp, text by interned handle. Values of different kinds never
/// compare equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Text(Sym),
    Int(i64),
    Date(DateVal),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Int(_) => ValueKind::Integer,
            Value::Date(_) => ValueKind::Date,
        }
    }

    /// Order within a kind; values of different kinds are incomparable.
    pub fn partial_cmp_same_kind(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Date(a), Value::Date(b)) => Some(a.ts.cmp(&b.ts)),
            _ => None,
        }
    }

    /// Render the cell back to source text.
    pub fn render(&self, interner: &Interner) -> String {
        match self {
            Value::Text(s) => interner.resolve(*s).to_owned(),
            Value::Int(i) => i.to_string(),
            Value::Date(d) => interner.resolve(d.raw).to_owned(),
        }
    }
}

const DATETIME_FORMATS: &[&str] = &[
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%m/%d/%Y %H:%M:%S",
];

const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%m/%d/%Y"];

const WEEKDAYS: &[&str] = &["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

/// Parse a date lexeme to a comparable timestamp. Accepts ISO dates with or
/// without a time component, `M/D/YYYY`, and ctime-style strings. The
/// weekday of a ctime string is skipped rather than validated, so synthetic
/// timestamps with made-up weekdays still load.
pub fn parse_date(raw: &str) -> Option<i64> {
    for fmt in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    for fmt in DATE_FORMATS {
        if let Ok(d) = NaiveDate::parse_from_str(raw, fmt) {
            return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
        }
    }
    if let Some((day, rest)) = raw.split_once(' ') {
        if WEEKDAYS.contains(&day) {
            if let Ok(dt) = NaiveDateTime::parse_from_str(rest.trim(), "%b %d %H:%M:%S %Y") {
                return Some(dt.and_utc().timestamp());
            }
        }
    }
    None
}

/// Parse a raw field according to the declared kind, interning as needed.
pub fn parse_value(raw: &str, kind: ValueKind, interner: &mut Interner) -> Option<Value> {
    match kind {
        ValueKind::Text => Some(Value::Text(interner.intern(raw))),
        ValueKind::Integer => raw.trim().parse::<i64>().ok().map(Value::Int),
        ValueKind::Date => {
            let ts = parse_date(raw.trim())?;
            Some(Value::Date(DateVal { ts, raw: interner.intern(raw) }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interner_round_trips() {
        let mut i = Interner::new();
        let a = i.intern("Alice");
        let b = i.intern("Bob");
        let a2 = i.intern("Alice");
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_eq!(i.resolve(a), "Alice");
        assert_eq!(i.resolve(b), "Bob");
        assert_eq!(i.len(), 2);
    }

    #[test]
    fn date_formats_agree_on_the_same_day() {
        let iso = parse_date("2010-01-01").unwrap();
        let us = parse_date("1/1/2010").unwrap();
        assert_eq!(iso, us);
        let padded = parse_date("01/01/2010").unwrap();
        assert_eq!(iso, padded);
    }

    #[test]
    fn ctime_format_parses() {
        let ts = parse_date("Mon Jan 03 10:16:57 2010").unwrap();
        let iso = parse_date("2010-01-03 10:16:57").unwrap();
        assert_eq!(ts, iso);
    }

    #[test]
    fn dates_join_by_timestamp_but_render_raw() {
        let mut i = Interner::new();
        let a = parse_value("1/1/2010", ValueKind::Date, &mut i).unwrap();
        let b = parse_value("2010-01-01", ValueKind::Date, &mut i).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.render(&i), "1/1/2010");
        assert_eq!(b.render(&i), "2010-01-01");
    }

    #[test]
    fn cross_kind_values_never_equal() {
        let mut i = Interner::new();
        let t = parse_value("1", ValueKind::Text, &mut i).unwrap();
        let n = parse_value("1", ValueKind::Integer, &mut i).unwrap();
        assert_ne!(t, n);
        assert_eq!(t.partial_cmp_same_kind(&n), None);
    }

    #[test]
    fn bad_dates_rejected() {
        assert!(parse_date("not a date").is_none());
        assert!(parse_date("13/45/2010").is_none());
    }
}
