//! Schema catalog: table declarations, join relationships, and anchors.
//!
//! A schema file lists tables with typed attributes, the foreign-key and
//! admin-declared equality relationships between attributes, which attributes
//! may self-join, which tables are exempt from the table budget, and the pair
//! of anchor attributes that every explanation must connect:
//!
//! ```text
//! table Log
//!   Lid text key
//!   Date date
//!   User text
//!   Patient text
//!
//! table Appointments
//!   Patient text
//!   Date date
//!   Doctor text
//!
//! fk: Log.Patient = Appointments.Patient
//! fk: Log.User = Appointments.Doctor
//! selfjoin: Doctor_Info.Department
//! anchors: Log.Patient -> Log.User
//! ```
//!
//! `anchors` names the accessed-record attribute and the accessing-user
//! attribute of the log table; a mined path starts at the first and returns
//! to the second on the same log row.

use std::fmt;

use crate::error::StoreError;
use crate::graph::AttrRef;
use crate::value::ValueKind;

/// Index of a table in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableId(pub u32);

impl TableId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

/// One declared table: name, typed attributes, optional unique key.
#[derive(Debug, Clone)]
pub struct TableDecl {
    pub name: String,
    pub attrs: Vec<(String, ValueKind)>,
    /// Attribute whose values must be unique, if any.
    pub key: Option<usize>,
}

impl TableDecl {
    pub fn attr_index(&self, name: &str) -> Option<usize> {
        self.attrs.iter().position(|(n, _)| n == name)
    }

    pub fn attr_name(&self, idx: usize) -> &str {
        &self.attrs[idx].0
    }

    pub fn attr_kind(&self, idx: usize) -> ValueKind {
        self.attrs[idx].1
    }

    pub fn arity(&self) -> usize {
        self.attrs.len()
    }
}

/// Parsed schema: tables plus the join structure used to build the graph.
#[derive(Debug, Clone)]
pub struct SchemaCatalog {
    pub tables: Vec<TableDecl>,
    /// Foreign-key attribute pairs.
    pub fk_pairs: Vec<(AttrRef, AttrRef)>,
    /// Attributes that may join against themselves in a second instance.
    pub selfjoin_attrs: Vec<AttrRef>,
    /// Admin-declared equality relationships beyond foreign keys.
    pub declared_pairs: Vec<(AttrRef, AttrRef)>,
    /// Where a path starts: the accessed-record attribute of the log table.
    pub anchor_start: AttrRef,
    /// Where a path must return: the accessing-user attribute of the log table.
    pub anchor_end: AttrRef,
    /// Tables that do not count against the table budget.
    pub exempt: Vec<TableId>,
}

impl SchemaCatalog {
    pub fn log_table(&self) -> TableId {
        self.anchor_start.table
    }

    pub fn table(&self, id: TableId) -> &TableDecl {
        &self.tables[id.idx()]
    }

    pub fn table_id(&self, name: &str) -> Option<TableId> {
        self.tables
            .iter()
            .position(|t| t.name == name)
            .map(|i| TableId(i as u32))
    }

    pub fn attr_ref(&self, table: &str, attr: &str) -> Result<AttrRef, StoreError> {
        let tid = self
            .table_id(table)
            .ok_or_else(|| StoreError::UnknownTable(table.to_owned()))?;
        let aid = self.table(tid).attr_index(attr).ok_or_else(|| StoreError::UnknownAttr {
            table: table.to_owned(),
            attr: attr.to_owned(),
        })?;
        Ok(AttrRef { table: tid, attr: aid as u32 })
    }

    pub fn attr_name(&self, r: AttrRef) -> String {
        format!("{}.{}", self.table(r.table).name, self.table(r.table).attr_name(r.attr as usize))
    }

    pub fn is_exempt(&self, id: TableId) -> bool {
        self.exempt.contains(&id)
    }

    /// Validate cross-cutting constraints after parsing.
    fn validate(&self) -> Result<(), StoreError> {
        if self.tables.is_empty() {
            return Err(StoreError::NoTables);
        }
        if self.anchor_start.table != self.anchor_end.table {
            return Err(StoreError::AnchorMismatch {
                start: self.attr_name(self.anchor_start),
                end: self.attr_name(self.anchor_end),
            });
        }
        if self.anchor_start == self.anchor_end {
            return Err(StoreError::SchemaInvalid(
                "anchor attributes must be distinct".to_owned(),
            ));
        }
        let log = self.table(self.log_table());
        for required in ["Lid", "Date"] {
            if log.attr_index(required).is_none() {
                return Err(StoreError::MissingLogAttr {
                    table: log.name.clone(),
                    attr: required.to_owned(),
                });
            }
        }
        Ok(())
    }

    /// The log table's unique-id attribute.
    pub fn lid_attr(&self) -> usize {
        self.table(self.log_table()).attr_index("Lid").expect("validated at parse")
    }

    /// The log table's timestamp attribute.
    pub fn date_attr(&self) -> usize {
        self.table(self.log_table()).attr_index("Date").expect("validated at parse")
    }
}

impl fmt::Display for SchemaCatalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.tables {
            writeln!(f, "table {}", t.name)?;
            for (i, (name, kind)) in t.attrs.iter().enumerate() {
                let key = if t.key == Some(i) { " key" } else { "" };
                writeln!(f, "  {} {}{}", name, kind.name(), key)?;
            }
            writeln!(f)?;
        }
        for (a, b) in &self.fk_pairs {
            writeln!(f, "fk: {} = {}", self.attr_name(*a), self.attr_name(*b))?;
        }
        for a in &self.selfjoin_attrs {
            writeln!(f, "selfjoin: {}", self.attr_name(*a))?;
        }
        for (a, b) in &self.declared_pairs {
            writeln!(f, "relation: {} = {}", self.attr_name(*a), self.attr_name(*b))?;
        }
        for t in &self.exempt {
            writeln!(f, "exempt: {}", self.table(*t).name)?;
        }
        writeln!(
            f,
            "anchors: {} -> {}",
            self.attr_name(self.anchor_start),
            self.attr_name(self.anchor_end)
        )
    }
}

/// Split `Table.Attr`, reporting `line` on failure.
fn split_attr(s: &str, file: &str, line: usize) -> Result<(String, String), StoreError> {
    match s.split_once('.') {
        Some((t, a)) if !t.is_empty() && !a.is_empty() => Ok((t.to_owned(), a.to_owned())),
        _ => Err(StoreError::SchemaParse {
            file: file.to_owned(),
            line,
            msg: format!("expected Table.Attr, got {s:?}"),
        }),
    }
}

/// Split an `A.X = B.Y` pair, reporting `line` on failure.
fn split_pair(s: &str, file: &str, line: usize) -> Result<((String, String), (String, String)), StoreError> {
    let (lhs, rhs) = s.split_once('=').ok_or_else(|| StoreError::SchemaParse {
        file: file.to_owned(),
        line,
        msg: format!("expected A.X = B.Y, got {s:?}"),
    })?;
    Ok((split_attr(lhs.trim(), file, line)?, split_attr(rhs.trim(), file, line)?))
}

/// Parse a schema from text. `file` is used only in error messages.
pub fn parse_schema(text: &str, file: &str) -> Result<SchemaCatalog, StoreError> {
    let mut tables: Vec<TableDecl> = Vec::new();
    let mut in_table = false;
    // Deferred so sections may reference tables declared later in the file.
    let mut fk_lines: Vec<(usize, String)> = Vec::new();
    let mut selfjoin_lines: Vec<(usize, String)> = Vec::new();
    let mut relation_lines: Vec<(usize, String)> = Vec::new();
    let mut exempt_lines: Vec<(usize, String)> = Vec::new();
    let mut anchor_line: Option<(usize, String)> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| StoreError::SchemaParse { file: file.to_owned(), line: lineno, msg };
        if let Some(rest) = line.strip_prefix("table ") {
            let name = rest.trim();
            if name.is_empty() || name.contains(['.', '#', ' ']) {
                return Err(err(format!("bad table name {name:?}")));
            }
            if tables.iter().any(|t| t.name == name) {
                return Err(err(format!("duplicate table {name:?}")));
            }
            tables.push(TableDecl { name: name.to_owned(), attrs: Vec::new(), key: None });
            in_table = true;
        } else if let Some(rest) = line.strip_prefix("fk:") {
            fk_lines.push((lineno, rest.trim().to_owned()));
            in_table = false;
        } else if let Some(rest) = line.strip_prefix("selfjoin:") {
            selfjoin_lines.push((lineno, rest.trim().to_owned()));
            in_table = false;
        } else if let Some(rest) = line.strip_prefix("relation:") {
            relation_lines.push((lineno, rest.trim().to_owned()));
            in_table = false;
        } else if let Some(rest) = line.strip_prefix("exempt:") {
            exempt_lines.push((lineno, rest.trim().to_owned()));
            in_table = false;
        } else if let Some(rest) = line.strip_prefix("anchors:") {
            if anchor_line.is_some() {
                return Err(err("duplicate anchors declaration".to_owned()));
            }
            anchor_line = Some((lineno, rest.trim().to_owned()));
            in_table = false;
        } else if in_table {
            let mut parts = line.split_whitespace();
            let name = parts.next().unwrap().to_owned();
            let kind_s = parts
                .next()
                .ok_or_else(|| err(format!("attribute {name:?} is missing a kind")))?;
            let kind = ValueKind::parse_kind(kind_s)
                .ok_or_else(|| err(format!("unknown kind {kind_s:?} (expected text, integer, or date)")))?;
            let is_key = match parts.next() {
                None => false,
                Some("key") => true,
                Some(other) => return Err(err(format!("unexpected token {other:?}"))),
            };
            let table = tables.last_mut().unwrap();
            if table.attr_index(&name).is_some() {
                return Err(err(format!("duplicate attribute {name:?}")));
            }
            if is_key && table.key.is_some() {
                return Err(err(format!("table {} already has a key", table.name)));
            }
            table.attrs.push((name, kind));
            if is_key {
                table.key = Some(table.attrs.len() - 1);
            }
        } else {
            return Err(err(format!("unexpected line {line:?}")));
        }
    }

    if tables.is_empty() {
        return Err(StoreError::NoTables);
    }
    for t in &tables {
        if t.attrs.is_empty() {
            return Err(StoreError::SchemaInvalid(format!("table {} declares no attributes", t.name)));
        }
    }

    let (anchor_ln, anchor_s) = anchor_line.ok_or_else(|| {
        StoreError::SchemaParse {
            file: file.to_owned(),
            line: text.lines().count(),
            msg: "missing anchors declaration".to_owned(),
        }
    })?;

    // Temporary catalog with placeholder anchors so attr_ref can resolve names.
    let mut catalog = SchemaCatalog {
        tables,
        fk_pairs: Vec::new(),
        selfjoin_attrs: Vec::new(),
        declared_pairs: Vec::new(),
        anchor_start: AttrRef { table: TableId(0), attr: 0 },
        anchor_end: AttrRef { table: TableId(0), attr: 0 },
        exempt: Vec::new(),
    };

    let resolve = |catalog: &SchemaCatalog, t: &str, a: &str, line: usize| -> Result<AttrRef, StoreError> {
        catalog.attr_ref(t, a).map_err(|e| StoreError::SchemaParse {
            file: file.to_owned(),
            line,
            msg: e.to_string(),
        })
    };

    for (line, s) in fk_lines {
        let ((t1, a1), (t2, a2)) = split_pair(&s, file, line)?;
        let r1 = resolve(&catalog, &t1, &a1, line)?;
        let r2 = resolve(&catalog, &t2, &a2, line)?;
        if r1 == r2 {
            return Err(StoreError::SchemaParse {
                file: file.to_owned(),
                line,
                msg: "foreign key endpoints must differ (use selfjoin: for self-joins)".to_owned(),
            });
        }
        catalog.fk_pairs.push((r1, r2));
    }
    for (line, s) in relation_lines {
        let ((t1, a1), (t2, a2)) = split_pair(&s, file, line)?;
        let r1 = resolve(&catalog, &t1, &a1, line)?;
        let r2 = resolve(&catalog, &t2, &a2, line)?;
        if r1 == r2 {
            return Err(StoreError::SchemaParse {
                file: file.to_owned(),
                line,
                msg: "relation endpoints must differ (use selfjoin: for self-joins)".to_owned(),
            });
        }
        catalog.declared_pairs.push((r1, r2));
    }
    for (line, s) in selfjoin_lines {
        let (t, a) = split_attr(&s, file, line)?;
        let r = resolve(&catalog, &t, &a, line)?;
        catalog.selfjoin_attrs.push(r);
    }
    for (line, s) in exempt_lines {
        let tid = catalog.table_id(&s).ok_or_else(|| StoreError::SchemaParse {
            file: file.to_owned(),
            line,
            msg: format!("unknown table {s:?}"),
        })?;
        catalog.exempt.push(tid);
    }

    let (start_s, end_s) = anchor_s.split_once("->").ok_or_else(|| StoreError::SchemaParse {
        file: file.to_owned(),
        line: anchor_ln,
        msg: format!("expected Log.Start -> Log.End, got {anchor_s:?}"),
    })?;
    let (t1, a1) = split_attr(start_s.trim(), file, anchor_ln)?;
    let (t2, a2) = split_attr(end_s.trim(), file, anchor_ln)?;
    catalog.anchor_start = resolve(&catalog, &t1, &a1, anchor_ln)?;
    catalog.anchor_end = resolve(&catalog, &t2, &a2, anchor_ln)?;

    catalog.validate()?;
    Ok(catalog)
}
