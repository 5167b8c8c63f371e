//! Columnar store: CSV ingestion into typed relations, sealed for reading.
//!
//! The store is built once (parse schema, ingest one CSV per table, seal)
//! and never mutated afterwards, so readers — including the parallel miner —
//! share it freely. Dropping a CSV for a declared table leaves that relation
//! empty, which simply means no path through it has support.

use std::collections::HashSet;
use std::path::Path as FsPath;

use crate::error::StoreError;
use crate::schema::{SchemaCatalog, TableId};
use crate::value::{parse_value, Interner, Value};

/// A typed, column-oriented relation.
#[derive(Debug, Clone)]
pub struct Relation {
    pub table: TableId,
    columns: Vec<Vec<Value>>,
}

impl Relation {
    fn empty(table: TableId, arity: usize) -> Self {
        Relation { table, columns: vec![Vec::new(); arity] }
    }

    pub(crate) fn from_columns(table: TableId, columns: Vec<Vec<Value>>) -> Self {
        debug_assert!(columns.windows(2).all(|w| w[0].len() == w[1].len()));
        Relation { table, columns }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, attr: usize) -> &[Value] {
        &self.columns[attr]
    }

    pub fn cell(&self, row: usize, attr: usize) -> Value {
        self.columns[attr][row]
    }

    pub fn row(&self, row: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Project onto `attrs` and drop duplicate rows, preserving first-seen
    /// order. Idempotent; never yields more rows than the input.
    pub fn distinct_project(&self, attrs: &[usize]) -> Relation {
        let mut seen: HashSet<Vec<Value>> = HashSet::new();
        let mut columns: Vec<Vec<Value>> = vec![Vec::new(); attrs.len()];
        for row in 0..self.len() {
            let key: Vec<Value> = attrs.iter().map(|&a| self.columns[a][row]).collect();
            if seen.insert(key.clone()) {
                for (c, v) in columns.iter_mut().zip(key) {
                    c.push(v);
                }
            }
        }
        Relation { table: self.table, columns }
    }
}

/// A sealed database: catalog, one relation per table, frozen interner.
#[derive(Debug)]
pub struct Database {
    pub catalog: SchemaCatalog,
    relations: Vec<Relation>,
    interner: Interner,
}

impl Database {
    pub fn relation(&self, table: TableId) -> &Relation {
        &self.relations[table.idx()]
    }

    pub fn log(&self) -> &Relation {
        self.relation(self.catalog.log_table())
    }

    pub fn interner(&self) -> &Interner {
        &self.interner
    }

    /// Clone the database with the log relation replaced. The interner must
    /// extend this database's (every existing symbol still resolves).
    pub(crate) fn with_log(&self, log: Relation, interner: Interner) -> Database {
        let mut relations = self.relations.clone();
        relations[self.catalog.log_table().idx()] = log;
        Database { catalog: self.catalog.clone(), relations, interner }
    }

    /// Largest row count across all relations.
    pub fn max_rows(&self) -> usize {
        self.relations.iter().map(Relation::len).max().unwrap_or(0)
    }

    /// Render one relation back to CSV text (header + rows, LF line ends).
    pub fn to_csv(&self, table: TableId) -> String {
        let decl = self.catalog.table(table);
        let rel = self.relation(table);
        let mut out = String::new();
        let header: Vec<&str> = decl.attrs.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in 0..rel.len() {
            let fields: Vec<String> = (0..rel.arity())
                .map(|a| csv_escape(&rel.cell(row, a).render(&self.interner)))
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_owned()
    }
}

/// Accumulates relations before sealing into a [`Database`].
#[derive(Debug)]
pub struct StoreBuilder {
    catalog: SchemaCatalog,
    relations: Vec<Option<Relation>>,
    interner: Interner,
}

impl StoreBuilder {
    pub fn new(catalog: SchemaCatalog) -> Self {
        let n = catalog.tables.len();
        StoreBuilder { catalog, relations: vec![None; n], interner: Interner::new() }
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        &self.catalog
    }

    /// Ingest CSV text for one table. Returns the number of data rows.
    /// The header must match the declared attributes in name and order.
    pub fn ingest_csv(&mut self, table: &str, text: &str, file: &str) -> Result<usize, StoreError> {
        let tid = self
            .catalog
            .table_id(table)
            .ok_or_else(|| StoreError::UnknownTable(table.to_owned()))?;
        if self.relations[tid.idx()].is_some() {
            return Err(StoreError::AlreadyLoaded(table.to_owned()));
        }
        let decl = self.catalog.table(tid).clone();

        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(text.as_bytes());

        let headers = reader
            .headers()
            .map_err(|e| StoreError::Csv { file: file.to_owned(), source: e })?
            .clone();
        let expected: Vec<String> = decl.attrs.iter().map(|(n, _)| n.clone()).collect();
        let got: Vec<String> = headers.iter().map(str::to_owned).collect();
        if got != expected {
            return Err(StoreError::HeaderMismatch {
                file: file.to_owned(),
                table: table.to_owned(),
                expected,
                got,
            });
        }

        let mut rel = Relation::empty(tid, decl.arity());
        let mut keys: HashSet<Value> = HashSet::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2; // 1-based, after the header
            let record = record.map_err(|e| StoreError::Csv { file: file.to_owned(), source: e })?;
            if record.len() != decl.arity() {
                return Err(StoreError::Arity {
                    file: file.to_owned(),
                    line,
                    expected: decl.arity(),
                    got: record.len(),
                });
            }
            for (a, field) in record.iter().enumerate() {
                let kind = decl.attr_kind(a);
                let v = parse_value(field, kind, &mut self.interner).ok_or_else(|| {
                    StoreError::BadValue {
                        file: file.to_owned(),
                        line,
                        column: decl.attr_name(a).to_owned(),
                        value: field.to_owned(),
                        kind: kind.name().to_owned(),
                    }
                })?;
                if decl.key == Some(a) && !keys.insert(v) {
                    return Err(StoreError::DuplicateKey {
                        file: file.to_owned(),
                        line,
                        table: table.to_owned(),
                        value: field.to_owned(),
                    });
                }
                rel.columns[a].push(v);
            }
        }
        let count = rel.len();
        self.relations[tid.idx()] = Some(rel);
        Ok(count)
    }

    /// Freeze the store. Tables that were never loaded become empty relations.
    pub fn seal(self) -> Result<Database, StoreError> {
        let relations: Vec<Relation> = self
            .relations
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.unwrap_or_else(|| Relation::empty(TableId(i as u32), self.catalog.tables[i].arity()))
            })
            .collect();

        // Log ids must be unique even when no key was declared.
        let log = &relations[self.catalog.log_table().idx()];
        let lid_col = self.catalog.lid_attr();
        let mut seen: HashSet<Value> = HashSet::new();
        for row in 0..log.len() {
            let v = log.cell(row, lid_col);
            if !seen.insert(v) {
                return Err(StoreError::DuplicateKey {
                    file: self.catalog.table(self.catalog.log_table()).name.clone(),
                    line: row + 2,
                    table: self.catalog.table(self.catalog.log_table()).name.clone(),
                    value: v.render(&self.interner),
                });
            }
        }

        Ok(Database { catalog: self.catalog, relations, interner: self.interner })
    }
}

/// Load a schema file plus one `<table name in lower case>.csv` per table
/// from `dir`. Missing files leave the relation empty.
pub fn load_dir(schema_path: &FsPath, dir: &FsPath) -> Result<Database, StoreError> {
    let schema_text = std::fs::read_to_string(schema_path).map_err(|e| StoreError::SchemaInvalid(
        format!("cannot read {}: {e}", schema_path.display()),
    ))?;
    let catalog = crate::schema::parse_schema(&schema_text, &schema_path.display().to_string())?;
    let mut builder = StoreBuilder::new(catalog);
    for decl in builder.catalog().tables.clone() {
        let file = dir.join(format!("{}.csv", decl.name.to_lowercase()));
        if file.exists() {
            let text = std::fs::read_to_string(&file).map_err(|e| StoreError::SchemaInvalid(
                format!("cannot read {}: {e}", file.display()),
            ))?;
            builder.ingest_csv(&decl.name, &text, &file.display().to_string())?;
        }
    }
    builder.seal()
}
