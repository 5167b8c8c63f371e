//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised while parsing schemas or loading CSV data into the store.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{file}:{line}: {msg}")]
    SchemaParse { file: String, line: usize, msg: String },
    #[error("schema declares no tables")]
    NoTables,
    #[error("unknown table {0:?}")]
    UnknownTable(String),
    #[error("unknown attribute {table}.{attr}")]
    UnknownAttr { table: String, attr: String },
    #[error("anchor attributes must live in the same table (got {start} and {end})")]
    AnchorMismatch { start: String, end: String },
    #[error("{0}")]
    SchemaInvalid(String),
    #[error("{file}: header does not match declaration for table {table}: expected {expected:?}, got {got:?}")]
    HeaderMismatch { file: String, table: String, expected: Vec<String>, got: Vec<String> },
    #[error("{file}:{line}: expected {expected} fields, got {got}")]
    Arity { file: String, line: usize, expected: usize, got: usize },
    #[error("{file}:{line}: column {column}: cannot parse {value:?} as {kind}")]
    BadValue { file: String, line: usize, column: String, value: String, kind: String },
    #[error("{file}:{line}: duplicate key {value:?} for table {table}")]
    DuplicateKey { file: String, line: usize, table: String, value: String },
    #[error("table {0} was already loaded")]
    AlreadyLoaded(String),
    #[error("csv error in {file}: {source}")]
    Csv { file: String, source: csv::Error },
    #[error("log table {table} is missing required attribute {attr}")]
    MissingLogAttr { table: String, attr: String },
}

/// Errors raised while validating templates read from files or built by hand.
#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {id}: {msg}")]
    Invalid { id: String, msg: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("placeholder [{0}] does not name an attribute bound by the template")]
    UnboundPlaceholder(String),
    #[error("filter references instance {0} which is not part of the template")]
    UnboundFilterInstance(String),
    #[error("conditions do not form a connected chain from the anchor: {0}")]
    NotAChain(String),
}

/// Errors raised by mining and grouping configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("support fraction must lie in (0, 1], got {0}")]
    BadSupport(f64),
    #[error("maximum template length must be at least 1, got {0}")]
    BadMaxLength(usize),
    #[error("table budget must be at least 2, got {0}")]
    BadTableBudget(usize),
    #[error("skip constant must be at least 1, got {0}")]
    BadSkipConstant(f64),
    #[error("bridge depth {depth} cannot cover length {max_len}: need 2 \u{2264} depth \u{2264} max length \u{2264} 2\u{b7}depth - 1")]
    BadBridgeDepth { depth: usize, max_len: usize },
    #[error("access log is empty")]
    EmptyLog,
    #[error("{0}")]
    Other(String),
}

/// Errors raised during evaluation of templates against a database.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown log id {0:?}")]
    UnknownLid(String),
    #[error("access log is empty")]
    EmptyLog,
    #[error("{0}")]
    Other(String),
}
