//! Explanation templates: a path plus optional decorations.
//!
//! A template is a closed path, optionally decorated with comparison filters
//! over attributes of its bound instances and a human-readable description
//! with `[Instance.Attr]` placeholders:
//!
//! ```text
//! [Log#0.Patient] had an appointment with [Log#0.User] on [Appointments#1.Date].
//! ```
//!
//! Templates serialize one JSON object per line; parsing our own output and
//! re-serializing reproduces the bytes exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::TemplateError;
use crate::graph::{EdgeUniverse, OrientedEdge};
use crate::path::Path;
use crate::schema::SchemaCatalog;

/// Comparison operator for filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn parse_op(s: &str) -> Option<CmpOp> {
        match s {
            "<" => Some(CmpOp::Lt),
            "<=" => Some(CmpOp::Le),
            ">" => Some(CmpOp::Gt),
            ">=" => Some(CmpOp::Ge),
            "==" => Some(CmpOp::Eq),
            "!=" => Some(CmpOp::Ne),
            _ => None,
        }
    }

    /// The operator seen from the other side, e.g. `a < b` is `b > a`.
    pub fn mirrored(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
        }
    }

    pub fn eval(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Lt => ord == Less,
            CmpOp::Le => ord != Greater,
            CmpOp::Gt => ord == Greater,
            CmpOp::Ge => ord != Less,
            CmpOp::Eq => ord == Equal,
            CmpOp::Ne => ord != Equal,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A comparison between two attributes of instances bound by the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Filter {
    pub left: (usize, u32),
    pub op: CmpOp,
    pub right: (usize, u32),
}

/// Mined or recorded support of a template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportInfo {
    pub count: u64,
    pub fraction: f64,
}

/// A reference to one `[Instance.Attr]` placeholder in a description.
#[derive(Debug, Clone)]
pub struct Placeholder {
    /// The literal text between brackets, e.g. `Appointments#1.Date`.
    pub text: String,
    pub inst: usize,
    pub attr: u32,
}

/// A closed path with optional filters and description.
#[derive(Debug, Clone)]
pub struct Template {
    pub path: Path,
    pub filters: Vec<Filter>,
    pub description: Option<String>,
    pub support: Option<SupportInfo>,
}

impl Template {
    pub fn new(path: Path) -> Template {
        Template { path, filters: Vec::new(), description: None, support: None }
    }

    pub fn length(&self) -> usize {
        self.path.len()
    }

    /// Stable identity: the path's canonical key, plus a normalized filter
    /// suffix for decorated templates.
    pub fn id(&self, catalog: &SchemaCatalog) -> String {
        let mut id = self.path.canonical_key(catalog);
        if !self.filters.is_empty() {
            let mut parts: Vec<String> = self
                .filters
                .iter()
                .map(|f| {
                    let l = self.path.endpoint_label(catalog, f.left.0, f.left.1);
                    let r = self.path.endpoint_label(catalog, f.right.0, f.right.1);
                    if l <= r {
                        format!("{l}{}{r}", f.op)
                    } else {
                        format!("{r}{}{l}", f.op.mirrored())
                    }
                })
                .collect();
            parts.sort();
            id.push('|');
            id.push_str(&parts.join(";"));
        }
        id
    }

    /// Resolve an `Instance.Attr` reference against the path.
    fn resolve_endpoint(&self, catalog: &SchemaCatalog, text: &str) -> Option<(usize, u32)> {
        let (inst_label, attr_name) = text.split_once('.')?;
        let idx = (0..self.path.instances().len())
            .find(|&i| self.path.instance_label(catalog, i) == inst_label)?;
        let table = catalog.table(self.path.instance(idx).table);
        let attr = table.attr_index(attr_name)? as u32;
        Some((idx, attr))
    }

    /// Extract and resolve every placeholder in the description.
    pub fn placeholders(&self, catalog: &SchemaCatalog) -> Result<Vec<Placeholder>, TemplateError> {
        let mut out = Vec::new();
        let Some(desc) = &self.description else { return Ok(out) };
        let mut rest = desc.as_str();
        while let Some(open) = rest.find('[') {
            let after = &rest[open + 1..];
            let Some(close) = after.find(']') else { break };
            let text = &after[..close];
            let (inst, attr) = self
                .resolve_endpoint(catalog, text)
                .ok_or_else(|| TemplateError::UnboundPlaceholder(text.to_owned()))?;
            out.push(Placeholder { text: text.to_owned(), inst, attr });
            rest = &after[close + 1..];
        }
        Ok(out)
    }

    /// Check filters and placeholders against the path.
    pub fn validate(&self, catalog: &SchemaCatalog) -> Result<(), TemplateError> {
        let n = self.path.instances().len();
        for f in &self.filters {
            for (inst, attr) in [f.left, f.right] {
                if inst >= n {
                    return Err(TemplateError::UnboundFilterInstance(format!("#{inst}")));
                }
                let table = catalog.table(self.path.instance(inst).table);
                if attr as usize >= table.arity() {
                    return Err(TemplateError::UnboundFilterInstance(
                        self.path.instance_label(catalog, inst),
                    ));
                }
            }
        }
        self.placeholders(catalog)?;
        Ok(())
    }

    /// Substitute placeholders using `lookup` (instance, attr) -> rendered value.
    pub fn render_description<F>(&self, catalog: &SchemaCatalog, lookup: F) -> String
    where
        F: Fn(usize, u32) -> String,
    {
        let desc = self.description_or_default(catalog);
        let mut out = String::with_capacity(desc.len());
        let mut rest = desc.as_str();
        while let Some(open) = rest.find('[') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find(']') {
                Some(close) => {
                    let text = &after[..close];
                    match self.resolve_endpoint(catalog, text) {
                        Some((inst, attr)) => out.push_str(&lookup(inst, attr)),
                        None => {
                            out.push('[');
                            out.push_str(text);
                            out.push(']');
                        }
                    }
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('[');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }

    /// The stored description, or a generated one spelling out the joins.
    pub fn description_or_default(&self, catalog: &SchemaCatalog) -> String {
        if let Some(d) = &self.description {
            return d.clone();
        }
        let mut parts: Vec<String> = self
            .path
            .conds()
            .iter()
            .map(|c| {
                format!(
                    "{} = {}",
                    self.path.endpoint_label(catalog, c.from_inst, c.from_attr),
                    self.path.endpoint_label(catalog, c.to_inst, c.to_attr)
                )
            })
            .collect();
        for f in &self.filters {
            parts.push(format!(
                "{} {} {}",
                self.path.endpoint_label(catalog, f.left.0, f.left.1),
                f.op,
                self.path.endpoint_label(catalog, f.right.0, f.right.1)
            ));
        }
        format!("access where {}", parts.join(" and "))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CondRecord {
    left: String,
    right: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FilterRecord {
    left: String,
    op: String,
    right: String,
}

/// On-disk shape of one template (one JSON object per line).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    conditions: Vec<CondRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    filters: Vec<FilterRecord>,
    length: usize,
    tables: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support_fraction: Option<f64>,
    description: String,
}

/// Serialize templates to JSON lines in the given order.
pub fn to_jsonl(templates: &[Template], catalog: &SchemaCatalog) -> String {
    let mut out = String::new();
    for t in templates {
        let record = TemplateRecord {
            id: Some(t.id(catalog)),
            conditions: t
                .path
                .conds()
                .iter()
                .map(|c| CondRecord {
                    left: t.path.endpoint_label(catalog, c.from_inst, c.from_attr),
                    right: t.path.endpoint_label(catalog, c.to_inst, c.to_attr),
                })
                .collect(),
            filters: t
                .filters
                .iter()
                .map(|f| FilterRecord {
                    left: t.path.endpoint_label(catalog, f.left.0, f.left.1),
                    op: f.op.symbol().to_owned(),
                    right: t.path.endpoint_label(catalog, f.right.0, f.right.1),
                })
                .collect(),
            length: t.length(),
            tables: t.path.table_count(catalog),
            support: t.support.map(|s| s.count),
            support_fraction: t.support.map(|s| s.fraction),
            description: t.description_or_default(catalog),
        };
        out.push_str(&serde_json::to_string(&record).expect("template serialization"));
        out.push('\n');
    }
    out
}

/// Split `Table#k.Attr` into its parts.
fn parse_endpoint(s: &str) -> Option<(&str, u32, &str)> {
    let (inst, attr) = s.rsplit_once('.')?;
    let (table, label) = inst.split_once('#')?;
    Some((table, label.parse().ok()?, attr))
}

/// Rebuild one template from its record, enforcing every walk rule.
fn record_to_template(
    record: TemplateRecord,
    catalog: &SchemaCatalog,
    universe: &EdgeUniverse,
    line: usize,
) -> Result<Template, TemplateError> {
    let perr = |msg: String| TemplateError::Parse { line, msg };
    let mut path = Path::seed(catalog);
    for (ci, cond) in record.conditions.iter().enumerate() {
        let mut resolved = None;
        // The emitter writes `left` as the departure endpoint; accept the
        // reverse order for hand-written files.
        for (a, b) in [(&cond.left, &cond.right), (&cond.right, &cond.left)] {
            let Some((ta, la, aa)) = parse_endpoint(a) else { continue };
            let Some((tb, lb, ab)) = parse_endpoint(b) else { continue };
            let (Ok(from), Ok(to)) = (catalog.attr_ref(ta, aa), catalog.attr_ref(tb, ab)) else {
                continue;
            };
            let Some(edge) = universe.find_edge(from, to) else { continue };
            let o = OrientedEdge { edge, from, to };
            if let Some(next) = path.extend(catalog, universe, &o) {
                // Labels in the file must match arrival-order labels.
                let from_label = format!("{ta}#{la}.{aa}");
                let to_label = format!("{tb}#{lb}.{ab}");
                let c = next.conds().last().unwrap();
                if next.endpoint_label(catalog, c.from_inst, c.from_attr) == from_label
                    && next.endpoint_label(catalog, c.to_inst, c.to_attr) == to_label
                {
                    resolved = Some(next);
                    break;
                }
            }
        }
        path = resolved.ok_or_else(|| {
            perr(format!(
                "condition {} ({} = {}) does not extend the chain",
                ci + 1,
                cond.left,
                cond.right
            ))
        })?;
    }
    if !path.is_explanation() {
        return Err(TemplateError::NotAChain(format!(
            "chain of length {} does not close at {}",
            path.len(),
            catalog.attr_name(catalog.anchor_end)
        )));
    }
    if record.length != path.len() {
        return Err(perr(format!(
            "declared length {} but chain has {} conditions",
            record.length,
            path.len()
        )));
    }

    let mut template = Template::new(path);
    template.description = Some(record.description);
    for f in &record.filters {
        let op = CmpOp::parse_op(&f.op).ok_or_else(|| perr(format!("unknown operator {:?}", f.op)))?;
        let left = template
            .resolve_endpoint(catalog, &f.left)
            .ok_or_else(|| TemplateError::UnboundFilterInstance(f.left.clone()))?;
        let right = template
            .resolve_endpoint(catalog, &f.right)
            .ok_or_else(|| TemplateError::UnboundFilterInstance(f.right.clone()))?;
        template.filters.push(Filter { left, op, right });
    }
    if let (Some(count), Some(fraction)) = (record.support, record.support_fraction) {
        template.support = Some(SupportInfo { count, fraction });
    }
    template.validate(catalog)?;

    if let Some(stated) = &record.id {
        let actual = template.id(catalog);
        if *stated != actual {
            return Err(perr(format!("id {stated:?} does not match conditions (expected {actual:?})")));
        }
    }
    if record.tables != template.path.table_count(catalog) {
        return Err(perr(format!(
            "declared {} tables but chain references {}",
            record.tables,
            template.path.table_count(catalog)
        )));
    }
    Ok(template)
}

/// Parse JSON-lines templates. Line numbers are 1-based in errors.
pub fn parse_jsonl(
    text: &str,
    catalog: &SchemaCatalog,
    universe: &EdgeUniverse,
) -> Result<Vec<Template>, TemplateError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: TemplateRecord = serde_json::from_str(line)
            .map_err(|e| TemplateError::Parse { line: lineno, msg: e.to_string() })?;
        out.push(record_to_template(record, catalog, universe, lineno)?);
    }
    Ok(out)
}
