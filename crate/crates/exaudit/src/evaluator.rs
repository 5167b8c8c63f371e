//! Support evaluation: how many log rows does a chain explain?
//!
//! Support counts *distinct* log rows, so the workhorse is a semi-join sweep
//! rather than a full join: the evaluator pushes a set of (log row, frontier
//! value) pairs along the chain, shrinking it at every condition. Decorated
//! templates and instance listings fall back to a depth-first join that binds
//! concrete rows. Join-side lookup structures are built lazily per
//! (table, attribute) and shared — the context is safe for concurrent
//! readers once the store is sealed.

use std::collections::{HashMap, HashSet};
use std::sync::{Mutex, RwLock};

use crate::error::EvalError;
use crate::path::Path;
use crate::schema::TableId;
use crate::store::{Database, Relation};
use crate::template::Template;
use crate::value::Value;

/// Outcome of a cached support computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportResult {
    pub count: u64,
    /// `count / |log|`; 0 for an empty log.
    pub fraction: f64,
    pub from_cache: bool,
}

/// Canonical-key keyed support cache, shared across mining phases.
#[derive(Debug, Default)]
pub struct SupportCache {
    map: Mutex<HashMap<String, u64>>,
}

impl SupportCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<u64> {
        self.map.lock().unwrap().get(key).copied()
    }

    pub fn insert(&self, key: String, count: u64) {
        self.map.lock().unwrap().insert(key, count);
    }

    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One concrete match of a template: an access plus the rows explaining it.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExplanationInstance {
    pub lid: String,
    pub template_id: String,
    pub length: usize,
    /// Rendered values for every attribute the template projects,
    /// as (`Instance.Attr`, value) pairs ordered by instance then attribute.
    pub bindings: Vec<(String, String)>,
    pub description: String,
}

type PairKey = (TableId, u32, u32);
type AttrKey = (TableId, u32);

/// Shared, lazily-built evaluation state over one sealed database.
pub struct EvalContext<'db> {
    db: &'db Database,
    /// When false, join-side projections keep duplicate values (slower,
    /// same results); mirrors the miner's result-reduction toggle.
    dedup: bool,
    /// (table, arrive attr, depart attr) -> arrive value -> depart values.
    pair_index: RwLock<HashMap<PairKey, std::sync::Arc<HashMap<Value, Vec<Value>>>>>,
    /// (table, attr) -> distinct value set.
    value_sets: RwLock<HashMap<AttrKey, std::sync::Arc<HashSet<Value>>>>,
    /// (table, attr) -> value -> row ids, preserving duplicates.
    row_index: RwLock<HashMap<AttrKey, std::sync::Arc<HashMap<Value, Vec<u32>>>>>,
    /// (table, attr) -> distinct value count.
    ndv: RwLock<HashMap<AttrKey, usize>>,
}

impl<'db> EvalContext<'db> {
    pub fn new(db: &'db Database) -> Self {
        Self::with_dedup(db, true)
    }

    pub fn with_dedup(db: &'db Database, dedup: bool) -> Self {
        EvalContext {
            db,
            dedup,
            pair_index: RwLock::new(HashMap::new()),
            value_sets: RwLock::new(HashMap::new()),
            row_index: RwLock::new(HashMap::new()),
            ndv: RwLock::new(HashMap::new()),
        }
    }

    pub fn db(&self) -> &'db Database {
        self.db
    }

    fn pair_index_for(&self, table: TableId, arrive: u32, depart: u32) -> std::sync::Arc<HashMap<Value, Vec<Value>>> {
        let key = (table, arrive, depart);
        if let Some(idx) = self.pair_index.read().unwrap().get(&key) {
            return idx.clone();
        }
        let rel = self.db.relation(table);
        let mut map: HashMap<Value, Vec<Value>> = HashMap::new();
        let mut seen: HashSet<(Value, Value)> = HashSet::new();
        for row in 0..rel.len() {
            let a = rel.cell(row, arrive as usize);
            let d = rel.cell(row, depart as usize);
            if self.dedup && !seen.insert((a, d)) {
                continue;
            }
            map.entry(a).or_default().push(d);
        }
        let arc = std::sync::Arc::new(map);
        self.pair_index.write().unwrap().insert(key, arc.clone());
        arc
    }

    fn value_set_for(&self, table: TableId, attr: u32) -> std::sync::Arc<HashSet<Value>> {
        let key = (table, attr);
        if let Some(s) = self.value_sets.read().unwrap().get(&key) {
            return s.clone();
        }
        let rel = self.db.relation(table);
        let set: HashSet<Value> = rel.column(attr as usize).iter().copied().collect();
        let arc = std::sync::Arc::new(set);
        self.value_sets.write().unwrap().insert(key, arc.clone());
        arc
    }

    fn row_index_for(&self, table: TableId, attr: u32) -> std::sync::Arc<HashMap<Value, Vec<u32>>> {
        let key = (table, attr);
        if let Some(s) = self.row_index.read().unwrap().get(&key) {
            return s.clone();
        }
        let rel = self.db.relation(table);
        let mut map: HashMap<Value, Vec<u32>> = HashMap::new();
        for row in 0..rel.len() {
            map.entry(rel.cell(row, attr as usize)).or_default().push(row as u32);
        }
        let arc = std::sync::Arc::new(map);
        self.row_index.write().unwrap().insert(key, arc.clone());
        arc
    }

    fn ndv_for(&self, table: TableId, attr: u32) -> usize {
        let key = (table, attr);
        if let Some(&n) = self.ndv.read().unwrap().get(&key) {
            return n;
        }
        let rel = self.db.relation(table);
        let n = rel.column(attr as usize).iter().collect::<HashSet<_>>().len();
        self.ndv.write().unwrap().insert(key, n);
        n
    }

    /// Log rows (as row ids) still reachable at the end of the chain.
    /// Works for open fragments and closed explanations alike.
    fn surviving_lids(&self, path: &Path) -> Vec<u32> {
        let log = self.db.log();
        if log.is_empty() {
            return Vec::new();
        }
        let start_col = log.column(path.start.attr as usize);
        let mut state: HashSet<(u32, Value)> =
            (0..log.len()).map(|i| (i as u32, start_col[i])).collect();

        let mut cur_attr = path.start.attr;
        for cond in path.conds() {
            let from_table = path.instance(cond.from_inst).table;
            if cond.from_attr != cur_attr {
                // Intra-tuple hop: re-key the frontier values through the
                // instance's (arrive, depart) pairs.
                let idx = self.pair_index_for(from_table, cur_attr, cond.from_attr);
                let mut next: HashSet<(u32, Value)> = HashSet::new();
                for (lid, v) in state {
                    if let Some(outs) = idx.get(&v) {
                        for &v2 in outs {
                            next.insert((lid, v2));
                        }
                    }
                }
                state = next;
            }
            if cond.to_inst == 0 {
                // Closing: the value must match this very log row.
                let end_col = log.column(cond.to_attr as usize);
                state.retain(|&(lid, v)| end_col[lid as usize] == v);
            } else {
                let to_table = path.instance(cond.to_inst).table;
                let set = self.value_set_for(to_table, cond.to_attr);
                state.retain(|&(_, v)| set.contains(&v));
            }
            cur_attr = cond.to_attr;
            if state.is_empty() {
                return Vec::new();
            }
        }

        let mut lids: Vec<u32> = state.into_iter().map(|(lid, _)| lid).collect();
        lids.sort_unstable();
        lids.dedup();
        lids
    }

    /// Exact support of a chain: distinct log rows it reaches.
    pub fn support(&self, path: &Path) -> u64 {
        self.surviving_lids(path).len() as u64
    }

    pub fn support_fraction(&self, count: u64) -> f64 {
        let n = self.db.log().len();
        if n == 0 {
            0.0
        } else {
            count as f64 / n as f64
        }
    }

    /// Support via the shared cache, keyed by canonical identity.
    pub fn support_cached(&self, path: &Path, cache: &SupportCache) -> SupportResult {
        let key = path.canonical_key(&self.db.catalog);
        if let Some(count) = cache.get(&key) {
            return SupportResult { count, fraction: self.support_fraction(count), from_cache: true };
        }
        let count = self.support(path);
        cache.insert(key, count);
        SupportResult { count, fraction: self.support_fraction(count), from_cache: false }
    }

    /// Cheap upper-bound-ish guess of a chain's support, for skip decisions.
    ///
    /// Uses the containment heuristic on distinct-value counts; when every
    /// involved relation is small the exact count is cheap enough to return
    /// instead. Mis-estimates only affect performance, never results.
    pub fn estimate(&self, path: &Path) -> f64 {
        const EXACT_THRESHOLD: usize = 1000;
        let log = self.db.log();
        let involved_rows = path
            .instances()
            .iter()
            .map(|i| self.db.relation(i.table).len())
            .max()
            .unwrap_or(0);
        if involved_rows < EXACT_THRESHOLD {
            return self.support(path) as f64;
        }
        if path.instances().iter().any(|i| self.db.relation(i.table).is_empty()) {
            return 0.0;
        }

        let n = log.len() as f64;
        let mut est = n;
        let mut d_state = self.ndv_for(path.instance(0).table, path.start.attr) as f64;
        let mut cur_attr = path.start.attr;
        for cond in path.conds() {
            let from_table = path.instance(cond.from_inst).table;
            if cond.from_attr != cur_attr {
                d_state = self.ndv_for(from_table, cond.from_attr) as f64;
            }
            if d_state <= 0.0 {
                return 0.0;
            }
            if cond.to_inst == 0 {
                let d_end = self.ndv_for(path.instance(0).table, cond.to_attr) as f64;
                est *= 1.0 / d_state.max(d_end).max(1.0);
            } else {
                let to_table = path.instance(cond.to_inst).table;
                let d_to = self.ndv_for(to_table, cond.to_attr) as f64;
                est *= (d_to / d_state).min(1.0);
                d_state = d_state.min(d_to);
            }
            cur_attr = cond.to_attr;
        }
        est.clamp(0.0, n)
    }

    /// Distinct log rows (row ids, ascending) explained by a template.
    pub fn explained_lids(&self, template: &Template) -> Vec<u32> {
        if template.filters.is_empty() {
            return self.surviving_lids(&template.path);
        }
        // Filters need concrete rows: depth-first join with early exit per lid.
        let log = self.db.log();
        let mut out = Vec::new();
        for lid in 0..log.len() as u32 {
            if self.find_first_assignment(template, lid).is_some() {
                out.push(lid);
            }
        }
        out
    }

    /// Support of a template, filters included.
    pub fn template_support(&self, template: &Template) -> u64 {
        self.explained_lids(template).len() as u64
    }

    fn log_relation(&self) -> &Relation {
        self.db.log()
    }

    /// Schedule: filter index -> number of conditions after which both its
    /// instances are bound.
    fn filter_schedule(&self, template: &Template) -> Vec<Vec<usize>> {
        let n_conds = template.path.conds().len();
        let mut bound_at = vec![0usize; template.path.instances().len()];
        for (i, c) in template.path.conds().iter().enumerate() {
            if c.to_inst != 0 {
                bound_at[c.to_inst] = i + 1;
            }
        }
        let mut schedule = vec![Vec::new(); n_conds + 1];
        for (fi, f) in template.filters.iter().enumerate() {
            let at = bound_at[f.left.0].max(bound_at[f.right.0]);
            schedule[at].push(fi);
        }
        schedule
    }

    fn eval_filter(&self, template: &Template, fi: usize, assignment: &[u32]) -> bool {
        let f = &template.filters[fi];
        let lv = self
            .db
            .relation(template.path.instance(f.left.0).table)
            .cell(assignment[f.left.0] as usize, f.left.1 as usize);
        let rv = self
            .db
            .relation(template.path.instance(f.right.0).table)
            .cell(assignment[f.right.0] as usize, f.right.1 as usize);
        match lv.partial_cmp_same_kind(&rv) {
            Some(ord) => f.op.eval(ord),
            None => false,
        }
    }

    /// Depth-first search for assignments. `emit` returns false to stop early.
    fn search_assignments<F>(&self, template: &Template, lid: u32, emit: &mut F)
    where
        F: FnMut(&[u32]) -> bool,
    {
        let path = &template.path;
        let schedule = self.filter_schedule(template);
        let mut assignment = vec![0u32; path.instances().len()];
        assignment[0] = lid;
        if !schedule[0].iter().all(|&fi| self.eval_filter(template, fi, &assignment)) {
            return;
        }
        self.dfs(template, &schedule, 0, &mut assignment, &mut false, emit);
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs<F>(
        &self,
        template: &Template,
        schedule: &[Vec<usize>],
        depth: usize,
        assignment: &mut Vec<u32>,
        stop: &mut bool,
        emit: &mut F,
    ) where
        F: FnMut(&[u32]) -> bool,
    {
        if *stop {
            return;
        }
        let path = &template.path;
        if depth == path.conds().len() {
            if !emit(assignment) {
                *stop = true;
            }
            return;
        }
        let cond = &path.conds()[depth];
        let from_table = path.instance(cond.from_inst).table;
        let v = self
            .db
            .relation(from_table)
            .cell(assignment[cond.from_inst] as usize, cond.from_attr as usize);
        if cond.to_inst == 0 {
            let lv = self.log_relation().cell(assignment[0] as usize, cond.to_attr as usize);
            if lv == v
                && schedule[depth + 1].iter().all(|&fi| self.eval_filter(template, fi, assignment))
            {
                self.dfs(template, schedule, depth + 1, assignment, stop, emit);
            }
            return;
        }
        let to_table = path.instance(cond.to_inst).table;
        let index = self.row_index_for(to_table, cond.to_attr);
        let Some(rows) = index.get(&v) else { return };
        for &row in rows {
            assignment[cond.to_inst] = row;
            if schedule[depth + 1].iter().all(|&fi| self.eval_filter(template, fi, assignment)) {
                self.dfs(template, schedule, depth + 1, assignment, stop, emit);
                if *stop {
                    return;
                }
            }
        }
    }

    fn find_first_assignment(&self, template: &Template, lid: u32) -> Option<Vec<u32>> {
        let mut found = None;
        self.search_assignments(template, lid, &mut |a| {
            found = Some(a.to_vec());
            false
        });
        found
    }

    /// Attributes a template projects: everything referenced by conditions,
    /// filters, or placeholders, ordered by instance then attribute.
    fn projected_attrs(&self, template: &Template) -> Vec<(usize, u32)> {
        let mut attrs: Vec<(usize, u32)> = Vec::new();
        let push = |p: (usize, u32), attrs: &mut Vec<(usize, u32)>| {
            if !attrs.contains(&p) {
                attrs.push(p);
            }
        };
        for c in template.path.conds() {
            push((c.from_inst, c.from_attr), &mut attrs);
            push((c.to_inst, c.to_attr), &mut attrs);
        }
        for f in &template.filters {
            push(f.left, &mut attrs);
            push(f.right, &mut attrs);
        }
        if let Ok(ps) = template.placeholders(&self.db.catalog) {
            for p in ps {
                push((p.inst, p.attr), &mut attrs);
            }
        }
        attrs.sort();
        attrs
    }

    /// Enumerate concrete instances of a template, optionally for one log id.
    /// Duplicate source rows yield one instance per combination.
    pub fn instances(
        &self,
        template: &Template,
        lid_filter: Option<&str>,
    ) -> Result<Vec<ExplanationInstance>, EvalError> {
        let log = self.log_relation();
        let lid_attr = self.db.catalog.lid_attr();
        let rows: Vec<u32> = match lid_filter {
            Some(wanted) => {
                let row = (0..log.len())
                    .find(|&r| log.cell(r, lid_attr).render(self.db.interner()) == wanted)
                    .ok_or_else(|| EvalError::UnknownLid(wanted.to_owned()))?;
                vec![row as u32]
            }
            None => (0..log.len() as u32).collect(),
        };

        let template_id = template.id(&self.db.catalog);
        let projected = self.projected_attrs(template);
        let mut out = Vec::new();
        for lid in rows {
            self.search_assignments(template, lid, &mut |assignment| {
                let bindings: Vec<(String, String)> = projected
                    .iter()
                    .map(|&(inst, attr)| {
                        let label = template.path.endpoint_label(&self.db.catalog, inst, attr);
                        let table = template.path.instance(inst).table;
                        let v = self
                            .db
                            .relation(table)
                            .cell(assignment[inst] as usize, attr as usize)
                            .render(self.db.interner());
                        (label, v)
                    })
                    .collect();
                let description = template.render_description(&self.db.catalog, |inst, attr| {
                    let table = template.path.instance(inst).table;
                    self.db
                        .relation(table)
                        .cell(assignment[inst] as usize, attr as usize)
                        .render(self.db.interner())
                });
                out.push(ExplanationInstance {
                    lid: log.cell(lid as usize, lid_attr).render(self.db.interner()),
                    template_id: template_id.clone(),
                    length: template.length(),
                    bindings,
                    description,
                });
                true
            });
        }
        Ok(out)
    }
}

/// Instances of several templates for one log id, merged and ordered by
/// path length, then template identity, then bound values.
pub fn explain_access(
    ctx: &EvalContext<'_>,
    templates: &[Template],
    lid: &str,
) -> Result<Vec<ExplanationInstance>, EvalError> {
    let mut all = Vec::new();
    for t in templates {
        all.extend(ctx.instances(t, Some(lid))?);
    }
    all.sort_by(|a, b| {
        a.length
            .cmp(&b.length)
            .then_with(|| a.template_id.cmp(&b.template_id))
            .then_with(|| a.bindings.cmp(&b.bindings))
    });
    Ok(all)
}
