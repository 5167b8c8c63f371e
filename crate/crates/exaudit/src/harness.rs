//! Measurement harness: fake-access injection, explanation metrics, and
//! run-to-run comparison of mined template sets.
//!
//! Recall alone cannot tell a good template set from `WHERE true`. The
//! counterweight is a fake log: random user/record pairings that keep the
//! real timestamps. A template earns precision by explaining real accesses
//! while rejecting fabricated ones. Recall also comes in a normalized form
//! that only counts accesses whose record appears somewhere else in the
//! database at all — nothing can explain an access with no data behind it,
//! and on sparse databases the raw and normalized numbers differ a lot.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::evaluator::EvalContext;
use crate::schema::SchemaCatalog;
use crate::store::{Database, Relation};
use crate::template::Template;
use crate::value::Value;

/// Replace the log with equally many fabricated accesses: user and record
/// drawn uniformly (record first, then user, per row) from the distinct
/// values in the real log, every other column copied from the same row
/// position. Fake access ids are `F0, F1, …`.
pub fn gen_fake_log(db: &Database, seed: u64) -> Database {
    let catalog = &db.catalog;
    let log = db.log();
    let p_attr = catalog.anchor_start.attr as usize;
    let u_attr = catalog.anchor_end.attr as usize;
    let lid_attr = catalog.lid_attr();

    let patients = sorted_distinct(db, log.column(p_attr));
    let users = sorted_distinct(db, log.column(u_attr));
    let mut interner = db.interner().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut columns: Vec<Vec<Value>> = (0..log.arity()).map(|a| log.column(a).to_vec()).collect();
    for row in 0..log.len() {
        columns[p_attr][row] = patients[rng.gen_range(0..patients.len())];
        columns[u_attr][row] = users[rng.gen_range(0..users.len())];
        columns[lid_attr][row] = match columns[lid_attr][row] {
            Value::Int(_) => Value::Int((log.len() + row) as i64),
            _ => Value::Text(interner.intern(&format!("F{row}"))),
        };
    }
    let fake = Relation::from_columns(catalog.log_table(), columns);
    db.with_log(fake, interner)
}

/// For each log row, whether the accessed record shows up anywhere else:
/// some other table has a column named like the log's record anchor that
/// contains the value. Accesses failing this have nothing to join through,
/// so no template can ever explain them.
pub fn connected_rows(db: &Database) -> Vec<bool> {
    let catalog = &db.catalog;
    let start_name = catalog
        .table(catalog.anchor_start.table)
        .attr_name(catalog.anchor_start.attr as usize)
        .to_owned();
    let mut known: HashSet<Value> = HashSet::new();
    for (idx, decl) in catalog.tables.iter().enumerate() {
        let tid = crate::schema::TableId(idx as u32);
        if tid == catalog.log_table() {
            continue;
        }
        for (attr, (name, _)) in decl.attrs.iter().enumerate() {
            if *name == start_name {
                known.extend(db.relation(tid).column(attr).iter().copied());
            }
        }
    }
    db.log()
        .column(catalog.anchor_start.attr as usize)
        .iter()
        .map(|v| known.contains(v))
        .collect()
}

/// Row indices of each (record, user) pair's earliest access — date order,
/// ties broken by access id — ascending.
pub fn first_accesses(db: &Database) -> Vec<usize> {
    let catalog = &db.catalog;
    let log = db.log();
    let p = log.column(catalog.anchor_start.attr as usize);
    let u = log.column(catalog.anchor_end.attr as usize);
    let dates = log.column(catalog.date_attr());
    let lids = log.column(catalog.lid_attr());

    let earlier = |a: usize, b: usize| -> bool {
        match cmp_rendered(db, &dates[a], &dates[b]) {
            std::cmp::Ordering::Equal => {
                cmp_rendered(db, &lids[a], &lids[b]) == std::cmp::Ordering::Less
            }
            ord => ord == std::cmp::Ordering::Less,
        }
    };
    let mut best: HashMap<(Value, Value), usize> = HashMap::new();
    for row in 0..log.len() {
        best.entry((p[row], u[row]))
            .and_modify(|cur| {
                if earlier(row, *cur) {
                    *cur = row;
                }
            })
            .or_insert(row);
    }
    let mut rows: Vec<usize> = best.into_values().collect();
    rows.sort_unstable();
    rows
}

/// Clone the database keeping only the given log rows (in the given order).
pub fn restrict_log(db: &Database, rows: &[usize]) -> Database {
    let log = db.log();
    let columns = (0..log.arity())
        .map(|a| {
            let col = log.column(a);
            rows.iter().map(|&r| col[r]).collect()
        })
        .collect();
    db.with_log(
        Relation::from_columns(db.catalog.log_table(), columns),
        db.interner().clone(),
    )
}

/// Explanation quality over one log (plus an optional fake log).
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub real_total: usize,
    pub real_explained: usize,
    /// Real accesses whose record has any connecting data.
    pub connected_total: usize,
    pub fake_total: usize,
    pub fake_explained: usize,
    /// real_explained / (real_explained + fake_explained).
    pub precision: Option<f64>,
    /// real_explained / real_total.
    pub recall: Option<f64>,
    /// real_explained / connected_total.
    pub normalized_recall: Option<f64>,
}

/// [`Metrics`] restricted to one template.
#[derive(Debug, Clone, Serialize)]
pub struct TemplateMetrics {
    pub id: String,
    pub length: usize,
    pub real_explained: usize,
    pub fake_explained: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub normalized_recall: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub aggregate: Metrics,
    pub per_template: Vec<TemplateMetrics>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Measure how well `templates` explain the real log and, when given, how
/// often they fall for fabricated accesses. The aggregate counts an access
/// as explained if any template explains it.
pub fn evaluate(real: &Database, fake: Option<&Database>, templates: &[Template]) -> EvaluationReport {
    let real_ctx = EvalContext::new(real);
    let fake_ctx = fake.map(EvalContext::new);
    let real_total = real.log().len();
    let fake_total = fake.map_or(0, |f| f.log().len());
    let connected_total = connected_rows(real).iter().filter(|&&c| c).count();

    let mut real_union: HashSet<u32> = HashSet::new();
    let mut fake_union: HashSet<u32> = HashSet::new();
    let mut per_template = Vec::new();
    for t in templates {
        let real_rows = real_ctx.explained_lids(t);
        let fake_rows = fake_ctx.as_ref().map_or_else(Vec::new, |ctx| ctx.explained_lids(t));
        per_template.push(TemplateMetrics {
            id: t.id(&real.catalog),
            length: t.length(),
            real_explained: real_rows.len(),
            fake_explained: fake_rows.len(),
            precision: fraction(real_rows.len(), real_rows.len() + fake_rows.len()),
            recall: fraction(real_rows.len(), real_total),
            normalized_recall: fraction(real_rows.len(), connected_total),
        });
        real_union.extend(real_rows);
        fake_union.extend(fake_rows);
    }

    let (re, fe) = (real_union.len(), fake_union.len());
    EvaluationReport {
        aggregate: Metrics {
            real_total,
            real_explained: re,
            connected_total,
            fake_total,
            fake_explained: fe,
            precision: fraction(re, re + fe),
            recall: fraction(re, real_total),
            normalized_recall: fraction(re, connected_total),
        },
        per_template,
    }
}

/// How two mined template sets overlap, by canonical identity.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub shared: Vec<String>,
    pub only_first: Vec<String>,
    pub only_second: Vec<String>,
    /// Per template length: (shared, only in first, only in second).
    pub by_length: BTreeMap<usize, (usize, usize, usize)>,
}

impl StabilityReport {
    /// Overlap fraction; `None` when both sets are empty.
    pub fn jaccard(&self) -> Option<f64> {
        fraction(
            self.shared.len(),
            self.shared.len() + self.only_first.len() + self.only_second.len(),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Compare two mined template sets, e.g. from two halves of a log.
pub fn stability(first: &[Template], second: &[Template], catalog: &SchemaCatalog) -> StabilityReport {
    let a: BTreeMap<String, usize> = first.iter().map(|t| (t.id(catalog), t.length())).collect();
    let b: BTreeMap<String, usize> = second.iter().map(|t| (t.id(catalog), t.length())).collect();
    let mut report = StabilityReport {
        shared: Vec::new(),
        only_first: Vec::new(),
        only_second: Vec::new(),
        by_length: BTreeMap::new(),
    };
    for (key, &len) in &a {
        let slot = report.by_length.entry(len).or_insert((0, 0, 0));
        if b.contains_key(key) {
            report.shared.push(key.clone());
            slot.0 += 1;
        } else {
            report.only_first.push(key.clone());
            slot.1 += 1;
        }
    }
    for (key, &len) in &b {
        if !a.contains_key(key) {
            report.only_second.push(key.clone());
            report.by_length.entry(len).or_insert((0, 0, 0)).2 += 1;
        }
    }
    report
}

/// `num / den`, or `None` for an empty denominator.
fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Distinct column values in a stable order (by rendered text within the
/// column's kind), independent of row order.
fn sorted_distinct(db: &Database, column: &[Value]) -> Vec<Value> {
    let mut vals: Vec<Value> = column.to_vec();
    vals.sort_by(|a, b| cmp_rendered(db, a, b));
    vals.dedup();
    vals
}

/// Value order that follows the kind's natural order, falling back to the
/// rendered text for opaque identifiers.
fn cmp_rendered(db: &Database, a: &Value, b: &Value) -> std::cmp::Ordering {
    match (a, b) {
        (Value::Text(x), Value::Text(y)) => {
            db.interner().resolve(*x).cmp(db.interner().resolve(*y))
        }
        _ => a
            .partial_cmp_same_kind(b)
            .expect("log columns hold a single kind"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, EdgeUniverse, OrientedEdge};
    use crate::path::Path;
    use crate::schema::parse_schema;
    use crate::store::StoreBuilder;

    const SCHEMA: &str = "\
table Log
  Lid text key
  Date date
  User text
  Patient text
table Appointments
  Patient text
  Date date
  Doctor text
table Doctor_Info
  Doctor text
  Department text
fk: Log.Patient = Appointments.Patient
fk: Log.User = Appointments.Doctor
fk: Appointments.Doctor = Doctor_Info.Doctor
fk: Log.User = Doctor_Info.Doctor
selfjoin: Doctor_Info.Department
anchors: Log.Patient -> Log.User
";

    fn build(log_csv: &str) -> Database {
        let cat = parse_schema(SCHEMA, "t").unwrap();
        let mut b = StoreBuilder::new(cat);
        b.ingest_csv("Log", log_csv, "log.csv").unwrap();
        b.ingest_csv(
            "Appointments",
            "Patient,Date,Doctor\nAlice,1/1/2010,Dave\nBob,2/2/2010,Mike\n",
            "appointments.csv",
        )
        .unwrap();
        b.ingest_csv("Doctor_Info", "Doctor,Department\nMike,Pediatrics\nDave,Pediatrics\n", "di.csv")
            .unwrap();
        b.seal().unwrap()
    }

    fn fixture() -> Database {
        build("Lid,Date,User,Patient\nL1,1/1/2010,Dave,Alice\nL2,2/2/2010,Dave,Bob\n")
    }

    fn chain(db: &Database, g: &EdgeUniverse, hops: &[((&str, &str), (&str, &str))]) -> Template {
        let cat = &db.catalog;
        let mut p = Path::seed(cat);
        for (from, to) in hops {
            let from = cat.attr_ref(from.0, from.1).unwrap();
            let to = cat.attr_ref(to.0, to.1).unwrap();
            let o = OrientedEdge { edge: g.find_edge(from, to).unwrap(), from, to };
            p = p.extend(cat, g, &o).unwrap();
        }
        Template::new(p)
    }

    fn appointment_template(db: &Database, g: &EdgeUniverse) -> Template {
        chain(db, g, &[
            (("Log", "Patient"), ("Appointments", "Patient")),
            (("Appointments", "Doctor"), ("Log", "User")),
        ])
    }

    fn department_template(db: &Database, g: &EdgeUniverse) -> Template {
        chain(db, g, &[
            (("Log", "Patient"), ("Appointments", "Patient")),
            (("Appointments", "Doctor"), ("Doctor_Info", "Doctor")),
            (("Doctor_Info", "Department"), ("Doctor_Info", "Department")),
            (("Doctor_Info", "Doctor"), ("Log", "User")),
        ])
    }

    #[test]
    fn fake_log_keeps_shape_and_dates() {
        let db = fixture();
        let fake = gen_fake_log(&db, 42);
        assert_eq!(fake.log().len(), 2);
        assert_eq!(fake.log().column(1), db.log().column(1), "dates copy positionally");
        let lids: Vec<String> =
            fake.log().column(0).iter().map(|v| v.render(fake.interner())).collect();
        assert_eq!(lids, ["F0", "F1"]);
        for row in 0..2 {
            let u = fake.log().cell(row, 2).render(fake.interner());
            let p = fake.log().cell(row, 3).render(fake.interner());
            assert!(u == "Dave", "only user in the real log, got {u}");
            assert!(p == "Alice" || p == "Bob", "got {p}");
        }
    }

    #[test]
    fn fake_log_draws_are_uniform() {
        let mut csv = String::from("Lid,Date,User,Patient\n");
        for i in 0..4000 {
            csv.push_str(&format!("L{i},1/1/2010,u{},p{}\n", i % 10, i % 10));
        }
        let db = build(&csv);
        let fake = gen_fake_log(&db, 7);
        let mut user_counts: HashMap<String, usize> = HashMap::new();
        let mut patient_counts: HashMap<String, usize> = HashMap::new();
        for row in 0..4000 {
            *user_counts.entry(fake.log().cell(row, 2).render(fake.interner())).or_default() += 1;
            *patient_counts.entry(fake.log().cell(row, 3).render(fake.interner())).or_default() += 1;
        }
        // Each of the 10 values expects 400 draws, σ = √(4000·0.1·0.9) = 19;
        // allow four σ.
        for counts in [&user_counts, &patient_counts] {
            assert_eq!(counts.len(), 10);
            for (value, &n) in counts {
                assert!((n as f64 - 400.0).abs() < 76.0, "{value} drawn {n} times");
            }
        }
    }

    #[test]
    fn fake_log_is_seeded() {
        let db = fixture();
        let a = gen_fake_log(&db, 1);
        let b = gen_fake_log(&db, 1);
        let c = gen_fake_log(&db, 2);
        assert_eq!(a.to_csv(a.catalog.log_table()), b.to_csv(b.catalog.log_table()));
        assert_ne!(a.to_csv(a.catalog.log_table()), c.to_csv(c.catalog.log_table()));
    }

    #[test]
    fn metrics_balance_real_against_fake() {
        let db = fixture();
        // Hand-built fake: Dave looks at Alice (has an appointment with
        // him — plausible), Mike looks at Bob (also his patient).
        let fake = build("Lid,Date,User,Patient\nF1,1/1/2010,Dave,Alice\nF2,2/2/2010,Mike,Bob\n");
        let g = build_graph(&db.catalog);
        let appt = appointment_template(&db, &g);
        let dept = department_template(&db, &g);

        let report = evaluate(&db, Some(&fake), &[appt, dept]);
        let a = &report.per_template[0];
        assert_eq!((a.real_explained, a.fake_explained), (1, 2));
        assert_eq!(a.precision, Some(1.0 / 3.0));
        assert_eq!(a.recall, Some(0.5));
        assert_eq!(a.normalized_recall, Some(0.5));
        let d = &report.per_template[1];
        assert_eq!((d.real_explained, d.fake_explained), (2, 2));
        assert_eq!(d.precision, Some(0.5));
        assert_eq!(d.recall, Some(1.0));

        assert_eq!(report.aggregate.real_explained, 2);
        assert_eq!(report.aggregate.fake_explained, 2);
        assert_eq!(report.aggregate.precision, Some(0.5));
        assert_eq!(report.aggregate.recall, Some(1.0));
    }

    #[test]
    fn unexplainable_accesses_separate_the_recalls() {
        // Carol has no appointment: her access can never be explained.
        let db = build(
            "Lid,Date,User,Patient\nL1,1/1/2010,Dave,Alice\nL2,2/2/2010,Dave,Bob\nL3,3/3/2010,Dave,Carol\n",
        );
        let g = build_graph(&db.catalog);
        let report = evaluate(&db, None, &[department_template(&db, &g)]);
        assert_eq!(report.aggregate.connected_total, 2);
        assert_eq!(report.aggregate.recall, Some(2.0 / 3.0));
        assert_eq!(report.aggregate.normalized_recall, Some(1.0));
        assert_eq!(report.aggregate.fake_total, 0);
        let t = &report.per_template[0];
        assert!(t.recall.unwrap() <= t.normalized_recall.unwrap());
    }

    #[test]
    fn empty_denominators_yield_no_metric() {
        let db = fixture();
        let report = evaluate(&db, None, &[]);
        assert_eq!(report.aggregate.precision, None, "nothing explained anywhere");
        assert_eq!(report.aggregate.recall, Some(0.0));
        assert!(report.per_template.is_empty());
    }

    #[test]
    fn first_accesses_pick_the_earliest_row() {
        let db = build(
            "Lid,Date,User,Patient\n\
             L1,2/2/2010,Dave,Alice\n\
             L2,1/1/2010,Dave,Bob\n\
             L3,1/1/2010,Mike,Alice\n\
             A9,1/1/2010,Dave,Alice\n",
        );
        // (Alice, Dave) repeats: the 2/2 row loses to 1/1, and would lose a
        // date tie to the smaller access id.
        assert_eq!(first_accesses(&db), vec![1, 2, 3]);
    }

    #[test]
    fn restrict_log_keeps_rows_and_tables() {
        let db = build(
            "Lid,Date,User,Patient\nL1,1/1/2010,Dave,Alice\nL2,2/2/2010,Dave,Bob\nL3,3/3/2010,Mike,Bob\n",
        );
        let half = restrict_log(&db, &[0, 2]);
        assert_eq!(half.log().len(), 2);
        assert_eq!(half.log().cell(1, 0).render(half.interner()), "L3");
        let appts = half.relation(half.catalog.table_id("Appointments").unwrap());
        assert_eq!(appts.len(), 2, "non-log tables are untouched");
    }

    #[test]
    fn stability_classifies_the_overlap() {
        let db = fixture();
        let g = build_graph(&db.catalog);
        let appt = appointment_template(&db, &g);
        let dept = department_template(&db, &g);
        let report = stability(
            &[appt.clone(), dept.clone()],
            std::slice::from_ref(&dept),
            &db.catalog,
        );
        assert_eq!(report.shared, vec![dept.id(&db.catalog)]);
        assert_eq!(report.only_first, vec![appt.id(&db.catalog)]);
        assert!(report.only_second.is_empty());
        assert_eq!(report.by_length[&2], (0, 1, 0));
        assert_eq!(report.by_length[&4], (1, 0, 0));
        assert_eq!(report.jaccard(), Some(0.5));
    }
}
