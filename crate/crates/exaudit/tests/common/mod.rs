//! Shared test support: randomized relational scenarios and a brute-force
//! reference implementation for chain discovery and support counting.
//!
//! The reference deliberately shares nothing with the mining engine beyond
//! the parsed schema and join graph: chains are enumerated by exhaustive
//! depth-first search with no pruning, support is counted by a nested-loop
//! existence check per log row, and canonical identities are rebuilt from
//! scratch. Agreement between the two is what the equivalence suites assert.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use exaudit::{
    build_graph, mine, parse_schema, Algorithm, Database, EdgeId, EdgeKind, EdgeUniverse,
    EvalContext, MiningConfig, SchemaCatalog, StoreBuilder, TableId,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A generated schema plus matching data, small enough to brute-force.
pub struct Scenario {
    pub db: Database,
    pub schema: String,
}

/// Random schema (log + 1..=3 extra tables, text attributes, assorted join
/// declarations) filled with rows drawn from a small shared value pool so
/// that joins actually connect.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_extra = rng.gen_range(1..=3usize);
    let arities: Vec<usize> = (0..n_extra).map(|_| rng.gen_range(2..=4usize)).collect();

    let mut schema = String::from(
        "table Log\n  Lid text key\n  Date date\n  User text\n  Patient text\n",
    );
    for (t, arity) in arities.iter().enumerate() {
        schema.push_str(&format!("table T{}\n", t + 1));
        for a in 0..*arity {
            schema.push_str(&format!("  A{a} text\n"));
        }
    }

    // Join declarations. Duplicate unordered pairs are avoided so the schema
    // text stays an honest description of the join graph.
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    fn declare(
        pairs: &mut BTreeSet<(String, String)>,
        schema: &mut String,
        kind: &str,
        a: String,
        b: String,
    ) {
        let (lo, hi) = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        if pairs.insert((lo, hi)) {
            schema.push_str(&format!("{kind}: {a} = {b}\n"));
        }
    }

    for (t, arity) in arities.iter().enumerate() {
        let name = format!("T{}", t + 1);
        if rng.gen_bool(0.7) {
            let a = rng.gen_range(0..*arity);
            declare(&mut pairs, &mut schema, "fk", "Log.Patient".into(), format!("{name}.A{a}"));
        }
        if rng.gen_bool(0.7) {
            let a = rng.gen_range(0..*arity);
            declare(&mut pairs, &mut schema, "fk", format!("{name}.A{a}"), "Log.User".into());
        }
    }
    for i in 0..n_extra {
        for j in (i + 1)..n_extra {
            if rng.gen_bool(0.5) {
                let a = rng.gen_range(0..arities[i]);
                let b = rng.gen_range(0..arities[j]);
                declare(
                    &mut pairs,
                    &mut schema,
                    "fk",
                    format!("T{}.A{a}", i + 1),
                    format!("T{}.A{b}", j + 1),
                );
            }
        }
    }
    for (t, arity) in arities.iter().enumerate() {
        if rng.gen_bool(0.4) {
            let a = rng.gen_range(0..*arity);
            schema.push_str(&format!("selfjoin: T{}.A{a}\n", t + 1));
        }
    }
    if rng.gen_bool(0.2) {
        schema.push_str("selfjoin: Log.Patient\n");
    }
    if rng.gen_bool(0.2) {
        schema.push_str("selfjoin: Log.User\n");
    }
    if rng.gen_bool(0.15) {
        declare(&mut pairs, &mut schema, "relation", "Log.Patient".into(), "Log.User".into());
    }
    // Guarantee the walk can leave the record anchor and reach the user
    // anchor; otherwise the instance is trivially empty.
    if !pairs.iter().any(|(a, b)| a == "Log.Patient" || b == "Log.Patient") {
        declare(&mut pairs, &mut schema, "fk", "Log.Patient".into(), "T1.A0".into());
    }
    if !pairs.iter().any(|(a, b)| a == "Log.User" || b == "Log.User") {
        let last = arities[n_extra - 1] - 1;
        declare(&mut pairs, &mut schema, "fk", format!("T{n_extra}.A{last}"), "Log.User".into());
    }
    schema.push_str("anchors: Log.Patient -> Log.User\n");

    let catalog = parse_schema(&schema, "random").unwrap_or_else(|e| {
        panic!("generated schema must parse: {e}\n{schema}");
    });

    // Data: one shared pool keeps join hit rates high at tiny sizes.
    let pool: Vec<String> = (0..rng.gen_range(2..=6usize)).map(|v| format!("v{v}")).collect();
    let pick = |rng: &mut ChaCha8Rng| pool[rng.gen_range(0..pool.len())].clone();

    let log_rows = rng.gen_range(5..=200usize);
    let mut log_csv = String::from("Lid,Date,User,Patient\n");
    for i in 0..log_rows {
        let day = rng.gen_range(1..=28u32);
        let user = pick(&mut rng);
        let patient = pick(&mut rng);
        log_csv.push_str(&format!("L{i},2010-01-{day:02},{user},{patient}\n"));
    }

    let mut builder = StoreBuilder::new(catalog);
    builder.ingest_csv("Log", &log_csv, "log").expect("log ingests");
    for (t, arity) in arities.iter().enumerate() {
        let mut csv: String =
            (0..*arity).map(|a| format!("A{a}")).collect::<Vec<_>>().join(",");
        csv.push('\n');
        for _ in 0..rng.gen_range(0..=12usize) {
            let row: Vec<String> = (0..*arity).map(|_| pick(&mut rng)).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        builder.ingest_csv(&format!("T{}", t + 1), &csv, "t").expect("table ingests");
    }
    let db = builder.seal().expect("scenario seals");
    Scenario { db, schema }
}

/// One equality condition of a reference walk, in instance coordinates.
#[derive(Debug, Clone, Copy)]
pub struct WalkCond {
    pub from_inst: usize,
    pub from_attr: u32,
    pub to_inst: usize,
    pub to_attr: u32,
}

/// A closed reference walk: bound instances plus the chain of conditions.
#[derive(Debug, Clone)]
pub struct Walk {
    /// `(table, display ordinal)`; index 0 is the anchor log instance.
    pub insts: Vec<(TableId, u32)>,
    pub conds: Vec<WalkCond>,
}

#[derive(Clone)]
struct Frontier {
    insts: Vec<(TableId, u32)>,
    touched: Vec<Vec<u32>>,
    conds: Vec<WalkCond>,
    used: Vec<EdgeId>,
    at: usize,
    at_attr: u32,
}

/// Exhaustively enumerate every closed chain of at most `max_len` conditions,
/// walking the record anchor towards the user anchor under the chain rules.
pub fn enumerate_walks(catalog: &SchemaCatalog, universe: &EdgeUniverse, max_len: usize) -> Vec<Walk> {
    let log = catalog.log_table();
    let seed = Frontier {
        insts: vec![(log, 0)],
        touched: vec![vec![catalog.anchor_start.attr]],
        conds: Vec::new(),
        used: Vec::new(),
        at: 0,
        at_attr: catalog.anchor_start.attr,
    };
    let mut out = Vec::new();
    grow(catalog, universe, &seed, max_len, &mut out);
    out
}

fn grow(
    catalog: &SchemaCatalog,
    universe: &EdgeUniverse,
    walk: &Frontier,
    budget: usize,
    out: &mut Vec<Walk>,
) {
    if budget == 0 {
        return;
    }
    let log = catalog.log_table();
    for id in 0..universe.len() {
        let id = EdgeId(id as u32);
        if walk.used.contains(&id) {
            continue;
        }
        // A non-anchor log alias may only take part in declared self-joins.
        let (at_table, at_label) = walk.insts[walk.at];
        if at_table == log && at_label > 0 && universe.edge(id).kind != EdgeKind::SelfJoin {
            continue;
        }
        for o in universe.orientations(id) {
            if o.from.table != at_table {
                continue;
            }
            if walk.conds.is_empty() && o.from != catalog.anchor_start {
                continue;
            }
            let touched = &walk.touched[walk.at];
            if o.from.attr != walk.at_attr && (touched.len() >= 2 || touched.contains(&o.from.attr)) {
                continue;
            }
            if o.to == catalog.anchor_end {
                // The user anchor always closes the chain onto instance 0.
                let mut conds = walk.conds.clone();
                conds.push(WalkCond {
                    from_inst: walk.at,
                    from_attr: o.from.attr,
                    to_inst: 0,
                    to_attr: catalog.anchor_end.attr,
                });
                out.push(Walk { insts: walk.insts.clone(), conds });
                continue;
            }
            if o.to.table == log && universe.edge(id).kind != EdgeKind::SelfJoin {
                continue;
            }
            let existing = walk.insts.iter().filter(|(t, _)| *t == o.to.table).count();
            if existing >= 2 {
                continue;
            }
            let label = if o.to.table == log { existing as u32 } else { existing as u32 + 1 };
            let mut next = walk.clone();
            if o.from.attr != next.at_attr {
                next.touched[next.at].push(o.from.attr);
            }
            next.insts.push((o.to.table, label));
            next.touched.push(vec![o.to.attr]);
            next.conds.push(WalkCond {
                from_inst: walk.at,
                from_attr: o.from.attr,
                to_inst: next.insts.len() - 1,
                to_attr: o.to.attr,
            });
            next.used.push(id);
            next.at = next.insts.len() - 1;
            next.at_attr = o.to.attr;
            grow(catalog, universe, &next, budget - 1, out);
        }
    }
}

/// Distinct non-exempt tables a walk touches (aliases count once).
pub fn walk_tables(catalog: &SchemaCatalog, walk: &Walk) -> usize {
    let mut seen: BTreeSet<TableId> = BTreeSet::new();
    for (t, _) in &walk.insts {
        if !catalog.is_exempt(*t) {
            seen.insert(*t);
        }
    }
    seen.len()
}

/// Log rows (by index) for which some assignment of rows to the walk's other
/// instances satisfies every condition. Plain nested-loop search.
pub fn walk_rows(db: &Database, walk: &Walk) -> BTreeSet<usize> {
    let log_len = db.log().len();
    let mut rows = BTreeSet::new();
    for r0 in 0..log_len {
        let mut bound: Vec<Option<usize>> = vec![None; walk.insts.len()];
        bound[0] = Some(r0);
        if satisfiable(db, walk, 0, &mut bound) {
            rows.insert(r0);
        }
    }
    rows
}

fn satisfiable(db: &Database, walk: &Walk, idx: usize, bound: &mut Vec<Option<usize>>) -> bool {
    let Some(c) = walk.conds.get(idx) else { return true };
    let have = db
        .relation(walk.insts[c.from_inst].0)
        .cell(bound[c.from_inst].expect("chain order binds sources first"), c.from_attr as usize);
    let rel = db.relation(walk.insts[c.to_inst].0);
    if let Some(r) = bound[c.to_inst] {
        return rel.cell(r, c.to_attr as usize) == have && satisfiable(db, walk, idx + 1, bound);
    }
    for r in 0..rel.len() {
        if rel.cell(r, c.to_attr as usize) == have {
            bound[c.to_inst] = Some(r);
            if satisfiable(db, walk, idx + 1, bound) {
                bound[c.to_inst] = None;
                return true;
            }
        }
    }
    bound[c.to_inst] = None;
    false
}

/// Canonical identity of a walk: minimum, over swaps of same-table alias
/// pairs (the anchor stays fixed), of the sorted endpoint-normalized
/// condition strings.
pub fn walk_key(catalog: &SchemaCatalog, walk: &Walk) -> String {
    let mut by_table: BTreeMap<TableId, Vec<usize>> = BTreeMap::new();
    for (idx, (t, _)) in walk.insts.iter().enumerate().skip(1) {
        by_table.entry(*t).or_default().push(idx);
    }
    let swappable: Vec<&Vec<usize>> = by_table.values().filter(|g| g.len() == 2).collect();

    let mut best: Option<String> = None;
    for mask in 0..(1u32 << swappable.len()) {
        let mut labels: Vec<u32> = walk.insts.iter().map(|(_, l)| *l).collect();
        for (bit, group) in swappable.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                labels.swap(group[0], group[1]);
            }
        }
        let mut conds: Vec<String> = walk
            .conds
            .iter()
            .map(|c| {
                let name = |inst: usize, attr: u32| {
                    let t = catalog.table(walk.insts[inst].0);
                    format!("{}#{}.{}", t.name, labels[inst], t.attr_name(attr as usize))
                };
                let a = name(c.from_inst, c.from_attr);
                let b = name(c.to_inst, c.to_attr);
                if a <= b {
                    format!("{a}={b}")
                } else {
                    format!("{b}={a}")
                }
            })
            .collect();
        conds.sort();
        let key = conds.join(";");
        if best.as_ref().map_or(true, |b| key < *b) {
            best = Some(key);
        }
    }
    best.expect("at least the identity relabelling")
}

/// Reference answer: canonical key of every closed chain within the length
/// and table budgets, mapped to the exact set of log rows it explains.
/// No support threshold is applied here; callers filter.
pub fn reference_mine(
    db: &Database,
    max_len: usize,
    max_tables: usize,
) -> BTreeMap<String, BTreeSet<usize>> {
    let universe = build_graph(&db.catalog);
    let mut out: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    for walk in enumerate_walks(&db.catalog, &universe, max_len) {
        if walk_tables(&db.catalog, &walk) > max_tables {
            continue;
        }
        let key = walk_key(&db.catalog, &walk);
        let rows = walk_rows(db, &walk);
        if let Some(existing) = out.get(&key) {
            assert_eq!(
                existing, &rows,
                "chains with the same identity must explain the same rows: {key}"
            );
        } else {
            out.insert(key, rows);
        }
    }
    out
}

/// A support fraction that makes the miner's absolute threshold land exactly
/// on `s_abs` for a log of `rows` rows.
pub fn fraction_for(s_abs: u64, rows: usize) -> f64 {
    assert!(s_abs >= 1 && rows >= 1 && s_abs <= rows as u64);
    (s_abs as f64 - 0.5) / rows as f64
}

/// Engine output indexed by identity: support count plus explained row set.
pub fn engine_mine(
    db: &Database,
    s_abs: u64,
    max_length: usize,
    max_tables: usize,
    algorithm: Algorithm,
) -> BTreeMap<String, (u64, BTreeSet<usize>)> {
    let cfg = MiningConfig {
        support_fraction: fraction_for(s_abs, db.log().len()),
        max_length,
        max_tables,
        algorithm,
        ..MiningConfig::default()
    };
    let out = mine(db, &cfg).expect("mining succeeds");
    let ctx = EvalContext::new(db);
    out.templates
        .iter()
        .map(|t| {
            let rows: BTreeSet<usize> =
                ctx.explained_lids(t).into_iter().map(|r| r as usize).collect();
            (t.id(&db.catalog), (t.support.expect("mined support").count, rows))
        })
        .collect()
}

/// Assert that one engine run agrees with the reference on chains, supports,
/// and explained rows above the given absolute threshold.
pub fn check_scenario(
    db: &Database,
    schema: &str,
    s_abs: u64,
    max_length: usize,
    max_tables: usize,
    algorithm: Algorithm,
) {
    let reference: BTreeMap<String, (u64, BTreeSet<usize>)> =
        reference_mine(db, max_length, max_tables)
            .into_iter()
            .filter(|(_, rows)| rows.len() as u64 >= s_abs)
            .map(|(k, rows)| (k, (rows.len() as u64, rows)))
            .collect();
    let mined = engine_mine(db, s_abs, max_length, max_tables, algorithm);
    assert_eq!(
        mined.keys().collect::<Vec<_>>(),
        reference.keys().collect::<Vec<_>>(),
        "chain sets differ (S={s_abs}, M={max_length}, T={max_tables})\n{schema}"
    );
    for (key, (support, rows)) in &reference {
        let (mined_support, mined_rows) = &mined[key];
        assert_eq!(mined_support, support, "support differs for {key}\n{schema}");
        assert_eq!(mined_rows, rows, "explained rows differ for {key}\n{schema}");
    }
}
