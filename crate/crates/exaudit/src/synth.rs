//! Synthetic hospital-style workloads with known ground truth.
//!
//! Generated databases come with an answer key: every access is labelled
//! with the reason it was generated, and the shapes that should explain the
//! non-noise accesses are written down as canonical template identities. A
//! mining run over the output can then be graded — did it recover every
//! planted shape, and does what it found explain the labelled accesses?
//!
//! The world model: users belong to teams, teams belong to departments, and
//! each patient is looked after by one home team. Accesses happen for four
//! reasons, drawn by a configurable mix:
//!
//! * **direct** — a user touches a patient of their own team and leaves an
//!   event row (appointment, lab, …) connecting them;
//! * **collaborator** — a teammate (or, some of the time, a colleague from
//!   another team in the department) opens the record of a patient whose
//!   event names the original user;
//! * **repeat** — a user re-opens a record they or a collaborator already
//!   opened; no new event row is written, the original one still explains
//!   the pair;
//! * **noise** — a uniformly random user/patient pairing with no supporting
//!   data, which nothing should explain.
//!
//! The planted shapes are the length-2 direct chain per event table plus,
//! per event table, the length-4 chains that route through a shared group
//! (the mined Groups relation) or a shared department. The Groups relation
//! itself ships header-only: it is the grouping stage's job to fill it.

use std::collections::BTreeMap;
use std::io;
use std::path::Path as FsPath;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::graph::{build_graph, EdgeUniverse, OrientedEdge};
use crate::path::Path;
use crate::schema::SchemaCatalog;
use crate::store::{Database, StoreBuilder};

/// The six event tables every synthetic database carries.
pub const EVENT_TABLES: [&str; 6] =
    ["Appointments", "Visits", "Documents", "Labs", "Medications", "Radiology"];

/// Knobs for the generator. `Default` is the bench scale (~10,000 accesses);
/// [`SyntheticSpec::desk_scale`] is the ~100,000-access configuration.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub users: usize,
    pub patients: usize,
    pub departments: usize,
    /// Teams; assigned round-robin to departments.
    pub groups: usize,
    /// Non-repeat accesses per (user × patient) cell; total rows come out
    /// to `density · users · patients / (1 − repeat share)`.
    pub density: f64,
    /// Probability of direct, collaborator, repeat, noise (normalized).
    pub reason_mix: [f64; 4],
    /// Probability a collaborator comes from another team in the same
    /// department rather than the user's own team.
    pub intra_dept_collab: f64,
    /// Event-table routing probabilities, one per [`EVENT_TABLES`] entry.
    pub event_mix: [f64; 6],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            users: 400,
            patients: 3000,
            departments: 8,
            groups: 40,
            density: 0.0066667,
            reason_mix: [0.4, 0.3, 0.2, 0.1],
            intra_dept_collab: 0.15,
            event_mix: [0.3, 0.1, 0.2, 0.15, 0.15, 0.1],
        }
    }
}

impl SyntheticSpec {
    /// The large configuration: ~100,000 accesses over 1,200 users.
    pub fn desk_scale() -> Self {
        SyntheticSpec {
            users: 1200,
            patients: 30000,
            density: 0.00222,
            ..SyntheticSpec::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.users == 0 || self.patients == 0 || self.departments == 0 || self.groups == 0 {
            return Err(ConfigError::Other("population sizes must be positive".into()));
        }
        if !(self.density > 0.0) {
            return Err(ConfigError::Other("density must be positive".into()));
        }
        let sum: f64 = self.reason_mix.iter().sum();
        if self.reason_mix.iter().any(|&p| p < 0.0) || sum <= 0.0 {
            return Err(ConfigError::Other("reason mix must be nonnegative and nonempty".into()));
        }
        if self.reason_mix[2] / sum >= 1.0 {
            return Err(ConfigError::Other("a log cannot consist only of repeats".into()));
        }
        if !(0.0..=1.0).contains(&self.intra_dept_collab) {
            return Err(ConfigError::Other("intra-department share must be a probability".into()));
        }
        if self.event_mix.iter().any(|&p| p < 0.0) || self.event_mix.iter().sum::<f64>() <= 0.0 {
            return Err(ConfigError::Other("event mix must be nonnegative and nonempty".into()));
        }
        Ok(())
    }

    /// Total log rows the spec asks for.
    pub fn rows(&self) -> usize {
        let sum: f64 = self.reason_mix.iter().sum();
        let repeat = self.reason_mix[2] / sum;
        let base = self.density * self.users as f64 * self.patients as f64;
        (base / (1.0 - repeat)).round().max(1.0) as usize
    }
}

/// A shape the generator guarantees is in the data, by canonical identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedShape {
    pub name: String,
    pub length: usize,
    pub key: String,
}

/// The answer key for one generated database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted: Vec<PlantedShape>,
    /// Reason per log row, in row order (`direct`, `collaborator`,
    /// `repeat`, `noise`).
    pub reasons: Vec<String>,
    pub counts: BTreeMap<String, usize>,
}

impl GroundTruth {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ground truth serialization")
    }

    pub fn from_json(text: &str) -> Result<GroundTruth, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Keys of the planted shapes of a given length.
    pub fn keys_of_length(&self, length: usize) -> Vec<&str> {
        self.planted
            .iter()
            .filter(|p| p.length == length)
            .map(|p| p.key.as_str())
            .collect()
    }
}

/// One generated workload: schema text, per-table CSV contents (keyed by
/// table name), and the answer key.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub schema: String,
    pub tables: BTreeMap<String, String>,
    pub truth: GroundTruth,
}

impl SyntheticData {
    /// Write `schema.txt`, one `<table>.csv` per table, and
    /// `groundtruth.json` into a directory.
    pub fn write_dir(&self, dir: &FsPath) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("schema.txt"), &self.schema)?;
        for (table, csv) in &self.tables {
            std::fs::write(dir.join(format!("{}.csv", table.to_lowercase())), csv)?;
        }
        std::fs::write(dir.join("groundtruth.json"), self.truth.to_json())?;
        Ok(())
    }

    /// Load the workload straight into a database, no filesystem involved.
    pub fn database(&self) -> Database {
        let catalog = crate::schema::parse_schema(&self.schema, "synthetic").expect("own schema");
        let mut builder = StoreBuilder::new(catalog);
        for (table, csv) in &self.tables {
            builder
                .ingest_csv(table, csv, &format!("{}.csv", table.to_lowercase()))
                .expect("own data");
        }
        builder.seal().expect("own data")
    }
}

/// Generate a workload. The same spec and seed always produce byte-identical
/// output.
pub fn generate(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData, ConfigError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Population layout: user → team, team → department, patient → home team.
    let user_group: Vec<usize> = (0..spec.users).map(|u| u % spec.groups).collect();
    let group_dept: Vec<usize> = (0..spec.groups).map(|g| g % spec.departments).collect();
    let mut group_members: Vec<Vec<usize>> = vec![Vec::new(); spec.groups];
    let mut dept_members: Vec<Vec<usize>> = vec![Vec::new(); spec.departments];
    for u in 0..spec.users {
        group_members[user_group[u]].push(u);
        dept_members[group_dept[user_group[u]]].push(u);
    }
    let group_patients: Vec<Vec<usize>> = {
        let mut v: Vec<Vec<usize>> = vec![Vec::new(); spec.groups];
        for p in 0..spec.patients {
            v[p % spec.groups].push(p);
        }
        v
    };

    let user_name = |u: usize| format!("u{u:04}");
    let patient_name = |p: usize| format!("p{p:05}");
    let epoch = NaiveDate::from_ymd_opt(2010, 1, 1).expect("fixed date");

    let rows = spec.rows();
    let mix_sum: f64 = spec.reason_mix.iter().sum();
    let event_sum: f64 = spec.event_mix.iter().sum();

    let mut log_csv = String::from("Lid,Date,User,Patient\n");
    let mut event_csv: Vec<String> =
        EVENT_TABLES.iter().map(|_| String::from("Patient,Date,User\n")).collect();
    let mut reasons: Vec<String> = Vec::with_capacity(rows);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    // (user, patient) pairs eligible for a repeat access.
    let mut history: Vec<(usize, usize)> = Vec::new();

    for row in 0..rows {
        let date = epoch + Days::new(rng.gen_range(0..365));
        let mut reason = draw(&mut rng, &spec.reason_mix, mix_sum);
        if reason == 2 && history.is_empty() {
            reason = 0; // nothing to repeat yet
        }
        let (user, patient) = match reason {
            0 | 1 => {
                // An event row ties the acting user to one of their team's
                // patients; for collaborator rows a colleague does the
                // looking while the event still names the original user.
                let actor = rng.gen_range(0..spec.users);
                let pool = &group_patients[user_group[actor]];
                let patient = if pool.is_empty() {
                    rng.gen_range(0..spec.patients)
                } else {
                    pool[rng.gen_range(0..pool.len())]
                };
                let table = draw(&mut rng, &spec.event_mix, event_sum);
                event_csv[table].push_str(&format!(
                    "{},{},{}\n",
                    patient_name(patient),
                    date.format("%Y-%m-%d"),
                    user_name(actor),
                ));
                let reader = if reason == 0 {
                    actor
                } else {
                    pick_collaborator(
                        &mut rng,
                        spec,
                        actor,
                        &user_group,
                        &group_dept,
                        &group_members,
                        &dept_members,
                    )
                };
                history.push((reader, patient));
                (reader, patient)
            }
            2 => {
                let pair = history[rng.gen_range(0..history.len())];
                history.push(pair);
                pair
            }
            _ => (rng.gen_range(0..spec.users), rng.gen_range(0..spec.patients)),
        };
        log_csv.push_str(&format!(
            "L{row:06},{},{},{}\n",
            date.format("%Y-%m-%d"),
            user_name(user),
            patient_name(patient),
        ));
        let label = ["direct", "collaborator", "repeat", "noise"][reason];
        reasons.push(label.to_owned());
        *counts.entry(label.to_owned()).or_insert(0) += 1;
    }
    counts.insert("rows".to_owned(), rows);

    let mut departments_csv = String::from("User,Department\n");
    for u in 0..spec.users {
        departments_csv.push_str(&format!(
            "{},d{:02}\n",
            user_name(u),
            group_dept[user_group[u]]
        ));
    }

    let schema = schema_text();
    let catalog = crate::schema::parse_schema(&schema, "synthetic").expect("static schema");
    let universe = build_graph(&catalog);
    let planted = planted_shapes(&catalog, &universe);

    let mut tables = BTreeMap::new();
    tables.insert("Log".to_owned(), log_csv);
    for (i, name) in EVENT_TABLES.iter().enumerate() {
        tables.insert((*name).to_owned(), event_csv[i].clone());
    }
    tables.insert("Departments".to_owned(), departments_csv);
    tables.insert("Groups".to_owned(), String::from("Group_Depth,Group_id,User\n"));

    Ok(SyntheticData { schema, tables, truth: GroundTruth { planted, reasons, counts } })
}

/// Index drawn from a nonnegative weight vector.
fn draw(rng: &mut ChaCha8Rng, weights: &[f64], sum: f64) -> usize {
    let mut x = rng.gen_range(0.0..sum);
    for (i, &w) in weights.iter().enumerate() {
        if x < w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

/// A colleague of `actor`: same department, other team, with the configured
/// probability; otherwise (and as fallback when alone) a teammate.
fn pick_collaborator(
    rng: &mut ChaCha8Rng,
    spec: &SyntheticSpec,
    actor: usize,
    user_group: &[usize],
    group_dept: &[usize],
    group_members: &[Vec<usize>],
    dept_members: &[Vec<usize>],
) -> usize {
    let group = user_group[actor];
    if rng.gen_bool(spec.intra_dept_collab) {
        let dept: Vec<usize> = dept_members[group_dept[group]]
            .iter()
            .copied()
            .filter(|&u| user_group[u] != group)
            .collect();
        if !dept.is_empty() {
            return dept[rng.gen_range(0..dept.len())];
        }
    }
    let team: Vec<usize> =
        group_members[group].iter().copied().filter(|&u| u != actor).collect();
    if team.is_empty() {
        actor
    } else {
        team[rng.gen_range(0..team.len())]
    }
}

fn schema_text() -> String {
    let mut s = String::from(
        "table Log\n  Lid text key\n  Date date\n  User text\n  Patient text\n",
    );
    for t in EVENT_TABLES {
        s.push_str(&format!("table {t}\n  Patient text\n  Date date\n  User text\n"));
    }
    s.push_str("table Departments\n  User text\n  Department text\n");
    s.push_str("table Groups\n  Group_Depth integer\n  Group_id integer\n  User text\n");
    for t in EVENT_TABLES {
        s.push_str(&format!("fk: Log.Patient = {t}.Patient\n"));
        s.push_str(&format!("fk: Log.User = {t}.User\n"));
        s.push_str(&format!("fk: {t}.User = Departments.User\n"));
        s.push_str(&format!("fk: {t}.User = Groups.User\n"));
    }
    s.push_str("fk: Log.User = Departments.User\n");
    s.push_str("fk: Log.User = Groups.User\n");
    s.push_str("selfjoin: Departments.Department\n");
    s.push_str("selfjoin: Groups.Group_id\n");
    s.push_str("anchors: Log.Patient -> Log.User\n");
    s
}

/// The canonical identities the generator plants, computed by walking the
/// actual schema graph so they always match what mining would emit.
fn planted_shapes(catalog: &SchemaCatalog, universe: &EdgeUniverse) -> Vec<PlantedShape> {
    let hop = |from: (&str, &str), to: (&str, &str)| -> OrientedEdge {
        let from = catalog.attr_ref(from.0, from.1).expect("static schema");
        let to = catalog.attr_ref(to.0, to.1).expect("static schema");
        OrientedEdge { edge: universe.find_edge(from, to).expect("declared edge"), from, to }
    };
    let key = |seq: &[OrientedEdge]| -> String {
        Path::replay(Path::seed(catalog), catalog, universe, seq)
            .expect("planted chain is walk-valid")
            .canonical_key(catalog)
    };

    let mut out = Vec::new();
    for t in EVENT_TABLES {
        let low = t.to_lowercase();
        out.push(PlantedShape {
            name: format!("direct-{low}"),
            length: 2,
            key: key(&[hop(("Log", "Patient"), (t, "Patient")), hop((t, "User"), ("Log", "User"))]),
        });
        for (label, table, attr) in
            [("team", "Groups", "Group_id"), ("department", "Departments", "Department")]
        {
            out.push(PlantedShape {
                name: format!("{label}-{low}"),
                length: 4,
                key: key(&[
                    hop(("Log", "Patient"), (t, "Patient")),
                    hop((t, "User"), (table, "User")),
                    hop((table, attr), (table, attr)),
                    hop((table, "User"), ("Log", "User")),
                ]),
            });
        }
    }
    out
}
