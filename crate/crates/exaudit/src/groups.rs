//! Collaborative-group discovery from co-access patterns.
//!
//! Users who look after the same records tend to work together, and joins
//! through a table of such groups explain accesses that no existing relation
//! captures. This module derives that table from the log itself:
//!
//! 1. Build a patient-by-user matrix where a patient's row splits one unit
//!    of weight evenly over everyone who accessed the patient, so crowded
//!    records (shared by half the hospital) contribute little signal and
//!    narrowly-shared ones a lot.
//! 2. Form the user-by-user similarity `W = AᵀA` in exact rational
//!    arithmetic.
//! 3. Cluster users greedily by modularity: start from singletons and keep
//!    merging the pair of clusters with the largest modularity gain while a
//!    positive gain exists. Self-affinity (a user's own diagonal weight)
//!    enters each degree and the total weight once.
//! 4. Recurse: any group with more than two members is reclustered against
//!    the log restricted to its members, bottoming out when a group refuses
//!    to split. Group ids are globally unique across depths; a group that
//!    stops splitting keeps its id on every deeper level it survives to.
//!
//! Weights stay exact rationals end to end; only the greedy merge loop
//! compares gains in floating point (gains of interest are far above the
//! 1e-12 cutoff), with ties broken towards the smallest cluster-id pair so
//! results never depend on iteration order.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::store::{csv_escape, Database};

/// Merge gains at or below this are treated as "no gain"; real gains in the
/// data are orders of magnitude larger.
const GAIN_CUTOFF: f64 = 1e-12;

/// Patient-by-user access matrix. Row `p` holds `1/dₚ` in each accessing
/// user's column, where `dₚ` is the number of distinct users who touched
/// patient `p` — every nonempty row sums to exactly one.
#[derive(Debug, Clone)]
pub struct AccessMatrix {
    patients: Vec<String>,
    users: Vec<String>,
    /// Per patient: sorted distinct indices of accessing users.
    rows: Vec<Vec<usize>>,
}

impl AccessMatrix {
    /// Build from the full log, pairing the accessed record's anchor with
    /// the accessing user's anchor.
    pub fn from_log(db: &Database) -> AccessMatrix {
        Self::from_pairs(&log_pairs(db))
    }

    /// Build from explicit (patient, user) pairs; duplicates collapse.
    pub fn from_pairs(pairs: &[(String, String)]) -> AccessMatrix {
        let mut patients: Vec<String> = pairs.iter().map(|(p, _)| p.clone()).collect();
        patients.sort();
        patients.dedup();
        let mut users: Vec<String> = pairs.iter().map(|(_, u)| u.clone()).collect();
        users.sort();
        users.dedup();
        let p_idx: HashMap<&str, usize> =
            patients.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
        let u_idx: HashMap<&str, usize> =
            users.iter().enumerate().map(|(i, u)| (u.as_str(), i)).collect();
        let mut rows = vec![Vec::new(); patients.len()];
        for (p, u) in pairs {
            rows[p_idx[p.as_str()]].push(u_idx[u.as_str()]);
        }
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
        }
        AccessMatrix { patients, users, rows }
    }

    pub fn patients(&self) -> &[String] {
        &self.patients
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn patient_index(&self, name: &str) -> Option<usize> {
        self.patients.binary_search_by(|p| p.as_str().cmp(name)).ok()
    }

    pub fn user_index(&self, name: &str) -> Option<usize> {
        self.users.binary_search_by(|u| u.as_str().cmp(name)).ok()
    }

    /// The exact matrix entry: `1/dₚ` if the user accessed the patient.
    pub fn entry(&self, patient: usize, user: usize) -> BigRational {
        let row = &self.rows[patient];
        if row.binary_search(&user).is_ok() {
            ratio(1, row.len() as i64)
        } else {
            BigRational::zero()
        }
    }

    pub fn row_sum(&self, patient: usize) -> BigRational {
        self.rows[patient]
            .iter()
            .map(|_| ratio(1, self.rows[patient].len() as i64))
            .sum()
    }

    /// User-by-user similarity `W = AᵀA`: two users gain `1/dₚ²` for every
    /// patient they both accessed, and each user gains the same on their
    /// own diagonal per patient they accessed.
    pub fn user_weights(&self) -> WeightMatrix {
        let mut w: HashMap<(usize, usize), BigRational> = HashMap::new();
        for row in &self.rows {
            if row.is_empty() {
                continue;
            }
            let share = ratio(1, (row.len() * row.len()) as i64);
            for (i, &u) in row.iter().enumerate() {
                for &v in &row[i..] {
                    *w.entry((u, v)).or_insert_with(BigRational::zero) += share.clone();
                }
            }
        }
        WeightMatrix { n: self.users.len(), w }
    }
}

/// Symmetric nonnegative user-user weights, stored sparsely as exact
/// rationals with canonical `(u ≤ v)` keys.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    n: usize,
    w: HashMap<(usize, usize), BigRational>,
}

impl WeightMatrix {
    /// Build directly from `(u, v, weight)` entries (symmetric; duplicate
    /// pairs accumulate).
    pub fn from_entries(n: usize, entries: &[(usize, usize, BigRational)]) -> WeightMatrix {
        let mut w: HashMap<(usize, usize), BigRational> = HashMap::new();
        for (u, v, weight) in entries {
            let key = (*u.min(v), *u.max(v));
            *w.entry(key).or_insert_with(BigRational::zero) += weight.clone();
        }
        w.retain(|_, v| !v.is_zero());
        WeightMatrix { n, w }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, u: usize, v: usize) -> BigRational {
        self.w.get(&(u.min(v), u.max(v))).cloned().unwrap_or_else(BigRational::zero)
    }

    /// Total weight `m`: every unordered pair once, diagonal once.
    pub fn total(&self) -> BigRational {
        self.w.values().cloned().sum()
    }

    /// Node degrees: off-diagonal weights plus the node's own diagonal,
    /// counted once.
    pub fn degrees(&self) -> Vec<BigRational> {
        let mut k = vec![BigRational::zero(); self.n];
        for (&(u, v), weight) in &self.w {
            k[u] += weight.clone();
            if u != v {
                k[v] += weight.clone();
            }
        }
        k
    }

    /// Modularity of a partition: `Σ_c (e_cc − a_c²)` where `e_cc` is the
    /// cluster's weight share (internal pairs twice, diagonal once) and
    /// `a_c` its degree share.
    pub fn modularity(&self, clusters: &[Vec<usize>]) -> f64 {
        let two_m = self.total().to_f64().unwrap_or(0.0) * 2.0;
        if two_m <= 0.0 {
            return 0.0;
        }
        let k = self.degrees();
        let mut q = 0.0;
        for cluster in clusters {
            let members: HashSet<usize> = cluster.iter().copied().collect();
            let mut internal = 0.0;
            for (&(u, v), weight) in &self.w {
                if members.contains(&u) && members.contains(&v) {
                    let w = weight.to_f64().unwrap_or(0.0);
                    internal += if u == v { w } else { 2.0 * w };
                }
            }
            let a: f64 = cluster.iter().map(|&u| k[u].to_f64().unwrap_or(0.0)).sum::<f64>() / two_m;
            q += internal / two_m - a * a;
        }
        q
    }
}

/// Greedy modularity clustering. Returns the partition of `0..n` as
/// clusters sorted by smallest member, members ascending. Deterministic:
/// candidate pairs are scanned in canonical order and equal gains resolve
/// to the smallest pair.
pub fn cluster(w: &WeightMatrix) -> Vec<Vec<usize>> {
    let n = w.n();
    if n == 0 {
        return Vec::new();
    }
    let two_m = w.total().to_f64().unwrap_or(0.0) * 2.0;
    if two_m <= 0.0 {
        return (0..n).map(|u| vec![u]).collect();
    }

    // Cluster id = smallest member index, an invariant merges preserve.
    let mut members: BTreeMap<usize, Vec<usize>> = (0..n).map(|u| (u, vec![u])).collect();
    let mut a: BTreeMap<usize, f64> = w
        .degrees()
        .into_iter()
        .enumerate()
        .map(|(u, k)| (u, k.to_f64().unwrap_or(0.0) / two_m))
        .collect();
    // Raw weight between distinct clusters; pairs with zero weight can only
    // lose modularity, so they are never candidates.
    let mut between: BTreeMap<(usize, usize), f64> = w
        .w
        .iter()
        .filter(|(&(u, v), _)| u != v)
        .map(|(&k, weight)| (k, weight.to_f64().unwrap_or(0.0)))
        .collect();

    loop {
        let mut best: Option<((usize, usize), f64)> = None;
        for (&pair, &weight) in &between {
            let gain = 2.0 * (weight / two_m - a[&pair.0] * a[&pair.1]);
            if best.map_or(true, |(_, g)| gain > g) {
                best = Some((pair, gain));
            }
        }
        let Some(((ca, cb), gain)) = best else { break };
        if gain <= GAIN_CUTOFF {
            break;
        }

        let absorbed = members.remove(&cb).expect("live cluster");
        members.get_mut(&ca).expect("live cluster").extend(absorbed);
        let a_b = a.remove(&cb).expect("live cluster");
        *a.get_mut(&ca).expect("live cluster") += a_b;
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for ((mut u, mut v), weight) in std::mem::take(&mut between) {
            if u == cb {
                u = ca;
            }
            if v == cb {
                v = ca;
            }
            if u == v {
                continue; // now internal to the merged cluster
            }
            *merged.entry((u.min(v), u.max(v))).or_insert(0.0) += weight;
        }
        between = merged;
    }

    members
        .into_values()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect()
}

/// One discovered group of users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub id: u64,
    /// Indices into [`Hierarchy::users`], ascending.
    pub members: Vec<usize>,
}

/// Clustering levels from coarse to fine. `layers[0]` is the single
/// everyone-group (id 0); `layers[d]` partitions the users at depth `d`.
/// The last layer is the first one nothing splits beyond.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub users: Vec<String>,
    pub layers: Vec<Vec<Group>>,
}

impl Hierarchy {
    /// Render as the Groups relation (`Group_Depth,Group_id,User`). Depth 0
    /// is the trivial everyone-group and is skipped unless asked for.
    pub fn to_csv(&self, include_depth0: bool) -> String {
        let mut out = String::from("Group_Depth,Group_id,User\n");
        for (depth, layer) in self.layers.iter().enumerate() {
            if depth == 0 && !include_depth0 {
                continue;
            }
            for group in layer {
                for &member in &group.members {
                    out.push_str(&format!(
                        "{},{},{}\n",
                        depth,
                        group.id,
                        csv_escape(&self.users[member])
                    ));
                }
            }
        }
        out
    }

    /// Group count over all depths (depth 0 excluded).
    pub fn group_count(&self) -> usize {
        self.layers.iter().skip(1).map(|l| l.len()).sum()
    }
}

/// Build the full grouping hierarchy from the log. Depth 1 clusters all
/// users; deeper levels recluster each group of more than two members
/// against only its own members' accesses. The recursion stops at
/// `max_depth` or as soon as a level changes nothing.
pub fn build_hierarchy(db: &Database, max_depth: usize) -> Hierarchy {
    let pairs = log_pairs(db);
    let mut users: Vec<String> = pairs.iter().map(|(_, u)| u.clone()).collect();
    users.sort();
    users.dedup();
    let hierarchy_users = users.clone();

    let root = Group { id: 0, members: (0..users.len()).collect() };
    let mut layers = vec![vec![root]];
    let mut next_id: u64 = 1;

    for depth in 1..=max_depth {
        let prev = &layers[depth - 1];
        let mut layer: Vec<Group> = Vec::new();
        let mut split_any = false;
        for group in prev {
            // Depth 1 always clusters; beyond that, pairs and singletons
            // are final and a fresh split must actually divide the group.
            if depth > 1 && group.members.len() <= 2 {
                layer.push(group.clone());
                continue;
            }
            let allowed: HashSet<&str> =
                group.members.iter().map(|&m| hierarchy_users[m].as_str()).collect();
            let restricted: Vec<(String, String)> = pairs
                .iter()
                .filter(|(_, u)| allowed.contains(u.as_str()))
                .cloned()
                .collect();
            let local = AccessMatrix::from_pairs(&restricted);
            let clusters = cluster(&local.user_weights());
            if depth > 1 && clusters.len() <= 1 {
                layer.push(group.clone()); // refused to split; carry forward
                continue;
            }
            split_any = true;
            for c in clusters {
                let mut members: Vec<usize> = c
                    .iter()
                    .map(|&l| {
                        hierarchy_users
                            .binary_search(&local.users()[l])
                            .expect("restricted users come from the log")
                    })
                    .collect();
                members.sort_unstable();
                layer.push(Group { id: next_id, members });
                next_id += 1;
            }
        }
        if !split_any && depth > 1 {
            break; // the level would repeat the previous one
        }
        layer.sort_by_key(|g| g.id);
        layers.push(layer);
        if depth == 1 && hierarchy_users.is_empty() {
            break;
        }
    }

    Hierarchy { users: hierarchy_users, layers }
}

/// Distinct rendered (patient, user) pairs from the log's anchor columns.
fn log_pairs(db: &Database) -> Vec<(String, String)> {
    let catalog = &db.catalog;
    let log = db.log();
    let interner = db.interner();
    let p_col = log.column(catalog.anchor_start.attr as usize);
    let u_col = log.column(catalog.anchor_end.attr as usize);
    let mut pairs: Vec<(String, String)> = p_col
        .iter()
        .zip(u_col)
        .map(|(p, u)| (p.render(interner), u.render(interner)))
        .collect();
    pairs.sort();
    pairs.dedup();
    pairs
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
