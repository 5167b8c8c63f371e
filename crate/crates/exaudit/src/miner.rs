//! Level-wise template mining.
//!
//! Mining grows paths one condition at a time, level by level, and keeps a
//! path only while its support stays above the threshold — support can never
//! grow along an extension, so anything below the bar is dead. Three
//! traversal strategies share that loop:
//!
//! * **one-way**: grow from the record anchor until paths close at the user
//!   anchor;
//! * **two-way**: additionally grow mirrored paths from the user anchor and
//!   merge the two result sets;
//! * **bridged**: grow both directions only to a bridge depth ℓ, then splice
//!   a forward fragment of length ℓ with a mirrored fragment that starts with
//!   the same bridge condition, covering lengths up to 2ℓ−1 without ever
//!   materializing deep candidate levels.
//!
//! Three independent optimizations can be toggled and never change the mined
//! set: a support cache keyed by canonical identity, duplicate reduction on
//! join-side projections, and a skip rule that passes a clearly-supported
//! open path to the next level without evaluating it (estimated support at
//! least c·S; never applied to closed paths, whose exact support is always
//! recorded).
//!
//! Output is deterministic: templates are sorted by canonical identity and
//! candidate bookkeeping is order-independent of the worker thread count.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::ConfigError;
use crate::evaluator::{EvalContext, SupportCache};
use crate::graph::{build_graph, EdgeUniverse, OrientedEdge};
use crate::path::Path;
use crate::store::Database;
use crate::template::{SupportInfo, Template};

/// Traversal strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    OneWay,
    TwoWay,
    Bridged,
}

/// Mining parameters. `Default` gives the everyday configuration: 1%
/// support, templates up to five conditions over at most three distinct
/// tables, bridged traversal, all optimizations on.
#[derive(Debug, Clone)]
pub struct MiningConfig {
    /// Minimum fraction of the log a template must explain, in (0, 1].
    pub support_fraction: f64,
    /// Maximum conditions per template (M).
    pub max_length: usize,
    /// Maximum distinct non-exempt tables per template (T).
    pub max_tables: usize,
    /// Skip rule constant: estimated support ≥ c·S skips evaluation.
    pub skip_constant: f64,
    pub algorithm: Algorithm,
    /// Bridge depth ℓ; `None` picks the smallest depth whose spliced length
    /// 2ℓ−1 still covers `max_length`.
    pub bridge_depth: Option<usize>,
    pub use_cache: bool,
    pub use_dedup: bool,
    pub use_skip: bool,
    /// Worker threads for support evaluation; 0 uses the global pool.
    pub threads: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig {
            support_fraction: 0.01,
            max_length: 5,
            max_tables: 3,
            skip_constant: 10.0,
            algorithm: Algorithm::Bridged,
            bridge_depth: None,
            use_cache: true,
            use_dedup: true,
            use_skip: true,
            threads: 0,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.support_fraction > 0.0 && self.support_fraction <= 1.0) {
            return Err(ConfigError::BadSupport(self.support_fraction));
        }
        if self.max_length < 1 {
            return Err(ConfigError::BadMaxLength(self.max_length));
        }
        if self.max_tables < 2 {
            return Err(ConfigError::BadTableBudget(self.max_tables));
        }
        if self.skip_constant < 1.0 {
            return Err(ConfigError::BadSkipConstant(self.skip_constant));
        }
        if let Some(depth) = self.bridge_depth {
            if depth < 2 || depth > self.max_length || self.max_length > 2 * depth - 1 {
                return Err(ConfigError::BadBridgeDepth { depth, max_len: self.max_length });
            }
        }
        Ok(())
    }

    /// The bridge depth in effect: explicit, or the smallest ℓ ≥ 2 with
    /// 2ℓ−1 ≥ max_length.
    pub fn effective_bridge_depth(&self) -> usize {
        self.bridge_depth.unwrap_or_else(|| ((self.max_length + 1).div_ceil(2)).max(2))
    }

    /// Absolute support threshold for a given log size.
    pub fn absolute_support(&self, log_rows: usize) -> u64 {
        ((log_rows as f64) * self.support_fraction).ceil() as u64
    }
}

/// Counters for one mining level.
#[derive(Debug, Clone, Default, Serialize)]
pub struct LevelStats {
    /// "forward", "backward", or "bridge".
    pub direction: String,
    /// Path length at this level.
    pub level: usize,
    /// Walk-valid candidates generated (bridge: attempted splices).
    pub candidates: u64,
    /// Dropped for exceeding the table budget (bridge: or failing replay).
    pub pruned_budget: u64,
    /// Exact support computations performed.
    pub evaluated: u64,
    /// Evaluations avoided by the support cache.
    pub cache_hits: u64,
    /// Open paths passed on without evaluation by the skip rule.
    pub skipped: u64,
    /// Candidates evaluated below the support threshold.
    pub pruned_support: u64,
    /// Open paths discarded at the deepest level (nothing left to extend).
    pub terminal_open: u64,
    /// Open paths entering the next level.
    pub kept: u64,
    /// Supported explanations recorded at this level.
    pub explanations: u64,
    pub wall_ms: u64,
}

/// Aggregate statistics for one mining run.
#[derive(Debug, Clone, Serialize)]
pub struct MiningStats {
    pub algorithm: Algorithm,
    pub log_rows: usize,
    pub absolute_support: u64,
    pub levels: Vec<LevelStats>,
    pub total_wall_ms: u64,
}

/// Mined templates (sorted by canonical identity) plus statistics.
#[derive(Debug)]
pub struct MiningOutput {
    pub templates: Vec<Template>,
    pub stats: MiningStats,
}

impl MiningOutput {
    /// Canonical identities of the mined templates, in output order.
    pub fn keys(&self, db: &Database) -> Vec<String> {
        self.templates.iter().map(|t| t.id(&db.catalog)).collect()
    }

    pub fn to_jsonl(&self, db: &Database) -> String {
        crate::template::to_jsonl(&self.templates, &db.catalog)
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&self.stats).expect("stats serialization")
    }
}

/// Mine with the configured algorithm.
pub fn mine(db: &Database, cfg: &MiningConfig) -> Result<MiningOutput, ConfigError> {
    match cfg.algorithm {
        Algorithm::OneWay => mine_one_way(db, cfg),
        Algorithm::TwoWay => mine_two_way(db, cfg),
        Algorithm::Bridged => mine_bridged(db, cfg),
    }
}

pub fn mine_one_way(db: &Database, cfg: &MiningConfig) -> Result<MiningOutput, ConfigError> {
    run(db, cfg, Algorithm::OneWay)
}

pub fn mine_two_way(db: &Database, cfg: &MiningConfig) -> Result<MiningOutput, ConfigError> {
    run(db, cfg, Algorithm::TwoWay)
}

pub fn mine_bridged(db: &Database, cfg: &MiningConfig) -> Result<MiningOutput, ConfigError> {
    run(db, cfg, Algorithm::Bridged)
}

fn run(db: &Database, cfg: &MiningConfig, algorithm: Algorithm) -> Result<MiningOutput, ConfigError> {
    cfg.validate()?;
    if db.log().is_empty() {
        return Err(ConfigError::EmptyLog);
    }
    let body = || {
        let universe = build_graph(&db.catalog);
        let ctx = EvalContext::with_dedup(db, cfg.use_dedup);
        let miner = Miner {
            db,
            cfg,
            universe: &universe,
            ctx: &ctx,
            cache: SupportCache::new(),
            s_abs: cfg.absolute_support(db.log().len()).max(1),
        };
        miner.mine(algorithm)
    };
    if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| ConfigError::Other(format!("thread pool: {e}")))?;
        Ok(pool.install(body))
    } else {
        Ok(body())
    }
}

struct Candidate {
    path: Path,
    key: String,
}

/// How a candidate's support was settled.
#[derive(Clone, Copy)]
enum Verdict {
    Exact(u64),
    Cached(u64),
    Skipped,
}

struct Miner<'a> {
    db: &'a Database,
    cfg: &'a MiningConfig,
    universe: &'a EdgeUniverse,
    ctx: &'a EvalContext<'a>,
    cache: SupportCache,
    s_abs: u64,
}

impl<'a> Miner<'a> {
    fn mine(&self, algorithm: Algorithm) -> MiningOutput {
        let start = Instant::now();
        let mut found: BTreeMap<String, Template> = BTreeMap::new();
        let mut levels: Vec<LevelStats> = Vec::new();

        match algorithm {
            Algorithm::OneWay => {
                self.run_direction(Path::seed(&self.db.catalog), self.cfg.max_length, false, "forward", &mut found, &mut levels);
            }
            Algorithm::TwoWay => {
                self.run_direction(Path::seed(&self.db.catalog), self.cfg.max_length, false, "forward", &mut found, &mut levels);
                self.run_direction(Path::seed_reversed(&self.db.catalog), self.cfg.max_length, false, "backward", &mut found, &mut levels);
            }
            Algorithm::Bridged => {
                let depth = self.cfg.effective_bridge_depth().min(self.cfg.max_length);
                let splicing = depth < self.cfg.max_length;
                let forward = self.run_direction(
                    Path::seed(&self.db.catalog),
                    depth,
                    splicing,
                    "forward",
                    &mut found,
                    &mut levels,
                );
                let backward = self.run_direction(
                    Path::seed_reversed(&self.db.catalog),
                    depth,
                    splicing,
                    "backward",
                    &mut found,
                    &mut levels,
                );
                if splicing {
                    self.run_bridge(depth, &forward, &backward, &mut found, &mut levels);
                }
            }
        }

        MiningOutput {
            templates: found.into_values().collect(),
            stats: MiningStats {
                algorithm,
                log_rows: self.db.log().len(),
                absolute_support: self.s_abs,
                levels,
                total_wall_ms: start.elapsed().as_millis() as u64,
            },
        }
    }

    /// Level-wise growth in one direction. Returns the open fragments kept
    /// at each level (index = length).
    fn run_direction(
        &self,
        seed: Path,
        depth: usize,
        keep_terminal_open: bool,
        direction: &str,
        found: &mut BTreeMap<String, Template>,
        levels: &mut Vec<LevelStats>,
    ) -> Vec<Vec<Path>> {
        let catalog = &self.db.catalog;
        let mut fragments: Vec<Vec<Path>> = vec![Vec::new(); depth + 1];
        let mut pool = vec![seed];

        for level in 1..=depth {
            let t0 = Instant::now();
            let mut stats = LevelStats { direction: direction.to_owned(), level, ..Default::default() };

            // Candidate generation: deterministic order over the pool, the
            // frontier's attributes, and the sorted adjacency lists.
            let mut cands: Vec<Candidate> = Vec::new();
            for p in &pool {
                let (frontier, _) = p.frontier();
                let table = p.instance(frontier).table;
                for attr in 0..catalog.table(table).arity() as u32 {
                    for o in self.universe.leaving(crate::graph::AttrRef { table, attr }) {
                        if let Some(next) = p.extend(catalog, self.universe, o) {
                            stats.candidates += 1;
                            if !next.is_restricted_simple(catalog, self.cfg.max_tables) {
                                stats.pruned_budget += 1;
                                continue;
                            }
                            if !next.is_closed() && level == depth && !keep_terminal_open {
                                stats.terminal_open += 1;
                                continue;
                            }
                            let key = next.canonical_key(catalog);
                            cands.push(Candidate { path: next, key });
                        }
                    }
                }
            }

            let verdicts = self.settle(&cands, level < depth || keep_terminal_open, &mut stats);

            let mut next_pool = Vec::new();
            for (cand, verdict) in cands.into_iter().zip(verdicts) {
                if cand.path.is_closed() {
                    let support = match verdict {
                        Verdict::Exact(v) | Verdict::Cached(v) => v,
                        Verdict::Skipped => unreachable!("closed paths are always evaluated"),
                    };
                    if support >= self.s_abs {
                        if self.record(found, &cand.key, cand.path, support) {
                            stats.explanations += 1;
                        }
                    } else {
                        stats.pruned_support += 1;
                    }
                } else {
                    match verdict {
                        Verdict::Skipped => {
                            stats.skipped += 1;
                            stats.kept += 1;
                            next_pool.push(cand.path);
                        }
                        Verdict::Exact(v) | Verdict::Cached(v) => {
                            if v >= self.s_abs {
                                stats.kept += 1;
                                next_pool.push(cand.path);
                            } else {
                                stats.pruned_support += 1;
                            }
                        }
                    }
                }
            }

            fragments[level] = next_pool.clone();
            pool = next_pool;
            stats.wall_ms = t0.elapsed().as_millis() as u64;
            levels.push(stats);
            if pool.is_empty() && level < depth {
                // Nothing left to extend; deeper levels are empty.
                break;
            }
        }
        fragments
    }

    /// Decide every candidate's support: cache lookup, skip rule, or exact
    /// evaluation (unique keys evaluated in parallel, bookkeeping
    /// sequential, so counters do not depend on thread interleaving).
    fn settle(&self, cands: &[Candidate], may_skip: bool, stats: &mut LevelStats) -> Vec<Verdict> {
        let skip_bar = self.s_abs as f64 * self.cfg.skip_constant;

        if !self.cfg.use_cache {
            // No cache: evaluate each occurrence independently.
            let plans: Vec<Option<bool>> = cands
                .iter()
                .map(|c| {
                    if !c.path.is_closed()
                        && self.cfg.use_skip
                        && may_skip
                        && self.ctx.estimate(&c.path) >= skip_bar
                    {
                        None // skip
                    } else {
                        Some(true)
                    }
                })
                .collect();
            let supports: Vec<Option<u64>> = cands
                .par_iter()
                .zip(&plans)
                .map(|(c, plan)| plan.map(|_| self.ctx.support(&c.path)))
                .collect();
            stats.evaluated += supports.iter().flatten().count() as u64;
            return supports
                .into_iter()
                .map(|s| match s {
                    Some(v) => Verdict::Exact(v),
                    None => Verdict::Skipped,
                })
                .collect();
        }

        // Group same-identity candidates; settle each group once.
        let mut order: Vec<&str> = Vec::new();
        let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, c) in cands.iter().enumerate() {
            let entry = groups.entry(&c.key).or_default();
            if entry.is_empty() {
                order.push(&c.key);
            }
            entry.push(i);
        }

        enum GroupPlan {
            FromCache(u64),
            Skip,
            Evaluate,
        }
        let plans: Vec<(usize, GroupPlan)> = order
            .iter()
            .map(|key| {
                let members = &groups[key];
                let rep = members[0];
                let plan = if let Some(v) = self.cache.get(key) {
                    GroupPlan::FromCache(v)
                } else if !cands[rep].path.is_closed()
                    && self.cfg.use_skip
                    && may_skip
                    && self.ctx.estimate(&cands[rep].path) >= skip_bar
                {
                    GroupPlan::Skip
                } else {
                    GroupPlan::Evaluate
                };
                (rep, plan)
            })
            .collect();

        // Parallel exact evaluation of the unique representatives.
        let to_eval: Vec<usize> = plans
            .iter()
            .filter_map(|(rep, plan)| matches!(plan, GroupPlan::Evaluate).then_some(*rep))
            .collect();
        let evaluated: Vec<(usize, u64)> = to_eval
            .par_iter()
            .map(|&rep| (rep, self.ctx.support(&cands[rep].path)))
            .collect();
        let by_rep: HashMap<usize, u64> = evaluated.into_iter().collect();

        let mut verdicts: Vec<Option<Verdict>> = vec![None; cands.len()];
        for (rep, plan) in plans {
            let key = &cands[rep].key;
            let members = &groups[key.as_str()];
            match plan {
                GroupPlan::FromCache(v) => {
                    stats.cache_hits += members.len() as u64;
                    for &m in members {
                        verdicts[m] = Some(Verdict::Cached(v));
                    }
                }
                GroupPlan::Skip => {
                    for &m in members {
                        verdicts[m] = Some(Verdict::Skipped);
                    }
                }
                GroupPlan::Evaluate => {
                    let v = by_rep[&rep];
                    self.cache.insert(key.clone(), v);
                    stats.evaluated += 1;
                    stats.cache_hits += members.len() as u64 - 1;
                    verdicts[rep] = Some(Verdict::Exact(v));
                    for &m in members {
                        if m != rep {
                            verdicts[m] = Some(Verdict::Cached(v));
                        }
                    }
                }
            }
        }
        verdicts.into_iter().map(|v| v.expect("every candidate settled")).collect()
    }

    /// Record a supported explanation, normalizing mirrored chains into
    /// forward orientation. Returns true when the identity is new.
    fn record(&self, found: &mut BTreeMap<String, Template>, key: &str, path: Path, support: u64) -> bool {
        if found.contains_key(key) {
            return false;
        }
        let catalog = &self.db.catalog;
        let forward = if path.is_forward(catalog) {
            path
        } else {
            let seq: Vec<OrientedEdge> = path
                .oriented_conds()
                .iter()
                .rev()
                .map(|o| OrientedEdge { edge: o.edge, from: o.to, to: o.from })
                .collect();
            Path::replay(Path::seed(catalog), catalog, self.universe, &seq)
                .expect("mirror of a closed chain is walk-valid")
        };
        let mut t = Template::new(forward);
        t.support = Some(SupportInfo { count: support, fraction: self.ctx.support_fraction(support) });
        found.insert(key.to_owned(), t);
        true
    }

    /// Splice forward fragments of length `depth` with mirrored fragments
    /// sharing the bridge condition, then evaluate the resulting closed
    /// chains exactly.
    fn run_bridge(
        &self,
        depth: usize,
        forward: &[Vec<Path>],
        backward: &[Vec<Path>],
        found: &mut BTreeMap<String, Template>,
        levels: &mut Vec<LevelStats>,
    ) {
        let catalog = &self.db.catalog;
        for n in depth + 1..=self.cfg.max_length {
            let t0 = Instant::now();
            let mut stats = LevelStats { direction: "bridge".to_owned(), level: n, ..Default::default() };
            let suffix_len = n - depth + 1;

            let mut cands: Vec<Candidate> = Vec::new();
            for (_, _, spliced) in
                bridge(&forward[depth], &backward[suffix_len], catalog, self.universe)
            {
                stats.candidates += 1;
                match spliced {
                    Some(path) if path.is_restricted_simple(catalog, self.cfg.max_tables) => {
                        debug_assert!(path.is_closed());
                        let key = path.canonical_key(catalog);
                        cands.push(Candidate { path, key });
                    }
                    _ => stats.pruned_budget += 1,
                }
            }

            let verdicts = self.settle(&cands, false, &mut stats);
            for (cand, verdict) in cands.into_iter().zip(verdicts) {
                let support = match verdict {
                    Verdict::Exact(v) | Verdict::Cached(v) => v,
                    Verdict::Skipped => unreachable!("bridge candidates are closed"),
                };
                if support >= self.s_abs {
                    if self.record(found, &cand.key, cand.path, support) {
                        stats.explanations += 1;
                    }
                } else {
                    stats.pruned_support += 1;
                }
            }
            stats.wall_ms = t0.elapsed().as_millis() as u64;
            levels.push(stats);
        }
    }
}

/// All splices of a forward fragment with a mirrored fragment that traverses
/// the forward fragment's last edge as its own last condition (in the
/// opposite orientation — the two fragments meet on that shared condition).
/// Yields `(prefix index, suffix index, replayed chain or None)`; the chain
/// is `None` when the combined sequence violates a walk rule.
pub fn bridge(
    prefixes: &[Path],
    suffixes: &[Path],
    catalog: &crate::schema::SchemaCatalog,
    universe: &EdgeUniverse,
) -> Vec<(usize, usize, Option<Path>)> {
    // Index mirrored fragments by their outermost oriented condition.
    let mut by_bridge: HashMap<(u32, crate::graph::AttrRef, crate::graph::AttrRef), Vec<usize>> =
        HashMap::new();
    for (j, s) in suffixes.iter().enumerate() {
        if let Some(last) = s.oriented_conds().last() {
            by_bridge.entry((last.edge.0, last.from, last.to)).or_default().push(j);
        }
    }

    let mut out = Vec::new();
    for (i, p) in prefixes.iter().enumerate() {
        let p_conds = p.oriented_conds();
        let Some(last) = p_conds.last() else { continue };
        // The suffix traverses the bridge edge towards the prefix, i.e. in
        // the swapped orientation.
        let Some(matches) = by_bridge.get(&(last.edge.0, last.to, last.from)) else { continue };
        for &j in matches {
            let s_conds = suffixes[j].oriented_conds();
            let mut seq = p_conds.clone();
            for o in s_conds[..s_conds.len() - 1].iter().rev() {
                seq.push(OrientedEdge { edge: o.edge, from: o.to, to: o.from });
            }
            let spliced = Path::replay(Path::seed(catalog), catalog, universe, &seq)
                .filter(|path| path.is_closed());
            out.push((i, j, spliced));
        }
    }
    out
}
