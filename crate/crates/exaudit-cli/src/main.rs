//! Command-line front end for mining and auditing access-log explanations.
//!
//! Exit codes: 0 on success, 1 when the request itself is bad (unparsable
//! flags, broken schema or data, impossible configuration), 2 when the work
//! fails underway (unwritable output, thread-pool trouble).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exaudit::{
    build_graph, build_hierarchy, evaluate, explain_access, first_accesses, gen_fake_log,
    load_dir, miner, restrict_log, template, Algorithm, Database, EvalContext, MiningConfig,
    SyntheticSpec,
};

#[derive(Parser)]
#[command(
    name = "exaudit",
    version,
    about = "Mine, evaluate and apply explanation templates for access logs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine explanation templates from a database
    Mine(MineArgs),
    /// Derive collaborative groups from the log and emit the Groups relation
    Groups(GroupsArgs),
    /// Show every concrete explanation for one access
    Explain(ExplainArgs),
    /// Score templates against the log, with a fabricated-access control
    Evaluate(EvaluateArgs),
    /// Generate a synthetic workload with ground truth
    Gen(GenArgs),
    /// Load a database and report what it contains
    Ingest(IngestArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Schema description file
    #[arg(long, value_name = "FILE")]
    schema: PathBuf,
    /// Directory of per-table CSV files
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Database, CliError> {
        load_dir(&self.schema, &self.data).map_err(|e| CliError::Validation(e.to_string()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    OneWay,
    TwoWay,
    Bridge,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Algorithm {
        match a {
            AlgorithmArg::OneWay => Algorithm::OneWay,
            AlgorithmArg::TwoWay => Algorithm::TwoWay,
            AlgorithmArg::Bridge => Algorithm::Bridged,
        }
    }
}

#[derive(Args)]
struct MineArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Minimum support as a percentage of the log
    #[arg(short = 's', long, default_value_t = 1.0, value_name = "PCT")]
    support_pct: f64,
    /// Maximum conditions per template
    #[arg(short = 'M', long, default_value_t = 5)]
    max_length: usize,
    /// Maximum distinct tables per template
    #[arg(short = 'T', long, default_value_t = 3)]
    max_tables: usize,
    /// Traversal strategy
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Bridge)]
    algorithm: AlgorithmArg,
    /// Fragment depth for bridged mining (default: smallest depth whose
    /// spliced length covers the maximum length)
    #[arg(long, value_name = "DEPTH")]
    bridge_depth: Option<usize>,
    /// Skip evaluating open paths whose estimated support reaches this
    /// multiple of the threshold
    #[arg(short = 'c', long, default_value_t = 10.0, value_name = "FACTOR")]
    skip_constant: f64,
    /// Disable the support cache
    #[arg(long)]
    no_cache: bool,
    /// Disable duplicate reduction during evaluation
    #[arg(long)]
    no_dedup: bool,
    /// Disable the skip rule
    #[arg(long)]
    no_skip: bool,
    /// Worker threads for support evaluation (0 = default pool)
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write templates here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Write statistics here instead of stderr
    #[arg(long, value_name = "FILE")]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct GroupsArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Deepest level to split groups to
    #[arg(long, default_value_t = 8)]
    max_group_depth: usize,
    /// Also list the trivial depth-0 group holding every user
    #[arg(long)]
    include_depth0: bool,
    /// Write the Groups relation here instead of stdout
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Mined templates (JSON lines, as written by `mine`)
    #[arg(long, value_name = "FILE")]
    templates: PathBuf,
    /// Access id to explain
    #[arg(long)]
    lid: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Mined templates (JSON lines, as written by `mine`)
    #[arg(long, value_name = "FILE")]
    templates: PathBuf,
    /// Seed for the fabricated control log
    #[arg(long, default_value_t = 0)]
    fake_seed: u64,
    /// Score without a fabricated control log
    #[arg(long)]
    no_fake: bool,
    /// Keep only each (record, user) pair's earliest access
    #[arg(long)]
    first_only: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Directory to write the workload into
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the large preset (~100,000 accesses)
    #[arg(long)]
    desk_scale: bool,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    patients: Option<usize>,
    #[arg(long)]
    departments: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Validate only; always on, accepted for clarity
    #[arg(long)]
    check: bool,
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn report(self) -> ExitCode {
        let (msg, code) = match self {
            CliError::Validation(m) => (m, 1),
            CliError::Runtime(m) => (m, 2),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            // Bad flags or values: a validation failure.
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            // --help / --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mine(args) => mine(args),
        Command::Groups(args) => groups(args),
        Command::Explain(args) => explain(args),
        Command::Evaluate(args) => eval(args),
        Command::Gen(args) => gen(args),
        Command::Ingest(args) => ingest(args),
    }
}

fn mine(args: MineArgs) -> Result<(), CliError> {
    let db = args.data.load()?;
    let cfg = MiningConfig {
        support_fraction: args.support_pct / 100.0,
        max_length: args.max_length,
        max_tables: args.max_tables,
        skip_constant: args.skip_constant,
        algorithm: args.algorithm.into(),
        bridge_depth: args.bridge_depth,
        use_cache: !args.no_cache,
        use_dedup: !args.no_dedup,
        use_skip: !args.no_skip,
        threads: args.threads,
    };
    let output = miner::mine(&db, &cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    write_out(args.out.as_deref(), &output.to_jsonl(&db), OrElse::Stdout)?;
    write_out(args.stats_out.as_deref(), &(output.stats_json() + "\n"), OrElse::Stderr)?;
    Ok(())
}

fn groups(args: GroupsArgs) -> Result<(), CliError> {
    let db = args.data.load()?;
    let hierarchy = build_hierarchy(&db, args.max_group_depth);
    write_out(args.out.as_deref(), &hierarchy.to_csv(args.include_depth0), OrElse::Stdout)
}

fn explain(args: ExplainArgs) -> Result<(), CliError> {
    let db = args.data.load()?;
    let templates = load_templates(&args.templates, &db)?;
    let ctx = EvalContext::new(&db);
    let instances = explain_access(&ctx, &templates, &args.lid)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let json =
        serde_json::to_string_pretty(&instances).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_out(None, &(json + "\n"), OrElse::Stdout)
}

fn eval(args: EvaluateArgs) -> Result<(), CliError> {
    let mut db = args.data.load()?;
    let templates = load_templates(&args.templates, &db)?;
    if args.first_only {
        db = restrict_log(&db, &first_accesses(&db));
    }
    let fake = (!args.no_fake).then(|| gen_fake_log(&db, args.fake_seed));
    let report = evaluate(&db, fake.as_ref(), &templates);
    write_out(None, &(report.to_json() + "\n"), OrElse::Stdout)
}

fn gen(args: GenArgs) -> Result<(), CliError> {
    let mut spec =
        if args.desk_scale { SyntheticSpec::desk_scale() } else { SyntheticSpec::default() };
    if let Some(v) = args.users {
        spec.users = v;
    }
    if let Some(v) = args.patients {
        spec.patients = v;
    }
    if let Some(v) = args.departments {
        spec.departments = v;
    }
    if let Some(v) = args.groups {
        spec.groups = v;
    }
    if let Some(v) = args.density {
        spec.density = v;
    }
    let data = exaudit::generate(&spec, args.seed)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    data.write_dir(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    eprintln!(
        "wrote {} log rows across {} tables to {}",
        data.truth.counts["rows"],
        data.tables.len(),
        args.out.display()
    );
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<(), CliError> {
    let db = args.data.load()?;
    let mut out = String::new();
    for (idx, decl) in db.catalog.tables.iter().enumerate() {
        let rel = db.relation(exaudit::TableId(idx as u32));
        out.push_str(&format!("{}: {} rows\n", decl.name, rel.len()));
    }
    write_out(None, &out, OrElse::Stdout)
}

fn load_templates(path: &Path, db: &Database) -> Result<Vec<exaudit::Template>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let universe = build_graph(&db.catalog);
    template::parse_jsonl(&text, &db.catalog, &universe)
        .map_err(|e| CliError::Validation(e.to_string()))
}

enum OrElse {
    Stdout,
    Stderr,
}

/// Write to the given file, or to the fallback stream.
fn write_out(path: Option<&Path>, content: &str, fallback: OrElse) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => {
            let result = match fallback {
                OrElse::Stdout => std::io::stdout().write_all(content.as_bytes()),
                OrElse::Stderr => std::io::stderr().write_all(content.as_bytes()),
            };
            result.map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}
