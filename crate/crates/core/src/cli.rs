//! The `xformnet` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 runtime error. Failures print one
//! line, `xformnet: error[usage|runtime]: <message>`, to stderr. Each command
//! echoes its fully resolved invocation (defaults included) to stderr as a
//! `#` line before doing any work.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::economy::{self, EconomyParams, EndowmentPolicy, Money};
use crate::network::{network_to_config, ConfigId, ConfigSpace, Directedness, TransformationNetwork};
use crate::output::{self, sig6, CsvMeta, ResultsWriter};
use crate::sweep::{self, fnv1a64, ConfigRange, RunRecord, SweepPlan};

/// List mode refuses spaces with more edge slots than this unless forced.
const LIST_SLOT_LIMIT: u64 = 20;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Runtime(m) => ("runtime", m),
        };
        format!("xformnet: error[{kind}]: {}", msg.replace('\n', " "))
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "xformnet", version, about = "Transformation-network economy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Count or list every nonempty edge configuration on n nodes.
    Enumerate(EnumerateArgs),
    /// Structural report for one network.
    Analyze(AnalyzeArgs),
    /// Run one simulation and print its result row.
    Simulate(SimulateArgs),
    /// Run a replicated sweep over configurations and write CSVs.
    Sweep(SweepArgs),
    /// Rebuild group statistics from one or more results CSVs.
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
struct ShapeArgs {
    /// Node count.
    #[arg(long = "n", env = "XFORMNET_N")]
    n: Option<usize>,
    #[arg(long, conflicts_with = "undirected")]
    directed: bool,
    /// Reciprocal-closed configurations.
    #[arg(long, env = "XFORMNET_UNDIRECTED")]
    undirected: bool,
}

impl ShapeArgs {
    fn directedness(&self) -> Directedness {
        Directedness::from_directed_flag(!self.undirected)
    }

    fn dir_flag(&self) -> &'static str {
        if self.undirected {
            "--undirected"
        } else {
            "--directed"
        }
    }
}

#[derive(Debug, Args)]
struct EnumerateArgs {
    /// Node count (same as --n).
    #[arg(value_name = "N")]
    n_pos: Option<usize>,
    #[command(flatten)]
    shape: ShapeArgs,
    /// Print only the number of configurations (default).
    #[arg(long, conflicts_with = "list")]
    count_only: bool,
    /// Print every configuration with its edge count and density.
    #[arg(long)]
    list: bool,
    /// Allow listing more than 2^20 configurations.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct NetworkSource {
    /// Edge-list network file.
    #[arg(long, conflicts_with = "config_id")]
    network: Option<PathBuf>,
    /// Canonical configuration number (needs --n).
    #[arg(long)]
    config_id: Option<u64>,
    #[command(flatten)]
    shape: ShapeArgs,
}

impl NetworkSource {
    fn load(&self) -> Result<TransformationNetwork, CliError> {
        match (&self.network, self.config_id) {
            (Some(path), None) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
                TransformationNetwork::from_edge_list(&text)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))
            }
            (None, Some(id)) => {
                let n = self.shape.n.ok_or_else(|| usage("--config-id needs --n"))?;
                ConfigSpace::new(n, self.shape.directedness())
                    .and_then(|space| space.to_network(ConfigId(id)))
                    .map_err(usage)
            }
            _ => Err(usage("give exactly one of --network FILE or --config-id ID")),
        }
    }

    fn echo(&self) -> String {
        match (&self.network, self.config_id) {
            (Some(path), _) => format!("--network {}", path.display()),
            (None, Some(id)) => format!(
                "--n {} {} --config-id {id}",
                self.shape.n.unwrap_or(0),
                self.shape.dir_flag()
            ),
            _ => String::new(),
        }
    }
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    source: NetworkSource,
    /// Population used for the expected agents-per-rule column.
    #[arg(long, env = "XFORMNET_POPULATION", default_value_t = 50)]
    population: usize,
}

#[derive(Debug, Args)]
struct EconomyArgs {
    #[arg(long, env = "XFORMNET_STEPS")]
    steps: Option<usize>,
    #[arg(long, env = "XFORMNET_BURN_IN")]
    burn_in: Option<usize>,
    #[arg(long, env = "XFORMNET_PRICE")]
    price: Option<Money>,
    #[arg(long, env = "XFORMNET_INITIAL_WEALTH")]
    initial_wealth: Option<Money>,
    /// own-output, own-input or none.
    #[arg(long, env = "XFORMNET_ENDOWMENT")]
    endowment: Option<String>,
    /// Candidate sellers a buyer may draw per step.
    #[arg(long, env = "XFORMNET_SELLER_ATTEMPTS")]
    seller_attempts: Option<usize>,
}

impl EconomyArgs {
    fn apply(&self, params: &mut EconomyParams) -> Result<(), CliError> {
        if let Some(v) = self.steps {
            params.steps = v;
        }
        if let Some(v) = self.burn_in {
            params.burn_in = v;
        }
        if let Some(v) = self.price {
            params.price = v;
        }
        if let Some(v) = self.initial_wealth {
            params.initial_wealth = v;
        }
        if let Some(v) = &self.endowment {
            params.endowment = v.parse::<EndowmentPolicy>().map_err(usage)?;
        }
        if let Some(v) = self.seller_attempts {
            params.seller_attempts = v;
        }
        Ok(())
    }
}

fn echo_economy(p: &EconomyParams) -> String {
    format!(
        "--steps {} --burn-in {} --price {} --initial-wealth {} --endowment {} --seller-attempts {}",
        p.steps, p.burn_in, p.price, p.initial_wealth, p.endowment, p.seller_attempts
    )
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: NetworkSource,
    #[arg(long, env = "XFORMNET_POPULATION")]
    population: Option<usize>,
    #[command(flatten)]
    economy: EconomyArgs,
    #[arg(long, env = "XFORMNET_SEED", default_value_t = 1)]
    seed: u64,
    /// Write the result CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the per-step `step,gdp` trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Flat `key = value` plan file; flags and env vars override it.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long = "n", env = "XFORMNET_N")]
    n: Option<usize>,
    #[arg(long, conflicts_with = "undirected")]
    directed: bool,
    #[arg(long, env = "XFORMNET_UNDIRECTED")]
    undirected: bool,
    /// Comma-separated population sizes.
    #[arg(long, env = "XFORMNET_POPULATIONS")]
    populations: Option<String>,
    #[arg(long, env = "XFORMNET_REPLICATIONS")]
    replications: Option<usize>,
    #[command(flatten)]
    economy: EconomyArgs,
    /// Master seed every run seed is derived from.
    #[arg(long, env = "XFORMNET_SEED")]
    seed: Option<u64>,
    /// Half-open mask range A..B, for sharding and resuming.
    #[arg(long, env = "XFORMNET_CONFIG_RANGE")]
    config_range: Option<String>,
    /// Run this many uniformly sampled configurations.
    #[arg(long, env = "XFORMNET_SAMPLE")]
    sample: Option<usize>,
    /// Allow exhausting more than 65535 configurations.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, env = "XFORMNET_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "XFORMNET_OUT", default_value = "xformnet-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Results CSV; repeat to merge shards.
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, env = "XFORMNET_OUT", default_value = "xformnet-out")]
    out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let first = rendered.lines().next().unwrap_or("invalid arguments");
                let first = first.trim_start_matches("error: ");
                let _ = writeln!(stderr, "{}", CliError::Usage(first.to_string()).line());
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Enumerate(a) => cmd_enumerate(a, stdout, stderr),
        Command::Analyze(a) => cmd_analyze(a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, stdout, stderr),
        Command::Sweep(a) => cmd_sweep(a, stdout, stderr),
        Command::Aggregate(a) => cmd_aggregate(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.line());
            e.exit_code()
        }
    }
}

fn echo(stderr: &mut dyn Write, line: String) -> Result<(), CliError> {
    writeln!(stderr, "# xformnet {line}").map_err(runtime)
}

fn cmd_enumerate(a: EnumerateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let n = a
        .n_pos
        .or(a.shape.n)
        .ok_or_else(|| usage("enumerate needs a node count"))?;
    let space = ConfigSpace::new(n, a.shape.directedness()).map_err(usage)?;
    let mode = if a.list { "--list" } else { "--count-only" };
    let force = if a.force { " --force" } else { "" };
    echo(err, format!("enumerate --n {n} {} {mode}{force}", a.shape.dir_flag()))?;
    let count = space.config_count().map_err(usage)?;
    if !a.list {
        return writeln!(out, "{count}").map_err(runtime);
    }
    if space.slot_count() > LIST_SLOT_LIMIT && !a.force {
        return Err(usage(format!(
            "refusing to list {count} configurations ({} edge slots > {LIST_SLOT_LIMIT}); pass --force",
            space.slot_count()
        )));
    }
    let mut w = BufWriter::new(out);
    let max_edges = n * (n - 1);
    writeln!(w, "# configurations: {count}").map_err(runtime)?;
    writeln!(w, "config_id,edges,density").map_err(runtime)?;
    for id in space.configs().map_err(usage)? {
        let edges = space.edge_count(id);
        writeln!(w, "{id},{edges},{}", sig6(edges as f64 / max_edges as f64)).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn cmd_analyze(a: AnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let net = a.source.load()?;
    echo(err, format!("analyze {} --population {}", a.source.echo(), a.population))?;
    let n = net.node_count();
    let mut report = String::new();
    let mut line = |k: &str, v: String| report.push_str(&format!("{k}: {v}\n"));
    line("n", n.to_string());
    line("directed", net.directedness().is_directed().to_string());
    line(
        "config_id",
        network_to_config(&net).map_or("-".into(), |id| id.to_string()),
    );
    line("edges", net.edge_count().to_string());
    line("density", sig6(net.density()));
    line(
        "simple_cycles",
        net.count_simple_cycles()
            .map_or_else(|e| format!("unavailable ({e})"), |c| c.to_string()),
    );
    line("dag", net.is_dag().to_string());
    let sinks: Vec<String> = net.sinks().iter().map(|s| s.to_string()).collect();
    line("sinks", sinks.join(" "));
    line("population", a.population.to_string());
    report.push_str("rule,label,expected_agents\n");
    let share = if net.edge_count() == 0 {
        0.0
    } else {
        a.population as f64 / net.edge_count() as f64
    };
    for rule in net.edges() {
        let label = match (rule.input.label(n), rule.output.label(n)) {
            (Some(i), Some(o)) => format!("{i}->{o}"),
            _ => "-".into(),
        };
        report.push_str(&format!("{rule},{label},{}\n", sig6(share)));
    }
    out.write_all(report.as_bytes()).map_err(runtime)
}

fn cmd_simulate(a: SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let net = a.source.load()?;
    let mut params = EconomyParams::default();
    if let Some(p) = a.population {
        params.population = p;
    }
    a.economy.apply(&mut params)?;
    params.validate().map_err(usage)?;
    echo(
        err,
        format!(
            "simulate {} --population {} {} --seed {}",
            a.source.echo(),
            params.population,
            echo_economy(&params),
            a.seed
        ),
    )?;
    let result = economy::run(&net, &params, a.seed).map_err(runtime)?;
    let plan = SweepPlan {
        n: net.node_count(),
        directedness: net.directedness(),
        populations: vec![params.population],
        replications: 1,
        economy: params.clone(),
        master_seed: a.seed,
        ..Default::default()
    };
    let meta = CsvMeta {
        plan_hash: plan.plan_hash() ^ fnv1a64(net.to_edge_list().as_bytes()),
        master_seed: a.seed,
    };
    let record = RunRecord {
        config_id: network_to_config(&net).unwrap_or(ConfigId(0)),
        n: net.node_count(),
        edge_count: net.edge_count(),
        density: net.density(),
        population: params.population,
        replication: 0,
        seed: a.seed,
        mean_step_gdp: result.mean_step_gdp,
        total_gdp: result.total_gdp,
    };
    let bytes = output::write_results(Vec::new(), &meta, &[record]).map_err(runtime)?;
    match &a.out {
        Some(path) => fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?,
        None => out.write_all(&bytes).map_err(runtime)?,
    }
    if let Some(path) = &a.trace {
        let file = create(path)?;
        output::write_trace(BufWriter::new(file), &result.ledger.per_step_gdp).map_err(runtime)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn resolve_plan(a: &SweepArgs) -> Result<SweepPlan, CliError> {
    let mut plan = match &a.plan {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            SweepPlan::from_kv(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => SweepPlan::default(),
    };
    if let Some(n) = a.n {
        plan.n = n;
    }
    if a.directed {
        plan.directedness = Directedness::Directed;
    }
    if a.undirected {
        plan.directedness = Directedness::Undirected;
    }
    if let Some(p) = &a.populations {
        plan.set("populations", p).map_err(usage)?;
    }
    if let Some(r) = a.replications {
        plan.replications = r;
    }
    a.economy.apply(&mut plan.economy)?;
    if let Some(s) = a.seed {
        plan.master_seed = s;
    }
    if let Some(r) = &a.config_range {
        plan.config_range = Some(r.parse::<ConfigRange>().map_err(usage)?);
    }
    if a.sample.is_some() {
        plan.sample = a.sample;
    }
    plan.exhaustive |= a.exhaustive;
    plan.validate().map_err(usage)?;
    Ok(plan)
}

fn echo_plan(plan: &SweepPlan) -> String {
    let populations: Vec<String> = plan.populations.iter().map(|p| p.to_string()).collect();
    let mut s = format!(
        "--n {} {} --populations {} --replications {} {} --seed {}",
        plan.n,
        if plan.directedness.is_directed() { "--directed" } else { "--undirected" },
        populations.join(","),
        plan.replications,
        echo_economy(&plan.economy),
        plan.master_seed
    );
    if let Some(r) = plan.config_range {
        s.push_str(&format!(" --config-range {r}"));
    }
    if let Some(k) = plan.sample {
        s.push_str(&format!(" --sample {k}"));
    }
    if plan.exhaustive {
        s.push_str(" --exhaustive");
    }
    s
}

fn write_group_files(
    dir: &Path,
    meta: &CsvMeta,
    records: &[RunRecord],
) -> Result<Vec<sweep::GroupStats>, CliError> {
    let groups = sweep::aggregate(records).map_err(runtime)?;
    let pooled = sweep::aggregate_pooled(records).map_err(runtime)?;
    for (name, stats) in [("groups.csv", &groups), ("groups_pooled.csv", &pooled)] {
        let file = create(&dir.join(name))?;
        output::write_groups(BufWriter::new(file), meta, stats)
            .and_then(|mut w| w.flush().map_err(Into::into))
            .map_err(runtime)?;
    }
    Ok(groups)
}

fn cmd_sweep(a: SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let plan = resolve_plan(&a)?;
    echo(
        err,
        format!("sweep {} --workers {} --out {}", echo_plan(&plan), a.workers, a.out.display()),
    )?;
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let meta = CsvMeta {
        plan_hash: plan.plan_hash(),
        master_seed: plan.master_seed,
    };
    let results_path = a.out.join("results.csv");
    let mut writer = ResultsWriter::new(BufWriter::new(create(&results_path)?), &meta).map_err(runtime)?;
    let mut records = Vec::new();
    sweep::execute_sweep(&plan, a.workers, |r| {
        writer.write(r).map_err(|e| std::io::Error::other(e.to_string()))?;
        records.push(r.clone());
        Ok(())
    })
    .map_err(runtime)?;
    writer
        .finish()
        .and_then(|mut w| w.flush().map_err(Into::into))
        .map_err(runtime)?;
    let groups = write_group_files(&a.out, &meta, &records)?;
    sweep::missing_groups(&plan, &groups).map_err(runtime)?;
    writeln!(
        out,
        "runs={} groups={} out={}",
        records.len(),
        groups.len(),
        a.out.display()
    )
    .map_err(runtime)
}

fn read_meta(text: &str) -> CsvMeta {
    let mut meta = CsvMeta {
        plan_hash: 0,
        master_seed: 0,
    };
    if let Some(first) = text.lines().next().filter(|l| l.starts_with('#')) {
        for token in first.split_whitespace() {
            match token.split_once('=') {
                Some(("plan_hash", v)) => meta.plan_hash = u64::from_str_radix(v, 16).unwrap_or(0),
                Some(("master_seed", v)) => meta.master_seed = v.parse().unwrap_or(0),
                _ => {}
            }
        }
    }
    meta
}

fn cmd_aggregate(a: AggregateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let inputs: Vec<String> = a.inputs.iter().map(|p| format!("--in {}", p.display())).collect();
    echo(err, format!("aggregate {} --out {}", inputs.join(" "), a.out.display()))?;
    let mut records = Vec::new();
    let mut meta = None;
    for path in &a.inputs {
        let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
        let file_meta = read_meta(&text);
        match &meta {
            None => meta = Some(file_meta),
            Some(m) if *m != file_meta => {
                return Err(usage(format!("{} comes from a different plan", path.display())))
            }
            _ => {}
        }
        records.extend(
            output::read_results(text.as_bytes()).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        );
    }
    records.sort_by_key(RunRecord::sort_key);
    fs::create_dir_all(&a.out).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    let meta = meta.unwrap_or(CsvMeta {
        plan_hash: 0,
        master_seed: 0,
    });
    let groups = write_group_files(&a.out, &meta, &records)?;
    writeln!(out, "runs={} groups={} out={}", records.len(), groups.len(), a.out.display()).map_err(runtime)
}

/// Entry point for the binary.
pub fn main_entry() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run_cli(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}
