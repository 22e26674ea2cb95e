//! `smra`: bounds queries, encode/extract/decode on files, table
//! experiments, binning sweeps, and the extraction service.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use smra_cli::experiment::{
    run_table_experiment, table_console, table_csv, table_json, ExperimentConfig, TableKind,
};
use smra_cli::oracle::{oracle_csv, run_oracle_sweep, OracleConfig};
use smra_core::codec::{
    decode, offline_encode_with, EmbeddedBitstream, LearningMode, Transmission,
};
use smra_core::entropy::{
    gaussian_region, rate_storage_full_memory, rate_storage_single_memory, wyner_ziv_point,
};
use smra_core::graph::NavigationGraph;
use smra_core::model::{ChannelSpec, CorrelationModel};
use smra_core::source::{from_raw_bytes, to_raw_bytes, SourceEnsemble};
use smra_server::{AppState, ServiceConfig, StdVfs};

const EXIT_HELP: &str = "Exit codes:\n  0  success\n  1  usage error\n  2  data error\n  3  decode failure";

#[derive(Parser)]
#[command(
    name = "smra",
    version,
    about = "Embedded incremental codes for sequential random access",
    after_help = EXIT_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate and storage floors for one source of a request graph.
    Bounds(BoundsArgs),
    /// Inspect a navigation graph: neighbors, predecessor sets, equality condition.
    Graph(GraphArgs),
    /// Build the embedded bitstream for one source.
    Encode(EncodeArgs),
    /// Cut the transmission for one previous request out of a stored stream.
    Extract(ExtractArgs),
    /// Recover the source word from a transmission plus side information.
    Decode(DecodeArgs),
    /// Reproduce a rate table over seeded instances.
    Experiment(ExperimentArgs),
    /// Monte-Carlo error sweep of the random-binning oracle.
    Oracle(OracleArgs),
    /// Gaussian rate-distortion points and per-neighbor regions.
    Gaussian(GaussianArgs),
    /// Run the HTTP extraction service.
    Serve(ServeArgs),
}

enum CliError {
    Usage(String),
    Data(String),
    Decode(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Decode(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Decode(m) => f.write_str(m),
        }
    }
}

impl From<smra_core::Error> for CliError {
    fn from(e: smra_core::Error) -> Self {
        match e {
            smra_core::Error::Integrity(_) | smra_core::Error::StorageInsufficient(_) => {
                CliError::Decode(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = init_worker_pool() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// `SMRA_THREADS` caps the worker pool; unset means one worker per core.
fn init_worker_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("SMRA_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("SMRA_THREADS must be a positive integer, got {raw:?}"))?;
    if threads == 0 {
        return Err("SMRA_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Bounds(args) => cmd_bounds(args),
        Command::Graph(args) => cmd_graph(args),
        Command::Encode(args) => cmd_encode(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Decode(args) => cmd_decode(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Gaussian(args) => cmd_gaussian(args),
        Command::Serve(args) => cmd_serve(args),
    }
}

fn load_graph(path: &Path) -> CliResult<NavigationGraph> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(NavigationGraph::parse_text(&text)?)
}

fn load_model(path: &Path) -> CliResult<CorrelationModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(CorrelationModel::parse_text(&text)?)
}

fn load_word(path: &Path) -> CliResult<Vec<u8>> {
    let bytes =
        fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(from_raw_bytes(&bytes)?)
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------- bounds

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Memory {
    /// The decoder keeps exactly one previous request.
    Single,
    /// The decoder keeps everything decoded along its path.
    Full,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: u32,
    #[arg(long, value_enum, default_value_t = Memory::Single)]
    memory: Memory,
    /// Cap on enumerated predecessor sets in full-memory mode.
    #[arg(long, default_value_t = 4096)]
    cap: usize,
}

fn cmd_bounds(args: BoundsArgs) -> CliResult {
    let graph = load_graph(&args.graph)?;
    let model = load_model(&args.model)?;
    let text = match args.memory {
        Memory::Single => {
            let bound = rate_storage_single_memory(args.source, &graph, &model)?;
            serde_json::to_string_pretty(&bound).expect("bound serializes")
        }
        Memory::Full => {
            let bound = rate_storage_full_memory(args.source, &graph, &model, args.cap)?;
            serde_json::to_string_pretty(&bound).expect("bound serializes")
        }
    };
    println!("{text}");
    Ok(())
}

// ----------------------------------------------------------------- graph

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Describe one source instead of the whole graph.
    #[arg(long)]
    source: Option<u32>,
    #[arg(long, default_value_t = 4096)]
    cap: usize,
}

fn cmd_graph(args: GraphArgs) -> CliResult {
    let graph = load_graph(&args.graph)?;
    let value = match args.source {
        None => json!({
            "source_count": graph.source_count(),
            "edges": graph.edges().collect::<Vec<_>>(),
        }),
        Some(k) => json!({
            "source_id": k,
            "one_hop": graph.one_hop(k)?,
            "previous_request_subsets": graph.previous_request_subsets(k, args.cap)?,
            "root_equality_condition": graph.root_equality_condition(k)?,
        }),
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}

// ---------------------------------------------------------------- encode

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LearningArg {
    /// Store one disagreement/erasure count per level.
    Counts,
    /// Store the full joint type table per level.
    Tables,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    source: u32,
    /// Raw container with the source word. Alternative to --seed.
    #[arg(long, conflicts_with = "seed")]
    input: Option<PathBuf>,
    /// Raw side-information word per non-root neighbor, as `j=path`.
    #[arg(long = "side", value_name = "J=PATH")]
    sides: Vec<String>,
    /// Synthesize the ensemble from the correlation model.
    #[arg(long)]
    seed: Option<u64>,
    /// Block length for --seed.
    #[arg(long, requires = "seed")]
    n: Option<usize>,
    /// With --seed: write the synthesized words here as raw containers.
    #[arg(long, requires = "seed")]
    emit_dir: Option<PathBuf>,
    /// Learn channel statistics from the realization instead of the model.
    #[arg(long)]
    universal: bool,
    #[arg(long, value_enum, default_value_t = LearningArg::Counts, requires = "universal")]
    learning: LearningArg,
    /// Destination for the embedded bitstream container.
    #[arg(long)]
    out: PathBuf,
    /// Also write the rate report JSON here (it always goes to stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_side(raw: &str) -> CliResult<(u32, PathBuf)> {
    let (id, path) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--side wants J=PATH, got {raw:?}")))?;
    let id = id
        .trim()
        .parse::<u32>()
        .map_err(|_| CliError::Usage(format!("bad side id in {raw:?}")))?;
    Ok((id, PathBuf::from(path)))
}

fn cmd_encode(args: EncodeArgs) -> CliResult {
    let graph = load_graph(&args.graph)?;
    let model = load_model(&args.model)?;
    let k = args.source;

    let ensemble = match (&args.input, args.seed) {
        (Some(input), None) => {
            let x = load_word(input)?;
            let mut side_infos = BTreeMap::new();
            for raw in &args.sides {
                let (id, path) = parse_side(raw)?;
                side_infos.insert(id, load_word(&path)?);
            }
            let n = x.len();
            SourceEnsemble { source_id: k, n, x, side_infos, seed: 0 }
        }
        (None, Some(seed)) => {
            let n = args
                .n
                .ok_or_else(|| CliError::Usage("--seed needs --n".into()))?;
            let mut channels = Vec::new();
            for &j in graph.one_hop(k)? {
                if j != 0 {
                    channels.push((j, model.channel(k, j)?));
                }
            }
            let ens = SourceEnsemble::generate(k, n, seed, &channels)?;
            if let Some(dir) = &args.emit_dir {
                fs::create_dir_all(dir)?;
                fs::write(dir.join(format!("source_{k}.raw")), to_raw_bytes(&ens.x)?)?;
                for (j, y) in &ens.side_infos {
                    fs::write(dir.join(format!("side_{j}.raw")), to_raw_bytes(y)?)?;
                }
            }
            ens
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --input or --seed selects the source word".into(),
            ))
        }
    };

    let learning = if args.universal {
        match args.learning {
            LearningArg::Counts => LearningMode::Counts,
            LearningArg::Tables => LearningMode::TypeTables,
        }
    } else {
        LearningMode::Known
    };
    let (stream, report) = offline_encode_with(&ensemble, &graph, &model, learning)?;
    fs::write(&args.out, stream.to_bytes())?;
    let report_text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &args.report {
        fs::write(path, &report_text)?;
    }
    println!("{report_text}");
    Ok(())
}

// --------------------------------------------------------------- extract

#[derive(Args)]
struct ExtractArgs {
    /// Stored embedded bitstream container.
    #[arg(long)]
    stream: PathBuf,
    /// Previous request id; 0 asks for direct access.
    #[arg(long)]
    prev: u32,
    /// Destination for the transmission container.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_extract(args: ExtractArgs) -> CliResult {
    let bytes = fs::read(&args.stream)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.stream.display())))?;
    let stream = EmbeddedBitstream::from_bytes(&bytes)?;
    let tx = stream.extract(args.prev)?;
    fs::write(&args.out, tx.to_bytes())?;
    let summary = json!({
        "source_id": tx.source_id,
        "prev_id": tx.prev_id,
        "level_rank": tx.level_rank,
        "bits": tx.bits.len(),
        "includes_root": tx.includes_root,
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

// ---------------------------------------------------------------- decode

#[derive(Args)]
struct DecodeArgs {
    /// Transmission container from `extract`.
    #[arg(long)]
    transmission: PathBuf,
    /// Raw side-information word; direct-access transmissions need none.
    #[arg(long)]
    side: Option<PathBuf>,
    /// Destination for the recovered word as a raw container.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_decode(args: DecodeArgs) -> CliResult {
    let bytes = fs::read(&args.transmission)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.transmission.display())))?;
    let tx = Transmission::from_bytes(&bytes)?;
    let side = match &args.side {
        Some(path) => Some(load_word(path)?),
        None => None,
    };
    let x = decode(&tx, side.as_deref())?;
    fs::write(&args.out, to_raw_bytes(&x)?)?;
    let summary = json!({ "source_id": tx.source_id, "n": x.len() });
    println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    Ok(())
}

// ------------------------------------------------------------ experiment

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TableArg {
    Erasure40000,
    Bsc396,
    Bsc6336,
    Custom,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    /// Canonical machine-readable rows.
    Csv,
    /// Full report including per-draw outcomes.
    Json,
    /// Human-readable columns.
    Table,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    table: TableArg,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Independent source draws per seed.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Block length (custom tables).
    #[arg(long)]
    n: Option<usize>,
    /// Channel sweep for custom tables, e.g. `erasure:0.05,erasure:0.2`.
    #[arg(long, value_delimiter = ',')]
    channels: Vec<String>,
    /// Charge direct access against storage (custom tables).
    #[arg(long)]
    include_root: bool,
    #[arg(long)]
    code_seed_base: Option<u64>,
    #[arg(long)]
    ensemble_seed_base: Option<u64>,
}

fn cmd_experiment(args: ExperimentArgs) -> CliResult {
    let mut cfg = match args.table {
        TableArg::Erasure40000 => {
            ExperimentConfig::builtin(TableKind::ErasureN40000, args.seeds)?
        }
        TableArg::Bsc396 => ExperimentConfig::builtin(TableKind::BscN396, args.seeds)?,
        TableArg::Bsc6336 => ExperimentConfig::builtin(TableKind::BscN6336, args.seeds)?,
        TableArg::Custom => {
            let n = args
                .n
                .ok_or_else(|| CliError::Usage("custom tables need --n".into()))?;
            if args.channels.is_empty() {
                return Err(CliError::Usage("custom tables need --channels".into()));
            }
            let channels = args
                .channels
                .iter()
                .map(|s| ChannelSpec::parse(s))
                .collect::<smra_core::Result<Vec<_>>>()?;
            ExperimentConfig::custom(n, channels, args.include_root, args.seeds)
        }
    };
    cfg.trials = args.trials;
    if let Some(base) = args.code_seed_base {
        cfg.code_seed_base = base;
    }
    if let Some(base) = args.ensemble_seed_base {
        cfg.ensemble_seed_base = base;
    }

    let report = run_table_experiment(&cfg)?;
    let text = match args.format {
        OutputFormat::Csv => table_csv(&report),
        OutputFormat::Json => table_json(&report) + "\n",
        OutputFormat::Table => table_console(&report),
    };
    write_output(args.out.as_deref(), &text)
}

// ---------------------------------------------------------------- oracle

#[derive(Args)]
struct OracleArgs {
    /// Block length; the full table over {0,1}^n is built, so n ≤ 16.
    #[arg(long)]
    n: usize,
    /// Correlation channel, e.g. `bsc:0.2` or `erasure:0.3`.
    #[arg(long)]
    channel: String,
    /// Sum rates to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    rates: Vec<f64>,
    /// Split each sum rate evenly across this many nested stages.
    #[arg(long, default_value_t = 1)]
    stages: usize,
    /// Typicality slack around the conditional entropy.
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 10000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_oracle(args: OracleArgs) -> CliResult {
    let cfg = OracleConfig {
        n: args.n,
        channel: ChannelSpec::parse(&args.channel)?,
        rates: args.rates,
        stages: args.stages,
        eps: args.eps,
        trials: args.trials,
        seed: args.seed,
    };
    let rows = run_oracle_sweep(&cfg)?;
    write_output(args.out.as_deref(), &oracle_csv(&rows))
}

// -------------------------------------------------------------- gaussian

#[derive(Args)]
struct GaussianArgs {
    /// Source standard deviation (point mode).
    #[arg(long, requires = "rho")]
    sigma: Option<f64>,
    /// Side-information correlation (point mode).
    #[arg(long, requires = "sigma")]
    rho: Option<f64>,
    /// Target per-letter distortions.
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    /// With --model and --source: per-neighbor region over a graph.
    #[arg(long, requires_all = ["model", "source"], conflicts_with = "sigma")]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    source: Option<u32>,
}

fn cmd_gaussian(args: GaussianArgs) -> CliResult {
    let value = match (&args.graph, args.sigma, args.rho) {
        (Some(graph_path), None, None) => {
            let graph = load_graph(graph_path)?;
            let model = load_model(args.model.as_ref().expect("clap requires"))?;
            let k = args.source.expect("clap requires");
            let regions = args
                .delta
                .iter()
                .map(|&d| {
                    gaussian_region(k, &graph, &model, d)
                        .map(|r| json!({ "delta": d, "region": r }))
                })
                .collect::<smra_core::Result<Vec<_>>>()?;
            json!(regions)
        }
        (None, Some(sigma), Some(rho)) => {
            let points = args
                .delta
                .iter()
                .map(|&d| {
                    wyner_ziv_point(sigma, rho, d).map(|p| {
                        json!({
                            "delta": d,
                            "rate": p.rate,
                            "distortion": p.distortion,
                        })
                    })
                })
                .collect::<smra_core::Result<Vec<_>>>()?;
            json!({ "sigma": sigma, "rho": rho, "points": points })
        }
        _ => {
            return Err(CliError::Usage(
                "pass either --sigma/--rho or --graph/--model/--source".into(),
            ))
        }
    };
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
    Ok(())
}

// ----------------------------------------------------------------- serve

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory holding sources, streams, reports, and the index.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Block length every stored source must match.
    #[arg(long)]
    n: usize,
    /// Encode in universal mode (learned channel statistics).
    #[arg(long)]
    universal: bool,
}

fn cmd_serve(args: ServeArgs) -> CliResult {
    let config = ServiceConfig {
        graph: load_graph(&args.graph)?,
        model: load_model(&args.model)?,
        n: args.n,
        universal: args.universal,
    };
    let state = AppState::open(config, &args.data_dir, Arc::new(StdVfs))
        .map_err(|e| CliError::Data(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port)).await?;
        println!("listening on http://{}", listener.local_addr()?);
        smra_server::serve(listener, state).await?;
        Ok(())
    })
}
