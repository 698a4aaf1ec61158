use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dreamspace::config::ServiceConfig;
use dreamspace::dataset::{open_space, save_space, IngestOptions, SpaceFile, SPACE_FILE};
use dreamspace::error::{Error, Result};
use dreamspace::simulate::{self, Policy, SeedChoice, SimConfig};
use dreamspace::synth::{self, SynthConfig};
use dreamspace::{export, session_log, service};
use dreamspace_core::cluster::{build_tree, choose_k};
use dreamspace_core::reduce::{embed_3d, EmbeddingMethod, TsneConfig};
use dreamspace_core::session::replay;
use dreamspace_core::{Channel, FeatureWeights, SolutionSpace};

#[derive(Parser)]
#[command(name = "dreamspace", version, about = "Design-space exploration engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic monitor-stand dataset.
    Synth(SynthArgs),
    /// Validate a dataset and write its feature space to space.json.
    Ingest(IngestArgs),
    /// Embed every solution in 3D and write id,x,y,z.
    Embed(EmbedArgs),
    /// Cluster every solution and write id,cluster,representative.
    Cluster(ClusterArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Compare navigation policies with an oracle user.
    Simulate(SimulateArgs),
    /// Write the survivor table of a space or a replayed session.
    Export(ExportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// 5 × 5 × 4 × 168 grid (16,800 designs). Default when no list is given.
    #[arg(long, conflicts_with_all = ["middle_load", "outer_load", "voxel_size", "levels"])]
    grid_default: bool,
    /// Comma-separated middle loads, N.
    #[arg(long, value_delimiter = ',')]
    middle_load: Option<Vec<f64>>,
    /// Comma-separated outer loads, N.
    #[arg(long, value_delimiter = ',')]
    outer_load: Option<Vec<f64>>,
    /// Comma-separated voxel sizes, mm.
    #[arg(long, value_delimiter = ',')]
    voxel_size: Option<Vec<f64>>,
    /// Comma-separated volume-minimization levels.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<u32>>,
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Clone)]
struct SpaceArgs {
    /// Dataset directory or space.json.
    space: PathBuf,
    /// D2 point pairs per mesh when ingesting.
    #[arg(long, default_value_t = dreamspace_core::geometry::D2_DEFAULT_PAIRS)]
    pairs: usize,
    /// Seed mixed into shape sampling.
    #[arg(long, default_value_t = 0)]
    shape_seed: u64,
    /// Comma-separated metric channels (default: all).
    #[arg(long, value_delimiter = ',')]
    channels: Option<Vec<String>>,
}

impl SpaceArgs {
    fn options(&self) -> Result<IngestOptions> {
        let mut opts = IngestOptions {
            pairs: self.pairs,
            seed: self.shape_seed,
            ..IngestOptions::default()
        };
        if let Some(names) = &self.channels {
            opts.channels = names
                .iter()
                .map(|n| Channel::from_name(n).ok_or_else(|| Error::Invalid(format!("unknown channel {n}"))))
                .collect::<Result<_>>()?;
        }
        Ok(opts)
    }

    fn open(&self) -> Result<SolutionSpace> {
        Ok(open_space(&self.space, &self.options()?)?.2)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Output file (default: <dataset>/space.json).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pca,
    Tsne,
}

impl From<Method> for EmbeddingMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Pca => EmbeddingMethod::Pca,
            Method::Tsne => EmbeddingMethod::Tsne,
        }
    }
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, value_enum, default_value_t = Method::Pca)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    perplexity: Option<f64>,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// Cluster count (default: round(sqrt(N/2)) capped at 50).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directories or space files to load at startup.
    #[arg(long = "space")]
    spaces: Vec<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    space: SpaceArgs,
    /// stochastic, recommender, hybrid, hybrid:<switch_cycle> or all.
    #[arg(long, default_value = "all")]
    policy: String,
    /// Explicit target ids; otherwise `--targets` random ones.
    #[arg(long = "target")]
    target_ids: Vec<String>,
    #[arg(long, default_value_t = 20)]
    targets: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// The recommender seeds the target itself instead of the nearest shown representative.
    #[arg(long)]
    oracle_seeds: bool,
    /// CSV output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the comparison report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Session log to replay; its survivors and embedding are exported.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Embedding used without a log.
    #[arg(long, value_enum, default_value_t = Method::Pca)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| Error::io(p, e))?;
            Ok(Box::new(io::BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn synth_cmd(a: SynthArgs) -> Result<()> {
    let mut grid = SynthConfig::default_grid();
    if !a.grid_default {
        if let Some(v) = a.middle_load {
            grid.middle_load = v;
        }
        if let Some(v) = a.outer_load {
            grid.outer_load = v;
        }
        if let Some(v) = a.voxel_size {
            grid.voxel_size = v;
        }
        if let Some(v) = a.levels {
            grid.volume_minimization = v;
        }
    }
    let mut cfg = SynthConfig::with_grid(grid, a.seed);
    if let Some(n) = a.name {
        cfg.name = n;
    }
    let m = synth::generate(&cfg, &a.out)?;
    println!("generated {} designs in {}", m.count, a.out.display());
    Ok(())
}

fn ingest_cmd(a: IngestArgs) -> Result<()> {
    let opts = a.space.options()?;
    let ds = dreamspace::dataset::load_dataset(&a.space.space, &opts)?;
    let out = a.out.unwrap_or_else(|| a.space.space.join(SPACE_FILE));
    let (m, b) = ds.space.layout().dims();
    save_space(
        &out,
        &SpaceFile {
            name: ds.manifest.name.clone(),
            options: opts,
            space: ds.space.clone(),
        },
    )?;
    println!(
        "ingested {} solutions ({m} metric channels, {b} shape bins, 0 violations) -> {}",
        ds.space.len(),
        out.display()
    );
    Ok(())
}

fn all_points(space: &SolutionSpace) -> (Vec<usize>, dreamspace_core::Matrix) {
    let all: Vec<usize> = (0..space.len()).collect();
    let w = FeatureWeights::uniform(space.layout(), 0.5);
    let points = space.weighted_points(&all, &w);
    (all, points)
}

fn embed_all(space: &SolutionSpace, method: Method, seed: u64, perplexity: Option<f64>) -> Result<(Vec<usize>, dreamspace_core::reduce::Embedding)> {
    let (all, points) = all_points(space);
    let mut cfg = TsneConfig {
        seed,
        ..TsneConfig::default()
    };
    if let Some(p) = perplexity {
        cfg.perplexity = p;
    }
    let e = embed_3d(&points, method.into(), &cfg, &mut |_| {})?;
    Ok((all, e))
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let space = a.space.open()?;
    let (all, e) = embed_all(&space, a.method, a.seed, a.perplexity)?;
    export::write_embedding(&space, &all, &e, output(&a.out)?)
}

fn cluster_cmd(a: ClusterArgs) -> Result<()> {
    let space = a.space.open()?;
    let (all, points) = all_points(&space);
    let k = a.k.unwrap_or_else(|| choose_k(space.len())).clamp(1, space.len());
    let tree = build_tree(&points, &all, k, a.seed, None)?;
    export::write_clusters(&space, &tree, output(&a.out)?)
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(d) = a.data_root {
        cfg.data_root = d;
    }
    cfg.preload.extend(a.spaces);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Internal(e.to_string()))?;
    rt.block_on(service::serve(cfg))
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let space = a.space.open()?;
    let policies: Vec<Policy> = if a.policy == "all" {
        Policy::all().to_vec()
    } else {
        a.policy.split(',').map(str::parse).collect::<Result<_>>()?
    };
    if !(a.rho > 0.0 && a.rho < 1.0) {
        return Err(Error::Invalid("rho must lie in (0, 1)".into()));
    }
    let cfg = SimConfig {
        rho: a.rho,
        k: a.k,
        seed: a.seed,
        seed_choice: if a.oracle_seeds { SeedChoice::Target } else { SeedChoice::Nearest },
        ..SimConfig::default()
    };
    let targets = if a.target_ids.is_empty() {
        simulate::sample_targets(&space, a.targets, a.seed)
    } else {
        a.target_ids
    };
    let traces = simulate::simulate_batch(&space, &policies, &targets, &cfg)?;
    simulate::write_csv(&traces, output(&a.out)?)?;
    let report = simulate::report(space.len(), &cfg, &traces);
    match &a.report {
        Some(p) => fs::write(p, &report).map_err(|e| Error::io(p, e))?,
        None => eprint!("{report}"),
    }
    Ok(())
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    let Format::Csv = a.format;
    let space = Arc::new(a.space.open()?);
    match &a.log {
        Some(log_path) => {
            let log = session_log::read_log(log_path)?;
            let session = replay(&log, |_| Some(space.clone()), &mut |_| {})?;
            let st = session.state();
            export::write_survivors(&space, &st.survivors, &st.embedding, output(&a.out)?)
        }
        None => {
            let (all, e) = embed_all(&space, a.method, a.seed, None)?;
            export::write_survivors(&space, &all, &e, output(&a.out)?)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth_cmd(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Cluster(a) => cluster_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Export(a) => export_cmd(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
