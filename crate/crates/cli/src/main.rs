use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use scw_core::analysis::BoundKind;
use scw_core::channel::{cir_expected_count, PhysicalParams};
use scw_core::codebook::{code_rate, enumerate_full_scw_capped, sample_partial_codebook, DEFAULT_ENUMERATION_CAP};
use scw_core::sim::{bound_series, run_experiment, ExperimentConfig, Sweep};
use scw_core::{SymbolAlphabet, WeightVector};

#[derive(Parser, Debug)]
#[command(name = "scw", version, about = "Strongly constant-weight codes over diffusive molecular links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a full or partial SCW codebook and write it as text.
    Codebook(CodebookArgs),
    /// Report size and rate of a full SCW code.
    Rate(CodeArgs),
    /// Tabulate the expected received count after a release.
    Cir(CirArgs),
    /// Evaluate analytical CER bounds over a config's SNR grid.
    Bounds(RunArgs),
    /// Run a Monte Carlo experiment.
    Simulate(RunArgs),
}

#[derive(Args, Debug)]
struct CodeArgs {
    /// Alphabet size; levels are evenly spaced on [0, 1].
    #[arg(long = "L", alias = "levels", value_name = "L")]
    levels: Option<usize>,
    /// Explicit symbol levels, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "levels")]
    alphabet: Option<Vec<f64>>,
    /// Per-level counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    weights: Vec<usize>,
}

impl CodeArgs {
    fn resolve(&self) -> Result<(SymbolAlphabet, WeightVector)> {
        let weights = WeightVector::new(self.weights.clone())?;
        let alphabet = match (&self.alphabet, self.levels) {
            (Some(levels), _) => SymbolAlphabet::new(levels.clone())?,
            (None, Some(l)) => SymbolAlphabet::uniform(l)?,
            (None, None) => SymbolAlphabet::uniform(weights.num_levels())?,
        };
        weights.check_alphabet(&alphabet)?;
        Ok((alphabet, weights))
    }
}

#[derive(Args, Debug)]
struct CodebookArgs {
    #[command(flatten)]
    code: CodeArgs,
    /// Keep a uniform random subset of this many codewords.
    #[arg(long)]
    partial: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Refuse to enumerate more codewords than this.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u64,
    #[arg(long, short, default_value = "codebook.txt")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CirArgs {
    /// TOML file with physical parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Sampling times in s, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1e-4")]
    t: Vec<f64>,
    #[arg(long)]
    n_tx: Option<f64>,
    #[arg(long)]
    rx_radius: Option<f64>,
    #[arg(long)]
    distance: Option<f64>,
    #[arg(long)]
    diffusion: Option<f64>,
    #[arg(long)]
    enzyme_rate: Option<f64>,
    #[arg(long)]
    v_par: Option<f64>,
    #[arg(long)]
    v_perp: Option<f64>,
    /// CSV output; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (TOML), or a run manifest (JSON) to replay.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, short, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// SNR grid override in dB, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Bound override, comma separated.
    #[arg(long, value_delimiter = ',')]
    bounds: Option<Vec<String>>,
    #[arg(long, env = "SCW_WORKERS", default_value_t = default_workers())]
    workers: usize,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    subcommand: String,
    version: String,
    config: ExperimentConfig,
    master_seed: u64,
    outputs: Vec<PathBuf>,
    workers: usize,
    wall_clock_seconds: f64,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        let de = &mut serde_json::Deserializer::from_str(&text);
        let manifest: RunManifest = serde_path_to_error::deserialize(de)
            .map_err(|e| anyhow::anyhow!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))?;
        return Ok(manifest.config);
    }
    let value: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    serde_path_to_error::deserialize(value)
        .map_err(|e| anyhow::anyhow!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
}

fn parse_bound(name: &str) -> Result<BoundKind> {
    Ok(match name.trim() {
        "chernoff" => BoundKind::Chernoff,
        "skellam_union" => BoundKind::SkellamUnion,
        "orderstat_lower" => BoundKind::OrderstatLower,
        "orderstat_upper" => BoundKind::OrderstatUpper,
        other => bail!("unknown bound `{other}`"),
    })
}

fn resolve_run(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(grid) = &args.snr_db {
        match &mut config.sweep {
            Sweep::Snr { snr_db } => *snr_db = grid.clone(),
            Sweep::Length { .. } => bail!("--snr-db applies to snr sweeps only"),
        }
    }
    if let Some(names) = &args.bounds {
        config.bounds = names.iter().map(|n| parse_bound(n)).collect::<Result<_>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn write_output(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(args: RunArgs, subcommand: &str) -> Result<()> {
    let started = Instant::now();
    let config = resolve_run(&args)?;
    let series = if subcommand == "bounds" {
        if config.bounds.is_empty() {
            bail!("no bounds requested; set `bounds` in the config or pass --bounds");
        }
        bound_series(&config)?
    } else {
        run_experiment(&config, args.workers)?
    };
    let csv = series.to_csv();
    write_output(&args.out, &csv)?;
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        config,
        outputs: vec![args.out.clone()],
        workers: args.workers,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let manifest_file = manifest_path(&args.out);
    write_output(&manifest_file, &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    print!("{csv}");
    eprintln!("wrote {} and {}", args.out.display(), manifest_file.display());
    Ok(())
}

fn cmd_codebook(args: CodebookArgs) -> Result<()> {
    let (alphabet, weights) = args.code.resolve()?;
    let full = enumerate_full_scw_capped(&alphabet, &weights, args.cap)?;
    let book = match args.partial {
        Some(size) => sample_partial_codebook(&full, size, args.seed)?,
        None => full,
    };
    write_output(&args.out, &book.to_text())?;
    let report = code_rate(&alphabet, &weights)?;
    println!("M={}", book.len());
    println!("rate={:.4}", (book.len() as f64).ln() / (alphabet.len() as f64).ln() / weights.length() as f64);
    if args.partial.is_some() {
        println!("full_M={}", report.size);
    }
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_rate(args: CodeArgs) -> Result<()> {
    let (alphabet, weights) = args.resolve()?;
    let report = code_rate(&alphabet, &weights)?;
    println!("M={}", report.size);
    println!("rate={:.4}", report.rate);
    println!("asymptotic_rate={:.4}", report.asymptotic_rate);
    println!("release_fraction={:.4}", report.release_fraction);
    Ok(())
}

fn cmd_cir(args: CirArgs) -> Result<()> {
    let mut params = match &args.params {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let value: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            serde_path_to_error::deserialize(value)
                .map_err(|e| anyhow::anyhow!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))?
        }
        None => PhysicalParams::default(),
    };
    let overrides = [
        (args.n_tx, &mut params.n_tx),
        (args.rx_radius, &mut params.rx_radius),
        (args.distance, &mut params.distance),
        (args.diffusion, &mut params.diffusion),
        (args.enzyme_rate, &mut params.enzyme_rate),
        (args.v_par, &mut params.v_par),
        (args.v_perp, &mut params.v_perp),
    ];
    for (value, slot) in overrides {
        if let Some(v) = value {
            *slot = v;
        }
    }
    params.validate()?;
    let mut csv = String::from("t,expected_count\n");
    for &t in &args.t {
        let count = cir_expected_count(&params, t)?;
        csv.push_str(&format!("{t:e},{count:e}\n"));
    }
    match &args.out {
        Some(path) => write_output(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Codebook(args) => cmd_codebook(args),
        Command::Rate(args) => cmd_rate(args),
        Command::Cir(args) => cmd_cir(args),
        Command::Bounds(args) => run(args, "bounds"),
        Command::Simulate(args) => run(args, "simulate"),
    }
}
