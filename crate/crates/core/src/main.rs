//! Command line front end.
//!
//! Default invocation runs the catalog pipeline; subcommands provide the
//! synthetic-sky generator and the evaluation tools. Exit codes: 0 success,
//! 2 configuration error, 3 input parse error, 4 i/o error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use starcat::config::{EngineConfig, Strategy};
use starcat::io::{
    read_assignments, read_catalog, read_observations, write_catalog, ReadError,
};
use starcat::pipeline::{run_pipeline, PipelineError};
use starcat::quality::{
    crossmatch, generate_synthetic, mean_member_distance, partition_invariance_check,
    QualityError, SyntheticParams,
};
use starcat::sphere::SphericalPoint;

const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "cluster",
    about = "Cluster sky observations into a catalog of object identifiers",
    subcommand_negates_reqs = true,
    args_conflicts_with_subcommands = true
)]
struct Cli {
    #[command(flatten)]
    run: RunArgs,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct RunArgs {
    /// Engine configuration (INI); defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,

    /// Input observations CSV: ra,dec,imageID,starNo
    #[arg(long, required = true)]
    input: Option<PathBuf>,

    /// Output catalog CSV: catalog_id,ra,dec
    #[arg(long, required = true)]
    catalog: Option<PathBuf>,

    /// Output assignments CSV: catalog_id,image_id,star_no
    #[arg(long, required = true)]
    assignments: Option<PathBuf>,

    /// Worker count for the clustering phase (overrides config)
    #[arg(long)]
    threads: Option<usize>,

    /// Clustering strategy (overrides config)
    #[arg(long)]
    strategy: Option<Strategy>,

    /// Random seed for reproducible runs
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Also write the report lines to this file
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sky with known clusters
    Synth(SynthArgs),
    /// Histogram nearest-neighbor distances between two catalogs
    Crossmatch(CrossmatchArgs),
    /// Mean member-to-center distance of a catalog
    Quality(QualityArgs),
    /// Compare catalogs built with two task resolutions
    Invariance(InvarianceArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of clusters to plant
    #[arg(long)]
    clusters: usize,

    /// Mean observations per cluster (Poisson, floor 1)
    #[arg(long, default_value_t = 100.0)]
    mean_members: f64,

    /// Per-axis member scatter in arcsec
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,

    /// Minimum center separation in arcsec
    #[arg(long, default_value_t = 5.0)]
    min_separation: f64,

    /// Field center RA in degrees
    #[arg(long, default_value_t = 15.0)]
    center_ra: f64,

    /// Field center Dec in degrees
    #[arg(long, default_value_t = -72.0)]
    center_dec: f64,

    /// Field radius in degrees
    #[arg(long, default_value_t = 0.5)]
    radius_deg: f64,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Observations CSV to write
    #[arg(long)]
    output: PathBuf,

    /// Optionally write true centers as a catalog CSV
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct CrossmatchArgs {
    #[arg(long)]
    catalog_a: PathBuf,

    #[arg(long)]
    catalog_b: PathBuf,

    /// Match radius in arcsec
    #[arg(long, default_value_t = 1.0)]
    max_radius: f64,

    /// Histogram CSV to write: bin_start_arcsec,count
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct QualityArgs {
    #[arg(long)]
    catalog: PathBuf,

    #[arg(long)]
    assignments: PathBuf,

    #[arg(long)]
    observations: PathBuf,
}

#[derive(Args)]
struct InvarianceArgs {
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    input: PathBuf,

    #[arg(long)]
    task_k_a: u8,

    #[arg(long)]
    task_k_b: u8,

    #[arg(long, default_value_t = 1)]
    threads: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        None => run(cli.run),
        Some(Command::Synth(args)) => synth(args),
        Some(Command::Crossmatch(args)) => run_crossmatch(args),
        Some(Command::Quality(args)) => run_quality(args),
        Some(Command::Invariance(args)) => run_invariance(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type CliResult = Result<(), (u8, String)>;

fn fail(code: u8, message: impl Into<String>) -> CliResult {
    Err((code, message.into()))
}

fn load_config(path: Option<&PathBuf>) -> Result<EngineConfig, (u8, String)> {
    match path {
        None => Ok(EngineConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| (EXIT_IO, format!("cannot read config {}: {e}", p.display())))?;
            EngineConfig::parse(&text).map_err(|e| (EXIT_CONFIG, e.to_string()))
        }
    }
}

fn pipeline_exit(err: PipelineError) -> (u8, String) {
    let code = match &err {
        PipelineError::Config(_) => EXIT_CONFIG,
        PipelineError::Input { .. } => EXIT_INPUT,
        PipelineError::Io { .. } => EXIT_IO,
        PipelineError::TaskPanicked { .. } => 1,
    };
    (code, err.to_string())
}

fn run(args: RunArgs) -> CliResult {
    let mut config = load_config(args.config.as_ref())?;
    if let Some(strategy) = args.strategy {
        config.strategy = strategy;
    }
    let threads = args.threads.unwrap_or(config.threads);
    config.threads = threads.max(1);
    config.validate().map_err(|e| (EXIT_CONFIG, e.to_string()))?;

    let input = args.input.expect("required by clap");
    let catalog = args.catalog.expect("required by clap");
    let assignments = args.assignments.expect("required by clap");

    let report = run_pipeline(&config, &input, &catalog, &assignments, config.threads, args.seed)
        .map_err(pipeline_exit)?;

    for line in report.lines() {
        eprintln!("{line}");
    }
    if let Some(path) = args.report {
        let write = || -> std::io::Result<()> {
            let mut file = BufWriter::new(File::create(&path)?);
            for line in report.lines() {
                writeln!(file, "{line}")?;
            }
            file.flush()
        };
        write().map_err(|e| (EXIT_IO, format!("cannot write report {}: {e}", path.display())))?;
    }
    Ok(())
}

fn synth(args: SynthArgs) -> CliResult {
    let center = match SphericalPoint::new(args.center_ra, args.center_dec) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, format!("--center-ra/--center-dec: {e}")),
    };
    let params = SyntheticParams {
        n_clusters: args.clusters,
        mean_members: args.mean_members,
        sigma_arcsec: args.sigma,
        min_separation_arcsec: args.min_separation,
        region_center: center,
        region_radius_deg: args.radius_deg,
        seed: args.seed,
    };
    let (observations, truth) = match generate_synthetic(&params) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, e.to_string()),
    };

    let io_fail = |path: &PathBuf, e: std::io::Error| {
        (EXIT_IO, format!("cannot write {}: {e}", path.display()))
    };
    let mut out = BufWriter::new(File::create(&args.output).map_err(|e| io_fail(&args.output, e))?);
    for o in &observations {
        writeln!(
            out,
            "{:.10},{:.10},{},{}",
            o.pos.ra_deg(),
            o.pos.dec_deg(),
            o.image_id,
            o.star_no
        )
        .map_err(|e| io_fail(&args.output, e))?;
    }
    out.flush().map_err(|e| io_fail(&args.output, e))?;

    if let Some(path) = args.truth {
        let mut records: Vec<starcat::io::CatalogRecord> = truth
            .centers
            .iter()
            .enumerate()
            .map(|(i, pos)| starcat::io::CatalogRecord { catalog_id: i as i64, pos: *pos })
            .collect();
        let mut out = BufWriter::new(File::create(&path).map_err(|e| io_fail(&path, e))?);
        write_catalog(&mut out, &mut records).map_err(|e| io_fail(&path, e))?;
        out.flush().map_err(|e| io_fail(&path, e))?;
    }
    eprintln!("observations={} clusters={}", observations.len(), truth.centers.len());
    Ok(())
}

fn read_error_exit(path: &PathBuf, err: ReadError) -> (u8, String) {
    let code = match err {
        ReadError::Io(_) => EXIT_IO,
        _ => EXIT_INPUT,
    };
    (code, format!("{}: {err}", path.display()))
}

fn open_catalog(path: &PathBuf) -> Result<Vec<starcat::io::CatalogRecord>, (u8, String)> {
    let file = File::open(path)
        .map_err(|e| (EXIT_IO, format!("cannot open {}: {e}", path.display())))?;
    read_catalog(BufReader::new(file)).map_err(|e| read_error_exit(path, e))
}

fn run_crossmatch(args: CrossmatchArgs) -> CliResult {
    let a = open_catalog(&args.catalog_a)?;
    let b = open_catalog(&args.catalog_b)?;
    if a.is_empty() || b.is_empty() {
        return fail(EXIT_INPUT, "crossmatch requires two non-empty catalogs");
    }
    let hist = crossmatch(&a, &b, args.max_radius);
    println!(
        "matched={} unmatched={} mode_bin_arcsec={:.3}",
        hist.matched,
        hist.unmatched,
        hist.mode_bin_start_arcsec()
    );
    if let Some(path) = args.histogram {
        let mut out = BufWriter::new(
            File::create(&path)
                .map_err(|e| (EXIT_IO, format!("cannot write {}: {e}", path.display())))?,
        );
        hist.write_csv(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| (EXIT_IO, format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_quality(args: QualityArgs) -> CliResult {
    let catalog = open_catalog(&args.catalog)?;
    let assignments = {
        let file = File::open(&args.assignments)
            .map_err(|e| (EXIT_IO, format!("cannot open {}: {e}", args.assignments.display())))?;
        read_assignments(BufReader::new(file))
            .map_err(|e| read_error_exit(&args.assignments, e))?
    };
    let observations = {
        let file = File::open(&args.observations)
            .map_err(|e| (EXIT_IO, format!("cannot open {}: {e}", args.observations.display())))?;
        read_observations(BufReader::new(file))
            .map_err(|e| read_error_exit(&args.observations, e))?
    };
    match mean_member_distance(&catalog, &assignments, &observations) {
        Ok(mean) => {
            println!("assignments={} mean_member_distance_arcsec={:.6}", assignments.len(), mean);
            Ok(())
        }
        Err(e) => fail(EXIT_INPUT, e.to_string()),
    }
}

fn run_invariance(args: InvarianceArgs) -> CliResult {
    let config = load_config(args.config.as_ref())?;
    let observations = {
        let file = File::open(&args.input)
            .map_err(|e| (EXIT_IO, format!("cannot open {}: {e}", args.input.display())))?;
        read_observations(BufReader::new(file)).map_err(|e| read_error_exit(&args.input, e))?
    };
    match partition_invariance_check(
        &observations,
        &config,
        args.task_k_a,
        args.task_k_b,
        args.threads,
        args.seed,
    ) {
        Ok(report) => {
            println!(
                "clusters_a={} clusters_b={} unmatched_a={} unmatched_b={} \
                 max_displacement_arcsec={:.6}",
                report.clusters_a,
                report.clusters_b,
                report.unmatched_a,
                report.unmatched_b,
                report.max_displacement_arcsec
            );
            Ok(())
        }
        Err(QualityError::Pipeline(e)) => Err(pipeline_exit(e)),
        Err(e) => fail(EXIT_CONFIG, e.to_string()),
    }
}
