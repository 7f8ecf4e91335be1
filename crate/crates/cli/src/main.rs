//! Command-line front end for ensemble cloud-cover post-processing.
//!
//! Five subcommands cover the full workflow: `generate` writes a
//! synthetic dataset, `run` executes an experiment over a dataset, and
//! `compare`, `pit` and `dm-matrix` derive comparison tables from a
//! finished run without touching its outputs. Every `generate` and
//! `run` leaves a manifest recording the tool version, the effective
//! seed and input hashes; rerunning with the same inputs and seed
//! reproduces every output byte for byte.
//!
//! Exit codes: 0 success, 1 execution failure, 2 missing or invalid
//! configuration or input files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use oktacal::data::{save_dataset, synth_generate, SynthConfig};
use oktacal::pipeline::{run_experiment, ExperimentConfig};
use oktacal::report::{dm_matrix, pit_bins, skill_table};
use oktacal::tables;

#[derive(Parser)]
#[command(name = "oktacal", version, about = "Ensemble cloud-cover post-processing")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic station dataset file.
    Generate(GenerateArgs),
    /// Run an experiment config against a dataset.
    Run(RunArgs),
    /// Print skill scores against the run's reference method.
    Compare(CompareArgs),
    /// Print pooled PIT histogram bin counts per method.
    Pit(PitArgs),
    /// Print the pairwise Diebold-Mariano significance matrix.
    DmMatrix(DmMatrixArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite an existing output file.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Dataset file to post-process.
    #[arg(long)]
    data: PathBuf,
    /// Directory for tables, models and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite a previous run in the same directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory of a finished run.
    #[arg(long)]
    run_dir: PathBuf,
    /// Override the run's reference method.
    #[arg(long)]
    reference: Option<String>,
    /// Bootstrap replicates for the confidence intervals.
    #[arg(long, default_value_t = 2000)]
    n_boot: usize,
    /// Mean bootstrap block length in days.
    #[arg(long, default_value_t = 25)]
    block: usize,
    /// Confidence level of the intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
}

#[derive(Args)]
struct PitArgs {
    /// Directory of a finished run.
    #[arg(long)]
    run_dir: PathBuf,
    /// Number of equal-width histogram bins.
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

#[derive(Args)]
struct DmMatrixArgs {
    /// Directory of a finished run.
    #[arg(long)]
    run_dir: PathBuf,
    /// False-discovery level of the station-wise adjustment.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

/// An error tagged with the exit code it should produce.
struct Failure {
    code: u8,
    source: anyhow::Error,
}

type CmdResult = Result<u8, Failure>;

trait Tag<T> {
    /// Marks errors as configuration/input problems (exit 2).
    fn usage(self) -> Result<T, Failure>;
    /// Marks errors as execution problems (exit 1).
    fn exec(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 2,
            source: e.into(),
        })
    }
    fn exec(self) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: 1,
            source: e.into(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args, cli.verbose),
        Command::Run(args) => cmd_run(args, cli.verbose),
        Command::Compare(args) => cmd_compare(args),
        Command::Pit(args) => cmd_pit(args),
        Command::DmMatrix(args) => cmd_dm_matrix(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.source);
            ExitCode::from(f.code)
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

fn read_config_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path)
        .with_context(|| format!("reading config {}", path.display()))
        .usage()
}

fn config_text<'a>(bytes: &'a [u8], path: &Path) -> Result<&'a str, Failure> {
    std::str::from_utf8(bytes)
        .with_context(|| format!("config {} is not UTF-8", path.display()))
        .usage()
}

fn toml_string_list(items: &[String]) -> String {
    let quoted: Vec<String> = items.iter().map(|s| format!("{s:?}")).collect();
    format!("[{}]", quoted.join(", "))
}

fn cmd_generate(args: &GenerateArgs, verbose: bool) -> CmdResult {
    let config_bytes = read_config_bytes(&args.config)?;
    let mut config =
        SynthConfig::from_toml_str(config_text(&config_bytes, &args.config)?).usage()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if args.out.exists() && !args.force {
        return Err(anyhow!(
            "{} already exists; pass --force to overwrite",
            args.out.display()
        ))
        .exec();
    }
    if verbose {
        eprintln!(
            "generating {} stations x {} days x {} lead times (seed {})",
            config.n_stations,
            config.n_days,
            config.lead_times.len(),
            config.seed
        );
    }
    let dataset = synth_generate(&config).exec()?;
    let mut bytes = Vec::new();
    save_dataset(&dataset, &mut bytes).exec()?;
    fs::write(&args.out, &bytes)
        .with_context(|| format!("writing {}", args.out.display()))
        .exec()?;

    let manifest = format!(
        "command = \"generate\"\n\
         tool = \"oktacal\"\n\
         version = \"{}\"\n\
         seed = {}\n\
         config_sha256 = \"{}\"\n\
         rows = {}\n\
         output = {:?}\n\
         output_sha256 = \"{}\"\n",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        sha256_hex(&config_bytes),
        dataset.n_rows(),
        args.out.file_name().map_or_else(
            || args.out.display().to_string(),
            |n| n.to_string_lossy().into_owned()
        ),
        sha256_hex(&bytes),
    );
    let manifest_path = manifest_path_for(&args.out);
    fs::write(&manifest_path, manifest)
        .with_context(|| format!("writing {}", manifest_path.display()))
        .exec()?;
    if verbose {
        eprintln!("wrote {} ({} rows)", args.out.display(), dataset.n_rows());
    }
    Ok(0)
}

fn manifest_path_for(dataset_out: &Path) -> PathBuf {
    let mut name = dataset_out.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

fn cmd_run(args: &RunArgs, verbose: bool) -> CmdResult {
    let config_bytes = read_config_bytes(&args.config)?;
    let mut config =
        ExperimentConfig::from_toml_str(config_text(&config_bytes, &args.config)?).usage()?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let data_bytes = fs::read(&args.data)
        .with_context(|| format!("reading dataset {}", args.data.display()))
        .usage()?;
    let (dataset, report) = oktacal::data::load_dataset(data_bytes.as_slice())
        .with_context(|| format!("loading dataset {}", args.data.display()))
        .usage()?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.rejected_rows.is_empty() {
        eprintln!(
            "warning: {} malformed rows rejected (first at line {})",
            report.rejected_rows.len(),
            report.rejected_rows[0].0
        );
    }

    let manifest_path = args.out_dir.join("manifest.toml");
    if (manifest_path.exists() || args.out_dir.join("cases.csv").exists()) && !args.force {
        return Err(anyhow!(
            "{} already holds a run; pass --force to overwrite",
            args.out_dir.display()
        ))
        .exec();
    }
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .usage()?;

    if verbose {
        eprintln!(
            "running {} methods over {} stations, {} lead times (seed {})",
            config.methods.len(),
            dataset.stations().len(),
            dataset.lead_times().len(),
            config.seed
        );
    }
    let output = run_experiment(&dataset, &config).usage()?;

    let completed: BTreeSet<String> = output
        .scores
        .iter()
        .map(|s| s.method().to_owned())
        .collect();
    let write = |name: &str, text: &str| -> Result<(), Failure> {
        let path = args.out_dir.join(name);
        fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .exec()
    };
    write("cases.csv", &tables::case_table(&output.scores, &output.pit).exec()?)?;
    write("summary.csv", &tables::summary_table(&output.scores))?;
    write("failures.csv", &tables::failures_table(&output.failures))?;
    write("provenance.csv", &tables::provenance_table(&output.provenance))?;
    let mut outputs = vec![
        "cases.csv".to_owned(),
        "failures.csv".to_owned(),
        "provenance.csv".to_owned(),
        "summary.csv".to_owned(),
    ];
    if !output.models.is_empty() {
        let dir = args.out_dir.join("models");
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating {}", dir.display()))
            .exec()?;
        for (stem, text) in &output.models {
            fs::write(dir.join(format!("{stem}.model")), text)
                .with_context(|| format!("writing model {stem}"))
                .exec()?;
            outputs.push(format!("models/{stem}.model"));
        }
    }

    let completed_list: Vec<String> = completed.iter().cloned().collect();
    let manifest = format!(
        "command = \"run\"\n\
         tool = \"oktacal\"\n\
         version = \"{}\"\n\
         seed = {}\n\
         reference = {:?}\n\
         methods = {}\n\
         completed = {}\n\
         failed_tasks = {}\n\
         config_sha256 = \"{}\"\n\
         data_sha256 = \"{}\"\n\
         outputs = {}\n",
        env!("CARGO_PKG_VERSION"),
        config.seed,
        config.reference,
        toml_string_list(&config.methods),
        toml_string_list(&completed_list),
        output.failures.len(),
        sha256_hex(&config_bytes),
        sha256_hex(&data_bytes),
        toml_string_list(&outputs),
    );
    fs::write(&manifest_path, manifest)
        .with_context(|| format!("writing {}", manifest_path.display()))
        .exec()?;

    if verbose {
        eprintln!(
            "{} series written, {} methods completed, {} failures",
            output.scores.len(),
            completed.len(),
            output.failures.len()
        );
    }
    if completed.is_empty() {
        return Err(anyhow!("no method completed on any station")).exec();
    }
    Ok(0)
}

/// Loads a finished run: its manifest plus the parsed case table.
fn load_run(
    run_dir: &Path,
) -> Result<
    (
        toml::Value,
        Vec<oktacal::verify::ScoreSeries>,
        Vec<oktacal::pipeline::PitSeries>,
    ),
    Failure,
> {
    let manifest_path = run_dir.join("manifest.toml");
    let manifest_text = fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))
        .usage()?;
    let manifest: toml::Value = toml::from_str(&manifest_text)
        .with_context(|| format!("parsing {}", manifest_path.display()))
        .usage()?;
    let cases_path = run_dir.join("cases.csv");
    let cases_text = fs::read_to_string(&cases_path)
        .with_context(|| format!("reading {}", cases_path.display()))
        .usage()?;
    let (scores, pit) = tables::parse_case_table(&cases_text)
        .with_context(|| format!("parsing {}", cases_path.display()))
        .usage()?;
    Ok((manifest, scores, pit))
}

fn manifest_str<'a>(manifest: &'a toml::Value, key: &str) -> Option<&'a str> {
    manifest.get(key).and_then(|v| v.as_str())
}

fn cmd_compare(args: &CompareArgs) -> CmdResult {
    if args.n_boot < 2 {
        return Err(anyhow!("--n-boot must be at least 2")).usage();
    }
    if args.block < 1 {
        return Err(anyhow!("--block must be at least 1")).usage();
    }
    if !(0.0 < args.level && args.level < 1.0) {
        return Err(anyhow!("--level must lie strictly between 0 and 1")).usage();
    }
    let (manifest, scores, _) = load_run(&args.run_dir)?;
    let reference = match &args.reference {
        Some(r) => r.clone(),
        None => manifest_str(&manifest, "reference")
            .ok_or_else(|| anyhow!("manifest has no reference method"))
            .usage()?
            .to_owned(),
    };
    let seed = manifest
        .get("seed")
        .and_then(|v| v.as_integer())
        .ok_or_else(|| anyhow!("manifest has no seed"))
        .usage()? as u64;
    let rows = skill_table(
        &scores,
        &reference,
        args.n_boot,
        args.block,
        args.level,
        seed,
    )
    .exec()?;
    print!("{}", tables::skill_csv(&rows));
    Ok(0)
}

fn cmd_pit(args: &PitArgs) -> CmdResult {
    if args.bins < 2 {
        return Err(anyhow!("--bins must be at least 2")).usage();
    }
    let (_, _, pit) = load_run(&args.run_dir)?;
    let rows = pit_bins(&pit, args.bins).exec()?;
    print!("{}", tables::pit_csv(&rows));
    Ok(0)
}

fn cmd_dm_matrix(args: &DmMatrixArgs) -> CmdResult {
    if !(0.0 < args.alpha && args.alpha < 1.0) {
        return Err(anyhow!("--alpha must lie strictly between 0 and 1")).usage();
    }
    let (_, scores, _) = load_run(&args.run_dir)?;
    let cells = dm_matrix(&scores, args.alpha).exec()?;
    print!("{}", tables::dm_csv(&cells));
    Ok(0)
}
