//! The `mosaic` command-line tool.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mosaic_core::cost::{
    ablation_report, count_model, render_ablation_csv, render_ablation_text, AblationAxis, CountingPolicy,
};
use mosaic_core::io::{load_weights, random_image, read_image_ppm, save_weights, write_labelmap_pgm};
use mosaic_core::selftest::{run_selftest, SelftestOptions};
use mosaic_core::{build_model, Error, Model, ModelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mosaic", version, about = "Build, cost, and run the MOSAIC segmentation network")]
pub struct Cli {
    /// Multiply-add counting policy.
    #[arg(long, global = true, value_enum, default_value_t = Policy::Standard)]
    pub policy: Policy,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Standard,
    IncludeEverything,
}

impl From<Policy> for CountingPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Standard => CountingPolicy::Standard,
            Policy::IncludeEverything => CountingPolicy::IncludeEverything,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Cityscapes,
    Ade20k,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    EncoderFilters,
    DecoderFilters,
    Filters,
    Pyramid,
    Skips,
}

impl From<Axis> for AblationAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::EncoderFilters => AblationAxis::EncoderFilters,
            Axis::DecoderFilters => AblationAxis::DecoderFilters,
            Axis::Filters => AblationAxis::Filters,
            Axis::Pyramid => AblationAxis::Pyramid,
            Axis::Skips => AblationAxis::Skips,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// key=value configuration file; omitted keys take their defaults.
    #[arg(long = "config", value_name = "PATH")]
    pub config_path: Option<PathBuf>,

    /// Start from a built-in configuration instead of a file.
    #[arg(long, value_enum, conflicts_with = "config_path")]
    pub preset: Option<Preset>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ModelConfig, Error> {
        match (&self.config_path, self.preset) {
            (Some(path), _) => ModelConfig::load(path),
            (None, Some(Preset::Ade20k)) => Ok(ModelConfig::ade20k()),
            (None, _) => Ok(ModelConfig::cityscapes()),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List every node with its kind, parameters, inputs and shape.
    Describe {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Multiply-adds and parameters per node, per stage, and in total.
    Cost {
        #[command(flatten)]
        config: ConfigArgs,
        /// Emit CSV (label,madds,madds_B,params) instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Total cost of each variant along one configuration axis.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Variants separated by ';', e.g. "0;4-S;8-C,4-S".
        #[arg(long)]
        variants: String,
        #[arg(long)]
        csv: bool,
    },
    /// Run a forward pass and write the label map as a PGM.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// MOSW weight file.
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
        /// Seed for weight initialization and, without --input, the image.
        #[arg(long)]
        seed: Option<u64>,
        /// P6 image at the configured resolution.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        output: PathBuf,
        /// Also write the weights used to this MOSW file.
        #[arg(long, value_name = "PATH")]
        save_weights: Option<PathBuf>,
    },
    /// Check kernels, shape laws, cost counts and ablation orderings.
    Selftest {
        /// Random cases per check.
        #[arg(long, default_value_t = 25)]
        cases: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
}

/// Failure carrying the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_config() { EXIT_USAGE } else { EXIT_RUNTIME };
        Self { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError { code: EXIT_RUNTIME, message: format!("i/o error: {e}") }
}

fn build(config: &ConfigArgs) -> Result<Model, CliError> {
    let cfg = config.load()?;
    Ok(build_model(&cfg)?)
}

fn describe(config: &ConfigArgs, policy: CountingPolicy, out: &mut dyn Write) -> Result<(), CliError> {
    let model = build(config)?;
    let report = count_model(&model, policy)?;
    let mut s = model.graph.describe(&model.shapes);
    s.push('\n');
    for (stage, madds, params) in report.stage_subtotals() {
        let _ = writeln!(s, "stage {stage:<9} madds={madds} ({}B) params={params}", mosaic_core::cost::billions(madds));
    }
    let _ = writeln!(
        s,
        "total           madds={} ({}B) params={}",
        report.total_madds,
        mosaic_core::cost::billions(report.total_madds),
        report.total_params
    );
    out.write_all(s.as_bytes()).map_err(io_err)
}

fn cost(config: &ConfigArgs, csv: bool, policy: CountingPolicy, out: &mut dyn Write) -> Result<(), CliError> {
    let model = build(config)?;
    let report = count_model(&model, policy)?;
    let text = if csv { report.render_csv() } else { report.render_text() };
    out.write_all(text.as_bytes()).map_err(io_err)
}

fn ablate(
    config: &ConfigArgs,
    axis: Axis,
    variants: &str,
    csv: bool,
    policy: CountingPolicy,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let list: Vec<String> = variants.split(';').map(str::trim).filter(|v| !v.is_empty()).map(str::to_string).collect();
    if list.is_empty() {
        return Err(usage("--variants: no variants given"));
    }
    let base = config.load()?;
    let rows = ablation_report(&base, axis.into(), &list, policy)?;
    let text = if csv { render_ablation_csv(&rows) } else { render_ablation_text(&rows) };
    out.write_all(text.as_bytes()).map_err(io_err)
}

struct RunArgs<'a> {
    config: &'a ConfigArgs,
    weights: Option<&'a Path>,
    seed: Option<u64>,
    input: Option<&'a Path>,
    output: &'a Path,
    save: Option<&'a Path>,
}

fn run(args: RunArgs<'_>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = build(args.config)?;
    let weights = match (args.weights, args.seed) {
        (Some(path), _) => load_weights(path)?,
        (None, Some(seed)) => model.init_weights(seed),
        (None, None) => return Err(usage("run: give --weights or --seed")),
    };
    if let Some(path) = args.save {
        save_weights(&weights, path)?;
    }
    let image = match args.input {
        Some(path) => read_image_ppm(path)?,
        None => random_image(model.config.input_h, model.config.input_w, args.seed.unwrap_or(0))?,
    };
    if image.shape() != model.input_shape() {
        return Err(CliError {
            code: EXIT_RUNTIME,
            message: format!(
                "resolution mismatch: image is {}x{}, configuration expects {}x{}",
                image.shape().h,
                image.shape().w,
                model.config.input_h,
                model.config.input_w
            ),
        });
    }
    let start = Instant::now();
    let pred = model.predict(&weights, &image)?;
    let total = start.elapsed();
    write_labelmap_pgm(&pred.labels, args.output)?;
    let mut s = String::new();
    for (stage, dt) in &pred.stage_times {
        let _ = writeln!(s, "stage {stage:<9} {:>9.3}s", dt.as_secs_f64());
    }
    let _ = writeln!(
        s,
        "forward {}x{} in {:.3}s, wrote {}",
        model.config.input_h,
        model.config.input_w,
        total.as_secs_f64(),
        args.output.display()
    );
    out.write_all(s.as_bytes()).map_err(io_err)
}

fn selftest(cases: usize, seed: u64, policy: CountingPolicy, out: &mut dyn Write) -> Result<(), CliError> {
    let results = run_selftest(&SelftestOptions { seed, cases, policy, ..SelftestOptions::default() });
    let mut s = String::new();
    for r in &results {
        let _ = writeln!(s, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    let _ = writeln!(s, "{} checks, {failed} failed", results.len());
    out.write_all(s.as_bytes()).map_err(io_err)?;
    if failed > 0 {
        return Err(CliError { code: EXIT_RUNTIME, message: format!("{failed} selftest checks failed") });
    }
    Ok(())
}

/// Runs one parsed command, writing its normal output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let policy = cli.policy.into();
    match &cli.command {
        Command::Describe { config } => describe(config, policy, out),
        Command::Cost { config, csv } => cost(config, *csv, policy, out),
        Command::Ablate { config, axis, variants, csv } => ablate(config, *axis, variants, *csv, policy, out),
        Command::Run { config, weights, seed, input, output, save_weights } => run(
            RunArgs {
                config,
                weights: weights.as_deref(),
                seed: *seed,
                input: input.as_deref(),
                output,
                save: save_weights.as_deref(),
            },
            out,
        ),
        Command::Selftest { cases, seed } => selftest(*cases, *seed, policy, out),
    }
}

/// Parses `args`, runs the command, reports errors on stderr, and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
