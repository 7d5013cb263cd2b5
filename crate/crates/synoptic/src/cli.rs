//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value as Json;

use synoptic_core::gan::{self, ConditionPmf, GanConfig, GanModel, LossVariant};
use synoptic_core::metrics::quality_report;
use synoptic_core::neural::AdamConfig;
use synoptic_core::query::{
    compare_results, execute_approx, execute_exact, parse_query, ApproxResult, QueryError, QueryResult,
};
use synoptic_core::synopsis::{
    build_histogram, build_sketch, build_wavelets, reservoir_sample, GeneratedSynopsis, Synopsis,
};
use synoptic_core::transform::{encode_rows, fit_encoder, EncoderOptions};
use synoptic_core::{ColumnKind, Table, TableSchema};

use crate::io::{
    grid_to_table, infer_schema, read_csv, read_grid, write_table, IoError, SchemaConfig, DEFAULT_MIXED_THRESHOLD,
};
use crate::persist::{self, Kind};
use crate::report;

#[derive(Debug, Parser, Serialize)]
#[command(name = "synoptic", version, about = "Data synopses and approximate aggregate queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Train a generative model on a CSV table
    Fit(FitArgs),
    /// Sample rows from a trained model
    Generate(GenerateArgs),
    /// Build a classic synopsis of a CSV table
    Build(BuildArgs),
    /// Score generated rows against real rows
    Eval(EvalArgs),
    /// Answer a query exactly or from a synopsis
    Query(QueryArgs),
    /// Relative error of a synopsis answer against the exact answer
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossArg {
    Vanilla,
    #[value(name = "wgan_gp")]
    WganGp,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PmfArg {
    Log,
    Raw,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sample,
    Histogram,
    Wavelet,
    Sketch,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct TableInput {
    /// CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Schema config JSON; inferred from the data when absent
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: TableInput,
    /// Model file
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV [default: <out>.log.csv]
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "wgan_gp")]
    pub loss: LossArg,
    /// Train without condition vectors
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long, value_enum, default_value = "log")]
    pub condition_pmf: PmfArg,
    /// Add the KL terms on discrete marginals
    #[arg(long)]
    pub kl: bool,
    /// Add the information loss on discriminator features
    #[arg(long)]
    pub info_loss: bool,
    #[arg(long, default_value_t = 0.0)]
    pub info_delta_mean: f64,
    #[arg(long, default_value_t = 0.0)]
    pub info_delta_sd: f64,
    /// Add the auxiliary classifier term (needs a target column)
    #[arg(long)]
    pub classifier: bool,
    /// Gradient penalty weight
    #[arg(long, default_value_t = 10.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 64)]
    pub noise_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    /// Generator steps per epoch [default: rows / batch size]
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub critic_steps: usize,
    #[arg(long)]
    pub label_smoothing: bool,
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub generator_hidden: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "256,256")]
    pub discriminator_hidden: Vec<usize>,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta1: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta2: f64,
    /// Width of the normalised-value window in mode standard deviations
    #[arg(long, default_value_t = 4.0)]
    pub delta: f64,
    /// One-hot noise amplitude
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10)]
    pub max_modes: usize,
    #[arg(long, env = "SYNOPTIC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to generate [default: training row count]
    #[arg(long)]
    pub rows: Option<usize>,
    /// Fix one discrete column: column=category
    #[arg(long)]
    pub condition: Option<String>,
    /// CSV output, `-` for stdout
    #[arg(long, default_value = "-")]
    pub out: String,
    /// Also write the rows as a generated synopsis
    #[arg(long)]
    pub synopsis_out: Option<PathBuf>,
    /// Population the synopsis stands for [default: training row count]
    #[arg(long)]
    pub population: Option<usize>,
    #[arg(long, env = "SYNOPTIC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[command(flatten)]
    pub input: TableInput,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Reservoir size
    #[arg(long, default_value_t = 1000)]
    pub sample_size: usize,
    /// Histogram buckets
    #[arg(long, default_value_t = 64)]
    pub buckets: usize,
    /// Wavelet coefficients kept per column
    #[arg(long, default_value_t = 64)]
    pub keep: usize,
    /// Sketch width
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    /// Sketch depth
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Column to sketch
    #[arg(long, required_if_eq("method", "sketch"))]
    pub column: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "SYNOPTIC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub gen: PathBuf,
    /// Schema config for both files; inferred from the real file when absent
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Column pairs scored before subsampling kicks in
    #[arg(long, default_value_t = 100)]
    pub pair_budget: usize,
    #[arg(long, env = "SYNOPTIC_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    pub sql: String,
    /// Run on this CSV table
    #[arg(long, conflicts_with = "synopsis", required_unless_present = "synopsis")]
    pub exact: Option<PathBuf>,
    /// Run on this synopsis file
    #[arg(long)]
    pub synopsis: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub out: String,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    pub sql: String,
    /// CSV table giving the exact answer
    #[arg(long)]
    pub exact: PathBuf,
    #[arg(long)]
    pub synopsis: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        data(e)
    }
}

impl From<QueryError> for CliError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Syntax { .. } | QueryError::UnsupportedAggregate { .. } => CliError::Usage(e.to_string()),
            _ => data(e),
        }
    }
}

/// Parses `argv` (program name first) and runs it. Returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let run_config = serde_json::to_value(&cli.command).map_err(data)?;
    match &cli.command {
        Command::Fit(a) => fit(a, &run_config),
        Command::Generate(a) => generate(a, &run_config),
        Command::Build(a) => build(a, &run_config),
        Command::Eval(a) => eval(a, &run_config),
        Command::Query(a) => query(a, &run_config),
        Command::Compare(a) => compare(a, &run_config),
    }
}

fn load_config(path: Option<&Path>) -> Result<Option<SchemaConfig>, CliError> {
    Ok(path.map(SchemaConfig::load).transpose()?)
}

fn load_table(path: &Path, schema: Option<&Path>) -> Result<Table, CliError> {
    let cfg = load_config(schema)?;
    Ok(read_csv(path, cfg.as_ref())?)
}

/// Writes to a file, or to stdout for `-`.
fn emit(out: &str, text: &str) -> Result<(), CliError> {
    if out == "-" {
        let mut stdout = std::io::stdout().lock();
        stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(data)
    } else {
        std::fs::write(out, text).map_err(|e| data(format!("{out}: {e}")))
    }
}

fn fit(a: &FitArgs, run_config: &Json) -> Result<(), CliError> {
    let table = load_table(&a.input.data, a.input.schema.as_deref())?;
    let options = EncoderOptions { delta: a.delta, gamma: a.gamma, max_modes: a.max_modes, seed: a.seed };
    let encoder = fit_encoder(&table, &options).map_err(data)?;
    let encoded = encode_rows(&encoder, &table, a.seed).map_err(data)?;
    let cfg = GanConfig {
        loss: match a.loss {
            LossArg::Vanilla => LossVariant::Vanilla,
            LossArg::WganGp => LossVariant::WganGp,
        },
        conditional: !a.unconditional,
        condition_pmf: match a.condition_pmf {
            PmfArg::Log => ConditionPmf::Log,
            PmfArg::Raw => ConditionPmf::Raw,
        },
        kl_penalty: a.kl,
        info_loss: a.info_loss,
        info_delta_mean: a.info_delta_mean,
        info_delta_sd: a.info_delta_sd,
        classifier_loss: a.classifier,
        lambda: a.lambda,
        noise_dim: a.noise_dim,
        batch_size: a.batch_size,
        epochs: a.epochs,
        steps_per_epoch: a.steps_per_epoch,
        critic_steps: a.critic_steps,
        label_smoothing: a.label_smoothing,
        generator_hidden: a.generator_hidden.clone(),
        discriminator_hidden: a.discriminator_hidden.clone(),
        adam: AdamConfig { lr: a.lr, beta1: a.beta1, beta2: a.beta2, ..AdamConfig::default() },
        seed: a.seed,
    };
    let model = gan::train(&cfg, &encoder, &encoded).map_err(data)?;
    persist::save(&a.out, Kind::GanModel, run_config, &model)?;
    let log_path = a.log.clone().unwrap_or_else(|| {
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".log.csv");
        a.out.with_file_name(name)
    });
    std::fs::write(&log_path, report::training_log_csv(&model.log)?).map_err(|e| data(format!("{}: {e}", log_path.display())))?;
    persist::save_sidecar(&log_path, run_config, &Json::Null)?;
    Ok(())
}

fn training_rows(model: &GanModel) -> usize {
    model.condition_counts.first().map(|c| c.iter().sum()).unwrap_or(0)
}

fn generate(a: &GenerateArgs, run_config: &Json) -> Result<(), CliError> {
    let model: GanModel = persist::load(&a.model, Kind::GanModel)?.payload;
    let condition = match &a.condition {
        Some(c) => Some(c.split_once('=').ok_or_else(|| CliError::Usage(format!("--condition expects column=category, got {c}")))?),
        None => None,
    };
    let trained = training_rows(&model);
    let rows = match a.rows.or((trained > 0).then_some(trained)) {
        Some(n) => n,
        None => return Err(CliError::Usage("--rows is required for this model".into())),
    };
    let table = gan::generate(&model, rows, condition, a.seed).map_err(data)?;
    let mut csv = Vec::new();
    write_table(&table, &mut csv, "")?;
    emit(&a.out, &String::from_utf8(csv).map_err(data)?)?;
    if a.out != "-" {
        persist::save_sidecar(Path::new(&a.out), run_config, &SchemaConfig::from_schema(table.schema(), ""))?;
    }
    if let Some(path) = &a.synopsis_out {
        let population = a.population.unwrap_or(if trained > 0 { trained } else { rows });
        persist::save(path, Kind::Synopsis, run_config, &Synopsis::Generated(GeneratedSynopsis { table, population }))?;
    }
    Ok(())
}

fn build(a: &BuildArgs, run_config: &Json) -> Result<(), CliError> {
    let table = load_table(&a.input.data, a.input.schema.as_deref())?;
    let syn = match a.method {
        Method::Sample => Synopsis::Sample(reservoir_sample(&table, a.sample_size, a.seed).map_err(data)?),
        Method::Histogram => Synopsis::Histogram(build_histogram(&table, a.buckets).map_err(data)?),
        Method::Wavelet => Synopsis::Wavelet(build_wavelets(&table, a.keep).map_err(data)?),
        Method::Sketch => {
            let col = a.column.as_deref().ok_or_else(|| CliError::Usage("--column is required for sketches".into()))?;
            Synopsis::Sketch(build_sketch(&table, col, a.width, a.depth, a.seed).map_err(data)?)
        }
    };
    persist::save(&a.out, Kind::Synopsis, run_config, &syn)?;
    Ok(())
}

/// Schema inferred from the real grid, with generated categories the real
/// data lacks appended so both tables share it.
fn union_schema(real: &crate::io::Grid, gen: &crate::io::Grid) -> Result<TableSchema, CliError> {
    let base = infer_schema(real, "", DEFAULT_MIXED_THRESHOLD)?;
    let mut columns = base.columns().to_vec();
    for col in &mut columns {
        let Some(p) = gen.header.iter().position(|h| *h == col.name) else { continue };
        let nulls = gen.rows.iter().any(|r| r[p].is_empty());
        col.nullable |= nulls;
        if let ColumnKind::Categorical { categories } = &mut col.kind {
            for r in &gen.rows {
                let t = &r[p];
                if !t.is_empty() && !categories.contains(t) {
                    categories.push(t.clone());
                }
            }
        }
    }
    TableSchema::new(columns).map_err(data)
}

fn eval(a: &EvalArgs, run_config: &Json) -> Result<(), CliError> {
    let (real, gen) = match load_config(a.schema.as_deref())? {
        Some(cfg) => (read_csv(&a.real, Some(&cfg))?, read_csv(&a.gen, Some(&cfg))?),
        None => {
            let open = |p: &Path| -> Result<crate::io::Grid, CliError> {
                let f = std::fs::File::open(p).map_err(|e| data(format!("{}: {e}", p.display())))?;
                Ok(read_grid(std::io::BufReader::new(f))?)
            };
            let (rg, gg) = (open(&a.real)?, open(&a.gen)?);
            let schema = union_schema(&rg, &gg)?;
            (grid_to_table(&rg, &schema, "")?, grid_to_table(&gg, &schema, "")?)
        }
    };
    let rep = quality_report(&real, &gen, a.pair_budget, a.seed).map_err(data)?;
    let text = match a.format {
        Format::Json => persist::to_json(Kind::QualityReport, run_config, &rep)?,
        Format::Csv => report::quality_report_csv(&rep)?,
    };
    emit(&a.out, &text)?;
    if matches!(a.format, Format::Csv) && a.out != "-" {
        persist::save_sidecar(Path::new(&a.out), run_config, &Json::Null)?;
    }
    Ok(())
}

/// Query answer with its reliability flags; flags are empty for exact runs.
#[derive(Debug, Serialize)]
struct QueryOutput<'a> {
    provenance: &'a str,
    result: &'a QueryResult,
    flags: &'a [Vec<synoptic_core::query::Reliability>],
}

fn load_synopsis(path: &Path) -> Result<Synopsis, CliError> {
    Ok(persist::load(path, Kind::Synopsis)?.payload)
}

fn query(a: &QueryArgs, run_config: &Json) -> Result<(), CliError> {
    let ast = parse_query(&a.sql)?;
    let (result, approx): (QueryResult, Option<ApproxResult>) = match (&a.exact, &a.synopsis) {
        (Some(path), None) => (execute_exact(&load_table(path, a.schema.as_deref())?, &ast)?, None),
        (None, Some(path)) => {
            let r = execute_approx(&load_synopsis(path)?, &ast)?;
            (r.result.clone(), Some(r))
        }
        _ => return Err(CliError::Usage("give exactly one of --exact or --synopsis".into())),
    };
    let text = match a.format {
        Format::Csv => report::query_result_csv(&result)?,
        Format::Json => {
            let out = QueryOutput {
                provenance: approx.as_ref().map_or("exact", |r| r.provenance.as_str()),
                result: &result,
                flags: approx.as_ref().map_or(&[][..], |r| &r.flags),
            };
            persist::to_json(Kind::QueryResult, run_config, &out)?
        }
    };
    emit(&a.out, &text)?;
    if matches!(a.format, Format::Csv) && a.out != "-" {
        persist::save_sidecar(Path::new(&a.out), run_config, &Json::Null)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Comparison<'a> {
    exact: &'a QueryResult,
    approx: &'a ApproxResult,
    errors: synoptic_core::query::ErrorReport,
}

fn compare(a: &CompareArgs, run_config: &Json) -> Result<(), CliError> {
    let ast = parse_query(&a.sql)?;
    let exact = execute_exact(&load_table(&a.exact, a.schema.as_deref())?, &ast)?;
    let approx = execute_approx(&load_synopsis(&a.synopsis)?, &ast)?;
    let errors = compare_results(&exact, &approx.result);
    emit(&a.out, &persist::to_json(Kind::ErrorReport, run_config, &Comparison { exact: &exact, approx: &approx, errors })?)
}
