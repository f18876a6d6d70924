//! Subcommand definitions and their implementations.

use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gleams_core::blackbox::Model;
use gleams_core::partition::{DEFAULT_LOG2_POINTS, DEFAULT_MAX_DEPTH, DEFAULT_RHO};
use gleams_core::{
    build_surrogate, evaluate_surrogate, explain_local, global_importance, signed_importance,
    whatif, BlackBox, BuildConfig, EvalConfig, GlobalImportance, HyperRectangle, IntegrationMode,
    SurrogateTree,
};
use log::info;
use serde::Serialize;

use crate::dataset::{infer_domain, BoundsFile, DatasetTable};
use crate::error::CliError;
use crate::input::{load_points, parse_feature, parse_features, parse_point};
use crate::model::{ModelSpec, SynthSpec};
use crate::service::{self, SessionState};

#[derive(Debug, Parser)]
#[command(
    name = "gleams",
    version,
    about = "Piecewise-linear global surrogates and their explanations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Query a model on Sobol points and write a surrogate file.
    Build(BuildArgs),
    /// Local attribution at one point.
    Explain(PointArgs),
    /// Volume-weighted global importance.
    Importance(ImportanceArgs),
    /// The surrogate along one feature through a point.
    Whatif(WhatifArgs),
    /// Score a surrogate's attributions against the model.
    Eval(EvalArgs),
    /// Serve a surrogate over HTTP.
    Serve(ServeArgs),
    /// Synthetic piecewise-linear models.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// cmd:<command>, http:<url> or synth:<spec>.
    #[arg(long)]
    pub model: String,
    /// JSON file {"lower": [...], "upper": [...], "names": [...]}.
    #[arg(long, conflicts_with = "data")]
    pub bounds: Option<PathBuf>,
    /// CSV dataset whose column ranges define the domain.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fraction of each column's range added on both sides.
    #[arg(long, default_value_t = 0.0, requires = "data")]
    pub padding: f64,
    /// Dataset column to ignore when inferring the domain.
    #[arg(long, requires = "data")]
    pub target: Option<String>,
    /// Base-2 logarithm of the number of Sobol points.
    #[arg(long, default_value_t = DEFAULT_LOG2_POINTS, value_parser = clap::value_parser!(u32).range(1..=30))]
    pub log2_points: u32,
    /// Explicit number of Sobol points, overriding --log2-points.
    #[arg(long, conflicts_with = "log2_points", value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub points: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    pub rho: f64,
    /// Minimum points per leaf (default max(min(20, d + 1), d + 1)).
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    pub max_depth: usize,
    /// Points per model call.
    #[arg(long, default_value_t = gleams_core::blackbox::DEFAULT_BATCH_SIZE, value_parser = clap::builder::RangedU64ValueParser::<usize>::new().range(1..))]
    pub batch_size: usize,
    /// Omit the measurement points from the surrogate file.
    #[arg(long)]
    pub no_measurements: bool,
    /// Build on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PointArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    /// Comma-separated coordinates or @file.json.
    #[arg(long, allow_hyphen_values = true)]
    pub point: String,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    /// Also report the signed (cancelling) variant.
    #[arg(long)]
    pub signed: bool,
}

#[derive(Debug, Args)]
pub struct WhatifArgs {
    #[command(flatten)]
    pub at: PointArgs,
    /// Feature index or name.
    #[arg(long)]
    pub feature: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Local,
    Global,
    Both,
}

impl From<Mode> for IntegrationMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Local => IntegrationMode::Local,
            Mode::Global => IntegrationMode::Global,
            Mode::Both => IntegrationMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    #[arg(long)]
    pub model: String,
    /// CSV (header row) or JSON ([[...], ...] or {"points": [...]}).
    #[arg(long)]
    pub test_points: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Both)]
    pub mode: Mode,
    #[arg(long, default_value_t = gleams_core::eval::DEFAULT_GRID_SIZE)]
    pub grid_size: usize,
    /// Known relevant features (indices or names) for recall.
    #[arg(long)]
    pub true_features: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub surrogate: PathBuf,
    /// Enables POST /eval.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 8737)]
    pub port: u16,
    /// Static files served under /ui.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Write a synthetic ground truth as JSON.
    Emit {
        /// linear:<b0>,<b1>,... or pwl:d=<d>,cells=<k>,seed=<s>[,continuous]
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer prediction requests for a synthetic model.
    Serve {
        /// linear:..., pwl:... or file:<path>
        #[arg(long)]
        spec: String,
        #[arg(long, value_enum, default_value_t = Transport::Stdio)]
        transport: Transport,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Stdio,
    Http,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Build(args) => build(args),
        Command::Explain(args) => {
            let tree = load_tree(&args.surrogate)?;
            let p = parse_point(&args.point, tree.dim())?;
            print_json(&explain_local(&tree, &p)?)
        }
        Command::Importance(args) => importance(args),
        Command::Whatif(args) => {
            let tree = load_tree(&args.at.surrogate)?;
            let p = parse_point(&args.at.point, tree.dim())?;
            let j = parse_feature(&args.feature, tree.dim(), tree.names())?;
            print_json(&whatif(&tree, &p, j)?)
        }
        Command::Eval(args) => eval(args),
        Command::Serve(args) => serve(args),
        Command::Synth(SynthCommand::Emit { spec, out }) => synth_emit(&spec, out.as_deref()),
        Command::Synth(SynthCommand::Serve {
            spec,
            transport,
            host,
            port,
        }) => synth_serve(&spec, transport, &host, port),
    }
}

fn load_tree(path: &Path) -> Result<SurrogateTree, CliError> {
    SurrogateTree::load(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        CliError::Schema(m) => CliError::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    s
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    write_stdout(&to_pretty(value))
}

fn write_stdout(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Io(format!("cannot write output: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// The domain and feature names for a build: bounds file, dataset, or the
/// ground truth's own domain for synthetic grid models.
fn build_domain(
    args: &BuildArgs,
    spec: &ModelSpec,
) -> Result<(HyperRectangle, Option<Vec<String>>), CliError> {
    if let Some(path) = &args.bounds {
        let bounds = BoundsFile::load(path)?;
        return Ok((bounds.domain()?, bounds.names));
    }
    if let Some(path) = &args.data {
        let table = DatasetTable::from_csv_path(path, args.target.as_deref())?;
        let domain = infer_domain(&table, args.padding)?;
        return Ok((domain, Some(table.names)));
    }
    if let ModelSpec::Synthetic(s) = spec {
        if let Some(gt) = s.ground_truth()? {
            return Ok((gt.domain().clone(), None));
        }
    }
    Err(CliError::Usage(
        "build needs --bounds or --data for this model".into(),
    ))
}

fn build(args: BuildArgs) -> Result<(), CliError> {
    let spec = ModelSpec::parse(&args.model)?;
    let (domain, names) = build_domain(&args, &spec)?;
    let model = BlackBox::new(spec.open()?);
    let config = BuildConfig {
        n_points: args.points.unwrap_or(1usize << args.log2_points),
        rho: args.rho,
        n_min: args.n_min,
        max_depth: args.max_depth,
        batch_size: args.batch_size,
        parallel: !args.sequential,
        keep_measurements: !args.no_measurements,
    };
    let mut tree = build_surrogate(&model, &domain, &config)?;
    tree.set_names(names);
    tree.set_build_timestamp(Some(
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    ));
    let meta = tree.meta();
    info!(
        "built {} leaves, depth {}, weighted r2 {:.6}, mean r2 {:.6}, {} queries",
        meta.leaf_count, meta.depth, meta.weighted_r2, meta.mean_r2, meta.query_count
    );
    tree.save(&args.out)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", args.out.display())))?;
    print_json(tree.meta())
}

#[derive(Serialize)]
struct ImportanceOutput {
    #[serde(flatten)]
    importance: GlobalImportance,
    #[serde(skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signed_importance: Option<Vec<f64>>,
}

fn importance(args: ImportanceArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.surrogate)?;
    print_json(&ImportanceOutput {
        importance: global_importance(&tree),
        names: tree.names().map(<[String]>::to_vec),
        signed_importance: args.signed.then(|| signed_importance(&tree)),
    })
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.surrogate)?;
    let d = tree.dim();
    let points = load_points(&args.test_points, d, tree.names())?;
    let true_features = args
        .true_features
        .as_deref()
        .map(|t| parse_features(t, d, tree.names()))
        .transpose()?;
    let model = BlackBox::new(ModelSpec::parse(&args.model)?.open()?);
    let config = EvalConfig {
        integration_mode: args.mode.into(),
        grid_size: args.grid_size,
        true_features,
    };
    let report = evaluate_surrogate(&tree, &model, &points, &config)?;
    let json = to_pretty(&report);
    if let Some(out) = &args.out {
        write_file(out, &json)?;
    }
    match args.format {
        Format::Json => write_stdout(&json),
        Format::Table => write_stdout(&report.table()),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Other(format!("cannot start runtime: {e}")))
}

async fn bind(host: &str, port: u16) -> Result<tokio::net::TcpListener, CliError> {
    let listener = tokio::net::TcpListener::bind((host, port))
        .await
        .map_err(|e| CliError::Io(format!("cannot bind {host}:{port}: {e}")))?;
    let addr: SocketAddr = listener
        .local_addr()
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_stdout(&format!(
        "{}\n",
        serde_json::json!({ "listening": addr.to_string() })
    ))?;
    info!("listening on http://{addr}");
    Ok(listener)
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
    info!("shutting down");
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let tree = load_tree(&args.surrogate)?;
    let model = args
        .model
        .as_deref()
        .map(|m| ModelSpec::parse(m)?.open().map(BlackBox::new))
        .transpose()?;
    let state = Arc::new(SessionState::new(tree, model));
    let app = service::app(state, args.ui_dir.as_deref());
    runtime()?.block_on(async {
        let listener = bind(&args.host, args.port).await?;
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(|e| CliError::Io(format!("server error: {e}")))
    })
}

fn synth_emit(spec: &str, out: Option<&Path>) -> Result<(), CliError> {
    let spec = SynthSpec::parse(spec)?;
    let json = match &spec {
        SynthSpec::Linear(beta) => to_pretty(&serde_json::json!({ "linear": beta })),
        _ => to_pretty(
            &spec
                .ground_truth()?
                .expect("grid models have a ground truth"),
        ),
    };
    match out {
        Some(path) => write_file(path, &json),
        None => write_stdout(&json),
    }
}

fn synth_serve(spec: &str, transport: Transport, host: &str, port: u16) -> Result<(), CliError> {
    let model: Arc<dyn Model> = Arc::from(SynthSpec::parse(spec)?.open()?);
    match transport {
        Transport::Stdio => {
            let stdin = std::io::stdin().lock();
            let mut stdout = std::io::stdout().lock();
            for line in stdin.lines() {
                let line = line.map_err(|e| CliError::Io(format!("cannot read stdin: {e}")))?;
                let reply = gleams_core::blackbox::protocol::respond(model.as_ref(), &line);
                writeln!(stdout, "{reply}")
                    .and_then(|_| stdout.flush())
                    .map_err(|e| CliError::Io(format!("cannot write stdout: {e}")))?;
            }
            Ok(())
        }
        Transport::Http => runtime()?.block_on(async {
            let listener = bind(host, port).await?;
            axum::serve(listener, service::predict_app(model))
                .with_graceful_shutdown(shutdown_signal())
                .await
                .map_err(|e| CliError::Io(format!("server error: {e}")))
        }),
    }
}
