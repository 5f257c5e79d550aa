use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cnocs_core::annotate::{FilterConfig, TrimMode};
use cnocs_core::{Camera, Variant};
use cnocs_server::error::{parse_json, OpError};
use cnocs_server::ops::{self, OracleSource, RenderOptions, Resolver};
use cnocs_server::{http, jobs, AppState};

#[derive(Parser)]
#[command(name = "cnocs", version, about = "Render, score and sample pose-conditioned scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Render a scene to a CNOC container or PNG preview.
    Render(RenderArgs),
    /// Score a scene against an oracle.
    Reward(RewardArgs),
    /// Run a toy sampling manifest.
    Sample(SampleArgs),
    /// Turn detection candidates into a scene.
    Annotate(AnnotateArgs),
    /// Compute evaluation metrics over a JSON-lines case file.
    EvalMetrics(EvalArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CNOCS_ADDR", default_value = "127.0.0.1:8787")]
    addr: String,
    #[arg(long, env = "CNOCS_DATA_DIR", default_value = "./cnocs-data")]
    data_dir: PathBuf,
    /// Concurrent sampling runs.
    #[arg(long, default_value_t = jobs::DEFAULT_WORKERS)]
    workers: usize,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_parser = parse_variant, default_value = "identity")]
    variant: Variant,
    #[arg(long, default_value_t = 2)]
    degree: u8,
    #[arg(long)]
    include_radius: bool,
    /// Write a PNG preview instead of the container.
    #[arg(long)]
    preview: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RewardArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Oracle fixture file; omit to score against the scene itself.
    #[arg(long, requires = "case_id")]
    fixture: Option<PathBuf>,
    #[arg(long)]
    case_id: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Relative paths inside it resolve against its directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    preview: Option<PathBuf>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines file of rejected candidates.
    #[arg(long)]
    rejections: Option<PathBuf>,
    #[arg(long, conflicts_with = "trim_distance")]
    trim_fraction: Option<f64>,
    #[arg(long)]
    trim_distance: Option<f64>,
    #[arg(long)]
    min_area: Option<f64>,
    #[arg(long)]
    max_area: Option<f64>,
    #[arg(long)]
    min_confidence: Option<f64>,
    /// Camera JSON for the output scene.
    #[arg(long)]
    camera: Option<PathBuf>,
    #[arg(long, default_value = "")]
    prompt: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    cases: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        format!("unknown variant `{s}` (expected constant, identity or spherical)")
    })
}

fn read(path: &Path) -> Result<Vec<u8>, OpError> {
    std::fs::read(path).map_err(|e| OpError::invalid(path.display().to_string(), format!("cannot read: {e}")))
}

fn read_text(path: &Path) -> Result<String, OpError> {
    String::from_utf8(read(path)?).map_err(|e| OpError::invalid(path.display().to_string(), e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), OpError> {
    std::fs::write(path, bytes).map_err(|e| OpError::internal(format!("cannot write {}: {e}", path.display())))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), OpError> {
    match out {
        Some(p) => write(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(OpError::internal)
        }
    }
}

fn render(a: RenderArgs) -> Result<(), OpError> {
    let scene = ops::parse_scene(parse_json(&read(&a.scene)?)?, "")?;
    let options = RenderOptions {
        variant: a.variant,
        degree: a.degree,
        include_radius: a.include_radius,
        preview: a.preview,
    };
    let artifact = ops::render(&scene, &options)?;
    write(&a.out, &artifact.bytes)
}

fn reward(a: RewardArgs) -> Result<(), OpError> {
    let scene = ops::parse_scene(parse_json(&read(&a.scene)?)?, "")?;
    let defaults = cnocs_core::metrics::RewardWeights::default();
    let weights = ops::check_weights(
        a.gamma.unwrap_or(defaults.gamma),
        a.lambda.unwrap_or(defaults.lambda),
        a.kappa.unwrap_or(defaults.kappa),
    )?;
    let source = match (a.fixture, a.case_id) {
        (Some(path), Some(case_id)) => OracleSource::Fixture {
            oracle: ops::load_fixture(&path)?,
            case_id,
        },
        _ => OracleSource::GroundTruth,
    };
    emit(a.out.as_deref(), &ops::reward_json(&scene, &source, &weights)?)
}

fn sample(a: SampleArgs) -> Result<(), OpError> {
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let resolver = Resolver { base, confined: false };
    let prepared = ops::prepare_sample(parse_json(&read(&a.manifest)?)?, &resolver)?;
    let output = prepared.run()?;
    write(&a.out, &output.latent)?;
    if let Some(p) = &a.preview {
        write(p, &output.preview)?;
    }
    Ok(())
}

fn annotate(a: AnnotateArgs) -> Result<(), OpError> {
    let text = read_text(&a.input)?;
    let mut filter = FilterConfig::default();
    filter.min_area = a.min_area.unwrap_or(filter.min_area);
    filter.max_area = a.max_area.unwrap_or(filter.max_area);
    filter.min_confidence = a.min_confidence.unwrap_or(filter.min_confidence);
    let trim = match (a.trim_fraction, a.trim_distance) {
        (_, Some(d)) => TrimMode::MaxDistance(d),
        (Some(f), None) => TrimMode::Fraction(f),
        (None, None) => TrimMode::default(),
    };
    let camera: Camera = match &a.camera {
        Some(p) => cnocs_server::error::from_value(parse_json(&read(p)?)?, "camera")?,
        None => Camera::default(),
    };
    let out = ops::annotate_candidates(&text, &filter, trim, camera, &a.prompt)?;
    write(&a.out, &out.scene)?;
    if let Some(p) = &a.rejections {
        write(p, &out.rejections)?;
    }
    eprintln!(
        "{} objects, {} rejected",
        out.annotation.objects.len(),
        out.annotation.rejections.len()
    );
    Ok(())
}

fn eval_metrics(a: EvalArgs) -> Result<(), OpError> {
    let metrics = ops::eval_cases(&read_text(&a.cases)?)?;
    let text = if a.json {
        ops::to_json_bytes(&metrics)?
    } else {
        ops::format_metrics(&metrics).into_bytes()
    };
    emit(None, &text)
}

fn serve(a: ServeArgs) -> Result<(), OpError> {
    let state = AppState::open(a.data_dir, a.workers)?;
    let rt = tokio::runtime::Runtime::new().map_err(OpError::internal)?;
    rt.block_on(http::serve(state, &a.addr)).map_err(OpError::internal)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(a) => serve(a),
        Command::Render(a) => render(a),
        Command::Reward(a) => reward(a),
        Command::Sample(a) => sample(a),
        Command::Annotate(a) => annotate(a),
        Command::EvalMetrics(a) => eval_metrics(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
