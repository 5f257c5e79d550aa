//! Operations behind both the HTTP routes and the CLI subcommands.
//!
//! Every function takes already-read input and returns the exact bytes or
//! value a front end emits, so the two surfaces cannot drift apart.

use std::path::{Component, Path, PathBuf};

use cnocs_core::annotate::{self, Annotation, Candidate, FilterConfig, TrimMode};
use cnocs_core::flow::{
    dos_sample, gaussian_noise, DosConfig, FieldSpec, FlowError, Latent, LatentGeometry, ToyField,
    DEFAULT_INJECTION_STEPS, DEFAULT_LATENT_CHANNELS, DEFAULT_LATENT_FACTOR, DEFAULT_STEPS,
};
use cnocs_core::metrics::{
    eval_metrics, reward, EvalCase, EvalMetrics, FixtureOracle, GroundTruthOracle, ImageRef, PoseReward, RewardWeights,
};
use cnocs_core::render::export::{latent_preview_png, map_preview_png, Container};
use cnocs_core::{render_cnocs, Camera, EncodingSpec, Scene, Variant};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{from_value, OpError};

/// Parses and validates a scene document.
pub fn parse_scene(value: Value, prefix: &str) -> Result<Scene, OpError> {
    let scene: Scene = from_value(value, prefix)?;
    scene.validate().map_err(|e| {
        let mut err = OpError::from(e);
        if !prefix.is_empty() {
            if let OpError::Invalid { path, .. } | OpError::Degenerate { path, .. } = &mut err {
                *path = format!("{prefix}.{path}");
            }
        }
        err
    })?;
    Ok(scene)
}

fn default_degree() -> u8 {
    2
}

/// Encoding options accepted next to a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderOptions {
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default = "default_degree")]
    pub degree: u8,
    #[serde(default)]
    pub include_radius: bool,
    #[serde(default)]
    pub preview: bool,
}

fn default_variant() -> Variant {
    Variant::Identity
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            variant: Variant::Identity,
            degree: 2,
            include_radius: false,
            preview: false,
        }
    }
}

impl RenderOptions {
    pub fn spec(&self) -> Result<EncodingSpec, OpError> {
        let spec = match self.variant {
            Variant::Constant => EncodingSpec::constant(),
            Variant::Identity => EncodingSpec::identity(),
            Variant::Spherical => EncodingSpec::spherical(self.degree, self.include_radius),
        };
        spec.validate().map_err(|m| OpError::invalid("degree", m))?;
        Ok(spec)
    }
}

const OPTION_KEYS: [&str; 4] = ["variant", "degree", "include_radius", "preview"];

/// Splits a render body (scene fields plus encoding options) into its parts.
pub fn parse_render_request(value: Value) -> Result<(Scene, RenderOptions), OpError> {
    let Value::Object(mut fields) = value else {
        return Err(OpError::invalid(".", "expected a JSON object"));
    };
    let mut opts = serde_json::Map::new();
    for key in OPTION_KEYS {
        if let Some(v) = fields.remove(key) {
            opts.insert(key.to_string(), v);
        }
    }
    let options: RenderOptions = from_value(Value::Object(opts), "")?;
    let scene = parse_scene(Value::Object(fields), "")?;
    Ok((scene, options))
}

/// Rendered output and the metadata a front end reports with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub bytes: Vec<u8>,
    pub content_type: &'static str,
    pub channels: usize,
    pub variant: &'static str,
}

pub const OCTET_STREAM: &str = "application/octet-stream";
pub const PNG: &str = "image/png";

pub fn render(scene: &Scene, options: &RenderOptions) -> Result<Artifact, OpError> {
    let spec = options.spec()?;
    let map = render_cnocs(scene, &spec);
    let (bytes, content_type) = if options.preview {
        (map_preview_png(&map).map_err(OpError::internal)?, PNG)
    } else {
        let container = Container::from_map(&map).map_err(|e| OpError::invalid("camera", e))?;
        (container.to_bytes(), OCTET_STREAM)
    };
    Ok(Artifact {
        bytes,
        content_type,
        channels: spec.channels(),
        variant: spec.variant.as_str(),
    })
}

fn default_gamma() -> f64 {
    RewardWeights::default().gamma
}

fn default_lambda() -> f64 {
    RewardWeights::default().lambda
}

fn default_kappa() -> f64 {
    RewardWeights::default().kappa
}

/// Which oracles score a reward request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleRef {
    GroundTruth,
    Fixture { name: String, case_id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardRequest {
    pub scene: Value,
    #[serde(default = "ground_truth")]
    pub oracle: OracleRef,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn ground_truth() -> OracleRef {
    OracleRef::GroundTruth
}

/// Oracle choice after any fixture file has been located.
pub enum OracleSource {
    GroundTruth,
    Fixture { oracle: FixtureOracle, case_id: String },
}

pub fn check_weights(gamma: f64, lambda: f64, kappa: f64) -> Result<RewardWeights, OpError> {
    for (name, v) in [("gamma", gamma), ("lambda", lambda)] {
        if !v.is_finite() {
            return Err(OpError::invalid(name, "must be finite"));
        }
    }
    if kappa.is_nan() || kappa < 0.0 {
        return Err(OpError::invalid("kappa", "must be non-negative"));
    }
    Ok(RewardWeights { gamma, lambda, kappa })
}

pub fn load_fixture(path: &Path) -> Result<FixtureOracle, OpError> {
    if !path.is_file() {
        return Err(OpError::NotFound(format!("fixture `{}`", path.display())));
    }
    FixtureOracle::load(path).map_err(|e| OpError::invalid("oracle", e))
}

/// Fixture names map to `<dir>/<name>.json`; only plain names are accepted.
pub fn fixture_path(dir: &Path, name: &str) -> Result<PathBuf, OpError> {
    let plain = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !plain {
        return Err(OpError::invalid("oracle.name", "fixture names may only use letters, digits, `-` and `_`"));
    }
    Ok(dir.join(format!("{name}.json")))
}

/// Serialized [`PoseReward`], the response body of both front ends.
pub fn reward_json(scene: &Scene, oracle: &OracleSource, weights: &RewardWeights) -> Result<Vec<u8>, OpError> {
    let (w, h) = (scene.camera.width, scene.camera.height);
    let result: PoseReward = match oracle {
        OracleSource::GroundTruth => {
            let o = GroundTruthOracle::new(scene, weights.kappa, cnocs_core::metrics::azimuth::DEFAULT_BINS);
            reward(&ImageRef::placeholder("ground_truth", w, h), scene, &o, &o, weights)
        }
        OracleSource::Fixture { oracle, case_id } => {
            if !oracle.has_case(case_id) {
                return Err(OpError::NotFound(format!("fixture case `{case_id}`")));
            }
            reward(&ImageRef::placeholder(case_id, w, h), scene, oracle, oracle, weights)
        }
    }
    .map_err(|e| match e {
        cnocs_core::metrics::RewardError::EmptyScene => OpError::invalid("scene.objects", e),
        other => OpError::invalid("oracle", other),
    })?;
    to_json_bytes(&result)
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, OpError> {
    let mut out = serde_json::to_vec_pretty(value).map_err(OpError::internal)?;
    out.push(b'\n');
    Ok(out)
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}


fn default_channels() -> usize {
    DEFAULT_LATENT_CHANNELS
}

fn default_factor() -> usize {
    DEFAULT_LATENT_FACTOR
}

/// A toy sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Inline scene document, or a path to one.
    pub scene: Value,
    #[serde(default)]
    pub encoding: EncodingSpec,
    #[serde(default = "default_steps", alias = "T")]
    pub steps: usize,
    /// Defaults to 15, capped at `steps`.
    #[serde(default)]
    pub injection_steps: Option<usize>,
    pub field: FieldSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_channels")]
    pub latent_channels: usize,
    #[serde(default = "default_factor")]
    pub latent_factor: usize,
}

impl Manifest {
    pub fn injection_steps(&self) -> usize {
        self.injection_steps.unwrap_or(DEFAULT_INJECTION_STEPS.min(self.steps))
    }
}

/// How file references inside a manifest are resolved.
#[derive(Debug, Clone)]
pub struct Resolver {
    pub base: PathBuf,
    /// Refuse absolute paths and `..`; used for requests from the network.
    pub confined: bool,
}

impl Resolver {
    pub fn resolve(&self, reference: &str, path: &str) -> Result<PathBuf, OpError> {
        let rel = Path::new(reference);
        if self.confined && rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(OpError::invalid(path, "file references must be relative and stay inside the data directory"));
        }
        Ok(self.base.join(rel))
    }

    fn read(&self, reference: &str, path: &str) -> Result<Vec<u8>, OpError> {
        let full = self.resolve(reference, path)?;
        std::fs::read(&full).map_err(|e| OpError::invalid(path, format!("cannot read `{reference}`: {e}")))
    }
}

/// A validated manifest with everything loaded, ready to run.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub scene: Scene,
    pub manifest: Manifest,
    pub field: ToyField,
    pub shape: (usize, usize, usize),
}

pub fn prepare_sample(value: Value, resolver: &Resolver) -> Result<PreparedSample, OpError> {
    let manifest: Manifest = from_value(value, "")?;
    let scene = match &manifest.scene {
        Value::String(reference) => {
            let bytes = resolver.read(reference, "scene")?;
            let doc = serde_json::from_slice(&bytes).map_err(|e| OpError::invalid("scene", e))?;
            parse_scene(doc, "scene")?
        }
        doc => parse_scene(doc.clone(), "scene")?,
    };
    manifest.encoding.validate().map_err(|m| OpError::invalid("encoding.degree", m))?;
    if manifest.steps == 0 {
        return Err(OpError::invalid("steps", "must be at least 1"));
    }
    if manifest.injection_steps() > manifest.steps {
        return Err(OpError::invalid("injection_steps", "must not exceed steps"));
    }
    if manifest.latent_channels == 0 {
        return Err(OpError::invalid("latent_channels", "must be at least 1"));
    }
    if manifest.latent_factor == 0 {
        return Err(OpError::invalid("latent_factor", "must be at least 1"));
    }
    let geometry = LatentGeometry {
        channels: manifest.latent_channels,
        factor: manifest.latent_factor,
    };
    let shape = geometry.shape(scene.camera.width, scene.camera.height);
    let field = ToyField::build(&manifest.field, |reference| {
        let path = format!("field.targets.{reference}");
        let bytes = resolver.read(reference, &path).map_err(|e| FlowError::Field(e.to_string()))?;
        let c = Container::from_bytes(&bytes).map_err(|e| FlowError::Field(format!("{path}: {e}")))?;
        let got = (c.channels as usize, c.height as usize, c.width as usize);
        if got != shape {
            return Err(FlowError::Field(format!("{path}: target is {got:?}, latent is {shape:?}")));
        }
        Latent::from_shape_vec(shape, c.to_chw()).map_err(|e| FlowError::Field(e.to_string()))
    })
    .map_err(|e| OpError::invalid("field", e))?;
    if let ToyField::LinearToTarget(f) = &field {
        let mut prompts = vec![scene.prompt.clone()];
        prompts.extend((0..scene.objects.len()).map(|i| scene.object_prompt(i).to_string()));
        if let Some(missing) = prompts.iter().find(|p| f.target(p).is_none()) {
            return Err(OpError::invalid("field.targets", format!("no target for condition `{missing}`")));
        }
    }
    Ok(PreparedSample {
        scene,
        manifest,
        field,
        shape,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub shape: (usize, usize, usize),
    pub latent: Vec<u8>,
    pub preview: Vec<u8>,
}

impl PreparedSample {
    pub fn noise(&self) -> Latent {
        gaussian_noise(self.shape, self.manifest.seed)
    }

    pub fn run(&self) -> Result<SampleOutput, OpError> {
        let m = &self.manifest;
        let geometry = LatentGeometry {
            channels: m.latent_channels,
            factor: m.latent_factor,
        };
        let config = DosConfig::from_scene(&self.scene, &m.encoding, geometry, m.steps, m.injection_steps());
        let x = dos_sample(&self.noise(), &config, &self.field).map_err(OpError::internal)?;
        latent_artifacts(&x)
    }
}

/// Container and preview for a latent.
pub fn latent_artifacts(x: &Latent) -> Result<SampleOutput, OpError> {
    let (c, h, w) = x.dim();
    let chw: Vec<f64> = x.iter().copied().collect();
    let latent = Container::from_latent(c, h, w, &chw).map_err(OpError::internal)?.to_bytes();
    let preview = latent_preview_png(c, h, w, &chw).map_err(OpError::internal)?;
    Ok(SampleOutput {
        shape: (c, h, w),
        latent,
        preview,
    })
}

/// Annotation results in their on-disk forms.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotateOutput {
    pub scene: Vec<u8>,
    pub rejections: Vec<u8>,
    pub annotation: Annotation,
}

pub fn annotate_candidates(
    text: &str,
    filter: &FilterConfig,
    trim: TrimMode,
    camera: Camera,
    prompt: &str,
) -> Result<AnnotateOutput, OpError> {
    let cands: Vec<Candidate> =
        annotate::parse_candidates(text).map_err(|(line, e)| OpError::invalid(format!("line {line}"), e))?;
    let annotation = annotate::annotate(&cands, filter, trim).map_err(|e| match &e {
        annotate::AnnotateError::Candidate { id, .. } => OpError::invalid(format!("line {}", id + 1), e),
        _ => OpError::invalid(".", e),
    })?;
    let scene = annotation.to_scene(camera, prompt);
    let mut rejections = Vec::new();
    for r in &annotation.rejections {
        rejections.extend(serde_json::to_vec(r).map_err(OpError::internal)?);
        rejections.push(b'\n');
    }
    Ok(AnnotateOutput {
        scene: format!("{}\n", scene.to_json()).into_bytes(),
        rejections,
        annotation,
    })
}

/// Evaluation metrics over a JSON-lines file of cases.
pub fn eval_cases(text: &str) -> Result<EvalMetrics, OpError> {
    let cases = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let value: Value = serde_json::from_str(l).map_err(|e| OpError::invalid(format!("line {}", i + 1), e))?;
            let case: EvalCase = from_value(value, &format!("line {}", i + 1))?;
            case.scene.validate().map_err(|e| OpError::invalid(format!("line {}.scene.{}", i + 1, e.path()), e))?;
            Ok(case)
        })
        .collect::<Result<Vec<_>, OpError>>()?;
    eval_metrics(&cases).map_err(|e| OpError::invalid("cases", e))
}

pub fn format_metrics(m: &EvalMetrics) -> String {
    format!(
        "n         {}\nacc_ls    {:.6}\nmiou      {:.6}\nabs_err   {:.6}\nacc_22_5  {:.6}\n",
        m.n, m.acc_ls, m.miou, m.abs_err, m.acc_22_5
    )
}
