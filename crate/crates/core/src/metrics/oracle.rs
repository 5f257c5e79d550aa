//! Detection and orientation oracles used by the pose reward.
//!
//! Real detectors and orientation estimators are not part of this crate. The
//! traits below are the seam; [`GroundTruthOracle`] answers from the scene
//! itself and [`FixtureOracle`] replays recorded answers from JSON.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::azimuth::{target_distribution, AzimuthDistribution, DEFAULT_BINS, DEFAULT_KAPPA};
use crate::rect::Rect;
use crate::scene::{project_box_to_rect, Scene};

/// What the oracles look at. Pixels may be empty for oracles that key on `id`.
#[derive(Debug, Clone, Copy)]
pub struct ImageRef<'a> {
    pub id: &'a str,
    pub width: u32,
    pub height: u32,
    pub pixels: &'a [f64],
}

impl<'a> ImageRef<'a> {
    pub fn placeholder(id: &'a str, width: u32, height: u32) -> Self {
        Self {
            id,
            width,
            height,
            pixels: &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: Rect,
    #[serde(default = "one")]
    pub confidence: f64,
}

fn one() -> f64 {
    1.0
}

/// Crop handed to the orientation oracle.
#[derive(Debug, Clone, Copy)]
pub struct Crop<'a> {
    pub rect: Rect,
    pub label: &'a str,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("no fixture entry for case `{case}` label `{label}`")]
    Missing { case: String, label: String },
    #[error("fixture entry for case `{case}` label `{label}` is invalid: {reason}")]
    Invalid { case: String, label: String, reason: String },
    #[error("oracle failure: {0}")]
    Other(String),
}

pub trait DetectionOracle: Sync {
    fn detect(&self, image: &ImageRef<'_>, label: &str) -> Result<Vec<Detection>, OracleError>;
}

pub trait OrientationOracle: Sync {
    fn estimate(&self, image: &ImageRef<'_>, crop: &Crop<'_>) -> Result<AzimuthDistribution, OracleError>;

    fn bins(&self) -> usize {
        DEFAULT_BINS
    }
}

/// Answers with the scene's own projections and target distributions.
///
/// Detection returns the projected rectangle of every fully-visible box with
/// the requested label. Orientation returns the target distribution of the
/// same-label box whose projection best overlaps the crop.
#[derive(Debug, Clone)]
pub struct GroundTruthOracle {
    entries: Vec<TruthEntry>,
    bins: usize,
}

#[derive(Debug, Clone)]
struct TruthEntry {
    label: String,
    footprint: Rect,
    /// Fully visible with a non-empty footprint.
    detectable: bool,
    target: AzimuthDistribution,
}

impl GroundTruthOracle {
    pub fn new(scene: &Scene, kappa: f64, bins: usize) -> Self {
        let entries = scene
            .objects
            .iter()
            .map(|obj| {
                let fp = project_box_to_rect(&scene.camera, obj);
                let az = obj.rotation.euler().azimuth.to_degrees();
                TruthEntry {
                    label: obj.label.clone(),
                    footprint: fp.rect_or_empty(),
                    detectable: fp.rect.is_some() && !fp.partial,
                    target: target_distribution(az, kappa, bins),
                }
            })
            .collect();
        Self { entries, bins }
    }

    pub fn with_defaults(scene: &Scene) -> Self {
        Self::new(scene, DEFAULT_KAPPA, DEFAULT_BINS)
    }
}

impl DetectionOracle for GroundTruthOracle {
    fn detect(&self, _image: &ImageRef<'_>, label: &str) -> Result<Vec<Detection>, OracleError> {
        Ok(self
            .entries
            .iter()
            .filter(|e| e.detectable && e.label == label)
            .map(|e| Detection {
                rect: e.footprint,
                confidence: 1.0,
            })
            .collect())
    }
}

impl OrientationOracle for GroundTruthOracle {
    fn estimate(&self, _image: &ImageRef<'_>, crop: &Crop<'_>) -> Result<AzimuthDistribution, OracleError> {
        self.entries
            .iter()
            .filter(|e| e.label == crop.label)
            .map(|e| (e.footprint.iou(&crop.rect), &e.target))
            .fold(None::<(f64, &AzimuthDistribution)>, |best, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map(|(_, d)| d.clone())
            .ok_or_else(|| OracleError::Missing {
                case: String::from("ground_truth"),
                label: crop.label.to_string(),
            })
    }

    fn bins(&self) -> usize {
        self.bins
    }
}

/// Recorded orientation answer: an explicit distribution or a von Mises spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrientationFixture {
    Distribution { distribution: Vec<f64> },
    VonMises { azimuth: f64, #[serde(default = "default_kappa")] kappa: f64 },
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelFixture {
    #[serde(default)]
    pub detections: Vec<Detection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<OrientationFixture>,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

/// On-disk fixture: `{ "bins": 360, "cases": { case_id: { label: LabelFixture } } }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureFile {
    #[serde(default = "default_bins")]
    pub bins: usize,
    pub cases: HashMap<String, HashMap<String, LabelFixture>>,
}

/// Replays a [`FixtureFile`], keyed by image id (the case id) and label.
#[derive(Debug, Clone)]
pub struct FixtureOracle {
    file: FixtureFile,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureLoadError {
    #[error("reading fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing fixture: {0}")]
    Json(#[from] serde_json::Error),
}

impl FixtureOracle {
    pub fn new(file: FixtureFile) -> Self {
        Self { file }
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureLoadError> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> Result<Self, FixtureLoadError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn has_case(&self, case: &str) -> bool {
        self.file.cases.contains_key(case)
    }

    fn entry(&self, case: &str, label: &str) -> Option<&LabelFixture> {
        self.file.cases.get(case)?.get(label)
    }
}

impl DetectionOracle for FixtureOracle {
    fn detect(&self, image: &ImageRef<'_>, label: &str) -> Result<Vec<Detection>, OracleError> {
        // A label without an entry simply has no detections.
        Ok(self.entry(image.id, label).map(|e| e.detections.clone()).unwrap_or_default())
    }
}

impl OrientationOracle for FixtureOracle {
    fn estimate(&self, image: &ImageRef<'_>, crop: &Crop<'_>) -> Result<AzimuthDistribution, OracleError> {
        let missing = || OracleError::Missing {
            case: image.id.to_string(),
            label: crop.label.to_string(),
        };
        let entry = self.entry(image.id, crop.label).ok_or_else(missing)?;
        match entry.orientation.as_ref().ok_or_else(missing)? {
            OrientationFixture::Distribution { distribution } => {
                if distribution.len() != self.file.bins {
                    return Err(OracleError::Invalid {
                        case: image.id.to_string(),
                        label: crop.label.to_string(),
                        reason: format!("expected {} bins, got {}", self.file.bins, distribution.len()),
                    });
                }
                AzimuthDistribution::new(distribution.clone()).map_err(|e| OracleError::Invalid {
                    case: image.id.to_string(),
                    label: crop.label.to_string(),
                    reason: e.to_string(),
                })
            }
            OrientationFixture::VonMises { azimuth, kappa } => Ok(target_distribution(*azimuth, *kappa, self.file.bins)),
        }
    }

    fn bins(&self) -> usize {
        self.file.bins
    }
}
