//! Pose-fidelity reward: `r = γ·r_ls + λ·r_o`.
//!
//! `r_ls = Σ (1 − D_ls,i)` with `D_ls,i = 1 − IoU(detection, projected box)`;
//! `r_o = Σ (1 − D_o,i)` with `D_o,i = KL(target ‖ estimated)` over azimuth bins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::azimuth::{kl_divergence, target_distribution, DEFAULT_KAPPA};
use super::oracle::{Crop, Detection, DetectionOracle, ImageRef, OracleError, OrientationOracle};
use crate::rect::Rect;
use crate::scene::{project_box_to_rect, BoxFootprint, Scene};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub gamma: f64,
    pub lambda: f64,
    /// Concentration of the target azimuth distribution; `∞` is one-hot.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl Default for RewardWeights {
    /// Orientation-only weighting (γ = 0, λ = 1).
    fn default() -> Self {
        Self {
            gamma: 0.0,
            lambda: 1.0,
            kappa: DEFAULT_KAPPA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReward {
    pub index: usize,
    pub label: String,
    pub projected: Option<Rect>,
    pub partial: bool,
    pub detection: Option<Detection>,
    pub iou: f64,
    pub d_ls: f64,
    pub d_o: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseReward {
    pub r_ls: f64,
    pub r_o: f64,
    pub r: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub objects: Vec<ObjectReward>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("scene has no objects")]
    EmptyScene,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("orientation oracle returned {got} bins, expected {expected}")]
    BinMismatch { expected: usize, got: usize },
}

/// Greedy one-to-one assignment of detections to same-label objects by
/// descending IoU with the projected footprint. Pairs with zero overlap are
/// never assigned. Returns, per object, the matched detection and its IoU.
pub fn match_detections(
    labels: &[&str],
    footprints: &[BoxFootprint],
    detections: &[(String, Vec<Detection>)],
) -> Vec<Option<(Detection, f64)>> {
    let mut assigned: Vec<Option<(Detection, f64)>> = vec![None; labels.len()];
    for (label, dets) in detections {
        let mut pairs = Vec::new();
        for (i, (l, fp)) in labels.iter().zip(footprints).enumerate() {
            if l != label || fp.partial {
                continue;
            }
            let Some(rect) = fp.rect else { continue };
            for (j, det) in dets.iter().enumerate() {
                let iou = rect.iou(&det.rect);
                if iou > 0.0 {
                    pairs.push((iou, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = vec![false; dets.len()];
        for (iou, i, j) in pairs {
            if assigned[i].is_none() && !used[j] {
                assigned[i] = Some((dets[j], iou));
                used[j] = true;
            }
        }
    }
    assigned
}

pub fn reward(
    image: &ImageRef<'_>,
    scene: &Scene,
    detector: &dyn DetectionOracle,
    orienter: &dyn OrientationOracle,
    weights: &RewardWeights,
) -> Result<PoseReward, RewardError> {
    if scene.objects.is_empty() {
        return Err(RewardError::EmptyScene);
    }
    let labels: Vec<&str> = scene.objects.iter().map(|o| o.label.as_str()).collect();
    let footprints: Vec<BoxFootprint> = scene
        .objects
        .iter()
        .map(|o| project_box_to_rect(&scene.camera, o))
        .collect();

    let mut unique: Vec<&str> = labels.clone();
    unique.sort_unstable();
    unique.dedup();
    let detections = unique
        .iter()
        .map(|l| Ok((l.to_string(), detector.detect(image, l)?)))
        .collect::<Result<Vec<_>, OracleError>>()?;
    let matches = match_detections(&labels, &footprints, &detections);

    let bins = orienter.bins();
    let objects = scene
        .objects
        .par_iter()
        .enumerate()
        .map(|(i, obj)| {
            let fp = footprints[i];
            let matched = matches[i];
            let iou = if fp.partial { 0.0 } else { matched.map_or(0.0, |m| m.1) };
            let d_ls = 1.0 - iou;
            let crop_rect = matched.map(|m| m.0.rect).unwrap_or_else(|| fp.rect_or_empty());
            let estimated = orienter.estimate(
                image,
                &Crop {
                    rect: crop_rect,
                    label: &obj.label,
                },
            )?;
            if estimated.bins() != bins {
                return Err(RewardError::BinMismatch {
                    expected: bins,
                    got: estimated.bins(),
                });
            }
            let az = obj.rotation.euler().azimuth.to_degrees();
            let target = target_distribution(az, weights.kappa, bins);
            Ok(ObjectReward {
                index: i,
                label: obj.label.clone(),
                projected: fp.rect,
                partial: fp.partial,
                detection: matched.map(|m| m.0),
                iou,
                d_ls,
                d_o: kl_divergence(&target, &estimated),
            })
        })
        .collect::<Result<Vec<_>, RewardError>>()?;

    let r_ls: f64 = objects.iter().map(|o| 1.0 - o.d_ls).sum();
    let r_o: f64 = objects.iter().map(|o| 1.0 - o.d_o).sum();
    Ok(PoseReward {
        r_ls,
        r_o,
        r: weights.gamma * r_ls + weights.lambda * r_o,
        gamma: weights.gamma,
        lambda: weights.lambda,
        objects,
    })
}

/// Reward from already-computed per-object IoUs and KL terms.
pub fn combine(ious: &[f64], kls: &[f64], gamma: f64, lambda: f64) -> (f64, f64, f64) {
    let r_ls: f64 = ious.iter().map(|iou| 1.0 - (1.0 - iou)).sum();
    let r_o: f64 = kls.iter().map(|kl| 1.0 - kl).sum();
    (r_ls, r_o, gamma * r_ls + lambda * r_o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::azimuth::AzimuthDistribution;
    use crate::metrics::oracle::{FixtureOracle, GroundTruthOracle};
    use crate::rotation::{EulerAngles, Rotation};
    use crate::scene::{Camera, OrientedBox};
    use nalgebra::Vector3;

    fn scene() -> Scene {
        let cam = Camera::new(200.0, 200.0, 100.0, 100.0, 200, 200);
        Scene::new(
            cam,
            vec![
                OrientedBox::new(
                    "chair",
                    Vector3::new(-0.6, 0.0, 5.0),
                    Vector3::new(0.5, 0.8, 0.5),
                    Rotation::from_euler(EulerAngles::new(0.7, 0.1, 0.0)),
                ),
                OrientedBox::new(
                    "dog",
                    Vector3::new(0.7, 0.2, 4.0),
                    Vector3::new(0.4, 0.3, 0.7),
                    Rotation::from_euler(EulerAngles::new(-2.0, 0.0, 0.2)),
                ),
            ],
            "a chair and a dog",
        )
    }

    #[test]
    fn ground_truth_is_fixed_point() {
        let s = scene();
        let gt = GroundTruthOracle::with_defaults(&s);
        let img = ImageRef::placeholder("gt", 200, 200);
        let w = RewardWeights { gamma: 0.3, lambda: 0.7, kappa: 10.0 };
        let r = reward(&img, &s, &gt, &gt, &w).unwrap();
        assert!(r.objects.iter().all(|o| o.d_ls == 0.0 && o.d_o == 0.0));
        assert_eq!(r.r, 0.3 * 2.0 + 0.7 * 2.0);
    }

    #[test]
    fn default_weights_reduce_to_orientation_term() {
        let s = scene();
        let gt = GroundTruthOracle::with_defaults(&s);
        let img = ImageRef::placeholder("gt", 200, 200);
        let r = reward(&img, &s, &gt, &gt, &RewardWeights::default()).unwrap();
        assert_eq!(r.r, r.r_o);
    }

    #[test]
    fn combine_matches_direct_substitution() {
        let (r_ls, r_o, r) = combine(&[0.5, 1.0], &[0.0, 360f64.ln()], 1.0, 1.0);
        assert!((r_ls - 1.5).abs() < 1e-15);
        assert!((r_o - (2.0 - 360f64.ln())).abs() < 1e-15);
        assert!((r - (3.5 - 360f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn missing_detection_falls_back() {
        let s = scene();
        let fp = project_box_to_rect(&s.camera, &s.objects[1]).rect.unwrap();
        let fixture = serde_json::json!({
            "cases": {
                "c": {
                    "chair": {"orientation": {"azimuth": 10.0}},
                    "dog": {"detections": [{"rect": [fp.x0, fp.y0, fp.x1, fp.y1]}], "orientation": {"azimuth": 10.0}}
                }
            }
        });
        let oracle = FixtureOracle::from_json(&fixture.to_string()).unwrap();
        let img = ImageRef::placeholder("c", 200, 200);
        let r = reward(&img, &s, &oracle, &oracle, &RewardWeights { gamma: 1.0, lambda: 1.0, kappa: 10.0 }).unwrap();
        assert_eq!(r.objects[0].d_ls, 1.0);
        assert!(r.objects[0].detection.is_none());
        assert_eq!(r.objects[1].d_ls, 0.0);
    }

    #[test]
    fn partial_visibility_counts_as_failed_localization() {
        let mut s = scene();
        s.objects[0].center.z = 0.1;
        let gt = GroundTruthOracle::with_defaults(&s);
        let img = ImageRef::placeholder("gt", 200, 200);
        let r = reward(&img, &s, &gt, &gt, &RewardWeights::default()).unwrap();
        assert!(r.objects[0].partial);
        assert_eq!(r.objects[0].d_ls, 1.0);
    }

    #[test]
    fn greedy_matching_is_one_to_one() {
        let fp = |r: Rect| BoxFootprint { rect: Some(r), partial: false };
        let a = Rect::new(0.0, 0.0, 10.0, 10.0);
        let b = Rect::new(5.0, 0.0, 15.0, 10.0);
        let dets = vec![(
            "x".to_string(),
            vec![Detection { rect: Rect::new(1.0, 0.0, 11.0, 10.0), confidence: 0.5 }],
        )];
        let m = match_detections(&["x", "x"], &[fp(a), fp(b)], &dets);
        assert!(m[0].is_some());
        assert!(m[1].is_none());
    }

    #[test]
    fn empty_scene_is_rejected() {
        let s = Scene::new(Camera::default(), vec![], "");
        let gt = GroundTruthOracle::with_defaults(&s);
        let img = ImageRef::placeholder("gt", 1, 1);
        assert_eq!(reward(&img, &s, &gt, &gt, &RewardWeights::default()), Err(RewardError::EmptyScene));
    }

    #[test]
    fn uniform_estimate_costs_log_bins() {
        struct Uniform;
        impl OrientationOracle for Uniform {
            fn estimate(&self, _: &ImageRef<'_>, _: &Crop<'_>) -> Result<AzimuthDistribution, OracleError> {
                Ok(AzimuthDistribution::uniform(360))
            }
        }
        let s = scene();
        let gt = GroundTruthOracle::with_defaults(&s);
        let img = ImageRef::placeholder("gt", 200, 200);
        let w = RewardWeights { gamma: 0.0, lambda: 1.0, kappa: f64::INFINITY };
        let r = reward(&img, &s, &gt, &Uniform, &w).unwrap();
        for o in &r.objects {
            assert!((o.d_o - 360f64.ln()).abs() < 1e-12);
        }
    }
}
