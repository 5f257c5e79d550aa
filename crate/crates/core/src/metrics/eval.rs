//! Localization and orientation evaluation metrics.
//!
//! Each object of each case is one evaluation instance:
//! - `acc_ls`: fraction with IoU strictly above 0.6,
//! - `miou`: mean IoU,
//! - `abs_err`: mean circular azimuth error in degrees,
//! - `acc_22_5`: fraction with circular azimuth error ≤ 22.5°.

use serde::{Deserialize, Serialize};

use super::azimuth::circular_difference;
use crate::rect::Rect;
use crate::scene::{project_box_to_rect, Scene};

pub const IOU_THRESHOLD: f64 = 0.6;
pub const AZIMUTH_TOLERANCE_DEG: f64 = 22.5;

/// One evaluation case: a scene plus per-object detections and azimuth estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub scene: Scene,
    /// Detected rectangle per object; `null` for a missed detection.
    pub detections: Vec<Option<Rect>>,
    /// Estimated azimuth per object, degrees.
    pub azimuths: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub acc_ls: f64,
    pub miou: f64,
    pub abs_err: f64,
    #[serde(rename = "acc_22_5")]
    pub acc_22_5: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no evaluation instances")]
    Empty,
    #[error("case {case}: expected {expected} {what}, got {got}")]
    Shape {
        case: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Metrics from per-instance IoUs and `(target, estimate)` azimuth pairs.
pub fn summarize(ious: &[f64], azimuth_pairs: &[(f64, f64)]) -> Result<EvalMetrics, EvalError> {
    let n = ious.len();
    if n == 0 || azimuth_pairs.len() != n {
        return Err(EvalError::Empty);
    }
    let nf = n as f64;
    let errors: Vec<f64> = azimuth_pairs.iter().map(|(t, e)| circular_difference(*t, *e)).collect();
    Ok(EvalMetrics {
        n,
        acc_ls: ious.iter().filter(|iou| **iou > IOU_THRESHOLD).count() as f64 / nf,
        miou: ious.iter().sum::<f64>() / nf,
        abs_err: errors.iter().sum::<f64>() / nf,
        acc_22_5: errors.iter().filter(|e| **e <= AZIMUTH_TOLERANCE_DEG).count() as f64 / nf,
    })
}

/// IoU and `(true, estimated)` azimuth in degrees of one object.
pub type Instance = (f64, (f64, f64));

/// IoU and azimuth pair per object of a case. Partially visible or
/// off-image boxes score IoU 0, as do missed detections.
pub fn case_instances(index: usize, case: &EvalCase) -> Result<Vec<Instance>, EvalError> {
    let n = case.scene.objects.len();
    if case.detections.len() != n {
        return Err(EvalError::Shape {
            case: index,
            what: "detections",
            expected: n,
            got: case.detections.len(),
        });
    }
    if case.azimuths.len() != n {
        return Err(EvalError::Shape {
            case: index,
            what: "azimuths",
            expected: n,
            got: case.azimuths.len(),
        });
    }
    Ok(case
        .scene
        .objects
        .iter()
        .zip(&case.detections)
        .zip(&case.azimuths)
        .map(|((obj, det), est)| {
            let fp = project_box_to_rect(&case.scene.camera, obj);
            let iou = match (fp.rect, det, fp.partial) {
                (Some(proj), Some(det), false) => proj.iou(det),
                _ => 0.0,
            };
            let target = obj.rotation.euler().azimuth.to_degrees();
            (iou, (target, *est))
        })
        .collect())
}

pub fn eval_metrics(cases: &[EvalCase]) -> Result<EvalMetrics, EvalError> {
    let mut ious = Vec::new();
    let mut pairs = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        for (iou, pair) in case_instances(i, case)? {
            ious.push(iou);
            pairs.push(pair);
        }
    }
    summarize(&ious, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_formulas() {
        let m = summarize(&[0.7, 0.5, 0.9], &[(0.0, 0.0); 3]).unwrap();
        assert!((m.acc_ls - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.miou - 0.7).abs() < 1e-15);
    }

    #[test]
    fn threshold_is_strict() {
        let m = summarize(&[0.6, 0.6000001], &[(0.0, 0.0); 2]).unwrap();
        assert_eq!(m.acc_ls, 0.5);
    }

    #[test]
    fn azimuth_wraparound() {
        let m = summarize(&[1.0], &[(350.0, 10.0)]).unwrap();
        assert_eq!(m.abs_err, 20.0);
        assert_eq!(m.acc_22_5, 1.0);
        let m = summarize(&[1.0], &[(0.0, 22.5)]).unwrap();
        assert_eq!(m.acc_22_5, 1.0);
        let m = summarize(&[1.0], &[(0.0, 22.6)]).unwrap();
        assert_eq!(m.acc_22_5, 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let m = summarize(&[1.0, 1.0], &[(10.0, 10.0), (200.0, 200.0)]).unwrap();
        assert_eq!((m.acc_ls, m.miou, m.abs_err, m.acc_22_5), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(summarize(&[], &[]), Err(EvalError::Empty));
    }
}
