//! Turning detected objects with point clouds into oriented boxes.
//!
//! Candidates are filtered by mask area, orientation confidence and category,
//! their points are trimmed around the centroid, and a box aligned with the
//! given orientation is fitted tightly around what remains.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rotation::Rotation;
use crate::scene::{Camera, OrientedBox, Scene};

pub const MIN_POINTS: usize = 4;
/// Axis spans below this are treated as degenerate.
pub const DEGENERATE_SPAN: f64 = 1e-9;
/// Size given to a degenerate axis.
pub const DEGENERATE_SIZE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    /// Mask area as a fraction of the image.
    pub area: f64,
    pub confidence: f64,
    pub orientation: Rotation,
    pub points: Vec<[f64; 3]>,
    /// Which points fall inside the object mask; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership: Option<Vec<bool>>,
}

impl Candidate {
    pub fn object_points(&self) -> Vec<Vector3<f64>> {
        let keep = |i: usize| self.membership.as_ref().is_none_or(|m| m.get(i).copied().unwrap_or(false));
        self.points
            .iter()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .map(|(_, p)| Vector3::from(*p))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    /// Area or confidence outside `[0, 1]` or not a number.
    Invalid,
    TooSmall,
    TooLarge,
    LowConfidence,
    AmbiguousCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_area: f64,
    pub max_area: f64,
    pub min_confidence: f64,
    pub ambiguous: BTreeSet<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_area: 0.10,
            max_area: 0.70,
            min_confidence: 0.8,
            ambiguous: BTreeSet::from(["bottle".to_string()]),
        }
    }
}

impl FilterConfig {
    /// First failing check, in the order area, confidence, category.
    pub fn check(&self, c: &Candidate) -> Option<RejectReason> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(c.area) || !unit(c.confidence) {
            Some(RejectReason::Invalid)
        } else if c.area < self.min_area {
            Some(RejectReason::TooSmall)
        } else if c.area > self.max_area {
            Some(RejectReason::TooLarge)
        } else if c.confidence < self.min_confidence {
            Some(RejectReason::LowConfidence)
        } else if self.ambiguous.contains(&c.label) {
            Some(RejectReason::AmbiguousCategory)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: usize,
    pub reason: RejectReason,
}

/// Indices of accepted candidates, plus a rejection per refused one.
pub fn filter_candidates(cands: &[Candidate], config: &FilterConfig) -> (Vec<usize>, Vec<Rejection>) {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (id, c) in cands.iter().enumerate() {
        match config.check(c) {
            None => accepted.push(id),
            Some(reason) => rejected.push(Rejection { id, reason }),
        }
    }
    (accepted, rejected)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotateError {
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("invalid trim setting: {0}")]
    InvalidTrim(String),
    #[error("candidate {id}: {source}")]
    Candidate {
        id: usize,
        #[source]
        source: Box<AnnotateError>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimMode {
    /// Drop the farthest `⌈f · n⌉` points from the centroid.
    Fraction(f64),
    /// Drop points farther than this from the centroid.
    MaxDistance(f64),
}

impl Default for TrimMode {
    fn default() -> Self {
        TrimMode::Fraction(0.10)
    }
}

fn check_points(points: &[Vector3<f64>]) -> Result<(), AnnotateError> {
    if points.len() < MIN_POINTS {
        return Err(AnnotateError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(AnnotateError::NonFinite(i));
    }
    Ok(())
}

pub fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Removes far points, keeping survivors in input order. Among points at
/// equal distance the later one is dropped first.
pub fn trim_points(points: &[Vector3<f64>], mode: TrimMode) -> Result<Vec<Vector3<f64>>, AnnotateError> {
    check_points(points)?;
    let c = centroid(points);
    let dist: Vec<f64> = points.iter().map(|p| (p - c).norm()).collect();
    let keep: Vec<bool> = match mode {
        TrimMode::Fraction(f) => {
            if !(0.0..1.0).contains(&f) {
                return Err(AnnotateError::InvalidTrim(format!("fraction {f} not in [0, 1)")));
            }
            // The small offset keeps e.g. 0.1 · 30 from rounding up to 4.
            let drop = (f * points.len() as f64 - 1e-9).ceil().max(0.0) as usize;
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
            let mut keep = vec![true; points.len()];
            for &i in &order[points.len() - drop..] {
                keep[i] = false;
            }
            keep
        }
        TrimMode::MaxDistance(d) => {
            if d.is_nan() || d < 0.0 {
                return Err(AnnotateError::InvalidTrim(format!("distance {d} is not a non-negative number")));
            }
            dist.iter().map(|x| *x <= d).collect()
        }
    };
    Ok(points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedBox {
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub rotation: Rotation,
    /// Some axis had (almost) no extent and was floored.
    pub degenerate: bool,
}

impl FittedBox {
    pub fn into_box(self, label: impl Into<String>) -> OrientedBox {
        OrientedBox::new(label, self.center, self.size, self.rotation)
    }
}

/// Tightest box with the given orientation around `points`.
pub fn fit_obb(points: &[Vector3<f64>], orientation: &Rotation) -> Result<FittedBox, AnnotateError> {
    check_points(points)?;
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        let q = orientation.inverse_rotate(p);
        lo = lo.inf(&q);
        hi = hi.sup(&q);
    }
    let mut size = hi - lo;
    let mut degenerate = false;
    for s in size.iter_mut() {
        if *s < DEGENERATE_SPAN {
            *s = DEGENERATE_SIZE;
            degenerate = true;
        }
    }
    let mid = (lo + hi) * 0.5;
    Ok(FittedBox {
        center: orientation.rotate(&mid),
        size,
        rotation: *orientation,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub id: usize,
    pub obb: OrientedBox,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub objects: Vec<AnnotatedObject>,
    pub rejections: Vec<Rejection>,
}

impl Annotation {
    pub fn to_scene(&self, camera: Camera, prompt: impl Into<String>) -> Scene {
        Scene::new(camera, self.objects.iter().map(|o| o.obb.clone()).collect(), prompt)
    }
}

/// Filter, trim and fit every candidate; ids are positions in `cands`.
pub fn annotate(cands: &[Candidate], filter: &FilterConfig, trim: TrimMode) -> Result<Annotation, AnnotateError> {
    let (accepted, rejections) = filter_candidates(cands, filter);
    let objects = accepted
        .par_iter()
        .map(|&id| {
            let c = &cands[id];
            let fit = trim_points(&c.object_points(), trim)
                .and_then(|pts| fit_obb(&pts, &c.orientation))
                .map_err(|e| AnnotateError::Candidate {
                    id,
                    source: Box::new(e),
                })?;
            Ok(AnnotatedObject {
                id,
                degenerate: fit.degenerate,
                obb: fit.into_box(c.label.clone()),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Annotation { objects, rejections })
}

/// One candidate per non-blank line.
pub fn parse_candidates(text: &str) -> Result<Vec<Candidate>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}
