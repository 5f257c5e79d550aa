//! Cuboid NOCS (CNOCS) conditioning maps for 9-DoF multi-object pose control.
//!
//! - [`scene`]: camera, oriented boxes, projection.
//! - [`render`]: ray-cast CNOCS rasterizer, encodings, masks, map export.
//! - [`metrics`]: IoU, azimuth distributions, pose reward, evaluation metrics.
//! - [`flow`]: Euler flow sampling, disentangled object sampling, truncated
//!   rollout schedule for reward finetuning.
//! - [`annotate`]: candidate filtering, point trimming, box fitting.

pub mod annotate;
pub mod flow;
pub mod metrics;
pub mod rect;
pub mod render;
pub mod rotation;
pub mod scene;

pub use rect::{iou, Rect};
pub use render::{render_cnocs, CnocsMap, EncodingSpec, Variant};
pub use rotation::{EulerAngles, Rotation};
pub use scene::{project_box_to_rect, BoxFootprint, Camera, OrientedBox, Projection, Scene, SceneError};
