//! Scene data model: pinhole camera, oriented boxes, prompts.
//!
//! Everything lives in camera space: the camera sits at the origin looking
//! down +z with +x right and +y down (pixel row order).

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::rect::Rect;
use crate::rotation::Rotation;

/// Largest image side representable in the map container header.
pub const MAX_IMAGE_SIDE: u32 = u16::MAX as u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Camera {
    /// 512×512 image with a ~53° field of view.
    fn default() -> Self {
        Self {
            fx: 512.0,
            fy: 512.0,
            cx: 256.0,
            cy: 256.0,
            width: 512,
            height: 512,
        }
    }
}

/// Result of projecting a camera-space point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Pixel(Vector2<f64>),
    BehindCamera,
}

impl Projection {
    pub fn pixel(self) -> Option<Vector2<f64>> {
        match self {
            Projection::Pixel(p) => Some(p),
            Projection::BehindCamera => None,
        }
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Projection {
        if p.z > 0.0 {
            Projection::Pixel(Vector2::new(
                self.fx * p.x / p.z + self.cx,
                self.fy * p.y / p.z + self.cy,
            ))
        } else {
            Projection::BehindCamera
        }
    }

    /// Unit view ray through the center of pixel `(u, v)`.
    pub fn pixel_ray(&self, u: u32, v: u32) -> Vector3<f64> {
        Vector3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
        .normalize()
    }

    pub fn image_rect(&self) -> Rect {
        Rect::new(0.0, 0.0, self.width as f64, self.height as f64)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// A 9-DoF cuboid: center, full side lengths, rotation, entity label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrientedBox {
    pub label: String,
    #[serde(with = "vec3")]
    pub center: Vector3<f64>,
    #[serde(with = "vec3")]
    pub size: Vector3<f64>,
    pub rotation: Rotation,
}

impl OrientedBox {
    pub fn new(label: impl Into<String>, center: Vector3<f64>, size: Vector3<f64>, rotation: Rotation) -> Self {
        Self {
            label: label.into(),
            center,
            size,
            rotation,
        }
    }

    pub fn half_size(&self) -> Vector3<f64> {
        self.size * 0.5
    }

    /// Camera space → object space: `Rᵀ (p − center)`.
    pub fn transform_c2o(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_rotate(&(p - self.center))
    }

    /// Object space → camera space: `R q + center`.
    pub fn transform_o2c(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(q) + self.center
    }

    /// Corners in binary order of the sign pattern (bit 0 → x, bit 1 → y, bit 2 → z).
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.half_size();
        std::array::from_fn(|i| {
            let sx = if i & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if i & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if i & 4 == 0 { -1.0 } else { 1.0 };
            self.transform_o2c(&Vector3::new(sx * h.x, sy * h.y, sz * h.z))
        })
    }
}

/// Projected 2D footprint of a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFootprint {
    /// Hull of the visible corner projections clipped to the image, `None` if empty.
    pub rect: Option<Rect>,
    /// Some corners are in front of the camera plane and some are not.
    pub partial: bool,
}

impl BoxFootprint {
    pub fn rect_or_empty(&self) -> Rect {
        self.rect.unwrap_or(Rect::new(0.0, 0.0, 0.0, 0.0))
    }
}

/// Min/max hull of the eight projected corners, clipped to the image.
pub fn project_box_to_rect(camera: &Camera, obb: &OrientedBox) -> BoxFootprint {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    let mut visible = 0;
    for c in obb.corners() {
        if let Projection::Pixel(p) = camera.project_point(&c) {
            visible += 1;
            lo = lo.inf(&p);
            hi = hi.sup(&p);
        }
    }
    let partial = visible > 0 && visible < 8;
    if visible == 0 {
        return BoxFootprint { rect: None, partial };
    }
    let hull = Rect::new(lo.x, lo.y, hi.x, hi.y);
    let image = camera.image_rect();
    let clipped = hull.intersect(&image);
    // A zero-extent hull inside the image (degenerate box) is kept as a point.
    let rect = if clipped.x1 >= clipped.x0 && clipped.y1 >= clipped.y0 {
        Some(clipped)
    } else {
        None
    };
    BoxFootprint { rect, partial }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub camera: Camera,
    #[serde(default)]
    pub objects: Vec<OrientedBox>,
    #[serde(default)]
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_prompts: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: {message}")]
    InvalidField { path: String, message: String },
    #[error("{path}: degenerate box side length {value}")]
    DegenerateBox { path: String, value: f64 },
}

impl SceneError {
    pub fn path(&self) -> &str {
        match self {
            SceneError::InvalidField { path, .. } | SceneError::DegenerateBox { path, .. } => path,
        }
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SceneError {
    SceneError::InvalidField {
        path: path.into(),
        message: message.into(),
    }
}

impl Scene {
    pub fn new(camera: Camera, objects: Vec<OrientedBox>, prompt: impl Into<String>) -> Self {
        Self {
            camera,
            objects,
            prompt: prompt.into(),
            object_prompts: None,
        }
    }

    /// Prompt used for the per-object branch: the explicit per-object prompt
    /// if present, otherwise the object label.
    pub fn object_prompt(&self, i: usize) -> &str {
        self.object_prompts
            .as_ref()
            .and_then(|p| p.get(i))
            .map(String::as_str)
            .unwrap_or(&self.objects[i].label)
    }

    /// Scene holding only object `i` (same camera and prompt slot).
    pub fn single(&self, i: usize) -> Scene {
        Scene {
            camera: self.camera,
            objects: vec![self.objects[i].clone()],
            prompt: self.object_prompt(i).to_string(),
            object_prompts: None,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let c = &self.camera;
        for (name, v) in [("fx", c.fx), ("fy", c.fy)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("camera.{name}"), "focal length must be finite and > 0"));
            }
        }
        for (name, v) in [("cx", c.cx), ("cy", c.cy)] {
            if !v.is_finite() {
                return Err(invalid(format!("camera.{name}"), "principal point must be finite"));
            }
        }
        for (name, v) in [("width", c.width), ("height", c.height)] {
            if v == 0 || v > MAX_IMAGE_SIDE {
                return Err(invalid(
                    format!("camera.{name}"),
                    format!("image side must be in [1, {MAX_IMAGE_SIDE}]"),
                ));
            }
        }
        for (i, obj) in self.objects.iter().enumerate() {
            for axis in 0..3 {
                if !obj.center[axis].is_finite() {
                    return Err(invalid(format!("objects[{i}].center[{axis}]"), "must be finite"));
                }
                let s = obj.size[axis];
                if !s.is_finite() {
                    return Err(invalid(format!("objects[{i}].size[{axis}]"), "must be finite"));
                }
                if s <= 0.0 {
                    return Err(SceneError::DegenerateBox {
                        path: format!("objects[{i}].size[{axis}]"),
                        value: s,
                    });
                }
            }
        }
        if let Some(prompts) = &self.object_prompts {
            if prompts.len() != self.objects.len() {
                return Err(invalid(
                    "object_prompts",
                    format!("expected {} entries, got {}", self.objects.len(), prompts.len()),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Scene, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }
}

/// Serde helper for `Vector3<f64>` as a `[x, y, z]` array.
pub(crate) mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::new(a[0], a[1], a[2]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::EulerAngles;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn cam100() -> Camera {
        Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100)
    }

    fn unit_cube(center: Vector3<f64>) -> OrientedBox {
        OrientedBox::new("cube", center, Vector3::repeat(1.0), Rotation::identity())
    }

    #[test]
    fn project_point_examples() {
        let cam = cam100();
        assert_eq!(cam.project_point(&Vector3::new(0.0, 0.0, 1.0)).pixel(), Some(Vector2::new(50.0, 50.0)));
        assert_eq!(cam.project_point(&Vector3::new(0.5, 0.0, 1.0)).pixel(), Some(Vector2::new(100.0, 50.0)));
        assert_eq!(cam.project_point(&Vector3::new(0.0, 0.0, -1.0)), Projection::BehindCamera);
        assert_eq!(cam.project_point(&Vector3::new(0.0, 0.0, 0.0)), Projection::BehindCamera);
    }

    #[test]
    fn unit_cube_footprint_is_hull_of_all_corners() {
        // Front face at z = 4.5 dominates the hull: 50 ± 100·0.5/4.5.
        let fp = project_box_to_rect(&cam100(), &unit_cube(Vector3::new(0.0, 0.0, 5.0)));
        let r = fp.rect.unwrap();
        let half = 100.0 * 0.5 / 4.5;
        for (got, want) in [(r.x0, 50.0 - half), (r.y0, 50.0 - half), (r.x1, 50.0 + half), (r.y1, 50.0 + half)] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(!fp.partial);
    }

    #[test]
    fn behind_camera_box_is_empty() {
        let fp = project_box_to_rect(&cam100(), &unit_cube(Vector3::new(0.0, 0.0, -5.0)));
        assert_eq!(fp.rect, None);
        assert!(!fp.partial);
    }

    #[test]
    fn straddling_box_sets_partial_flag() {
        let fp = project_box_to_rect(&cam100(), &unit_cube(Vector3::new(0.0, 0.0, 0.2)));
        assert!(fp.partial);
    }

    #[test]
    fn off_image_box_is_empty() {
        let fp = project_box_to_rect(&cam100(), &unit_cube(Vector3::new(50.0, 0.0, 5.0)));
        assert_eq!(fp.rect, None);
    }

    #[test]
    fn tiny_box_collapses_to_principal_point() {
        let b = OrientedBox::new("dot", Vector3::new(0.0, 0.0, 3.0), Vector3::repeat(1e-12), Rotation::identity());
        let r = project_box_to_rect(&cam100(), &b).rect.unwrap();
        for v in [r.x0, r.y0, r.x1, r.y1] {
            assert!((v - 50.0).abs() < 1e-9);
        }
    }

    #[test]
    fn footprint_invariant_under_cube_yaw() {
        let mut b = unit_cube(Vector3::new(0.3, -0.2, 4.0));
        let before = project_box_to_rect(&cam100(), &b).rect.unwrap();
        b.rotation = Rotation::from_euler(EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        let after = project_box_to_rect(&cam100(), &b).rect.unwrap();
        for (x, y) in [(before.x0, after.x0), (before.y0, after.y0), (before.x1, after.x1), (before.y1, after.y1)] {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_c2o_identity_rotation() {
        let c = Vector3::new(1.0, 2.0, 3.0);
        let b = OrientedBox::new("b", c, Vector3::repeat(1.0), Rotation::identity());
        let p = Vector3::new(4.0, -1.0, 0.5);
        assert_eq!(b.transform_c2o(&p), p - c);
        assert_eq!(b.transform_c2o(&c), Vector3::zeros());
    }

    #[test]
    fn validation_reports_field_paths() {
        let mut s = Scene::new(cam100(), vec![unit_cube(Vector3::new(0.0, 0.0, 5.0))], "a cube");
        assert!(s.validate().is_ok());
        s.objects[0].size.y = 0.0;
        let err = s.validate().unwrap_err();
        assert!(matches!(err, SceneError::DegenerateBox { .. }));
        assert_eq!(err.path(), "objects[0].size[1]");
        s.objects[0].size.y = 1.0;
        s.camera.fx = -1.0;
        assert_eq!(s.validate().unwrap_err().path(), "camera.fx");
    }

    fn box_strategy() -> impl Strategy<Value = OrientedBox> {
        (
            prop::array::uniform3(-3.0..3.0f64),
            prop::array::uniform3(0.01..2.0f64),
            prop::array::uniform4(-1.0..1.0f64),
        )
            .prop_filter_map("non-zero quaternion", |(c, s, q)| {
                Some(OrientedBox::new(
                    "obj",
                    Vector3::from(c),
                    Vector3::from(s),
                    Rotation::from_wxyz(q).filter(|_| q.iter().map(|v| v * v).sum::<f64>() > 1e-3)?,
                ))
            })
    }

    proptest! {
        #[test]
        fn object_camera_round_trip(b in box_strategy(), p in prop::array::uniform3(-10.0..10.0f64)) {
            let p = Vector3::from(p);
            let back = b.transform_o2c(&b.transform_c2o(&p));
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn corner_set_matches_definition(b in box_strategy()) {
            let h = b.half_size();
            let m = b.rotation.matrix();
            for c in b.corners() {
                let local = m.transpose() * (c - b.center);
                for k in 0..3 {
                    prop_assert!((local[k].abs() - h[k]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn scene_json_round_trip_is_bit_exact(boxes in prop::collection::vec(box_strategy(), 0..4), cx in -100.0..700.0f64) {
            let cam = Camera { cx, ..Camera::default() };
            let scene = Scene::new(cam, boxes, "prompt ✓");
            let text = scene.to_json();
            let back = Scene::from_json(&text).unwrap();
            prop_assert_eq!(&back, &scene);
            prop_assert_eq!(back.to_json(), text);
        }
    }
}
