//! CNOCS map rasterization.
//!
//! Each pixel casts a ray through its center, finds the nearest box surface
//! (ties go to the lower object index), maps the hit into the winning box's
//! normalized object frame `[-1, 1]³`, and encodes it. Rows render in
//! parallel; the output is bit-identical regardless of thread count.

pub mod encoding;
pub mod export;
pub mod harmonics;
pub mod intersect;
pub mod mask;

use nalgebra::Vector3;
use rayon::prelude::*;

pub use encoding::{encode, Encoder, EncodingSpec, Variant};
pub use intersect::{intersect_ray_box, RayHit, RAY_EPSILON};
pub use mask::{downsample_mask, object_mask, Mask};

use crate::rotation::Rotation;
use crate::scene::{Camera, OrientedBox, Scene};

/// Multi-channel conditioning map plus the per-pixel winning object.
#[derive(Debug, Clone, PartialEq)]
pub struct CnocsMap {
    pub width: u32,
    pub height: u32,
    pub spec: EncodingSpec,
    /// Row-major `(v, u, c)` features, background = 0.
    pub data: Vec<f32>,
    pub object_index: Vec<Option<u32>>,
    /// Hit distance along the unit pixel ray; `+∞` for background.
    pub hit_distance: Vec<f64>,
}

impl CnocsMap {
    pub fn empty(width: u32, height: u32, spec: EncodingSpec) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            spec,
            data: vec![0.0; n * spec.channels()],
            object_index: vec![None; n],
            hit_distance: vec![f64::INFINITY; n],
        }
    }

    pub fn channels(&self) -> usize {
        self.spec.channels()
    }

    pub fn pixel_index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    pub fn pixel(&self, u: u32, v: u32) -> &[f32] {
        let c = self.channels();
        let i = self.pixel_index(u, v) * c;
        &self.data[i..i + c]
    }

    pub fn winner(&self, u: u32, v: u32) -> Option<u32> {
        self.object_index[self.pixel_index(u, v)]
    }

    pub fn foreground_count(&self) -> usize {
        self.object_index.iter().filter(|i| i.is_some()).count()
    }
}

/// Rigid pose of the viewer in the frame the boxes are expressed in.
///
/// The identity pose is the fixed camera convention used everywhere else.
/// A non-identity pose only changes where rays start and point; it exists so
/// that a jointly re-posed scene can be rendered from the matching viewpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ViewPose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl ViewPose {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    fn ray(&self, camera: &Camera, u: u32, v: u32) -> (Vector3<f64>, Vector3<f64>) {
        let d = camera.pixel_ray(u, v);
        (self.translation, self.rotation.rotate(&d))
    }
}

/// Winning object and its hit for one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelHit {
    pub object: usize,
    pub hit: RayHit,
}

fn nearest_hit(origin: &Vector3<f64>, dir: &Vector3<f64>, objects: &[OrientedBox]) -> Option<PixelHit> {
    let mut best: Option<PixelHit> = None;
    for (i, obb) in objects.iter().enumerate() {
        if let Some(hit) = intersect_ray_box(origin, dir, obb) {
            if best.is_none_or(|b| hit.t < b.hit.t) {
                best = Some(PixelHit { object: i, hit });
            }
        }
    }
    best
}

/// Nearest box along the ray through pixel `(u, v)`; `None` for background.
pub fn resolve_occlusion(camera: &Camera, scene: &Scene, u: u32, v: u32) -> Option<PixelHit> {
    let d = camera.pixel_ray(u, v);
    nearest_hit(&Vector3::zeros(), &d, &scene.objects)
}

/// `2 · transform_c2o(hit) / size`, clamped to `[-1, 1]³`.
pub fn normalize_object_point(obb: &OrientedBox, hit: &Vector3<f64>) -> Vector3<f64> {
    let local = obb.transform_c2o(hit);
    Vector3::from_fn(|k, _| (2.0 * local[k] / obb.size[k]).clamp(-1.0, 1.0))
}

pub fn render_cnocs(scene: &Scene, spec: &EncodingSpec) -> CnocsMap {
    render_cnocs_from(scene, spec, &ViewPose::identity())
}

/// Renders with the viewer at `pose`; boxes are taken in the pose's parent frame.
pub fn render_cnocs_from(scene: &Scene, spec: &EncodingSpec, pose: &ViewPose) -> CnocsMap {
    let camera = scene.camera;
    let encoder = Encoder::new(*spec);
    let channels = encoder.channels();
    let mut map = CnocsMap::empty(camera.width, camera.height, *spec);
    if scene.objects.is_empty() {
        return map;
    }
    // Orientation of each box as seen from the viewer.
    let view_inv = pose.rotation.inverse();
    let relative: Vec<Rotation> = scene.objects.iter().map(|o| view_inv.compose(&o.rotation)).collect();

    let w = camera.width as usize;
    map.data
        .par_chunks_mut(w * channels)
        .zip(map.object_index.par_chunks_mut(w))
        .zip(map.hit_distance.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, ((row, index_row), dist_row))| {
            let mut feature = vec![0.0f64; channels];
            for u in 0..w {
                let (origin, dir) = pose.ray(&camera, u as u32, v as u32);
                let Some(ph) = nearest_hit(&origin, &dir, &scene.objects) else {
                    continue;
                };
                let obb = &scene.objects[ph.object];
                let normalized = normalize_object_point(obb, &ph.hit.point);
                encoder.encode_into(&normalized, &relative[ph.object], &mut feature);
                for (dst, src) in row[u * channels..(u + 1) * channels].iter_mut().zip(&feature) {
                    *dst = *src as f32;
                }
                index_row[u] = Some(ph.object as u32);
                dist_row[u] = ph.hit.t;
            }
        });
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::EulerAngles;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100)
    }

    fn cube(z: f64) -> OrientedBox {
        OrientedBox::new("cube", Vector3::new(0.0, 0.0, z), Vector3::repeat(1.0), Rotation::identity())
    }

    #[test]
    fn empty_scene_is_background() {
        let map = render_cnocs(&Scene::new(cam(), vec![], ""), &EncodingSpec::identity());
        assert!(map.data.iter().all(|v| *v == 0.0));
        assert!(map.object_index.iter().all(Option::is_none));
    }

    #[test]
    fn front_cube_wins_on_axis() {
        let scene = Scene::new(cam(), vec![cube(8.0), cube(5.0)], "");
        let hit = resolve_occlusion(&scene.camera, &scene, 50, 50).unwrap();
        assert_eq!(hit.object, 1);
        let map = render_cnocs(&scene, &EncodingSpec::identity());
        assert_eq!(map.winner(50, 50), Some(1));
    }

    #[test]
    fn coincident_boxes_tie_to_lower_index() {
        let scene = Scene::new(cam(), vec![cube(5.0), cube(5.0)], "");
        let map = render_cnocs(&scene, &EncodingSpec::identity());
        assert!(map.object_index.iter().flatten().all(|i| *i == 0));
        assert!(map.foreground_count() > 0);
    }

    #[test]
    fn normalize_examples() {
        let b = cube(5.0);
        let front = normalize_object_point(&b, &Vector3::new(0.0, 0.0, 5.5));
        assert_eq!(front.z, 1.0);
        let corner = normalize_object_point(&b, &Vector3::new(0.5, -0.5, 4.5));
        assert_eq!(corner, Vector3::new(1.0, -1.0, -1.0));
    }

    #[test]
    fn facing_cube_identity_front_face() {
        // Closed form: pixel ray d ∝ (a, b, 1) meets z = 4.5 at (4.5a, 4.5b).
        let scene = Scene::new(cam(), vec![cube(5.0)], "");
        let map = render_cnocs(&scene, &EncodingSpec::identity());
        let c = cam();
        let mut checked = 0;
        for v in 0..c.height {
            for u in 0..c.width {
                let a = (u as f64 + 0.5 - c.cx) / c.fx;
                let b = (v as f64 + 0.5 - c.cy) / c.fy;
                let (x, y) = (4.5 * a, 4.5 * b);
                if x.abs() < 0.5 - 1e-9 && y.abs() < 0.5 - 1e-9 {
                    let px = map.pixel(u, v);
                    assert_eq!(px[2], -1.0);
                    assert!((px[0] as f64 - 2.0 * x).abs() < 1e-6);
                    assert!((px[1] as f64 - 2.0 * y).abs() < 1e-6);
                    checked += 1;
                }
            }
        }
        assert!(checked > 400);
    }

    #[test]
    fn constant_map_is_flat_per_object() {
        let mut b = cube(5.0);
        b.rotation = Rotation::from_euler(EulerAngles::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0));
        let map = render_cnocs(&Scene::new(cam(), vec![b], ""), &EncodingSpec::constant());
        let fg: Vec<_> = (0..map.object_index.len()).filter(|&i| map.object_index[i].is_some()).collect();
        assert!(!fg.is_empty());
        for i in fg {
            let px = &map.data[i * 3..i * 3 + 3];
            assert!((px[0] - 0.5).abs() < 1e-6 && px[1].abs() < 1e-6 && px[2].abs() < 1e-6);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let scene = Scene::new(cam(), vec![cube(5.0), cube(7.0)], "");
        let spec = EncodingSpec::spherical(3, true);
        let a = render_cnocs(&scene, &spec);
        let b = render_cnocs(&scene, &spec);
        assert_eq!(a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.object_index, b.object_index);
    }
}
