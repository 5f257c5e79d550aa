//! Random scenes and brute-force reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use cnocs_core::{Camera, OrientedBox, Rotation, Scene};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 {
            return Rotation::from_wxyz(q.map(|c| c / n)).unwrap();
        }
    }
}

/// Box fully in front of the camera and roughly in view.
pub fn random_box<R: Rng + ?Sized>(rng: &mut R, label: &str) -> OrientedBox {
    OrientedBox::new(
        label,
        Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(4.0..10.0)),
        Vector3::new(rng.random_range(0.3..1.5), rng.random_range(0.3..1.5), rng.random_range(0.3..1.5)),
        random_rotation(rng),
    )
}

pub fn random_scene<R: Rng + ?Sized>(rng: &mut R, max_boxes: usize, side: u32) -> Scene {
    let n = rng.random_range(1..=max_boxes);
    let camera = Camera::new(side as f64, side as f64, side as f64 / 2.0, side as f64 / 2.0, side, side);
    let labels = ["chair", "table", "dog", "car"];
    let objects = (0..n).map(|i| random_box(rng, labels[i % labels.len()])).collect();
    Scene::new(camera, objects, "a test scene")
}

/// Rotation matrix written out from the quaternion components.
pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn ray(camera: &Camera, u: u32, v: u32) -> Vector3<f64> {
    Vector3::new(
        (u as f64 + 0.5 - camera.cx) / camera.fx,
        (v as f64 + 0.5 - camera.cy) / camera.fy,
        1.0,
    )
    .normalize()
}

/// Nearest positive hit of a ray from the origin with any of the six face
/// rectangles, found by intersecting each face plane in camera space.
pub fn face_hit(obb: &OrientedBox, dir: &Vector3<f64>) -> Option<f64> {
    let r = quat_matrix(obb.rotation.wxyz());
    let h = obb.size * 0.5;
    let mut best: Option<f64> = None;
    for k in 0..3 {
        let n = r.column(k).into_owned();
        let denom = n.dot(dir);
        if denom.abs() < 1e-15 {
            continue;
        }
        for s in [-1.0, 1.0] {
            let on_plane = obb.center + n * (s * h[k]);
            let t = n.dot(&on_plane) / denom;
            if t <= 1e-9 {
                continue;
            }
            let rel = dir * t - obb.center;
            let inside = (0..3)
                .filter(|&j| j != k)
                .all(|j| r.column(j).dot(&rel).abs() <= h[j] * (1.0 + 1e-9) + 1e-12);
            if inside && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

/// Winner and distance for every pixel, row-major.
pub fn oracle_render(scene: &Scene) -> Vec<Option<(usize, f64)>> {
    let cam = scene.camera;
    let mut out = Vec::with_capacity(cam.width as usize * cam.height as usize);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let d = ray(&cam, u, v);
            let mut best: Option<(usize, f64)> = None;
            for (i, obb) in scene.objects.iter().enumerate() {
                if let Some(t) = face_hit(obb, &d) {
                    if best.is_none_or(|b| t < b.1) {
                        best = Some((i, t));
                    }
                }
            }
            out.push(best);
        }
    }
    out
}

/// Whether any 8-neighbour of `(u, v)` has a different winner.
pub fn near_silhouette(winners: &[Option<usize>], width: usize, height: usize, u: usize, v: usize) -> bool {
    let here = winners[v * width + u];
    for dv in -1i64..=1 {
        for du in -1i64..=1 {
            let (nu, nv) = (u as i64 + du, v as i64 + dv);
            if nu < 0 || nv < 0 || nu >= width as i64 || nv >= height as i64 {
                continue;
            }
            if winners[nv as usize * width + nu as usize] != here {
                return true;
            }
        }
    }
    false
}

/// Applies `x ↦ R x + t` to every box.
pub fn repose(scene: &Scene, rot: &Rotation, t: &Vector3<f64>) -> Scene {
    let mut out = scene.clone();
    for obb in &mut out.objects {
        obb.center = rot.rotate(&obb.center) + t;
        obb.rotation = rot.compose(&obb.rotation);
    }
    out
}
