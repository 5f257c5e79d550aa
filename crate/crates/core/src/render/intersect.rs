use nalgebra::Vector3;

use crate::scene::OrientedBox;

/// Hits closer than this along the ray are ignored.
pub const RAY_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance along the (unit) ray.
    pub t: f64,
    /// Hit point in the frame the ray was expressed in.
    pub point: Vector3<f64>,
}

/// Slab test in the box's object frame.
///
/// Returns the nearest crossing of the box surface with `t > RAY_EPSILON`:
/// the entry point, or the exit point when the origin is inside the box.
pub fn intersect_ray_box(origin: &Vector3<f64>, dir: &Vector3<f64>, obb: &OrientedBox) -> Option<RayHit> {
    let o = obb.transform_c2o(origin);
    let d = obb.rotation.inverse_rotate(dir);
    let h = obb.half_size();

    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        if d[axis] == 0.0 {
            if o[axis].abs() > h[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let mut t0 = (-h[axis] - o[axis]) * inv;
        let mut t1 = (h[axis] - o[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_far < t_near {
            return None;
        }
    }

    let t = if t_near > RAY_EPSILON {
        t_near
    } else if t_far > RAY_EPSILON {
        t_far
    } else {
        return None;
    };
    Some(RayHit {
        t,
        point: origin + dir * t,
    })
}
