//! Analytic ray intersection against bilinear heightfields and capsules.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::Heightfield;

pub type Vec3 = Vector3<f64>;

const UNIT_TOL: f64 = 1e-9;

fn check_unit(direction: &Vec3) -> Result<()> {
    let n = direction.norm();
    if (n - 1.0).abs() > UNIT_TOL || !n.is_finite() {
        return Err(Error::Spec(format!("ray direction must be unit length, |d| = {n}")));
    }
    Ok(())
}

/// Real roots of `a t^2 + b t + c`, numerically stable. Degenerates to the linear root
/// when `a` is zero.
fn quadratic_roots(a: f64, b: f64, c: f64) -> ([f64; 2], usize) {
    if a == 0.0 {
        if b == 0.0 {
            return ([0.0; 2], 0);
        }
        return ([-c / b, 0.0], 1);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return ([0.0; 2], 0);
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        // b == 0 and c == 0
        return ([0.0, 0.0], 2);
    }
    let (r1, r2) = (q / a, c / q);
    if r1 <= r2 {
        ([r1, r2], 2)
    } else {
        ([r2, r1], 2)
    }
}

/// First intersection of the ray with the bilinear terrain surface, or `None` when the ray
/// leaves the field or travels farther than `t_max` without hitting.
///
/// Walks the cells crossed by the ray's ground-plane projection (2-D DDA) and solves the
/// ray/bilinear-patch quadratic in each. A ray starting below the surface reports a hit
/// at its entry point.
pub fn ray_heightfield(origin: &Vec3, direction: &Vec3, hf: &Heightfield, t_max: f64) -> Result<Option<f64>> {
    check_unit(direction)?;
    Ok(ray_heightfield_unchecked(origin, direction, hf, t_max))
}

pub(crate) fn ray_heightfield_unchecked(o: &Vec3, d: &Vec3, hf: &Heightfield, t_max: f64) -> Option<f64> {
    let (lo, hi) = hf.bounds();
    let mut t_enter = 0.0_f64;
    let mut t_exit = t_max;
    for axis in 0..2 {
        if d[axis] == 0.0 {
            if o[axis] < lo[axis] || o[axis] > hi[axis] {
                return None;
            }
        } else {
            let inv = 1.0 / d[axis];
            let (mut ta, mut tb) = ((lo[axis] - o[axis]) * inv, (hi[axis] - o[axis]) * inv);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t_enter = t_enter.max(ta);
            t_exit = t_exit.min(tb);
        }
    }
    if t_enter > t_exit {
        return None;
    }
    let (h_min, h_max) = hf.min_max_elevation();
    let z_in = o.z + t_enter * d.z;
    let z_out = o.z + t_exit * d.z;
    if z_in.min(z_out) > h_max {
        return None;
    }
    // shortcut: a ray that starts below every node is inside the ground
    if z_in < h_min {
        return Some(t_enter);
    }

    let res = hf.resolution();
    let (nx, ny) = (hf.nx(), hf.ny());
    let p = o + t_enter * d;
    let cell = |coord: f64, origin: f64, n: usize| -> usize {
        (((coord - origin) / res).floor().max(0.0) as usize).min(n - 2)
    };
    let mut ix = cell(p.x, lo[0], nx);
    let mut iy = cell(p.y, lo[1], ny);

    let setup = |dir: f64, pos: f64, origin: f64, idx: usize| -> (isize, f64, f64) {
        if dir > 0.0 {
            let boundary = origin + (idx + 1) as f64 * res;
            (1, (boundary - pos) / dir, res / dir)
        } else if dir < 0.0 {
            let boundary = origin + idx as f64 * res;
            (-1, (boundary - pos) / dir, -res / dir)
        } else {
            (0, f64::INFINITY, f64::INFINITY)
        }
    };
    let (step_x, mut next_x, delta_x) = setup(d.x, p.x, lo[0], ix);
    let (step_y, mut next_y, delta_y) = setup(d.y, p.y, lo[1], iy);
    // next_* are measured from t_enter
    let span = t_exit - t_enter;
    let mut t_cur = 0.0_f64;

    loop {
        let t_end = next_x.min(next_y).min(span);
        if let Some(tau) = patch_hit(o, d, hf, ix, iy, t_enter + t_cur, (t_end - t_cur).max(0.0)) {
            let t = t_enter + t_cur + tau;
            return if t <= t_max { Some(t) } else { None };
        }
        if t_end >= span {
            return None;
        }
        if next_x <= next_y {
            let nxt = ix as isize + step_x;
            if nxt < 0 || nxt as usize > nx - 2 {
                return None;
            }
            ix = nxt as usize;
            t_cur = next_x;
            next_x += delta_x;
        } else {
            let nxt = iy as isize + step_y;
            if nxt < 0 || nxt as usize > ny - 2 {
                return None;
            }
            iy = nxt as usize;
            t_cur = next_y;
            next_y += delta_y;
        }
    }
}

/// Smallest `tau ∈ [0, len]` where the ray (restarted at `t0`) meets the bilinear patch of
/// cell `(ix, iy)`.
#[inline]
fn patch_hit(o: &Vec3, d: &Vec3, hf: &Heightfield, ix: usize, iy: usize, t0: f64, len: f64) -> Option<f64> {
    let h00 = hf.node(ix, iy);
    let h10 = hf.node(ix + 1, iy);
    let h01 = hf.node(ix, iy + 1);
    let h11 = hf.node(ix + 1, iy + 1);
    let z0 = o.z + t0 * d.z;
    let z1 = z0 + len * d.z;
    let cell_max = h00.max(h10).max(h01).max(h11);
    if z0.min(z1) > cell_max {
        return None;
    }
    let res = hf.resolution();
    let corner = hf.node_position(ix, iy);
    let u0 = (o.x + t0 * d.x - corner[0]) / res;
    let v0 = (o.y + t0 * d.y - corner[1]) / res;
    let (du, dv) = (d.x / res, d.y / res);
    let (b, c, e) = (h10 - h00, h01 - h00, h00 - h10 - h01 + h11);
    // clearance f(tau) = qa tau^2 + qb tau + qc
    let qc = z0 - (h00 + b * u0 + c * v0 + e * u0 * v0);
    if qc <= 0.0 {
        return Some(0.0);
    }
    let qb = d.z - (b * du + c * dv + e * (u0 * dv + v0 * du));
    let qa = -e * du * dv;
    let (roots, n) = quadratic_roots(qa, qb, qc);
    let slack = 1e-12 * (1.0 + len);
    for &r in &roots[..n] {
        if r >= -slack && r <= len + slack {
            return Some(r.clamp(0.0, len));
        }
    }
    let f_end = qa * len * len + qb * len + qc;
    if f_end <= 0.0 {
        return Some(len);
    }
    None
}

/// A link proxy: the set of points within `radius` of the segment `a`–`b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn new(a: Vec3, b: Vec3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Spec(format!("capsule radius must be positive, got {radius}")));
        }
        if !(a.iter().chain(b.iter()).all(|v| v.is_finite())) {
            return Err(Error::Spec("capsule endpoints must be finite".into()));
        }
        Ok(Self { a, b, radius })
    }

    /// Distance from `p` to the capsule axis segment.
    pub fn axis_distance(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.a + s * ab)).norm()
    }
}

/// Smallest non-negative ray parameter on the capsule surface (cylinder body plus the two
/// end spheres), limited to `t_max`.
pub fn ray_capsule(origin: &Vec3, direction: &Vec3, capsule: &Capsule, t_max: f64) -> Result<Option<f64>> {
    check_unit(direction)?;
    Ok(ray_capsule_unchecked(origin, direction, capsule, t_max))
}

pub(crate) fn ray_capsule_unchecked(o: &Vec3, d: &Vec3, cap: &Capsule, t_max: f64) -> Option<f64> {
    let r2 = cap.radius * cap.radius;
    let mut best = f64::INFINITY;
    let mut consider = |t: f64| {
        if t >= 0.0 && t < best {
            best = t;
        }
    };

    let ab = cap.b - cap.a;
    let len2 = ab.norm_squared();
    let oa = o - cap.a;
    if len2 > 0.0 {
        let d_par = d.dot(&ab) / len2;
        let o_par = oa.dot(&ab) / len2;
        let d_perp = d - d_par * ab;
        let o_perp = oa - o_par * ab;
        let a = d_perp.norm_squared();
        if a > 1e-14 {
            let (roots, n) = quadratic_roots(a, 2.0 * d_perp.dot(&o_perp), o_perp.norm_squared() - r2);
            for &t in &roots[..n] {
                let s = o_par + t * d_par;
                if (0.0..=1.0).contains(&s) {
                    consider(t);
                }
            }
        }
    }
    // end caps only count on their outer hemispheres
    for (centre, outer) in [(cap.a, -1.0), (cap.b, 1.0)] {
        let oc = o - centre;
        let (roots, n) = quadratic_roots(1.0, 2.0 * oc.dot(d), oc.norm_squared() - r2);
        for &t in &roots[..n] {
            if len2 == 0.0 || outer * (oc + t * d).dot(&ab) >= 0.0 {
                consider(t);
            }
        }
    }
    (best <= t_max).then_some(best)
}
