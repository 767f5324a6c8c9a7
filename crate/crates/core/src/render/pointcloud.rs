//! Foot-frame terrain point samples feeding the foothold buffer.

use nalgebra::{Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use super::ray::{ray_heightfield_unchecked, Vec3};
use super::{CameraModel, DepthImage};
use crate::error::{Error, Result};
use crate::terrain::Heightfield;

/// Position and heading of a foot. The foot frame has its origin at `position`, x along
/// the heading, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootPose {
    pub position: Vec3,
    pub yaw: f64,
}

impl FootPose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self { position, yaw }
    }

    fn rot(&self) -> Rotation3<f64> {
        Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn to_local(&self, world: &Vec3) -> Vec3 {
        self.rot().inverse() * (world - self.position)
    }

    pub fn to_world(&self, local: &Vec3) -> Vec3 {
        self.rot() * local + self.position
    }
}

/// Regular grid of sample locations in front of the foot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointCloudSampler {
    pub forward_min: f64,
    pub forward_max: f64,
    pub lateral_half_width: f64,
    pub spacing: f64,
}

impl Default for PointCloudSampler {
    fn default() -> Self {
        Self { forward_min: 0.0, forward_max: 0.9, lateral_half_width: 0.05, spacing: 0.02 }
    }
}

impl PointCloudSampler {
    fn counts(&self) -> Result<(usize, usize)> {
        if !(self.spacing > 0.0) || self.forward_max < self.forward_min || self.lateral_half_width < 0.0 {
            return Err(Error::Spec(format!("invalid point-cloud sampler {self:?}")));
        }
        let nf = ((self.forward_max - self.forward_min) / self.spacing).round() as usize + 1;
        let nl = (2.0 * self.lateral_half_width / self.spacing).round() as usize + 1;
        Ok((nf, nl))
    }

    /// Foot-frame `(x, y)` sample locations, forward-major.
    pub fn locations(&self) -> Result<Vec<(f64, f64)>> {
        let (nf, nl) = self.counts()?;
        let mut out = Vec::with_capacity(nf * nl);
        for i in 0..nf {
            let x = self.forward_min + i as f64 * self.spacing;
            for j in 0..nl {
                out.push((x, -self.lateral_half_width + j as f64 * self.spacing));
            }
        }
        Ok(out)
    }
}

/// Sample the terrain surface in the forward sector of `foot` and express the points in
/// the foot frame.
///
/// With `viewpoint` set, samples hidden from that point by the terrain are dropped.
pub fn foot_pointcloud(
    hf: &Heightfield,
    foot: &FootPose,
    sampler: &PointCloudSampler,
    viewpoint: Option<&Vec3>,
) -> Result<Vec<Vec3>> {
    let rot = foot.rot();
    let mut out = Vec::new();
    for (lx, ly) in sampler.locations()? {
        let w = rot * Vec3::new(lx, ly, 0.0) + foot.position;
        let z = hf.sample_height(w.x, w.y)?;
        let world = Vec3::new(w.x, w.y, z);
        if let Some(eye) = viewpoint {
            let to = world - eye;
            let dist = to.norm();
            if dist > 0.0 {
                let dir = to / dist;
                if ray_heightfield_unchecked(eye, &dir, hf, dist - 1e-6).is_some() {
                    continue;
                }
            }
        }
        out.push(Vec3::new(lx, ly, z - foot.position.z));
    }
    Ok(out)
}

/// World-frame points for every pixel that hit something within range.
pub fn backproject(cam: &CameraModel, img: &DepthImage) -> Result<Vec<Vec3>> {
    if img.width() != cam.width || img.height() != cam.height {
        return Err(Error::Shape("depth image does not match camera".into()));
    }
    let origin = cam.origin();
    Ok(cam
        .rays()
        .iter()
        .zip(img.raw())
        .filter(|(_, &r)| r < img.d_max())
        .map(|(d, &r)| origin + r * d)
        .collect())
}
