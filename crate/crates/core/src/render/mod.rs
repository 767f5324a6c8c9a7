//! Depth rendering of heightfield terrain with capsule self-occlusion.

mod pgm;
mod pointcloud;
mod ray;

pub use pgm::{read_pgm16, read_sidecar, write_pgm16, write_sidecar, Sidecar};
pub use pointcloud::{backproject, foot_pointcloud, FootPose, PointCloudSampler};
pub use ray::{ray_capsule, ray_heightfield, Capsule, Vec3};

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::terrain::Heightfield;

/// Camera intrinsics and mounting that do not change between frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraIntrinsics {
    pub width: usize,
    pub height: usize,
    pub vertical_fov_deg: f64,
    /// Downward tilt of the optical axis relative to the mount's horizontal plane.
    pub pitch_down_deg: f64,
    /// Maximum range; pixels without a hit report this value.
    pub d_max: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self { width: 64, height: 48, vertical_fov_deg: 58.0, pitch_down_deg: 50.0, d_max: 2.0 }
    }
}

/// Pinhole depth camera. The mount frame is x-forward, y-left, z-up; the optical axis is
/// the mount x axis pitched down by `pitch_down`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub vertical_fov: f64,
    pub pitch_down: f64,
    pub d_max: f64,
    pub pose: Isometry3<f64>,
}

impl CameraModel {
    pub fn new(intr: &CameraIntrinsics, pose: Isometry3<f64>) -> Result<Self> {
        let cam = Self {
            width: intr.width,
            height: intr.height,
            vertical_fov: intr.vertical_fov_deg.to_radians(),
            pitch_down: intr.pitch_down_deg.to_radians(),
            d_max: intr.d_max,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `position` with heading `yaw` (no roll) and the given intrinsics.
    pub fn at(intr: &CameraIntrinsics, position: Vec3, yaw: f64) -> Result<Self> {
        let pose = Isometry3::from_parts(
            Translation3::from(position),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        );
        Self::new(intr, pose)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Spec("camera resolution must be positive".into()));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return Err(Error::Spec(format!("vertical fov {} outside (0, pi)", self.vertical_fov)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::Spec(format!("d_max must be positive, got {}", self.d_max)));
        }
        Ok(())
    }

    pub fn focal_px(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.vertical_fov).tan()
    }

    pub fn horizontal_fov(&self) -> f64 {
        2.0 * (0.5 * self.width as f64 / self.focal_px()).atan()
    }

    pub fn origin(&self) -> Vec3 {
        self.pose.translation.vector
    }

    /// Optical axis rotation from mount frame to world.
    fn rotation(&self) -> UnitQuaternion<f64> {
        self.pose.rotation * UnitQuaternion::from_rotation_matrix(&Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch_down))
    }

    /// Unit world-frame ray through the centre of pixel `(col, row)`; row 0 is the top.
    pub fn pixel_ray(&self, col: usize, row: usize) -> Vec3 {
        self.ray_with(&self.rotation(), col, row)
    }

    fn ray_with(&self, rot: &UnitQuaternion<f64>, col: usize, row: usize) -> Vec3 {
        let f = self.focal_px();
        let local = Vec3::new(
            f,
            -(col as f64 + 0.5 - 0.5 * self.width as f64),
            -(row as f64 + 0.5 - 0.5 * self.height as f64),
        )
        .normalize();
        rot * local
    }

    pub fn rays(&self) -> Vec<Vec3> {
        let rot = self.rotation();
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (c, r)))
            .map(|(c, r)| self.ray_with(&rot, c, r))
            .collect()
    }
}

/// Robot link proxies that may occlude the camera.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapsuleScene {
    pub capsules: Vec<Capsule>,
}

impl CapsuleScene {
    pub fn new(capsules: Vec<Capsule>) -> Self {
        Self { capsules }
    }

    pub fn empty() -> Self {
        Self::default()
    }
}

/// Row-major depth frame. `raw` is the hit distance along each pixel ray in metres,
/// `normalized` is `raw / d_max - 0.5`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    d_max: f64,
    raw: Vec<f64>,
    normalized: Vec<f64>,
}

impl DepthImage {
    pub fn from_raw(width: usize, height: usize, d_max: f64, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::Shape(format!("{} depth values for {width}x{height}", raw.len())));
        }
        if !(d_max > 0.0) {
            return Err(Error::Spec("d_max must be positive".into()));
        }
        let raw: Vec<f64> = raw.into_iter().map(|r| r.clamp(0.0, d_max)).collect();
        let normalized = raw.iter().map(|r| r / d_max - 0.5).collect();
        Ok(Self { width, height, d_max, raw, normalized })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn raw_at(&self, col: usize, row: usize) -> f64 {
        self.raw[row * self.width + col]
    }
}

/// Depth along a single ray: first hit over terrain and capsules, `d_max` if nothing is
/// hit within range.
pub fn trace(origin: &Vec3, dir: &Vec3, hf: &Heightfield, scene: &CapsuleScene, d_max: f64) -> f64 {
    let mut best = ray::ray_heightfield_unchecked(origin, dir, hf, d_max).unwrap_or(d_max);
    for cap in &scene.capsules {
        if let Some(t) = ray::ray_capsule_unchecked(origin, dir, cap, best) {
            best = best.min(t);
        }
    }
    best.clamp(0.0, d_max)
}

/// Render a depth frame. Rows are distributed over the rayon pool; each pixel is computed
/// independently, so the output does not depend on the worker count.
pub fn render_depth(cam: &CameraModel, hf: &Heightfield, scene: &CapsuleScene) -> Result<DepthImage> {
    cam.validate()?;
    let rays = cam.rays();
    let origin = cam.origin();
    let mut raw = vec![0.0; cam.width * cam.height];
    raw.par_chunks_mut(cam.width).enumerate().for_each(|(row, out)| {
        for (col, px) in out.iter_mut().enumerate() {
            *px = trace(&origin, &rays[row * cam.width + col], hf, scene, cam.d_max);
        }
    });
    DepthImage::from_raw(cam.width, cam.height, cam.d_max, raw)
}

/// Same as [`render_depth`] without touching the thread pool.
pub fn render_depth_serial(cam: &CameraModel, hf: &Heightfield, scene: &CapsuleScene) -> Result<DepthImage> {
    cam.validate()?;
    let origin = cam.origin();
    let raw = cam.rays().iter().map(|d| trace(&origin, d, hf, scene, cam.d_max)).collect();
    DepthImage::from_raw(cam.width, cam.height, cam.d_max, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate, TerrainSpec};

    fn down_camera(h: f64) -> CameraModel {
        let intr = CameraIntrinsics { pitch_down_deg: 90.0, ..Default::default() };
        CameraModel::at(&intr, Vec3::new(0.0, 0.0, h), 0.0).unwrap()
    }

    #[test]
    fn nadir_camera_over_flat_ground() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        let img = render_depth(&down_camera(1.0), &hf, &CapsuleScene::empty()).unwrap();
        let centre = img.raw_at(32, 24);
        assert!((centre - 1.0).abs() < 2e-3, "{centre}");
        let off = cam_offset_check(&down_camera(1.0));
        assert!((centre - off).abs() < 1e-12);
    }

    // exact distance for the pixel nearest the optical axis
    fn cam_offset_check(cam: &CameraModel) -> f64 {
        let d = cam.pixel_ray(32, 24);
        1.0 / -d.z
    }

    #[test]
    fn aspect_derived_horizontal_fov() {
        let cam = down_camera(1.0);
        let expect = 2.0 * ((64.0 / 48.0) * (29f64.to_radians()).tan()).atan();
        assert!((cam.horizontal_fov() - expect).abs() < 1e-12);
    }

    #[test]
    fn normalisation_endpoints() {
        let img = DepthImage::from_raw(2, 1, 2.0, vec![2.0, 0.0]).unwrap();
        assert_eq!(img.normalized(), &[0.5, -0.5]);
        let clamped = DepthImage::from_raw(1, 1, 2.0, vec![7.0]).unwrap();
        assert_eq!(clamped.raw(), &[2.0]);
    }

    #[test]
    fn capsule_never_increases_depth() {
        let hf = generate(&TerrainSpec::stairs_up(0.15, 0.3)).unwrap();
        let cam = CameraModel::at(&CameraIntrinsics::default(), Vec3::new(-0.5, 0.0, 0.8), 0.0).unwrap();
        let bare = render_depth(&cam, &hf, &CapsuleScene::empty()).unwrap();
        let scene = CapsuleScene::new(vec![Capsule::new(Vec3::new(-0.2, -0.3, 0.3), Vec3::new(-0.2, 0.3, 0.3), 0.05).unwrap()]);
        let occ = render_depth(&cam, &hf, &scene).unwrap();
        let mut changed = 0;
        for (a, b) in bare.raw().iter().zip(occ.raw()) {
            assert!(b <= a);
            if b < a {
                changed += 1;
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn serial_and_parallel_agree_bitwise() {
        let hf = generate(&TerrainSpec::platform(0.3)).unwrap();
        let cam = CameraModel::at(&CameraIntrinsics::default(), Vec3::new(-0.6, 0.1, 0.9), 0.1).unwrap();
        let a = render_depth(&cam, &hf, &CapsuleScene::empty()).unwrap();
        let b = render_depth_serial(&cam, &hf, &CapsuleScene::empty()).unwrap();
        assert!(a.raw().iter().zip(b.raw()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn invalid_camera() {
        let intr = CameraIntrinsics { vertical_fov_deg: 200.0, ..Default::default() };
        assert!(CameraModel::at(&intr, Vec3::zeros(), 0.0).is_err());
        let intr = CameraIntrinsics { width: 0, ..Default::default() };
        assert!(CameraModel::at(&intr, Vec3::zeros(), 0.0).is_err());
    }
}
