//! Terrain-aware foothold placement.
//!
//! Foot-frame terrain points are buffered during stance, split into overlapping x–y
//! windows, and each window is tested for planarity, levelness and depth. Accepted window
//! means become the candidate set, which is latched at liftoff and scored against the
//! contact point at the following touchdown.

pub mod eigen;

use std::collections::VecDeque;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::FootPose;

pub use eigen::{jacobi, sym_eigen3, sym_eigen3_with_route, EigenRoute, SymEigen3};

pub type Point = Vector3<f64>;

/// Slack applied to window footprint bounds.
pub const FOOTPRINT_EPS: f64 = 1e-9;

/// Plane used for the touchdown distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistancePlane {
    /// forward / vertical
    #[default]
    Xz,
    /// forward / lateral
    Xy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FootholdConfig {
    pub window_x: f64,
    pub window_y: f64,
    pub stride: f64,
    pub gate_time: f64,
    pub roughness_max: f64,
    pub normal_z_min: f64,
    pub recess_min: f64,
    pub tolerance: f64,
    pub buffer_points: usize,
    pub distance_plane: DistancePlane,
}

impl Default for FootholdConfig {
    fn default() -> Self {
        Self {
            window_x: 0.24,
            window_y: 0.10,
            stride: 0.04,
            gate_time: 0.5,
            roughness_max: 0.01,
            normal_z_min: 0.95,
            recess_min: -0.30,
            tolerance: 0.05,
            buffer_points: 512,
            distance_plane: DistancePlane::Xz,
        }
    }
}

impl FootholdConfig {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("window_x", self.window_x),
            ("window_y", self.window_y),
            ("stride", self.stride),
            ("gate_time", self.gate_time),
            ("roughness_max", self.roughness_max),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in lengths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!("foothold {name} must be positive, got {v}")));
            }
        }
        if !(self.normal_z_min > 0.0 && self.normal_z_min < 1.0) {
            return Err(Error::Spec(format!("normal_z_min must lie in (0, 1), got {}", self.normal_z_min)));
        }
        if !self.recess_min.is_finite() {
            return Err(Error::Spec("recess_min must be finite".into()));
        }
        if self.buffer_points == 0 {
            return Err(Error::Spec("buffer_points must be positive".into()));
        }
        Ok(())
    }
}

/// Mean, covariance and ascending eigen-decomposition of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub mean: Point,
    pub covariance: Matrix3<f64>,
    pub eigenvalues: [f64; 3],
    pub eigenvectors: [Vector3<f64>; 3],
    pub roughness: f64,
    pub count: usize,
}

impl WindowStats {
    /// Unit normal estimate (eigenvector of the smallest eigenvalue).
    pub fn normal(&self) -> Vector3<f64> {
        self.eigenvectors[0]
    }
}

/// A window footprint and the points it contains.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub x0: f64,
    pub y0: f64,
    pub points: Vec<Point>,
}

/// Keep points at or beyond the distance covered in `gate_time` at the forward command.
pub fn forward_gate(points: &[Point], forward_cmd: f64, cfg: &FootholdConfig) -> Vec<Point> {
    let gate = cfg.gate_time * forward_cmd.max(0.0);
    if gate == 0.0 {
        return points.to_vec();
    }
    points.iter().filter(|p| p.x >= gate).copied().collect()
}

fn window_count(span: f64, size: f64, stride: f64) -> usize {
    if span <= size {
        1
    } else {
        ((span - size) / stride + 1e-9).floor() as usize + 1
    }
}

/// Tile the x–y extent of `points` with overlapping windows anchored at the minimum
/// corner. Windows are ordered x-major; empty footprints are omitted.
pub fn partition_windows(points: &[Point], cfg: &FootholdConfig) -> Vec<Window> {
    if points.is_empty() {
        return Vec::new();
    }
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x_lo = x_lo.min(p.x);
        x_hi = x_hi.max(p.x);
        y_lo = y_lo.min(p.y);
        y_hi = y_hi.max(p.y);
    }
    let nx = window_count(x_hi - x_lo, cfg.window_x, cfg.stride);
    let ny = window_count(y_hi - y_lo, cfg.window_y, cfg.stride);
    let mut out = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x0 = x_lo + i as f64 * cfg.stride;
        for j in 0..ny {
            let y0 = y_lo + j as f64 * cfg.stride;
            let members: Vec<Point> =
                points.iter().filter(|p| in_footprint(p, x0, y0, cfg)).copied().collect();
            if !members.is_empty() {
                out.push(Window { x0, y0, points: members });
            }
        }
    }
    out
}

/// Closed footprint test with [`FOOTPRINT_EPS`] slack.
pub fn in_footprint(p: &Point, x0: f64, y0: f64, cfg: &FootholdConfig) -> bool {
    p.x >= x0 - FOOTPRINT_EPS
        && p.x <= x0 + cfg.window_x + FOOTPRINT_EPS
        && p.y >= y0 - FOOTPRINT_EPS
        && p.y <= y0 + cfg.window_y + FOOTPRINT_EPS
}

/// Sample mean and covariance (divisor `max(n − 1, 1)`) with its eigen-decomposition.
pub fn window_stats(points: &[Point]) -> Result<WindowStats> {
    if points.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = points.len();
    let mut mean = points.iter().fold(Point::zeros(), |acc, p| acc + p) / n as f64;
    mean += points.iter().fold(Point::zeros(), |acc, p| acc + (p - mean)) / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= (n.max(2) - 1) as f64;
    let eig = sym_eigen3(&cov);
    Ok(WindowStats {
        mean,
        covariance: cov,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        roughness: eig.values[0].max(0.0).sqrt(),
        count: n,
    })
}

/// Planar, level and not recessed.
pub fn accept_window(stats: &WindowStats, cfg: &FootholdConfig) -> bool {
    stats.roughness < cfg.roughness_max
        && stats.eigenvectors[0].z.abs() > cfg.normal_z_min
        && stats.mean.z > cfg.recess_min
}

/// Full pipeline: gate, partition, analyse, accept. Returns accepted window means.
pub fn extract_candidates(points: &[Point], forward_cmd: f64, cfg: &FootholdConfig) -> Vec<Point> {
    let gated = forward_gate(points, forward_cmd, cfg);
    partition_windows(&gated, cfg)
        .iter()
        .filter_map(|w| window_stats(&w.points).ok())
        .filter(|s| accept_window(s, cfg))
        .map(|s| s.mean)
        .collect()
}

/// Distance between two points in the configured plane.
pub fn plane_distance(a: &Point, b: &Point, plane: DistancePlane) -> f64 {
    let dx = a.x - b.x;
    let other = match plane {
        DistancePlane::Xz => a.z - b.z,
        DistancePlane::Xy => a.y - b.y,
    };
    dx.hypot(other)
}

/// Nearest candidate index and its distance, or `None` for an empty set.
pub fn nearest_candidate(candidates: &[Point], contact: &Point, plane: DistancePlane) -> Option<(usize, f64)> {
    candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, plane_distance(c, contact, plane)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// `exp(−d / tolerance)` against the nearest candidate; 0 when there are none.
pub fn placement_reward(candidates: &[Point], contact: &Point, cfg: &FootholdConfig) -> f64 {
    match nearest_candidate(candidates, contact, cfg.distance_plane) {
        Some((_, d)) => (-d / cfg.tolerance).exp(),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Stance,
    Swing,
}

/// Outcome of a touchdown event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Touchdown {
    pub reward: f64,
    pub distance: Option<f64>,
    pub nearest: Option<usize>,
    /// contact expressed in the liftoff foot frame
    pub contact: Point,
}

/// Per-foot buffer, latched candidates and contact phase.
#[derive(Debug, Clone)]
pub struct FootholdState {
    frames: VecDeque<Vec<Point>>,
    buffered: usize,
    capacity: usize,
    candidates: Vec<Point>,
    phase: Phase,
    liftoff_pose: Option<FootPose>,
    last_liftoff: Option<f64>,
    last_touchdown: Option<f64>,
}

impl FootholdState {
    /// New state in stance with an empty buffer.
    pub fn new(cfg: &FootholdConfig) -> Self {
        Self {
            frames: VecDeque::new(),
            buffered: 0,
            capacity: cfg.buffer_points,
            candidates: Vec::new(),
            phase: Phase::Stance,
            liftoff_pose: None,
            last_liftoff: None,
            last_touchdown: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn candidates(&self) -> &[Point] {
        &self.candidates
    }

    pub fn liftoff_pose(&self) -> Option<&FootPose> {
        self.liftoff_pose.as_ref()
    }

    pub fn last_liftoff(&self) -> Option<f64> {
        self.last_liftoff
    }

    pub fn last_touchdown(&self) -> Option<f64> {
        self.last_touchdown
    }

    pub fn buffer_len(&self) -> usize {
        self.buffered
    }

    pub fn buffer_points(&self) -> impl Iterator<Item = &Point> {
        self.frames.iter().flatten()
    }

    /// Append one frame of samples, evicting whole older frames beyond capacity. A single
    /// frame larger than capacity keeps its last `capacity` points.
    pub fn push_frame(&mut self, points: Vec<Point>) {
        let points = if points.len() > self.capacity {
            points[points.len() - self.capacity..].to_vec()
        } else {
            points
        };
        self.buffered += points.len();
        self.frames.push_back(points);
        while self.buffered > self.capacity {
            let old = self.frames.pop_front().expect("buffer accounting");
            self.buffered -= old.len();
        }
    }

    pub fn clear_buffer(&mut self) {
        self.frames.clear();
        self.buffered = 0;
    }

    /// Stance → swing: rebuild the candidate set from the buffered points.
    pub fn on_liftoff(&mut self, time: f64, pose: FootPose, forward_cmd: f64, cfg: &FootholdConfig) -> Result<&[Point]> {
        if self.phase != Phase::Stance {
            return Err(Error::Phase(format!("liftoff at t={time} while already in swing")));
        }
        let pts: Vec<Point> = self.buffer_points().copied().collect();
        self.candidates = extract_candidates(&pts, forward_cmd, cfg);
        self.phase = Phase::Swing;
        self.liftoff_pose = Some(pose);
        self.last_liftoff = Some(time);
        Ok(&self.candidates)
    }

    /// Swing → stance: score a contact given in world coordinates. The buffer restarts so
    /// that it only ever holds points from the current stance frame.
    pub fn on_touchdown(&mut self, time: f64, contact_world: &Point, cfg: &FootholdConfig) -> Result<Touchdown> {
        if self.phase != Phase::Swing {
            return Err(Error::Phase(format!("touchdown at t={time} while already in stance")));
        }
        let pose = self
            .liftoff_pose
            .ok_or_else(|| Error::State("touchdown without a recorded liftoff pose".into()))?;
        let contact = pose.to_local(contact_world);
        let nearest = nearest_candidate(&self.candidates, &contact, cfg.distance_plane);
        let reward = placement_reward(&self.candidates, &contact, cfg);
        self.phase = Phase::Stance;
        self.last_touchdown = Some(time);
        self.clear_buffer();
        Ok(Touchdown { reward, distance: nearest.map(|n| n.1), nearest: nearest.map(|n| n.0), contact })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(x0: f64, x1: f64, y0: f64, y1: f64, step: f64, z: impl Fn(f64, f64) -> f64) -> Vec<Point> {
        let nx = ((x1 - x0) / step).round() as usize + 1;
        let ny = ((y1 - y0) / step).round() as usize + 1;
        let mut v = Vec::new();
        for i in 0..nx {
            for j in 0..ny {
                let (x, y) = (x0 + i as f64 * step, y0 + j as f64 * step);
                v.push(Point::new(x, y, z(x, y)));
            }
        }
        v
    }

    #[test]
    fn gate_identity_and_threshold() {
        let cfg = FootholdConfig::default();
        let pts = grid(-0.1, 0.9, -0.05, 0.05, 0.02, |_, _| 0.0);
        assert_eq!(forward_gate(&pts, 0.0, &cfg), pts);
        assert_eq!(forward_gate(&pts, -1.0, &cfg), pts);
        let g = forward_gate(&pts, 0.6, &cfg);
        assert!(!g.is_empty() && g.iter().all(|p| p.x >= 0.30));
    }

    #[test]
    fn window_counts() {
        let cfg = FootholdConfig::default();
        let pts = grid(0.0, 0.28, 0.0, 0.0, 0.02, |_, _| 0.0);
        assert_eq!(partition_windows(&pts, &cfg).len(), 2);
        assert!(partition_windows(&[], &cfg).is_empty());
        let narrow = grid(0.0, 0.1, 0.0, 0.0, 0.02, |_, _| 0.0);
        assert_eq!(partition_windows(&narrow, &cfg).len(), 1);
    }

    #[test]
    fn stats_on_plane_and_single_point() {
        let pts = grid(0.0, 0.2, 0.0, 0.1, 0.02, |_, _| 0.1);
        let s = window_stats(&pts).unwrap();
        assert!(s.eigenvalues[0].abs() < 1e-15);
        assert!((s.normal().z.abs() - 1.0).abs() < 1e-12);
        assert_eq!(s.roughness, 0.0);
        assert!((s.mean.z - 0.1).abs() < 1e-15);

        let one = window_stats(&[Point::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(one.covariance, Matrix3::zeros());
        assert_eq!(one.roughness, 0.0);
        assert!(matches!(window_stats(&[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn acceptance_tests() {
        let cfg = FootholdConfig::default();
        let flat = window_stats(&grid(0.0, 0.24, 0.0, 0.1, 0.02, |_, _| 0.0)).unwrap();
        assert!(accept_window(&flat, &cfg));
        let wall: Vec<Point> = grid(0.0, 0.24, 0.0, 0.1, 0.02, |_, _| 0.0)
            .into_iter()
            .map(|p| Point::new(0.3, p.y, p.x))
            .collect();
        let wall = window_stats(&wall).unwrap();
        assert!(wall.normal().z.abs() < 1e-9);
        assert!(!accept_window(&wall, &cfg));
        let pit = window_stats(&grid(0.0, 0.24, 0.0, 0.1, 0.02, |_, _| -1.0)).unwrap();
        assert!(!accept_window(&pit, &cfg));
    }

    #[test]
    fn reward_closed_forms() {
        let cfg = FootholdConfig::default();
        let c = [Point::new(0.3, 0.0, 0.1)];
        assert_eq!(placement_reward(&c, &Point::new(0.3, 0.02, 0.1), &cfg), 1.0);
        let r = placement_reward(&c, &Point::new(0.35, 0.0, 0.1), &cfg);
        assert!((r - (-1f64).exp()).abs() < 1e-12);
        assert_eq!(placement_reward(&[], &Point::zeros(), &cfg), 0.0);
        let xy = FootholdConfig { distance_plane: DistancePlane::Xy, ..cfg };
        assert_eq!(placement_reward(&c, &Point::new(0.3, 0.0, 0.5), &xy), 1.0);
    }

    #[test]
    fn phase_errors_and_latching() {
        let cfg = FootholdConfig::default();
        let mut st = FootholdState::new(&cfg);
        assert!(st.on_touchdown(0.0, &Point::zeros(), &cfg).is_err());
        st.push_frame(grid(0.0, 0.9, -0.05, 0.05, 0.02, |_, _| 0.0));
        let pose = FootPose::new(Point::zeros(), 0.0);
        st.on_liftoff(0.1, pose, 0.4, &cfg).unwrap();
        let latched = st.candidates().to_vec();
        assert!(!latched.is_empty() && latched.iter().all(|c| c.z.abs() < 1e-12));
        assert!(st.on_liftoff(0.2, pose, 0.4, &cfg).is_err());
        st.push_frame(grid(0.0, 0.9, -0.05, 0.05, 0.02, |_, _| 0.3));
        assert_eq!(st.candidates(), &latched[..]);
        let td = st.on_touchdown(0.5, &Point::new(0.4, 0.0, 0.0), &cfg).unwrap();
        assert!(td.reward > 0.9);
        assert_eq!(st.buffer_len(), 0);
        assert_eq!(st.candidates(), &latched[..]);
    }

    #[test]
    fn walls_only_give_no_candidates() {
        let cfg = FootholdConfig::default();
        let wall: Vec<Point> = grid(0.0, 0.9, -0.05, 0.05, 0.02, |_, _| 0.0)
            .into_iter()
            .map(|p| Point::new(0.5, p.y, p.x))
            .collect();
        assert!(extract_candidates(&wall, 0.0, &cfg).is_empty());
    }

    #[test]
    fn buffer_evicts_whole_frames() {
        let cfg = FootholdConfig { buffer_points: 10, ..Default::default() };
        let mut st = FootholdState::new(&cfg);
        st.push_frame(vec![Point::zeros(); 6]);
        st.push_frame(vec![Point::x(); 4]);
        assert_eq!(st.buffer_len(), 10);
        st.push_frame(vec![Point::y(); 3]);
        assert_eq!(st.buffer_len(), 7);
        assert!(st.buffer_points().all(|p| *p != Point::zeros()));
        st.push_frame(vec![Point::z(); 12]);
        assert_eq!(st.buffer_len(), 10);
    }

    fn cloud() -> impl Strategy<Value = Vec<Point>> {
        prop::collection::vec((0.0..1.0f64, -0.2..0.2f64, -0.3..0.3f64), 0..120)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn gate_matches_filter(pts in cloud(), cmd in -1.0..1.5f64) {
            let cfg = FootholdConfig::default();
            let g = forward_gate(&pts, cmd, &cfg);
            let thr = 0.5 * cmd.max(0.0);
            let want: Vec<Point> = pts.iter().filter(|p| cmd <= 0.0 || p.x >= thr).copied().collect();
            prop_assert_eq!(g, want);
        }

        #[test]
        fn membership_matches_containment(pts in cloud()) {
            let cfg = FootholdConfig::default();
            for w in partition_windows(&pts, &cfg) {
                let want: Vec<Point> = pts
                    .iter()
                    .filter(|p| {
                        p.x >= w.x0 - 1e-9 && p.x <= w.x0 + 0.24 + 1e-9 && p.y >= w.y0 - 1e-9 && p.y <= w.y0 + 0.10 + 1e-9
                    })
                    .copied()
                    .collect();
                prop_assert_eq!(&w.points, &want);
            }
        }

        #[test]
        fn stats_eigen_invariants(pts in cloud()) {
            prop_assume!(!pts.is_empty());
            let s = window_stats(&pts).unwrap();
            let l3 = s.eigenvalues[2].abs().max(1.0);
            prop_assert!(s.eigenvalues[0] <= s.eigenvalues[1] && s.eigenvalues[1] <= s.eigenvalues[2]);
            prop_assert!(s.eigenvalues[0] >= -1e-10);
            for j in 0..3 {
                let r = (s.covariance * s.eigenvectors[j] - s.eigenvalues[j] * s.eigenvectors[j]).norm();
                prop_assert!(r <= 1e-8 * l3);
            }
            prop_assert_eq!(s.roughness, s.eigenvalues[0].max(0.0).sqrt());
        }

        #[test]
        fn reward_bounds_and_monotone(cands in cloud(), cx in 0.0..1.0f64, cz in -0.3..0.3f64, extra in 0.001..0.3f64) {
            let cfg = FootholdConfig::default();
            let contact = Point::new(cx, 0.0, cz);
            let r = placement_reward(&cands, &contact, &cfg);
            prop_assert!((0.0..=1.0).contains(&r));
            if let Some((_, d)) = nearest_candidate(&cands, &contact, DistancePlane::Xz) {
                let brute = cands.iter().map(|c| (c.x - cx).hypot(c.z - cz)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(d, brute);
                let single = [Point::new(cx, 0.0, cz)];
                let near = placement_reward(&single, &Point::new(cx + d, 0.0, cz), &cfg);
                let far = placement_reward(&single, &Point::new(cx + d + extra, 0.0, cz), &cfg);
                prop_assert!(far < near);
            }
        }

        #[test]
        fn reward_translation_equivariant(cands in cloud(), cx in 0.0..1.0f64, dx in -0.5..0.5f64, dz in -0.5..0.5f64) {
            let cfg = FootholdConfig::default();
            let contact = Point::new(cx, 0.0, 0.05);
            let shift = Point::new(dx, 0.0, dz);
            let moved: Vec<Point> = cands.iter().map(|c| c + shift).collect();
            let a = placement_reward(&cands, &contact, &cfg);
            let b = placement_reward(&moved, &(contact + shift), &cfg);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
