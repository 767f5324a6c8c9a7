//! Kinematic rollouts: foothold latching, synthesized snapshots and per-step rewards.

use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::foothold::{placement_reward, FootholdConfig, FootholdState, Point};
use crate::policy::{self, ContactLabel, GateSample, PolicyParams, PolicyState, Real};
use crate::render::{foot_pointcloud, render_depth, CameraIntrinsics, CameraModel, Capsule, CapsuleScene, FootPose,
    PointCloudSampler, Vec3};
use crate::rewards::{evaluate_all, FootSnapshot, RewardBreakdown, RewardParams, RobotSnapshot};
use crate::terrain::Heightfield;

use super::events::{contact_flags, events_from_flags, ContactEvent, EventKind};
use super::gait::{synthesize_gait, GaitScript, FEET};
use super::{Trajectory, CONTROL_HZ, DEPTH_HZ};

const JOINTS_PER_LEG: usize = 6;
/// Window over which a single-support phase is remembered (s).
const SINGLE_CONTACT_WINDOW: f64 = 0.2;

/// Mass and joint description of the scripted robot. Joints are ordered per leg as hip
/// roll, hip yaw, hip pitch, knee, ankle pitch, ankle roll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotModel {
    pub mass: f64,
    pub gravity: f64,
    pub nominal_pose: Vec<f64>,
    pub joint_pos_min: Vec<f64>,
    pub joint_pos_max: Vec<f64>,
    pub joint_vel_max: Vec<f64>,
    /// Joint excursion per metre of foot lift: hip pitch, knee, ankle pitch.
    pub lift_gains: [f64; 3],
}

impl Default for RobotModel {
    fn default() -> Self {
        let leg = [0.0, 0.0, -0.25, 0.5, -0.25, 0.0];
        let nominal: Vec<f64> = leg.iter().chain(&leg).copied().collect();
        Self {
            mass: 35.0,
            gravity: 9.81,
            joint_pos_min: nominal.iter().map(|q| q - 1.2).collect(),
            joint_pos_max: nominal.iter().map(|q| q + 1.2).collect(),
            joint_vel_max: vec![15.0; nominal.len()],
            nominal_pose: nominal,
            lift_gains: [-1.5, 3.0, -1.5],
        }
    }
}

impl RobotModel {
    pub fn joints(&self) -> usize {
        self.nominal_pose.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        if n != JOINTS_PER_LEG * FEET {
            return Err(Error::Shape(format!("robot has {n} joints, expected {}", JOINTS_PER_LEG * FEET)));
        }
        for (name, len) in [
            ("joint_pos_min", self.joint_pos_min.len()),
            ("joint_pos_max", self.joint_pos_max.len()),
            ("joint_vel_max", self.joint_vel_max.len()),
        ] {
            if len != n {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {n}")));
            }
        }
        if !(self.mass > 0.0) || !(self.gravity > 0.0) {
            return Err(Error::Spec("mass and gravity must be positive".into()));
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    fn joint_positions(&self, lifts: &[f64]) -> Vec<f64> {
        let mut q = self.nominal_pose.clone();
        for (leg, &lift) in lifts.iter().enumerate() {
            for (i, g) in self.lift_gains.iter().enumerate() {
                q[leg * JOINTS_PER_LEG + 2 + i] += g * lift;
            }
        }
        q
    }
}

/// How contact is decided for event detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContactRule {
    /// Terrain clearance within tolerance while descending.
    Geometric,
    /// Synthesized normal force at or above `threshold` (N).
    Force { threshold: f64 },
}

/// Stair geometry used to express touchdowns relative to the tread centre. Without it,
/// touchdowns are measured against their nominal targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreadLayout {
    /// Along-heading coordinate of the first riser.
    pub start: f64,
    pub depth: f64,
}

impl TreadLayout {
    pub fn centre_offset(&self, along: f64) -> f64 {
        let u = along - self.start;
        u - self.depth * ((u / self.depth).floor() + 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub foothold: FootholdConfig,
    pub rewards: RewardParams,
    pub sampler: PointCloudSampler,
    pub robot: RobotModel,
    pub contact: ContactRule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub treads: Option<TreadLayout>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            foothold: FootholdConfig::default(),
            rewards: RewardParams::default(),
            sampler: PointCloudSampler::default(),
            robot: RobotModel::default(),
            contact: ContactRule::Geometric,
            treads: None,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        self.foothold.validate()?;
        self.robot.validate()?;
        self.rewards.validate(self.robot.joints())?;
        if let ContactRule::Force { threshold } = self.contact {
            if !(threshold > 0.0) {
                return Err(Error::Spec(format!("force threshold must be positive, got {threshold}")));
            }
        }
        if let Some(t) = self.treads {
            if !(t.depth > 0.0) || !t.start.is_finite() {
                return Err(Error::Spec(format!("invalid tread layout {t:?}")));
            }
        }
        Ok(())
    }
}

/// Whether the depth stream refreshes at control step `k`.
pub fn depth_tick(k: usize) -> bool {
    k == 0 || (k as u64 * DEPTH_HZ as u64) / CONTROL_HZ as u64 != ((k as u64 - 1) * DEPTH_HZ as u64) / CONTROL_HZ as u64
}

/// A scored touchdown with everything needed to recompute its reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouchdownRecord {
    pub step: usize,
    pub time: f64,
    pub foot: usize,
    pub contact_world: Vec3,
    pub liftoff_pose: FootPose,
    /// Candidates latched at liftoff, in the liftoff foot frame.
    pub candidates: Vec<Point>,
    pub contact_local: Vec3,
    pub reward: f64,
    pub distance: Option<f64>,
    pub nearest: Option<usize>,
    pub nominal: Vec3,
    /// Offset from the tread centre, or from the nominal target, along the heading.
    pub tread_coord: f64,
}

impl TouchdownRecord {
    /// Reward recomputed from the logged candidates and contact.
    pub fn recompute(&self, cfg: &FootholdConfig) -> f64 {
        placement_reward(&self.candidates, &self.liftoff_pose.to_local(&self.contact_world), cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub base: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub contacts: Vec<bool>,
    pub snapshot: RobotSnapshot,
    pub foothold_reward: f64,
    pub rewards: RewardBreakdown,
}

/// Output of the foothold stage alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FootholdPass {
    pub contacts: Vec<Vec<bool>>,
    pub events: Vec<ContactEvent>,
    pub touchdowns: Vec<TouchdownRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RolloutLog {
    pub steps: Vec<StepRecord>,
    pub events: Vec<ContactEvent>,
    pub touchdowns: Vec<TouchdownRecord>,
}

/// One line of a rollout log file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogRecord {
    Event(ContactEvent),
    Touchdown(TouchdownRecord),
    Step(Box<StepRecord>),
}

impl RolloutLog {
    /// Records in time order: a step's events, then its touchdowns, then the step itself.
    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::with_capacity(self.steps.len() + self.events.len() + self.touchdowns.len());
        let (mut e, mut t) = (0, 0);
        for s in &self.steps {
            while e < self.events.len() && self.events[e].step <= s.step {
                out.push(LogRecord::Event(self.events[e].clone()));
                e += 1;
            }
            while t < self.touchdowns.len() && self.touchdowns[t].step <= s.step {
                out.push(LogRecord::Touchdown(self.touchdowns[t].clone()));
                t += 1;
            }
            out.push(LogRecord::Step(Box::new(s.clone())));
        }
        out.extend(self.events[e..].iter().cloned().map(LogRecord::Event));
        out.extend(self.touchdowns[t..].iter().cloned().map(LogRecord::Touchdown));
        out
    }

    pub fn from_records(records: Vec<LogRecord>) -> Self {
        let mut log = Self::default();
        for r in records {
            match r {
                LogRecord::Event(e) => log.events.push(e),
                LogRecord::Touchdown(t) => log.touchdowns.push(t),
                LogRecord::Step(s) => log.steps.push(*s),
            }
        }
        log
    }

    pub fn to_lines(&self) -> Result<String> {
        super::write_lines(&self.records())
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        Ok(Self::from_records(super::read_lines(text)?))
    }
}

fn apply_rule(flags: Vec<Vec<bool>>, rule: ContactRule, weight: f64) -> Vec<Vec<bool>> {
    match rule {
        ContactRule::Geometric => flags,
        ContactRule::Force { threshold } => flags
            .into_iter()
            .map(|row| {
                let fz = normal_forces(&row, weight);
                fz.iter().map(|&f| f >= threshold).collect()
            })
            .collect(),
    }
}

/// Body weight split evenly over the feet in contact.
pub fn normal_forces(contacts: &[bool], weight: f64) -> Vec<f64> {
    let n = contacts.iter().filter(|&&c| c).count();
    contacts.iter().map(|&c| if c { weight / n as f64 } else { 0.0 }).collect()
}

fn check_trajectory(traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    if let Some(s) = traj.samples.iter().find(|s| s.feet.len() != FEET) {
        return Err(Error::Shape(format!("step {} has {} feet, expected {FEET}", s.step, s.feet.len())));
    }
    Ok(())
}

fn heading(yaw: f64) -> Vec3 {
    Vec3::new(yaw.cos(), yaw.sin(), 0.0)
}

/// Latch candidates at every liftoff from stance point clouds and score every touchdown.
/// Feet that start in the air are scored from their second touchdown on.
pub fn foothold_pass(traj: &Trajectory, hf: &Heightfield, cfg: &RolloutConfig) -> Result<FootholdPass> {
    cfg.validate()?;
    check_trajectory(traj)?;
    let contacts = apply_rule(contact_flags(traj, hf)?, cfg.contact, cfg.robot.weight());
    let events = events_from_flags(traj, &contacts);
    let mut states: Vec<FootholdState> = (0..FEET).map(|_| FootholdState::new(&cfg.foothold)).collect();
    let mut armed: Vec<bool> = contacts.first().cloned().unwrap_or_default();
    let mut touchdowns = Vec::new();
    let mut next = 0;
    for (k, s) in traj.samples.iter().enumerate() {
        while next < events.len() && events[next].step == k {
            let e = &events[next];
            next += 1;
            if !armed[e.foot] {
                armed[e.foot] = e.kind == EventKind::Touchdown;
                continue;
            }
            let state = &mut states[e.foot];
            match e.kind {
                EventKind::Liftoff => {
                    let prev = &traj.samples[k - 1];
                    state.on_liftoff(e.time, FootPose::new(e.position, prev.yaw), s.forward_cmd, &cfg.foothold)?;
                }
                EventKind::Touchdown => {
                    let liftoff_pose = *state
                        .liftoff_pose()
                        .ok_or_else(|| Error::State("touchdown without liftoff pose".into()))?;
                    let candidates = state.candidates().to_vec();
                    let td = state.on_touchdown(e.time, &e.position, &cfg.foothold)?;
                    let nominal = s.targets.get(e.foot).copied().unwrap_or(e.position);
                    let h = heading(s.yaw);
                    let tread_coord = match cfg.treads {
                        Some(layout) => layout.centre_offset(e.position.dot(&h)),
                        None => (e.position - nominal).dot(&h),
                    };
                    touchdowns.push(TouchdownRecord {
                        step: k,
                        time: e.time,
                        foot: e.foot,
                        contact_world: e.position,
                        liftoff_pose,
                        candidates,
                        contact_local: td.contact,
                        reward: td.reward,
                        distance: td.distance,
                        nearest: td.nearest,
                        nominal,
                        tread_coord,
                    });
                }
            }
        }
        if depth_tick(k) {
            for f in 0..FEET {
                if contacts[k][f] && armed[f] {
                    let pose = FootPose::new(s.feet[f], s.yaw);
                    states[f].push_frame(foot_pointcloud(hf, &pose, &cfg.sampler, None)?);
                }
            }
        }
    }
    Ok(FootholdPass { contacts, events, touchdowns })
}

fn base_rotation(roll: f64, pitch: f64, yaw: f64) -> Rotation3<f64> {
    Rotation3::from_euler_angles(roll, pitch, yaw)
}

fn arr(v: Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Reconstruct a robot snapshot for every step and evaluate the reward suite.
fn step_records(traj: &Trajectory, pass: &FootholdPass, cfg: &RolloutConfig) -> Result<Vec<StepRecord>> {
    let robot = &cfg.robot;
    let dt = traj.dt();
    let window = (SINGLE_CONTACT_WINDOW / dt).round().max(1.0) as usize;
    let zeros = vec![0.0; robot.joints()];
    let (mut prev_q, mut prev_action, mut prev_prev_action) = (None::<Vec<f64>>, zeros.clone(), zeros.clone());
    let mut air_since: Vec<Option<f64>> = vec![None; FEET];
    let mut prev_vel = vec![Vec3::zeros(); FEET];
    let mut rewards_at = vec![Vec::new(); traj.samples.len()];
    for td in &pass.touchdowns {
        rewards_at[td.step].push(td.reward);
    }
    let mut out = Vec::with_capacity(traj.samples.len());
    for (k, s) in traj.samples.iter().enumerate() {
        let contacts = &pass.contacts[k];
        let prev = if k > 0 { &traj.samples[k - 1] } else { s };
        let rot = base_rotation(s.roll, s.pitch, s.yaw);
        let to_body = rot.inverse();
        let lin_vel = to_body * ((s.base - prev.base) / dt);
        let ang_vel = Vec3::new(s.roll - prev.roll, s.pitch - prev.pitch, s.yaw - prev.yaw) / dt;
        let gravity = to_body * Vec3::new(0.0, 0.0, -1.0);

        let forces = normal_forces(contacts, robot.weight());
        let mut feet = Vec::with_capacity(FEET);
        for f in 0..FEET {
            let vel = if k > 0 { (s.feet[f] - prev.feet[f]) / dt } else { Vec3::zeros() };
            let accel = if k > 0 { (vel.z - prev_vel[f].z) / dt } else { 0.0 };
            prev_vel[f] = vel;
            let landed = k > 0 && contacts[f] && !pass.contacts[k - 1][f];
            let lifted = k > 0 && !contacts[f] && pass.contacts[k - 1][f];
            if lifted {
                air_since[f] = Some(prev.time);
            }
            let air_time = match (contacts[f], air_since[f]) {
                (false, Some(t0)) => s.time - t0,
                (true, Some(t0)) if landed => s.time - t0,
                _ => 0.0,
            };
            if contacts[f] {
                air_since[f] = None;
            }
            feet.push(FootSnapshot {
                force: [0.0, 0.0, forces[f]],
                velocity: arr(vel),
                height: s.feet[f].z,
                air_time,
                first_contact: landed,
                vertical_accel: accel,
            });
        }

        let lifts: Vec<f64> = (0..FEET).map(|f| s.feet[f].z - s.support.get(f).copied().unwrap_or(s.feet[f].z)).collect();
        let q = robot.joint_positions(&lifts);
        let qd = match &prev_q {
            Some(p) => q.iter().zip(p).map(|(a, b)| (a - b) / dt).collect(),
            None => zeros.clone(),
        };
        let action: Vec<f64> = q.iter().zip(&robot.nominal_pose).map(|(a, b)| a - b).collect();
        let lateral = to_body * (s.feet[0] - s.feet[1]);
        let lo = (k + 1).saturating_sub(window);
        let single_contact_recent =
            pass.contacts[lo..=k].iter().any(|row| row.iter().filter(|&&c| c).count() == 1);

        let snapshot = RobotSnapshot {
            ang_vel: arr(ang_vel),
            lin_vel: arr(lin_vel),
            projected_gravity: arr(gravity),
            command: [s.forward_cmd, 0.0, 0.0],
            joint_pos: q.clone(),
            joint_vel: qd,
            nominal_pose: robot.nominal_pose.clone(),
            action: action.clone(),
            prev_action: prev_action.clone(),
            prev_prev_action: prev_prev_action.clone(),
            joint_pos_min: robot.joint_pos_min.clone(),
            joint_pos_max: robot.joint_pos_max.clone(),
            joint_vel_max: robot.joint_vel_max.clone(),
            feet,
            base_height: s.base.z,
            feet_lateral_distance: lateral.y.abs(),
            single_contact_recent,
        };
        let scored = &rewards_at[k];
        let foothold_reward =
            if scored.is_empty() { 0.0 } else { scored.iter().sum::<f64>() / scored.len() as f64 };
        let rewards = evaluate_all(&snapshot, foothold_reward, &cfg.rewards)?;
        out.push(StepRecord {
            step: s.step,
            time: s.time,
            base: s.base,
            roll: s.roll,
            pitch: s.pitch,
            yaw: s.yaw,
            contacts: contacts.clone(),
            snapshot,
            foothold_reward,
            rewards,
        });
        prev_prev_action = std::mem::replace(&mut prev_action, action);
        prev_q = Some(q);
    }
    Ok(out)
}

/// Evaluate a sampled trajectory end to end.
pub fn rollout_trajectory(traj: &Trajectory, hf: &Heightfield, cfg: &RolloutConfig) -> Result<RolloutLog> {
    let pass = foothold_pass(traj, hf, cfg)?;
    let steps = step_records(traj, &pass, cfg)?;
    Ok(RolloutLog { steps, events: pass.events, touchdowns: pass.touchdowns })
}

/// Synthesize a gait for `duration` seconds and evaluate it.
pub fn run_rollout(script: &GaitScript, hf: &Heightfield, duration: f64, cfg: &RolloutConfig) -> Result<RolloutLog> {
    cfg.validate()?;
    let traj = synthesize_gait(script, hf, duration)?;
    rollout_trajectory(&traj, hf, cfg)
}

/// Head camera placement relative to the base, in the heading frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisionConfig {
    pub camera: CameraIntrinsics,
    pub mount_forward: f64,
    pub mount_height: f64,
    /// Radius of the leg capsules seen by the camera; zero disables them.
    pub leg_radius: f64,
    pub hip_width: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self { camera: CameraIntrinsics::default(), mount_forward: 0.10, mount_height: 0.40, leg_radius: 0.04, hip_width: 0.18 }
    }
}

fn leg_scene(s: &super::TrajectorySample, vision: &VisionConfig) -> Result<CapsuleScene> {
    if vision.leg_radius == 0.0 {
        return Ok(CapsuleScene::empty());
    }
    let left = Vec3::new(-s.yaw.sin(), s.yaw.cos(), 0.0);
    let mut legs = Vec::with_capacity(FEET);
    for (f, foot) in s.feet.iter().enumerate() {
        let side = if f == 0 { 0.5 } else { -0.5 };
        let hip = s.base + left * (side * vision.hip_width) - Vec3::new(0.0, 0.0, 0.05);
        let ankle = foot + Vec3::new(0.0, 0.0, vision.leg_radius + 0.01);
        legs.push(Capsule::new(hip, ankle, vision.leg_radius)?);
    }
    Ok(CapsuleScene::new(legs))
}

/// Render the head camera for one trajectory sample.
pub fn head_depth(s: &super::TrajectorySample, hf: &Heightfield, vision: &VisionConfig) -> Result<Vec<f64>> {
    let eye = s.base + heading(s.yaw) * vision.mount_forward + Vec3::new(0.0, 0.0, vision.mount_height);
    let cam = CameraModel::at(&vision.camera, eye, s.yaw)?;
    Ok(render_depth(&cam, hf, &leg_scene(s, vision)?)?.normalized().to_vec())
}

/// Drive the policy along a logged rollout, refreshing depth at the depth rate, and
/// collect the highway gate with its terrain, contact and posture labels.
pub fn gate_samples<R: Real>(
    params: &PolicyParams<R>,
    traj: &Trajectory,
    log: &RolloutLog,
    hf: &Heightfield,
    vision: &VisionConfig,
    terrain: &str,
) -> Result<Vec<GateSample>> {
    if log.steps.len() != traj.samples.len() {
        return Err(Error::Shape(format!("log has {} steps, trajectory {}", log.steps.len(), traj.samples.len())));
    }
    let dims = &params.dims;
    if vision.camera.width != dims.depth_width || vision.camera.height != dims.depth_height {
        return Err(Error::Shape("camera resolution differs from the policy depth input".into()));
    }
    let to_r = |v: &[f64]| v.iter().map(|&x| R::from(x).expect("finite")).collect::<Vec<R>>();
    let mut state = PolicyState::<R>::zeros(dims);
    let mut depth: Vec<R> = Vec::new();
    let mut out = Vec::with_capacity(log.steps.len());
    for (k, (s, rec)) in traj.samples.iter().zip(&log.steps).enumerate() {
        if depth_tick(k) {
            depth = to_r(&head_depth(s, hf, vision)?);
        }
        let snap = &rec.snapshot;
        let prev: Vec<f64> = state.prev_action.iter().map(|v| v.to_f64().expect("finite")).collect();
        let obs = policy::proprio_observation(
            &snap.ang_vel,
            &snap.projected_gravity,
            &snap.command,
            &snap.joint_pos,
            &snap.nominal_pose,
            &snap.joint_vel,
            &prev,
        )?;
        let out_step = policy::forward_with(params, &to_r(&obs), &depth, &state, &to_r(&snap.nominal_pose), false)?;
        let contact = if rec.contacts.iter().any(|&c| c) { ContactLabel::Support } else { ContactLabel::Flight };
        out.push(GateSample {
            terrain: terrain.to_owned(),
            contact,
            roll: rec.roll,
            pitch: rec.pitch,
            gate: out_step.trace.gate.iter().map(|v| v.to_f64().expect("finite")).collect(),
        });
        state = out_step.state;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate, TerrainSpec};

    #[test]
    fn depth_rate_is_twenty_hertz() {
        let ticks: Vec<usize> = (0..10).filter(|&k| depth_tick(k)).collect();
        assert_eq!(ticks, vec![0, 3, 5, 8]);
        assert_eq!((0..50).filter(|&k| depth_tick(k)).count(), 20);
    }

    #[test]
    fn flat_clean_gait_scores_high() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        let log = run_rollout(&GaitScript::default(), &hf, 5.0, &RolloutConfig::default()).unwrap();
        assert!(log.touchdowns.len() >= 4);
        for td in &log.touchdowns {
            assert!(td.reward > 0.9, "{td:?}");
        }
    }

    #[test]
    fn zero_length_rollout_is_empty() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        let log = run_rollout(&GaitScript::default(), &hf, 0.0, &RolloutConfig::default()).unwrap();
        assert_eq!(log, RolloutLog::default());
        assert_eq!(log.to_lines().unwrap(), "");
    }

    #[test]
    fn log_lines_round_trip_and_close() {
        let hf = generate(&TerrainSpec::stairs_up(0.15, 0.30)).unwrap();
        let cfg = RolloutConfig::default();
        let log = run_rollout(&GaitScript::default(), &hf, 4.0, &cfg).unwrap();
        let back = RolloutLog::from_lines(&log.to_lines().unwrap()).unwrap();
        assert_eq!(back, log);
        for td in &back.touchdowns {
            assert_eq!(td.recompute(&cfg.foothold).to_bits(), td.reward.to_bits());
        }
    }

    #[test]
    fn snapshots_are_consistent() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        let log = run_rollout(&GaitScript::default(), &hf, 4.0, &RolloutConfig::default()).unwrap();
        let weight = RobotModel::default().weight();
        for s in &log.steps {
            let total: f64 = s.snapshot.feet.iter().map(|f| f.force[2]).sum();
            assert!((total - weight).abs() < 1e-9);
            assert!((s.snapshot.feet_lateral_distance - 0.27).abs() < 1e-9);
            assert!(s.rewards.total.is_finite());
        }
        let firsts = log.steps.iter().flat_map(|s| &s.snapshot.feet).filter(|f| f.first_contact).count();
        assert_eq!(firsts, log.touchdowns.len());
        for s in log.steps.iter().filter(|s| s.snapshot.feet.iter().any(|f| f.first_contact)) {
            let f = s.snapshot.feet.iter().find(|f| f.first_contact).unwrap();
            assert!((f.air_time - 0.64).abs() < 1e-9, "{}", f.air_time);
        }
    }

    #[test]
    fn force_rule_matches_geometry_with_low_threshold() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        let geo = run_rollout(&GaitScript::default(), &hf, 4.0, &RolloutConfig::default()).unwrap();
        let cfg = RolloutConfig { contact: ContactRule::Force { threshold: 10.0 }, ..Default::default() };
        let force = run_rollout(&GaitScript::default(), &hf, 4.0, &cfg).unwrap();
        assert_eq!(geo.events, force.events);
    }

    #[test]
    fn tread_offsets() {
        let t = TreadLayout { start: 0.0, depth: 0.30 };
        assert!(t.centre_offset(0.45).abs() < 1e-12);
        assert!((t.centre_offset(0.50) - 0.05).abs() < 1e-12);
        assert!((t.centre_offset(-0.10) - 0.05).abs() < 1e-12);
    }
}
