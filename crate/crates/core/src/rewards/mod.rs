//! Training reward terms evaluated on a single robot snapshot.
//!
//! Every function here is pure. History-dependent indicators (first contact, recent single
//! support) arrive precomputed in the snapshot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootSnapshot {
    /// contact force, N
    pub force: [f64; 3],
    /// foot velocity, m/s
    pub velocity: [f64; 3],
    /// foot height, m
    pub height: f64,
    /// duration of the last aerial phase, s
    pub air_time: f64,
    /// first contact after an aerial phase
    pub first_contact: bool,
    /// vertical foot acceleration, m/s²
    pub vertical_accel: f64,
}

impl FootSnapshot {
    pub fn resting(height: f64, normal_force: f64) -> Self {
        Self {
            force: [0.0, 0.0, normal_force],
            velocity: [0.0; 3],
            height,
            air_time: 0.0,
            first_contact: false,
            vertical_accel: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSnapshot {
    pub ang_vel: [f64; 3],
    pub lin_vel: [f64; 3],
    pub projected_gravity: [f64; 3],
    /// forward, lateral, yaw-rate command
    pub command: [f64; 3],
    pub joint_pos: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub nominal_pose: Vec<f64>,
    pub action: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub prev_prev_action: Vec<f64>,
    pub joint_pos_min: Vec<f64>,
    pub joint_pos_max: Vec<f64>,
    pub joint_vel_max: Vec<f64>,
    pub feet: Vec<FootSnapshot>,
    pub base_height: f64,
    pub feet_lateral_distance: f64,
    /// a single-foot contact occurred within the recent history window
    pub single_contact_recent: bool,
}

impl RobotSnapshot {
    /// Upright, motionless robot at its nominal pose with zero actions and two loaded feet.
    pub fn standing(joints: usize, base_height: f64) -> Self {
        Self {
            ang_vel: [0.0; 3],
            lin_vel: [0.0; 3],
            projected_gravity: [0.0, 0.0, -1.0],
            command: [0.0; 3],
            joint_pos: vec![0.0; joints],
            joint_vel: vec![0.0; joints],
            nominal_pose: vec![0.0; joints],
            action: vec![0.0; joints],
            prev_action: vec![0.0; joints],
            prev_prev_action: vec![0.0; joints],
            joint_pos_min: vec![-1.0; joints],
            joint_pos_max: vec![1.0; joints],
            joint_vel_max: vec![10.0; joints],
            feet: vec![FootSnapshot::resting(0.0, 200.0); 2],
            base_height,
            feet_lateral_distance: 0.27,
            single_contact_recent: false,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.joint_pos.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = norm(&self.projected_gravity);
        if (g - 1.0).abs() > 1e-6 {
            return Err(Error::Spec(format!("projected gravity must be unit length, got norm {g}")));
        }
        let n = self.joint_count();
        let arrays = [
            ("joint_vel", self.joint_vel.len()),
            ("nominal_pose", self.nominal_pose.len()),
            ("action", self.action.len()),
            ("prev_action", self.prev_action.len()),
            ("prev_prev_action", self.prev_prev_action.len()),
            ("joint_pos_min", self.joint_pos_min.len()),
            ("joint_pos_max", self.joint_pos_max.len()),
            ("joint_vel_max", self.joint_vel_max.len()),
        ];
        for (name, len) in arrays {
            if len != n {
                return Err(Error::Shape(format!("{name} has {len} entries, expected {n}")));
            }
        }
        Ok(())
    }
}

/// Rows of the reward table, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    LinVelTracking,
    AngVelTracking,
    Orientation,
    FeetContact,
    FeetYDistance,
    FootholdPlacement,
    BaseHeight,
    LinVelZ,
    AngVelXy,
    JointVelocity,
    ActionRate,
    ActionSmoothness,
    FeetAirTime,
    FootSlip,
    FootImpactAcc,
    FootImpactVel,
    DofPosLimits,
    DofVelLimits,
    HipPos,
    AnklePos,
    Stumble,
}

impl Term {
    pub const ALL: [Term; 21] = [
        Term::LinVelTracking,
        Term::AngVelTracking,
        Term::Orientation,
        Term::FeetContact,
        Term::FeetYDistance,
        Term::FootholdPlacement,
        Term::BaseHeight,
        Term::LinVelZ,
        Term::AngVelXy,
        Term::JointVelocity,
        Term::ActionRate,
        Term::ActionSmoothness,
        Term::FeetAirTime,
        Term::FootSlip,
        Term::FootImpactAcc,
        Term::FootImpactVel,
        Term::DofPosLimits,
        Term::DofVelLimits,
        Term::HipPos,
        Term::AnklePos,
        Term::Stumble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::LinVelTracking => "lin_vel_tracking",
            Term::AngVelTracking => "ang_vel_tracking",
            Term::Orientation => "orientation",
            Term::FeetContact => "feet_contact",
            Term::FeetYDistance => "feet_y_distance",
            Term::FootholdPlacement => "foothold_placement",
            Term::BaseHeight => "base_height",
            Term::LinVelZ => "lin_vel_z",
            Term::AngVelXy => "ang_vel_xy",
            Term::JointVelocity => "joint_velocity",
            Term::ActionRate => "action_rate",
            Term::ActionSmoothness => "action_smoothness",
            Term::FeetAirTime => "feet_air_time",
            Term::FootSlip => "foot_slip",
            Term::FootImpactAcc => "foot_impact_acc",
            Term::FootImpactVel => "foot_impact_vel",
            Term::DofPosLimits => "dof_pos_limits",
            Term::DofVelLimits => "dof_vel_limits",
            Term::HipPos => "hip_pos",
            Term::AnklePos => "ankle_pos",
            Term::Stumble => "stumble",
        }
    }

    /// Tracking and shaping terms with positive weight.
    pub fn is_positive(self) -> bool {
        matches!(
            self,
            Term::LinVelTracking
                | Term::AngVelTracking
                | Term::Orientation
                | Term::FeetContact
                | Term::FeetYDistance
                | Term::FootholdPlacement
                | Term::BaseHeight
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub lin_vel_tracking: f64,
    pub ang_vel_tracking: f64,
    pub orientation: f64,
    pub feet_contact: f64,
    pub feet_y_distance: f64,
    pub foothold_placement: f64,
    pub base_height: f64,
    pub lin_vel_z: f64,
    pub ang_vel_xy: f64,
    pub joint_velocity: f64,
    pub action_rate: f64,
    pub action_smoothness: f64,
    pub feet_air_time: f64,
    pub foot_slip: f64,
    pub foot_impact_acc: f64,
    pub foot_impact_vel: f64,
    pub dof_pos_limits: f64,
    pub dof_vel_limits: f64,
    pub hip_pos: f64,
    pub ankle_pos: f64,
    pub stumble: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            lin_vel_tracking: 2.5,
            ang_vel_tracking: 1.5,
            orientation: 1.0,
            feet_contact: 1.5,
            feet_y_distance: 0.1,
            foothold_placement: 2.0,
            base_height: 0.8,
            lin_vel_z: -1.0,
            ang_vel_xy: -0.05,
            joint_velocity: -1e-3,
            action_rate: -0.01,
            action_smoothness: -0.01,
            feet_air_time: -2.5,
            foot_slip: -0.2,
            foot_impact_acc: -0.5,
            foot_impact_vel: -1.5,
            dof_pos_limits: -10.0,
            dof_vel_limits: -0.6,
            hip_pos: -7.0,
            ankle_pos: -10.0,
            stumble: -10.0,
        }
    }
}

impl RewardWeights {
    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::LinVelTracking => self.lin_vel_tracking,
            Term::AngVelTracking => self.ang_vel_tracking,
            Term::Orientation => self.orientation,
            Term::FeetContact => self.feet_contact,
            Term::FeetYDistance => self.feet_y_distance,
            Term::FootholdPlacement => self.foothold_placement,
            Term::BaseHeight => self.base_height,
            Term::LinVelZ => self.lin_vel_z,
            Term::AngVelXy => self.ang_vel_xy,
            Term::JointVelocity => self.joint_velocity,
            Term::ActionRate => self.action_rate,
            Term::ActionSmoothness => self.action_smoothness,
            Term::FeetAirTime => self.feet_air_time,
            Term::FootSlip => self.foot_slip,
            Term::FootImpactAcc => self.foot_impact_acc,
            Term::FootImpactVel => self.foot_impact_vel,
            Term::DofPosLimits => self.dof_pos_limits,
            Term::DofVelLimits => self.dof_vel_limits,
            Term::HipPos => self.hip_pos,
            Term::AnklePos => self.ankle_pos,
            Term::Stumble => self.stumble,
        }
    }
}

/// Shaping constants, thresholds and the robot-specific joint groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    pub weights: RewardWeights,
    pub sigma_lin_vel: f64,
    pub sigma_ang_vel: f64,
    /// planar command speed below which linear tracking uses the ℓ1 form
    pub low_speed: f64,
    /// command norm below which the robot is considered standing
    pub stand_speed: f64,
    pub impact_acc: f64,
    pub impact_vel: f64,
    pub slip_force: f64,
    pub stumble_ratio: f64,
    pub support_force: f64,
    pub feet_y_target: f64,
    pub base_height_target: f64,
    pub air_time_target: f64,
    pub hip_joints: Vec<usize>,
    pub ankle_joints: Vec<usize>,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            weights: RewardWeights::default(),
            sigma_lin_vel: 0.25,
            sigma_ang_vel: 0.25,
            low_speed: 0.1,
            stand_speed: 0.1,
            impact_acc: 50.0,
            impact_vel: 0.6,
            slip_force: 5.0,
            stumble_ratio: 5.0,
            support_force: 1.0,
            feet_y_target: 0.27,
            base_height_target: 0.55,
            air_time_target: 0.5,
            // per leg: hip roll, hip yaw, hip pitch, knee, ankle pitch, ankle roll
            hip_joints: vec![0, 1, 6, 7],
            ankle_joints: vec![5, 11],
        }
    }
}

impl RewardParams {
    pub fn validate(&self, joints: usize) -> Result<()> {
        for (name, v) in [("sigma_lin_vel", self.sigma_lin_vel), ("sigma_ang_vel", self.sigma_ang_vel)] {
            if !(v > 0.0) {
                return Err(Error::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        for &j in self.hip_joints.iter().chain(&self.ankle_joints) {
            if j >= joints {
                return Err(Error::Spec(format!("joint index {j} out of range for {joints} joints")));
            }
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sq_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum()
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

pub fn track_lin_vel(s: &RobotSnapshot, sigma: f64, low_speed: f64) -> f64 {
    let ex = s.command[0] - s.lin_vel[0];
    let ey = s.command[1] - s.lin_vel[1];
    let err = if s.command[0].hypot(s.command[1]) < low_speed {
        ex.abs() + ey.abs()
    } else {
        ex * ex + ey * ey
    };
    (-err / sigma).exp()
}

pub fn track_ang_vel(s: &RobotSnapshot, sigma: f64) -> f64 {
    (-(s.ang_vel[2] - s.command[2]).powi(2) / sigma).exp()
}

pub fn orientation(s: &RobotSnapshot) -> f64 {
    (-10.0 * s.projected_gravity[0].hypot(s.projected_gravity[1])).exp()
}

pub fn feet_contact(s: &RobotSnapshot, stand_speed: f64) -> f64 {
    if norm(&s.command) < stand_speed {
        1.0
    } else if s.single_contact_recent {
        1.0
    } else {
        0.0
    }
}

pub fn feet_y_distance(s: &RobotSnapshot, target: f64) -> f64 {
    (-10.0 * (s.feet_lateral_distance - target).abs()).exp()
}

/// Mean height of feet carrying more than `support_force` normal load.
pub fn support_height(s: &RobotSnapshot, support_force: f64) -> Option<f64> {
    let supp: Vec<f64> = s.feet.iter().filter(|f| f.force[2] > support_force).map(|f| f.height).collect();
    (!supp.is_empty()).then(|| supp.iter().sum::<f64>() / supp.len() as f64)
}

/// `None` when no foot is supporting.
pub fn base_height(s: &RobotSnapshot, params: &RewardParams) -> Option<f64> {
    let z = support_height(s, params.support_force)?;
    Some((-10.0 * ((s.base_height - z) - params.base_height_target).abs()).exp())
}

/// Raw value of a penalty row.
pub fn penalty(term: Term, s: &RobotSnapshot, p: &RewardParams) -> f64 {
    let n = s.joint_count();
    match term {
        Term::LinVelZ => s.lin_vel[2] * s.lin_vel[2],
        Term::AngVelXy => s.ang_vel[0] * s.ang_vel[0] + s.ang_vel[1] * s.ang_vel[1],
        Term::JointVelocity => sq_norm(s.joint_vel.iter().copied()),
        Term::ActionRate => sq_norm((0..n).map(|j| s.action[j] - s.prev_action[j])),
        Term::ActionSmoothness => {
            sq_norm((0..n).map(|j| s.action[j] - 2.0 * s.prev_action[j] + s.prev_prev_action[j]))
        }
        Term::FeetAirTime => s
            .feet
            .iter()
            .filter(|f| f.first_contact)
            .map(|f| p.air_time_target - f.air_time)
            .sum(),
        Term::FootSlip => s
            .feet
            .iter()
            .filter(|f| norm(&f.force) > p.slip_force)
            .map(|f| norm(&f.velocity))
            .sum(),
        Term::FootImpactAcc => s.feet.iter().map(|f| pos(f.vertical_accel.abs() - p.impact_acc)).sum(),
        Term::FootImpactVel => s.feet.iter().map(|f| pos(f.velocity[2].abs() - p.impact_vel)).sum(),
        Term::DofPosLimits => (0..n)
            .map(|j| pos(s.joint_pos_min[j] - s.joint_pos[j]) + pos(s.joint_pos[j] - s.joint_pos_max[j]))
            .sum(),
        Term::DofVelLimits => (0..n).map(|j| pos(s.joint_vel[j].abs() - s.joint_vel_max[j])).sum(),
        Term::HipPos => sq_norm(p.hip_joints.iter().map(|&j| s.joint_pos[j] - s.nominal_pose[j])),
        Term::AnklePos => sq_norm(p.ankle_joints.iter().map(|&j| s.joint_pos[j] - s.nominal_pose[j])),
        Term::Stumble => {
            let fires = s
                .feet
                .iter()
                .any(|f| f.force[0].hypot(f.force[1]) > p.stumble_ratio * f.force[2].abs());
            if fires {
                1.0
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermValue {
    pub name: String,
    pub raw: f64,
    pub weight: f64,
    pub weighted: f64,
    /// false when the term had no reference (base height in flight)
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: Vec<TermValue>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn get(&self, name: &str) -> Option<&TermValue> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn term(&self, term: Term) -> &TermValue {
        self.get(term.name()).expect("breakdown holds every term")
    }
}

fn entry(term: Term, raw: Option<f64>, p: &RewardParams) -> TermValue {
    let weight = p.weights.get(term);
    let (raw, active) = match raw {
        Some(r) => (r, true),
        None => (0.0, false),
    };
    TermValue { name: term.name().to_owned(), raw, weight, weighted: raw * weight, active }
}

/// Penalty rows only.
pub fn penalties(s: &RobotSnapshot, p: &RewardParams) -> Result<Vec<TermValue>> {
    s.validate()?;
    p.validate(s.joint_count())?;
    Ok(Term::ALL
        .iter()
        .filter(|t| !t.is_positive())
        .map(|&t| entry(t, Some(penalty(t, s, p)), p))
        .collect())
}

/// Every row of the table plus the weighted total. `foothold` is the placement reward for
/// this step (zero away from touchdowns).
pub fn evaluate_all(s: &RobotSnapshot, foothold: f64, p: &RewardParams) -> Result<RewardBreakdown> {
    s.validate()?;
    p.validate(s.joint_count())?;
    if !(0.0..=1.0).contains(&foothold) {
        return Err(Error::Range(format!("foothold reward {foothold} outside [0, 1]")));
    }
    let terms: Vec<TermValue> = Term::ALL
        .iter()
        .map(|&t| {
            let raw = match t {
                Term::LinVelTracking => Some(track_lin_vel(s, p.sigma_lin_vel, p.low_speed)),
                Term::AngVelTracking => Some(track_ang_vel(s, p.sigma_ang_vel)),
                Term::Orientation => Some(orientation(s)),
                Term::FeetContact => Some(feet_contact(s, p.stand_speed)),
                Term::FeetYDistance => Some(feet_y_distance(s, p.feet_y_target)),
                Term::FootholdPlacement => Some(foothold),
                Term::BaseHeight => base_height(s, p),
                _ => Some(penalty(t, s, p)),
            };
            entry(t, raw, p)
        })
        .collect();
    let total = terms.iter().map(|t| t.weighted).sum();
    Ok(RewardBreakdown { terms, total })
}
