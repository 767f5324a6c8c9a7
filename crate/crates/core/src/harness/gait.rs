//! Scripted biped gait: alternating cycloidal swings that land on the terrain surface.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Vec3;
use crate::terrain::{Heightfield, Pose2};

use super::{Trajectory, TrajectorySample, CONTROL_DT};

/// Number of feet driven by the script.
pub const FEET: usize = 2;

/// Open-loop walking script.
///
/// Foot 0 starts on the left, half a step behind the base, and swings first. Each swing
/// carries a foot twice the step length forward so that it lands one step ahead of the
/// other foot. A zero forward command keeps both feet planted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitScript {
    /// Commanded forward speed (m/s).
    pub forward_cmd: f64,
    /// Fore-aft foot separation in double support (m).
    pub step_length: f64,
    /// Swing apex above the highest terrain under the swing path (m).
    pub step_height: f64,
    /// Time between successive touchdowns (s).
    pub step_duration: f64,
    /// Fraction of a gait cycle each foot spends in stance.
    pub duty_factor: f64,
    /// Standing time before the first liftoff (s).
    pub settle_time: f64,
    pub stance_width: f64,
    pub start: Pose2,
    /// Forward shift of every touchdown away from its nominal target (m).
    pub touchdown_offset: f64,
    /// Base height above the mean support height (m).
    pub base_height: f64,
}

impl Default for GaitScript {
    fn default() -> Self {
        Self {
            forward_cmd: 0.375,
            step_length: 0.30,
            step_height: 0.12,
            step_duration: 0.8,
            duty_factor: 0.6,
            settle_time: 0.2,
            stance_width: 0.27,
            start: Pose2::new(0.30, 0.0, 0.0),
            touchdown_offset: 0.0,
            base_height: 0.55,
        }
    }
}

impl GaitScript {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("forward_cmd", self.forward_cmd),
            ("step_length", self.step_length),
            ("step_height", self.step_height),
            ("step_duration", self.step_duration),
            ("duty_factor", self.duty_factor),
            ("settle_time", self.settle_time),
            ("stance_width", self.stance_width),
            ("start.x", self.start.x),
            ("start.y", self.start.y),
            ("start.yaw", self.start.yaw),
            ("touchdown_offset", self.touchdown_offset),
            ("base_height", self.base_height),
        ];
        if let Some((name, v)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Spec(format!("gait `{name}` must be finite, got {v}")));
        }
        if !(self.step_duration > 0.0) {
            return Err(Error::Spec(format!("step_duration must be positive, got {}", self.step_duration)));
        }
        if !(self.duty_factor > 0.0 && self.duty_factor < 1.0) {
            return Err(Error::Spec(format!("duty_factor must lie in (0, 1), got {}", self.duty_factor)));
        }
        for (name, v) in [
            ("forward_cmd", self.forward_cmd),
            ("step_length", self.step_length),
            ("step_height", self.step_height),
            ("settle_time", self.settle_time),
            ("stance_width", self.stance_width),
        ] {
            if v < 0.0 {
                return Err(Error::Spec(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn cycle_time(&self) -> f64 {
        2.0 * self.step_duration
    }

    pub fn swing_time(&self) -> f64 {
        (1.0 - self.duty_factor) * self.cycle_time()
    }

    fn heading(&self) -> Vec3 {
        Vec3::new(self.start.yaw.cos(), self.start.yaw.sin(), 0.0)
    }

    fn left(&self) -> Vec3 {
        Vec3::new(-self.start.yaw.sin(), self.start.yaw.cos(), 0.0)
    }
}

/// One foot swing between two terrain contacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Swing {
    pub start: f64,
    pub end: f64,
    pub from: Vec3,
    pub to: Vec3,
    /// Target before the touchdown offset is applied.
    pub nominal: Vec3,
    pub apex: f64,
}

fn cycloid(s: f64) -> f64 {
    s - (2.0 * PI * s).sin() / (2.0 * PI)
}

impl Swing {
    fn phase(&self, t: f64) -> f64 {
        ((t - self.start) / (self.end - self.start)).clamp(0.0, 1.0)
    }

    /// Foot position; horizontal motion follows a cycloid, vertical motion rises to the
    /// apex along `sin²` and descends the same way onto the target.
    pub fn position(&self, t: f64) -> Vec3 {
        let s = self.phase(t);
        let u = cycloid(s);
        let bump = (PI * s).sin().powi(2);
        let z = if s <= 0.5 {
            self.from.z + (self.apex - self.from.z) * bump
        } else {
            self.to.z + (self.apex - self.to.z) * bump
        };
        let xy = self.from + (self.to - self.from) * u;
        Vec3::new(xy.x, xy.y, z)
    }

    /// Support height blended between the two contacts.
    pub fn support_height(&self, t: f64) -> f64 {
        self.from.z + (self.to.z - self.from.z) * cycloid(self.phase(t))
    }
}

/// Continuous-time foot and base motion.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitPlan {
    pub script: GaitScript,
    pub initial: [Vec3; FEET],
    pub swings: [Vec<Swing>; FEET],
}

fn ground(hf: &Heightfield, p: Vec3) -> Result<Vec3> {
    Ok(Vec3::new(p.x, p.y, hf.sample_height(p.x, p.y)?))
}

fn path_max(hf: &Heightfield, a: &Vec3, b: &Vec3) -> Result<f64> {
    let len = (b - a).xy().norm();
    let n = (len / (0.5 * hf.resolution())).ceil() as usize + 1;
    let mut top = f64::NEG_INFINITY;
    for i in 0..=n {
        let p = a + (b - a) * (i as f64 / n as f64);
        top = top.max(hf.sample_height(p.x, p.y)?);
    }
    Ok(top)
}

/// Plan every swing that starts before `horizon`.
pub fn plan_gait(script: &GaitScript, hf: &Heightfield, horizon: f64) -> Result<GaitPlan> {
    script.validate()?;
    let heading = script.heading();
    let left = script.left();
    let base = Vec3::new(script.start.x, script.start.y, 0.0);
    let half = 0.5 * script.step_length;
    let lat = 0.5 * script.stance_width;
    let initial = [
        ground(hf, base - heading * half + left * lat)?,
        ground(hf, base + heading * half - left * lat)?,
    ];
    let mut swings: [Vec<Swing>; FEET] = Default::default();
    if script.forward_cmd > 0.0 {
        for (f, list) in swings.iter_mut().enumerate() {
            let mut from = initial[f];
            let mut flat_from = Vec3::new(initial[f].x, initial[f].y, 0.0);
            for n in 0.. {
                let start = script.settle_time + f as f64 * script.step_duration + n as f64 * script.cycle_time();
                if start >= horizon {
                    break;
                }
                let step = heading * (2.0 * script.step_length);
                let nominal = ground(hf, flat_from + step)?;
                let to = ground(hf, flat_from + step + heading * script.touchdown_offset)?;
                let apex = from.z.max(to.z).max(path_max(hf, &from, &to)?) + script.step_height;
                list.push(Swing { start, end: start + script.swing_time(), from, to, nominal, apex });
                from = to;
                flat_from += step;
            }
        }
    }
    Ok(GaitPlan { script: script.clone(), initial, swings })
}

impl GaitPlan {
    fn locate(&self, foot: usize, t: f64) -> (Option<&Swing>, Vec3) {
        let mut rest = self.initial[foot];
        for sw in &self.swings[foot] {
            if t < sw.start {
                break;
            }
            if t <= sw.end {
                return (Some(sw), rest);
            }
            rest = sw.to;
        }
        (None, rest)
    }

    pub fn foot_position(&self, foot: usize, t: f64) -> Vec3 {
        match self.locate(foot, t) {
            (Some(sw), _) => sw.position(t),
            (None, rest) => rest,
        }
    }

    pub fn support_height(&self, foot: usize, t: f64) -> f64 {
        match self.locate(foot, t) {
            (Some(sw), _) => sw.support_height(t),
            (None, rest) => rest.z,
        }
    }

    /// Nominal target of the latest swing started by `t`, or the initial contact.
    pub fn nominal_target(&self, foot: usize, t: f64) -> Vec3 {
        self.swings[foot].iter().rev().find(|sw| sw.start <= t).map_or(self.initial[foot], |sw| sw.nominal)
    }

    /// Swings that have landed by `t`.
    pub fn completed_swings(&self, foot: usize, t: f64) -> usize {
        self.swings[foot].iter().filter(|sw| sw.end <= t).count()
    }

    pub fn sample(&self, step: usize, t: f64) -> TrajectorySample {
        let s = &self.script;
        let feet: Vec<Vec3> = (0..FEET).map(|f| self.foot_position(f, t)).collect();
        let support: Vec<f64> = (0..FEET).map(|f| self.support_height(f, t)).collect();
        let targets = (0..FEET).map(|f| self.nominal_target(f, t)).collect();
        let mean_xy = feet.iter().map(|p| p.xy()).sum::<nalgebra::Vector2<f64>>() / FEET as f64;
        let mean_support = support.iter().sum::<f64>() / FEET as f64;
        let heading = s.heading();
        let along: Vec<f64> = feet.iter().map(|p| p.dot(&heading)).collect();
        let (rear, front) = if along[0] <= along[1] { (0, 1) } else { (1, 0) };
        let run = along[front] - along[rear];
        let pitch = if run > 1e-6 { -0.5 * (support[front] - support[rear]).atan2(run) } else { 0.0 };
        TrajectorySample {
            step,
            time: t,
            forward_cmd: s.forward_cmd,
            base: Vec3::new(mean_xy.x, mean_xy.y, s.base_height + mean_support),
            roll: 0.0,
            pitch,
            yaw: s.start.yaw,
            feet,
            support,
            targets,
        }
    }
}

/// Sample the planned gait at the control rate for `duration` seconds.
pub fn synthesize_gait(script: &GaitScript, hf: &Heightfield, duration: f64) -> Result<Trajectory> {
    if !(duration >= 0.0) || !duration.is_finite() {
        return Err(Error::Spec(format!("rollout duration must be finite and non-negative, got {duration}")));
    }
    let steps = (duration / CONTROL_DT).round() as usize;
    let plan = plan_gait(script, hf, steps as f64 * CONTROL_DT)?;
    let samples = (0..steps).map(|k| plan.sample(k, k as f64 * CONTROL_DT)).collect();
    Ok(Trajectory { samples })
}
