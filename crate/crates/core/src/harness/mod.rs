//! Scripted kinematic rollouts over generated terrain.
//!
//! A [`GaitScript`] is turned into foot and base trajectories sampled at the control
//! rate, contact events are detected geometrically, and the foothold pipeline and reward
//! suite are evaluated along the way. Logs and trajectories are line-delimited JSON.

pub mod events;
pub mod gait;
pub mod rollout;
pub mod stats;

pub use events::{clearance, contact_flags, detect_events, events_from_flags, ContactEvent, EventKind, CONTACT_TOLERANCE};
pub use gait::{plan_gait, synthesize_gait, GaitPlan, GaitScript, Swing, FEET};
pub use rollout::{
    depth_tick, foothold_pass, gate_samples, head_depth, normal_forces, rollout_trajectory, run_rollout, ContactRule,
    FootholdPass, LogRecord, RobotModel, RolloutConfig, RolloutLog, StepRecord, TouchdownRecord, TreadLayout,
    VisionConfig,
};
pub use stats::{median, median_abs_deviation, touchdown_mad};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::render::Vec3;

pub const CONTROL_HZ: u32 = 50;
pub const DEPTH_HZ: u32 = 20;
pub const CONTROL_DT: f64 = 1.0 / CONTROL_HZ as f64;

/// Robot state at one control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySample {
    pub step: usize,
    pub time: f64,
    pub forward_cmd: f64,
    pub base: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    /// Sole positions in world coordinates.
    pub feet: Vec<Vec3>,
    /// Per-foot support height: the contact height in stance, blended across a swing.
    pub support: Vec<f64>,
    /// Per-foot nominal target of the current or last swing.
    pub targets: Vec<Vec3>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// Sample spacing; the control period when there are fewer than two samples.
    pub fn dt(&self) -> f64 {
        match self.samples.as_slice() {
            [a, b, ..] => b.time - a.time,
            _ => CONTROL_DT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if s.step != k {
                return Err(Error::Spec(format!("sample {k} is labelled step {}", s.step)));
            }
            if k > 0 && !(s.time > self.samples[k - 1].time) {
                return Err(Error::Spec(format!("time does not increase at step {k}")));
            }
            let n = self.samples[0].feet.len();
            if s.feet.len() != n || s.support.len() != n || s.targets.len() != n {
                return Err(Error::Shape(format!("step {k} has inconsistent per-foot arrays")));
            }
        }
        Ok(())
    }

    pub fn to_lines(&self) -> Result<String> {
        write_lines(&self.samples)
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let traj = Self { samples: read_lines(text)? };
        traj.validate()?;
        Ok(traj)
    }
}

/// One JSON object per line, each line newline-terminated.
pub fn write_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| FormatError::Malformed(e.to_string()))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

/// Parse line-delimited JSON, skipping blank lines.
pub fn read_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Format(FormatError::Malformed(format!("line {}: {e}", i + 1))))
        })
        .collect()
}
