//! Contact state and liftoff/touchdown events from sampled foot trajectories.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::render::Vec3;
use crate::terrain::Heightfield;

use super::Trajectory;

/// Foot clearance at or below which a descending foot counts as landed (m).
pub const CONTACT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Liftoff,
    Touchdown,
}

/// A contact transition. Liftoffs carry the last stance position, touchdowns the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub step: usize,
    pub time: f64,
    pub foot: usize,
    pub kind: EventKind,
    pub position: Vec3,
}

pub fn clearance(hf: &Heightfield, p: &Vec3) -> Result<f64> {
    Ok(p.z - hf.sample_height(p.x, p.y)?)
}

/// Per-step, per-foot contact state. A foot lands once its clearance drops to the
/// tolerance while moving down, and leaves as soon as the clearance exceeds it. The first
/// sample is classified by clearance alone.
pub fn contact_flags(traj: &Trajectory, hf: &Heightfield) -> Result<Vec<Vec<bool>>> {
    let mut out: Vec<Vec<bool>> = Vec::with_capacity(traj.samples.len());
    for (k, s) in traj.samples.iter().enumerate() {
        let mut row = Vec::with_capacity(s.feet.len());
        for (f, p) in s.feet.iter().enumerate() {
            let near = clearance(hf, p)? <= CONTACT_TOLERANCE;
            let flag = match k {
                0 => near,
                _ => {
                    let was = out[k - 1][f];
                    let descending = p.z < traj.samples[k - 1].feet[f].z;
                    if was { near } else { near && descending }
                }
            };
            row.push(flag);
        }
        out.push(row);
    }
    Ok(out)
}

/// Events implied by a contact-state table, ordered by step then foot.
pub fn events_from_flags(traj: &Trajectory, flags: &[Vec<bool>]) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    for k in 1..flags.len().min(traj.samples.len()) {
        let s = &traj.samples[k];
        for f in 0..flags[k].len() {
            let (was, now) = (flags[k - 1][f], flags[k][f]);
            let (kind, position) = match (was, now) {
                (true, false) => (EventKind::Liftoff, traj.samples[k - 1].feet[f]),
                (false, true) => (EventKind::Touchdown, s.feet[f]),
                _ => continue,
            };
            events.push(ContactEvent { step: k, time: s.time, foot: f, kind, position });
        }
    }
    events
}

/// Geometric liftoff/touchdown detection.
pub fn detect_events(traj: &Trajectory, hf: &Heightfield) -> Result<Vec<ContactEvent>> {
    let flags = contact_flags(traj, hf)?;
    Ok(events_from_flags(traj, &flags))
}
