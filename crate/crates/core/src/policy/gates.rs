//! Highway-gate statistics grouped by terrain, contact phase and posture.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Roll or pitch magnitude (rad) above which a timestep counts as risky.
pub const RISK_ANGLE: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactLabel {
    Flight,
    Support,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostureLabel {
    Stable,
    Risky,
}

impl PostureLabel {
    pub fn classify(roll: f64, pitch: f64) -> Self {
        if roll.abs() > RISK_ANGLE || pitch.abs() > RISK_ANGLE {
            PostureLabel::Risky
        } else {
            PostureLabel::Stable
        }
    }
}

/// Gate vector of one timestep with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSample {
    pub terrain: String,
    pub contact: ContactLabel,
    pub roll: f64,
    pub pitch: f64,
    pub gate: Vec<f64>,
}

impl GateSample {
    pub fn posture(&self) -> PostureLabel {
        PostureLabel::classify(self.roll, self.pitch)
    }

    pub fn channel_mean(&self) -> f64 {
        self.gate.iter().sum::<f64>() / self.gate.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateGroup {
    /// `terrain`, `contact` or `posture`
    pub axis: String,
    pub label: String,
    pub mean: f64,
    pub count: usize,
}

#[derive(Default)]
struct Acc {
    sum: f64,
    count: usize,
}

fn emit(axis: &str, groups: BTreeMap<String, Acc>, out: &mut Vec<GateGroup>) {
    for (label, a) in groups {
        out.push(GateGroup { axis: axis.to_owned(), label, mean: a.sum / a.count as f64, count: a.count });
    }
}

/// Channel-mean gate per timestep, then the mean within each label along each axis.
/// Groups with no samples are absent from the output.
pub fn gate_statistics(samples: &[GateSample]) -> Result<Vec<GateGroup>> {
    if let Some(s) = samples.iter().find(|s| s.gate.is_empty()) {
        return Err(Error::Shape(format!("empty gate vector for terrain `{}`", s.terrain)));
    }
    let mut terrain: BTreeMap<String, Acc> = BTreeMap::new();
    let mut contact: BTreeMap<String, Acc> = BTreeMap::new();
    let mut posture: BTreeMap<String, Acc> = BTreeMap::new();
    for s in samples {
        let m = s.channel_mean();
        for (map, key) in [
            (&mut terrain, s.terrain.clone()),
            (&mut contact, label(&s.contact)),
            (&mut posture, label(&s.posture())),
        ] {
            let a = map.entry(key).or_default();
            a.sum += m;
            a.count += 1;
        }
    }
    let mut out = Vec::new();
    emit("terrain", terrain, &mut out);
    emit("contact", contact, &mut out);
    emit("posture", posture, &mut out);
    Ok(out)
}

fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(terrain: &str, contact: ContactLabel, roll: f64, gate: Vec<f64>) -> GateSample {
        GateSample { terrain: terrain.into(), contact, roll, pitch: 0.0, gate }
    }

    #[test]
    fn constant_gate() {
        let s = vec![
            sample("flat", ContactLabel::Support, 0.0, vec![0.5; 8]),
            sample("stairs_up", ContactLabel::Flight, 0.3, vec![0.5; 8]),
        ];
        for g in gate_statistics(&s).unwrap() {
            assert_eq!(g.mean, 0.5);
        }
    }

    #[test]
    fn single_sample_and_absent_groups() {
        let s = vec![sample("gap", ContactLabel::Support, 0.0, vec![0.2, 0.4])];
        let g = gate_statistics(&s).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|x| (x.mean - 0.30000000000000004).abs() < 1e-15));
        assert!(!g.iter().any(|x| x.label == "flight" || x.label == "risky"));
    }

    #[test]
    fn risk_threshold_is_strict() {
        assert_eq!(PostureLabel::classify(0.20, -0.20), PostureLabel::Stable);
        assert_eq!(PostureLabel::classify(0.0, -0.2001), PostureLabel::Risky);
    }

    #[test]
    fn empty_gate_rejected() {
        assert!(gate_statistics(&[sample("flat", ContactLabel::Support, 0.0, vec![])]).is_err());
        assert!(gate_statistics(&[]).unwrap().is_empty());
    }
}
