//! TOML run configuration. Every section and key is optional.

use std::path::Path;

use loco_core::foothold::FootholdConfig;
use loco_core::harness::{ContactRule, GaitScript, RobotModel, RolloutConfig, TreadLayout, VisionConfig};
use loco_core::policy::{GradcheckConfig, PolicyDims};
use loco_core::render::PointCloudSampler;
use loco_core::rewards::RewardParams;
use loco_core::terrain::TerrainSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSection {
    /// Simulated time per rollout (s).
    pub duration: f64,
    pub contact: ContactRule,
    pub sampler: PointCloudSampler,
}

impl Default for RolloutSection {
    fn default() -> Self {
        Self { duration: 6.0, contact: ContactRule::Geometric, sampler: PointCloudSampler::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub directions: usize,
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        let d = GradcheckConfig::default();
        Self { directions: d.directions, step: d.step, tolerance: d.tolerance, floor: d.floor }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub terrain: TerrainSpec,
    pub vision: VisionConfig,
    pub foothold: FootholdConfig,
    pub rewards: RewardParams,
    pub policy: PolicyDims,
    pub gait: GaitScript,
    pub robot: RobotModel,
    pub rollout: RolloutSection,
    pub gradcheck: GradcheckSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::parse(&crate::read_text(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn rollout_config(&self, treads: Option<TreadLayout>) -> RolloutConfig {
        RolloutConfig {
            foothold: self.foothold.clone(),
            rewards: self.rewards.clone(),
            sampler: self.rollout.sampler.clone(),
            robot: self.robot.clone(),
            contact: self.rollout.contact,
            treads,
        }
    }

    pub fn gradcheck_config(&self) -> GradcheckConfig {
        let g = &self.gradcheck;
        GradcheckConfig {
            dims: self.policy,
            seed: self.seed,
            directions: g.directions,
            step: g.step,
            tolerance: g.tolerance,
            floor: g.floor,
        }
    }
}
