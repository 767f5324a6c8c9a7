//! Central finite-difference verification of the analytic backward pass.
//!
//! For every parameter block (and the step inputs) the analytic directional derivative of
//! a random linear functional of the step outputs is compared with a central difference
//! along random unit directions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward, forward, Parameters, PolicyDims, PolicyOutput, PolicyParams, PolicyState, Upstream, BLOCKS};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub dims: PolicyDims,
    pub seed: u64,
    pub directions: usize,
    pub step: f64,
    pub tolerance: f64,
    /// lower bound on the relative-error denominator
    pub floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { dims: PolicyDims::default(), seed: 0, directions: 1000, step: 1e-5, tolerance: 1e-4, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub block: String,
    pub parameters: usize,
    pub directions: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Name of the pseudo-block holding the step inputs and previous recurrent states.
pub const INPUT_BLOCK: &str = "inputs";

struct Problem {
    obs: Vec<f64>,
    depth: Vec<f64>,
    state: PolicyState<f64>,
    q0: Vec<f64>,
    up: Upstream<f64>,
}

impl Problem {
    fn new(dims: &PolicyDims, rng: &mut ChaCha8Rng) -> Self {
        let mut uni = |n: usize, a: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-a..a)).collect() };
        let obs = uni(dims.obs_dim(), 1.0);
        let depth = uni(dims.depth_len(), 0.45);
        let state = PolicyState {
            hidden: uni(dims.gru_hidden, 0.8),
            vel_hidden: uni(dims.vel_hidden, 0.8),
            vel_cell: uni(dims.vel_hidden, 1.0),
            prev_action: vec![0.0; dims.joints],
        };
        let q0 = vec![0.0; dims.joints];
        let up = Upstream {
            action: uni(dims.joints, 1.0),
            velocity: uni(3, 1.0),
            hidden: uni(dims.gru_hidden, 1.0),
            vel_hidden: uni(dims.vel_hidden, 1.0),
            vel_cell: uni(dims.vel_hidden, 1.0),
        };
        Self { obs, depth, state, q0, up }
    }

    fn objective(&self, out: &PolicyOutput<f64>) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        dot(&self.up.action, &out.action)
            + dot(&self.up.velocity, &out.velocity)
            + dot(&self.up.hidden, &out.state.hidden)
            + dot(&self.up.vel_hidden, &out.state.vel_hidden)
            + dot(&self.up.vel_cell, &out.state.vel_cell)
    }

    fn eval(&self, p: &PolicyParams<f64>) -> Result<f64> {
        Ok(self.objective(&forward(p, &self.obs, &self.depth, &self.state, &self.q0)?))
    }
}

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn in_block(name: &str, block: &str) -> bool {
    name.split('.').next() == Some(block)
}

fn check_block(
    params: &PolicyParams<f64>,
    problem: &Problem,
    grads: &PolicyParams<f64>,
    block: &str,
    cfg: &GradcheckConfig,
    seed: u64,
) -> Result<BlockReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work = params.clone();
    let analytic: Vec<f64> = grads
        .tensors()
        .into_iter()
        .filter(|(n, _)| in_block(n, block))
        .flat_map(|(_, t)| t.data.clone())
        .collect();
    let base: Vec<f64> = params
        .tensors()
        .into_iter()
        .filter(|(n, _)| in_block(n, block))
        .flat_map(|(_, t)| t.data.clone())
        .collect();
    let set = |work: &mut PolicyParams<f64>, vals: &dyn Fn(usize) -> f64| {
        let mut k = 0;
        for (n, t) in work.tensors_mut() {
            if in_block(&n, block) {
                for v in t.data.iter_mut() {
                    *v = vals(k);
                    k += 1;
                }
            }
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.directions {
        let dir = unit_direction(base.len(), &mut rng);
        let a: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();
        set(&mut work, &|k| base[k] + cfg.step * dir[k]);
        let plus = problem.eval(&work)?;
        set(&mut work, &|k| base[k] - cfg.step * dir[k]);
        let minus = problem.eval(&work)?;
        let n = (plus - minus) / (2.0 * cfg.step);
        worst = worst.max(rel_error(a, n, cfg.floor));
    }
    Ok(BlockReport {
        block: block.to_owned(),
        parameters: base.len(),
        directions: cfg.directions,
        max_rel_error: worst,
        passed: worst < cfg.tolerance,
    })
}

fn check_inputs(params: &PolicyParams<f64>, problem: &Problem, g: &super::Gradients<f64>, cfg: &GradcheckConfig, seed: u64) -> Result<BlockReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let analytic: Vec<f64> = g
        .obs
        .iter()
        .chain(&g.depth)
        .chain(&g.hidden)
        .chain(&g.vel_hidden)
        .chain(&g.vel_cell)
        .copied()
        .collect();
    let perturbed = |dir: &[f64], sign: f64| -> Problem {
        let mut it = dir.iter().map(|d| sign * cfg.step * d);
        let mut shift = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x + it.next().unwrap()).collect() };
        Problem {
            obs: shift(&problem.obs),
            depth: shift(&problem.depth),
            state: PolicyState {
                hidden: shift(&problem.state.hidden),
                vel_hidden: shift(&problem.state.vel_hidden),
                vel_cell: shift(&problem.state.vel_cell),
                prev_action: problem.state.prev_action.clone(),
            },
            q0: problem.q0.clone(),
            up: problem.up.clone(),
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.directions {
        let dir = unit_direction(analytic.len(), &mut rng);
        let a: f64 = analytic.iter().zip(&dir).map(|(g, d)| g * d).sum();
        let n = (perturbed(&dir, 1.0).eval(params)? - perturbed(&dir, -1.0).eval(params)?) / (2.0 * cfg.step);
        worst = worst.max(rel_error(a, n, cfg.floor));
    }
    Ok(BlockReport {
        block: INPUT_BLOCK.to_owned(),
        parameters: analytic.len(),
        directions: cfg.directions,
        max_rel_error: worst,
        passed: worst < cfg.tolerance,
    })
}

/// One report per parameter block followed by the input report. Blocks run in parallel;
/// each block has its own seeded direction stream, so results do not depend on scheduling.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<Vec<BlockReport>> {
    let params = PolicyParams::<f64>::init(cfg.dims, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let problem = Problem::new(&cfg.dims, &mut rng);
    let out = forward(&params, &problem.obs, &problem.depth, &problem.state, &problem.q0)?;
    let grads = backward(&params, &out.trace, &problem.up)?;
    let jobs: Vec<&str> = BLOCKS.iter().copied().chain([INPUT_BLOCK]).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(i, &block)| {
            let seed = cfg.seed.wrapping_mul(31).wrapping_add(i as u64 + 1);
            if block == INPUT_BLOCK {
                check_inputs(&params, &problem, &grads, cfg, seed)
            } else {
                check_block(&params, &problem, &grads.params, block, cfg, seed)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_network_passes() {
        let cfg = GradcheckConfig {
            dims: PolicyDims { d_model: 16, heads: 2, gru_hidden: 12, head_hidden: 10, vel_hidden: 6, vel_feature: 5, joints: 4, ..Default::default() },
            directions: 20,
            seed: 3,
            ..Default::default()
        };
        let reports = gradcheck(&cfg).unwrap();
        assert_eq!(reports.len(), BLOCKS.len() + 1);
        for r in &reports {
            assert!(r.passed, "{r:?}");
        }
    }
}
