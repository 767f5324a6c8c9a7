//! Depth-conditioned recurrent policy network.
//!
//! Depth tokens are queried by a proprioceptive token through multi-head attention, mixed
//! by a gated residual block, integrated over time by a GRU and blended with the
//! feedforward features through a highway gate before the action head. An auxiliary LSTM
//! estimates base velocity from proprioception and compressed depth.
//!
//! Every block has an analytic backward pass. All code is generic over [`Real`]; `f64`
//! is used for gradient verification and `f32` for throughput.

pub mod blocks;
pub mod container;
pub mod gates;
pub mod gradcheck;
pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use blocks::{
    ActionHead, CrossAttention, DepthTokenizer, GatedResidualFusion, HighwayGate, RecurrentFusion, VelocityEstimator,
    TOKENIZER_CHANNELS, VELOCITY_CHANNELS,
};
pub use container::{load_params, save_params};
pub use gates::{gate_statistics, ContactLabel, GateGroup, GateSample, PostureLabel, RISK_ANGLE};
pub use gradcheck::{gradcheck, BlockReport, GradcheckConfig};
pub use layers::{c, Parameters, Real, Tensor};
use layers::{impl_parameters, GruCache};

/// Network dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyDims {
    pub joints: usize,
    pub depth_width: usize,
    pub depth_height: usize,
    pub d_model: usize,
    pub heads: usize,
    pub gru_hidden: usize,
    pub head_hidden: usize,
    pub vel_hidden: usize,
    pub vel_feature: usize,
}

impl Default for PolicyDims {
    fn default() -> Self {
        Self {
            joints: 12,
            depth_width: 64,
            depth_height: 48,
            d_model: 64,
            heads: 4,
            gru_hidden: 128,
            head_hidden: 128,
            vel_hidden: 64,
            vel_feature: 32,
        }
    }
}

impl PolicyDims {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.joints,
            self.depth_width,
            self.depth_height,
            self.d_model,
            self.heads,
            self.gru_hidden,
            self.head_hidden,
            self.vel_hidden,
            self.vel_feature,
        ];
        if all.contains(&0) {
            return Err(Error::Spec(format!("policy dimensions must be positive: {self:?}")));
        }
        if self.depth_width % 16 != 0 || self.depth_height % 16 != 0 {
            return Err(Error::Spec("depth image sides must be multiples of 16".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Spec("d_model must be divisible by heads".into()));
        }
        Ok(())
    }

    /// Angular velocity, gravity, command, joint offsets, joint velocities, previous action.
    pub fn obs_dim(&self) -> usize {
        9 + 3 * self.joints
    }

    pub fn token_grid(&self) -> (usize, usize) {
        (self.depth_height / 16, self.depth_width / 16)
    }

    pub fn tokens(&self) -> usize {
        let (h, w) = self.token_grid();
        h * w
    }

    pub fn depth_len(&self) -> usize {
        self.depth_width * self.depth_height
    }

    /// Width of the fused feature.
    pub fn fused(&self) -> usize {
        2 * self.d_model
    }

    fn velocity_flat(&self) -> usize {
        VELOCITY_CHANNELS[1] * (self.depth_height / 4) * (self.depth_width / 4)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<R> {
    pub dims: PolicyDims,
    pub tokenizer: DepthTokenizer<R>,
    pub proprio: layers::Linear<R>,
    pub attention: CrossAttention<R>,
    pub grf: GatedResidualFusion<R>,
    pub recurrent: RecurrentFusion<R>,
    pub highway: HighwayGate<R>,
    pub head: ActionHead<R>,
    pub velocity: VelocityEstimator<R>,
}
impl_parameters!(PolicyParams { tokenizer, proprio, attention, grf, recurrent, highway, head, velocity });

/// Top-level parameter groups, used for per-block gradient checks.
pub const BLOCKS: [&str; 8] = ["tokenizer", "proprio", "attention", "grf", "recurrent", "highway", "head", "velocity"];

impl<R: Real> PolicyParams<R> {
    /// Fan-in scaled uniform initialisation from `seed`; layer-norm scales start at one.
    pub fn init(dims: PolicyDims, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dims.d_model;
        let fused = dims.fused();
        Ok(Self {
            dims,
            tokenizer: DepthTokenizer::init(d, &mut rng),
            proprio: layers::Linear::init(dims.obs_dim() + 3, d, true, &mut rng),
            attention: CrossAttention::init(d, dims.heads, &mut rng),
            grf: GatedResidualFusion::init(fused, &mut rng),
            recurrent: RecurrentFusion::init(fused, dims.gru_hidden, &mut rng),
            highway: HighwayGate::init(fused, &mut rng),
            head: ActionHead::init(fused, dims.head_hidden, dims.joints, &mut rng),
            velocity: VelocityEstimator::init(dims.obs_dim(), dims.velocity_flat(), dims.vel_feature, dims.vel_hidden, &mut rng),
        })
    }

    pub fn cast<S: Real>(&self) -> PolicyParams<S> {
        let mut out = PolicyParams::<S>::init(self.dims, 0).expect("dims already validated");
        for ((_, dst), (_, src)) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }
}

/// Recurrent state carried between control steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState<R> {
    pub hidden: Vec<R>,
    pub vel_hidden: Vec<R>,
    pub vel_cell: Vec<R>,
    pub prev_action: Vec<R>,
}

impl<R: Real> PolicyState<R> {
    pub fn zeros(dims: &PolicyDims) -> Self {
        Self {
            hidden: vec![R::zero(); dims.gru_hidden],
            vel_hidden: vec![R::zero(); dims.vel_hidden],
            vel_cell: vec![R::zero(); dims.vel_hidden],
            prev_action: vec![R::zero(); dims.joints],
        }
    }

    pub fn reset(&mut self) {
        for v in [&mut self.hidden, &mut self.vel_hidden, &mut self.vel_cell, &mut self.prev_action] {
            v.iter_mut().for_each(|x| *x = R::zero());
        }
    }
}

#[derive(Debug, Clone)]
struct Caches<R> {
    depth: Vec<R>,
    proprio_in: Vec<R>,
    tokenizer: blocks::TokenizerCache<R>,
    attention: blocks::AttentionCache<R>,
    grf: blocks::GrfCache<R>,
    gru: GruCache<R>,
    head: blocks::HeadCache<R>,
    velocity: blocks::VelocityCache<R>,
}

/// Intermediates of one forward step.
#[derive(Debug, Clone)]
pub struct ForwardTrace<R> {
    pub tokens: Vec<Vec<R>>,
    pub velocity: Vec<R>,
    pub proprio_token: Vec<R>,
    pub attended: Vec<R>,
    /// per head, attention weights over tokens
    pub attention_weights: Vec<Vec<R>>,
    /// concatenated head outputs before the output projection
    pub attention_heads: Vec<R>,
    pub fusion_input: Vec<R>,
    pub fused: Vec<R>,
    pub hidden: Vec<R>,
    pub recurrent: Vec<R>,
    pub gate: Vec<R>,
    pub blended: Vec<R>,
    pub action: Vec<R>,
    caches: Option<Box<Caches<R>>>,
}

impl<R: Real> ForwardTrace<R> {
    pub fn has_caches(&self) -> bool {
        self.caches.is_some()
    }

    /// Drop the backward caches, keeping the analysis fields.
    pub fn strip(mut self) -> Self {
        self.caches = None;
        self
    }

    pub fn gate_mean(&self) -> R {
        self.gate.iter().copied().sum::<R>() / c(self.gate.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct PolicyOutput<R> {
    pub action: Vec<R>,
    /// joint position targets around the nominal pose
    pub target: Vec<R>,
    pub velocity: Vec<R>,
    pub state: PolicyState<R>,
    pub trace: ForwardTrace<R>,
}

fn check_len(name: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Shape(format!("{name} has length {got}, expected {want}")));
    }
    Ok(())
}

/// Validate a normalised depth image.
pub fn check_depth<R: Real>(dims: &PolicyDims, depth: &[R]) -> Result<()> {
    check_len("depth image", depth.len(), dims.depth_len())?;
    let lim = c::<R>(0.5);
    if let Some(v) = depth.iter().find(|v| !(v.abs() <= lim)) {
        return Err(Error::Range(format!("normalised depth {v:?} outside [-0.5, 0.5]")));
    }
    Ok(())
}

fn check_state<R: Real>(dims: &PolicyDims, s: &PolicyState<R>) -> Result<()> {
    check_len("hidden state", s.hidden.len(), dims.gru_hidden)?;
    check_len("velocity hidden state", s.vel_hidden.len(), dims.vel_hidden)?;
    check_len("velocity cell state", s.vel_cell.len(), dims.vel_hidden)?;
    check_len("previous action", s.prev_action.len(), dims.joints)
}

/// Depth image to `N × d` tokens.
pub fn tokenize_depth<R: Real>(p: &PolicyParams<R>, depth: &[R]) -> Result<Vec<Vec<R>>> {
    check_depth(&p.dims, depth)?;
    Ok(p.tokenizer.forward(depth, p.dims.depth_height, p.dims.depth_width).0)
}

/// One estimator step; returns the velocity estimate and the new LSTM state.
pub fn estimate_velocity<R: Real>(
    p: &PolicyParams<R>,
    obs: &[R],
    depth: &[R],
    state: &PolicyState<R>,
) -> Result<(Vec<R>, Vec<R>, Vec<R>)> {
    check_len("observation", obs.len(), p.dims.obs_dim())?;
    check_depth(&p.dims, depth)?;
    check_state(&p.dims, state)?;
    let (v, h, c, _) =
        p.velocity.forward(obs, depth, p.dims.depth_height, p.dims.depth_width, &state.vel_hidden, &state.vel_cell);
    Ok((v, h, c))
}

/// Squared ℓ2 error of the velocity estimate and its gradient.
pub fn velocity_loss<R: Real>(estimate: &[R], truth: &[R]) -> Result<(R, Vec<R>)> {
    check_len("velocity truth", truth.len(), estimate.len())?;
    let diff: Vec<R> = estimate.iter().zip(truth).map(|(&a, &b)| a - b).collect();
    let loss = diff.iter().map(|&d| d * d).sum();
    Ok((loss, diff.iter().map(|&d| d + d).collect()))
}

/// Attention output and per-head weights.
pub fn cross_attention<R: Real>(p: &PolicyParams<R>, query: &[R], tokens: &[Vec<R>]) -> Result<(Vec<R>, Vec<Vec<R>>)> {
    let d = p.dims.d_model;
    check_len("query", query.len(), d)?;
    if tokens.is_empty() {
        return Err(Error::Shape("attention needs at least one token".into()));
    }
    for t in tokens {
        check_len("token", t.len(), d)?;
    }
    let (out, cache) = p.attention.forward(query, tokens);
    Ok((out, cache.weights))
}

pub fn gated_residual_fusion<R: Real>(p: &PolicyParams<R>, x: &[R]) -> Result<Vec<R>> {
    check_len("fusion input", x.len(), p.dims.fused())?;
    Ok(p.grf.forward(x).0)
}

/// Returns `(h_t, z_rec)`.
pub fn recurrent_step<R: Real>(p: &PolicyParams<R>, f: &[R], h_prev: &[R]) -> Result<(Vec<R>, Vec<R>)> {
    check_len("fused feature", f.len(), p.dims.fused())?;
    check_len("hidden state", h_prev.len(), p.dims.gru_hidden)?;
    let (h, z, _) = p.recurrent.forward(f, h_prev);
    Ok((h, z))
}

/// Returns `(y, β)`.
pub fn highway_blend<R: Real>(p: &PolicyParams<R>, z: &[R], f: &[R]) -> Result<(Vec<R>, Vec<R>)> {
    check_len("recurrent feature", z.len(), p.dims.fused())?;
    check_len("fused feature", f.len(), p.dims.fused())?;
    Ok(p.highway.forward(z, f))
}

/// One full control step.
pub fn forward<R: Real>(
    p: &PolicyParams<R>,
    obs: &[R],
    depth: &[R],
    state: &PolicyState<R>,
    nominal_pose: &[R],
) -> Result<PolicyOutput<R>> {
    forward_with(p, obs, depth, state, nominal_pose, true)
}

/// As [`forward`]; with `keep_caches = false` the trace cannot be used for backward.
pub fn forward_with<R: Real>(
    p: &PolicyParams<R>,
    obs: &[R],
    depth: &[R],
    state: &PolicyState<R>,
    nominal_pose: &[R],
    keep_caches: bool,
) -> Result<PolicyOutput<R>> {
    let dims = &p.dims;
    check_len("observation", obs.len(), dims.obs_dim())?;
    check_len("nominal pose", nominal_pose.len(), dims.joints)?;
    check_depth(dims, depth)?;
    check_state(dims, state)?;
    let (h, w) = (dims.depth_height, dims.depth_width);

    let (velocity, vel_hidden, vel_cell, vcache) =
        p.velocity.forward(obs, depth, h, w, &state.vel_hidden, &state.vel_cell);
    let proprio_in: Vec<R> = obs.iter().chain(&velocity).copied().collect();
    let proprio_token = layers::elu_vec(&p.proprio.forward(&proprio_in));
    let (tokens, tcache) = p.tokenizer.forward(depth, h, w);
    let (attended, acache) = p.attention.forward(&proprio_token, &tokens);
    let fusion_input: Vec<R> = proprio_token.iter().chain(&attended).copied().collect();
    let (fused, gcache) = p.grf.forward(&fusion_input);
    let (hidden, recurrent, rcache) = p.recurrent.forward(&fused, &state.hidden);
    let (blended, gate) = p.highway.forward(&recurrent, &fused);
    let (action, hcache) = p.head.forward(&blended);
    let target = nominal_pose.iter().zip(&action).map(|(&q, &a)| q + a).collect();

    let new_state =
        PolicyState { hidden: hidden.clone(), vel_hidden, vel_cell, prev_action: action.clone() };
    let caches = keep_caches.then(|| {
        Box::new(Caches {
            depth: depth.to_vec(),
            proprio_in,
            tokenizer: tcache,
            attention: acache.clone(),
            grf: gcache,
            gru: rcache,
            head: hcache,
            velocity: vcache,
        })
    });
    let trace = ForwardTrace {
        tokens,
        velocity: velocity.clone(),
        proprio_token,
        attended,
        attention_weights: acache.weights,
        attention_heads: acache.heads_concat,
        fusion_input,
        fused,
        hidden,
        recurrent,
        gate,
        blended,
        action: action.clone(),
        caches,
    };
    Ok(PolicyOutput { action, target, velocity, state: new_state, trace })
}

/// Gradients of a scalar objective with respect to the step outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Upstream<R> {
    pub action: Vec<R>,
    pub velocity: Vec<R>,
    pub hidden: Vec<R>,
    pub vel_hidden: Vec<R>,
    pub vel_cell: Vec<R>,
}

impl<R: Real> Upstream<R> {
    pub fn zeros(dims: &PolicyDims) -> Self {
        Self {
            action: vec![R::zero(); dims.joints],
            velocity: vec![R::zero(); 3],
            hidden: vec![R::zero(); dims.gru_hidden],
            vel_hidden: vec![R::zero(); dims.vel_hidden],
            vel_cell: vec![R::zero(); dims.vel_hidden],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients<R> {
    pub params: PolicyParams<R>,
    pub obs: Vec<R>,
    pub depth: Vec<R>,
    pub hidden: Vec<R>,
    pub vel_hidden: Vec<R>,
    pub vel_cell: Vec<R>,
}

/// Analytic gradients of `⟨upstream, outputs⟩` for one step.
pub fn backward<R: Real>(p: &PolicyParams<R>, trace: &ForwardTrace<R>, up: &Upstream<R>) -> Result<Gradients<R>> {
    let cache = trace
        .caches
        .as_deref()
        .ok_or_else(|| Error::State("forward trace was produced without backward caches".into()))?;
    let dims = &p.dims;
    check_len("action gradient", up.action.len(), dims.joints)?;
    check_len("velocity gradient", up.velocity.len(), 3)?;
    check_len("hidden gradient", up.hidden.len(), dims.gru_hidden)?;
    check_len("velocity hidden gradient", up.vel_hidden.len(), dims.vel_hidden)?;
    check_len("velocity cell gradient", up.vel_cell.len(), dims.vel_hidden)?;
    let d = dims.d_model;
    let mut g = p.zeros_like();

    let dy = p.head.backward(&trace.blended, &cache.head, &up.action, &mut g.head);
    let (dz, mut df) = p.highway.backward(&trace.recurrent, &trace.fused, &trace.gate, &dy, &mut g.highway);
    let (df_rec, dh_prev) = p.recurrent.backward(&cache.gru, &trace.hidden, &dz, &up.hidden, &mut g.recurrent);
    for (a, b) in df.iter_mut().zip(df_rec) {
        *a += b;
    }
    let dx = p.grf.backward(&cache.grf, &df, &mut g.grf);
    let (dq, dtokens) = p.attention.backward(&cache.attention, &dx[d..], &mut g.attention);
    let mut de_p = dx[..d].to_vec();
    for (a, b) in de_p.iter_mut().zip(dq) {
        *a += b;
    }
    let mut d_depth = p.tokenizer.backward(&cache.depth, &cache.tokenizer, &dtokens, &mut g.tokenizer);
    let dpre = layers::elu_backward(&trace.proprio_token, &de_p);
    let dproprio_in = p.proprio.backward(&cache.proprio_in, &dpre, &mut g.proprio);
    let obs_dim = dims.obs_dim();
    let mut dv = up.velocity.clone();
    for (a, &b) in dv.iter_mut().zip(&dproprio_in[obs_dim..]) {
        *a += b;
    }
    let (d_obs_v, d_depth_v, dhv, dcv) =
        p.velocity.backward(&cache.depth, obs_dim, &cache.velocity, &dv, &up.vel_hidden, &up.vel_cell, &mut g.velocity);
    let d_obs = (0..obs_dim).map(|i| dproprio_in[i] + d_obs_v[i]).collect();
    for (a, b) in d_depth.iter_mut().zip(d_depth_v) {
        *a += b;
    }
    Ok(Gradients { params: g, obs: d_obs, depth: d_depth, hidden: dh_prev, vel_hidden: dhv, vel_cell: dcv })
}

/// Proprioceptive observation vector.
pub fn proprio_observation(
    ang_vel: &[f64; 3],
    gravity: &[f64; 3],
    command: &[f64; 3],
    joint_pos: &[f64],
    nominal_pose: &[f64],
    joint_vel: &[f64],
    prev_action: &[f64],
) -> Result<Vec<f64>> {
    let n = joint_pos.len();
    check_len("nominal pose", nominal_pose.len(), n)?;
    check_len("joint velocities", joint_vel.len(), n)?;
    check_len("previous action", prev_action.len(), n)?;
    let mut v = Vec::with_capacity(9 + 3 * n);
    v.extend_from_slice(ang_vel);
    v.extend_from_slice(gravity);
    v.extend_from_slice(command);
    v.extend(joint_pos.iter().zip(nominal_pose).map(|(q, q0)| q - q0));
    v.extend_from_slice(joint_vel);
    v.extend_from_slice(prev_action);
    Ok(v)
}

/// Privileged critic input: observation, true base velocity and terrain heights.
pub fn critic_state(obs: &[f64], lin_vel: &[f64; 3], heights: &[f64]) -> Vec<f64> {
    obs.iter().chain(lin_vel).chain(heights).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small() -> PolicyDims {
        PolicyDims { gru_hidden: 16, head_hidden: 16, vel_hidden: 8, d_model: 16, heads: 4, ..Default::default() }
    }

    fn inputs(dims: &PolicyDims, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..dims.obs_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let depth = (0..dims.depth_len()).map(|_| rng.random_range(-0.5..0.5)).collect();
        (obs, depth)
    }

    #[test]
    fn shapes_and_invariants() {
        let dims = PolicyDims::default();
        let p = PolicyParams::<f64>::init(dims, 3).unwrap();
        let (obs, depth) = inputs(&dims, 1);
        let s = PolicyState::zeros(&dims);
        let out = forward(&p, &obs, &depth, &s, &vec![0.1; 12]).unwrap();
        assert_eq!(out.trace.tokens.len(), 12);
        assert_eq!(out.trace.tokens[0].len(), 64);
        assert_eq!(out.trace.fused.len(), 128);
        for w in &out.trace.attention_weights {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        assert!(out.trace.gate.iter().all(|&b| b > 0.0 && b < 1.0));
        for (t, a) in out.target.iter().zip(&out.action) {
            assert_eq!(*t, 0.1 + a);
        }
    }

    #[test]
    fn deterministic_and_reset() {
        let dims = small();
        let p = PolicyParams::<f64>::init(dims, 9).unwrap();
        let (obs, depth) = inputs(&dims, 2);
        let q0 = vec![0.0; dims.joints];
        let s0 = PolicyState::zeros(&dims);
        let a = forward(&p, &obs, &depth, &s0, &q0).unwrap();
        let b = forward(&p, &obs, &depth, &s0, &q0).unwrap();
        assert_eq!(a.action, b.action);
        let mut s = a.state.clone();
        s.reset();
        assert_eq!(forward(&p, &obs, &depth, &s, &q0).unwrap().action, a.action);
    }

    #[test]
    fn zero_head_gives_nominal_targets() {
        let dims = small();
        let mut p = PolicyParams::<f64>::init(dims, 4).unwrap();
        for (_, t) in p.head.l3.tensors_mut() {
            t.fill_zero();
        }
        let (obs, depth) = inputs(&dims, 3);
        let q0: Vec<f64> = (0..dims.joints).map(|j| j as f64 * 0.1).collect();
        let out = forward(&p, &obs, &depth, &PolicyState::zeros(&dims), &q0).unwrap();
        assert_eq!(out.target, q0);
    }

    #[test]
    fn gate_bias_extremes() {
        let dims = small();
        let mut p = PolicyParams::<f64>::init(dims, 5).unwrap();
        let (obs, depth) = inputs(&dims, 4);
        let s = PolicyState::zeros(&dims);
        let q0 = vec![0.0; dims.joints];
        let m = dims.fused();
        let grf_bias = p.grf.w2.bias.as_mut().unwrap();
        grf_bias.data[m..].iter_mut().for_each(|b| *b = -20.0);
        p.highway.w_beta.bias.as_mut().unwrap().data.iter_mut().for_each(|b| *b = -20.0);
        let t = forward(&p, &obs, &depth, &s, &q0).unwrap().trace;
        let inf = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(inf(&t.fused, &t.fusion_input) < 1e-6);
        assert!(inf(&t.blended, &t.fused) < 1e-6);
        p.highway.w_beta.bias.as_mut().unwrap().data.iter_mut().for_each(|b| *b = 30.0);
        let t = forward(&p, &obs, &depth, &s, &q0).unwrap().trace;
        assert!(inf(&t.blended, &t.recurrent) < 1e-6);
    }

    #[test]
    fn input_validation() {
        let dims = small();
        let p = PolicyParams::<f64>::init(dims, 5).unwrap();
        let (obs, mut depth) = inputs(&dims, 5);
        let s = PolicyState::zeros(&dims);
        let q0 = vec![0.0; dims.joints];
        assert!(matches!(forward(&p, &obs[1..], &depth, &s, &q0), Err(Error::Shape(_))));
        depth[7] = 0.6;
        assert!(matches!(forward(&p, &obs, &depth, &s, &q0), Err(Error::Range(_))));
        depth[7] = f64::NAN;
        assert!(forward(&p, &obs, &depth, &s, &q0).is_err());
    }

    #[test]
    fn backward_needs_caches_and_zero_upstream_is_zero() {
        let dims = small();
        let p = PolicyParams::<f64>::init(dims, 6).unwrap();
        let (obs, depth) = inputs(&dims, 6);
        let s = PolicyState::zeros(&dims);
        let q0 = vec![0.0; dims.joints];
        let out = forward_with(&p, &obs, &depth, &s, &q0, false).unwrap();
        assert!(matches!(backward(&p, &out.trace, &Upstream::zeros(&dims)), Err(Error::State(_))));
        let out = forward(&p, &obs, &depth, &s, &q0).unwrap();
        let g = backward(&p, &out.trace, &Upstream::zeros(&dims)).unwrap();
        assert!(g.params.tensors().iter().all(|(_, t)| t.data.iter().all(|&v| v == 0.0)));
        assert!(g.obs.iter().chain(&g.depth).all(|&v| v == 0.0));
    }

    #[test]
    fn single_precision_path_tracks_double() {
        let dims = small();
        let p = PolicyParams::<f64>::init(dims, 8).unwrap();
        let pf: PolicyParams<f32> = p.cast();
        let (obs, depth) = inputs(&dims, 8);
        let q0 = vec![0.0; dims.joints];
        let a = forward(&p, &obs, &depth, &PolicyState::zeros(&dims), &q0).unwrap().action;
        let obs32: Vec<f32> = obs.iter().map(|&v| v as f32).collect();
        let depth32: Vec<f32> = depth.iter().map(|&v| v as f32).collect();
        let b = forward(&pf, &obs32, &depth32, &PolicyState::zeros(&dims), &vec![0.0f32; dims.joints])
            .unwrap()
            .action;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn observation_layout() {
        let v = proprio_observation(&[1.0, 2.0, 3.0], &[0.0, 0.0, -1.0], &[0.5, 0.0, 0.1], &[0.3, 0.4], &[0.1, 0.1], &[9.0, 8.0], &[7.0, 6.0])
            .unwrap();
        assert_eq!(v.len(), 15);
        assert!((v[9] - 0.2).abs() < 1e-15);
        assert_eq!(&v[11..], &[9.0, 8.0, 7.0, 6.0]);
        assert_eq!(critic_state(&v, &[1.0, 0.0, 0.0], &[0.5]).len(), 19);
    }

    #[test]
    fn velocity_loss_zero_at_truth() {
        let (l, g) = velocity_loss(&[0.3, 0.1, 0.0], &[0.3, 0.1, 0.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }
}
