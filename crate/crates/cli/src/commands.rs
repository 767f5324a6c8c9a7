//! Subcommand arguments and their pipelines.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use loco_core::harness::{
    gate_samples, rollout_trajectory, synthesize_gait, touchdown_mad, foothold_pass, GaitScript, Trajectory,
    TreadLayout,
};
use loco_core::policy::{self, gate_statistics, gradcheck, load_params, save_params, Parameters, PolicyParams};
use loco_core::render::{
    read_pgm16, read_sidecar, render_depth, write_pgm16, write_sidecar, CameraModel, CapsuleScene, DepthImage,
    Sidecar, Vec3,
};
use loco_core::rewards::{evaluate_all, RobotSnapshot};
use loco_core::terrain::{generate, read_heightfield, write_heightfield, Family, Heightfield, TerrainSpec};

use crate::config::Config;
use crate::{read_bytes, read_text, write_file, Cli, CliError, Command, Format, ReportOut};

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: loco_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseArg {
    pub position: Vec3,
    pub yaw: f64,
}

fn parse_pose(s: &str) -> Result<PoseArg, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        &[x, y, z, yaw] if v.iter().all(|c| c.is_finite()) => Ok(PoseArg { position: Vec3::new(x, y, z), yaw }),
        _ => Err("expected four finite values x,y,z,yaw".into()),
    }
}

#[derive(Debug, Args)]
pub struct GenTerrain {
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Stair riser height (m).
    #[arg(long)]
    pub rise: Option<f64>,
    /// Stair tread depth (m).
    #[arg(long)]
    pub tread: Option<f64>,
    #[arg(long)]
    pub gap_width: Option<f64>,
    #[arg(long)]
    pub platform_height: Option<f64>,
    #[arg(long)]
    pub extent: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Heightfield output file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RenderDepth {
    /// Heightfield file.
    #[arg(long)]
    pub terrain: PathBuf,
    /// Camera mount pose `x,y,z,yaw`; defaults to the head camera above the gait start.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_pose)]
    pub pose: Option<PoseArg>,
    /// PGM output; the sidecar is written next to it with `.txt` appended.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FootholdEval {
    /// Heightfield file.
    #[arg(long)]
    pub terrain: PathBuf,
    /// Line-delimited trajectory file.
    #[arg(long)]
    pub traj: PathBuf,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct RewardEval {
    /// JSON robot snapshot.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Placement reward to credit for this step.
    #[arg(long, default_value_t = 0.0)]
    pub foothold: f64,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct PolicyForward {
    /// Weight container; freshly initialised from the seed when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// JSON array holding the proprioceptive observation.
    #[arg(long)]
    pub obs: PathBuf,
    /// 16-bit PGM depth frame.
    #[arg(long)]
    pub depth: PathBuf,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct Gradcheck {
    /// Random directions per block.
    #[arg(long)]
    pub directions: Option<usize>,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct Rollout {
    /// Terrain spec (TOML) or heightfield file.
    #[arg(long)]
    pub terrain: PathBuf,
    /// Gait script (TOML); the config gait when omitted.
    #[arg(long)]
    pub gait: Option<PathBuf>,
    /// Rollout log output.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the sampled trajectory here.
    #[arg(long)]
    pub traj: Option<PathBuf>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// Write the summary here instead of stdout.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GateStats {
    /// Weight container; freshly initialised from the seed when omitted.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Comma-separated terrain families; all when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_family)]
    pub families: Vec<Family>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    pub report: ReportOut,
}

#[derive(Debug, Args)]
pub struct InitWeights {
    /// Weight container output.
    #[arg(long)]
    pub out: PathBuf,
}

struct Ctx {
    config: Config,
    format: Format,
}

impl Ctx {
    fn render(&self, records: &[Value]) -> Result<String, CliError> {
        let mut s = String::new();
        for r in records {
            let line = match self.format {
                Format::Lines => serde_json::to_string(r),
                Format::Pretty => serde_json::to_string_pretty(r),
            }
            .map_err(|e| CliError::Input(e.to_string()))?;
            s.push_str(&line);
            s.push('\n');
        }
        Ok(s)
    }

    fn emit(&self, out: Option<&Path>, records: &[Value]) -> Result<(), CliError> {
        emit_text(out, &self.render(records)?)
    }

    fn params(&self, weights: Option<&Path>) -> Result<PolicyParams<f64>, CliError> {
        Ok(match weights {
            Some(p) => load_params(&read_bytes(p)?)?,
            None => PolicyParams::init(self.config.policy, self.config.seed)?,
        })
    }
}

fn emit_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Input(e.to_string()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

/// A terrain argument is either a heightfield file or a TOML terrain spec.
fn load_terrain(path: &Path) -> Result<(Heightfield, Option<TerrainSpec>), CliError> {
    let text = read_text(path)?;
    if text.trim_start().starts_with("heightfield") {
        return Ok((read_heightfield(&text)?, None));
    }
    let spec: TerrainSpec = toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((generate(&spec)?, Some(spec)))
}

fn tread_layout(spec: Option<&TerrainSpec>) -> Option<TreadLayout> {
    spec.filter(|s| s.family.is_stairs()).map(|s| TreadLayout { start: 0.0, depth: s.tread })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let ctx = Ctx { config, format: cli.format };
    match cli.command {
        Command::GenTerrain(a) => gen_terrain(&ctx, a),
        Command::RenderDepth(a) => render(&ctx, a),
        Command::FootholdEval(a) => foothold_eval(&ctx, a),
        Command::RewardEval(a) => reward_eval(&ctx, a),
        Command::PolicyForward(a) => policy_forward(&ctx, a),
        Command::Gradcheck(a) => run_gradcheck(&ctx, a),
        Command::Rollout(a) => rollout(&ctx, a),
        Command::GateStats(a) => gate_stats(&ctx, a),
        Command::InitWeights(a) => init_weights(&ctx, a),
        Command::ShowConfig(a) => emit_text(a.out.as_deref(), &ctx.config.to_toml()?),
    }
}

fn gen_terrain(ctx: &Ctx, a: GenTerrain) -> Result<(), CliError> {
    let mut spec = ctx.config.terrain.clone();
    spec.seed = ctx.config.seed;
    let overrides = [
        (&mut spec.rise, a.rise),
        (&mut spec.tread, a.tread),
        (&mut spec.gap_width, a.gap_width),
        (&mut spec.platform_height, a.platform_height),
        (&mut spec.extent, a.extent),
        (&mut spec.width, a.width),
        (&mut spec.resolution, a.resolution),
    ];
    for (field, flag) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(f) = a.family {
        spec.family = f;
    }
    let hf = generate(&spec)?;
    write_file(&a.out, write_heightfield(&hf))?;
    let (lo, hi) = hf.min_max_elevation();
    ctx.emit(
        None,
        &[json!({
            "family": spec.family.name(),
            "nx": hf.nx(),
            "ny": hf.ny(),
            "resolution": hf.resolution(),
            "min_elevation": lo,
            "max_elevation": hi,
        })],
    )
}

fn render(ctx: &Ctx, a: RenderDepth) -> Result<(), CliError> {
    let hf = read_heightfield(&read_text(&a.terrain)?)?;
    let vision = &ctx.config.vision;
    let pose = match a.pose {
        Some(p) => p,
        None => {
            let g = &ctx.config.gait;
            let ground = hf.sample_height(g.start.x, g.start.y)?;
            let (c, s) = (g.start.yaw.cos(), g.start.yaw.sin());
            PoseArg {
                position: Vec3::new(
                    g.start.x + c * vision.mount_forward,
                    g.start.y + s * vision.mount_forward,
                    ground + g.base_height + vision.mount_height,
                ),
                yaw: g.start.yaw,
            }
        }
    };
    let cam = CameraModel::at(&vision.camera, pose.position, pose.yaw)?;
    let img = render_depth(&cam, &hf, &CapsuleScene::empty())?;
    write_file(&a.out, write_pgm16(&img))?;
    write_file(&with_suffix(&a.out, ".txt"), write_sidecar(&Sidecar::from(&cam)))?;
    let hits: Vec<f64> = img.raw().iter().copied().filter(|&r| r < img.d_max()).collect();
    ctx.emit(
        None,
        &[json!({
            "width": img.width(),
            "height": img.height(),
            "hits": hits.len(),
            "min_range": hits.iter().copied().reduce(f64::min),
            "max_range": hits.iter().copied().reduce(f64::max),
        })],
    )
}

fn foothold_eval(ctx: &Ctx, a: FootholdEval) -> Result<(), CliError> {
    let hf = read_heightfield(&read_text(&a.terrain)?)?;
    let traj = Trajectory::from_lines(&read_text(&a.traj)?)?;
    let pass = foothold_pass(&traj, &hf, &ctx.config.rollout_config(None))?;
    let records = pass.touchdowns.iter().map(to_value).collect::<Result<Vec<_>, _>>()?;
    ctx.emit(a.report.out.as_deref(), &records)
}

fn reward_eval(ctx: &Ctx, a: RewardEval) -> Result<(), CliError> {
    let snap: RobotSnapshot = serde_json::from_str(&read_text(&a.snapshot)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.snapshot.display())))?;
    let b = evaluate_all(&snap, a.foothold, &ctx.config.rewards)?;
    let mut records = b.terms.iter().map(to_value).collect::<Result<Vec<_>, _>>()?;
    records.push(json!({ "total": b.total }));
    ctx.emit(a.report.out.as_deref(), &records)
}

fn policy_forward(ctx: &Ctx, a: PolicyForward) -> Result<(), CliError> {
    let params = ctx.params(a.weights.as_deref())?;
    let dims = params.dims;
    let obs: Vec<f64> = serde_json::from_str(&read_text(&a.obs)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.obs.display())))?;
    let (w, h, samples) = read_pgm16(&read_bytes(&a.depth)?)?;
    let sidecar = with_suffix(&a.depth, ".txt");
    let d_max = if sidecar.exists() { read_sidecar(&read_text(&sidecar)?)?.d_max } else { ctx.config.vision.camera.d_max };
    let img = DepthImage::from_pgm_samples(w, h, d_max, &samples)?;
    if (w, h) != (dims.depth_width, dims.depth_height) {
        return Err(CliError::Input(format!(
            "depth frame is {w}x{h}, policy expects {}x{}",
            dims.depth_width, dims.depth_height
        )));
    }
    let nominal = &ctx.config.robot.nominal_pose;
    if nominal.len() != dims.joints {
        return Err(CliError::Input(format!("robot has {} joints, policy {}", nominal.len(), dims.joints)));
    }
    let state = policy::PolicyState::zeros(&dims);
    let out = policy::forward_with(&params, &obs, img.normalized(), &state, nominal, false)?;
    let t = &out.trace;
    ctx.emit(
        a.report.out.as_deref(),
        &[json!({
            "action": out.action,
            "target": out.target,
            "velocity": out.velocity,
            "gate_mean": t.gate_mean(),
            "gate": t.gate,
            "attention_weights": t.attention_weights,
        })],
    )
}

fn run_gradcheck(ctx: &Ctx, a: Gradcheck) -> Result<(), CliError> {
    let mut cfg = ctx.config.gradcheck_config();
    if let Some(d) = a.directions {
        cfg.directions = d;
    }
    let reports = gradcheck(&cfg)?;
    let records = reports.iter().map(to_value).collect::<Result<Vec<_>, _>>()?;
    ctx.emit(a.report.out.as_deref(), &records)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.block.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("gradient mismatch in {}", failed.join(", "))))
    }
}

fn rollout(ctx: &Ctx, a: Rollout) -> Result<(), CliError> {
    let (hf, spec) = load_terrain(&a.terrain)?;
    let script: GaitScript = match &a.gait {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => ctx.config.gait.clone(),
    };
    let duration = a.duration.unwrap_or(ctx.config.rollout.duration);
    let cfg = ctx.config.rollout_config(tread_layout(spec.as_ref()));
    let traj = synthesize_gait(&script, &hf, duration)?;
    let log = rollout_trajectory(&traj, &hf, &cfg)?;
    write_file(&a.out, log.to_lines()?)?;
    if let Some(p) = &a.traj {
        write_file(p, traj.to_lines()?)?;
    }
    let n = log.touchdowns.len();
    let mean_reward = (n > 0).then(|| log.touchdowns.iter().map(|t| t.reward).sum::<f64>() / n as f64);
    let total: f64 = log.steps.iter().map(|s| s.rewards.total).sum();
    ctx.emit(
        a.summary.as_deref(),
        &[json!({
            "steps": log.steps.len(),
            "events": log.events.len(),
            "touchdowns": n,
            "mean_foothold_reward": mean_reward,
            "touchdown_mad": touchdown_mad(&log).ok(),
            "return": total,
        })],
    )
}

fn gate_stats(ctx: &Ctx, a: GateStats) -> Result<(), CliError> {
    let params = ctx.params(a.weights.as_deref())?;
    let families = if a.families.is_empty() { Family::ALL.to_vec() } else { a.families };
    let duration = a.duration.unwrap_or(ctx.config.rollout.duration);
    let cfg = ctx.config.rollout_config(None);
    let per_family: Vec<Result<Vec<_>, CliError>> = families
        .par_iter()
        .map(|&family| {
            let spec = TerrainSpec { family, ..ctx.config.terrain.clone() };
            let hf = generate(&spec)?;
            let traj = synthesize_gait(&ctx.config.gait, &hf, duration)?;
            let log = rollout_trajectory(&traj, &hf, &cfg)?;
            Ok(gate_samples(&params, &traj, &log, &hf, &ctx.config.vision, family.name())?)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_family {
        samples.extend(r?);
    }
    let groups = gate_statistics(&samples)?;
    let records = groups.iter().map(to_value).collect::<Result<Vec<_>, _>>()?;
    ctx.emit(a.report.out.as_deref(), &records)
}

fn init_weights(ctx: &Ctx, a: InitWeights) -> Result<(), CliError> {
    let params = PolicyParams::<f32>::init(ctx.config.policy, ctx.config.seed)?;
    let bytes = save_params(&params);
    write_file(&a.out, &bytes)?;
    let count = params.parameter_count();
    ctx.emit(
        None,
        &[json!({
            "parameters": count,
            "bytes": bytes.len(),
            "checksum": format!("{:016x}", policy::container::fnv1a64(&bytes[..bytes.len() - 8])),
        })],
    )
}
