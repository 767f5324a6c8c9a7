//! 16-bit binary PGM (P5) depth frames plus a text sidecar with the camera metadata.

use std::fmt::Write as _;

use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion};

use super::{CameraModel, DepthImage};
use crate::error::{FormatError, Result};

const MAXVAL: f64 = 65535.0;

/// Encode `raw` depth as P5 with big-endian 16-bit samples scaled by `65535 / d_max`.
pub fn write_pgm16(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(img.raw().len() * 2);
    let scale = MAXVAL / img.d_max();
    for &r in img.raw() {
        let q = (r * scale).round().clamp(0.0, MAXVAL) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

/// Decode a P5 file with maxval 65535. Returns `(width, height, samples)`.
pub fn read_pgm16(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>)> {
    if !bytes.starts_with(b"P5") {
        return Err(FormatError::BadMagic.into());
    }
    // header: magic, width, height, maxval separated by whitespace, then one whitespace byte
    let mut fields = Vec::with_capacity(3);
    let mut pos = 2;
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::Malformed("bad PGM header".into()).into());
        }
        let v: usize = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| FormatError::Malformed("bad PGM header number".into()))?;
        fields.push(v);
    }
    let (w, h, maxval) = (fields[0], fields[1], fields[2]);
    if maxval != 65535 {
        return Err(FormatError::Malformed(format!("expected maxval 65535, got {maxval}")).into());
    }
    pos += 1;
    let need = w * h * 2;
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() < need {
        return Err(FormatError::Truncated(format!("{} of {need} sample bytes", body.len())).into());
    }
    let samples = body[..need].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok((w, h, samples))
}

impl DepthImage {
    /// Rebuild a frame from quantised PGM samples.
    pub fn from_pgm_samples(width: usize, height: usize, d_max: f64, samples: &[u16]) -> Result<Self> {
        let raw = samples.iter().map(|&s| s as f64 * d_max / MAXVAL).collect();
        Self::from_raw(width, height, d_max, raw)
    }
}

/// Metadata written next to each PGM.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub d_max: f64,
    pub width: usize,
    pub height: usize,
    pub vertical_fov: f64,
    pub pitch_down: f64,
    pub pose: Isometry3<f64>,
}

impl From<&CameraModel> for Sidecar {
    fn from(cam: &CameraModel) -> Self {
        Self {
            d_max: cam.d_max,
            width: cam.width,
            height: cam.height,
            vertical_fov: cam.vertical_fov,
            pitch_down: cam.pitch_down,
            pose: cam.pose,
        }
    }
}

pub fn write_sidecar(meta: &Sidecar) -> String {
    let t = meta.pose.translation.vector;
    let q = meta.pose.rotation.quaternion();
    let mut s = String::new();
    let _ = writeln!(s, "d_max {}", meta.d_max);
    let _ = writeln!(s, "size {} {}", meta.width, meta.height);
    let _ = writeln!(s, "vertical_fov {}", meta.vertical_fov);
    let _ = writeln!(s, "pitch_down {}", meta.pitch_down);
    let _ = writeln!(s, "position {} {} {}", t.x, t.y, t.z);
    let _ = writeln!(s, "rotation_wxyz {} {} {} {}", q.w, q.i, q.j, q.k);
    s
}

pub fn read_sidecar(text: &str) -> Result<Sidecar> {
    let mut d_max = None;
    let mut size = None;
    let mut vfov = None;
    let mut pitch = None;
    let mut pos = None;
    let mut rot = None;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut toks = line.split_whitespace();
        let key = toks.next().unwrap_or_default();
        let nums: Vec<f64> = toks
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::Malformed(format!("sidecar `{key}`: {e}")))?;
        let want = |n: usize| -> Result<(), FormatError> {
            if nums.len() == n {
                Ok(())
            } else {
                Err(FormatError::Malformed(format!("sidecar `{key}` expects {n} values")))
            }
        };
        match key {
            "d_max" => {
                want(1)?;
                d_max = Some(nums[0]);
            }
            "size" => {
                want(2)?;
                size = Some((nums[0] as usize, nums[1] as usize));
            }
            "vertical_fov" => {
                want(1)?;
                vfov = Some(nums[0]);
            }
            "pitch_down" => {
                want(1)?;
                pitch = Some(nums[0]);
            }
            "position" => {
                want(3)?;
                pos = Some(Translation3::new(nums[0], nums[1], nums[2]));
            }
            "rotation_wxyz" => {
                want(4)?;
                rot = Some(UnitQuaternion::new_unchecked(Quaternion::new(nums[0], nums[1], nums[2], nums[3])));
            }
            other => return Err(FormatError::Malformed(format!("unknown sidecar key `{other}`")).into()),
        }
    }
    let missing = |k: &str| FormatError::Malformed(format!("sidecar missing `{k}`"));
    let (width, height) = size.ok_or_else(|| missing("size"))?;
    Ok(Sidecar {
        d_max: d_max.ok_or_else(|| missing("d_max"))?,
        width,
        height,
        vertical_fov: vfov.ok_or_else(|| missing("vertical_fov"))?,
        pitch_down: pitch.ok_or_else(|| missing("pitch_down"))?,
        pose: Isometry3::from_parts(pos.ok_or_else(|| missing("position"))?, rot.ok_or_else(|| missing("rotation_wxyz"))?),
    })
}
