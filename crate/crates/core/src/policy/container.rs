//! Binary weight container.
//!
//! Layout (little-endian): magic `LOCOWTS\0`, format version `u32`, dimension count `u32`
//! and dimensions `u32`, tensor count `u32`, then per tensor the name (`u32` length and
//! UTF-8 bytes), rank `u32`, shape `u32 × rank` and element offset `u64`; then the element
//! count `u64`, the data as `f32`, and finally an FNV-1a 64-bit checksum of every preceding
//! byte.

use super::{Parameters, PolicyDims, PolicyParams, Real};
use crate::error::{FormatError, Result};

pub const MAGIC: &[u8; 8] = b"LOCOWTS\0";
pub const VERSION: u32 = 1;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn dims_vec(d: &PolicyDims) -> [usize; 9] {
    [d.joints, d.depth_width, d.depth_height, d.d_model, d.heads, d.gru_hidden, d.head_hidden, d.vel_hidden, d.vel_feature]
}

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).expect("dimension fits in u32")
}

/// Serialise parameters; values are stored as `f32`.
pub fn save_params<R: Real>(p: &PolicyParams<R>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let dims = dims_vec(&p.dims);
    out.extend_from_slice(&u32_of(dims.len()).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&u32_of(d).to_le_bytes());
    }
    let tensors = p.tensors();
    out.extend_from_slice(&u32_of(tensors.len()).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in &tensors {
        out.extend_from_slice(&u32_of(name.len()).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&u32_of(t.shape.len()).to_le_bytes());
        for &s in &t.shape {
            out.extend_from_slice(&u32_of(s).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in &tensors {
        for v in &t.data {
            out.extend_from_slice(&(v.to_f32().unwrap()).to_le_bytes());
        }
    }
    let sum = fnv1a64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FormatError::Truncated(format!("while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse and verify a container. Checks run in order: magic, checksum, version, manifest.
pub fn load_params<R: Real>(bytes: &[u8]) -> Result<PolicyParams<R>> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(FormatError::BadMagic.into());
    }
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(FormatError::Truncated("container shorter than its header".into()).into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let computed = fnv1a64(body);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed }.into());
    }
    let mut r = Reader { buf: body, pos: MAGIC.len() };
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let nd = r.u32("dimension count")? as usize;
    if nd != 9 {
        return Err(FormatError::Malformed(format!("expected 9 dimensions, found {nd}")).into());
    }
    let mut d = [0usize; 9];
    for v in d.iter_mut() {
        *v = r.u32("dimensions")? as usize;
    }
    let dims = PolicyDims {
        joints: d[0],
        depth_width: d[1],
        depth_height: d[2],
        d_model: d[3],
        heads: d[4],
        gru_hidden: d[5],
        head_hidden: d[6],
        vel_hidden: d[7],
        vel_feature: d[8],
    };
    dims.validate().map_err(|e| FormatError::Malformed(e.to_string()))?;
    let count = r.u32("tensor count")? as usize;
    let mut manifest = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32("tensor name")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = r.u32("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32("tensor shape")? as usize);
        }
        let offset = r.u64("tensor offset")? as usize;
        manifest.push((name, shape, offset));
    }
    let total = r.u64("element count")? as usize;
    let data = r.take(total.checked_mul(4).ok_or_else(|| FormatError::Malformed("element count overflow".into()))?, "tensor data")?;
    if r.pos != body.len() {
        return Err(FormatError::Malformed(format!("{} trailing bytes", body.len() - r.pos)).into());
    }
    let mut params = PolicyParams::<R>::init(dims, 0)?;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    for (name, t) in names.iter().zip(params.tensors_mut()) {
        let (_, shape, offset) = manifest
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| FormatError::MissingTensor(name.clone()))?;
        if *shape != t.1.shape {
            return Err(FormatError::ShapeMismatch { name: name.clone(), expected: t.1.shape.clone(), found: shape.clone() }.into());
        }
        let n = t.1.len();
        if offset + n > total {
            return Err(FormatError::Malformed(format!("tensor `{name}` exceeds the data block")).into());
        }
        for (k, v) in t.1.data.iter_mut().enumerate() {
            let at = 4 * (offset + k);
            let f = f32::from_le_bytes(data[at..at + 4].try_into().unwrap());
            *v = R::from_f32(f).unwrap();
        }
    }
    if manifest.len() != names.len() {
        return Err(FormatError::Malformed(format!("expected {} tensors, found {}", names.len(), manifest.len())).into());
    }
    Ok(params)
}
