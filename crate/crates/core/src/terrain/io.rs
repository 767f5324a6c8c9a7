//! Plain-text heightfield files.
//!
//! ```text
//! heightfield 1
//! resolution 0.02
//! dims <nx> <ny>
//! origin <x0> <y0>
//! <ny lines of nx whitespace-separated elevations, row y = 0 first>
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is bit-exact.

use std::fmt::Write as _;

use super::Heightfield;
use crate::error::{FormatError, Result};

const HEADER: &str = "heightfield 1";

pub fn write_heightfield(hf: &Heightfield) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "resolution {}", hf.resolution());
    let _ = writeln!(out, "dims {} {}", hf.nx(), hf.ny());
    let _ = writeln!(out, "origin {} {}", hf.origin()[0], hf.origin()[1]);
    for row in hf.elevation().chunks(hf.nx()) {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

fn parse_f64(tok: Option<&str>, what: &str) -> Result<f64, FormatError> {
    tok.ok_or_else(|| malformed(format!("missing {what}")))?
        .parse::<f64>()
        .map_err(|e| malformed(format!("bad {what}: {e}")))
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<std::str::SplitWhitespace<'a>, FormatError> {
    let line = line.ok_or_else(|| FormatError::Truncated(format!("missing `{key}` line")))?;
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(malformed(format!("expected `{key}` line, found `{line}`")));
    }
    Ok(toks)
}

pub fn read_heightfield(text: &str) -> Result<Heightfield> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(HEADER) {
        return Err(FormatError::BadMagic.into());
    }
    let resolution = parse_f64(keyed(lines.next(), "resolution")?.next(), "resolution")?;
    let mut dims = keyed(lines.next(), "dims")?;
    let nx: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad nx"))?;
    let ny: usize = dims
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| malformed("bad ny"))?;
    let mut o = keyed(lines.next(), "origin")?;
    let origin = [parse_f64(o.next(), "origin x")?, parse_f64(o.next(), "origin y")?];
    let mut elevation = Vec::with_capacity(nx.saturating_mul(ny));
    for row in 0..ny {
        let line = lines
            .next()
            .ok_or_else(|| FormatError::Truncated(format!("missing elevation row {row}")))?;
        let before = elevation.len();
        for tok in line.split_whitespace() {
            elevation.push(parse_f64(Some(tok), "elevation")?);
        }
        if elevation.len() - before != nx {
            return Err(malformed(format!("row {row} has {} values, expected {nx}", elevation.len() - before)).into());
        }
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(malformed("trailing data after elevation rows").into());
    }
    Heightfield::new(resolution, nx, ny, origin, elevation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate, TerrainSpec};
    use crate::Error;

    #[test]
    fn round_trip_is_bit_exact() {
        let hf = generate(&TerrainSpec::stairs_down(0.23, 0.3)).unwrap();
        let text = write_heightfield(&hf);
        let back = read_heightfield(&text).unwrap();
        assert_eq!(back.nx(), hf.nx());
        assert_eq!(back.origin().map(f64::to_bits), hf.origin().map(f64::to_bits));
        assert!(hf.elevation().iter().zip(back.elevation()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(write_heightfield(&back), text);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_heightfield("nope"), Err(Error::Format(FormatError::BadMagic))));
        let hf = Heightfield::flat(0.5, 2, 2, [0.0, 0.0]).unwrap();
        let text = write_heightfield(&hf);
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(read_heightfield(&cut), Err(Error::Format(FormatError::Truncated(_)))));
        let bad = text.replace("0 0\n", "0 x\n");
        assert!(read_heightfield(&bad).is_err());
    }
}
