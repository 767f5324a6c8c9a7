use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Heightfield;
use crate::error::{Error, Result};

/// Flat run-in before the feature and run-out after it, in metres.
pub const APRON_LENGTH: f64 = 1.0;
/// Depth of the gap floor below ground level, in metres.
pub const GAP_DEPTH: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    Flat,
    StairsUp,
    StairsDown,
    Gap,
    Platform,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Flat,
        Family::StairsUp,
        Family::StairsDown,
        Family::Gap,
        Family::Platform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Flat => "flat",
            Family::StairsUp => "stairs_up",
            Family::StairsDown => "stairs_down",
            Family::Gap => "gap",
            Family::Platform => "platform",
        }
    }

    pub fn is_stairs(self) -> bool {
        matches!(self, Family::StairsUp | Family::StairsDown)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown terrain family `{s}`")))
    }
}

/// Parameters of one terrain block. Only the parameters used by `family` are validated.
///
/// The feature starts at world `x = 0` and runs for `extent` metres along `+x`, with an
/// [`APRON_LENGTH`] flat apron on either side. Laterally the block spans `±width/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainSpec {
    pub family: Family,
    /// Stair riser height (m).
    pub rise: f64,
    /// Stair tread depth (m).
    pub tread: f64,
    pub gap_width: f64,
    pub platform_height: f64,
    /// Length of the feature region along x (m).
    pub extent: f64,
    /// Lateral size of the block (m).
    pub width: f64,
    /// Metres per cell.
    pub resolution: f64,
    /// Reserved for randomised families; the current families are fully deterministic.
    pub seed: u64,
}

impl Default for TerrainSpec {
    fn default() -> Self {
        Self {
            family: Family::Flat,
            rise: 0.15,
            tread: 0.30,
            gap_width: 0.50,
            platform_height: 0.30,
            extent: 3.0,
            width: 2.0,
            resolution: 0.02,
            seed: 0,
        }
    }
}

impl TerrainSpec {
    pub fn stairs_up(rise: f64, tread: f64) -> Self {
        Self { family: Family::StairsUp, rise, tread, ..Self::default() }
    }

    pub fn stairs_down(rise: f64, tread: f64) -> Self {
        Self { family: Family::StairsDown, rise, tread, ..Self::default() }
    }

    pub fn gap(width: f64) -> Self {
        Self { family: Family::Gap, gap_width: width, ..Self::default() }
    }

    pub fn platform(height: f64) -> Self {
        Self { family: Family::Platform, platform_height: height, ..Self::default() }
    }

    pub fn flat() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Spec(format!("{name} must be positive, got {v}")))
            }
        }
        positive("resolution", self.resolution)?;
        positive("extent", self.extent)?;
        positive("width", self.width)?;
        if self.width < 2.0 * self.resolution {
            return Err(Error::Spec("width must span at least two cells".into()));
        }
        match self.family {
            Family::Flat => {}
            Family::StairsUp | Family::StairsDown => {
                positive("rise", self.rise)?;
                positive("tread", self.tread)?;
                if self.tread > self.extent {
                    return Err(Error::Spec("stair extent shorter than one tread".into()));
                }
            }
            Family::Gap => {
                positive("gap_width", self.gap_width)?;
                if self.gap_width >= self.extent {
                    return Err(Error::Spec("gap must be narrower than the block extent".into()));
                }
            }
            Family::Platform => positive("platform_height", self.platform_height)?,
        }
        Ok(())
    }

    /// Number of risers for stair families.
    pub fn step_count(&self) -> usize {
        ((self.extent / self.tread) + 1e-9).floor() as usize
    }

    /// Ideal (pre-discretisation) elevation at forward coordinate `x`.
    pub fn profile(&self, x: f64) -> f64 {
        match self.family {
            Family::Flat => 0.0,
            Family::StairsUp | Family::StairsDown => {
                let k = (x / self.tread).floor().clamp(0.0, self.step_count() as f64);
                let h = k * self.rise;
                if self.family == Family::StairsUp {
                    h
                } else {
                    -h
                }
            }
            Family::Gap => {
                if (0.0..self.gap_width).contains(&x) {
                    -GAP_DEPTH
                } else {
                    0.0
                }
            }
            Family::Platform => {
                if (0.0..self.extent).contains(&x) {
                    self.platform_height
                } else {
                    0.0
                }
            }
        }
    }
}

/// Build the heightfield for `spec`.
///
/// Nodes are offset half a cell from the feature grid so that every riser, gap edge and
/// platform wall falls midway between two nodes; the vertical face becomes a one-cell
/// bilinear ramp centred on the nominal edge.
pub fn generate(spec: &TerrainSpec) -> Result<Heightfield> {
    spec.validate()?;
    let res = spec.resolution;
    let length = spec.extent + 2.0 * APRON_LENGTH;
    let nx = (length / res).round() as usize;
    let ny = (spec.width / res).round() as usize;
    let origin = [-APRON_LENGTH + 0.5 * res, -0.5 * spec.width + 0.5 * res];
    let column: Vec<f64> = (0..nx).map(|ix| spec.profile(origin[0] + ix as f64 * res)).collect();
    let mut elevation = Vec::with_capacity(nx * ny);
    for _ in 0..ny {
        elevation.extend_from_slice(&column);
    }
    Heightfield::new(res, nx, ny, origin, elevation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medium_stairs_first_tread() {
        let hf = generate(&TerrainSpec::stairs_up(0.15, 0.30)).unwrap();
        let h = hf.sample_height(0.31, 0.0).unwrap();
        assert!((h - 0.15).abs() < 1e-12, "{h}");
        assert_eq!(hf.sample_height(-0.5, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn flat_is_zero_everywhere() {
        let hf = generate(&TerrainSpec::flat()).unwrap();
        assert!(hf.elevation().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn platform_plateau() {
        let spec = TerrainSpec::platform(0.40);
        let hf = generate(&spec).unwrap();
        assert_eq!(hf.sample_height(1.5, 0.0).unwrap(), 0.40);
        assert_eq!(hf.sample_height(-0.5, 0.0).unwrap(), 0.0);
        assert_eq!(hf.sample_height(3.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gap_drops_by_fixed_depth() {
        let hf = generate(&TerrainSpec::gap(0.5)).unwrap();
        assert_eq!(hf.sample_height(0.25, 0.0).unwrap(), -GAP_DEPTH);
        assert_eq!(hf.sample_height(0.75, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn stairs_down_descend() {
        let hf = generate(&TerrainSpec::stairs_down(0.10, 0.30)).unwrap();
        assert!((hf.sample_height(0.65, 0.0).unwrap() + 0.20).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate(&TerrainSpec::stairs_up(0.0, 0.3)).is_err());
        assert!(generate(&TerrainSpec::stairs_up(0.15, -0.3)).is_err());
        assert!(generate(&TerrainSpec::gap(5.0)).is_err());
        assert!(generate(&TerrainSpec::platform(-0.1)).is_err());
        // unused parameters are ignored
        let flat = TerrainSpec { rise: -1.0, ..TerrainSpec::flat() };
        assert!(generate(&flat).is_ok());
        assert!("volcano".parse::<Family>().is_err());
        assert_eq!("stairs_up".parse::<Family>().unwrap(), Family::StairsUp);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = TerrainSpec::stairs_up(0.2, 0.3);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert!(a.elevation().iter().zip(b.elevation()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
