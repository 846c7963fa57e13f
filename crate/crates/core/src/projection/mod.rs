//! Projections of the viewing sphere onto images.
//!
//! Every projection is a set of *charts*: an equirectangular image is one
//! chart, a tri-cylinder image has one chart per stacked band and a
//! cube-padding canvas has one chart per cube face. Each chart has an
//! extended continuous map between canvas coordinates and directions, and
//! the projection decides which chart *owns* a given direction so that
//! duplicated content is counted once.
//!
//! Canvas coordinates are in pixel-index space: the center of pixel
//! `(x, y)` is `(x as f64, y as f64)`.

mod cubepad;
mod equirect;
mod pixelmap;
mod registry;
mod resample;
mod tricyl;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::Direction3;

pub use cubepad::{CubeFace, CubePadding};
pub use equirect::Equirect;
pub use pixelmap::{solid_angle_weights, PixelMap, WeightMap};
pub use registry::{ProjectionEntry, ProjectionRegistry};
pub use resample::{resample, sample_bilinear, ImageSampler};
pub use tricyl::{TriCylinder, DEFAULT_HALF_FOV};

pub type ChartId = u8;

/// Chart membership of one canvas pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelInfo {
    pub chart: ChartId,
    /// True when this pixel is the single counted copy of its direction.
    pub owned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionKind {
    Equirect,
    TriCylinder,
    CubePadding,
}

impl ProjectionKind {
    pub fn code(self) -> u32 {
        match self {
            ProjectionKind::Equirect => 0,
            ProjectionKind::TriCylinder => 1,
            ProjectionKind::CubePadding => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(ProjectionKind::Equirect),
            1 => Some(ProjectionKind::TriCylinder),
            2 => Some(ProjectionKind::CubePadding),
            _ => None,
        }
    }
}

/// Resolution and layout of one projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionSpec {
    Equirect {
        width: usize,
        height: usize,
    },
    #[serde(rename = "tricyl")]
    TriCylinder {
        width: usize,
        height: usize,
        half_fov: f64,
    },
    #[serde(rename = "cubepad")]
    CubePadding {
        face: usize,
        pad: usize,
    },
}

impl ProjectionSpec {
    pub fn equirect(width: usize) -> Self {
        ProjectionSpec::Equirect {
            width,
            height: width / 2,
        }
    }

    /// Tri-cylinder image with square pixels at the band equators.
    pub fn tricyl(width: usize) -> Self {
        let h_max = tricyl::mercator_height(DEFAULT_HALF_FOV);
        let band = ((width as f64) * h_max / std::f64::consts::PI).round() as usize;
        ProjectionSpec::TriCylinder {
            width,
            height: 3 * band.max(1),
            half_fov: DEFAULT_HALF_FOV,
        }
    }

    /// Cube-padding canvas with `face` pixels per face and the default pad of `face / 8`.
    pub fn cubepad(face: usize) -> Self {
        ProjectionSpec::CubePadding {
            face,
            pad: face / 8,
        }
    }

    /// The spec of `kind` at a resolution comparable to an equirect image of `width` pixels.
    pub fn equivalent(kind: ProjectionKind, width: usize) -> Self {
        match kind {
            ProjectionKind::Equirect => Self::equirect(width),
            ProjectionKind::TriCylinder => Self::tricyl(width),
            ProjectionKind::CubePadding => Self::cubepad(width / 4),
        }
    }

    /// Width of the equirect image this spec is comparable to; inverse of [`Self::equivalent`].
    pub fn equirect_width(&self) -> usize {
        match *self {
            ProjectionSpec::Equirect { width, .. } | ProjectionSpec::TriCylinder { width, .. } => {
                width
            }
            ProjectionSpec::CubePadding { face, .. } => 4 * face,
        }
    }

    /// The default-parameter spec of `kind` whose canvas is `dims`, if any.
    pub fn from_canvas(kind: ProjectionKind, dims: (usize, usize)) -> Option<Self> {
        let width = match kind {
            ProjectionKind::CubePadding => 4 * (4 * dims.0 / 17),
            _ => dims.0,
        };
        let spec = ProjectionSpec::equivalent(kind, width);
        (spec.dims() == dims && spec.validate().is_ok()).then_some(spec)
    }

    pub fn kind(&self) -> ProjectionKind {
        match self {
            ProjectionSpec::Equirect { .. } => ProjectionKind::Equirect,
            ProjectionSpec::TriCylinder { .. } => ProjectionKind::TriCylinder,
            ProjectionSpec::CubePadding { .. } => ProjectionKind::CubePadding,
        }
    }

    pub fn width(&self) -> usize {
        match *self {
            ProjectionSpec::Equirect { width, .. } | ProjectionSpec::TriCylinder { width, .. } => {
                width
            }
            ProjectionSpec::CubePadding { face, pad } => 4 * face + 2 * pad,
        }
    }

    pub fn height(&self) -> usize {
        match *self {
            ProjectionSpec::Equirect { height, .. }
            | ProjectionSpec::TriCylinder { height, .. } => height,
            ProjectionSpec::CubePadding { face, pad } => 3 * face + 2 * pad,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ProjectionSpec::Equirect { width, height } => {
                if height == 0 || width != 2 * height {
                    return Err(Error::Config(format!(
                        "equirect requires width = 2 x height, got {width}x{height}"
                    )));
                }
            }
            ProjectionSpec::TriCylinder {
                width,
                height,
                half_fov,
            } => {
                if width == 0 || height == 0 || height % 3 != 0 {
                    return Err(Error::Config(format!(
                        "tri-cylinder height must be a positive multiple of 3, got {width}x{height}"
                    )));
                }
                // three orthogonal cylinders cover the sphere only if each reaches
                // atan(1/sqrt(2)) from its equator
                let needed = (1.0f64 / 3.0f64.sqrt()).asin();
                if !(half_fov > needed && half_fov < std::f64::consts::FRAC_PI_2) {
                    return Err(Error::Config(format!(
                        "tri-cylinder half FOV {half_fov} must lie in ({needed:.4}, pi/2)"
                    )));
                }
            }
            ProjectionSpec::CubePadding { face, pad } => {
                if face == 0 || pad > face {
                    return Err(Error::Config(format!(
                        "cube padding needs face > 0 and pad <= face, got face={face} pad={pad}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Builds the projection after validating the spec.
    pub fn build(&self) -> Result<Arc<dyn Projection>> {
        self.validate()?;
        Ok(match *self {
            ProjectionSpec::Equirect { width, height } => Arc::new(Equirect::new(width, height)),
            ProjectionSpec::TriCylinder {
                width,
                height,
                half_fov,
            } => Arc::new(TriCylinder::new(width, height, half_fov)),
            ProjectionSpec::CubePadding { face, pad } => Arc::new(CubePadding::new(face, pad)),
        })
    }

    /// Extra layout words as stored in flow files.
    pub fn param_words(&self) -> Vec<u32> {
        match *self {
            ProjectionSpec::Equirect { .. } => Vec::new(),
            ProjectionSpec::TriCylinder { half_fov, .. } => vec![(half_fov as f32).to_bits()],
            ProjectionSpec::CubePadding { face, pad } => vec![face as u32, pad as u32],
        }
    }

    pub fn from_words(
        kind: ProjectionKind,
        width: usize,
        height: usize,
        words: &[u32],
    ) -> Result<Self> {
        let spec = match (kind, words) {
            (ProjectionKind::Equirect, []) => ProjectionSpec::Equirect { width, height },
            (ProjectionKind::TriCylinder, [fov]) => ProjectionSpec::TriCylinder {
                width,
                height,
                half_fov: f32::from_bits(*fov) as f64,
            },
            (ProjectionKind::CubePadding, [face, pad]) => ProjectionSpec::CubePadding {
                face: *face as usize,
                pad: *pad as usize,
            },
            _ => {
                return Err(Error::Format(format!(
                    "{} parameter words do not fit a {kind:?} projection",
                    words.len()
                )))
            }
        };
        if spec.dims() != (width, height) {
            return Err(Error::Format(format!(
                "declared size {width}x{height} disagrees with {spec}"
            )));
        }
        Ok(spec)
    }

    /// Same projection, ignoring the f32 quantization of the FOV word.
    pub fn same_layout(&self, other: &ProjectionSpec) -> bool {
        match (self, other) {
            (
                ProjectionSpec::TriCylinder {
                    width: w0,
                    height: h0,
                    half_fov: f0,
                },
                ProjectionSpec::TriCylinder {
                    width: w1,
                    height: h1,
                    half_fov: f1,
                },
            ) => w0 == w1 && h0 == h1 && (*f0 as f32) == (*f1 as f32),
            _ => self == other,
        }
    }
}

impl fmt::Display for ProjectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ProjectionSpec::Equirect { width, height } => write!(f, "equirect:{width}x{height}"),
            ProjectionSpec::TriCylinder {
                width,
                height,
                half_fov,
            } => {
                if half_fov == DEFAULT_HALF_FOV {
                    write!(f, "tricyl:{width}x{height}")
                } else {
                    write!(f, "tricyl:{width}x{height}:{half_fov}")
                }
            }
            ProjectionSpec::CubePadding { face, pad } => write!(f, "cubepad:{face}:{pad}"),
        }
    }
}

impl FromStr for ProjectionSpec {
    type Err = Error;

    /// Accepts `equirect:WxH`, `tricyl:WxH[:half_fov]`, `cubepad:F[:pad]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse projection spec '{s}'"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let dims = |t: Option<&str>| -> Result<(usize, usize)> {
            let t = t.ok_or_else(bad)?;
            let (w, h) = t.split_once('x').ok_or_else(bad)?;
            Ok((w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?))
        };
        let spec = match kind {
            "equirect" | "E" => {
                let (width, height) = dims(parts.next())?;
                ProjectionSpec::Equirect { width, height }
            }
            "tricyl" | "C" => {
                let (width, height) = dims(parts.next())?;
                let half_fov = match parts.next() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => DEFAULT_HALF_FOV,
                };
                ProjectionSpec::TriCylinder {
                    width,
                    height,
                    half_fov,
                }
            }
            "cubepad" | "P" => {
                let face: usize = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                let pad = match parts.next() {
                    Some(v) => v.parse().map_err(|_| bad())?,
                    None => face / 8,
                };
                ProjectionSpec::CubePadding { face, pad }
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// A bidirectional map between canvas pixels and viewing directions.
///
/// `chart_to_dir` and `dir_to_chart` are defined on each chart's extended
/// domain (beyond the pixels the chart owns), which is what flow vectors
/// that leave a chart are measured in.
pub trait Projection: Send + Sync + fmt::Debug {
    fn spec(&self) -> ProjectionSpec;

    fn width(&self) -> usize;

    fn height(&self) -> usize;

    fn chart_count(&self) -> usize;

    /// `None` for dead canvas space.
    fn pixel_info(&self, x: usize, y: usize) -> Option<PixelInfo>;

    fn chart_to_dir(&self, chart: ChartId, px: f64, py: f64) -> Option<Direction3>;

    fn dir_to_chart(&self, chart: ChartId, d: Direction3) -> Option<(f64, f64)>;

    /// The chart that owns `d`.
    fn owner(&self, d: Direction3) -> ChartId;

    /// Horizontal period of canvas coordinates, for charts that wrap in longitude.
    fn x_period(&self) -> Option<f64> {
        None
    }

    /// Direction of a pixel center; dead pixels give `None`.
    fn pixel_to_dir(&self, x: usize, y: usize) -> Option<(Direction3, PixelInfo)> {
        let info = self.pixel_info(x, y)?;
        let d = self.chart_to_dir(info.chart, x as f64, y as f64)?;
        Some((d, info))
    }

    /// Subpixel position of `d` in its owning chart.
    fn dir_to_pixel(&self, d: Direction3) -> Option<(f64, f64, ChartId)> {
        let chart = self.owner(d);
        let (px, py) = self.dir_to_chart(chart, d)?;
        Some((px, py, chart))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_strings_round_trip() {
        for s in [
            "equirect:512x256",
            "tricyl:512x432",
            "cubepad:128:16",
            "tricyl:300x90:0.7",
        ] {
            let spec: ProjectionSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        let p: ProjectionSpec = "cubepad:64".parse().unwrap();
        assert_eq!(p, ProjectionSpec::CubePadding { face: 64, pad: 8 });
        assert!("equirect:512x512".parse::<ProjectionSpec>().is_err());
        assert!("tricyl:512x400".parse::<ProjectionSpec>().is_err());
        assert!("sphere:1x1".parse::<ProjectionSpec>().is_err());
    }

    #[test]
    fn canvas_inference_inverts_equivalent() {
        for kind in [
            ProjectionKind::Equirect,
            ProjectionKind::TriCylinder,
            ProjectionKind::CubePadding,
        ] {
            let spec = ProjectionSpec::equivalent(kind, 512);
            assert_eq!(spec.equirect_width(), 512);
            assert_eq!(ProjectionSpec::from_canvas(kind, spec.dims()), Some(spec));
        }
        assert_eq!(
            ProjectionSpec::from_canvas(ProjectionKind::Equirect, (512, 300)),
            None
        );
    }

    #[test]
    fn equivalent_sizes() {
        assert_eq!(
            ProjectionSpec::equivalent(ProjectionKind::Equirect, 512).dims(),
            (512, 256)
        );
        assert_eq!(
            ProjectionSpec::equivalent(ProjectionKind::TriCylinder, 512).dims(),
            (512, 432)
        );
        assert_eq!(
            ProjectionSpec::equivalent(ProjectionKind::CubePadding, 512).dims(),
            (544, 416)
        );
    }

    #[test]
    fn file_words_round_trip() {
        for spec in [
            ProjectionSpec::equirect(64),
            ProjectionSpec::tricyl(64),
            ProjectionSpec::cubepad(16),
        ] {
            let (w, h) = spec.dims();
            let back = ProjectionSpec::from_words(spec.kind(), w, h, &spec.param_words()).unwrap();
            assert!(back.same_layout(&spec));
        }
        assert!(ProjectionSpec::from_words(ProjectionKind::CubePadding, 10, 10, &[16, 2]).is_err());
    }
}
