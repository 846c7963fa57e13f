//! Per-projection flow estimators behind a common trait.
//!
//! Estimators see two frames laid out by one projection and return flow in
//! that projection's convention (radians for equirect, chart pixels
//! otherwise). They are built by name from an [`EstimatorConfig`] through
//! an [`EstimatorRegistry`].

mod blockmatch;
mod hornschunck;
mod perturb;
pub mod pyramid;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{parse_value, read_key_values};
use crate::error::{Error, Result};
use crate::flow::{FlowField, VALID};
use crate::projection::{Projection, ProjectionKind};
use crate::raster::Image;

pub use blockmatch::BlockMatch;
pub use hornschunck::HornSchunck;
pub use perturb::{perturb_gt, PerturbModel, PerturbProfile, PerturbedGt};

/// What an estimator gets to look at for one frame pair.
#[derive(Clone, Copy)]
pub struct EstimateInput<'a> {
    pub frame_a: &'a Image,
    pub frame_b: &'a Image,
    pub proj: &'a dyn Projection,
    /// Equirect ground truth from a to b, for estimators that use it.
    pub gt: Option<&'a FlowField>,
    /// Per-pair random stream, mixed with the estimator's own seed.
    pub seed: u64,
}

impl<'a> EstimateInput<'a> {
    pub fn new(frame_a: &'a Image, frame_b: &'a Image, proj: &'a dyn Projection) -> Self {
        EstimateInput {
            frame_a,
            frame_b,
            proj,
            gt: None,
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let dims = (self.proj.width(), self.proj.height());
        for f in [self.frame_a, self.frame_b] {
            if f.dims() != dims {
                return Err(Error::Dimensions {
                    expected: dims,
                    actual: f.dims(),
                });
            }
        }
        Ok(())
    }
}

pub trait FlowEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn estimate(&self, input: &EstimateInput) -> Result<FlowField>;
}

/// Packs pixel-unit components into a field of `proj`; dead pixels are invalid.
pub(crate) fn to_flow_field(proj: &dyn Projection, u: &[f64], v: &[f64]) -> FlowField {
    let spec = proj.spec();
    let mut f = FlowField::empty(spec);
    let w = proj.width();
    let equirect = spec.kind() == ProjectionKind::Equirect;
    for i in 0..f.len() {
        if proj.pixel_info(i % w, i / w).is_none() {
            continue;
        }
        let (fu, fv) = if equirect {
            FlowField::equirect_from_pixels(&spec, u[i], v[i])
        } else {
            (u[i], v[i])
        };
        f.u[i] = fu;
        f.v[i] = fv;
        f.flags[i] = VALID;
    }
    f
}

/// Settings for every estimator; each reads the keys it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: String,
    pub levels: usize,
    /// Block matching search radius per level, pixels.
    pub radius: usize,
    /// Block matching window side, pixels (odd).
    pub block: usize,
    pub subpixel: bool,
    pub pole_fraction: f64,
    /// Horn–Schunck smoothness weight.
    pub alpha: f64,
    pub iterations: usize,
    pub warps: usize,
    pub profile: PerturbProfile,
    /// Perturbation scale in chart pixels.
    pub amplitude: f64,
    pub floor: f64,
    pub bias: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            kind: "blockmatch".into(),
            levels: 3,
            radius: 4,
            block: 7,
            subpixel: true,
            pole_fraction: 0.05,
            alpha: 0.002,
            iterations: 60,
            warps: 2,
            profile: PerturbProfile::Uniform,
            amplitude: 0.0,
            floor: 0.1,
            bias: 0.5,
            noise: 1.0,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn with_kind(kind: &str) -> Self {
        EstimatorConfig {
            kind: kind.into(),
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kind" | "estimator" => self.kind = value.to_string(),
            "levels" => self.levels = parse_value(key, value)?,
            "radius" => self.radius = parse_value(key, value)?,
            "block" => self.block = parse_value(key, value)?,
            "subpixel" => self.subpixel = parse_value(key, value)?,
            "pole_fraction" => self.pole_fraction = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "iterations" => self.iterations = parse_value(key, value)?,
            "warps" => self.warps = parse_value(key, value)?,
            "profile" => self.profile = value.parse()?,
            "amplitude" => self.amplitude = parse_value(key, value)?,
            "floor" => self.floor = parse_value(key, value)?,
            "bias" => self.bias = parse_value(key, value)?,
            "noise" => self.noise = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown estimator setting '{key}'"))),
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = EstimatorConfig::default();
        cfg.apply(&read_key_values(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.levels < 1 {
            return bad("levels must be at least 1");
        }
        if self.radius < 1 || self.block < 1 || self.block.is_multiple_of(2) {
            return bad("radius must be positive and block a positive odd size");
        }
        if !(0.0..0.5).contains(&self.pole_fraction) {
            return bad("pole_fraction must lie in [0, 0.5)");
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.iterations < 1 || self.warps < 1 {
            return bad("alpha, iterations and warps must be positive");
        }
        if !(self.amplitude >= 0.0 && self.bias >= 0.0 && self.noise >= 0.0)
            || !(0.0..=1.0).contains(&self.floor)
        {
            return bad("amplitudes must be non-negative and floor within [0, 1]");
        }
        Ok(())
    }
}

type Constructor = fn(&EstimatorConfig) -> Box<dyn FlowEstimator>;

/// Name → estimator constructor.
#[derive(Clone)]
pub struct EstimatorRegistry {
    entries: BTreeMap<&'static str, Constructor>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut r = EstimatorRegistry {
            entries: BTreeMap::new(),
        };
        r.register("blockmatch", |c| Box::new(BlockMatch::from_config(c)));
        r.register("hornschunck", |c| Box::new(HornSchunck::from_config(c)));
        r.register("perturbed-gt", |c| Box::new(PerturbedGt::from_config(c)));
        r
    }
}

impl EstimatorRegistry {
    pub fn register(&mut self, name: &'static str, make: Constructor) {
        self.entries.insert(name, make);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, cfg: &EstimatorConfig) -> Result<Box<dyn FlowEstimator>> {
        cfg.validate()?;
        let make = self.entries.get(cfg.kind.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "unknown estimator '{}' (known: {})",
                cfg.kind,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(make(cfg))
    }
}
