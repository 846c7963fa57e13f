//! Per-pixel fusion of two equirect flow predictions.
//!
//! Predictions made in different projections are first re-expressed on a
//! common equirect grid; a strategy then picks or blends them per pixel.

mod confidence;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::parse_value;
use crate::error::{Error, Result};
use crate::flow::{FlowField, SATURATED, VALID};
use crate::metrics::{epe, spherical_distance};
use crate::projection::ProjectionSpec;
use crate::sphere::wrap_delta_theta;

pub use confidence::{fb_error, heuristic_confidence, prior_map, ConfidenceCues, HeuristicWeights};

/// Per-pixel weight of the first prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl ConfidenceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Dimensions {
                expected: (width, height),
                actual: (values.len(), 1),
            });
        }
        if let Some(t) = values.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Format(format!("confidence {t} outside [0, 1]")));
        }
        Ok(ConfidenceMap {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, t: f64) -> Result<Self> {
        Self::new(width, height, vec![t; width * height])
    }

    pub fn as_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&t| t as f32).collect()
    }
}

fn check_fields(a: &FlowField, b: &FlowField) -> Result<()> {
    a.ensure_equirect()?;
    b.ensure_equirect()?;
    a.ensure_same_spec(b)?;
    a.check_dims()?;
    b.check_dims()
}

/// `t · a + (1 − t) · b` per pixel. Longitude components are brought onto
/// the branch of `a` before mixing so the seam is crossed the short way.
/// Where only one input is valid it is copied.
pub fn blend(a: &FlowField, b: &FlowField, t: &ConfidenceMap) -> Result<FlowField> {
    check_fields(a, b)?;
    if (t.width, t.height) != a.spec.dims() {
        return Err(Error::Dimensions {
            expected: a.spec.dims(),
            actual: (t.width, t.height),
        });
    }
    let mixed: Vec<(f64, f64, u8)> = (0..a.len())
        .into_par_iter()
        .map(|i| match (a.is_valid(i), b.is_valid(i)) {
            (true, true) => {
                let s = t.values[i];
                let mut u = a.u[i] + (1.0 - s) * wrap_delta_theta(b.u[i] - a.u[i]);
                if !(-PI < u && u <= PI) {
                    u = wrap_delta_theta(u);
                }
                let v = a.v[i] + (1.0 - s) * (b.v[i] - a.v[i]);
                (u, v, VALID | ((a.flags[i] | b.flags[i]) & SATURATED))
            }
            (true, false) => (a.u[i], a.v[i], a.flags[i]),
            (false, true) => (b.u[i], b.v[i], b.flags[i]),
            (false, false) => (0.0, 0.0, 0),
        })
        .collect();
    let mut out = FlowField::empty(a.spec);
    for (i, (u, v, f)) in mixed.into_iter().enumerate() {
        out.u[i] = u;
        out.v[i] = v;
        out.flags[i] = f;
    }
    Ok(out)
}

/// Per-pixel error used to rank predictions against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleCriterion {
    /// Great-circle endpoint distance.
    #[default]
    Sd,
    /// Planar endpoint error in equirect pixels.
    Epe,
}

impl fmt::Display for OracleCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleCriterion::Sd => "sd",
            OracleCriterion::Epe => "epe",
        })
    }
}

impl FromStr for OracleCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sd" => Ok(OracleCriterion::Sd),
            "epe" => Ok(OracleCriterion::Epe),
            _ => Err(Error::Config(format!(
                "unknown oracle criterion '{s}' (sd, epe)"
            ))),
        }
    }
}

/// Bound fields plus which input each pixel came from (1 = a, 0 = b).
#[derive(Debug, Clone)]
pub struct OracleBounds {
    pub lower: FlowField,
    pub upper: FlowField,
    pub lower_choice: ConfidenceMap,
    pub upper_choice: ConfidenceMap,
}

/// Picks, per pixel, the better (lower) and worse (upper) of two predictions
/// against ground truth. Ties go to `a` for the lower bound and `b` for the
/// upper. Pixels without a usable error take whichever input is valid.
pub fn oracle_bounds(
    a: &FlowField,
    b: &FlowField,
    gt: &FlowField,
    criterion: OracleCriterion,
) -> Result<OracleBounds> {
    check_fields(a, b)?;
    check_fields(a, gt)?;
    let err = |p: &FlowField| match criterion {
        OracleCriterion::Sd => spherical_distance(p, gt, None),
        OracleCriterion::Epe => epe(p, gt, None),
    };
    let (ea, eb) = (err(a)?, err(b)?);
    let (w, h) = a.spec.dims();
    let mut lower = Vec::with_capacity(a.len());
    let mut upper = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let (lo, up) = match (ea.values[i], eb.values[i]) {
            (Some(x), Some(y)) => (x <= y, x > y),
            _ => {
                let pick_a = a.is_valid(i) || !b.is_valid(i);
                (pick_a, pick_a)
            }
        };
        lower.push(if lo { 1.0 } else { 0.0 });
        upper.push(if up { 1.0 } else { 0.0 });
    }
    let select = |choice: &[f64]| {
        let mut out = b.clone();
        for (i, &c) in choice.iter().enumerate() {
            if c == 1.0 {
                out.u[i] = a.u[i];
                out.v[i] = a.v[i];
                out.flags[i] = a.flags[i];
            }
        }
        out
    };
    Ok(OracleBounds {
        lower: select(&lower),
        upper: select(&upper),
        lower_choice: ConfidenceMap::new(w, h, lower)?,
        upper_choice: ConfidenceMap::new(w, h, upper)?,
    })
}

/// Everything a strategy may look at. Predictions are already on the
/// common equirect grid; `spec_a`/`spec_b` name the projections they were
/// estimated in.
#[derive(Clone, Copy)]
pub struct FusionInput<'a> {
    pub pred_a: &'a FlowField,
    pub pred_b: &'a FlowField,
    pub spec_a: ProjectionSpec,
    pub spec_b: ProjectionSpec,
    /// Backward predictions (frame b to a), same grid.
    pub back_a: Option<&'a FlowField>,
    pub back_b: Option<&'a FlowField>,
    pub gt: Option<&'a FlowField>,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub fused: FlowField,
    /// Weight given to prediction a.
    pub confidence: ConfidenceMap,
}

pub trait FusionStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn fuse(&self, input: &FusionInput) -> Result<FusionOutput>;
}

/// Blend with heuristic confidence from distortion priors and
/// forward-backward consistency.
#[derive(Debug, Clone)]
pub struct HeuristicBlend {
    pub weights: HeuristicWeights,
}

impl FusionStrategy for HeuristicBlend {
    fn name(&self) -> &'static str {
        "blend-heuristic"
    }

    fn fuse(&self, input: &FusionInput) -> Result<FusionOutput> {
        let fb =
            |fwd: &FlowField, back: Option<&FlowField>| back.map(|b| fb_error(fwd, b)).transpose();
        let (fb_a, fb_b) = (
            fb(input.pred_a, input.back_a)?,
            fb(input.pred_b, input.back_b)?,
        );
        let cues = ConfidenceCues {
            fb_a: fb_a.as_deref(),
            fb_b: fb_b.as_deref(),
        };
        let t = heuristic_confidence(
            input.pred_a.spec,
            input.spec_a,
            input.spec_b,
            &cues,
            &self.weights,
        )?;
        Ok(FusionOutput {
            fused: blend(input.pred_a, input.pred_b, &t)?,
            confidence: t,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Oracle {
    pub upper: bool,
    pub criterion: OracleCriterion,
}

impl FusionStrategy for Oracle {
    fn name(&self) -> &'static str {
        if self.upper {
            "oracle-upper"
        } else {
            "oracle-lower"
        }
    }

    fn fuse(&self, input: &FusionInput) -> Result<FusionOutput> {
        let gt = input.gt.ok_or_else(|| {
            Error::Config(format!("{} fusion needs ground-truth flow", self.name()))
        })?;
        let b = oracle_bounds(input.pred_a, input.pred_b, gt, self.criterion)?;
        Ok(if self.upper {
            FusionOutput {
                fused: b.upper,
                confidence: b.upper_choice,
            }
        } else {
            FusionOutput {
                fused: b.lower,
                confidence: b.lower_choice,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: String,
    pub weights: HeuristicWeights,
    pub criterion: OracleCriterion,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            mode: "blend-heuristic".into(),
            weights: HeuristicWeights::default(),
            criterion: OracleCriterion::Sd,
        }
    }
}

impl FusionConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "mode" | "fusion" => self.mode = value.to_string(),
            "sharpness" => self.weights.sharpness = parse_value(key, value)?,
            "prior_weight" => self.weights.prior = parse_value(key, value)?,
            "fb_weight" => self.weights.fb = parse_value(key, value)?,
            "criterion" => self.criterion = value.parse()?,
            _ => return Err(Error::Config(format!("unknown fusion setting '{key}'"))),
        }
        Ok(())
    }
}

type Constructor = fn(&FusionConfig) -> Box<dyn FusionStrategy>;

/// Name → fusion strategy constructor.
#[derive(Clone)]
pub struct FusionRegistry {
    entries: BTreeMap<&'static str, Constructor>,
}

impl Default for FusionRegistry {
    fn default() -> Self {
        let mut r = FusionRegistry {
            entries: BTreeMap::new(),
        };
        r.register("blend-heuristic", |c| {
            Box::new(HeuristicBlend { weights: c.weights })
        });
        r.register("oracle-lower", |c| {
            Box::new(Oracle {
                upper: false,
                criterion: c.criterion,
            })
        });
        r.register("oracle-upper", |c| {
            Box::new(Oracle {
                upper: true,
                criterion: c.criterion,
            })
        });
        r
    }
}

impl FusionRegistry {
    pub fn register(&mut self, name: &'static str, make: Constructor) {
        self.entries.insert(name, make);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, cfg: &FusionConfig) -> Result<Box<dyn FusionStrategy>> {
        let make = self.entries.get(cfg.mode.as_str()).ok_or_else(|| {
            Error::Config(format!(
                "unknown fusion mode '{}' (known: {})",
                cfg.mode,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        Ok(make(cfg))
    }
}
