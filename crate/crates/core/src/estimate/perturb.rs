use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EstimateInput, EstimatorConfig, FlowEstimator};
use crate::error::{Error, Result};
use crate::flow::{equirect_angles, reproject_flow, FlowField, SATURATED};
use crate::projection::{solid_angle_weights, ProjectionKind};
use crate::sphere::{dir_to_spherical, wrap_delta_theta};
use crate::synth::{fbm, rng_stream};

/// Where the error of a perturbed estimate is large.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbProfile {
    Uniform,
    /// Grows with |latitude| of the pixel direction.
    Latitude,
    /// Largest at the equator, vanishing toward the poles.
    InverseLatitude,
    /// Grows with the chart's own area distortion, `1 − w / w_max` for the
    /// solid-angle weight `w` of the pixel. For equirect that is `1 − cos φ`,
    /// for a tri-cylinder band it grows away from the band equator.
    Chart,
}

impl fmt::Display for PerturbProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PerturbProfile::Uniform => "uniform",
            PerturbProfile::Latitude => "latitude",
            PerturbProfile::InverseLatitude => "inverse-latitude",
            PerturbProfile::Chart => "chart",
        })
    }
}

impl FromStr for PerturbProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => PerturbProfile::Uniform,
            "latitude" => PerturbProfile::Latitude,
            "inverse-latitude" => PerturbProfile::InverseLatitude,
            "chart" => PerturbProfile::Chart,
            _ => return Err(Error::Config(format!("unknown perturbation profile '{s}'"))),
        })
    }
}

/// Error model: at pixel p the added vector (in chart pixels) is
/// `amplitude · (floor + (1 − floor) · ramp(p)) · (bias · B(p) + noise · N(p))`
/// with `B` a smooth field on the sphere in [−1, 1]² and `N` unit Gaussian
/// noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbModel {
    pub profile: PerturbProfile,
    pub amplitude: f64,
    pub floor: f64,
    pub bias: f64,
    pub noise: f64,
}

impl PerturbModel {
    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        PerturbModel {
            profile: cfg.profile,
            amplitude: cfg.amplitude,
            floor: cfg.floor,
            bias: cfg.bias,
            noise: cfg.noise,
        }
    }
}

/// Adds the error model to every valid pixel of `field`. Deterministic in
/// `seed`; each row draws from its own random stream.
pub fn perturb_gt(field: &FlowField, model: &PerturbModel, seed: u64) -> Result<FlowField> {
    field.check_dims()?;
    let mut out = field.clone();
    if model.amplitude == 0.0 {
        return Ok(out);
    }
    let proj = field.spec.build()?;
    let (w, h) = (proj.width(), proj.height());
    let distortion = (model.profile == PerturbProfile::Chart).then(|| {
        let wm = solid_angle_weights(proj.as_ref());
        let max = wm.masked().into_iter().fold(0.0, f64::max);
        wm.weights
            .iter()
            .map(|x| (1.0 - x / max).clamp(0.0, 1.0))
            .collect::<Vec<_>>()
    });
    let equirect = field.spec.kind() == ProjectionKind::Equirect;
    let rows: Vec<Vec<(usize, f64, f64, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rng = rng_stream(seed, y as u64);
            let mut row = Vec::new();
            for x in 0..w {
                let i = y * w + x;
                // draw even for invalid pixels so the stream does not depend on validity
                let n: (f64, f64) = (
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                if !field.is_valid(i) {
                    continue;
                }
                let Some((d, _)) = proj.pixel_to_dir(x, y) else {
                    continue;
                };
                let ramp = match model.profile {
                    PerturbProfile::Uniform => 1.0,
                    PerturbProfile::Latitude => dir_to_spherical(d).phi.abs() / FRAC_PI_2,
                    PerturbProfile::InverseLatitude => {
                        1.0 - dir_to_spherical(d).phi.abs() / FRAC_PI_2
                    }
                    PerturbProfile::Chart => {
                        distortion.as_ref().expect("computed for chart profile")[i]
                    }
                };
                let amp = model.amplitude * (model.floor + (1.0 - model.floor) * ramp);
                let q = Vector3::new(d.x, d.y, d.z) * 2.0;
                let bias = (
                    2.0 * fbm(q, seed ^ 0xB1A5) - 1.0,
                    2.0 * fbm(q, seed ^ 0xB1A6) - 1.0,
                );
                let du = amp * (model.bias * bias.0 + model.noise * n.0);
                let dv = amp * (model.bias * bias.1 + model.noise * n.1);
                if equirect {
                    let (du, dv) = FlowField::equirect_from_pixels(&field.spec, du, dv);
                    let (_, phi) = equirect_angles(w, h, x as f64, y as f64);
                    let mut u = field.u[i] + du;
                    if !(-PI < u && u <= PI) {
                        u = wrap_delta_theta(u);
                    }
                    let v = field.v[i] + dv;
                    let clamped = (phi + v).clamp(-FRAC_PI_2, FRAC_PI_2) - phi;
                    row.push((i, u, clamped, clamped != v));
                } else {
                    row.push((i, field.u[i] + du, field.v[i] + dv, false));
                }
            }
            row
        })
        .collect();
    for (i, u, v, sat) in rows.into_iter().flatten() {
        out.u[i] = u;
        out.v[i] = v;
        if sat {
            out.flags[i] |= SATURATED;
        }
    }
    Ok(out)
}

/// Ground truth re-expressed in the working projection plus a controlled
/// error model. Stands in for a learned estimator whose error depends on
/// where in the chart a pixel lies.
#[derive(Debug, Clone)]
pub struct PerturbedGt {
    pub model: PerturbModel,
    pub seed: u64,
}

impl PerturbedGt {
    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        PerturbedGt {
            model: PerturbModel::from_config(cfg),
            seed: cfg.seed,
        }
    }
}

impl FlowEstimator for PerturbedGt {
    fn name(&self) -> &'static str {
        "perturbed-gt"
    }

    fn estimate(&self, input: &EstimateInput) -> Result<FlowField> {
        let gt = input.gt.ok_or_else(|| {
            Error::Config("the perturbed-gt estimator needs ground-truth flow".into())
        })?;
        let spec = input.proj.spec();
        let base = if gt.spec == spec {
            gt.clone()
        } else {
            reproject_flow(gt, spec)?
        };
        let seed = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ input.seed;
        perturb_gt(&base, &self.model, seed)
    }
}
