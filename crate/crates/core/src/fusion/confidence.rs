use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ConfidenceMap;
use crate::error::Result;
use crate::flow::FlowField;
use crate::flow::{endpoint_dir, FlowSampler};
use crate::projection::{solid_angle_weights, ProjectionSpec};
use crate::sphere::great_circle_angle;

/// Constants of `t = σ(sharpness · (c_a − c_b))` with
/// `c = prior · normalized_weight − fb · fb_error_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicWeights {
    pub sharpness: f64,
    pub prior: f64,
    pub fb: f64,
}

impl Default for HeuristicWeights {
    fn default() -> Self {
        HeuristicWeights {
            sharpness: 4.0,
            prior: 1.0,
            fb: 1.0,
        }
    }
}

/// Optional per-pixel forward-backward errors, in equirect pixels.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConfidenceCues<'a> {
    pub fb_a: Option<&'a [Option<f64>]>,
    pub fb_b: Option<&'a [Option<f64>]>,
}

/// For every pixel of `target`, the normalized solid-angle weight of the
/// nearest pixel of `source` in the chart owning that direction. Values
/// near 1 mean the source samples that region at its average density;
/// small values mean it is strongly oversampled there.
pub fn prior_map(target: ProjectionSpec, source: ProjectionSpec) -> Result<Vec<f64>> {
    let (tp, sp) = (target.build()?, source.build()?);
    let weights = solid_angle_weights(sp.as_ref()).normalized();
    let (tw, th) = target.dims();
    let (sw, sh) = source.dims();
    let period = sp.x_period();
    Ok((0..tw * th)
        .into_par_iter()
        .map(|i| {
            let Some((d, _)) = tp.pixel_to_dir(i % tw, i / tw) else {
                return 0.0;
            };
            let Some((sx, sy, _)) = sp.dir_to_pixel(d) else {
                return 0.0;
            };
            let mut x = sx.round() as i64;
            if let Some(p) = period {
                x = x.rem_euclid(p as i64);
            }
            let x = x.clamp(0, sw as i64 - 1) as usize;
            let y = (sy.round() as i64).clamp(0, sh as i64 - 1) as usize;
            weights[y * sw + x]
        })
        .collect())
}

/// Round-trip error of following `forward` and then `backward` (sampled at
/// the forward endpoint), in equirect pixels at the equator.
pub fn fb_error(forward: &FlowField, backward: &FlowField) -> Result<Vec<Option<f64>>> {
    forward.ensure_equirect()?;
    forward.ensure_same_spec(backward)?;
    let proj = forward.spec.build()?;
    let sampler = FlowSampler::new(backward)?;
    let w = forward.width();
    let scale = w as f64 / std::f64::consts::TAU;
    Ok((0..forward.len())
        .into_par_iter()
        .map(|i| {
            if !forward.is_valid(i) {
                return None;
            }
            let (x, y) = (i % w, i / w);
            let (start, _) = proj.pixel_to_dir(x, y)?;
            let (mid, _) = endpoint_dir(proj.as_ref(), x, y, (forward.u[i], forward.v[i]))?;
            let (back, _) = sampler.endpoint(mid)?;
            Some(great_circle_angle(start, back) * scale)
        })
        .collect())
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Confidence in prediction a on the equirect grid `target`. The prior term
/// compares how densely each source projection samples a pixel's direction;
/// the consistency term is used where both round-trip errors are known.
pub fn heuristic_confidence(
    target: ProjectionSpec,
    spec_a: ProjectionSpec,
    spec_b: ProjectionSpec,
    cues: &ConfidenceCues,
    weights: &HeuristicWeights,
) -> Result<ConfidenceMap> {
    let (w, h) = target.dims();
    let (prior_a, prior_b) = if weights.prior == 0.0 || spec_a == spec_b {
        (vec![0.0; w * h], vec![0.0; w * h])
    } else {
        (prior_map(target, spec_a)?, prior_map(target, spec_b)?)
    };
    let fb_at = |fb: Option<&[Option<f64>]>, i: usize| fb.and_then(|f| f[i]);
    let values = (0..w * h)
        .map(|i| {
            let mut diff = weights.prior * (prior_a[i] - prior_b[i]);
            if let (Some(ea), Some(eb)) = (fb_at(cues.fb_a, i), fb_at(cues.fb_b, i)) {
                diff -= weights.fb * (ea - eb);
            }
            logistic(weights.sharpness * diff)
        })
        .collect();
    ConfidenceMap::new(w, h, values)
}
