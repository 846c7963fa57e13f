//! Endpoint error, spherical distance and their aggregates.
//!
//! Both metrics are defined on equirect fields and reported in pixels:
//! EPE converts radian flow to pixel units, SD scales the great-circle
//! distance between the two flow endpoints by `W / 2π`.

mod heatmap;
mod table;

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{advance_spherical, equirect_angles, FlowField};
use crate::projection::{solid_angle_weights, WeightMap};
use crate::sphere::{great_circle_angle, wrap_delta_theta};

pub use heatmap::{error_map_image, hot_colormap};
pub use table::{CompareTable, TableRow, AVERAGE};

/// Compensated (Neumaier) sum; the result does not depend on how the
/// input was produced, only on its order.
pub fn neumaier_sum(iter: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in iter {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// A per-pixel error map; `None` where the pixel was not evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Option<f64>>,
}

impl ErrorMap {
    pub fn mean(&self) -> f64 {
        let n = self.count();
        if n == 0 {
            return 0.0;
        }
        neumaier_sum(self.values.iter().flatten().copied()) / n as f64
    }

    /// Mean weighted by `weights`, over evaluated pixels with positive weight.
    pub fn weighted_mean(&self, weights: &[f64]) -> f64 {
        let num = neumaier_sum(
            self.values
                .iter()
                .zip(weights)
                .filter_map(|(v, w)| v.map(|v| v * w)),
        );
        let den = neumaier_sum(
            self.values
                .iter()
                .zip(weights)
                .filter_map(|(v, w)| v.map(|_| *w)),
        );
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    pub fn count(&self) -> usize {
        self.values.iter().flatten().count()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }
}

/// Aggregate and per-pixel errors of one prediction against ground truth.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub epe_mean: f64,
    pub sd_mean: f64,
    pub epe_weighted: f64,
    pub sd_weighted: f64,
    pub n_valid: usize,
    pub n_masked: usize,
    pub epe_map: ErrorMap,
    pub sd_map: ErrorMap,
    /// Normalisation used by the last rendered heatmap.
    pub heatmap_max: Option<f64>,
}

fn check_pair(pred: &FlowField, gt: &FlowField) -> Result<()> {
    pred.ensure_equirect()?;
    gt.ensure_equirect()?;
    pred.ensure_same_spec(gt)?;
    pred.check_dims()?;
    gt.check_dims()
}

fn per_pixel(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&[bool]>,
    f: impl Fn(usize, usize, usize) -> f64 + Sync,
) -> Result<ErrorMap> {
    check_pair(pred, gt)?;
    let (w, h) = pred.spec.dims();
    if let Some(m) = mask {
        if m.len() != w * h {
            return Err(Error::Dimensions {
                expected: (w, h),
                actual: (m.len(), 1),
            });
        }
    }
    let values = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let keep = pred.is_valid(i) && gt.is_valid(i) && mask.is_none_or(|m| m[i]);
            keep.then(|| f(i, i % w, i / w))
        })
        .collect();
    Ok(ErrorMap {
        width: w,
        height: h,
        values,
    })
}

/// Per-pixel endpoint error in pixels. The longitude difference is taken
/// the short way around the seam. `mask` restricts evaluation to pixels
/// where it is true.
pub fn epe(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<ErrorMap> {
    let (w, h) = pred.spec.dims();
    let (sx, sy) = (w as f64 / TAU, h as f64 / std::f64::consts::PI);
    per_pixel(pred, gt, mask, |i, _, _| {
        let du = wrap_delta_theta(pred.u[i] - gt.u[i]) * sx;
        let dv = (pred.v[i] - gt.v[i]) * sy;
        du.hypot(dv)
    })
}

/// Per-pixel spherical distance: great-circle angle between predicted and
/// true endpoints, in pixel-equivalent units `W / 2π`.
pub fn spherical_distance(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&[bool]>,
) -> Result<ErrorMap> {
    let (w, h) = pred.spec.dims();
    let scale = w as f64 / TAU;
    per_pixel(pred, gt, mask, |i, x, y| {
        let (theta, phi) = equirect_angles(w, h, x as f64, y as f64);
        let (a, _) = advance_spherical(theta, phi, pred.u[i], pred.v[i]);
        let (b, _) = advance_spherical(theta, phi, gt.u[i], gt.v[i]);
        great_circle_angle(a, b) * scale
    })
}

/// Full report with both metrics and their solid-angle-weighted means.
pub fn evaluate(pred: &FlowField, gt: &FlowField, mask: Option<&[bool]>) -> Result<EvalReport> {
    let weights = solid_angle_weights(pred.spec.build()?.as_ref());
    evaluate_weighted(pred, gt, mask, &weights)
}

pub fn evaluate_weighted(
    pred: &FlowField,
    gt: &FlowField,
    mask: Option<&[bool]>,
    weights: &WeightMap,
) -> Result<EvalReport> {
    let epe_map = epe(pred, gt, mask)?;
    let sd_map = spherical_distance(pred, gt, mask)?;
    let wts = weights.masked();
    let n_valid = epe_map.count();
    Ok(EvalReport {
        epe_mean: epe_map.mean(),
        sd_mean: sd_map.mean(),
        epe_weighted: epe_map.weighted_mean(&wts),
        sd_weighted: sd_map.weighted_mean(&wts),
        n_valid,
        n_masked: epe_map.values.len() - n_valid,
        epe_map,
        sd_map,
        heatmap_max: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionSpec;
    use std::f64::consts::PI;

    fn constant(w: usize, u: f64, v: f64) -> FlowField {
        let proj = ProjectionSpec::equirect(w).build().unwrap();
        let mut f = FlowField::zeros(proj.as_ref());
        f.u.iter_mut().for_each(|x| *x = u);
        f.v.iter_mut().for_each(|x| *x = v);
        f
    }

    #[test]
    fn identical_fields_score_zero() {
        let gt = constant(64, 0.03, -0.02);
        let r = evaluate(&gt, &gt, None).unwrap();
        assert_eq!(
            (r.epe_mean, r.sd_mean, r.epe_weighted, r.sd_weighted),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.n_valid, 64 * 32);
    }

    #[test]
    fn one_pixel_longitude_offset() {
        let gt = constant(128, 0.01, 0.0);
        let pred = constant(128, 0.01 + TAU / 128.0, 0.0);
        let m = epe(&pred, &gt, None).unwrap();
        assert!(m.values.iter().flatten().all(|e| (e - 1.0).abs() < 1e-12));
    }

    #[test]
    fn seam_difference_is_short() {
        let eps = 0.01;
        let gt = constant(256, PI - eps, 0.0);
        let pred = constant(256, -PI + eps, 0.0);
        let expect = 2.0 * eps * 256.0 / TAU;
        let m = epe(&pred, &gt, None).unwrap();
        assert!(m.values.iter().flatten().all(|e| (e - expect).abs() < 1e-9));
    }

    #[test]
    fn sd_is_cosine_scaled_epe_for_longitude_errors() {
        let w = 512;
        let gt = constant(w, 0.02, 0.0);
        let pred = constant(w, 0.02 + 0.1 * TAU / w as f64, 0.0);
        let e = epe(&pred, &gt, None).unwrap();
        let s = spherical_distance(&pred, &gt, None).unwrap();
        for y in 0..w / 2 {
            let (_, phi) = equirect_angles(w, w / 2, 0.0, y as f64);
            let i = y * w + 7;
            let (ev, sv) = (e.values[i].unwrap(), s.values[i].unwrap());
            assert!(
                (sv - ev * phi.cos()).abs() <= 1e-6 * ev * phi.cos(),
                "row {y}"
            );
        }
    }

    #[test]
    fn sd_matches_epe_near_equator() {
        let w = 256;
        let gt = constant(w, 0.0, 0.0);
        for k in 1..10 {
            let d = 0.03 * k as f64 * TAU / w as f64;
            let pred = constant(w, d * 0.6, d * 0.8 / 2.0);
            let e = epe(&pred, &gt, None).unwrap();
            let s = spherical_distance(&pred, &gt, None).unwrap();
            for y in 0..w / 2 {
                let (_, phi) = equirect_angles(w, w / 2, 0.0, y as f64);
                if phi.abs() < 0.1 {
                    let (ev, sv) = (e.values[y * w].unwrap(), s.values[y * w].unwrap());
                    assert!((sv / ev - 1.0).abs() < 0.02);
                }
            }
        }
    }

    #[test]
    fn longitude_shift_invariance() {
        let w = 64;
        let proj = ProjectionSpec::equirect(w).build().unwrap();
        let mut gt = FlowField::zeros(proj.as_ref());
        let mut pred = gt.clone();
        for i in 0..gt.len() {
            gt.u[i] = 0.05 * ((i * 7) % 13) as f64 / 13.0;
            gt.v[i] = -0.02 * ((i * 3) % 5) as f64 / 5.0;
            pred.u[i] = gt.u[i] + 0.01 * ((i * 11) % 7) as f64 / 7.0;
            pred.v[i] = gt.v[i] - 0.004;
        }
        let shift = |f: &FlowField, k: usize| {
            let mut g = f.clone();
            for y in 0..w / 2 {
                for x in 0..w {
                    let src = y * w + x;
                    let dst = y * w + (x + k) % w;
                    g.u[dst] = f.u[src];
                    g.v[dst] = f.v[src];
                }
            }
            g
        };
        let base = evaluate(&pred, &gt, None).unwrap();
        let moved = evaluate(&shift(&pred, 17), &shift(&gt, 17), None).unwrap();
        assert!((base.epe_mean - moved.epe_mean).abs() < 1e-12);
        assert!((base.sd_mean - moved.sd_mean).abs() < 1e-9);
        assert!((base.sd_weighted - moved.sd_weighted).abs() < 1e-9);
    }

    #[test]
    fn uniform_weights_give_plain_mean() {
        let m = ErrorMap {
            width: 3,
            height: 1,
            values: vec![Some(1.0), None, Some(4.0)],
        };
        assert_eq!(m.weighted_mean(&[0.3, 0.3, 0.3]), m.mean());
        assert_eq!(m.mean(), 2.5);
    }

    #[test]
    fn mask_excludes_pixels() {
        let gt = constant(16, 0.0, 0.0);
        let pred = constant(16, 0.1, 0.0);
        let mask: Vec<bool> = (0..16 * 8).map(|i| i % 2 == 0).collect();
        let r = evaluate(&pred, &gt, Some(&mask)).unwrap();
        assert_eq!(r.n_valid, 64);
        assert_eq!(r.n_masked, 64);
        assert!(evaluate(&pred, &FlowField::empty(ProjectionSpec::tricyl(16)), None).is_err());
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let xs: Vec<f64> = (0..10_000)
            .map(|i| ((i * 7919) % 1000) as f64 * 1e-3 + 1e8 * ((i % 2) as f64))
            .collect();
        let fwd = neumaier_sum(xs.iter().copied());
        let rev = neumaier_sum(xs.iter().rev().copied());
        assert!((fwd - rev).abs() <= 1e-9 * fwd.abs());
    }
}
