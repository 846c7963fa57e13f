use rayon::prelude::*;

use super::pyramid::{build_pyramid, upsample_flow, Grid, Plane};
use super::{to_flow_field, EstimateInput, EstimatorConfig, FlowEstimator};
use crate::error::Result;
use crate::flow::FlowField;

/// Coarse-to-fine Horn–Schunck with image warping.
///
/// At each level the second frame is warped by the current flow and the
/// linearised energy
///
/// ```text
/// Σ (Ix·du + Iy·dv + It)² + alpha · Σ_edges |∇(u + du)|² + |∇(v + dv)|²
/// ```
///
/// is minimised by red-black Gauss–Seidel, where each update solves the
/// 2×2 system of one pixel exactly. Smoothness edges stay inside a chart.
#[derive(Debug, Clone)]
pub struct HornSchunck {
    pub levels: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub warps: usize,
}

impl HornSchunck {
    pub fn from_config(cfg: &EstimatorConfig) -> Self {
        HornSchunck {
            levels: cfg.levels,
            alpha: cfg.alpha,
            iterations: cfg.iterations,
            warps: cfg.warps,
        }
    }
}

const NEIGHBOURS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Linearised problem of one warp step.
pub(crate) struct Linearised<'g> {
    grid: &'g Grid,
    ix: Vec<f64>,
    iy: Vec<f64>,
    it: Vec<f64>,
    u0: Vec<f64>,
    v0: Vec<f64>,
    alpha: f64,
    links: Vec<[Option<usize>; 4]>,
}

impl<'g> Linearised<'g> {
    pub(crate) fn new(
        grid: &'g Grid,
        a: &Plane,
        b: &Plane,
        u0: Vec<f64>,
        v0: Vec<f64>,
        alpha: f64,
    ) -> Self {
        let (w, h) = (grid.width, grid.height);
        let warped: Vec<f32> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                if grid.live(i) {
                    b.sample(grid, (i % w) as f64 + u0[i], (i / w) as f64 + v0[i])
                } else {
                    a.data[i]
                }
            })
            .collect();
        let mean: Vec<f64> = (0..w * h)
            .map(|i| 0.5 * (a.data[i] as f64 + warped[i] as f64))
            .collect();
        let links: Vec<[Option<usize>; 4]> = (0..w * h)
            .map(|i| {
                if grid.live(i) {
                    NEIGHBOURS.map(|(dx, dy)| grid.neighbour(i, dx, dy))
                } else {
                    [None; 4]
                }
            })
            .collect();
        let diff = |l: &[Option<usize>; 4], fwd: usize, bwd: usize, i: usize| match (l[fwd], l[bwd])
        {
            (Some(p), Some(m)) => 0.5 * (mean[p] - mean[m]),
            (Some(p), None) => mean[p] - mean[i],
            (None, Some(m)) => mean[i] - mean[m],
            (None, None) => 0.0,
        };
        let ix = (0..w * h).map(|i| diff(&links[i], 0, 1, i)).collect();
        let iy = (0..w * h).map(|i| diff(&links[i], 2, 3, i)).collect();
        let it = (0..w * h)
            .map(|i| warped[i] as f64 - a.data[i] as f64)
            .collect();
        Linearised {
            grid,
            ix,
            iy,
            it,
            u0,
            v0,
            alpha,
            links,
        }
    }

    pub(crate) fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut data = Vec::new();
        let mut smooth = Vec::new();
        for i in 0..u.len() {
            if !self.grid.live(i) {
                continue;
            }
            let r =
                self.ix[i] * (u[i] - self.u0[i]) + self.iy[i] * (v[i] - self.v0[i]) + self.it[i];
            data.push(r * r);
            // each edge once: right and down neighbours
            for j in [self.links[i][0], self.links[i][2]].into_iter().flatten() {
                smooth.push((u[i] - u[j]).powi(2) + (v[i] - v[j]).powi(2));
            }
        }
        crate::metrics::neumaier_sum(data.into_iter())
            + self.alpha * crate::metrics::neumaier_sum(smooth.into_iter())
    }

    /// Update colour: checkerboard, with the last column of an odd
    /// periodic grid split off so no two neighbours share a colour.
    fn colour(&self, i: usize) -> usize {
        let (w, x, y) = (self.grid.width, i % self.grid.width, i / self.grid.width);
        if self.grid.periodic && w % 2 == 1 && x == w - 1 {
            2 + y % 2
        } else {
            (x + y) % 2
        }
    }

    fn update(&self, i: usize, u: &[f64], v: &[f64]) -> (f64, f64) {
        let (mut k, mut su, mut sv) = (0.0, 0.0, 0.0);
        // on a two-column periodic grid left and right are the same pixel
        // through two distinct edges, so duplicates count; self-links do not
        for j in self.links[i].iter().flatten().filter(|&&j| j != i) {
            k += 1.0;
            su += u[*j];
            sv += v[*j];
        }
        if k == 0.0 {
            return (u[i], v[i]);
        }
        let (ix, iy, a) = (self.ix[i], self.iy[i], self.alpha);
        let r = ix * self.u0[i] + iy * self.v0[i] - self.it[i];
        let (a11, a12, a22) = (ix * ix + a * k, ix * iy, iy * iy + a * k);
        let (b1, b2) = (ix * r + a * su, iy * r + a * sv);
        let det = a11 * a22 - a12 * a12;
        ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
    }

    /// Runs `iterations` sweeps from `(u, v)`; returns the energy after each.
    pub(crate) fn solve(&self, u: &mut [f64], v: &mut [f64], iterations: usize) -> Vec<f64> {
        let n = u.len();
        let colours: Vec<Vec<usize>> = (0..4)
            .map(|c| {
                (0..n)
                    .filter(|&i| self.grid.live(i) && self.colour(i) == c)
                    .collect()
            })
            .collect();
        let mut energies = Vec::with_capacity(iterations);
        for _ in 0..iterations {
            for set in &colours {
                let new: Vec<(f64, f64)> = set.par_iter().map(|&i| self.update(i, u, v)).collect();
                for (&i, (nu, nv)) in set.iter().zip(new) {
                    u[i] = nu;
                    v[i] = nv;
                }
            }
            energies.push(self.energy(u, v));
        }
        energies
    }
}

impl FlowEstimator for HornSchunck {
    fn name(&self) -> &'static str {
        "hornschunck"
    }

    fn estimate(&self, input: &EstimateInput) -> Result<FlowField> {
        input.check()?;
        let pyramid = build_pyramid(input.frame_a, input.frame_b, input.proj, self.levels);
        let (mut u, mut v) = (Vec::new(), Vec::new());
        let mut coarse = (0, 0);
        for (grid, a, b) in pyramid.iter().rev() {
            let n = grid.width * grid.height;
            if u.is_empty() {
                u = vec![0.0; n];
                v = vec![0.0; n];
            } else {
                u = upsample_flow(&u, coarse.0, coarse.1, grid);
                v = upsample_flow(&v, coarse.0, coarse.1, grid);
            }
            for _ in 0..self.warps {
                let lin = Linearised::new(grid, a, b, u.clone(), v.clone(), self.alpha);
                lin.solve(&mut u, &mut v, self.iterations);
            }
            coarse = (grid.width, grid.height);
        }
        Ok(to_flow_field(input.proj, &u, &v))
    }
}
