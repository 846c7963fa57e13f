use rayon::prelude::*;

use super::{endpoint_dir, FlowField};
use crate::error::{Error, Result};
use crate::projection::ImageSampler;
use crate::raster::Image;

/// Pulls `target` back along `flow`: each output pixel takes the bilinear
/// sample of `target` at the point its flow vector ends on. Returns the
/// image and which pixels could be filled.
pub fn warp_image(target: &Image, flow: &FlowField) -> Result<(Image, Vec<bool>)> {
    let proj = flow.spec.build()?;
    let (w, h) = (proj.width(), proj.height());
    if target.dims() != (w, h) {
        return Err(Error::Dimensions {
            expected: (w, h),
            actual: target.dims(),
        });
    }
    let sampler = ImageSampler::new(target, proj.as_ref());
    let c = target.channels;
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut px = vec![0.0f32; w * c];
            let mut ok = vec![false; w];
            for x in 0..w {
                let Some(uv) = flow.at(x, y) else { continue };
                let pos = if flow.is_equirect() {
                    endpoint_dir(proj.as_ref(), x, y, uv).and_then(|(d, _)| proj.dir_to_chart(0, d))
                } else {
                    Some((x as f64 + uv.0, y as f64 + uv.1))
                };
                if let Some((sx, sy)) = pos {
                    ok[x] = sampler.sample(sx, sy, &mut px[x * c..(x + 1) * c]);
                }
            }
            (px, ok)
        })
        .collect();
    let mut img = Image::new(w, h, c);
    let mut mask = Vec::with_capacity(w * h);
    for (y, (px, ok)) in rows.into_iter().enumerate() {
        img.data[y * w * c..(y + 1) * w * c].copy_from_slice(&px);
        mask.extend(ok);
    }
    Ok((img, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionSpec;

    #[test]
    fn yaw_flow_shifts_columns() {
        let spec = ProjectionSpec::equirect(64);
        let proj = spec.build().unwrap();
        let img = Image::from_fn(64, 32, 1, |x, y, p| p[0] = (x * 3 + y) as f32);
        let mut f = FlowField::zeros(proj.as_ref());
        // two pixels to the left
        f.u.iter_mut()
            .for_each(|u| *u = -2.0 * std::f64::consts::TAU / 64.0);
        let (out, mask) = warp_image(&img, &f).unwrap();
        assert!(mask.iter().all(|&m| m));
        for y in 0..32 {
            for x in 0..64 {
                let expect = img.pixel((x + 62) % 64, y)[0];
                assert!((out.pixel(x, y)[0] - expect).abs() < 1e-3, "({x},{y})");
            }
        }
    }
}
