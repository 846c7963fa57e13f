use nalgebra::Vector3;
use rayon::prelude::*;

use super::scene::{Hit, Scene};
use crate::error::Result;
use crate::flow::{equirect_angles, FlowField, VALID};
use crate::projection::{Projection, ProjectionKind};
use crate::raster::Image;
use crate::sphere::{dir_to_spherical, wrap_delta_theta, Direction3};

const AMBIENT: f32 = 0.55;
const DIFFUSE: f32 = 0.45;

fn light_dir() -> Vector3<f64> {
    Vector3::new(0.4, 0.8, 0.3).normalize()
}

/// Rendered frame plus the per-pixel hit record it came from.
#[derive(Debug, Clone)]
pub struct FrameBuffers {
    pub image: Image,
    /// Object index hit by each pixel's ray; `None` for sky and dead pixels.
    pub object: Vec<Option<u32>>,
    /// Hit distance; infinite for sky.
    pub depth: Vec<f64>,
    pub live: Vec<bool>,
}

/// Angular size of one pixel, used to fade sub-pixel texture detail.
fn pixel_angle(proj: &dyn Projection) -> f64 {
    match proj.spec().kind() {
        // canvas is (4F + 2p) × (3F + 2p)
        ProjectionKind::CubePadding => {
            std::f64::consts::FRAC_PI_2 / (proj.width() - proj.height()) as f64
        }
        _ => std::f64::consts::TAU / proj.width() as f64,
    }
}

fn shade(scene: &Scene, world_dir: Vector3<f64>, hit: Option<Hit>, pix: f64) -> [f32; 3] {
    let Some(h) = hit else {
        return scene.sky.color(world_dir);
    };
    let obj = &scene.objects[h.object];
    let cos_in = h.normal_world.dot(&world_dir).abs().max(0.1);
    let footprint = h.t * pix / cos_in;
    let albedo = obj.texture.albedo(h.local, footprint);
    let lambert = h.normal_world.dot(&light_dir()).max(0.0) as f32;
    let lit = albedo.map(|a| a * (AMBIENT + DIFFUSE * lambert));
    if scene.fog_distance.is_finite() {
        let fog = (1.0 - (-h.t / scene.fog_distance).exp()) as f32;
        let sky = scene.sky.horizon;
        [0, 1, 2].map(|c| lit[c] + (sky[c] - lit[c]) * fog)
    } else {
        lit
    }
}

/// Renders frame `frame` into `proj`, including pad pixels of chart
/// layouts. Dead pixels are black.
pub fn render_buffers(scene: &Scene, frame: usize, proj: &dyn Projection) -> FrameBuffers {
    let (w, h) = (proj.width(), proj.height());
    let cam = scene.cameras[frame];
    let pix = pixel_angle(proj);
    // colour, object, depth, live
    type Sample = ([f32; 3], Option<u32>, f64, bool);
    let rows: Vec<Vec<Sample>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let Some((d, _)) = proj.pixel_to_dir(x, y) else {
                        return ([0.0; 3], None, f64::INFINITY, false);
                    };
                    let wd = cam.world_dir(d);
                    let hit = scene.cast(frame, cam.position(), wd);
                    let color = shade(scene, wd, hit, pix);
                    (
                        color,
                        hit.map(|h| h.object as u32),
                        hit.map_or(f64::INFINITY, |h| h.t),
                        true,
                    )
                })
                .collect()
        })
        .collect();
    let mut image = Image::new(w, h, 3);
    let mut object = Vec::with_capacity(w * h);
    let mut depth = Vec::with_capacity(w * h);
    let mut live = Vec::with_capacity(w * h);
    for (i, (c, o, t, l)) in rows.into_iter().flatten().enumerate() {
        image.data[i * 3..i * 3 + 3].copy_from_slice(&c);
        object.push(o);
        depth.push(t);
        live.push(l);
    }
    FrameBuffers {
        image,
        object,
        depth,
        live,
    }
}

pub fn render_frame(scene: &Scene, frame: usize, proj: &dyn Projection) -> Image {
    render_buffers(scene, frame, proj).image
}

/// Camera-frame direction at frame `to` of whatever pixel direction `d`
/// sees at frame `from`, and the object carrying it (`None` for sky).
pub fn track_direction(
    scene: &Scene,
    from: usize,
    to: usize,
    d: Direction3,
) -> (Option<Direction3>, Option<Hit>) {
    let hit = scene.cast_camera(from, d);
    let target = match hit {
        Some(h) => scene.cameras[to].look_at(scene.track(h.object, h.local, to)),
        None => {
            // a point at infinity only follows the camera rotation
            let wd = scene.cameras[from].world_dir(d);
            let c = scene.cameras[to].pose.rotation.inverse() * wd;
            Direction3::new(c.x, c.y, c.z)
        }
    };
    (target, hit)
}

/// Exact equirect flow from frame `from` to frame `to`: every pixel's
/// surface point is carried by its object's motion and re-observed from the
/// camera at `to`. Sky pixels follow the camera rotation only.
pub fn ground_truth_flow(scene: &Scene, from: usize, to: usize, width: usize) -> Result<FlowField> {
    let spec = crate::projection::ProjectionSpec::equirect(width);
    spec.validate()?;
    let (w, h) = spec.dims();
    let rows: Vec<Vec<(f64, f64, u8)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (theta, phi) = equirect_angles(w, h, x as f64, y as f64);
                    let d = crate::sphere::angles_to_dir(theta, phi);
                    match track_direction(scene, from, to, d).0 {
                        Some(t) => {
                            let s = dir_to_spherical(t);
                            (wrap_delta_theta(s.theta - theta), s.phi - phi, VALID)
                        }
                        None => (0.0, 0.0, 0),
                    }
                })
                .collect()
        })
        .collect();
    let mut f = FlowField::empty(spec);
    for (i, (u, v, fl)) in rows.into_iter().flatten().enumerate() {
        f.u[i] = u;
        f.v[i] = v;
        f.flags[i] = fl;
    }
    Ok(f)
}

/// Pixels of frame `from` whose content is not cleanly visible at frame
/// `to` (true = occluded). A pixel counts as visible when the ray toward
/// its tracked point at `to` hits the same object at the expected depth
/// and all four bilinear taps around the target carry that object too.
/// `to_buffers` must be the equirect render of frame `to`.
pub fn occlusion_mask(
    scene: &Scene,
    from: usize,
    to: usize,
    to_buffers: &FrameBuffers,
) -> Vec<bool> {
    let (w, h) = to_buffers.image.dims();
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let (theta, phi) = equirect_angles(w, h, x as f64, y as f64);
            let d = crate::sphere::angles_to_dir(theta, phi);
            let (Some(target), hit) = track_direction(scene, from, to, d) else {
                return true;
            };
            let recast = scene.cast_camera(to, target);
            let same = match (hit, recast) {
                (None, None) => true,
                (Some(a), Some(b)) if a.object == b.object => {
                    let expect =
                        (scene.track(a.object, a.local, to) - scene.cameras[to].position()).norm();
                    (b.t - expect).abs() <= 1e-6 * (1.0 + expect)
                }
                _ => false,
            };
            if !same {
                return true;
            }
            let s = dir_to_spherical(target);
            let sx = (s.theta + std::f64::consts::PI) / std::f64::consts::TAU * w as f64 - 0.5;
            let sy = (std::f64::consts::FRAC_PI_2 - s.phi) / std::f64::consts::PI * h as f64 - 0.5;
            let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
            let id = hit.map(|h| h.object as u32);
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let tx = (x0 + dx).rem_euclid(w as i64) as usize;
                let ty = (y0 + dy).clamp(0, h as i64 - 1) as usize;
                if to_buffers.object[ty * w + tx] != id {
                    return true;
                }
            }
            false
        })
        .collect()
}
