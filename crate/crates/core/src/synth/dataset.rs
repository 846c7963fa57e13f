use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Isometry3, Point3, Translation3, Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::render::{ground_truth_flow, occlusion_mask, render_buffers};
use super::scene::{CameraPose, Primitive, Scene, SceneObject, Sky};
use super::texture::Texture;
use crate::error::{Error, Result};
use crate::flow::write_flow;
use crate::projection::ProjectionSpec;
use crate::raster::write_pfm;

/// Frames between reversals of the camera rotation in the `eft` schedule.
pub const EFT_FLIP_PERIOD: usize = 20;
/// Pitch and roll bound of the `city` camera.
pub const CITY_MAX_TILT: f64 = 30.0 * PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    /// Ground plane with box vehicles moving on it; the camera drives
    /// forward with bounded pitch and roll.
    City,
    /// Floating spheres and boxes with random rigid motions; the camera
    /// spins and reverses direction periodically.
    Eft,
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Schedule::City => "city",
            Schedule::Eft => "eft",
        })
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "city" => Ok(Schedule::City),
            "eft" => Ok(Schedule::Eft),
            _ => Err(Error::Config(format!(
                "unknown schedule '{s}' (expected city or eft)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub schedule: Schedule,
    pub pairs: usize,
    pub seed: u64,
    /// Equirect width; height is half of it.
    pub width: usize,
    pub objects: usize,
}

impl DatasetConfig {
    pub fn new(schedule: Schedule, pairs: usize, seed: u64) -> Self {
        DatasetConfig {
            schedule,
            pairs,
            seed,
            width: 512,
            objects: 30,
        }
    }
}

/// Independent random stream `stream` of the master seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_texture(rng: &mut impl Rng) -> Texture {
    let base = [0, 1, 2].map(|_| rng.random_range(0.25..0.95f32));
    let k = rng.random_range(0.2..0.5f32);
    Texture {
        base,
        accent: [base[2] * k, base[0] * k, base[1] * k],
        period: rng.random_range(0.3..0.9),
        noise: rng.random_range(0.3..0.7),
        seed: rng.random(),
    }
}

fn random_axis(rng: &mut impl Rng) -> Unit<Vector3<f64>> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return Unit::new_normalize(v);
        }
    }
}

/// Sign of the camera spin for the step `frame → frame + 1` of the `eft`
/// schedule.
pub fn rotation_sign(frame: usize) -> f64 {
    if (frame / EFT_FLIP_PERIOD).is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn city_cameras(frames: usize, rng: &mut impl Rng) -> Vec<CameraPose> {
    let tilt = |rng: &mut dyn rand::RngCore| {
        (
            rng.random_range(5f64.to_radians()..CITY_MAX_TILT),
            rng.random_range(0.02..0.07),
            rng.random_range(0.0..TAU),
        )
    };
    let (pa, pw, pp) = tilt(rng);
    let (ra, rw, rp) = tilt(rng);
    let yaw0 = rng.random_range(-PI..PI);
    let yaw_rate = rng.random_range(-0.02..0.02);
    let speed = rng.random_range(0.05..0.12);
    let mut pos = Point3::new(0.0, 1.5, 0.0);
    (0..frames)
        .map(|t| {
            let yaw = yaw0 + yaw_rate * t as f64;
            let pitch = (pa * (pw * t as f64 + pp).sin()).clamp(-CITY_MAX_TILT, CITY_MAX_TILT);
            let roll = (ra * (rw * t as f64 + rp).sin()).clamp(-CITY_MAX_TILT, CITY_MAX_TILT);
            let cam = CameraPose::from_attitude(pos, yaw, pitch, roll);
            pos += Vector3::new(yaw.cos(), 0.0, yaw.sin()) * speed;
            cam
        })
        .collect()
}

fn eft_cameras(frames: usize, rng: &mut impl Rng) -> Vec<CameraPose> {
    let axis = random_axis(rng);
    let spin = rng.random_range(0.015..0.035);
    let vel = random_axis(rng).into_inner() * rng.random_range(0.0..0.03);
    let mut attitude =
        UnitQuaternion::from_axis_angle(&random_axis(rng), rng.random_range(0.0..TAU));
    (0..frames)
        .map(|t| {
            let cam = CameraPose {
                pose: Isometry3::from_parts(Translation3::from(vel * t as f64), attitude),
            };
            attitude = UnitQuaternion::from_axis_angle(&axis, rotation_sign(t) * spin) * attitude;
            cam
        })
        .collect()
}

fn vehicle(frames: usize, rng: &mut impl Rng) -> SceneObject {
    let building = rng.random_bool(0.3);
    let half = if building {
        [
            rng.random_range(0.8..2.0),
            rng.random_range(1.5..4.0),
            rng.random_range(0.8..2.0),
        ]
    } else {
        [
            rng.random_range(0.6..1.1),
            rng.random_range(0.35..0.6),
            rng.random_range(0.3..0.5),
        ]
    };
    let dist = rng.random_range(4.0..16.0);
    let bearing = rng.random_range(-PI..PI);
    let mut pos = Vector3::new(dist * bearing.cos(), half[1], dist * bearing.sin());
    let mut heading = rng.random_range(-PI..PI);
    let (speed, turn) = if building {
        (0.0, 0.0)
    } else {
        (
            rng.random_range(0.03..0.12),
            rng.random_range(-0.015..0.015),
        )
    };
    let poses = (0..frames)
        .map(|_| {
            let pose = Isometry3::from_parts(
                Translation3::from(pos),
                UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -heading),
            );
            pos += Vector3::new(heading.cos(), 0.0, heading.sin()) * speed;
            heading += turn;
            pose
        })
        .collect();
    SceneObject {
        primitive: Primitive::Cuboid { half },
        texture: random_texture(rng),
        poses,
    }
}

fn floater(frames: usize, rng: &mut impl Rng) -> SceneObject {
    let primitive = if rng.random_bool(0.5) {
        Primitive::Sphere {
            radius: rng.random_range(0.3..1.2),
        }
    } else {
        Primitive::Cuboid {
            half: [0, 1, 2].map(|_| rng.random_range(0.2..0.9)),
        }
    };
    let start = random_axis(rng).into_inner() * rng.random_range(3.0..10.0);
    let vel = random_axis(rng).into_inner() * rng.random_range(0.0..0.05);
    let axis = random_axis(rng);
    let spin = rng.random_range(-0.03..0.03);
    let orient = UnitQuaternion::from_axis_angle(&random_axis(rng), rng.random_range(0.0..TAU));
    let poses = (0..frames)
        .map(|t| {
            Isometry3::from_parts(
                Translation3::from(start + vel * t as f64),
                UnitQuaternion::from_axis_angle(&axis, spin * t as f64) * orient,
            )
        })
        .collect();
    SceneObject {
        primitive,
        texture: random_texture(rng),
        poses,
    }
}

fn keeps_clear(obj: &SceneObject, cameras: &[CameraPose]) -> bool {
    obj.poses.iter().zip(cameras).all(|(pose, cam)| {
        let local = pose.inverse_transform_point(&cam.position()).coords;
        !obj.primitive.contains(local, 0.5)
    })
}

/// Builds the scene of a schedule for `frames` frames. Objects that would
/// come within half a unit of the camera are redrawn.
pub fn build_scene(schedule: Schedule, frames: usize, objects: usize, seed: u64) -> Result<Scene> {
    let mut cam_rng = rng_stream(seed, 0);
    let cameras = match schedule {
        Schedule::City => city_cameras(frames, &mut cam_rng),
        Schedule::Eft => eft_cameras(frames, &mut cam_rng),
    };
    let mut list = Vec::with_capacity(objects + 1);
    if schedule == Schedule::City {
        list.push(SceneObject {
            primitive: Primitive::Ground,
            texture: Texture {
                base: [0.62, 0.6, 0.55],
                accent: [0.22, 0.25, 0.3],
                period: 1.5,
                noise: 0.4,
                seed: seed ^ 0x5eed,
            },
            poses: vec![Isometry3::identity(); frames],
        });
    }
    for k in 0..objects {
        let mut rng = rng_stream(seed, 1 + k as u64);
        let obj = (0..1000)
            .map(|_| match schedule {
                Schedule::City => vehicle(frames, &mut rng),
                Schedule::Eft => floater(frames, &mut rng),
            })
            .find(|o| keeps_clear(o, &cameras))
            .ok_or_else(|| {
                Error::Config(format!(
                    "could not place object {k} clear of the camera path"
                ))
            })?;
        list.push(obj);
    }
    let scene = Scene {
        objects: list,
        cameras,
        sky: Sky {
            clouds: 0.12,
            seed: seed.wrapping_mul(31),
            ..Sky::default()
        },
        fog_distance: match schedule {
            Schedule::City => 30.0,
            Schedule::Eft => f64::INFINITY,
        },
    };
    scene.validate()?;
    Ok(scene)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub position: [f64; 3],
    /// Camera-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub yaw_pitch_roll_deg: [f64; 3],
}

impl From<&CameraPose> for PoseRecord {
    fn from(c: &CameraPose) -> Self {
        let m = c.pose.rotation.to_rotation_matrix();
        let (y, p, r) = c.attitude();
        let p3 = c.position();
        PoseRecord {
            position: [p3.x, p3.y, p3.z],
            rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)])),
            yaw_pitch_roll_deg: [y.to_degrees(), p.to_degrees(), r.to_degrees()],
        }
    }
}

/// One line of the dataset manifest. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub pair: usize,
    pub frame_a: String,
    pub frame_b: String,
    pub flow_ab: String,
    pub flow_ba: String,
    pub occlusion: String,
    pub spec: String,
    pub seed: u64,
    pub schedule: Schedule,
    pub camera_a: PoseRecord,
    pub camera_b: PoseRecord,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rotation_sign: Option<i8>,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub path: PathBuf,
    pub records: Vec<PairRecord>,
}

impl Manifest {
    pub fn dir(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.dir().join(rel)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<PairRecord>, _>>()?;
        Ok(Manifest {
            path: path.to_path_buf(),
            records,
        })
    }
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

/// Renders the frames, exact forward and backward flows and occlusion
/// masks of a schedule into `out`, and writes `out/manifest.jsonl`.
pub fn generate_dataset(cfg: &DatasetConfig, out: &Path) -> Result<Manifest> {
    if cfg.pairs == 0 {
        return Err(Error::Config("pairs must be positive".into()));
    }
    let spec = ProjectionSpec::equirect(cfg.width);
    spec.validate()?;
    let frames = cfg.pairs + 1;
    let scene = build_scene(cfg.schedule, frames, cfg.objects, cfg.seed)?;
    for sub in ["frames", "flows", "occlusion"] {
        create_dir(&out.join(sub))?;
    }
    let proj = spec.build()?;
    let buffers: Vec<_> = (0..frames)
        .into_par_iter()
        .map(|t| render_buffers(&scene, t, proj.as_ref()))
        .collect();
    let frame_name = |t: usize| format!("frames/frame_{t:05}.png");
    buffers
        .par_iter()
        .enumerate()
        .map(|(t, b)| b.image.save_png(&out.join(frame_name(t))))
        .collect::<Result<Vec<_>>>()?;
    let records = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| -> Result<PairRecord> {
            let (a, b) = (i, i + 1);
            let flow_ab = format!("flows/flow_{i:05}_fw.sfl");
            let flow_ba = format!("flows/flow_{i:05}_bw.sfl");
            let occlusion = format!("occlusion/occ_{i:05}.pfm");
            write_flow(
                &ground_truth_flow(&scene, a, b, cfg.width)?,
                &out.join(&flow_ab),
            )?;
            write_flow(
                &ground_truth_flow(&scene, b, a, cfg.width)?,
                &out.join(&flow_ba),
            )?;
            let occ: Vec<f32> = occlusion_mask(&scene, a, b, &buffers[b])
                .into_iter()
                .map(|o| if o { 1.0 } else { 0.0 })
                .collect();
            write_pfm(&out.join(&occlusion), spec.width(), spec.height(), &occ)?;
            Ok(PairRecord {
                pair: i,
                frame_a: frame_name(a),
                frame_b: frame_name(b),
                flow_ab,
                flow_ba,
                occlusion,
                spec: spec.to_string(),
                seed: cfg.seed,
                schedule: cfg.schedule,
                camera_a: (&scene.cameras[a]).into(),
                camera_b: (&scene.cameras[b]).into(),
                rotation_sign: (cfg.schedule == Schedule::Eft).then(|| rotation_sign(a) as i8),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = out.join("manifest.jsonl");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    for r in &records {
        writeln!(f, "{}", serde_json::to_string(r)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(Manifest { path, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn city_tilt_stays_bounded() {
        for seed in 0..10 {
            let scene = build_scene(Schedule::City, 120, 5, seed).unwrap();
            for cam in &scene.cameras {
                let (_, p, r) = cam.attitude();
                assert!(p.abs() <= 45f64.to_radians() && r.abs() <= 45f64.to_radians());
            }
        }
    }

    #[test]
    fn eft_spin_reverses_every_twenty_frames() {
        for t in 1..200 {
            assert_eq!(
                rotation_sign(t) != rotation_sign(t - 1),
                t % 20 == 0,
                "frame {t}"
            );
        }
        let scene = build_scene(Schedule::Eft, 61, 3, 4).unwrap();
        let step = |t: usize| {
            let (a, b) = (
                scene.cameras[t].pose.rotation,
                scene.cameras[t + 1].pose.rotation,
            );
            (b * a.inverse()).scaled_axis()
        };
        let first = step(0);
        for t in 0..60 {
            let s = step(t);
            // same axis every frame, sign set by the schedule
            assert!(s.cross(&first).norm() < 1e-9 * first.norm());
            assert_eq!(
                s.dot(&first).signum(),
                rotation_sign(t) * rotation_sign(0),
                "frame {t}"
            );
        }
    }

    #[test]
    fn objects_keep_clear_of_camera() {
        for schedule in [Schedule::City, Schedule::Eft] {
            let scene = build_scene(schedule, 40, 30, 11).unwrap();
            scene.validate().unwrap();
        }
    }

    #[test]
    fn schedule_names_parse() {
        assert_eq!("eft".parse::<Schedule>().unwrap(), Schedule::Eft);
        assert!("town".parse::<Schedule>().unwrap_err().is_config());
    }
}
