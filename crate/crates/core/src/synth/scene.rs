use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::texture::{fbm, Texture};
use crate::error::{Error, Result};
use crate::sphere::Direction3;

/// Object-to-world (or camera-to-world) rigid transform.
pub type RigidMotion = Isometry3<f64>;

/// Shapes in object-local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Primitive {
    /// Centred at the origin.
    Sphere { radius: f64 },
    /// Axis-aligned in the local frame, centred at the origin.
    Cuboid { half: [f64; 3] },
    /// The plane y = 0, visible from above.
    Ground,
}

/// Nearest intersection in local coordinates.
#[derive(Debug, Clone, Copy)]
pub struct LocalHit {
    pub t: f64,
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Primitive {
    /// Ray `o + t·d` with unit `d`, `t > 0`.
    pub fn intersect(&self, o: Vector3<f64>, d: Vector3<f64>) -> Option<LocalHit> {
        const EPS: f64 = 1e-9;
        match *self {
            Primitive::Sphere { radius } => {
                let b = o.dot(&d);
                let c = o.dot(&o) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > EPS { -b - s } else { -b + s };
                (t > EPS).then(|| {
                    let point = o + d * t;
                    LocalHit {
                        t,
                        point,
                        normal: point / radius,
                    }
                })
            }
            Primitive::Cuboid { half } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-300 {
                        if o[k].abs() > half[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (-half[k] - o[k]) / d[k];
                    let b = (half[k] - o[k]) / d[k];
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 {
                    return None;
                }
                let t = if t0 > EPS { t0 } else { t1 };
                (t > EPS).then(|| {
                    let point = o + d * t;
                    let k = (0..3)
                        .max_by(|&i, &j| {
                            (point[i].abs() / half[i]).total_cmp(&(point[j].abs() / half[j]))
                        })
                        .expect("three axes");
                    let mut normal = Vector3::zeros();
                    normal[k] = point[k].signum();
                    LocalHit { t, point, normal }
                })
            }
            Primitive::Ground => {
                if o.y <= 0.0 || d.y >= 0.0 {
                    return None;
                }
                let t = -o.y / d.y;
                Some(LocalHit {
                    t,
                    point: o + d * t,
                    normal: Vector3::y(),
                })
            }
        }
    }

    pub fn contains(&self, p: Vector3<f64>, margin: f64) -> bool {
        match *self {
            Primitive::Sphere { radius } => p.norm() < radius + margin,
            Primitive::Cuboid { half } => (0..3).all(|k| p[k].abs() < half[k] + margin),
            Primitive::Ground => p.y < margin,
        }
    }

    /// Radius of a bounding sphere; infinite for the ground.
    pub fn bound(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Cuboid { half } => Vector3::from(half).norm(),
            Primitive::Ground => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneObject {
    pub primitive: Primitive,
    pub texture: Texture,
    /// Object-to-world transform per frame.
    pub poses: Vec<RigidMotion>,
}

/// Camera-to-world transform. In camera coordinates +x is the view centre
/// (θ = 0), +y is up and +z is θ = π/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub pose: RigidMotion,
}

impl CameraPose {
    /// Heading `yaw` turns the view toward +θ; `pitch` raises it; `roll`
    /// turns about the view axis.
    pub fn from_attitude(position: Point3<f64>, yaw: f64, pitch: f64, roll: f64) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), pitch)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll);
        CameraPose {
            pose: Isometry3::from_parts(Translation3::from(position.coords), rotation),
        }
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.pose.translation.vector)
    }

    /// Inverse of [`CameraPose::from_attitude`]: (yaw, pitch, roll).
    pub fn attitude(&self) -> (f64, f64, f64) {
        let m = self.pose.rotation.to_rotation_matrix();
        let fwd = m * Vector3::x();
        let up = m * Vector3::y();
        let pitch = fwd.y.clamp(-1.0, 1.0).asin();
        let yaw = fwd.z.atan2(fwd.x);
        // up vector of the un-rolled frame with the same forward axis
        let flat_up = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -yaw)
            * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), pitch)
            * Vector3::y();
        let lateral = fwd.cross(&flat_up);
        let roll = up.dot(&lateral).atan2(up.dot(&flat_up));
        (yaw, pitch, roll)
    }

    pub fn world_dir(&self, d: Direction3) -> Vector3<f64> {
        self.pose.rotation * Vector3::new(d.x, d.y, d.z)
    }

    /// Camera-frame direction of world point `p`.
    pub fn look_at(&self, p: Point3<f64>) -> Option<Direction3> {
        let c = self.pose.inverse_transform_point(&p);
        Direction3::new(c.x, c.y, c.z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sky {
    pub zenith: [f32; 3],
    pub horizon: [f32; 3],
    pub nadir: [f32; 3],
    /// Amplitude of the cloud layer; zero gives a pure latitude gradient.
    pub clouds: f64,
    pub seed: u64,
}

impl Default for Sky {
    fn default() -> Self {
        Sky {
            zenith: [0.25, 0.45, 0.85],
            horizon: [0.85, 0.88, 0.92],
            nadir: [0.35, 0.3, 0.25],
            clouds: 0.0,
            seed: 0,
        }
    }
}

impl Sky {
    /// Colour of a world-space direction.
    pub fn color(&self, d: Vector3<f64>) -> [f32; 3] {
        let s = d.y.clamp(-1.0, 1.0);
        let (far, t) = if s >= 0.0 {
            (self.zenith, s.powf(0.6) as f32)
        } else {
            (self.nadir, (-s).powf(0.6) as f32)
        };
        let mut c = [0, 1, 2].map(|k| self.horizon[k] + (far[k] - self.horizon[k]) * t);
        if self.clouds > 0.0 {
            let n = (fbm(d * 3.0, self.seed) - 0.5) * 2.0 * self.clouds;
            c = c.map(|v| (v + n as f32).clamp(0.0, 1.0));
        }
        c
    }
}

/// Rigid scene with per-frame object and camera poses.
#[derive(Debug, Clone)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
    pub cameras: Vec<CameraPose>,
    pub sky: Sky,
    /// Distance at which fog reaches 63%; infinite disables it.
    pub fog_distance: f64,
}

/// Nearest hit of a camera ray.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub object: usize,
    pub t: f64,
    pub local: Vector3<f64>,
    pub normal_world: Vector3<f64>,
}

impl Scene {
    pub fn frame_count(&self) -> usize {
        self.cameras.len()
    }

    /// Checks pose counts and that the camera is never inside an object.
    pub fn validate(&self) -> Result<()> {
        let n = self.frame_count();
        if n == 0 {
            return Err(Error::Config("scene has no frames".into()));
        }
        for (k, obj) in self.objects.iter().enumerate() {
            if obj.poses.len() != n {
                return Err(Error::Config(format!(
                    "object {k} has {} poses for {n} frames",
                    obj.poses.len()
                )));
            }
            for (t, (pose, cam)) in obj.poses.iter().zip(&self.cameras).enumerate() {
                let local = pose.inverse_transform_point(&cam.position()).coords;
                if obj.primitive.contains(local, 0.0) {
                    return Err(Error::Config(format!(
                        "camera is inside object {k} at frame {t}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Casts a world ray at frame `frame`.
    pub fn cast(&self, frame: usize, origin: Point3<f64>, dir: Vector3<f64>) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for (k, obj) in self.objects.iter().enumerate() {
            let pose = &obj.poses[frame];
            let o = pose.inverse_transform_point(&origin).coords;
            let d = pose.inverse_transform_vector(&dir);
            if obj.primitive.bound().is_finite() {
                // cheap rejection against the bounding sphere
                let b = o.dot(&d);
                let r = obj.primitive.bound();
                if o.dot(&o) - b * b > r * r {
                    continue;
                }
            }
            if let Some(h) = obj.primitive.intersect(o, d) {
                if best.is_none_or(|b| h.t < b.t) {
                    best = Some(Hit {
                        object: k,
                        t: h.t,
                        local: h.point,
                        normal_world: pose.rotation * h.normal,
                    });
                }
            }
        }
        best
    }

    /// Casts the camera ray of camera-frame direction `d`.
    pub fn cast_camera(&self, frame: usize, d: Direction3) -> Option<Hit> {
        let cam = &self.cameras[frame];
        self.cast(frame, cam.position(), cam.world_dir(d))
    }

    /// World position at frame `to` of the surface point hit at some frame.
    pub fn track(&self, object: usize, local: Vector3<f64>, to: usize) -> Point3<f64> {
        self.objects[object].poses[to].transform_point(&Point3::from(local))
    }
}
