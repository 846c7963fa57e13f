//! Unit-sphere geometry.
//!
//! Axis convention: +y is up (poles at latitude ±π/2) and longitude is
//! measured from +x toward +z. All angles are radians.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point on the unit viewing sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction3 {
    pub const X: Direction3 = Direction3 {
        x: 1.0,
        y: 0.0,
        z: 0.0,
    };
    pub const Y: Direction3 = Direction3 {
        x: 0.0,
        y: 1.0,
        z: 0.0,
    };
    pub const Z: Direction3 = Direction3 {
        x: 0.0,
        y: 0.0,
        z: 1.0,
    };

    /// Normalizes `(x, y, z)`. Returns `None` for the zero vector or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return None;
        }
        Some(Direction3 {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Wraps components that are already unit length.
    pub const fn from_unit(x: f64, y: f64, z: f64) -> Self {
        Direction3 { x, y, z }
    }

    pub fn dot(self, o: Direction3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Direction3) -> [f64; 3] {
        [
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        ]
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Option<Self> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_spherical(self) -> SphericalCoord {
        dir_to_spherical(self)
    }
}

impl Neg for Direction3 {
    type Output = Direction3;
    fn neg(self) -> Direction3 {
        Direction3::from_unit(-self.x, -self.y, -self.z)
    }
}

/// Plain 3-vector arithmetic used by chart formulas before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Vec3(pub f64, pub f64, pub f64);

impl Vec3 {
    pub fn normalized(self) -> Option<Direction3> {
        Direction3::new(self.0, self.1, self.2)
    }
    pub fn dot(self, d: Direction3) -> f64 {
        self.0 * d.x + self.1 * d.y + self.2 * d.z
    }
}

impl From<Direction3> for Vec3 {
    fn from(d: Direction3) -> Self {
        Vec3(d.x, d.y, d.z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3(self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3(self.0 - o.0, self.1 - o.1, self.2 - o.2)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3(self.0 * s, self.1 * s, self.2 * s)
    }
}

/// Longitude `theta` in [−π, π), latitude `phi` in [−π/2, π/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    /// Wraps `theta` into [−π, π) and clamps `phi`.
    pub fn new(theta: f64, phi: f64) -> Self {
        SphericalCoord {
            theta: wrap_longitude(theta),
            phi: phi.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    pub fn to_dir(self) -> Direction3 {
        spherical_to_dir(self)
    }
}

pub fn dir_to_spherical(d: Direction3) -> SphericalCoord {
    let theta = d.z.atan2(d.x);
    let phi = d.y.atan2((d.x * d.x + d.z * d.z).sqrt());
    SphericalCoord::new(theta, phi)
}

pub fn spherical_to_dir(s: SphericalCoord) -> Direction3 {
    angles_to_dir(s.theta, s.phi)
}

/// Same formula as [`spherical_to_dir`] without wrapping or clamping, so a
/// latitude past a pole continues over it.
pub fn angles_to_dir(theta: f64, phi: f64) -> Direction3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Direction3::from_unit(cp * ct, sp, cp * st)
}

/// Longitude into [−π, π).
pub fn wrap_longitude(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid may round up to exactly TAU
    if t >= PI {
        t - TAU
    } else {
        t
    }
}

/// Angle difference into (−π, π], so longitude flow takes the short way around.
pub fn wrap_delta_theta(dt: f64) -> f64 {
    let t = PI - (PI - dt).rem_euclid(TAU);
    if t <= -PI {
        t + TAU
    } else {
        t
    }
}

/// Great-circle angle in [0, π], via `atan2(|a×b|, a·b)`.
pub fn great_circle_angle(a: Direction3, b: Direction3) -> f64 {
    let c = a.cross(b);
    let s = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    s.atan2(a.dot(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn axis_and_pole_cases() {
        let s = dir_to_spherical(Direction3::X);
        assert_abs_diff_eq!(s.theta, 0.0);
        assert_abs_diff_eq!(s.phi, 0.0);
        let s = dir_to_spherical(Direction3::Y);
        assert_abs_diff_eq!(s.theta, 0.0);
        assert_abs_diff_eq!(s.phi, FRAC_PI_2);

        let d = spherical_to_dir(SphericalCoord::new(0.0, 0.0));
        assert_abs_diff_eq!(d.x, 1.0);
        let d = spherical_to_dir(SphericalCoord::new(FRAC_PI_2, 0.0));
        assert_abs_diff_eq!(d.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.z, 1.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn oblique_direction() {
        // atan2(0.7071068, 0.5) and atan2(0.5, sqrt(0.25 + 0.5)) by hand
        let d = Direction3::new(0.5, 0.5, 0.7071068).unwrap();
        let s = dir_to_spherical(d);
        assert_abs_diff_eq!(s.theta, 0.955317, epsilon = 1e-6);
        assert_abs_diff_eq!(s.phi, 0.523599, epsilon = 1e-6);
        let back = spherical_to_dir(s);
        assert!(great_circle_angle(back, d) < 1e-12);
    }

    #[test]
    fn longitude_range_is_half_open() {
        let s = dir_to_spherical(Direction3::new(-1.0, 0.0, 0.0).unwrap());
        assert_eq!(s.theta, -PI);
        assert_eq!(wrap_longitude(PI), -PI);
    }

    #[test]
    fn wrap_delta_examples() {
        assert_eq!(wrap_delta_theta(0.0), 0.0);
        assert_abs_diff_eq!(wrap_delta_theta(TAU - 0.1), -0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_delta_theta(-3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_delta_theta(PI), PI);
        assert_abs_diff_eq!(wrap_delta_theta(-PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn great_circle_cases() {
        let a = Direction3::new(0.3, -0.2, 0.9).unwrap();
        assert_eq!(great_circle_angle(a, a), 0.0);
        assert_abs_diff_eq!(great_circle_angle(a, -a), PI);
        assert_abs_diff_eq!(great_circle_angle(Direction3::X, Direction3::Z), FRAC_PI_2);
    }

    #[test]
    fn round_trip_ten_thousand() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::StandardNormal;
        for _ in 0..10_000 {
            let d = Direction3::new(
                rng.sample::<f64, _>(normal),
                rng.sample::<f64, _>(normal),
                rng.sample::<f64, _>(normal),
            )
            .unwrap();
            let s = dir_to_spherical(d);
            let back = spherical_to_dir(s);
            if FRAC_PI_2 - s.phi.abs() > 1e-7 {
                assert!((back.x - d.x).abs() < 1e-9);
                assert!((back.y - d.y).abs() < 1e-9);
                assert!((back.z - d.z).abs() < 1e-9);
            } else {
                assert!((dir_to_spherical(back).phi - s.phi).abs() < 1e-9);
            }
        }
    }

    fn unit() -> impl Strategy<Value = Direction3> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_filter_map("degenerate", |(x, y, z)| {
            if x * x + y * y + z * z < 1e-6 {
                None
            } else {
                Direction3::new(x, y, z)
            }
        })
    }

    proptest! {
        #[test]
        fn directions_are_unit(d in unit()) {
            prop_assert!((d.norm() - 1.0).abs() < 1e-9);
            let s = dir_to_spherical(d);
            prop_assert!(s.theta >= -PI && s.theta < PI);
        }

        #[test]
        fn great_circle_symmetric_and_triangle(a in unit(), b in unit(), c in unit()) {
            let ab = great_circle_angle(a, b);
            prop_assert!((ab - great_circle_angle(b, a)).abs() < 1e-12);
            prop_assert!((0.0..=PI).contains(&ab));
            let ac = great_circle_angle(a, c);
            let cb = great_circle_angle(c, b);
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn wrap_delta_is_periodic(x in -20.0f64..20.0, k in -3i32..=3) {
            let w = wrap_delta_theta(x);
            prop_assert!(w > -PI && w <= PI);
            let shifted = wrap_delta_theta(x + TAU * k as f64);
            // equal modulo 2π; only the ±π representative can flip
            let diff = (w - shifted).abs();
            prop_assert!(diff < 1e-9 || (diff - TAU).abs() < 1e-9);
            prop_assert!(((w - x) / TAU - ((w - x) / TAU).round()).abs() < 1e-9);
        }
    }
}
