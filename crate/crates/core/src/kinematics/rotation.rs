use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::KinematicsError;
use crate::model::{ModelError, Quaternion, RotationMatrix};

/// `|R[0][2]|` above this is treated as gimbal lock.
pub const GIMBAL_THRESHOLD: f64 = 1.0 - 1e-8;

/// Cardan X-Y-Z angles in degrees: `R = Rx(x)·Ry(y)·Rz(z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerXyz {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Set when `y` is at ±90°; `z` is then forced to 0.
    pub gimbal: bool,
}

impl EulerXyz {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, gimbal: false }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

pub fn euler_from_rotm(r: &RotationMatrix) -> EulerXyz {
    let m = r.matrix();
    let s = m[(0, 2)].clamp(-1.0, 1.0);
    let y = s.asin();
    if s.abs() > GIMBAL_THRESHOLD {
        let x = m[(2, 1)].atan2(m[(1, 1)]);
        return EulerXyz { x: x.to_degrees(), y: y.to_degrees(), z: 0.0, gimbal: true };
    }
    let x = (-m[(1, 2)]).atan2(m[(2, 2)]);
    let z = (-m[(0, 1)]).atan2(m[(0, 0)]);
    EulerXyz { x: x.to_degrees(), y: y.to_degrees(), z: z.to_degrees(), gimbal: false }
}

/// Validates `m` first; a non-rotation is rejected.
pub fn euler_from_matrix(m: Matrix3<f64>) -> Result<EulerXyz, KinematicsError> {
    Ok(euler_from_rotm(&RotationMatrix::try_new(m)?))
}

pub fn rotm_from_euler(e: &EulerXyz) -> RotationMatrix {
    RotationMatrix::rot_x(e.x.to_radians())
        .mul(&RotationMatrix::rot_y(e.y.to_radians()))
        .mul(&RotationMatrix::rot_z(e.z.to_radians()))
}

pub fn quat_normalize(q: &Quaternion) -> Result<Quaternion, KinematicsError> {
    Ok(q.normalized()?)
}

pub fn quat_multiply(a: &Quaternion, b: &Quaternion) -> Quaternion {
    a.multiply(b)
}

/// Shepperd's method: branch on the largest of the trace and diagonal.
/// Result has `w >= 0`.
pub fn quat_from_rotm(r: &RotationMatrix) -> Quaternion {
    let m = r.matrix();
    let (m00, m11, m22) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    let tr = m00 + m11 + m22;
    let q = if tr >= m00 && tr >= m11 && tr >= m22 {
        let s = 2.0 * (1.0 + tr).sqrt();
        Quaternion::new(0.25 * s, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s)
    } else if m00 >= m11 && m00 >= m22 {
        let s = 2.0 * (1.0 + m00 - m11 - m22).sqrt();
        Quaternion::new((m[(2, 1)] - m[(1, 2)]) / s, 0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s)
    } else if m11 >= m22 {
        let s = 2.0 * (1.0 + m11 - m00 - m22).sqrt();
        Quaternion::new((m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s)
    } else {
        let s = 2.0 * (1.0 + m22 - m00 - m11).sqrt();
        Quaternion::new((m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s)
    };
    q.canonical()
}

pub fn rotm_from_quat(q: &Quaternion) -> Result<RotationMatrix, KinematicsError> {
    let Quaternion { w, x, y, z } = q.normalized()?;
    let m = Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    );
    Ok(RotationMatrix::try_new(m)?)
}

/// Unit quaternion for `Rx(x)·Ry(y)·Rz(z)`, `w >= 0`.
pub fn quat_from_euler(e: &EulerXyz) -> Quaternion {
    let axis = |i: usize| {
        let mut v = crate::model::Vec3::zeros();
        v[i] = 1.0;
        v
    };
    let qx = Quaternion::from_axis_angle(&axis(0), e.x.to_radians());
    let qy = Quaternion::from_axis_angle(&axis(1), e.y.to_radians());
    let qz = Quaternion::from_axis_angle(&axis(2), e.z.to_radians());
    let q = qx.multiply(&qy).multiply(&qz);
    q.normalized().unwrap_or(Quaternion::IDENTITY).canonical()
}

/// `R_refᵀ·R_t`: orientation at `t` expressed in the reference frame.
pub fn relative_rotation(r_t: &RotationMatrix, r_ref: &RotationMatrix) -> RotationMatrix {
    r_ref.transpose().mul(r_t)
}

impl From<ModelError> for KinematicsError {
    fn from(e: ModelError) -> Self {
        KinematicsError::Model(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_rotation(rng: &mut impl Rng) -> RotationMatrix {
        // Uniform quaternion (Shoemake).
        let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let tau = std::f64::consts::TAU;
        let q = Quaternion::new(
            (1.0 - u1).sqrt() * (tau * u2).sin(),
            (1.0 - u1).sqrt() * (tau * u2).cos(),
            u1.sqrt() * (tau * u3).sin(),
            u1.sqrt() * (tau * u3).cos(),
        );
        rotm_from_quat(&q).unwrap()
    }

    #[test]
    fn euler_examples() {
        assert_eq!(euler_from_rotm(&RotationMatrix::identity()), EulerXyz::default());
        let e = euler_from_rotm(&RotationMatrix::rot_z(30f64.to_radians()));
        assert!(e.x.abs() < 1e-12 && e.y.abs() < 1e-12 && (e.z - 30.0).abs() < 1e-12);
        let g = euler_from_rotm(&RotationMatrix::rot_x(0.4).mul(&RotationMatrix::rot_y(std::f64::consts::FRAC_PI_2)));
        assert!(g.gimbal && g.z == 0.0 && (g.y - 90.0).abs() < 1e-6);
        assert!((g.x - 0.4f64.to_degrees()).abs() < 1e-9);
        // Remaining rotation is absorbed in x, reconstruction holds.
        let r = RotationMatrix::rot_x(0.2).mul(&RotationMatrix::rot_y(-std::f64::consts::FRAC_PI_2)).mul(&RotationMatrix::rot_z(0.3));
        let g = euler_from_rotm(&r);
        assert!(g.gimbal && rotm_from_euler(&g).max_abs_diff(&r) < 1e-7);
        assert!(matches!(euler_from_matrix(Matrix3::identity() * 2.0), Err(KinematicsError::Model(_))));
    }

    #[test]
    fn quaternion_examples() {
        assert_eq!(quat_from_rotm(&RotationMatrix::identity()), Quaternion::IDENTITY);
        let q = Quaternion::new(0.3, -0.5, 0.1, 0.8).normalized().unwrap();
        let neg = Quaternion::new(-q.w, -q.x, -q.y, -q.z);
        assert!(rotm_from_quat(&q).unwrap().max_abs_diff(&rotm_from_quat(&neg).unwrap()) < 1e-15);
        assert!(quat_from_rotm(&rotm_from_quat(&neg).unwrap()).w >= 0.0);
        assert!(matches!(quat_normalize(&Quaternion::new(0.0, 0.0, 0.0, 0.0)), Err(KinematicsError::Model(ModelError::ZeroQuaternion))));
    }

    #[test]
    fn random_quaternion_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let r = random_rotation(&mut rng);
            let back = rotm_from_quat(&quat_from_rotm(&r)).unwrap();
            assert!(back.max_abs_diff(&r) < 1e-12);
        }
    }

    #[test]
    fn relative_examples() {
        let r = RotationMatrix::rot_x(0.3).mul(&RotationMatrix::rot_z(-1.1));
        assert!(relative_rotation(&r, &r).max_abs_diff(&RotationMatrix::identity()) < 1e-15);
        assert_eq!(relative_rotation(&r, &RotationMatrix::identity()), r);
        let r_ref = RotationMatrix::rot_y(0.7);
        assert!(r_ref.mul(&relative_rotation(&r, &r_ref)).max_abs_diff(&r) < 1e-12);
    }

    proptest! {
        #[test]
        fn euler_round_trip(x in -180.0f64..180.0, y in -89.0f64..89.0, z in -180.0f64..180.0) {
            let e = euler_from_rotm(&rotm_from_euler(&EulerXyz::new(x, y, z)));
            prop_assert!(!e.gimbal);
            let d = |a: f64, b: f64| ((a - b + 540.0).rem_euclid(360.0) - 180.0).abs();
            prop_assert!(d(e.x, x) < 1e-9 && (e.y - y).abs() < 1e-9 && d(e.z, z) < 1e-9, "{e:?}");
        }

        #[test]
        fn quat_from_euler_matches_matrix(x in -180.0f64..180.0, y in -90.0f64..90.0, z in -180.0f64..180.0) {
            let e = EulerXyz::new(x, y, z);
            let q = quat_from_euler(&e);
            prop_assert!((q.norm() - 1.0).abs() < 1e-12 && q.w >= 0.0);
            prop_assert!(rotm_from_quat(&q).unwrap().max_abs_diff(&rotm_from_euler(&e)) < 1e-12);
        }
    }
}
