//! Minimal 3-vector and unit-quaternion algebra for gaze and head pose.

use serde::{Deserialize, Serialize};

/// Deviation from unit norm above which parsed vectors are renormalized.
///
/// Keeps renormalization idempotent: an already-normalized vector is stored
/// bit-for-bit as read.
pub const RENORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Vec3 {
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Unit vector in the same direction, or `None` for a zero/non-finite input.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        if (n - 1.0).abs() <= RENORM_TOL {
            return Some(self);
        }
        Some(self.scale(1.0 / n))
    }

    /// Angle in radians, stable for both tiny and near-antipodal separations.
    pub fn angle_to(self, o: Vec3) -> f64 {
        self.cross(o).norm().atan2(self.dot(o))
    }

    pub fn angle_deg(self, o: Vec3) -> f64 {
        self.angle_to(o).to_degrees()
    }

    /// Spherical linear interpolation between two unit vectors.
    pub fn slerp(self, o: Vec3, u: f64) -> Vec3 {
        let omega = self.angle_to(o);
        if omega < 1e-12 {
            return self.scale(1.0 - u).add(o.scale(u)).normalized().unwrap_or(self);
        }
        let s = omega.sin();
        let a = ((1.0 - u) * omega).sin() / s;
        let b = (u * omega).sin() / s;
        let v = self.scale(a).add(o.scale(b));
        v.normalized().unwrap_or(v)
    }

    /// Unit vector at `yaw_deg` about +Y and `pitch_deg` elevation, looking down +Z at (0, 0).
    pub fn from_yaw_pitch(yaw_deg: f64, pitch_deg: f64) -> Vec3 {
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        Vec3::new(cp * sy, sp, cp * cy)
    }
}

/// Rotation quaternion, stored (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quat {
    fn from(q: [f64; 4]) -> Self {
        Quat::new(q[0], q[1], q[2], q[3])
    }
}

impl From<Quat> for [f64; 4] {
    fn from(q: Quat) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }
    }

    pub fn from_axis_angle(axis: Vec3, angle_rad: f64) -> Quat {
        let a = axis.normalized().unwrap_or(Vec3::Y);
        let (s, c) = (angle_rad * 0.5).sin_cos();
        Quat::new(c, a.x * s, a.y * s, a.z * s)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn normalized(self) -> Option<Quat> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        if (n - 1.0).abs() <= RENORM_TOL {
            return Some(self);
        }
        let s = 1.0 / n;
        Some(Quat::new(self.w * s, self.x * s, self.y * s, self.z * s))
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn conjugate(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let p = Quat::new(0.0, v.x, v.y, v.z);
        let r = self.mul(p).mul(self.conjugate());
        Vec3::new(r.x, r.y, r.z)
    }

    /// Rotation angle in radians between two orientations: `2·acos(|⟨q1,q2⟩|)`,
    /// evaluated through `atan2` for accuracy at small angles.
    pub fn angle_to(self, o: Quat) -> f64 {
        let rel = self.conjugate().mul(o);
        let v = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
        2.0 * v.atan2(rel.w.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slerp_midpoint_is_equidistant() {
        let a = Vec3::from_yaw_pitch(0.0, 0.0);
        let b = Vec3::from_yaw_pitch(10.0, 0.0);
        let m = a.slerp(b, 0.5);
        assert!((m.angle_deg(a) - 5.0).abs() < 1e-9);
        assert!((m.angle_deg(b) - 5.0).abs() < 1e-9);
        assert!((m.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quat_angle_matches_acos_form() {
        let q1 = Quat::from_axis_angle(Vec3::Y, 0.3);
        let q2 = Quat::from_axis_angle(Vec3::new(0.2, 1.0, 0.1), 0.9);
        let via_acos = 2.0 * q1.dot(q2).abs().min(1.0).acos();
        assert!((q1.angle_to(q2) - via_acos).abs() < 1e-12);
    }

    #[test]
    fn normalized_is_idempotent() {
        let v = Vec3::new(0.3, 0.4, 0.86).normalized().unwrap();
        assert_eq!(v.normalized().unwrap(), v);
    }
}
