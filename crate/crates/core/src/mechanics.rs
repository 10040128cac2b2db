//! Rigid transforms, wrenches, the contact-to-end-effector wrench adjoint and
//! polyhedral friction cones.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix6, Point3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanicsError {
    #[error("rotation is not orthonormal with det +1 (error {0:.3e})")]
    InvalidTransform(f64),
    #[error("wrench is expressed in {found} but the map expects {expected}")]
    FrameMismatch { expected: Frame, found: Frame },
    #[error("cone normal has zero length")]
    DegenerateNormal,
    #[error("invalid friction cone: {0}")]
    InvalidCone(String),
    #[error("unknown frame {0:?}")]
    UnknownFrame(String),
}

const ORTHO_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, MechanicsError> {
        let t = Self { rotation, translation };
        t.check()?;
        Ok(t)
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *rotation.matrix(), translation }
    }

    /// Rotation by `angle` about +y followed by a translation in the x–z plane.
    pub fn planar_xz(x: f64, z: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            rotation: Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            translation: Vector3::new(x, 0.0, z),
        }
    }

    pub fn check(&self) -> Result<(), MechanicsError> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        let det = (r.determinant() - 1.0).abs();
        let err = ortho.max(det);
        if !err.is_finite() || err > ORTHO_TOL || !self.translation.iter().all(|x| x.is_finite()) {
            return Err(MechanicsError::InvalidTransform(err));
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self { rotation: rt, translation: -(rt * self.translation) }
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Geodesic angle between two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    World,
    EndEffector,
    Contact,
    Object,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::World => "world",
            Frame::EndEffector => "ee",
            Frame::Contact => "contact",
            Frame::Object => "object",
        })
    }
}

impl FromStr for Frame {
    type Err = MechanicsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "world" | "base" => Ok(Frame::World),
            "ee" | "end_effector" | "end-effector" => Ok(Frame::EndEffector),
            "contact" => Ok(Frame::Contact),
            "object" => Ok(Frame::Object),
            other => Err(MechanicsError::UnknownFrame(other.to_string())),
        }
    }
}

/// Force (N) and moment (N·m) acting at the origin of `frame`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub moment: Vector3<f64>,
    pub frame: Frame,
}

impl Wrench {
    pub fn new(force: Vector3<f64>, moment: Vector3<f64>, frame: Frame) -> Self {
        Self { force, moment, frame }
    }

    pub fn zero(frame: Frame) -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), frame)
    }

    pub fn from_vector(v: &Vector6<f64>, frame: Frame) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into(), frame)
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.force);
        v.fixed_rows_mut::<3>(3).copy_from(&self.moment);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.moment.iter()).all(|x| x.is_finite())
    }
}

/// Skew-symmetric matrix with `hat(v) * w == v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// 6×6 map taking a wrench in a contact frame to the equivalent wrench at the
/// end effector, in `[force; moment]` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactAdjoint {
    pub matrix: Matrix6<f64>,
    pub source: Frame,
    pub target: Frame,
}

impl ContactAdjoint {
    /// Block form `[[Rᵀ, 0], [−Rᵀ p̂, Rᵀ]]` where `(R, p)` is the end-effector
    /// frame expressed in the contact frame (`x_c = R x_e + p`).
    pub fn new(ee_in_contact: &RigidTransform) -> Result<Self, MechanicsError> {
        ee_in_contact.check()?;
        let rt = ee_in_contact.rotation.transpose();
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-rt * hat(&ee_in_contact.translation)));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&rt);
        Ok(Self { matrix: m, source: Frame::Contact, target: Frame::EndEffector })
    }

    /// Same map from the contact frame's pose in the end-effector frame.
    pub fn from_contact_frame(contact_in_ee: &RigidTransform) -> Result<Self, MechanicsError> {
        contact_in_ee.check()?;
        Self::new(&contact_in_ee.inverse())
    }

    pub fn apply(&self, w: &Wrench) -> Result<Wrench, MechanicsError> {
        if w.frame != self.source {
            return Err(MechanicsError::FrameMismatch { expected: self.source, found: w.frame });
        }
        Ok(Wrench::from_vector(&(self.matrix * w.to_vector()), self.target))
    }
}

/// Re-express a wrench in another frame. `target_from_source` maps source
/// coordinates into target coordinates.
pub fn transform_wrench(adj: &ContactAdjoint, w: &Wrench) -> Result<Wrench, MechanicsError> {
    adj.apply(w)
}

/// Polyhedral friction cone: unit edge directions along which a contact can
/// push into the surface.
#[derive(Clone, Debug, PartialEq)]
pub struct FrictionCone {
    pub apex: Point3<f64>,
    /// Unit inward direction, the cone axis.
    pub normal: Vector3<f64>,
    pub mu: f64,
    pub edges: Vec<Vector3<f64>>,
}

impl FrictionCone {
    /// Cone about `-outward_normal` with half-angle `atan(mu)` and `n_f`
    /// azimuthally uniform unit edges. Azimuth zero lies along
    /// [`tangent_basis`]'s first vector.
    pub fn new(apex: Point3<f64>, outward_normal: &Vector3<f64>, mu: f64, n_f: usize) -> Result<Self, MechanicsError> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(MechanicsError::InvalidCone(format!("friction coefficient {mu}")));
        }
        if n_f < 3 {
            return Err(MechanicsError::InvalidCone(format!("need at least 3 edges, got {n_f}")));
        }
        let len = outward_normal.norm();
        if !(len > 1e-12) || !len.is_finite() {
            return Err(MechanicsError::DegenerateNormal);
        }
        let inward = -outward_normal / len;
        let (t1, t2) = tangent_basis(&inward);
        let cos_half = 1.0 / (1.0 + mu * mu).sqrt();
        let sin_half = mu * cos_half;
        let edges = (0..n_f)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n_f as f64;
                (inward * cos_half + (t1 * a.cos() + t2 * a.sin()) * sin_half).normalize()
            })
            .collect();
        Ok(Self { apex, normal: inward, mu, edges })
    }

    /// Half-angle of the cone, `atan(mu)`.
    pub fn half_angle(&self) -> f64 {
        self.mu.atan()
    }
}

pub fn build_friction_cone(
    r_c: Point3<f64>,
    outward_normal: &Vector3<f64>,
    mu: f64,
    n_f: usize,
) -> Result<FrictionCone, MechanicsError> {
    FrictionCone::new(r_c, outward_normal, mu, n_f)
}

/// Deterministic orthonormal tangents for a unit normal: the first is
/// `normalize(n × e)` with `e` the coordinate axis least aligned with `n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = n.abs();
    let axis = if a.x <= a.y && a.x <= a.z {
        Vector3::x()
    } else if a.y <= a.z {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let t1 = n.cross(&axis).normalize();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Rotation whose columns are `(t1, t2, n)`: maps a frame with +z along `n`
/// into the frame `n` is expressed in.
pub fn frame_with_z(n: &Vector3<f64>) -> Matrix3<f64> {
    let (t1, t2) = tangent_basis(n);
    Matrix3::from_columns(&[t1, t2, *n])
}
