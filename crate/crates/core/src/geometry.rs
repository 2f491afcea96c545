//! Inversive geometry in the Euclidean chart of the 3-sphere.
//!
//! Everything here works with plain `f64` coordinates. Points at infinity and
//! planes (spheres through the mirror center) are rejected rather than
//! represented, so every predicate carries an explicit relative tolerance.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance used for single-step algebraic identities.
pub const ALGEBRAIC_TOL: f64 = 1e-9;
/// Relative tolerance used for checks that accumulate over several inversions.
pub const STAGE_TOL: f64 = 1e-6;
/// Distances below this fraction of the mirror radius count as hitting the center.
pub const SINGULARITY_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("point lies at the center of the mirror sphere")]
    CenterSingularity,
    #[error("sphere passes through the mirror center; its image is a plane")]
    PlaneImage,
    #[error("spheres are not externally tangent")]
    NotTangent,
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("sphere radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    /// Linear interpolation, `t = 0` gives `self`.
    pub fn lerp(self, other: Point3, t: f64) -> Point3 {
        self + (other - self) * t
    }
}

impl TryFrom<[f64; 3]> for Point3 {
    type Error = GeometryError;

    fn try_from(v: [f64; 3]) -> Result<Self, Self::Error> {
        let p = Point3::new(v[0], v[1], v[2]);
        if p.is_finite() {
            Ok(p)
        } else {
            Err(GeometryError::NonFinite)
        }
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

/// A round 2-sphere, doubling as the closed ball it bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSphere")]
pub struct RoundSphere {
    pub center: Point3,
    pub radius: f64,
}

#[derive(Deserialize)]
struct RawSphere {
    center: Point3,
    radius: f64,
}

impl TryFrom<RawSphere> for RoundSphere {
    type Error = GeometryError;

    fn try_from(raw: RawSphere) -> Result<Self, Self::Error> {
        RoundSphere::new(raw.center, raw.radius)
    }
}

impl RoundSphere {
    pub fn new(center: Point3, radius: f64) -> Result<Self, GeometryError> {
        if !center.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(RoundSphere { center, radius })
    }

    pub fn unit() -> Self {
        RoundSphere {
            center: Point3::ORIGIN,
            radius: 1.0,
        }
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Closed-ball membership with relative slack `tol`.
    pub fn ball_contains_point(&self, p: Point3, tol: f64) -> bool {
        self.center.distance(p) <= self.radius * (1.0 + tol)
    }

    /// Signed distance from `p` to the sphere, relative to the radius.
    pub fn relative_offset(&self, p: Point3) -> f64 {
        (self.center.distance(p) - self.radius) / self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SphereRelation {
    ExteriorDisjoint,
    ExternallyTangent,
    Overlapping,
    Nested,
    InternallyTangent,
    Equal,
}

/// Reflection of `x` through the sphere `mirror`.
pub fn invert_point(mirror: &RoundSphere, x: Point3) -> Result<Point3, GeometryError> {
    let v = x - mirror.center;
    let d2 = v.norm_squared();
    if d2.sqrt() < SINGULARITY_THRESHOLD * mirror.radius {
        return Err(GeometryError::CenterSingularity);
    }
    Ok(mirror.center + v * (mirror.radius * mirror.radius / d2))
}

/// Image of the sphere `s` under reflection through `mirror`.
pub fn invert_sphere(mirror: &RoundSphere, s: &RoundSphere) -> Result<RoundSphere, GeometryError> {
    let v = s.center - mirror.center;
    let power = v.norm_squared() - s.radius * s.radius;
    // power is quadratic in lengths, so the threshold is squared too
    let scale = mirror.radius.max(s.radius);
    if power.abs() < SINGULARITY_THRESHOLD * scale * scale {
        return Err(GeometryError::PlaneImage);
    }
    let k = mirror.radius * mirror.radius / power;
    RoundSphere::new(mirror.center + v * k, k.abs() * s.radius)
}

pub fn classify(s1: &RoundSphere, s2: &RoundSphere, tol: f64) -> SphereRelation {
    let d = s1.center.distance(s2.center);
    let sum = s1.radius + s2.radius;
    let diff = (s1.radius - s2.radius).abs();
    let slack = tol * sum;

    if d <= slack && diff <= slack {
        SphereRelation::Equal
    } else if (d - sum).abs() <= slack {
        SphereRelation::ExternallyTangent
    } else if d > sum * (1.0 + tol) {
        SphereRelation::ExteriorDisjoint
    } else if (d - diff).abs() <= slack {
        SphereRelation::InternallyTangent
    } else if d < diff {
        SphereRelation::Nested
    } else {
        SphereRelation::Overlapping
    }
}

/// Contact point of two externally tangent spheres.
pub fn tangency_point(s1: &RoundSphere, s2: &RoundSphere) -> Result<Point3, GeometryError> {
    tangency_point_tol(s1, s2, ALGEBRAIC_TOL)
}

pub fn tangency_point_tol(
    s1: &RoundSphere,
    s2: &RoundSphere,
    tol: f64,
) -> Result<Point3, GeometryError> {
    if classify(s1, s2, tol) != SphereRelation::ExternallyTangent {
        return Err(GeometryError::NotTangent);
    }
    let v = s2.center - s1.center;
    // split the segment in the ratio of the radii so small tangency errors
    // land symmetrically between the two surfaces
    let t = s1.radius / (s1.radius + s2.radius);
    Ok(s1.center + v * t)
}

/// Whether the closed ball of `inner` lies in the closed ball of `outer`.
pub fn ball_contains(outer: &RoundSphere, inner: &RoundSphere, tol: f64) -> bool {
    outer.center.distance(inner.center) + inner.radius <= outer.radius * (1.0 + tol)
}
