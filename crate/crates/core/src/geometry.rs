//! Gaze geometry: directions, rays, angular error and focus-object hit testing.
//!
//! Axis convention: right-handed, subject at the origin, `+y` up, `+z` straight
//! ahead. Yaw rotates about the vertical axis; yaw 0 looks along `+z` and
//! positive yaw turns toward the subject's right (`+x`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("invalid sphere radius {0} (must be > 0)")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
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

    pub fn scale(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    /// Point on the horizontal plane at `yaw_deg`, `radius` meters from the origin.
    pub fn on_arc(yaw_deg: f64, radius: f64) -> Vec3 {
        direction_from_yaw(yaw_deg).as_vec().scale(radius)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Unit-length direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3", into = "Vec3")]
pub struct Direction3(Vec3);

impl Direction3 {
    pub const FORWARD: Direction3 = Direction3(Vec3 { x: 0.0, y: 0.0, z: 1.0 });

    /// Normalizes `v`; fails for vectors too short to carry a direction.
    pub fn normalize(v: Vec3) -> Result<Self, GeometryError> {
        let n = v.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::Degenerate("zero-length direction"));
        }
        Ok(Direction3(v.scale(1.0 / n)))
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn x(self) -> f64 {
        self.0.x
    }

    pub fn y(self) -> f64 {
        self.0.y
    }

    pub fn z(self) -> f64 {
        self.0.z
    }
}

impl TryFrom<Vec3> for Direction3 {
    type Error = GeometryError;

    /// Accepts only vectors already unit-length within tolerance, so that
    /// deserialized rays are exactly what was written.
    fn try_from(v: Vec3) -> Result<Self, Self::Error> {
        if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::Degenerate("direction is not unit length"));
        }
        Ok(Direction3(v))
    }
}

impl From<Direction3> for Vec3 {
    fn from(d: Direction3) -> Vec3 {
        d.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeRay {
    pub origin: Vec3,
    pub dir: Direction3,
}

impl GazeRay {
    pub fn new(origin: Vec3, dir: Direction3) -> Self {
        Self { origin, dir }
    }

    /// Ray from `origin` looking straight at `point`.
    pub fn toward(origin: Vec3, point: Vec3) -> Result<Self, GeometryError> {
        Ok(Self { origin, dir: Direction3::normalize(point - origin)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSphere {
    pub center: Vec3,
    pub radius: f64,
}

impl TargetSphere {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(GeometryError::InvalidRadius(radius));
        }
        Ok(Self { center, radius })
    }

    /// Sphere centred on the horizontal arc at `yaw_deg`.
    pub fn on_arc(yaw_deg: f64, distance: f64, radius: f64) -> Result<Self, GeometryError> {
        Self::new(Vec3::on_arc(yaw_deg, distance), radius)
    }
}

/// One eye-tracker measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    /// Seconds since session start.
    pub t: f64,
    pub left: GazeRay,
    pub right: GazeRay,
    /// Millimeters.
    pub pupil_diameter_left: f64,
    pub pupil_diameter_right: f64,
    /// Fraction in `[0, 1]`.
    pub eye_openness_left: f64,
    pub eye_openness_right: f64,
    /// Degrees, positive to the subject's right.
    pub head_yaw: f64,
}

fn angle_between(a: Vec3, b: Vec3) -> f64 {
    // atan2 keeps precision near 0 and 180 where acos does not.
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Angle in degrees between the ray direction and the line from the ray
/// origin to the target centre.
pub fn angular_error(ray: &GazeRay, target: &TargetSphere) -> Result<f64, GeometryError> {
    let to_center = target.center - ray.origin;
    if to_center.norm() < 1e-12 {
        return Err(GeometryError::Degenerate("gaze origin coincides with target centre"));
    }
    Ok(angle_between(ray.dir.as_vec(), to_center))
}

/// Ray–sphere intersection (forward half-line only). The boundary counts as a
/// hit, and a ray starting inside the sphere always hits.
pub fn hit_test(ray: &GazeRay, target: &TargetSphere) -> Result<bool, GeometryError> {
    let oc = target.center - ray.origin;
    let dist_sq = oc.dot(oc);
    if dist_sq < 1e-24 {
        return Err(GeometryError::Degenerate("gaze origin coincides with target centre"));
    }
    let r_sq = target.radius * target.radius;
    if dist_sq <= r_sq {
        return Ok(true);
    }
    let along = ray.dir.as_vec().dot(oc);
    if along < 0.0 {
        return Ok(false);
    }
    // Squared distance from the centre to the closest point on the ray.
    let perp_sq = (dist_sq - along * along).max(0.0);
    Ok(perp_sq <= r_sq)
}

/// Half-angle of the cone subtended by the sphere as seen from `origin`, in
/// degrees. 180 when the origin is inside the sphere.
pub fn acceptance_half_angle(origin: Vec3, target: &TargetSphere) -> f64 {
    let d = (target.center - origin).norm();
    if d <= target.radius {
        180.0
    } else {
        (target.radius / d).asin().to_degrees()
    }
}

pub fn yaw_of(d: Direction3) -> Result<f64, GeometryError> {
    if d.x().hypot(d.z()) < 1e-12 {
        return Err(GeometryError::Degenerate("vertical direction has no yaw"));
    }
    Ok(d.x().atan2(d.z()).to_degrees())
}

pub fn direction_from_yaw(yaw_deg: f64) -> Direction3 {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    Direction3(Vec3::new(s, 0.0, c))
}

/// Combined binocular ray: midpoint of the eye origins, normalized mean of the
/// eye directions.
pub fn cyclopean(s: &GazeSample) -> Result<GazeRay, GeometryError> {
    let origin = (s.left.origin + s.right.origin).scale(0.5);
    let mean = (s.left.dir.as_vec() + s.right.dir.as_vec()).scale(0.5);
    if mean.norm() < 1e-6 {
        return Err(GeometryError::Degenerate("eye directions are opposed"));
    }
    Ok(GazeRay { origin, dir: Direction3::normalize(mean)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray_at_yaw(yaw: f64) -> GazeRay {
        GazeRay::new(Vec3::ZERO, direction_from_yaw(yaw))
    }

    fn sample(left_yaw: f64, right_yaw: f64) -> GazeSample {
        GazeSample {
            t: 0.0,
            left: ray_at_yaw(left_yaw),
            right: ray_at_yaw(right_yaw),
            pupil_diameter_left: 3.0,
            pupil_diameter_right: 3.0,
            eye_openness_left: 1.0,
            eye_openness_right: 1.0,
            head_yaw: 0.0,
        }
    }

    #[test]
    fn aligned_gaze_has_zero_error() {
        let t = TargetSphere::new(Vec3::new(0.0, 0.0, 2.0), 0.1).unwrap();
        assert_eq!(angular_error(&ray_at_yaw(0.0), &t).unwrap(), 0.0);
    }

    #[test]
    fn planar_yaw_offset_is_the_error() {
        let t = TargetSphere::new(Vec3::new(0.0, 0.0, 2.0), 0.1).unwrap();
        let e = angular_error(&ray_at_yaw(10.0), &t).unwrap();
        assert!((e - 10.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn antiparallel_gaze_is_180() {
        let t = TargetSphere::new(Vec3::new(0.0, 0.0, 2.0), 0.1).unwrap();
        let e = angular_error(&ray_at_yaw(180.0), &t).unwrap();
        assert!((e - 180.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn coincident_origin_is_degenerate() {
        let t = TargetSphere::new(Vec3::ZERO, 0.1).unwrap();
        assert!(angular_error(&ray_at_yaw(0.0), &t).is_err());
        assert!(hit_test(&ray_at_yaw(0.0), &t).is_err());
    }

    #[test]
    fn hit_cone_at_two_meters() {
        // asin(0.1 / 2) = 2.8659...°
        let t = TargetSphere::on_arc(0.0, 2.0, 0.1).unwrap();
        assert!((acceptance_half_angle(Vec3::ZERO, &t) - 2.865_983_983_5).abs() < 1e-9);
        assert!(hit_test(&ray_at_yaw(2.0), &t).unwrap());
        assert!(!hit_test(&ray_at_yaw(3.5), &t).unwrap());
        assert!(hit_test(&ray_at_yaw(0.0), &t).unwrap());
        assert!(!hit_test(&ray_at_yaw(180.0), &t).unwrap());
    }

    #[test]
    fn origin_inside_sphere_always_hits() {
        let t = TargetSphere::new(Vec3::new(0.0, 0.0, 0.05), 0.1).unwrap();
        assert!(hit_test(&ray_at_yaw(170.0), &t).unwrap());
    }

    #[test]
    fn yaw_conventions() {
        let d = direction_from_yaw(0.0);
        assert_eq!((d.x(), d.y(), d.z()), (0.0, 0.0, 1.0));
        let d = direction_from_yaw(90.0);
        assert!((d.x() - 1.0).abs() < 1e-15 && d.z().abs() < 1e-15);
        assert!((yaw_of(direction_from_yaw(15.0)).unwrap() - 15.0).abs() < 1e-12);
        let up = Direction3::normalize(Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!(yaw_of(up).is_err());
    }

    #[test]
    fn cyclopean_combines_eyes() {
        let s = sample(7.0, 7.0);
        let c = cyclopean(&s).unwrap();
        assert!((yaw_of(c.dir).unwrap() - 7.0).abs() < 1e-12);

        let c = cyclopean(&sample(1.0, -1.0)).unwrap();
        assert!(yaw_of(c.dir).unwrap().abs() < 1e-12);

        // Mean of unit vectors at 10° and 12° bisects them: yaw 11° exactly.
        let c = cyclopean(&sample(10.0, 12.0)).unwrap();
        assert!((yaw_of(c.dir).unwrap() - 11.0).abs() < 1e-12);

        assert!(cyclopean(&sample(0.0, 180.0)).is_err());
    }

    #[test]
    fn non_unit_direction_rejected_on_deserialize() {
        let r: Result<Direction3, _> = serde_json::from_str(r#"{"x":0.0,"y":0.0,"z":2.0}"#);
        assert!(r.is_err());
    }
}
