//! Rotation and pose algebra, the pinhole camera, and the Plücker /
//! orthonormal line representations with their projection residuals.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::math::{self, skew};

/// Camera-frame depth below which a point is treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// A 3D rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3(UnitQuaternion<f64>);

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation3 {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// `Exp` of a rotation vector (angle-axis).
    pub fn exp(w: &Vector3<f64>) -> Self {
        Self(math::quat_exp(w))
    }

    /// Rotation vector with angle in `[0, π]`.
    pub fn log(&self) -> Vector3<f64> {
        math::quat_log(&self.0)
    }

    /// From a (nearly) orthonormal matrix; the input is projected onto SO(3).
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let r = math::orthonormalize(m);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
        Self(UnitQuaternion::from_rotation_matrix(&rot))
    }

    /// Hamilton quaternion `(w, x, y, z)`, normalized on construction.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(Error::InvalidInput("zero quaternion"));
        }
        Ok(Self(UnitQuaternion::new_normalize(q)))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<f64>) -> Self {
        Self(q)
    }

    pub fn rotation_z(angle: f64) -> Self {
        Self::exp(&Vector3::new(0.0, 0.0, angle))
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.0.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.inverse())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }
}

impl core::ops::Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl core::ops::Mul<Vector3<f64>> for Rotation3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Rigid transform mapping `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose3 {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl Pose3 {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation3::identity(), t)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let r_inv = self.rotation.inverse();
        Pose3 {
            rotation: r_inv,
            translation: -(r_inv * self.translation),
        }
    }

    /// Origin of the target frame expressed in the source frame; the camera
    /// center for a world→camera pose.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.inverse() * self.translation)
    }
}

impl core::ops::Mul for Pose3 {
    type Output = Pose3;
    fn mul(self, rhs: Pose3) -> Pose3 {
        self.compose(&rhs)
    }
}

/// Undistorted pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidInput("focal lengths must be positive"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidInput("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Unit focal length, principal point at the origin.
    pub fn normalized() -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
        }
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K_L`, mapping a camera-frame Plücker moment to pixel line coefficients.
    pub fn line_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fy,
            0.0,
            0.0,
            0.0,
            self.fx,
            0.0,
            -self.fy * self.cx,
            -self.fx * self.cy,
            self.fx * self.fy,
        )
    }

    /// Pixel of a camera-frame point.
    pub fn project(&self, p_c: &Vector3<f64>) -> Result<Vector2<f64>> {
        if p_c.z <= MIN_DEPTH {
            return Err(Error::NonPositiveDepth);
        }
        Ok(Vector2::new(
            self.fx * p_c.x / p_c.z + self.cx,
            self.fy * p_c.y / p_c.z + self.cy,
        ))
    }

    /// Pixel of a camera-frame point together with the 2×3 Jacobian.
    pub fn project_with_jacobian(&self, p_c: &Vector3<f64>) -> Result<(Vector2<f64>, nalgebra::Matrix2x3<f64>)> {
        let uv = self.project(p_c)?;
        let iz = 1.0 / p_c.z;
        let iz2 = iz * iz;
        let j = nalgebra::Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p_c.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p_c.y * iz2,
        );
        Ok((uv, j))
    }

    /// Normalized-plane bearing `(x, y, 1)` for a pixel.
    pub fn unproject(&self, uv: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((uv.x - self.cx) / self.fx, (uv.y - self.cy) / self.fy, 1.0)
    }
}

/// Projects a global point through a world→camera pose.
pub fn project_point(cam: &PinholeCamera, pose_cg: &Pose3, p_g: &Vector3<f64>) -> Result<Vector2<f64>> {
    cam.project(&pose_cg.transform_point(p_g))
}

/// Image line segment, endpoints in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment2D {
    ps: Vector2<f64>,
    pe: Vector2<f64>,
}

impl Segment2D {
    pub fn new(ps: Vector2<f64>, pe: Vector2<f64>) -> Result<Self> {
        let len = (pe - ps).norm();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidInput("segment must have positive length"));
        }
        Ok(Self { ps, pe })
    }

    pub fn from_coords(us: f64, vs: f64, ue: f64, ve: f64) -> Result<Self> {
        Self::new(Vector2::new(us, vs), Vector2::new(ue, ve))
    }

    pub fn start(&self) -> Vector2<f64> {
        self.ps
    }
    pub fn end(&self) -> Vector2<f64> {
        self.pe
    }

    pub fn length(&self) -> f64 {
        (self.pe - self.ps).norm()
    }

    pub fn midpoint(&self) -> Vector2<f64> {
        0.5 * (self.ps + self.pe)
    }

    /// Unit direction from start to end.
    pub fn direction(&self) -> Vector2<f64> {
        (self.pe - self.ps) / self.length()
    }

    /// Point at fraction `s` of the way from start to end.
    pub fn point_at(&self, s: f64) -> Vector2<f64> {
        self.ps + s * (self.pe - self.ps)
    }

    pub fn reversed(&self) -> Self {
        Self {
            ps: self.pe,
            pe: self.ps,
        }
    }
}

/// An infinite 3D line `{ x : x × v = n }` in Plücker coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerLine {
    n: Vector3<f64>,
    v: Vector3<f64>,
}

impl PluckerLine {
    /// Checks `|v| > 0` and the Plücker constraint `n·v = 0`.
    pub fn new(n: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        let vn = v.norm();
        if !(vn > 0.0 && vn.is_finite() && n.iter().all(|x| x.is_finite())) {
            return Err(Error::DegenerateLine);
        }
        if n.dot(&v).abs() > 1e-9 * (n.norm() * vn + 1.0) {
            return Err(Error::InvalidInput("plucker constraint n·v = 0 violated"));
        }
        Ok(Self { n, v })
    }

    /// Removes any component of `n` along `v` before constructing.
    pub fn new_orthogonalized(n: Vector3<f64>, v: Vector3<f64>) -> Result<Self> {
        let vn2 = v.norm_squared();
        if !(vn2 > 0.0 && vn2.is_finite()) {
            return Err(Error::DegenerateLine);
        }
        let n = n - v * (n.dot(&v) / vn2);
        Self::new(n, v)
    }

    /// Line through a point with the given direction.
    pub fn from_point_direction(p: &Vector3<f64>, v: &Vector3<f64>) -> Result<Self> {
        Self::new_orthogonalized(p.cross(v), *v)
    }

    /// Line through two points, direction `p2 - p1`, unit `|v|`.
    pub fn from_points(p1: &Vector3<f64>, p2: &Vector3<f64>) -> Result<Self> {
        let d = p2 - p1;
        let len = d.norm();
        if len <= 1e-12 {
            return Err(Error::CoincidentPoints);
        }
        let v = d / len;
        Self::new_orthogonalized(p1.cross(&v), v)
    }

    pub fn n(&self) -> &Vector3<f64> {
        &self.n
    }
    pub fn v(&self) -> &Vector3<f64> {
        &self.v
    }

    /// Representative with `|v| = 1`.
    pub fn normalized(&self) -> Self {
        let s = self.v.norm();
        Self {
            n: self.n / s,
            v: self.v / s,
        }
    }

    pub fn unit_direction(&self) -> Vector3<f64> {
        self.v / self.v.norm()
    }

    /// Point of the line closest to the origin.
    pub fn closest_point_to_origin(&self) -> Vector3<f64> {
        self.v.cross(&self.n) / self.v.norm_squared()
    }

    /// Orthogonal projection of `p` onto the line.
    pub fn project_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = self.unit_direction();
        let p0 = self.closest_point_to_origin();
        p0 + d * d.dot(&(p - p0))
    }

    /// Expresses the line in the target frame of `pose`.
    pub fn transform(&self, pose: &Pose3) -> Self {
        let rn = pose.rotation * self.n;
        let rv = pose.rotation * self.v;
        Self {
            n: rn + pose.translation.cross(&rv),
            v: rv,
        }
    }

    /// Perpendicular distance in meters.
    pub fn distance_to_point(&self, p: &Vector3<f64>) -> f64 {
        (p.cross(&self.v) - self.n).norm() / self.v.norm()
    }

    /// Scale-invariant test for the same line (either orientation).
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let a = self.normalized();
        let mut b = other.normalized();
        if a.v.dot(&b.v) < 0.0 {
            b.n = -b.n;
            b.v = -b.v;
        }
        (a.n - b.n).norm() <= tol && (a.v - b.v).norm() <= tol
    }
}

/// Applies a world→camera pose to a line.
pub fn plucker_transform(pose_cg: &Pose3, line_g: &PluckerLine) -> PluckerLine {
    line_g.transform(pose_cg)
}

/// Pixel image line `l = K_L n_C` of a camera-frame line. Scale-free.
pub fn project_line(cam: &PinholeCamera, line_c: &PluckerLine) -> Result<Vector3<f64>> {
    if line_c.n.norm() <= 1e-9 {
        return Err(Error::DegenerateProjection);
    }
    Ok(cam.line_matrix() * line_c.n)
}

/// Signed distances of both segment endpoints to the image line, in pixels.
pub fn line_endpoint_residual(l: &Vector3<f64>, seg: &Segment2D) -> Result<Vector2<f64>> {
    let norm2 = l.x * l.x + l.y * l.y;
    if norm2 <= 1e-12 {
        return Err(Error::DegenerateLine);
    }
    let s = math::sqrt(norm2);
    let ps = seg.start();
    let pe = seg.end();
    Ok(Vector2::new(
        (l.x * ps.x + l.y * ps.y + l.z) / s,
        (l.x * pe.x + l.y * pe.y + l.z) / s,
    ))
}

/// Euclidean distance of a 3D point to a line.
pub fn point_line_distance_3d(p: &Vector3<f64>, line: &PluckerLine) -> f64 {
    line.distance_to_point(p)
}

/// Minimal 4-DOF line: `U ∈ SO(3)` and the angle of `W ∈ SO(2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthonormalLine {
    pub u: Rotation3,
    pub phi: f64,
}

impl OrthonormalLine {
    pub fn from_plucker(line: &PluckerLine) -> Result<Self> {
        let nn = line.n.norm();
        let vn = line.v.norm();
        if nn <= 1e-12 || vn <= 1e-12 {
            return Err(Error::DegenerateLine);
        }
        let c = line.n.cross(&line.v);
        let cn = c.norm();
        if cn <= 1e-12 * nn * vn {
            return Err(Error::DegenerateLine);
        }
        let u = Matrix3::from_columns(&[line.n / nn, line.v / vn, c / cn]);
        Ok(Self {
            u: Rotation3::from_matrix(&u),
            phi: math::atan2(vn, nn),
        })
    }

    /// Unit-norm Plücker representative `(cos φ u1, sin φ u2)`.
    pub fn to_plucker(&self) -> PluckerLine {
        let u = self.u.matrix();
        let n = u.column(0) * math::cos(self.phi);
        let v = u.column(1) * math::sin(self.phi);
        PluckerLine { n, v }
    }

    /// `U ← U·Exp(δ[0..3])`, `φ ← φ + δ[3]`.
    pub fn retract(&self, delta: &Vector4<f64>) -> Self {
        let w = Vector3::new(delta[0], delta[1], delta[2]);
        Self {
            u: self.u * Rotation3::exp(&w),
            phi: self.phi + delta[3],
        }
    }

    /// Columns `(u1, u2, u3)` of `U` and `(w1, w2) = (cos φ, sin φ)`.
    pub fn frames(&self) -> (Matrix3<f64>, f64, f64) {
        (self.u.matrix(), math::cos(self.phi), math::sin(self.phi))
    }
}

pub fn orthonormal_from_plucker(line: &PluckerLine) -> Result<OrthonormalLine> {
    OrthonormalLine::from_plucker(line)
}

pub fn plucker_from_orthonormal(line: &OrthonormalLine) -> PluckerLine {
    line.to_plucker()
}

pub fn orthonormal_retract(line: &OrthonormalLine, delta: &Vector4<f64>) -> OrthonormalLine {
    line.retract(delta)
}

/// Plücker 6×6 line motion matrix for a pose: `[R, [t]×R; 0, R]`.
pub fn line_motion_blocks(pose: &Pose3) -> (Matrix3<f64>, Matrix3<f64>) {
    let r = pose.rotation.matrix();
    (r, skew(&pose.translation) * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use core::f64::consts::FRAC_PI_4;

    fn cam_unit() -> PinholeCamera {
        PinholeCamera::new(1.0, 1.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn project_point_examples() {
        let c = cam_unit();
        let id = Pose3::identity();
        assert_relative_eq!(
            project_point(&c, &id, &Vector3::new(0.0, 0.0, 5.0)).unwrap(),
            Vector2::new(0.0, 0.0)
        );
        assert_relative_eq!(
            project_point(&c, &id, &Vector3::new(1.0, 2.0, 2.0)).unwrap(),
            Vector2::new(0.5, 1.0)
        );
        // camera at (0,0,-1): world→camera translation is +1 in z
        let c2 = PinholeCamera::new(400.0, 400.0, 320.0, 240.0).unwrap();
        let pose = Pose3::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let p = Vector3::new(0.1, 0.0, 1.0);
        // hand-composed: p_c = (0.1, 0, 2), u = 400 * 0.05 + 320
        let expected = Vector2::new(400.0 * (0.1 / 2.0) + 320.0, 240.0);
        assert_relative_eq!(project_point(&c2, &pose, &p).unwrap(), expected);
        assert_relative_eq!(expected, Vector2::new(340.0, 240.0));
    }

    #[test]
    fn project_point_behind_camera() {
        let c = cam_unit();
        assert_eq!(
            project_point(&c, &Pose3::identity(), &Vector3::new(0.0, 0.0, 1e-7)),
            Err(Error::NonPositiveDepth)
        );
        assert_eq!(
            project_point(&c, &Pose3::identity(), &Vector3::new(0.0, 0.0, -3.0)),
            Err(Error::NonPositiveDepth)
        );
    }

    #[test]
    fn transform_through_offset_pose() {
        let pose = Pose3::from_translation(Vector3::new(0.0, 1.0, 0.0));
        let l = PluckerLine::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let lc = plucker_transform(&pose, &l);
        assert_relative_eq!(*lc.n(), Vector3::new(0.0, 0.0, -1.0));
        assert_relative_eq!(*lc.v(), Vector3::new(1.0, 0.0, 0.0));
        // two transformed points rebuild the same line
        let a = pose.transform_point(&Vector3::new(0.0, 0.0, 0.0));
        let b = pose.transform_point(&Vector3::new(2.0, 0.0, 0.0));
        let rebuilt = PluckerLine::from_points(&a, &b).unwrap();
        assert!(rebuilt.approx_eq(&lc, 1e-12));
    }

    #[test]
    fn transform_identity_and_pure_rotation() {
        let l = PluckerLine::from_points(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(-1.0, 0.5, 4.0)).unwrap();
        assert_eq!(plucker_transform(&Pose3::identity(), &l), l);
        let r = Rotation3::exp(&Vector3::new(0.3, -0.2, 0.9));
        let lr = plucker_transform(&Pose3::new(r, Vector3::zeros()), &l);
        assert_relative_eq!(*lr.n(), r * *l.n(), epsilon = 1e-14);
        assert_relative_eq!(*lr.v(), r * *l.v(), epsilon = 1e-14);
    }

    #[test]
    fn project_line_examples() {
        let c = cam_unit();
        let l = PluckerLine::new(Vector3::new(0.0, 1.0, 0.0), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(project_line(&c, &l).unwrap(), Vector3::new(0.0, 1.0, 0.0));
        let l = PluckerLine::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(project_line(&c, &l).unwrap(), Vector3::new(1.0, 0.0, 0.0));
        let c2 = PinholeCamera::new(2.0, 2.0, 0.0, 0.0).unwrap();
        let l = PluckerLine::new(Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(project_line(&c2, &l).unwrap(), Vector3::new(0.0, 0.0, 4.0));
        let through_center = PluckerLine::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(project_line(&c, &through_center), Err(Error::DegenerateProjection));
    }

    #[test]
    fn projected_line_contains_projected_points() {
        // l^T ũ = 0 for pixels of sampled line points, under a non-trivial K
        let c = PinholeCamera::new(410.0, 395.0, 322.0, 241.0).unwrap();
        let p1 = Vector3::new(-1.0, 0.4, 6.0);
        let p2 = Vector3::new(2.0, -0.3, 8.0);
        let l_c = PluckerLine::from_points(&p1, &p2).unwrap();
        let l = project_line(&c, &l_c).unwrap();
        for s in [0.0, 0.3, 1.0, 1.7] {
            let uv = c.project(&(p1 + s * (p2 - p1))).unwrap();
            let r = l.dot(&Vector3::new(uv.x, uv.y, 1.0)) / math::sqrt(l.x * l.x + l.y * l.y);
            assert!(r.abs() < 1e-9, "residual {r}");
        }
    }

    #[test]
    fn endpoint_residual_examples() {
        let l = Vector3::new(0.0, 1.0, -5.0);
        let s = Segment2D::from_coords(3.0, 5.0, 9.0, 5.0).unwrap();
        assert_relative_eq!(line_endpoint_residual(&l, &s).unwrap(), Vector2::new(0.0, 0.0));
        let s = Segment2D::from_coords(3.0, 5.0, 3.0, 7.0).unwrap();
        assert_relative_eq!(line_endpoint_residual(&l, &s).unwrap(), Vector2::new(0.0, 2.0));
        // (3*0 + 4*0 - 25)/5 = -5, (30 - 25)/5 = 1
        let l = Vector3::new(3.0, 4.0, -25.0);
        let s = Segment2D::from_coords(0.0, 0.0, 10.0, 0.0).unwrap();
        assert_relative_eq!(line_endpoint_residual(&l, &s).unwrap(), Vector2::new(-5.0, 1.0));
        assert_eq!(
            line_endpoint_residual(&Vector3::new(0.0, 0.0, 1.0), &s),
            Err(Error::DegenerateLine)
        );
    }

    #[test]
    fn orthonormal_examples() {
        let l = PluckerLine::new(Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        let o = orthonormal_from_plucker(&l).unwrap();
        let u = o.u.matrix();
        assert_relative_eq!(u.column(0).into_owned(), Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-12);
        assert_relative_eq!(u.column(1).into_owned(), Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(u.column(2).into_owned(), Vector3::new(-1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(o.phi, libm::atan2(1.0, 2.0));

        let l = PluckerLine::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)).unwrap();
        let o = orthonormal_from_plucker(&l).unwrap();
        assert_relative_eq!(o.u.matrix(), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(o.phi, FRAC_PI_4);
        let back = plucker_from_orthonormal(&o);
        assert!(back.approx_eq(&l, 1e-12));
    }

    #[test]
    fn orthonormal_rejects_line_through_origin() {
        let l = PluckerLine::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(orthonormal_from_plucker(&l), Err(Error::DegenerateLine));
    }

    #[test]
    fn retract_examples() {
        let l = PluckerLine::from_points(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(0.0, 1.0, 5.0)).unwrap();
        let o = orthonormal_from_plucker(&l).unwrap();
        assert_eq!(orthonormal_retract(&o, &Vector4::zeros()).u, o.u);
        assert_eq!(orthonormal_retract(&o, &Vector4::zeros()).phi, o.phi);
        let r = orthonormal_retract(&o, &Vector4::new(0.0, 0.0, 0.0, 1e-3));
        assert_relative_eq!(r.phi - o.phi, 1e-3, epsilon = 1e-15);
        assert_eq!(r.u, o.u);
        let d = Vector4::new(1e-3, -2e-3, 0.5e-3, 1e-3);
        let back = orthonormal_retract(&orthonormal_retract(&o, &d), &(-d));
        assert_relative_eq!(back.u.matrix(), o.u.matrix(), epsilon = 1e-5);
        assert_relative_eq!(back.phi, o.phi, epsilon = 1e-12);
    }

    #[test]
    fn distance_examples() {
        let l = PluckerLine::new(Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(point_line_distance_3d(&Vector3::new(5.0, 0.0, 0.0), &l), 0.0);
        assert_relative_eq!(point_line_distance_3d(&Vector3::new(5.0, 3.0, 4.0), &l), 5.0);
    }

    #[test]
    fn plucker_constructor_checks() {
        assert_eq!(
            PluckerLine::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            Err(Error::DegenerateLine)
        );
        assert!(PluckerLine::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)).is_err());
        assert_eq!(
            PluckerLine::from_points(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(1.0, 0.0, 0.0)),
            Err(Error::CoincidentPoints)
        );
    }

    #[test]
    fn pose_inverse_composition() {
        let p = Pose3::new(
            Rotation3::exp(&Vector3::new(0.2, 0.5, -1.1)),
            Vector3::new(1.0, -2.0, 0.3),
        );
        let id = p.inverse() * p;
        assert!(id.rotation.angle() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        let x = Vector3::new(0.4, 0.1, 2.0);
        assert_relative_eq!(p.inverse().transform_point(&p.transform_point(&x)), x, epsilon = 1e-12);
    }

    #[test]
    fn rotation_from_matrix_is_orthonormal() {
        let m = Matrix3::new(1.0, 0.01, 0.0, -0.01, 1.0, 0.02, 0.0, -0.02, 1.001);
        let r = Rotation3::from_matrix(&m).matrix();
        assert_relative_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }
}
