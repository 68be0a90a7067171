//! Point triangulation, the three line initializers with their selector, and
//! multi-residual line refinement on the orthonormal parameterization.
//!
//! The refinement minimizes
//!
//! ```text
//! w_l Σ‖r_l‖² + w_pl Σ‖r_pl‖² + w_d ‖r_d‖²
//! ```
//!
//! where `r_l` are the signed endpoint-to-line distances of every view,
//! `r_pl = p × v̂ - n / ‖v‖` is the point-on-line error vector (its norm is the
//! point-line distance) and `r_d = v̂ - d̂` aligns the direction with a known
//! reference.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix2x4, Matrix3, Matrix3x4, Matrix4, Vector2, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{OrthonormalLine, PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
use crate::line_frontend::DirectionClass;
use crate::math::{self, skew};

/// Condition number above which the linear point triangulation is rejected.
pub const MAX_POINT_CONDITION: f64 = 1e8;

/// Plane pairs with `‖π₁ × π₂‖` below this are treated as parallel.
pub const PARALLEL_PLANE_EPS: f64 = 1e-6;

/// Midpoint (ray) triangulation followed by three Gauss-Newton iterations on
/// the pixel reprojection error. Poses are world→camera.
pub fn triangulate_point(observations: &[(Pose3, Vector2<f64>)], cam: &PinholeCamera) -> Result<Vector3<f64>> {
    if observations.len() < 2 {
        return Err(Error::InvalidInput("need at least two observations"));
    }
    let mut a = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for (pose, uv) in observations {
        let r_wc = pose.rotation.inverse();
        let d = (r_wc * cam.unproject(uv)).normalize();
        let proj = Matrix3::identity() - d * d.transpose();
        let c = pose.center();
        a += proj;
        b += proj * c;
    }
    let eig = a.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) || hi / lo > MAX_POINT_CONDITION {
        return Err(Error::IllConditioned);
    }
    let mut x = a.lu().solve(&b).ok_or(Error::IllConditioned)?;

    for _ in 0..3 {
        let mut h = Matrix3::zeros();
        let mut g = Vector3::zeros();
        let mut ok = true;
        for (pose, uv) in observations {
            let p_c = pose.transform_point(&x);
            match cam.project_with_jacobian(&p_c) {
                Ok((proj, j_c)) => {
                    let j = j_c * pose.rotation.matrix();
                    let r = proj - uv;
                    h += j.transpose() * j;
                    g += j.transpose() * r;
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        match h.cholesky() {
            Some(ch) => x -= ch.solve(&g),
            None => break,
        }
    }

    let anchor = observations[0].0.transform_point(&x);
    if anchor.z <= 0.0 {
        return Err(Error::NegativeDepth);
    }
    Ok(x)
}

/// Line through `p` along the world direction of an IMU axis:
/// `v = R_IGᵀ u`, `n = p × v`.
pub fn init_line_point_direction(p: &Vector3<f64>, dir_class: DirectionClass, r_ig: &Rotation3) -> Result<PluckerLine> {
    let axis = dir_class
        .axis()
        .ok_or(Error::InvalidInput("direction class must not be None"))?;
    let mut u = Vector3::zeros();
    u[axis] = 1.0;
    let v = r_ig.inverse() * u;
    init_line_point_world_direction(p, &v)
}

/// Line through `p` with a known world direction.
pub fn init_line_point_world_direction(p: &Vector3<f64>, dir: &Vector3<f64>) -> Result<PluckerLine> {
    let norm = dir.norm();
    if norm <= 1e-12 {
        return Err(Error::InvalidInput("direction must be nonzero"));
    }
    let v = dir / norm;
    PluckerLine::new_orthogonalized(p.cross(&v), v)
}

/// Line through two points with `v = (p1 - p2)/‖p1 - p2‖`, `n = p1 × v`.
pub fn init_line_two_points(p1: &Vector3<f64>, p2: &Vector3<f64>) -> Result<PluckerLine> {
    let d = p1 - p2;
    let len = d.norm();
    if len <= 1e-6 {
        return Err(Error::CoincidentPoints);
    }
    let v = d / len;
    PluckerLine::new_orthogonalized(p1.cross(&v), v)
}

/// One monocular or stereo view of a line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineView {
    /// World→left-camera pose.
    pub pose_cw: Pose3,
    pub seg: Segment2D,
    /// Same-timestep segment in the right camera, when stereo.
    pub right_seg: Option<Segment2D>,
}

impl LineView {
    pub fn mono(pose_cw: Pose3, seg: Segment2D) -> Self {
        Self {
            pose_cw,
            seg,
            right_seg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineObservationSet {
    pub views: Vec<LineView>,
    /// Left-camera→right-camera extrinsic for stereo views.
    pub right_extrinsic: Option<Pose3>,
}

impl LineObservationSet {
    pub fn mono(views: Vec<LineView>) -> Self {
        Self {
            views,
            right_extrinsic: None,
        }
    }

    /// All `(pose, segment)` pairs, right views after their left twin.
    pub fn camera_views(&self) -> Vec<(Pose3, Segment2D)> {
        let mut out = Vec::with_capacity(self.views.len() * 2);
        for v in &self.views {
            out.push((v.pose_cw, v.seg));
            if let (Some(seg), Some(ext)) = (v.right_seg, self.right_extrinsic) {
                out.push((ext * v.pose_cw, seg));
            }
        }
        out
    }

    pub fn stereo_count(&self) -> usize {
        if self.right_extrinsic.is_none() {
            return 0;
        }
        self.views.iter().filter(|v| v.right_seg.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LineTriangulationAux {
    /// Triangulated 3D points associated with the line.
    pub points_on_line: Vec<Vector3<f64>>,
    /// Known unit world direction.
    pub known_direction: Option<Vector3<f64>>,
}

/// World plane `π·x + d = 0` back-projected from a segment, `‖π‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

pub fn backproject_plane(pose_cw: &Pose3, seg: &Segment2D, cam: &PinholeCamera) -> Result<ObservationPlane> {
    let n_c = cam.unproject(&seg.start()).cross(&cam.unproject(&seg.end()));
    let norm = n_c.norm();
    if norm <= 1e-15 {
        return Err(Error::DegenerateLine);
    }
    let n_c = n_c / norm;
    Ok(ObservationPlane {
        normal: pose_cw.rotation.inverse() * n_c,
        offset: n_c.dot(&pose_cw.translation),
    })
}

/// Intersection of two planes with `‖v‖ = 1`, if they are not parallel.
pub fn intersect_planes(a: &ObservationPlane, b: &ObservationPlane) -> Option<PluckerLine> {
    let v = a.normal.cross(&b.normal);
    let s = v.norm();
    if s < PARALLEL_PLANE_EPS {
        return None;
    }
    let n = a.offset * b.normal - b.offset * a.normal;
    PluckerLine::new_orthogonalized(n / s, v / s).ok()
}

fn average_candidates(cands: &[PluckerLine]) -> Result<PluckerLine> {
    let first = cands.first().ok_or(Error::ParallelPlanes)?;
    let mut n = Vector3::zeros();
    let mut v = Vector3::zeros();
    for c in cands {
        let sign = if c.v().dot(first.v()) < 0.0 { -1.0 } else { 1.0 };
        n += sign * c.n();
        v += sign * c.v();
    }
    let k = cands.len() as f64;
    let v = v / k;
    let n = n / k;
    let v_hat = v.normalize();
    let n = n - v_hat * n.dot(&v_hat);
    PluckerLine::new(n / v.norm(), v_hat)
}

/// Plane-intersection initialization. Monocular sets intersect the first
/// view's plane with every other view; stereo sets prefer left/right pairs of
/// the same timestep and add consecutive left planes when fewer than five
/// stereo pairs exist.
pub fn init_line_planes(obs: &LineObservationSet, cam: &PinholeCamera) -> Result<PluckerLine> {
    if obs.views.len() < 2 && obs.stereo_count() == 0 {
        return Err(Error::InvalidInput("need at least two views"));
    }
    let left: Vec<ObservationPlane> = obs
        .views
        .iter()
        .map(|v| backproject_plane(&v.pose_cw, &v.seg, cam))
        .collect::<Result<_>>()?;
    let mut cands = Vec::new();
    if let Some(ext) = obs.right_extrinsic.filter(|_| obs.stereo_count() > 0) {
        for (view, lp) in obs.views.iter().zip(&left) {
            if let Some(rs) = view.right_seg {
                let rp = backproject_plane(&(ext * view.pose_cw), &rs, cam)?;
                cands.extend(intersect_planes(lp, &rp));
            }
        }
        if obs.stereo_count() < 5 {
            for w in left.windows(2) {
                cands.extend(intersect_planes(&w[0], &w[1]));
            }
        }
    } else {
        for other in &left[1..] {
            cands.extend(intersect_planes(&left[0], other));
        }
    }
    if cands.is_empty() {
        return Err(Error::ParallelPlanes);
    }
    average_candidates(&cands)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InitStrategy {
    PointDirection,
    TwoPoints,
    Planes,
}

impl InitStrategy {
    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::PointDirection => "point+direction",
            InitStrategy::TwoPoints => "two-points",
            InitStrategy::Planes => "planes",
        }
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

fn farthest_pair(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut best = (points[0], points[1], -1.0);
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = (points[i] - points[j]).norm_squared();
            if d > best.2 {
                best = (points[i], points[j], d);
            }
        }
    }
    (best.0, best.1)
}

/// Chooses the initializer: known direction with at least one point, else two
/// points, else plane intersection.
pub fn select_and_init(
    aux: &LineTriangulationAux,
    obs: &LineObservationSet,
    cam: &PinholeCamera,
) -> Result<(PluckerLine, InitStrategy)> {
    let pts = &aux.points_on_line;
    if let (Some(dir), false) = (aux.known_direction, pts.is_empty()) {
        let line = init_line_point_world_direction(&centroid(pts), &dir)?;
        return Ok((line, InitStrategy::PointDirection));
    }
    if pts.len() >= 2 {
        let (a, b) = farthest_pair(pts);
        return Ok((init_line_two_points(&a, &b)?, InitStrategy::TwoPoints));
    }
    if obs.views.is_empty() {
        return Err(Error::InvalidInput("empty observation set"));
    }
    match init_line_planes(obs, cam) {
        Ok(line) => Ok((line, InitStrategy::Planes)),
        Err(Error::ParallelPlanes) | Err(Error::InvalidInput(_)) => Err(Error::NoStrategy),
        Err(e) => Err(e),
    }
}

/// Derivatives of the unit Plücker representative `(n, v)` of an orthonormal
/// line with respect to the 4-vector retraction argument.
pub fn plucker_tangent(lo: &OrthonormalLine) -> (Matrix3x4<f64>, Matrix3x4<f64>) {
    let (u, w1, w2) = lo.frames();
    let u1: Vector3<f64> = u.column(0).into();
    let u2: Vector3<f64> = u.column(1).into();
    let u3: Vector3<f64> = u.column(2).into();
    let z = Vector3::zeros();
    let dn = Matrix3x4::from_columns(&[z, -w1 * u3, w1 * u2, -w2 * u1]);
    let dv = Matrix3x4::from_columns(&[w2 * u3, z, -w2 * u1, w1 * u2]);
    (dn, dv)
}

/// Endpoint residual and its Jacobian with respect to the camera-frame moment.
pub fn line_residual_wrt_moment(
    cam: &PinholeCamera,
    n_c: &Vector3<f64>,
    seg: &Segment2D,
) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
    if n_c.norm() <= 1e-9 {
        return Err(Error::DegenerateProjection);
    }
    let kl = cam.line_matrix();
    let l = kl * n_c;
    let s2 = l.x * l.x + l.y * l.y;
    if s2 <= 1e-12 {
        return Err(Error::DegenerateLine);
    }
    let s = math::sqrt(s2);
    let mut r = Vector2::zeros();
    let mut j_l = Matrix2x3::zeros();
    for (i, p) in [seg.start(), seg.end()].iter().enumerate() {
        let e = Vector3::new(p.x, p.y, 1.0);
        let el = e.dot(&l);
        r[i] = el / s;
        let s3 = s2 * s;
        j_l[(i, 0)] = e.x / s - el * l.x / s3;
        j_l[(i, 1)] = e.y / s - el * l.y / s3;
        j_l[(i, 2)] = 1.0 / s;
    }
    Ok((r, j_l * kl))
}

/// Endpoint residual of one view and its 2×4 Jacobian.
pub fn line_reprojection_residual(
    lo: &OrthonormalLine,
    pose_cw: &Pose3,
    cam: &PinholeCamera,
    seg: &Segment2D,
) -> Result<(Vector2<f64>, Matrix2x4<f64>)> {
    let line = lo.to_plucker();
    let r = pose_cw.rotation.matrix();
    let tx = skew(&pose_cw.translation);
    let n_c = r * line.n() + tx * (r * line.v());
    let (res, j_n) = line_residual_wrt_moment(cam, &n_c, seg)?;
    let (dn, dv) = plucker_tangent(lo);
    let dn_c = r * dn + tx * r * dv;
    Ok((res, j_n * dn_c))
}

/// Point-on-line error `p × v̂ - n/‖v‖` and its 3×4 Jacobian.
pub fn point_on_line_residual(lo: &OrthonormalLine, p: &Vector3<f64>) -> (Vector3<f64>, Matrix3x4<f64>) {
    let (u, w1, w2) = lo.frames();
    let u1: Vector3<f64> = u.column(0).into();
    let u2: Vector3<f64> = u.column(1).into();
    let u3: Vector3<f64> = u.column(2).into();
    let rho = w1 / w2;
    let res = p.cross(&u2) - rho * u1;
    let z = Vector3::zeros();
    let du1 = Matrix3x4::from_columns(&[z, -u3, u2, z]);
    let du2 = Matrix3x4::from_columns(&[u3, z, -u1, z]);
    let mut j = skew(p) * du2 - rho * du1;
    let drho = -1.0 / (w2 * w2);
    j.set_column(3, &(j.column(3) - drho * u1));
    (res, j)
}

/// Direction error `v̂ - d̂` and its 3×4 Jacobian (zero in the φ column).
pub fn direction_residual(lo: &OrthonormalLine, d_ref: &Vector3<f64>) -> (Vector3<f64>, Matrix3x4<f64>) {
    let u = lo.u.matrix();
    let u1: Vector3<f64> = u.column(0).into();
    let u2: Vector3<f64> = u.column(1).into();
    let u3: Vector3<f64> = u.column(2).into();
    let z = Vector3::zeros();
    (u2 - d_ref, Matrix3x4::from_columns(&[u3, z, -u1, z]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    LevenbergMarquardt,
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    pub solver: Solver,
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    /// Stop once the step norm falls below this.
    pub tol: f64,
    pub w_line: f64,
    pub w_point: f64,
    pub w_dir: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            solver: Solver::LevenbergMarquardt,
            max_iters: 5,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e8,
            tol: 1e-12,
            w_line: 1.0,
            w_point: 1.0,
            w_dir: 1.0,
        }
    }
}

impl RefinementConfig {
    /// Fixed-iteration Gauss-Newton used by the Monte Carlo studies.
    pub fn gauss_newton(iters: usize) -> Self {
        Self {
            solver: Solver::GaussNewton,
            max_iters: iters,
            tol: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidInput("max_iters must be at least 1"));
        }
        if !(self.w_line >= 0.0 && self.w_point >= 0.0 && self.w_dir >= 0.0) {
            return Err(Error::InvalidInput("weights must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub line: f64,
    pub point: f64,
    pub direction: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.line + self.point + self.direction
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub breakdown: CostBreakdown,
    /// Cost after the initial guess and after every accepted step.
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

struct LineProblem<'a> {
    views: Vec<(Pose3, Segment2D)>,
    points: &'a [Vector3<f64>],
    direction: Option<Vector3<f64>>,
    cam: &'a PinholeCamera,
    cfg: &'a RefinementConfig,
}

impl LineProblem<'_> {
    fn cost(&self, lo: &OrthonormalLine) -> Result<CostBreakdown> {
        let mut c = CostBreakdown::default();
        if self.cfg.w_line > 0.0 {
            for (pose, seg) in &self.views {
                let (r, _) = line_reprojection_residual(lo, pose, self.cam, seg)?;
                c.line += self.cfg.w_line * r.norm_squared();
            }
        }
        if self.cfg.w_point > 0.0 {
            for p in self.points {
                c.point += self.cfg.w_point * point_on_line_residual(lo, p).0.norm_squared();
            }
        }
        if let (Some(d), true) = (self.direction, self.cfg.w_dir > 0.0) {
            c.direction = self.cfg.w_dir * direction_residual(lo, &d).0.norm_squared();
        }
        Ok(c)
    }

    fn normal_equations(&self, lo: &OrthonormalLine) -> Result<(Matrix4<f64>, Vector4<f64>)> {
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        if self.cfg.w_line > 0.0 {
            for (pose, seg) in &self.views {
                let (r, j) = line_reprojection_residual(lo, pose, self.cam, seg)?;
                h += self.cfg.w_line * j.transpose() * j;
                g += self.cfg.w_line * j.transpose() * r;
            }
        }
        if self.cfg.w_point > 0.0 {
            for p in self.points {
                let (r, j) = point_on_line_residual(lo, p);
                h += self.cfg.w_point * j.transpose() * j;
                g += self.cfg.w_point * j.transpose() * r;
            }
        }
        if let (Some(d), true) = (self.direction, self.cfg.w_dir > 0.0) {
            let (r, j) = direction_residual(lo, &d);
            h += self.cfg.w_dir * j.transpose() * j;
            g += self.cfg.w_dir * j.transpose() * r;
        }
        Ok((h, g))
    }
}

fn solve4(h: &Matrix4<f64>, g: &Vector4<f64>) -> Option<Vector4<f64>> {
    if let Some(ch) = h.cholesky() {
        let x = ch.solve(&(-g));
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    h.lu().solve(&(-g)).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Refines a line against its views, associated points and known direction.
pub fn refine_line(
    init: &PluckerLine,
    obs: &LineObservationSet,
    aux: &LineTriangulationAux,
    cam: &PinholeCamera,
    cfg: &RefinementConfig,
) -> Result<(PluckerLine, RefineReport)> {
    cfg.validate()?;
    let mut lo = OrthonormalLine::from_plucker(init)?;
    let direction = aux.known_direction.map(|d| {
        let d = d.normalize();
        if d.dot(init.v()) < 0.0 {
            -d
        } else {
            d
        }
    });
    let problem = LineProblem {
        views: obs.camera_views(),
        points: &aux.points_on_line,
        direction,
        cam,
        cfg,
    };
    let mut cost = problem.cost(&lo)?;
    let mut report = RefineReport {
        initial_cost: cost.total(),
        cost_history: alloc::vec![cost.total()],
        ..RefineReport::default()
    };
    let mut lambda = cfg.lambda_init;

    for _ in 0..cfg.max_iters {
        report.iterations += 1;
        let (h, g) = problem.normal_equations(&lo)?;
        match cfg.solver {
            Solver::GaussNewton => {
                let delta = solve4(&h, &g).ok_or(Error::SingularNormalEquations)?;
                let cand = lo.retract(&delta);
                match problem.cost(&cand) {
                    Ok(c) => {
                        lo = cand;
                        cost = c;
                        report.cost_history.push(cost.total());
                    }
                    // the step left the valid domain (e.g. through a camera center)
                    Err(_) => break,
                }
                if delta.norm() < cfg.tol {
                    report.converged = true;
                    break;
                }
            }
            Solver::LevenbergMarquardt => {
                let mut accepted = None;
                while lambda <= cfg.lambda_max {
                    let damped = h + Matrix4::identity() * lambda;
                    let Some(delta) = solve4(&damped, &g) else {
                        lambda *= cfg.lambda_up;
                        continue;
                    };
                    let cand = lo.retract(&delta);
                    match problem.cost(&cand) {
                        Ok(c) if c.total() <= cost.total() => {
                            accepted = Some((cand, c, delta));
                            lambda = (lambda / cfg.lambda_down).max(1e-15);
                            break;
                        }
                        _ => lambda *= cfg.lambda_up,
                    }
                }
                match accepted {
                    Some((cand, c, delta)) => {
                        lo = cand;
                        cost = c;
                        report.cost_history.push(cost.total());
                        if delta.norm() < cfg.tol {
                            report.converged = true;
                            break;
                        }
                    }
                    None => {
                        if h.iter().any(|x| !x.is_finite()) {
                            return Err(Error::SingularNormalEquations);
                        }
                        report.converged = true;
                        break;
                    }
                }
            }
        }
    }
    report.final_cost = cost.total();
    report.breakdown = cost;
    Ok((lo.to_plucker(), report))
}

/// Stacked residual of a refinement problem, in view/point/direction order.
/// Useful for finite-difference checks and diagnostics.
pub fn stacked_residual(
    lo: &OrthonormalLine,
    obs: &LineObservationSet,
    aux: &LineTriangulationAux,
    cam: &PinholeCamera,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let views = obs.camera_views();
    let rows = 2 * views.len() + 3 * aux.points_on_line.len() + if aux.known_direction.is_some() { 3 } else { 0 };
    let mut r = DVector::zeros(rows);
    let mut j = DMatrix::zeros(rows, 4);
    let mut row = 0;
    for (pose, seg) in &views {
        let (ri, ji) = line_reprojection_residual(lo, pose, cam, seg)?;
        r.rows_mut(row, 2).copy_from(&ri);
        j.view_mut((row, 0), (2, 4)).copy_from(&ji);
        row += 2;
    }
    for p in &aux.points_on_line {
        let (ri, ji) = point_on_line_residual(lo, p);
        r.rows_mut(row, 3).copy_from(&ri);
        j.view_mut((row, 0), (3, 4)).copy_from(&ji);
        row += 3;
    }
    if let Some(d) = aux.known_direction {
        let (ri, ji) = direction_residual(lo, &d);
        r.rows_mut(row, 3).copy_from(&ri);
        j.view_mut((row, 0), (3, 4)).copy_from(&ji);
    }
    Ok((r, j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn cam() -> PinholeCamera {
        PinholeCamera::new(400.0, 400.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn point_from_two_cameras() {
        let p = Vector3::new(0.0, 0.0, 5.0);
        let poses = [Pose3::identity(), Pose3::from_translation(Vector3::new(-1.0, 0.0, 0.0))];
        let obs: Vec<_> = poses
            .iter()
            .map(|pose| (*pose, cam().project(&pose.transform_point(&p)).unwrap()))
            .collect();
        assert_relative_eq!(triangulate_point(&obs, &cam()).unwrap(), p, epsilon = 1e-9);
    }

    #[test]
    fn point_zero_baseline() {
        let obs = [
            (Pose3::identity(), Vector2::new(320.0, 240.0)),
            (Pose3::identity(), Vector2::new(320.0, 240.0)),
        ];
        assert_eq!(triangulate_point(&obs, &cam()), Err(Error::IllConditioned));
    }

    #[test]
    fn point_direction_examples() {
        let l =
            init_line_point_direction(&Vector3::new(0.0, 0.0, 5.0), DirectionClass::X, &Rotation3::identity()).unwrap();
        assert_relative_eq!(*l.v(), Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(*l.n(), Vector3::new(0.0, 5.0, 0.0));
        let through =
            init_line_point_direction(&Vector3::new(3.0, 0.0, 0.0), DirectionClass::X, &Rotation3::identity()).unwrap();
        assert_eq!(OrthonormalLine::from_plucker(&through), Err(Error::DegenerateLine));
        assert!(init_line_point_direction(&Vector3::zeros(), DirectionClass::None, &Rotation3::identity()).is_err());
    }

    #[test]
    fn two_point_examples() {
        let l = init_line_two_points(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(1.0, 1.0, 0.0)).unwrap();
        assert_relative_eq!(*l.v(), Vector3::new(0.0, -1.0, 0.0));
        // moment parallel to p1 × p2 = (0,0,1)
        assert_relative_eq!(l.n().cross(&Vector3::new(0.0, 0.0, 1.0)).norm(), 0.0);
        assert_relative_eq!(l.n().norm(), 1.0);
        let l = init_line_two_points(&Vector3::new(0.0, 0.0, 5.0), &Vector3::new(1.0, 0.0, 5.0)).unwrap();
        assert_relative_eq!(*l.v(), Vector3::new(-1.0, 0.0, 0.0));
        assert_relative_eq!(l.n().cross(&Vector3::new(0.0, 5.0, 0.0)).norm(), 0.0);
        assert_eq!(
            init_line_two_points(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(1.0, 2.0, 3.0 + 1e-7)),
            Err(Error::CoincidentPoints)
        );
    }

    #[test]
    fn selector_branches() {
        let obs = LineObservationSet::default();
        let aux = LineTriangulationAux {
            points_on_line: vec![Vector3::new(0.0, 0.0, 5.0)],
            known_direction: Some(Vector3::x()),
        };
        assert_eq!(
            select_and_init(&aux, &obs, &cam()).unwrap().1,
            InitStrategy::PointDirection
        );
        let aux = LineTriangulationAux {
            points_on_line: vec![Vector3::new(0.0, 0.0, 5.0), Vector3::new(1.0, 0.0, 5.0)],
            known_direction: None,
        };
        assert_eq!(select_and_init(&aux, &obs, &cam()).unwrap().1, InitStrategy::TwoPoints);
    }

    #[test]
    fn refine_fixed_point() {
        let a = Vector3::new(-2.0, 1.0, 8.0);
        let b = Vector3::new(2.0, 1.0, 8.0);
        let truth = PluckerLine::from_points(&a, &b).unwrap();
        let views = (0..5)
            .map(|i| {
                let pose = Pose3::from_translation(Vector3::new(0.0, -0.3 * i as f64, 0.2 * i as f64));
                let pa = cam().project(&pose.transform_point(&a)).unwrap();
                let pb = cam().project(&pose.transform_point(&b)).unwrap();
                LineView::mono(pose, Segment2D::new(pa, pb).unwrap())
            })
            .collect();
        let obs = LineObservationSet::mono(views);
        let (est, rep) = refine_line(
            &truth,
            &obs,
            &LineTriangulationAux::default(),
            &cam(),
            &RefinementConfig::default(),
        )
        .unwrap();
        assert!(rep.final_cost < 1e-16, "{rep:?}");
        assert!(est.approx_eq(&truth, 1e-9));
    }
}
