//! MSCKF error-state filter: IMU propagation, stochastic cloning, point and
//! line updates with null-space marginalization and chi-square gating.
//!
//! The error state is ordered `[δθ, δp, δv, δbg, δba]` followed by
//! `[δθ, δp]` for every clone. Rotation errors are left-multiplicative,
//! `R_IG = Exp(δθ) R̂_IG`; all other errors are additive.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{OrthonormalLine, PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
use crate::math::{self, skew, so3_exp, so3_right_jacobian};
use crate::triangulation::{line_reprojection_residual, line_residual_wrt_moment, triangulate_point};

pub const IMU_DIM: usize = 15;
pub const CLONE_DIM: usize = 6;
/// Default gating probability.
pub const CHI2_PROB: f64 = 0.95;
/// Clone timestamps are matched to observation timestamps within this.
pub const TIME_EPS: f64 = 1e-6;

pub type Matrix15 = SMatrix<f64, 15, 15>;
pub type Matrix15x12 = SMatrix<f64, 15, 12>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub r_ig: Rotation3,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub bg: Vector3<f64>,
    pub ba: Vector3<f64>,
}

impl Default for ImuState {
    fn default() -> Self {
        Self {
            r_ig: Rotation3::identity(),
            p: Vector3::zeros(),
            v: Vector3::zeros(),
            bg: Vector3::zeros(),
            ba: Vector3::zeros(),
        }
    }
}

impl ImuState {
    /// Applies a 15-dim error-state correction.
    pub fn boxplus(&self, dx: &[f64]) -> Self {
        let dth = Vector3::new(dx[0], dx[1], dx[2]);
        Self {
            r_ig: Rotation3::exp(&dth) * self.r_ig,
            p: self.p + Vector3::new(dx[3], dx[4], dx[5]),
            v: self.v + Vector3::new(dx[6], dx[7], dx[8]),
            bg: self.bg + Vector3::new(dx[9], dx[10], dx[11]),
            ba: self.ba + Vector3::new(dx[12], dx[13], dx[14]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.bg.iter())
            .chain(self.ba.iter())
            .all(|x| x.is_finite())
            && self.r_ig.quaternion().coords.iter().all(|x| x.is_finite())
    }
}

/// One gyroscope/accelerometer reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub w: Vector3<f64>,
    pub a: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, w: Vector3<f64>, a: Vector3<f64>) -> Self {
        Self { t, w, a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClonePose {
    pub t: f64,
    pub r_ig: Rotation3,
    pub p: Vector3<f64>,
}

impl ClonePose {
    /// World→IMU pose of the clone.
    pub fn pose_ig(&self) -> Pose3 {
        Pose3::new(self.r_ig, -(self.r_ig * self.p))
    }

    /// World→camera pose given the IMU→camera extrinsic.
    pub fn camera_pose(&self, t_ci: &Pose3) -> Pose3 {
        *t_ci * self.pose_ig()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloneWindow {
    clones: Vec<ClonePose>,
    capacity: usize,
}

impl CloneWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            clones: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.clones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clones.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.clones.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&ClonePose> {
        self.clones.get(i)
    }

    pub fn iter(&self) -> core::slice::Iter<'_, ClonePose> {
        self.clones.iter()
    }

    pub fn oldest(&self) -> Option<&ClonePose> {
        self.clones.first()
    }

    pub fn newest(&self) -> Option<&ClonePose> {
        self.clones.last()
    }

    /// Index of the clone at timestamp `t`.
    pub fn find(&self, t: f64) -> Option<usize> {
        self.clones.iter().position(|c| (c.t - t).abs() < TIME_EPS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Gyroscope white noise (rad/s/√Hz).
    pub sigma_g: f64,
    /// Accelerometer white noise (m/s²/√Hz).
    pub sigma_a: f64,
    /// Gyroscope bias random walk (rad/s²/√Hz).
    pub sigma_bg: f64,
    /// Accelerometer bias random walk (m/s³/√Hz).
    pub sigma_ba: f64,
    /// Point observation noise (px).
    pub sigma_px: f64,
    /// Line endpoint noise (px).
    pub sigma_l: f64,
    /// Wheel rate noise (rad/s).
    pub sigma_w: f64,
    /// Planar-motion uncertainty.
    pub sigma_p: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            sigma_g: 1.7e-4,
            sigma_a: 2.0e-3,
            sigma_bg: 2.0e-5,
            sigma_ba: 3.0e-3,
            sigma_px: 1.0,
            sigma_l: 1.0,
            sigma_w: 0.05,
            sigma_p: 0.02,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sigma_g,
            self.sigma_a,
            self.sigma_bg,
            self.sigma_ba,
            self.sigma_px,
            self.sigma_l,
            self.sigma_w,
            self.sigma_p,
        ];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidInput("noise parameters must be positive"))
        }
    }
}

/// One midpoint step of the inertial kinematics.
pub fn imu_step(imu: &ImuState, s0: &ImuSample, s1: &ImuSample, gravity: &Vector3<f64>) -> ImuState {
    let dt = s1.t - s0.t;
    let w_hat = 0.5 * (s0.w + s1.w) - imu.bg;
    let a_hat = 0.5 * (s0.a + s1.a) - imu.ba;
    let dr = Rotation3::exp(&(-w_hat * dt));
    let r_next = dr * imu.r_ig;
    let a_g = 0.5 * (imu.r_ig.inverse() * a_hat + r_next.inverse() * a_hat) - gravity;
    ImuState {
        r_ig: r_next,
        p: imu.p + imu.v * dt + 0.5 * a_g * dt * dt,
        v: imu.v + a_g * dt,
        bg: imu.bg,
        ba: imu.ba,
    }
}

/// Error-state transition `F` and noise Jacobian `G` of [`imu_step`]; the
/// noise vector is `(n_g, n_a, n_wg, n_wa)`.
pub fn imu_step_jacobians(imu: &ImuState, s0: &ImuSample, s1: &ImuSample) -> (Matrix15, Matrix15x12) {
    let dt = s1.t - s0.t;
    let w_hat = 0.5 * (s0.w + s1.w) - imu.bg;
    let a_hat = 0.5 * (s0.a + s1.a) - imu.ba;
    let dr = so3_exp(&(-w_hat * dt));
    let r_gi = imu.r_ig.matrix().transpose();
    let r_gi_next = (dr * imu.r_ig.matrix()).transpose();
    let ax = skew(&a_hat);
    let f_th_bg = dr * so3_right_jacobian(&(-w_hat * dt)) * dt;
    let a_th = 0.5 * (r_gi * ax + r_gi_next * ax * dr);
    let a_bg = 0.5 * r_gi_next * ax * f_th_bg;
    let a_ba = -0.5 * (r_gi + r_gi_next);
    let i3 = Matrix3::identity();

    let mut f = Matrix15::identity();
    f.fixed_view_mut::<3, 3>(0, 0).copy_from(&dr);
    f.fixed_view_mut::<3, 3>(0, 9).copy_from(&f_th_bg);
    f.fixed_view_mut::<3, 3>(3, 0).copy_from(&(0.5 * a_th * dt * dt));
    f.fixed_view_mut::<3, 3>(3, 6).copy_from(&(i3 * dt));
    f.fixed_view_mut::<3, 3>(3, 9).copy_from(&(0.5 * a_bg * dt * dt));
    f.fixed_view_mut::<3, 3>(3, 12).copy_from(&(0.5 * a_ba * dt * dt));
    f.fixed_view_mut::<3, 3>(6, 0).copy_from(&(a_th * dt));
    f.fixed_view_mut::<3, 3>(6, 9).copy_from(&(a_bg * dt));
    f.fixed_view_mut::<3, 3>(6, 12).copy_from(&(a_ba * dt));

    let mut g = Matrix15x12::zeros();
    for (col, src) in [(0usize, 9usize), (3, 12)] {
        for row in [0usize, 3, 6] {
            let blk = f.fixed_view::<3, 3>(row, src).into_owned();
            g.fixed_view_mut::<3, 3>(row, col).copy_from(&blk);
        }
    }
    g.fixed_view_mut::<3, 3>(9, 6).copy_from(&i3);
    g.fixed_view_mut::<3, 3>(12, 9).copy_from(&i3);
    (f, g)
}

/// Outcome of one feature in a visual update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureOutcome {
    Accepted,
    TooFewObservations,
    Triangulation(Error),
    GateRejected { gamma: f64, threshold: f64 },
}

impl FeatureOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, FeatureOutcome::Accepted)
    }
}

/// A point feature observed at clone timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTrack {
    pub id: u64,
    pub obs: Vec<(f64, Vector2<f64>)>,
}

/// A refined world line with its observations at clone timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFeature {
    pub id: u64,
    pub line: PluckerLine,
    pub obs: Vec<(f64, Segment2D)>,
}

/// Orthonormal basis of the left null space of `h_f` (columns), built from
/// Givens rotations.
pub fn left_nullspace(h_f: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = h_f.shape();
    let mut a = h_f.clone();
    let mut qt = DMatrix::<f64>::identity(m, m);
    for j in 0..k.min(m) {
        for i in ((j + 1)..m).rev() {
            let (x, y) = (a[(i - 1, j)], a[(i, j)]);
            if y == 0.0 {
                continue;
            }
            let r = math::sqrt(x * x + y * y);
            let (c, s) = (x / r, y / r);
            for mat in [&mut a, &mut qt] {
                for col in 0..mat.ncols() {
                    let (u, v) = (mat[(i - 1, col)], mat[(i, col)]);
                    mat[(i - 1, col)] = c * u + s * v;
                    mat[(i, col)] = -s * u + c * v;
                }
            }
        }
    }
    let keep = m.saturating_sub(k);
    qt.rows(m - keep, keep).transpose()
}

/// Projects a linearized system onto the left null space of `h_f`.
pub fn nullspace_project(h_f: &DMatrix<f64>, h_x: &DMatrix<f64>, r: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let q_n = left_nullspace(h_f);
    (q_n.transpose() * h_x, q_n.transpose() * r)
}

/// Compresses a tall isotropic-noise system with a thin QR.
pub fn compress_measurement(h: DMatrix<f64>, r: DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    if h.nrows() <= h.ncols() {
        return (h, r);
    }
    let qr = h.qr();
    let q = qr.q();
    let rr = qr.r();
    (rr, q.transpose() * r)
}

/// Makes `p` symmetric and clamps negative eigenvalues when a Cholesky probe
/// fails.
pub fn enforce_psd(p: &mut DMatrix<f64>) {
    let sym = (&*p + p.transpose()) * 0.5;
    *p = sym;
    let n = p.nrows();
    if n == 0 {
        return;
    }
    let probe = &*p + DMatrix::<f64>::identity(n, n) * 1e-10;
    if probe.cholesky().is_some() {
        return;
    }
    let eig = p.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|x| x.max(0.0));
    let v = eig.eigenvectors;
    let rebuilt = &v * DMatrix::from_diagonal(&vals) * v.transpose();
    *p = (&rebuilt + rebuilt.transpose()) * 0.5;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub t: f64,
    pub imu: ImuState,
    pub clones: CloneWindow,
    pub cov: DMatrix<f64>,
    pub gravity: Vector3<f64>,
    pub noise: NoiseParams,
    pub chi2_prob: f64,
    /// Scales the gate threshold; 1 is the plain quantile.
    pub chi2_multiplier: f64,
    /// Minimum clone observations for a point feature.
    pub min_point_obs: usize,
}

impl EstimatorState {
    pub fn new(t: f64, imu: ImuState, imu_cov: &Matrix15, noise: NoiseParams, window: usize) -> Result<Self> {
        noise.validate()?;
        if window == 0 {
            return Err(Error::InvalidInput("window size must be positive"));
        }
        let mut cov = DMatrix::zeros(IMU_DIM, IMU_DIM);
        cov.copy_from(imu_cov);
        Ok(Self {
            t,
            imu,
            clones: CloneWindow::new(window),
            cov,
            gravity: Vector3::new(0.0, 0.0, 9.81),
            noise,
            chi2_prob: CHI2_PROB,
            chi2_multiplier: 1.0,
            min_point_obs: 3,
        })
    }

    pub fn dim(&self) -> usize {
        IMU_DIM + CLONE_DIM * self.clones.len()
    }

    /// First error-state index of clone `i`.
    pub fn clone_index(i: usize) -> usize {
        IMU_DIM + CLONE_DIM * i
    }

    /// Integrates IMU readings from the current time to the last sample.
    pub fn propagate(&mut self, samples: &[ImuSample]) -> Result<()> {
        let Some(first) = samples.first() else {
            return Ok(());
        };
        if first.t < self.t - TIME_EPS {
            return Err(Error::NonMonotonicTime);
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::NonMonotonicTime);
        }
        let mut phi = Matrix15::identity();
        let mut qd = Matrix15::zeros();
        let n = &self.noise;
        let mut step = |imu: &ImuState, s0: &ImuSample, s1: &ImuSample| -> ImuState {
            let dt = s1.t - s0.t;
            let (f, g) = imu_step_jacobians(imu, s0, s1);
            let mut q = SMatrix::<f64, 12, 12>::zeros();
            for i in 0..3 {
                q[(i, i)] = n.sigma_g * n.sigma_g / dt;
                q[(3 + i, 3 + i)] = n.sigma_a * n.sigma_a / dt;
                q[(6 + i, 6 + i)] = n.sigma_bg * n.sigma_bg * dt;
                q[(9 + i, 9 + i)] = n.sigma_ba * n.sigma_ba * dt;
            }
            phi = f * phi;
            qd = f * qd * f.transpose() + g * q * g.transpose();
            imu_step(imu, s0, s1, &self.gravity)
        };
        let mut imu = self.imu;
        if first.t - self.t > TIME_EPS {
            let s0 = ImuSample::new(self.t, first.w, first.a);
            imu = step(&imu, &s0, first);
        }
        for w in samples.windows(2) {
            imu = step(&imu, &w[0], &w[1]);
        }
        self.imu = imu;
        self.t = samples.last().map(|s| s.t).unwrap_or(self.t);

        let dim = self.dim();
        let p_ii: Matrix15 = self.cov.fixed_view::<15, 15>(0, 0).into_owned();
        let new_ii = phi * p_ii * phi.transpose() + qd;
        self.cov.fixed_view_mut::<15, 15>(0, 0).copy_from(&new_ii);
        if dim > IMU_DIM {
            let p_ic = self.cov.view((0, IMU_DIM), (IMU_DIM, dim - IMU_DIM)).into_owned();
            let new_ic = phi * p_ic;
            self.cov
                .view_mut((0, IMU_DIM), (IMU_DIM, dim - IMU_DIM))
                .copy_from(&new_ic);
            self.cov
                .view_mut((IMU_DIM, 0), (dim - IMU_DIM, IMU_DIM))
                .copy_from(&new_ic.transpose());
        }
        enforce_psd(&mut self.cov);
        Ok(())
    }

    /// Clones the current pose at the current time.
    pub fn augment_clone(&mut self) -> Result<()> {
        if self.clones.is_full() {
            return Err(Error::WindowFull);
        }
        if let Some(last) = self.clones.newest() {
            if self.t <= last.t + TIME_EPS {
                return Err(Error::NonMonotonicTime);
            }
        }
        let dim = self.dim();
        let mut cov = DMatrix::zeros(dim + CLONE_DIM, dim + CLONE_DIM);
        cov.view_mut((0, 0), (dim, dim)).copy_from(&self.cov);
        let rows = self.cov.rows(0, CLONE_DIM).into_owned();
        cov.view_mut((dim, 0), (CLONE_DIM, dim)).copy_from(&rows);
        cov.view_mut((0, dim), (dim, CLONE_DIM)).copy_from(&rows.transpose());
        let blk = self.cov.view((0, 0), (CLONE_DIM, CLONE_DIM)).into_owned();
        cov.view_mut((dim, dim), (CLONE_DIM, CLONE_DIM)).copy_from(&blk);
        self.cov = cov;
        self.clones.clones.push(ClonePose {
            t: self.t,
            r_ig: self.imu.r_ig,
            p: self.imu.p,
        });
        enforce_psd(&mut self.cov);
        Ok(())
    }

    /// Drops the oldest clone and its covariance rows/columns.
    pub fn marginalize_oldest(&mut self) -> Result<ClonePose> {
        if self.clones.is_empty() {
            return Err(Error::WindowEmpty);
        }
        let removed = self.clones.clones.remove(0);
        self.cov = self
            .cov
            .clone()
            .remove_rows(IMU_DIM, CLONE_DIM)
            .remove_columns(IMU_DIM, CLONE_DIM);
        Ok(removed)
    }

    /// Applies a full error-state correction.
    pub fn apply_correction(&mut self, dx: &DVector<f64>) {
        self.imu = self.imu.boxplus(dx.as_slice());
        for (i, c) in self.clones.clones.iter_mut().enumerate() {
            let k = Self::clone_index(i);
            c.r_ig = Rotation3::exp(&Vector3::new(dx[k], dx[k + 1], dx[k + 2])) * c.r_ig;
            c.p += Vector3::new(dx[k + 3], dx[k + 4], dx[k + 5]);
        }
    }

    /// Standard EKF update with residual `r = z - h(x̂)` and Joseph-form
    /// covariance.
    pub fn ekf_update(&mut self, h: &DMatrix<f64>, r: &DVector<f64>, r_noise: &DMatrix<f64>) -> Result<()> {
        let dim = self.dim();
        if h.ncols() != dim || h.nrows() != r.len() || r_noise.shape() != (r.len(), r.len()) {
            return Err(Error::InvalidInput("update dimensions are inconsistent"));
        }
        if h.nrows() == 0 {
            return Ok(());
        }
        let ph_t = &self.cov * h.transpose();
        let s = h * &ph_t + r_noise;
        let s = (&s + s.transpose()) * 0.5;
        let chol = s.cholesky().ok_or(Error::SingularInnovation)?;
        let k = chol.solve(&ph_t.transpose()).transpose();
        let dx = &k * r;
        if dx.iter().any(|x| !x.is_finite()) {
            return Err(Error::SingularInnovation);
        }
        let i_kh = DMatrix::<f64>::identity(dim, dim) - &k * h;
        self.cov = &i_kh * &self.cov * i_kh.transpose() + &k * r_noise * k.transpose();
        enforce_psd(&mut self.cov);
        self.apply_correction(&dx);
        Ok(())
    }

    /// Mahalanobis distance of a residual under isotropic noise `sigma2`.
    pub fn mahalanobis(&self, h: &DMatrix<f64>, r: &DVector<f64>, sigma2: f64) -> Option<f64> {
        let s = h * &self.cov * h.transpose() + DMatrix::<f64>::identity(r.len(), r.len()) * sigma2;
        let chol = s.cholesky()?;
        Some(r.dot(&chol.solve(r)))
    }

    fn gate(&self, h: &DMatrix<f64>, r: &DVector<f64>, sigma2: f64) -> FeatureOutcome {
        let threshold = self.chi2_multiplier * math::chi2_quantile(self.chi2_prob, r.len());
        match self.mahalanobis(h, r, sigma2) {
            Some(gamma) if gamma < threshold => FeatureOutcome::Accepted,
            Some(gamma) => FeatureOutcome::GateRejected { gamma, threshold },
            None => FeatureOutcome::Triangulation(Error::SingularInnovation),
        }
    }

    fn stacked_update(&mut self, blocks: Vec<(DMatrix<f64>, DVector<f64>)>, sigma2: f64) -> Result<()> {
        let rows: usize = blocks.iter().map(|b| b.1.len()).sum();
        if rows == 0 {
            return Ok(());
        }
        let dim = self.dim();
        let mut h = DMatrix::zeros(rows, dim);
        let mut r = DVector::zeros(rows);
        let mut row = 0;
        for (hb, rb) in blocks {
            let m = rb.len();
            h.rows_mut(row, m).copy_from(&hb);
            r.rows_mut(row, m).copy_from(&rb);
            row += m;
        }
        let (h, r) = compress_measurement(h, r);
        let n = r.len();
        self.ekf_update(&h, &r, &(DMatrix::<f64>::identity(n, n) * sigma2))
    }

    /// Linearized point system of one track: residual, `H_x` and `H_f`.
    pub fn point_jacobians(
        &self,
        track: &PointTrack,
        p_f: &Vector3<f64>,
        cam: &PinholeCamera,
        t_ci: &Pose3,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let m = track.obs.len();
        let mut r = DVector::zeros(2 * m);
        let mut h_x = DMatrix::zeros(2 * m, self.dim());
        let mut h_f = DMatrix::zeros(2 * m, 3);
        let r_ci = t_ci.rotation.matrix();
        for (j, (t, uv)) in track.obs.iter().enumerate() {
            let ci = self.clones.find(*t).ok_or(Error::MissingClone)?;
            let c = self.clones.get(ci).expect("clone index");
            let r_ig = c.r_ig.matrix();
            let p_i = r_ig * (p_f - c.p);
            let p_c = r_ci * p_i + t_ci.translation;
            let (proj, j_proj) = cam.project_with_jacobian(&p_c)?;
            r.rows_mut(2 * j, 2).copy_from(&(uv - proj));
            let jc = j_proj * r_ci;
            let k = Self::clone_index(ci);
            h_x.view_mut((2 * j, k), (2, 3)).copy_from(&(jc * -skew(&p_i)));
            h_x.view_mut((2 * j, k + 3), (2, 3)).copy_from(&(jc * -r_ig));
            h_f.view_mut((2 * j, 0), (2, 3)).copy_from(&(jc * r_ig));
        }
        Ok((r, h_x, h_f))
    }

    /// MSCKF point update. Tracks are triangulated against the clone poses,
    /// marginalized, gated and applied in one stacked update.
    pub fn point_update(
        &mut self,
        tracks: &[PointTrack],
        cam: &PinholeCamera,
        t_ci: &Pose3,
    ) -> Result<Vec<FeatureOutcome>> {
        let sigma2 = self.noise.sigma_px * self.noise.sigma_px;
        let mut outcomes = Vec::with_capacity(tracks.len());
        let mut blocks = Vec::new();
        for track in tracks {
            let obs: Vec<(Pose3, Vector2<f64>)> = track
                .obs
                .iter()
                .filter_map(|(t, uv)| {
                    self.clones
                        .find(*t)
                        .map(|i| (self.clones.clones[i].camera_pose(t_ci), *uv))
                })
                .collect();
            if obs.len() < self.min_point_obs.max(2) || obs.len() != track.obs.len() {
                outcomes.push(FeatureOutcome::TooFewObservations);
                continue;
            }
            let p_f = match triangulate_point(&obs, cam) {
                Ok(p) => p,
                Err(e) => {
                    outcomes.push(FeatureOutcome::Triangulation(e));
                    continue;
                }
            };
            let (r, h_x, h_f) = match self.point_jacobians(track, &p_f, cam, t_ci) {
                Ok(v) => v,
                Err(e) => {
                    outcomes.push(FeatureOutcome::Triangulation(e));
                    continue;
                }
            };
            let (h, r) = nullspace_project(&h_f, &h_x, &r);
            let outcome = self.gate(&h, &r, sigma2);
            if outcome.is_accepted() {
                blocks.push((h, r));
            }
            outcomes.push(outcome);
        }
        self.stacked_update(blocks, sigma2)?;
        Ok(outcomes)
    }

    /// Linearized line system of one feature: residual, `H_x` and the 4-column
    /// `H_f` in the orthonormal tangent.
    pub fn line_jacobians(
        &self,
        feature: &LineFeature,
        cam: &PinholeCamera,
        t_ci: &Pose3,
    ) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let lo = OrthonormalLine::from_plucker(&feature.line)?;
        let line = lo.to_plucker();
        let (n_g, v_g) = (*line.n(), *line.v());
        let m = feature.obs.len();
        let mut r = DVector::zeros(2 * m);
        let mut h_x = DMatrix::zeros(2 * m, self.dim());
        let mut h_f = DMatrix::zeros(2 * m, 4);
        let r_ci = t_ci.rotation.matrix();
        let t_x = skew(&t_ci.translation);
        for (j, (t, seg)) in feature.obs.iter().enumerate() {
            let ci = self.clones.find(*t).ok_or(Error::MissingClone)?;
            let c = self.clones.get(ci).expect("clone index");
            let r_ig = c.r_ig.matrix();
            let n_i = r_ig * (n_g - c.p.cross(&v_g));
            let v_i = r_ig * v_g;
            let n_c = r_ci * n_i + t_x * (r_ci * v_i);
            let (res, j_n) = line_residual_wrt_moment(cam, &n_c, seg)?;
            let (_, jf) = line_reprojection_residual(&lo, &c.camera_pose(t_ci), cam, seg)?;
            r.rows_mut(2 * j, 2).copy_from(&(-res));
            let d_th = r_ci * -skew(&n_i) + t_x * r_ci * -skew(&v_i);
            let d_p = r_ci * r_ig * skew(&v_g);
            let k = Self::clone_index(ci);
            h_x.view_mut((2 * j, k), (2, 3)).copy_from(&(j_n * d_th));
            h_x.view_mut((2 * j, k + 3), (2, 3)).copy_from(&(j_n * d_p));
            h_f.view_mut((2 * j, 0), (2, 4)).copy_from(&jf);
        }
        Ok((r, h_x, h_f))
    }

    /// MSCKF line update on refined lines.
    pub fn line_update(
        &mut self,
        lines: &[LineFeature],
        cam: &PinholeCamera,
        t_ci: &Pose3,
    ) -> Result<Vec<FeatureOutcome>> {
        let sigma2 = self.noise.sigma_l * self.noise.sigma_l;
        let mut outcomes = Vec::with_capacity(lines.len());
        let mut blocks = Vec::new();
        for feature in lines {
            if feature.obs.len() < 3 {
                outcomes.push(FeatureOutcome::TooFewObservations);
                continue;
            }
            let (r, h_x, h_f) = match self.line_jacobians(feature, cam, t_ci) {
                Ok(v) => v,
                Err(e) => {
                    outcomes.push(FeatureOutcome::Triangulation(e));
                    continue;
                }
            };
            let (h, r) = nullspace_project(&h_f, &h_x, &r);
            let outcome = self.gate(&h, &r, sigma2);
            if outcome.is_accepted() {
                blocks.push((h, r));
            }
            outcomes.push(outcome);
        }
        self.stacked_update(blocks, sigma2)?;
        Ok(outcomes)
    }

    /// Trace of the current position covariance block.
    pub fn position_trace(&self) -> f64 {
        (3..6).map(|i| self.cov[(i, i)]).sum()
    }
}
