//! Differential-drive kinematics, SE(2)-constrained pre-integration and the
//! wheel update against a pair of clones.
//!
//! A pre-integrated measurement is laid out as
//! `(rot_x, rot_y, rot_z, t_x, t_y, t_z) = (0, 0, Δθ, Δx, Δy, 0)`: the pose of
//! the wheel frame at `t_end` expressed in the wheel frame at `t_start`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::estimator::{ClonePose, EstimatorState, NoiseParams};
use crate::geometry::Pose3;
use crate::math::{self, skew, so3_log, so3_right_jacobian_inv};

pub type Matrix6x12 = SMatrix<f64, 6, 12>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelMeasurement {
    pub t: f64,
    /// Left wheel angular rate (rad/s).
    pub w_ml: f64,
    /// Right wheel angular rate (rad/s).
    pub w_mr: f64,
}

impl WheelMeasurement {
    pub fn new(t: f64, w_ml: f64, w_mr: f64) -> Self {
        Self { t, w_ml, w_mr }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelIntrinsics {
    pub r_l: f64,
    pub r_r: f64,
    /// Baseline between the wheels (m).
    pub b: f64,
}

impl WheelIntrinsics {
    pub fn new(r_l: f64, r_r: f64, b: f64) -> Result<Self> {
        if [r_l, r_r, b].iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(Self { r_l, r_r, b })
        } else {
            Err(Error::InvalidInput("wheel radii and baseline must be positive"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelPreintegration {
    pub z: Vector6<f64>,
    pub cov: Matrix6<f64>,
    pub t_start: f64,
    pub t_end: f64,
}

impl WheelPreintegration {
    pub fn dtheta(&self) -> f64 {
        self.z[2]
    }

    /// `(Δθ, Δx, Δy)`.
    pub fn se2(&self) -> Vector3<f64> {
        Vector3::new(self.z[2], self.z[3], self.z[4])
    }
}

/// Linear and angular body rates of a differential drive.
pub fn body_rates(m: &WheelMeasurement, k: &WheelIntrinsics) -> (f64, f64) {
    let right = m.w_mr * k.r_r;
    let left = m.w_ml * k.r_l;
    (0.5 * (right + left), (right - left) / k.b)
}

/// `sin(x)/x`.
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        math::sin(x) / x
    }
}

/// One unicycle step at constant `(v, w)`; returns the new `(θ, x, y)`.
pub fn unicycle_step(state: &Vector3<f64>, v: f64, w: f64, dt: f64) -> Vector3<f64> {
    let half = 0.5 * w * dt;
    let chord = v * dt * sinc(half);
    let heading = state[0] + half;
    Vector3::new(
        state[0] + w * dt,
        state[1] + chord * math::cos(heading),
        state[2] + chord * math::sin(heading),
    )
}

/// SE(2) composition `a ⊕ b` of `(θ, x, y)` triples.
pub fn compose_se2(a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
    let (c, s) = (math::cos(a[0]), math::sin(a[0]));
    Vector3::new(a[0] + b[0], a[1] + c * b[1] - s * b[2], a[2] + s * b[1] + c * b[2])
}

/// Integrates wheel rates between the first and last sample. Consecutive
/// samples are averaged and each interval is an exact constant-rate arc.
pub fn preintegrate(ms: &[WheelMeasurement], k: &WheelIntrinsics, noise: &NoiseParams) -> Result<WheelPreintegration> {
    if ms.len() < 2 {
        return Err(Error::InvalidInput("need at least two wheel samples"));
    }
    if ms.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::NonMonotonicTime);
    }
    let mut x = Vector3::zeros();
    let mut p = Matrix3::zeros();
    let sw2 = noise.sigma_w * noise.sigma_w;
    // d(v, w)/d(ω_l, ω_r)
    let j_rates = nalgebra::Matrix2::new(0.5 * k.r_l, 0.5 * k.r_r, -k.r_l / k.b, k.r_r / k.b);
    for pair in ms.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let (v0, w0) = body_rates(&pair[0], k);
        let (v1, w1) = body_rates(&pair[1], k);
        let (v, w) = (0.5 * (v0 + v1), 0.5 * (w0 + w1));
        let heading = x[0] + 0.5 * w * dt;
        let chord = v * dt * sinc(0.5 * w * dt);
        let (c, s) = (math::cos(heading), math::sin(heading));
        let f = Matrix3::new(1.0, 0.0, 0.0, -chord * s, 1.0, 0.0, chord * c, 0.0, 1.0);
        let b = nalgebra::Matrix3x2::new(0.0, dt, dt * c, -0.5 * v * dt * dt * s, dt * s, 0.5 * v * dt * dt * c);
        let g = b * j_rates;
        p = f * p * f.transpose() + g * g.transpose() * sw2;
        x = unicycle_step(&x, v, w, dt);
    }
    let mut cov = Matrix6::zeros();
    cov.fixed_view_mut::<3, 3>(2, 2).copy_from(&p);
    let sp2 = noise.sigma_p * noise.sigma_p;
    for i in [0usize, 1, 5] {
        cov[(i, i)] = sp2;
    }
    Ok(WheelPreintegration {
        z: Vector6::new(0.0, 0.0, x[0], x[1], x[2], 0.0),
        cov: (cov + cov.transpose()) * 0.5,
        t_start: ms[0].t,
        t_end: ms[ms.len() - 1].t,
    })
}

/// Predicted wheel measurement between two clones. `t_wi` maps IMU-frame
/// points to the wheel frame.
pub fn predict_wheel(prev: &ClonePose, cur: &ClonePose, t_wi: &Pose3) -> Vector6<f64> {
    wheel_jacobians(prev, cur, t_wi).0
}

/// Prediction and its Jacobian with respect to
/// `[δθ_prev, δp_prev, δθ_cur, δp_cur]`.
pub fn wheel_jacobians(prev: &ClonePose, cur: &ClonePose, t_wi: &Pose3) -> (Vector6<f64>, Matrix6x12) {
    let r_wi = t_wi.rotation.matrix();
    let p_iw = -(r_wi.transpose() * t_wi.translation);
    let r1 = prev.r_ig.matrix();
    let rk = cur.r_ig.matrix();
    let m = r1 * rk.transpose();
    let dr = r_wi * m * r_wi.transpose();
    let phi = so3_log(&dr);
    let dp = cur.p - prev.p;
    let t = r_wi * (r1 * dp + m * p_iw - p_iw);

    let jr_inv = so3_right_jacobian_inv(&phi);
    let mut h = Matrix6x12::zeros();
    h.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(jr_inv * r_wi * m.transpose()));
    h.fixed_view_mut::<3, 3>(0, 6).copy_from(&(-jr_inv * r_wi));
    h.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(r_wi * (-skew(&(r1 * dp)) - skew(&(m * p_iw)))));
    h.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-r_wi * r1));
    h.fixed_view_mut::<3, 3>(3, 6).copy_from(&(r_wi * m * skew(&p_iw)));
    h.fixed_view_mut::<3, 3>(3, 9).copy_from(&(r_wi * r1));
    let mut z = Vector6::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&phi);
    z.fixed_rows_mut::<3>(3).copy_from(&t);
    (z, h)
}

/// Residual `z - ẑ` with the yaw slot wrapped.
pub fn wheel_residual(pre: &WheelPreintegration, predicted: &Vector6<f64>) -> Vector6<f64> {
    let mut r = pre.z - predicted;
    r[2] = math::wrap_angle(r[2]);
    r
}

/// EKF update from one pre-integrated wheel measurement.
pub fn wheel_update(state: &mut EstimatorState, pre: &WheelPreintegration, t_wi: &Pose3) -> Result<()> {
    let i0 = state.clones.find(pre.t_start).ok_or(Error::MissingClone)?;
    let i1 = state.clones.find(pre.t_end).ok_or(Error::MissingClone)?;
    let (prev, cur) = (
        *state.clones.get(i0).expect("clone"),
        *state.clones.get(i1).expect("clone"),
    );
    let (pred, hj) = wheel_jacobians(&prev, &cur, t_wi);
    let r = wheel_residual(pre, &pred);
    let mut h = DMatrix::zeros(6, state.dim());
    let k0 = EstimatorState::clone_index(i0);
    let k1 = EstimatorState::clone_index(i1);
    h.view_mut((0, k0), (6, 6)).copy_from(&hj.fixed_view::<6, 6>(0, 0));
    h.view_mut((0, k1), (6, 6)).copy_from(&hj.fixed_view::<6, 6>(0, 6));
    let rn = DMatrix::from_fn(6, 6, |i, j| pre.cov[(i, j)]);
    state.ekf_update(&h, &DVector::from_column_slice(r.as_slice()), &rn)
}

/// Samples in `[t0, t1]`, with the boundary readings linearly interpolated
/// when they fall between samples.
pub fn slice_measurements(ms: &[WheelMeasurement], t0: f64, t1: f64) -> Vec<WheelMeasurement> {
    let interp = |t: f64| -> Option<WheelMeasurement> {
        let idx = ms.iter().position(|m| m.t >= t)?;
        let b = ms[idx];
        if (b.t - t).abs() < 1e-12 || idx == 0 {
            return Some(WheelMeasurement::new(t, b.w_ml, b.w_mr));
        }
        let a = ms[idx - 1];
        let s = (t - a.t) / (b.t - a.t);
        Some(WheelMeasurement::new(
            t,
            a.w_ml + s * (b.w_ml - a.w_ml),
            a.w_mr + s * (b.w_mr - a.w_mr),
        ))
    };
    let mut out = Vec::new();
    if let Some(m) = interp(t0) {
        out.push(m);
    }
    out.extend(ms.iter().filter(|m| m.t > t0 + 1e-9 && m.t < t1 - 1e-9).copied());
    if let Some(m) = interp(t1) {
        out.push(m);
    }
    out
}
