//! Planar-drive world: analytic ground truth, IMU and wheel streams, point
//! tracks and line segments seen by a forward-looking camera.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use plviwo_core::estimator::{ImuSample, NoiseParams};
use plviwo_core::geometry::{Pose3, Rotation3, Segment2D};
use plviwo_core::line_frontend::{PointId, TrackedPoint};
use plviwo_core::math::skew;
use plviwo_core::wheel::WheelMeasurement;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::seeded_rng;
use crate::config::{
    default_t_ci, default_t_wi, Calibration, CameraConfig, ConfigError, FilterConfig, InitialState, NoiseConfig,
    PoseConfig, WheelConfig,
};

/// Frame `k` timestamp; shared by the simulator and the track-file reader.
pub fn frame_time(k: usize, rate: f64) -> f64 {
    k as f64 / rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MoverSpec {
    pub count: usize,
    pub points_per_mover: usize,
    /// Edge length of the cube the mover's points are drawn in (m).
    pub size: f64,
    /// Peak displacement of the back-and-forth motion (m).
    pub amplitude: f64,
    pub frequency: f64,
    /// Distance from the wall the mover travels along (m).
    pub wall_offset: f64,
}

impl Default for MoverSpec {
    fn default() -> Self {
        Self {
            count: 0,
            points_per_mover: 15,
            size: 1.0,
            amplitude: 1.5,
            frequency: 0.15,
            wall_offset: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSpec {
    pub duration: f64,
    pub imu_rate: f64,
    pub wheel_rate: f64,
    pub camera_rate: f64,
    /// Ellipse semi-axes of the wheel-frame path (m).
    pub semi_axes: [f64; 2],
    /// Rate of the ellipse parameter (rad/s).
    pub angular_rate: f64,
    /// Clearance between the ellipse's bounding box and the room walls (m).
    pub wall_margin: f64,
    pub wall_height: f64,
    pub num_points: usize,
    pub vertical_line_spacing: f64,
    pub horizontal_line_heights: Vec<f64>,
    pub horizontal_line_length: f64,
    pub points_per_line: usize,
    /// Probability that a visible segment is reported as two fragments.
    pub fragment_prob: f64,
    pub max_range: f64,
    pub near_clip: f64,
    pub movers: MoverSpec,
    pub camera: CameraConfig,
    pub t_ci: PoseConfig,
    pub t_wi: PoseConfig,
    pub wheel: WheelConfig,
    pub noise: NoiseConfig,
    /// Disables all measurement noise and bias drift.
    pub noiseless: bool,
    pub filter: FilterConfig,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            duration: 10.0,
            imu_rate: 100.0,
            wheel_rate: 100.0,
            camera_rate: 10.0,
            semi_axes: [6.0, 4.0],
            angular_rate: 0.2,
            wall_margin: 3.0,
            wall_height: 4.0,
            num_points: 300,
            vertical_line_spacing: 1.5,
            horizontal_line_heights: vec![1.2, 2.8],
            horizontal_line_length: 2.5,
            points_per_line: 3,
            fragment_prob: 0.1,
            max_range: 20.0,
            near_clip: 0.3,
            movers: MoverSpec::default(),
            camera: CameraConfig::default(),
            t_ci: default_t_ci(),
            t_wi: default_t_wi(),
            wheel: WheelConfig::default(),
            noise: NoiseConfig::default(),
            noiseless: false,
            filter: FilterConfig::default(),
            seed: 0,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(format!("world: {m}")));
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be non-negative");
        }
        if !(self.imu_rate > 0.0 && self.wheel_rate > 0.0 && self.camera_rate > 0.0) {
            return bad("rates must be positive");
        }
        if !(self.semi_axes[0] > 0.0 && self.semi_axes[1] > 0.0) || !(self.angular_rate >= 0.0) {
            return bad("semi_axes must be positive and angular_rate non-negative");
        }
        if !(self.wall_margin > 1.0 && self.wall_height > 0.5) {
            return bad("wall_margin must exceed 1 m and wall_height 0.5 m");
        }
        if !(self.vertical_line_spacing > 0.0 && self.horizontal_line_length > 0.0) {
            return bad("line spacing and length must be positive");
        }
        if !(0.0..=1.0).contains(&self.fragment_prob) {
            return bad("fragment_prob must be in [0, 1]");
        }
        if !(self.max_range > self.near_clip && self.near_clip > 0.0) {
            return bad("need 0 < near_clip < max_range");
        }
        if self.movers.count > 0 && !(self.movers.size > 0.0 && self.movers.frequency >= 0.0) {
            return bad("movers need positive size");
        }
        self.camera.pinhole()?;
        self.t_ci.pose("t_ci")?;
        self.t_wi.pose("t_wi")?;
        self.wheel.intrinsics()?;
        self.noise.params()?;
        self.filter.validate()
    }
}

/// Analytic planar drive. The wheel frame moves on an ellipse with its x axis
/// along the velocity; the IMU is rigidly attached through `t_wi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trajectory {
    pub a: f64,
    pub b: f64,
    pub omega: f64,
    /// Maps IMU points into the wheel frame.
    pub t_wi: Pose3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelKinematics {
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuTruth {
    pub t: f64,
    pub r_gi: Rotation3,
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Angular rate in the IMU frame.
    pub w: Vector3<f64>,
    /// Specific force in the IMU frame.
    pub f: Vector3<f64>,
}

impl Trajectory {
    pub fn wheel(&self, t: f64) -> WheelKinematics {
        let (a, b, w) = (self.a, self.b, self.omega);
        let (s, c) = (w * t).sin_cos();
        let d = a * a * s * s + b * b * c * c;
        let dd = 2.0 * w * s * c * (a * a - b * b);
        WheelKinematics {
            yaw: (b * c).atan2(-a * s),
            yaw_rate: a * b * w / d,
            yaw_accel: -a * b * w * dd / (d * d),
            p: Vector3::new(a * c, b * s, 0.0),
            v: Vector3::new(-a * w * s, b * w * c, 0.0),
            a: Vector3::new(-a * w * w * c, -b * w * w * s, 0.0),
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.wheel(t).v.norm()
    }

    pub fn imu(&self, t: f64, gravity: &Vector3<f64>) -> ImuTruth {
        let k = self.wheel(t);
        let r_gw = Rotation3::rotation_z(k.yaw);
        let r_wi = self.t_wi.rotation;
        let r_gi = r_gw * r_wi;
        let lever = r_gw * self.t_wi.translation;
        let om = Vector3::new(0.0, 0.0, k.yaw_rate);
        let al = Vector3::new(0.0, 0.0, k.yaw_accel);
        let v = k.v + om.cross(&lever);
        let acc = k.a + (skew(&al) + skew(&om) * skew(&om)) * lever;
        let r_ig = r_gi.inverse();
        ImuTruth {
            t,
            r_gi,
            p: k.p + lever,
            v,
            w: r_ig * om,
            f: r_ig * (acc + gravity),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineLandmark {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    /// World axis of the line direction.
    pub axis: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mover {
    pub center: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

impl Mover {
    pub fn offset(&self, t: f64) -> Vector3<f64> {
        self.direction * self.amplitude * (2.0 * std::f64::consts::PI * self.frequency * t + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Landmarks {
    pub points: Vec<Vector3<f64>>,
    pub lines: Vec<LineLandmark>,
    pub movers: Vec<Mover>,
    /// `(mover index, offset from its center)` of every dynamic point.
    pub dynamic_points: Vec<(usize, Vector3<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub index: usize,
    pub t: f64,
    pub points: Vec<TrackedPoint>,
    pub segments: Vec<Segment2D>,
}

/// Inputs consumed by the estimator pipeline.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLog {
    pub imu: Vec<ImuSample>,
    pub wheel: Vec<WheelMeasurement>,
    pub frames: Vec<FrameData>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// IMU states at frame times.
    pub frames: Vec<ImuTruth>,
    /// Generating line of every emitted segment, per frame.
    pub segment_lines: Vec<Vec<usize>>,
    pub dynamic_tracks: std::collections::BTreeSet<PointId>,
    pub landmarks: Landmarks,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub log: SensorLog,
    pub truth: GroundTruth,
    pub calibration: Calibration,
}

fn room(spec: &WorldSpec) -> (f64, f64) {
    (
        spec.semi_axes[0] + spec.wall_margin,
        spec.semi_axes[1] + spec.wall_margin,
    )
}

/// Point on the wall perimeter at arc length `s`, with the inward normal and
/// the wall's axis.
fn wall_point(s: f64, lx: f64, ly: f64) -> (Vector3<f64>, Vector3<f64>, usize) {
    let (w, h) = (2.0 * lx, 2.0 * ly);
    let s = s.rem_euclid(2.0 * (w + h));
    if s < w {
        (Vector3::new(-lx + s, -ly, 0.0), Vector3::y(), 0)
    } else if s < w + h {
        (Vector3::new(lx, -ly + (s - w), 0.0), -Vector3::x(), 1)
    } else if s < 2.0 * w + h {
        (Vector3::new(lx - (s - w - h), ly, 0.0), -Vector3::y(), 0)
    } else {
        (Vector3::new(-lx, ly - (s - 2.0 * w - h), 0.0), Vector3::x(), 1)
    }
}

pub fn generate_landmarks(spec: &WorldSpec) -> Landmarks {
    let mut rng = seeded_rng(spec.seed, &[1]);
    let (lx, ly) = room(spec);
    let perimeter = 4.0 * (lx + ly);
    let mut points = Vec::new();
    for _ in 0..spec.num_points {
        let (p, _, _) = wall_point(rng.random_range(0.0..perimeter), lx, ly);
        points.push(p + Vector3::new(0.0, 0.0, rng.random_range(0.0..spec.wall_height)));
    }
    let mut lines = Vec::new();
    let n_vert = (perimeter / spec.vertical_line_spacing).floor() as usize;
    for i in 0..n_vert {
        let s = (i as f64 + 0.5) * spec.vertical_line_spacing;
        let (base, _, _) = wall_point(s, lx, ly);
        let z0 = rng.random_range(0.1..0.6);
        let z1 = spec.wall_height - rng.random_range(0.1..0.6);
        lines.push(LineLandmark {
            a: base + Vector3::new(0.0, 0.0, z0),
            b: base + Vector3::new(0.0, 0.0, z1),
            axis: 2,
        });
    }
    for &z in &spec.horizontal_line_heights {
        // segments centred between vertical lines, away from corners
        let step = 2.0 * spec.vertical_line_spacing;
        let n = (perimeter / step).floor() as usize;
        for i in 0..n {
            let s_mid = (i as f64 + 0.5) * step + 0.5 * spec.vertical_line_spacing;
            let half = 0.5 * spec.horizontal_line_length.min(step - 0.4);
            let (pa, _, axis_a) = wall_point(s_mid - half, lx, ly);
            let (pb, _, axis_b) = wall_point(s_mid + half, lx, ly);
            if axis_a != axis_b || (pb - pa).norm() < 0.99 * 2.0 * half {
                continue;
            }
            lines.push(LineLandmark {
                a: pa + Vector3::new(0.0, 0.0, z),
                b: pb + Vector3::new(0.0, 0.0, z),
                axis: axis_a,
            });
        }
    }
    for l in &lines {
        for _ in 0..spec.points_per_line {
            let s: f64 = rng.random_range(0.05..0.95);
            points.push(l.a + s * (l.b - l.a));
        }
    }
    let mut movers = Vec::new();
    let mut dynamic_points = Vec::new();
    for m in 0..spec.movers.count {
        let (p, normal, axis) = wall_point(rng.random_range(0.0..perimeter), lx, ly);
        let mut direction = Vector3::zeros();
        direction[axis] = 1.0;
        movers.push(Mover {
            center: p + normal * spec.movers.wall_offset + Vector3::new(0.0, 0.0, 0.5 * spec.movers.size + 0.2),
            direction,
            amplitude: spec.movers.amplitude,
            frequency: spec.movers.frequency,
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        });
        let h = 0.5 * spec.movers.size;
        for _ in 0..spec.movers.points_per_mover {
            dynamic_points.push((
                m,
                Vector3::new(
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                    rng.random_range(-h..h),
                ),
            ));
        }
    }
    Landmarks {
        points,
        lines,
        movers,
        dynamic_points,
    }
}

fn normal3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::new(
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
        sigma * rng.sample::<f64, _>(StandardNormal),
    )
}

fn normal2(rng: &mut ChaCha8Rng, sigma: f64) -> Vector2<f64> {
    let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
    Vector2::new(sigma * a, sigma * b)
}

/// Clips `p + s (q - p)`, `s ∈ [0, 1]`, to the rectangle `[0, w] × [0, h]`.
pub fn clip_to_image(p: &Vector2<f64>, q: &Vector2<f64>, w: f64, h: f64) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let d = q - p;
    let (mut s0, mut s1) = (0.0_f64, 1.0_f64);
    for (pk, qk) in [(-d.x, p.x), (d.x, w - p.x), (-d.y, p.y), (d.y, h - p.y)] {
        if pk == 0.0 {
            if qk < 0.0 {
                return None;
            }
            continue;
        }
        let r = qk / pk;
        if pk < 0.0 {
            s0 = s0.max(r);
        } else {
            s1 = s1.min(r);
        }
        if s0 > s1 {
            return None;
        }
    }
    Some((p + s0 * d, p + s1 * d))
}

struct Projector<'a> {
    spec: &'a WorldSpec,
    cam: plviwo_core::geometry::PinholeCamera,
}

impl Projector<'_> {
    fn point(&self, pose_cg: &Pose3, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        let pc = pose_cg.transform_point(p);
        if pc.z < self.spec.near_clip || pc.norm() > self.spec.max_range {
            return None;
        }
        let uv = self.cam.project(&pc).ok()?;
        let c = &self.spec.camera;
        (uv.x >= 0.0 && uv.x <= c.width && uv.y >= 0.0 && uv.y <= c.height).then_some(uv)
    }

    fn segment(&self, pose_cg: &Pose3, l: &LineLandmark) -> Option<(Vector2<f64>, Vector2<f64>)> {
        let mut a = pose_cg.transform_point(&l.a);
        let mut b = pose_cg.transform_point(&l.b);
        let near = self.spec.near_clip;
        if a.z < near && b.z < near {
            return None;
        }
        if a.z < near {
            a += (b - a) * ((near - a.z) / (b.z - a.z));
        } else if b.z < near {
            b += (a - b) * ((near - b.z) / (a.z - b.z));
        }
        if (0.5 * (a + b)).norm() > self.spec.max_range {
            return None;
        }
        let pa = self.cam.project(&a).ok()?;
        let pb = self.cam.project(&b).ok()?;
        let (pa, pb) = clip_to_image(&pa, &pb, self.spec.camera.width, self.spec.camera.height)?;
        ((pb - pa).norm() >= 10.0).then_some((pa, pb))
    }
}

pub fn trajectory(spec: &WorldSpec) -> Result<Trajectory, ConfigError> {
    Ok(Trajectory {
        a: spec.semi_axes[0],
        b: spec.semi_axes[1],
        omega: spec.angular_rate,
        t_wi: spec.t_wi.pose("t_wi")?,
    })
}

pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, 9.81);

/// Synthesizes every sensor stream and the matching ground truth.
pub fn simulate_world(spec: &WorldSpec) -> Result<SimOutput, ConfigError> {
    spec.validate()?;
    let traj = trajectory(spec)?;
    let t_ci = spec.t_ci.pose("t_ci")?;
    let kw = spec.wheel.intrinsics()?;
    let noise: NoiseParams = spec.noise.params()?;
    let cam = spec.camera.pinhole()?;
    let landmarks = generate_landmarks(spec);
    let mut rng = seeded_rng(spec.seed, &[2]);
    let noisy = !spec.noiseless;

    let n_imu = (spec.duration * spec.imu_rate + 1e-9).floor() as usize;
    let mut imu = Vec::with_capacity(n_imu + 1);
    let mut bg = Vector3::zeros();
    let mut ba = Vector3::zeros();
    let dt_imu = 1.0 / spec.imu_rate;
    for k in 0..=n_imu {
        let t = k as f64 / spec.imu_rate;
        let s = traj.imu(t, &GRAVITY);
        let (mut w, mut f) = (s.w, s.f);
        if noisy {
            w += bg + normal3(&mut rng, noise.sigma_g / dt_imu.sqrt());
            f += ba + normal3(&mut rng, noise.sigma_a / dt_imu.sqrt());
            bg += normal3(&mut rng, noise.sigma_bg * dt_imu.sqrt());
            ba += normal3(&mut rng, noise.sigma_ba * dt_imu.sqrt());
        }
        imu.push(ImuSample::new(t, w, f));
    }

    let n_wheel = (spec.duration * spec.wheel_rate + 1e-9).floor() as usize;
    let mut wheel = Vec::with_capacity(n_wheel + 1);
    for k in 0..=n_wheel {
        let t = k as f64 / spec.wheel_rate;
        let kin = traj.wheel(t);
        let v = kin.v.norm();
        let mut wl = (v - 0.5 * kin.yaw_rate * kw.b) / kw.r_l;
        let mut wr = (v + 0.5 * kin.yaw_rate * kw.b) / kw.r_r;
        if noisy {
            wl += noise.sigma_w * rng.sample::<f64, _>(StandardNormal);
            wr += noise.sigma_w * rng.sample::<f64, _>(StandardNormal);
        }
        wheel.push(WheelMeasurement::new(t, wl, wr));
    }

    let proj = Projector { spec, cam };
    let n_frames = (spec.duration * spec.camera_rate + 1e-9).floor() as usize + 1;
    let n_static = landmarks.points.len();
    let mut next_id: PointId = 1;
    let mut active: BTreeMap<usize, PointId> = BTreeMap::new();
    let mut dynamic_tracks = std::collections::BTreeSet::new();
    let mut frames = Vec::with_capacity(n_frames);
    let mut truth_frames = Vec::with_capacity(n_frames);
    let mut segment_lines = Vec::with_capacity(n_frames);
    for k in 0..n_frames {
        let t = frame_time(k, spec.camera_rate);
        let s = traj.imu(t, &GRAVITY);
        let pose_ig = Pose3::new(s.r_gi.inverse(), -(s.r_gi.inverse() * s.p));
        let pose_cg = t_ci.compose(&pose_ig);
        let mut pts = Vec::new();
        let mut seen = BTreeMap::new();
        let world_point = |i: usize| -> Vector3<f64> {
            if i < n_static {
                landmarks.points[i]
            } else {
                let (m, off) = landmarks.dynamic_points[i - n_static];
                let mv = &landmarks.movers[m];
                mv.center + off + mv.offset(t)
            }
        };
        for i in 0..n_static + landmarks.dynamic_points.len() {
            let Some(uv) = proj.point(&pose_cg, &world_point(i)) else {
                continue;
            };
            let id = *active.get(&i).unwrap_or(&next_id);
            if id == next_id {
                next_id += 1;
            }
            if i >= n_static {
                dynamic_tracks.insert(id);
            }
            seen.insert(i, id);
            let uv = if noisy {
                uv + normal2(&mut rng, noise.sigma_px)
            } else {
                uv
            };
            pts.push(TrackedPoint { id, uv });
        }
        active = seen;

        let mut segs = Vec::new();
        let mut labels = Vec::new();
        for (li, l) in landmarks.lines.iter().enumerate() {
            let Some((pa, pb)) = proj.segment(&pose_cg, l) else {
                continue;
            };
            let (pa, pb) = if noisy {
                (
                    pa + normal2(&mut rng, noise.sigma_l),
                    pb + normal2(&mut rng, noise.sigma_l),
                )
            } else {
                (pa, pb)
            };
            let frag = spec.fragment_prob > 0.0 && rng.random_bool(spec.fragment_prob);
            let pieces = if frag {
                let cut: f64 = rng.random_range(0.3..0.7);
                let len = (pb - pa).norm();
                let gap = (4.0 / len).min(0.05);
                vec![(pa, pa + (cut - gap) * (pb - pa)), (pa + (cut + gap) * (pb - pa), pb)]
            } else {
                vec![(pa, pb)]
            };
            for (a, b) in pieces {
                if let Ok(seg) = Segment2D::new(a, b) {
                    segs.push(seg);
                    labels.push(li);
                }
            }
        }
        frames.push(FrameData {
            index: k,
            t,
            points: pts,
            segments: segs,
        });
        segment_lines.push(labels);
        truth_frames.push(s);
    }

    let first = traj.imu(0.0, &GRAVITY);
    let q = first.r_gi.quaternion();
    let calibration = Calibration {
        camera: spec.camera,
        t_ci: spec.t_ci,
        t_wi: spec.t_wi,
        wheel: spec.wheel,
        noise: spec.noise,
        filter: spec.filter,
        camera_rate: spec.camera_rate,
        initial: InitialState {
            t: 0.0,
            q_gi: [q.i, q.j, q.k, q.w],
            p: first.p.into(),
            v: first.v.into(),
            bg: [0.0; 3],
            ba: [0.0; 3],
        },
    };
    Ok(SimOutput {
        log: SensorLog { imu, wheel, frames },
        truth: GroundTruth {
            frames: truth_frames,
            segment_lines,
            dynamic_tracks,
            landmarks,
        },
        calibration,
    })
}

/// World→camera pose of a ground-truth IMU state.
pub fn camera_pose(s: &ImuTruth, t_ci: &Pose3) -> Pose3 {
    let r_ig = s.r_gi.inverse();
    t_ci.compose(&Pose3::new(r_ig, -(r_ig * s.p)))
}

/// Rotation taking world vectors into the camera frame.
pub fn r_cg(s: &ImuTruth, t_ci: &Pose3) -> Matrix3<f64> {
    t_ci.rotation.matrix() * s.r_gi.inverse().matrix()
}
