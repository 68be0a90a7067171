//! Frame-by-frame driver: IMU propagation, cloning, wheel updates, the line
//! front-end, motion consistency check and MSCKF visual updates.

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use nalgebra::{Matrix3, Vector2, Vector3};
use plviwo_core::estimator::{
    EstimatorState, FeatureOutcome, ImuSample, ImuState, LineFeature, Matrix15, NoiseParams, PointTrack,
};
use plviwo_core::geometry::{PinholeCamera, Pose3, Rotation3, Segment2D};
use plviwo_core::line_frontend::{
    compute_vanishing_points, process_frame, track_lines, DirectionClass, FrontendConfig, LineId, LineObservation,
    PointId, TrackedPoint,
};
use plviwo_core::mcc::{select_static_points, MccConfig, PredictedPoses};
use plviwo_core::triangulation::{
    refine_line, select_and_init, triangulate_point, LineObservationSet, LineTriangulationAux, LineView,
    RefinementConfig,
};
use plviwo_core::wheel::{preintegrate, slice_measurements, wheel_update, WheelIntrinsics, WheelMeasurement};
use plviwo_core::Error;

use crate::config::{Calibration, ConfigError, FilterConfig, PipelineFlags};
use crate::sim::world::SensorLog;

/// Validated calibration in core types.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub cam: PinholeCamera,
    pub width: f64,
    pub height: f64,
    pub t_ci: Pose3,
    pub t_wi: Pose3,
    pub wheel: WheelIntrinsics,
    pub noise: NoiseParams,
    pub filter: FilterConfig,
    pub frontend: FrontendConfig,
    pub camera_rate: f64,
    pub initial_t: f64,
    pub initial: ImuState,
}

impl Setup {
    pub fn from_calibration(c: &Calibration) -> Result<Self, ConfigError> {
        c.filter.validate()?;
        if !(c.camera_rate > 0.0) {
            return Err(ConfigError::Invalid("camera_rate must be positive".into()));
        }
        let [x, y, z, w] = c.initial.q_gi;
        let r_gi =
            Rotation3::from_quaternion(w, x, y, z).map_err(|e| ConfigError::Invalid(format!("initial.q_gi: {e}")))?;
        let initial = ImuState {
            r_ig: r_gi.inverse(),
            p: Vector3::from(c.initial.p),
            v: Vector3::from(c.initial.v),
            bg: Vector3::from(c.initial.bg),
            ba: Vector3::from(c.initial.ba),
        };
        if !initial.is_finite() || !c.initial.t.is_finite() {
            return Err(ConfigError::Invalid("initial state must be finite".into()));
        }
        Ok(Self {
            cam: c.camera.pinhole()?,
            width: c.camera.width,
            height: c.camera.height,
            t_ci: c.t_ci.pose("t_ci")?,
            t_wi: c.t_wi.pose("t_wi")?,
            wheel: c.wheel.intrinsics()?,
            noise: c.noise.params()?,
            filter: c.filter,
            frontend: FrontendConfig::default(),
            camera_rate: c.camera_rate,
            initial_t: c.initial.t,
            initial,
        })
    }

    fn initial_cov(&self) -> Matrix15 {
        let f = &self.filter;
        let mut p = Matrix15::zeros();
        for (block, s) in [
            (0, f.init_sigma_theta),
            (3, f.init_sigma_p),
            (6, f.init_sigma_v),
            (9, f.init_sigma_bg),
            (12, f.init_sigma_ba),
        ] {
            for i in 0..3 {
                p[(block + i, block + i)] = s * s;
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub r_gi: Rotation3,
    pub p: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UpdateStats {
    pub accepted: usize,
    pub gated: usize,
    pub too_few: usize,
    pub failed: usize,
}

impl UpdateStats {
    fn record(&mut self, outcomes: &[FeatureOutcome]) {
        for o in outcomes {
            match o {
                FeatureOutcome::Accepted => self.accepted += 1,
                FeatureOutcome::GateRejected { .. } => self.gated += 1,
                FeatureOutcome::TooFewObservations => self.too_few += 1,
                FeatureOutcome::Triangulation(_) => self.failed += 1,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub points: UpdateStats,
    pub lines: UpdateStats,
    pub wheel_updates: usize,
    pub mcc_rejected: usize,
    /// Ids of point tracks rejected by the motion consistency check.
    pub mcc_rejected_ids: BTreeSet<PointId>,
    pub line_inits: BTreeMap<&'static str, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: Vec<TrajectoryPoint>,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq)]
struct LineTrackObs {
    t: f64,
    seg: Segment2D,
    class: DirectionClass,
    points: Vec<PointId>,
}

/// IMU readings covering `[t0, t1]` with interpolated boundary samples.
pub fn imu_segment(imu: &[ImuSample], t0: f64, t1: f64) -> Vec<ImuSample> {
    let at = |t: f64| -> Option<ImuSample> {
        let idx = imu.iter().position(|s| s.t >= t)?;
        let b = imu[idx];
        if b.t == t || idx == 0 {
            return Some(ImuSample::new(t, b.w, b.a));
        }
        let a = imu[idx - 1];
        let s = (t - a.t) / (b.t - a.t);
        Some(ImuSample::new(t, a.w + (b.w - a.w) * s, a.a + (b.a - a.a) * s))
    };
    let mut out = Vec::new();
    let Some(first) = at(t0) else { return out };
    out.push(first);
    out.extend(imu.iter().filter(|s| s.t > t0 && s.t < t1).copied());
    match at(t1) {
        Some(last) => out.push(last),
        None => {
            if let Some(last) = imu.last() {
                out.push(ImuSample::new(t1, last.w, last.a));
            }
        }
    }
    out
}

/// Sparse-flow tracker for line samples: a sample moves with the nearest
/// point that is tracked into the current frame.
pub fn flow_tracker<'a>(
    prev: &'a [TrackedPoint],
    cur: &'a BTreeMap<PointId, Vector2<f64>>,
    radius: f64,
) -> impl FnMut(&Vector2<f64>) -> Option<Vector2<f64>> + 'a {
    move |s: &Vector2<f64>| {
        let mut best: Option<(f64, Vector2<f64>)> = None;
        for p in prev {
            let Some(c) = cur.get(&p.id) else { continue };
            let d = (p.uv - s).norm();
            if d < radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c - p.uv));
            }
        }
        best.map(|(_, flow)| s + flow)
    }
}

fn majority_class(obs: &[LineTrackObs]) -> DirectionClass {
    let mut counts = [0usize; 3];
    for o in obs {
        if let Some(a) = o.class.axis() {
            counts[a] += 1;
        }
    }
    let (axis, n) = counts
        .iter()
        .enumerate()
        .max_by_key(|(i, c)| (**c, usize::MAX - i))
        .expect("3 axes");
    if *n * 2 > obs.len() {
        DirectionClass::from_axis(axis)
    } else {
        DirectionClass::None
    }
}

struct Pipeline<'a> {
    setup: &'a Setup,
    flags: PipelineFlags,
    est: EstimatorState,
    twin: Option<EstimatorState>,
    points: BTreeMap<PointId, Vec<(f64, Vector2<f64>)>>,
    lines: BTreeMap<LineId, Vec<LineTrackObs>>,
    prev_lines: Vec<LineObservation>,
    prev_points: Vec<TrackedPoint>,
    next_line_id: LineId,
    stats: RunStats,
}

impl<'a> Pipeline<'a> {
    fn new(setup: &'a Setup, flags: PipelineFlags) -> Result<Self, Error> {
        let mut est = EstimatorState::new(
            setup.initial_t,
            setup.initial,
            &setup.initial_cov(),
            setup.noise,
            setup.filter.window,
        )?;
        est.chi2_prob = setup.filter.chi2_prob;
        est.chi2_multiplier = setup.filter.chi2_multiplier;
        est.min_point_obs = setup.filter.min_point_obs;
        let twin = flags.mcc.then(|| est.clone());
        Ok(Self {
            setup,
            flags,
            est,
            twin,
            points: BTreeMap::new(),
            lines: BTreeMap::new(),
            prev_lines: Vec::new(),
            prev_points: Vec::new(),
            next_line_id: 1,
            stats: RunStats::default(),
        })
    }

    fn filters(&mut self) -> impl Iterator<Item = &mut EstimatorState> {
        std::iter::once(&mut self.est).chain(self.twin.as_mut())
    }

    fn point_track(&self, id: PointId) -> Option<PointTrack> {
        let obs = self.points.get(&id)?;
        Some(PointTrack { id, obs: obs.clone() })
    }

    fn point_updates(&mut self, ids: &[PointId]) -> Result<(), Error> {
        if !self.flags.points || ids.is_empty() {
            return Ok(());
        }
        let min_obs = self.setup.filter.min_point_obs;
        let mut tracks: Vec<PointTrack> = ids
            .iter()
            .filter_map(|id| self.point_track(*id))
            .filter(|t| t.obs.len() >= min_obs)
            .collect();
        if tracks.is_empty() {
            return Ok(());
        }
        if let Some(twin) = &self.twin {
            let poses = PredictedPoses::new(
                twin.clones
                    .iter()
                    .map(|c| (c.t, c.camera_pose(&self.setup.t_ci)))
                    .collect(),
            )?;
            let cfg = MccConfig {
                max_count: self.setup.filter.mcc_max_count,
                threshold_px: self.setup.filter.mcc_threshold_px,
            };
            let keep: BTreeSet<usize> = select_static_points(&tracks, &poses, &self.setup.cam, &cfg)
                .into_iter()
                .collect();
            for (i, t) in tracks.iter().enumerate() {
                if !keep.contains(&i) {
                    self.stats.mcc_rejected += 1;
                    self.stats.mcc_rejected_ids.insert(t.id);
                }
            }
            tracks = tracks
                .into_iter()
                .enumerate()
                .filter(|(i, _)| keep.contains(i))
                .map(|(_, t)| t)
                .collect();
        }
        let outcomes = self.est.point_update(&tracks, &self.setup.cam, &self.setup.t_ci)?;
        self.stats.points.record(&outcomes);
        Ok(())
    }

    /// Initial guess and refinement of one line track over the clone window.
    fn build_line(&mut self, id: LineId, obs: &[LineTrackObs]) -> Option<LineFeature> {
        let views: Vec<LineView> = obs
            .iter()
            .filter_map(|o| {
                let i = self.est.clones.find(o.t)?;
                Some(LineView::mono(
                    self.est.clones.get(i)?.camera_pose(&self.setup.t_ci),
                    o.seg,
                ))
            })
            .collect();
        if views.len() < 3 || views.len() != obs.len() {
            return None;
        }
        let set = LineObservationSet::mono(views);
        let ids: BTreeSet<PointId> = obs.iter().flat_map(|o| o.points.iter().copied()).collect();
        let mut points_on_line = Vec::new();
        for pid in ids {
            let Some(track) = self.points.get(&pid) else { continue };
            let pobs: Vec<(Pose3, Vector2<f64>)> = track
                .iter()
                .filter_map(|(t, uv)| {
                    let i = self.est.clones.find(*t)?;
                    Some((self.est.clones.get(i)?.camera_pose(&self.setup.t_ci), *uv))
                })
                .collect();
            if pobs.len() >= 2 {
                if let Ok(p) = triangulate_point(&pobs, &self.setup.cam) {
                    points_on_line.push(p);
                }
            }
        }
        let known_direction = majority_class(obs).axis().map(|a| {
            let mut d = Vector3::zeros();
            d[a] = 1.0;
            d
        });
        let aux = LineTriangulationAux {
            points_on_line,
            known_direction,
        };
        let (init, strategy) = match select_and_init(&aux, &set, &self.setup.cam) {
            Ok(v) => v,
            Err(e) => {
                debug!("line {id}: no initial guess ({e})");
                self.stats.lines.failed += 1;
                return None;
            }
        };
        *self.stats.line_inits.entry(strategy.name()).or_default() += 1;
        let cfg = RefinementConfig {
            max_iters: self.setup.filter.refine_iters,
            ..RefinementConfig::default()
        };
        match refine_line(&init, &set, &aux, &self.setup.cam, &cfg) {
            Ok((line, _)) => Some(LineFeature {
                id,
                line,
                obs: obs.iter().map(|o| (o.t, o.seg)).collect(),
            }),
            Err(e) => {
                debug!("line {id}: refinement failed ({e})");
                self.stats.lines.failed += 1;
                None
            }
        }
    }

    fn line_updates(&mut self, ids: &[LineId]) -> Result<(), Error> {
        if !self.flags.lines || ids.is_empty() {
            return Ok(());
        }
        let mut features = Vec::new();
        for id in ids {
            let Some(obs) = self.lines.get(id).cloned() else {
                continue;
            };
            if obs.len() < 3 {
                continue;
            }
            if let Some(f) = self.build_line(*id, &obs) {
                features.push(f);
            }
        }
        let outcomes = self.est.line_update(&features, &self.setup.cam, &self.setup.t_ci)?;
        self.stats.lines.record(&outcomes);
        Ok(())
    }

    /// Uses and drops every feature seen by the oldest clone, then removes it.
    fn marginalize(&mut self) -> Result<(), Error> {
        let Some(oldest) = self.est.clones.oldest().map(|c| c.t) else {
            return Ok(());
        };
        let pids: Vec<PointId> = self
            .points
            .iter()
            .filter(|(_, o)| o.iter().any(|(t, _)| *t == oldest))
            .map(|(id, _)| *id)
            .collect();
        let lids: Vec<LineId> = self
            .lines
            .iter()
            .filter(|(_, o)| o.iter().any(|x| x.t == oldest))
            .map(|(id, _)| *id)
            .collect();
        self.line_updates(&lids)?;
        self.point_updates(&pids)?;
        for id in lids {
            self.lines.remove(&id);
        }
        for id in pids {
            self.points.remove(&id);
        }
        for f in self.filters() {
            f.marginalize_oldest()?;
        }
        Ok(())
    }

    fn wheel_step(&mut self, wheel: &[WheelMeasurement], t0: f64, t1: f64) -> Result<(), Error> {
        let ms = slice_measurements(wheel, t0, t1);
        if ms.len() < 2 {
            return Ok(());
        }
        let pre = preintegrate(&ms, &self.setup.wheel, &self.setup.noise)?;
        let t_wi = self.setup.t_wi;
        for f in self.filters() {
            wheel_update(f, &pre, &t_wi)?;
        }
        self.stats.wheel_updates += 1;
        Ok(())
    }

    fn frontend(&mut self, t: f64, points: &[TrackedPoint], segments: &[Segment2D]) -> Vec<LineId> {
        for p in points {
            self.points.entry(p.id).or_default().push((t, p.uv));
        }
        if !self.flags.lines {
            self.prev_points = points.to_vec();
            return Vec::new();
        }
        let r_cg: Matrix3<f64> = self.setup.t_ci.rotation.matrix() * self.est.imu.r_ig.matrix();
        let vps = compute_vanishing_points(&self.setup.cam, &Rotation3::from_matrix(&r_cg));
        let mut cur = process_frame(segments, points, &vps, &self.setup.frontend);
        let cur_pts: BTreeMap<PointId, Vector2<f64>> = points.iter().map(|p| (p.id, p.uv)).collect();
        let matches_pts: BTreeMap<PointId, PointId> = self
            .prev_points
            .iter()
            .filter(|p| cur_pts.contains_key(&p.id))
            .map(|p| (p.id, p.id))
            .collect();
        let tracker = flow_tracker(&self.prev_points, &cur_pts, 40.0);
        let matches = track_lines(&self.prev_lines, &cur, &matches_pts, tracker, &self.setup.frontend);
        for m in &matches {
            cur[m.cur].line_id = self.prev_lines[m.prev].line_id;
        }
        for l in cur.iter_mut().filter(|l| l.line_id == 0) {
            l.line_id = self.next_line_id;
            self.next_line_id += 1;
        }
        for l in &cur {
            self.lines.entry(l.line_id).or_default().push(LineTrackObs {
                t,
                seg: l.seg,
                class: l.dir_class,
                points: l.assigned_point_ids.clone(),
            });
        }
        let seen: BTreeSet<LineId> = cur.iter().map(|l| l.line_id).collect();
        self.prev_lines = cur;
        self.prev_points = points.to_vec();
        self.lines.keys().filter(|id| !seen.contains(id)).copied().collect()
    }
}

/// Runs the estimator over `log` with the selected components.
pub fn run_viwo(log: &SensorLog, setup: &Setup, flags: PipelineFlags) -> Result<RunOutput, Error> {
    let mut pl = Pipeline::new(setup, flags)?;
    let use_wheel = flags.wheel && !log.wheel.is_empty();
    if flags.wheel && log.wheel.is_empty() {
        warn!("no wheel measurements; running without wheel updates");
    }
    let mut trajectory = Vec::with_capacity(log.frames.len());
    let mut last_clone_t: Option<f64> = None;
    for frame in &log.frames {
        if frame.t < setup.initial_t - 1e-9 {
            continue;
        }
        if frame.t > pl.est.t {
            let seg = imu_segment(&log.imu, pl.est.t, frame.t);
            for f in pl.filters() {
                f.propagate(&seg)?;
            }
        }
        if pl.est.clones.is_full() {
            pl.marginalize()?;
        }
        let is_new = last_clone_t.is_none_or(|t| frame.t > t + 1e-6);
        if is_new {
            for f in pl.filters() {
                f.augment_clone()?;
            }
            if let (true, Some(t0)) = (use_wheel, last_clone_t) {
                pl.wheel_step(&log.wheel, t0, frame.t)?;
            }
            last_clone_t = Some(frame.t);
        }
        let lost_lines = pl.frontend(frame.t, &frame.points, &frame.segments);
        let seen: BTreeSet<PointId> = frame.points.iter().map(|p| p.id).collect();
        let lost_points: Vec<PointId> = pl.points.keys().filter(|id| !seen.contains(id)).copied().collect();
        pl.line_updates(&lost_lines)?;
        pl.point_updates(&lost_points)?;
        for id in lost_lines {
            pl.lines.remove(&id);
        }
        for id in lost_points {
            pl.points.remove(&id);
        }
        trajectory.push(TrajectoryPoint {
            t: frame.t,
            r_gi: pl.est.imu.r_ig.inverse(),
            p: pl.est.imu.p,
        });
    }
    Ok(RunOutput {
        trajectory,
        stats: pl.stats,
    })
}
