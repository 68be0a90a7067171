//! Line-triangulation Monte Carlo scenarios and studies.

use nalgebra::{Matrix3, Vector2, Vector3};
use plviwo_core::geometry::{PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
use plviwo_core::line_frontend::DirectionClass;
use plviwo_core::triangulation::{
    init_line_planes, init_line_point_direction, init_line_two_points, refine_line, triangulate_point,
    LineObservationSet, LineTriangulationAux, LineView, RefinementConfig,
};
use plviwo_core::Error;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::seeded_rng;

/// Tunable scenario geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioGeometry {
    pub line_length: f64,
    pub line_height: f64,
    /// Distance from the camera path to the line for Scenarios 1, 2 and 4.
    pub line_depth: f64,
    /// Line depth for Scenario 3, whose cameras advance toward the line.
    pub approach_depth: f64,
    pub spacing: f64,
    pub num_cameras: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            line_length: 8.0,
            line_height: 2.0,
            line_depth: 9.0,
            approach_depth: 10.5,
            spacing: 0.5,
            num_cameras: 10,
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: u8,
    pub line: PluckerLine,
    pub endpoints: (Vector3<f64>, Vector3<f64>),
    /// World→camera poses.
    pub camera_poses: Vec<Pose3>,
    pub cam: PinholeCamera,
    pub width: f64,
    pub height: f64,
}

impl ScenarioSpec {
    pub fn point_at(&self, s: f64) -> Vector3<f64> {
        self.endpoints.0 + s * (self.endpoints.1 - self.endpoints.0)
    }

    pub fn direction(&self) -> Vector3<f64> {
        (self.endpoints.1 - self.endpoints.0).normalize()
    }

    pub fn visible(&self, p: &Vector3<f64>) -> bool {
        self.camera_poses
            .iter()
            .all(|pose| match self.cam.project(&pose.transform_point(p)) {
                Ok(uv) => uv.x >= 0.0 && uv.x <= self.width && uv.y >= 0.0 && uv.y <= self.height,
                Err(_) => false,
            })
    }
}

/// Forward-looking orientation: camera z along world +y, x along world +x.
fn forward_rotation() -> Rotation3 {
    Rotation3::from_matrix(&Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0))
}

fn pose_at(center: Vector3<f64>) -> Pose3 {
    let r = forward_rotation();
    Pose3::new(r, -(r * center))
}

/// The four camera-motion scenarios: 1 translates along the line (degenerate),
/// 2 follows a path that is not parallel to the line, 3 advances toward the
/// line and 4 moves vertically.
pub fn build_scenario(id: u8, g: &ScenarioGeometry) -> Result<ScenarioSpec, Error> {
    let half = 0.5 * g.line_length;
    let n = g.num_cameras;
    let offset = |i: usize| g.spacing * (i as f64 - 0.5 * (n as f64 - 1.0));
    let depth = if id == 3 { g.approach_depth } else { g.line_depth };
    let a = Vector3::new(-half, depth, g.line_height);
    let b = Vector3::new(half, depth, g.line_height);
    let centers: Vec<Vector3<f64>> = match id {
        1 => (0..n).map(|i| Vector3::new(offset(i), 0.0, 0.0)).collect(),
        2 => (0..n)
            .map(|i| {
                let s = i as f64 / (n as f64 - 1.0).max(1.0);
                Vector3::new(offset(i), 0.0, -1.0 + 2.0 * s)
            })
            .collect(),
        3 => (0..n).map(|i| Vector3::new(0.0, g.spacing * i as f64, 0.0)).collect(),
        4 => (0..n).map(|i| Vector3::new(0.0, 0.0, offset(i))).collect(),
        _ => return Err(Error::InvalidInput("scenario id must be 1..4")),
    };
    Ok(ScenarioSpec {
        id,
        line: PluckerLine::from_points(&a, &b)?,
        endpoints: (a, b),
        camera_poses: centers.into_iter().map(pose_at).collect(),
        cam: PinholeCamera::new(g.fx, g.fy, g.cx, g.cy)?,
        width: g.width,
        height: g.height,
    })
}

/// `(e_norm, e_dir)` after normalizing both lines to `‖v‖ = 1` with the
/// estimate's direction sign-aligned to the truth.
pub fn error_metrics(estimate: &PluckerLine, truth: &PluckerLine) -> (f64, f64) {
    let t = truth.normalized();
    let mut e = estimate.normalized();
    if e.v().dot(t.v()) < 0.0 {
        e = PluckerLine::new(-e.n(), -e.v()).expect("negated line is valid");
    }
    let e_norm = (e.n() - t.n()).norm();
    let e_dir = e.v().cross(t.v()).norm().min(1.0);
    (e_norm, e_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    Planes,
    PointDirection,
    TwoPoints,
}

impl InitMethod {
    pub const ALL: [InitMethod; 3] = [InitMethod::Planes, InitMethod::PointDirection, InitMethod::TwoPoints];

    pub fn name(self) -> &'static str {
        match self {
            InitMethod::Planes => "planes",
            InitMethod::PointDirection => "point-direction",
            InitMethod::TwoPoints => "two-points",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub scenario: u8,
    /// Initializer name or refinement type number.
    pub kind: String,
    pub sigma_ob: f64,
    pub trial: usize,
    pub e_norm: f64,
    pub e_dir: f64,
    pub iterations: usize,
    pub error: Option<Error>,
}

impl TrialResult {
    pub fn ok(&self) -> bool {
        self.error.is_none() && self.e_norm.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitStudyConfig {
    pub scenarios: Vec<u8>,
    pub sigmas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub geometry: ScenarioGeometry,
}

impl Default for InitStudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![1, 2, 3, 4],
            sigmas: vec![0.5, 1.0, 1.5, 2.0],
            trials: 30,
            seed: 0,
            geometry: ScenarioGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineStudyConfig {
    pub scenarios: Vec<u8>,
    pub types: Vec<u8>,
    pub trials: usize,
    pub sigma_ob: f64,
    pub sigma_init: f64,
    pub iterations: usize,
    pub seed: u64,
    pub w_line: f64,
    pub w_point: f64,
    /// The known direction is exact in simulation, so it is weighted as a tight prior.
    pub w_dir: f64,
    pub geometry: ScenarioGeometry,
}

impl Default for RefineStudyConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![1, 2, 3, 4],
            types: vec![1, 2, 3, 4],
            trials: 30,
            sigma_ob: 1.0,
            sigma_init: 0.1,
            iterations: 50,
            seed: 0,
            w_line: 1.0,
            w_point: 1.0,
            w_dir: 1e4,
            geometry: ScenarioGeometry::default(),
        }
    }
}

fn validate_common(scenarios: &[u8], trials: usize, geometry: &ScenarioGeometry) -> Result<(), String> {
    if scenarios.is_empty() || scenarios.iter().any(|s| !(1..=4).contains(s)) {
        return Err("scenarios must be a non-empty subset of 1..4".into());
    }
    if trials == 0 {
        return Err("trials must be positive".into());
    }
    if geometry.num_cameras < 2 || !(geometry.spacing > 0.0) || !(geometry.line_length > 0.0) {
        return Err("geometry needs at least two cameras, positive spacing and line length".into());
    }
    Ok(())
}

impl InitStudyConfig {
    pub fn validate(&self) -> Result<(), String> {
        validate_common(&self.scenarios, self.trials, &self.geometry)?;
        if self.sigmas.is_empty() || self.sigmas.iter().any(|s| !(*s >= 0.0)) {
            return Err("sigmas must be non-empty and non-negative".into());
        }
        Ok(())
    }
}

impl RefineStudyConfig {
    pub fn validate(&self) -> Result<(), String> {
        validate_common(&self.scenarios, self.trials, &self.geometry)?;
        if self.types.is_empty() || self.types.iter().any(|t| !(1..=4).contains(t)) {
            return Err("types must be a non-empty subset of 1..4".into());
        }
        if !(self.sigma_ob >= 0.0 && self.sigma_init >= 0.0) || self.iterations == 0 {
            return Err("noise levels must be non-negative and iterations positive".into());
        }
        if !(self.w_line >= 0.0 && self.w_point >= 0.0 && self.w_dir >= 0.0) {
            return Err("weights must be non-negative".into());
        }
        Ok(())
    }
}

struct NoisyObservations {
    segments: Vec<Segment2D>,
    points: Vec<Vector3<f64>>,
}

fn gaussian2(rng: &mut ChaCha8Rng, sigma: f64) -> Vector2<f64> {
    if sigma == 0.0 {
        return Vector2::zeros();
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    Vector2::new(n.sample(rng), n.sample(rng))
}

/// Noisy endpoint segments for every view and the triangulated midpoint and
/// quarter point.
fn observe(spec: &ScenarioSpec, sigma: f64, rng: &mut ChaCha8Rng) -> Result<NoisyObservations, Error> {
    let (a, b) = spec.endpoints;
    let mut segments = Vec::with_capacity(spec.camera_poses.len());
    for pose in &spec.camera_poses {
        let pa = spec.cam.project(&pose.transform_point(&a))? + gaussian2(rng, sigma);
        let pb = spec.cam.project(&pose.transform_point(&b))? + gaussian2(rng, sigma);
        segments.push(Segment2D::new(pa, pb)?);
    }
    let mut points = Vec::new();
    for s in [0.5, 0.25] {
        let p = spec.point_at(s);
        let obs = spec
            .camera_poses
            .iter()
            .map(|pose| {
                Ok((
                    *pose,
                    spec.cam.project(&pose.transform_point(&p))? + gaussian2(rng, sigma),
                ))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        points.push(triangulate_point(&obs, &spec.cam)?);
    }
    Ok(NoisyObservations { segments, points })
}

fn observation_set(spec: &ScenarioSpec, segs: &[Segment2D]) -> LineObservationSet {
    LineObservationSet::mono(
        spec.camera_poses
            .iter()
            .zip(segs)
            .map(|(pose, seg)| LineView::mono(*pose, *seg))
            .collect(),
    )
}

fn failed(scenario: u8, kind: &str, sigma_ob: f64, trial: usize, e: Error) -> TrialResult {
    TrialResult {
        scenario,
        kind: kind.to_string(),
        sigma_ob,
        trial,
        e_norm: f64::NAN,
        e_dir: f64::NAN,
        iterations: 0,
        error: Some(e),
    }
}

fn init_trial(spec: &ScenarioSpec, sigma: f64, trial: usize, seed: u64) -> Vec<TrialResult> {
    let mut rng = seeded_rng(seed, &[spec.id as u64, trial as u64]);
    let obs = match observe(spec, sigma, &mut rng) {
        Ok(o) => o,
        Err(e) => {
            return InitMethod::ALL
                .iter()
                .map(|m| failed(spec.id, m.name(), sigma, trial, e))
                .collect()
        }
    };
    InitMethod::ALL
        .iter()
        .map(|m| {
            let line = match m {
                InitMethod::Planes => init_line_planes(&observation_set(spec, &obs.segments), &spec.cam),
                InitMethod::PointDirection => {
                    init_line_point_direction(&obs.points[0], DirectionClass::X, &Rotation3::identity())
                }
                InitMethod::TwoPoints => init_line_two_points(&obs.points[0], &obs.points[1]),
            };
            match line {
                Ok(l) => {
                    let (e_norm, e_dir) = error_metrics(&l, &spec.line);
                    TrialResult {
                        scenario: spec.id,
                        kind: m.name().to_string(),
                        sigma_ob: sigma,
                        trial,
                        e_norm,
                        e_dir,
                        iterations: 0,
                        error: None,
                    }
                }
                Err(e) => failed(spec.id, m.name(), sigma, trial, e),
            }
        })
        .collect()
}

/// Every initializer on every scenario, noise level and trial.
pub fn run_init_study(cfg: &InitStudyConfig) -> Result<Vec<TrialResult>, Error> {
    let specs = cfg
        .scenarios
        .iter()
        .map(|id| build_scenario(*id, &cfg.geometry))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jobs = Vec::new();
    for spec in &specs {
        for sigma in &cfg.sigmas {
            for trial in 0..cfg.trials {
                jobs.push((spec, *sigma, trial));
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|(spec, sigma, trial)| init_trial(spec, *sigma, *trial, cfg.seed))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

fn perturb(p: &Vector3<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    if sigma == 0.0 {
        return *p;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    p + Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng))
}

/// Auxiliary information used by each refinement type.
pub fn refinement_aux(ty: u8, points: &[Vector3<f64>], direction: Vector3<f64>) -> LineTriangulationAux {
    match ty {
        2 => LineTriangulationAux {
            points_on_line: vec![points[0]],
            known_direction: Some(direction),
        },
        3 => LineTriangulationAux {
            points_on_line: points[..2].to_vec(),
            known_direction: None,
        },
        4 => LineTriangulationAux {
            points_on_line: points[..2].to_vec(),
            known_direction: Some(direction),
        },
        _ => LineTriangulationAux::default(),
    }
}

fn refine_trial(spec: &ScenarioSpec, cfg: &RefineStudyConfig, trial: usize) -> Vec<TrialResult> {
    let mut rng = seeded_rng(cfg.seed, &[0x5265_6669, spec.id as u64, trial as u64]);
    let (a, b) = spec.endpoints;
    let init_a = perturb(&a, cfg.sigma_init, &mut rng);
    let init_b = perturb(&b, cfg.sigma_init, &mut rng);
    let kind = |ty: u8| ty.to_string();
    let obs = match observe(spec, cfg.sigma_ob, &mut rng) {
        Ok(o) => o,
        Err(e) => {
            return cfg
                .types
                .iter()
                .map(|t| failed(spec.id, &kind(*t), cfg.sigma_ob, trial, e))
                .collect()
        }
    };
    let init = match PluckerLine::from_points(&init_a, &init_b) {
        Ok(l) => l,
        Err(e) => {
            return cfg
                .types
                .iter()
                .map(|t| failed(spec.id, &kind(*t), cfg.sigma_ob, trial, e))
                .collect()
        }
    };
    let set = observation_set(spec, &obs.segments);
    let rc = RefinementConfig {
        w_line: cfg.w_line,
        w_point: cfg.w_point,
        w_dir: cfg.w_dir,
        ..RefinementConfig::gauss_newton(cfg.iterations)
    };
    cfg.types
        .iter()
        .map(|ty| {
            let aux = refinement_aux(*ty, &obs.points, spec.direction());
            match refine_line(&init, &set, &aux, &spec.cam, &rc) {
                Ok((line, rep)) => {
                    let (e_norm, e_dir) = error_metrics(&line, &spec.line);
                    TrialResult {
                        scenario: spec.id,
                        kind: kind(*ty),
                        sigma_ob: cfg.sigma_ob,
                        trial,
                        e_norm,
                        e_dir,
                        iterations: rep.iterations,
                        error: None,
                    }
                }
                Err(e) => failed(spec.id, &kind(*ty), cfg.sigma_ob, trial, e),
            }
        })
        .collect()
}

/// Refinement of perturbed initial lines with the requested residual types.
pub fn run_refinement_study(cfg: &RefineStudyConfig) -> Result<Vec<TrialResult>, Error> {
    let specs = cfg
        .scenarios
        .iter()
        .map(|id| build_scenario(*id, &cfg.geometry))
        .collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(&ScenarioSpec, usize)> = specs
        .iter()
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|(spec, trial)| refine_trial(spec, cfg, *trial))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

/// Mean and population standard deviation of the finite values.
pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64, usize) {
    let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN, 0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt(), v.len())
}

/// Median of the finite values.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: u8,
    pub kind: String,
    pub sigma_ob: f64,
    pub mean_e_norm: f64,
    pub std_e_norm: f64,
    pub median_e_norm: f64,
    pub mean_e_dir: f64,
    pub std_e_dir: f64,
    pub failures: usize,
}

/// Groups results by scenario, kind and noise level in first-seen order.
pub fn summarize(results: &[TrialResult]) -> Vec<CellSummary> {
    let mut keys: Vec<(u8, String, u64)> = Vec::new();
    for r in results {
        let k = (r.scenario, r.kind.clone(), r.sigma_ob.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(scenario, kind, sigma_bits)| {
            let cell: Vec<&TrialResult> = results
                .iter()
                .filter(|r| r.scenario == scenario && r.kind == kind && r.sigma_ob.to_bits() == sigma_bits)
                .collect();
            let (mean_e_norm, std_e_norm, _) = mean_std(cell.iter().map(|r| r.e_norm));
            let (mean_e_dir, std_e_dir, _) = mean_std(cell.iter().map(|r| r.e_dir));
            CellSummary {
                scenario,
                kind,
                sigma_ob: f64::from_bits(sigma_bits),
                mean_e_norm,
                std_e_norm,
                median_e_norm: median(cell.iter().map(|r| r.e_norm)),
                mean_e_dir,
                std_e_dir,
                failures: cell.iter().filter(|r| !r.ok()).count(),
            }
        })
        .collect()
}

/// Finds a summary cell.
pub fn cell<'a>(cells: &'a [CellSummary], scenario: u8, kind: &str, sigma_ob: Option<f64>) -> Option<&'a CellSummary> {
    cells
        .iter()
        .find(|c| c.scenario == scenario && c.kind == kind && sigma_ob.is_none_or(|s| (c.sigma_ob - s).abs() < 1e-12))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// The three orderings expected of the refinement table.
pub fn refinement_orderings(cells: &[CellSummary]) -> Vec<OrderingCheck> {
    let get = |s: u8, t: u8| cell(cells, s, &t.to_string(), None);
    let mut out = Vec::new();
    match (get(1, 1), get(1, 4)) {
        (Some(t1), Some(t4)) => {
            let ratio = t1.mean_e_norm / t4.mean_e_norm;
            out.push(OrderingCheck {
                name: "scenario-1 type-1 vs type-4 e_norm ratio >= 50",
                passed: ratio >= 50.0,
                detail: format!("{:.4} / {:.4} = {:.1}", t1.mean_e_norm, t4.mean_e_norm, ratio),
            });
        }
        _ => out.push(OrderingCheck {
            name: "scenario-1 type-1 vs type-4 e_norm ratio >= 50",
            passed: false,
            detail: "missing cells".into(),
        }),
    }
    let mut dir_ok = true;
    let mut detail = Vec::new();
    let mut norm_ok = true;
    let mut norm_detail = Vec::new();
    for s in 1..=4u8 {
        let cells_s: Vec<&CellSummary> = (1..=4u8).filter_map(|t| get(s, t)).collect();
        if cells_s.len() < 4 {
            dir_ok = false;
            norm_ok = false;
            detail.push(format!("S{s}: missing cells"));
            norm_detail.push(format!("S{s}: missing cells"));
            continue;
        }
        let (d1, d2, d3, d4) = (
            cells_s[0].mean_e_dir,
            cells_s[1].mean_e_dir,
            cells_s[2].mean_e_dir,
            cells_s[3].mean_e_dir,
        );
        let ok = d2.max(d4) < d1.min(d3);
        dir_ok &= ok;
        detail.push(format!("S{s}: t2 {d2:.5}, t4 {d4:.5} vs t1 {d1:.5}, t3 {d3:.5}"));
        let n1 = cells_s[0].mean_e_norm;
        let n4 = cells_s[3].mean_e_norm;
        norm_ok &= n4 <= n1;
        norm_detail.push(format!("S{s}: {n4:.4} <= {n1:.4}"));
    }
    out.push(OrderingCheck {
        name: "types 2 and 4 attain the minimum mean e_dir in every scenario",
        passed: dir_ok,
        detail: detail.join("; "),
    });
    out.push(OrderingCheck {
        name: "type 4 mean e_norm <= type 1 mean e_norm in every scenario",
        passed: norm_ok,
        detail: norm_detail.join("; "),
    });
    out
}
