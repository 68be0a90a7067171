//! Analytic Jacobians against central finite differences.

use nalgebra::{DMatrix, DVector, Vector2, Vector3, Vector4};
use plviwo_core::estimator::{
    imu_step, imu_step_jacobians, ClonePose, EstimatorState, ImuSample, ImuState, LineFeature, Matrix15, NoiseParams,
    PointTrack,
};
use plviwo_core::geometry::{OrthonormalLine, PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
use plviwo_core::math::so3_log;
use plviwo_core::triangulation::{direction_residual, line_reprojection_residual, point_on_line_residual};
use plviwo_core::wheel::wheel_jacobians;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>) -> f64 {
    (analytic - numeric).amax() / numeric.amax().max(1.0)
}

fn numeric<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, n: usize) -> DMatrix<f64> {
    let m = f(&DVector::zeros(n)).len();
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let mut d = DVector::zeros(n);
        d[k] = H;
        let col = (f(&d) - f(&(-d.clone()))) / (2.0 * H);
        j.set_column(k, &col);
    }
    j
}

fn rand_vec(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-s..s),
        rng.random_range(-s..s),
        rng.random_range(-s..s),
    )
}

fn cam() -> PinholeCamera {
    PinholeCamera::new(400.0, 410.0, 320.0, 240.0).unwrap()
}

fn random_line(rng: &mut ChaCha8Rng) -> (PluckerLine, Vector3<f64>, Vector3<f64>) {
    let a = Vector3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(6.0..10.0),
    );
    let b = a + rand_vec(rng, 3.0);
    (PluckerLine::from_points(&a, &b).unwrap(), a, b)
}

#[test]
fn line_residual_jacobians() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut done = 0;
    while done < 100 {
        let (line, a, b) = random_line(&mut rng);
        let lo = OrthonormalLine::from_plucker(&line).unwrap();
        let pose = Pose3::new(Rotation3::exp(&rand_vec(&mut rng, 0.2)), rand_vec(&mut rng, 0.5));
        let (Ok(pa), Ok(pb)) = (
            cam().project(&pose.transform_point(&a)),
            cam().project(&pose.transform_point(&b)),
        ) else {
            continue;
        };
        let seg = Segment2D::new(pa + Vector2::new(3.0, -2.0), pb + Vector2::new(-1.0, 4.0)).unwrap();
        let retract = |d: &DVector<f64>| lo.retract(&Vector4::new(d[0], d[1], d[2], d[3]));

        let (_, j) = line_reprojection_residual(&lo, &pose, &cam(), &seg).unwrap();
        let num = numeric(
            |d| {
                DVector::from_column_slice(
                    line_reprojection_residual(&retract(d), &pose, &cam(), &seg)
                        .unwrap()
                        .0
                        .as_slice(),
                )
            },
            4,
        );
        let ana = DMatrix::from_column_slice(2, 4, j.as_slice());
        assert!(rel_err(&ana, &num) < TOL, "line {}", rel_err(&ana, &num));

        let p = a + rand_vec(&mut rng, 0.3);
        let (_, j) = point_on_line_residual(&lo, &p);
        let num = numeric(
            |d| DVector::from_column_slice(point_on_line_residual(&retract(d), &p).0.as_slice()),
            4,
        );
        let ana = DMatrix::from_column_slice(3, 4, j.as_slice());
        assert!(rel_err(&ana, &num) < TOL, "point {}", rel_err(&ana, &num));

        let d_ref = line.v().normalize() + rand_vec(&mut rng, 0.05);
        let (_, j) = direction_residual(&lo, &d_ref);
        let num = numeric(
            |d| DVector::from_column_slice(direction_residual(&retract(d), &d_ref).0.as_slice()),
            4,
        );
        let ana = DMatrix::from_column_slice(3, 4, j.as_slice());
        assert!(rel_err(&ana, &num) < TOL, "direction {}", rel_err(&ana, &num));
        done += 1;
    }
}

fn perturb_clone(c: &ClonePose, d: &[f64]) -> ClonePose {
    ClonePose {
        t: c.t,
        r_ig: Rotation3::exp(&Vector3::new(d[0], d[1], d[2])) * c.r_ig,
        p: c.p + Vector3::new(d[3], d[4], d[5]),
    }
}

#[test]
fn wheel_jacobian() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let c0 = ClonePose {
            t: 0.0,
            r_ig: Rotation3::exp(&rand_vec(&mut rng, 2.0)),
            p: rand_vec(&mut rng, 5.0),
        };
        let c1 = ClonePose {
            t: 0.1,
            r_ig: Rotation3::exp(&rand_vec(&mut rng, 0.3)) * c0.r_ig,
            p: c0.p + rand_vec(&mut rng, 0.5),
        };
        let ext = Pose3::new(Rotation3::exp(&rand_vec(&mut rng, 1.0)), rand_vec(&mut rng, 0.5));
        let (_, h) = wheel_jacobians(&c0, &c1, &ext);
        let num = numeric(
            |d| {
                let a = perturb_clone(&c0, &d.as_slice()[0..6]);
                let b = perturb_clone(&c1, &d.as_slice()[6..12]);
                DVector::from_column_slice(wheel_jacobians(&a, &b, &ext).0.as_slice())
            },
            12,
        );
        let ana = DMatrix::from_column_slice(6, 12, h.as_slice());
        assert!(rel_err(&ana, &num) < TOL, "{}", rel_err(&ana, &num));
    }
}

fn imu_minus(a: &ImuState, b: &ImuState) -> DVector<f64> {
    let th = so3_log(&(a.r_ig.matrix() * b.r_ig.matrix().transpose()));
    let mut out = DVector::zeros(15);
    out.rows_mut(0, 3).copy_from(&th);
    out.rows_mut(3, 3).copy_from(&(a.p - b.p));
    out.rows_mut(6, 3).copy_from(&(a.v - b.v));
    out.rows_mut(9, 3).copy_from(&(a.bg - b.bg));
    out.rows_mut(12, 3).copy_from(&(a.ba - b.ba));
    out
}

#[test]
fn propagation_transition() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = Vector3::new(0.0, 0.0, 9.81);
    for _ in 0..100 {
        let imu = ImuState {
            r_ig: Rotation3::exp(&rand_vec(&mut rng, 2.0)),
            p: rand_vec(&mut rng, 3.0),
            v: rand_vec(&mut rng, 2.0),
            bg: rand_vec(&mut rng, 0.05),
            ba: rand_vec(&mut rng, 0.2),
        };
        let w = rand_vec(&mut rng, 1.0);
        let a = rand_vec(&mut rng, 3.0) + imu.r_ig * g;
        let dt = rng.random_range(0.005..0.05);
        let s0 = ImuSample::new(0.0, w, a);
        let s1 = ImuSample::new(dt, w, a);
        let nominal = imu_step(&imu, &s0, &s1, &g);
        let (f, _) = imu_step_jacobians(&imu, &s0, &s1);
        let num = numeric(
            |d| imu_minus(&imu_step(&imu.boxplus(d.as_slice()), &s0, &s1, &g), &nominal),
            15,
        );
        let ana = DMatrix::from_column_slice(15, 15, f.as_slice());
        assert!(rel_err(&ana, &num) < TOL, "{}", rel_err(&ana, &num));
    }
}

fn window_state(rng: &mut ChaCha8Rng, n: usize) -> EstimatorState {
    let mut s = EstimatorState::new(
        0.0,
        ImuState::default(),
        &(Matrix15::identity() * 1e-4),
        NoiseParams::default(),
        11,
    )
    .unwrap();
    for i in 0..n {
        s.t = 0.1 * (i + 1) as f64;
        s.imu.r_ig = Rotation3::exp(&rand_vec(rng, 0.1));
        s.imu.p = Vector3::new(0.3 * i as f64, rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        s.augment_clone().unwrap();
    }
    s
}

fn with_clone_perturbation(s: &EstimatorState, d: &DVector<f64>) -> EstimatorState {
    let mut out = s.clone();
    let mut full = DVector::zeros(s.dim());
    full.rows_mut(15, d.len()).copy_from(d);
    out.apply_correction(&full);
    out
}

#[test]
fn visual_update_jacobians() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ext = Pose3::new(
        Rotation3::exp(&Vector3::new(0.05, -0.02, 0.1)),
        Vector3::new(0.05, 0.01, -0.02),
    );
    for _ in 0..100 {
        let s = window_state(&mut rng, 5);
        let ncl = 6 * s.clones.len();
        let p_f = Vector3::new(
            rng.random_range(-1.0..2.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(5.0..9.0),
        );
        let obs = |st: &EstimatorState, p: &Vector3<f64>| -> Vec<(f64, Vector2<f64>)> {
            st.clones
                .iter()
                .map(|c| {
                    (
                        c.t,
                        cam().project(&c.camera_pose(&ext).transform_point(p)).unwrap() + Vector2::new(0.7, -0.4),
                    )
                })
                .collect()
        };
        let track = PointTrack {
            id: 1,
            obs: obs(&s, &p_f),
        };
        let (_, h_x, h_f) = s.point_jacobians(&track, &p_f, &cam(), &ext).unwrap();
        // the Jacobian is of h(x), the residual is z - h(x)
        let num = numeric(
            |d| {
                -with_clone_perturbation(&s, d)
                    .point_jacobians(&track, &p_f, &cam(), &ext)
                    .unwrap()
                    .0
            },
            ncl,
        );
        let ana = h_x.columns(15, ncl).into_owned();
        assert!(rel_err(&ana, &num) < TOL, "point H_x {}", rel_err(&ana, &num));
        let num = numeric(
            |d| {
                -s.point_jacobians(&track, &(p_f + Vector3::new(d[0], d[1], d[2])), &cam(), &ext)
                    .unwrap()
                    .0
            },
            3,
        );
        assert!(rel_err(&h_f, &num) < TOL, "point H_f {}", rel_err(&h_f, &num));

        let (line, a, b) = random_line(&mut rng);
        let segs: Option<Vec<_>> = s
            .clones
            .iter()
            .map(|c| {
                let pose = c.camera_pose(&ext);
                let pa = cam().project(&pose.transform_point(&a)).ok()?;
                let pb = cam().project(&pose.transform_point(&b)).ok()?;
                Some((
                    c.t,
                    Segment2D::new(pa + Vector2::new(1.0, 0.0), pb - Vector2::new(0.0, 1.5)).ok()?,
                ))
            })
            .collect();
        let Some(segs) = segs else { continue };
        let feature = LineFeature { id: 1, line, obs: segs };
        let (_, h_x, h_f) = s.line_jacobians(&feature, &cam(), &ext).unwrap();
        let num = numeric(
            |d| {
                -with_clone_perturbation(&s, d)
                    .line_jacobians(&feature, &cam(), &ext)
                    .unwrap()
                    .0
            },
            ncl,
        );
        let ana = h_x.columns(15, ncl).into_owned();
        assert!(rel_err(&ana, &num) < TOL, "line H_x {}", rel_err(&ana, &num));
        let lo = OrthonormalLine::from_plucker(&line).unwrap();
        let num = numeric(
            |d| {
                let moved = LineFeature {
                    line: lo.retract(&Vector4::new(d[0], d[1], d[2], d[3])).to_plucker(),
                    ..feature.clone()
                };
                -s.line_jacobians(&moved, &cam(), &ext).unwrap().0
            },
            4,
        );
        assert!(rel_err(&h_f, &num) < TOL, "line H_f {}", rel_err(&h_f, &num));
    }
}
