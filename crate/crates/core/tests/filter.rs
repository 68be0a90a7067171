use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use plviwo_core::estimator::{
    left_nullspace, EstimatorState, FeatureOutcome, ImuSample, ImuState, LineFeature, Matrix15, NoiseParams,
    PointTrack, IMU_DIM,
};
use plviwo_core::geometry::{PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
use plviwo_core::wheel::{predict_wheel, wheel_update, WheelPreintegration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cam() -> PinholeCamera {
    PinholeCamera::new(400.0, 400.0, 320.0, 240.0).unwrap()
}

/// Camera looking along the IMU x axis.
fn ext() -> Pose3 {
    let r = Rotation3::from_matrix(&nalgebra::Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0));
    Pose3::new(r, Vector3::new(0.0, 0.0, 0.0))
}

fn new_state() -> EstimatorState {
    EstimatorState::new(
        0.0,
        ImuState::default(),
        &(Matrix15::identity() * 1e-3),
        NoiseParams::default(),
        11,
    )
    .unwrap()
}

fn assert_sym_psd(p: &DMatrix<f64>, what: &str) {
    let asym = (p - p.transpose()).amax();
    assert!(asym <= 1e-9, "{what}: asymmetry {asym}");
    let min = p.clone().symmetric_eigen().eigenvalues.min();
    assert!(min >= -1e-9, "{what}: eigenvalue {min}");
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn observe(s: &EstimatorState, p: &Vector3<f64>, noise: f64, rng: &mut ChaCha8Rng) -> Option<PointTrack> {
    let obs: Option<Vec<_>> = s
        .clones
        .iter()
        .map(|c| {
            let uv = cam().project(&c.camera_pose(&ext()).transform_point(p)).ok()?;
            Some((c.t, uv + Vector2::new(gauss(rng), gauss(rng)) * noise))
        })
        .collect();
    Some(PointTrack { id: 0, obs: obs? })
}

#[test]
fn covariance_stays_psd_over_fuzz_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = new_state();
    s.imu.v = Vector3::new(1.0, 0.0, 0.0);
    let t_wi = Pose3::new(Rotation3::identity(), Vector3::new(0.1, 0.0, 0.2));
    let mut max_len = 0;
    for step in 0..1000 {
        match rng.random_range(0..5) {
            0 | 1 => {
                let t0 = s.t;
                let samples: Vec<_> = (0..=5)
                    .map(|i| {
                        let w = Vector3::new(gauss(&mut rng), gauss(&mut rng), gauss(&mut rng)) * 0.05;
                        let a = s.imu.r_ig * s.gravity + Vector3::new(gauss(&mut rng), gauss(&mut rng), 0.0) * 0.1;
                        ImuSample::new(t0 + 0.02 * i as f64, w, a)
                    })
                    .collect();
                s.propagate(&samples).unwrap();
                if s.clones.is_full() {
                    s.marginalize_oldest().unwrap();
                }
                s.augment_clone().unwrap();
            }
            2 if s.clones.len() >= 3 => {
                let p = s.imu.p
                    + Vector3::new(
                        rng.random_range(4.0..10.0),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-1.0..1.0),
                    );
                if let Some(track) = observe(&s, &p, 0.5, &mut rng) {
                    s.point_update(&[track], &cam(), &ext()).unwrap();
                }
            }
            3 if s.clones.len() >= 2 => {
                let n = s.clones.len();
                let (a, b) = (*s.clones.get(n - 2).unwrap(), *s.clones.get(n - 1).unwrap());
                let mut z = predict_wheel(&a, &b, &t_wi);
                for zi in z.iter_mut() {
                    *zi += 0.01 * gauss(&mut rng);
                }
                let pre = WheelPreintegration {
                    z,
                    cov: nalgebra::Matrix6::identity() * 1e-3,
                    t_start: a.t,
                    t_end: b.t,
                };
                wheel_update(&mut s, &pre, &t_wi).unwrap();
            }
            _ => {
                let dim = s.dim();
                let h = DMatrix::from_fn(2, dim, |_, _| 0.1 * gauss(&mut rng));
                let r = DVector::from_fn(2, |_, _| 0.01 * gauss(&mut rng));
                s.ekf_update(&h, &r, &(DMatrix::identity(2, 2) * 0.01)).unwrap();
            }
        }
        max_len = max_len.max(s.clones.len());
        assert!(s.clones.len() <= 11);
        assert_eq!(s.cov.nrows(), s.dim());
        assert_sym_psd(&s.cov, &format!("step {step}"));
    }
    assert_eq!(max_len, 11);
}

#[test]
fn propagation_grows_trace() {
    let mut s = new_state();
    let tr0 = s.cov.trace();
    let a = s.gravity;
    let samples: Vec<_> = (0..=10)
        .map(|i| ImuSample::new(0.01 * i as f64, Vector3::zeros(), a))
        .collect();
    s.propagate(&samples).unwrap();
    assert!(s.cov.trace() > tr0);
}

fn moving_window(rng: &mut ChaCha8Rng) -> EstimatorState {
    let mut s = new_state();
    for i in 0..6 {
        s.t = 0.1 * (i + 1) as f64;
        s.imu.p = Vector3::new(0.0, 0.25 * i as f64, 0.05 * rng.random_range(-1.0..1.0));
        s.augment_clone().unwrap();
    }
    s
}

#[test]
fn outlier_observation_is_gated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = moving_window(&mut rng);
    let p = Vector3::new(6.0, 0.5, 0.3);
    let clean = observe(&s, &p, 0.0, &mut rng).unwrap();
    let mut bad = clean.clone();
    bad.obs[2].1.x += 100.0;
    let mut s1 = s.clone();
    let out = s1.point_update(&[clean, bad], &cam(), &ext()).unwrap();
    assert!(out[0].is_accepted());
    assert!(matches!(out[1], FeatureOutcome::GateRejected { .. }), "{:?}", out[1]);
}

#[test]
fn noiseless_update_changes_little_and_shrinks_pose_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut s = moving_window(&mut rng);
    let before = s.clone();
    let tracks: Vec<_> = (0..20)
        .filter_map(|_| {
            let p = Vector3::new(
                rng.random_range(4.0..9.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
            );
            observe(&s, &p, 0.0, &mut rng)
        })
        .collect();
    let out = s.point_update(&tracks, &cam(), &ext()).unwrap();
    assert!(out.iter().all(|o| o.is_accepted()));
    for (a, b) in s.clones.iter().zip(before.clones.iter()) {
        assert!((a.p - b.p).norm() < 1e-9);
    }
    let pose_trace = |st: &EstimatorState| (IMU_DIM..st.dim()).map(|i| st.cov[(i, i)]).sum::<f64>();
    assert!(pose_trace(&s) <= pose_trace(&before));

    let a = Vector3::new(7.0, -1.0, -1.0);
    let b = Vector3::new(7.0, 1.5, 1.0);
    let line = PluckerLine::from_points(&a, &b).unwrap();
    let obs = s
        .clones
        .iter()
        .map(|c| {
            let pose = c.camera_pose(&ext());
            let seg = Segment2D::new(
                cam().project(&pose.transform_point(&a)).unwrap(),
                cam().project(&pose.transform_point(&b)).unwrap(),
            )
            .unwrap();
            (c.t, seg)
        })
        .collect();
    let before = s.clone();
    let out = s
        .line_update(&[LineFeature { id: 1, line, obs }], &cam(), &ext())
        .unwrap();
    assert!(out[0].is_accepted());
    for (a, b) in s.clones.iter().zip(before.clones.iter()) {
        assert!((a.p - b.p).norm() < 1e-9);
    }
}

#[test]
fn moving_line_is_gated() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = moving_window(&mut rng);
    let obs: Vec<_> = s
        .clones
        .iter()
        .enumerate()
        .map(|(i, c)| {
            // the line translates 0.5 m per frame along the view direction's side
            let shift = Vector3::new(0.0, 0.0, 0.5 * i as f64);
            let a = Vector3::new(7.0, -1.0, -1.0) + shift;
            let b = Vector3::new(7.0, 1.5, -0.8) + shift;
            let pose = c.camera_pose(&ext());
            let seg = Segment2D::new(
                cam().project(&pose.transform_point(&a)).unwrap(),
                cam().project(&pose.transform_point(&b)).unwrap(),
            )
            .unwrap();
            (c.t, seg)
        })
        .collect();
    let line = PluckerLine::from_points(&Vector3::new(7.0, -1.0, 0.25), &Vector3::new(7.0, 1.5, 0.45)).unwrap();
    let out = s
        .line_update(&[LineFeature { id: 1, line, obs }], &cam(), &ext())
        .unwrap();
    assert!(matches!(out[0], FeatureOutcome::GateRejected { .. }), "{:?}", out[0]);
}

#[test]
fn joseph_matches_information_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mut s = moving_window(&mut rng);
        let n = s.dim();
        let a = DMatrix::from_fn(n, n, |_, _| gauss(&mut rng));
        s.cov = &a * a.transpose() * 0.01 + DMatrix::identity(n, n) * 1e-3;
        let h = DMatrix::from_fn(4, n, |_, _| gauss(&mut rng));
        let r = DVector::from_fn(4, |_, _| 0.01 * gauss(&mut rng));
        let b = DMatrix::from_fn(4, 4, |_, _| gauss(&mut rng));
        let rn = &b * b.transpose() * 0.01 + DMatrix::identity(4, 4) * 0.01;
        let p0 = s.cov.clone();
        let p0_inv = p0.clone().try_inverse().unwrap();
        let rn_inv = rn.clone().try_inverse().unwrap();
        let info = (&p0_inv + h.transpose() * &rn_inv * &h).try_inverse().unwrap();
        let dx = &info * h.transpose() * &rn_inv * &r;
        let p_before = s.imu.p;
        s.ekf_update(&h, &r, &rn).unwrap();
        assert!((&s.cov - &info).amax() < 1e-8 * info.amax().max(1.0));
        let dp = s.imu.p - p_before;
        assert!((dp - Vector3::new(dx[3], dx[4], dx[5])).amax() < 1e-8);
    }
}

#[test]
fn nullspace_of_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let m = rng.random_range(5..30);
        let k = if rng.random_bool(0.5) { 3 } else { 4 };
        let h = DMatrix::from_fn(m, k, |_, _| gauss(&mut rng) * 100.0);
        let q = left_nullspace(&h);
        assert_eq!(q.ncols(), m - k);
        assert!((q.transpose() * &h).amax() < 1e-9);
    }
}

#[test]
fn window_and_time_errors() {
    let mut s = EstimatorState::new(
        0.0,
        ImuState::default(),
        &Matrix15::identity(),
        NoiseParams::default(),
        2,
    )
    .unwrap();
    s.t = 0.1;
    s.augment_clone().unwrap();
    assert_eq!(s.augment_clone(), Err(plviwo_core::Error::NonMonotonicTime));
    s.t = 0.2;
    s.augment_clone().unwrap();
    s.t = 0.3;
    assert_eq!(s.augment_clone(), Err(plviwo_core::Error::WindowFull));
    let pre = WheelPreintegration {
        z: nalgebra::Vector6::zeros(),
        cov: nalgebra::Matrix6::identity(),
        t_start: 0.1,
        t_end: 0.5,
    };
    assert_eq!(
        wheel_update(&mut s, &pre, &Pose3::identity()),
        Err(plviwo_core::Error::MissingClone)
    );
}
