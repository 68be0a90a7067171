use nalgebra::{Vector3, Vector6};
use plviwo_core::estimator::{ClonePose, NoiseParams};
use plviwo_core::geometry::{Pose3, Rotation3};
use plviwo_core::wheel::{predict_wheel, preintegrate, WheelIntrinsics, WheelMeasurement};

fn intrinsics() -> WheelIntrinsics {
    WheelIntrinsics::new(0.31, 0.29, 0.55).unwrap()
}

fn samples(v: impl Fn(f64) -> f64, w: impl Fn(f64) -> f64, t: f64, hz: f64) -> Vec<WheelMeasurement> {
    let k = intrinsics();
    let n = (t * hz).round() as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / hz;
            WheelMeasurement::new(t, (v(t) - 0.5 * w(t) * k.b) / k.r_l, (v(t) + 0.5 * w(t) * k.b) / k.r_r)
        })
        .collect()
}

#[test]
fn constant_arc_matches_closed_form() {
    for (v, w) in [(1.0, 0.5), (0.3, -1.2), (2.0, 0.01), (0.5, 3.0)] {
        let pre = preintegrate(
            &samples(|_| v, |_| w, 2.0, 100.0),
            &intrinsics(),
            &NoiseParams::default(),
        )
        .unwrap();
        let th = w * 2.0;
        let x = v / w * th.sin();
        let y = v / w * (1.0 - th.cos());
        assert!((pre.z[2] - th).abs() < 1e-9);
        assert!(
            (pre.z[3] - x).abs() < 1e-6 && (pre.z[4] - y).abs() < 1e-6,
            "{v} {w}: {}",
            pre.z
        );
    }
}

#[test]
fn interval_halving_converges() {
    let v = |t: f64| 1.0 + 0.5 * t.sin();
    let w = |t: f64| 0.4 * (2.0 * t).cos();
    let z = |hz: f64| {
        preintegrate(&samples(v, w, 2.0, hz), &intrinsics(), &NoiseParams::default())
            .unwrap()
            .z
    };
    let (a, b, c) = (z(20.0), z(40.0), z(80.0));
    let e1 = (a - b).norm();
    let e2 = (b - c).norm();
    // second order: halving dt divides the change by about four
    assert!(e2 < e1 / 3.0, "{e1} {e2}");
}

#[test]
fn straight_distance_is_sum_of_rates() {
    let v = |t: f64| {
        if t < 0.5 {
            0.4
        } else if t < 1.2 {
            1.1
        } else {
            0.7
        }
    };
    let ms = samples(v, |_| 0.0, 2.0, 100.0);
    let pre = preintegrate(&ms, &intrinsics(), &NoiseParams::default()).unwrap();
    let k = intrinsics();
    let expect: f64 = ms
        .windows(2)
        .map(|p| {
            let va = 0.5 * (p[0].w_ml * k.r_l + p[0].w_mr * k.r_r);
            let vb = 0.5 * (p[1].w_ml * k.r_l + p[1].w_mr * k.r_r);
            0.5 * (va + vb) * (p[1].t - p[0].t)
        })
        .sum();
    assert!((pre.z[3] - expect).abs() < 1e-12);
    assert!(pre.z[4].abs() < 1e-12);
}

fn imu_clone(t: f64, yaw: f64, xy: (f64, f64), t_wi: &Pose3, pitch: f64) -> ClonePose {
    // wheel frame pose in the world, then the IMU through the extrinsic
    let r_gw = Rotation3::rotation_z(yaw) * Rotation3::exp(&Vector3::new(0.0, pitch, 0.0));
    let p_gw = Vector3::new(xy.0, xy.1, 0.0);
    let r_gi = r_gw * t_wi.rotation;
    let p_gi = r_gw * t_wi.translation + p_gw;
    ClonePose {
        t,
        r_ig: r_gi.inverse(),
        p: p_gi,
    }
}

#[test]
fn prediction_matches_planar_preintegration() {
    let t_iw = Pose3::new(
        Rotation3::exp(&Vector3::new(0.02, -0.01, 0.3)),
        Vector3::new(0.2, -0.05, 0.3),
    );
    let t_wi = t_iw.inverse();
    let (v, w) = (1.2, 0.35);
    let pre = preintegrate(
        &samples(|_| v, |_| w, 1.0, 100.0),
        &intrinsics(),
        &NoiseParams::default(),
    )
    .unwrap();
    let yaw0 = 0.7;
    let c0 = imu_clone(0.0, yaw0, (1.0, -2.0), &t_wi, 0.0);
    let th = w * 1.0;
    let dx = v / w * th.sin();
    let dy = v / w * (1.0 - th.cos());
    let (c, s) = (yaw0.cos(), yaw0.sin());
    let c1 = imu_clone(
        1.0,
        yaw0 + th,
        (1.0 + c * dx - s * dy, -2.0 + s * dx + c * dy),
        &t_wi,
        0.0,
    );
    let z = predict_wheel(&c0, &c1, &t_wi);
    assert!((z - pre.z).amax() < 1e-6, "{z} vs {}", pre.z);

    // an out-of-plane pitch shows up in the constrained slots
    let c1p = imu_clone(
        1.0,
        yaw0 + th,
        (1.0 + c * dx - s * dy, -2.0 + s * dx + c * dy),
        &t_wi,
        0.1,
    );
    let zp = predict_wheel(&c0, &c1p, &t_wi);
    let constrained = Vector6::new(zp[0], zp[1], 0.0, 0.0, 0.0, zp[5]);
    assert!(constrained.amax() > 1e-2, "{zp}");
}
