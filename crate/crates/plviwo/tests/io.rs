use nalgebra::{Vector2, Vector3};
use plviwo::io;
use plviwo::pipeline::TrajectoryPoint;
use plviwo::sim::scenario::TrialResult;
use plviwo::sim::world::FrameData;
use plviwo_core::estimator::ImuSample;
use plviwo_core::geometry::{Rotation3, Segment2D};
use plviwo_core::line_frontend::TrackedPoint;
use plviwo_core::wheel::WheelMeasurement;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, Just(0.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sensor_streams_round_trip(vals in prop::collection::vec((finite(), finite(), finite(), finite(), finite(), finite()), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let imu: Vec<ImuSample> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| ImuSample::new(i as f64 * 0.01 + 1e-7, Vector3::new(v.0, v.1, v.2), Vector3::new(v.3, v.4, v.5)))
            .collect();
        let p = dir.path().join("imu.csv");
        io::write_imu(&p, &imu).unwrap();
        prop_assert_eq!(io::read_imu(&p).unwrap(), imu);

        let wheel: Vec<WheelMeasurement> =
            vals.iter().enumerate().map(|(i, v)| WheelMeasurement::new(i as f64 / 3.0, v.0, v.1)).collect();
        let p = dir.path().join("wheel.csv");
        io::write_wheel(&p, &wheel).unwrap();
        prop_assert_eq!(io::read_wheel(&p).unwrap(), wheel);

        let traj: Vec<TrajectoryPoint> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| TrajectoryPoint {
                t: i as f64 * 0.1,
                r_gi: Rotation3::exp(&(Vector3::new(v.0, v.1, v.2) * 1e-6)),
                p: Vector3::new(v.3, v.4, v.5),
            })
            .collect();
        let p = dir.path().join("traj.tum");
        io::write_tum(&p, &traj).unwrap();
        let back = io::read_tum(&p).unwrap();
        prop_assert_eq!(back.len(), traj.len());
        for (a, b) in back.iter().zip(&traj) {
            prop_assert_eq!(a.t, b.t);
            prop_assert_eq!(a.p, b.p);
            prop_assert!((a.r_gi.matrix() - b.r_gi.matrix()).amax() < 1e-12);
        }
    }

    #[test]
    fn tracks_round_trip(frames in prop::collection::vec((0usize..5, 0usize..4), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<FrameData> = frames
            .iter()
            .enumerate()
            .map(|(k, (np, nl))| FrameData {
                index: k,
                t: k as f64 * 0.1,
                points: (0..*np)
                    .map(|i| TrackedPoint { id: (i + 1) as u64, uv: Vector2::new(0.37 * (k + i) as f64, 480.0 / (i + 1) as f64) })
                    .collect(),
                segments: (0..*nl)
                    .map(|i| Segment2D::from_coords(i as f64, 1.0 / 3.0, 100.0 + k as f64, 200.5).unwrap())
                    .collect(),
            })
            .collect();
        io::write_points(&dir.path().join("p.csv"), &data).unwrap();
        io::write_lines(&dir.path().join("l.csv"), &data).unwrap();
        let points = io::read_points(&dir.path().join("p.csv")).unwrap();
        let lines = io::read_lines(&dir.path().join("l.csv")).unwrap();
        for f in &data {
            prop_assert_eq!(points.get(&(f.index as u64)).cloned().unwrap_or_default(), f.points.clone());
            prop_assert_eq!(lines.get(&(f.index as u64)).cloned().unwrap_or_default(), f.segments.clone());
        }
    }
}

#[test]
fn result_table_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<TrialResult> = (0..6)
        .map(|i| TrialResult {
            scenario: 1 + (i % 4) as u8,
            kind: ["1", "2", "3", "4"][i % 4].to_string(),
            sigma_ob: 1.0,
            trial: i,
            e_norm: 0.1 * i as f64 + 1e-17,
            e_dir: 1.0 / (i + 3) as f64,
            iterations: 50,
            error: None,
        })
        .collect();
    let p = dir.path().join("r.csv");
    io::write_results(&p, &rows).unwrap();
    let back = io::read_results(&p).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!(
            (a.scenario, &a.kind, a.trial, a.e_norm, a.e_dir),
            (b.scenario, &b.kind, b.trial, b.e_norm, b.e_dir)
        );
    }
}
