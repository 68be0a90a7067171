//! Motion consistency check: point tracks are triangulated against poses
//! predicted from IMU and wheel data alone, and tracks whose mean
//! reprojection error is too large are treated as dynamic.

use alloc::vec::Vec;

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::estimator::{PointTrack, TIME_EPS};
use crate::geometry::{PinholeCamera, Pose3};
use crate::triangulation::triangulate_point;

/// World→camera poses at clone timestamps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictedPoses {
    poses: Vec<(f64, Pose3)>,
}

impl PredictedPoses {
    pub fn new(poses: Vec<(f64, Pose3)>) -> Result<Self> {
        if poses.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::NonMonotonicTime);
        }
        Ok(Self { poses })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Pose3> {
        self.poses.get(i).map(|p| &p.1)
    }

    pub fn find(&self, t: f64) -> Option<usize> {
        self.poses.iter().position(|(tp, _)| (tp - t).abs() < TIME_EPS)
    }

    pub fn as_slice(&self) -> &[(f64, Pose3)] {
        &self.poses
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MccConfig {
    pub max_count: usize,
    pub threshold_px: f64,
}

impl Default for MccConfig {
    fn default() -> Self {
        Self {
            max_count: 70,
            threshold_px: 3.0,
        }
    }
}

/// Mean reprojection magnitude of a fixed point over the track.
pub fn mean_reprojection(
    point: &Vector3<f64>,
    track: &[(usize, Vector2<f64>)],
    poses: &PredictedPoses,
    cam: &PinholeCamera,
) -> Result<f64> {
    let mut sum = 0.0;
    for (idx, uv) in track {
        let pose = poses.get(*idx).ok_or(Error::MissingClone)?;
        sum += (uv - cam.project(&pose.transform_point(point))?).norm();
    }
    Ok(sum / track.len() as f64)
}

/// Triangulates the track against the predicted poses and returns its mean
/// reprojection error in pixels.
pub fn mcc_residual(track: &[(usize, Vector2<f64>)], poses: &PredictedPoses, cam: &PinholeCamera) -> Result<f64> {
    let obs = track
        .iter()
        .map(|(idx, uv)| poses.get(*idx).map(|p| (*p, *uv)).ok_or(Error::MissingClone))
        .collect::<Result<Vec<_>>>()?;
    let point = triangulate_point(&obs, cam)?;
    mean_reprojection(&point, track, poses, cam)
}

/// Maps a timestamped track onto pose indices; observations without a pose
/// are dropped.
pub fn index_track(track: &PointTrack, poses: &PredictedPoses) -> Vec<(usize, Vector2<f64>)> {
    track
        .obs
        .iter()
        .filter_map(|(t, uv)| poses.find(*t).map(|i| (i, *uv)))
        .collect()
}

/// Indices (into `tracks`) of the first `max_count` tracks in id order that
/// pass the check. Triangulation failures count as failing.
pub fn select_static_points(
    tracks: &[PointTrack],
    poses: &PredictedPoses,
    cam: &PinholeCamera,
    cfg: &MccConfig,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tracks.len()).collect();
    order.sort_by_key(|&i| tracks[i].id);
    let mut out = Vec::new();
    for i in order {
        if out.len() >= cfg.max_count {
            break;
        }
        let indexed = index_track(&tracks[i], poses);
        if indexed.len() < 2 {
            continue;
        }
        if let Ok(r) = mcc_residual(&indexed, poses, cam) {
            if r < cfg.threshold_px {
                out.push(i);
            }
        }
    }
    out
}
