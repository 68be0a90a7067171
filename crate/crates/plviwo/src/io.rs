//! CSV and TUM readers and writers. Readers report the 1-based line number of
//! the offending row.
//!
//! | file | columns |
//! |------|---------|
//! | IMU | `t,wx,wy,wz,ax,ay,az` |
//! | wheel | `t,omega_left,omega_right` |
//! | point tracks | `frame,track_id,u,v` |
//! | line segments | `frame,line_id,us,vs,ue,ve` |
//! | trajectory (TUM) | `t x y z qx qy qz qw`, space separated, `#` comments |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use plviwo_core::estimator::ImuSample;
use plviwo_core::geometry::{Rotation3, Segment2D};
use plviwo_core::line_frontend::{PointId, TrackedPoint};
use plviwo_core::wheel::WheelMeasurement;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::pipeline::TrajectoryPoint;
use crate::sim::scenario::{CellSummary, TrialResult};
use crate::sim::world::{frame_time, FrameData, SensorLog};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Row { path: String, line: u64, msg: String },
    #[error("{path}: {msg}")]
    Write { path: String, msg: String },
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> IoError {
    IoError::Write {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(row) => {
                // header is line 1
                out.push((out.len() as u64 + 2, row));
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                let msg = match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                    _ => e.to_string(),
                };
                return Err(IoError::Row {
                    path: path.display().to_string(),
                    line,
                    msg,
                });
            }
        }
    }
    Ok(out)
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| write_err(path, e))
}

fn row_err(path: &Path, line: u64, msg: impl Into<String>) -> IoError {
    IoError::Row {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    wx: f64,
    wy: f64,
    wz: f64,
    ax: f64,
    ay: f64,
    az: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct WheelRow {
    t: f64,
    omega_left: f64,
    omega_right: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PointRow {
    frame: u64,
    track_id: u64,
    u: f64,
    v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct LineRow {
    frame: u64,
    line_id: u64,
    us: f64,
    vs: f64,
    ue: f64,
    ve: f64,
}

fn check_finite(path: &Path, line: u64, vals: &[f64]) -> Result<(), IoError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(row_err(path, line, "non-finite value"))
    }
}

fn check_increasing(path: &Path, line: u64, prev: Option<f64>, t: f64) -> Result<(), IoError> {
    match prev {
        Some(p) if t <= p => Err(row_err(path, line, format!("timestamp {t} not after {p}"))),
        _ => Ok(()),
    }
}

pub fn read_imu(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let mut out: Vec<ImuSample> = Vec::new();
    for (line, r) in read_rows::<ImuRow>(path)? {
        check_finite(path, line, &[r.t, r.wx, r.wy, r.wz, r.ax, r.ay, r.az])?;
        check_increasing(path, line, out.last().map(|s| s.t), r.t)?;
        out.push(ImuSample::new(
            r.t,
            Vector3::new(r.wx, r.wy, r.wz),
            Vector3::new(r.ax, r.ay, r.az),
        ));
    }
    Ok(out)
}

pub fn write_imu(path: &Path, imu: &[ImuSample]) -> Result<(), IoError> {
    write_rows(
        path,
        imu.iter().map(|s| ImuRow {
            t: s.t,
            wx: s.w.x,
            wy: s.w.y,
            wz: s.w.z,
            ax: s.a.x,
            ay: s.a.y,
            az: s.a.z,
        }),
    )
}

pub fn read_wheel(path: &Path) -> Result<Vec<WheelMeasurement>, IoError> {
    let mut out: Vec<WheelMeasurement> = Vec::new();
    for (line, r) in read_rows::<WheelRow>(path)? {
        check_finite(path, line, &[r.t, r.omega_left, r.omega_right])?;
        check_increasing(path, line, out.last().map(|s| s.t), r.t)?;
        out.push(WheelMeasurement::new(r.t, r.omega_left, r.omega_right));
    }
    Ok(out)
}

pub fn write_wheel(path: &Path, ms: &[WheelMeasurement]) -> Result<(), IoError> {
    write_rows(
        path,
        ms.iter().map(|m| WheelRow {
            t: m.t,
            omega_left: m.w_ml,
            omega_right: m.w_mr,
        }),
    )
}

fn check_frame(path: &Path, line: u64, prev: Option<u64>, frame: u64, id: u64) -> Result<(), IoError> {
    if prev.is_some_and(|p| frame < p) {
        return Err(row_err(path, line, format!("frame {frame} goes backwards")));
    }
    if id == 0 {
        return Err(row_err(path, line, "ids must be positive"));
    }
    Ok(())
}

pub fn read_points(path: &Path) -> Result<BTreeMap<u64, Vec<TrackedPoint>>, IoError> {
    let mut out: BTreeMap<u64, Vec<TrackedPoint>> = BTreeMap::new();
    let mut prev = None;
    for (line, r) in read_rows::<PointRow>(path)? {
        check_frame(path, line, prev, r.frame, r.track_id)?;
        check_finite(path, line, &[r.u, r.v])?;
        let frame = out.entry(r.frame).or_default();
        if frame.iter().any(|p| p.id == r.track_id) {
            return Err(row_err(
                path,
                line,
                format!("track {} repeated in frame {}", r.track_id, r.frame),
            ));
        }
        frame.push(TrackedPoint {
            id: r.track_id as PointId,
            uv: Vector2::new(r.u, r.v),
        });
        prev = Some(r.frame);
    }
    Ok(out)
}

pub fn write_points(path: &Path, frames: &[FrameData]) -> Result<(), IoError> {
    write_rows(
        path,
        frames.iter().flat_map(|f| {
            f.points.iter().map(move |p| PointRow {
                frame: f.index as u64,
                track_id: p.id,
                u: p.uv.x,
                v: p.uv.y,
            })
        }),
    )
}

pub fn read_lines(path: &Path) -> Result<BTreeMap<u64, Vec<Segment2D>>, IoError> {
    let mut out: BTreeMap<u64, Vec<Segment2D>> = BTreeMap::new();
    let mut prev = None;
    for (line, r) in read_rows::<LineRow>(path)? {
        check_frame(path, line, prev, r.frame, r.line_id)?;
        check_finite(path, line, &[r.us, r.vs, r.ue, r.ve])?;
        let seg = Segment2D::from_coords(r.us, r.vs, r.ue, r.ve).map_err(|e| row_err(path, line, e.to_string()))?;
        out.entry(r.frame).or_default().push(seg);
        prev = Some(r.frame);
    }
    Ok(out)
}

/// Segment ids are per-frame detection indices starting at 1.
pub fn write_lines(path: &Path, frames: &[FrameData]) -> Result<(), IoError> {
    write_rows(
        path,
        frames.iter().flat_map(|f| {
            f.segments.iter().enumerate().map(move |(i, s)| LineRow {
                frame: f.index as u64,
                line_id: i as u64 + 1,
                us: s.start().x,
                vs: s.start().y,
                ue: s.end().x,
                ve: s.end().y,
            })
        }),
    )
}

/// Assembles frames from per-frame tracks. Frames run from 0 to the last IMU
/// timestamp at `camera_rate`, empty frames included.
pub fn assemble_log(
    imu: Vec<ImuSample>,
    wheel: Vec<WheelMeasurement>,
    mut points: BTreeMap<u64, Vec<TrackedPoint>>,
    mut lines: BTreeMap<u64, Vec<Segment2D>>,
    camera_rate: f64,
) -> SensorLog {
    let t_end = imu.last().map(|s| s.t).unwrap_or(0.0);
    let n = (t_end * camera_rate + 1e-9).floor() as usize + 1;
    let frames = (0..n)
        .map(|k| FrameData {
            index: k,
            t: frame_time(k, camera_rate),
            points: points.remove(&(k as u64)).unwrap_or_default(),
            segments: lines.remove(&(k as u64)).unwrap_or_default(),
        })
        .collect();
    SensorLog { imu, wheel, frames }
}

pub fn write_tum(path: &Path, traj: &[TrajectoryPoint]) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| write_err(path, e))?);
    writeln!(f, "# t x y z qx qy qz qw").map_err(|e| write_err(path, e))?;
    for p in traj {
        let q = p.r_gi.quaternion();
        writeln!(
            f,
            "{} {} {} {} {} {} {} {}",
            p.t, p.p.x, p.p.y, p.p.z, q.i, q.j, q.k, q.w
        )
        .map_err(|e| write_err(path, e))?;
    }
    f.flush().map_err(|e| write_err(path, e))
}

pub fn read_tum(path: &Path) -> Result<Vec<TrajectoryPoint>, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open {
        path: path.display().to_string(),
        source,
    })?;
    let mut out: Vec<TrajectoryPoint> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let n = i as u64 + 1;
        let line = line.map_err(|e| row_err(path, n, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = trimmed
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|e| row_err(path, n, format!("{s:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 8 {
            return Err(row_err(path, n, format!("expected 8 columns, found {}", vals.len())));
        }
        check_finite(path, n, &vals)?;
        check_increasing(path, n, out.last().map(|p| p.t), vals[0])?;
        let r_gi = Rotation3::from_quaternion(vals[7], vals[4], vals[5], vals[6])
            .map_err(|e| row_err(path, n, e.to_string()))?;
        out.push(TrajectoryPoint {
            t: vals[0],
            r_gi,
            p: Vector3::new(vals[1], vals[2], vals[3]),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct InitRow<'a> {
    scenario: u8,
    #[serde(rename = "type")]
    kind: &'a str,
    sigma_ob: f64,
    trial: usize,
    e_norm: f64,
    e_dir: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ResultRow<'a> {
    scenario: u8,
    #[serde(rename = "type")]
    kind: &'a str,
    trial: usize,
    e_norm: f64,
    e_dir: f64,
}

/// `scenario,type,sigma_ob,trial,e_norm,e_dir`; failed trials carry NaN.
pub fn write_init_results(path: &Path, rows: &[TrialResult]) -> Result<(), IoError> {
    write_rows(
        path,
        rows.iter().map(|r| InitRow {
            scenario: r.scenario,
            kind: &r.kind,
            sigma_ob: r.sigma_ob,
            trial: r.trial,
            e_norm: r.e_norm,
            e_dir: r.e_dir,
        }),
    )
}

/// `scenario,type,trial,e_norm,e_dir`.
pub fn write_results(path: &Path, rows: &[TrialResult]) -> Result<(), IoError> {
    write_rows(
        path,
        rows.iter().map(|r| ResultRow {
            scenario: r.scenario,
            kind: &r.kind,
            trial: r.trial,
            e_norm: r.e_norm,
            e_dir: r.e_dir,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
struct ResultRowOwned {
    scenario: u8,
    #[serde(rename = "type")]
    kind: String,
    trial: usize,
    e_norm: f64,
    e_dir: f64,
}

/// Reads a `scenario,type,trial,e_norm,e_dir` table.
pub fn read_results(path: &Path) -> Result<Vec<TrialResult>, IoError> {
    Ok(read_rows::<ResultRowOwned>(path)?
        .into_iter()
        .map(|(_, r)| TrialResult {
            scenario: r.scenario,
            kind: r.kind,
            sigma_ob: f64::NAN,
            trial: r.trial,
            e_norm: r.e_norm,
            e_dir: r.e_dir,
            iterations: 0,
            error: None,
        })
        .collect())
}

pub fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<(), IoError> {
    write_rows(path, cells)
}
