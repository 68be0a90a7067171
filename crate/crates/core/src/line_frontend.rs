//! Coordinate-level 2D line processing: merging split segments, vanishing
//! point classification, point-to-segment assignment and the two-stage
//! point-assisted line tracker.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::geometry::{PinholeCamera, Rotation3, Segment2D};
use crate::math;

pub type PointId = u64;
pub type LineId = u64;

/// Principal direction of a segment relative to the IMU axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DirectionClass {
    X,
    Y,
    Z,
    None,
}

impl DirectionClass {
    /// Axis index, `None` for the unclassified bucket.
    pub fn axis(self) -> Option<usize> {
        match self {
            DirectionClass::X => Some(0),
            DirectionClass::Y => Some(1),
            DirectionClass::Z => Some(2),
            DirectionClass::None => None,
        }
    }

    pub fn from_axis(axis: usize) -> Self {
        match axis {
            0 => DirectionClass::X,
            1 => DirectionClass::Y,
            2 => DirectionClass::Z,
            _ => DirectionClass::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedPoint {
    pub id: PointId,
    pub uv: Vector2<f64>,
}

/// One detected segment in one frame, with its front-end annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct LineObservation {
    /// Persistent track id, 0 while unmatched.
    pub line_id: LineId,
    pub seg: Segment2D,
    pub assigned_point_ids: Vec<PointId>,
    pub dir_class: DirectionClass,
}

impl LineObservation {
    pub fn new(seg: Segment2D) -> Self {
        Self {
            line_id: 0,
            seg,
            assigned_point_ids: Vec::new(),
            dir_class: DirectionClass::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VanishingPoint {
    /// Pixel location.
    Finite(Vector2<f64>),
    /// Image direction of a vanishing point at infinity (unit, first nonzero
    /// component positive).
    AtInfinity(Vector2<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishingPoints {
    pub axes: [VanishingPoint; 3],
}

/// `|z|` below which an axis direction maps to a vanishing point at infinity.
pub const VP_EPS_Z: f64 = 1e-6;

/// Tunables of the front-end. The merge and one-shared-point thresholds are
/// not fixed by the method; these defaults sit on the 3-px assignment scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontendConfig {
    pub class_threshold: f64,
    pub assign_max_dist: f64,
    pub min_length: f64,
    pub merge_angle_tol: f64,
    pub merge_gap_tol: f64,
    pub merge_lateral_tol: f64,
    pub track_pos_tol: f64,
    pub track_dir_tol: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            class_threshold: 0.97,
            assign_max_dist: 3.0,
            min_length: 30.0,
            merge_angle_tol: 3.0_f64.to_radians(),
            merge_gap_tol: 10.0,
            merge_lateral_tol: 3.0,
            track_pos_tol: 30.0,
            track_dir_tol: 5.0_f64.to_radians(),
        }
    }
}

/// Vanishing points of the three IMU axes seen through the camera.
pub fn compute_vanishing_points(cam: &PinholeCamera, r_ci: &Rotation3) -> VanishingPoints {
    let m = r_ci.matrix();
    let axis = |k: usize| {
        let d = m.column(k);
        if d.z.abs() > VP_EPS_Z {
            VanishingPoint::Finite(Vector2::new(
                cam.fx() * d.x / d.z + cam.cx(),
                cam.fy() * d.y / d.z + cam.cy(),
            ))
        } else {
            let mut dir = Vector2::new(cam.fx() * d.x, cam.fy() * d.y);
            dir /= dir.norm();
            let first = if dir.x != 0.0 { dir.x } else { dir.y };
            if first < 0.0 {
                dir = -dir;
            }
            VanishingPoint::AtInfinity(dir)
        }
    };
    VanishingPoints {
        axes: [axis(0), axis(1), axis(2)],
    }
}

/// Similarity of a segment with each axis' vanishing direction.
pub fn vanishing_scores(seg: &Segment2D, vps: &VanishingPoints) -> [f64; 3] {
    let dir = seg.direction();
    let mid = seg.midpoint();
    let mut out = [0.0; 3];
    for (k, vp) in vps.axes.iter().enumerate() {
        out[k] = match vp {
            VanishingPoint::Finite(p) => {
                let to_vp = p - mid;
                let len = to_vp.norm();
                if len > 1e-9 {
                    (dir.dot(&to_vp) / len).abs()
                } else {
                    0.0
                }
            }
            VanishingPoint::AtInfinity(d) => dir.dot(d).abs(),
        };
    }
    out
}

/// Assigns the best-scoring axis when its score exceeds `threshold`; ties go
/// to the earlier axis.
pub fn classify_segment(seg: &Segment2D, vps: &VanishingPoints, threshold: f64) -> DirectionClass {
    let s = vanishing_scores(seg, vps);
    let mut best = 0;
    for k in 1..3 {
        if s[k] > s[best] {
            best = k;
        }
    }
    if s[best] > threshold {
        DirectionClass::from_axis(best)
    } else {
        DirectionClass::None
    }
}

/// Projection parameter `cross` and squared length of the segment.
fn projection_terms(p: &Vector2<f64>, seg: &Segment2D) -> (f64, f64) {
    let s = seg.start();
    let e = seg.end();
    let cross = (e.x - s.x) * (p.x - s.x) + (e.y - s.y) * (p.y - s.y);
    let len2 = (e - s).norm_squared();
    (cross, len2)
}

/// Perpendicular distance from `p` to the infinite support line of `seg`.
pub fn perpendicular_distance(p: &Vector2<f64>, seg: &Segment2D) -> f64 {
    let s = seg.start();
    let e = seg.end();
    let num = (e.y - s.y) * p.x + (s.x - e.x) * p.y + (e.x * s.y - s.x * e.y);
    num.abs() / math::sqrt((e.y - s.y) * (e.y - s.y) + (s.x - e.x) * (s.x - e.x))
}

/// Point-to-segment distance with the endpoint cases.
pub fn point_segment_distance(p: &Vector2<f64>, seg: &Segment2D) -> f64 {
    let (cross, len2) = projection_terms(p, seg);
    if cross <= 0.0 {
        (p - seg.start()).norm()
    } else if cross > len2 {
        (p - seg.end()).norm()
    } else {
        perpendicular_distance(p, seg)
    }
}

/// `true` when `p` projects strictly inside `seg` and lies within `max_dist`
/// of its support line.
pub fn point_on_segment(p: &Vector2<f64>, seg: &Segment2D, max_dist: f64) -> bool {
    let (cross, len2) = projection_terms(p, seg);
    cross > 0.0 && cross < len2 && perpendicular_distance(p, seg) < max_dist
}

/// For each segment, the ids of points lying on it, in input order.
pub fn assign_points_to_segments(points: &[TrackedPoint], segs: &[Segment2D], max_dist: f64) -> Vec<Vec<PointId>> {
    segs.iter()
        .map(|seg| {
            points
                .iter()
                .filter(|p| point_on_segment(&p.uv, seg, max_dist))
                .map(|p| p.id)
                .collect()
        })
        .collect()
}

pub fn filter_short(segs: &[Segment2D], min_len: f64) -> Vec<Segment2D> {
    segs.iter().copied().filter(|s| s.length() >= min_len).collect()
}

/// Angle in `[0, π/2]` between the support lines of two segments.
pub fn undirected_angle(a: &Segment2D, b: &Segment2D) -> f64 {
    math::acos(a.direction().dot(&b.direction()).abs())
}

fn mergeable(a: &Segment2D, b: &Segment2D, angle_tol: f64, gap_tol: f64, lateral_tol: f64) -> bool {
    if undirected_angle(a, b) >= angle_tol {
        return false;
    }
    let (long, short) = if a.length() >= b.length() { (a, b) } else { (b, a) };
    if perpendicular_distance(&short.start(), long) >= lateral_tol
        || perpendicular_distance(&short.end(), long) >= lateral_tol
    {
        return false;
    }
    let d = long.direction();
    let o = long.start();
    let t0 = 0.0;
    let t1 = long.length();
    let s0 = d.dot(&(short.start() - o));
    let s1 = d.dot(&(short.end() - o));
    let (s_lo, s_hi) = if s0 <= s1 { (s0, s1) } else { (s1, s0) };
    let gap = (s_lo - t1).max(t0 - s_hi).max(0.0);
    gap <= gap_tol
}

fn merge_pair(a: &Segment2D, b: &Segment2D) -> Segment2D {
    let (long, short) = if a.length() >= b.length() { (a, b) } else { (b, a) };
    let pts = [long.start(), long.end(), short.start(), short.end()];
    let mut best = (0, 1, (pts[1] - pts[0]).norm_squared());
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = (pts[j] - pts[i]).norm_squared();
            if d > best.2 {
                best = (i, j, d);
            }
        }
    }
    let (mut p, mut q) = (pts[best.0], pts[best.1]);
    if (q - p).dot(&(long.end() - long.start())) < 0.0 {
        core::mem::swap(&mut p, &mut q);
    }
    // hull of two positive-length segments always has positive length
    Segment2D::new(p, q).unwrap_or(*long)
}

/// Replaces collinear, near-adjacent segments by their extremal hull until no
/// pair qualifies.
pub fn merge_segments(segs: &[Segment2D], angle_tol: f64, gap_tol: f64, lateral_tol: f64) -> Vec<Segment2D> {
    let mut out: Vec<Segment2D> = segs.to_vec();
    'outer: loop {
        for i in 0..out.len() {
            for j in (i + 1)..out.len() {
                if mergeable(&out[i], &out[j], angle_tol, gap_tol, lateral_tol) {
                    let merged = merge_pair(&out[i], &out[j]);
                    out[i] = merged;
                    out.remove(j);
                    continue 'outer;
                }
            }
        }
        return out;
    }
}

/// A prev↔cur line correspondence (indices into the given slices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineMatch {
    pub prev: usize,
    pub cur: usize,
    pub shared: usize,
}

struct Candidate {
    prev: usize,
    cur: usize,
    shared: usize,
    displacement: f64,
}

fn rule_accepts(shared: usize, a: &Segment2D, b: &Segment2D, pos_tol: f64, dir_tol: f64) -> Option<f64> {
    let displacement = (a.midpoint() - b.midpoint()).norm();
    match shared {
        0 => None,
        1 if displacement < pos_tol && undirected_angle(a, b) < dir_tol => Some(displacement),
        1 => None,
        _ => Some(displacement),
    }
}

fn resolve_one_to_one(mut cands: Vec<Candidate>) -> Vec<LineMatch> {
    cands.sort_by(|a, b| {
        b.shared
            .cmp(&a.shared)
            .then(a.displacement.total_cmp(&b.displacement))
            .then(a.prev.cmp(&b.prev))
            .then(a.cur.cmp(&b.cur))
    });
    let mut used_prev = BTreeSet::new();
    let mut used_cur = BTreeSet::new();
    let mut out = Vec::new();
    for c in cands {
        if used_prev.contains(&c.prev) || used_cur.contains(&c.cur) {
            continue;
        }
        used_prev.insert(c.prev);
        used_cur.insert(c.cur);
        out.push(LineMatch {
            prev: c.prev,
            cur: c.cur,
            shared: c.shared,
        });
    }
    out.sort_by_key(|m| m.prev);
    out
}

/// First stage: correspondences through shared tracked points.
pub fn track_lines_stage1(
    prev: &[LineObservation],
    cur: &[LineObservation],
    point_matches: &BTreeMap<PointId, PointId>,
    pos_tol: f64,
    dir_tol: f64,
) -> Vec<LineMatch> {
    let cur_sets: Vec<BTreeSet<PointId>> = cur
        .iter()
        .map(|c| c.assigned_point_ids.iter().copied().collect())
        .collect();
    let mut cands = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        let mapped: BTreeSet<PointId> = p
            .assigned_point_ids
            .iter()
            .filter_map(|id| point_matches.get(id).copied())
            .collect();
        if mapped.is_empty() {
            continue;
        }
        for (j, c) in cur.iter().enumerate() {
            let shared = mapped.intersection(&cur_sets[j]).count();
            if let Some(displacement) = rule_accepts(shared, &p.seg, &c.seg, pos_tol, dir_tol) {
                cands.push(Candidate {
                    prev: i,
                    cur: j,
                    shared,
                    displacement,
                });
            }
        }
    }
    resolve_one_to_one(cands)
}

/// Endpoints, quarter points and midpoint used by the second stage.
pub fn stage2_samples(seg: &Segment2D) -> [Vector2<f64>; 5] {
    [
        seg.point_at(0.0),
        seg.point_at(0.25),
        seg.point_at(0.5),
        seg.point_at(0.75),
        seg.point_at(1.0),
    ]
}

/// Second stage: sample points of each untracked line are pushed through
/// `sample_tracker`; tracked samples within `assign_dist` of a current
/// segment count as shared points and the first-stage rules decide.
pub fn track_lines_stage2<F>(
    untracked_prev: &[LineObservation],
    cur: &[LineObservation],
    mut sample_tracker: F,
    pos_tol: f64,
    dir_tol: f64,
    assign_dist: f64,
) -> Vec<LineMatch>
where
    F: FnMut(&Vector2<f64>) -> Option<Vector2<f64>>,
{
    let mut cands = Vec::new();
    for (i, p) in untracked_prev.iter().enumerate() {
        let tracked: Vec<Vector2<f64>> = stage2_samples(&p.seg).iter().filter_map(&mut sample_tracker).collect();
        if tracked.is_empty() {
            continue;
        }
        for (j, c) in cur.iter().enumerate() {
            let shared = tracked
                .iter()
                .filter(|q| point_segment_distance(q, &c.seg) < assign_dist)
                .count();
            if let Some(displacement) = rule_accepts(shared, &p.seg, &c.seg, pos_tol, dir_tol) {
                cands.push(Candidate {
                    prev: i,
                    cur: j,
                    shared,
                    displacement,
                });
            }
        }
    }
    resolve_one_to_one(cands)
}

/// Both stages; stage two only sees lines left unmatched by stage one.
/// Indices refer to the full `prev` / `cur` slices.
pub fn track_lines<F>(
    prev: &[LineObservation],
    cur: &[LineObservation],
    point_matches: &BTreeMap<PointId, PointId>,
    sample_tracker: F,
    cfg: &FrontendConfig,
) -> Vec<LineMatch>
where
    F: FnMut(&Vector2<f64>) -> Option<Vector2<f64>>,
{
    let mut matches = track_lines_stage1(prev, cur, point_matches, cfg.track_pos_tol, cfg.track_dir_tol);
    let matched_prev: BTreeSet<usize> = matches.iter().map(|m| m.prev).collect();
    let matched_cur: BTreeSet<usize> = matches.iter().map(|m| m.cur).collect();
    let prev_idx: Vec<usize> = (0..prev.len()).filter(|i| !matched_prev.contains(i)).collect();
    let cur_idx: Vec<usize> = (0..cur.len()).filter(|j| !matched_cur.contains(j)).collect();
    if !prev_idx.is_empty() && !cur_idx.is_empty() {
        let p2: Vec<LineObservation> = prev_idx.iter().map(|&i| prev[i].clone()).collect();
        let c2: Vec<LineObservation> = cur_idx.iter().map(|&j| cur[j].clone()).collect();
        let extra = track_lines_stage2(
            &p2,
            &c2,
            sample_tracker,
            cfg.track_pos_tol,
            cfg.track_dir_tol,
            cfg.assign_max_dist,
        );
        matches.extend(extra.into_iter().map(|m| LineMatch {
            prev: prev_idx[m.prev],
            cur: cur_idx[m.cur],
            shared: m.shared,
        }));
        matches.sort_by_key(|m| m.prev);
    }
    matches
}

/// Runs filtering, merging, classification and point assignment on the raw
/// segments of one frame.
pub fn process_frame(
    raw: &[Segment2D],
    points: &[TrackedPoint],
    vps: &VanishingPoints,
    cfg: &FrontendConfig,
) -> Vec<LineObservation> {
    let merged = merge_segments(raw, cfg.merge_angle_tol, cfg.merge_gap_tol, cfg.merge_lateral_tol);
    let segs = filter_short(&merged, cfg.min_length);
    let assigned = assign_points_to_segments(points, &segs, cfg.assign_max_dist);
    segs.into_iter()
        .zip(assigned)
        .map(|(seg, ids)| LineObservation {
            line_id: 0,
            seg,
            assigned_point_ids: ids,
            dir_class: classify_segment(&seg, vps, cfg.class_threshold),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;

    fn seg(a: f64, b: f64, c: f64, d: f64) -> Segment2D {
        Segment2D::from_coords(a, b, c, d).unwrap()
    }

    fn cam() -> PinholeCamera {
        PinholeCamera::new(400.0, 400.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn vanishing_points_identity() {
        let vps = compute_vanishing_points(&cam(), &Rotation3::identity());
        assert_eq!(vps.axes[2], VanishingPoint::Finite(Vector2::new(320.0, 240.0)));
        assert_eq!(vps.axes[0], VanishingPoint::AtInfinity(Vector2::new(1.0, 0.0)));
        assert_eq!(vps.axes[1], VanishingPoint::AtInfinity(Vector2::new(0.0, 1.0)));
    }

    #[test]
    fn vanishing_point_of_rotated_axis() {
        // IMU x maps onto camera z
        let r = Rotation3::exp(&Vector3::new(0.0, -core::f64::consts::FRAC_PI_2, 0.0));
        assert_relative_eq!(r * Vector3::x(), Vector3::z(), epsilon = 1e-12);
        let vps = compute_vanishing_points(&cam(), &r);
        match vps.axes[0] {
            VanishingPoint::Finite(p) => assert_relative_eq!(p, Vector2::new(320.0, 240.0), epsilon = 1e-9),
            other => panic!("expected finite vp, got {other:?}"),
        }
    }

    #[test]
    fn classify_examples() {
        let vps = VanishingPoints {
            axes: [
                VanishingPoint::Finite(Vector2::new(1000.0, 0.0)),
                VanishingPoint::AtInfinity(Vector2::new(0.0, 1.0)),
                VanishingPoint::AtInfinity(Vector2::new(-1.0, 1.0).normalize()),
            ],
        };
        // collinear with midpoint → vp_x
        let s = seg(0.0, 0.0, 100.0, 0.0);
        assert_eq!(classify_segment(&s, &vps, 0.97), DirectionClass::X);
        assert_eq!(classify_segment(&s.reversed(), &vps, 0.97), DirectionClass::X);
        let s = seg(500.0, 100.0, 500.0, 200.0);
        assert_eq!(classify_segment(&s, &vps, 0.97), DirectionClass::Y);
        // 45° to x and y directions, perpendicular to z's: max score ≈ 0.707
        let vps2 = VanishingPoints {
            axes: [
                VanishingPoint::AtInfinity(Vector2::new(1.0, 0.0)),
                VanishingPoint::AtInfinity(Vector2::new(0.0, 1.0)),
                VanishingPoint::AtInfinity(Vector2::new(1.0, -1.0).normalize()),
            ],
        };
        let s = seg(0.0, 0.0, 50.0, 50.0);
        assert_eq!(classify_segment(&s, &vps2, 0.97), DirectionClass::None);
    }

    #[test]
    fn distance_cases() {
        let s = seg(0.0, 0.0, 10.0, 0.0);
        assert_relative_eq!(point_segment_distance(&Vector2::new(5.0, 3.0), &s), 3.0);
        assert_relative_eq!(point_segment_distance(&Vector2::new(-4.0, 3.0), &s), 5.0);
        assert_relative_eq!(point_segment_distance(&Vector2::new(13.0, 4.0), &s), 5.0);
    }

    #[test]
    fn assignment_interior_rule() {
        let s = seg(0.0, 0.0, 10.0, 0.0);
        let pts = [
            TrackedPoint {
                id: 1,
                uv: Vector2::new(5.0, 2.0),
            },
            TrackedPoint {
                id: 2,
                uv: Vector2::new(11.0, 2.0),
            },
            TrackedPoint {
                id: 3,
                uv: Vector2::new(5.0, 3.0),
            },
        ];
        assert_eq!(assign_points_to_segments(&pts, &[s], 3.0), vec![vec![1]]);
    }

    #[test]
    fn filter_short_boundary() {
        let segs = [seg(0.0, 0.0, 29.9, 0.0), seg(0.0, 0.0, 30.0, 0.0)];
        let kept = filter_short(&segs, 30.0);
        assert_eq!(kept.len(), 1);
        assert_relative_eq!(kept[0].length(), 30.0);
        assert!(filter_short(&[], 30.0).is_empty());
    }

    #[test]
    fn merge_examples() {
        let merged = merge_segments(&[seg(0.0, 0.0, 4.0, 0.0), seg(5.0, 0.0, 9.0, 0.0)], 0.05, 2.0, 3.0);
        assert_eq!(merged, vec![seg(0.0, 0.0, 9.0, 0.0)]);
        let perp = [seg(0.0, 0.0, 10.0, 0.0), seg(12.0, -5.0, 12.0, 5.0)];
        assert_eq!(merge_segments(&perp, 0.05, 10.0, 3.0), perp.to_vec());
    }

    #[test]
    fn stage1_rules() {
        let a = LineObservation {
            line_id: 7,
            seg: seg(0.0, 0.0, 100.0, 0.0),
            assigned_point_ids: vec![1, 2, 3],
            dir_class: DirectionClass::None,
        };
        let far = LineObservation {
            line_id: 0,
            seg: seg(0.0, 300.0, 80.0, 390.0),
            assigned_point_ids: vec![11, 12],
            dir_class: DirectionClass::None,
        };
        let matches: BTreeMap<u64, u64> = [(1, 11), (2, 12), (3, 13)].into_iter().collect();
        let m = track_lines_stage1(core::slice::from_ref(&a), &[far], &matches, 20.0, 0.1);
        assert_eq!(
            m,
            vec![LineMatch {
                prev: 0,
                cur: 0,
                shared: 2
            }]
        );

        let one = LineObservation {
            line_id: 0,
            seg: seg(40.0, 0.0, 140.0, 0.0),
            assigned_point_ids: vec![13],
            dir_class: DirectionClass::None,
        };
        assert!(track_lines_stage1(
            core::slice::from_ref(&a),
            core::slice::from_ref(&one),
            &matches,
            20.0,
            0.1
        )
        .is_empty());
        assert_eq!(track_lines_stage1(&[a], &[one], &matches, 50.0, 0.1).len(), 1);
    }

    #[test]
    fn stage2_all_or_nothing() {
        let p = LineObservation::new(seg(0.0, 0.0, 100.0, 0.0));
        let c = LineObservation::new(seg(5.0, 2.0, 105.0, 2.0));
        let m = track_lines_stage2(
            core::slice::from_ref(&p),
            core::slice::from_ref(&c),
            |q| Some(q + Vector2::new(5.0, 2.0)),
            30.0,
            0.1,
            3.0,
        );
        assert_eq!(
            m,
            vec![LineMatch {
                prev: 0,
                cur: 0,
                shared: 5
            }]
        );
        let m = track_lines_stage2(&[p], &[c], |_| None, 30.0, 0.1, 3.0);
        assert!(m.is_empty());
    }
}
