//! Trajectory error metrics.

use nalgebra::{Matrix3, Vector3};

/// Rigid transform `(R, t)` minimizing `Σ |R est_i + t − gt_i|²`.
pub fn align_rigid(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = est.len().min(gt.len());
    if n == 0 {
        return (Matrix3::identity(), Vector3::zeros());
    }
    let me = est[..n].iter().sum::<Vector3<f64>>() / n as f64;
    let mg = gt[..n].iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for (e, g) in est[..n].iter().zip(&gt[..n]) {
        cov += (g - mg) * (e - me).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    (r, mg - r * me)
}

/// Position RMSE over pairs with matching timestamps, optionally after rigid
/// alignment.
pub fn ate_rmse(est: &[(f64, Vector3<f64>)], gt: &[(f64, Vector3<f64>)], align: bool) -> Option<f64> {
    let mut e = Vec::new();
    let mut g = Vec::new();
    let mut j = 0;
    for (t, p) in est {
        while j < gt.len() && gt[j].0 < t - 1e-6 {
            j += 1;
        }
        if j < gt.len() && (gt[j].0 - t).abs() <= 1e-6 {
            e.push(*p);
            g.push(gt[j].1);
        }
    }
    if e.is_empty() {
        return None;
    }
    let (r, t) = if align && e.len() >= 3 {
        align_rigid(&e, &g)
    } else {
        (Matrix3::identity(), Vector3::zeros())
    };
    let sse: f64 = e.iter().zip(&g).map(|(a, b)| (r * a + t - b).norm_squared()).sum();
    Some((sse / e.len() as f64).sqrt())
}
