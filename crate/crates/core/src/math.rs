//! Scalar transcendental helpers (backed by `libm` so the crate stays
//! `no_std`) and SO(3) utilities.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

/// Angles below this use the Taylor branch of the closed forms.
pub const SMALL_ANGLE: f64 = 1e-8;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn acos(x: f64) -> f64 {
    libm::acos(x.clamp(-1.0, 1.0))
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut r = libm::fmod(a + core::f64::consts::PI, two_pi);
    if r <= 0.0 {
        r += two_pi;
    }
    r - core::f64::consts::PI
}

/// `[v]×`, the matrix with `skew(a) * b == a × b`.
#[inline]
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = sqrt(theta2);
    let k = skew(w);
    if theta < SMALL_ANGLE {
        Matrix3::identity() + k + 0.5 * k * k
    } else {
        Matrix3::identity() + (sin(theta) / theta) * k + ((1.0 - cos(theta)) / theta2) * k * k
    }
}

/// Unit quaternion of `Exp(w)`.
pub fn quat_exp(w: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta2 = w.norm_squared();
    let theta = sqrt(theta2);
    let (real, imag_scale) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        (cos(0.5 * theta), sin(0.5 * theta) / theta)
    };
    let imag = w * imag_scale;
    UnitQuaternion::new_normalize(Quaternion::new(real, imag.x, imag.y, imag.z))
}

/// Rotation vector of a unit quaternion, angle in `[0, π]`.
pub fn quat_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let s = v.norm();
    if s < SMALL_ANGLE {
        // 2 atan(s/w)/s ≈ (2/w)(1 - s²/(3w²))
        v * (2.0 / w) * (1.0 - s * s / (3.0 * w * w))
    } else {
        v * (2.0 * atan2(s, w) / s)
    }
}

/// Rotation vector of a rotation matrix.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
    quat_log(&UnitQuaternion::from_rotation_matrix(&rot))
}

/// Right Jacobian of SO(3): `Exp(φ + δ) ≈ Exp(φ) Exp(Jr(φ) δ)`.
pub fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = sqrt(theta2);
    let k = skew(phi);
    if theta < 1e-5 {
        Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k
    } else {
        Matrix3::identity() - ((1.0 - cos(theta)) / theta2) * k + ((theta - sin(theta)) / (theta2 * theta)) * k * k
    }
}

/// Inverse of [`so3_right_jacobian`]: `Log(Exp(φ) Exp(δ)) ≈ φ + Jr⁻¹(φ) δ`.
pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let theta = sqrt(theta2);
    let k = skew(phi);
    if theta < 1e-5 {
        Matrix3::identity() + 0.5 * k + (1.0 / 12.0) * k * k
    } else {
        let c = 1.0 / theta2 - (1.0 + cos(theta)) / (2.0 * theta * sin(theta));
        Matrix3::identity() + 0.5 * k + c * k * k
    }
}

/// Projects a nearly orthonormal matrix onto SO(3).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let gln = libm::lgamma(a);
    if x < a + 1.0 {
        let mut sum = 1.0 / a;
        let mut del = sum;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * exp(-x + a * ln(x) - gln)
    } else {
        // Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - exp(-x + a * ln(x) - gln) * h
    }
}

/// Chi-square CDF.
pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    gamma_p(0.5 * dof as f64, 0.5 * x)
}

/// Chi-square quantile by bisection on the CDF.
pub fn chi2_quantile(p: f64, dof: usize) -> f64 {
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
