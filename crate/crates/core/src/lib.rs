//! Estimation core for point-line visual-inertial-wheel odometry.
//!
//! Everything in this crate is pure computation over `alloc` collections and
//! `nalgebra` matrices, so it builds without `std`. Sensor ingestion, file
//! formats, the Monte Carlo harness and the command-line tool live in the
//! `plviwo` companion crate.
//!
//! Frame conventions used throughout:
//!
//! * `R_ab` rotates vectors expressed in frame `b` into frame `a`.
//! * A [`Pose3`] maps points `x_out = R x_in + t`; a camera pose named
//!   `pose_cg` maps global points into the camera frame.
//! * Plücker lines store the moment `n = p × v` for any point `p` on the line.
//! * The filter error state perturbs rotations on the left:
//!   `R_IG = Exp(δθ) · R̂_IG`; all other quantities are additive.

#![no_std]
#![allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod line_frontend;
pub mod math;
pub mod mcc;
pub mod triangulation;
pub mod wheel;

pub use error::{Error, Result};
pub use geometry::{OrthonormalLine, PinholeCamera, PluckerLine, Pose3, Rotation3, Segment2D};
