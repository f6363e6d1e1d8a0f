//! Joint shape and pose estimation from 3-D keypoints with an active shape
//! model.
//!
//! The pose problem is reduced to a quartic over the unit quaternions and
//! solved by a self-consistent field iteration. A Lagrangian certificate
//! over the orthogonal-matrix relaxation can confirm global optimality.
//! Gauss–Newton and Levenberg–Marquardt baselines, a graduated non-convexity
//! wrapper for outliers, and synthetic benchmarks are included.

// negated comparisons are used on purpose: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cert;
pub mod error;
pub mod io;
pub mod model;
pub mod quat;
pub mod robust;
pub mod scalar;
pub mod scf;
pub mod solver;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use baseline::{gn_solve, GnConfig};
pub use cert::{certify, certify_with, Certificate, ConstraintForm, StandardForm, Verdict};
pub use error::{Error, Result};
pub use model::{objective_full, Estimate, Precomputed, ShapeProblem};
pub use quat::{RotationMatrix, UnitQuaternion};
pub use robust::{gnc_solve, gnc_solve_masked, GncConfig, GncResult};
pub use scalar::Real;
pub use scf::{scf_solve, ScfConfig, ScfInit, ScfTrace};
pub use solver::{solve, Solver, SolverConfig};
pub use synth::{generate, GroundTruth, SynthConfig};

pub type ShapeProblem64 = ShapeProblem<f64>;
pub type ShapeProblem32 = ShapeProblem<f32>;
pub type Precomputed64 = Precomputed<f64>;
pub type Precomputed32 = Precomputed<f32>;
pub type Estimate64 = Estimate<f64>;
pub type Estimate32 = Estimate<f32>;
