//! Compressive sensing toolkit.
//!
//! Implicit randomized Sylvester-Hadamard sensing operators (single space and
//! the Kronecker joint space), ADMM reconstruction solvers for LASSO and
//! total-variation problems, sensing-matrix diagnostics, an FMCW LiDAR
//! compressive depth-mapping simulator, and information-theoretic metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod hadamard;
pub mod io;
pub mod lidar;
pub mod linalg;
pub mod quantuminfo;
pub mod rng;
pub mod sensing;
pub mod solvers;
pub mod transforms;

pub use error::{Error, Result};
pub use hadamard::{dense_hadamard, fwht, fwht_in_place, hadamard_row, HadamardOrder};
pub use sensing::{BlockDiagonalSensor, JointSelector, PermutedSelector};
pub use solvers::{LinearOperatorHandle, SolveOutcome, SolverConfig};
pub use transforms::{GradientOperator, WaveletPlan};
pub use lidar::{ChirpConfig, DepthMap, LidarMeasurement, NoiseParams, ReconstructionConfig, Scene, SweepConfig};
pub use quantuminfo::{DensityMatrix, Distribution, LockingParams};
