//! Tree-search MIMO detection.
//!
//! The crate is organised around the detection pipeline:
//!
//! * [`model`] draws constellations, Rayleigh channels and noisy observations.
//! * [`linalg`] holds the complex kernels: Householder QR, the rotation of the
//!   observation into the triangular domain and the batched successor metric.
//! * [`linear`] implements the MRC / ZF / MMSE baselines.
//! * [`sd`] is the serial sphere decoder (BFS, DFS and best-first pools, grouped
//!   branching, incremental partial distances) and the exhaustive ML oracle.
//! * [`parallel`] contains the shared-tree parallel decoder and the
//!   master/worker decoder with static or dynamic load balancing.
//! * [`kbest`] provides the fixed-complexity K-best detector and the hybrid
//!   sphere-decoder / K-best detector.
//! * [`audit`] records search traces and checks them against independent
//!   reference computations.
//! * [`harness`] runs Monte Carlo campaigns over SNR grids and writes CSV
//!   metric tables.

pub mod audit;
pub mod error;
pub mod harness;
pub mod kbest;
pub mod linalg;
pub mod linear;
pub mod model;
pub mod parallel;
pub mod sd;

pub use error::{Error, Result};
pub use kbest::{kbest_decode, sd_kbest_decode, KbestConfig};
pub use linalg::{preprocess, CMatrix, PreprocessedProblem, RadiusPolicy};
pub use linear::{linear_decode, LinearKind};
pub use model::{generate_instance, Constellation, ConstellationKind, MimoInstance};
pub use parallel::{pl_sd_decode, psd_decode, Balancing, PsdConfig, SharedRadius};
pub use sd::{ml_bruteforce, sd_decode, DetectionReport, SearchNode, Strategy};

pub use num_complex::Complex64;
