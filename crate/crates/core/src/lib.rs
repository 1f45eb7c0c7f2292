//! Energy-efficiency simulation and optimization for cell-free massive MIMO
//! networks aided by multiple reconfigurable intelligent surfaces (RIS).
//!
//! The crate is organized bottom-up:
//!
//! - [`scenario`]: configuration, topology placement and large-scale statistics.
//! - [`channel`]: small-scale channel synthesis and the RIS-cascaded effective channel.
//! - [`estimation`]: MMSE direct estimation of the aggregate channel.
//! - [`precoding`]: ZF precoding over active APs, heuristic power and imperfect-CSI rates.
//! - [`power_model`]: total power consumption with AP sleep states, and EE.
//! - [`system`]: a per-coherence-block evaluator tying the above together.
//! - [`ap_select`], [`power_alloc`], [`ris_opt`]: the three subproblem solvers.
//! - [`optimizer`]: Dinkelbach outer loop with alternating optimization.
//! - [`harness`]: Monte Carlo experiment runner and CSV outputs.
//!
//! Data-parallel loops (Monte Carlo trials, finite-difference gradients, WOA
//! populations, exhaustive enumeration) run on rayon when the `parallel`
//! feature is enabled, and sequentially otherwise. See [`par::Execution`].

pub mod ap_select;
pub mod channel;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod par;
pub mod power_alloc;
pub mod power_model;
pub mod precoding;
pub mod ris_opt;
pub mod scenario;
pub mod system;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<Complex64>;
