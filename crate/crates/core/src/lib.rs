//! Joint active/passive beamforming and surface selection for multi-IRS
//! aided mmWave downlink MISO systems.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`]: configuration, user placement, seeded random streams and
//!   unit conversion.
//! - [`channel`]: Saleh-Valenzuela channel synthesis with ULA/UPA responses
//!   and log-distance path loss.
//! - [`system`]: cascaded and effective channels, SINR, rates.
//! - [`fp`]: Lagrangian-dual and quadratic-transform machinery, closed-form
//!   auxiliary updates and assembly of the two convex subproblems.
//! - [`cone`]: a dense interior-point solver for concave quadratic objectives
//!   under ball, box and second-order-cone constraints.
//! - [`selection`]: exhaustive surface-to-user assignment.
//! - [`optimizer`]: the alternating loop and the WIS/RPS/NIS baselines.
//! - [`experiment`]: Monte Carlo drivers writing CSV/JSON results.
//!
//! Runnable walkthroughs of each layer live in `examples/`.

pub mod channel;
pub mod cone;
mod error;
pub mod experiment;
pub mod fp;
pub mod optimizer;
pub mod scenario;
pub mod selection;
pub mod system;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Complex dense matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
