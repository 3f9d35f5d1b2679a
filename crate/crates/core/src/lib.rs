//! Anytime-feasible distributed resource allocation.
//!
//! A synchronous simulator of the DanyRA primal-dual method (inequality
//! coupled constraint, virtual queue with minimum buffer) and its equality
//! variant Eq-DanyRA, together with KKT reference solvers, disturbance
//! injection, and trace metrics.
//!
//! ```no_run
//! use danyra::engine::{Engine, InitMode};
//! use danyra::problem::{generate_instance, BufferSchedule, HyperParams, Mode};
//!
//! let inst = generate_instance(1, 14, 70.0, 5)?;
//! let hp = HyperParams::new(0.01, 0.02, 0.1, 0.2, BufferSchedule::Constant(0.0))?;
//! let engine = Engine::new(&inst, hp, Mode::Inequality)?;
//! let mut state = engine.init_state(&InitMode::AtDemand)?;
//! for _ in 0..100 {
//!     state = engine.iterate(&state)?;
//! }
//! # Ok::<(), danyra::Error>(())
//! ```

pub mod cli;
pub mod engine;
mod error;
pub mod metrics;
pub mod netsim;
pub mod oracle;
pub mod problem;
mod serde_util;

pub use error::{Error, Result};
