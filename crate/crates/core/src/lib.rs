//! Physics-informed state-space neural models (PSMs) for 1D single-phase
//! fluid transport.
//!
//! - [`transport`]: rig configuration, fluid closures, grids and scaling.
//! - [`refsolver`]: finite-volume reference solver used as data generator,
//!   control environment and fault injector.

pub mod control;
pub mod diagnostics;
pub mod error;
pub mod nn;
pub mod refsolver;
pub mod train;
pub mod transport;

pub use error::{PsmError, Result};
