pub mod dqn;
pub mod env;
pub mod error;
pub mod lindblad;
pub mod metrics;
pub mod spin;

pub use error::{Error, Result};
