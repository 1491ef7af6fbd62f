//! Learning agents and the loops that train them.

pub mod dqn;
pub mod pcn;

pub use dqn::{DqnAgent, DqnConfig};
pub use pcn::{Command, Mode, PcnAgent, PcnConfig};
