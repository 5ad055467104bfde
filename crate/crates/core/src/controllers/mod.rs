//! Merge controllers.
//!
//! [`CcbfController`] computes all speed commands jointly from one QP with a
//! first-order barrier row per vehicle pair and no ordering. [`FifoController`]
//! ranks vehicles by control-zone entry time and gives each an acceleration
//! filtered against the second-order barrier of every vehicle ahead of it in
//! that ranking.

mod ccbf;
mod fifo;

pub use ccbf::{CcbfAgent, CcbfCommand, CcbfConfig, CcbfController};
pub use fifo::{fifo_priority, fifo_step, FifoAgent, FifoCommand, FifoConfig, FifoController};
