//! Robots that carry task knowledge as behavior-tree subtrees and share it by
//! direct query-response or by eavesdropping on other robots' exchanges.
//!
//! The crate is layered bottom-up:
//!
//! - [`bt`]: tree AST, tick engine and blackboard.
//! - [`grammar`]: the stringBT text format, knowledge subtrees and merging.
//! - [`knowledge`]: known sequences, the update process, the timed buffer.
//! - [`behaviors`]: the search-and-rescue conditions, actions and trees.
//! - [`modality`]: the QRA, QRU, EU and EBU protocols over a shared medium.
//! - [`sim`]: the foraging world and its scheduler.
//! - [`metrics`]: counters, timelines and exports.
//! - [`study`]: seeded multi-trial sweeps and their aggregation.

pub mod behaviors;
pub mod bt;
mod error;
pub mod grammar;
pub mod knowledge;
pub mod metrics;
pub mod modality;
pub mod scenario;
pub mod sim;
pub mod stats;
pub mod study;

pub use error::Error;
