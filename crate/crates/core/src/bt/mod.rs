//! Behavior-tree AST, the tick engine and the per-robot blackboard.

mod blackboard;
mod live;
mod node;
mod registry;

pub use blackboard::{Blackboard, Value};
pub use live::{compile, tick, LiveTree, COOLDOWN_KEY_PREFIX};
pub use node::{BtNode, NodeKind, NodeStatus};
pub use registry::{ActionEntry, ActionFn, ConditionEntry, ConditionFn, Registry};

use thiserror::Error;

/// Configuration errors raised while compiling or ticking a tree. These signal
/// a miswired tree, never an ordinary `Failure` status.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtError {
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown decorator policy `{0}`")]
    UnknownPolicy(String),
    #[error("bad parameters for `{node}`: {reason}")]
    BadParam { node: String, reason: String },
    #[error("blackboard key `{0}` is missing")]
    MissingKey(String),
    #[error("blackboard key `{key}` holds {found}, expected {expected}")]
    TypeMismatch {
        key: String,
        expected: &'static str,
        found: &'static str,
    },
    #[error("{kind} node needs {expected} children, found {found}")]
    Arity {
        kind: &'static str,
        expected: &'static str,
        found: usize,
    },
}
