use std::fmt;

use serde::{Deserialize, Serialize};

use super::BtError;

/// Result of ticking a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Running,
    Success,
    Failure,
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeStatus::Running => "running",
            NodeStatus::Success => "success",
            NodeStatus::Failure => "failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Selector,
    Sequence,
    Parallel,
    Decorator { policy: String, params: Vec<String> },
    Condition { id: String, params: Vec<String> },
    Action { id: String, params: Vec<String> },
    /// Named insertion point. Acts as a selector over whatever has been merged into it.
    Slot { segment: String },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Selector => "selector",
            NodeKind::Sequence => "sequence",
            NodeKind::Parallel => "parallel",
            NodeKind::Decorator { .. } => "decorator",
            NodeKind::Condition { .. } => "condition",
            NodeKind::Action { .. } => "action",
            NodeKind::Slot { .. } => "slot",
        }
    }
}

/// A behavior-tree node. Trees own their children, so a value of this type is
/// always a proper tree with a single root.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BtNode {
    pub kind: NodeKind,
    pub children: Vec<BtNode>,
    pub label: Option<String>,
}

fn strings(params: &[&str]) -> Vec<String> {
    params.iter().map(|p| p.to_string()).collect()
}

impl BtNode {
    pub fn new(kind: NodeKind, children: Vec<BtNode>) -> Self {
        Self {
            kind,
            children,
            label: None,
        }
    }

    pub fn selector(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Selector, children)
    }

    pub fn sequence(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Sequence, children)
    }

    pub fn parallel(children: Vec<BtNode>) -> Self {
        Self::new(NodeKind::Parallel, children)
    }

    pub fn decorator(policy: &str, params: &[&str], child: BtNode) -> Self {
        Self::new(
            NodeKind::Decorator {
                policy: policy.to_string(),
                params: strings(params),
            },
            vec![child],
        )
    }

    pub fn condition(id: &str, params: &[&str]) -> Self {
        Self::new(
            NodeKind::Condition {
                id: id.to_string(),
                params: strings(params),
            },
            Vec::new(),
        )
    }

    pub fn action(id: &str, params: &[&str]) -> Self {
        Self::new(
            NodeKind::Action {
                id: id.to_string(),
                params: strings(params),
            },
            Vec::new(),
        )
    }

    pub fn slot(segment: &str) -> Self {
        Self::new(
            NodeKind::Slot {
                segment: segment.to_string(),
            },
            Vec::new(),
        )
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    /// The segment tag of this node: its label, or the segment name for slots.
    pub fn segment_label(&self) -> Option<&str> {
        match (&self.label, &self.kind) {
            (Some(label), _) => Some(label),
            (None, NodeKind::Slot { segment }) => Some(segment),
            _ => None,
        }
    }

    /// Checks child-count rules over the whole tree.
    pub fn validate(&self) -> Result<(), BtError> {
        let found = self.children.len();
        match &self.kind {
            NodeKind::Condition { .. } | NodeKind::Action { .. } if found != 0 => {
                return Err(BtError::Arity {
                    kind: self.kind.name(),
                    expected: "0",
                    found,
                })
            }
            NodeKind::Decorator { .. } if found != 1 => {
                return Err(BtError::Arity {
                    kind: self.kind.name(),
                    expected: "exactly 1",
                    found,
                })
            }
            _ => {}
        }
        self.children.iter().try_for_each(BtNode::validate)
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(BtNode::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(BtNode::depth).max().unwrap_or(0)
    }

    /// Pre-order walk.
    pub fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a BtNode)) {
        visit(self);
        for child in &self.children {
            child.walk(visit);
        }
    }
}
