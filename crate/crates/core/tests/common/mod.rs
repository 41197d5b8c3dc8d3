//! Random tree generators shared by the property and acceptance suites.

use btswarm::bt::{BtNode, NodeKind};
use proptest::prelude::*;

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,7}"
}

pub fn param() -> impl Strategy<Value = String> {
    "[a-z0-9_.+-]{1,6}"
}

pub fn label() -> impl Strategy<Value = Option<String>> {
    prop::option::weighted(0.2, "[A-Za-z0-9_]{1,4}")
}

pub fn leaf() -> impl Strategy<Value = BtNode> {
    (any::<bool>(), ident(), prop::collection::vec(param(), 0..3), label()).prop_map(|(cond, id, params, label)| {
        let kind = if cond {
            NodeKind::Condition { id, params }
        } else {
            NodeKind::Action { id, params }
        };
        BtNode {
            kind,
            children: vec![],
            label,
        }
    })
}

pub fn tree() -> impl Strategy<Value = BtNode> {
    let base = prop_oneof![
        4 => leaf(),
        1 => ident().prop_map(|s| BtNode::slot(&s)),
    ];
    base.prop_recursive(5, 48, 5, |inner| {
        prop_oneof![
            (0..3u8, prop::collection::vec(inner.clone(), 0..5), label()).prop_map(|(k, children, label)| {
                let kind = match k {
                    0 => NodeKind::Selector,
                    1 => NodeKind::Sequence,
                    _ => NodeKind::Parallel,
                };
                BtNode { kind, children, label }
            }),
            (ident(), prop::collection::vec(param(), 0..3), inner.clone(), label()).prop_map(
                |(policy, params, child, label)| BtNode {
                    kind: NodeKind::Decorator { policy, params },
                    children: vec![child],
                    label,
                }
            ),
            (ident(), prop::collection::vec(inner, 1..4)).prop_map(|(segment, children)| BtNode {
                kind: NodeKind::Slot { segment },
                children,
                label: None,
            }),
        ]
    })
}
