//! Compiled, executable trees.
//!
//! Compilation resolves every condition and action id against a [`Registry`]
//! once, so ticking never does name lookups and a miswired tree is rejected
//! before it runs.

use super::registry::{ActionFn, ConditionFn};
use super::{Blackboard, BtError, BtNode, NodeKind, NodeStatus, Registry};

/// Reserved blackboard prefix for cooldown decorator state.
pub const COOLDOWN_KEY_PREFIX: &str = "dec.cooldown.";

#[derive(Clone)]
enum LiveNode {
    Selector(Vec<LiveNode>),
    Sequence(Vec<LiveNode>),
    Parallel(Vec<LiveNode>),
    Invert(Box<LiveNode>),
    Cooldown {
        ticks: i64,
        key: String,
        child: Box<LiveNode>,
    },
    Condition {
        eval: ConditionFn,
        params: Vec<String>,
    },
    Action {
        run: ActionFn,
        params: Vec<String>,
    },
    Slot(Vec<LiveNode>),
}

/// An executable tree produced by [`compile`].
#[derive(Clone)]
pub struct LiveTree {
    root: LiveNode,
}

impl std::fmt::Debug for LiveTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("LiveTree")
    }
}

/// Resolves `node` against `registry`.
///
/// When `schema` is given, every key a condition declares it reads must be
/// present in it.
pub fn compile(
    node: &BtNode,
    registry: &Registry,
    schema: Option<&Blackboard>,
) -> Result<LiveTree, BtError> {
    node.validate()?;
    Ok(LiveTree {
        root: lower(node, registry, schema)?,
    })
}

fn lower_all(
    children: &[BtNode],
    registry: &Registry,
    schema: Option<&Blackboard>,
) -> Result<Vec<LiveNode>, BtError> {
    children
        .iter()
        .map(|c| lower(c, registry, schema))
        .collect()
}

fn lower(node: &BtNode, registry: &Registry, schema: Option<&Blackboard>) -> Result<LiveNode, BtError> {
    Ok(match &node.kind {
        NodeKind::Selector => LiveNode::Selector(lower_all(&node.children, registry, schema)?),
        NodeKind::Sequence => LiveNode::Sequence(lower_all(&node.children, registry, schema)?),
        NodeKind::Parallel => LiveNode::Parallel(lower_all(&node.children, registry, schema)?),
        NodeKind::Slot { .. } => LiveNode::Slot(lower_all(&node.children, registry, schema)?),
        NodeKind::Decorator { policy, params } => {
            let child = Box::new(lower(&node.children[0], registry, schema)?);
            match policy.as_str() {
                "invert" => LiveNode::Invert(child),
                "cooldown" => {
                    let ticks = params
                        .first()
                        .and_then(|p| p.parse::<i64>().ok())
                        .filter(|k| *k >= 0)
                        .ok_or_else(|| BtError::BadParam {
                            node: "cooldown".into(),
                            reason: "expected a non-negative tick count".into(),
                        })?;
                    let key = params.get(1).map(String::as_str).unwrap_or("default");
                    LiveNode::Cooldown {
                        ticks,
                        key: format!("{COOLDOWN_KEY_PREFIX}{key}"),
                        child,
                    }
                }
                other => return Err(BtError::UnknownPolicy(other.to_string())),
            }
        }
        NodeKind::Condition { id, params } => {
            let entry = registry.condition(id)?;
            if let Some(schema) = schema {
                if let Some(missing) = entry.reads.iter().find(|k| !schema.contains(k)) {
                    return Err(BtError::MissingKey((*missing).to_string()));
                }
            }
            LiveNode::Condition {
                eval: entry.eval,
                params: params.clone(),
            }
        }
        NodeKind::Action { id, params } => LiveNode::Action {
            run: registry.action(id)?.run,
            params: params.clone(),
        },
    })
}

impl LiveTree {
    pub fn tick(&self, bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        tick_node(&self.root, bb)
    }
}

fn tick_node(node: &LiveNode, bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    match node {
        LiveNode::Selector(children) | LiveNode::Slot(children) => {
            for child in children {
                match tick_node(child, bb)? {
                    NodeStatus::Failure => continue,
                    other => return Ok(other),
                }
            }
            Ok(NodeStatus::Failure)
        }
        LiveNode::Sequence(children) => {
            for child in children {
                match tick_node(child, bb)? {
                    NodeStatus::Success => continue,
                    other => return Ok(other),
                }
            }
            Ok(NodeStatus::Success)
        }
        LiveNode::Parallel(children) => {
            for child in children {
                tick_node(child, bb)?;
            }
            Ok(NodeStatus::Success)
        }
        LiveNode::Invert(child) => Ok(match tick_node(child, bb)? {
            NodeStatus::Success => NodeStatus::Failure,
            NodeStatus::Failure => NodeStatus::Success,
            NodeStatus::Running => NodeStatus::Running,
        }),
        LiveNode::Cooldown { ticks, key, child } => {
            let remaining = bb.int(key).unwrap_or(0);
            if remaining > 0 {
                bb.set(key, remaining - 1);
                return Ok(NodeStatus::Failure);
            }
            let status = tick_node(child, bb)?;
            if status == NodeStatus::Success {
                bb.set(key, *ticks);
            }
            Ok(status)
        }
        LiveNode::Condition { eval, params } => Ok(if eval(params, bb)? {
            NodeStatus::Success
        } else {
            NodeStatus::Failure
        }),
        LiveNode::Action { run, params } => run(params, bb),
    }
}

/// Compiles `node` without a schema check and ticks it once.
pub fn tick(node: &BtNode, bb: &mut Blackboard, registry: &Registry) -> Result<NodeStatus, BtError> {
    compile(node, registry, None)?.tick(bb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flag(params: &[String], bb: &Blackboard) -> Result<bool, BtError> {
        bb.bool(&params[0])
    }

    fn bump(key: &str, bb: &mut Blackboard) {
        let n = bb.int(key).unwrap_or(0);
        bb.set(key, n + 1);
    }

    fn done(params: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        bump(&format!("ticked.{}", params[0]), bb);
        Ok(NodeStatus::Success)
    }

    fn fail(params: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        bump(&format!("ticked.{}", params[0]), bb);
        Ok(NodeStatus::Failure)
    }

    fn busy(params: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
        bump(&format!("ticked.{}", params[0]), bb);
        Ok(NodeStatus::Running)
    }

    fn registry() -> Registry {
        let mut r = Registry::new();
        r.add_condition("flag", &[], flag)
            .add_condition("needs_pose", &["pose.x"], flag)
            .add_action("done", done)
            .add_action("fail", fail)
            .add_action("busy", busy);
        r
    }

    fn bb() -> Blackboard {
        let mut bb = Blackboard::new();
        bb.set("yes", true);
        bb.set("no", false);
        bb
    }

    fn ticks(bb: &Blackboard, name: &str) -> i64 {
        bb.int(&format!("ticked.{name}")).unwrap_or(0)
    }

    fn cond(v: bool) -> BtNode {
        BtNode::condition("flag", &[if v { "yes" } else { "no" }])
    }

    fn run(tree: &BtNode, bb: &mut Blackboard) -> NodeStatus {
        tick(tree, bb, &registry()).unwrap()
    }

    #[test]
    fn selector_table() {
        let cases = [
            (vec![cond(false), BtNode::action("done", &["a"])], NodeStatus::Success),
            (vec![cond(false), cond(false)], NodeStatus::Failure),
            (vec![BtNode::action("busy", &["a"]), BtNode::action("done", &["b"])], NodeStatus::Running),
            (vec![], NodeStatus::Failure),
        ];
        for (children, expected) in cases {
            let mut bb = bb();
            assert_eq!(run(&BtNode::selector(children), &mut bb), expected);
        }
    }

    #[test]
    fn sequence_table() {
        let cases = [
            (vec![cond(true), cond(false)], NodeStatus::Failure),
            (vec![cond(true), BtNode::action("done", &["a"])], NodeStatus::Success),
            (vec![cond(true), BtNode::action("busy", &["a"]), cond(false)], NodeStatus::Running),
            (vec![], NodeStatus::Success),
        ];
        for (children, expected) in cases {
            let mut bb = bb();
            assert_eq!(run(&BtNode::sequence(children), &mut bb), expected);
        }
    }

    #[test]
    fn parallel_ticks_everything_and_succeeds() {
        let mut bb = bb();
        let tree = BtNode::parallel(vec![
            BtNode::action("fail", &["a"]),
            BtNode::action("busy", &["b"]),
            BtNode::action("done", &["c"]),
        ]);
        assert_eq!(run(&tree, &mut bb), NodeStatus::Success);
        for name in ["a", "b", "c"] {
            assert_eq!(ticks(&bb, name), 1);
        }
        assert_eq!(run(&BtNode::parallel(vec![]), &mut bb), NodeStatus::Success);
    }

    #[test]
    fn selector_stops_at_first_success() {
        let mut bb = bb();
        let tree = BtNode::selector(vec![
            BtNode::action("fail", &["a"]),
            BtNode::action("done", &["b"]),
            BtNode::action("done", &["c"]),
        ]);
        run(&tree, &mut bb);
        assert_eq!((ticks(&bb, "a"), ticks(&bb, "b"), ticks(&bb, "c")), (1, 1, 0));
    }

    #[test]
    fn sequence_stops_at_first_failure() {
        let mut bb = bb();
        let tree = BtNode::sequence(vec![
            BtNode::action("done", &["a"]),
            BtNode::action("fail", &["b"]),
            BtNode::action("done", &["c"]),
        ]);
        run(&tree, &mut bb);
        assert_eq!(ticks(&bb, "c"), 0);
    }

    #[test]
    fn empty_slot_fails_and_filled_slot_selects() {
        let mut bb = bb();
        assert_eq!(run(&BtNode::slot("NK"), &mut bb), NodeStatus::Failure);
        let mut filled = BtNode::slot("NK");
        filled.children = vec![cond(false), BtNode::action("done", &["a"])];
        assert_eq!(run(&filled, &mut bb), NodeStatus::Success);
    }

    #[test]
    fn invert_swaps_terminal_statuses() {
        let mut bb = bb();
        let inv = |c| BtNode::decorator("invert", &[], c);
        assert_eq!(run(&inv(cond(true)), &mut bb), NodeStatus::Failure);
        assert_eq!(run(&inv(cond(false)), &mut bb), NodeStatus::Success);
        assert_eq!(run(&inv(BtNode::action("busy", &["a"])), &mut bb), NodeStatus::Running);
    }

    #[test]
    fn cooldown_blocks_for_k_ticks_after_success() {
        let mut bb = bb();
        let tree = compile(
            &BtNode::decorator("cooldown", &["3", "q"], BtNode::action("done", &["a"])),
            &registry(),
            None,
        )
        .unwrap();
        let statuses: Vec<_> = (0..6).map(|_| tree.tick(&mut bb).unwrap()).collect();
        use NodeStatus::*;
        assert_eq!(statuses, [Success, Failure, Failure, Failure, Success, Failure]);
        assert_eq!(ticks(&bb, "a"), 2);
    }

    #[test]
    fn cooldown_does_not_arm_on_failure() {
        let mut bb = bb();
        let tree = BtNode::decorator("cooldown", &["5"], BtNode::action("fail", &["a"]));
        let live = compile(&tree, &registry(), None).unwrap();
        for _ in 0..3 {
            assert_eq!(live.tick(&mut bb).unwrap(), NodeStatus::Failure);
        }
        assert_eq!(ticks(&bb, "a"), 3);
    }

    #[test]
    fn unknown_ids_are_configuration_errors() {
        let mut bb = bb();
        let r = registry();
        assert_eq!(
            tick(&BtNode::condition("nope", &[]), &mut bb, &r),
            Err(BtError::UnknownCondition("nope".into()))
        );
        assert_eq!(
            tick(&BtNode::action("nope", &[]), &mut bb, &r),
            Err(BtError::UnknownAction("nope".into()))
        );
        assert_eq!(
            tick(&BtNode::decorator("repeat", &[], cond(true)), &mut bb, &r),
            Err(BtError::UnknownPolicy("repeat".into()))
        );
    }

    #[test]
    fn schema_check_rejects_unknown_keys() {
        let r = registry();
        let tree = BtNode::condition("needs_pose", &["yes"]);
        let mut schema = Blackboard::new();
        assert_eq!(
            compile(&tree, &r, Some(&schema)).err(),
            Some(BtError::MissingKey("pose.x".into()))
        );
        schema.set("pose.x", 0.0);
        assert!(compile(&tree, &r, Some(&schema)).is_ok());
    }

    #[test]
    fn missing_runtime_key_is_an_error_not_a_failure() {
        let mut bb = Blackboard::new();
        assert_eq!(
            tick(&cond(true), &mut bb, &registry()),
            Err(BtError::MissingKey("yes".into()))
        );
    }
}
