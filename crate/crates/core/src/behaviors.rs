//! Conditions, actions and standard trees for the search-and-rescue robots.
//!
//! Actions never move anything themselves. They write intents to the
//! blackboard, which the simulator consumes after the tick.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bt::{Blackboard, BtError, BtNode, NodeStatus, Registry};
use crate::grammar::{self, ControlTree};
use crate::knowledge::{ConditionSequence, KnowledgeBase};

/// Blackboard keys shared by the simulator and the behavior library.
pub mod keys {
    pub const ITERATION: &str = "iter";
    pub const POSE_X: &str = "pose.x";
    pub const POSE_Y: &str = "pose.y";
    pub const HEADING: &str = "pose.heading";
    /// Bitmask of triggered collision rays, bit `i` = direction `i * 45°`.
    pub const RAYS: &str = "collision.rays";
    pub const REPULSION_X: &str = "collision.repulsion_x";
    pub const REPULSION_Y: &str = "collision.repulsion_y";
    /// Color of the nearest free target in sensor range, or `none`.
    pub const DETECTED: &str = "target.detected";
    pub const TARGET_ID: &str = "target.id";
    pub const TARGET_X: &str = "target.x";
    pub const TARGET_Y: &str = "target.y";
    pub const ZONE: &str = "zone";
    pub const CARRYING: &str = "carrying";
    pub const PERCEPT_UNKNOWN: &str = "percept.unknown";
    pub const QUERY_WAITING: &str = "query.waiting";
    pub const FALLBACK_REACHED: &str = "fallback.reached";
    pub const WALK_JITTER: &str = "walk.jitter";
    pub const INTENT_MOVE: &str = "intent.move";
    pub const INTENT_X: &str = "intent.x";
    pub const INTENT_Y: &str = "intent.y";
    pub const INTENT_HALT: &str = "intent.halt";
    pub const INTENT_PICK: &str = "intent.pick";
    pub const INTENT_DROP: &str = "intent.drop";
    pub const INTENT_QUERY: &str = "intent.query";

    pub fn zone_x(color: super::Color) -> String {
        format!("zone.{color}.x")
    }

    pub fn zone_y(color: super::Color) -> String {
        format!("zone.{color}.y")
    }
}

pub const NONE: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Yellow,
    Blue,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Yellow, Color::Blue];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Yellow => "yellow",
            Color::Blue => "blue",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Color {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Color::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown color `{s}`"))
    }
}

/// Prior-knowledge class of a robot: ignorant, multi-target, or one color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KnowledgeClass {
    I,
    M,
    R,
    G,
    Y,
    B,
}

impl KnowledgeClass {
    pub fn colors(self) -> Vec<Color> {
        match self {
            KnowledgeClass::I => vec![],
            KnowledgeClass::M => Color::ALL.to_vec(),
            KnowledgeClass::R => vec![Color::Red],
            KnowledgeClass::G => vec![Color::Green],
            KnowledgeClass::Y => vec![Color::Yellow],
            KnowledgeClass::B => vec![Color::Blue],
        }
    }
}

fn color_param(node: &str, params: &[String]) -> Result<Color, BtError> {
    params
        .first()
        .ok_or_else(|| BtError::BadParam {
            node: node.into(),
            reason: "missing color".into(),
        })?
        .parse()
        .map_err(|reason| BtError::BadParam {
            node: node.into(),
            reason,
        })
}

fn target_in_range(params: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    let color = color_param("target_in_range", params)?;
    Ok(bb.text(keys::CARRYING)? == NONE && bb.text(keys::DETECTED)? == color.name())
}

fn carrying(params: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    let held = bb.text(keys::CARRYING)?;
    if params.is_empty() {
        return Ok(held != NONE);
    }
    Ok(held == color_param("carrying", params)?.name())
}

fn in_zone(params: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    Ok(bb.text(keys::ZONE)? == color_param("in_zone", params)?.name())
}

/// Rays fire on several sides and cancel out, so there is no way to back off.
fn boxed_in(_: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    let rx = bb.float(keys::REPULSION_X)?;
    let ry = bb.float(keys::REPULSION_Y)?;
    Ok(bb.int(keys::RAYS)? != 0 && rx.hypot(ry) < 1e-9)
}

fn fallback_reached(_: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    bb.bool(keys::FALLBACK_REACHED)
}

fn percept_unknown(_: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    bb.bool(keys::PERCEPT_UNKNOWN)
}

fn query_idle(_: &[String], bb: &Blackboard) -> Result<bool, BtError> {
    Ok(!bb.bool(keys::QUERY_WAITING)?)
}

fn move_towards(bb: &mut Blackboard, x: f64, y: f64) -> Result<(), BtError> {
    let dx = x - bb.float(keys::POSE_X)?;
    let dy = y - bb.float(keys::POSE_Y)?;
    let len = dx.hypot(dy);
    let (ux, uy) = if len > 1e-9 { (dx / len, dy / len) } else { (0.0, 0.0) };
    bb.set(keys::INTENT_MOVE, true);
    bb.set(keys::INTENT_X, ux);
    bb.set(keys::INTENT_Y, uy);
    Ok(())
}

/// Running while the grasp is pending, Success once the target is held.
fn pick_target(params: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    let color = color_param("pick_target", params)?;
    let held = bb.text(keys::CARRYING)?;
    if held == color.name() {
        return Ok(NodeStatus::Success);
    }
    if held != NONE || bb.text(keys::DETECTED)? != color.name() {
        return Ok(NodeStatus::Failure);
    }
    let id = bb.int(keys::TARGET_ID)?;
    let (tx, ty) = (bb.float(keys::TARGET_X)?, bb.float(keys::TARGET_Y)?);
    move_towards(bb, tx, ty)?;
    bb.set(keys::INTENT_PICK, id);
    Ok(NodeStatus::Running)
}

fn goto_zone(params: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    let color = color_param("goto_zone", params)?;
    if bb.text(keys::ZONE)? == color.name() {
        return Ok(NodeStatus::Success);
    }
    let zx = bb.float(&keys::zone_x(color))?;
    let zy = bb.float(&keys::zone_y(color))?;
    move_towards(bb, zx, zy)?;
    Ok(NodeStatus::Running)
}

fn drop_target(_: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    if bb.text(keys::CARRYING)? == NONE {
        return Ok(NodeStatus::Failure);
    }
    bb.set(keys::INTENT_DROP, true);
    Ok(NodeStatus::Success)
}

fn random_walk(_: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    bb.set(keys::FALLBACK_REACHED, true);
    let heading = bb.float(keys::HEADING)? + bb.float(keys::WALK_JITTER)?;
    bb.set(keys::HEADING, heading);
    bb.set(keys::INTENT_MOVE, true);
    bb.set(keys::INTENT_X, heading.cos());
    bb.set(keys::INTENT_Y, heading.sin());
    Ok(NodeStatus::Running)
}

fn halt(_: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    bb.set(keys::INTENT_HALT, true);
    Ok(NodeStatus::Success)
}

fn post_query(_: &[String], bb: &mut Blackboard) -> Result<NodeStatus, BtError> {
    if !bb.bool(keys::PERCEPT_UNKNOWN)? {
        return Ok(NodeStatus::Failure);
    }
    bb.set(keys::INTENT_QUERY, true);
    Ok(NodeStatus::Success)
}

/// The shared condition/action registry.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r = Registry::new();
        r.add_condition("target_in_range", &[keys::CARRYING, keys::DETECTED], target_in_range)
            .add_condition("carrying", &[keys::CARRYING], carrying)
            .add_condition("in_zone", &[keys::ZONE], in_zone)
            .add_condition(
                "boxed_in",
                &[keys::RAYS, keys::REPULSION_X, keys::REPULSION_Y],
                boxed_in,
            )
            .add_condition("fallback_reached", &[keys::FALLBACK_REACHED], fallback_reached)
            .add_condition("percept_unknown", &[keys::PERCEPT_UNKNOWN], percept_unknown)
            .add_condition("query_idle", &[keys::QUERY_WAITING], query_idle)
            .add_action("pick_target", pick_target)
            .add_action("goto_zone", goto_zone)
            .add_action("drop_target", drop_target)
            .add_action("random_walk", random_walk)
            .add_action("halt", halt)
            .add_action("post_query", post_query);
        r
    })
}

/// Resets the per-tick flags and intents.
pub fn clear_intents(bb: &mut Blackboard) {
    bb.set(keys::FALLBACK_REACHED, false);
    bb.set(keys::INTENT_MOVE, false);
    bb.set(keys::INTENT_X, 0.0);
    bb.set(keys::INTENT_Y, 0.0);
    bb.set(keys::INTENT_HALT, false);
    bb.set(keys::INTENT_PICK, -1i64);
    bb.set(keys::INTENT_DROP, false);
    bb.set(keys::INTENT_QUERY, false);
}

/// A blackboard holding every key the library reads, at neutral values.
/// Zone centers default to the corners of a `width` x `height` arena.
pub fn schema(width: f64, height: f64) -> Blackboard {
    let mut bb = Blackboard::new();
    bb.set(keys::ITERATION, 0i64);
    bb.set(keys::POSE_X, 0.0);
    bb.set(keys::POSE_Y, 0.0);
    bb.set(keys::HEADING, 0.0);
    bb.set(keys::RAYS, 0i64);
    bb.set(keys::REPULSION_X, 0.0);
    bb.set(keys::REPULSION_Y, 0.0);
    bb.set(keys::DETECTED, NONE);
    bb.set(keys::TARGET_ID, -1i64);
    bb.set(keys::TARGET_X, 0.0);
    bb.set(keys::TARGET_Y, 0.0);
    bb.set(keys::ZONE, NONE);
    bb.set(keys::CARRYING, NONE);
    bb.set(keys::PERCEPT_UNKNOWN, false);
    bb.set(keys::QUERY_WAITING, false);
    bb.set(keys::WALK_JITTER, 0.0);
    for color in Color::ALL {
        let (x, y) = zone_corner(color, width, height);
        bb.set(&keys::zone_x(color), x);
        bb.set(&keys::zone_y(color), y);
    }
    clear_intents(&mut bb);
    bb
}

/// Collection zones sit at the four arena corners.
pub fn zone_corner(color: Color, width: f64, height: f64) -> (f64, f64) {
    match color {
        Color::Red => (0.0, 0.0),
        Color::Green => (width, 0.0),
        Color::Yellow => (0.0, height),
        Color::Blue => (width, height),
    }
}

/// The condition sequence for handling a target of `color`.
pub fn target_sequence(color: Color) -> ConditionSequence {
    ConditionSequence::single("target_in_range", &[color.name()])
}

/// The action subtree answering [`target_sequence`].
pub fn target_action(color: Color) -> BtNode {
    BtNode::action("pick_target", &[color.name()])
}

/// Delivery is common knowledge: carry to the matching zone and drop.
pub fn delivery_subtree(color: Color) -> BtNode {
    BtNode::sequence(vec![
        BtNode::condition("carrying", &[color.name()]),
        BtNode::action("goto_zone", &[color.name()]),
        BtNode::action("drop_target", &[]),
    ])
}

/// The control tree of a robot that starts out knowing `prior`.
pub fn control_tree(prior: &[Color]) -> ControlTree {
    ControlTree::new(
        vec![BtNode::sequence(vec![
            BtNode::condition("boxed_in", &[]),
            BtNode::action("halt", &[]),
        ])],
        Color::ALL.into_iter().map(delivery_subtree).collect(),
        prior
            .iter()
            .map(|c| grammar::make_knowledge_subtree(&target_sequence(*c), target_action(*c)))
            .collect(),
        vec![BtNode::action("random_walk", &[])],
    )
}

/// The query-posting modality subtree, gated by a cooldown of `cooldown` ticks.
pub fn modality_tree(cooldown: u32) -> BtNode {
    BtNode::decorator(
        "cooldown",
        &[&cooldown.to_string(), "query"],
        BtNode::sequence(vec![
            BtNode::condition("fallback_reached", &[]),
            BtNode::condition("percept_unknown", &[]),
            BtNode::condition("query_idle", &[]),
            BtNode::action("post_query", &[]),
        ]),
    )
}

/// The salient percept: an uncarried target in range maps to its sequence.
pub fn percept_sequence(bb: &Blackboard) -> Result<Option<ConditionSequence>, BtError> {
    if bb.text(keys::CARRYING)? != NONE {
        return Ok(None);
    }
    match bb.text(keys::DETECTED)? {
        NONE => Ok(None),
        name => Ok(name.parse::<Color>().ok().map(target_sequence)),
    }
}

/// Writes the target-sensor reading.
pub fn write_detection(bb: &mut Blackboard, detected: Option<(Color, usize, f64, f64)>) {
    match detected {
        Some((color, id, x, y)) => {
            bb.set(keys::DETECTED, color.name());
            bb.set(keys::TARGET_ID, id as i64);
            bb.set(keys::TARGET_X, x);
            bb.set(keys::TARGET_Y, y);
        }
        None => {
            bb.set(keys::DETECTED, NONE);
            bb.set(keys::TARGET_ID, -1i64);
        }
    }
}

/// Distinct target colors a knowledge base covers.
pub fn known_colors(kb: &KnowledgeBase) -> BTreeSet<Color> {
    kb.sequences()
        .iter()
        .flat_map(|s| s.iter())
        .filter(|c| c.id == "target_in_range")
        .filter_map(|c| c.params.first()?.parse().ok())
        .collect()
}
