//! Per-robot knowledge: the known condition sequences with their action
//! subtrees, the update process, and the timed buffer of overheard messages.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{compile, BtNode, Registry};
use crate::grammar::{self, ControlTree};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("a condition sequence cannot be empty")]
    EmptySequence,
    #[error("rejected action subtree: {0}")]
    InvalidAction(String),
}

/// One condition with its parameters, e.g. `target_in_range(red)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub id: String,
    #[serde(default)]
    pub params: Vec<String>,
}

impl Condition {
    pub fn new(id: &str, params: &[&str]) -> Self {
        Self {
            id: id.to_string(),
            params: params.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.id, self.params.join(","))
    }
}

/// Ordered, non-empty list of conditions. Equality is element-wise and order
/// sensitive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Condition>", into = "Vec<Condition>")]
pub struct ConditionSequence(Vec<Condition>);

impl ConditionSequence {
    pub fn new(items: Vec<Condition>) -> Result<Self, KnowledgeError> {
        if items.is_empty() {
            return Err(KnowledgeError::EmptySequence);
        }
        Ok(Self(items))
    }

    pub fn single(id: &str, params: &[&str]) -> Self {
        Self(vec![Condition::new(id, params)])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Condition> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[Condition] {
        &self.0
    }
}

impl TryFrom<Vec<Condition>> for ConditionSequence {
    type Error = KnowledgeError;

    fn try_from(items: Vec<Condition>) -> Result<Self, Self::Error> {
        Self::new(items)
    }
}

impl From<ConditionSequence> for Vec<Condition> {
    fn from(seq: ConditionSequence) -> Self {
        seq.0
    }
}

impl fmt::Display for ConditionSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Known sequences and their action subtrees, index aligned.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    sequences: Vec<ConditionSequence>,
    actions: Vec<BtNode>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn knows(&self, sequence: &ConditionSequence) -> bool {
        self.sequences.contains(sequence)
    }

    pub fn lookup(&self, sequence: &ConditionSequence) -> Option<&BtNode> {
        self.sequences
            .iter()
            .position(|s| s == sequence)
            .map(|i| &self.actions[i])
    }

    pub fn sequences(&self) -> &[ConditionSequence] {
        &self.sequences
    }

    pub fn entries(&self) -> impl Iterator<Item = (&ConditionSequence, &BtNode)> {
        self.sequences.iter().zip(&self.actions)
    }

    /// Records an entry without touching any tree. Returns false if already known.
    pub fn record(&mut self, sequence: ConditionSequence, action: BtNode) -> bool {
        if self.knows(&sequence) {
            return false;
        }
        self.sequences.push(sequence);
        self.actions.push(action);
        true
    }
}

#[derive(Serialize, Deserialize)]
struct KnowledgeEntryJson {
    sequence: ConditionSequence,
    action: String,
}

impl Serialize for KnowledgeBase {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<KnowledgeEntryJson> = self
            .entries()
            .map(|(s, a)| KnowledgeEntryJson {
                sequence: s.clone(),
                action: grammar::serialize(a),
            })
            .collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for KnowledgeBase {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries = Vec::<KnowledgeEntryJson>::deserialize(deserializer)?;
        let mut kb = KnowledgeBase::new();
        for e in entries {
            let action = grammar::parse(&e.action).map_err(serde::de::Error::custom)?;
            if !kb.record(e.sequence, action) {
                return Err(serde::de::Error::custom("duplicate condition sequence"));
            }
        }
        Ok(kb)
    }
}

/// Merges `Sequence(sequence, action)` into the new-knowledge slot and records
/// the entry, unless the sequence is already known.
///
/// The action subtree is validated first (arity, and against `registry` when
/// given); a rejected subtree leaves both the knowledge base and the tree
/// untouched. Returns whether an update happened.
pub fn apply_update(
    kb: &mut KnowledgeBase,
    control: &mut ControlTree,
    sequence: &ConditionSequence,
    action: BtNode,
    registry: Option<&Registry>,
) -> Result<bool, KnowledgeError> {
    if kb.knows(sequence) {
        return Ok(false);
    }
    let subtree = grammar::make_knowledge_subtree(sequence, action.clone());
    match registry {
        Some(r) => compile(&subtree, r, None).map(|_| ()),
        None => subtree.validate(),
    }
    .map_err(|e| KnowledgeError::InvalidAction(e.to_string()))?;
    control.merge_in_place(subtree);
    kb.record(sequence.clone(), action);
    Ok(true)
}

/// An overheard response: `<s_q, T_ka*, t_m>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EavesdropMessage {
    pub sequence: ConditionSequence,
    pub action: BtNode,
    /// Iterations left before the message is discarded.
    pub timer: u32,
    pub source_iteration: u64,
}

/// Timed list of overheard messages. One entry per sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MessageBuffer {
    messages: Vec<EavesdropMessage>,
    capacity: Option<usize>,
}

impl MessageBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        Self {
            messages: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> &[EavesdropMessage] {
        &self.messages
    }

    pub fn contains(&self, sequence: &ConditionSequence) -> bool {
        self.messages.iter().any(|m| &m.sequence == sequence)
    }

    /// Adds `m`, or refreshes the timer of the entry with the same sequence.
    /// Over capacity, the entry with the smallest remaining timer is evicted
    /// (earliest wins ties). Messages with a zero timer are ignored.
    pub fn add(&mut self, m: EavesdropMessage) {
        if m.timer == 0 {
            return;
        }
        if let Some(existing) = self.messages.iter_mut().find(|e| e.sequence == m.sequence) {
            existing.timer = m.timer;
            return;
        }
        self.messages.push(m);
        if let Some(cap) = self.capacity {
            while self.messages.len() > cap {
                let victim = self
                    .messages
                    .iter()
                    .enumerate()
                    .min_by_key(|(i, e)| (e.timer, *i))
                    .map(|(i, _)| i)
                    .expect("non-empty");
                self.messages.remove(victim);
            }
        }
    }

    /// One iteration elapses: timers drop by one and expired entries go.
    pub fn tick(&mut self) {
        self.messages.retain_mut(|m| {
            m.timer = m.timer.saturating_sub(1);
            m.timer > 0
        });
    }

    /// Removes and returns the entry for `sequence`.
    pub fn take(&mut self, sequence: &ConditionSequence) -> Option<EavesdropMessage> {
        let i = self.messages.iter().position(|m| &m.sequence == sequence)?;
        Some(self.messages.remove(i))
    }

    pub fn drain(&mut self) -> Vec<EavesdropMessage> {
        std::mem::take(&mut self.messages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(color: &str) -> ConditionSequence {
        ConditionSequence::single("target_in_range", &[color])
    }

    fn act(color: &str) -> BtNode {
        BtNode::action("pick_target", &[color])
    }

    fn msg(color: &str, timer: u32) -> EavesdropMessage {
        EavesdropMessage {
            sequence: seq(color),
            action: act(color),
            timer,
            source_iteration: 0,
        }
    }

    fn control() -> ControlTree {
        ControlTree::new(vec![], vec![], vec![], vec![BtNode::action("random_walk", &[])])
    }

    #[test]
    fn membership_is_order_sensitive() {
        let a = Condition::new("a", &[]);
        let b = Condition::new("b", &[]);
        let ab = ConditionSequence::new(vec![a.clone(), b.clone()]).unwrap();
        let ba = ConditionSequence::new(vec![b, a]).unwrap();
        let mut kb = KnowledgeBase::new();
        assert!(!kb.knows(&ab));
        assert!(kb.lookup(&ab).is_none());
        kb.record(ab.clone(), act("red"));
        assert!(kb.knows(&ab));
        assert_eq!(kb.lookup(&ab), Some(&act("red")));
        assert!(!kb.knows(&ba));
        assert!(kb.lookup(&ba).is_none());
    }

    #[test]
    fn empty_sequences_are_rejected() {
        assert_eq!(ConditionSequence::new(vec![]), Err(KnowledgeError::EmptySequence));
        assert!(serde_json::from_str::<ConditionSequence>("[]").is_err());
    }

    #[test]
    fn update_merges_once() {
        let mut kb = KnowledgeBase::new();
        let mut ctl = control();
        assert!(apply_update(&mut kb, &mut ctl, &seq("red"), act("red"), None).unwrap());
        assert_eq!(kb.len(), 1);
        let snapshot = ctl.clone();
        assert!(!apply_update(&mut kb, &mut ctl, &seq("red"), act("red"), None).unwrap());
        assert_eq!(ctl, snapshot);
        assert!(apply_update(&mut kb, &mut ctl, &seq("green"), act("green"), None).unwrap());
        assert_eq!(ctl.new_knowledge().len(), 2);
        assert_eq!(kb.len(), 2);
    }

    #[test]
    fn invalid_action_leaves_state_alone() {
        let mut kb = KnowledgeBase::new();
        let mut ctl = control();
        let mut bad = BtNode::decorator("invert", &[], act("red"));
        bad.children.push(act("red"));
        let err = apply_update(&mut kb, &mut ctl, &seq("red"), bad, None).unwrap_err();
        assert!(matches!(err, KnowledgeError::InvalidAction(_)));
        assert!(kb.is_empty());
        assert!(ctl.new_knowledge().is_empty());

        let registry = Registry::new();
        let err = apply_update(&mut kb, &mut ctl, &seq("red"), act("red"), Some(&registry));
        assert!(err.is_err());
        assert!(kb.is_empty());
    }

    #[test]
    fn buffer_add_dedupes_and_refreshes() {
        let mut buf = MessageBuffer::new(None);
        buf.add(msg("red", 10));
        assert_eq!(buf.len(), 1);
        buf.tick();
        buf.add(msg("red", 10));
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.messages()[0].timer, 10);
        buf.add(msg("red", 0));
        assert_eq!(buf.messages()[0].timer, 10);
    }

    #[test]
    fn buffer_capacity_evicts_smallest_timer() {
        let mut buf = MessageBuffer::new(Some(2));
        buf.add(msg("red", 5));
        buf.add(msg("green", 3));
        buf.add(msg("blue", 7));
        assert_eq!(buf.len(), 2);
        assert!(!buf.contains(&seq("green")));
        assert!(buf.contains(&seq("red")) && buf.contains(&seq("blue")));
    }

    #[test]
    fn buffer_tick_expires() {
        let mut buf = MessageBuffer::new(None);
        buf.tick();
        assert!(buf.is_empty());
        buf.add(msg("red", 1));
        buf.add(msg("green", 3));
        buf.tick();
        assert_eq!(buf.len(), 1);
        assert_eq!(buf.messages()[0].timer, 2);
    }

    #[test]
    fn five_thousand_iteration_timer() {
        let mut buf = MessageBuffer::new(None);
        buf.add(msg("red", 5000));
        for _ in 0..4999 {
            buf.tick();
        }
        assert!(buf.contains(&seq("red")));
        buf.tick();
        assert!(buf.is_empty());
    }

    #[test]
    fn take_removes_only_the_match() {
        let mut buf = MessageBuffer::new(None);
        buf.add(msg("red", 9));
        buf.add(msg("blue", 9));
        let got = buf.take(&seq("blue")).unwrap();
        assert_eq!(got.sequence, seq("blue"));
        assert_eq!(buf.len(), 1);
        assert!(buf.take(&seq("yellow")).is_none());
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn knowledge_base_json_round_trip() {
        let mut kb = KnowledgeBase::new();
        kb.record(seq("red"), act("red"));
        kb.record(seq("blue"), BtNode::sequence(vec![act("blue")]));
        let json = serde_json::to_string(&kb).unwrap();
        assert_eq!(
            json,
            r#"[{"sequence":[{"id":"target_in_range","params":["red"]}],"action":"ACT:pick_target(red)"},{"sequence":[{"id":"target_in_range","params":["blue"]}],"action":"SEQ[ ACT:pick_target(blue) ]"}]"#
        );
        let back: KnowledgeBase = serde_json::from_str(&json).unwrap();
        assert_eq!(back, kb);
    }
}
