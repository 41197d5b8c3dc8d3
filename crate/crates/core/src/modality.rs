//! The four knowledge-transfer modalities as per-robot state machines, and the
//! synchronous delivery phases of the shared broadcast medium.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behaviors::{self, keys, Color};
use crate::bt::{compile, Blackboard, BtError, BtNode, LiveTree, NodeStatus};
use crate::grammar;
use crate::knowledge::{apply_update, ConditionSequence, EavesdropMessage, KnowledgeBase, MessageBuffer};
use crate::metrics::{MetricsLedger, UpdateSource};
use crate::grammar::ControlTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    /// Query-response-action: the answer is executed once and not retained.
    #[serde(rename = "QRA")]
    Qra,
    /// Query-response-update: the answer is merged into the control tree.
    #[serde(rename = "QRU")]
    Qru,
    /// QRU plus immediate merging of overheard responses.
    #[serde(rename = "EU")]
    Eu,
    /// QRU plus buffering overheard responses until they are needed.
    #[serde(rename = "EBU")]
    Ebu,
}

impl Modality {
    pub const ALL: [Modality; 4] = [Modality::Qra, Modality::Qru, Modality::Eu, Modality::Ebu];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Qra => "QRA",
            Modality::Qru => "QRU",
            Modality::Eu => "EU",
            Modality::Ebu => "EBU",
        }
    }

    pub fn eavesdrops(self) -> bool {
        matches!(self, Modality::Eu | Modality::Ebu)
    }

    pub fn retains(self) -> bool {
        self != Modality::Qra
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown modality `{s}` (expected QRA, QRU, EU or EBU)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Query {
        sender: usize,
        sequence: ConditionSequence,
    },
    Response {
        sender: usize,
        recipient: usize,
        sequence: ConditionSequence,
        action_text: String,
    },
}

/// A message on the shared medium, stamped with the iteration it was posted in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMessage {
    pub iteration: u64,
    pub kind: MessageKind,
}

/// One line of the JSON-lines message trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceLine {
    pub iter: u64,
    pub kind: String,
    pub from: usize,
    pub to: Option<usize>,
    pub seq: String,
    pub payload: Option<String>,
}

impl WireMessage {
    pub fn sender(&self) -> usize {
        match &self.kind {
            MessageKind::Query { sender, .. } | MessageKind::Response { sender, .. } => *sender,
        }
    }

    pub fn sequence(&self) -> &ConditionSequence {
        match &self.kind {
            MessageKind::Query { sequence, .. } | MessageKind::Response { sequence, .. } => sequence,
        }
    }

    pub fn trace_line(&self) -> TraceLine {
        match &self.kind {
            MessageKind::Query { sender, sequence } => TraceLine {
                iter: self.iteration,
                kind: "query".into(),
                from: *sender,
                to: None,
                seq: sequence.to_string(),
                payload: None,
            },
            MessageKind::Response {
                sender,
                recipient,
                sequence,
                action_text,
            } => TraceLine {
                iter: self.iteration,
                kind: "response".into(),
                from: *sender,
                to: Some(*recipient),
                seq: sequence.to_string(),
                payload: Some(action_text.clone()),
            },
        }
    }
}

/// Per-robot protocol timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentParams {
    /// Iterations a robot waits for an answer after querying.
    pub query_wait: u32,
    /// Ticks of the modality subtree during which no new query is posted.
    pub query_cooldown: u32,
    /// Lifetime of an overheard message in the buffer (t_m).
    pub buffer_timer: u32,
    pub buffer_capacity: Option<usize>,
    /// Longest a received QRA subtree stays installed.
    pub transient_limit: u32,
    /// Whether a waiting robot stops moving.
    pub freeze_on_query: bool,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            query_wait: 50,
            query_cooldown: 100,
            buffer_timer: 5000,
            buffer_capacity: None,
            transient_limit: 50,
            freeze_on_query: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryState {
    Idle,
    Waiting { sequence: ConditionSequence, remaining: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Transient {
    sequence: ConditionSequence,
    subtree: BtNode,
    remaining: u32,
}

/// One robot's knowledge state and behavior tree.
#[derive(Debug, Clone)]
pub struct Agent {
    id: usize,
    modality: Modality,
    params: AgentParams,
    kb: KnowledgeBase,
    control: ControlTree,
    buffer: MessageBuffer,
    bb: Blackboard,
    query: QueryState,
    transient: Option<Transient>,
    percept: Option<ConditionSequence>,
    live: LiveTree,
    initial_knowledge: usize,
}

impl Agent {
    /// A robot that starts out knowing how to handle the `prior` colors.
    /// `bb` must carry the full blackboard schema.
    pub fn new(
        id: usize,
        modality: Modality,
        prior: &[Color],
        params: AgentParams,
        bb: Blackboard,
    ) -> Result<Self, BtError> {
        let mut kb = KnowledgeBase::new();
        for &c in prior {
            kb.record(behaviors::target_sequence(c), behaviors::target_action(c));
        }
        let control = behaviors::control_tree(prior);
        let live = build_live(&control, None, params.query_cooldown, &bb)?;
        Ok(Self {
            id,
            modality,
            params,
            initial_knowledge: kb.len(),
            kb,
            control,
            buffer: MessageBuffer::new(params.buffer_capacity),
            bb,
            query: QueryState::Idle,
            transient: None,
            percept: None,
            live,
        })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn control(&self) -> &ControlTree {
        &self.control
    }

    pub fn buffer(&self) -> &MessageBuffer {
        &self.buffer
    }

    pub fn blackboard(&self) -> &Blackboard {
        &self.bb
    }

    pub fn blackboard_mut(&mut self) -> &mut Blackboard {
        &mut self.bb
    }

    pub fn query_state(&self) -> &QueryState {
        &self.query
    }

    pub fn is_waiting(&self) -> bool {
        matches!(self.query, QueryState::Waiting { .. })
    }

    /// Whether motion is suppressed this iteration.
    pub fn is_frozen(&self) -> bool {
        self.params.freeze_on_query && self.is_waiting()
    }

    pub fn has_transient(&self) -> bool {
        self.transient.is_some()
    }

    pub fn percept(&self) -> Option<&ConditionSequence> {
        self.percept.as_ref()
    }

    pub fn initial_knowledge(&self) -> usize {
        self.initial_knowledge
    }

    /// Distinct target colors this robot can handle.
    pub fn knowledge_level(&self) -> usize {
        behaviors::known_colors(&self.kb).len()
    }

    /// The full tree ticked each iteration, in stringBT form.
    pub fn tree_text(&self) -> String {
        grammar::serialize(&compose(&self.control, self.transient.as_ref(), self.params.query_cooldown))
    }

    fn rebuild(&mut self) -> Result<(), BtError> {
        self.live = build_live(
            &self.control,
            self.transient.as_ref(),
            self.params.query_cooldown,
            &self.bb,
        )?;
        Ok(())
    }

    /// Reads the salient percept from the blackboard after sensing, drops a
    /// stale transient subtree, and publishes the derived flags.
    pub fn refresh_percept(&mut self) -> Result<(), BtError> {
        self.percept = behaviors::percept_sequence(&self.bb)?;
        let unknown = self.percept.as_ref().is_some_and(|s| !self.kb.knows(s));
        self.bb.set(keys::PERCEPT_UNKNOWN, unknown);
        self.bb.set(keys::QUERY_WAITING, self.is_waiting());
        if let Some(t) = &self.transient {
            if self.percept.as_ref() != Some(&t.sequence) {
                self.transient = None;
                self.rebuild()?;
            }
        }
        Ok(())
    }

    /// Whether the robot faces a sequence it does not know and is free to act on it.
    pub fn faces_unknown(&self) -> Option<&ConditionSequence> {
        match (&self.percept, &self.query) {
            (Some(s), QueryState::Idle) if !self.kb.knows(s) && self.transient.is_none() => Some(s),
            _ => None,
        }
    }

    /// Ticks the tree root once, after resetting the per-tick intents.
    pub fn tick(&mut self, iteration: u64) -> Result<NodeStatus, BtError> {
        self.bb.set(keys::ITERATION, iteration as i64);
        behaviors::clear_intents(&mut self.bb);
        self.live.tick(&mut self.bb)
    }

    /// Posts a query if the modality subtree asked for one this tick.
    pub fn maybe_post_query(&mut self, iteration: u64, ledger: &mut MetricsLedger) -> Option<WireMessage> {
        if !self.bb.bool(keys::INTENT_QUERY).unwrap_or(false) {
            return None;
        }
        let sequence = self.faces_unknown()?.clone();
        self.query = QueryState::Waiting {
            sequence: sequence.clone(),
            remaining: self.params.query_wait,
        };
        self.bb.set(keys::QUERY_WAITING, true);
        ledger.record_query(self.id, iteration);
        Some(WireMessage {
            iteration,
            kind: MessageKind::Query {
                sender: self.id,
                sequence,
            },
        })
    }

    /// Answers `query` if this robot knows the queried sequence.
    pub fn maybe_respond(&self, query: &WireMessage, iteration: u64) -> Option<WireMessage> {
        let MessageKind::Query { sender, sequence } = &query.kind else {
            return None;
        };
        if *sender == self.id {
            return None;
        }
        let action = self.kb.lookup(sequence)?;
        Some(WireMessage {
            iteration,
            kind: MessageKind::Response {
                sender: self.id,
                recipient: *sender,
                sequence: sequence.clone(),
                action_text: grammar::serialize(action),
            },
        })
    }

    /// Handles a response addressed to this robot. Returns whether it was accepted.
    pub fn on_response(
        &mut self,
        response: &WireMessage,
        iteration: u64,
        ledger: &mut MetricsLedger,
    ) -> Result<bool, BtError> {
        let MessageKind::Response {
            recipient,
            sequence,
            action_text,
            ..
        } = &response.kind
        else {
            return Ok(false);
        };
        if *recipient != self.id {
            return Ok(false);
        }
        match &self.query {
            QueryState::Waiting { sequence: waited, .. } if waited == sequence => {}
            _ => return Ok(false),
        }
        let Some(action) = parse_valid(action_text) else {
            ledger.record_rejected_payload();
            return Ok(false);
        };
        if self.modality.retains() {
            match apply_update(
                &mut self.kb,
                &mut self.control,
                sequence,
                action,
                Some(behaviors::registry()),
            ) {
                Ok(true) => ledger.record_update(self.id, iteration, UpdateSource::Query),
                Ok(false) => {}
                Err(_) => {
                    ledger.record_rejected_payload();
                    return Ok(false);
                }
            }
        } else {
            self.transient = Some(Transient {
                sequence: sequence.clone(),
                subtree: grammar::make_knowledge_subtree(sequence, action),
                remaining: self.params.transient_limit,
            });
        }
        self.query = QueryState::Idle;
        self.bb.set(keys::QUERY_WAITING, false);
        ledger.record_effective(self.id, iteration);
        self.rebuild()?;
        Ok(true)
    }

    /// Captures a response exchanged between two other robots. Range to both
    /// endpoints is the medium's concern.
    pub fn intercept(&self, response: &WireMessage) -> Option<EavesdropMessage> {
        if !self.modality.eavesdrops() {
            return None;
        }
        let MessageKind::Response {
            sender,
            recipient,
            sequence,
            action_text,
        } = &response.kind
        else {
            return None;
        };
        if *sender == self.id || *recipient == self.id {
            return None;
        }
        Some(EavesdropMessage {
            sequence: sequence.clone(),
            action: parse_valid(action_text)?,
            timer: self.params.buffer_timer,
            source_iteration: response.iteration,
        })
    }

    pub fn buffer_add(&mut self, m: EavesdropMessage) {
        self.buffer.add(m);
    }

    /// EU: merge every buffered message with an unknown sequence, then clear
    /// the buffer. Failure when there was nothing buffered.
    pub fn eu_process(&mut self, iteration: u64, ledger: &mut MetricsLedger) -> Result<NodeStatus, BtError> {
        if self.buffer.is_empty() {
            return Ok(NodeStatus::Failure);
        }
        let mut changed = false;
        for m in self.buffer.drain() {
            if let Ok(true) = apply_update(
                &mut self.kb,
                &mut self.control,
                &m.sequence,
                m.action,
                Some(behaviors::registry()),
            ) {
                ledger.record_update(self.id, iteration, UpdateSource::Eavesdrop);
                changed = true;
            }
        }
        if changed {
            self.after_knowledge_change()?;
        }
        Ok(NodeStatus::Success)
    }

    /// EBU: on facing an unknown sequence, merge it from the buffer if it was
    /// overheard. Failure means the robot falls back to querying.
    pub fn ebu_process(&mut self, iteration: u64, ledger: &mut MetricsLedger) -> Result<NodeStatus, BtError> {
        let Some(sequence) = self.faces_unknown().cloned() else {
            return Ok(NodeStatus::Failure);
        };
        let Some(m) = self.buffer.take(&sequence) else {
            return Ok(NodeStatus::Failure);
        };
        match apply_update(
            &mut self.kb,
            &mut self.control,
            &m.sequence,
            m.action,
            Some(behaviors::registry()),
        ) {
            Ok(true) => {
                ledger.record_update(self.id, iteration, UpdateSource::Buffer);
                self.after_knowledge_change()?;
                Ok(NodeStatus::Success)
            }
            _ => Ok(NodeStatus::Failure),
        }
    }

    /// Runs the modality's own processing step for this iteration.
    pub fn process_modality(&mut self, iteration: u64, ledger: &mut MetricsLedger) -> Result<(), BtError> {
        match self.modality {
            Modality::Eu => {
                self.eu_process(iteration, ledger)?;
            }
            Modality::Ebu => {
                self.ebu_process(iteration, ledger)?;
            }
            Modality::Qra | Modality::Qru => {}
        }
        Ok(())
    }

    fn after_knowledge_change(&mut self) -> Result<(), BtError> {
        let unknown = self.percept.as_ref().is_some_and(|s| !self.kb.knows(s));
        self.bb.set(keys::PERCEPT_UNKNOWN, unknown);
        self.rebuild()
    }

    /// End-of-iteration bookkeeping: buffer timers, query wait and transient limit.
    pub fn end_iteration(&mut self) -> Result<(), BtError> {
        self.buffer.tick();
        if let QueryState::Waiting { remaining, .. } = &mut self.query {
            *remaining = remaining.saturating_sub(1);
            if *remaining == 0 {
                self.query = QueryState::Idle;
                self.bb.set(keys::QUERY_WAITING, false);
            }
        }
        if let Some(t) = &mut self.transient {
            t.remaining = t.remaining.saturating_sub(1);
            if t.remaining == 0 {
                self.transient = None;
                self.rebuild()?;
            }
        }
        Ok(())
    }
}

fn parse_valid(text: &str) -> Option<BtNode> {
    let node = grammar::parse(text).ok()?;
    compile(&node, behaviors::registry(), None).ok()?;
    Some(node)
}

fn compose(control: &ControlTree, transient: Option<&Transient>, cooldown: u32) -> BtNode {
    let control_root = match transient {
        Some(t) => control.with_before_fallback(t.subtree.clone()),
        None => control.root().clone(),
    };
    BtNode::parallel(vec![control_root, behaviors::modality_tree(cooldown)])
}

/// Serializes the composed tree and compiles it from text, as a received
/// subtree would be.
fn build_live(
    control: &ControlTree,
    transient: Option<&Transient>,
    cooldown: u32,
    bb: &Blackboard,
) -> Result<LiveTree, BtError> {
    let text = grammar::serialize(&compose(control, transient, cooldown));
    let node = grammar::parse(&text).expect("canonical text parses");
    compile(&node, behaviors::registry(), Some(bb))
}

/// Delivers the responses posted last iteration to their recipients and lets
/// robots in range of both endpoints overhear them.
pub fn deliver_responses<F>(
    agents: &mut [Agent],
    responses: &[WireMessage],
    connected: F,
    iteration: u64,
    ledger: &mut MetricsLedger,
) -> Result<(), BtError>
where
    F: Fn(usize, usize) -> bool,
{
    for r in responses {
        let MessageKind::Response { sender, recipient, .. } = r.kind else {
            continue;
        };
        ledger.record_response();
        agents[recipient].on_response(r, iteration, ledger)?;
        for (w, agent) in agents.iter_mut().enumerate() {
            if w == sender || w == recipient || !connected(w, sender) || !connected(w, recipient) {
                continue;
            }
            if let Some(m) = agent.intercept(r) {
                agent.buffer_add(m);
            }
        }
    }
    Ok(())
}

/// Delivers this iteration's queries. The lowest-id robot in range of the
/// sender that knows the sequence answers; the answer arrives next iteration.
pub fn deliver_queries<F>(agents: &[Agent], queries: &[WireMessage], connected: F, iteration: u64) -> Vec<WireMessage>
where
    F: Fn(usize, usize) -> bool,
{
    queries
        .iter()
        .filter_map(|q| {
            let sender = q.sender();
            agents
                .iter()
                .filter(|a| a.id() != sender && connected(a.id(), sender))
                .find_map(|a| a.maybe_respond(q, iteration))
        })
        .collect()
}
