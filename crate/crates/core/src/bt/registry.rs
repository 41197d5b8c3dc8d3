use std::collections::BTreeMap;

use super::{Blackboard, BtError, NodeStatus};

/// Evaluates a condition. Takes the blackboard by shared reference, so a
/// condition cannot mutate it.
pub type ConditionFn = fn(&[String], &Blackboard) -> Result<bool, BtError>;

/// Runs one step of an action routine. Progress state lives in the blackboard.
pub type ActionFn = fn(&[String], &mut Blackboard) -> Result<NodeStatus, BtError>;

#[derive(Clone, Copy)]
pub struct ConditionEntry {
    pub eval: ConditionFn,
    /// Blackboard keys the condition reads; checked against the schema at compile time.
    pub reads: &'static [&'static str],
}

#[derive(Clone, Copy)]
pub struct ActionEntry {
    pub run: ActionFn,
}

/// Condition and action routines available to compiled trees.
#[derive(Clone, Default)]
pub struct Registry {
    conditions: BTreeMap<String, ConditionEntry>,
    actions: BTreeMap<String, ActionEntry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_condition(
        &mut self,
        id: &str,
        reads: &'static [&'static str],
        eval: ConditionFn,
    ) -> &mut Self {
        self.conditions
            .insert(id.to_string(), ConditionEntry { eval, reads });
        self
    }

    pub fn add_action(&mut self, id: &str, run: ActionFn) -> &mut Self {
        self.actions.insert(id.to_string(), ActionEntry { run });
        self
    }

    pub fn condition(&self, id: &str) -> Result<&ConditionEntry, BtError> {
        self.conditions
            .get(id)
            .ok_or_else(|| BtError::UnknownCondition(id.to_string()))
    }

    pub fn action(&self, id: &str) -> Result<&ActionEntry, BtError> {
        self.actions
            .get(id)
            .ok_or_else(|| BtError::UnknownAction(id.to_string()))
    }

    /// Pure read of `bb`.
    pub fn evaluate_condition(
        &self,
        id: &str,
        params: &[String],
        bb: &Blackboard,
    ) -> Result<bool, BtError> {
        (self.condition(id)?.eval)(params, bb)
    }

    pub fn execute_action(
        &self,
        id: &str,
        params: &[String],
        bb: &mut Blackboard,
    ) -> Result<NodeStatus, BtError> {
        (self.action(id)?.run)(params, bb)
    }

    pub fn condition_ids(&self) -> impl Iterator<Item = &str> {
        self.conditions.keys().map(String::as_str)
    }

    pub fn action_ids(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for Registry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Registry")
            .field("conditions", &self.conditions.keys().collect::<Vec<_>>())
            .field("actions", &self.actions.keys().collect::<Vec<_>>())
            .finish()
    }
}
