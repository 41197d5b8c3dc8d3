//! Browser bindings: a steppable swarm for the canvas view and a stringBT
//! playground. Values cross the boundary as JSON strings.

use btswarm::behaviors::KnowledgeClass;
use btswarm::grammar::{self, ControlTree};
use btswarm::knowledge::{apply_update, ConditionSequence, KnowledgeBase};
use btswarm::modality::Modality;
use btswarm::sim::{RosterEntry, TargetCounts, World, WorldConfig};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// A small world: 1000 x 1000 arena, 19 ignorant robots and one that knows
/// every target, 10 targets per color.
pub fn demo_config(modality: Modality, comm_range: f64, seed: u64) -> WorldConfig {
    let mut cfg = WorldConfig {
        arena: [1000.0, 1000.0],
        targets: TargetCounts::uniform(10),
        zone_radius: 100.0,
        obstacles: vec![],
        comm_range,
        roster: vec![
            RosterEntry {
                modality,
                class: KnowledgeClass::I,
                count: 19,
            },
            RosterEntry {
                modality,
                class: KnowledgeClass::M,
                count: 1,
            },
        ],
        iterations: 20_000,
        seed,
        robot: Default::default(),
        protocol: Default::default(),
    };
    cfg.protocol.buffer_timer = 2500;
    cfg.protocol.query_cooldown = 50;
    cfg
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// A running trial the page steps and draws.
#[wasm_bindgen]
pub struct Swarm {
    world: World,
}

#[wasm_bindgen]
impl Swarm {
    /// `modality` is one of QRA, QRU, EU, EBU.
    #[wasm_bindgen(constructor)]
    pub fn new(modality: &str, comm_range: f64, seed: u64) -> Result<Swarm, JsError> {
        let modality: Modality = modality.parse().map_err(js_err)?;
        let world = World::new(demo_config(modality, comm_range, seed)).map_err(js_err)?;
        Ok(Swarm { world })
    }

    /// Builds a swarm from a full JSON world config.
    #[wasm_bindgen(js_name = fromConfig)]
    pub fn from_config(json: &str) -> Result<Swarm, JsError> {
        let cfg = WorldConfig::from_json(json).map_err(js_err)?;
        Ok(Swarm {
            world: World::new(cfg).map_err(js_err)?,
        })
    }

    /// Advances up to `n` iterations; returns how many ran.
    pub fn step(&mut self, n: u32) -> Result<u32, JsError> {
        let mut ran = 0;
        while ran < n && !self.world.is_finished() {
            self.world.step().map_err(js_err)?;
            ran += 1;
        }
        Ok(ran)
    }

    #[wasm_bindgen(js_name = isFinished)]
    pub fn is_finished(&self) -> bool {
        self.world.is_finished()
    }

    /// Robots, targets and the iteration counter as JSON.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(&self.world.snapshot()).expect("snapshot serializes")
    }

    /// Running counters as JSON.
    pub fn stats(&self) -> String {
        let ledger = self.world.ledger();
        let t = ledger.totals();
        json!({
            "iteration": self.world.iteration(),
            "collected": self.world.collected(),
            "queries": t.queries,
            "effective": t.effective,
            "upd_q": t.upd_q,
            "upd_eu": t.upd_eu,
            "upd_ebu": t.upd_ebu,
            "eq_percent": ledger.eq_percent(),
            "levels": self.world.knowledge_levels(),
        })
        .to_string()
    }

    /// The stringBT tree robot `id` currently ticks.
    #[wasm_bindgen(js_name = robotTree)]
    pub fn robot_tree(&self, id: usize) -> Option<String> {
        self.world.agents().get(id).map(|a| a.tree_text())
    }
}

/// Parses stringBT text and returns its canonical form.
#[wasm_bindgen(js_name = canonicalize)]
pub fn canonicalize(text: &str) -> Result<String, JsError> {
    canonical(text).map_err(js_err)
}

fn canonical(text: &str) -> Result<String, String> {
    let node = grammar::parse(text).map_err(|e| e.to_string())?;
    Ok(grammar::serialize(&node))
}

/// Merges `SEQ[<sequence conditions> <action>]` into the new-knowledge slot
/// of `control`. `sequence` is a JSON array like
/// `[{"id": "target_in_range", "params": ["red"]}]`. Returns the merged tree,
/// or the unchanged tree when the sequence is already present in `known`
/// (same JSON shape as a knowledge base).
#[wasm_bindgen(js_name = mergeKnowledge)]
pub fn merge_knowledge(control: &str, known: &str, sequence: &str, action: &str) -> Result<String, JsError> {
    merge(control, known, sequence, action).map_err(js_err)
}

fn merge(control: &str, known: &str, sequence: &str, action: &str) -> Result<String, String> {
    let mut control = ControlTree::parse(control).map_err(|e| format!("control tree: {e}"))?;
    let mut kb: KnowledgeBase = if known.trim().is_empty() {
        KnowledgeBase::new()
    } else {
        serde_json::from_str(known).map_err(|e| format!("knowledge: {e}"))?
    };
    let sequence: ConditionSequence = serde_json::from_str(sequence).map_err(|e| format!("sequence: {e}"))?;
    let action = grammar::parse(action).map_err(|e| format!("action: {e}"))?;
    let updated = apply_update(
        &mut kb,
        &mut control,
        &sequence,
        action,
        Some(btswarm::behaviors::registry()),
    )
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "updated": updated,
        "tree": grammar::serialize(control.root()),
        "knowledge": kb,
    })
    .to_string())
}

/// The control tree of a robot with no prior knowledge, as stringBT.
#[wasm_bindgen(js_name = ignorantControlTree)]
pub fn ignorant_control_tree() -> String {
    grammar::serialize(btswarm::behaviors::control_tree(&[]).root())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swarm_steps_and_snapshots() {
        let mut s = Swarm::new("EU", 100.0, 1).ok().unwrap();
        assert_eq!(s.step(25).ok().unwrap(), 25);
        let snap: serde_json::Value = serde_json::from_str(&s.snapshot()).unwrap();
        assert_eq!(snap["iteration"], 25);
        assert_eq!(snap["robots"].as_array().unwrap().len(), 20);
        assert_eq!(snap["targets"].as_array().unwrap().len(), 40);
        assert!(s.robot_tree(0).unwrap().starts_with("PAR[ SEL[ SEL#C["));
    }

    #[test]
    fn merge_into_ignorant_tree() {
        let out = merge(
            &ignorant_control_tree(),
            "",
            r#"[{"id": "target_in_range", "params": ["red"]}]"#,
            "ACT:pick_target(red)",
        )
        .unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["updated"], true);
        assert!(v["tree"]
            .as_str()
            .unwrap()
            .contains("SLOT:NK[ SEQ[ COND:target_in_range(red) ACT:pick_target(red) ] ]"));
        let again = merge(
            v["tree"].as_str().unwrap(),
            &v["knowledge"].to_string(),
            r#"[{"id": "target_in_range", "params": ["red"]}]"#,
            "ACT:pick_target(red)",
        )
        .unwrap();
        let v2: serde_json::Value = serde_json::from_str(&again).unwrap();
        assert_eq!(v2["updated"], false);
        assert_eq!(v2["tree"], v["tree"]);
    }

    #[test]
    fn canonical_form() {
        assert_eq!(canonical("SEL[SEQ[ACT:halt()]   ACT:random_walk() ]").unwrap(), "SEL[ SEQ[ ACT:halt() ] ACT:random_walk() ]");
        assert!(canonical("SEL[ ACT:halt()").is_err());
    }
}
