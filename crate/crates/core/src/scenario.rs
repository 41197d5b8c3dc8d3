//! Scripted, motionless, fully-connected scenarios for checking the protocol
//! counters exactly: robots "face" a target color on a fixed schedule.

use crate::behaviors::{self, Color};
use crate::bt::BtError;
use crate::knowledge::ConditionSequence;
use crate::metrics::MetricsLedger;
use crate::modality::{deliver_queries, deliver_responses, Agent, AgentParams, MessageKind, Modality, WireMessage};

/// Robot `robot` faces a `color` target during `start..start + duration`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Occurrence {
    pub robot: usize,
    pub color: Color,
    pub start: u64,
    pub duration: u64,
}

impl Occurrence {
    fn covers(&self, iteration: u64) -> bool {
        (self.start..self.start + self.duration).contains(&iteration)
    }
}

/// `count` occurrences of `color` for each robot in `robots`, `spacing`
/// iterations apart, each lasting `duration`. Robots are offset from each
/// other by `stagger` iterations.
pub fn repeated(robots: &[usize], color: Color, count: u64, spacing: u64, duration: u64, stagger: u64) -> Vec<Occurrence> {
    robots
        .iter()
        .enumerate()
        .flat_map(|(k, &robot)| {
            (0..count).map(move |n| Occurrence {
                robot,
                color,
                start: k as u64 * stagger + n * spacing,
                duration,
            })
        })
        .collect()
}

#[derive(Debug)]
pub struct StaticScenario {
    agents: Vec<Agent>,
    ledger: MetricsLedger,
    iteration: u64,
    pending: Vec<WireMessage>,
    trace: Vec<WireMessage>,
}

impl StaticScenario {
    /// One robot per `(modality, prior knowledge)` entry; ids follow the order.
    pub fn new(members: &[(Modality, Vec<Color>)], params: AgentParams) -> Result<Self, BtError> {
        let agents = members
            .iter()
            .enumerate()
            .map(|(id, (m, prior))| Agent::new(id, *m, prior, params, behaviors::schema(1000.0, 1000.0)))
            .collect::<Result<Vec<_>, _>>()?;
        let roster: Vec<_> = agents.iter().map(|a| (a.modality(), a.kb().len())).collect();
        let ledger = MetricsLedger::new(&roster, levels(&agents));
        Ok(Self {
            agents,
            ledger,
            iteration: 0,
            pending: Vec::new(),
            trace: Vec::new(),
        })
    }

    /// Advances one iteration; `facing[i]` is what robot `i` currently sees.
    pub fn step(&mut self, facing: &[Option<Color>]) -> Result<(), BtError> {
        let it = self.iteration;
        for (a, f) in self.agents.iter_mut().zip(facing) {
            behaviors::write_detection(a.blackboard_mut(), f.map(|c| (c, 0, 10.0, 10.0)));
            a.refresh_percept()?;
        }
        let responses = std::mem::take(&mut self.pending);
        deliver_responses(&mut self.agents, &responses, |_, _| true, it, &mut self.ledger)?;
        let mut queries = Vec::new();
        for a in &mut self.agents {
            a.process_modality(it, &mut self.ledger)?;
            a.tick(it)?;
            queries.extend(a.maybe_post_query(it, &mut self.ledger));
        }
        self.pending = deliver_queries(&self.agents, &queries, |_, _| true, it);
        self.trace.extend(queries);
        self.trace.extend(self.pending.iter().cloned());
        for a in &mut self.agents {
            a.end_iteration()?;
        }
        self.ledger.sample(it, 0);
        self.iteration += 1;
        Ok(())
    }

    /// Runs `iterations` steps following the occurrence schedule.
    pub fn run(&mut self, schedule: &[Occurrence], iterations: u64) -> Result<(), BtError> {
        for _ in 0..iterations {
            let mut facing = vec![None; self.agents.len()];
            for o in schedule.iter().filter(|o| o.covers(self.iteration)) {
                facing[o.robot] = Some(o.color);
            }
            self.step(&facing)?;
        }
        let knowledge: Vec<_> = self.agents.iter().map(|a| a.kb().len()).collect();
        self.ledger.finish(&knowledge, levels(&self.agents), None);
        Ok(())
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    /// Every query and response posted so far.
    pub fn trace(&self) -> &[WireMessage] {
        &self.trace
    }

    /// Queries posted for `sequence`, by robot id.
    pub fn queries_for(&self, sequence: &ConditionSequence) -> Vec<usize> {
        self.trace
            .iter()
            .filter_map(|m| match &m.kind {
                MessageKind::Query { sender, sequence: s } if s == sequence => Some(*sender),
                _ => None,
            })
            .collect()
    }
}

fn levels(agents: &[Agent]) -> [usize; 5] {
    let mut h = [0; 5];
    for a in agents {
        h[a.knowledge_level()] += 1;
    }
    h
}
