//! Query/update counters, collection timeline and knowledge levels.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::modality::Modality;
use crate::sim::WorldConfig;

/// Where a knowledge update came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpdateSource {
    /// Response to the robot's own query.
    #[serde(rename = "Q")]
    Query,
    /// Overheard response merged immediately.
    #[serde(rename = "EU")]
    Eavesdrop,
    /// Overheard response merged from the buffer on demand.
    #[serde(rename = "EBU")]
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    Query,
    Effective,
    Update(UpdateSource),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub iter: u64,
    pub robot: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counters {
    pub queries: u64,
    pub effective: u64,
    pub upd_q: u64,
    pub upd_eu: u64,
    pub upd_ebu: u64,
}

impl Counters {
    pub fn updates(&self) -> u64 {
        self.upd_q + self.upd_eu + self.upd_ebu
    }

    fn apply(&mut self, kind: EventKind) {
        match kind {
            EventKind::Query => self.queries += 1,
            EventKind::Effective => self.effective += 1,
            EventKind::Update(UpdateSource::Query) => self.upd_q += 1,
            EventKind::Update(UpdateSource::Eavesdrop) => self.upd_eu += 1,
            EventKind::Update(UpdateSource::Buffer) => self.upd_ebu += 1,
        }
    }
}

/// Cumulative counters at the end of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationRow {
    pub iter: u64,
    pub queries: u64,
    pub effective: u64,
    pub upd_q: u64,
    pub upd_eu: u64,
    pub upd_ebu: u64,
    pub collected: u64,
}

/// Robot count per knowledge level 0..=4.
pub type LevelHistogram = [usize; 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotRecord {
    pub robot: usize,
    pub modality: Modality,
    pub initial_knowledge: usize,
    pub final_knowledge: usize,
    pub counters: Counters,
}

/// Everything measured during one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsLedger {
    events: Vec<Event>,
    totals: Counters,
    robots: Vec<RobotRecord>,
    rows: Vec<IterationRow>,
    responses_delivered: u64,
    rejected_payloads: u64,
    initial_levels: LevelHistogram,
    final_levels: LevelHistogram,
    stop_iteration: Option<u64>,
}

impl MetricsLedger {
    /// A ledger for robots with the given modalities and initial |L_ks|.
    pub fn new(robots: &[(Modality, usize)], initial_levels: LevelHistogram) -> Self {
        Self {
            events: Vec::new(),
            totals: Counters::default(),
            robots: robots
                .iter()
                .enumerate()
                .map(|(robot, &(modality, known))| RobotRecord {
                    robot,
                    modality,
                    initial_knowledge: known,
                    final_knowledge: known,
                    counters: Counters::default(),
                })
                .collect(),
            rows: Vec::new(),
            responses_delivered: 0,
            rejected_payloads: 0,
            initial_levels,
            final_levels: initial_levels,
            stop_iteration: None,
        }
    }

    fn record(&mut self, robot: usize, iter: u64, kind: EventKind) {
        self.events.push(Event { iter, robot, kind });
        self.totals.apply(kind);
        self.robots[robot].counters.apply(kind);
    }

    pub fn record_query(&mut self, robot: usize, iter: u64) {
        self.record(robot, iter, EventKind::Query);
    }

    pub fn record_effective(&mut self, robot: usize, iter: u64) {
        self.record(robot, iter, EventKind::Effective);
    }

    pub fn record_update(&mut self, robot: usize, iter: u64, source: UpdateSource) {
        self.record(robot, iter, EventKind::Update(source));
    }

    pub fn record_response(&mut self) {
        self.responses_delivered += 1;
    }

    pub fn record_rejected_payload(&mut self) {
        self.rejected_payloads += 1;
    }

    /// Appends the cumulative row for `iter`.
    pub fn sample(&mut self, iter: u64, collected: u64) {
        let t = self.totals;
        self.rows.push(IterationRow {
            iter,
            queries: t.queries,
            effective: t.effective,
            upd_q: t.upd_q,
            upd_eu: t.upd_eu,
            upd_ebu: t.upd_ebu,
            collected,
        });
    }

    pub fn finish(&mut self, final_knowledge: &[usize], final_levels: LevelHistogram, stop: Option<u64>) {
        for (r, k) in self.robots.iter_mut().zip(final_knowledge) {
            r.final_knowledge = *k;
        }
        self.final_levels = final_levels;
        self.stop_iteration = stop;
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn totals(&self) -> Counters {
        self.totals
    }

    pub fn robots(&self) -> &[RobotRecord] {
        &self.robots
    }

    pub fn rows(&self) -> &[IterationRow] {
        &self.rows
    }

    pub fn responses_delivered(&self) -> u64 {
        self.responses_delivered
    }

    pub fn rejected_payloads(&self) -> u64 {
        self.rejected_payloads
    }

    pub fn initial_levels(&self) -> LevelHistogram {
        self.initial_levels
    }

    pub fn final_levels(&self) -> LevelHistogram {
        self.final_levels
    }

    pub fn stop_iteration(&self) -> Option<u64> {
        self.stop_iteration
    }

    pub fn collected(&self) -> u64 {
        self.rows.last().map(|r| r.collected).unwrap_or(0)
    }

    /// Fraction of posted queries that got an answer; 1.0 when none were posted.
    pub fn eq_percent(&self) -> f64 {
        eq_percent(self.totals.queries, self.totals.effective)
    }

    /// Counters recomputed from the event log alone.
    pub fn replay_counters(&self) -> (Counters, Vec<Counters>) {
        let mut total = Counters::default();
        let mut per = vec![Counters::default(); self.robots.len()];
        for e in &self.events {
            total.apply(e.kind);
            per[e.robot].apply(e.kind);
        }
        (total, per)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(["iter", "queries", "effective", "upd_q", "upd_eu", "upd_ebu", "collected"])?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory csv");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn report(&self, config: &WorldConfig) -> LedgerReport {
        LedgerReport {
            config: config.clone(),
            stop_iteration: self.stop_iteration,
            totals: self.totals,
            responses_delivered: self.responses_delivered,
            rejected_payloads: self.rejected_payloads,
            eq_percent: self.eq_percent(),
            initial_levels: self.initial_levels,
            final_levels: self.final_levels,
            robots: self.robots.clone(),
            rows: self.rows.clone(),
        }
    }
}

pub fn eq_percent(queries: u64, effective: u64) -> f64 {
    if queries == 0 {
        1.0
    } else {
        effective as f64 / queries as f64
    }
}

/// JSON form of a finished trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerReport {
    pub config: WorldConfig,
    pub stop_iteration: Option<u64>,
    pub totals: Counters,
    pub responses_delivered: u64,
    pub rejected_payloads: u64,
    pub eq_percent: f64,
    pub initial_levels: LevelHistogram,
    pub final_levels: LevelHistogram,
    pub robots: Vec<RobotRecord>,
    pub rows: Vec<IterationRow>,
}

impl LedgerReport {
    /// Parses a report and checks its internal consistency.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let report: LedgerReport =
            serde_path_to_error::deserialize(de).map_err(|e| format!("{}: {}", e.path(), e.inner()))?;
        report.check()?;
        Ok(report)
    }

    pub fn check(&self) -> Result<(), String> {
        let p = self.robots.len();
        if self.initial_levels.iter().sum::<usize>() != p || self.final_levels.iter().sum::<usize>() != p {
            return Err("level histograms must sum to the roster size".into());
        }
        if !(0.0..=1.0).contains(&self.eq_percent) {
            return Err("eq_percent out of [0, 1]".into());
        }
        let mut sum = Counters::default();
        for r in &self.robots {
            if r.counters.updates() as usize != r.final_knowledge - r.initial_knowledge.min(r.final_knowledge)
                || r.final_knowledge < r.initial_knowledge
            {
                return Err(format!("robot {}: updates do not match knowledge growth", r.robot));
            }
            sum.queries += r.counters.queries;
            sum.effective += r.counters.effective;
            sum.upd_q += r.counters.upd_q;
            sum.upd_eu += r.counters.upd_eu;
            sum.upd_ebu += r.counters.upd_ebu;
        }
        if sum != self.totals {
            return Err("per-robot counters do not add up to the totals".into());
        }
        let mut prev: Option<&IterationRow> = None;
        for row in &self.rows {
            if row.effective > row.queries {
                return Err(format!("iteration {}: more effective queries than queries", row.iter));
            }
            if let Some(prev) = prev {
                if row.iter <= prev.iter || row.collected < prev.collected || row.queries < prev.queries {
                    return Err(format!("iteration {}: timeline is not monotone", row.iter));
                }
            }
            prev = Some(row);
        }
        Ok(())
    }
}
