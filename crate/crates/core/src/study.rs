//! Seeded multi-trial sweeps: presets, trial fan-out, aggregation and CSV
//! output.
//!
//! Trial `k` of every sweep point runs with seed `base.seed + k`, so any
//! single trial can be re-run in isolation with `run --seed`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::behaviors::KnowledgeClass;
use crate::metrics::{Counters, LevelHistogram, MetricsLedger};
use crate::modality::Modality;
use crate::sim::{run_trial, RosterEntry, TargetCounts, WorldConfig};
use crate::stats::{mean, stddev};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    /// All four modalities at one communication range.
    ModalityCompare,
    /// Sweep of the communication range.
    CommRange,
    /// Sweep of the per-color target count.
    Opportunities,
    /// Sweep of the buffer lifetime t_m.
    BufferDuration,
}

impl StudyKind {
    pub const ALL: [StudyKind; 4] = [
        StudyKind::ModalityCompare,
        StudyKind::CommRange,
        StudyKind::Opportunities,
        StudyKind::BufferDuration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyKind::ModalityCompare => "modality-compare",
            StudyKind::CommRange => "comm-range",
            StudyKind::Opportunities => "opportunities",
            StudyKind::BufferDuration => "buffer-duration",
        }
    }

    /// Name of the swept quantity, used as the `x` column.
    pub fn sweep_name(self) -> &'static str {
        match self {
            StudyKind::ModalityCompare | StudyKind::CommRange => "comm_range",
            StudyKind::Opportunities => "targets_per_color",
            StudyKind::BufferDuration => "buffer_timer",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StudyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                format!("unknown study `{s}` (expected modality-compare, comm-range, opportunities or buffer-duration)")
            })
    }
}

/// A sweep of one parameter across modalities, with repeated seeded trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub study: StudyKind,
    pub modalities: Vec<Modality>,
    pub sweep: Vec<u64>,
    pub trials: u32,
    /// Every roster entry's modality is replaced by the series modality.
    pub base: WorldConfig,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

/// Query cooldown used by every preset: equal to the default response wait,
/// so a robot still stuck at an unknown target re-queries as soon as its
/// previous query times out.
pub const PRESET_QUERY_COOLDOWN: u32 = 50;

/// Scale factors with a preset.
pub const PRESET_SCALES: [f64; 2] = [0.25, 1.0];

impl StudySpec {
    /// The built-in study at `scale` 0.25 (desk) or 1.0 (full size).
    pub fn preset(study: StudyKind, scale: f64) -> Result<Self, String> {
        let full = if scale == 1.0 {
            true
        } else if scale == 0.25 {
            false
        } else {
            return Err(format!("no preset for scale {scale} (available: 0.25, 1.0)"));
        };
        let (side, ignorant, per_color, iterations, trials, range, t_m) = if full {
            (2000.0, 39, 25, 100_000, 20, 200.0, 5000)
        } else {
            (1000.0, 19, 10, 20_000, 5, 100.0, 2500)
        };
        let mut base = WorldConfig {
            arena: [side, side],
            targets: TargetCounts::uniform(per_color),
            zone_radius: 100.0,
            obstacles: vec![],
            comm_range: range,
            roster: vec![
                RosterEntry {
                    modality: Modality::Qru,
                    class: KnowledgeClass::I,
                    count: ignorant,
                },
                RosterEntry {
                    modality: Modality::Qru,
                    class: KnowledgeClass::M,
                    count: 1,
                },
            ],
            iterations,
            seed: 0,
            robot: Default::default(),
            protocol: Default::default(),
        };
        base.protocol.buffer_timer = t_m;
        base.protocol.query_cooldown = PRESET_QUERY_COOLDOWN;
        let sweep = match (study, full) {
            (StudyKind::ModalityCompare, _) => vec![range as u64],
            (StudyKind::CommRange, true) => vec![100, 200, 500, 800, 1000],
            (StudyKind::CommRange, false) => vec![50, 100, 250, 400, 500],
            (StudyKind::Opportunities, true) => vec![10, 25, 50, 100],
            (StudyKind::Opportunities, false) => vec![4, 10, 20, 40],
            (StudyKind::BufferDuration, true) => vec![200, 500, 1000, 2000, 5000, 10_000, 15_000],
            (StudyKind::BufferDuration, false) => vec![100, 250, 500, 1000, 2500],
        };
        let modalities = match study {
            StudyKind::ModalityCompare | StudyKind::CommRange => Modality::ALL.to_vec(),
            StudyKind::Opportunities => vec![Modality::Qru, Modality::Eu, Modality::Ebu],
            StudyKind::BufferDuration => vec![Modality::Ebu],
        };
        Ok(Self {
            study,
            modalities,
            sweep,
            trials,
            base,
            scale,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, crate::sim::ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: StudySpec =
            serde_path_to_error::deserialize(de).map_err(|e| crate::sim::ConfigError::Parse {
                path: e.path().to_string(),
                message: e.into_inner().to_string(),
            })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), crate::sim::ConfigError> {
        let invalid = |path: &str, message: &str| crate::sim::ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        };
        if self.modalities.is_empty() {
            return Err(invalid("modalities", "must not be empty"));
        }
        if self.sweep.is_empty() {
            return Err(invalid("sweep", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        self.base.validate().map_err(|e| match e {
            crate::sim::ConfigError::Invalid { path, message } => crate::sim::ConfigError::Invalid {
                path: format!("base.{path}"),
                message,
            },
            other => other,
        })?;
        for (i, v) in self.sweep.iter().enumerate() {
            let cfg = self.point_config(self.modalities[0], *v);
            cfg.validate().map_err(|e| invalid(&format!("sweep[{i}]"), &e.to_string()))?;
        }
        Ok(())
    }

    /// The configuration of one sweep point for `modality`, before seeding.
    pub fn point_config(&self, modality: Modality, value: u64) -> WorldConfig {
        let mut cfg = self.base.clone();
        for r in &mut cfg.roster {
            r.modality = modality;
        }
        match self.study {
            StudyKind::ModalityCompare | StudyKind::CommRange => cfg.comm_range = value as f64,
            StudyKind::Opportunities => cfg.targets = TargetCounts::uniform(value as usize),
            StudyKind::BufferDuration => cfg.protocol.buffer_timer = value as u32,
        }
        cfg
    }

    /// Every `(modality, value, trial)` combination in output order.
    pub fn jobs(&self) -> Vec<TrialJob> {
        let mut jobs = Vec::new();
        for &m in &self.modalities {
            for &v in &self.sweep {
                for t in 0..self.trials {
                    let mut config = self.point_config(m, v);
                    config.seed = self.base.seed + t as u64;
                    jobs.push(TrialJob {
                        modality: m,
                        value: v,
                        trial: t,
                        config,
                    });
                }
            }
        }
        jobs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialJob {
    pub modality: Modality,
    pub value: u64,
    pub trial: u32,
    pub config: WorldConfig,
}

impl TrialJob {
    /// Directory of this job's sweep point, relative to the study directory.
    pub fn point_dir(&self) -> String {
        format!("{}-{}", self.modality, self.value)
    }
}

/// The numbers a study keeps from one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub modality: Modality,
    pub value: u64,
    pub trial: u32,
    pub seed: u64,
    /// Iterations until every target was collected, or the iteration budget
    /// when the trial ran out first.
    pub completion: u64,
    pub completed: bool,
    pub collected: u64,
    pub totals: Counters,
    pub eq_percent: f64,
    pub initial_levels: LevelHistogram,
    pub final_levels: LevelHistogram,
    /// Iteration of each collection event, in order.
    pub collection_times: Vec<u64>,
}

impl TrialSummary {
    pub fn from_ledger(job: &TrialJob, ledger: &MetricsLedger) -> Self {
        let mut collection_times = Vec::new();
        let mut last = 0;
        for row in ledger.rows() {
            for _ in last..row.collected {
                collection_times.push(row.iter);
            }
            last = row.collected;
        }
        let completed = ledger.stop_iteration().is_some();
        Self {
            modality: job.modality,
            value: job.value,
            trial: job.trial,
            seed: job.config.seed,
            completion: ledger.stop_iteration().map_or(job.config.iterations, |s| s + 1),
            completed,
            collected: ledger.collected(),
            totals: ledger.totals(),
            eq_percent: ledger.eq_percent(),
            initial_levels: ledger.initial_levels(),
            final_levels: ledger.final_levels(),
            collection_times,
        }
    }

    pub fn updates(&self) -> u64 {
        self.totals.updates()
    }
}

/// Mean and sample standard deviation over the trials of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: stddev(xs),
        }
    }
}

/// Metric names in aggregate and plot output order.
pub const METRICS: [&str; 14] = [
    "completion",
    "collected",
    "queries",
    "effective",
    "upd_q",
    "upd_eu",
    "upd_ebu",
    "updates",
    "eq_percent",
    "level0",
    "level1",
    "level2",
    "level3",
    "level4",
];

fn metric(s: &TrialSummary, name: &str) -> f64 {
    let t = &s.totals;
    match name {
        "completion" => s.completion as f64,
        "collected" => s.collected as f64,
        "queries" => t.queries as f64,
        "effective" => t.effective as f64,
        "upd_q" => t.upd_q as f64,
        "upd_eu" => t.upd_eu as f64,
        "upd_ebu" => t.upd_ebu as f64,
        "updates" => t.updates() as f64,
        "eq_percent" => s.eq_percent,
        "level0" => s.final_levels[0] as f64,
        "level1" => s.final_levels[1] as f64,
        "level2" => s.final_levels[2] as f64,
        "level3" => s.final_levels[3] as f64,
        "level4" => s.final_levels[4] as f64,
        other => panic!("unknown metric {other}"),
    }
}

/// Aggregated results of one `(modality, value)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub modality: Modality,
    pub value: u64,
    pub trials: Vec<TrialSummary>,
    pub stats: BTreeMap<String, Stat>,
}

impl PointReport {
    fn new(modality: Modality, value: u64, trials: Vec<TrialSummary>) -> Self {
        let stats = METRICS
            .iter()
            .map(|m| {
                let xs: Vec<f64> = trials.iter().map(|t| metric(t, m)).collect();
                (m.to_string(), Stat::of(&xs))
            })
            .collect();
        Self {
            modality,
            value,
            trials,
            stats,
        }
    }

    pub fn stat(&self, metric: &str) -> Stat {
        self.stats[metric]
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.stat(metric).mean
    }

    /// Mean final knowledge-level histogram.
    pub fn mean_levels(&self) -> [f64; 5] {
        let mut h = [0.0; 5];
        for (i, slot) in h.iter_mut().enumerate() {
            *slot = self.mean(&format!("level{i}"));
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: StudyKind,
    pub points: Vec<PointReport>,
}

impl StudyReport {
    pub fn point(&self, modality: Modality, value: u64) -> Option<&PointReport> {
        self.points.iter().find(|p| p.modality == modality && p.value == value)
    }

    /// The points of one modality, in sweep order.
    pub fn series(&self, modality: Modality) -> Vec<&PointReport> {
        self.points.iter().filter(|p| p.modality == modality).collect()
    }

    /// One row per point: identifiers, then mean and std of every metric.
    pub fn aggregate_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["study".to_string(), "modality".into(), self.study.sweep_name().into(), "trials".into()];
        for m in METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        w.write_record(&header).expect("in-memory csv");
        for p in &self.points {
            let mut row = vec![
                self.study.name().to_string(),
                p.modality.to_string(),
                p.value.to_string(),
                p.trials.len().to_string(),
            ];
            for m in METRICS {
                let s = p.stat(m);
                row.push(fmt_num(s.mean));
                row.push(fmt_num(s.std));
            }
            w.write_record(&row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// Long-format plot data: one row per (modality, x, metric).
    pub fn plot_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["modality", "x", "metric", "mean", "std"]).expect("in-memory csv");
        for p in &self.points {
            for m in METRICS {
                let s = p.stat(m);
                w.write_record([
                    p.modality.to_string(),
                    p.value.to_string(),
                    m.to_string(),
                    fmt_num(s.mean),
                    fmt_num(s.std),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }

    /// Mean collected count over time per point, sampled every `every`
    /// iterations up to `until`.
    pub fn timeline_csv(&self, every: u64, until: u64) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["modality", "x", "iter", "collected_mean"]).expect("in-memory csv");
        let step = every.max(1);
        for p in &self.points {
            let mut t = 0;
            while t <= until {
                let counts: Vec<f64> = p
                    .trials
                    .iter()
                    .map(|s| s.collection_times.iter().filter(|&&c| c <= t).count() as f64)
                    .collect();
                w.write_record([
                    p.modality.to_string(),
                    p.value.to_string(),
                    t.to_string(),
                    fmt_num(mean(&counts)),
                ])
                .expect("in-memory csv");
                t += step;
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:.6}")
    }
}

fn run_job(job: &TrialJob, out: Option<&Path>) -> Result<TrialSummary, Error> {
    let ledger = run_trial(&job.config)?;
    if let Some(dir) = out {
        let dir = dir.join(job.point_dir());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join(format!("{}.csv", job.trial));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        ledger.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(TrialSummary::from_ledger(job, &ledger))
}

/// Runs every trial of `spec` on `jobs` worker threads. Outputs are
/// identical for any `jobs`.
///
/// With `out`, writes `out/<study>/<modality>-<value>/<trial>.csv` per trial
/// plus `aggregate.csv`, `plot.csv` and `timeline.csv` in `out/<study>`.
pub fn run_study(spec: &StudySpec, jobs: usize, out: Option<&Path>) -> Result<StudyReport, Error> {
    spec.validate()?;
    let study_dir: Option<PathBuf> = out.map(|o| o.join(spec.study.name()));
    let all = spec.jobs();
    let summaries = run_all(&all, jobs, study_dir.as_deref())?;

    let mut points = Vec::new();
    for &m in &spec.modalities {
        for &v in &spec.sweep {
            let trials: Vec<TrialSummary> = summaries
                .iter()
                .filter(|s| s.modality == m && s.value == v)
                .cloned()
                .collect();
            points.push(PointReport::new(m, v, trials));
        }
    }
    let report = StudyReport {
        study: spec.study,
        points,
    };
    if let Some(dir) = &study_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| -> Result<(), Error> {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write("aggregate.csv", report.aggregate_csv())?;
        write("plot.csv", report.plot_csv())?;
        let until = spec.base.iterations;
        write("timeline.csv", report.timeline_csv((until / 200).max(1), until))?;
    }
    Ok(report)
}

#[cfg(feature = "parallel")]
fn run_all(all: &[TrialJob], jobs: usize, out: Option<&Path>) -> Result<Vec<TrialSummary>, Error> {
    use rayon::prelude::*;
    if jobs <= 1 {
        return all.iter().map(|j| run_job(j, out)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    pool.install(|| all.par_iter().map(|j| run_job(j, out)).collect())
}

#[cfg(not(feature = "parallel"))]
fn run_all(all: &[TrialJob], _jobs: usize, out: Option<&Path>) -> Result<Vec<TrialSummary>, Error> {
    all.iter().map(|j| run_job(j, out)).collect()
}
