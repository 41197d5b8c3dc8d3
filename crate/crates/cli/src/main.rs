//! `btswarm`: run single trials, preset or custom studies, validate configs,
//! and record message traces.
//!
//! Exit codes: 0 success, 1 a trial or output failure, 2 usage or config error.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use btswarm::metrics::MetricsLedger;
use btswarm::sim::{World, WorldConfig};
use btswarm::study::{run_study, StudyKind, StudySpec};
use btswarm::Error;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "btswarm", version, about = "Behavior-tree knowledge transfer in a simulated robot swarm")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial from a JSON world config.
    Run(RunArgs),
    /// Run a preset study (modality-compare, comm-range, opportunities,
    /// buffer-duration) or a JSON study spec.
    Study(StudyArgs),
    /// Check a world config or study spec against the schema.
    Validate {
        /// JSON file to check.
        file: PathBuf,
    },
    /// Run one trial and write every query and response as JSON lines.
    Trace(TraceArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// World config (JSON).
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for ledger.csv, ledger.json and knowledge.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the JSON-lines message trace to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StudyArgs {
    /// Preset name or path to a JSON study spec.
    study: String,
    /// Preset scale: 0.25 (desk) or 1.0 (full).
    #[arg(long, default_value_t = 0.25)]
    scale: f64,
    /// Override the number of trials per sweep point.
    #[arg(long)]
    trials: Option<u32>,
    /// Base seed; trial k runs with seed + k.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Never changes any output.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; results go to OUT/<study>/.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// World config (JSON).
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trace file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Study(a) => study(a),
        Command::Validate { file } => validate(&file),
        Command::Trace(a) => trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<WorldConfig, Failure> {
    let mut cfg = WorldConfig::from_json(&read(path)?)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn summary(ledger: &MetricsLedger) -> serde_json::Value {
    let t = ledger.totals();
    json!({
        "stop_iteration": ledger.stop_iteration(),
        "collected": ledger.collected(),
        "queries": t.queries,
        "effective": t.effective,
        "upd_q": t.upd_q,
        "upd_eu": t.upd_eu,
        "upd_ebu": t.upd_ebu,
        "eq_percent": ledger.eq_percent(),
        "final_levels": ledger.final_levels(),
    })
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, a.seed)?;
    let mut world = World::new(cfg.clone()).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut trace = match &a.trace {
        Some(p) => Some(BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?,
        )),
        None => None,
    };
    while !world.is_finished() {
        world.step().map_err(|e| Failure::Runtime(format!("trial failed: {e}")))?;
        if let Some(w) = trace.as_mut() {
            write_trace(w, &world).map_err(|e| Failure::Runtime(format!("trace: {e}")))?;
        }
    }
    if let Some(mut w) = trace {
        w.flush().map_err(|e| Failure::Runtime(format!("trace: {e}")))?;
    }
    let knowledge: Vec<_> = world
        .agents()
        .iter()
        .map(|ag| json!({"robot": ag.id(), "modality": ag.modality(), "knowledge": ag.kb()}))
        .collect();
    let ledger = world.into_ledger();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
        let mut csv = Vec::new();
        ledger.write_csv(&mut csv).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(&dir.join("ledger.csv"), &csv)?;
        let report = serde_json::to_string_pretty(&ledger.report(&cfg)).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(&dir.join("ledger.json"), report.as_bytes())?;
        let kb = serde_json::to_string_pretty(&knowledge).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(&dir.join("knowledge.json"), kb.as_bytes())?;
    }
    println!("{}", summary(&ledger));
    Ok(())
}

fn write_trace<W: Write>(w: &mut W, world: &World) -> io::Result<()> {
    for m in world.posted_messages() {
        serde_json::to_writer(&mut *w, &m.trace_line())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn study(a: StudyArgs) -> Result<(), Failure> {
    let mut spec = match a.study.parse::<StudyKind>() {
        Ok(kind) => StudySpec::preset(kind, a.scale).map_err(Failure::Usage)?,
        Err(preset_err) => {
            let path = Path::new(&a.study);
            if !path.is_file() {
                return Err(Failure::Usage(format!("{preset_err}, and no spec file `{}`", a.study)));
            }
            StudySpec::from_json(&read(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(t) = a.trials {
        if t == 0 {
            return Err(Failure::Usage("--trials must be at least 1".into()));
        }
        spec.trials = t;
    }
    if let Some(s) = a.seed {
        spec.base.seed = s;
    }
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let report = run_study(&spec, a.jobs, a.out.as_deref())?;
    print!("{}", report.aggregate_csv());
    Ok(())
}

fn validate(file: &Path) -> Result<(), Failure> {
    let text = read(file)?;
    let is_study = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("study").is_some())
        .unwrap_or(false);
    let result = if is_study {
        StudySpec::from_json(&text).map(|_| "study spec")
    } else {
        WorldConfig::from_json(&text).map(|_| "world config")
    };
    match result {
        Ok(kind) => {
            println!("{}: valid {kind}", file.display());
            Ok(())
        }
        Err(e) => Err(Failure::Usage(format!("{}: {e}", file.display()))),
    }
}

fn trace(a: TraceArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, a.seed)?;
    let mut world = World::new(cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let sink: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = BufWriter::new(sink);
    while !world.is_finished() {
        world.step().map_err(|e| Failure::Runtime(format!("trial failed: {e}")))?;
        write_trace(&mut w, &world).map_err(|e| Failure::Runtime(format!("trace: {e}")))?;
    }
    w.flush().map_err(|e| Failure::Runtime(format!("trace: {e}")))?;
    Ok(())
}
