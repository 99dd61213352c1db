use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hybisim::engine::{
    bisimulate, eta_sweep, BisimOptions, Bisimulation, Execution, RefineOptions, Status,
};
use hybisim::export::QuotientDoc;
use hybisim::flow::FlowConfig;
use hybisim::model::{parse_model, HybridAutomaton, THERMOSTAT_MODEL};
use hybisim::validate::validate_assumptions;

/// Exit code for runs that end without a usable quotient.
const NO_CONCLUSION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hybisim",
    version,
    about = "Minimum-state bisimulation of hybrid automata"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the modelling assumptions of a model.
    Check {
        #[arg(long)]
        model: PathBuf,
        /// Seed for the random guard probes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random probes per guard component.
        #[arg(long, default_value_t = 20)]
        probes: usize,
        #[command(flatten)]
        flow: FlowArgs,
    },
    /// Compute the quotient of a model.
    Bisim {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the bundled two-room heater model.
    Example {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone)]
struct FlowArgs {
    #[arg(long, default_value_t = FlowConfig::default().step)]
    step: f64,
    #[arg(long, default_value_t = FlowConfig::default().event_tol)]
    event_tol: f64,
    #[arg(long, default_value_t = FlowConfig::default().eq_tol)]
    eq_tol: f64,
    #[arg(long, default_value_t = FlowConfig::default().t_max)]
    t_max: f64,
}

impl FlowArgs {
    fn config(&self) -> FlowConfig {
        FlowConfig {
            step: self.step,
            event_tol: self.event_tol,
            eq_tol: self.eq_tol,
            t_max: self.t_max,
            record_trajectory: false,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Dot,
    Json,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Sampling radius; defaults to 0.05 * sqrt(2).
    #[arg(long)]
    eta: Option<f64>,
    /// Lattice pitch on the guards; defaults to eta.
    #[arg(long)]
    spacing: Option<f64>,
    /// Repeat the run at geometrically shrinking eta.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 0.5)]
    sweep_factor: f64,
    #[arg(long, alias = "rounds", default_value_t = 3)]
    sweep_rounds: usize,
    #[arg(long, default_value_t = RefineOptions::default().k_max)]
    k_max: usize,
    #[command(flatten)]
    flow: FlowArgs,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Where to write the quotient; `-` for stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the grid as CSV (mode, coordinates, class).
    #[arg(long)]
    points: Option<PathBuf>,
    /// Accepted for symmetry with `check`; the run itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate successors on one thread.
    #[arg(long)]
    sequential: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check {
            model,
            seed,
            probes,
            flow,
        } => load(model).and_then(|h| cmd_check(&h, *seed, *probes, &flow.config())),
        Command::Bisim { model, run } => load(model).and_then(|h| cmd_bisim(&h, run)),
        Command::Example { run } => {
            parse(THERMOSTAT_MODEL, "bundled model").and_then(|h| cmd_bisim(&h, run))
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Bad input (exit 2) versus a failed computation (exit 1).
enum Failure {
    Input(anyhow::Error),
    Run(anyhow::Error),
}

fn load(path: &Path) -> Result<HybridAutomaton, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(Failure::Input)?;
    parse(&text, &path.display().to_string())
}

fn parse(text: &str, name: &str) -> Result<HybridAutomaton, Failure> {
    parse_model(text)
        .with_context(|| format!("cannot parse {name}"))
        .map_err(Failure::Input)
}

fn cmd_check(
    h: &HybridAutomaton,
    seed: u64,
    probes: usize,
    cfg: &FlowConfig,
) -> Result<u8, Failure> {
    cfg.validate().map_err(|e| Failure::Input(e.into()))?;
    let diags = validate_assumptions(h, probes, seed, cfg);
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("ok: no diagnostics");
        Ok(0)
    } else {
        Ok(1)
    }
}

fn cmd_bisim(h: &HybridAutomaton, args: &RunArgs) -> Result<u8, Failure> {
    let eta = args.eta.unwrap_or(0.05 * 2f64.sqrt());
    let opts = BisimOptions {
        eta,
        spacing: args.spacing,
        flow: args.flow.config(),
        refine: RefineOptions {
            k_max: args.k_max,
            extra_rounds: 0,
            execution: if args.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        },
    };
    log::debug!("seed {} is unused by bisim", args.seed);
    let (run, status) = if args.sweep {
        let (run, report) = eta_sweep(h, eta, args.sweep_factor, args.sweep_rounds, &opts)
            .map_err(|e| Failure::Run(e.into()))?;
        for (i, r) in report.rounds.iter().enumerate() {
            println!(
                "round={i} k={} classes={} grid={} eta={} status={}",
                r.k,
                r.classes,
                r.grid_size,
                r.eta,
                r.status.as_str()
            );
        }
        (run, report.status_str())
    } else {
        let run = bisimulate(h, &opts).map_err(|e| Failure::Run(e.into()))?;
        let status = run.status.as_str();
        (Some(run), status)
    };
    let Some(run) = run else {
        println!("k=0 classes=0 grid=0 eta={} status={status}", eta);
        eprintln!("hint: no guard was sampled; decrease --eta");
        return Ok(NO_CONCLUSION);
    };
    if let Some(path) = &args.points {
        write_points(h, &run, path).map_err(Failure::Run)?;
    }
    if let (Some(out), Some(doc)) = (&args.out, QuotientDoc::from_run(h, &run)) {
        let text = match args.format {
            Format::Json => doc.to_json(),
            Format::Dot => doc.to_dot(),
        };
        emit(out, &text).map_err(Failure::Run)?;
    }
    println!(
        "k={} classes={} grid={} eta={} status={status}",
        run.k(),
        run.classes(),
        run.grid.len(),
        run.eta
    );
    if let Some(e) = &run.quotient_error {
        eprintln!("note: {e}");
    }
    if let Some(cx) = &run.gamma {
        eprintln!("error: quotient is not bisimilar to the sampled system: {cx}");
        return Ok(1);
    }
    let conclusive = match status {
        "stable" => true,
        _ => run.status == Status::FixedPoint && status != "inconclusive",
    };
    if conclusive {
        Ok(0)
    } else {
        if run.status == Status::Exhausted {
            eprintln!("hint: the grid is too coarse to separate the classes; decrease --eta");
        }
        Ok(NO_CONCLUSION)
    }
}

fn emit(out: &Path, text: &str) -> Result<()> {
    if out.as_os_str() == "-" {
        std::io::stdout().write_all(text.as_bytes())?;
        return Ok(());
    }
    fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))
}

fn write_points(h: &HybridAutomaton, run: &Bisimulation, path: &Path) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["mode".to_string()];
    header.extend(h.variables.iter().cloned());
    header.push("class".into());
    w.write_record(&header)?;
    for (i, s) in run.grid.points.iter().enumerate() {
        let mut rec = vec![h.mode(s.mode).name.clone()];
        rec.extend(s.point.iter().map(|x| x.to_string()));
        rec.push(run.class_of(i).to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
