//! `lsplan`: sweeps and reports for raw-versus-distilled Bell-pair planning.

mod commands;
mod scenario;

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsplan_core::PlanError;
use serde::Serialize;

use commands::Table;
use scenario::{Format, Scenario};

#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Plan(PlanError),
    Io(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<PlanError> for Failure {
    fn from(e: PlanError) -> Self {
        Failure::Plan(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Plan(e) => write!(f, "{e}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lsplan",
    version,
    about = "Raw versus distilled Bell-pair planning for remote lattice surgery"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario document (JSON).
    #[arg(long, global = true, value_name = "FILE", conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario; see `lsplan presets`.
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Write the table here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Master seed for Monte Carlo streams.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Required code distance per strategy over the fidelity sweep.
    Distance,
    /// Raw Bell pairs and time per QEC cycle.
    Cost,
    /// Fidelity above which raw consumption wins, by pairs and by time.
    Crossover,
    /// On-the-fly / no-expire / infeasible classification.
    Regime,
    /// Per-module physical-qubit allocation and logical capacity.
    Budget,
    /// Monte Carlo cost bands.
    Simulate,
    /// List built-in presets.
    Presets,
    /// Print the effective scenario as JSON.
    Show,
}

enum Outcome {
    Done,
    Infeasible,
}

fn emit<T: Serialize>(
    table: Table<T>,
    format: Format,
    out: Option<&PathBuf>,
) -> Result<Outcome, Failure> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            for row in &table.rows {
                w.serialize(row).map_err(|e| Failure::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| Failure::Io(e.to_string()))?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &table.rows)
                .map_err(|e| Failure::Io(e.to_string()))?;
            buf.push(b'\n');
        }
    }
    write_out(&buf, out)?;
    Ok(if table.all_infeasible {
        Outcome::Infeasible
    } else {
        Outcome::Done
    })
}

fn write_out(buf: &[u8], out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, buf).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
        }
        None => std::io::stdout()
            .write_all(buf)
            .map_err(|e| Failure::Io(e.to_string())),
    }
}

fn load(cli: &Cli) -> Result<Scenario, Failure> {
    let mut s = match (&cli.scenario, &cli.preset) {
        (Some(path), _) => Scenario::load(path)?,
        (None, Some(name)) => Scenario::preset(name)?,
        (None, None) => Scenario::default(),
    };
    if let Some(seed) = cli.seed {
        s.seed = seed;
    }
    if let Some(f) = cli.format {
        s.format = f;
    }
    Ok(s)
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    if let Command::Presets = cli.command {
        let mut text = String::new();
        for name in scenario::preset_names() {
            let s = Scenario::preset(name)?;
            text.push_str(&format!("{name}\t{}\n", s.description));
        }
        write_out(text.as_bytes(), cli.out.as_ref())?;
        return Ok(Outcome::Done);
    }
    let s = load(cli)?;
    let out = cli.out.as_ref();
    match cli.command {
        Command::Distance => emit(commands::distance(&s)?, s.format, out),
        Command::Cost => emit(commands::cost(&s)?, s.format, out),
        Command::Crossover => emit(commands::crossover(&s)?, s.format, out),
        Command::Regime => emit(commands::regime(&s)?, s.format, out),
        Command::Budget => emit(commands::budget(&s)?, s.format, out),
        Command::Simulate => emit(commands::simulate(&s)?, s.format, out),
        Command::Show => {
            let mut text =
                serde_json::to_string_pretty(&s).map_err(|e| Failure::Io(e.to_string()))?;
            text.push('\n');
            write_out(text.as_bytes(), out)?;
            Ok(Outcome::Done)
        }
        Command::Presets => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => {
            eprintln!("no strategy is feasible anywhere in the sweep");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("lsplan: {e}");
            ExitCode::from(1)
        }
    }
}
