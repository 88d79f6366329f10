//! The `layerpot` command line.
//!
//! Exit codes: 0 when every check passes, 1 for usage errors (nothing is
//! written), 2 when a check fails or the computation itself errors out (a
//! report with `error` set is still written).

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::boundary_ops::{assemble_v, assemble_w};
use crate::error::Result;
pub use commands::CommandError;
pub use config::{CommonArgs, Geometry, RunConfig};
pub use report::{Check, Outcome, Report, Table, Timestamp};

#[derive(Debug, Parser)]
#[command(name = "layerpot", version, about = "Layer potentials and boundary integral equations on polygons")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Equilibrium density, Robin constant and capacity.
    Capacity,
    /// Jump relations of the single and double layer.
    JumpTest,
    /// Far-field expansion of random layer potentials.
    FarfieldTest,
    /// One of the seven boundary value problems (`--problem`).
    Solve,
    /// Discrete Bergman projection of a function sampled in the domain.
    Bergman,
    /// L² representation of a harmonic target by single-layer fields.
    Represent,
    /// Spectrum of the trace on single-layer fields.
    KernelSvd,
    /// Interior fields with zero Dirichlet or Neumann trace at a reentrant corner.
    CornerDemo,
    /// Refinement study over three meshes.
    Convergence,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Capacity => "capacity",
            Command::JumpTest => "jump-test",
            Command::FarfieldTest => "farfield-test",
            Command::Solve => "solve",
            Command::Bergman => "bergman",
            Command::Represent => "represent",
            Command::KernelSvd => "kernel-svd",
            Command::CornerDemo => "corner-demo",
            Command::Convergence => "convergence",
        }
    }

    pub fn execute(&self, cfg: &RunConfig) -> std::result::Result<Outcome, CommandError> {
        match self {
            Command::Capacity => commands::capacity(cfg),
            Command::JumpTest => commands::jump_test(cfg),
            Command::FarfieldTest => commands::farfield_test(cfg),
            Command::Solve => commands::solve(cfg),
            Command::Bergman => commands::bergman(cfg),
            Command::Represent => commands::represent(cfg),
            Command::KernelSvd => commands::kernel_svd(cfg),
            Command::CornerDemo => commands::corner_demo(cfg),
            Command::Convergence => commands::convergence(cfg),
        }
    }
}

fn write_outputs(dir: &Path, outcome: &Outcome, cfg: &RunConfig) -> Result<Vec<String>> {
    let mut files = Vec::new();
    for t in &outcome.tables {
        t.write(dir)?;
        files.push(t.file.clone());
    }
    if let Some(mesh) = &outcome.mesh {
        if cfg.dump_mesh {
            mesh.write_csv(BufWriter::new(File::create(dir.join("mesh.csv"))?))?;
            files.push("mesh.csv".into());
        }
        if cfg.dump_operator {
            assemble_v(mesh).write_csv(BufWriter::new(File::create(dir.join("V.csv"))?))?;
            assemble_w(mesh).write_csv(BufWriter::new(File::create(dir.join("W.csv"))?))?;
            files.push("V.csv".into());
            files.push("W.csv".into());
        }
    }
    files.push("report.json".into());
    Ok(files)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp
                | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match RunConfig::resolve(&cli.args) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let start = Instant::now();
    let (outcome, error) = match cli.command.execute(&cfg) {
        Ok(o) => (o, None),
        Err(CommandError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
        Err(CommandError::Numerical(e)) => (Outcome::default(), Some(e.to_string())),
    };
    if let Err(e) = std::fs::create_dir_all(&cfg.out) {
        eprintln!("error: cannot create {}: {e}", cfg.out.display());
        return 1;
    }
    let files = match write_outputs(&cfg.out, &outcome, &cfg) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let certified = error.is_none() && outcome.checks.iter().all(|c| c.passed);
    let unix_seconds = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let report = Report {
        command: cli.command.name().into(),
        version: env!("CARGO_PKG_VERSION"),
        inputs: serde_json::to_value(&cfg).unwrap_or_default(),
        results: outcome.results,
        checks: outcome.checks,
        certified,
        error,
        files,
        timestamp: Timestamp { unix_seconds, elapsed_seconds: start.elapsed().as_secs_f64() },
    };
    if let Err(e) = report.write(&cfg.out) {
        eprintln!("error: {e}");
        return 1;
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {} = {:.3e} (needs {} {:.3e})", c.name, c.value, c.relation, c.threshold);
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    println!(
        "{}: {} ({} checks), report in {}",
        report.command,
        if certified { "certified" } else { "NOT certified" },
        report.checks.len(),
        cfg.out.join("report.json").display()
    );
    if certified {
        0
    } else {
        2
    }
}
