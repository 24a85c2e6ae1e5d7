//! `vendsim` — scripted runs, an interactive REPL and machine analysis for
//! the vending-machine controller. All real work lives in the library; this
//! binary only parses arguments, wires files together and maps failures to
//! exit codes (0 success, 1 failed expectations, 2 diagnostics).

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vendsim::analysis::{resource_report, to_dot};
use vendsim::billing::BillLedger;
use vendsim::config::SimConfig;
use vendsim::controller::VendingController;
use vendsim::repl::ReplSession;
use vendsim::stimulus::StimulusProgram;
use vendsim::vcd::{trace_to_vcd, write_vcd};

#[derive(Parser)]
#[command(name = "vendsim", version, about = "Cycle-accurate vending machine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a .stim script; optionally write a VCD waveform and a bill
    Run {
        /// Stimulus script to execute
        #[arg(long)]
        stimulus: PathBuf,
        /// Write the waveform to this .vcd file
        #[arg(long)]
        vcd: Option<PathBuf>,
        /// Write the session bill (JSON) to this file
        #[arg(long)]
        bill: Option<PathBuf>,
        /// Controller configuration (TOML)
        #[arg(long, env = "VENDSIM_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Step the machine interactively
    Repl {
        #[arg(long, env = "VENDSIM_CONFIG")]
        config: Option<PathBuf>,
    },
    /// Emit the state graph and/or resource report
    Analyze {
        /// Write a Graphviz dot file of the state graph
        #[arg(long)]
        dot: Option<PathBuf>,
        /// Print the resource report (default when no flag is given)
        #[arg(long)]
        report: bool,
        #[arg(long, env = "VENDSIM_CONFIG")]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<SimConfig, String> {
    match path {
        Some(p) => SimConfig::load(p).map_err(|e| e.to_string()),
        None => Ok(SimConfig::default()),
    }
}

fn build(config: &Option<PathBuf>) -> Result<VendingController, String> {
    let cfg = load_config(config)?;
    VendingController::build(cfg.catalog, cfg.capacity).map_err(|e| e.to_string())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    std::fs::write(path, bytes).map_err(|e| format!("cannot write `{}`: {e}", path.display()))
}

fn cmd_run(
    stimulus: &Path,
    vcd: &Option<PathBuf>,
    bill: &Option<PathBuf>,
    config: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let vc = build(config)?;
    let text = std::fs::read_to_string(stimulus)
        .map_err(|e| format!("cannot read `{}`: {e}", stimulus.display()))?;
    let program = StimulusProgram::parse(&text, vc.machine())
        .map_err(|e| format!("{}: {e}", stimulus.display()))?;
    let report = program.execute(vc.machine()).map_err(|e| e.to_string())?;

    if let Some(path) = vcd {
        let doc = trace_to_vcd(&report.trace, vc.machine());
        let mut bytes = Vec::new();
        write_vcd(&doc, &mut bytes).map_err(|e| e.to_string())?;
        write_file(path, &bytes)?;
    }
    if let Some(path) = bill {
        let ledger =
            BillLedger::from_trace(&report.trace, vc.catalog()).map_err(|e| e.to_string())?;
        write_file(path, ledger.render_bill().to_json().as_bytes())?;
    }

    let mut stdout = std::io::stdout().lock();
    let mut by_key: Vec<_> = program.expects().to_vec();
    by_key.sort_by_key(|e| (e.cycle, e.port.clone()));
    for expect in &by_key {
        let failed = report
            .failures
            .iter()
            .find(|f| f.cycle == expect.cycle && f.port == expect.port);
        match failed {
            None => writeln!(stdout, "PASS @{} {}={}", expect.cycle, expect.port, expect.value),
            Some(f) => writeln!(
                stdout,
                "FAIL @{} {}: expected {}, actual {}",
                f.cycle, f.port, f.expected, f.actual
            ),
        }
        .map_err(|e| e.to_string())?;
    }
    writeln!(
        stdout,
        "{} cycles, {} expectations, {} failed",
        report.trace.len(),
        report.checked,
        report.failures.len()
    )
    .map_err(|e| e.to_string())?;

    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_repl(config: &Option<PathBuf>) -> Result<ExitCode, String> {
    let cfg = load_config(config)?;
    let mut session = ReplSession::new(cfg).map_err(|e| e.to_string())?;
    let stdin = std::io::stdin().lock();
    let mut stdout = std::io::stdout().lock();
    session.run(stdin, &mut stdout).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(
    dot: &Option<PathBuf>,
    report: bool,
    config: &Option<PathBuf>,
) -> Result<ExitCode, String> {
    let vc = build(config)?;
    if let Some(path) = dot {
        write_file(path, to_dot(vc.machine()).as_bytes())?;
    }
    if report || dot.is_none() {
        print!("{}", resource_report(vc.machine()).to_text());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { stimulus, vcd, bill, config } => cmd_run(stimulus, vcd, bill, config),
        Command::Repl { config } => cmd_repl(config),
        Command::Analyze { dot, report, config } => cmd_analyze(dot, *report, config),
    };
    match result {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
