//! Interactive stepping session behind `vendsim repl`.
//!
//! Each command pulses the matching input port for exactly one clock edge,
//! releases it, and then lets the machine settle through its transient
//! states (selection checks, note accumulation, dispense and refund pulses)
//! until it sits in a state that no longer advances on idle inputs. Every
//! stepped cycle is printed, so a command reads as one observable machine
//! event:
//!
//! ```text
//! vendsim> insert 20
//!   cycle 4  waiting_snacks -> state2_snacks
//!   cycle 5  state2_snacks -> vend_snacks
//!   cycle 6  vend_snacks -> initialize  [product=1 change=0]
//! ```
//!
//! Scripted multi-cycle holds belong to `.stim` files; the REPL is for
//! poking at the machine by hand.

use crate::billing::BillLedger;
use crate::config::SimConfig;
use crate::controller::{ControllerError, ProductId, VendingController};
use crate::fsm::KernelState;
use std::io::{self, BufRead, Write};

const SETTLE_LIMIT: usize = 16;

pub enum ReplOutcome {
    Continue,
    Quit,
}

/// One interactive session: controller, kernel and the session bill.
pub struct ReplSession {
    vc: VendingController,
    kernel: KernelState,
    ledger: BillLedger,
}

impl ReplSession {
    pub fn new(config: SimConfig) -> Result<ReplSession, ControllerError> {
        let vc = VendingController::build(config.catalog, config.capacity)?;
        let kernel = KernelState::new(vc.machine());
        let ledger = BillLedger::new(vc.catalog());
        Ok(ReplSession { vc, kernel, ledger })
    }

    pub fn state_name(&self) -> &str {
        self.vc.machine().state_name(self.kernel.current())
    }

    pub fn ledger(&self) -> &BillLedger {
        &self.ledger
    }

    /// Reads commands until EOF or `quit`.
    pub fn run(&mut self, input: impl BufRead, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "vendsim interactive session; `help` lists commands")?;
        for line in input.lines() {
            write!(out, "vendsim> ")?;
            out.flush()?;
            let line = line?;
            writeln!(out, "{line}")?;
            if let ReplOutcome::Quit = self.handle_line(&line, out)? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// Executes one command line. Unknown commands print a message and
    /// leave the machine untouched.
    pub fn handle_line(&mut self, line: &str, out: &mut impl Write) -> io::Result<ReplOutcome> {
        let mut words = line.split_whitespace();
        let Some(command) = words.next() else {
            return Ok(ReplOutcome::Continue);
        };
        let arg = words.next();
        match (command, arg) {
            ("quit", _) | ("exit", _) => return Ok(ReplOutcome::Quit),
            ("help", _) => {
                writeln!(
                    out,
                    "commands: select <product> | insert 10|20 | cancel | service | \
                     tick [n] | state | regs | bill | reset | quit"
                )?;
            }
            ("select", Some(name)) => match ProductId::parse(name)
                .and_then(|id| self.vc.catalog().index_of(id))
            {
                Some(index) => {
                    let port = self.vc.catalog().select_port(index);
                    self.pulse(&port, out)?;
                }
                None => writeln!(out, "no such product `{name}` in the catalog")?,
            },
            ("select", None) => writeln!(out, "usage: select <product>")?,
            ("insert", Some("10")) => self.pulse("rs_10", out)?,
            ("insert", Some("20")) => self.pulse("rs_20", out)?,
            ("insert", _) => writeln!(out, "the machine accepts 10 and 20 rupee notes")?,
            ("cancel", _) => self.pulse("cancel", out)?,
            ("service", _) => self.pulse("serviced", out)?,
            ("reset", _) => {
                self.pulse("reset", out)?;
                self.ledger =
                    BillLedger::with_session_start(self.vc.catalog(), self.kernel.cycle());
                writeln!(out, "new billing session from cycle {}", self.kernel.cycle())?;
            }
            ("tick", arg) => {
                let n: u64 = arg.and_then(|a| a.parse().ok()).unwrap_or(1);
                for _ in 0..n {
                    self.step_once(&[], out)?;
                }
            }
            ("state", _) => {
                writeln!(out, "state: {} (cycle {})", self.state_name(), self.kernel.cycle())?
            }
            ("regs", _) => {
                let m = self.vc.machine();
                let values: Vec<String> = m
                    .registers()
                    .iter()
                    .map(|r| format!("{}={}", r.name, self.kernel.reg_value(m, &r.name).unwrap()))
                    .collect();
                writeln!(out, "{}", values.join(" "))?;
            }
            ("bill", _) => {
                write!(out, "{}", self.ledger.render_bill().to_text())?;
            }
            _ => writeln!(out, "unknown command `{command}` (try help)")?,
        }
        Ok(ReplOutcome::Continue)
    }

    /// Drives `port` high for one cycle, releases it, then settles.
    fn pulse(&mut self, port: &str, out: &mut impl Write) -> io::Result<()> {
        self.step_once(&[(port, 1)], out)?;
        self.settle(out)
    }

    /// Idle-steps until the machine would stay put on all-zero inputs.
    fn settle(&mut self, out: &mut impl Write) -> io::Result<()> {
        for _ in 0..SETTLE_LIMIT {
            let peek = {
                let m = self.vc.machine();
                let zeros = m.zero_inputs();
                m.eval_step(self.kernel.current(), self.kernel.regs(), zeros.values())
            };
            match peek {
                Ok((next, _, _)) if next == self.kernel.current() => break,
                Ok(_) => self.step_once(&[], out)?,
                Err(e) => {
                    writeln!(out, "simulation error: {e}")?;
                    break;
                }
            }
        }
        Ok(())
    }

    fn step_once(&mut self, pairs: &[(&str, u64)], out: &mut impl Write) -> io::Result<()> {
        let m = self.vc.machine();
        let ia = match m.inputs_with(pairs) {
            Ok(ia) => ia,
            Err(e) => {
                writeln!(out, "simulation error: {e}")?;
                return Ok(());
            }
        };
        let before = self.kernel.current();
        let cycle = self.kernel.cycle();
        let outputs = match m.step(&mut self.kernel, &ia) {
            Ok(outputs) => outputs,
            Err(e) => {
                writeln!(out, "simulation error: {e}")?;
                return Ok(());
            }
        };

        let value = |name: &str| m.output_value(&outputs, name).unwrap_or(0);
        let mut notes = Vec::new();
        if value("product") != 0 {
            notes.push(format!("product=1 change={}", value("change")));
            if let Some(p) = m.state_name(before).strip_prefix("vend_").and_then(ProductId::parse)
            {
                // session bill tracks every dispense pulse
                let _ = self.ledger.record_dispense(p);
            }
        }
        if value("return") != 0 {
            notes.push(format!("return={}", value("return")));
        }
        if value("service_request") != 0 {
            notes.push("service_request=1".to_string());
        }
        let suffix = if notes.is_empty() {
            String::new()
        } else {
            format!("  [{}]", notes.join(" "))
        };
        writeln!(
            out,
            "  cycle {}  {} -> {}{}",
            cycle,
            m.state_name(before),
            m.state_name(self.kernel.current()),
            suffix
        )
    }
}
