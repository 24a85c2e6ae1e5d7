//! Testbench stimulus scripts (`.stim` files).
//!
//! The language is line-oriented UTF-8 text:
//!
//! ```text
//! # comment to end of line
//! @2 rs_10=1            # drive a port starting at cycle 2 (held until re-driven)
//! @3 rs_10=0 rs_20=1    # several assignments per line are allowed
//! expect @6 product=1   # check a post-step output of the named cycle
//! run 8                 # total cycles; required, exactly once
//! ```
//!
//! Values are decimal or `0b`-prefixed binary. Drives hold their value until
//! re-driven; undriven inputs default to 0. All ports are validated against
//! the target machine at parse time and every diagnostic carries its line
//! number.

use crate::fsm::{InputAssignment, MachineDefinition, PortDirection, SimError, Trace};
use std::fmt;
use thiserror::Error;

/// A single drive or expectation event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub cycle: u64,
    pub port: String,
    pub value: u64,
}

/// A parsed stimulus script: sorted drive events, sorted expectations and
/// the total run length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusProgram {
    drives: Vec<Event>,
    expects: Vec<Event>,
    run_len: u64,
}

/// Parse and validation errors, each tied to a source line.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum StimulusError {
    #[error("line {line}: unknown port `{port}`")]
    UnknownPort { line: usize, port: String },
    #[error("line {line}: `{port}` is not a drivable input port")]
    NotAnInput { line: usize, port: String },
    #[error("line {line}: `{port}` is not an observable output port")]
    NotAnOutput { line: usize, port: String },
    #[error("line {line}: value {value} exceeds the {width}-bit width of `{port}`")]
    ValueTooWide {
        line: usize,
        port: String,
        value: u64,
        width: u32,
    },
    #[error("line {line}: malformed assignment `{token}` (expected port=value)")]
    BadAssignment { line: usize, token: String },
    #[error("line {line}: invalid cycle `{token}`")]
    BadCycle { line: usize, token: String },
    #[error("line {line}: invalid value `{token}` (decimal or 0b binary)")]
    BadValue { line: usize, token: String },
    #[error("line {line}: expected `@<cycle>`, `expect` or `run`, found `{token}`")]
    BadDirective { line: usize, token: String },
    #[error("line {line}: duplicate `run` directive")]
    DuplicateRun { line: usize },
    #[error("line {line}: `run` takes exactly one cycle count")]
    BadRun { line: usize },
    #[error("missing `run` directive")]
    MissingRun,
    #[error("line {line}: `{port}` already driven at cycle {cycle}")]
    DuplicateDrive { line: usize, port: String, cycle: u64 },
    #[error("line {line}: duplicate expectation on `{port}` at cycle {cycle}")]
    DuplicateExpect { line: usize, port: String, cycle: u64 },
    #[error("run length {run} does not cover cycle {cycle} (line {line})")]
    RunTooShort { run: u64, cycle: u64, line: usize },
}

/// One failed expectation from a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationFailure {
    pub cycle: u64,
    pub port: String,
    pub expected: u64,
    pub actual: u64,
}

impl fmt::Display for ExpectationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycle {} {}: expected {}, actual {}",
            self.cycle, self.port, self.expected, self.actual
        )
    }
}

/// Outcome of executing a stimulus program: the full trace plus every
/// expectation result. Failures are reported, never swallowed.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace: Trace,
    pub failures: Vec<ExpectationFailure>,
    /// Number of expectations evaluated.
    pub checked: usize,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn parse_value(token: &str, line: usize) -> Result<u64, StimulusError> {
    let parsed = if let Some(bin) = token.strip_prefix("0b") {
        u64::from_str_radix(bin, 2)
    } else {
        token.parse::<u64>()
    };
    parsed.map_err(|_| StimulusError::BadValue {
        line,
        token: token.to_string(),
    })
}

fn parse_assignment(token: &str, line: usize) -> Result<(String, u64), StimulusError> {
    let (port, value) = token.split_once('=').ok_or_else(|| StimulusError::BadAssignment {
        line,
        token: token.to_string(),
    })?;
    if port.is_empty() || value.is_empty() {
        return Err(StimulusError::BadAssignment {
            line,
            token: token.to_string(),
        });
    }
    Ok((port.to_string(), parse_value(value, line)?))
}

fn check_port(
    machine: &MachineDefinition,
    port: &str,
    value: u64,
    line: usize,
    drive: bool,
) -> Result<(), StimulusError> {
    let decl = machine
        .ports()
        .find(|p| p.name == port)
        .ok_or_else(|| StimulusError::UnknownPort {
            line,
            port: port.to_string(),
        })?;
    match (drive, decl.direction) {
        (true, PortDirection::Input) => {}
        (true, _) => {
            return Err(StimulusError::NotAnInput {
                line,
                port: port.to_string(),
            })
        }
        (false, PortDirection::Output) | (false, PortDirection::InOut) => {}
        (false, _) => {
            return Err(StimulusError::NotAnOutput {
                line,
                port: port.to_string(),
            })
        }
    }
    if value > decl.max_value() {
        return Err(StimulusError::ValueTooWide {
            line,
            port: port.to_string(),
            value,
            width: decl.width,
        });
    }
    Ok(())
}

impl StimulusProgram {
    /// Parses a script against the ports of `machine`.
    pub fn parse(text: &str, machine: &MachineDefinition) -> Result<StimulusProgram, StimulusError> {
        let mut drives: Vec<(usize, Event)> = Vec::new();
        let mut expects: Vec<(usize, Event)> = Vec::new();
        let mut run_len: Option<u64> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("");
            let mut tokens = content.split_whitespace().peekable();
            let Some(first) = tokens.next() else { continue };

            if first == "run" {
                let Some(count) = tokens.next() else {
                    return Err(StimulusError::BadRun { line });
                };
                if tokens.next().is_some() {
                    return Err(StimulusError::BadRun { line });
                }
                if run_len.is_some() {
                    return Err(StimulusError::DuplicateRun { line });
                }
                run_len = Some(
                    count
                        .parse::<u64>()
                        .map_err(|_| StimulusError::BadCycle {
                            line,
                            token: count.to_string(),
                        })?,
                );
                continue;
            }

            let (is_expect, cycle_token) = if first == "expect" {
                let Some(at) = tokens.next() else {
                    return Err(StimulusError::BadDirective {
                        line,
                        token: first.to_string(),
                    });
                };
                (true, at)
            } else {
                (false, first)
            };

            let Some(cycle_str) = cycle_token.strip_prefix('@') else {
                return Err(StimulusError::BadDirective {
                    line,
                    token: cycle_token.to_string(),
                });
            };
            let cycle = cycle_str
                .parse::<u64>()
                .map_err(|_| StimulusError::BadCycle {
                    line,
                    token: cycle_token.to_string(),
                })?;

            let mut any = false;
            for token in tokens {
                any = true;
                let (port, value) = parse_assignment(token, line)?;
                check_port(machine, &port, value, line, !is_expect)?;
                let list = if is_expect { &mut expects } else { &mut drives };
                if list.iter().any(|(_, e)| e.cycle == cycle && e.port == port) {
                    return Err(if is_expect {
                        StimulusError::DuplicateExpect { line, port, cycle }
                    } else {
                        StimulusError::DuplicateDrive { line, port, cycle }
                    });
                }
                list.push((line, Event { cycle, port, value }));
            }
            if !any {
                return Err(StimulusError::BadDirective {
                    line,
                    token: cycle_token.to_string(),
                });
            }
        }

        let run_len = run_len.ok_or(StimulusError::MissingRun)?;
        for (line, e) in drives.iter().chain(expects.iter()) {
            if e.cycle >= run_len {
                return Err(StimulusError::RunTooShort {
                    run: run_len,
                    cycle: e.cycle,
                    line: *line,
                });
            }
        }

        let mut drives: Vec<Event> = drives.into_iter().map(|(_, e)| e).collect();
        let mut expects: Vec<Event> = expects.into_iter().map(|(_, e)| e).collect();
        drives.sort_by(|a, b| (a.cycle, &a.port).cmp(&(b.cycle, &b.port)));
        expects.sort_by(|a, b| (a.cycle, &a.port).cmp(&(b.cycle, &b.port)));
        Ok(StimulusProgram {
            drives,
            expects,
            run_len,
        })
    }

    /// Builds a program directly from event lists, applying the same
    /// validation and normalisation as [`StimulusProgram::parse`].
    pub fn from_events(
        drives: Vec<Event>,
        expects: Vec<Event>,
        run_len: u64,
        machine: &MachineDefinition,
    ) -> Result<StimulusProgram, StimulusError> {
        let program = StimulusProgram {
            drives,
            expects,
            run_len,
        };
        StimulusProgram::parse(&program.render(), machine)
    }

    pub fn drives(&self) -> &[Event] {
        &self.drives
    }

    pub fn expects(&self) -> &[Event] {
        &self.expects
    }

    pub fn run_len(&self) -> u64 {
        self.run_len
    }

    /// Canonical text form; parsing it yields an equal program.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut emit_group = |events: &[Event], prefix: &str| {
            let mut i = 0;
            while i < events.len() {
                let cycle = events[i].cycle;
                let mut line = format!("{prefix}@{cycle}");
                while i < events.len() && events[i].cycle == cycle {
                    line.push_str(&format!(" {}={}", events[i].port, events[i].value));
                    i += 1;
                }
                out.push_str(&line);
                out.push('\n');
            }
        };
        emit_group(&self.drives, "");
        emit_group(&self.expects, "expect ");
        out.push_str(&format!("run {}\n", self.run_len));
        out
    }

    /// Expands the program into one full input assignment per cycle, with
    /// hold semantics: a port keeps its most recent driven value; never
    /// driven means 0.
    pub fn schedule(&self, machine: &MachineDefinition) -> Result<Vec<InputAssignment>, SimError> {
        let mut held = vec![0u64; machine.inputs().len()];
        let mut schedule = Vec::with_capacity(self.run_len as usize);
        let mut next_drive = 0;
        for cycle in 0..self.run_len {
            while next_drive < self.drives.len() && self.drives[next_drive].cycle == cycle {
                let e = &self.drives[next_drive];
                let idx = machine
                    .input_index(&e.port)
                    .ok_or_else(|| SimError::UnknownInput(e.port.clone()))?;
                held[idx] = e.value;
                next_drive += 1;
            }
            schedule.push(machine.assignment_from_values(&held)?);
        }
        Ok(schedule)
    }

    /// Runs the program on a fresh kernel and checks every expectation
    /// against the post-step outputs of its cycle.
    pub fn execute(&self, machine: &MachineDefinition) -> Result<RunReport, SimError> {
        let schedule = self.schedule(machine)?;
        let trace = machine.run_schedule(&schedule)?;
        let mut failures = Vec::new();
        for e in &self.expects {
            let actual = trace
                .records()
                .iter()
                .find(|r| r.cycle == e.cycle)
                .and_then(|r| trace.output_index(&e.port).map(|i| r.outputs[i]))
                .unwrap_or(0);
            if actual != e.value {
                failures.push(ExpectationFailure {
                    cycle: e.cycle,
                    port: e.port.clone(),
                    expected: e.value,
                    actual,
                });
            }
        }
        Ok(RunReport {
            trace,
            failures,
            checked: self.expects.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::VendingController;
    use crate::fsm::{Expr, MachineBuilder, MachineKind};

    fn two_port_machine() -> crate::fsm::MachineDefinition {
        MachineBuilder::new("m", MachineKind::Mealy)
            .input("x", 1)
            .input("y", 4)
            .output("q", 4)
            .state("s", |s| s.emit("q", Expr::input("y")).otherwise_stay())
            .build()
            .unwrap()
    }

    #[test]
    fn run_alone_is_a_valid_program() {
        let m = two_port_machine();
        let p = StimulusProgram::parse("run 1", &m).unwrap();
        assert!(p.drives().is_empty());
        assert!(p.expects().is_empty());
        assert_eq!(p.run_len(), 1);
    }

    #[test]
    fn fig5_style_script_parses() {
        let vc = VendingController::standard();
        let text = "\
# snacks, one 10 then one 20
@0 sel1=1
@1 sel1=0
@2 rs_10=1
@3 rs_10=0
@4 rs_20=1
@5 rs_20=0
expect @6 product=1
run 8
";
        let p = StimulusProgram::parse(text, vc.machine()).unwrap();
        assert_eq!(p.drives().len(), 6);
        assert_eq!(p.expects().len(), 1);
        assert_eq!(p.run_len(), 8);
    }

    #[test]
    fn unknown_port_reports_line_number() {
        let m = two_port_machine();
        let err = StimulusProgram::parse("@0 bogus=1\nrun 1", &m).unwrap_err();
        assert_eq!(
            err,
            StimulusError::UnknownPort { line: 1, port: "bogus".to_string() }
        );
    }

    #[test]
    fn value_width_is_checked() {
        let m = two_port_machine();
        let err = StimulusProgram::parse("@0 x=2\nrun 1", &m).unwrap_err();
        assert!(matches!(err, StimulusError::ValueTooWide { line: 1, .. }));
    }

    #[test]
    fn missing_and_duplicate_run_are_errors() {
        let m = two_port_machine();
        assert_eq!(
            StimulusProgram::parse("@0 x=1", &m).unwrap_err(),
            StimulusError::MissingRun
        );
        assert_eq!(
            StimulusProgram::parse("run 1\nrun 2", &m).unwrap_err(),
            StimulusError::DuplicateRun { line: 2 }
        );
    }

    #[test]
    fn non_numeric_cycle_is_an_error() {
        let m = two_port_machine();
        let err = StimulusProgram::parse("@abc x=1\nrun 1", &m).unwrap_err();
        assert!(matches!(err, StimulusError::BadCycle { line: 1, .. }));
    }

    #[test]
    fn run_must_cover_every_referenced_cycle() {
        let m = two_port_machine();
        let err = StimulusProgram::parse("@5 x=1\nrun 3", &m).unwrap_err();
        assert_eq!(err, StimulusError::RunTooShort { run: 3, cycle: 5, line: 1 });
    }

    #[test]
    fn expectations_must_name_outputs() {
        let m = two_port_machine();
        let err = StimulusProgram::parse("expect @0 x=1\nrun 1", &m).unwrap_err();
        assert!(matches!(err, StimulusError::NotAnOutput { .. }));
        let err = StimulusProgram::parse("@0 q=1\nrun 1", &m).unwrap_err();
        assert!(matches!(err, StimulusError::NotAnInput { .. }));
    }

    #[test]
    fn binary_values_parse() {
        let m = two_port_machine();
        let p = StimulusProgram::parse("@0 y=0b1010\nrun 1", &m).unwrap();
        assert_eq!(p.drives()[0].value, 10);
    }

    #[test]
    fn hold_semantics_fill_gaps() {
        let m = two_port_machine();
        let p = StimulusProgram::parse("@0 x=1\nrun 3", &m).unwrap();
        let schedule = p.schedule(&m).unwrap();
        let xi = m.input_index("x").unwrap();
        let xs: Vec<u64> = schedule.iter().map(|ia| ia.values()[xi]).collect();
        assert_eq!(xs, [1, 1, 1]);

        let p = StimulusProgram::parse("@0 x=1\n@2 x=0\nrun 3", &m).unwrap();
        let schedule = p.schedule(&m).unwrap();
        let xs: Vec<u64> = schedule.iter().map(|ia| ia.values()[xi]).collect();
        assert_eq!(xs, [1, 1, 0]);
    }

    #[test]
    fn undriven_inputs_default_to_zero() {
        let m = two_port_machine();
        let p = StimulusProgram::parse("run 2", &m).unwrap();
        let schedule = p.schedule(&m).unwrap();
        assert!(schedule.iter().all(|ia| ia.values().iter().all(|v| *v == 0)));
    }

    #[test]
    fn render_parse_round_trip() {
        let vc = VendingController::standard();
        let text = "@3 rs_10=0 rs_20=1\n@0 sel1=1\nexpect @6 product=1 change=0\nrun 8\n";
        let p = StimulusProgram::parse(text, vc.machine()).unwrap();
        let q = StimulusProgram::parse(&p.render(), vc.machine()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn execute_reports_failures_with_context() {
        let vc = VendingController::standard();
        let text = "@0 sel1=1\n@1 sel1=0\nexpect @5 product=1\nrun 6";
        let p = StimulusProgram::parse(text, vc.machine()).unwrap();
        let report = p.execute(vc.machine()).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].cycle, 5);
        assert_eq!(report.failures[0].port, "product");
        assert_eq!(report.failures[0].expected, 1);
        assert_eq!(report.failures[0].actual, 0);
    }
}
