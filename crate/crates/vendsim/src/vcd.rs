//! Value Change Dump (VCD) output.
//!
//! Serialises a simulation [`Trace`] into the classic IEEE 1364-style text
//! format understood by common waveform viewers. One VCD timestep is one
//! simulation cycle at a `1 ns` timescale. All ports are dumped, plus a
//! synthesised `state` variable carrying the canonical state index. Output
//! is byte-deterministic: the `$date` header is a fixed placeholder unless a
//! real date is supplied with [`VcdDocument::with_date`].

use crate::fsm::{MachineDefinition, Trace};
use std::io::{self, Write};

/// Placeholder emitted in `$date` so identical traces serialise to
/// identical bytes.
pub const DETERMINISTIC_DATE: &str = "(deterministic build)";

/// One declared VCD variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VcdVar {
    pub width: u32,
    pub code: String,
    pub name: String,
}

/// An in-memory VCD file: header fields, variable declarations and
/// timestamped value changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VcdDocument {
    date: String,
    timescale: String,
    scope: String,
    vars: Vec<VcdVar>,
    /// Values of every variable at `#0`, dumped in a `$dumpvars` block.
    /// Empty traces have no initial dump at all.
    initial: Option<Vec<u64>>,
    /// Later timestamps with only the variables whose value changed.
    changes: Vec<(u64, Vec<(usize, u64)>)>,
}

/// Identifier code for the variable at `index`: single printable ASCII
/// characters from `!` (33) upward, extending to multi-character codes past
/// `~`.
fn id_code(index: usize) -> String {
    let mut i = index;
    let mut code = String::new();
    loop {
        code.push((33 + (i % 94) as u8) as char);
        i /= 94;
        if i == 0 {
            break;
        }
        i -= 1;
    }
    code
}

fn state_var_bits(state_count: usize) -> u32 {
    if state_count <= 1 {
        1
    } else {
        (usize::BITS - (state_count - 1).leading_zeros()).max(1)
    }
}

/// Converts a trace into a VCD document. Variables are declared in port
/// declaration order (inputs, then outputs) followed by the synthesised
/// state variable; identifier codes are assigned in that order starting at
/// `!`.
pub fn trace_to_vcd(trace: &Trace, machine: &MachineDefinition) -> VcdDocument {
    let mut vars = Vec::new();
    for p in trace.input_ports().iter().chain(trace.output_ports()) {
        vars.push(VcdVar {
            width: p.width,
            code: String::new(),
            name: p.name.clone(),
        });
    }
    let mut state_name = "state".to_string();
    while vars.iter().any(|v| v.name == state_name) {
        state_name.insert(0, '_');
    }
    vars.push(VcdVar {
        width: state_var_bits(trace.state_names().len()),
        code: String::new(),
        name: state_name,
    });
    for (i, var) in vars.iter_mut().enumerate() {
        var.code = id_code(i);
    }

    let row = |record: &crate::fsm::TraceRecord| -> Vec<u64> {
        record
            .inputs
            .iter()
            .chain(record.outputs.iter())
            .copied()
            .chain(std::iter::once(record.state as u64))
            .collect()
    };

    let mut initial = None;
    let mut changes = Vec::new();
    let mut previous: Option<Vec<u64>> = None;
    for record in trace.records() {
        let values = row(record);
        match &previous {
            None => initial = Some(values.clone()),
            Some(prev) => {
                let delta: Vec<(usize, u64)> = values
                    .iter()
                    .enumerate()
                    .filter(|(i, v)| prev[*i] != **v)
                    .map(|(i, v)| (i, *v))
                    .collect();
                if !delta.is_empty() {
                    changes.push((record.cycle, delta));
                }
            }
        }
        previous = Some(values);
    }

    VcdDocument {
        date: DETERMINISTIC_DATE.to_string(),
        timescale: "1 ns".to_string(),
        scope: machine.name().to_string(),
        vars,
        initial,
        changes,
    }
}

impl VcdDocument {
    /// Replaces the deterministic `$date` placeholder with a real date.
    pub fn with_date(mut self, date: &str) -> VcdDocument {
        self.date = date.to_string();
        self
    }

    pub fn vars(&self) -> &[VcdVar] {
        &self.vars
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    /// Number of `#<t>` blocks after the initial dump.
    pub fn change_blocks(&self) -> usize {
        self.changes.len()
    }
}

fn write_value(sink: &mut impl Write, var: &VcdVar, value: u64) -> io::Result<()> {
    if var.width == 1 {
        writeln!(sink, "{}{}", value & 1, var.code)
    } else {
        writeln!(sink, "b{:b} {}", value, var.code)
    }
}

/// Serialises the document. The byte stream is fully determined by the
/// document contents.
pub fn write_vcd(doc: &VcdDocument, sink: &mut impl Write) -> io::Result<()> {
    writeln!(sink, "$date {} $end", doc.date)?;
    writeln!(sink, "$timescale {} $end", doc.timescale)?;
    writeln!(sink, "$scope module {} $end", doc.scope)?;
    for var in &doc.vars {
        writeln!(sink, "$var wire {} {} {} $end", var.width, var.code, var.name)?;
    }
    writeln!(sink, "$upscope $end")?;
    writeln!(sink, "$enddefinitions $end")?;
    if let Some(initial) = &doc.initial {
        writeln!(sink, "#0")?;
        writeln!(sink, "$dumpvars")?;
        for (var, value) in doc.vars.iter().zip(initial) {
            write_value(sink, var, *value)?;
        }
        writeln!(sink, "$end")?;
    }
    for (timestamp, delta) in &doc.changes {
        writeln!(sink, "#{timestamp}")?;
        for (index, value) in delta {
            write_value(sink, &doc.vars[*index], *value)?;
        }
    }
    Ok(())
}

/// Serialises straight to a string.
pub fn vcd_string(trace: &Trace, machine: &MachineDefinition) -> String {
    let doc = trace_to_vcd(trace, machine);
    let mut bytes = Vec::new();
    write_vcd(&doc, &mut bytes).expect("writing to a Vec cannot fail");
    String::from_utf8(bytes).expect("vcd output is ascii")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fsm::{Expr, MachineBuilder, MachineKind};

    fn follower() -> MachineDefinition {
        MachineBuilder::new("follower", MachineKind::Mealy)
            .input("x", 1)
            .output("q", 1)
            .output("change", 7)
            .state("s", |s| {
                s.emit("q", Expr::input("x"))
                    .emit("change", Expr::input("x").mul(Expr::konst(10)))
                    .otherwise_stay()
            })
            .build()
            .unwrap()
    }

    #[test]
    fn empty_trace_has_header_and_no_body() {
        let m = follower();
        let trace = m.run_schedule(&[]).unwrap();
        let mut empty = trace.clone();
        // strip the power-on snapshot to get a genuinely empty trace
        empty = Trace {
            records: Vec::new(),
            ..empty
        };
        let text = vcd_string(&empty, &m);
        assert!(text.contains("$enddefinitions $end"));
        assert!(!text.contains("#0"));
        assert!(!text.contains("$dumpvars"));
    }

    #[test]
    fn var_declarations_match_the_format() {
        let m = follower();
        let trace = m.run_schedule(&[m.zero_inputs()]).unwrap();
        let text = vcd_string(&trace, &m);
        assert!(text.contains("$date (deterministic build) $end"));
        assert!(text.contains("$timescale 1 ns $end"));
        assert!(text.contains("$scope module follower $end"));
        assert!(text.contains("$var wire 1 ! x $end"));
        assert!(text.contains("$var wire 7 # change $end"));
    }

    #[test]
    fn single_bit_toggle_emits_one_change_at_its_cycle() {
        let m = follower();
        let schedule: Vec<_> = (0..5)
            .map(|c| m.inputs_with(&[("x", (c == 3) as u64)]).unwrap())
            .collect();
        let trace = m.run_schedule(&schedule).unwrap();
        let text = vcd_string(&trace, &m);
        let q_code = id_code(trace.input_ports().len()); // q is the first output
        let rises: Vec<&str> = text
            .lines()
            .filter(|l| *l == format!("1{q_code}"))
            .collect();
        assert_eq!(rises.len(), 1);
        let pos_t3 = text.find("\n#3\n").unwrap();
        let pos_rise = text.find(&format!("\n1{q_code}\n")).unwrap();
        assert!(pos_rise > pos_t3);
    }

    #[test]
    fn multibit_values_are_binary_without_leading_zeros() {
        let m = follower();
        let schedule = vec![
            m.inputs_with(&[("x", 0)]).unwrap(),
            m.inputs_with(&[("x", 1)]).unwrap(),
        ];
        let trace = m.run_schedule(&schedule).unwrap();
        let text = vcd_string(&trace, &m);
        assert!(text.contains("b0 #"));
        assert!(text.contains("b1010 #"));
    }

    #[test]
    fn identical_traces_serialize_identically() {
        let m = follower();
        let schedule: Vec<_> = (0..8)
            .map(|c| m.inputs_with(&[("x", (c % 2) as u64)]).unwrap())
            .collect();
        let a = vcd_string(&m.run_schedule(&schedule).unwrap(), &m);
        let b = vcd_string(&m.run_schedule(&schedule).unwrap(), &m);
        assert_eq!(a, b);
    }

    #[test]
    fn id_codes_walk_the_printable_range() {
        assert_eq!(id_code(0), "!");
        assert_eq!(id_code(1), "\"");
        assert_eq!(id_code(93), "~");
        assert_eq!(id_code(94), "!!");
    }

    #[test]
    fn state_variable_width_covers_the_state_count() {
        assert_eq!(state_var_bits(1), 1);
        assert_eq!(state_var_bits(2), 1);
        assert_eq!(state_var_bits(23), 5);
        assert_eq!(state_var_bits(32), 5);
        assert_eq!(state_var_bits(33), 6);
    }
}
