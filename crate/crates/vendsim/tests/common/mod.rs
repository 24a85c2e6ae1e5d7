//! Shared helpers for the integration and acceptance suites: an independent
//! VCD reader, the controller input alphabet, the money-conservation
//! bookkeeping, random machine generation and the Mealy/Moore dual-run
//! check. Everything here is deliberately separate from the library's own
//! serialisation and stepping paths so it can act as an oracle for them.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use vendsim::controller::VendingController;
use vendsim::fsm::{
    Expr, Guard, InputAssignment, MachineBuilder, MachineDefinition, MachineKind, Trace,
};

// ---------------------------------------------------------------------------
// Independent VCD reader
// ---------------------------------------------------------------------------

/// A VCD file re-parsed from text: declared variables and the raw change
/// sets per timestamp.
pub struct ParsedVcd {
    /// id code -> (name, width)
    pub vars: BTreeMap<String, (String, u32)>,
    pub changes: BTreeMap<u64, HashMap<String, u64>>,
}

/// Minimal token-based VCD parser. Understands the classic subset:
/// `$var wire <w> <code> <name> $end`, `#<t>`, `$dumpvars ... $end`,
/// scalar changes `0<code>`/`1<code>` and vector changes `b<bits> <code>`.
pub fn parse_vcd(text: &str) -> ParsedVcd {
    let mut vars = BTreeMap::new();
    let mut changes: BTreeMap<u64, HashMap<String, u64>> = BTreeMap::new();
    let mut tokens = text.split_whitespace().peekable();
    let mut time = 0u64;
    let mut in_defs = true;
    while let Some(tok) = tokens.next() {
        match tok {
            "$var" => {
                let kind = tokens.next().expect("var kind");
                assert_eq!(kind, "wire");
                let width: u32 = tokens.next().expect("width").parse().expect("numeric width");
                let code = tokens.next().expect("id code").to_string();
                let name = tokens.next().expect("name").to_string();
                assert_eq!(tokens.next(), Some("$end"));
                let clash = vars.insert(code, (name, width));
                assert!(clash.is_none(), "duplicate id code");
            }
            "$enddefinitions" => {
                assert_eq!(tokens.next(), Some("$end"));
                in_defs = false;
            }
            "$dumpvars" => {}
            "$end" => {}
            _ if tok.starts_with('$') => {
                // header sections like $date/$timescale/$scope: skip to $end
                while let Some(t) = tokens.next() {
                    if t == "$end" {
                        break;
                    }
                }
            }
            _ if tok.starts_with('#') => {
                assert!(!in_defs, "timestamp before enddefinitions");
                time = tok[1..].parse().expect("numeric timestamp");
                changes.entry(time).or_default();
            }
            _ if tok.starts_with('b') => {
                let value = u64::from_str_radix(&tok[1..], 2).expect("binary value");
                let code = tokens.next().expect("vector id code").to_string();
                changes.entry(time).or_default().insert(code, value);
            }
            _ => {
                let (v, code) = tok.split_at(1);
                let value: u64 = v.parse().expect("scalar value");
                changes
                    .entry(time)
                    .or_default()
                    .insert(code.to_string(), value);
            }
        }
    }
    ParsedVcd { vars, changes }
}

impl ParsedVcd {
    /// Reconstructs the per-cycle value of every variable by name, holding
    /// values between change sets, for cycles `0..=last`.
    pub fn values_per_cycle(&self, last: u64) -> Vec<HashMap<String, u64>> {
        let mut current: HashMap<String, u64> = HashMap::new();
        let mut out = Vec::new();
        for cycle in 0..=last {
            if let Some(delta) = self.changes.get(&cycle) {
                for (code, value) in delta {
                    let (name, _) = &self.vars[code];
                    current.insert(name.clone(), *value);
                }
            }
            out.push(current.clone());
        }
        out
    }
}

/// Asserts that a re-parsed VCD reproduces the trace's per-cycle port and
/// state values exactly.
pub fn assert_vcd_matches_trace(vcd_text: &str, trace: &Trace) {
    let parsed = parse_vcd(vcd_text);
    let last = trace.records().last().expect("non-empty trace").cycle;
    let per_cycle = parsed.values_per_cycle(last);
    for record in trace.records() {
        let values = &per_cycle[record.cycle as usize];
        for (port, actual) in trace
            .input_ports()
            .iter()
            .zip(&record.inputs)
            .chain(trace.output_ports().iter().zip(&record.outputs))
        {
            assert_eq!(
                values.get(&port.name),
                Some(actual),
                "cycle {} port {}",
                record.cycle,
                port.name
            );
        }
        assert_eq!(
            values.get("state"),
            Some(&(record.state as u64)),
            "cycle {} state",
            record.cycle
        );
    }
}

// ---------------------------------------------------------------------------
// Controller input alphabet and bookkeeping
// ---------------------------------------------------------------------------

/// The eight-symbol user alphabet: idle, the four selects, both notes and
/// cancel. `serviced` and `reset` are deliberately separate.
pub const ALPHABET: [&str; 8] = [
    "idle", "sel1", "sel2", "sel3", "sel4", "rs_10", "rs_20", "cancel",
];

/// Prebuilt one-symbol-per-cycle input assignments in [`ALPHABET`] order.
pub fn alphabet_assignments(machine: &MachineDefinition) -> Vec<InputAssignment> {
    ALPHABET
        .iter()
        .map(|sym| {
            if *sym == "idle" {
                machine.zero_inputs()
            } else {
                machine.inputs_with(&[(sym, 1)]).unwrap()
            }
        })
        .collect()
}

/// Assignment for a symbol index plus an optional extra port (used to mix
/// `serviced` pulses into randomized runs).
pub fn symbol_assignment(machine: &MachineDefinition, sym: usize) -> InputAssignment {
    alphabet_assignments(machine)[sym].clone()
}

/// Running money-conservation bookkeeping over a controller trace.
///
/// Notes are counted when the machine resolves them: an accumulate state
/// executing counts its note (accepted into `money_count` or echoed on
/// `return`), and notes offered in `initialize` are counted as they bounce.
/// The law then reads, cumulatively at every cycle boundary:
///
/// ```text
/// resolved notes = dispensed prices + change + return + money_count
/// ```
pub struct ConservationCheck {
    pub notes: u64,
    pub dispensed: u64,
    pub change: u64,
    pub returned: u64,
}

pub fn check_conservation(vc: &VendingController, trace: &Trace, final_regs: &[u64]) {
    let m = vc.machine();
    let rs10 = trace.input_index("rs_10").unwrap();
    let rs20 = trace.input_index("rs_20").unwrap();
    let product = trace.output_index("product").unwrap();
    let change = trace.output_index("change").unwrap();
    let ret = trace.output_index("return").unwrap();
    let mc_reg = trace.reg_index("money_count").unwrap();

    let mut acc = ConservationCheck {
        notes: 0,
        dispensed: 0,
        change: 0,
        returned: 0,
    };
    let records = trace.records();
    for (i, record) in records.iter().enumerate() {
        let state = trace.state_name(record);
        if state == "initialize" {
            acc.notes += 10 * record.inputs[rs10] + 20 * record.inputs[rs20];
        } else if state.starts_with("state1_") {
            acc.notes += 10;
        } else if state.starts_with("state2_") {
            acc.notes += 20;
        }
        if record.outputs[product] == 1 {
            let id = state
                .strip_prefix("vend_")
                .and_then(vendsim::controller::ProductId::parse)
                .expect("dispense pulses only in vend states");
            acc.dispensed += vc.catalog().price(id).unwrap() as u64;
        }
        acc.change += record.outputs[change];
        acc.returned += record.outputs[ret];

        let mc_after = match records.get(i + 1) {
            Some(next) => next.regs[mc_reg],
            None => final_regs[mc_reg],
        };
        assert_eq!(
            acc.notes,
            acc.dispensed + acc.change + acc.returned + mc_after,
            "conservation broke after cycle {} (state {}): \
             notes={} dispensed={} change={} returned={} money_count={}",
            record.cycle,
            state,
            acc.notes,
            acc.dispensed,
            acc.change,
            acc.returned,
            mc_after
        );
    }

    // width safety rides along: no traced value may exceed its port width
    for record in records {
        for (port, v) in trace
            .input_ports()
            .iter()
            .zip(&record.inputs)
            .chain(trace.output_ports().iter().zip(&record.outputs))
        {
            assert!(
                *v <= port.max_value(),
                "cycle {}: {} = {} exceeds {} bits",
                record.cycle,
                port.name,
                v,
                port.width
            );
        }
    }
}

/// Steps the controller through a symbol sequence and returns the trace
/// plus the final register file.
pub fn run_symbols(vc: &VendingController, symbols: &[usize]) -> (Trace, Vec<u64>) {
    let m = vc.machine();
    let assignments = alphabet_assignments(m);
    let mut kernel = vendsim::fsm::KernelState::new(m);
    for s in symbols {
        m.step(&mut kernel, &assignments[*s]).unwrap();
    }
    let regs = kernel.regs().to_vec();
    (kernel.into_trace(), regs)
}

// ---------------------------------------------------------------------------
// Random machines and the dual-run oracle
// ---------------------------------------------------------------------------

/// Random pure Mealy machine: 2..=6 states, 1..=2 one-bit inputs,
/// 1..=2 one-bit outputs, a fully specified case table per state.
pub fn random_mealy(rng: &mut impl rand::Rng) -> MachineDefinition {
    let n_states = rng.gen_range(2..=6);
    let n_inputs = rng.gen_range(1..=2);
    let n_outputs = rng.gen_range(1..=2);
    build_random(rng, n_states, n_inputs, n_outputs, MachineKind::Mealy)
}

/// Random pure Moore machine: constant outputs per state.
pub fn random_moore(rng: &mut impl rand::Rng) -> MachineDefinition {
    let n_states = rng.gen_range(2..=6);
    let n_inputs = rng.gen_range(1..=2);
    let n_outputs = rng.gen_range(1..=2);
    build_random(rng, n_states, n_inputs, n_outputs, MachineKind::Moore)
}

fn build_random(
    rng: &mut impl rand::Rng,
    n_states: usize,
    n_inputs: usize,
    n_outputs: usize,
    kind: MachineKind,
) -> MachineDefinition {
    let state_name = |i: usize| format!("s{i}");
    let mut b = MachineBuilder::new("random", kind);
    for i in 0..n_inputs {
        b = b.input(&format!("in{i}"), 1);
    }
    for o in 0..n_outputs {
        b = b.output(&format!("out{o}"), 1);
    }
    let combos = 1usize << n_inputs;
    for s in 0..n_states {
        let mut arm_specs = Vec::new();
        for c in 0..combos {
            let target = state_name(rng.gen_range(0..n_states));
            let outs: Vec<u64> = (0..n_outputs).map(|_| rng.gen_range(0..=1)).collect();
            arm_specs.push((c, target, outs));
        }
        let moore_outs: Vec<u64> = (0..n_outputs).map(|_| rng.gen_range(0..=1)).collect();
        let fallback = state_name(rng.gen_range(0..n_states));
        b = b.state(&state_name(s), |mut sb| {
            if kind == MachineKind::Moore {
                for (o, v) in moore_outs.iter().enumerate() {
                    sb = sb.emit(&format!("out{o}"), Expr::konst(*v));
                }
            }
            for (combo, target, outs) in &arm_specs {
                let guard = Guard::all((0..n_inputs).map(|i| {
                    if (combo >> i) & 1 == 1 {
                        Guard::input_high(&format!("in{i}"))
                    } else {
                        Guard::input_low(&format!("in{i}"))
                    }
                }));
                if kind == MachineKind::Mealy {
                    sb = sb.arm_with(guard, target, |mut a| {
                        for (o, v) in outs.iter().enumerate() {
                            a = a.emit(&format!("out{o}"), Expr::konst(*v));
                        }
                        a
                    });
                } else {
                    sb = sb.arm(guard, target);
                }
            }
            // the case table is exhaustive; the default never fires
            sb.otherwise(&fallback)
        });
    }
    b.build().expect("random machine builds")
}

/// All input assignments of `machine` as raw value vectors.
pub fn input_space(machine: &MachineDefinition) -> Vec<Vec<u64>> {
    let bits: u32 = machine.inputs().iter().map(|p| p.width).sum();
    (0..(1u64 << bits))
        .map(|mut packed| {
            machine
                .inputs()
                .iter()
                .map(|p| {
                    let mask = (1u64 << p.width) - 1;
                    let v = packed & mask;
                    packed >>= p.width;
                    v
                })
                .collect()
        })
        .collect()
}

/// Dual-run skew check: the Moore machine's output at cycle `t+1` must equal
/// the Mealy machine's output at cycle `t`, and its cycle-0 output must be
/// the Mealy output at (initial, all-zero inputs).
pub fn skew_equivalent(
    mealy: &MachineDefinition,
    moore: &MachineDefinition,
    sequence: &[Vec<u64>],
) -> bool {
    let zeros = vec![0u64; mealy.inputs().len()];
    let (_, _, convention) = mealy
        .eval_step(mealy.initial_state(), &mealy.initial_regs(), &zeros)
        .unwrap();

    let mut ms = mealy.initial_state();
    let mut mr = mealy.initial_regs();
    let mut os = moore.initial_state();
    let mut our = moore.initial_regs();
    let mut prev_mealy: Vec<u64> = convention;
    for inputs in sequence {
        let (ms2, mr2, mout) = mealy.eval_step(ms, &mr, inputs).unwrap();
        let (os2, or2, oout) = moore.eval_step(os, &our, inputs).unwrap();
        if oout != prev_mealy {
            return false;
        }
        prev_mealy = mout;
        ms = ms2;
        mr = mr2;
        os = os2;
        our = or2;
    }
    true
}
